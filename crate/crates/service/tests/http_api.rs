use std::sync::Arc;

use pb_core::{Allocation, Method, SelectionRule, TallyResult, VoteStore};
use pb_service::{spawn, AppState, ElectionView, Receipt, SessionState};
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};

const TOKEN: &str = "s3cret";

struct Server {
    base: String,
    client: Client,
    _dir: tempfile::TempDir,
}

impl Server {
    async fn start() -> Server {
        let dir = tempfile::tempdir().unwrap();
        let store = VoteStore::open(dir.path()).unwrap();
        let state = Arc::new(AppState::new(store, Some(TOKEN.into())));
        let addr = spawn("127.0.0.1:0".parse().unwrap(), state).await.unwrap();
        Server {
            base: format!("http://{addr}"),
            client: Client::new(),
            _dir: dir,
        }
    }

    async fn create(&self, config: &Value) -> reqwest::Response {
        self.client
            .post(format!("{}/elections", self.base))
            .bearer_auth(TOKEN)
            .body(config.to_string())
            .send()
            .await
            .unwrap()
    }

    async fn edit(&self, election: &str, voter: &str, edit: Value) -> SessionState {
        let resp = self
            .client
            .post(format!("{}/elections/{election}/voters/{voter}/edits", self.base))
            .json(&edit)
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), StatusCode::OK);
        resp.json().await.unwrap()
    }

    async fn submit(&self, election: &str, voter: &str) -> reqwest::Response {
        self.client
            .post(format!("{}/elections/{election}/voters/{voter}/submit", self.base))
            .send()
            .await
            .unwrap()
    }

    async fn tally(&self, election: &str, rule: &str) -> reqwest::Response {
        self.client
            .get(format!("{}/elections/{election}/tally?rule={rule}", self.base))
            .bearer_auth(TOKEN)
            .send()
            .await
            .unwrap()
    }
}

fn quadratic_config(id: &str) -> Value {
    json!({
        "id": id,
        "name": "Neighbourhood fund",
        "monetary_budget": 100,
        "method": {"type": "quadratic", "token_budget": 10},
        "ui_variant": "D",
        "projects": [
            {"id": "p1", "title": "Playground", "cost": 60},
            {"id": "p2", "title": "Library", "cost": 50},
            {"id": "p3", "title": "Bike racks", "cost": 40}
        ]
    })
}

fn delta(project: &str, delta: i64) -> Value {
    json!({"op": "delta", "project": project, "delta": delta})
}

#[tokio::test(flavor = "multi_thread")]
async fn create_and_view_elections() {
    let s = Server::start().await;
    let resp = s.create(&quadratic_config("e1")).await;
    assert_eq!(resp.status(), StatusCode::CREATED);
    assert_eq!(resp.json::<Value>().await.unwrap(), json!({"id": "e1"}));

    let resp = s.create(&quadratic_config("e1")).await;
    assert_eq!(resp.status(), StatusCode::CONFLICT);
    assert_eq!(resp.json::<Value>().await.unwrap()["code"], "conflict");

    let mut bad = quadratic_config("e2");
    bad["method"] = json!({"type": "k_ranking", "k": 5});
    let resp = s.create(&bad).await;
    assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["code"], "invalid_config");
    assert_eq!(body["violations"][0]["code"], "k_exceeds_projects");
    assert_eq!(body["violations"][0]["field"], "k");

    let mut malformed = quadratic_config("e3");
    malformed["method"]["token_budget"] = json!("ten");
    let resp = s.create(&malformed).await;
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    assert_eq!(resp.json::<Value>().await.unwrap()["field"], "method.token_budget");

    let resp = s
        .client
        .post(format!("{}/elections", s.base))
        .body(quadratic_config("e4").to_string())
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::UNAUTHORIZED);

    let view: ElectionView = s
        .client
        .get(format!("{}/elections/e1", s.base))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(view.projects.len(), 3);
    assert!(view.open);
    let raw: Value = s.client.get(format!("{}/elections/e1", s.base)).send().await.unwrap().json().await.unwrap();
    assert_eq!(raw["ui_variant"], "D");

    let resp = s.client.get(format!("{}/elections/nope", s.base)).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
    assert_eq!(resp.json::<Value>().await.unwrap()["code"], "not_found");
}

#[tokio::test(flavor = "multi_thread")]
async fn edits_give_in_band_feedback() {
    let s = Server::start().await;
    s.create(&quadratic_config("e1")).await;

    let state = s.edit("e1", "alice", delta("p1", 1)).await;
    assert_eq!(state.draft, Allocation::tokens(Method::Quadratic, [("p1", 1)]));
    assert_eq!(state.budget.unwrap().remaining, 9);
    assert!(state.last_error.is_none());
    assert_eq!(state.max_affordable.as_ref().unwrap()[&"p1".into()], 3);

    let state = s.edit("e1", "alice", delta("p1", 2)).await;
    assert_eq!(state.budget.unwrap().spent, 9);
    let state = s.edit("e1", "alice", delta("p2", 2)).await;
    let feedback = state.last_error.clone().unwrap();
    assert_eq!(feedback.code, "budget_exceeded");
    assert!(!feedback.message.is_empty());
    assert_eq!(state.draft, Allocation::tokens(Method::Quadratic, [("p1", 3)]));

    let state = s.edit("e1", "alice", delta("p2", -1)).await;
    assert_eq!(state.last_error.unwrap().code, "negative_tokens");

    let state = s.edit("e1", "alice", json!({"op": "approve", "project": "p2"})).await;
    assert_eq!(state.last_error.unwrap().code, "unsupported_method");

    let resp = s
        .client
        .post(format!("{}/elections/e1/voters/alice/edits", s.base))
        .body("{\"op\":\"teleport\"}")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);

    let session: SessionState = s
        .client
        .get(format!("{}/elections/e1/voters/alice/session", s.base))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(session.draft, Allocation::tokens(Method::Quadratic, [("p1", 3)]));
}

#[tokio::test(flavor = "multi_thread")]
async fn submission_and_revote() {
    let s = Server::start().await;
    s.create(&quadratic_config("e1")).await;

    let resp = s.submit("e1", "bob").await;
    assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["code"], "validation_failed");
    assert_eq!(body["violations"][0]["code"], "empty_ballot");

    s.edit("e1", "bob", delta("p2", 2)).await;
    let resp = s.submit("e1", "bob").await;
    assert_eq!(resp.status(), StatusCode::CREATED);
    assert_eq!(resp.json::<Receipt>().await.unwrap().sequence, 0);

    s.edit("e1", "bob", delta("p2", -2)).await;
    s.edit("e1", "bob", delta("p3", 1)).await;
    let receipt: Receipt = s.submit("e1", "bob").await.json().await.unwrap();
    assert_eq!(receipt.sequence, 1);

    let result: TallyResult = s.tally("e1", "greedy").await.json().await.unwrap();
    assert_eq!(result.scoreboard.ballot_count, 1);
    assert_eq!(result.scoreboard.score(&"p3".into()), 1);
    assert_eq!(result.scoreboard.score(&"p2".into()), 0);

    let resp = s
        .client
        .post(format!("{}/elections/e1/close", s.base))
        .bearer_auth(TOKEN)
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let resp = s.submit("e1", "bob").await;
    assert_eq!(resp.status(), StatusCode::CONFLICT);
    assert_eq!(resp.json::<Value>().await.unwrap()["code"], "election_closed");
    let resp = s
        .client
        .post(format!("{}/elections/e1/voters/bob/edits", s.base))
        .json(&delta("p1", 1))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread")]
async fn tally_requires_admin_and_handles_empty_log() {
    let s = Server::start().await;
    s.create(&quadratic_config("e1")).await;

    let resp = s
        .client
        .get(format!("{}/elections/e1/tally", s.base))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::UNAUTHORIZED);
    let resp = s
        .client
        .get(format!("{}/elections/e1/tally", s.base))
        .bearer_auth("wrong")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::UNAUTHORIZED);

    // No ballots: all scores zero, greedy funds projects in id order while they fit.
    let result: TallyResult = s.tally("e1", "greedy").await.json().await.unwrap();
    assert!(result.scoreboard.scores.values().all(|&s| s == 0));
    let winners: Vec<_> = result.winners.iter().map(|p| p.as_str()).collect();
    assert_eq!(winners, ["p1", "p3"]);
    assert_eq!(result.selection_rule, SelectionRule::Greedy);

    assert_eq!(s.tally("e1", "fancy").await.status(), StatusCode::BAD_REQUEST);
    assert_eq!(s.tally("nope", "greedy").await.status(), StatusCode::NOT_FOUND);
}

/// Brute force over all subsets with the documented tie-breaks.
fn best_subset(scores: &[u64], costs: &[u64], budget: u64) -> Vec<usize> {
    let n = scores.len();
    let mut best = (0u64, 0u64, Vec::new());
    for mask in 1u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let cost: u64 = members.iter().map(|&i| costs[i]).sum();
        let score: u64 = members.iter().map(|&i| scores[i]).sum();
        if cost > budget {
            continue;
        }
        let (bs, bc, bm) = &best;
        if score > *bs || (score == *bs && (cost < *bc || (cost == *bc && members < *bm))) {
            best = (score, cost, members);
        }
    }
    best.2
}

#[tokio::test(flavor = "multi_thread")]
async fn exact_rule_over_ten_projects_matches_brute_force() {
    let s = Server::start().await;
    let costs = [35u64, 20, 45, 10, 60, 25, 30, 15, 50, 40];
    let projects: Vec<Value> = costs
        .iter()
        .enumerate()
        .map(|(i, c)| json!({"id": format!("p{i}"), "title": format!("P{i}"), "cost": c}))
        .collect();
    let config = json!({
        "id": "ten",
        "name": "Ten projects",
        "monetary_budget": 120,
        "method": {"type": "cumulative", "token_budget": 10},
        "ui_variant": "B",
        "projects": projects,
    });
    assert_eq!(s.create(&config).await.status(), StatusCode::CREATED);

    let ballots: [&[(usize, i64)]; 4] = [
        &[(0, 4), (3, 3), (7, 3)],
        &[(1, 5), (3, 5)],
        &[(4, 10)],
        &[(2, 2), (5, 2), (6, 2), (8, 2), (9, 2)],
    ];
    for (v, ballot) in ballots.iter().enumerate() {
        let voter = format!("v{v}");
        for &(p, d) in *ballot {
            let state = s.edit("ten", &voter, delta(&format!("p{p}"), d)).await;
            assert!(state.last_error.is_none());
        }
        assert_eq!(s.submit("ten", &voter).await.status(), StatusCode::CREATED);
    }

    let mut scores = [0u64; 10];
    for ballot in ballots {
        for &(p, d) in ballot {
            scores[p] += d as u64;
        }
    }
    let result: TallyResult = s.tally("ten", "exact").await.json().await.unwrap();
    let mut winners: Vec<usize> = result
        .winners
        .iter()
        .map(|p| p.as_str()[1..].parse().unwrap())
        .collect();
    winners.sort();
    assert_eq!(winners, best_subset(&scores, &costs, 120));
    assert_eq!(result.selection_rule, SelectionRule::Exact);
}

#[tokio::test(flavor = "multi_thread")]
async fn ranking_approval_and_pairwise_edits() {
    let s = Server::start().await;
    let mut rank = quadratic_config("rank");
    rank["method"] = json!({"type": "k_ranking", "k": 2});
    s.create(&rank).await;
    let state = s.edit("rank", "v", json!({"op": "rank", "steps": ["p2", "p1"]})).await;
    assert_eq!(state.draft, Allocation::ranking(["p2", "p1"]));
    assert!(state.budget.is_none());
    let state = s.edit("rank", "v", json!({"op": "rank", "steps": ["p1", "p2", "p3"]})).await;
    assert_eq!(state.last_error.unwrap().code, "too_many_selections");
    assert_eq!(state.draft, Allocation::ranking(["p2", "p1"]));

    let mut knap = quadratic_config("knap");
    knap["method"] = json!({"type": "knapsack"});
    s.create(&knap).await;
    s.edit("knap", "v", json!({"op": "approve", "project": "p1"})).await;
    let state = s.edit("knap", "v", json!({"op": "approve", "project": "p2"})).await;
    assert_eq!(state.last_error.unwrap().code, "knapsack_over_budget");
    let state = s.edit("knap", "v", json!({"op": "approve", "project": "p3"})).await;
    assert_eq!(state.draft, Allocation::approved(Method::Knapsack, ["p1", "p3"]));

    let mut pair = quadratic_config("pair");
    pair["method"] = json!({"type": "pairwise"});
    s.create(&pair).await;
    s.edit("pair", "v", json!({"op": "compare", "winner": "p1", "loser": "p2"})).await;
    let state = s.edit("pair", "v", json!({"op": "compare", "winner": "p2", "loser": "p1"})).await;
    assert_eq!(state.last_error.unwrap().code, "duplicate_pair");
    assert_eq!(s.submit("pair", "v").await.status(), StatusCode::CREATED);
}
