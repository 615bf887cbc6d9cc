//! Reference implementations used to check the engine from the outside.
//! They read wire-format JSON only and share no code with the engine.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;

/// Latest allocation per voter, read straight from a vote log file.
pub fn latest_from_log(path: &Path) -> BTreeMap<String, Value> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut latest = BTreeMap::new();
    for line in text.lines() {
        let payload = line.splitn(3, ',').nth(2).unwrap();
        let record: Value = serde_json::from_str(payload).unwrap();
        latest.insert(
            record["voter_id"].as_str().unwrap().to_owned(),
            record["allocation"].clone(),
        );
    }
    latest
}

/// Per-ballot fold of the scoring rules over wire-format allocations.
pub fn fold_scores(method: &str, k: u64, project_ids: &[String], ballots: &[Value]) -> BTreeMap<String, u64> {
    let mut scores: BTreeMap<String, u64> = project_ids.iter().map(|p| (p.clone(), 0)).collect();
    for ballot in ballots {
        assert_eq!(ballot["method"], method);
        match method {
            "cumulative" | "quadratic" => {
                for (p, t) in ballot["tokens"].as_object().unwrap() {
                    *scores.get_mut(p).unwrap() += t.as_u64().unwrap();
                }
            }
            "k_approval" | "knapsack" => {
                for p in ballot["approved"].as_array().unwrap() {
                    *scores.get_mut(p.as_str().unwrap()).unwrap() += 1;
                }
            }
            "k_ranking" => {
                let ranking = ballot["ranking"].as_array().unwrap();
                for i in 1..=ranking.len() as u64 {
                    let p = ranking[(i - 1) as usize].as_str().unwrap();
                    *scores.get_mut(p).unwrap() += k - i + 1;
                }
            }
            "pairwise" => {
                for pair in ballot["comparisons"].as_array().unwrap() {
                    *scores.get_mut(pair[0].as_str().unwrap()).unwrap() += 1;
                }
            }
            other => panic!("unknown method {other}"),
        }
    }
    scores
}

pub struct OracleProject {
    pub id: String,
    pub title: String,
    pub cost: u64,
}

pub fn projects_of(config: &Value) -> Vec<OracleProject> {
    config["projects"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| OracleProject {
            id: p["id"].as_str().unwrap().to_owned(),
            title: p["title"].as_str().unwrap().to_owned(),
            cost: p["cost"].as_u64().unwrap(),
        })
        .collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Greedy selection and CSV rendering written from the report contract.
pub fn greedy_csv(projects: &[OracleProject], scores: &BTreeMap<String, u64>, budget: u64) -> String {
    let mut order: Vec<&OracleProject> = projects.iter().collect();
    order.sort_by(|a, b| scores[&b.id].cmp(&scores[&a.id]).then(a.id.cmp(&b.id)));
    let mut left = budget;
    let mut out = String::from("project_id,title,cost,score,rank,winner\n");
    for (i, p) in order.iter().enumerate() {
        let funded = p.cost <= left;
        if funded {
            left -= p.cost;
        }
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_field(&p.id),
            csv_field(&p.title),
            p.cost,
            scores[&p.id],
            i + 1,
            funded
        ));
    }
    out
}

/// Subset enumeration: maximum score, then minimum cost, then the
/// lexicographically smallest ascending index list.
pub fn best_subset(scores: &[u64], costs: &[u64], budget: u64) -> Vec<usize> {
    let n = scores.len();
    let mut best: (u64, u64, Vec<usize>) = (0, 0, Vec::new());
    for mask in 0u64..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let cost: u64 = members.iter().map(|&i| costs[i]).sum();
        if cost > budget {
            continue;
        }
        let score: u64 = members.iter().map(|&i| scores[i]).sum();
        let (bs, bc, bm) = &best;
        if score > *bs || (score == *bs && (cost < *bc || (cost == *bc && members < *bm))) {
            best = (score, cost, members);
        }
    }
    best.2
}
