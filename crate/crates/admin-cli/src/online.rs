use reqwest::blocking::{Client, RequestBuilder, Response};
use reqwest::StatusCode;
use serde_json::Value;

use pb_core::{Edit, ElectionConfig, TallyResult};

use crate::{for_each_synthetic, read_config_text, write_report, Cli, CliError, Command, Outcome};

struct Remote<'a> {
    client: Client,
    base: &'a str,
    token: Option<&'a str>,
}

impl Remote<'_> {
    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base.trim_end_matches('/'))
    }

    fn admin(&self, req: RequestBuilder) -> RequestBuilder {
        match self.token {
            Some(t) => req.bearer_auth(t),
            None => req,
        }
    }

    fn send(&self, req: RequestBuilder) -> Result<Response, CliError> {
        req.send()
            .map_err(|e| CliError::Io(format!("request to {} failed: {e}", self.base)))
    }

    fn election(&self, id: &str) -> Result<ElectionConfig, CliError> {
        let resp = self.send(self.client.get(self.url(&format!("/elections/{id}"))))?;
        let view: view::ElectionView = json_or_error(resp, id)?;
        Ok(view.into())
    }
}

/// Mirror of the service's public election view.
mod view {
    use pb_core::{ElectionConfig, MethodSpec, Project, UiVariant};
    use serde::Deserialize;

    #[derive(Deserialize)]
    pub struct ElectionView {
        id: String,
        name: String,
        monetary_budget: u64,
        method: MethodSpec,
        ui_variant: UiVariant,
        projects: Vec<Project>,
        open: bool,
    }

    impl From<ElectionView> for ElectionConfig {
        fn from(v: ElectionView) -> Self {
            ElectionConfig {
                id: v.id,
                name: v.name,
                monetary_budget: v.monetary_budget,
                method_spec: v.method,
                ui_variant: v.ui_variant,
                projects: v.projects,
                open: v.open,
            }
        }
    }
}

fn error_body(resp: Response) -> (StatusCode, Value) {
    let status = resp.status();
    let body = resp.json().unwrap_or(Value::Null);
    (status, body)
}

fn describe(status: StatusCode, body: &Value) -> String {
    body["message"]
        .as_str()
        .map(str::to_owned)
        .unwrap_or_else(|| format!("service answered {status}"))
}

fn json_or_error<T: serde::de::DeserializeOwned>(resp: Response, election: &str) -> Result<T, CliError> {
    if resp.status().is_success() {
        return resp
            .json()
            .map_err(|e| CliError::Io(format!("unreadable service response: {e}")));
    }
    let (status, body) = error_body(resp);
    Err(match body["code"].as_str() {
        Some("not_found") => CliError::UnknownElection(election.to_owned()),
        Some("election_closed") => CliError::ElectionClosed(election.to_owned()),
        Some("instance_too_large") => CliError::InstanceTooLarge(describe(status, &body)),
        Some("invalid_config") => CliError::InvalidConfig(
            body["violations"]
                .as_array()
                .into_iter()
                .flatten()
                .map(|v| {
                    format!(
                        "{}: {}",
                        v["field"].as_str().unwrap_or("?"),
                        v["message"].as_str().unwrap_or("?")
                    )
                })
                .collect(),
        ),
        Some("parse_error") => CliError::InvalidConfig(vec![format!(
            "{}: {}",
            body["field"].as_str().unwrap_or("?"),
            describe(status, &body)
        )]),
        _ if status.is_server_error() => CliError::Io(describe(status, &body)),
        _ => CliError::Rejected(describe(status, &body)),
    })
}

pub(crate) fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let remote = Remote {
        client: Client::new(),
        base: &cli.server,
        token: cli.token.as_deref(),
    };
    match &cli.command {
        Command::Create { config } => {
            let text = read_config_text(config)?;
            let resp = remote.send(remote.admin(remote.client.post(remote.url("/elections")).body(text)))?;
            let body: Value = json_or_error(resp, "")?;
            Ok(Outcome::Created(body["id"].as_str().unwrap_or_default().to_owned()))
        }
        Command::Close { election } => {
            let resp = remote.send(
                remote.admin(remote.client.post(remote.url(&format!("/elections/{election}/close")))),
            )?;
            let _: Value = json_or_error(resp, election)?;
            Ok(Outcome::Closed(election.clone()))
        }
        Command::Tally { election, rule, out } => {
            let rule = match rule {
                pb_core::SelectionRule::Greedy => "greedy",
                pb_core::SelectionRule::Exact => "exact",
            };
            let resp = remote.send(remote.admin(
                remote
                    .client
                    .get(remote.url(&format!("/elections/{election}/tally?rule={rule}"))),
            ))?;
            let result: TallyResult = json_or_error(resp, election)?;
            write_report(out, &result)
        }
        Command::GenBallots { election, n, seed } => {
            let config = remote.election(election)?;
            let count = for_each_synthetic(&config, *n, *seed, |voter, ballot| {
                let base = format!("/elections/{election}/voters/{voter}");
                let edits = std::iter::once(Edit::Clear).chain(ballot.edits);
                for edit in edits {
                    let resp = remote.send(remote.client.post(remote.url(&format!("{base}/edits"))).json(&edit))?;
                    let state: Value = json_or_error(resp, election)?;
                    if !state["last_error"].is_null() {
                        return Err(CliError::Rejected(format!(
                            "service rejected a generated edit: {}",
                            state["last_error"]
                        )));
                    }
                }
                let resp = remote.send(remote.client.post(remote.url(&format!("{base}/submit"))))?;
                let _: Value = json_or_error(resp, election)?;
                Ok(())
            })?;
            Ok(Outcome::Generated(count))
        }
    }
}
