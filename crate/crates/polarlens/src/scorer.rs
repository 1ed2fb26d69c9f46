//! HTTP client and server for the scorer wire protocol.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use anyhow::Context;
use polarlens_core::probe::{
    score_premise, EntailmentReport, EntailmentRule, FillMaskRequest, FillMaskResponse, ModelsResponse, NliRequest,
    NliVerdict, Scorer, ScorerError, StubScorer, StubTable,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::http::{BackgroundServer, Reply, Request};

pub const FILL_MASK_PATH: &str = "/v1/fill-mask";
pub const NLI_PATH: &str = "/v1/nli";
pub const MODELS_PATH: &str = "/v1/models";

/// Scorer reached over HTTP.
pub struct HttpScorer {
    base: String,
    agent: ureq::Agent,
}

impl HttpScorer {
    pub fn new(base_url: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        HttpScorer { base: base_url.trim_end_matches('/').to_string(), agent }
    }

    fn decode<T: DeserializeOwned>(
        mut resp: ureq::http::Response<ureq::Body>,
        model_id: Option<&str>,
    ) -> Result<T, ScorerError> {
        let status = resp.status().as_u16();
        if status == 200 {
            return resp.body_mut().read_json().map_err(|e| ScorerError::Protocol(e.to_string()));
        }
        let body = resp.body_mut().read_to_string().unwrap_or_default();
        Err(match status {
            404 => ScorerError::UnknownModel(model_id.unwrap_or_default().to_string()),
            422 => ScorerError::NoAnswer(body),
            400..=499 => ScorerError::Protocol(format!("HTTP {status}: {body}")),
            _ => ScorerError::Transport(format!("HTTP {status}: {body}")),
        })
    }

    fn post<Q: Serialize, T: DeserializeOwned>(&self, path: &str, req: &Q, model_id: &str) -> Result<T, ScorerError> {
        let resp = self
            .agent
            .post(format!("{}{path}", self.base))
            .send_json(req)
            .map_err(|e| ScorerError::Transport(e.to_string()))?;
        Self::decode(resp, Some(model_id))
    }
}

impl Scorer for HttpScorer {
    fn models(&self) -> Result<Vec<String>, ScorerError> {
        let resp = self
            .agent
            .get(format!("{}{MODELS_PATH}", self.base))
            .call()
            .map_err(|e| ScorerError::Transport(e.to_string()))?;
        Ok(Self::decode::<ModelsResponse>(resp, None)?.models)
    }

    fn fill_mask(&self, request: &FillMaskRequest) -> Result<FillMaskResponse, ScorerError> {
        self.post(FILL_MASK_PATH, request, &request.model_id)
    }

    fn nli(&self, request: &NliRequest) -> Result<NliVerdict, ScorerError> {
        self.post(NLI_PATH, request, &request.model_id)
    }
}

fn error_reply(e: &ScorerError) -> Reply {
    let status = match e {
        ScorerError::UnknownModel(_) => 404,
        ScorerError::NoAnswer(_) => 422,
        ScorerError::Protocol(_) => 400,
        ScorerError::Transport(_) => 502,
    };
    Reply::error(status, &e.to_string())
}

fn answer<Q: DeserializeOwned, T: Serialize>(body: &str, f: impl FnOnce(&Q) -> Result<T, ScorerError>) -> Reply {
    match serde_json::from_str::<Q>(body) {
        Ok(q) => match f(&q) {
            Ok(v) => Reply::json(&v),
            Err(e) => error_reply(&e),
        },
        Err(e) => Reply::error(400, &e.to_string()),
    }
}

/// Routes one wire-protocol request to any in-process scorer.
pub fn handle<S: Scorer>(scorer: &S, req: &Request) -> Reply {
    match (req.method.as_str(), req.path.as_str()) {
        ("POST", FILL_MASK_PATH) => answer(&req.body, |q: &FillMaskRequest| scorer.fill_mask(q)),
        ("POST", NLI_PATH) => answer(&req.body, |q: &NliRequest| scorer.nli(q)),
        ("GET", MODELS_PATH) => match scorer.models() {
            Ok(models) => Reply::json(&ModelsResponse { models }),
            Err(e) => error_reply(&e),
        },
        _ => Reply::error(405, &format!("no route {} {}", req.method, req.path)),
    }
}

pub fn load_stub(path: &Path) -> anyhow::Result<StubScorer> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let table: StubTable = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(StubScorer::new(table)?)
}

pub fn serve_stub(scorer: StubScorer, addr: &str) -> anyhow::Result<BackgroundServer> {
    BackgroundServer::spawn(addr, move |req| handle(&scorer, req))
}

/// Entailment fraction with up to `in_flight` premises scored at once.
/// Results are gathered by premise index, so the report and the reported
/// error (the lowest failing index) do not depend on completion order.
pub fn entailment_fraction_concurrent<S: Scorer + Sync + ?Sized>(
    scorer: &S,
    model_id: &str,
    premises: &[&str],
    hypothesis: &str,
    rule: EntailmentRule,
    in_flight: usize,
) -> polarlens_core::Result<EntailmentReport> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<polarlens_core::Result<NliVerdict>>>> = Mutex::new(vec![None; premises.len()]);
    std::thread::scope(|s| {
        for _ in 0..in_flight.clamp(1, premises.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(p) = premises.get(i) else { break };
                let v = score_premise(scorer, model_id, hypothesis, i, p);
                slots.lock().expect("poisoned result table")[i] = Some(v);
            });
        }
    });
    let verdicts = slots
        .into_inner()
        .expect("poisoned result table")
        .into_iter()
        .map(|v| v.expect("every premise scored"))
        .collect::<polarlens_core::Result<Vec<_>>>()?;
    EntailmentReport::from_verdicts(model_id, hypothesis, &verdicts, rule)
}
