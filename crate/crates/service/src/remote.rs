//! Evaluation target that drives a running service over HTTP.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use schemamem_core::eval::{
    EvalError, EvalTarget, EvidenceItem, EvidenceRef, SuiteQuestion, SyntheticSuite, TargetAnswer, Turn,
};
use schemamem_core::ids::RecordId;
use schemamem_core::retrieval::Answer;
use schemamem_core::store::RecordView;
use schemamem_core::IngestRequest;

use crate::api::{AnswerRequest, ErrorBody};

pub struct HttpTarget {
    base: String,
    client: reqwest::blocking::Client,
    date_key: String,
}

impl HttpTarget {
    pub fn new(base: &str) -> Result<Self, EvalError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| EvalError::EngineUnreachable(e.to_string()))?;
        Ok(HttpTarget {
            base: base.trim_end_matches('/').to_string(),
            client,
            date_key: String::new(),
        })
    }

    fn send<T: DeserializeOwned>(&self, req: reqwest::blocking::RequestBuilder) -> Result<T, EvalError> {
        let resp = req.send().map_err(|e| EvalError::EngineUnreachable(format!("{}: {e}", self.base)))?;
        let status = resp.status();
        if !status.is_success() {
            let body: Option<ErrorBody> = resp.json().ok();
            return Err(EvalError::Engine(match body {
                Some(b) => format!("{status} {}: {}", b.code, b.message),
                None => status.to_string(),
            }));
        }
        resp.json().map_err(|e| EvalError::Engine(e.to_string()))
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, EvalError> {
        self.send(self.client.post(format!("{}{path}", self.base)).json(body))
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, EvalError> {
        self.send(self.client.get(format!("{}{path}", self.base)))
    }
}

impl EvalTarget for HttpTarget {
    fn name(&self) -> String {
        format!("schemamem@{}", self.base)
    }

    /// The service must hold an empty store; it is initialized with the
    /// suite's goal.
    fn prepare(&mut self, suite: &SyntheticSuite) -> Result<(), EvalError> {
        let _: serde_json::Value = self.get("/v1/health")?;
        let _: serde_json::Value = self.post("/v1/init", &suite.goal)?;
        self.date_key = suite.date_key.clone();
        Ok(())
    }

    fn ingest(&mut self, turn: &Turn) -> Result<(), EvalError> {
        let req = IngestRequest {
            source_tag: turn.speaker.clone(),
            received_at: Some(turn.at),
            ..IngestRequest::new(turn.text.clone())
        };
        let _: serde_json::Value = self.post("/v1/experiences", &req)?;
        Ok(())
    }

    fn ask(&mut self, question: &SuiteQuestion) -> Result<TargetAnswer, EvalError> {
        let answer: Answer = self.post(
            "/v1/answer",
            &AnswerRequest {
                question: question.text.clone(),
                budget: None,
            },
        )?;
        let mut evidence = Vec::new();
        for id in answer.evidence.iter().filter(|id| RecordId::matches_kind(id)) {
            let view: RecordView = self.get(&format!("/v1/records/{id}"))?;
            if let Some(t) = view.record.values.get(&self.date_key).and_then(|v| v.as_time()) {
                evidence.push(EvidenceItem::Record(EvidenceRef {
                    entity: view.label,
                    date: t.date_string(),
                }));
            }
        }
        Ok(TargetAnswer {
            value: answer.value,
            text: answer.text,
            abstained: answer.abstained,
            evidence,
        })
    }
}
