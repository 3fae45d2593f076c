use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Mutex;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{BackendError, DecodingParams, LlmBackend};

/// One prompt/response pair; replay files hold one JSON object per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub prompt: String,
    pub response: String,
}

pub fn read_replay_file(path: &Path) -> Result<Vec<ReplayRecord>, BackendError> {
    let file = std::fs::File::open(path).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| BackendError::Config(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_replay_file(path: &Path, records: &[ReplayRecord]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()
}

/// Answers each prompt with the recorded response for that exact prompt.
/// Repeated prompts consume their recordings in file order.
#[derive(Debug)]
pub struct ReplayBackend {
    model: String,
    queues: Mutex<HashMap<String, VecDeque<String>>>,
}

impl ReplayBackend {
    pub fn new(records: Vec<ReplayRecord>) -> Self {
        let mut queues: HashMap<String, VecDeque<String>> = HashMap::new();
        for r in records {
            queues.entry(r.prompt).or_default().push_back(r.response);
        }
        Self {
            model: "replay".to_string(),
            queues: Mutex::new(queues),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        Ok(Self::new(read_replay_file(path)?).with_model_id(&format!("replay:{}", path.display())))
    }

    pub fn with_model_id(mut self, model: &str) -> Self {
        self.model = model.to_string();
        self
    }

    pub fn remaining(&self) -> usize {
        self.queues.lock().unwrap().values().map(VecDeque::len).sum()
    }
}

#[async_trait]
impl LlmBackend for ReplayBackend {
    fn model_id(&self) -> String {
        self.model.clone()
    }

    async fn complete(&self, prompt: &str, _params: &DecodingParams) -> Result<String, BackendError> {
        let mut q = self.queues.lock().unwrap();
        q.get_mut(prompt)
            .and_then(VecDeque::pop_front)
            .ok_or(BackendError::ReplayMiss(prompt.len()))
    }
}

/// Passes calls through to `inner` and keeps every successful exchange.
pub struct RecordingBackend<B> {
    inner: B,
    records: Mutex<Vec<ReplayRecord>>,
}

impl<B: LlmBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            records: Mutex::new(Vec::new()),
        }
    }

    pub fn records(&self) -> Vec<ReplayRecord> {
        self.records.lock().unwrap().clone()
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        write_replay_file(path, &self.records())
    }
}

#[async_trait]
impl<B: LlmBackend> LlmBackend for RecordingBackend<B> {
    fn model_id(&self) -> String {
        self.inner.model_id()
    }

    fn supports_concurrency(&self) -> bool {
        self.inner.supports_concurrency()
    }

    async fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<String, BackendError> {
        let response = self.inner.complete(prompt, params).await?;
        self.records.lock().unwrap().push(ReplayRecord {
            prompt: prompt.to_string(),
            response: response.clone(),
        });
        Ok(response)
    }
}
