//! Record/replay of model exchanges as newline-delimited JSON.

use std::collections::{HashMap, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{ChatRequest, GatewayError, ModelBackend};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub digest: String,
    pub template: String,
    pub profile: String,
    pub response: String,
}

impl TranscriptRecord {
    pub fn of(req: &ChatRequest, response: &str) -> Self {
        Self {
            digest: req.digest(),
            template: req.template.to_string(),
            profile: req.profile.name.clone(),
            response: response.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub records: Vec<TranscriptRecord>,
}

impl Transcript {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path)?);
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line)
                .map_err(|e| GatewayError::Decode(format!("{}:{}: {e}", path.display(), i + 1)))?;
            records.push(rec);
        }
        Ok(Self { records })
    }

    /// Stable order for files written from concurrent runs; replay does not
    /// depend on record order beyond repeats of one digest.
    pub fn sort_by_digest(&mut self) {
        self.records.sort_by(|a, b| a.digest.cmp(&b.digest));
    }

    pub fn to_ndjson(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GatewayError> {
        std::fs::write(path, self.to_ndjson())?;
        Ok(())
    }
}

/// Answers from a transcript. Repeated identical requests consume their
/// recorded replies in order; a request with nothing left is a miss.
pub struct ReplayBackend {
    queues: Mutex<HashMap<String, VecDeque<String>>>,
}

impl ReplayBackend {
    pub fn new(transcript: Transcript) -> Self {
        let mut queues: HashMap<String, VecDeque<String>> = HashMap::new();
        for r in transcript.records {
            queues.entry(r.digest).or_default().push_back(r.response);
        }
        Self {
            queues: Mutex::new(queues),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        Transcript::load(path).map(Self::new)
    }
}

impl ModelBackend for ReplayBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let digest = req.digest();
        let mut queues = self.queues.lock().expect("replay lock");
        queues
            .get_mut(&digest)
            .and_then(VecDeque::pop_front)
            .ok_or(GatewayError::ReplayMiss {
                digest,
                template: req.template.to_string(),
            })
    }
}

/// Forwards to `inner` and appends every successful exchange to a transcript.
pub struct RecordingBackend {
    inner: Arc<dyn ModelBackend>,
    state: Mutex<Recording>,
}

struct Recording {
    sink: Option<File>,
    records: Vec<TranscriptRecord>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn ModelBackend>) -> Self {
        Self {
            inner,
            state: Mutex::new(Recording {
                sink: None,
                records: Vec::new(),
            }),
        }
    }

    /// Also stream records to `path`, truncating it.
    pub fn to_file(
        inner: Arc<dyn ModelBackend>,
        path: impl AsRef<Path>,
    ) -> Result<Self, GatewayError> {
        let file = File::create(path)?;
        Ok(Self {
            inner,
            state: Mutex::new(Recording {
                sink: Some(file),
                records: Vec::new(),
            }),
        })
    }

    pub fn transcript(&self) -> Transcript {
        Transcript {
            records: self.state.lock().expect("recording lock").records.clone(),
        }
    }
}

impl ModelBackend for RecordingBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let reply = self.inner.complete(req)?;
        let rec = TranscriptRecord::of(req, &reply);
        let mut state = self.state.lock().expect("recording lock");
        if let Some(f) = state.sink.as_mut() {
            let line = serde_json::to_string(&rec).expect("record serializes");
            writeln!(f, "{line}")?;
            f.flush()?;
        }
        state.records.push(rec);
        Ok(reply)
    }
}
