use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use dna::export::SearchDocument;
use dna::search::{SearchConfig, SearchReport};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_finished(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

/// One search request and, once finished, its document.
#[derive(Clone, Debug)]
pub struct Job {
    pub id: String,
    pub env: String,
    pub query: SearchConfig,
    pub status: JobStatus,
    pub result: Option<Arc<SearchDocument>>,
    /// Canonical text of `result`, rendered once.
    pub canonical: Option<Arc<String>>,
    pub error: Option<String>,
}

/// What `GET /search/{job}` returns.
#[derive(Clone, Debug, Serialize)]
pub struct JobView {
    pub job: String,
    pub env: String,
    pub status: JobStatus,
    pub query: SearchConfig,
    pub progress: Option<SearchReport>,
    pub error: Option<String>,
    pub result: Option<Arc<SearchDocument>>,
}

impl From<&Job> for JobView {
    fn from(job: &Job) -> Self {
        Self {
            job: job.id.clone(),
            env: job.env.clone(),
            status: job.status,
            query: job.query.clone(),
            progress: job.result.as_ref().map(|d| d.report.clone()),
            error: job.error.clone(),
            result: job.result.clone(),
        }
    }
}

/// Job table behind one lock. Jobs only move forward through their states
/// and are never modified after finishing.
#[derive(Default)]
pub(crate) struct Registry {
    inner: Mutex<RegistryInner>,
}

#[derive(Default)]
struct RegistryInner {
    next: u64,
    jobs: HashMap<String, Job>,
}

impl Registry {
    pub fn create(&self, env: &str, query: SearchConfig) -> String {
        let mut inner = self.inner.lock().expect("job registry poisoned");
        inner.next += 1;
        let id = inner.next.to_string();
        inner.jobs.insert(
            id.clone(),
            Job {
                id: id.clone(),
                env: env.into(),
                query,
                status: JobStatus::Queued,
                result: None,
                canonical: None,
                error: None,
            },
        );
        id
    }

    pub fn get(&self, id: &str) -> Option<Job> {
        self.inner.lock().expect("job registry poisoned").jobs.get(id).cloned()
    }

    pub fn advance(&self, id: &str, next: JobStatus) {
        self.update(id, next, |_| {});
    }

    pub fn finish(&self, id: &str, outcome: Result<(SearchDocument, String), String>) {
        match outcome {
            Ok((doc, text)) => self.update(id, JobStatus::Done, |job| {
                job.result = Some(Arc::new(doc));
                job.canonical = Some(Arc::new(text));
            }),
            Err(message) => self.update(id, JobStatus::Failed, |job| job.error = Some(message)),
        }
    }

    fn update(&self, id: &str, next: JobStatus, apply: impl FnOnce(&mut Job)) {
        let mut inner = self.inner.lock().expect("job registry poisoned");
        let job = inner.jobs.get_mut(id).expect("jobs are never removed");
        assert!(
            !job.status.is_finished() && job.status < next,
            "job {id}: {:?} -> {next:?}",
            job.status
        );
        job.status = next;
        apply(job);
    }
}
