use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::corpus::CveId;

pub const NVD_DETAIL_URL: &str = "https://nvd.nist.gov/vuln/detail/";

const SECTION_MARKER: &str = "vuln-CWEs-table";

/// Source of raw detail pages, live or recorded.
pub trait PageFetcher: Send + Sync {
    fn fetch(&self, cve_id: &CveId) -> Result<Vec<u8>, IngestError>;
}

/// Weakness ids listed in the page's weakness enumeration table, in page
/// order without repeats. `None` when the page has no such table.
pub fn parse_weakness_labels(body: &str) -> Option<Vec<String>> {
    static ID: OnceLock<Regex> = OnceLock::new();
    let id =
        ID.get_or_init(|| Regex::new(r"\b(?:NVD-CWE-Other|NVD-CWE-noinfo|CWE-\d+)\b").unwrap());
    let start = body.find(SECTION_MARKER)?;
    let section = &body[start..];
    let end = section
        .to_ascii_lowercase()
        .find("</table>")
        .unwrap_or(section.len());
    let mut labels: Vec<String> = Vec::new();
    for m in id.find_iter(&section[..end]) {
        if !labels.iter().any(|l| l == m.as_str()) {
            labels.push(m.as_str().to_string());
        }
    }
    Some(labels)
}

/// One fetch of one detail page. Never modified after it is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct NvdPageSnapshot {
    pub cve_id: CveId,
    pub fetched_at: DateTime<Utc>,
    pub body: Vec<u8>,
    pub parsed_labels: BTreeSet<String>,
    /// Set when the weakness table could not be found.
    pub flagged: bool,
}

impl NvdPageSnapshot {
    pub fn from_body(cve_id: CveId, fetched_at: DateTime<Utc>, body: Vec<u8>) -> Self {
        let parsed = parse_weakness_labels(&String::from_utf8_lossy(&body));
        if parsed.is_none() {
            log::warn!("{cve_id}: no weakness table in page, snapshot flagged");
        }
        Self {
            cve_id,
            fetched_at,
            body,
            flagged: parsed.is_none(),
            parsed_labels: parsed.unwrap_or_default().into_iter().collect(),
        }
    }
}

pub fn scrape_nvd(
    cve_id: &CveId,
    fetcher: &dyn PageFetcher,
) -> Result<NvdPageSnapshot, IngestError> {
    let body = fetcher.fetch(cve_id)?;
    Ok(NvdPageSnapshot::from_body(cve_id.clone(), Utc::now(), body))
}

/// Sidecar metadata written next to every stored page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotLabels {
    pub cve_id: CveId,
    pub fetched_at: DateTime<Utc>,
    pub labels: Vec<String>,
    #[serde(default)]
    pub flagged: bool,
}

/// Directory of `{cve_id}.html` pages with `{cve_id}.labels.json` sidecars.
/// Re-fetches go to `{cve_id}.{n}.html` for n = 1, 2, ...; nothing is
/// overwritten.
#[derive(Debug)]
pub struct SnapshotStore {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl SnapshotStore {
    pub fn open(dir: &Path) -> Result<Self, IngestError> {
        std::fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            write_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn stem(cve_id: &CveId, seq: usize) -> String {
        if seq == 0 {
            cve_id.to_string()
        } else {
            format!("{cve_id}.{seq}")
        }
    }

    fn paths(&self, cve_id: &CveId, seq: usize) -> (PathBuf, PathBuf) {
        let stem = Self::stem(cve_id, seq);
        (
            self.dir.join(format!("{stem}.html")),
            self.dir.join(format!("{stem}.labels.json")),
        )
    }

    fn count(&self, cve_id: &CveId) -> usize {
        (0..)
            .take_while(|&seq| self.paths(cve_id, seq).0.exists())
            .count()
    }

    /// Stores a snapshot under the next free sequence number and returns it.
    pub fn save(&self, snapshot: &NvdPageSnapshot) -> Result<usize, IngestError> {
        let _guard = self.write_lock.lock().expect("snapshot store lock");
        let seq = self.count(&snapshot.cve_id);
        let (html, labels) = self.paths(&snapshot.cve_id, seq);
        write_new(&html, &snapshot.body)?;
        let meta = SnapshotLabels {
            cve_id: snapshot.cve_id.clone(),
            fetched_at: snapshot.fetched_at,
            labels: snapshot.parsed_labels.iter().cloned().collect(),
            flagged: snapshot.flagged,
        };
        write_new(&labels, &serde_json::to_vec_pretty(&meta)?)?;
        Ok(seq)
    }

    fn read(&self, cve_id: &CveId, seq: usize) -> Result<NvdPageSnapshot, IngestError> {
        let (html, labels) = self.paths(cve_id, seq);
        let body = std::fs::read(&html).map_err(|e| IngestError::io(&html, e))?;
        let meta_text = std::fs::read(&labels).map_err(|e| IngestError::io(&labels, e))?;
        let meta: SnapshotLabels = serde_json::from_slice(&meta_text)?;
        Ok(NvdPageSnapshot {
            cve_id: cve_id.clone(),
            fetched_at: meta.fetched_at,
            body,
            parsed_labels: meta.labels.into_iter().collect(),
            flagged: meta.flagged,
        })
    }

    /// All snapshots for `cve_id`, oldest first.
    pub fn history(&self, cve_id: &CveId) -> Result<Vec<NvdPageSnapshot>, IngestError> {
        (0..self.count(cve_id))
            .map(|seq| self.read(cve_id, seq))
            .collect()
    }

    pub fn latest(&self, cve_id: &CveId) -> Result<Option<NvdPageSnapshot>, IngestError> {
        match self.count(cve_id) {
            0 => Ok(None),
            n => self.read(cve_id, n - 1).map(Some),
        }
    }

    pub fn contains(&self, cve_id: &CveId) -> bool {
        self.count(cve_id) > 0
    }

    /// Re-parses every stored body and reports snapshots whose recorded
    /// labels differ from a fresh parse.
    pub fn verify_replay(&self, cve_id: &CveId) -> Result<Vec<usize>, IngestError> {
        let mut mismatched = Vec::new();
        for (seq, snap) in self.history(cve_id)?.into_iter().enumerate() {
            let again =
                NvdPageSnapshot::from_body(snap.cve_id.clone(), snap.fetched_at, snap.body.clone());
            if again.parsed_labels != snap.parsed_labels || again.flagged != snap.flagged {
                mismatched.push(seq);
            }
        }
        Ok(mismatched)
    }

    /// Ids with at least one stored snapshot.
    pub fn cve_ids(&self) -> Result<Vec<CveId>, IngestError> {
        let mut ids = BTreeSet::new();
        let entries = std::fs::read_dir(&self.dir).map_err(|e| IngestError::io(&self.dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| IngestError::io(&self.dir, e))?;
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            if let Some(stem) = name.strip_suffix(".labels.json") {
                let id = stem.split('.').next().unwrap_or(stem);
                if let Ok(id) = CveId::parse(id) {
                    ids.insert(id);
                }
            }
        }
        Ok(ids.into_iter().collect())
    }
}

/// Serves pages from a directory of `{cve_id}.html` files.
#[derive(Debug, Clone)]
pub struct FixtureFetcher {
    dir: PathBuf,
}

impl FixtureFetcher {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
        }
    }
}

impl PageFetcher for FixtureFetcher {
    fn fetch(&self, cve_id: &CveId) -> Result<Vec<u8>, IngestError> {
        let path = self.dir.join(format!("{cve_id}.html"));
        std::fs::read(&path).map_err(|e| IngestError::Fetch {
            cve_id: cve_id.to_string(),
            message: format!("{}: {e}", path.display()),
            retryable: false,
        })
    }
}

/// Spaces calls at least `1 / rate` seconds apart across threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_second(rate: f64) -> Self {
        let interval = if rate.is_finite() && rate > 0.0 {
            Duration::from_secs_f64(1.0 / rate)
        } else {
            Duration::ZERO
        };
        Self {
            interval,
            next: Mutex::new(None),
        }
    }

    pub fn interval(&self) -> Duration {
        self.interval
    }

    /// Blocks until the caller may issue its request.
    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().expect("rate limiter lock");
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        std::thread::sleep(wait);
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ScrapeReport {
    pub fetched: Vec<CveId>,
    pub flagged: Vec<CveId>,
    pub skipped_existing: Vec<CveId>,
    pub failed: Vec<(CveId, String)>,
    pub cancelled: usize,
}

/// Fetches and stores a snapshot for each id with up to `workers` fetches in
/// flight. Ids already in the store are skipped unless `refresh` is set.
pub fn scrape_into_store(
    ids: &[CveId],
    fetcher: &dyn PageFetcher,
    store: &SnapshotStore,
    workers: usize,
    refresh: bool,
    cancel: &AtomicBool,
) -> ScrapeReport {
    let next = AtomicUsize::new(0);
    let report = Mutex::new(ScrapeReport::default());
    std::thread::scope(|s| {
        for _ in 0..workers.max(1).min(ids.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(id) = ids.get(i) else { break };
                if cancel.load(Ordering::SeqCst) {
                    report.lock().expect("report lock").cancelled += 1;
                    continue;
                }
                if !refresh && store.contains(id) {
                    report
                        .lock()
                        .expect("report lock")
                        .skipped_existing
                        .push(id.clone());
                    continue;
                }
                let outcome =
                    scrape_nvd(id, fetcher).and_then(|snap| store.save(&snap).map(|_| snap));
                let mut r = report.lock().expect("report lock");
                match outcome {
                    Ok(snap) => {
                        if snap.flagged {
                            r.flagged.push(id.clone());
                        }
                        r.fetched.push(id.clone());
                    }
                    Err(e) => {
                        log::error!("{id}: {e}");
                        r.failed.push((id.clone(), e.to_string()));
                    }
                }
            });
        }
    });
    let mut report = report.into_inner().expect("report lock");
    report.fetched.sort();
    report.flagged.sort();
    report.skipped_existing.sort();
    report.failed.sort_by(|a, b| a.0.cmp(&b.0));
    report
}

fn write_new(path: &Path, bytes: &[u8]) -> Result<(), IngestError> {
    use std::io::Write;
    let mut file = std::fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .map_err(|e| IngestError::io(path, e))?;
    file.write_all(bytes).map_err(|e| IngestError::io(path, e))
}

#[cfg(feature = "http")]
pub use http::HttpFetcher;

#[cfg(feature = "http")]
mod http {
    use std::time::Duration;

    use super::{PageFetcher, RateLimiter, NVD_DETAIL_URL};
    use crate::corpus::CveId;
    use crate::ingest::IngestError;
    use crate::retry::RetryPolicy;

    /// Live detail-page fetcher with rate limiting and retries.
    #[derive(Debug)]
    pub struct HttpFetcher {
        base_url: String,
        client: reqwest::blocking::Client,
        limiter: RateLimiter,
        retry: RetryPolicy,
    }

    impl HttpFetcher {
        pub fn new(
            requests_per_second: f64,
            timeout: Duration,
            retry: RetryPolicy,
        ) -> Result<Self, IngestError> {
            Self::with_base_url(NVD_DETAIL_URL, requests_per_second, timeout, retry)
        }

        pub fn with_base_url(
            base_url: &str,
            requests_per_second: f64,
            timeout: Duration,
            retry: RetryPolicy,
        ) -> Result<Self, IngestError> {
            let client = reqwest::blocking::Client::builder()
                .timeout(timeout)
                .user_agent(concat!("cwemap/", env!("CARGO_PKG_VERSION")))
                .build()
                .map_err(|e| IngestError::Fetch {
                    cve_id: String::new(),
                    message: e.to_string(),
                    retryable: false,
                })?;
            let mut base_url = base_url.to_string();
            if !base_url.ends_with('/') {
                base_url.push('/');
            }
            Ok(Self {
                base_url,
                client,
                limiter: RateLimiter::per_second(requests_per_second),
                retry,
            })
        }

        pub fn url_for(&self, cve_id: &CveId) -> String {
            format!("{}{cve_id}", self.base_url)
        }

        fn attempt(&self, cve_id: &CveId) -> Result<Vec<u8>, IngestError> {
            self.limiter.acquire();
            let fail = |message: String, retryable: bool| IngestError::Fetch {
                cve_id: cve_id.to_string(),
                message,
                retryable,
            };
            let response = self
                .client
                .get(self.url_for(cve_id))
                .send()
                .map_err(|e| fail(e.to_string(), true))?;
            let status = response.status();
            if !status.is_success() {
                let retryable = status.is_server_error() || status.as_u16() == 429;
                return Err(fail(format!("HTTP {status}"), retryable));
            }
            response
                .bytes()
                .map(|b| b.to_vec())
                .map_err(|e| fail(e.to_string(), true))
        }
    }

    impl PageFetcher for HttpFetcher {
        fn fetch(&self, cve_id: &CveId) -> Result<Vec<u8>, IngestError> {
            self.retry
                .run(|_| self.attempt(cve_id), IngestError::is_retryable)
        }
    }
}
