//! Feed parsing, acceptance filtering, TF.IDF narrowing and weakness-label
//! scraping from NVD detail pages.

mod feed;
mod narrow;
mod nvd;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use feed::{
    filter_accepted, parse_feed, parse_record, FeedRecord, FeedScan, SkippedFile, DEFAULT_YEARS,
};
pub use narrow::{
    load_candidates, narrow_candidates, save_candidates, write_candidates, Candidate, NarrowLimit,
    Narrowed, TfIdfModel,
};
#[cfg(feature = "http")]
pub use nvd::HttpFetcher;
pub use nvd::{
    parse_weakness_labels, scrape_into_store, scrape_nvd, FixtureFetcher, NvdPageSnapshot,
    PageFetcher, RateLimiter, ScrapeReport, SnapshotLabels, SnapshotStore, NVD_DETAIL_URL,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{0} is not a directory")]
    NotADirectory(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("fetching {cve_id}: {message}")]
    Fetch {
        cve_id: String,
        message: String,
        retryable: bool,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            IngestError::Fetch {
                retryable: true,
                ..
            }
        )
    }
}
