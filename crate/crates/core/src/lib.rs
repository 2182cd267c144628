//! Map CVE vulnerability records onto the CWE Top 25 as a ranking problem,
//! and maintain the annotated dataset through a multi-annotator workflow.

pub mod annotate;
pub mod corpus;
pub mod eval;
pub mod ingest;
pub mod preprocess;
pub mod rank;
pub mod retry;
