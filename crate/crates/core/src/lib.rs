//! Metadata engine for a pond of textual documents.
//!
//! Raw documents are ingested untouched; everything the engine derives from
//! them lives beside the originals as metadata:
//!
//! * intra-document metadata: file properties, presentation artifacts
//!   produced by a transformation x presentation pair, tag-cloud
//!   previsualizations;
//! * inter-document metadata: physical links (shared company, category,
//!   MIME type, language) recorded in each manifest, and logical links
//!   (complete similarity graphs per measure and presentation);
//! * global metadata: stopword lists, dictionaries and thesauri registered in
//!   a single global manifest.
//!
//! [`engine::Engine`] ties the stores together and exposes the analyses.

pub mod analytics;
pub mod engine;
pub mod fsutil;
pub mod index;
pub mod ingest;
pub mod linkgraph;
pub mod manifest;
pub mod resources;
pub mod synth;
pub mod textproc;
pub mod walktrap;


pub use engine::{Engine, EngineConfig, EngineError, Page, Snapshot};
pub use ingest::DocumentId;
