//! # vqva
//!
//! Build Visual Question-Visual Answering (VQ-VA) training data from
//! interleaved image-text web documents, and judge model outputs on
//! VQ-VA benchmarks.
//!
//! A VQ-VA sample is a triplet (question image, question text, answer
//! image), optionally extended with an editing reasoning trace. This
//! crate turns a corpus of interleaved documents into such samples in
//! two stages:
//!
//! 1. **Preprocessing** ([`classify`]): a labeling loop that seeds topic
//!    labels with a chat model, trains a lightweight bag-of-ngrams
//!    classifier for bulk labeling, and refines low-confidence labels
//!    with the model again. Only knowledge- and design-topic documents
//!    stay eligible.
//! 2. **Construction** ([`agents`] + [`pipeline`]): five stateless agent
//!    workers (retriever, instruction generator, three-part filter,
//!    rewriter, reasoner) run per document behind strict output parsers,
//!    with every step journaled to an append-only ledger so runs are
//!    resumable and emission is exactly-once.
//!
//! The [`eval`] module is the matching harness: a vision-model judge
//! scores candidate images in {0,1,2} per benchmark item, scores are
//! normalized to 0-100 per domain and aggregated, and rater agreement
//! (accuracy, Spearman rank correlation) validates judges against
//! humans.
//!
//! Everything runs offline against the deterministic
//! [`MockBackend`](backend::MockBackend); the `examples/` directory has
//! one runnable example per capability:
//!
//! ```bash
//! cargo run -p vqva --example agent_pipeline
//! cargo run -p vqva --example label_loop
//! cargo run -p vqva --example resume_run
//! cargo run -p vqva --example curate_subset
//! cargo run -p vqva --example mix_streams
//! cargo run -p vqva --example eval_bench
//! cargo run -p vqva --example rater_agreement
//! cargo run -p vqva --example train_classifier
//! ```
//!
//! The `vqva` binary is a thin shell over [`cli::dispatch`] exposing the
//! same operations as subcommands.

pub mod agents;
pub mod backend;
pub mod classify;
pub mod cli;
pub mod corpus;
pub mod dataset;
pub mod eval;
pub mod pipeline;
pub mod synth;

/// Version stamp written into dataset provenance and manifests.
pub const PIPELINE_VERSION: &str = concat!("vqva/", env!("CARGO_PKG_VERSION"));

/// FNV-1a 64-bit hash. Fixed here so feature hashing and demo scripts
/// stay stable across toolchains.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub(crate) fn hex_lower(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        use std::fmt::Write;
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// SHA-256 of `bytes`, lowercase hex.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(bytes);
    hex_lower(&h.finalize())
}

/// Whitespace-separated word count, the tokenizer-agnostic stand-in for
/// the token limits that prompts ask models to respect.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}
