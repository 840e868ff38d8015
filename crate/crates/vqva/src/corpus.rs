//! Interleaved image-text documents: data model, line-format parsing,
//! corpus streaming, and blob resolution.
//!
//! A corpus file is newline-delimited UTF-8, one self-describing JSON
//! record per line:
//!
//! ```json
//! {"doc_id":"d1","text_segments":["..."],"figures":[{"index":1,"image_ref":"a.png","caption":"..."}],"source_uri":"...","topic_label":{"category":"knowledge","confidence":0.9,"stage":"classifier"}}
//! ```
//!
//! `doc_id`, `text_segments`, `figures` and the nested `index`,
//! `image_ref`, `caption` field names are normative. Figures are indexed
//! contiguously 1..N in document order. Images are opaque blobs addressed
//! by `image_ref` (a path under a blob-store root) plus a SHA-256 content
//! hash; the pipeline never decodes pixels.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::sha256_hex;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: doc {doc_id}: {message}")]
    Validation {
        line: usize,
        doc_id: String,
        message: String,
    },
    #[error("line {line}: duplicate doc_id {doc_id}")]
    DuplicateDocId { line: usize, doc_id: String },
    #[error("I/O failure at byte offset {offset}: {source}")]
    Io {
        offset: u64,
        #[source]
        source: std::io::Error,
    },
    #[error("doc {doc_id} figure {figure}: blob {path} not found")]
    BlobNotFound {
        doc_id: String,
        figure: u32,
        path: String,
    },
    #[error("doc {doc_id} figure {figure}: blob {path} is empty")]
    EmptyBlob {
        doc_id: String,
        figure: u32,
        path: String,
    },
    #[error("doc {doc_id} figure {figure}: image_ref {path} does not resolve under the store root")]
    UnresolvableRef {
        doc_id: String,
        figure: u32,
        path: String,
    },
}

/// Topic assigned by the labeling loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicCategory {
    Knowledge,
    Design,
    Other,
}

impl TopicCategory {
    /// Fixed category order shared with the classifier head.
    pub const ALL: [TopicCategory; 3] = [
        TopicCategory::Knowledge,
        TopicCategory::Design,
        TopicCategory::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TopicCategory::Knowledge => "knowledge",
            TopicCategory::Design => "design",
            TopicCategory::Other => "other",
        }
    }

    pub fn from_str_loose(s: &str) -> Option<TopicCategory> {
        match s.trim().to_ascii_lowercase().as_str() {
            "knowledge" => Some(TopicCategory::Knowledge),
            "design" => Some(TopicCategory::Design),
            "other" => Some(TopicCategory::Other),
            _ => None,
        }
    }
}

impl std::fmt::Display for TopicCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which pass of the labeling loop produced a label. Transitions only
/// move forward: seed_llm -> classifier -> refined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelStage {
    SeedLlm,
    Classifier,
    Refined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopicLabel {
    pub category: TopicCategory,
    pub confidence: f64,
    pub stage: LabelStage,
}

impl TopicLabel {
    pub fn new(category: TopicCategory, confidence: f64, stage: LabelStage) -> TopicLabel {
        debug_assert!((0.0..=1.0).contains(&confidence));
        TopicLabel {
            category,
            confidence,
            stage,
        }
    }
}

/// One indexed figure inside a document. `content_hash` stays empty until
/// the blob is resolved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FigureRef {
    pub index: u32,
    pub image_ref: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub content_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

/// One web document: ordered text segments plus figures indexed 1..N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterleavedDocument {
    pub doc_id: String,
    pub text_segments: Vec<String>,
    pub figures: Vec<FigureRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_uri: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_label: Option<TopicLabel>,
}

impl InterleavedDocument {
    pub fn figure_count(&self) -> usize {
        self.figures.len()
    }

    /// Documents with fewer than two figures can never yield a pair.
    pub fn can_pair(&self) -> bool {
        self.figures.len() >= 2
    }

    /// Full document text: segments in order, then one `Figure k: caption`
    /// line per figure. This is both the classifier input and what the
    /// retriever sees, so captions always travel with the body text.
    pub fn rendered_text(&self) -> String {
        let mut out = String::new();
        for seg in &self.text_segments {
            out.push_str(seg);
            out.push('\n');
        }
        for fig in &self.figures {
            match &fig.caption {
                Some(c) => {
                    out.push_str(&format!("Figure {}: {}\n", fig.index, c));
                }
                None => {
                    out.push_str(&format!("Figure {}\n", fig.index));
                }
            }
        }
        out
    }

    fn validate(&self, line: usize) -> Result<(), CorpusError> {
        if self.doc_id.is_empty() {
            return Err(CorpusError::Validation {
                line,
                doc_id: self.doc_id.clone(),
                message: "empty doc_id".into(),
            });
        }
        for (pos, fig) in self.figures.iter().enumerate() {
            let expect = (pos + 1) as u32;
            if fig.index != expect {
                return Err(CorpusError::Validation {
                    line,
                    doc_id: self.doc_id.clone(),
                    message: format!(
                        "figure indices must be contiguous 1..N: position {} has index {}",
                        pos + 1,
                        fig.index
                    ),
                });
            }
        }
        if let Some(label) = &self.topic_label {
            if !(0.0..=1.0).contains(&label.confidence) {
                return Err(CorpusError::Validation {
                    line,
                    doc_id: self.doc_id.clone(),
                    message: format!("topic confidence {} outside [0,1]", label.confidence),
                });
            }
        }
        Ok(())
    }
}

/// Parse one corpus line into a validated document.
pub fn parse_document(raw_line: &str) -> Result<InterleavedDocument, CorpusError> {
    parse_document_at(raw_line, 0)
}

/// Like [`parse_document`] but reports `line` in errors.
pub fn parse_document_at(raw_line: &str, line: usize) -> Result<InterleavedDocument, CorpusError> {
    let doc: InterleavedDocument =
        serde_json::from_str(raw_line).map_err(|source| CorpusError::Parse { line, source })?;
    doc.validate(line)?;
    Ok(doc)
}

/// Canonical one-line serialization; `parse_document(emit_document(d)) == d`.
pub fn emit_document(doc: &InterleavedDocument) -> String {
    serde_json::to_string(doc).expect("document serialization cannot fail")
}

/// Streaming corpus reader. Yields documents in file order; per-record
/// failures come through as `Err` items and the stream continues.
/// Documents rejected by the filter are skipped and counted.
pub struct CorpusReader {
    lines: std::io::Lines<BufReader<File>>,
    line_no: usize,
    byte_offset: u64,
    seen_ids: HashSet<String>,
    filter: Option<Box<dyn Fn(&InterleavedDocument) -> bool>>,
    skipped: usize,
    errors: usize,
}

impl CorpusReader {
    pub fn open(path: &Path) -> Result<CorpusReader, CorpusError> {
        let file = File::open(path).map_err(|source| CorpusError::Io { offset: 0, source })?;
        Ok(CorpusReader {
            lines: BufReader::new(file).lines(),
            line_no: 0,
            byte_offset: 0,
            seen_ids: HashSet::new(),
            filter: None,
            skipped: 0,
            errors: 0,
        })
    }

    /// Skip (and count) documents for which `pred` returns false.
    pub fn with_filter(mut self, pred: impl Fn(&InterleavedDocument) -> bool + 'static) -> Self {
        self.filter = Some(Box::new(pred));
        self
    }

    /// Convenience filter: keep only documents labeled with `category`.
    pub fn with_category(self, category: TopicCategory) -> Self {
        self.with_filter(move |doc| {
            doc.topic_label
                .as_ref()
                .is_some_and(|l| l.category == category)
        })
    }

    /// Documents dropped by the filter so far.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    /// Item-level record errors so far.
    pub fn errors(&self) -> usize {
        self.errors
    }
}

impl Iterator for CorpusReader {
    type Item = Result<InterleavedDocument, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let raw = match self.lines.next()? {
                Ok(l) => l,
                Err(source) => {
                    return Some(Err(CorpusError::Io {
                        offset: self.byte_offset,
                        source,
                    }));
                }
            };
            self.line_no += 1;
            self.byte_offset += raw.len() as u64 + 1;
            if raw.trim().is_empty() {
                continue;
            }
            match parse_document_at(&raw, self.line_no) {
                Ok(doc) => {
                    if !self.seen_ids.insert(doc.doc_id.clone()) {
                        self.errors += 1;
                        return Some(Err(CorpusError::DuplicateDocId {
                            line: self.line_no,
                            doc_id: doc.doc_id,
                        }));
                    }
                    if let Some(pred) = &self.filter {
                        if !pred(&doc) {
                            self.skipped += 1;
                            continue;
                        }
                    }
                    return Some(Ok(doc));
                }
                Err(err) => {
                    self.errors += 1;
                    return Some(Err(err));
                }
            }
        }
    }
}

/// Load a whole corpus, failing on the first bad record.
pub fn load_corpus(path: &Path) -> Result<Vec<InterleavedDocument>, CorpusError> {
    CorpusReader::open(path)?.collect()
}

/// Opaque image bytes plus media type and content hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBlob {
    pub bytes: Vec<u8>,
    pub media_type: String,
    pub content_hash: String,
}

impl ImageBlob {
    /// Wrap raw bytes, computing the content hash. Panics on empty input
    /// in debug builds; use [`resolve_image`] for fallible loading.
    pub fn new(bytes: Vec<u8>, media_type: impl Into<String>) -> ImageBlob {
        debug_assert!(!bytes.is_empty());
        let content_hash = sha256_hex(&bytes);
        ImageBlob {
            bytes,
            media_type: media_type.into(),
            content_hash,
        }
    }
}

fn media_type_for(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg") | Some("jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("bmp") => "image/bmp",
        _ => "application/octet-stream",
    }
}

/// Resolve `fig.image_ref` as a relative path under `store`, read the
/// blob, and back-fill `fig.content_hash`. Never fetches over the
/// network; refs with a scheme, absolute paths, or `..` components are
/// rejected.
pub fn resolve_image(
    doc_id: &str,
    fig: &mut FigureRef,
    store: &Path,
) -> Result<ImageBlob, CorpusError> {
    let unresolvable = || CorpusError::UnresolvableRef {
        doc_id: doc_id.to_string(),
        figure: fig.index,
        path: fig.image_ref.clone(),
    };
    if fig.image_ref.contains("://") {
        return Err(unresolvable());
    }
    let rel = PathBuf::from(&fig.image_ref);
    if rel.is_absolute()
        || rel
            .components()
            .any(|c| matches!(c, Component::ParentDir | Component::Prefix(_)))
    {
        return Err(unresolvable());
    }
    let full = store.join(&rel);
    let mut bytes = Vec::new();
    match File::open(&full) {
        Ok(mut f) => {
            f.read_to_end(&mut bytes)
                .map_err(|source| CorpusError::Io { offset: 0, source })?;
        }
        Err(_) => {
            return Err(CorpusError::BlobNotFound {
                doc_id: doc_id.to_string(),
                figure: fig.index,
                path: fig.image_ref.clone(),
            });
        }
    }
    if bytes.is_empty() {
        return Err(CorpusError::EmptyBlob {
            doc_id: doc_id.to_string(),
            figure: fig.index,
            path: fig.image_ref.clone(),
        });
    }
    let blob = ImageBlob::new(bytes, media_type_for(&full));
    fig.content_hash = blob.content_hash.clone();
    Ok(blob)
}
