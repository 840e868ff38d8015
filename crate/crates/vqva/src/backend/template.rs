//! Prompt assets and `{{placeholder}}` substitution.
//!
//! Every prompt the pipeline sends ships as a template file under
//! `assets/prompts/`, embedded into the binary at compile time. A
//! checksum manifest rides along so any drift in the shipped prompt text
//! fails the test suite. The `seed-label`, `refine-label`, and `judge`
//! templates are reconstructions (marked `verbatim: false` in the
//! manifest) and are meant to be swapped freely; the seven agent prompts
//! are frozen.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{BackendError, ChatRequest, DecodeParams, Message, Part, Role};
use crate::corpus::ImageBlob;
use crate::hex_lower;

/// Checksum manifest shipped next to the templates.
pub const TEMPLATE_MANIFEST: &str = include_str!("../../assets/manifest.json");

const BUILTIN: [(&str, &str); 10] = [
    ("retriever", include_str!("../../assets/prompts/retriever.txt")),
    ("instruction", include_str!("../../assets/prompts/instruction.txt")),
    ("qs", include_str!("../../assets/prompts/qs.txt")),
    ("as", include_str!("../../assets/prompts/as.txt")),
    ("cds", include_str!("../../assets/prompts/cds.txt")),
    ("rewriter", include_str!("../../assets/prompts/rewriter.txt")),
    ("reasoner", include_str!("../../assets/prompts/reasoner.txt")),
    ("seed-label", include_str!("../../assets/prompts/seed-label.txt")),
    ("refine-label", include_str!("../../assets/prompts/refine-label.txt")),
    ("judge", include_str!("../../assets/prompts/judge.txt")),
];

/// The set of prompt templates available to the pipeline.
#[derive(Debug, Clone)]
pub struct PromptAssets {
    templates: BTreeMap<String, String>,
}

impl PromptAssets {
    /// The templates compiled into the binary.
    pub fn builtin() -> PromptAssets {
        PromptAssets {
            templates: BUILTIN
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    /// Load `*.txt` templates from a directory, overriding builtins with
    /// the same stem. Lets deployments swap the reconstructed prompts.
    pub fn builtin_with_overrides(dir: &Path) -> std::io::Result<PromptAssets> {
        let mut assets = PromptAssets::builtin();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("txt") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    assets
                        .templates
                        .insert(stem.to_string(), std::fs::read_to_string(&path)?);
                }
            }
        }
        Ok(assets)
    }

    pub fn get(&self, template_id: &str) -> Result<&str, BackendError> {
        self.templates
            .get(template_id)
            .map(String::as_str)
            .ok_or_else(|| BackendError::UnknownTemplate(template_id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    /// SHA-256 of each template's bytes, keyed by template id.
    pub fn checksums(&self) -> BTreeMap<String, String> {
        self.templates
            .iter()
            .map(|(k, v)| {
                let mut h = Sha256::new();
                h.update(v.as_bytes());
                (k.clone(), hex_lower(&h.finalize()))
            })
            .collect()
    }
}

/// Output of [`render_prompt`]: the messages plus any warnings (unused
/// bindings are rendered unchanged but reported).
#[derive(Debug, Clone)]
pub struct Rendered {
    pub messages: Vec<Message>,
    pub warnings: Vec<String>,
}

/// Substitute `{{name}}` placeholders in the template and assemble
/// messages: the rendered template is the system message; attachments
/// become image parts of a user message, order preserved.
pub fn render_prompt(
    assets: &PromptAssets,
    template_id: &str,
    bindings: &BTreeMap<String, String>,
    attachments: &[ImageBlob],
) -> Result<Rendered, BackendError> {
    let template = assets.get(template_id)?;
    let mut text = template.to_string();
    let mut warnings = Vec::new();
    for (name, value) in bindings {
        let slot = format!("{{{{{name}}}}}");
        if text.contains(&slot) {
            text = text.replace(&slot, value);
        } else {
            warnings.push(format!("binding {name} unused by template {template_id}"));
        }
    }
    if let Some(start) = text.find("{{") {
        let rest = &text[start + 2..];
        let placeholder = rest
            .split_once("}}")
            .map(|(p, _)| p.to_string())
            .unwrap_or_else(|| rest.chars().take(24).collect());
        return Err(BackendError::MissingBinding {
            template: template_id.to_string(),
            placeholder,
        });
    }
    let mut messages = vec![Message {
        role: Role::System,
        parts: vec![Part::Text(text)],
    }];
    if !attachments.is_empty() {
        messages.push(Message {
            role: Role::User,
            parts: attachments
                .iter()
                .map(|blob| Part::Image(blob.clone()))
                .collect(),
        });
    }
    Ok(Rendered { messages, warnings })
}

/// Render a template into a [`ChatRequest`] with a content-pure
/// `request_key`.
pub fn build_request(
    assets: &PromptAssets,
    template_id: &str,
    bindings: &BTreeMap<String, String>,
    attachments: &[ImageBlob],
    decode: DecodeParams,
) -> Result<ChatRequest, BackendError> {
    let rendered = render_prompt(assets, template_id, bindings, attachments)?;
    for w in &rendered.warnings {
        log::warn!("{w}");
    }
    let mut h = Sha256::new();
    h.update(template_id.as_bytes());
    h.update([0x1f]);
    for (name, value) in bindings {
        h.update(name.as_bytes());
        h.update([0x1e]);
        h.update(value.as_bytes());
        h.update([0x1f]);
    }
    for blob in attachments {
        h.update(blob.content_hash.as_bytes());
        h.update([0x1f]);
    }
    let request_key = hex_lower(&h.finalize());
    Ok(ChatRequest {
        template_id: template_id.to_string(),
        bindings: bindings.clone(),
        messages: rendered.messages,
        decode,
        request_key,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bind(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn retriever_template_renders_verbatim_text() {
        let assets = PromptAssets::builtin();
        let rendered = render_prompt(
            &assets,
            "retriever",
            &bind(&[("document", "some page text")]),
            &[],
        )
        .unwrap();
        let Part::Text(system) = &rendered.messages[0].parts[0] else {
            panic!("system part must be text");
        };
        assert!(system.contains("select exactly one pair of figures"));
        assert!(system.contains("Return only the bracketed pair."));
        assert!(system.contains("Indices start at 1 and must be different."));
        assert!(system.contains("If no suitable pair exists, output [0,0]."));
        assert!(system.contains("some page text"));
        assert!(!system.contains("{{"));
    }

    #[test]
    fn unused_binding_warns_but_renders() {
        let assets = PromptAssets::builtin();
        let rendered = render_prompt(
            &assets,
            "instruction",
            &bind(&[("unused", "value")]),
            &[],
        )
        .unwrap();
        assert_eq!(rendered.warnings.len(), 1);
        assert!(rendered.warnings[0].contains("unused"));
    }

    #[test]
    fn missing_binding_names_placeholder() {
        let assets = PromptAssets::builtin();
        let err = render_prompt(&assets, "retriever", &bind(&[]), &[]).unwrap_err();
        match err {
            BackendError::MissingBinding { placeholder, .. } => {
                assert_eq!(placeholder, "document");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn attachments_become_ordered_image_parts() {
        let assets = PromptAssets::builtin();
        let a = ImageBlob::new(vec![1], "image/png");
        let b = ImageBlob::new(vec![2], "image/png");
        let rendered = render_prompt(
            &assets,
            "instruction",
            &bind(&[]),
            &[a.clone(), b.clone()],
        )
        .unwrap();
        assert_eq!(rendered.messages.len(), 2);
        let parts = &rendered.messages[1].parts;
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0], Part::Image(a));
        assert_eq!(parts[1], Part::Image(b));
    }

    #[test]
    fn unknown_template_is_a_config_error() {
        let assets = PromptAssets::builtin();
        assert!(matches!(
            render_prompt(&assets, "nope", &bind(&[]), &[]),
            Err(BackendError::UnknownTemplate(_))
        ));
    }

    #[test]
    fn request_key_is_pure_in_content() {
        let assets = PromptAssets::builtin();
        let blob1 = ImageBlob::new(vec![1, 2, 3], "image/png");
        let blob2 = ImageBlob::new(vec![9, 9, 9], "image/png");
        let mk = |q: &str, blob: &ImageBlob| {
            build_request(
                &assets,
                "qs",
                &bind(&[("question", q)]),
                std::slice::from_ref(blob),
                DecodeParams::default(),
            )
            .unwrap()
            .request_key
        };
        assert_eq!(mk("q1", &blob1), mk("q1", &blob1));
        assert_ne!(mk("q1", &blob1), mk("q2", &blob1));
        assert_ne!(mk("q1", &blob1), mk("q1", &blob2));
    }

    #[test]
    fn builtin_checksums_match_manifest() {
        let manifest: serde_json::Value = serde_json::from_str(TEMPLATE_MANIFEST).unwrap();
        let templates = manifest["templates"].as_object().unwrap();
        let checksums = PromptAssets::builtin().checksums();
        assert_eq!(templates.len(), checksums.len());
        for (id, sum) in &checksums {
            assert_eq!(
                templates[id]["sha256"].as_str().unwrap(),
                sum,
                "template {id} drifted from its manifest checksum"
            );
        }
    }
}
