//! Hashed bag-of-ngrams linear classifier.
//!
//! Word uni+bigrams are hashed into a fixed bucket table, their
//! embeddings averaged, and a linear softmax head produces category
//! probabilities: the standard lightweight supervised text classifier.
//! Training is plain SGD with a linearly decaying learning rate, single
//! threaded and fully deterministic given (data, hyperparams, seed).
//! Weights are stored as f32; all arithmetic runs in f64.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ClassifyError, LabeledExample};
use crate::corpus::TopicCategory;
use crate::fnv1a64;

pub const NUM_CATEGORIES: usize = 3;

#[derive(Debug, Clone, Copy)]
pub struct Hyperparams {
    /// Hash table size; must be a power of two.
    pub hash_buckets: usize,
    pub embedding_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            hash_buckets: 1 << 20,
            embedding_dim: 64,
            epochs: 5,
            learning_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    hash_buckets: usize,
    embedding_dim: usize,
    /// `hash_buckets * embedding_dim`, bucket-major.
    embeddings: Vec<f32>,
    /// `embedding_dim * NUM_CATEGORIES`, dimension-major.
    output_weights: Vec<f32>,
    training_seed: u64,
}

/// Prediction with the softmax confidence of the argmax category.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub category: TopicCategory,
    pub confidence: f64,
    /// True when the input had no features (empty text); the result is
    /// the documented degenerate fallback.
    pub degenerate: bool,
}

/// Trained model plus training diagnostics.
#[derive(Debug)]
pub struct TrainedClassifier {
    pub model: ClassifierModel,
    pub skipped_empty: usize,
    pub epoch_mean_loss: Vec<f64>,
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

impl ClassifierModel {
    pub fn hash_buckets(&self) -> usize {
        self.hash_buckets
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn embeddings(&self) -> &[f32] {
        &self.embeddings
    }

    pub fn output_weights(&self) -> &[f32] {
        &self.output_weights
    }

    pub fn training_seed(&self) -> u64 {
        self.training_seed
    }

    /// Hashed uni+bigram bucket ids for `text`, with multiplicity.
    pub fn features(&self, text: &str) -> Vec<usize> {
        let mask = self.hash_buckets - 1;
        let tokens = tokenize(text);
        let mut feats = Vec::with_capacity(tokens.len() * 2);
        for tok in &tokens {
            feats.push((fnv1a64(tok.as_bytes()) as usize) & mask);
        }
        for pair in tokens.windows(2) {
            let key = format!("{}\u{1f}{}", pair[0], pair[1]);
            feats.push((fnv1a64(key.as_bytes()) as usize) & mask);
        }
        feats
    }

    fn hidden(&self, feats: &[usize]) -> Vec<f64> {
        let dim = self.embedding_dim;
        let mut hidden = vec![0.0f64; dim];
        for &f in feats {
            let row = &self.embeddings[f * dim..(f + 1) * dim];
            for (h, w) in hidden.iter_mut().zip(row) {
                *h += *w as f64;
            }
        }
        let inv = 1.0 / feats.len() as f64;
        for h in &mut hidden {
            *h *= inv;
        }
        hidden
    }

    fn logits_from_hidden(&self, hidden: &[f64]) -> [f64; NUM_CATEGORIES] {
        let mut logits = [0.0f64; NUM_CATEGORIES];
        for (d, h) in hidden.iter().enumerate() {
            let row = &self.output_weights[d * NUM_CATEGORIES..(d + 1) * NUM_CATEGORIES];
            for (c, w) in row.iter().enumerate() {
                logits[c] += *w as f64 * h;
            }
        }
        logits
    }

    /// Raw logits for `text`; `None` when the text has no features.
    pub fn logits(&self, text: &str) -> Option<[f64; NUM_CATEGORIES]> {
        let feats = self.features(text);
        if feats.is_empty() {
            return None;
        }
        Some(self.logits_from_hidden(&self.hidden(&feats)))
    }

    pub fn predict(&self, text: &str) -> Prediction {
        match self.logits(text) {
            None => Prediction {
                category: TopicCategory::Other,
                confidence: 1.0 / NUM_CATEGORIES as f64,
                degenerate: true,
            },
            Some(logits) => {
                let probs = softmax(&logits);
                let mut best = 0;
                for c in 1..NUM_CATEGORIES {
                    if probs[c] > probs[best] {
                        best = c;
                    }
                }
                Prediction {
                    category: TopicCategory::ALL[best],
                    confidence: probs[best],
                    degenerate: false,
                }
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifyError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        w.write_all(b"VQVAFTXT")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.hash_buckets as u64).to_le_bytes())?;
        w.write_all(&(self.embedding_dim as u64).to_le_bytes())?;
        w.write_all(&(NUM_CATEGORIES as u32).to_le_bytes())?;
        for cat in TopicCategory::ALL {
            let name = cat.as_str().as_bytes();
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name)?;
        }
        w.write_all(&self.training_seed.to_le_bytes())?;
        for v in &self.embeddings {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.output_weights {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ClassifierModel, ClassifyError> {
        let file = std::fs::File::open(path)?;
        let mut r = std::io::BufReader::new(file);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"VQVAFTXT" {
            return Err(ClassifyError::ModelFormat("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != 1 {
            return Err(ClassifyError::ModelFormat(format!(
                "unsupported version {version}"
            )));
        }
        let hash_buckets = read_u64(&mut r)? as usize;
        let embedding_dim = read_u64(&mut r)? as usize;
        let n_cats = read_u32(&mut r)? as usize;
        if n_cats != NUM_CATEGORIES {
            return Err(ClassifyError::ModelFormat(format!(
                "expected {NUM_CATEGORIES} categories, file has {n_cats}"
            )));
        }
        for cat in TopicCategory::ALL {
            let len = read_u32(&mut r)? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            if buf != cat.as_str().as_bytes() {
                return Err(ClassifyError::ModelFormat(format!(
                    "category order mismatch (expected {cat})"
                )));
            }
        }
        let training_seed = read_u64(&mut r)?;
        let embeddings = read_f32s(&mut r, hash_buckets * embedding_dim)?;
        let output_weights = read_f32s(&mut r, embedding_dim * NUM_CATEGORIES)?;
        if embeddings.iter().chain(&output_weights).any(|v| !v.is_finite()) {
            return Err(ClassifyError::ModelFormat("non-finite weights".into()));
        }
        Ok(ClassifierModel {
            hash_buckets,
            embedding_dim,
            embeddings,
            output_weights,
            training_seed,
        })
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32, ClassifyError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64, ClassifyError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f32>, ClassifyError> {
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 4];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        out.push(f32::from_le_bytes(buf));
    }
    Ok(out)
}

pub fn softmax(logits: &[f64; NUM_CATEGORIES]) -> [f64; NUM_CATEGORIES] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; NUM_CATEGORIES];
    let mut sum = 0.0;
    for (o, l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    for o in &mut out {
        *o /= sum;
    }
    out
}

fn category_index(cat: TopicCategory) -> usize {
    TopicCategory::ALL.iter().position(|c| *c == cat).unwrap()
}

/// Supervised training over labeled examples. Requires at least two
/// distinct labels; empty texts are skipped and counted.
pub fn train_classifier(
    examples: &[LabeledExample],
    hp: &Hyperparams,
    seed: u64,
) -> Result<TrainedClassifier, ClassifyError> {
    assert!(
        hp.hash_buckets.is_power_of_two(),
        "hash_buckets must be a power of two"
    );
    if examples.is_empty() {
        return Err(ClassifyError::EmptyTrainingSet);
    }
    let distinct: std::collections::BTreeSet<_> = examples.iter().map(|e| e.label).collect();
    if distinct.len() < 2 {
        return Err(ClassifyError::SingleLabel);
    }

    let dim = hp.embedding_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 1.0 / dim as f32;
    let mut model = ClassifierModel {
        hash_buckets: hp.hash_buckets,
        embedding_dim: dim,
        embeddings: (0..hp.hash_buckets * dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect(),
        output_weights: vec![0.0; dim * NUM_CATEGORIES],
        training_seed: seed,
    };

    let mut prepared: Vec<(Vec<usize>, usize)> = Vec::with_capacity(examples.len());
    let mut skipped_empty = 0;
    for ex in examples {
        let feats = model.features(&ex.text);
        if feats.is_empty() {
            skipped_empty += 1;
            continue;
        }
        prepared.push((feats, category_index(ex.label)));
    }
    if prepared.is_empty() {
        return Err(ClassifyError::EmptyTrainingSet);
    }

    let total_steps = (prepared.len() * hp.epochs) as f64;
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut epoch_mean_loss = Vec::with_capacity(hp.epochs);

    for _ in 0..hp.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for &i in &order {
            let (feats, label) = &prepared[i];
            let lr = hp.learning_rate * (1.0 - step as f64 / total_steps);
            let hidden = model.hidden(feats);
            let probs = softmax(&model.logits_from_hidden(&hidden));
            loss_sum += -probs[*label].max(1e-300).ln();

            // grad wrt logits: p - onehot(label)
            let mut grad_logit = probs;
            grad_logit[*label] -= 1.0;

            let mut grad_hidden = vec![0.0f64; dim];
            for d in 0..dim {
                let row = &mut model.output_weights[d * NUM_CATEGORIES..(d + 1) * NUM_CATEGORIES];
                for (c, w) in row.iter_mut().enumerate() {
                    grad_hidden[d] += *w as f64 * grad_logit[c];
                    *w = (*w as f64 - lr * grad_logit[c] * hidden[d]) as f32;
                }
            }
            let scale = lr / feats.len() as f64;
            for &f in feats {
                let row = &mut model.embeddings[f * dim..(f + 1) * dim];
                for (w, g) in row.iter_mut().zip(&grad_hidden) {
                    *w = (*w as f64 - scale * g) as f32;
                }
            }
            step += 1;
        }
        epoch_mean_loss.push(loss_sum / prepared.len() as f64);
    }

    Ok(TrainedClassifier {
        model,
        skipped_empty,
        epoch_mean_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelStage;

    fn example(text: &str, label: TopicCategory) -> LabeledExample {
        LabeledExample {
            doc_id: format!("d-{}", fnv1a64(text.as_bytes())),
            text: text.into(),
            label,
            provenance: LabelStage::SeedLlm,
        }
    }

    fn small_hp() -> Hyperparams {
        Hyperparams {
            hash_buckets: 1 << 12,
            embedding_dim: 16,
            epochs: 5,
            learning_rate: 0.1,
        }
    }

    fn separable(n_per_class: usize, seed: u64) -> Vec<LabeledExample> {
        crate::synth::separable_examples(n_per_class, seed)
    }

    #[test]
    fn separable_corpus_trains_accurately() {
        let examples = separable(60, 7);
        let (train, held) = examples.split_at(150);
        let trained = train_classifier(train, &small_hp(), 42).unwrap();
        let correct = held
            .iter()
            .filter(|ex| trained.model.predict(&ex.text).category == ex.label)
            .count();
        let acc = correct as f64 / held.len() as f64;
        assert!(acc >= 0.95, "held-out accuracy {acc}");
        let losses = &trained.epoch_mean_loss;
        assert!(losses.iter().all(|l| l.is_finite()));
        assert!(losses.last().unwrap() < losses.first().unwrap());
    }

    #[test]
    fn training_is_bit_deterministic() {
        let examples = separable(20, 3);
        let a = train_classifier(&examples, &small_hp(), 11).unwrap().model;
        let b = train_classifier(&examples, &small_hp(), 11).unwrap().model;
        assert_eq!(a, b);
        let c = train_classifier(&examples, &small_hp(), 12).unwrap().model;
        assert_ne!(a, c);
    }

    #[test]
    fn single_label_is_a_training_error() {
        let examples: Vec<_> = (0..10)
            .map(|i| example(&format!("text {i}"), TopicCategory::Other))
            .collect();
        assert!(matches!(
            train_classifier(&examples, &small_hp(), 1),
            Err(ClassifyError::SingleLabel)
        ));
    }

    #[test]
    fn empty_texts_skipped_with_count() {
        let mut examples = separable(10, 5);
        examples.push(example("", TopicCategory::Design));
        examples.push(example("   \t ", TopicCategory::Knowledge));
        let trained = train_classifier(&examples, &small_hp(), 2).unwrap();
        assert_eq!(trained.skipped_empty, 2);
    }

    #[test]
    fn empty_text_predicts_other_flagged() {
        let trained = train_classifier(&separable(10, 5), &small_hp(), 2).unwrap();
        let p = trained.model.predict("");
        assert!(p.degenerate);
        assert_eq!(p.category, TopicCategory::Other);
        assert!((p.confidence - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_normalizes() {
        let trained = train_classifier(&separable(10, 5), &small_hp(), 2).unwrap();
        for text in ["one two three", "alpha beta", "zzz qqq xxx yyy"] {
            if let Some(logits) = trained.model.logits(text) {
                let probs = softmax(&logits);
                let sum: f64 = probs.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn argmax_invariant_under_logit_rescaling() {
        let trained = train_classifier(&separable(10, 9), &small_hp(), 4).unwrap();
        for text in ["wombat quark", "gradient descent", "teal palette"] {
            let Some(logits) = trained.model.logits(text) else {
                continue;
            };
            let base = softmax(&logits);
            let scaled = softmax(&[logits[0] * 3.0, logits[1] * 3.0, logits[2] * 3.0]);
            let argmax = |p: &[f64; 3]| {
                (0..3).max_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap()).unwrap()
            };
            assert_eq!(argmax(&base), argmax(&scaled));
        }
    }

    #[test]
    fn save_load_round_trip_bit_exact() {
        let trained = train_classifier(&separable(15, 1), &small_hp(), 99).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        trained.model.save(&path).unwrap();
        let loaded = ClassifierModel::load(&path).unwrap();
        assert_eq!(loaded, trained.model);
    }
}
