//! Dataset handling: labeled C function samples, JSONL persistence,
//! synthetic corpus generation, stratified splitting and class rebalancing.

mod generator;

pub use generator::{generate_synthetic, generate_with, GeneratorOptions};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// One labeled C function. `label` is 1 for vulnerable, 0 for healthy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSample {
    pub id: String,
    pub code: String,
    pub label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cwe: Option<String>,
    #[serde(default)]
    pub origin: String,
}

/// A stratified train/validate/test partition of a dataset.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<FunctionSample>,
    pub validate: Vec<FunctionSample>,
    pub test: Vec<FunctionSample>,
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("failed to read dataset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed dataset line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("dataset line {line}: label must be 0 or 1, got {label}")]
    InvalidLabel { line: usize, label: i64 },
    #[error("duplicate sample id {id:?}")]
    DuplicateId { id: String },
    #[error("cannot stratify fewer than 10 samples (got {got})")]
    TooFewSamples { got: usize },
    #[error("split ratios must be non-negative and sum to 1 (got {got:?})")]
    InvalidRatios { got: (f64, f64, f64) },
    #[error("rebalance ratio must be positive and finite (got {got})")]
    InvalidRebalanceRatio { got: f64 },
    #[error("rebalance requires both classes to be present")]
    SingleClass,
}

/// Load a JSONL dataset: one `{"id", "code", "label", "cwe"?, "origin"?}`
/// object per line. Order-preserving; unknown keys are ignored; blank
/// lines are skipped.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<FunctionSample>, CorpusError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut samples = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        // Parse with a permissive label type first so out-of-domain labels
        // get a domain error with the line number, not a type error.
        let value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| CorpusError::MalformedLine { line: lineno, message: e.to_string() })?;
        if let Some(label) = value.get("label").and_then(|l| l.as_i64()) {
            if label != 0 && label != 1 {
                return Err(CorpusError::InvalidLabel { line: lineno, label });
            }
        }
        let sample: FunctionSample = serde_json::from_value(value)
            .map_err(|e| CorpusError::MalformedLine { line: lineno, message: e.to_string() })?;
        if !seen.insert(sample.id.clone()) {
            return Err(CorpusError::DuplicateId { id: sample.id });
        }
        samples.push(sample);
    }
    Ok(samples)
}

/// Write a dataset as JSONL, one sample per line.
pub fn save_dataset(
    path: impl AsRef<Path>,
    samples: &[FunctionSample],
) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io { path: path.display().to_string(), source };
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    for sample in samples {
        let line = serde_json::to_string(sample).expect("samples serialize");
        writeln!(file, "{line}").map_err(io_err)?;
    }
    file.flush().map_err(io_err)?;
    Ok(())
}

/// Apportion `total` into integer parts proportional to `ratios` by the
/// largest-remainder method (deterministic, ties broken by index).
fn largest_remainder(total: usize, ratios: &[f64]) -> Vec<usize> {
    let shares: Vec<f64> = ratios.iter().map(|r| total as f64 * r).collect();
    let mut parts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let assigned: usize = parts.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (shares[a] - shares[a].floor(), shares[b] - shares[b].floor());
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(total - assigned) {
        parts[i] += 1;
    }
    parts
}

/// Stratified split: global split sizes and per-class counts are both
/// apportioned by largest remainder, then samples of each class are
/// shuffled with a seeded RNG and dealt out. Deterministic given `seed`.
pub fn split_dataset(
    samples: &[FunctionSample],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    if samples.len() < 10 {
        return Err(CorpusError::TooFewSamples { got: samples.len() });
    }
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(CorpusError::InvalidRatios { got: ratios });
    }

    let mut positives: Vec<&FunctionSample> = samples.iter().filter(|s| s.label == 1).collect();
    let mut negatives: Vec<&FunctionSample> = samples.iter().filter(|s| s.label == 0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    positives.shuffle(&mut rng);
    negatives.shuffle(&mut rng);

    // Global sizes are exact (largest remainder); positives get their own
    // largest-remainder apportionment and negatives fill the rest, which
    // keeps both the ±1 size bound and stratification.
    let sizes = largest_remainder(samples.len(), &r);
    let pos_counts = largest_remainder(positives.len(), &r);

    let mut split: [Vec<FunctionSample>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut pos_iter = positives.into_iter();
    let mut neg_iter = negatives.into_iter();
    for i in 0..3 {
        for _ in 0..pos_counts[i] {
            split[i].push(pos_iter.next().expect("counts sum to class size").clone());
        }
        for _ in 0..sizes[i] - pos_counts[i] {
            split[i].push(neg_iter.next().expect("sizes cover both classes").clone());
        }
    }
    let [train, validate, test] = split;
    Ok(DatasetSplit { train, validate, test, seed })
}

/// Downsample the majority class (keeping input order of survivors) so
/// that the negative:positive count matches `neg_to_pos_ratio` within ±1
/// sample. The minority side is never dropped.
pub fn rebalance(
    samples: &[FunctionSample],
    neg_to_pos_ratio: f64,
    seed: u64,
) -> Result<Vec<FunctionSample>, CorpusError> {
    if !(neg_to_pos_ratio.is_finite() && neg_to_pos_ratio > 0.0) {
        return Err(CorpusError::InvalidRebalanceRatio { got: neg_to_pos_ratio });
    }
    let n_pos = samples.iter().filter(|s| s.label == 1).count();
    let n_neg = samples.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(CorpusError::SingleClass);
    }

    // Which side exceeds the requested ratio determines who gets dropped.
    let (target_label, keep) = if (n_neg as f64) > neg_to_pos_ratio * n_pos as f64 {
        (0u8, (neg_to_pos_ratio * n_pos as f64).round() as usize)
    } else {
        (1u8, (n_neg as f64 / neg_to_pos_ratio).round() as usize)
    };

    let indices: Vec<usize> = samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.label == target_label)
        .map(|(i, _)| i)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept: Vec<usize> = indices
        .choose_multiple(&mut rng, keep.min(indices.len()))
        .copied()
        .collect();
    kept.sort_unstable();

    let mut kept = kept.into_iter().peekable();
    let out = samples
        .iter()
        .enumerate()
        .filter(|(i, s)| {
            if s.label != target_label {
                return true;
            }
            if kept.peek() == Some(i) {
                kept.next();
                true
            } else {
                false
            }
        })
        .map(|(_, s)| s.clone())
        .collect();
    Ok(out)
}
