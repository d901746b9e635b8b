//! Skip-gram word2vec with negative sampling, written for determinism:
//! single-threaded, seeded RNG, fixed vocabulary order.

use super::{EmbedOptions, EmbeddingTable, UnkPolicy, VectorizeError};
use crate::frontend::NodeType;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// Train embeddings on tokenized sentences. The vocabulary is seeded with
/// every NodeType name plus "ID" so structural tokens always have vectors,
/// then extended with corpus tokens in first-appearance order. "UNK" is
/// appended after training (mean of all trained vectors by default).
pub fn train_embeddings(
    corpus: &[Vec<String>],
    opts: &EmbedOptions,
) -> Result<EmbeddingTable, VectorizeError> {
    let dim = opts.dim;
    if corpus.iter().all(|s| s.is_empty()) {
        return Err(VectorizeError::EmptyCorpus);
    }

    // --- vocabulary -------------------------------------------------------
    let mut tokens: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let push = |t: &str, tokens: &mut Vec<String>, index: &mut HashMap<String, usize>| {
        if !index.contains_key(t) {
            index.insert(t.to_string(), tokens.len());
            tokens.push(t.to_string());
        }
    };
    for nt in NodeType::ALL {
        push(nt.name(), &mut tokens, &mut index);
    }
    push("ID", &mut tokens, &mut index);
    for sent in corpus {
        for t in sent {
            push(t, &mut tokens, &mut index);
        }
    }

    let mut counts = vec![0u64; tokens.len()];
    for sent in corpus {
        for t in sent {
            counts[index[t.as_str()]] += 1;
        }
    }

    // Negative-sampling distribution: unigram^0.75, cumulative for
    // binary-search sampling.
    let mut cumulative = Vec::with_capacity(tokens.len());
    let mut total = 0.0f64;
    for &c in &counts {
        total += (c as f64).powf(0.75);
        cumulative.push(total);
    }
    if total <= 0.0 {
        return Err(VectorizeError::EmptyCorpus);
    }

    // --- parameters -------------------------------------------------------
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let span = 0.5 / dim as f32;
    let mut syn0: Vec<Vec<f32>> = (0..tokens.len())
        .map(|_| (0..dim).map(|_| rng.gen_range(-span..span)).collect())
        .collect();
    let mut syn1: Vec<Vec<f32>> = vec![vec![0.0; dim]; tokens.len()];

    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| s.iter().map(|t| index[t.as_str()]).collect())
        .collect();
    let total_tokens: usize = sentences.iter().map(Vec::len).sum();
    let schedule = (opts.epochs * total_tokens).max(1) as f32;

    let sample_negative = |rng: &mut ChaCha8Rng| -> usize {
        let x = rng.gen_range(0.0..total);
        cumulative.partition_point(|&c| c <= x).min(tokens.len() - 1)
    };

    // --- skip-gram with negative sampling ----------------------------------
    let mut processed = 0usize;
    let mut neu1e = vec![0.0f32; dim];
    for _ in 0..opts.epochs {
        for sent in &sentences {
            for (i, &center) in sent.iter().enumerate() {
                let alpha =
                    opts.learning_rate * (1.0 - processed as f32 / schedule).max(1e-4);
                processed += 1;
                // Dynamic window, as in the reference implementation.
                let radius = opts.window - rng.gen_range(0..opts.window.max(1));
                let lo = i.saturating_sub(radius);
                let hi = (i + radius).min(sent.len().saturating_sub(1));
                for j in lo..=hi {
                    if j == i {
                        continue;
                    }
                    let context = sent[j];
                    neu1e.fill(0.0);
                    for k in 0..=opts.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0f32)
                        } else {
                            let t = sample_negative(&mut rng);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let f: f32 = syn0[center]
                            .iter()
                            .zip(&syn1[target])
                            .map(|(a, b)| a * b)
                            .sum();
                        let g = (label - sigmoid(f)) * alpha;
                        for (e, &o) in neu1e.iter_mut().zip(&syn1[target]) {
                            *e += g * o;
                        }
                        let c0 = &syn0[center];
                        for (o, &c) in syn1[target].iter_mut().zip(c0) {
                            *o += g * c;
                        }
                    }
                    for (c, &e) in syn0[center].iter_mut().zip(&neu1e) {
                        *c += e;
                    }
                }
            }
        }
    }

    // --- UNK ---------------------------------------------------------------
    let unk = match opts.unk_policy {
        UnkPolicy::Mean => {
            let mut mean = vec![0.0f32; dim];
            for v in &syn0 {
                for (m, &x) in mean.iter_mut().zip(v) {
                    *m += x;
                }
            }
            let n = syn0.len() as f32;
            mean.iter_mut().for_each(|m| *m /= n);
            mean
        }
        UnkPolicy::Zero => vec![0.0; dim],
    };
    push("UNK", &mut tokens, &mut index);
    syn0.push(unk);

    let table = EmbeddingTable {
        dim,
        tokens,
        vectors: syn0,
        seed: opts.seed,
        index,
    };
    table.validate()?;
    Ok(table)
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}
