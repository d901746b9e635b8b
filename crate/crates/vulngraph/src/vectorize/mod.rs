//! From graphs to numbers: token normalization, skip-gram embeddings,
//! per-node feature vectors, per-edge-type adjacency, and node-budget
//! batching.

mod w2v;

pub use w2v::train_embeddings;

use crate::cpg::{Cpg, CpgNode, CpgNodeKind, EdgeType};
use crate::frontend::{lex, FrontendError, NodeType, TokenKind};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

/// Identifiers that survive normalization: well-known library routines
/// whose names carry signal, everything else becomes "ID".
pub const LIBRARY_TOKENS: [&str; 13] = [
    "malloc",
    "calloc",
    "realloc",
    "memset",
    "memcpy",
    "strncpy",
    "strcpy",
    "printf",
    "fprintf",
    "sprintf",
    "perror",
    "atoi",
    "copy_to_user",
];

#[derive(Debug, Error)]
pub enum VectorizeError {
    #[error("tokenizing {sample_id:?}: {source}")]
    Frontend {
        sample_id: String,
        source: FrontendError,
    },
    #[error("embedding corpus is empty")]
    EmptyCorpus,
    #[error("no graphs to pack")]
    NoGraphs,
    #[error("all {excluded} graphs exceed the node cap")]
    AllOversized { excluded: usize },
    #[error("graph {sample_id:?} has {nodes} nodes, more than the node budget {budget}")]
    BudgetTooSmall {
        sample_id: String,
        nodes: usize,
        budget: usize,
    },
    #[error("embedding table is missing required token {0:?}")]
    MissingToken(String),
    #[error("embedding table contains a non-finite value for token {0:?}")]
    NonFinite(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
}

// --- tokenization -----------------------------------------------------------

/// Lex `code` and map every identifier outside [`LIBRARY_TOKENS`] to the
/// generic token "ID"; keywords, operators, and literals pass through.
pub fn tokenize_and_normalize(code: &str) -> Result<Vec<String>, FrontendError> {
    Ok(lex(code)?
        .into_iter()
        .map(|t| {
            if t.kind == TokenKind::Identifier && !LIBRARY_TOKENS.contains(&t.text.as_str()) {
                "ID".to_string()
            } else {
                t.text
            }
        })
        .collect())
}

/// One sentence per graph: AST nodes in preorder (CFG endpoints and
/// Symbols excluded), each contributing its type name and, for leaves,
/// its normalized code tokens.
pub fn build_corpus(cpgs: &[Cpg]) -> Result<Vec<Vec<String>>, VectorizeError> {
    if cpgs.is_empty() {
        return Err(VectorizeError::EmptyCorpus);
    }
    cpgs.iter()
        .map(|cpg| {
            let mut sentence = Vec::new();
            for node in &cpg.nodes {
                if matches!(
                    node.node_type,
                    CpgNodeKind::Typed(
                        NodeType::CFGEntryNode | NodeType::CFGExitNode | NodeType::Symbol
                    )
                ) {
                    continue;
                }
                sentence.push(node.node_type.name().to_string());
                if node.is_leaf && !node.code.is_empty() {
                    sentence.extend(tokenize_and_normalize(&node.code).map_err(|source| {
                        VectorizeError::Frontend {
                            sample_id: cpg.sample_id.clone(),
                            source,
                        }
                    })?);
                }
            }
            Ok(sentence)
        })
        .collect()
}

// --- embedding table ---------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnkPolicy {
    /// "UNK" is the mean of all trained vectors (default).
    Mean,
    /// "UNK" is the zero vector.
    Zero,
}

impl std::fmt::Display for UnkPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            UnkPolicy::Mean => "mean",
            UnkPolicy::Zero => "zero",
        })
    }
}

impl std::str::FromStr for UnkPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(UnkPolicy::Mean),
            "zero" => Ok(UnkPolicy::Zero),
            other => Err(format!("unknown unk policy {other:?} (mean|zero)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmbedOptions {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f32,
    pub seed: u64,
    pub unk_policy: UnkPolicy,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        EmbedOptions {
            dim: 32,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 0,
            unk_policy: UnkPolicy::Mean,
        }
    }
}

/// Learned token vectors. Row `i` of `vectors` belongs to `tokens[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub tokens: Vec<String>,
    pub vectors: Vec<Vec<f32>>,
    /// Training seed; informational only, not persisted.
    pub seed: u64,
    pub(crate) index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    dim: usize,
    tokens: Vec<String>,
    vectors: Vec<Vec<f32>>,
}

impl EmbeddingTable {
    pub fn vector(&self, token: &str) -> Option<&[f32]> {
        self.index.get(token).map(|&i| self.vectors[i].as_slice())
    }

    /// The out-of-vocabulary vector; present on every valid table.
    pub fn unk(&self) -> &[f32] {
        self.vector("UNK").expect("validated table carries UNK")
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f32> {
        Some(cosine(self.vector(a)?, self.vector(b)?))
    }

    /// Tokens ranked by cosine similarity to `token` (self excluded).
    pub fn nearest(&self, token: &str, k: usize) -> Vec<(String, f32)> {
        let Some(v) = self.vector(token) else {
            return Vec::new();
        };
        let mut scored: Vec<(String, f32)> = self
            .tokens
            .iter()
            .filter(|t| t.as_str() != token)
            .map(|t| (t.clone(), cosine(v, self.vector(t).unwrap())))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        scored
    }

    /// Check the table invariants: finite vectors, consistent widths, and
    /// the required NodeType/"ID"/"UNK" entries.
    pub fn validate(&self) -> Result<(), VectorizeError> {
        for nt in NodeType::ALL {
            if !self.index.contains_key(nt.name()) {
                return Err(VectorizeError::MissingToken(nt.name().to_string()));
            }
        }
        for required in ["ID", "UNK"] {
            if !self.index.contains_key(required) {
                return Err(VectorizeError::MissingToken(required.to_string()));
            }
        }
        for (t, v) in self.tokens.iter().zip(&self.vectors) {
            if v.len() != self.dim || v.iter().any(|x| !x.is_finite()) {
                return Err(VectorizeError::NonFinite(t.clone()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&TableFile {
            dim: self.dim,
            tokens: self.tokens.clone(),
            vectors: self.vectors.clone(),
        })
        .expect("embedding table serializes")
    }

    pub fn from_json(json: &str, origin: &str) -> Result<EmbeddingTable, VectorizeError> {
        let file: TableFile =
            serde_json::from_str(json).map_err(|e| VectorizeError::Malformed {
                path: origin.to_string(),
                line: e.line(),
                message: e.to_string(),
            })?;
        let index = file
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let table = EmbeddingTable {
            dim: file.dim,
            tokens: file.tokens,
            vectors: file.vectors,
            seed: 0,
            index,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), VectorizeError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| VectorizeError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<EmbeddingTable, VectorizeError> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path).map_err(|source| VectorizeError::Io {
            path: path.display().to_string(),
            source,
        })?;
        EmbeddingTable::from_json(&json, &path.display().to_string())
    }
}

fn cosine(a: &[f32], b: &[f32]) -> f32 {
    let dot: f32 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f32 = a.iter().map(|x| x * x).sum::<f32>().sqrt();
    let nb: f32 = b.iter().map(|x| x * x).sum::<f32>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

// --- node and graph vectorization --------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedMode {
    /// Mean of the type vector and the token vectors (width N).
    Average,
    /// Type vector concatenated with the token-vector mean (width 2N).
    Concat,
}

impl EmbedMode {
    pub fn feature_width(&self, dim: usize) -> usize {
        match self {
            EmbedMode::Average => dim,
            EmbedMode::Concat => 2 * dim,
        }
    }
}

impl std::fmt::Display for EmbedMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EmbedMode::Average => "average",
            EmbedMode::Concat => "concat",
        })
    }
}

impl std::str::FromStr for EmbedMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "average" => Ok(EmbedMode::Average),
            "concat" => Ok(EmbedMode::Concat),
            other => Err(format!("unknown vectorizer mode {other:?} (average|concat)")),
        }
    }
}

/// Feature vector for one node. Out-of-vocabulary tokens (and code that
/// fails to lex, possible only on imported graphs) fall back to "UNK".
pub fn embed_node(node: &CpgNode, table: &EmbeddingTable, mode: EmbedMode) -> Vec<f32> {
    let type_vec = table.vector(node.node_type.name()).unwrap_or_else(|| table.unk());
    let token_vecs: Vec<&[f32]> = if node.is_leaf && !node.code.is_empty() {
        match tokenize_and_normalize(&node.code) {
            Ok(tokens) => tokens
                .iter()
                .map(|t| table.vector(t).unwrap_or_else(|| table.unk()))
                .collect(),
            Err(_) => vec![table.unk()],
        }
    } else {
        Vec::new()
    };

    match mode {
        EmbedMode::Average => {
            if token_vecs.is_empty() {
                return type_vec.to_vec();
            }
            let mut acc = type_vec.to_vec();
            for v in &token_vecs {
                for (a, &x) in acc.iter_mut().zip(*v) {
                    *a += x;
                }
            }
            let n = (token_vecs.len() + 1) as f32;
            acc.iter_mut().for_each(|a| *a /= n);
            acc
        }
        EmbedMode::Concat => {
            let mut out = type_vec.to_vec();
            if token_vecs.is_empty() {
                out.extend(std::iter::repeat(0.0).take(table.dim));
            } else {
                let mut mean = vec![0.0f32; table.dim];
                for v in &token_vecs {
                    for (m, &x) in mean.iter_mut().zip(*v) {
                        *m += x;
                    }
                }
                let n = token_vecs.len() as f32;
                mean.iter_mut().for_each(|m| *m /= n);
                out.extend(mean);
            }
            out
        }
    }
}

/// A graph ready for the network: per-node features and per-edge-type
/// index pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorizedGraph {
    pub sample_id: String,
    pub label: u8,
    pub features: Vec<Vec<f32>>,
    pub adjacency: BTreeMap<EdgeType, Vec<(u32, u32)>>,
    pub node_count: usize,
}

pub fn vectorize_graph(cpg: &Cpg, table: &EmbeddingTable, mode: EmbedMode) -> VectorizedGraph {
    let features = cpg
        .nodes
        .iter()
        .map(|n| embed_node(n, table, mode))
        .collect();
    let mut adjacency: BTreeMap<EdgeType, Vec<(u32, u32)>> = BTreeMap::new();
    for e in &cpg.edges {
        adjacency.entry(e.edge_type).or_default().push((e.src, e.dst));
    }
    VectorizedGraph {
        sample_id: cpg.sample_id.clone(),
        label: cpg.label.unwrap_or(0),
        features,
        adjacency,
        node_count: cpg.nodes.len(),
    }
}

/// Write one JSON object per graph.
pub fn save_vectorized(
    path: impl AsRef<Path>,
    graphs: &[VectorizedGraph],
) -> Result<(), VectorizeError> {
    let path = path.as_ref();
    let io_err = |source| VectorizeError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut out = std::io::BufWriter::new(file);
    for g in graphs {
        serde_json::to_writer(&mut out, g).map_err(|e| io_err(e.into()))?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn load_vectorized(path: impl AsRef<Path>) -> Result<Vec<VectorizedGraph>, VectorizeError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| VectorizeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut graphs = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| VectorizeError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        graphs.push(
            serde_json::from_str(&line).map_err(|e| VectorizeError::Malformed {
                path: path.display().to_string(),
                line: idx + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(graphs)
}

// --- batching -----------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Batch {
    pub graphs: Vec<VectorizedGraph>,
    pub total_nodes: usize,
}

/// What the packer kept and dropped.
#[derive(Debug, Clone, Default, Serialize)]
pub struct PackReport {
    pub kept: usize,
    pub excluded: usize,
    pub excluded_ids: Vec<String>,
    pub batches: usize,
}

/// Pack graphs into batches of at most `node_budget` nodes, dropping
/// graphs above `max_nodes`. With `preserve_class_ratio`, graphs are
/// shuffled per class and interleaved so every full batch's positive
/// fraction stays within ±0.05 of the global fraction.
pub fn pack_batches(
    graphs: Vec<VectorizedGraph>,
    node_budget: usize,
    max_nodes: usize,
    seed: u64,
    preserve_class_ratio: bool,
) -> Result<(Vec<Batch>, PackReport), VectorizeError> {
    if graphs.is_empty() {
        return Err(VectorizeError::NoGraphs);
    }
    let mut report = PackReport::default();
    let mut kept: Vec<VectorizedGraph> = Vec::new();
    for g in graphs {
        if g.node_count > max_nodes {
            report.excluded += 1;
            report.excluded_ids.push(g.sample_id.clone());
        } else {
            kept.push(g);
        }
    }
    if kept.is_empty() {
        return Err(VectorizeError::AllOversized {
            excluded: report.excluded,
        });
    }
    if let Some(g) = kept.iter().find(|g| g.node_count > node_budget) {
        return Err(VectorizeError::BudgetTooSmall {
            sample_id: g.sample_id.clone(),
            nodes: g.node_count,
            budget: node_budget,
        });
    }
    report.kept = kept.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ordered: Vec<VectorizedGraph> = if preserve_class_ratio {
        let mut pos: Vec<VectorizedGraph> = Vec::new();
        let mut neg: Vec<VectorizedGraph> = Vec::new();
        for g in kept {
            if g.label == 1 {
                pos.push(g)
            } else {
                neg.push(g)
            }
        }
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        // Error-diffusion interleave: every window of the stream tracks
        // the global positive fraction.
        let fraction = pos.len() as f64 / (pos.len() + neg.len()) as f64;
        let mut out = Vec::with_capacity(pos.len() + neg.len());
        let (mut pos, mut neg) = (pos.into_iter(), neg.into_iter());
        let mut acc = 0.0f64;
        loop {
            acc += fraction;
            let next = if acc >= 1.0 - 1e-12 {
                match pos.next() {
                    Some(g) => {
                        acc -= 1.0;
                        Some(g)
                    }
                    None => neg.next(),
                }
            } else {
                match neg.next() {
                    Some(g) => Some(g),
                    None => {
                        acc -= 1.0;
                        pos.next()
                    }
                }
            };
            match next {
                Some(g) => out.push(g),
                None => break,
            }
        }
        out
    } else {
        kept.shuffle(&mut rng);
        kept
    };

    let mut batches: Vec<Batch> = Vec::new();
    let mut current = Batch {
        graphs: Vec::new(),
        total_nodes: 0,
    };
    for g in ordered {
        if current.total_nodes + g.node_count > node_budget && !current.graphs.is_empty() {
            batches.push(std::mem::replace(
                &mut current,
                Batch {
                    graphs: Vec::new(),
                    total_nodes: 0,
                },
            ));
        }
        current.total_nodes += g.node_count;
        current.graphs.push(g);
    }
    if !current.graphs.is_empty() {
        batches.push(current);
    }
    report.batches = batches.len();
    Ok((batches, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, FunctionSample};
    use crate::cpg::build_cpg;

    fn sample(code: &str) -> FunctionSample {
        FunctionSample {
            id: "t".into(),
            code: code.into(),
            label: 0,
            cwe: None,
            origin: "synthetic".into(),
        }
    }

    fn example_cpg() -> Cpg {
        build_cpg(&sample(
            "void foo() { int a = 43; char arr[55]; if (a < 55) { a = 63; } arr[a] = 'x'; }",
        ))
        .unwrap()
    }

    fn tiny_table(seed: u64) -> EmbeddingTable {
        let graphs: Vec<Cpg> = generate_synthetic(40, 0.5, 3)
            .iter()
            .map(|s| build_cpg(s).unwrap())
            .collect();
        let corpus = build_corpus(&graphs).unwrap();
        train_embeddings(
            &corpus,
            &EmbedOptions {
                dim: 8,
                epochs: 2,
                seed,
                ..EmbedOptions::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn normalization_maps_identifiers_to_id() {
        let t = |code: &str| tokenize_and_normalize(code).unwrap();
        assert_eq!(t("a = 63"), vec!["ID", "=", "63"]);
        assert_eq!(t(""), Vec::<String>::new());
        assert_eq!(
            t("memcpy(dst, src, n)"),
            vec!["memcpy", "(", "ID", ",", "ID", ",", "ID", ")"]
        );
        assert_eq!(t("if (x < 55)"), vec!["if", "(", "ID", "<", "55", ")"]);
    }

    #[test]
    fn normalization_is_idempotent() {
        for s in generate_synthetic(20, 0.5, 11) {
            let once = tokenize_and_normalize(&s.code).unwrap();
            let twice = tokenize_and_normalize(&once.join(" ")).unwrap();
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn corpus_sentences_follow_preorder_and_length_identity() {
        let empty = build_cpg(&sample("void f() {}")).unwrap();
        let sentences = build_corpus(std::slice::from_ref(&empty)).unwrap();
        assert_eq!(sentences[0], vec!["FunctionDef", "CompoundStatement"]);

        let g = example_cpg();
        let sentence = &build_corpus(std::slice::from_ref(&g)).unwrap()[0];
        // Length identity: Σ (1 + leaf-token count) over AST nodes.
        let expected: usize = g
            .nodes
            .iter()
            .filter(|n| {
                !matches!(
                    n.node_type,
                    CpgNodeKind::Typed(
                        NodeType::CFGEntryNode | NodeType::CFGExitNode | NodeType::Symbol
                    )
                )
            })
            .map(|n| {
                1 + if n.is_leaf && !n.code.is_empty() {
                    tokenize_and_normalize(&n.code).unwrap().len()
                } else {
                    0
                }
            })
            .sum();
        assert_eq!(sentence.len(), expected);
        // The declared type leaf emits its own name then its token.
        let run = sentence
            .windows(2)
            .any(|w| w[0] == "IdentifierDeclType" && w[1] == "int");
        assert!(run, "expected contiguous [IdentifierDeclType, int] in {sentence:?}");
    }

    #[test]
    fn training_is_deterministic_and_seed_sensitive() {
        let a = tiny_table(5);
        let b = tiny_table(5);
        assert_eq!(a, b);
        let c = tiny_table(6);
        assert_ne!(a.vectors, c.vectors);
    }

    #[test]
    fn table_contains_required_tokens_and_unit_self_similarity() {
        let t = tiny_table(1);
        for nt in NodeType::ALL {
            assert!(t.vector(nt.name()).is_some(), "missing {}", nt.name());
        }
        assert!(t.vector("ID").is_some());
        assert!(t.vector("UNK").is_some());
        for token in ["ID", "int", "PrimaryExpr"] {
            let c = t.cosine(token, token).unwrap();
            assert!((c - 1.0).abs() < 1e-5, "cosine({token},{token}) = {c}");
        }
    }

    #[test]
    fn unk_is_the_mean_of_trained_vectors() {
        let t = tiny_table(2);
        let n = t.tokens.len() - 1; // all but UNK itself
        for d in 0..t.dim {
            let mean: f32 = t.vectors[..n].iter().map(|v| v[d]).sum::<f32>() / n as f32;
            assert!((t.unk()[d] - mean).abs() < 1e-5);
        }
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let err = train_embeddings(&[], &EmbedOptions::default()).unwrap_err();
        assert!(matches!(err, VectorizeError::EmptyCorpus));
    }

    #[test]
    fn digits_cluster_away_from_keywords() {
        let graphs: Vec<Cpg> = generate_synthetic(300, 0.5, 17)
            .iter()
            .map(|s| build_cpg(s).unwrap())
            .collect();
        let corpus = build_corpus(&graphs).unwrap();
        let table = train_embeddings(
            &corpus,
            &EmbedOptions {
                dim: 16,
                epochs: 3,
                seed: 9,
                ..EmbedOptions::default()
            },
        )
        .unwrap();

        // Number literals that occur in the corpus, by frequency.
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for s in &corpus {
            for t in s {
                if t.chars().all(|c| c.is_ascii_digit()) {
                    *counts.entry(t).or_default() += 1;
                }
            }
        }
        let mut digits: Vec<&str> = counts.keys().copied().collect();
        digits.sort_by_key(|d| std::cmp::Reverse(counts[d]));
        digits.truncate(10);
        assert!(digits.len() >= 4, "corpus has too few numbers: {digits:?}");
        // Keywords and library calls that actually occur as leaf tokens
        // (flow keywords live on non-leaf headers and never reach the
        // corpus).
        let keywords: Vec<&str> = ["int", "char", "long", "unsigned", "memset", "printf"]
            .into_iter()
            .filter(|k| table.vector(k).is_some())
            .collect();
        assert!(keywords.len() >= 2, "too few anchor tokens: {keywords:?}");

        let mut digit_pairs = Vec::new();
        for (i, a) in digits.iter().enumerate() {
            for b in &digits[i + 1..] {
                digit_pairs.push(table.cosine(a, b).unwrap());
            }
        }
        let mut cross_pairs = Vec::new();
        for a in &digits {
            for k in &keywords {
                cross_pairs.push(table.cosine(a, k).unwrap());
            }
        }
        let mean = |v: &[f32]| v.iter().sum::<f32>() / v.len() as f32;
        let (within, cross) = (mean(&digit_pairs), mean(&cross_pairs));
        assert!(
            within > cross,
            "digit cohesion {within:.3} should exceed digit-keyword similarity {cross:.3}"
        );
    }

    #[test]
    fn embed_node_shapes_and_identities() {
        let t = tiny_table(4);
        let g = example_cpg();
        let stmt = g
            .nodes
            .iter()
            .find(|n| n.node_type.name() == "IdentifierDeclStmt")
            .unwrap();
        assert!(!stmt.is_leaf);
        // Non-leaf, average mode: exactly the type vector.
        assert_eq!(
            embed_node(stmt, &t, EmbedMode::Average),
            t.vector("IdentifierDeclStmt").unwrap()
        );
        // Non-leaf, concat mode: zero-padded second half.
        let cat = embed_node(stmt, &t, EmbedMode::Concat);
        assert_eq!(cat.len(), 2 * t.dim);
        assert!(cat[t.dim..].iter().all(|&x| x == 0.0));

        // Leaf whose code is one identifier: two-term mean.
        let leaf = g
            .nodes
            .iter()
            .find(|n| n.is_leaf && n.node_type.name() == "Identifier")
            .unwrap();
        let avg = embed_node(leaf, &t, EmbedMode::Average);
        let ty = t.vector("Identifier").unwrap();
        let id = t.vector("ID").unwrap();
        for d in 0..t.dim {
            assert!((avg[d] - (ty[d] + id[d]) / 2.0).abs() < 1e-6);
        }
        // Average output stays within the componentwise envelope.
        for d in 0..t.dim {
            let (lo, hi) = (ty[d].min(id[d]), ty[d].max(id[d]));
            assert!(avg[d] >= lo - 1e-6 && avg[d] <= hi + 1e-6);
        }
        for n in &g.nodes {
            assert_eq!(embed_node(n, &t, EmbedMode::Concat).len(), 2 * t.dim);
            assert_eq!(embed_node(n, &t, EmbedMode::Average).len(), t.dim);
        }
    }

    #[test]
    fn vectorize_graph_partitions_edges_by_type() {
        let t = tiny_table(8);
        let g = example_cpg();
        let v = vectorize_graph(&g, &t, EmbedMode::Average);
        assert_eq!(v.node_count, g.nodes.len());
        assert_eq!(v.features.len(), g.nodes.len());
        let total: usize = v.adjacency.values().map(Vec::len).sum();
        assert_eq!(total, g.edges.len());
        // The declaration-to-condition data dependence is present.
        let decl = g
            .nodes
            .iter()
            .find(|n| n.node_type.name() == "IdentifierDeclStmt")
            .unwrap()
            .id;
        let cond = g
            .nodes
            .iter()
            .find(|n| n.node_type.name() == "Condition")
            .unwrap()
            .id;
        assert!(v.adjacency[&EdgeType::Reaches].contains(&(decl, cond)));
        assert_eq!(v.label, g.label.unwrap());
    }

    #[test]
    fn zero_edge_graph_has_empty_adjacency() {
        let t = tiny_table(12);
        let g = Cpg {
            sample_id: "lonely".into(),
            label: Some(0),
            nodes: vec![crate::cpg::CpgNode {
                id: 0,
                node_type: NodeType::FunctionDef.into(),
                code: "f ()".into(),
                is_leaf: true,
            }],
            edges: vec![],
        };
        let v = vectorize_graph(&g, &t, EmbedMode::Average);
        assert!(v.adjacency.is_empty());
    }

    #[test]
    fn vectorized_file_round_trips() {
        let t = tiny_table(14);
        let graphs: Vec<VectorizedGraph> = generate_synthetic(12, 0.5, 19)
            .iter()
            .map(|s| vectorize_graph(&build_cpg(s).unwrap(), &t, EmbedMode::Concat))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.jsonl");
        save_vectorized(&path, &graphs).unwrap();
        assert_eq!(load_vectorized(&path).unwrap(), graphs);
    }

    #[test]
    fn table_json_round_trips() {
        let t = tiny_table(20);
        let back = EmbeddingTable::from_json(&t.to_json(), "mem").unwrap();
        assert_eq!(back.tokens, t.tokens);
        assert_eq!(back.vectors, t.vectors);
        assert_eq!(back.dim, t.dim);
    }

    fn stub_graph(id: usize, label: u8, nodes: usize) -> VectorizedGraph {
        VectorizedGraph {
            sample_id: format!("g{id}"),
            label,
            features: vec![vec![0.0]; nodes],
            adjacency: BTreeMap::new(),
            node_count: nodes,
        }
    }

    #[test]
    fn packer_respects_budget_and_exclusions() {
        let graphs: Vec<VectorizedGraph> =
            (0..10).map(|i| stub_graph(i, (i % 2) as u8, 10)).collect();
        let (batches, report) = pack_batches(graphs, 100, 699, 0, true).unwrap();
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].total_nodes, 100);
        assert_eq!(report.kept, 10);

        let mut graphs: Vec<VectorizedGraph> =
            (0..5).map(|i| stub_graph(i, 0, 10)).collect();
        graphs.push(stub_graph(99, 1, 700));
        let (_, report) = pack_batches(graphs, 100, 699, 0, true).unwrap();
        assert_eq!(report.excluded, 1);
        assert_eq!(report.excluded_ids, vec!["g99".to_string()]);

        let oversized = vec![stub_graph(0, 0, 700)];
        assert!(matches!(
            pack_batches(oversized, 100, 699, 0, true),
            Err(VectorizeError::AllOversized { excluded: 1 })
        ));

        let too_big_for_budget = vec![stub_graph(0, 0, 200)];
        assert!(matches!(
            pack_batches(too_big_for_budget, 100, 699, 0, true),
            Err(VectorizeError::BudgetTooSmall { .. })
        ));
    }

    #[test]
    fn packer_partitions_and_preserves_class_ratio() {
        let graphs: Vec<VectorizedGraph> = (0..1000)
            .map(|i| stub_graph(i, u8::from(i % 4 == 0), 10))
            .collect();
        let (batches, report) = pack_batches(graphs, 1000, 699, 7, true).unwrap();
        assert!(report.batches >= 9, "expected ~10 batches, got {}", report.batches);

        let mut seen: Vec<String> = batches
            .iter()
            .flat_map(|b| b.graphs.iter().map(|g| g.sample_id.clone()))
            .collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 1000, "every kept graph appears exactly once");

        for (i, b) in batches.iter().enumerate() {
            let full = b.total_nodes + 10 > 1000; // next graph would not fit
            if !full {
                continue;
            }
            let pos = b.graphs.iter().filter(|g| g.label == 1).count() as f64;
            let frac = pos / b.graphs.len() as f64;
            assert!(
                (0.20..=0.30).contains(&frac),
                "batch {i} positive fraction {frac:.3} outside [0.20, 0.30]"
            );
        }
    }

    #[test]
    fn packer_is_deterministic() {
        let make = || -> Vec<VectorizedGraph> {
            (0..50).map(|i| stub_graph(i, (i % 3 == 0) as u8, 5 + i % 7)).collect()
        };
        let (a, _) = pack_batches(make(), 40, 699, 3, true).unwrap();
        let (b, _) = pack_batches(make(), 40, 699, 3, true).unwrap();
        let ids = |bs: &[Batch]| -> Vec<Vec<String>> {
            bs.iter()
                .map(|b| b.graphs.iter().map(|g| g.sample_id.clone()).collect())
                .collect()
        };
        assert_eq!(ids(&a), ids(&b));
    }
}
