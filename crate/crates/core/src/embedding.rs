//! Word vectors: windowed co-occurrence counting, GloVe-style weighted
//! least-squares training with AdaGrad, the plain-text vector format and
//! cosine similarity.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("no tokens to count")]
    EmptyInput,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cell ({i}, {j}) holds non-positive or non-finite value {value}")]
    NonPositiveCell { i: usize, j: usize, value: f64 },
    #[error("cell ({i}, {j}) has no symmetric counterpart")]
    Asymmetric { i: usize, j: usize },
    #[error("cell index ({i}, {j}) outside vocabulary of {size}")]
    IndexOutOfBounds { i: usize, j: usize, size: usize },
    #[error("training diverged at epoch {epoch}")]
    DivergenceDetected { epoch: usize },
    #[error("line {line}: expected {expected} components, found {found}")]
    InconsistentDimensions { line: usize, expected: usize, found: usize },
    #[error("line {line}: malformed row: {message}")]
    MalformedRow { line: usize, message: String },
    #[error("vector dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    Uniform,
    #[default]
    InverseDistance,
}

impl std::str::FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Weighting::Uniform),
            "inverse-distance" => Ok(Weighting::InverseDistance),
            _ => Err(format!("unknown weighting `{s}`")),
        }
    }
}

/// Symmetric sparse co-occurrence counts over a sorted vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceMatrix {
    vocab: Vec<String>,
    cells: BTreeMap<(usize, usize), f64>,
    window: usize,
    weighting: Weighting,
}

impl CooccurrenceMatrix {
    /// Builds a matrix from explicit cells. Indices must be in range and
    /// every off-diagonal cell must have an equal mirror.
    pub fn from_cells(
        vocab: Vec<String>,
        cells: BTreeMap<(usize, usize), f64>,
        window: usize,
        weighting: Weighting,
    ) -> Result<Self, EmbeddingError> {
        let size = vocab.len();
        for (&(i, j), &x) in &cells {
            if i >= size || j >= size {
                return Err(EmbeddingError::IndexOutOfBounds { i, j, size });
            }
            if cells.get(&(j, i)) != Some(&x) {
                return Err(EmbeddingError::Asymmetric { i, j });
            }
        }
        Ok(Self {
            vocab,
            cells,
            window,
            weighting,
        })
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cells.get(&(i, j)).copied().unwrap_or(0.0)
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.cells.iter().map(|(&(i, j), &x)| (i, j, x))
    }

    pub fn nnz(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.vocab.binary_search_by(|w| w.as_str().cmp(word)).ok()
    }

    /// Writes `i j x` triplets, one stored cell per line.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, j, x) in self.cells() {
            writeln!(out, "{i} {j} {x}")?;
        }
        Ok(())
    }
}

/// Counts pairs within `window` positions inside each stream. A pair at
/// distance `d` adds 1 (uniform) or 1/d (inverse distance) to both (i, j)
/// and (j, i), so the result is C + Cᵀ and a repeated word adds twice to its
/// diagonal cell. Windows never cross stream boundaries.
pub fn build_cooccurrence(
    streams: &[Vec<String>],
    window: usize,
    weighting: Weighting,
) -> Result<CooccurrenceMatrix, EmbeddingError> {
    if window == 0 {
        return Err(EmbeddingError::InvalidConfig("window must be at least 1".into()));
    }
    let vocab: Vec<String> = streams
        .iter()
        .flatten()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if vocab.is_empty() {
        return Err(EmbeddingError::EmptyInput);
    }
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();

    let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for stream in streams {
        let ids: Vec<usize> = stream.iter().map(|w| index[w.as_str()]).collect();
        for (pos, &center) in ids.iter().enumerate() {
            for (offset, &context) in ids[pos + 1..].iter().take(window).enumerate() {
                let distance = offset + 1;
                let w = match weighting {
                    Weighting::Uniform => 1.0,
                    Weighting::InverseDistance => 1.0 / distance as f64,
                };
                *cells.entry((center, context)).or_insert(0.0) += w;
                *cells.entry((context, center)).or_insert(0.0) += w;
            }
        }
    }
    Ok(CooccurrenceMatrix {
        vocab,
        cells,
        window,
        weighting,
    })
}

/// GloVe weighting f(x) = (x / x_max)^alpha, capped at 1.
pub fn glove_weight(x: f64, x_max: f64, alpha: f64) -> f64 {
    if x < x_max {
        (x / x_max).powf(alpha)
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GloveConfig {
    pub dim: usize,
    pub x_max: f64,
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// 1 trains sequentially and is bit-reproducible. More than one shard
    /// updates disjoint cell partitions on separate threads and merges them
    /// once per epoch; results then depend on the shard count.
    pub shards: usize,
}

impl Default for GloveConfig {
    fn default() -> Self {
        Self {
            dim: 50,
            x_max: 100.0,
            alpha: 0.75,
            learning_rate: 0.05,
            epochs: 50,
            seed: 42,
            shards: 1,
        }
    }
}

impl GloveConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let bad = |m: &str| Err(EmbeddingError::InvalidConfig(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(self.x_max > 0.0 && self.x_max.is_finite()) {
            return bad("x_max must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.shards == 0 {
            return bad("shards must be at least 1");
        }
        Ok(())
    }
}

/// Main and context vectors (row-major, `vocab_size × dim`) and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct GloveParams {
    pub dim: usize,
    pub x_max: f64,
    pub alpha: f64,
    pub main: Vec<f64>,
    pub context: Vec<f64>,
    pub bias_main: Vec<f64>,
    pub bias_context: Vec<f64>,
}

/// Partial derivatives of the cost, laid out like [`GloveParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GloveGradients {
    pub main: Vec<f64>,
    pub context: Vec<f64>,
    pub bias_main: Vec<f64>,
    pub bias_context: Vec<f64>,
}

impl GloveParams {
    pub fn zeros(vocab_size: usize, dim: usize, x_max: f64, alpha: f64) -> Self {
        Self {
            dim,
            x_max,
            alpha,
            main: vec![0.0; vocab_size * dim],
            context: vec![0.0; vocab_size * dim],
            bias_main: vec![0.0; vocab_size],
            bias_context: vec![0.0; vocab_size],
        }
    }

    /// Uniform initialization in [−0.5/d, 0.5/d] for every parameter.
    pub fn init(vocab_size: usize, config: &GloveConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let bound = 0.5 / config.dim as f64;
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-bound..=bound)).collect() };
        let main = draw(vocab_size * config.dim);
        let context = draw(vocab_size * config.dim);
        let bias_main = draw(vocab_size);
        let bias_context = draw(vocab_size);
        Self {
            dim: config.dim,
            x_max: config.x_max,
            alpha: config.alpha,
            main,
            context,
            bias_main,
            bias_context,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.bias_main.len()
    }

    pub fn main_row(&self, i: usize) -> &[f64] {
        &self.main[i * self.dim..(i + 1) * self.dim]
    }

    pub fn context_row(&self, j: usize) -> &[f64] {
        &self.context[j * self.dim..(j + 1) * self.dim]
    }

    fn residual(&self, i: usize, j: usize, x: f64) -> f64 {
        dot(self.main_row(i), self.context_row(j)) + self.bias_main[i] + self.bias_context[j] - x.ln()
    }

    fn is_finite(&self) -> bool {
        [&self.main, &self.context, &self.bias_main, &self.bias_context]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_cells(params: &GloveParams, matrix: &CooccurrenceMatrix) -> Result<(), EmbeddingError> {
    let size = params.vocab_size();
    for (i, j, x) in matrix.cells() {
        if i >= size || j >= size {
            return Err(EmbeddingError::IndexOutOfBounds { i, j, size });
        }
        if !(x > 0.0 && x.is_finite()) {
            return Err(EmbeddingError::NonPositiveCell { i, j, value: x });
        }
    }
    Ok(())
}

/// Weighted least-squares cost J = Σ f(X_ij)(w_i·w̃_j + b_i + b̃_j − ln X_ij)²
/// over stored cells.
pub fn glove_cost(params: &GloveParams, matrix: &CooccurrenceMatrix) -> Result<f64, EmbeddingError> {
    check_cells(params, matrix)?;
    Ok(matrix
        .cells()
        .map(|(i, j, x)| {
            let r = params.residual(i, j, x);
            glove_weight(x, params.x_max, params.alpha) * r * r
        })
        .sum())
}

/// The cost and its exact gradient with respect to every parameter.
pub fn glove_cost_and_grad(
    params: &GloveParams,
    matrix: &CooccurrenceMatrix,
) -> Result<(f64, GloveGradients), EmbeddingError> {
    check_cells(params, matrix)?;
    let d = params.dim;
    let n = params.vocab_size();
    let mut grad = GloveGradients {
        main: vec![0.0; n * d],
        context: vec![0.0; n * d],
        bias_main: vec![0.0; n],
        bias_context: vec![0.0; n],
    };
    let mut cost = 0.0;
    for (i, j, x) in matrix.cells() {
        let f = glove_weight(x, params.x_max, params.alpha);
        let r = params.residual(i, j, x);
        cost += f * r * r;
        let g = 2.0 * f * r;
        for k in 0..d {
            grad.main[i * d + k] += g * params.context[j * d + k];
            grad.context[j * d + k] += g * params.main[i * d + k];
        }
        grad.bias_main[i] += g;
        grad.bias_context[j] += g;
    }
    Ok((cost, grad))
}

/// AdaGrad state: running sums of squared gradients, starting at 1.
#[derive(Debug, Clone)]
struct AdaGrad {
    main: Vec<f64>,
    context: Vec<f64>,
    bias_main: Vec<f64>,
    bias_context: Vec<f64>,
}

impl AdaGrad {
    fn new(vocab_size: usize, dim: usize) -> Self {
        Self {
            main: vec![1.0; vocab_size * dim],
            context: vec![1.0; vocab_size * dim],
            bias_main: vec![1.0; vocab_size],
            bias_context: vec![1.0; vocab_size],
        }
    }
}

/// One stochastic pass over `cells`, updating the pair of rows touched by
/// each cell.
fn adagrad_pass(params: &mut GloveParams, state: &mut AdaGrad, cells: &[(usize, usize, f64)], lr: f64) {
    let d = params.dim;
    let mut grad_main = vec![0.0; d];
    let mut grad_context = vec![0.0; d];
    for &(i, j, x) in cells {
        let f = glove_weight(x, params.x_max, params.alpha);
        let g = 2.0 * f * params.residual(i, j, x);
        for k in 0..d {
            grad_main[k] = g * params.context[j * d + k];
            grad_context[k] = g * params.main[i * d + k];
        }
        for k in 0..d {
            let (a, b) = (i * d + k, j * d + k);
            params.main[a] -= lr * grad_main[k] / state.main[a].sqrt();
            params.context[b] -= lr * grad_context[k] / state.context[b].sqrt();
            state.main[a] += grad_main[k] * grad_main[k];
            state.context[b] += grad_context[k] * grad_context[k];
        }
        params.bias_main[i] -= lr * g / state.bias_main[i].sqrt();
        params.bias_context[j] -= lr * g / state.bias_context[j].sqrt();
        state.bias_main[i] += g * g;
        state.bias_context[j] += g * g;
    }
}

fn sharded_pass(params: &mut GloveParams, state: &mut AdaGrad, cells: &[(usize, usize, f64)], lr: f64, shards: usize) {
    let chunk = cells.len().div_ceil(shards).max(1);
    let results: Vec<(GloveParams, AdaGrad)> = std::thread::scope(|scope| {
        let handles: Vec<_> = cells
            .chunks(chunk)
            .map(|part| {
                let mut p = params.clone();
                let mut s = state.clone();
                scope.spawn(move || {
                    adagrad_pass(&mut p, &mut s, part, lr);
                    (p, s)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("shard panicked")).collect()
    });
    // Merge barrier: parameters move by the mean shard delta, AdaGrad sums
    // accumulate every shard's squared gradients.
    let count = results.len() as f64;
    fn merge(base: &mut [f64], parts: Vec<&[f64]>, scale: f64) {
        let original = base.to_vec();
        for part in parts {
            for (b, (p, o)) in base.iter_mut().zip(part.iter().zip(&original)) {
                *b += (p - o) * scale;
            }
        }
    }
    merge(
        &mut params.main,
        results.iter().map(|r| r.0.main.as_slice()).collect(),
        1.0 / count,
    );
    merge(
        &mut params.context,
        results.iter().map(|r| r.0.context.as_slice()).collect(),
        1.0 / count,
    );
    merge(
        &mut params.bias_main,
        results.iter().map(|r| r.0.bias_main.as_slice()).collect(),
        1.0 / count,
    );
    merge(
        &mut params.bias_context,
        results.iter().map(|r| r.0.bias_context.as_slice()).collect(),
        1.0 / count,
    );
    merge(
        &mut state.main,
        results.iter().map(|r| r.1.main.as_slice()).collect(),
        1.0,
    );
    merge(
        &mut state.context,
        results.iter().map(|r| r.1.context.as_slice()).collect(),
        1.0,
    );
    merge(
        &mut state.bias_main,
        results.iter().map(|r| r.1.bias_main.as_slice()).collect(),
        1.0,
    );
    merge(
        &mut state.bias_context,
        results.iter().map(|r| r.1.bias_context.as_slice()).collect(),
        1.0,
    );
}

#[derive(Debug, Clone)]
pub struct TrainedGlove {
    pub table: EmbeddingTable,
    pub params: GloveParams,
    /// Full cost after each epoch.
    pub costs: Vec<f64>,
}

/// Trains GloVe vectors; the vector for word i is w_i + w̃_i.
pub fn train_glove(matrix: &CooccurrenceMatrix, config: &GloveConfig) -> Result<TrainedGlove, EmbeddingError> {
    config.validate()?;
    if matrix.is_empty() {
        return Err(EmbeddingError::EmptyInput);
    }
    let n = matrix.vocab().len();
    let mut params = GloveParams::init(n, config);
    check_cells(&params, matrix)?;
    let mut state = AdaGrad::new(n, config.dim);
    let mut cells: Vec<(usize, usize, f64)> = matrix.cells().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut costs = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        cells.shuffle(&mut rng);
        if config.shards > 1 {
            sharded_pass(&mut params, &mut state, &cells, config.learning_rate, config.shards);
        } else {
            adagrad_pass(&mut params, &mut state, &cells, config.learning_rate);
        }
        let cost = glove_cost(&params, matrix)?;
        if !cost.is_finite() || !params.is_finite() {
            return Err(EmbeddingError::DivergenceDetected { epoch });
        }
        log::debug!("glove epoch {epoch}: cost {cost:.6}");
        costs.push(cost);
    }

    let d = config.dim;
    let mut table = EmbeddingTable::new(d);
    for (i, word) in matrix.vocab().iter().enumerate() {
        let v: Vec<f64> = (0..d)
            .map(|k| params.main[i * d + k] + params.context[i * d + k])
            .collect();
        table.insert(word, v)?;
    }
    Ok(TrainedGlove { table, params, costs })
}

/// Word → vector map with a fixed dimensionality, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    normalized: bool,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            words: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            normalized: false,
        }
    }

    /// Inserts or replaces a word's vector. Returns whether a previous
    /// vector was replaced.
    pub fn insert(&mut self, word: &str, vector: Vec<f64>) -> Result<bool, EmbeddingError> {
        if vector.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch(self.dim, vector.len()));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::InvalidConfig(format!(
                "non-finite component for `{word}`"
            )));
        }
        self.normalized = false;
        if let Some(&i) = self.index.get(word) {
            self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(&vector);
            return Ok(true);
        }
        self.index.insert(word.to_string(), self.words.len());
        self.words.push(word.to_string());
        self.data.extend(vector);
        Ok(false)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// Copy with every non-zero vector scaled to unit length.
    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        for row in out.data.chunks_mut(self.dim.max(1)) {
            let norm = dot(row, row).sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
        out.normalized = true;
        out
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, word) in self.words.iter().enumerate() {
            write!(out, "{word}")?;
            for x in &self.data[i * self.dim..(i + 1) * self.dim] {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        let io_err = |source| EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
        self.write_to(&mut file).map_err(io_err)?;
        file.flush().map_err(io_err)
    }
}

/// Parses the `word v1 ... vd` text format. Duplicate words keep the last
/// row and log a warning.
pub fn parse_vectors<R: BufRead>(reader: R) -> Result<EmbeddingTable, EmbeddingError> {
    let mut table: Option<EmbeddingTable> = None;
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|source| EmbeddingError::Io {
            path: format!("line {line_no}"),
            source,
        })?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let values = fields
            .map(|f| match f.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(EmbeddingError::MalformedRow {
                    line: line_no,
                    message: format!("`{f}` is not a finite number"),
                }),
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if values.is_empty() {
            return Err(EmbeddingError::MalformedRow {
                line: line_no,
                message: format!("`{word}` has no components"),
            });
        }
        let table = table.get_or_insert_with(|| EmbeddingTable::new(values.len()));
        if values.len() != table.dim() {
            return Err(EmbeddingError::InconsistentDimensions {
                line: line_no,
                expected: table.dim(),
                found: values.len(),
            });
        }
        if table.insert(word, values)? {
            log::warn!("duplicate vector for `{word}` on line {line_no}; keeping the last one");
        }
    }
    table.ok_or(EmbeddingError::EmptyInput)
}

pub fn load_vectors(path: &Path) -> Result<EmbeddingTable, EmbeddingError> {
    let file = std::fs::File::open(path).map_err(|source| EmbeddingError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_vectors(std::io::BufReader::new(file))
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, EmbeddingError> {
    if u.len() != v.len() {
        return Err(EmbeddingError::DimensionMismatch(u.len(), v.len()));
    }
    let (nu, nv) = (dot(u, u).sqrt(), dot(v, v).sqrt());
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}
