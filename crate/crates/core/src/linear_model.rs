//! K-class linear predictor, multiclass hinge loss, and the
//! full-information perceptron update.
//!
//! The model is a `K x d` weight matrix; class `r` scores an instance
//! `x` as the dot product of row `r` with `x` and the prediction is the
//! argmax, ties broken toward the lowest class index so that runs are
//! reproducible.

use crate::error::CoreError;

/// A 1-based class label in `[1, K]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(usize);

impl Label {
    /// Creates a label from its 1-based value. Panics on zero.
    pub fn new(value: usize) -> Self {
        assert!(value >= 1, "labels are 1-based");
        Label(value)
    }

    /// Creates a label from a 0-based row index.
    pub fn from_index(index: usize) -> Self {
        Label(index + 1)
    }

    /// The 1-based value.
    pub fn get(self) -> usize {
        self.0
    }

    /// The 0-based row index.
    pub fn index(self) -> usize {
        self.0 - 1
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A labeled instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: Label,
}

impl Example {
    pub fn new(features: Vec<f64>, label: Label) -> Self {
        Example { features, label }
    }

    /// Euclidean norm of the feature vector.
    pub fn norm(&self) -> f64 {
        self.features.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// The `K x d` linear model state, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    classes: usize,
    dims: usize,
    entries: Vec<f64>,
}

impl WeightMatrix {
    /// The all-zeros matrix, the initial state of every learner here.
    pub fn zeros(classes: usize, dims: usize) -> Self {
        assert!(classes >= 2, "need at least two classes");
        assert!(dims >= 1, "need at least one feature dimension");
        WeightMatrix {
            classes,
            dims,
            entries: vec![0.0; classes * dims],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Row `r` (0-based), the weight vector of class `r + 1`.
    pub fn row(&self, r: usize) -> &[f64] {
        &self.entries[r * self.dims..(r + 1) * self.dims]
    }

    pub fn entry(&self, r: usize, j: usize) -> f64 {
        self.entries[r * self.dims + j]
    }

    pub fn set_entry(&mut self, r: usize, j: usize, value: f64) {
        self.entries[r * self.dims + j] = value;
    }

    /// Per-class scores `w_r . x`.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>, CoreError> {
        if x.len() != self.dims {
            return Err(CoreError::DimensionMismatch {
                expected: self.dims,
                got: x.len(),
            });
        }
        Ok((0..self.classes)
            .map(|r| dot(self.row(r), x))
            .collect())
    }

    /// Argmax prediction; ties go to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> Result<Label, CoreError> {
        let scores = self.scores(x)?;
        let mut best = 0;
        for (r, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = r;
            }
        }
        Ok(Label::from_index(best))
    }

    /// Adds `coef * x` to row `r` in place.
    pub fn add_scaled_row(&mut self, r: usize, coef: f64, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dims);
        let row = &mut self.entries[r * self.dims..(r + 1) * self.dims];
        for (w, &v) in row.iter_mut().zip(x) {
            *w += coef * v;
        }
    }

    /// Adds an update matrix in place.
    pub fn add(&mut self, update: &UpdateMatrix) {
        debug_assert_eq!(update.classes, self.classes);
        debug_assert_eq!(update.dims, self.dims);
        for (w, &u) in self.entries.iter_mut().zip(&update.entries) {
            *w += u;
        }
    }

    /// Squared Frobenius norm.
    pub fn frobenius_sq(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum()
    }

    /// Frobenius inner product with another matrix of the same shape.
    pub fn inner(&self, other: &WeightMatrix) -> f64 {
        debug_assert_eq!(self.entries.len(), other.entries.len());
        dot(&self.entries, &other.entries)
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|v| v.is_finite())
    }

    /// FNV-1a digest over the raw bit patterns of all entries; two
    /// matrices have equal digests iff they are bitwise identical
    /// (up to hash collisions).
    pub fn bit_digest(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for v in &self.entries {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A `K x d` additive update (houses the perceptron, Banditron, and
/// robust bandit update matrices). At most two rows are nonzero and each
/// nonzero row is a scalar multiple of the instance vector.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateMatrix {
    classes: usize,
    dims: usize,
    entries: Vec<f64>,
}

impl UpdateMatrix {
    pub fn zeros(classes: usize, dims: usize) -> Self {
        UpdateMatrix {
            classes,
            dims,
            entries: vec![0.0; classes * dims],
        }
    }

    /// Builds the matrix whose row `r` is `coef(r) * x`.
    pub(crate) fn from_row_coefs(x: &[f64], coefs: &[f64]) -> Self {
        let dims = x.len();
        let classes = coefs.len();
        let mut entries = Vec::with_capacity(classes * dims);
        for &c in coefs {
            entries.extend(x.iter().map(|&v| v * c));
        }
        UpdateMatrix {
            classes,
            dims,
            entries,
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn entry(&self, r: usize, j: usize) -> f64 {
        self.entries[r * self.dims + j]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.entries[r * self.dims..(r + 1) * self.dims]
    }

    /// Squared Frobenius norm.
    pub fn frobenius_sq(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum()
    }

    /// Adds `weight * other` into this matrix.
    pub fn add_scaled(&mut self, weight: f64, other: &UpdateMatrix) {
        debug_assert_eq!(self.entries.len(), other.entries.len());
        for (a, &b) in self.entries.iter_mut().zip(&other.entries) {
            *a += weight * b;
        }
    }

    /// Entrywise maximum absolute difference to another matrix.
    pub fn max_abs_diff(&self, other: &UpdateMatrix) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Multiclass hinge loss: `max_{j != y} [1 - w_y.x + w_j.x]_+`.
pub fn hinge_loss(weights: &WeightMatrix, example: &Example) -> Result<f64, CoreError> {
    let scores = weights.scores(&example.features)?;
    let y = example.label.index();
    assert!(y < weights.classes(), "label out of range");
    let own = scores[y];
    let rival = scores
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != y)
        .map(|(_, &s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((1.0 - own + rival).max(0.0))
}

/// Full-information perceptron update: entry `(r, j)` is
/// `(I[y = r] - I[y_hat = r]) * x_j`. Adding it to the weights raises the
/// true class score and lowers the predicted class score.
pub fn perceptron_update(x: &[f64], y: Label, y_hat: Label, classes: usize) -> UpdateMatrix {
    let mut coefs = vec![0.0; classes];
    coefs[y.index()] += 1.0;
    coefs[y_hat.index()] -= 1.0;
    UpdateMatrix::from_row_coefs(x, coefs.as_slice())
}

/// Runs the full-information multiclass perceptron over a stream,
/// predicting, updating on every trial, and recording cumulative
/// mistakes.
pub fn run_perceptron<'a, I>(stream: I, classes: usize, dims: usize) -> crate::learners::RunOutcome
where
    I: IntoIterator<Item = &'a Example>,
{
    let mut weights = WeightMatrix::zeros(classes, dims);
    let mut metrics = crate::learners::RunMetrics::new();
    for example in stream {
        let predicted = weights
            .predict(&example.features)
            .expect("stream dimension mismatch");
        let mistake = predicted != example.label;
        // Full information: the predicted and greedy labels coincide.
        metrics.record(mistake, mistake);
        if mistake {
            weights.add_scaled_row(example.label.index(), 1.0, &example.features);
            weights.add_scaled_row(predicted.index(), -1.0, &example.features);
        }
    }
    crate::learners::RunOutcome { metrics, weights }
}
