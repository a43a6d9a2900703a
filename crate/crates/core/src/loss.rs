//! Convex per-example losses, their gradients, and the Bregman divergences
//! used by the mirror-descent update.
//!
//! Every loss is reported on a unit scale: the raw value is divided by the
//! model's `scale` and clipped to `[0, 1]`. Gradients are those of the
//! divided (unclipped) loss, so they stay informative when a point sits above
//! the clipping ceiling.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Sparse feature vector with strictly increasing, zero-based indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVec {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVec {
    pub fn new(indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::Argument(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument("feature indices must be strictly increasing".into()));
        }
        Ok(Self { indices, values })
    }

    /// Every coordinate of `dense` becomes an explicit entry, zeros included.
    pub fn from_dense(dense: &[f64]) -> Self {
        Self {
            indices: (0..dense.len() as u32).collect(),
            values: dense.to_vec(),
        }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().zip(&self.values).map(|(&i, &v)| (i as usize, v))
    }

    /// Largest index plus one, i.e. the dense length needed to hold the vector.
    pub fn span(&self) -> usize {
        self.indices.last().map_or(0, |&i| i as usize + 1)
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Inner product with `w[offset..]`.
    fn dot_at(&self, w: &[f64], offset: usize) -> f64 {
        self.iter().map(|(i, v)| w[offset + i] * v).sum()
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        self.dot_at(w, 0)
    }

    fn axpy_at(&self, alpha: f64, out: &mut [f64], offset: usize) {
        for (i, v) in self.iter() {
            out[offset + i] += alpha * v;
        }
    }

    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

/// One labelled example. Features are shared so relabelling (class swaps)
/// never copies the feature payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Datapoint {
    pub features: Arc<SparseVec>,
    pub label: i64,
}

impl Datapoint {
    pub fn new(features: SparseVec, label: i64) -> Self {
        Self {
            features: Arc::new(features),
            label,
        }
    }

    pub fn with_label(&self, label: i64) -> Self {
        Self {
            features: Arc::clone(&self.features),
            label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularizer {
    /// `λ/2 · ‖x‖²`
    #[default]
    L2Squared,
    /// `λ · ‖x‖₁`, with the subgradient fixed to `sign(x)` and 0 at 0.
    L1,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossKind {
    /// `log(1 + exp(-y · xᵀξ))` with labels in `{-1, +1}`.
    BinaryLogistic,
    /// Softmax cross-entropy over a class-major stacked weight matrix.
    /// `classes` lists the raw labels in row order.
    Softmax { classes: Vec<i64> },
    /// `½‖x − ξ‖²`; the label is ignored.
    Quadratic,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::BinaryLogistic => "binary-logistic",
            LossKind::Softmax { .. } => "softmax-multiclass",
            LossKind::Quadratic => "quadratic-synthetic",
        }
    }

    fn rows(&self) -> usize {
        match self {
            LossKind::Softmax { classes } => classes.len(),
            _ => 1,
        }
    }
}

pub const DEFAULT_LOSS_SCALE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LossModel {
    pub kind: LossKind,
    pub lambda: f64,
    pub regularizer: Regularizer,
    /// Number of input features `p`; the model dimension is `rows · p`.
    pub features: usize,
    /// Declared Lipschitz bound on the gradient of the scaled loss.
    pub mu: f64,
    /// Divides the raw loss before clipping to `[0, 1]`.
    pub scale: f64,
}

impl LossModel {
    pub fn new(kind: LossKind, features: usize) -> Self {
        Self {
            kind,
            lambda: 0.0,
            regularizer: Regularizer::L2Squared,
            features,
            mu: f64::INFINITY,
            scale: DEFAULT_LOSS_SCALE,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_regularizer(mut self, regularizer: Regularizer) -> Self {
        self.regularizer = regularizer;
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn dimension(&self) -> usize {
        self.kind.rows() * self.features
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!("loss scale must be > 0, got {}", self.scale)));
        }
        if !(self.mu > 0.0) {
            return Err(Error::Config(format!("mu must be > 0, got {}", self.mu)));
        }
        if self.features == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        if let LossKind::Softmax { classes } = &self.kind {
            if classes.len() < 2 || classes.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(
                    "softmax needs at least two classes in increasing order".into(),
                ));
            }
        }
        Ok(())
    }

    fn check_inputs(&self, model: &[f64], point: &Datapoint) -> Result<()> {
        check_dim(self.dimension(), model.len())?;
        if point.features.span() > self.features {
            return Err(Error::DimensionMismatch {
                expected: self.features,
                actual: point.features.span(),
            });
        }
        Ok(())
    }

    fn class_row(&self, label: i64) -> Result<usize> {
        match &self.kind {
            LossKind::Softmax { classes } => classes
                .binary_search(&label)
                .map_err(|_| Error::Argument(format!("label {label} is not a declared class"))),
            _ => Ok(0),
        }
    }

    fn binary_sign(label: i64) -> Result<f64> {
        match label {
            1 => Ok(1.0),
            -1 => Ok(-1.0),
            other => Err(Error::Argument(format!(
                "binary logistic labels must be +1 or -1, got {other}"
            ))),
        }
    }

    fn regularizer_value(&self, model: &[f64]) -> f64 {
        if self.lambda == 0.0 {
            return 0.0;
        }
        match self.regularizer {
            Regularizer::L2Squared => 0.5 * self.lambda * model.iter().map(|v| v * v).sum::<f64>(),
            Regularizer::L1 => self.lambda * model.iter().map(|v| v.abs()).sum::<f64>(),
        }
    }

    fn add_regularizer_gradient(&self, model: &[f64], weight: f64, out: &mut [f64]) {
        if self.lambda == 0.0 {
            return;
        }
        let c = weight * self.lambda;
        match self.regularizer {
            Regularizer::L2Squared => {
                for (o, m) in out.iter_mut().zip(model) {
                    *o += c * m;
                }
            }
            Regularizer::L1 => {
                for (o, m) in out.iter_mut().zip(model) {
                    if *m > 0.0 {
                        *o += c;
                    } else if *m < 0.0 {
                        *o -= c;
                    }
                }
            }
        }
    }

    /// Unregularized raw loss of one point.
    fn data_term(&self, model: &[f64], point: &Datapoint) -> Result<f64> {
        let xi = &point.features;
        match &self.kind {
            LossKind::BinaryLogistic => {
                let y = Self::binary_sign(point.label)?;
                Ok(softplus(-y * xi.dot(model)))
            }
            LossKind::Softmax { classes } => {
                let p = self.features;
                let target = self.class_row(point.label)?;
                let scores: Vec<f64> = (0..classes.len()).map(|c| xi.dot_at(model, c * p)).collect();
                Ok(log_sum_exp(&scores) - scores[target])
            }
            LossKind::Quadratic => {
                let model_sq: f64 = model.iter().map(|v| v * v).sum();
                let d = model_sq - 2.0 * xi.dot(model) + xi.norm_sq();
                Ok(0.5 * d.max(0.0))
            }
        }
    }

    /// Adds `weight · ∇(data term)` into `out`.
    fn add_data_gradient(&self, model: &[f64], point: &Datapoint, weight: f64, out: &mut [f64]) -> Result<()> {
        let xi = &point.features;
        match &self.kind {
            LossKind::BinaryLogistic => {
                let y = Self::binary_sign(point.label)?;
                let coeff = -y * sigmoid(-y * xi.dot(model));
                xi.axpy_at(weight * coeff, out, 0);
            }
            LossKind::Softmax { classes } => {
                let p = self.features;
                let target = self.class_row(point.label)?;
                let scores: Vec<f64> = (0..classes.len()).map(|c| xi.dot_at(model, c * p)).collect();
                let lse = log_sum_exp(&scores);
                for (c, s) in scores.iter().enumerate() {
                    let mut coeff = (s - lse).exp();
                    if c == target {
                        coeff -= 1.0;
                    }
                    xi.axpy_at(weight * coeff, out, c * p);
                }
            }
            LossKind::Quadratic => {
                for (o, m) in out.iter_mut().zip(model) {
                    *o += weight * m;
                }
                xi.axpy_at(-weight, out, 0);
            }
        }
        Ok(())
    }

    /// Predicted label; `None` for the regression-style quadratic task.
    pub fn predict(&self, model: &[f64], point: &Datapoint) -> Option<i64> {
        let xi = &point.features;
        match &self.kind {
            LossKind::BinaryLogistic => Some(if xi.dot(model) >= 0.0 { 1 } else { -1 }),
            LossKind::Softmax { classes } => {
                let p = self.features;
                let mut best = 0;
                let mut best_score = f64::NEG_INFINITY;
                for c in 0..classes.len() {
                    let s = xi.dot_at(model, c * p);
                    if s > best_score {
                        best_score = s;
                        best = c;
                    }
                }
                Some(classes[best])
            }
            LossKind::Quadratic => None,
        }
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

/// A single loss evaluation on both scales.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub raw: f64,
    pub scaled: f64,
    pub clipped: bool,
}

pub fn loss_value(model: &[f64], point: &Datapoint, lm: &LossModel) -> Result<LossValue> {
    lm.check_inputs(model, point)?;
    let raw = lm.data_term(model, point)? + lm.regularizer_value(model);
    let divided = raw / lm.scale;
    let scaled = divided.clamp(0.0, 1.0);
    Ok(LossValue {
        raw,
        scaled,
        clipped: scaled != divided,
    })
}

/// Scaled loss `f(x; ξ) / B` clipped to `[0, 1]`.
pub fn loss(model: &[f64], point: &Datapoint, lm: &LossModel) -> Result<f64> {
    loss_value(model, point, lm).map(|v| v.scaled)
}

/// Gradient of the scaled loss `f(x; ξ) / B`.
pub fn gradient(model: &[f64], point: &Datapoint, lm: &LossModel) -> Result<Vec<f64>> {
    lm.check_inputs(model, point)?;
    let mut out = vec![0.0; model.len()];
    let w = 1.0 / lm.scale;
    lm.add_data_gradient(model, point, w, &mut out)?;
    lm.add_regularizer_gradient(model, w, &mut out);
    Ok(out)
}

/// Mean scaled loss over a local dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanLoss {
    pub value: f64,
    pub clip_events: usize,
}

pub fn mean_loss(model: &[f64], points: &[Datapoint], lm: &LossModel) -> Result<MeanLoss> {
    if points.is_empty() {
        return Err(Error::Config("cannot evaluate a loss on an empty dataset".into()));
    }
    check_dim(lm.dimension(), model.len())?;
    let reg = lm.regularizer_value(model);
    let mut total = 0.0;
    let mut clip_events = 0;
    for p in points {
        if p.features.span() > lm.features {
            return Err(Error::DimensionMismatch {
                expected: lm.features,
                actual: p.features.span(),
            });
        }
        let divided = (lm.data_term(model, p)? + reg) / lm.scale;
        let scaled = divided.clamp(0.0, 1.0);
        if scaled != divided {
            clip_events += 1;
        }
        total += scaled;
    }
    Ok(MeanLoss {
        value: total / points.len() as f64,
        clip_events,
    })
}

/// Mean of the unclipped scaled loss; the smooth objective the comparator
/// oracle minimizes.
pub fn mean_smooth_loss(model: &[f64], points: &[Datapoint], lm: &LossModel) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Config("cannot evaluate a loss on an empty dataset".into()));
    }
    check_dim(lm.dimension(), model.len())?;
    let mut total = 0.0;
    for p in points {
        total += lm.data_term(model, p)?;
    }
    Ok((total / points.len() as f64 + lm.regularizer_value(model)) / lm.scale)
}

/// Full-batch gradient of the mean scaled loss, summed in dataset order.
pub fn mean_gradient(model: &[f64], points: &[Datapoint], lm: &LossModel) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::Config("cannot take a gradient on an empty dataset".into()));
    }
    check_dim(lm.dimension(), model.len())?;
    let mut out = vec![0.0; model.len()];
    let w = 1.0 / (lm.scale * points.len() as f64);
    for p in points {
        if p.features.span() > lm.features {
            return Err(Error::DimensionMismatch {
                expected: lm.features,
                actual: p.features.span(),
            });
        }
        lm.add_data_gradient(model, p, w, &mut out)?;
    }
    lm.add_regularizer_gradient(model, 1.0 / lm.scale, &mut out);
    Ok(out)
}

/// Default Lipschitz bound for the scaled loss over models with `‖x‖ ≤ radius`:
/// (max feature norm × per-kind factor + λ·radius) / B.
pub fn estimate_mu<'a>(
    points: impl IntoIterator<Item = &'a Datapoint>,
    kind: &LossKind,
    lambda: f64,
    scale: f64,
    radius: f64,
) -> f64 {
    let max_norm = points
        .into_iter()
        .map(|p| p.features.norm_sq().sqrt())
        .fold(0.0, f64::max);
    let data = match kind {
        LossKind::BinaryLogistic => max_norm,
        LossKind::Softmax { .. } => std::f64::consts::SQRT_2 * max_norm,
        LossKind::Quadratic => radius + max_norm,
    };
    (data + lambda * radius) / scale
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Mirror map geometry for the FedOMD update.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BregmanDivergence {
    /// `φ(x) = ½‖x‖²`
    #[default]
    SquaredEuclidean,
    /// `φ(x) = ½ Σ wᵢ xᵢ²`; every weight must be at least 1 so φ stays
    /// 1-strongly convex.
    DiagonalMahalanobis { weights: Vec<f64> },
}

impl BregmanDivergence {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if let BregmanDivergence::DiagonalMahalanobis { weights } = self {
            check_dim(dim, weights.len())?;
            if let Some(w) = weights.iter().find(|w| !(**w >= 1.0 && w.is_finite())) {
                return Err(Error::Config(format!(
                    "diagonal Bregman weights must be finite and >= 1, got {w}"
                )));
            }
        }
        Ok(())
    }
}

/// `B_φ(y; x) = φ(y) − φ(x) − ⟨∇φ(x), y − x⟩`.
pub fn bregman(y: &[f64], x: &[f64], bd: &BregmanDivergence) -> Result<f64> {
    check_dim(x.len(), y.len())?;
    let value = match bd {
        BregmanDivergence::SquaredEuclidean => {
            0.5 * y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        }
        BregmanDivergence::DiagonalMahalanobis { weights } => {
            check_dim(x.len(), weights.len())?;
            0.5 * y
                .iter()
                .zip(x)
                .zip(weights)
                .map(|((a, b), w)| w * (a - b) * (a - b))
                .sum::<f64>()
        }
    };
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn point(dense: &[f64], label: i64) -> Datapoint {
        Datapoint::new(SparseVec::from_dense(dense), label)
    }

    #[test]
    fn sparse_vec_rejects_unsorted_indices() {
        assert!(SparseVec::new(vec![2, 1], vec![1.0, 1.0]).is_err());
        assert!(SparseVec::new(vec![1, 1], vec![1.0, 1.0]).is_err());
        assert!(SparseVec::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn logistic_at_origin_is_ln2() {
        let lm = LossModel::new(LossKind::BinaryLogistic, 3).with_scale(1.0);
        let v = loss(&[0.0; 3], &point(&[0.3, -2.0, 5.0], -1), &lm).unwrap();
        assert_relative_eq!(v, std::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn quadratic_at_target_is_zero() {
        let lm = LossModel::new(LossKind::Quadratic, 2);
        let a = [0.7, -1.3];
        assert_eq!(loss(&a, &point(&a, 0), &lm).unwrap(), 0.0);
    }

    #[test]
    fn regularized_logistic_scalar_value() {
        // ln(1 + e^-1) + 2e-4/2 · 1, evaluated with mpmath to 20 digits.
        let lm = LossModel::new(LossKind::BinaryLogistic, 2)
            .with_lambda(2e-4)
            .with_scale(1.0);
        let v = loss(&[1.0, 0.0], &point(&[1.0, 0.0], 1), &lm).unwrap();
        assert_relative_eq!(v, 0.313_361_687_518_222_83, epsilon = 1e-15);
    }

    #[test]
    fn logistic_gradient_at_origin() {
        let lm = LossModel::new(LossKind::BinaryLogistic, 2).with_scale(4.0);
        let g = gradient(&[0.0, 0.0], &point(&[2.0, -1.0], -1), &lm).unwrap();
        // -½ · y · ξ / B
        assert_relative_eq!(g[0], 0.5 * 2.0 / 4.0, epsilon = 1e-15);
        assert_relative_eq!(g[1], -0.5 / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn quadratic_gradient_is_offset_over_scale() {
        let lm = LossModel::new(LossKind::Quadratic, 2).with_scale(2.0);
        let g = gradient(&[1.0, 1.0], &point(&[0.0, 3.0], 0), &lm).unwrap();
        assert_eq!(g, vec![0.5, -1.0]);
    }

    #[test]
    fn loss_is_clipped_and_flagged() {
        let lm = LossModel::new(LossKind::Quadratic, 1).with_scale(1.0);
        let v = loss_value(&[10.0], &point(&[0.0], 0), &lm).unwrap();
        assert_eq!(v.raw, 50.0);
        assert_eq!(v.scaled, 1.0);
        assert!(v.clipped);
        let m = mean_loss(&[10.0], &[point(&[0.0], 0), point(&[10.0], 0)], &lm).unwrap();
        assert_eq!(m.clip_events, 1);
        assert_eq!(m.value, 0.5);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let lm = LossModel::new(LossKind::BinaryLogistic, 2);
        assert!(matches!(
            loss(&[0.0; 3], &point(&[1.0, 1.0], 1), &lm),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            loss(&[0.0; 2], &point(&[1.0, 1.0, 1.0], 1), &lm),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn bad_labels_are_rejected() {
        let lm = LossModel::new(LossKind::BinaryLogistic, 1);
        assert!(loss(&[0.0], &point(&[1.0], 2), &lm).is_err());
        let lm = LossModel::new(LossKind::Softmax { classes: vec![0, 1] }, 1);
        assert!(loss(&[0.0, 0.0], &point(&[1.0], 7), &lm).is_err());
    }

    #[test]
    fn l1_subgradient_is_zero_at_zero() {
        let lm = LossModel::new(LossKind::Quadratic, 3)
            .with_lambda(1.0)
            .with_regularizer(Regularizer::L1)
            .with_scale(1.0);
        let g = gradient(&[0.0, 2.0, -2.0], &point(&[0.0, 2.0, -2.0], 0), &lm).unwrap();
        assert_eq!(g, vec![0.0, 1.0, -1.0]);
    }

    #[test]
    fn softmax_predicts_highest_score() {
        let lm = LossModel::new(LossKind::Softmax { classes: vec![3, 5, 9] }, 2);
        let model = [0.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        assert_eq!(lm.predict(&model, &point(&[2.0, 1.0], 3)), Some(5));
        assert_eq!(lm.predict(&model, &point(&[1.0, 2.0], 3)), Some(9));
    }

    #[test]
    fn bregman_examples() {
        let sq = BregmanDivergence::SquaredEuclidean;
        assert_eq!(bregman(&[1.0, 0.0], &[0.0, 0.0], &sq).unwrap(), 0.5);
        assert_eq!(bregman(&[0.3, 0.4], &[0.3, 0.4], &sq).unwrap(), 0.0);
        let diag = BregmanDivergence::DiagonalMahalanobis { weights: vec![2.0, 3.0] };
        assert_eq!(bregman(&[1.0, 1.0], &[0.0, 0.0], &diag).unwrap(), 2.5);
        assert!(bregman(&[1.0], &[0.0, 0.0], &sq).is_err());
    }

    #[test]
    fn mahalanobis_weights_below_one_are_rejected() {
        let diag = BregmanDivergence::DiagonalMahalanobis { weights: vec![0.5, 3.0] };
        assert!(diag.validate(2).is_err());
        let diag = BregmanDivergence::DiagonalMahalanobis { weights: vec![1.0, 3.0] };
        assert!(diag.validate(2).is_ok());
        assert!(diag.validate(3).is_err());
    }
}
