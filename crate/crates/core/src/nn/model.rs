//! Dense → ReLU → LayerNorm → (optional expansion) → dense classifier.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layernorm::{normalize_backward, normalize_into, LayerNormParams, NormCache};
use crate::error::{ensure, Result};
use crate::matrix::Matrix;
use crate::scalar::{lit, Scalar};

/// Hidden width used by the toy experiments.
pub const DEFAULT_HIDDEN: usize = 32;

/// Affine map `y = W x + b`, `W` stored as `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: vec![T::zero(); output],
        }
    }

    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero bias.
    pub fn uniform<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        let weight = Matrix::from_fn(output, input, |_, _| lit(rng.gen_range(-bound..=bound)));
        Self {
            weight,
            bias: vec![T::zero(); output],
        }
    }

    pub fn input_width(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_width(&self) -> usize {
        self.weight.rows()
    }

    #[inline]
    fn apply(&self, x: &[T], out: &mut [T]) {
        for (o, (w, &b)) in out
            .iter_mut()
            .zip(self.weight.iter_rows().zip(&self.bias))
        {
            *o = w.iter().zip(x).fold(b, |acc, (&wi, &xi)| acc + wi * xi);
        }
    }

    /// `out = W^T d`
    #[inline]
    fn apply_transposed(&self, d: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|v| *v = T::zero());
        for (w, &di) in self.weight.iter_rows().zip(d) {
            if di == T::zero() {
                continue;
            }
            for (o, &wi) in out.iter_mut().zip(w) {
                *o += wi * di;
            }
        }
    }

    /// Accumulate the outer product `d x^T` into the weight and `d` into the bias.
    #[inline]
    fn accumulate(&mut self, d: &[T], x: &[T]) {
        for (r, &di) in d.iter().enumerate() {
            self.bias[r] += di;
            if di == T::zero() {
                continue;
            }
            for (w, &xi) in self.weight.row_mut(r).iter_mut().zip(x) {
                *w += di * xi;
            }
        }
    }

    fn step(&mut self, grad: &Dense<T>, lr: T) {
        for (w, &g) in self
            .weight
            .as_mut_slice()
            .iter_mut()
            .zip(grad.weight.as_slice())
        {
            *w -= lr * g;
        }
        for (b, &g) in self.bias.iter_mut().zip(&grad.bias) {
            *b -= lr * g;
        }
    }

    fn is_finite(&self) -> bool {
        self.weight.is_finite() && self.bias.iter().all(|v| v.is_finite())
    }

    fn flatten(&self) -> Vec<T> {
        let mut v = self.weight.as_slice().to_vec();
        v.extend_from_slice(&self.bias);
        v
    }

    fn assign(&mut self, values: &[T]) {
        let n = self.weight.as_slice().len();
        self.weight.as_mut_slice().copy_from_slice(&values[..n]);
        self.bias.copy_from_slice(&values[n..]);
    }
}

/// Trainable parameter groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    Dense1,
    LnGamma,
    LnBeta,
    /// The predictor, including the expansion map when one is present.
    Dense2,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 4] = [
        ParamGroup::Dense1,
        ParamGroup::LnGamma,
        ParamGroup::LnBeta,
        ParamGroup::Dense2,
    ];
}

/// `true` marks a frozen group. Frozen groups never move during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FreezeMask {
    pub dense1: bool,
    pub ln_gamma: bool,
    pub ln_beta: bool,
    pub dense2: bool,
}

impl FreezeMask {
    /// Everything trainable.
    pub fn none() -> Self {
        Self::default()
    }

    pub fn all() -> Self {
        Self {
            dense1: true,
            ln_gamma: true,
            ln_beta: true,
            dense2: true,
        }
    }

    /// Freeze everything except the listed groups.
    pub fn train_only(groups: &[ParamGroup]) -> Self {
        let mut m = Self::all();
        for g in groups {
            match g {
                ParamGroup::Dense1 => m.dense1 = false,
                ParamGroup::LnGamma => m.ln_gamma = false,
                ParamGroup::LnBeta => m.ln_beta = false,
                ParamGroup::Dense2 => m.dense2 = false,
            }
        }
        m
    }

    pub fn is_frozen(&self, group: ParamGroup) -> bool {
        match group {
            ParamGroup::Dense1 => self.dense1,
            ParamGroup::LnGamma => self.ln_gamma,
            ParamGroup::LnBeta => self.ln_beta,
            ParamGroup::Dense2 => self.dense2,
        }
    }

    pub fn all_frozen(&self) -> bool {
        self.dense1 && self.ln_gamma && self.ln_beta && self.dense2
    }
}

/// The toy classifier. `dense2` is the predictor; `dense1` and `ln` form the body.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel<T> {
    pub dense1: Dense<T>,
    pub ln: LayerNormParams<T>,
    /// Width-doubling map inserted in front of the predictor.
    pub expand: Option<Dense<T>>,
    pub dense2: Dense<T>,
}

/// Gradients with the same layout as [`ToyModel`]; frozen groups stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub dense1: Dense<T>,
    pub ln_gamma: Vec<T>,
    pub ln_beta: Vec<T>,
    pub expand: Option<Dense<T>>,
    pub dense2: Dense<T>,
}

impl<T: Scalar> Gradients<T> {
    fn zeros_like(model: &ToyModel<T>) -> Self {
        Self {
            dense1: Dense::zeros(model.dense1.input_width(), model.dense1.output_width()),
            ln_gamma: vec![T::zero(); model.ln.width()],
            ln_beta: vec![T::zero(); model.ln.width()],
            expand: model
                .expand
                .as_ref()
                .map(|e| Dense::zeros(e.input_width(), e.output_width())),
            dense2: Dense::zeros(model.dense2.input_width(), model.dense2.output_width()),
        }
    }

    /// Flattened gradient for one group, in the order used by [`ToyModel::group_values`].
    pub fn group(&self, group: ParamGroup) -> Vec<T> {
        match group {
            ParamGroup::Dense1 => self.dense1.flatten(),
            ParamGroup::LnGamma => self.ln_gamma.clone(),
            ParamGroup::LnBeta => self.ln_beta.clone(),
            ParamGroup::Dense2 => {
                let mut v = self.expand.as_ref().map(Dense::flatten).unwrap_or_default();
                v.extend(self.dense2.flatten());
                v
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.dense1.is_finite()
            && self.dense2.is_finite()
            && self.expand.as_ref().is_none_or(Dense::is_finite)
            && self.ln_gamma.iter().chain(&self.ln_beta).all(|v| v.is_finite())
    }
}

/// Per-row scratch buffers for the head pass.
struct HeadScratch<T> {
    norm: NormCache<T>,
    ln_out: Vec<T>,
    expanded: Vec<T>,
    logits: Vec<T>,
    d_logits: Vec<T>,
    d_q: Vec<T>,
    d_ln: Vec<T>,
    d_norm: Vec<T>,
    d_hidden: Vec<T>,
}

impl<T: Scalar> ToyModel<T> {
    /// Seeded initialization with the given widths.
    pub fn init(input_dim: usize, hidden: usize, classes: usize, seed: u64) -> Result<Self> {
        ensure!(input_dim >= 1, "input width must be at least 1");
        ensure!(hidden >= 2, "hidden width must be at least 2");
        ensure!(classes >= 2, "need at least two classes");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dense1 = Dense::uniform(input_dim, hidden, &mut rng);
        let dense2 = Dense::uniform(hidden, classes, &mut rng);
        Ok(Self {
            dense1,
            ln: LayerNormParams::new(hidden),
            expand: None,
            dense2,
        })
    }

    pub fn from_parts(
        dense1: Dense<T>,
        ln: LayerNormParams<T>,
        expand: Option<Dense<T>>,
        dense2: Dense<T>,
    ) -> Result<Self> {
        let m = Self {
            dense1,
            ln,
            expand,
            dense2,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.ln.validate()?;
        ensure!(
            self.dense1.bias.len() == self.dense1.output_width(),
            "dense1 bias width mismatch"
        );
        ensure!(
            self.dense2.bias.len() == self.dense2.output_width(),
            "dense2 bias width mismatch"
        );
        ensure!(
            self.dense1.output_width() == self.ln.width(),
            "dense1 output width {} != LayerNorm width {}",
            self.dense1.output_width(),
            self.ln.width()
        );
        let predictor_in = match &self.expand {
            Some(e) => {
                ensure!(
                    e.input_width() == self.ln.width(),
                    "expansion input width {} != LayerNorm width {}",
                    e.input_width(),
                    self.ln.width()
                );
                ensure!(e.bias.len() == e.output_width(), "expansion bias width mismatch");
                e.output_width()
            }
            None => self.ln.width(),
        };
        ensure!(
            self.dense2.input_width() == predictor_in,
            "dense2 input width {} != {}",
            self.dense2.input_width(),
            predictor_in
        );
        ensure!(self.num_classes() >= 2, "need at least two classes");
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.dense1.input_width()
    }

    pub fn hidden_width(&self) -> usize {
        self.ln.width()
    }

    pub fn num_classes(&self) -> usize {
        self.dense2.output_width()
    }

    /// Insert a width-doubling linear map in front of the predictor.
    ///
    /// The map is `[I; R]` with small random `R`, and the predictor's new input
    /// columns start at zero, so the model computes the same function as before.
    pub fn expand_predictor(&mut self, seed: u64) -> Result<()> {
        ensure!(self.expand.is_none(), "predictor is already expanded");
        let h = self.hidden_width();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (h as f64).sqrt();
        let weight = Matrix::from_fn(2 * h, h, |i, j| {
            if i < h {
                if i == j {
                    T::one()
                } else {
                    T::zero()
                }
            } else {
                lit(rng.gen_range(-bound..=bound))
            }
        });
        let classes = self.num_classes();
        let old = &self.dense2.weight;
        let new_w = Matrix::from_fn(classes, 2 * h, |r, c| {
            if c < h {
                old.get(r, c)
            } else {
                T::zero()
            }
        });
        self.expand = Some(Dense {
            weight,
            bias: vec![T::zero(); 2 * h],
        });
        self.dense2.weight = new_w;
        Ok(())
    }

    fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        ensure!(
            x.cols() == self.input_width(),
            "input has {} columns but the model expects {}",
            x.cols(),
            self.input_width()
        );
        Ok(())
    }

    /// `relu(dense1(x))` for every row.
    pub(crate) fn hidden(&self, x: &Matrix<T>) -> Matrix<T> {
        let mut h = Matrix::zeros(x.rows(), self.hidden_width());
        for r in 0..x.rows() {
            let out = h.row_mut(r);
            self.dense1.apply(x.row(r), out);
            for v in out.iter_mut() {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
        h
    }

    fn scratch(&self) -> HeadScratch<T> {
        let h = self.hidden_width();
        let q = self.dense2.input_width();
        let c = self.num_classes();
        HeadScratch {
            norm: NormCache {
                normalized: vec![T::zero(); h],
                inv_std: T::one(),
            },
            ln_out: vec![T::zero(); h],
            expanded: vec![T::zero(); q],
            logits: vec![T::zero(); c],
            d_logits: vec![T::zero(); c],
            d_q: vec![T::zero(); q],
            d_ln: vec![T::zero(); h],
            d_norm: vec![T::zero(); h],
            d_hidden: vec![T::zero(); h],
        }
    }

    /// Forward from hidden activations to logits; results left in `s.logits`.
    #[inline]
    fn head_forward(&self, hidden: &[T], s: &mut HeadScratch<T>) {
        s.norm.inv_std = normalize_into(hidden, self.ln.eps, &mut s.norm.normalized);
        for (((o, &n), &g), &b) in s
            .ln_out
            .iter_mut()
            .zip(&s.norm.normalized)
            .zip(&self.ln.gamma)
            .zip(&self.ln.beta)
        {
            *o = n * g + b;
        }
        match &self.expand {
            Some(e) => {
                e.apply(&s.ln_out, &mut s.expanded);
                self.dense2.apply(&s.expanded, &mut s.logits);
            }
            None => self.dense2.apply(&s.ln_out, &mut s.logits),
        }
    }

    /// Logits for every row of `x`.
    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.validate()?;
        self.check_input(x)?;
        Ok(self.logits_from_hidden(&self.hidden(x)))
    }

    pub(crate) fn logits_from_hidden(&self, hidden: &Matrix<T>) -> Matrix<T> {
        let mut out = Matrix::zeros(hidden.rows(), self.num_classes());
        let mut s = self.scratch();
        for r in 0..hidden.rows() {
            self.head_forward(hidden.row(r), &mut s);
            out.row_mut(r).copy_from_slice(&s.logits);
        }
        out
    }

    /// Mean softmax cross-entropy and its gradients for every unfrozen group.
    pub fn loss_and_gradients(
        &self,
        x: &Matrix<T>,
        y: &[usize],
        mask: &FreezeMask,
    ) -> Result<(T, Gradients<T>)> {
        self.validate()?;
        self.check_input(x)?;
        check_labels(x.rows(), y, self.num_classes())?;
        let hidden = self.hidden(x);
        Ok(self.backprop(x, &hidden, y, mask))
    }

    /// Mean cross-entropy without gradients.
    pub fn loss(&self, x: &Matrix<T>, y: &[usize]) -> Result<T> {
        self.validate()?;
        self.check_input(x)?;
        check_labels(x.rows(), y, self.num_classes())?;
        Ok(self.loss_from_hidden(&self.hidden(x), y))
    }

    pub(crate) fn loss_from_hidden(&self, hidden: &Matrix<T>, y: &[usize]) -> T {
        let mut s = self.scratch();
        let mut total = T::zero();
        for (r, &label) in y.iter().enumerate() {
            self.head_forward(hidden.row(r), &mut s);
            total += cross_entropy(&s.logits, label, None);
        }
        total / T::from_usize(y.len()).unwrap()
    }

    /// Gradients given precomputed hidden activations. Shapes are assumed valid.
    pub(crate) fn backprop(
        &self,
        x: &Matrix<T>,
        hidden: &Matrix<T>,
        y: &[usize],
        mask: &FreezeMask,
    ) -> (T, Gradients<T>) {
        let mut grads = Gradients::zeros_like(self);
        let n = T::from_usize(y.len()).unwrap();
        let inv_n = T::one() / n;
        let mut s = self.scratch();
        let mut total = T::zero();

        let train_dense2 = !mask.dense2;
        let train_ln = !mask.ln_gamma || !mask.ln_beta;
        let train_dense1 = !mask.dense1;
        let need_d_ln = train_ln || train_dense1;

        for (r, &label) in y.iter().enumerate() {
            let h_row = hidden.row(r);
            self.head_forward(h_row, &mut s);
            total += cross_entropy(&s.logits, label, Some(&mut s.d_logits));
            for d in s.d_logits.iter_mut() {
                *d *= inv_n;
            }

            let q: &[T] = if self.expand.is_some() {
                &s.expanded
            } else {
                &s.ln_out
            };
            if train_dense2 {
                grads.dense2.accumulate(&s.d_logits, q);
            }
            if !(need_d_ln || (train_dense2 && self.expand.is_some())) {
                continue;
            }
            self.dense2.apply_transposed(&s.d_logits, &mut s.d_q);
            match (&self.expand, grads.expand.as_mut()) {
                (Some(e), Some(ge)) => {
                    if train_dense2 {
                        ge.accumulate(&s.d_q, &s.ln_out);
                    }
                    if need_d_ln {
                        e.apply_transposed(&s.d_q, &mut s.d_ln);
                    }
                }
                _ => s.d_ln.copy_from_slice(&s.d_q),
            }
            if !need_d_ln {
                continue;
            }
            if !mask.ln_gamma {
                for ((g, &d), &nv) in grads
                    .ln_gamma
                    .iter_mut()
                    .zip(&s.d_ln)
                    .zip(&s.norm.normalized)
                {
                    *g += d * nv;
                }
            }
            if !mask.ln_beta {
                for (g, &d) in grads.ln_beta.iter_mut().zip(&s.d_ln) {
                    *g += d;
                }
            }
            if train_dense1 {
                for ((dn, &d), &g) in s.d_norm.iter_mut().zip(&s.d_ln).zip(&self.ln.gamma) {
                    *dn = d * g;
                }
                normalize_backward(&s.norm, &s.d_norm, &mut s.d_hidden);
                for (d, &h) in s.d_hidden.iter_mut().zip(h_row) {
                    if h <= T::zero() {
                        *d = T::zero();
                    }
                }
                grads.dense1.accumulate(&s.d_hidden, x.row(r));
            }
        }
        (total / n, grads)
    }

    /// Gradient-descent step on the unfrozen groups.
    pub(crate) fn apply_step(&mut self, grads: &Gradients<T>, lr: T, mask: &FreezeMask) {
        if !mask.dense1 {
            self.dense1.step(&grads.dense1, lr);
        }
        if !mask.ln_gamma {
            for (p, &g) in self.ln.gamma.iter_mut().zip(&grads.ln_gamma) {
                *p -= lr * g;
            }
        }
        if !mask.ln_beta {
            for (p, &g) in self.ln.beta.iter_mut().zip(&grads.ln_beta) {
                *p -= lr * g;
            }
        }
        if !mask.dense2 {
            self.dense2.step(&grads.dense2, lr);
            if let (Some(e), Some(ge)) = (self.expand.as_mut(), grads.expand.as_ref()) {
                e.step(ge, lr);
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.dense1.is_finite()
            && self.dense2.is_finite()
            && self.expand.as_ref().is_none_or(Dense::is_finite)
            && self.ln.gamma.iter().chain(&self.ln.beta).all(|v| v.is_finite())
    }

    /// Flattened parameter values of one group (weights row-major, then bias).
    pub fn group_values(&self, group: ParamGroup) -> Vec<T> {
        match group {
            ParamGroup::Dense1 => self.dense1.flatten(),
            ParamGroup::LnGamma => self.ln.gamma.clone(),
            ParamGroup::LnBeta => self.ln.beta.clone(),
            ParamGroup::Dense2 => {
                let mut v = self.expand.as_ref().map(Dense::flatten).unwrap_or_default();
                v.extend(self.dense2.flatten());
                v
            }
        }
    }

    pub fn set_group_values(&mut self, group: ParamGroup, values: &[T]) -> Result<()> {
        let expected = self.group_values(group).len();
        ensure!(
            values.len() == expected,
            "group {group:?} has {expected} values, got {}",
            values.len()
        );
        match group {
            ParamGroup::Dense1 => self.dense1.assign(values),
            ParamGroup::LnGamma => self.ln.gamma.copy_from_slice(values),
            ParamGroup::LnBeta => self.ln.beta.copy_from_slice(values),
            ParamGroup::Dense2 => {
                let split = self
                    .expand
                    .as_ref()
                    .map_or(0, |e| e.weight.as_slice().len() + e.bias.len());
                if let Some(e) = self.expand.as_mut() {
                    e.assign(&values[..split]);
                }
                self.dense2.assign(&values[split..]);
            }
        }
        Ok(())
    }
}

pub(crate) fn check_labels(rows: usize, y: &[usize], classes: usize) -> Result<()> {
    ensure!(rows > 0, "dataset must be nonempty");
    ensure!(
        y.len() == rows,
        "{} labels for {rows} rows",
        y.len()
    );
    if let Some(bad) = y.iter().find(|&&l| l >= classes) {
        return Err(crate::error::Error::Contract(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    Ok(())
}

/// `-log softmax(logits)[label]`; optionally writes `softmax - onehot` into `grad`.
#[inline]
fn cross_entropy<T: Scalar>(logits: &[T], label: usize, grad: Option<&mut Vec<T>>) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let sum = logits.iter().map(|&v| (v - max).exp()).sum::<T>();
    let log_z = max + sum.ln();
    if let Some(g) = grad {
        for (gi, &v) in g.iter_mut().zip(logits) {
            *gi = (v - log_z).exp();
        }
        g[label] -= T::one();
    }
    log_z - logits[label]
}
