use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rescale::{check_pair, rescale, ParamFamily};
use super::svd::svd;
use crate::error::{ensure, Result};
use crate::matrix::Matrix;
use crate::nn::LayerNormParams;
use crate::scalar::{lit, Scalar};

/// Per-layer parameter shifts stacked as rows (`layers × width`).
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftMatrix<T> {
    pub data: Matrix<T>,
    pub which: ParamFamily,
}

impl<T: Scalar> ShiftMatrix<T> {
    /// `tuned − source` for the chosen family. All layers must share a width.
    pub fn between(
        source: &[LayerNormParams<T>],
        tuned: &[LayerNormParams<T>],
        which: ParamFamily,
    ) -> Result<Self> {
        check_pair(source, tuned)?;
        ensure!(!source.is_empty(), "need at least one LayerNorm layer");
        let width = source[0].width();
        ensure!(
            source.iter().all(|l| l.width() == width),
            "stacking shifts requires equal layer widths"
        );
        let rows: Vec<Vec<T>> = source
            .iter()
            .zip(tuned)
            .map(|(s, t)| {
                which
                    .get(t)
                    .iter()
                    .zip(which.get(s))
                    .map(|(&a, &b)| a - b)
                    .collect()
            })
            .collect();
        Ok(Self {
            data: Matrix::from_rows(&rows)?,
            which,
        })
    }
}

/// Which singular triplets survive truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvdMode {
    /// Largest `k`.
    First,
    /// Smallest `k`.
    Last,
    /// `k` consecutive values centred on index `floor(r/2)` of the descending spectrum.
    Middle,
}

/// Indices of the retained singular values out of `r`.
pub fn svd_keep_range(mode: SvdMode, r: usize, k: usize) -> std::ops::Range<usize> {
    match mode {
        SvdMode::First => 0..k,
        SvdMode::Last => r - k..r,
        SvdMode::Middle => {
            let start = (r / 2).saturating_sub(k / 2).min(r - k);
            start..start + k
        }
    }
}

/// Keep `k` singular components of the shift and reconstruct.
pub fn svd_truncate_shift<T: Scalar>(shift: &ShiftMatrix<T>, mode: SvdMode, k: usize) -> Result<ShiftMatrix<T>> {
    let r = shift.data.rows().min(shift.data.cols());
    ensure!(k >= 1 && k <= r, "k = {k} outside [1, {r}]");
    let d = svd(&shift.data);
    Ok(ShiftMatrix {
        data: d.reconstruct(svd_keep_range(mode, r, k)),
        which: shift.which,
    })
}

/// Zero exactly `round(drop_ratio × entries)` seeded-random entries.
pub fn random_drop_shift<T: Scalar>(shift: &ShiftMatrix<T>, drop_ratio: f64, seed: u64) -> Result<ShiftMatrix<T>> {
    ensure!(
        (0.0..=1.0).contains(&drop_ratio),
        "drop ratio must lie in [0, 1], got {drop_ratio}"
    );
    let total = shift.data.as_slice().len();
    let count = ((drop_ratio * total as f64).round() as usize).min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = shift.data.clone();
    for i in sample(&mut rng, total, count).into_iter() {
        data.as_mut_slice()[i] = T::zero();
    }
    Ok(ShiftMatrix {
        data,
        which: shift.which,
    })
}

/// Rebuild parameters as `source + shift` for the shift's family.
pub fn apply_shift<T: Scalar>(source: &[LayerNormParams<T>], shift: &ShiftMatrix<T>) -> Result<Vec<LayerNormParams<T>>> {
    ensure!(
        shift.data.rows() == source.len(),
        "shift has {} rows for {} layers",
        shift.data.rows(),
        source.len()
    );
    source
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            layer.validate()?;
            ensure!(
                layer.width() == shift.data.cols(),
                "layer {i} width {} != shift width {}",
                layer.width(),
                shift.data.cols()
            );
            let mut out = layer.clone();
            for (p, &d) in shift.which.get_mut(&mut out).iter_mut().zip(shift.data.row(i)) {
                *p += d;
            }
            Ok(out)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SurgeryKind {
    LambdaGamma,
    LambdaBeta,
    SvdFirst,
    SvdLast,
    SvdMiddle,
    RandomDropGamma,
    RandomDropBeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurgeryTarget {
    Gamma,
    Beta,
    Both,
}

/// One post-hoc edit of the LayerNorm shifts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgerySpec {
    pub kind: SurgeryKind,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "one_usize")]
    pub k: usize,
    #[serde(default = "both")]
    pub target: SurgeryTarget,
    #[serde(default)]
    pub drop_ratio: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn both() -> SurgeryTarget {
    SurgeryTarget::Both
}

impl SurgerySpec {
    pub fn lambda_gamma(lambda: f64) -> Self {
        Self {
            kind: SurgeryKind::LambdaGamma,
            lambda,
            k: 1,
            target: SurgeryTarget::Gamma,
            drop_ratio: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.lambda >= 0.0 && self.lambda.is_finite(),
            "lambda must be finite and non-negative"
        );
        ensure!(
            (0.0..=1.0).contains(&self.drop_ratio),
            "drop ratio must lie in [0, 1]"
        );
        ensure!(self.k >= 1, "k must be at least 1");
        Ok(())
    }
}

/// Apply a surgery to the tuned LayerNorm parameters.
pub fn apply_surgery<T: Scalar>(
    source: &[LayerNormParams<T>],
    tuned: &[LayerNormParams<T>],
    spec: &SurgerySpec,
) -> Result<Vec<LayerNormParams<T>>> {
    spec.validate()?;
    check_pair(source, tuned)?;
    let families: &[ParamFamily] = match spec.target {
        SurgeryTarget::Gamma => &[ParamFamily::Gamma],
        SurgeryTarget::Beta => &[ParamFamily::Beta],
        SurgeryTarget::Both => &[ParamFamily::Gamma, ParamFamily::Beta],
    };
    let edit = |f: &dyn Fn(&ShiftMatrix<T>) -> Result<ShiftMatrix<T>>, families: &[ParamFamily]| {
        let mut out = tuned.to_vec();
        for &family in families {
            let shift = f(&ShiftMatrix::between(source, tuned, family)?)?;
            let rebuilt = apply_shift(source, &shift)?;
            for (o, r) in out.iter_mut().zip(rebuilt) {
                *family.get_mut(o) = family.get(&r).clone();
            }
        }
        Ok(out)
    };
    match spec.kind {
        SurgeryKind::LambdaGamma => rescale(source, tuned, lit(spec.lambda), ParamFamily::Gamma),
        SurgeryKind::LambdaBeta => rescale(source, tuned, lit(spec.lambda), ParamFamily::Beta),
        SurgeryKind::SvdFirst => edit(&|s| svd_truncate_shift(s, SvdMode::First, spec.k), families),
        SurgeryKind::SvdLast => edit(&|s| svd_truncate_shift(s, SvdMode::Last, spec.k), families),
        SurgeryKind::SvdMiddle => edit(&|s| svd_truncate_shift(s, SvdMode::Middle, spec.k), families),
        SurgeryKind::RandomDropGamma => edit(
            &|s| random_drop_shift(s, spec.drop_ratio, spec.seed),
            &[ParamFamily::Gamma],
        ),
        SurgeryKind::RandomDropBeta => edit(
            &|s| random_drop_shift(s, spec.drop_ratio, spec.seed),
            &[ParamFamily::Beta],
        ),
    }
}
