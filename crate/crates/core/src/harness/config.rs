use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::metrics::DataShiftMetric;
use crate::nn::TrainConfig;
use crate::surgery::{default_lambda_grid, uniform_grid};
use crate::synthdata::{DEFAULT_DATA_SEED, DEFAULT_SAMPLES_PER_CLASS};
use crate::tuning::Strategy;

/// The experiment grid. JSON config files use these field names; every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub class_counts: Vec<usize>,
    pub mean_shift_scales: Vec<f64>,
    pub var_shift_scales: Vec<f64>,
    pub train_fractions: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub data_seed: u64,
    pub train_seed: u64,
    pub strategy: Strategy,
    pub samples_per_class: usize,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub shift_metric: DataShiftMetric,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            class_counts: vec![2, 4, 8],
            mean_shift_scales: uniform_grid(0.0, 2.0, 11),
            var_shift_scales: uniform_grid(0.0, 2.0, 11),
            train_fractions: vec![0.01, 0.05, 0.1, 0.3, 0.5],
            lambda_grid: default_lambda_grid(),
            data_seed: DEFAULT_DATA_SEED,
            train_seed: 42,
            strategy: Strategy::default(),
            samples_per_class: DEFAULT_SAMPLES_PER_CLASS,
            pretrain: TrainConfig::pretrain_default(),
            finetune: TrainConfig::finetune_default(),
            shift_metric: DataShiftMetric::Marginal,
        }
    }
}

/// Grid coordinates of one case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseCoords {
    pub classes: usize,
    pub mean_shift: f64,
    pub var_shift: f64,
    pub fraction: f64,
}

impl GridConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn total_cases(&self) -> usize {
        self.class_counts.len()
            * self.mean_shift_scales.len()
            * self.var_shift_scales.len()
            * self.train_fractions.len()
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            !self.class_counts.is_empty()
                && !self.mean_shift_scales.is_empty()
                && !self.var_shift_scales.is_empty()
                && !self.train_fractions.is_empty(),
            "every grid axis needs at least one value"
        );
        ensure!(
            self.class_counts.iter().all(|&c| c >= 2),
            "class counts must be at least 2"
        );
        ensure!(
            self.mean_shift_scales
                .iter()
                .chain(&self.var_shift_scales)
                .all(|&s| s >= 0.0 && s.is_finite()),
            "shift scales must be finite and non-negative"
        );
        ensure!(
            self.train_fractions.iter().all(|&f| f > 0.0 && f < 1.0),
            "train fractions must lie in (0, 1)"
        );
        ensure!(!self.lambda_grid.is_empty(), "lambda grid must be nonempty");
        ensure!(
            self.lambda_grid.iter().all(|&l| l >= 0.0 && l.is_finite()),
            "lambda values must be finite and non-negative"
        );
        ensure!(self.samples_per_class >= 1, "samples_per_class must be at least 1");
        self.pretrain.validate()?;
        self.finetune.validate()?;
        self.strategy.validate()?;
        Ok(())
    }

    /// All cases in canonical order: classes, then mean shift, variance shift, fraction.
    pub fn cases(&self) -> Vec<CaseCoords> {
        let mut out = Vec::with_capacity(self.total_cases());
        for &classes in &self.class_counts {
            for &mean_shift in &self.mean_shift_scales {
                for &var_shift in &self.var_shift_scales {
                    for &fraction in &self.train_fractions {
                        out.push(CaseCoords {
                            classes,
                            mean_shift,
                            var_shift,
                            fraction,
                        });
                    }
                }
            }
        }
        out
    }

    /// Position of `coords` in [`cases`](Self::cases).
    pub fn case_index(&self, coords: &CaseCoords) -> Result<usize> {
        let pos = |axis: &[f64], v: f64, name: &str| {
            axis.iter()
                .position(|&a| a == v)
                .ok_or_else(|| Error::Contract(format!("{name} {v} is not on the grid")))
        };
        let c = self
            .class_counts
            .iter()
            .position(|&c| c == coords.classes)
            .ok_or_else(|| Error::Contract(format!("class count {} is not on the grid", coords.classes)))?;
        let m = pos(&self.mean_shift_scales, coords.mean_shift, "mean shift")?;
        let v = pos(&self.var_shift_scales, coords.var_shift, "variance shift")?;
        let f = pos(&self.train_fractions, coords.fraction, "fraction")?;
        let (nm, nv, nf) = (
            self.mean_shift_scales.len(),
            self.var_shift_scales.len(),
            self.train_fractions.len(),
        );
        Ok(((c * nm + m) * nv + v) * nf + f)
    }
}

/// Derive an independent seed for case `index` (SplitMix64 finalizer).
pub fn case_seed(data_seed: u64, index: usize) -> u64 {
    let mut z = data_seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
