//! Side studies on a strongly shifted sub-grid: strategy comparison and
//! γ-versus-β rescaling sensitivity.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CaseCoords, GridConfig};
use super::grid::{case_pair, SourceBundle};
use super::stats::{mean, std_dev};
use crate::error::{ensure, Result};
use crate::surgery::{sweep_family, ParamFamily};
use crate::tuning::{finetune, Strategy, StrategyKind};

/// Cases with the given class count and fraction whose shift scales are both at least `min_shift`.
pub fn shifted_subgrid(cfg: &GridConfig, classes: usize, min_shift: f64, fraction: f64) -> Vec<(usize, CaseCoords)> {
    cfg.cases()
        .into_iter()
        .enumerate()
        .filter(|(_, c)| {
            c.classes == classes && c.fraction == fraction && c.mean_shift >= min_shift && c.var_shift >= min_shift
        })
        .collect()
}

fn build_bundles(cases: &[(usize, CaseCoords)], cfg: &GridConfig) -> Result<BTreeMap<usize, SourceBundle>> {
    let mut classes: Vec<usize> = cases.iter().map(|(_, c)| c.classes).collect();
    classes.sort_unstable();
    classes.dedup();
    classes
        .into_iter()
        .map(|k| Ok((k, SourceBundle::build(k, cfg)?)))
        .collect()
}

/// Mean target-test accuracy per strategy, averaged over cases and training seeds.
pub fn compare_strategies(
    cfg: &GridConfig,
    cases: &[(usize, CaseCoords)],
    strategies: &[Strategy],
    train_seeds: &[u64],
) -> Result<BTreeMap<StrategyKind, f64>> {
    ensure!(!cases.is_empty(), "no cases to compare on");
    ensure!(!train_seeds.is_empty(), "need at least one training seed");
    let mut per_strategy: BTreeMap<StrategyKind, Vec<f64>> = BTreeMap::new();
    for &seed in train_seeds {
        let seeded = GridConfig {
            train_seed: seed,
            ..cfg.clone()
        };
        let bundles = build_bundles(cases, &seeded)?;
        let rows = cases
            .par_iter()
            .map(|(index, coords)| {
                let bundle = &bundles[&coords.classes];
                let pair = case_pair(&bundle.data, *index, coords, &seeded)?;
                let ft = crate::nn::TrainConfig {
                    seed,
                    ..seeded.finetune.clone()
                };
                strategies
                    .iter()
                    .map(|s| {
                        let out = finetune(&bundle.model, &pair, s, &ft)?;
                        Ok((s.kind, out.test_accuracy))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        for (kind, acc) in rows.into_iter().flatten() {
            per_strategy.entry(kind).or_default().push(acc);
        }
    }
    Ok(per_strategy.into_iter().map(|(k, v)| (k, mean(&v))).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    /// Per-case standard deviation of accuracy across the λ grid, rescaling γ.
    pub gamma_std: Vec<f64>,
    /// The same with β rescaled instead.
    pub beta_std: Vec<f64>,
}

impl Sensitivity {
    pub fn mean_gamma_std(&self) -> f64 {
        mean(&self.gamma_std)
    }

    pub fn mean_beta_std(&self) -> f64 {
        mean(&self.beta_std)
    }
}

/// Fine-tune each case with the configured strategy and sweep both parameter families on target_test.
pub fn rescale_sensitivity(cfg: &GridConfig, cases: &[(usize, CaseCoords)]) -> Result<Sensitivity> {
    ensure!(!cases.is_empty(), "no cases to sweep");
    let bundles = build_bundles(cases, cfg)?;
    let ft = crate::nn::TrainConfig {
        seed: cfg.train_seed,
        ..cfg.finetune.clone()
    };
    let stds = cases
        .par_iter()
        .map(|(index, coords)| {
            let bundle = &bundles[&coords.classes];
            let pair = case_pair(&bundle.data, *index, coords, cfg)?;
            let out = finetune(&bundle.model, &pair, &cfg.strategy, &ft)?;
            let (x, y) = (&pair.target_test.x, &pair.target_test.y);
            let g = sweep_family(&out.source, &out.tuned, x, y, &cfg.lambda_grid, ParamFamily::Gamma)?;
            let b = sweep_family(&out.source, &out.tuned, x, y, &cfg.lambda_grid, ParamFamily::Beta)?;
            Ok((std_dev(&g.accuracies), std_dev(&b.accuracies)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (gamma_std, beta_std) = stds.into_iter().unzip();
    Ok(Sensitivity { gamma_std, beta_std })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subgrid_filter() {
        let cfg = GridConfig::default();
        let sub = shifted_subgrid(&cfg, 4, 1.0, 0.1);
        assert_eq!(sub.len(), 36);
        for (i, c) in &sub {
            assert_eq!(cfg.case_index(c).unwrap(), *i);
            assert!(c.mean_shift >= 1.0 && c.var_shift >= 1.0);
        }
    }
}
