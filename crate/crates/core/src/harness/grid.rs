use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{case_seed, CaseCoords, GridConfig};
use super::stats::{mean, spearman};
use crate::error::{Error, Result};
use crate::metrics::fsr_with;
use crate::metrics::FSR_EPSILON;
use crate::nn::ToyModel;
use crate::surgery::lambda_sweep;
use crate::synthdata::{make_source, DomainPair, DomainSpec, LabeledDataset, ShiftSpec};
use crate::tuning::{finetune, pretrain_on};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeClass {
    /// Some λ beats the untouched model.
    Improved,
    /// Accuracy is identical at every λ.
    Unchanged,
    /// Accuracy varies with λ but λ = 1 is already optimal.
    NotImproved,
    /// The untouched model scores zero.
    ZeroAccuracy,
    /// Training diverged or the case could not be built.
    Failed,
}

impl OutcomeClass {
    pub const ALL: [OutcomeClass; 5] = [
        OutcomeClass::Improved,
        OutcomeClass::Unchanged,
        OutcomeClass::NotImproved,
        OutcomeClass::ZeroAccuracy,
        OutcomeClass::Failed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OutcomeClass::Improved => "improved",
            OutcomeClass::Unchanged => "unchanged",
            OutcomeClass::NotImproved => "not-improved",
            OutcomeClass::ZeroAccuracy => "zero-accuracy",
            OutcomeClass::Failed => "failed",
        }
    }

    /// Classification of a completed sweep. Zero accuracy takes precedence.
    pub fn classify(baseline: f64, accuracies: &[f64], improvement: f64) -> Self {
        if baseline == 0.0 {
            OutcomeClass::ZeroAccuracy
        } else if accuracies.windows(2).all(|w| w[0] == w[1]) {
            OutcomeClass::Unchanged
        } else if improvement > 0.0 {
            OutcomeClass::Improved
        } else {
            OutcomeClass::NotImproved
        }
    }
}

impl fmt::Display for OutcomeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OutcomeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OutcomeClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown outcome class `{s}`")))
    }
}

/// Outcome of one grid cell. Numeric fields are NaN for failed cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub index: usize,
    pub coords: CaseCoords,
    pub fsr: f64,
    pub shift_train: f64,
    pub shift_full: f64,
    pub accuracy_at_lambda: Vec<f64>,
    pub baseline_accuracy: f64,
    pub best_lambda: f64,
    pub best_accuracy: f64,
    pub improvement: f64,
    pub outcome_class: OutcomeClass,
    pub ln_shift_total: f64,
    pub gamma_shift: f64,
    pub beta_shift: f64,
    pub error: Option<String>,
}

impl CaseResult {
    fn failed(index: usize, coords: CaseCoords, lambdas: usize, err: &Error) -> Self {
        Self {
            index,
            coords,
            fsr: f64::NAN,
            shift_train: f64::NAN,
            shift_full: f64::NAN,
            accuracy_at_lambda: vec![f64::NAN; lambdas],
            baseline_accuracy: f64::NAN,
            best_lambda: f64::NAN,
            best_accuracy: f64::NAN,
            improvement: f64::NAN,
            outcome_class: OutcomeClass::Failed,
            ln_shift_total: f64::NAN,
            gamma_shift: f64::NAN,
            beta_shift: f64::NAN,
            error: Some(err.to_string()),
        }
    }

    pub fn is_failed(&self) -> bool {
        self.outcome_class == OutcomeClass::Failed
    }
}

/// Source data and pretrained model shared by every case with the same class count.
#[derive(Debug, Clone)]
pub struct SourceBundle {
    pub data: LabeledDataset<f64>,
    pub model: ToyModel<f64>,
}

impl SourceBundle {
    pub fn build(classes: usize, cfg: &GridConfig) -> Result<Self> {
        let spec = DomainSpec::circle(classes, cfg.samples_per_class, cfg.data_seed);
        let data = make_source(&spec)?;
        let pretrain_cfg = crate::nn::TrainConfig {
            seed: cfg.train_seed,
            ..cfg.pretrain.clone()
        };
        let model = pretrain_on(&data, &pretrain_cfg)?;
        Ok(Self { data, model })
    }
}

/// Build the domain pair for a case: the shared source plus a target drawn
/// from the case's own seed.
pub fn case_pair(source: &LabeledDataset<f64>, index: usize, coords: &CaseCoords, cfg: &GridConfig) -> Result<DomainPair<f64>> {
    let seed = case_seed(cfg.data_seed, index);
    let domain = DomainSpec::circle(coords.classes, cfg.samples_per_class, seed);
    let shift = ShiftSpec::standard(coords.classes, coords.mean_shift, coords.var_shift);
    DomainPair::with_source(source.clone(), domain, shift, coords.fraction)
}

/// Run one grid cell from scratch (pretraining included).
pub fn run_case(coords: &CaseCoords, cfg: &GridConfig) -> Result<CaseResult> {
    cfg.validate()?;
    let index = cfg.case_index(coords)?;
    let bundle = SourceBundle::build(coords.classes, cfg);
    Ok(match bundle {
        Ok(b) => run_case_with(&b, index, coords, cfg),
        Err(e) => CaseResult::failed(index, *coords, cfg.lambda_grid.len(), &e),
    })
}

/// Run one grid cell against an already pretrained source.
pub fn run_case_with(bundle: &SourceBundle, index: usize, coords: &CaseCoords, cfg: &GridConfig) -> CaseResult {
    try_case(bundle, index, coords, cfg)
        .unwrap_or_else(|e| CaseResult::failed(index, *coords, cfg.lambda_grid.len(), &e))
}

fn try_case(bundle: &SourceBundle, index: usize, coords: &CaseCoords, cfg: &GridConfig) -> Result<CaseResult> {
    let pair = case_pair(&bundle.data, index, coords, cfg)?;
    let full = pair.target_full();
    let fsr = fsr_with(
        &pair.source.x,
        &pair.target_train.x,
        &full.x,
        FSR_EPSILON,
        cfg.shift_metric,
    )?;
    let finetune_cfg = crate::nn::TrainConfig {
        seed: cfg.train_seed,
        ..cfg.finetune.clone()
    };
    let outcome = finetune(&bundle.model, &pair, &cfg.strategy, &finetune_cfg)?;
    let sweep = lambda_sweep(
        &outcome.source,
        &outcome.tuned,
        &pair.target_test.x,
        &pair.target_test.y,
        &cfg.lambda_grid,
    )?;
    let baseline = sweep
        .accuracy_at(1.0)
        .ok_or_else(|| Error::Contract("lambda grid must contain 1".into()))?;
    let improvement = sweep.best_accuracy - baseline;
    let outcome_class = OutcomeClass::classify(baseline, &sweep.accuracies, improvement);
    Ok(CaseResult {
        index,
        coords: *coords,
        fsr: fsr.fsr,
        shift_train: fsr.shift_train,
        shift_full: fsr.shift_full,
        accuracy_at_lambda: sweep.accuracies,
        baseline_accuracy: baseline,
        best_lambda: sweep.best_lambda,
        best_accuracy: sweep.best_accuracy,
        improvement,
        outcome_class,
        ln_shift_total: outcome.ln_shift_report.total,
        gamma_shift: outcome.ln_shift_report.gamma_shift[0],
        beta_shift: outcome.ln_shift_report.beta_shift[0],
        error: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionStats {
    pub fraction: f64,
    pub cases: usize,
    /// Over completed cases.
    pub mean_fsr: Option<f64>,
    /// Over improved cases only.
    pub mean_best_lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub count: usize,
}

/// Aggregate statistics over a set of cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub overall_cases: usize,
    pub unchanged_cases: usize,
    pub improved_cases: usize,
    pub not_improved_cases: usize,
    pub zero_accuracy_cases: usize,
    pub failed_cases: usize,
    pub avg_improvement_of_improved: Option<f64>,
    /// Over improved cases only.
    pub spearman_fsr_vs_best_lambda: Option<f64>,
    /// Over every completed case.
    pub spearman_lnshift_vs_wasserstein: Option<f64>,
    pub per_fraction: Vec<FractionStats>,
    /// Best-λ counts of improved cases, 0.1-wide bins centred on the grid points.
    pub best_lambda_histogram: Vec<HistogramBin>,
}

fn finite_spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 3 {
        return None;
    }
    spearman(x, y).ok().filter(|r| r.is_finite())
}

impl SweepSummary {
    /// Deterministic fold over `results` in index order.
    pub fn from_results(results: &[CaseResult]) -> Self {
        let mut sorted: Vec<&CaseResult> = results.iter().collect();
        sorted.sort_by_key(|r| r.index);
        let count = |class| sorted.iter().filter(|r| r.outcome_class == class).count();
        let improved: Vec<&&CaseResult> = sorted
            .iter()
            .filter(|r| r.outcome_class == OutcomeClass::Improved)
            .collect();
        let completed: Vec<&&CaseResult> = sorted.iter().filter(|r| !r.is_failed()).collect();

        let avg_improvement_of_improved = (!improved.is_empty())
            .then(|| mean(&improved.iter().map(|r| r.improvement).collect::<Vec<_>>()));
        let spearman_fsr_vs_best_lambda = finite_spearman(
            &improved.iter().map(|r| r.fsr).collect::<Vec<_>>(),
            &improved.iter().map(|r| r.best_lambda).collect::<Vec<_>>(),
        );
        let with_shift: Vec<&&&CaseResult> = completed
            .iter()
            .filter(|r| r.ln_shift_total.is_finite() && r.shift_full.is_finite())
            .collect();
        let spearman_lnshift_vs_wasserstein = finite_spearman(
            &with_shift.iter().map(|r| r.ln_shift_total).collect::<Vec<_>>(),
            &with_shift.iter().map(|r| r.shift_full).collect::<Vec<_>>(),
        );

        let mut fractions: Vec<f64> = sorted.iter().map(|r| r.coords.fraction).collect();
        fractions.sort_by(|a, b| a.partial_cmp(b).unwrap());
        fractions.dedup();
        let per_fraction = fractions
            .into_iter()
            .map(|fraction| {
                let fsr: Vec<f64> = completed
                    .iter()
                    .filter(|r| r.coords.fraction == fraction)
                    .map(|r| r.fsr)
                    .collect();
                let lambdas: Vec<f64> = improved
                    .iter()
                    .filter(|r| r.coords.fraction == fraction)
                    .map(|r| r.best_lambda)
                    .collect();
                FractionStats {
                    fraction,
                    cases: fsr.len(),
                    mean_fsr: (!fsr.is_empty()).then(|| mean(&fsr)),
                    mean_best_lambda: (!lambdas.is_empty()).then(|| mean(&lambdas)),
                }
            })
            .collect();

        let mut bins: BTreeMap<i64, usize> = BTreeMap::new();
        for r in &improved {
            *bins.entry((r.best_lambda * 10.0).round() as i64).or_default() += 1;
        }
        let max_bin = bins.keys().copied().max().unwrap_or(20).max(20);
        let best_lambda_histogram = (0..=max_bin)
            .map(|b| HistogramBin {
                lambda_lo: (b as f64 - 0.5) / 10.0,
                lambda_hi: (b as f64 + 0.5) / 10.0,
                count: bins.get(&b).copied().unwrap_or(0),
            })
            .collect();

        Self {
            overall_cases: sorted.len(),
            unchanged_cases: count(OutcomeClass::Unchanged),
            improved_cases: count(OutcomeClass::Improved),
            not_improved_cases: count(OutcomeClass::NotImproved),
            zero_accuracy_cases: count(OutcomeClass::ZeroAccuracy),
            failed_cases: count(OutcomeClass::Failed),
            avg_improvement_of_improved,
            spearman_fsr_vs_best_lambda,
            spearman_lnshift_vs_wasserstein,
            per_fraction,
            best_lambda_histogram,
        }
    }
}

/// Run every case of the grid. `jobs = None` uses the global rayon pool.
pub fn run_grid(cfg: &GridConfig, jobs: Option<usize>) -> Result<(Vec<CaseResult>, SweepSummary)> {
    cfg.validate()?;
    let run = || -> Result<Vec<CaseResult>> {
        let bundles: Vec<(usize, std::result::Result<SourceBundle, String>)> = cfg
            .class_counts
            .par_iter()
            .map(|&c| (c, SourceBundle::build(c, cfg).map_err(|e| e.to_string())))
            .collect();
        let bundles: BTreeMap<usize, _> = bundles.into_iter().collect();
        let cases = cfg.cases();
        Ok(cases
            .par_iter()
            .enumerate()
            .map(|(index, coords)| match &bundles[&coords.classes] {
                Ok(b) => run_case_with(b, index, coords, cfg),
                Err(msg) => CaseResult::failed(
                    index,
                    *coords,
                    cfg.lambda_grid.len(),
                    &Error::Contract(format!("pretraining failed: {msg}")),
                ),
            })
            .collect())
    };
    let results = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Contract(format!("cannot build thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    let summary = SweepSummary::from_results(&results);
    Ok((results, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_rules() {
        assert_eq!(OutcomeClass::classify(0.0, &[0.0, 0.0], 0.0), OutcomeClass::ZeroAccuracy);
        assert_eq!(OutcomeClass::classify(0.0, &[0.0, 0.5], 0.5), OutcomeClass::ZeroAccuracy);
        assert_eq!(OutcomeClass::classify(0.5, &[0.5, 0.5], 0.0), OutcomeClass::Unchanged);
        assert_eq!(OutcomeClass::classify(0.5, &[0.6, 0.5], 0.1), OutcomeClass::Improved);
        assert_eq!(OutcomeClass::classify(0.5, &[0.4, 0.5], 0.0), OutcomeClass::NotImproved);
        for c in OutcomeClass::ALL {
            assert_eq!(c.name().parse::<OutcomeClass>().unwrap(), c);
        }
    }

    fn tiny_cfg() -> GridConfig {
        GridConfig {
            class_counts: vec![2],
            mean_shift_scales: vec![0.0, 2.0],
            var_shift_scales: vec![1.0],
            train_fractions: vec![0.1, 0.5],
            samples_per_class: 40,
            pretrain: crate::nn::TrainConfig::new(0.05, 60, 42),
            finetune: crate::nn::TrainConfig::new(0.05, 40, 42),
            ..GridConfig::default()
        }
    }

    #[test]
    fn single_case_matches_grid_cell() {
        let cfg = tiny_cfg();
        let (results, summary) = run_grid(&cfg, Some(2)).unwrap();
        assert_eq!(results.len(), 4);
        assert_eq!(summary.overall_cases, 4);
        let alone = run_case(&results[3].coords, &cfg).unwrap();
        assert_eq!(alone, results[3]);
        for r in &results {
            assert!(r.improvement >= 0.0);
            assert_eq!(r.accuracy_at_lambda.len(), 21);
        }
    }

    #[test]
    fn fraction_gives_one_row_per_class() {
        let cfg = GridConfig {
            train_fractions: vec![0.01],
            samples_per_class: 100,
            ..tiny_cfg()
        };
        let bundle = SourceBundle::build(2, &cfg).unwrap();
        let coords = cfg.cases()[0];
        let pair = case_pair(&bundle.data, 0, &coords, &cfg).unwrap();
        assert_eq!(pair.target_train.class_counts(), vec![1, 1]);
    }

    #[test]
    fn summary_counts_partition() {
        let mk = |index, class, fsr, lambda, imp| CaseResult {
            index,
            coords: CaseCoords {
                classes: 2,
                mean_shift: 0.0,
                var_shift: 0.0,
                fraction: if index % 2 == 0 { 0.1 } else { 0.5 },
            },
            fsr,
            shift_train: 1.0,
            shift_full: index as f64,
            accuracy_at_lambda: vec![0.5; 21],
            baseline_accuracy: 0.5,
            best_lambda: lambda,
            best_accuracy: 0.5 + imp,
            improvement: imp,
            outcome_class: class,
            ln_shift_total: index as f64 * 2.0,
            gamma_shift: 0.0,
            beta_shift: 0.0,
            error: None,
        };
        let results = vec![
            mk(0, OutcomeClass::Improved, 3.0, 0.2, 0.02),
            mk(1, OutcomeClass::Improved, 2.0, 0.9, 0.04),
            mk(2, OutcomeClass::Improved, 1.0, 1.5, 0.03),
            mk(3, OutcomeClass::Unchanged, 1.0, 1.0, 0.0),
            mk(4, OutcomeClass::ZeroAccuracy, 1.0, 1.0, 0.0),
        ];
        let s = SweepSummary::from_results(&results);
        assert_eq!(s.overall_cases, 5);
        assert_eq!(s.improved_cases + s.unchanged_cases + s.zero_accuracy_cases, 5);
        assert!((s.avg_improvement_of_improved.unwrap() - 0.03).abs() < 1e-15);
        assert_eq!(s.spearman_fsr_vs_best_lambda, Some(-1.0));
        assert_eq!(s.spearman_lnshift_vs_wasserstein, Some(1.0));
        assert_eq!(s.best_lambda_histogram.len(), 21);
        assert_eq!(s.best_lambda_histogram[2].count, 1);
        assert_eq!(s.best_lambda_histogram.iter().map(|b| b.count).sum::<usize>(), 3);
        assert_eq!(s.per_fraction.len(), 2);
        assert_eq!(s.per_fraction[0].cases, 3);
    }
}
