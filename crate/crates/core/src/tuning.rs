//! Fine-tuning strategies: LayerNorm-only, linear probing, LP+LN, full
//! fine-tuning and the alternating predictor/LayerNorm schedule.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::metrics::{ln_shift, LnShiftReport};
use crate::nn::{accuracy, train, train_with_history, FreezeMask, ParamGroup, ToyModel, TrainConfig, DEFAULT_HIDDEN};
use crate::scalar::Scalar;
use crate::synthdata::{make_source, DomainPair, DomainSpec, LabeledDataset};

/// Epochs per round of the alternating schedule.
pub const DEFAULT_SWITCH_EPOCHS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StrategyKind {
    /// Only LayerNorm γ and β move.
    LnOnly,
    /// Only the predictor moves.
    Lp,
    /// Predictor and LayerNorm jointly.
    LpLn,
    /// Every parameter.
    LpFm,
    /// Alternate predictor-only and LayerNorm-only rounds.
    Cyclic,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::LnOnly,
        StrategyKind::Lp,
        StrategyKind::LpLn,
        StrategyKind::LpFm,
        StrategyKind::Cyclic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::LnOnly => "LN_ONLY",
            StrategyKind::Lp => "LP",
            StrategyKind::LpLn => "LP_LN",
            StrategyKind::LpFm => "LP_FM",
            StrategyKind::Cyclic => "CYCLIC",
        }
    }

    /// Freeze mask for the single-stage strategies.
    pub fn mask(self) -> Option<FreezeMask> {
        use ParamGroup::*;
        match self {
            StrategyKind::LnOnly => Some(FreezeMask::train_only(&[LnGamma, LnBeta])),
            StrategyKind::Lp => Some(FreezeMask::train_only(&[Dense2])),
            StrategyKind::LpLn => Some(FreezeMask::train_only(&[Dense2, LnGamma, LnBeta])),
            StrategyKind::LpFm => Some(FreezeMask::none()),
            StrategyKind::Cyclic => None,
        }
    }

    pub fn freezes_ln(self) -> bool {
        matches!(self, StrategyKind::Lp)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace(['-', '+'], "_");
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == norm || (norm == "LN" && *k == StrategyKind::LnOnly))
            .ok_or_else(|| Error::Parse(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    #[serde(default = "default_switch")]
    pub switch_epochs: usize,
    /// `0` means "match the fine-tuning epoch budget".
    #[serde(default)]
    pub turns: usize,
    #[serde(default)]
    pub expand_predictor: bool,
}

fn default_switch() -> usize {
    DEFAULT_SWITCH_EPOCHS
}

impl Strategy {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            switch_epochs: DEFAULT_SWITCH_EPOCHS,
            turns: 0,
            expand_predictor: false,
        }
    }

    pub fn cyclic(switch_epochs: usize, turns: usize) -> Self {
        Self {
            kind: StrategyKind::Cyclic,
            switch_epochs,
            turns,
            expand_predictor: false,
        }
    }

    pub fn with_expansion(mut self) -> Self {
        self.expand_predictor = true;
        self
    }

    /// Turns actually run for a fine-tuning budget of `epochs`.
    pub fn effective_turns(&self, epochs: usize) -> usize {
        if self.turns > 0 {
            self.turns
        } else {
            (epochs / (2 * self.switch_epochs.max(1))).max(1)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == StrategyKind::Cyclic {
            ensure!(self.switch_epochs >= 1, "cyclic schedule needs switch_epochs >= 1");
        }
        Ok(())
    }
}

impl Default for Strategy {
    fn default() -> Self {
        Self::new(StrategyKind::LnOnly)
    }
}

/// Loss on the fine-tuning set at the start and end of one cyclic round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundLoss<T> {
    pub turn: usize,
    /// `Dense2` for predictor rounds, `LnGamma` for LayerNorm rounds.
    pub group: ParamGroup,
    pub start: T,
    pub end: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome<T> {
    pub tuned: ToyModel<T>,
    /// The model as it was before fine-tuning.
    pub source: ToyModel<T>,
    pub test_accuracy: f64,
    pub ln_shift_report: LnShiftReport<T>,
    /// Empty except for the cyclic strategy.
    pub round_losses: Vec<RoundLoss<T>>,
}

/// Train every group of a freshly initialized model on `source`.
pub fn pretrain_on<T: Scalar>(source: &LabeledDataset<T>, cfg: &TrainConfig) -> Result<ToyModel<T>> {
    cfg.validate()?;
    let model = ToyModel::init(source.x.cols(), DEFAULT_HIDDEN, source.num_classes, cfg.seed)?;
    train(&model, &source.x, &source.y, &FreezeMask::none(), cfg).map_err(|e| e.tagged("pretrain"))
}

/// Generate the source domain for `spec` and pretrain on it.
pub fn pretrain<T: Scalar>(spec: &DomainSpec, cfg: &TrainConfig) -> Result<ToyModel<T>> {
    cfg.validate()?;
    pretrain_on(&make_source(spec)?, cfg)
}

/// Fine-tune a copy of `source_model` on the pair's target training split.
pub fn finetune<T: Scalar>(
    source_model: &ToyModel<T>,
    pair: &DomainPair<T>,
    strategy: &Strategy,
    cfg: &TrainConfig,
) -> Result<TuneOutcome<T>> {
    cfg.validate()?;
    strategy.validate()?;
    source_model.validate()?;
    ensure!(
        source_model.input_width() == pair.source.x.cols(),
        "model input width {} != data width {}",
        source_model.input_width(),
        pair.source.x.cols()
    );
    ensure!(
        source_model.num_classes() == pair.source.num_classes,
        "model has {} classes, data has {}",
        source_model.num_classes(),
        pair.source.num_classes
    );
    let (x, y) = (&pair.target_train.x, &pair.target_train.y);
    let tag = strategy.kind.name();

    let mut model = source_model.clone();
    if strategy.expand_predictor {
        model.expand_predictor(cfg.seed.wrapping_add(0x5eed))?;
    }

    let mut round_losses = Vec::new();
    let tuned = match strategy.kind.mask() {
        Some(mask) => train(&model, x, y, &mask, cfg).map_err(|e| e.tagged(tag))?,
        None => {
            let rounds = [
                (ParamGroup::Dense2, FreezeMask::train_only(&[ParamGroup::Dense2])),
                (
                    ParamGroup::LnGamma,
                    FreezeMask::train_only(&[ParamGroup::LnGamma, ParamGroup::LnBeta]),
                ),
            ];
            let round_cfg = TrainConfig {
                epochs: strategy.switch_epochs,
                ..cfg.clone()
            };
            for turn in 0..strategy.effective_turns(cfg.epochs) {
                for (group, mask) in &rounds {
                    let (next, hist) = train_with_history(&model, x, y, mask, &round_cfg).map_err(|e| {
                        let round = if *group == ParamGroup::Dense2 { "predictor" } else { "layernorm" };
                        e.tagged(&format!("{tag} turn {turn} {round} round"))
                    })?;
                    round_losses.push(RoundLoss {
                        turn,
                        group: *group,
                        start: hist.losses[0],
                        end: hist.final_loss,
                    });
                    model = next;
                }
            }
            model
        }
    };

    let test_accuracy = if pair.target_test.is_empty() {
        f64::NAN
    } else {
        accuracy(&tuned, &pair.target_test.x, &pair.target_test.y)?
    };
    let ln_shift_report = ln_shift(
        std::slice::from_ref(&source_model.ln),
        std::slice::from_ref(&tuned.ln),
    )?;
    Ok(TuneOutcome {
        tuned,
        source: source_model.clone(),
        test_accuracy,
        ln_shift_report,
        round_losses,
    })
}

#[derive(Debug)]
pub struct SuiteOutcome<T> {
    pub source_model: ToyModel<T>,
    pub outcomes: BTreeMap<StrategyKind, Result<TuneOutcome<T>>>,
}

/// Pretrain once on the pair's source data, then run each strategy from that snapshot.
pub fn run_strategy_suite<T: Scalar>(
    pair: &DomainPair<T>,
    pretrain_cfg: &TrainConfig,
    finetune_cfg: &TrainConfig,
    strategies: &[Strategy],
) -> Result<SuiteOutcome<T>> {
    let source_model = pretrain_on(&pair.source, pretrain_cfg)?;
    let outcomes = strategies
        .iter()
        .map(|s| (s.kind, finetune(&source_model, pair, s, finetune_cfg)))
        .collect();
    Ok(SuiteOutcome {
        source_model,
        outcomes,
    })
}

/// One of each strategy with default settings.
pub fn default_strategies() -> Vec<Strategy> {
    StrategyKind::ALL.into_iter().map(Strategy::new).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::ShiftSpec;

    fn small_pair(shift: f64) -> DomainPair<f64> {
        DomainPair::generate(
            DomainSpec::circle(2, 40, 3),
            ShiftSpec::standard(2, shift, shift),
            0.25,
        )
        .unwrap()
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig::new(0.05, epochs, 42)
    }

    #[test]
    fn parse_names() {
        assert_eq!("ln_only".parse::<StrategyKind>().unwrap(), StrategyKind::LnOnly);
        assert_eq!("LP+LN".parse::<StrategyKind>().unwrap(), StrategyKind::LpLn);
        assert_eq!("lp-fm".parse::<StrategyKind>().unwrap(), StrategyKind::LpFm);
        assert_eq!("CYCLIC".parse::<StrategyKind>().unwrap(), StrategyKind::Cyclic);
        assert!("adam".parse::<StrategyKind>().is_err());
    }

    #[test]
    fn turns_match_budget() {
        let s = Strategy::new(StrategyKind::Cyclic);
        assert_eq!(s.effective_turns(200), 5);
        assert_eq!(s.effective_turns(10), 1);
        assert_eq!(Strategy::cyclic(20, 3).effective_turns(200), 3);
        assert!(Strategy::cyclic(0, 1).validate().is_err());
    }

    #[test]
    fn pretrain_rejects_zero_epochs() {
        assert!(pretrain::<f64>(&DomainSpec::circle(2, 10, 0), &cfg(0)).is_err());
    }

    #[test]
    fn freeze_discipline_per_strategy() {
        let pair = small_pair(1.0);
        let src = pretrain_on(&pair.source, &cfg(60)).unwrap();
        for kind in StrategyKind::ALL {
            let out = finetune(&src, &pair, &Strategy::new(kind), &cfg(40)).unwrap();
            assert_eq!(out.source, src);
            let t = &out.tuned;
            match kind {
                StrategyKind::LnOnly => {
                    assert_eq!(t.dense1, src.dense1);
                    assert_eq!(t.dense2, src.dense2);
                }
                StrategyKind::Lp => {
                    assert_eq!(t.dense1, src.dense1);
                    assert_eq!(t.ln, src.ln);
                    assert_eq!(out.ln_shift_report.total, 0.0);
                }
                StrategyKind::LpLn | StrategyKind::Cyclic => assert_eq!(t.dense1, src.dense1),
                StrategyKind::LpFm => assert_ne!(t.dense1, src.dense1),
            }
            assert_eq!(out.ln_shift_report.total == 0.0, kind.freezes_ln(), "{kind}");
        }
    }

    #[test]
    fn cyclic_round_bookkeeping() {
        let pair = small_pair(1.5);
        let src = pretrain_on(&pair.source, &cfg(60)).unwrap();
        let out = finetune(&src, &pair, &Strategy::cyclic(5, 3), &cfg(30)).unwrap();
        assert_eq!(out.round_losses.len(), 6);
        assert_eq!(out.round_losses[0].group, ParamGroup::Dense2);
        assert_eq!(out.round_losses[1].group, ParamGroup::LnGamma);
        for pair in out.round_losses.windows(2) {
            // The next round starts from the model the previous one returned.
            assert!((pair[0].end - pair[1].start).abs() < 1e-12);
        }
    }

    #[test]
    fn expanded_predictor_trains() {
        let pair = small_pair(1.0);
        let src = pretrain_on(&pair.source, &cfg(60)).unwrap();
        let out = finetune(&src, &pair, &Strategy::new(StrategyKind::Lp).with_expansion(), &cfg(20)).unwrap();
        let e = out.tuned.expand.as_ref().unwrap();
        assert_eq!(e.output_width(), 2 * src.hidden_width());
        assert_eq!(out.tuned.ln, src.ln);
    }

    #[test]
    fn suite_shares_snapshot() {
        let pair = small_pair(0.5);
        let suite = run_strategy_suite(&pair, &cfg(40), &cfg(20), &default_strategies()).unwrap();
        assert_eq!(suite.outcomes.len(), 5);
        for out in suite.outcomes.values() {
            assert_eq!(out.as_ref().unwrap().source, suite.source_model);
        }
    }

    #[test]
    fn width_mismatch_rejected() {
        let pair = small_pair(0.0);
        let m = ToyModel::<f64>::init(3, 8, 2, 0).unwrap();
        assert!(finetune(&m, &pair, &Strategy::default(), &cfg(5)).is_err());
    }
}
