//! Class-conditional Gaussian source/target domains with controlled mean and
//! variance shifts.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{lit, Scalar};

/// Radius of the circle the default class means sit on.
pub const DEFAULT_RADIUS: f64 = 3.0;
pub const DEFAULT_SAMPLES_PER_CLASS: usize = 100;
pub const DEFAULT_DATA_SEED: u64 = 42;

const SOURCE_STREAM: u64 = 0;
const TARGET_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub num_classes: usize,
    pub input_dim: usize,
    pub class_means: Vec<Vec<f64>>,
    pub class_stds: Vec<f64>,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl DomainSpec {
    /// Unit-variance classes with means evenly spaced on a radius-3 circle in 2-D.
    pub fn circle(num_classes: usize, samples_per_class: usize, seed: u64) -> Self {
        let class_means = (0..num_classes)
            .map(|c| {
                let angle = 2.0 * PI * c as f64 / num_classes as f64;
                vec![DEFAULT_RADIUS * angle.cos(), DEFAULT_RADIUS * angle.sin()]
            })
            .collect();
        Self {
            num_classes,
            input_dim: 2,
            class_means,
            class_stds: vec![1.0; num_classes],
            samples_per_class,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.num_classes >= 2, "need at least two classes");
        ensure!(self.input_dim >= 1, "input_dim must be at least 1");
        ensure!(
            self.class_means.len() == self.num_classes && self.class_stds.len() == self.num_classes,
            "expected {} class means and stds, got {} and {}",
            self.num_classes,
            self.class_means.len(),
            self.class_stds.len()
        );
        for (c, m) in self.class_means.iter().enumerate() {
            ensure!(
                m.len() == self.input_dim,
                "class {c} mean has dimension {} instead of {}",
                m.len(),
                self.input_dim
            );
            ensure!(m.iter().all(|v| v.is_finite()), "class {c} mean is not finite");
        }
        ensure!(
            self.class_stds.iter().all(|&s| s >= 0.0 && s.is_finite()),
            "class standard deviations must be finite and non-negative"
        );
        ensure!(self.samples_per_class >= 1, "samples_per_class must be at least 1");
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub mean_shift_scale: f64,
    pub var_shift_scale: f64,
    /// One unit vector per class.
    pub displacement_dirs: Vec<Vec<f64>>,
    /// One positive multiplier per class.
    pub var_multipliers: Vec<f64>,
}

impl ShiftSpec {
    /// Default 2-D shift: class `c` moves along the angle `2πc/K + π/K` and its
    /// spread is multiplied by 1.5 (even `c`) or 0.75 (odd `c`) at full scale.
    pub fn standard(num_classes: usize, mean_shift_scale: f64, var_shift_scale: f64) -> Self {
        let k = num_classes as f64;
        let displacement_dirs = (0..num_classes)
            .map(|c| {
                let angle = 2.0 * PI * c as f64 / k + PI / k;
                vec![angle.cos(), angle.sin()]
            })
            .collect();
        let var_multipliers = (0..num_classes)
            .map(|c| if c % 2 == 0 { 1.5 } else { 0.75 })
            .collect();
        Self {
            mean_shift_scale,
            var_shift_scale,
            displacement_dirs,
            var_multipliers,
        }
    }

    pub fn none(num_classes: usize) -> Self {
        Self::standard(num_classes, 0.0, 0.0)
    }

    pub fn validate(&self, domain: &DomainSpec) -> Result<()> {
        ensure!(
            self.mean_shift_scale.is_finite() && self.mean_shift_scale >= 0.0,
            "mean shift scale must be finite and non-negative"
        );
        ensure!(
            self.var_shift_scale.is_finite() && self.var_shift_scale >= 0.0,
            "variance shift scale must be finite and non-negative"
        );
        ensure!(
            self.displacement_dirs.len() == domain.num_classes
                && self.var_multipliers.len() == domain.num_classes,
            "shift needs one direction and one multiplier per class"
        );
        for (c, d) in self.displacement_dirs.iter().enumerate() {
            ensure!(
                d.len() == domain.input_dim,
                "displacement {c} has dimension {} instead of {}",
                d.len(),
                domain.input_dim
            );
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            ensure!(
                (norm - 1.0).abs() <= 1e-9,
                "displacement {c} is not a unit vector (norm {norm})"
            );
        }
        ensure!(
            self.var_multipliers.iter().all(|&m| m > 0.0 && m.is_finite()),
            "variance multipliers must be positive"
        );
        Ok(())
    }

    /// Per-class target `(mean, std)` implied by this shift.
    pub fn target_params(&self, domain: &DomainSpec) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        domain.validate()?;
        self.validate(domain)?;
        let means = domain
            .class_means
            .iter()
            .zip(&self.displacement_dirs)
            .map(|(m, d)| {
                m.iter()
                    .zip(d)
                    .map(|(&mi, &di)| mi + self.mean_shift_scale * di)
                    .collect()
            })
            .collect();
        let mut stds = Vec::with_capacity(domain.num_classes);
        for (c, (&s, &mult)) in domain.class_stds.iter().zip(&self.var_multipliers).enumerate() {
            let std = s * (1.0 + self.var_shift_scale * (mult - 1.0));
            ensure!(std > 0.0, "shifted standard deviation of class {c} is {std}, not positive");
            stds.push(std);
        }
        Ok((means, stds))
    }
}

/// Samples with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T> {
    pub x: Matrix<T>,
    pub y: Vec<usize>,
    pub num_classes: usize,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn new(x: Matrix<T>, y: Vec<usize>, num_classes: usize) -> Result<Self> {
        ensure!(
            x.rows() == y.len(),
            "{} rows but {} labels",
            x.rows(),
            y.len()
        );
        ensure!(
            y.iter().all(|&l| l < num_classes),
            "labels must lie in [0, {num_classes})"
        );
        Ok(Self { x, y, num_classes })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.y {
            counts[l] += 1;
        }
        counts
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        ensure!(self.num_classes == other.num_classes, "class counts differ");
        let mut y = self.y.clone();
        y.extend_from_slice(&other.y);
        Ok(Self {
            x: self.x.vstack(&other.x)?,
            y,
            num_classes: self.num_classes,
        })
    }

    /// Write as CSV with header `x0,x1,...,label`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.x.cols()).map(|d| format!("x{d}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (row, &label) in self.x.iter_rows().zip(&self.y) {
            let mut rec: Vec<String> = row.iter().map(|v| v.as_f64().to_string()).collect();
            rec.push(label.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Read a CSV written by [`write_csv`](Self::write_csv). When `num_classes`
    /// is `None` it is inferred as `max(label) + 1`.
    pub fn read_csv<R: Read>(reader: R, num_classes: Option<usize>) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        ensure!(
            headers.iter().next_back() == Some("label"),
            "last CSV column must be `label`"
        );
        let dims = headers.len() - 1;
        for (d, h) in headers.iter().take(dims).enumerate() {
            ensure!(h == format!("x{d}"), "unexpected CSV column `{h}` at position {d}");
        }
        let mut data = Vec::new();
        let mut y = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            for field in rec.iter().take(dims) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad number `{field}`")))?;
                data.push(lit(v));
            }
            let label = rec.get(dims).unwrap_or("");
            y.push(
                label
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad label `{label}`")))?,
            );
        }
        let classes = num_classes.unwrap_or_else(|| y.iter().max().map_or(0, |m| m + 1));
        Self::new(Matrix::from_vec(y.len(), dims, data)?, y, classes)
    }

    pub fn load_csv(path: &Path, num_classes: Option<usize>) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), num_classes)
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sample_gaussians<T: Scalar>(
    means: &[Vec<f64>],
    stds: &[f64],
    per_class: usize,
    rng: &mut ChaCha8Rng,
) -> Result<LabeledDataset<T>> {
    let classes = means.len();
    let dim = means.first().map_or(0, Vec::len);
    let mut data = Vec::with_capacity(classes * per_class * dim);
    let mut y = Vec::with_capacity(classes * per_class);
    for (c, (mean, &std)) in means.iter().zip(stds).enumerate() {
        for _ in 0..per_class {
            for &m in mean {
                let z: f64 = StandardNormal.sample(rng);
                data.push(lit(m + std * z));
            }
            y.push(c);
        }
    }
    LabeledDataset::new(Matrix::from_vec(y.len(), dim, data)?, y, classes)
}

/// Draw `samples_per_class` i.i.d. points per class from the source Gaussians.
pub fn make_source<T: Scalar>(spec: &DomainSpec) -> Result<LabeledDataset<T>> {
    spec.validate()?;
    let mut rng = rng_for(spec.seed, SOURCE_STREAM);
    sample_gaussians(&spec.class_means, &spec.class_stds, spec.samples_per_class, &mut rng)
}

/// Draw the shifted target domain from a stream independent of the source's.
pub fn make_target<T: Scalar>(spec: &DomainSpec, shift: &ShiftSpec) -> Result<LabeledDataset<T>> {
    let (means, stds) = shift.target_params(spec)?;
    let mut rng = rng_for(spec.seed, TARGET_STREAM);
    sample_gaussians(&means, &stds, spec.samples_per_class, &mut rng)
}

/// Number of training rows a class of `count` samples contributes.
pub fn train_count(fraction: f64, count: usize) -> usize {
    (fraction * count as f64).round() as usize
}

/// Stratified split with exactly `round(fraction * count)` training rows per class.
pub fn split_target<T: Scalar>(
    target: &LabeledDataset<T>,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset<T>, LabeledDataset<T>)> {
    ensure!(
        train_fraction > 0.0 && train_fraction < 1.0,
        "train fraction must lie in (0, 1), got {train_fraction}"
    );
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); target.num_classes];
    for (i, &l) in target.y.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = rng_for(seed, SPLIT_STREAM);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (c, mut idx) in by_class.into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        let k = train_count(train_fraction, idx.len());
        ensure!(
            k >= 1,
            "fraction {train_fraction} leaves class {c} ({} rows) without training samples",
            idx.len()
        );
        idx.shuffle(&mut rng);
        let (train, test) = idx.split_at(k);
        let mut train = train.to_vec();
        let mut test = test.to_vec();
        train.sort_unstable();
        test.sort_unstable();
        train_idx.extend(train);
        test_idx.extend(test);
    }
    Ok((target.subset(&train_idx), target.subset(&test_idx)))
}

/// Parameters that produced a [`DomainPair`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub domain: DomainSpec,
    pub shift: ShiftSpec,
    pub train_fraction: f64,
}

/// Source data and a stratified train/test split of the shifted target.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainPair<T> {
    pub source: LabeledDataset<T>,
    pub target_train: LabeledDataset<T>,
    pub target_test: LabeledDataset<T>,
    pub spec: PairSpec,
}

impl<T: Scalar> DomainPair<T> {
    /// Generate both domains and split the target. The split shares the
    /// domain seed on its own stream.
    pub fn generate(domain: DomainSpec, shift: ShiftSpec, train_fraction: f64) -> Result<Self> {
        let source = make_source(&domain)?;
        Self::with_source(source, domain, shift, train_fraction)
    }

    /// Like [`generate`](Self::generate) but reusing an already drawn source set.
    pub fn with_source(
        source: LabeledDataset<T>,
        domain: DomainSpec,
        shift: ShiftSpec,
        train_fraction: f64,
    ) -> Result<Self> {
        let target = make_target(&domain, &shift)?;
        let (target_train, target_test) = split_target(&target, train_fraction, domain.seed)?;
        Ok(Self {
            source,
            target_train,
            target_test,
            spec: PairSpec {
                domain,
                shift,
                train_fraction,
            },
        })
    }

    /// The whole target domain, train rows followed by test rows.
    pub fn target_full(&self) -> LabeledDataset<T> {
        self.target_train
            .concat(&self.target_test)
            .expect("train and test share a class count")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class_rows(ds: &LabeledDataset<f64>, c: usize) -> Vec<Vec<f64>> {
        ds.x.iter_rows()
            .zip(&ds.y)
            .filter(|(_, &l)| l == c)
            .map(|(r, _)| r.to_vec())
            .collect()
    }

    #[test]
    fn source_has_requested_counts() {
        let ds: LabeledDataset<f64> = make_source(&DomainSpec::circle(2, 100, 42)).unwrap();
        assert_eq!(ds.len(), 200);
        assert_eq!(ds.class_counts(), vec![100, 100]);
    }

    #[test]
    fn zero_std_class_collapses_to_mean() {
        let mut spec = DomainSpec::circle(2, 10, 1);
        spec.class_stds[1] = 0.0;
        let ds: LabeledDataset<f64> = make_source(&spec).unwrap();
        for row in class_rows(&ds, 1) {
            assert_eq!(row, spec.class_means[1]);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = DomainSpec::circle(4, 30, 7);
        let a: LabeledDataset<f64> = make_source(&spec).unwrap();
        let b: LabeledDataset<f64> = make_source(&spec).unwrap();
        assert_eq!(a, b);
        let shift = ShiftSpec::standard(4, 1.0, 1.0);
        let ta: LabeledDataset<f64> = make_target(&spec, &shift).unwrap();
        let tb: LabeledDataset<f64> = make_target(&spec, &shift).unwrap();
        assert_eq!(ta, tb);
        assert_ne!(a.x, ta.x);
    }

    #[test]
    fn zero_shift_keeps_parameters() {
        let spec = DomainSpec::circle(4, 10, 0);
        let (means, stds) = ShiftSpec::none(4).target_params(&spec).unwrap();
        assert_eq!(means, spec.class_means);
        assert_eq!(stds, spec.class_stds);
    }

    #[test]
    fn shift_formulas() {
        let spec = DomainSpec {
            num_classes: 2,
            input_dim: 2,
            class_means: vec![vec![0.0, 0.0], vec![5.0, 5.0]],
            class_stds: vec![1.0, 1.0],
            samples_per_class: 5,
            seed: 0,
        };
        let shift = ShiftSpec {
            mean_shift_scale: 2.0,
            var_shift_scale: 1.0,
            displacement_dirs: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            var_multipliers: vec![1.5, 1.0],
        };
        let (means, stds) = shift.target_params(&spec).unwrap();
        assert_eq!(means[0], vec![2.0, 0.0]);
        assert_eq!(stds[0], 1.5);
        assert_eq!(stds[1], 1.0);
    }

    #[test]
    fn nonpositive_shifted_std_rejected() {
        let spec = DomainSpec::circle(2, 5, 0);
        let mut shift = ShiftSpec::standard(2, 0.0, 2.0);
        shift.var_multipliers = vec![0.25, 1.0];
        assert!(make_target::<f64>(&spec, &shift).is_err());
    }

    #[test]
    fn invalid_shift_direction_rejected() {
        let spec = DomainSpec::circle(2, 5, 0);
        let mut shift = ShiftSpec::standard(2, 1.0, 0.0);
        shift.displacement_dirs[0] = vec![1.0, 1.0];
        assert!(shift.validate(&spec).is_err());
    }

    #[test]
    fn default_directions_are_unit_and_offset() {
        let s = ShiftSpec::standard(8, 1.0, 1.0);
        for d in &s.displacement_dirs {
            assert!((d[0].hypot(d[1]) - 1.0).abs() < 1e-12);
        }
        assert_eq!(s.var_multipliers[..4], [1.5, 0.75, 1.5, 0.75]);
    }

    #[test]
    fn split_fraction_counts() {
        let spec = DomainSpec::circle(4, 100, 42);
        let target: LabeledDataset<f64> = make_target(&spec, &ShiftSpec::none(4)).unwrap();
        for (fraction, expected) in [(0.01, 1), (0.05, 5), (0.1, 10), (0.3, 30), (0.5, 50)] {
            let (train, test) = split_target(&target, fraction, 3).unwrap();
            assert_eq!(train.class_counts(), vec![expected; 4]);
            assert_eq!(test.class_counts(), vec![100 - expected; 4]);
        }
    }

    #[test]
    fn split_rejects_empty_classes_and_bad_fractions() {
        let spec = DomainSpec::circle(2, 10, 0);
        let target: LabeledDataset<f64> = make_target(&spec, &ShiftSpec::none(2)).unwrap();
        assert!(split_target(&target, 0.01, 0).is_err());
        assert!(split_target(&target, 0.0, 0).is_err());
        assert!(split_target(&target, 1.0, 0).is_err());
    }

    #[test]
    fn split_is_a_partition() {
        // Tag every row with its index in the first coordinate.
        let n = 40;
        let x = Matrix::from_fn(n, 1, |r, _| r as f64);
        let y = (0..n).map(|i| i % 2).collect();
        let ds = LabeledDataset::new(x, y, 2).unwrap();
        let (train, test) = split_target(&ds, 0.3, 11).unwrap();
        let mut seen: Vec<usize> = train
            .x
            .column(0)
            .into_iter()
            .chain(test.x.column(0))
            .map(|v| v as usize)
            .collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..n).collect::<Vec<_>>());
        assert_eq!(split_target(&ds, 0.3, 11).unwrap().0, train);
    }

    #[test]
    fn zero_shift_empirical_means_close() {
        let spec = DomainSpec::circle(8, 100, 42);
        let target: LabeledDataset<f64> = make_target(&spec, &ShiftSpec::none(8)).unwrap();
        for c in 0..8 {
            let rows = class_rows(&target, c);
            for d in 0..2 {
                let m = rows.iter().map(|r| r[d]).sum::<f64>() / rows.len() as f64;
                assert!((m - spec.class_means[c][d]).abs() < 0.5);
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let ds: LabeledDataset<f64> = make_source(&DomainSpec::circle(2, 4, 5)).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x0,x1,label\n"));
        let back = LabeledDataset::<f64>::read_csv(&buf[..], Some(2)).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn pair_partitions_target() {
        let pair: DomainPair<f64> =
            DomainPair::generate(DomainSpec::circle(2, 100, 42), ShiftSpec::standard(2, 1.0, 1.0), 0.1)
                .unwrap();
        assert_eq!(pair.target_train.class_counts(), vec![10, 10]);
        assert_eq!(pair.target_test.class_counts(), vec![90, 90]);
        assert_eq!(pair.target_full().len(), 200);
    }
}
