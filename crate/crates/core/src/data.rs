//! Dataset ingestion, synthetic task generators, per-round sampling and
//! drift-schedule injection.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{Datapoint, SparseVec};
use crate::rng::{stream_rng, Stream};

/// Sorted set of raw labels. A class's index is its position in the set.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassSet {
    labels: Vec<i64>,
}

impl ClassSet {
    pub fn from_labels(labels: impl IntoIterator<Item = i64>) -> Self {
        let mut labels: Vec<i64> = labels.into_iter().collect();
        labels.sort_unstable();
        labels.dedup();
        Self { labels }
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: i64) -> Option<usize> {
        self.labels.binary_search(&label).ok()
    }

    pub fn contains(&self, label: i64) -> bool {
        self.index_of(label).is_some()
    }

    /// `{-1, +1}` (or a subset of it) is treated as a binary task.
    pub fn is_binary(&self) -> bool {
        !self.labels.is_empty() && self.labels.iter().all(|l| *l == -1 || *l == 1)
    }
}

/// Parsed contents of a LIBSVM text file.
#[derive(Debug, Clone, PartialEq)]
pub struct LibsvmData {
    pub points: Vec<Datapoint>,
    /// Largest 1-based feature index seen.
    pub dimension: usize,
    pub classes: ClassSet,
}

fn parse_label(token: &str, line: usize) -> Result<i64> {
    let trimmed = token.strip_prefix('+').unwrap_or(token);
    if let Ok(v) = trimmed.parse::<i64>() {
        return Ok(v);
    }
    match trimmed.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
        _ => Err(Error::Parse {
            line,
            msg: format!("label `{token}` is not an integer class id"),
        }),
    }
}

/// Parses `<label> <idx>:<val> ...` lines with 1-based, strictly increasing
/// indices. Blank lines and `#` comments are skipped. Indices are stored
/// zero-based.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<LibsvmData> {
    let mut points = Vec::new();
    let mut dimension = 0usize;
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label = parse_label(tokens.next().unwrap_or_default(), lineno)?;
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("expected `index:value`, found `{tok}`"),
            })?;
            let idx: u32 = idx.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad feature index `{idx}`"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "feature indices are 1-based".into(),
                });
            }
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad feature value `{val}`"),
            })?;
            if let Some(&prev) = indices.last() {
                if idx - 1 <= prev {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("feature index {idx} does not increase"),
                    });
                }
            }
            indices.push(idx - 1);
            values.push(val);
        }
        dimension = dimension.max(indices.last().map_or(0, |&i| i as usize + 1));
        labels.push(label);
        let features = SparseVec::new(indices, values).map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        points.push(Datapoint::new(features, label));
    }
    Ok(LibsvmData {
        points,
        dimension,
        classes: ClassSet::from_labels(labels),
    })
}

pub fn read_libsvm_file(path: impl AsRef<Path>) -> Result<LibsvmData> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    parse_libsvm(BufReader::new(file))
}

/// Writes points back in LIBSVM form; values use the shortest exact decimal
/// representation so a re-parse reproduces them bit for bit.
pub fn write_libsvm<W: Write>(points: &[Datapoint], mut out: W) -> Result<()> {
    for p in points {
        write!(out, "{}", p.label)?;
        for (i, v) in p.features.iter() {
            write!(out, " {}:{}", i + 1, v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DriftKind {
    /// Classes (by index into the source's class set) become visible.
    ClassIntroduce { classes: Vec<usize> },
    /// Labels of each pair of class indices are exchanged.
    ClassSwap { pairs: Vec<(usize, usize)> },
    /// The synthetic quadratic optimum moves to `optimum`.
    ComparatorShift { optimum: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEvent {
    pub round: usize,
    #[serde(flatten)]
    pub kind: DriftKind,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DriftSchedule {
    #[serde(default)]
    pub events: Vec<DriftEvent>,
}

/// Environment state after applying every event up to some round.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftState {
    /// Visible classes, by original class index.
    pub active: Vec<bool>,
    /// Original class index → emitted class index.
    pub relabel: Vec<usize>,
    pub optimum: Option<Vec<f64>>,
}

impl DriftSchedule {
    pub fn new(events: Vec<DriftEvent>) -> Result<Self> {
        let schedule = Self { events };
        schedule.check_order()?;
        Ok(schedule)
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    fn check_order(&self) -> Result<()> {
        if self.events.windows(2).any(|w| w[0].round >= w[1].round) {
            return Err(Error::Config("drift event rounds must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Checks ordering, the `[1, T]` window and payload ranges.
    pub fn validate(&self, horizon: usize, n_classes: usize, features: usize) -> Result<()> {
        self.check_order()?;
        for e in &self.events {
            if e.round < 1 || e.round > horizon {
                return Err(Error::Config(format!(
                    "drift event at round {} outside [1, {horizon}]",
                    e.round
                )));
            }
            let bad_class = |c: usize| c >= n_classes;
            match &e.kind {
                DriftKind::ClassIntroduce { classes } if classes.iter().any(|&c| bad_class(c)) => {
                    return Err(Error::Config(format!(
                        "round {}: class index out of range (have {n_classes} classes)",
                        e.round
                    )));
                }
                DriftKind::ClassSwap { pairs } if pairs.iter().any(|&(a, b)| bad_class(a) || bad_class(b)) => {
                    return Err(Error::Config(format!(
                        "round {}: swap pair out of range (have {n_classes} classes)",
                        e.round
                    )));
                }
                DriftKind::ComparatorShift { optimum } if optimum.len() != features => {
                    return Err(Error::DimensionMismatch {
                        expected: features,
                        actual: optimum.len(),
                    });
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Classes that are hidden until a `ClassIntroduce` event reveals them.
    fn initially_hidden(&self, n_classes: usize) -> Vec<bool> {
        let mut hidden = vec![false; n_classes];
        for e in &self.events {
            if let DriftKind::ClassIntroduce { classes } = &e.kind {
                for &c in classes {
                    if c < n_classes {
                        hidden[c] = true;
                    }
                }
            }
        }
        hidden
    }

    pub fn state_at(&self, round: usize, n_classes: usize) -> DriftState {
        let mut active: Vec<bool> = self.initially_hidden(n_classes).iter().map(|h| !h).collect();
        let mut relabel: Vec<usize> = (0..n_classes).collect();
        let mut optimum = None;
        for e in self.events.iter().take_while(|e| e.round <= round) {
            match &e.kind {
                DriftKind::ClassIntroduce { classes } => {
                    for &c in classes {
                        if c < n_classes {
                            active[c] = true;
                        }
                    }
                }
                DriftKind::ClassSwap { pairs } => {
                    for &(a, b) in pairs {
                        for r in relabel.iter_mut() {
                            if *r == a {
                                *r = b;
                            } else if *r == b {
                                *r = a;
                            }
                        }
                    }
                }
                DriftKind::ComparatorShift { optimum: o } => optimum = Some(o.clone()),
            }
        }
        DriftState {
            active,
            relabel,
            optimum,
        }
    }

    /// Number of rounds in `[2, T]` on which the environment changes. An event
    /// at round 1 defines the initial environment and is not a drift.
    pub fn drift_count(&self, horizon: usize) -> usize {
        self.events
            .iter()
            .filter(|e| e.round >= 2 && e.round <= horizon)
            .count()
    }

    pub fn drift_rounds(&self, horizon: usize) -> Vec<usize> {
        self.events
            .iter()
            .map(|e| e.round)
            .filter(|&r| r >= 2 && r <= horizon)
            .collect()
    }
}

const COVTYPE_ROUNDS: [usize; 6] = [65, 187, 233, 367, 411, 489];
const MNIST_ROUNDS: [usize; 6] = [31, 129, 279, 310, 369, 462];
const SWAP_PAIRS: [(usize, usize); 3] = [(0, 1), (2, 3), (4, 5)];

fn class_introduction(rounds: &[usize], groups: &[&[usize]]) -> DriftSchedule {
    DriftSchedule {
        events: rounds
            .iter()
            .zip(groups)
            .map(|(&round, g)| DriftEvent {
                round,
                kind: DriftKind::ClassIntroduce { classes: g.to_vec() },
            })
            .collect(),
    }
}

fn class_swaps(rounds: &[usize]) -> DriftSchedule {
    DriftSchedule {
        events: rounds
            .iter()
            .map(|&round| DriftEvent {
                round,
                kind: DriftKind::ClassSwap { pairs: SWAP_PAIRS.to_vec() },
            })
            .collect(),
    }
}

pub const SCHEDULE_PRESETS: [&str; 4] = [
    "paper-covtype-ci",
    "paper-covtype-cs",
    "paper-mnist-ci",
    "paper-mnist-cs",
];

/// Class-introduction and class-swap schedules of the reference experiments.
/// Class references are indices into the dataset's sorted label set.
pub fn schedule_preset(name: &str) -> Option<DriftSchedule> {
    match name {
        "paper-covtype-ci" => Some(class_introduction(
            &COVTYPE_ROUNDS,
            &[&[1], &[2], &[3], &[4], &[5], &[6]],
        )),
        "paper-mnist-ci" => Some(class_introduction(
            &MNIST_ROUNDS,
            &[&[2, 3], &[4], &[5, 6], &[7], &[8], &[9]],
        )),
        "paper-covtype-cs" => Some(class_swaps(&COVTYPE_ROUNDS)),
        "paper-mnist-cs" => Some(class_swaps(&MNIST_ROUNDS)),
        _ => None,
    }
}

/// Law for the number of points each DPU receives in a round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SizeLaw {
    /// `⌊max(1, N(mean, std))⌋`
    Normal { mean: f64, std: f64 },
    Fixed { size: usize },
}

impl Default for SizeLaw {
    fn default() -> Self {
        SizeLaw::Normal {
            mean: 1000.0,
            std: 200.0,
        }
    }
}

impl SizeLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SizeLaw::Normal { mean, std } if !(mean.is_finite() && std >= 0.0 && std.is_finite()) => {
                Err(Error::Config(format!("invalid size law N({mean}, {std})")))
            }
            SizeLaw::Fixed { size: 0 } => Err(Error::Config("fixed round size must be >= 1".into())),
            _ => Ok(()),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        match *self {
            SizeLaw::Normal { mean, std } => {
                let x = if std == 0.0 {
                    mean
                } else {
                    Normal::new(mean, std).expect("validated").sample(rng)
                };
                x.max(1.0).floor() as usize
            }
            SizeLaw::Fixed { size } => size,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceKind {
    /// Immutable pool grouped by class index.
    Pool { by_class: Vec<Vec<Datapoint>> },
    /// Points `ξ = a_t + noise · z` for the quadratic task; `optimum` is `a_1`.
    SyntheticQuadratic { optimum: Vec<f64>, noise: f64 },
    /// Gaussian blobs, one centre per class. Two-class sources emit labels
    /// -1 and +1, larger sources 0..K.
    SyntheticLogistic { centers: Vec<Vec<f64>>, noise: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSource {
    pub kind: SourceKind,
    pub classes: ClassSet,
    pub features: usize,
    pub seed: u64,
}

impl DataSource {
    pub fn from_libsvm(data: LibsvmData, seed: u64) -> Result<Self> {
        if data.points.is_empty() {
            return Err(Error::Config("LIBSVM pool is empty".into()));
        }
        let mut by_class = vec![Vec::new(); data.classes.len()];
        for p in data.points {
            let c = data.classes.index_of(p.label).expect("label collected at parse time");
            by_class[c].push(p);
        }
        Ok(Self {
            kind: SourceKind::Pool { by_class },
            classes: data.classes,
            features: data.dimension,
            seed,
        })
    }

    pub fn synthetic_quadratic(optimum: Vec<f64>, noise: f64, seed: u64) -> Result<Self> {
        if optimum.is_empty() || !(noise >= 0.0) {
            return Err(Error::Config("quadratic source needs a non-empty optimum and noise >= 0".into()));
        }
        Ok(Self {
            features: optimum.len(),
            kind: SourceKind::SyntheticQuadratic { optimum, noise },
            classes: ClassSet::from_labels([0]),
            seed,
        })
    }

    pub fn synthetic_logistic(centers: Vec<Vec<f64>>, noise: f64, seed: u64) -> Result<Self> {
        let features = centers.first().map_or(0, Vec::len);
        if centers.len() < 2 || features == 0 || centers.iter().any(|c| c.len() != features) {
            return Err(Error::Config(
                "logistic source needs >= 2 centres of equal, positive dimension".into(),
            ));
        }
        if !(noise >= 0.0) {
            return Err(Error::Config("noise must be >= 0".into()));
        }
        Ok(Self {
            classes: if centers.len() == 2 {
                ClassSet::from_labels([-1, 1])
            } else {
                ClassSet::from_labels(0..centers.len() as i64)
            },
            kind: SourceKind::SyntheticLogistic { centers, noise },
            features,
            seed,
        })
    }

    /// Blob centres drawn uniformly on a sphere of radius `separation`.
    pub fn random_logistic(
        n_classes: usize,
        features: usize,
        separation: f64,
        noise: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = stream_rng(seed, Stream::Generator, &[]);
        let centers = (0..n_classes)
            .map(|_| {
                let v: Vec<f64> = (0..features).map(|_| rng.sample(StandardNormal)).collect();
                let n = crate::loss::norm(&v).max(1e-12);
                v.into_iter().map(|x| separation * x / n).collect()
            })
            .collect();
        Self::synthetic_logistic(centers, noise, seed)
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            SourceKind::Pool { .. } => "libsvm-file",
            SourceKind::SyntheticQuadratic { .. } => "synthetic-quadratic",
            SourceKind::SyntheticLogistic { .. } => "synthetic-logistic",
        }
    }

    /// Every point of a file-backed pool.
    pub fn pool_points(&self) -> impl Iterator<Item = &Datapoint> {
        let groups: &[Vec<Datapoint>] = match &self.kind {
            SourceKind::Pool { by_class } => by_class,
            _ => &[],
        };
        groups.iter().flatten()
    }
}

/// Per-DPU data for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundDataset {
    pub round: usize,
    pub dpus: Vec<Vec<Datapoint>>,
    pub sizes: Vec<usize>,
    pub total: usize,
    /// `p_n = D_n / D`
    pub weights: Vec<f64>,
    /// Some DPU asked for more points than the active pool holds and was
    /// served with replacement.
    pub oversampled: bool,
}

impl RoundDataset {
    pub fn new(round: usize, dpus: Vec<Vec<Datapoint>>) -> Result<Self> {
        if dpus.is_empty() || dpus.iter().any(Vec::is_empty) {
            return Err(Error::Config("every DPU needs at least one datapoint".into()));
        }
        let sizes: Vec<usize> = dpus.iter().map(Vec::len).collect();
        let total: usize = sizes.iter().sum();
        let weights = sizes.iter().map(|&s| s as f64 / total as f64).collect();
        Ok(Self {
            round,
            dpus,
            sizes,
            total,
            weights,
            oversampled: false,
        })
    }

    pub fn points(&self) -> impl Iterator<Item = &Datapoint> {
        self.dpus.iter().flatten()
    }
}

/// Draws round `t`'s data for every DPU. Each `(round, dpu)` pair has its own
/// random streams, so the result does not depend on evaluation order.
pub fn sample_round(
    source: &DataSource,
    schedule: &DriftSchedule,
    round: usize,
    n_dpus: usize,
    law: &SizeLaw,
) -> Result<RoundDataset> {
    if round < 1 {
        return Err(Error::Argument("rounds are numbered from 1".into()));
    }
    if n_dpus == 0 {
        return Err(Error::Config("need at least one DPU".into()));
    }
    law.validate()?;
    let state = schedule.state_at(round, source.classes.len());
    let active_classes: Vec<usize> = (0..source.classes.len()).filter(|&c| state.active[c]).collect();
    if active_classes.is_empty() {
        return Err(Error::Config(format!("no class is active at round {round}")));
    }
    let labels = source.classes.labels();
    let emitted = |c: usize| labels[state.relabel[c]];

    let pool: Vec<(usize, &Datapoint)> = match &source.kind {
        SourceKind::Pool { by_class } => active_classes
            .iter()
            .flat_map(|&c| by_class[c].iter().map(move |p| (c, p)))
            .collect(),
        _ => Vec::new(),
    };
    if matches!(source.kind, SourceKind::Pool { .. }) && pool.is_empty() {
        return Err(Error::Config(format!("active pool is empty at round {round}")));
    }

    let draws: Vec<(Vec<Datapoint>, bool)> = (0..n_dpus)
        .into_par_iter()
        .map(|n| {
            let keys = [round as u64, n as u64];
            let size = law.draw(&mut stream_rng(source.seed, Stream::RoundSize, &keys));
            let mut rng = stream_rng(source.seed, Stream::RoundSample, &keys);
            match &source.kind {
                SourceKind::Pool { .. } => {
                    let relabelled = |(c, p): (usize, &Datapoint)| p.with_label(emitted(c));
                    if size <= pool.len() {
                        let idx = rand::seq::index::sample(&mut rng, pool.len(), size);
                        (idx.iter().map(|i| relabelled(pool[i])).collect(), false)
                    } else {
                        let pts = (0..size)
                            .map(|_| relabelled(pool[rng.random_range(0..pool.len())]))
                            .collect();
                        (pts, true)
                    }
                }
                SourceKind::SyntheticQuadratic { optimum, noise } => {
                    let center = state.optimum.as_deref().unwrap_or(optimum);
                    let pts = (0..size)
                        .map(|_| {
                            let v: Vec<f64> = center
                                .iter()
                                .map(|a| a + noise * rng.sample::<f64, _>(StandardNormal))
                                .collect();
                            Datapoint::new(SparseVec::from_dense(&v), labels[0])
                        })
                        .collect();
                    (pts, false)
                }
                SourceKind::SyntheticLogistic { centers, noise } => {
                    let pts = (0..size)
                        .map(|_| {
                            let c = active_classes[rng.random_range(0..active_classes.len())];
                            let v: Vec<f64> = centers[c]
                                .iter()
                                .map(|a| a + noise * rng.sample::<f64, _>(StandardNormal))
                                .collect();
                            Datapoint::new(SparseVec::from_dense(&v), emitted(c))
                        })
                        .collect();
                    (pts, false)
                }
            }
        })
        .collect();

    let oversampled = draws.iter().any(|(_, o)| *o);
    let mut ds = RoundDataset::new(round, draws.into_iter().map(|(p, _)| p).collect())?;
    ds.oversampled = oversampled;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<LibsvmData> {
        parse_libsvm(text.as_bytes())
    }

    #[test]
    fn parses_single_line() {
        let d = parse("+1 1:0.5 3:-2").unwrap();
        assert_eq!(d.points.len(), 1);
        assert_eq!(d.points[0].label, 1);
        assert_eq!(d.points[0].features.indices(), &[0, 2]);
        assert_eq!(d.points[0].features.values(), &[0.5, -2.0]);
        assert_eq!(d.dimension, 3);
        assert!(d.classes.is_binary());
    }

    #[test]
    fn empty_input_gives_empty_pool() {
        let d = parse("").unwrap();
        assert!(d.points.is_empty());
        assert_eq!(d.dimension, 0);
        assert!(d.classes.is_empty());
    }

    #[test]
    fn multiclass_labels_and_dimension() {
        let d = parse("3 2:1.0\n1 1:0.5").unwrap();
        assert_eq!(d.points.len(), 2);
        assert_eq!(d.classes.labels(), &[1, 3]);
        assert_eq!(d.dimension, 2);
        assert!(!d.classes.is_binary());
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let err = parse("1 1:0.5\n\n1 2:0.5 2:1.0").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(matches!(parse("1 1-0.5").unwrap_err(), Error::Parse { line: 1, .. }));
        assert!(matches!(parse("x 1:0.5").unwrap_err(), Error::Parse { line: 1, .. }));
        assert!(matches!(parse("1 0:0.5").unwrap_err(), Error::Parse { line: 1, .. }));
        assert!(matches!(parse("1 3:1 2:1").unwrap_err(), Error::Parse { line: 1, .. }));
        assert!(matches!(parse("1 1:abc").unwrap_err(), Error::Parse { line: 1, .. }));
    }

    #[test]
    fn comments_and_float_labels() {
        let d = parse("# header\n2.0 1:1 # trailing\n").unwrap();
        assert_eq!(d.points[0].label, 2);
        assert!(parse("2.5 1:1").is_err());
    }

    #[test]
    fn schedule_must_be_increasing_and_in_range() {
        let ev = |round| DriftEvent {
            round,
            kind: DriftKind::ClassSwap { pairs: vec![(0, 1)] },
        };
        assert!(DriftSchedule::new(vec![ev(5), ev(5)]).is_err());
        assert!(DriftSchedule::new(vec![ev(5), ev(3)]).is_err());
        let s = DriftSchedule::new(vec![ev(3), ev(5)]).unwrap();
        assert!(s.validate(10, 2, 1).is_ok());
        assert!(s.validate(4, 2, 1).is_err());
        assert!(s.validate(10, 1, 1).is_err());
    }

    #[test]
    fn swaps_compose() {
        let s = DriftSchedule::new(vec![
            DriftEvent { round: 2, kind: DriftKind::ClassSwap { pairs: vec![(0, 1)] } },
            DriftEvent { round: 4, kind: DriftKind::ClassSwap { pairs: vec![(1, 2)] } },
        ])
        .unwrap();
        assert_eq!(s.state_at(1, 3).relabel, vec![0, 1, 2]);
        assert_eq!(s.state_at(2, 3).relabel, vec![1, 0, 2]);
        // class 0 currently emitted as 1 is swapped to 2
        assert_eq!(s.state_at(4, 3).relabel, vec![2, 0, 1]);
    }

    #[test]
    fn presets_exist_and_validate() {
        for name in SCHEDULE_PRESETS {
            let s = schedule_preset(name).unwrap();
            assert_eq!(s.events.len(), 6);
            assert!(s.validate(500, 10, 1).is_ok(), "{name}");
            assert_eq!(s.drift_count(500), 6);
        }
        assert!(schedule_preset("nope").is_none());
    }

    #[test]
    fn weights_sum_to_one() {
        let src = DataSource::synthetic_quadratic(vec![1.0, 2.0], 0.5, 3).unwrap();
        let ds = sample_round(&src, &DriftSchedule::default(), 1, 7, &SizeLaw::Normal { mean: 30.0, std: 20.0 })
            .unwrap();
        assert!((ds.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(ds.sizes.iter().all(|&s| s >= 1));
        assert_eq!(ds.total, ds.sizes.iter().sum::<usize>());
    }

    #[test]
    fn oversampling_is_flagged() {
        let src = DataSource::from_libsvm(parse("1 1:1\n-1 1:2\n1 1:3").unwrap(), 1).unwrap();
        let ds = sample_round(&src, &DriftSchedule::default(), 1, 2, &SizeLaw::Fixed { size: 5 }).unwrap();
        assert!(ds.oversampled);
        assert_eq!(ds.sizes, vec![5, 5]);
        let ds = sample_round(&src, &DriftSchedule::default(), 1, 2, &SizeLaw::Fixed { size: 3 }).unwrap();
        assert!(!ds.oversampled);
        let mut seen: Vec<f64> = ds.dpus[0].iter().map(|p| p.features.values()[0]).collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn comparator_shift_moves_quadratic_points() {
        let src = DataSource::synthetic_quadratic(vec![0.0], 0.0, 3).unwrap();
        let sched = DriftSchedule::new(vec![DriftEvent {
            round: 4,
            kind: DriftKind::ComparatorShift { optimum: vec![2.0] },
        }])
        .unwrap();
        let law = SizeLaw::Fixed { size: 3 };
        let before = sample_round(&src, &sched, 3, 1, &law).unwrap();
        let after = sample_round(&src, &sched, 4, 1, &law).unwrap();
        assert!(before.points().all(|p| p.features.values()[0] == 0.0));
        assert!(after.points().all(|p| p.features.values()[0] == 2.0));
    }
}
