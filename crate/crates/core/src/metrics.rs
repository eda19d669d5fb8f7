//! Prediction quality and calibration metrics, sliced by subgroup.
//!
//! Q-ECE sorts predictions by confidence and cuts them into bins holding equal
//! numbers of samples; the classic ECE uses fixed-width confidence intervals.
//! Both are count-weighted means of `|accuracy - confidence|` per bin, and the
//! reliability diagrams expose exactly those bins.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Attribute;
use crate::error::{Error, Result};
use crate::model::argmax;
use crate::scalar::Scalar;

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PredictionRecord<T: Scalar> {
    pub probs: Vec<T>,
    pub predicted: usize,
    pub confidence: T,
    pub label: usize,
}

impl<T: Scalar> PredictionRecord<T> {
    /// Derives the predicted class (lowest index on ties) and its confidence.
    pub fn from_probs(probs: Vec<T>, label: usize) -> Self {
        let predicted = argmax(&probs);
        let confidence = probs[predicted];
        PredictionRecord {
            probs,
            predicted,
            confidence,
            label,
        }
    }

    pub fn correct(&self) -> bool {
        self.predicted == self.label
    }
}

fn nonempty<T: Scalar>(records: &[PredictionRecord<T>]) -> Result<()> {
    if records.is_empty() {
        Err(Error::Empty("no prediction records"))
    } else {
        Ok(())
    }
}

pub fn accuracy<T: Scalar>(records: &[PredictionRecord<T>]) -> Result<T> {
    nonempty(records)?;
    let hits = records.iter().filter(|r| r.correct()).count();
    Ok(T::from_count(hits) / T::from_count(records.len()))
}

/// One-vs-rest F1 `2TP / (2TP + FP + FN)`, defined as 0 when nothing is
/// predicted or labelled positive.
pub fn f1<T: Scalar>(records: &[PredictionRecord<T>], positive_class: usize) -> Result<T> {
    nonempty(records)?;
    let (mut tp, mut fp, mut fne) = (0usize, 0usize, 0usize);
    for r in records {
        match (r.predicted == positive_class, r.label == positive_class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fne;
    if denom == 0 {
        return Ok(T::zero());
    }
    Ok(T::from_count(2 * tp) / T::from_count(denom))
}

/// Unweighted mean of per-class F1 over all `num_classes` classes.
pub fn macro_f1<T: Scalar>(records: &[PredictionRecord<T>], num_classes: usize) -> Result<T> {
    nonempty(records)?;
    if num_classes == 0 {
        return Err(Error::invalid("num_classes", "must be >= 1"));
    }
    let mut total = T::zero();
    for c in 0..num_classes {
        total += f1(records, c)?;
    }
    Ok(total / T::from_count(num_classes))
}

/// Headline prediction score: macro-F1 for multiclass tasks, F1 of class 1 for
/// binary ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PerformanceMetric {
    F1 { positive_class: usize },
    MacroF1 { num_classes: usize },
}

impl PerformanceMetric {
    pub fn for_classes(num_classes: usize) -> Self {
        if num_classes > 2 {
            PerformanceMetric::MacroF1 { num_classes }
        } else {
            PerformanceMetric::F1 { positive_class: 1 }
        }
    }

    pub fn score<T: Scalar>(&self, records: &[PredictionRecord<T>]) -> Result<T> {
        match *self {
            PerformanceMetric::F1 { positive_class } => f1(records, positive_class),
            PerformanceMetric::MacroF1 { num_classes } => macro_f1(records, num_classes),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PerformanceMetric::F1 { .. } => "f1",
            PerformanceMetric::MacroF1 { .. } => "macro_f1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinningMode {
    EqualMass,
    EqualWidth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ReliabilityBin<T: Scalar> {
    /// Equal-mass: smallest confidence in the bin; equal-width: interval start.
    pub lower: T,
    /// Equal-mass: largest confidence in the bin; equal-width: interval end.
    pub upper: T,
    pub count: usize,
    /// `None` for empty equal-width bins.
    pub mean_confidence: Option<T>,
    pub accuracy: Option<T>,
}

impl<T: Scalar> ReliabilityBin<T> {
    /// `|accuracy - confidence|`, zero for empty bins.
    pub fn gap(&self) -> T {
        match (self.accuracy, self.mean_confidence) {
            (Some(a), Some(c)) => (a - c).abs(),
            _ => T::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ReliabilityDiagram<T: Scalar> {
    pub mode: BinningMode,
    pub bins: Vec<ReliabilityBin<T>>,
}

impl<T: Scalar> ReliabilityDiagram<T> {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// Count-weighted mean bin gap, i.e. the ECE variant the diagram was built for.
    pub fn calibration_error(&self) -> T {
        let n = T::from_count(self.total().max(1));
        self.bins
            .iter()
            .map(|b| T::from_count(b.count) / n * b.gap())
            .sum()
    }
}

fn stats<T: Scalar>(members: &[&PredictionRecord<T>]) -> (Option<T>, Option<T>) {
    if members.is_empty() {
        return (None, None);
    }
    let n = T::from_count(members.len());
    let conf: T = members.iter().map(|r| r.confidence).sum::<T>() / n;
    let acc = T::from_count(members.iter().filter(|r| r.correct()).count()) / n;
    (Some(conf), Some(acc))
}

/// Sizes of `min(num_bins, n)` contiguous bins over `n` items; sizes differ by
/// at most one and the larger bins come first.
pub fn equal_mass_sizes(n: usize, num_bins: usize) -> Vec<usize> {
    let bins = num_bins.min(n).max(1);
    let base = n / bins;
    let extra = n % bins;
    (0..bins).map(|b| base + usize::from(b < extra)).collect()
}

fn equal_mass<T: Scalar>(records: &[PredictionRecord<T>], num_bins: usize) -> ReliabilityDiagram<T> {
    let mut sorted: Vec<&PredictionRecord<T>> = records.iter().collect();
    // stable: equal confidences keep input order
    sorted.sort_by(|a, b| a.confidence.partial_cmp(&b.confidence).expect("finite confidences"));
    let mut bins = Vec::new();
    let mut start = 0;
    for size in equal_mass_sizes(sorted.len(), num_bins) {
        let members = &sorted[start..start + size];
        start += size;
        let (mean_confidence, accuracy) = stats(members);
        bins.push(ReliabilityBin {
            lower: members[0].confidence,
            upper: members[size - 1].confidence,
            count: size,
            mean_confidence,
            accuracy,
        });
    }
    ReliabilityDiagram {
        mode: BinningMode::EqualMass,
        bins,
    }
}

/// Index `b` of the interval `(b/B, (b+1)/B]` containing `c`; `c <= 0` maps to 0.
fn width_bin<T: Scalar>(c: T, num_bins: usize) -> usize {
    let bt = T::from_count(num_bins);
    let edge = |b: usize| T::from_count(b) / bt;
    let guess = (c * bt).ceil().to_usize().unwrap_or(0).saturating_sub(1);
    let mut b = guess.min(num_bins - 1);
    while b > 0 && c <= edge(b) {
        b -= 1;
    }
    while b + 1 < num_bins && c > edge(b + 1) {
        b += 1;
    }
    b
}

fn equal_width<T: Scalar>(records: &[PredictionRecord<T>], num_bins: usize) -> ReliabilityDiagram<T> {
    let mut members: Vec<Vec<&PredictionRecord<T>>> = vec![Vec::new(); num_bins];
    for r in records {
        members[width_bin(r.confidence, num_bins)].push(r);
    }
    let bt = T::from_count(num_bins);
    let bins = members
        .iter()
        .enumerate()
        .map(|(b, m)| {
            let (mean_confidence, accuracy) = stats(m);
            ReliabilityBin {
                lower: T::from_count(b) / bt,
                upper: T::from_count(b + 1) / bt,
                count: m.len(),
                mean_confidence,
                accuracy,
            }
        })
        .collect();
    ReliabilityDiagram {
        mode: BinningMode::EqualWidth,
        bins,
    }
}

fn check_records<T: Scalar>(records: &[PredictionRecord<T>], num_bins: usize) -> Result<()> {
    nonempty(records)?;
    if num_bins == 0 {
        return Err(Error::invalid("num_bins", "must be >= 1"));
    }
    if records.iter().any(|r| !r.confidence.is_finite()) {
        return Err(Error::invalid("records", "non-finite confidence"));
    }
    Ok(())
}

pub fn reliability<T: Scalar>(
    records: &[PredictionRecord<T>],
    num_bins: usize,
    mode: BinningMode,
) -> Result<ReliabilityDiagram<T>> {
    check_records(records, num_bins)?;
    Ok(match mode {
        BinningMode::EqualMass => equal_mass(records, num_bins),
        BinningMode::EqualWidth => equal_width(records, num_bins),
    })
}

/// Quantile ECE over equal-mass confidence bins.
pub fn qece<T: Scalar>(records: &[PredictionRecord<T>], num_bins: usize) -> Result<T> {
    Ok(reliability(records, num_bins, BinningMode::EqualMass)?.calibration_error())
}

/// ECE over the fixed intervals `((b-1)/B, b/B]`.
pub fn ece_equal_width<T: Scalar>(records: &[PredictionRecord<T>], num_bins: usize) -> Result<T> {
    Ok(reliability(records, num_bins, BinningMode::EqualWidth)?.calibration_error())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    MaxIsWorst,
    MinIsWorst,
}

/// Group attaining the worst value; ties go to the lowest group id.
pub fn worst_subgroup<T: Scalar>(values: &[(usize, T)], direction: Direction) -> Result<(usize, T)> {
    let mut sorted = values.to_vec();
    sorted.sort_by_key(|(g, _)| *g);
    let mut iter = sorted.into_iter();
    let mut best = iter.next().ok_or(Error::Empty("no subgroup values"))?;
    for (g, v) in iter {
        let worse = match direction {
            Direction::MaxIsWorst => v > best.1,
            Direction::MinIsWorst => v < best.1,
        };
        if worse {
            best = (g, v);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SliceReport<T: Scalar> {
    /// `None` for the whole evaluated set.
    pub group: Option<usize>,
    pub count: usize,
    pub performance: T,
    pub qece: T,
    pub ece: T,
    pub accuracy: T,
    pub reliability: ReliabilityDiagram<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Extremum<T: Scalar> {
    pub group: usize,
    pub value: T,
}

/// Subgroup breakdown of one attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EvalReport<T: Scalar> {
    pub attribute: String,
    pub metric: PerformanceMetric,
    pub num_bins: usize,
    pub overall: SliceReport<T>,
    pub groups: Vec<SliceReport<T>>,
    /// Lowest per-group performance.
    pub worst_performance: Extremum<T>,
    /// Highest per-group Q-ECE.
    pub worst_qece: Extremum<T>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

fn slice_report<T: Scalar>(
    group: Option<usize>,
    records: &[PredictionRecord<T>],
    metric: PerformanceMetric,
    num_bins: usize,
) -> Result<SliceReport<T>> {
    let reliability = reliability(records, num_bins, BinningMode::EqualMass)?;
    Ok(SliceReport {
        group,
        count: records.len(),
        performance: metric.score(records)?,
        qece: reliability.calibration_error(),
        ece: ece_equal_width(records, num_bins)?,
        accuracy: accuracy(records)?,
        reliability,
    })
}

/// Per-group and overall metrics for one attribute. `groups[i]` is the group
/// of `records[i]`; groups with no records are omitted with a warning.
pub fn evaluate<T: Scalar>(
    records: &[PredictionRecord<T>],
    attribute_name: &str,
    groups: &[usize],
    num_groups: usize,
    metric: PerformanceMetric,
    num_bins: usize,
) -> Result<EvalReport<T>> {
    check_records(records, num_bins)?;
    if groups.len() != records.len() {
        return Err(Error::Shape(format!(
            "{} group ids for {} records",
            groups.len(),
            records.len()
        )));
    }
    if let Some(&g) = groups.iter().find(|&&g| g >= num_groups) {
        return Err(Error::invalid("groups", format!("id {g} >= {num_groups} groups")));
    }
    let overall = slice_report(None, records, metric, num_bins)?;
    let mut per_group = Vec::new();
    let mut warnings = Vec::new();
    for g in 0..num_groups {
        let members: Vec<PredictionRecord<T>> = records
            .iter()
            .zip(groups)
            .filter(|(_, &gi)| gi == g)
            .map(|(r, _)| r.clone())
            .collect();
        if members.is_empty() {
            let msg = format!("attribute {attribute_name}: group {g} has no evaluated samples");
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        per_group.push(slice_report(Some(g), &members, metric, num_bins)?);
    }
    let perf: Vec<(usize, T)> = per_group.iter().map(|s| (s.group.unwrap_or(0), s.performance)).collect();
    let cal: Vec<(usize, T)> = per_group.iter().map(|s| (s.group.unwrap_or(0), s.qece)).collect();
    let (pg, pv) = worst_subgroup(&perf, Direction::MinIsWorst)?;
    let (cg, cv) = worst_subgroup(&cal, Direction::MaxIsWorst)?;
    Ok(EvalReport {
        attribute: attribute_name.to_string(),
        metric,
        num_bins,
        overall,
        groups: per_group,
        worst_performance: Extremum { group: pg, value: pv },
        worst_qece: Extremum { group: cg, value: cv },
        warnings,
    })
}

/// [`evaluate`] for records predicted at `indices` of a dataset attribute.
pub fn evaluate_attribute<T: Scalar>(
    records: &[PredictionRecord<T>],
    attribute: &Attribute,
    indices: &[usize],
    metric: PerformanceMetric,
    num_bins: usize,
) -> Result<EvalReport<T>> {
    if indices.len() != records.len() {
        return Err(Error::Shape(format!(
            "{} indices for {} records",
            indices.len(),
            records.len()
        )));
    }
    let groups: Vec<usize> = indices.iter().map(|&i| attribute.groups[i]).collect();
    evaluate(records, &attribute.name, &groups, attribute.num_groups, metric, num_bins)
}

pub const RELIABILITY_CSV_HEADER: &str = "attribute,group,mode,bin,lower,upper,count,mean_confidence,accuracy";

fn opt<T: Scalar>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes one CSV row per reliability bin of every slice in the report. Each
/// row is prefixed with `prefix` (may be empty) so callers can add key columns.
pub fn write_reliability_rows<T: Scalar, W: Write>(report: &EvalReport<T>, prefix: &str, mut w: W) -> Result<()> {
    for slice in std::iter::once(&report.overall).chain(&report.groups) {
        let group = slice.group.map_or_else(|| "overall".to_string(), |g| g.to_string());
        let mode = match slice.reliability.mode {
            BinningMode::EqualMass => "equal_mass",
            BinningMode::EqualWidth => "equal_width",
        };
        for (b, bin) in slice.reliability.bins.iter().enumerate() {
            writeln!(
                w,
                "{prefix}{},{group},{mode},{b},{},{},{},{},{}",
                report.attribute,
                bin.lower,
                bin.upper,
                bin.count,
                opt(bin.mean_confidence),
                opt(bin.accuracy)
            )?;
        }
    }
    Ok(())
}
