//! Tabular datasets with per-sample subgroup attributes.
//!
//! A [`Dataset`] holds a dense feature matrix, class labels, and any number of
//! categorical attributes (age band, sex, ...) that are used only to slice
//! evaluation results. Datasets come from the synthetic generator, which can
//! inject group-dependent label noise, or from CSV files:
//!
//! ```text
//! f0,f1,label,attr_sex
//! 0.12,-1.5,1,0
//! ```
//!
//! Feature columns are named `f<j>`, the single `label` column holds a class
//! index, and `attr_<name>` columns hold group indices. No quoting, no missing
//! values.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A categorical per-sample attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    /// Group index of every sample.
    pub groups: Vec<usize>,
    pub num_groups: usize,
}

impl Attribute {
    /// Builds an attribute with `num_groups = 1 + max(groups)`.
    pub fn from_groups(name: impl Into<String>, groups: Vec<usize>) -> Self {
        let num_groups = groups.iter().max().map_or(0, |m| m + 1);
        Attribute {
            name: name.into(),
            groups,
            num_groups,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Array2<T>,
    labels: Vec<usize>,
    num_classes: usize,
    attributes: Vec<Attribute>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        features: Array2<T>,
        labels: Vec<usize>,
        num_classes: usize,
        attributes: Vec<Attribute>,
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::Empty("dataset has no samples"));
        }
        if labels.len() != n {
            return Err(Error::Shape(format!(
                "{} labels for {} feature rows",
                labels.len(),
                n
            )));
        }
        if num_classes < 2 {
            return Err(Error::invalid("num_classes", "need at least 2 classes"));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::invalid(
                "labels",
                format!("label {bad} out of range for {num_classes} classes"),
            ));
        }
        for (i, attr) in attributes.iter().enumerate() {
            if attr.groups.len() != n {
                return Err(Error::Shape(format!(
                    "attribute {:?} has {} values for {} samples",
                    attr.name,
                    attr.groups.len(),
                    n
                )));
            }
            if let Some(&bad) = attr.groups.iter().find(|&&g| g >= attr.num_groups) {
                return Err(Error::invalid(
                    format!("attribute {}", attr.name),
                    format!("group {bad} out of range for {} groups", attr.num_groups),
                ));
            }
            let first = attr.groups[0];
            if attr.groups.iter().all(|&g| g == first) {
                return Err(Error::invalid(
                    format!("attribute {}", attr.name),
                    "needs at least 2 distinct groups present",
                ));
            }
            if attributes[..i].iter().any(|a| a.name == attr.name) {
                return Err(Error::invalid(
                    "attributes",
                    format!("duplicate attribute {:?}", attr.name),
                ));
            }
        }
        Ok(Dataset {
            features,
            labels,
            num_classes,
            attributes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Array2<T> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    /// Like [`Dataset::attribute`] but reports a missing name as an error.
    pub fn require_attribute(&self, name: &str) -> Result<&Attribute> {
        self.attribute(name).ok_or_else(|| {
            let known: Vec<&str> = self.attributes.iter().map(|a| a.name.as_str()).collect();
            Error::invalid(
                "attribute",
                format!("{name:?} not in dataset (known: {})", known.join(", ")),
            )
        })
    }

    /// Copies the rows at `indices` into a new matrix.
    pub fn gather_features(&self, indices: &[usize]) -> Array2<T> {
        let d = self.num_features();
        let mut out = Array2::zeros((indices.len(), d));
        for (r, &i) in indices.iter().enumerate() {
            out.row_mut(r).assign(&self.features.row(i));
        }
        out
    }

    pub fn gather_labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }
}

// ---------------------------------------------------------------------------
// Synthetic generation

/// One attribute of a synthetic cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    /// Group membership probabilities; must sum to 1.
    pub fractions: Vec<f64>,
    /// Label-flip probability per group, each in `[0, 0.5)`. Only the first
    /// attribute's rates are applied; empty means all zero.
    #[serde(default)]
    pub noise_rates: Vec<f64>,
    /// Offset added to every feature coordinate of the group's samples; empty
    /// means all zero.
    #[serde(default)]
    pub feature_shift: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_features: usize,
    pub n_classes: usize,
    /// Euclidean distance between any two class means.
    pub class_separation: f64,
    pub attributes: Vec<AttributeDef>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::invalid("n_classes", "need at least 2 classes"));
        }
        if self.n_features < self.n_classes {
            return Err(Error::invalid(
                "n_features",
                format!(
                    "class means sit on coordinate axes, so n_features ({}) must be >= n_classes ({})",
                    self.n_features, self.n_classes
                ),
            ));
        }
        if self.n_samples < self.n_classes {
            return Err(Error::invalid(
                "n_samples",
                format!("{} samples for {} classes", self.n_samples, self.n_classes),
            ));
        }
        if !(self.class_separation.is_finite() && self.class_separation > 0.0) {
            return Err(Error::invalid("class_separation", "must be positive and finite"));
        }
        for (a, def) in self.attributes.iter().enumerate() {
            let field = |what: &str| format!("attributes[{a}].{what}");
            if def.fractions.len() < 2 {
                return Err(Error::invalid(field("fractions"), "need at least 2 groups"));
            }
            if def.fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
                return Err(Error::invalid(field("fractions"), "must be non-negative"));
            }
            let total: f64 = def.fractions.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(field("fractions"), format!("sum to {total}, not 1")));
            }
            let g = def.fractions.len();
            if !def.noise_rates.is_empty() && def.noise_rates.len() != g {
                return Err(Error::invalid(field("noise_rates"), format!("expected {g} values")));
            }
            if def.noise_rates.iter().any(|r| !(0.0..0.5).contains(r)) {
                return Err(Error::invalid(field("noise_rates"), "each rate must lie in [0, 0.5)"));
            }
            if !def.feature_shift.is_empty() && def.feature_shift.len() != g {
                return Err(Error::invalid(field("feature_shift"), format!("expected {g} values")));
            }
            if def.feature_shift.iter().any(|s| !s.is_finite()) {
                return Err(Error::invalid(field("feature_shift"), "must be finite"));
            }
            if self.attributes[..a].iter().any(|o| o.name == def.name) {
                return Err(Error::invalid(field("name"), format!("duplicate name {:?}", def.name)));
            }
        }
        Ok(())
    }

    /// MS-like cohort: binary outcome, label noise concentrated in the older
    /// `age` group, `sex` acting only through a feature shift.
    pub fn biased_binary(n_samples: usize) -> Self {
        SyntheticSpec {
            n_samples,
            n_features: 8,
            n_classes: 2,
            class_separation: 2.5,
            attributes: vec![
                AttributeDef {
                    name: "age".into(),
                    fractions: vec![0.7, 0.3],
                    noise_rates: vec![0.0, 0.3],
                    feature_shift: vec![0.0, 0.5],
                },
                AttributeDef {
                    name: "sex".into(),
                    fractions: vec![0.5, 0.5],
                    noise_rates: vec![],
                    feature_shift: vec![0.0, 0.3],
                },
            ],
        }
    }

    /// Seven-class analogue of [`SyntheticSpec::biased_binary`].
    pub fn biased_multiclass(n_samples: usize) -> Self {
        SyntheticSpec {
            n_samples,
            n_features: 10,
            n_classes: 7,
            class_separation: 3.0,
            attributes: vec![
                AttributeDef {
                    name: "age".into(),
                    fractions: vec![0.7, 0.3],
                    noise_rates: vec![0.0, 0.3],
                    feature_shift: vec![0.0, 0.5],
                },
                AttributeDef {
                    name: "sex".into(),
                    fractions: vec![0.5, 0.5],
                    noise_rates: vec![],
                    feature_shift: vec![0.0, 0.3],
                },
            ],
        }
    }

    /// Looks up a named preset at the given size.
    pub fn preset(name: &str, n_samples: usize) -> Option<Self> {
        match name {
            "biased-binary" => Some(Self::biased_binary(n_samples)),
            "biased-multiclass" => Some(Self::biased_multiclass(n_samples)),
            _ => None,
        }
    }
}

/// Default size of the preset cohorts.
pub const PRESET_SAMPLES: usize = 4000;

fn draw_categorical<R: Rng>(rng: &mut R, fractions: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (g, f) in fractions.iter().enumerate() {
        acc += f;
        if u < acc {
            return g;
        }
    }
    // rounding slack: land in the last group with positive mass
    fractions.iter().rposition(|&f| f > 0.0).unwrap_or(0)
}

/// Generates a dataset and also returns each sample's pre-noise class.
///
/// Use for inspecting the injected noise; training code should only ever see
/// [`generate_synthetic`].
pub fn generate_synthetic_with_latent<T: Scalar>(
    spec: &SyntheticSpec,
    seed: u64,
) -> Result<(Dataset<T>, Vec<usize>)> {
    spec.validate()?;
    let n = spec.n_samples;
    let d = spec.n_features;
    let c = spec.n_classes;
    let axis_scale = spec.class_separation / std::f64::consts::SQRT_2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut features = Array2::<T>::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    let mut latent = Vec::with_capacity(n);
    let mut groups: Vec<Vec<usize>> = vec![Vec::with_capacity(n); spec.attributes.len()];

    for i in 0..n {
        let mut shift = 0.0;
        for (a, def) in spec.attributes.iter().enumerate() {
            let g = draw_categorical(&mut rng, &def.fractions);
            shift += def.feature_shift.get(g).copied().unwrap_or(0.0);
            groups[a].push(g);
        }
        let class = rng.random_range(0..c);
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            let mean = if j == class { axis_scale } else { 0.0 };
            features[[i, j]] = T::lit(mean + shift + z);
        }
        let rate = spec
            .attributes
            .first()
            .and_then(|def| def.noise_rates.get(groups[0][i]).copied())
            .unwrap_or(0.0);
        let u: f64 = rng.random();
        let label = if u < rate {
            let other = rng.random_range(0..c - 1);
            if other >= class {
                other + 1
            } else {
                other
            }
        } else {
            class
        };
        labels.push(label);
        latent.push(class);
    }

    let attributes = spec
        .attributes
        .iter()
        .zip(groups)
        .map(|(def, g)| Attribute {
            name: def.name.clone(),
            groups: g,
            num_groups: def.fractions.len(),
        })
        .collect();
    let dataset = Dataset::new(features, labels, c, attributes)?;
    Ok((dataset, latent))
}

/// Draws a synthetic cohort: Gaussian classes on coordinate axes, per-group
/// feature shifts, and label flips at the first attribute's group noise rate.
pub fn generate_synthetic<T: Scalar>(spec: &SyntheticSpec, seed: u64) -> Result<Dataset<T>> {
    generate_synthetic_with_latent(spec, seed).map(|(d, _)| d)
}

// ---------------------------------------------------------------------------
// CSV

enum Column {
    Feature,
    Label,
    Attribute(String),
}

/// Parses the CSV schema from a reader. Returns the dataset and any warnings
/// (absent classes). `source` is only used in error messages.
pub fn parse_csv<T: Scalar, R: BufRead>(
    reader: R,
    source: &Path,
) -> Result<(Dataset<T>, Vec<String>)> {
    let err = |line: usize, column: usize, message: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        column,
        message,
    };

    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, line)) => {
                let line = line?;
                let line = line.trim_end_matches('\r');
                if !line.trim().is_empty() {
                    break line.to_string();
                }
            }
            None => return Err(err(1, 1, "missing header row".into())),
        }
    };

    let mut columns = Vec::new();
    let mut label_col = None;
    for (j, name) in header.split(',').enumerate() {
        let name = name.trim();
        let col = if name == "label" {
            if label_col.replace(j).is_some() {
                return Err(err(1, j + 1, "duplicate label column".into()));
            }
            Column::Label
        } else if let Some(attr) = name.strip_prefix("attr_") {
            if attr.is_empty() {
                return Err(err(1, j + 1, "attribute column without a name".into()));
            }
            Column::Attribute(attr.to_string())
        } else if name.len() > 1
            && name.starts_with('f')
            && name[1..].bytes().all(|b| b.is_ascii_digit())
        {
            Column::Feature
        } else {
            return Err(err(1, j + 1, format!("unrecognized column {name:?}")));
        };
        columns.push(col);
    }
    if label_col.is_none() {
        return Err(err(1, 1, "header has no label column".into()));
    }
    let n_features = columns.iter().filter(|c| matches!(c, Column::Feature)).count();
    if n_features == 0 {
        return Err(err(1, 1, "header has no feature columns".into()));
    }
    let attr_names: Vec<String> = columns
        .iter()
        .filter_map(|c| match c {
            Column::Attribute(n) => Some(n.clone()),
            _ => None,
        })
        .collect();

    let mut values: Vec<T> = Vec::new();
    let mut labels = Vec::new();
    let mut attrs: Vec<Vec<usize>> = vec![Vec::new(); attr_names.len()];
    for (lineno, line) in lines {
        let line = line?;
        let line = line.trim_end_matches('\r');
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            return Err(err(
                lineno,
                cells.len().min(columns.len()) + 1,
                format!("expected {} fields, found {}", columns.len(), cells.len()),
            ));
        }
        let mut a = 0;
        for (j, (cell, col)) in cells.iter().zip(&columns).enumerate() {
            let cell = cell.trim();
            match col {
                Column::Feature => {
                    let v: T = cell
                        .parse()
                        .ok()
                        .filter(|v: &T| v.is_finite())
                        .ok_or_else(|| err(lineno, j + 1, format!("non-numeric feature {cell:?}")))?;
                    values.push(v);
                }
                Column::Label => {
                    let y: usize = cell.parse().map_err(|_| {
                        err(lineno, j + 1, format!("label {cell:?} is not a non-negative integer"))
                    })?;
                    labels.push(y);
                }
                Column::Attribute(_) => {
                    let g: usize = cell.parse().map_err(|_| {
                        err(lineno, j + 1, format!("group {cell:?} is not a non-negative integer"))
                    })?;
                    attrs[a].push(g);
                    a += 1;
                }
            }
        }
    }
    if labels.is_empty() {
        return Err(err(2, 1, "no data rows".into()));
    }

    let n = labels.len();
    let features = Array2::from_shape_vec((n, n_features), values)
        .map_err(|e| Error::Shape(e.to_string()))?;
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    if num_classes < 2 {
        return Err(err(2, label_col.unwrap_or(0) + 1, "labels contain a single class".into()));
    }
    let mut present = vec![false; num_classes];
    for &y in &labels {
        present[y] = true;
    }
    let warnings: Vec<String> = present
        .iter()
        .enumerate()
        .filter(|(_, &p)| !p)
        .map(|(c, _)| format!("class {c} is absent from {}", source.display()))
        .collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    let attributes = attr_names
        .into_iter()
        .zip(attrs)
        .map(|(name, groups)| Attribute::from_groups(name, groups))
        .collect();
    let dataset = Dataset::new(features, labels, num_classes, attributes)?;
    Ok((dataset, warnings))
}

pub fn load_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let file = File::open(path)?;
    parse_csv(BufReader::new(file), path).map(|(d, _)| d)
}

/// Writes the dataset in the CSV schema. Values use the shortest
/// representation that parses back to the same float.
pub fn write_csv<T: Scalar, W: Write>(dataset: &Dataset<T>, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let mut header: Vec<String> = (0..dataset.num_features()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    header.extend(dataset.attributes.iter().map(|a| format!("attr_{}", a.name)));
    writeln!(w, "{}", header.join(","))?;
    for i in 0..dataset.len() {
        let mut first = true;
        for v in dataset.features.row(i) {
            if !first {
                w.write_all(b",")?;
            }
            first = false;
            write!(w, "{v}")?;
        }
        write!(w, ",{}", dataset.labels[i])?;
        for a in &dataset.attributes {
            write!(w, ",{}", a.groups[i])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv<T: Scalar>(dataset: &Dataset<T>, path: impl AsRef<Path>) -> Result<()> {
    write_csv(dataset, File::create(path)?)
}

// ---------------------------------------------------------------------------
// Splitting

/// Disjoint train/validation/test index sets covering a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Largest-remainder apportionment of `n` items over `fractions`; every part
/// ends within 1 of its exact share. Ties go to the earlier part.
fn apportion(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes = [0usize; 3];
    for (s, e) in sizes.iter_mut().zip(&exact) {
        *s = (e + 1e-9).floor() as usize;
    }
    let mut left = n.saturating_sub(sizes.iter().sum());
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - sizes[a] as f64;
        let rb = exact[b] - sizes[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &p in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[p] += 1;
        left -= 1;
    }
    sizes
}

pub fn split<T: Scalar>(
    dataset: &Dataset<T>,
    fractions: [f64; 3],
    seed: u64,
    stratify_by_label: bool,
) -> Result<Split> {
    if fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Error::invalid("fractions", "each fraction must be positive"));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("fractions", format!("sum to {total}, not 1")));
    }
    let n = dataset.len();
    if n < 3 {
        return Err(Error::invalid("dataset", format!("{n} samples cannot fill three parts")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let strata: Vec<Vec<usize>> = if stratify_by_label {
        let mut by_class = vec![Vec::new(); dataset.num_classes()];
        for (i, &y) in dataset.labels().iter().enumerate() {
            by_class[y].push(i);
        }
        by_class
    } else {
        vec![(0..n).collect()]
    };

    let mut parts: [Vec<usize>; 3] = Default::default();
    for mut stratum in strata {
        stratum.shuffle(&mut rng);
        let sizes = apportion(stratum.len(), &fractions);
        let mut rest = stratum.as_slice();
        for (part, size) in parts.iter_mut().zip(sizes) {
            let (take, tail) = rest.split_at(size);
            part.extend_from_slice(take);
            rest = tail;
        }
    }
    for (name, part) in ["train", "val", "test"].iter().zip(parts.iter_mut()) {
        if part.is_empty() {
            return Err(Error::invalid(
                "fractions",
                format!("{name} part is empty for {n} samples"),
            ));
        }
        part.sort_unstable();
    }
    let [train, val, test] = parts;
    Ok(Split { train, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_attr_spec(n: usize, noise: [f64; 2]) -> SyntheticSpec {
        SyntheticSpec {
            n_samples: n,
            n_features: 2,
            n_classes: 2,
            class_separation: 2.0,
            attributes: vec![AttributeDef {
                name: "grp".into(),
                fractions: vec![0.5, 0.5],
                noise_rates: noise.to_vec(),
                feature_shift: vec![],
            }],
        }
    }

    #[test]
    fn zero_noise_keeps_latent_labels() {
        let (ds, latent) =
            generate_synthetic_with_latent::<f64>(&one_attr_spec(100, [0.0, 0.0]), 3).unwrap();
        assert_eq!(ds.labels(), latent.as_slice());
        let attr = ds.attribute("grp").unwrap();
        let g0 = attr.groups.iter().filter(|&&g| g == 0).count();
        let g1 = attr.groups.iter().filter(|&&g| g == 1).count();
        assert_eq!(g0 + g1, 100);
    }

    #[test]
    fn noisy_group_flip_rate() {
        let (ds, latent) =
            generate_synthetic_with_latent::<f64>(&one_attr_spec(10_000, [0.0, 0.4]), 7).unwrap();
        let groups = &ds.attribute("grp").unwrap().groups;
        let (mut flips, mut total, mut clean_flips) = (0usize, 0usize, 0usize);
        for i in 0..ds.len() {
            let flipped = ds.labels()[i] != latent[i];
            if groups[i] == 1 {
                total += 1;
                flips += flipped as usize;
            } else {
                clean_flips += flipped as usize;
            }
        }
        let rate = flips as f64 / total as f64;
        assert!((rate - 0.4).abs() <= 0.02, "flip rate {rate}");
        assert_eq!(clean_flips, 0);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec::biased_binary(500);
        let a: Dataset<f64> = generate_synthetic(&spec, 11).unwrap();
        let b: Dataset<f64> = generate_synthetic(&spec, 11).unwrap();
        assert_eq!(a, b);
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        write_csv(&a, &mut ba).unwrap();
        write_csv(&b, &mut bb).unwrap();
        assert_eq!(ba, bb);
        let c: Dataset<f64> = generate_synthetic(&spec, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn group_fractions_within_three_sigma() {
        let spec = SyntheticSpec::biased_binary(10_000);
        let ds: Dataset<f64> = generate_synthetic(&spec, 1).unwrap();
        for def in &spec.attributes {
            let attr = ds.attribute(&def.name).unwrap();
            for (g, &p) in def.fractions.iter().enumerate() {
                let count = attr.groups.iter().filter(|&&x| x == g).count() as f64;
                let n = 10_000.0;
                let sigma = (n * p * (1.0 - p)).sqrt();
                assert!((count - n * p).abs() <= 3.0 * sigma, "{} group {g}: {count}", def.name);
            }
        }
    }

    #[test]
    fn class_means_are_separated_as_specified() {
        let spec = SyntheticSpec {
            n_samples: 20_000,
            n_features: 3,
            n_classes: 3,
            class_separation: 4.0,
            attributes: vec![],
        };
        let (ds, latent) = generate_synthetic_with_latent::<f64>(&spec, 5).unwrap();
        let mut means = [[0.0f64; 3]; 3];
        let mut counts = [0usize; 3];
        for (i, &c) in latent.iter().enumerate() {
            counts[c] += 1;
            for (m, v) in means[c].iter_mut().zip(ds.features().row(i)) {
                *m += v;
            }
        }
        for (m, &n) in means.iter_mut().zip(&counts) {
            m.iter_mut().for_each(|v| *v /= n as f64);
        }
        let dist = |a: &[f64; 3], b: &[f64; 3]| {
            a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        };
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            assert!((dist(&means[a], &means[b]) - 4.0).abs() < 0.1);
        }
    }

    #[test]
    fn invalid_specs_name_the_field() {
        let mut spec = one_attr_spec(100, [0.0, 0.5]);
        let e = spec.validate().unwrap_err().to_string();
        assert!(e.contains("noise_rates"), "{e}");
        spec.attributes[0].noise_rates = vec![0.0, 0.1];
        spec.attributes[0].fractions = vec![0.5, 0.4];
        assert!(spec.validate().unwrap_err().to_string().contains("fractions"));
        spec.attributes[0].fractions = vec![0.5, 0.5];
        spec.n_samples = 1;
        assert!(spec.validate().unwrap_err().to_string().contains("n_samples"));
        spec.n_samples = 10;
        spec.class_separation = 0.0;
        assert!(spec.validate().unwrap_err().to_string().contains("class_separation"));
    }

    fn parse(text: &str) -> Result<(Dataset<f64>, Vec<String>)> {
        parse_csv(text.as_bytes(), Path::new("mem.csv"))
    }

    #[test]
    fn csv_schema_echo() {
        let (ds, warnings) =
            parse("f0,f1,label,attr_sex\n0.5,1,0,0\n-2,3.25,1,1\n1e-3,0,1,0\n").unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.num_features(), 2);
        assert_eq!(ds.attributes().len(), 1);
        assert_eq!(ds.attributes()[0].name, "sex");
        assert_eq!(ds.features()[[1, 1]], 3.25);
        assert!(warnings.is_empty());
    }

    #[test]
    fn csv_absent_class_warns() {
        let (ds, warnings) = parse("f0,label,attr_a\n0,0,0\n1,2,1\n").unwrap();
        assert_eq!(ds.num_classes(), 3);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("class 1"));
    }

    #[test]
    fn csv_errors_carry_location() {
        let e = parse("f0,label\n0.1,0\nabc,1\n").unwrap_err();
        match e {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (3, 1)),
            other => panic!("{other}"),
        }
        let e = parse("f0,label\n0.1,0\n0.2,1,5\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        let e = parse("f0,label\n0.1,-1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, column: 2, .. }), "{e}");
        let e = parse("f0,f1\n0.1,1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }), "{e}");
        assert!(matches!(parse("").unwrap_err(), Error::Parse { .. }));
        let e = parse("f0,label,attr_g\n0,0,1\n1,1,1\n").unwrap_err();
        assert!(e.to_string().contains("attribute g"), "{e}");
    }

    #[test]
    fn csv_round_trip() {
        let ds: Dataset<f64> = generate_synthetic(&SyntheticSpec::biased_multiclass(200), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        save_csv(&ds, &path).unwrap();
        let back: Dataset<f64> = load_csv(&path).unwrap();
        assert_eq!(back.features(), ds.features());
        assert_eq!(back.labels(), ds.labels());
        assert_eq!(back.attributes(), ds.attributes());
        // num_classes comes from the max label, equal unless the top class is absent
        assert_eq!(back.num_classes(), ds.num_classes());
    }

    fn toy(n: usize, classes: usize) -> Dataset<f64> {
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        Dataset::new(Array2::zeros((n, 1)), labels, classes, vec![]).unwrap()
    }

    #[test]
    fn split_exact_sizes() {
        let s = split(&toy(10, 2), [0.8, 0.1, 0.1], 0, false).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn split_stratified_counts() {
        let ds = toy(100, 2);
        let s = split(&ds, [0.8, 0.1, 0.1], 4, true).unwrap();
        for part in [&s.train, &s.val, &s.test] {
            let ones = part.iter().filter(|&&i| ds.labels()[i] == 1).count();
            assert_eq!(ones * 2, part.len());
        }
        assert_eq!(s.train.len(), 80);
    }

    #[test]
    fn split_deterministic_and_seeded() {
        let ds = toy(57, 3);
        let a = split(&ds, [0.7, 0.15, 0.15], 9, true).unwrap();
        assert_eq!(a, split(&ds, [0.7, 0.15, 0.15], 9, true).unwrap());
        assert_ne!(a, split(&ds, [0.7, 0.15, 0.15], 10, true).unwrap());
    }

    #[test]
    fn split_rejects_empty_parts() {
        assert!(split(&toy(3, 2), [0.98, 0.01, 0.01], 0, false).is_err());
        assert!(split(&toy(10, 2), [0.5, 0.5, 0.0], 0, false).is_err());
        assert!(split(&toy(10, 2), [0.5, 0.3, 0.3], 0, false).is_err());
    }
}
