use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_model, train_method, Method, TrainConfig, TrainedArtifacts};
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::scalar::Scalar;

/// Mean and sample standard deviation of worst-subgroup results for one
/// (method, attribute) pair across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TradeoffRow<T: Scalar> {
    pub method: Method,
    pub attribute: String,
    pub runs: usize,
    pub worst_performance_mean: T,
    pub worst_performance_std: T,
    pub worst_qece_mean: T,
    pub worst_qece_std: T,
    pub overall_performance_mean: T,
    pub overall_qece_mean: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TradeoffTable<T: Scalar> {
    pub metric: String,
    pub num_bins: usize,
    pub seeds: Vec<u64>,
    pub rows: Vec<TradeoffRow<T>>,
}

pub const TRADEOFF_CSV_HEADER: &str = "method,attribute,runs,worst_performance_mean,worst_performance_std,worst_qece_mean,worst_qece_std,overall_performance_mean,overall_qece_mean";

impl<T: Scalar> TradeoffTable<T> {
    pub fn row(&self, method: Method, attribute: &str) -> Option<&TradeoffRow<T>> {
        self.rows.iter().find(|r| r.method == method && r.attribute == attribute)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{TRADEOFF_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.method,
                r.attribute,
                r.runs,
                r.worst_performance_mean,
                r.worst_performance_std,
                r.worst_qece_mean,
                r.worst_qece_std,
                r.overall_performance_mean,
                r.overall_qece_mean
            )?;
        }
        Ok(())
    }
}

pub struct SweepRun<T: Scalar> {
    pub method: Method,
    pub seed: u64,
    pub artifacts: TrainedArtifacts<T>,
    pub reports: Vec<EvalReport<T>>,
}

pub struct SweepOutcome<T: Scalar> {
    pub table: TradeoffTable<T>,
    /// Ordered by method, then seed, as requested.
    pub runs: Vec<SweepRun<T>>,
}

/// Mean and standard deviation with denominator `n - 1` (0 for a single value).
fn mean_std<T: Scalar>(xs: &[T]) -> (T, T) {
    let n = T::from_count(xs.len());
    let mean = xs.iter().copied().sum::<T>() / n;
    if xs.len() < 2 {
        return (mean, T::zero());
    }
    let ss: T = xs.iter().map(|&x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - T::one())).sqrt())
}

/// Trains and evaluates every (method, seed) pair and aggregates the
/// worst-subgroup results. Runs execute on up to `max_threads` threads
/// (`None`: rayon's default); results do not depend on the thread count.
#[allow(clippy::too_many_arguments)]
pub fn sweep<T: Scalar>(
    base: &TrainConfig<T>,
    methods: &[Method],
    seeds: &[u64],
    dataset: &Dataset<T>,
    split: &Split,
    attributes: &[String],
    num_bins: usize,
    max_threads: Option<usize>,
) -> Result<SweepOutcome<T>> {
    if methods.is_empty() {
        return Err(Error::invalid("methods", "need at least one method"));
    }
    if seeds.is_empty() {
        return Err(Error::invalid("seeds", "need at least one seed"));
    }
    if attributes.is_empty() {
        return Err(Error::invalid("attributes", "need at least one attribute"));
    }
    for a in attributes {
        dataset.require_attribute(a)?;
    }
    let jobs: Vec<(Method, u64)> = methods
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();

    let run_one = |&(method, seed): &(Method, u64)| -> Result<SweepRun<T>> {
        let config = TrainConfig {
            method,
            seed,
            ..base.clone()
        };
        let wrap = |e: Error| Error::Run {
            method: method.to_string(),
            seed,
            source: Box::new(e),
        };
        let artifacts = train_method(&config, dataset, split).map_err(wrap)?;
        let reports = evaluate_model(&artifacts, dataset, &split.test, attributes, num_bins).map_err(wrap)?;
        log::info!(
            "sweep: {method} seed {seed} done ({})",
            reports
                .iter()
                .map(|r| format!("{} worst Q-ECE {:.4}", r.attribute, r.worst_qece.value))
                .collect::<Vec<_>>()
                .join(", ")
        );
        Ok(SweepRun {
            method,
            seed,
            artifacts,
            reports,
        })
    };

    let results: Vec<Result<SweepRun<T>>> = match max_threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::invalid("threads", e.to_string()))?
            .install(|| jobs.par_iter().map(run_one).collect()),
        None => jobs.par_iter().map(run_one).collect(),
    };
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for &method in methods {
        let of_method: Vec<&SweepRun<T>> = runs.iter().filter(|r| r.method == method).collect();
        for (a, attribute) in attributes.iter().enumerate() {
            let pick = |f: &dyn Fn(&EvalReport<T>) -> T| -> Vec<T> { of_method.iter().map(|r| f(&r.reports[a])).collect() };
            let (wp_mean, wp_std) = mean_std(&pick(&|r| r.worst_performance.value));
            let (wq_mean, wq_std) = mean_std(&pick(&|r| r.worst_qece.value));
            let (op_mean, _) = mean_std(&pick(&|r| r.overall.performance));
            let (oq_mean, _) = mean_std(&pick(&|r| r.overall.qece));
            rows.push(TradeoffRow {
                method,
                attribute: attribute.clone(),
                runs: of_method.len(),
                worst_performance_mean: wp_mean,
                worst_performance_std: wp_std,
                worst_qece_mean: wq_mean,
                worst_qece_std: wq_std,
                overall_performance_mean: op_mean,
                overall_qece_mean: oq_mean,
            });
        }
    }
    let metric = runs
        .first()
        .and_then(|r| r.reports.first())
        .map(|r| r.metric.name().to_string())
        .unwrap_or_default();
    Ok(SweepOutcome {
        table: TradeoffTable {
            metric,
            num_bins,
            seeds: seeds.to_vec(),
            rows,
        },
        runs,
    })
}
