//! Calibration-gap clustering.
//!
//! Each training sample gets a gap `|confidence - 1{prediction correct}|`:
//! near 0 for confident hits, near 1 for confident misses, in between for
//! hesitant predictions. The gaps are clustered with one-dimensional k-means;
//! centers are returned in ascending order so the last cluster always holds
//! the worst-calibrated samples.
//!
//! Lloyd iterations from a k-means++ start can stall in a local optimum. In one
//! dimension optimal clusters are contiguous runs of the sorted values, so the
//! exact optimum is available by dynamic programming over split points; the
//! Lloyd result is replaced by it whenever it is strictly better.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::PredictionRecord;
use crate::scalar::Scalar;

pub const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ClusterAssignment<T: Scalar> {
    /// Effective number of clusters (at most the number of distinct values).
    pub k: usize,
    pub requested_k: usize,
    /// Ascending.
    pub centers: Vec<T>,
    pub ids: Vec<usize>,
    pub inertia: T,
}

impl<T: Scalar> ClusterAssignment<T> {
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for &id in &self.ids {
            counts[id] += 1;
        }
        counts
    }

    /// Per-cluster member lists (indices into the clustered values).
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &id) in self.ids.iter().enumerate() {
            out[id].push(i);
        }
        out
    }

    /// Summary of the clusters over the `values` they were fitted on.
    pub fn report(&self, values: &[T]) -> Result<ClusterReport<T>> {
        if values.len() != self.ids.len() {
            return Err(Error::Shape(format!(
                "{} values for {} assignments",
                values.len(),
                self.ids.len()
            )));
        }
        let counts = self.counts();
        let mut sums = vec![T::zero(); self.k];
        for (&v, &id) in values.iter().zip(&self.ids) {
            sums[id] += v;
        }
        let mean_gap = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| (c > 0).then(|| s / T::from_count(c)))
            .collect();
        Ok(ClusterReport {
            k: self.k,
            requested_k: self.requested_k,
            centers: self.centers.clone(),
            counts,
            mean_gap,
            inertia: self.inertia,
        })
    }
}

/// JSON-facing cluster summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ClusterReport<T: Scalar> {
    pub k: usize,
    pub requested_k: usize,
    pub centers: Vec<T>,
    pub counts: Vec<usize>,
    pub mean_gap: Vec<Option<T>>,
    pub inertia: T,
}

/// `|confidence - 1{predicted == label}|` per record.
pub fn compute_gaps<T: Scalar>(records: &[PredictionRecord<T>]) -> Vec<T> {
    records
        .iter()
        .map(|r| {
            let hit = if r.correct() { T::one() } else { T::zero() };
            (r.confidence - hit).abs()
        })
        .collect()
}

/// Nearest center per value; ties go to the lower index.
pub fn assign_clusters<T: Scalar>(values: &[T], centers: &[T]) -> Vec<usize> {
    values.iter().map(|&v| nearest(v, centers)).collect()
}

fn nearest<T: Scalar>(v: T, centers: &[T]) -> usize {
    let mut best = 0;
    let mut best_d = (v - centers[0]).abs();
    for (j, &c) in centers.iter().enumerate().skip(1) {
        let d = (v - c).abs();
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

fn inertia_of<T: Scalar>(values: &[T], centers: &[T], ids: &[usize]) -> T {
    values
        .iter()
        .zip(ids)
        .map(|(&v, &id)| {
            let d = v - centers[id];
            d * d
        })
        .sum()
}

fn kmeans_plus_plus<T: Scalar, R: Rng>(values: &[T], k: usize, rng: &mut R) -> Vec<T> {
    let mut centers = vec![values[rng.random_range(0..values.len())]];
    let mut d2: Vec<f64> = values
        .iter()
        .map(|&v| (v - centers[0]).as_f64().powi(2))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        // fall back to the last positive-weight point when rounding overshoots
        let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
        for (i, &d) in d2.iter().enumerate() {
            acc += d;
            if d > 0.0 && acc > target {
                pick = i;
                break;
            }
        }
        let c = values[pick];
        centers.push(c);
        for (d, &v) in d2.iter_mut().zip(values) {
            *d = d.min((v - c).as_f64().powi(2));
        }
    }
    centers
}

fn means<T: Scalar>(values: &[T], ids: &[usize], centers: &mut [T]) {
    let k = centers.len();
    let mut sums = vec![T::zero(); k];
    let mut counts = vec![0usize; k];
    for (&v, &id) in values.iter().zip(ids) {
        sums[id] += v;
        counts[id] += 1;
    }
    for j in 0..k {
        if counts[j] > 0 {
            centers[j] = sums[j] / T::from_count(counts[j]);
        }
    }
}

/// Gives every empty cluster the point farthest from its current center.
fn repair_empty<T: Scalar>(values: &[T], centers: &mut [T], ids: &mut [usize]) {
    let k = centers.len();
    loop {
        let mut counts = vec![0usize; k];
        for &id in ids.iter() {
            counts[id] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = T::neg_infinity();
        for (i, (&v, &id)) in values.iter().zip(ids.iter()).enumerate() {
            if counts[id] < 2 {
                continue;
            }
            let d = (v - centers[id]).abs();
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let Some(i) = far else { return };
        ids[i] = empty;
        centers[empty] = values[i];
    }
}

/// Lloyd's algorithm from `centers`. Returns final ids and the inertia after
/// each center update.
fn lloyd<T: Scalar>(values: &[T], centers: &mut [T]) -> (Vec<usize>, Vec<T>) {
    let mut ids = assign_clusters(values, centers);
    let mut trace = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        repair_empty(values, centers, &mut ids);
        means(values, &ids, centers);
        trace.push(inertia_of(values, centers, &ids));
        let next = assign_clusters(values, centers);
        if next == ids {
            break;
        }
        ids = next;
    }
    (ids, trace)
}

/// Exact 1-D k-means: optimal split of the sorted values into `k` contiguous
/// runs. Returns the run means. Divide-and-conquer over the monotone optimal
/// split point keeps this at O(k n log n).
fn optimal_contiguous_centers<T: Scalar>(values: &[T], k: usize) -> Vec<T> {
    let mut sorted: Vec<T> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len();
    let xs: Vec<f64> = sorted.iter().map(|v| v.as_f64()).collect();
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for i in 0..n {
        s1[i + 1] = s1[i] + xs[i];
        s2[i + 1] = s2[i] + xs[i] * xs[i];
    }
    // cost of the run xs[i..=j]
    let cost = |i: usize, j: usize| -> f64 {
        let len = (j + 1 - i) as f64;
        let s = s1[j + 1] - s1[i];
        (s2[j + 1] - s2[i] - s * s / len).max(0.0)
    };

    let mut dp: Vec<f64> = (0..n).map(|j| cost(0, j)).collect();
    let mut starts: Vec<Vec<usize>> = vec![vec![0; n]];

    struct Layer<'a> {
        prev: &'a [f64],
        cur: &'a mut [f64],
        arg: &'a mut [usize],
    }
    fn solve(layer: &mut Layer, cost: &dyn Fn(usize, usize) -> f64, lo: usize, hi: usize, opt_lo: usize, opt_hi: usize) {
        if lo > hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let mut best = f64::INFINITY;
        let mut best_i = opt_lo;
        for i in opt_lo..=opt_hi.min(mid) {
            let v = layer.prev[i - 1] + cost(i, mid);
            if v < best {
                best = v;
                best_i = i;
            }
        }
        layer.cur[mid] = best;
        layer.arg[mid] = best_i;
        if mid > lo {
            solve(layer, cost, lo, mid - 1, opt_lo, best_i);
        }
        solve(layer, cost, mid + 1, hi, best_i, opt_hi);
    }

    for m in 1..k {
        let mut cur = vec![f64::INFINITY; n];
        let mut arg = vec![0usize; n];
        let mut layer = Layer {
            prev: &dp,
            cur: &mut cur,
            arg: &mut arg,
        };
        solve(&mut layer, &cost, m, n - 1, m, n - 1);
        dp = cur;
        starts.push(arg);
    }

    let mut centers = Vec::with_capacity(k);
    let mut end = n - 1;
    for m in (0..k).rev() {
        let start = starts[m][end];
        let run = &sorted[start..=end];
        centers.push(run.iter().copied().sum::<T>() / T::from_count(run.len()));
        if m > 0 {
            end = start - 1;
        }
    }
    centers.reverse();
    centers
}

fn distinct_count<T: Scalar>(values: &[T]) -> usize {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    sorted.dedup();
    sorted.len()
}

/// Sorts centers ascending, merges duplicates, and reassigns every value.
fn canonical<T: Scalar>(values: &[T], mut centers: Vec<T>, requested_k: usize) -> ClusterAssignment<T> {
    centers.sort_by(|a, b| a.partial_cmp(b).expect("finite centers"));
    centers.dedup();
    let ids = assign_clusters(values, &centers);
    let inertia = inertia_of(values, &centers, &ids);
    ClusterAssignment {
        k: centers.len(),
        requested_k,
        centers,
        ids,
        inertia,
    }
}

/// k-means on scalars, also returning the Lloyd inertia trace.
pub fn kmeans_1d_traced<T: Scalar>(values: &[T], k: usize, seed: u64) -> Result<(ClusterAssignment<T>, Vec<T>)> {
    if values.is_empty() {
        return Err(Error::Empty("k-means over no values"));
    }
    if k == 0 {
        return Err(Error::invalid("K", "must be >= 1"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("values", "non-finite value"));
    }
    let k_eff = k.min(distinct_count(values));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeans_plus_plus(values, k_eff, &mut rng);
    let (_, trace) = lloyd(values, &mut centers);

    let mut result = canonical(values, centers, k);
    let exact = canonical(values, optimal_contiguous_centers(values, k_eff), k);
    let slack = T::lit(1e-12) * (T::one() + exact.inertia);
    if exact.inertia + slack < result.inertia {
        log::debug!(
            "k-means: exact split improves Lloyd inertia {} -> {}",
            result.inertia,
            exact.inertia
        );
        result = exact;
    }
    Ok((result, trace))
}

/// k-means++ seeded, Lloyd-refined k-means on scalars with sorted centers.
pub fn kmeans_1d<T: Scalar>(values: &[T], k: usize, seed: u64) -> Result<ClusterAssignment<T>> {
    kmeans_1d_traced(values, k, seed).map(|(a, _)| a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaps_follow_definition() {
        let hit = PredictionRecord::from_probs(vec![1.0f64, 0.0], 0);
        let miss = PredictionRecord::from_probs(vec![0.8f64, 0.2], 1);
        let soft = PredictionRecord::from_probs(vec![0.8f64, 0.2], 0);
        let g = compute_gaps(&[hit, miss, soft]);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[1], 0.8);
        assert!((g[2] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn two_cluster_hand_example() {
        let a = kmeans_1d(&[0.0f64, 0.1, 0.8, 0.9], 2, 0).unwrap();
        assert_eq!(a.k, 2);
        assert!((a.centers[0] - 0.05).abs() < 1e-15);
        assert!((a.centers[1] - 0.85).abs() < 1e-15);
        assert_eq!(a.ids, vec![0, 0, 1, 1]);
    }

    #[test]
    fn k_equals_distinct_gives_zero_inertia() {
        let v = [0.3f64, 0.1, 0.3, 0.7, 0.1];
        let a = kmeans_1d(&v, 3, 5).unwrap();
        assert_eq!(a.inertia, 0.0);
        assert_eq!(a.centers, vec![0.1, 0.3, 0.7]);
        let b = kmeans_1d(&v, 6, 5).unwrap();
        assert_eq!((b.k, b.requested_k), (3, 6));
    }

    #[test]
    fn constant_values_collapse_to_one_cluster() {
        let a = kmeans_1d(&[0.0f64; 20], 4, 1).unwrap();
        assert_eq!(a.k, 1);
        assert!(a.ids.iter().all(|&i| i == 0));
    }

    #[test]
    fn errors() {
        assert!(kmeans_1d::<f64>(&[], 2, 0).is_err());
        assert!(kmeans_1d(&[0.5f64], 0, 0).is_err());
        assert!(kmeans_1d(&[f64::NAN, 0.2], 2, 0).is_err());
    }

    #[test]
    fn assignment_ties_and_exact_hits() {
        assert_eq!(assign_clusters(&[0.3f64], &[0.2, 0.4]), vec![0]);
        assert_eq!(assign_clusters(&[0.4f64, 0.2], &[0.2, 0.4]), vec![1, 0]);
    }

    #[test]
    fn assignment_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let mut centers: Vec<f64> = (0..rng.random_range(1..6)).map(|_| rng.random()).collect();
            centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let values: Vec<f64> = (0..40).map(|_| rng.random()).collect();
            let ids = assign_clusters(&values, &centers);
            for (v, id) in values.iter().zip(ids) {
                let mut best = (f64::INFINITY, 0);
                for (j, c) in centers.iter().enumerate() {
                    let d = (v - c).abs();
                    if d < best.0 {
                        best = (d, j);
                    }
                }
                assert_eq!(id, best.1);
            }
        }
    }

    #[test]
    fn lloyd_inertia_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..30 {
            let values: Vec<f64> = (0..200).map(|_| rng.random::<f64>().powi(3)).collect();
            let (_, trace) = kmeans_1d_traced(&values, 4, trial).unwrap();
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{:?}", trace);
            }
        }
    }

    #[test]
    fn deterministic_and_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let values: Vec<f64> = (0..500).map(|_| rng.random()).collect();
        let a = kmeans_1d(&values, 4, 42).unwrap();
        assert_eq!(a, kmeans_1d(&values, 4, 42).unwrap());
        assert!(a.centers.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a.counts().iter().sum::<usize>(), 500);
        assert_eq!(a.ids, assign_clusters(&values, &a.centers));
    }

    #[test]
    fn exact_split_on_large_input_agrees_with_small_quadratic_dp() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let values: Vec<f64> = (0..60).map(|_| rng.random::<f64>().powi(2)).collect();
        let mut xs = values.clone();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let seg = |i: usize, j: usize| {
            let run = &xs[i..j];
            let m = run.iter().sum::<f64>() / run.len() as f64;
            run.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        };
        // quadratic DP over prefix lengths
        let n = xs.len();
        let k = 4;
        let mut best = vec![vec![f64::INFINITY; n + 1]; k + 1];
        best[0][0] = 0.0;
        for m in 1..=k {
            for j in 1..=n {
                for i in (m - 1)..j {
                    let v = best[m - 1][i] + seg(i, j);
                    if v < best[m][j] {
                        best[m][j] = v;
                    }
                }
            }
        }
        let centers = optimal_contiguous_centers(&values, k);
        let ids = assign_clusters(&values, &centers);
        assert!((inertia_of(&values, &centers, &ids) - best[k][n]).abs() < 1e-12);
    }

    #[test]
    fn cluster_report_summary() {
        let v = [0.0f64, 0.1, 0.8, 0.9, 1.0];
        let a = kmeans_1d(&v, 2, 0).unwrap();
        let r = a.report(&v).unwrap();
        assert_eq!(r.counts, vec![2, 3]);
        assert!((r.mean_gap[1].unwrap() - 0.9).abs() < 1e-12);
        assert!(a.report(&v[..2]).is_err());
    }
}
