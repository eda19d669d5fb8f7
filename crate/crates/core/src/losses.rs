//! Scalar loss definitions shared by training and tests.
//!
//! Every function takes the probability the model assigns to the true class.
//! Probabilities are floored at [`PROB_FLOOR`] before the logarithm; the
//! gradient helpers apply the same floor, so a sample below it contributes a
//! constant log term and no log gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const PROB_FLOOR: f64 = 1e-12;

fn check_prob<T: Scalar>(p: T) -> Result<()> {
    if !p.is_finite() || p > T::one() + T::lit(1e-9) {
        return Err(Error::invalid("p_true", format!("{p} is not a probability")));
    }
    Ok(())
}

#[inline]
fn neg_log<T: Scalar>(p: T) -> T {
    -p.max(T::lit(PROB_FLOOR)).ln()
}

/// `(1 - p)^gamma`, with `0^0 = 1`.
#[inline]
fn modulating<T: Scalar>(p: T, gamma: T) -> T {
    let q = (T::one() - p).max(T::zero());
    if gamma == T::zero() {
        T::one()
    } else {
        q.powf(gamma)
    }
}

pub fn cross_entropy<T: Scalar>(p_true: T) -> Result<T> {
    check_prob(p_true)?;
    Ok(neg_log(p_true))
}

/// `(1 - p)^gamma * -log p`.
pub fn focal<T: Scalar>(p_true: T, gamma: T) -> Result<T> {
    check_prob(p_true)?;
    if !(gamma >= T::zero()) || !gamma.is_finite() {
        return Err(Error::invalid("gamma", format!("{gamma} must be >= 0")));
    }
    Ok(modulating(p_true, gamma) * neg_log(p_true))
}

/// Derivative of `focal(p, gamma)` with respect to `log p`, given `p` and its
/// complement `q = 1 - p`.
///
/// Chained through the softmax this gives `d loss / d z_j = s * (1{j=y} - p_j)`.
/// Passing `q` separately (e.g. summed from the other classes' probabilities)
/// keeps the slope accurate for confident samples, where `1 - p` computed by
/// subtraction has lost most of its digits.
pub(crate) fn focal_log_slope<T: Scalar>(p: T, q: T, gamma: T) -> T {
    let floored = p <= T::lit(PROB_FLOOR);
    let dlog = if floored { T::zero() } else { -T::one() };
    let q = q.max(T::zero());
    let weight = if gamma == T::zero() { T::one() } else { q.powf(gamma) };
    let mut s = weight * dlog;
    if gamma != T::zero() && q > T::zero() {
        // -log p, via log1p when p is close to 1
        let nl = if q < T::lit(0.5) { -(-q).ln_1p() } else { neg_log(p) };
        s -= gamma * p * q.powf(gamma - T::one()) * nl;
    }
    s
}

fn mean<T: Scalar>(xs: impl Iterator<Item = T>) -> (T, usize) {
    let mut sum = T::zero();
    let mut n = 0;
    for x in xs {
        sum += x;
        n += 1;
    }
    (sum / T::from_count(n.max(1)), n)
}

/// Mean focal loss over a batch.
pub fn mean_focal<T: Scalar>(p_true: &[T], gamma: T) -> Result<T> {
    if p_true.is_empty() {
        return Err(Error::Empty("loss over an empty batch"));
    }
    let terms = p_true
        .iter()
        .map(|&p| focal(p, gamma))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(terms.into_iter()).0)
}

fn check_groups(groups: &[usize], n: usize, k: usize) -> Result<()> {
    if groups.len() != n {
        return Err(Error::Shape(format!("{} group ids for {n} samples", groups.len())));
    }
    if k == 0 {
        return Err(Error::invalid("K", "need at least one group"));
    }
    if let Some(&g) = groups.iter().find(|&&g| g >= k) {
        return Err(Error::invalid("group ids", format!("id {g} >= K = {k}")));
    }
    Ok(())
}

/// Per-group mean of an arbitrary per-sample loss; `None` for groups without
/// samples.
pub fn group_means<T: Scalar>(per_sample: &[T], groups: &[usize], k: usize) -> Result<Vec<Option<T>>> {
    check_groups(groups, per_sample.len(), k)?;
    let mut sums = vec![T::zero(); k];
    let mut counts = vec![0usize; k];
    for (&l, &g) in per_sample.iter().zip(groups) {
        sums[g] += l;
        counts[g] += 1;
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| (c > 0).then(|| s / T::from_count(c)))
        .collect())
}

/// Unweighted mean over represented clusters of each cluster's mean focal
/// loss. Clusters absent from the input do not enter the average.
pub fn group_wise_focal<T: Scalar>(p_true: &[T], clusters: &[usize], k: usize, gamma: T) -> Result<T> {
    if p_true.is_empty() {
        return Err(Error::Empty("group-wise focal loss over an empty batch"));
    }
    let per_sample = p_true
        .iter()
        .map(|&p| focal(p, gamma))
        .collect::<Result<Vec<_>>>()?;
    let means = group_means(&per_sample, clusters, k)?;
    Ok(mean(means.into_iter().flatten()).0)
}

/// `sum w_i * -log p_i / sum w_i`.
pub fn weighted_cross_entropy<T: Scalar>(p_true: &[T], weights: &[T]) -> Result<T> {
    if p_true.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} probabilities, {} weights",
            p_true.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
        return Err(Error::invalid("weights", "must be finite and >= 0"));
    }
    let total: T = weights.iter().copied().sum();
    if total <= T::zero() {
        return Err(Error::invalid("weights", "sum to zero"));
    }
    let mut acc = T::zero();
    for (&p, &w) in p_true.iter().zip(weights) {
        acc += w * cross_entropy(p)?;
    }
    Ok(acc / total)
}

/// GroupDRO adversarial group weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GroupWeights<T: Scalar> {
    q: Vec<T>,
    eta: T,
}

impl<T: Scalar> GroupWeights<T> {
    pub fn new(q: Vec<T>, eta: T) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::invalid("q", "need at least one group"));
        }
        if q.iter().any(|x| !(*x >= T::zero()) || !x.is_finite()) {
            return Err(Error::invalid("q", "components must be finite and >= 0"));
        }
        let total: T = q.iter().copied().sum();
        if (total - T::one()).abs() > T::lit(1e-9) {
            return Err(Error::invalid("q", format!("sums to {total}, not 1")));
        }
        if !(eta > T::zero()) || !eta.is_finite() {
            return Err(Error::invalid("eta", "must be positive"));
        }
        Ok(GroupWeights { q, eta })
    }

    pub fn uniform(k: usize, eta: T) -> Result<Self> {
        Self::new(vec![T::one() / T::from_count(k.max(1)); k], eta)
    }

    pub fn q(&self) -> &[T] {
        &self.q
    }

    pub fn eta(&self) -> T {
        self.eta
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

/// Exponentiated-gradient update `q'_k ∝ q_k exp(eta * loss_k)`.
///
/// Returns the updated weights and the objective `sum_k q'_k loss_k`.
pub fn groupdro_step<T: Scalar>(group_losses: &[T], weights: &GroupWeights<T>) -> Result<(GroupWeights<T>, T)> {
    if group_losses.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} group losses for {} weights",
            group_losses.len(),
            weights.len()
        )));
    }
    if group_losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::invalid("group losses", "non-finite loss"));
    }
    let eta = weights.eta;
    let top = group_losses
        .iter()
        .fold(T::neg_infinity(), |m, &l| m.max(eta * l));
    let raw: Vec<T> = weights
        .q
        .iter()
        .zip(group_losses)
        .map(|(&q, &l)| q * (eta * l - top).exp())
        .collect();
    let z: T = raw.iter().copied().sum();
    let q: Vec<T> = raw.into_iter().map(|x| x / z).collect();
    let objective = q.iter().zip(group_losses).map(|(&q, &l)| q * l).sum();
    Ok((GroupWeights { q, eta }, objective))
}

/// `sum_k q_k * mean_{i in k} focal(p_i)`, with `q` renormalized over the
/// groups present in the batch.
pub fn groupdro_objective<T: Scalar>(
    p_true: &[T],
    groups: &[usize],
    gamma: T,
    weights: &GroupWeights<T>,
) -> Result<T> {
    if p_true.is_empty() {
        return Err(Error::Empty("GroupDRO loss over an empty batch"));
    }
    let per_sample = p_true
        .iter()
        .map(|&p| focal(p, gamma))
        .collect::<Result<Vec<_>>>()?;
    let means = group_means(&per_sample, groups, weights.len())?;
    let mut mass = T::zero();
    let mut acc = T::zero();
    for (m, &q) in means.iter().zip(&weights.q) {
        if let Some(m) = m {
            mass += q;
            acc += q * *m;
        }
    }
    if mass <= T::zero() {
        return Err(Error::invalid("q", "no weight on any group present in the batch"));
    }
    Ok(acc / mass)
}
