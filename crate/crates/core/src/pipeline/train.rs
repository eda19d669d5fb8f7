use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{derive_seed, GapMode, GroupLoss, Method, TrainConfig, TrainedArtifacts, GAP_FOLDS};
use crate::clustering::{compute_gaps, kmeans_1d, ClusterAssignment};
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::losses::{self, GroupWeights};
use crate::metrics::{evaluate_attribute, EvalReport, PerformanceMetric, DEFAULT_BINS};
use crate::model::{adam_step, forward, init_mlp, loss_and_grad, predict, softmax, AdamState, LossSpec, MlpModel};
use crate::scalar::Scalar;

/// Objective of one training run, with per-sample data indexed by position
/// in the training index list.
enum Objective<T: Scalar> {
    CrossEntropy,
    Focal { gamma: T },
    GroupWiseFocal { gamma: T, groups: Vec<usize>, k: usize },
    Weighted { weights: Vec<T> },
    GroupDro { gamma: T, groups: Vec<usize>, k: usize, eta: T },
}

impl<T: Scalar> Objective<T> {
    fn groups(&self) -> Option<(&[usize], usize)> {
        match self {
            Objective::GroupWiseFocal { groups, k, .. } | Objective::GroupDro { groups, k, .. } => {
                Some((groups, *k))
            }
            _ => None,
        }
    }
}

/// Mini-batch index stream. Each group gets `ceil(min(batch, n) / groups)`
/// slots per batch: large groups are walked through a fresh permutation every
/// epoch, groups smaller than their quota are sampled with replacement. With a
/// single group this is plain shuffled mini-batching.
struct BatchSampler {
    groups: Vec<Vec<usize>>,
    quota: usize,
    batches_per_epoch: usize,
}

impl BatchSampler {
    fn new(n: usize, batch_size: usize, groups: Option<(&[usize], usize)>) -> Self {
        let members: Vec<Vec<usize>> = match groups {
            None => vec![(0..n).collect()],
            Some((ids, k)) => {
                let mut m = vec![Vec::new(); k];
                for (pos, &g) in ids.iter().enumerate() {
                    m[g].push(pos);
                }
                m.into_iter().filter(|g| !g.is_empty()).collect()
            }
        };
        let effective = batch_size.min(n).max(1);
        let quota = effective.div_ceil(members.len().max(1));
        BatchSampler {
            groups: members,
            quota,
            batches_per_epoch: n.div_ceil(batch_size).max(1),
        }
    }

    fn epoch<R: Rng>(&self, rng: &mut R) -> Vec<Vec<usize>> {
        let perms: Vec<Vec<usize>> = self
            .groups
            .iter()
            .map(|g| {
                let mut p = g.clone();
                if p.len() >= self.quota {
                    p.shuffle(rng);
                }
                p
            })
            .collect();
        (0..self.batches_per_epoch)
            .map(|b| {
                let mut batch = Vec::with_capacity(self.quota * perms.len());
                for p in &perms {
                    let n = p.len();
                    if n >= self.quota {
                        batch.extend((0..self.quota).map(|j| p[(b * self.quota + j) % n]));
                    } else {
                        batch.extend((0..self.quota).map(|_| p[rng.random_range(0..n)]));
                    }
                }
                batch
            })
            .collect()
    }
}

/// Validation set and attribute used to pick the best epoch.
struct Selection<'a> {
    indices: &'a [usize],
    attribute: &'a str,
}

struct RunOutcome<T: Scalar> {
    model: MlpModel<T>,
    epoch_losses: Vec<T>,
    batch_losses: Vec<T>,
    q_trace: Vec<Vec<T>>,
    final_q: Option<Vec<T>>,
    terminal_group_losses: Option<Vec<T>>,
    selected_epoch: Option<usize>,
}

fn true_class_probs<T: Scalar>(model: &MlpModel<T>, x: &ndarray::Array2<T>, y: &[usize]) -> Result<Vec<T>> {
    let logits = forward(model, x.view())?;
    logits
        .rows()
        .into_iter()
        .zip(y)
        .map(|(row, &label)| Ok(softmax(row.as_slice().expect("standard layout"))?[label]))
        .collect()
}

/// Features are validated on load and parameters are checked after every
/// step, so non-finite logits during training mean the weights overflowed.
fn overflow(e: Error, epoch: usize) -> Error {
    match e {
        Error::Invalid { ref field, .. } if field == "logits" => Error::Diverged { epoch: epoch + 1 },
        other => other,
    }
}

/// Trains a fresh model on `train` (dataset indices) for `epochs`.
#[allow(clippy::too_many_arguments)]
fn run<T: Scalar>(
    config: &TrainConfig<T>,
    dataset: &Dataset<T>,
    train: &[usize],
    objective: &Objective<T>,
    epochs: usize,
    stream: &str,
    selection: Option<Selection<'_>>,
) -> Result<RunOutcome<T>> {
    if train.is_empty() {
        return Err(Error::Empty("no training samples"));
    }
    let dims = config.layer_dims(dataset.num_features(), dataset.num_classes());
    let mut model = init_mlp(&dims, derive_seed(config.seed, &format!("{stream}/init")))?;
    let mut adam = AdamState::new(&model, config.adam)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("{stream}/batches")));
    let sampler = BatchSampler::new(train.len(), config.batch_size, objective.groups());

    let mut dro = match objective {
        Objective::GroupDro { k, eta, .. } => Some(GroupWeights::uniform(*k, *eta)?),
        _ => None,
    };
    let metric = PerformanceMetric::for_classes(dataset.num_classes());
    let mut best: Option<(T, usize, MlpModel<T>)> = None;
    let mut group_loss_trace: Vec<Vec<T>> = Vec::new();

    let mut out = RunOutcome {
        model: model.clone(),
        epoch_losses: Vec::with_capacity(epochs),
        batch_losses: Vec::new(),
        q_trace: Vec::new(),
        final_q: None,
        terminal_group_losses: None,
        selected_epoch: None,
    };

    for epoch in 0..epochs {
        let mut epoch_sum = T::zero();
        let batches = sampler.epoch(&mut rng);
        let mut group_loss_sum: Vec<T> = Vec::new();
        let mut group_loss_n: Vec<usize> = Vec::new();
        for positions in &batches {
            let rows: Vec<usize> = positions.iter().map(|&p| train[p]).collect();
            let x = dataset.gather_features(&rows);
            let y = dataset.gather_labels(&rows);
            let spec = match objective {
                Objective::CrossEntropy => LossSpec::CrossEntropy,
                Objective::Focal { gamma } => LossSpec::Focal { gamma: *gamma },
                Objective::GroupWiseFocal { gamma, groups, k } => LossSpec::GroupWiseFocal {
                    gamma: *gamma,
                    groups: positions.iter().map(|&p| groups[p]).collect(),
                    k: *k,
                },
                Objective::Weighted { weights } => LossSpec::WeightedCrossEntropy {
                    weights: positions.iter().map(|&p| weights[p]).collect(),
                },
                Objective::GroupDro { gamma, groups, k, .. } => {
                    let batch_groups: Vec<usize> = positions.iter().map(|&p| groups[p]).collect();
                    let p_true = true_class_probs(&model, &x, &y).map_err(|e| overflow(e, epoch))?;
                    let per_sample = p_true
                        .iter()
                        .map(|&p| losses::focal(p, *gamma))
                        .collect::<Result<Vec<_>>>()?;
                    let means = losses::group_means(&per_sample, &batch_groups, *k)?;
                    if group_loss_sum.is_empty() {
                        group_loss_sum = vec![T::zero(); *k];
                        group_loss_n = vec![0; *k];
                    }
                    for (g, m) in means.iter().enumerate() {
                        if let Some(m) = m {
                            group_loss_sum[g] += *m;
                            group_loss_n[g] += 1;
                        }
                    }
                    // groups absent from the batch enter the update with zero loss
                    let step_losses: Vec<T> = means.iter().map(|m| m.unwrap_or_else(T::zero)).collect();
                    if step_losses.iter().any(|l| !l.is_finite()) {
                        return Err(Error::Diverged { epoch: epoch + 1 });
                    }
                    let current = dro.as_ref().expect("GroupDRO weights initialized");
                    let (next, _) = losses::groupdro_step(&step_losses, current)?;
                    dro = Some(next.clone());
                    LossSpec::GroupDro {
                        gamma: *gamma,
                        groups: batch_groups,
                        weights: next,
                    }
                }
            };
            let (loss, grads) = loss_and_grad(&model, x.view(), &y, &spec).map_err(|e| overflow(e, epoch))?;
            if !loss.is_finite() || !grads.max_abs().is_finite() {
                return Err(Error::Diverged { epoch: epoch + 1 });
            }
            adam_step(&mut model, &grads, &mut adam)?;
            if !model.is_finite() {
                return Err(Error::Diverged { epoch: epoch + 1 });
            }
            out.batch_losses.push(loss);
            epoch_sum += loss;
        }
        out.epoch_losses.push(epoch_sum / T::from_count(batches.len()));
        if let Some(w) = &dro {
            out.q_trace.push(w.q().to_vec());
            group_loss_trace.push(
                group_loss_sum
                    .iter()
                    .zip(&group_loss_n)
                    .map(|(&s, &n)| if n > 0 { s / T::from_count(n) } else { T::zero() })
                    .collect(),
            );
        }
        if let Some(sel) = &selection {
            let records = predict(&model, dataset, sel.indices)?;
            let attr = dataset.require_attribute(sel.attribute)?;
            let report = evaluate_attribute(&records, attr, sel.indices, metric, DEFAULT_BINS)?;
            let score = report.worst_qece.value;
            if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
                best = Some((score, epoch + 1, model.clone()));
            }
        }
    }
    // reported group state belongs to the returned model, so a selected
    // checkpoint reports the weights and losses of its own epoch
    let reported = match best {
        Some((_, epoch, m)) => {
            out.model = m;
            out.selected_epoch = Some(epoch);
            epoch
        }
        None => {
            out.model = model;
            epochs
        }
    };
    if dro.is_some() && reported > 0 {
        out.final_q = Some(out.q_trace[reported - 1].clone());
        out.terminal_group_losses = Some(group_loss_trace[reported - 1].clone());
    } else {
        out.final_q = dro.map(|w| w.q().to_vec());
    }
    Ok(out)
}

fn artifacts<T: Scalar>(method: Method, train: &[usize], outcome: RunOutcome<T>) -> TrainedArtifacts<T> {
    TrainedArtifacts {
        method,
        f_pred: outcome.model,
        f_id: None,
        train_indices: train.to_vec(),
        gaps: None,
        clusters: None,
        epoch_losses: outcome.epoch_losses,
        batch_losses: outcome.batch_losses,
        stage1_epoch_losses: Vec::new(),
        group_weights: outcome.final_q,
        group_weight_trace: outcome.q_trace,
        terminal_group_losses: outcome.terminal_group_losses,
        upweighted: None,
        selected_epoch: outcome.selected_epoch,
    }
}

/// Plain cross-entropy training for `config.stage2_epochs`.
pub fn train_erm<T: Scalar>(config: &TrainConfig<T>, dataset: &Dataset<T>, train: &[usize]) -> Result<TrainedArtifacts<T>> {
    config.validate()?;
    let outcome = run(config, dataset, train, &Objective::CrossEntropy, config.stage2_epochs, "pred", None)?;
    Ok(artifacts(Method::Erm, train, outcome))
}

/// Output of the identification stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage1<T: Scalar> {
    /// ERM model trained on all training samples.
    pub f_id: MlpModel<T>,
    /// Gap per training sample, aligned with the training indices.
    pub gaps: Vec<T>,
    pub clusters: ClusterAssignment<T>,
    pub epoch_losses: Vec<T>,
}

/// Trains the identification model, scores calibration gaps and clusters them.
pub fn stage1_identify<T: Scalar>(config: &TrainConfig<T>, dataset: &Dataset<T>, train: &[usize]) -> Result<Stage1<T>> {
    config.validate()?;
    let fit = |subset: &[usize], stream: &str| {
        run(config, dataset, subset, &Objective::CrossEntropy, config.stage1_epochs, stream, None)
    };
    let full = fit(train, "id")?;
    let gaps = match config.gap_mode {
        GapMode::InSample => compute_gaps(&predict(&full.model, dataset, train)?),
        GapMode::OutOfFold => {
            if train.len() < GAP_FOLDS * config.clusters {
                return Err(Error::invalid(
                    "train set",
                    format!(
                        "{} samples is too few for {GAP_FOLDS}-fold gaps with {} clusters; use in-sample gaps",
                        train.len(),
                        config.clusters
                    ),
                ));
            }
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "folds")));
            let mut fold_of = vec![0usize; train.len()];
            for (rank, &pos) in order.iter().enumerate() {
                fold_of[pos] = rank % GAP_FOLDS;
            }
            let mut gaps = vec![T::zero(); train.len()];
            for fold in 0..GAP_FOLDS {
                let (held, kept): (Vec<usize>, Vec<usize>) = (0..train.len()).partition(|&p| fold_of[p] == fold);
                let kept_rows: Vec<usize> = kept.iter().map(|&p| train[p]).collect();
                let held_rows: Vec<usize> = held.iter().map(|&p| train[p]).collect();
                let model = fit(&kept_rows, &format!("id/fold{fold}"))?.model;
                let fold_gaps = compute_gaps(&predict(&model, dataset, &held_rows)?);
                for (&p, g) in held.iter().zip(fold_gaps) {
                    gaps[p] = g;
                }
            }
            gaps
        }
    };
    let clusters = kmeans_1d(&gaps, config.clusters, derive_seed(config.seed, "kmeans"))?;
    log::info!(
        "stage 1: {} clusters, centers {:?}, counts {:?}",
        clusters.k,
        clusters.centers,
        clusters.counts()
    );
    Ok(Stage1 {
        f_id: full.model,
        gaps,
        clusters,
        epoch_losses: full.epoch_losses,
    })
}

/// Trains `config.method` on `split.train`. Validation samples are used only
/// for model selection, and only when an oracle attribute is configured.
pub fn train_method<T: Scalar>(config: &TrainConfig<T>, dataset: &Dataset<T>, split: &Split) -> Result<TrainedArtifacts<T>> {
    config.validate()?;
    let train = split.train.as_slice();
    if let Some(name) = &config.oracle_attribute {
        dataset.require_attribute(name)?;
    }
    let selection = || {
        config.oracle_attribute.as_deref().map(|attribute| Selection {
            indices: &split.val,
            attribute,
        })
    };
    let group_gamma = match config.groupdro_loss {
        GroupLoss::CrossEntropy => T::zero(),
        GroupLoss::Focal => config.gamma,
    };
    let epochs = config.stage2_epochs;
    let method = config.method;

    let final_run = |objective: Objective<T>| run(config, dataset, train, &objective, epochs, "pred", selection());

    match method {
        Method::Erm => Ok(artifacts(method, train, final_run(Objective::CrossEntropy)?)),
        Method::Focal => Ok(artifacts(method, train, final_run(Objective::Focal { gamma: config.gamma })?)),
        Method::ClusterFocal | Method::ClusterErm | Method::ClusterGroupDro => {
            let stage1 = stage1_identify(config, dataset, train)?;
            let groups = stage1.clusters.ids.clone();
            let k = stage1.clusters.k;
            let objective = match method {
                Method::ClusterFocal => Objective::GroupWiseFocal { gamma: config.gamma, groups, k },
                Method::ClusterErm => Objective::GroupWiseFocal { gamma: T::zero(), groups, k },
                _ => Objective::GroupDro { gamma: group_gamma, groups, k, eta: config.groupdro_eta },
            };
            let mut art = artifacts(method, train, final_run(objective)?);
            art.f_id = Some(stage1.f_id);
            art.gaps = Some(stage1.gaps);
            art.clusters = Some(stage1.clusters);
            art.stage1_epoch_losses = stage1.epoch_losses;
            Ok(art)
        }
        Method::OracleFocal | Method::OracleGroupDro => {
            let name = config.oracle_attribute.as_deref().expect("validated");
            let attr = dataset.require_attribute(name)?;
            let groups: Vec<usize> = train.iter().map(|&i| attr.groups[i]).collect();
            let k = attr.num_groups;
            let objective = if method == Method::OracleFocal {
                Objective::GroupWiseFocal { gamma: config.gamma, groups, k }
            } else {
                Objective::GroupDro { gamma: group_gamma, groups, k, eta: config.groupdro_eta }
            };
            Ok(artifacts(method, train, final_run(objective)?))
        }
        Method::Jtt => {
            let first = run(config, dataset, train, &Objective::CrossEntropy, config.stage1_epochs, "id", None)?;
            let records = predict(&first.model, dataset, train)?;
            let weights: Vec<T> = records
                .iter()
                .map(|r| if r.correct() { T::one() } else { config.jtt_lambda })
                .collect();
            let marked = records.iter().filter(|r| !r.correct()).count();
            log::info!("jtt: up-weighting {marked} of {} training samples", train.len());
            let mut art = artifacts(method, train, final_run(Objective::Weighted { weights })?);
            art.f_id = Some(first.model);
            art.stage1_epoch_losses = first.epoch_losses;
            art.upweighted = Some(marked);
            Ok(art)
        }
    }
}

/// One report per attribute, all from a single prediction pass over `test`.
/// Binary tasks score F1 of class 1, multiclass tasks macro-F1.
pub fn evaluate_model<T: Scalar>(
    artifacts: &TrainedArtifacts<T>,
    dataset: &Dataset<T>,
    test: &[usize],
    attributes: &[String],
    num_bins: usize,
) -> Result<Vec<EvalReport<T>>> {
    if test.is_empty() {
        return Err(Error::Empty("no test samples"));
    }
    let attrs = attributes
        .iter()
        .map(|a| dataset.require_attribute(a))
        .collect::<Result<Vec<_>>>()?;
    let records = predict(&artifacts.f_pred, dataset, test)?;
    let metric = PerformanceMetric::for_classes(dataset.num_classes());
    attrs
        .into_iter()
        .map(|attr| evaluate_attribute(&records, attr, test, metric, num_bins))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_group_sampler_is_plain_minibatching() {
        let s = BatchSampler::new(10, 4, None);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batches = s.epoch(&mut rng);
        assert_eq!(batches.len(), 3);
        assert!(batches.iter().all(|b| b.len() == 4));
        let mut first_pass: Vec<usize> = batches.concat()[..10].to_vec();
        first_pass.sort_unstable();
        assert_eq!(first_pass, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn stratified_sampler_covers_every_group() {
        // 1 member in group 2, 3 in group 1, the rest in group 0
        let mut ids = vec![0usize; 40];
        ids[5] = 2;
        ids[7] = 1;
        ids[8] = 1;
        ids[9] = 1;
        let s = BatchSampler::new(40, 16, Some((&ids, 4)));
        assert_eq!(s.groups.len(), 3);
        assert_eq!(s.quota, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            for batch in s.epoch(&mut rng) {
                for g in 0..3 {
                    assert_eq!(batch.iter().filter(|&&p| ids[p] == g).count(), 6);
                }
            }
        }
    }

    #[test]
    fn small_batch_larger_than_data() {
        let s = BatchSampler::new(3, 64, None);
        let batches = s.epoch(&mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(batches.len(), 1);
        let mut b = batches[0].clone();
        b.sort_unstable();
        assert_eq!(b, vec![0, 1, 2]);
    }
}
