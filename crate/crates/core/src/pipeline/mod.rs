//! End-to-end training procedures and evaluation sweeps.
//!
//! [`train_method`] dispatches on [`Method`]:
//!
//! | method            | stage 1                         | final objective                          |
//! |-------------------|---------------------------------|------------------------------------------|
//! | `erm`             | -                               | cross-entropy                            |
//! | `focal`           | -                               | focal                                    |
//! | `cluster-focal`   | ERM gaps + k-means              | group-wise focal over gap clusters       |
//! | `cluster-erm`     | ERM gaps + k-means              | group-averaged cross-entropy             |
//! | `cluster-groupdro`| ERM gaps + k-means              | GroupDRO over gap clusters               |
//! | `jtt`             | ERM, mark misclassified samples | cross-entropy, marked samples up-weighted |
//! | `oracle-focal`    | - (attribute groups)            | group-wise focal over attribute groups   |
//! | `oracle-groupdro` | - (attribute groups)            | GroupDRO over attribute groups           |
//!
//! Grouped objectives train on stratified batches that draw the same number
//! of samples from every group.

mod sweep;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterAssignment;
use crate::error::{Error, Result};
use crate::model::{AdamConfig, MlpModel};
use crate::scalar::Scalar;

pub use sweep::{sweep, SweepOutcome, SweepRun, TradeoffRow, TradeoffTable, TRADEOFF_CSV_HEADER};
pub use train::{evaluate_model, stage1_identify, train_erm, train_method, Stage1};

pub const DEFAULT_CLUSTERS: usize = 4;
pub const DEFAULT_GAMMA: f64 = 3.0;
/// Number of seeds averaged per method in a sweep.
pub const DEFAULT_RUNS: usize = 5;
pub const DEFAULT_STAGE1_EPOCHS: usize = 10;
pub const DEFAULT_STAGE2_EPOCHS: usize = 60;
pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const DEFAULT_JTT_LAMBDA: f64 = 5.0;
pub const DEFAULT_GROUPDRO_ETA: f64 = 0.1;
pub const DEFAULT_HIDDEN: [usize; 2] = [32, 32];
/// Train/validation/test fractions used by the CLI and the reference benchmark.
pub const DEFAULT_SPLIT: [f64; 3] = [0.6, 0.2, 0.2];
/// Folds used for out-of-fold gap estimation.
pub const GAP_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Erm,
    Focal,
    ClusterFocal,
    ClusterErm,
    #[serde(rename = "cluster-groupdro")]
    ClusterGroupDro,
    Jtt,
    OracleFocal,
    #[serde(rename = "oracle-groupdro")]
    OracleGroupDro,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Erm,
        Method::Focal,
        Method::ClusterFocal,
        Method::ClusterErm,
        Method::ClusterGroupDro,
        Method::Jtt,
        Method::OracleFocal,
        Method::OracleGroupDro,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Erm => "erm",
            Method::Focal => "focal",
            Method::ClusterFocal => "cluster-focal",
            Method::ClusterErm => "cluster-erm",
            Method::ClusterGroupDro => "cluster-groupdro",
            Method::Jtt => "jtt",
            Method::OracleFocal => "oracle-focal",
            Method::OracleGroupDro => "oracle-groupdro",
        }
    }

    pub fn needs_oracle(self) -> bool {
        matches!(self, Method::OracleFocal | Method::OracleGroupDro)
    }

    pub fn uses_clusters(self) -> bool {
        matches!(self, Method::ClusterFocal | Method::ClusterErm | Method::ClusterGroupDro)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| {
                let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                Error::invalid("method", format!("unknown method {s:?} (expected one of {})", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapMode {
    /// Each training sample's gap comes from a fold model that never saw it.
    OutOfFold,
    /// One model scores its own training data.
    InSample,
}

impl FromStr for GapMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "out-of-fold" | "out_of_fold" => Ok(GapMode::OutOfFold),
            "in-sample" | "in_sample" => Ok(GapMode::InSample),
            other => Err(Error::invalid("gap mode", format!("{other:?} (expected out-of-fold or in-sample)"))),
        }
    }
}

/// Per-group loss inside the GroupDRO objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupLoss {
    CrossEntropy,
    Focal,
}

impl FromStr for GroupLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross-entropy" | "cross_entropy" | "ce" => Ok(GroupLoss::CrossEntropy),
            "focal" => Ok(GroupLoss::Focal),
            other => Err(Error::invalid("group loss", format!("{other:?} (expected cross-entropy or focal)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TrainConfig<T: Scalar> {
    pub method: Method,
    pub gamma: T,
    /// Requested number of gap clusters.
    pub clusters: usize,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig<T>,
    /// Weight of samples the stage-1 model misclassified (JTT).
    pub jtt_lambda: T,
    pub groupdro_eta: T,
    pub groupdro_loss: GroupLoss,
    /// Attribute supplying oracle groups; when set it also drives
    /// validation-based model selection.
    pub oracle_attribute: Option<String>,
    pub seed: u64,
    pub gap_mode: GapMode,
    pub hidden_dims: Vec<usize>,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        TrainConfig {
            method: Method::ClusterFocal,
            gamma: T::lit(DEFAULT_GAMMA),
            clusters: DEFAULT_CLUSTERS,
            stage1_epochs: DEFAULT_STAGE1_EPOCHS,
            stage2_epochs: DEFAULT_STAGE2_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            adam: AdamConfig::default(),
            jtt_lambda: T::lit(DEFAULT_JTT_LAMBDA),
            groupdro_eta: T::lit(DEFAULT_GROUPDRO_ETA),
            groupdro_loss: GroupLoss::CrossEntropy,
            oracle_attribute: None,
            seed: 0,
            gap_mode: GapMode::OutOfFold,
            hidden_dims: DEFAULT_HIDDEN.to_vec(),
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn for_method(method: Method) -> Self {
        TrainConfig {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= T::zero()) || !self.gamma.is_finite() {
            return Err(Error::invalid("gamma", "must be >= 0"));
        }
        if self.clusters == 0 {
            return Err(Error::invalid("clusters", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be >= 1"));
        }
        if !(self.jtt_lambda >= T::one()) || !self.jtt_lambda.is_finite() {
            return Err(Error::invalid("jtt_lambda", "must be >= 1"));
        }
        if !(self.groupdro_eta > T::zero()) || !self.groupdro_eta.is_finite() {
            return Err(Error::invalid("groupdro_eta", "must be positive"));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::invalid("hidden_dims", "every width must be >= 1"));
        }
        if self.method.needs_oracle() && self.oracle_attribute.is_none() {
            return Err(Error::invalid(
                "oracle_attribute",
                format!("method {} needs an oracle attribute", self.method),
            ));
        }
        self.adam.validate()
    }

    pub fn layer_dims(&self, inputs: usize, classes: usize) -> Vec<usize> {
        let mut dims = vec![inputs];
        dims.extend(&self.hidden_dims);
        dims.push(classes);
        dims
    }
}

/// Everything a training run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedArtifacts<T: Scalar> {
    pub method: Method,
    pub f_pred: MlpModel<T>,
    /// Stage-1 identification model, when the method has a stage 1.
    pub f_id: Option<MlpModel<T>>,
    /// Training indices, aligned with `gaps` and `clusters.ids`.
    pub train_indices: Vec<usize>,
    pub gaps: Option<Vec<T>>,
    pub clusters: Option<ClusterAssignment<T>>,
    /// Mean batch loss per epoch of the final model.
    pub epoch_losses: Vec<T>,
    /// Every batch loss of the final model, in order.
    pub batch_losses: Vec<T>,
    pub stage1_epoch_losses: Vec<T>,
    /// GroupDRO weights at the end of the epoch that produced `f_pred`
    /// (the selected epoch when validation selection ran).
    pub group_weights: Option<Vec<T>>,
    /// GroupDRO weights after every epoch.
    pub group_weight_trace: Vec<Vec<T>>,
    /// Mean per-group batch loss over the same epoch as `group_weights`.
    pub terminal_group_losses: Option<Vec<T>>,
    /// Number of training samples JTT up-weighted.
    pub upweighted: Option<usize>,
    /// Epoch (1-based) kept by validation selection; `None` means last epoch.
    pub selected_epoch: Option<usize>,
}

/// Deterministic sub-seed for a named random stream of a run (e.g.
/// `"pred/init"` seeds the final model's weights).
pub fn derive_seed(seed: u64, stream: &str) -> u64 {
    // FNV-1a over the stream name, then a splitmix64 finalizer
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
