use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, backward, cross_entropy, forward_with, AdamConfig, AdamState, Forward, GraphOps, Model};
use crate::community::{label_propagation, CommunityAssignment};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::metrics::{accuracy, mad, MetricsReport};
use crate::negsamp::{
    build_negative_table, select_anchor_nodes, AnchorStrategy, NegStrategy, NegativeConfig,
    NegativeSampleTable, SamplingStream,
};

/// When negative tables are rebuilt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resample {
    /// Once per epoch from the input features, shared by every layer.
    PerEpoch,
    /// Every layer, every epoch, from that layer's input activations.
    PerLayer,
}

impl FromStr for Resample {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-epoch" => Ok(Resample::PerEpoch),
            "per-layer" => Ok(Resample::PerLayer),
            _ => Err(Error::InvalidArgument(format!(
                "unknown resample policy `{s}` (expected per-epoch or per-layer)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub layers: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub negatives: NegativeConfig,
    pub anchors: AnchorStrategy,
    pub resample: Resample,
    pub omega_init: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            layers: 4,
            hidden_dim: 16,
            epochs: 200,
            lr: 0.01,
            seed: 0,
            negatives: NegativeConfig::default(),
            anchors: AnchorStrategy::All,
            resample: Resample::PerEpoch,
            omega_init: super::DEFAULT_OMEGA,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::InvalidArgument("depth must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.hidden_dim == 0 {
            return Err(Error::InvalidArgument("hidden width must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid learning rate {}", self.lr)));
        }
        if self.negatives.path_len < 2 {
            return Err(Error::InvalidArgument("path length must be at least 2".into()));
        }
        if !(self.negatives.kernel.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// One line of the training trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub mad: f64,
    pub omega: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub adam: AdamState,
    pub trace: Vec<EpochRecord>,
    /// Evaluation of the trained model on freshly sampled negatives.
    pub final_report: MetricsReport,
    pub communities: CommunityAssignment,
    pub anchors: Vec<usize>,
}

fn optional_accuracy(fw: &Forward, g: &Graph, mask: &[bool]) -> Result<Option<f64>> {
    if mask.iter().any(|&m| m) {
        accuracy(fw.logits(), g.labels(), mask).map(Some)
    } else {
        Ok(None)
    }
}

fn report(fw: &Forward, g: &Graph) -> Result<MetricsReport> {
    let masks = g.masks();
    Ok(MetricsReport {
        train_acc: accuracy(fw.logits(), g.labels(), &masks.train)?,
        val_acc: optional_accuracy(fw, g, &masks.val)?,
        test_acc: optional_accuracy(fw, g, &masks.test)?,
        mad: mad(fw.logits())?.value,
    })
}

struct Sampler<'a> {
    g: &'a Graph,
    cfg: &'a TrainConfig,
    membership: &'a [usize],
    anchors: &'a [usize],
}

impl Sampler<'_> {
    fn forward(&self, model: &Model, ops: &GraphOps, epoch: usize) -> Result<Forward> {
        let strategy = self.cfg.negatives.strategy;
        let mut shared: Option<NegativeSampleTable> = None;
        forward_with(model, self.g, ops, self.g.features(), |layer, x| {
            if strategy == NegStrategy::None {
                return Ok(None);
            }
            let table = match self.cfg.resample {
                Resample::PerEpoch => {
                    if shared.is_none() {
                        shared = Some(self.table(self.g.features(), epoch, 0)?);
                    }
                    shared.clone()
                }
                Resample::PerLayer => Some(self.table(x, epoch, layer)?),
            };
            Ok(table)
        })
    }

    fn table(&self, x: &crate::linalg::Matrix, epoch: usize, layer: usize) -> Result<NegativeSampleTable> {
        build_negative_table(
            self.g,
            x,
            self.membership,
            &self.cfg.negatives,
            self.anchors,
            SamplingStream {
                seed: self.cfg.seed,
                epoch,
                layer,
            },
        )
    }
}

/// Trains a node classifier and records one [`EpochRecord`] per epoch.
///
/// Each epoch samples negatives, runs the forward pass, back-propagates the
/// training-mask cross-entropy and takes one Adam step. The recorded
/// metrics describe the forward pass the step was computed from.
pub fn train(g: &Graph, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_callback(g, cfg, |_| {})
}

/// [`train`], calling `on_epoch` as each record is produced.
pub fn train_with_callback<F: FnMut(&EpochRecord)>(
    g: &Graph,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if !g.masks().train.iter().any(|&m| m) {
        return Err(Error::InvalidArgument("graph has no training nodes".into()));
    }
    let communities = label_propagation(g, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let anchors = select_anchor_nodes(g, cfg.anchors, &mut rng)?;
    let dims = Model::dims(g.feature_dim(), cfg.hidden_dim, g.num_classes(), cfg.layers);
    let mut model = Model::glorot(&dims, cfg.omega_init, &mut rng)?;
    let mut adam = AdamState::new(&model);
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let ops = GraphOps::new(g);
    let sampler = Sampler {
        g,
        cfg,
        membership: &communities.membership,
        anchors: &anchors,
    };

    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let fw = sampler.forward(&model, &ops, epoch)?;
        let (loss, d_logits) = cross_entropy(fw.logits(), g.labels(), &g.masks().train)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("loss became {loss} at epoch {epoch}")));
        }
        let grads = backward(&model, &ops, &fw, &d_logits);
        let metrics = report(&fw, g)?;
        let record = EpochRecord {
            epoch,
            loss,
            train_acc: metrics.train_acc,
            val_acc: metrics.val_acc,
            test_acc: metrics.test_acc,
            mad: metrics.mad,
            omega: model.omegas(),
        };
        on_epoch(&record);
        trace.push(record);
        adam_step(&mut model, &grads, &mut adam, &adam_cfg);
    }

    let fw = sampler.forward(&model, &ops, cfg.epochs)?;
    let final_report = report(&fw, g)?;
    Ok(TrainOutcome {
        model,
        adam,
        trace,
        final_report,
        communities,
        anchors,
    })
}

/// Evaluates a trained model with negatives drawn from stream `epoch`.
pub fn evaluate(
    g: &Graph,
    model: &Model,
    cfg: &TrainConfig,
    membership: &[usize],
    anchors: &[usize],
    epoch: usize,
) -> Result<MetricsReport> {
    let ops = GraphOps::new(g);
    let sampler = Sampler {
        g,
        cfg,
        membership,
        anchors,
    };
    report(&sampler.forward(model, &ops, epoch)?, g)
}
