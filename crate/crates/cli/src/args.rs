use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::UsageError;

#[derive(Parser, Debug)]
#[command(name = "sdgcn", version, about = "Diverse negative sampling for graph convolutional networks")]
pub struct Cli {
    /// Seed for every random choice made by the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// JSON object of flat key/value pairs; its values override flags.
    #[arg(long, global = true, value_name = "JSON")]
    pub config: Option<PathBuf>,

    /// Directory receiving every output file.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a stochastic block model graph.
    Generate(GenerateArgs),
    /// Train a model and stream per-epoch metrics.
    Train(TrainArgs),
    /// Dump one negative sample table.
    Sample(SampleArgs),
    /// Multi-seed comparison of negative strategies or kernels.
    Eval(EvalArgs),
    /// Candidate-pool cost report.
    Cost(CostArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SbmArgs {
    #[arg(long, default_value_t = 4)]
    pub blocks: usize,
    #[arg(long, default_value_t = 30)]
    pub per_block: usize,
    #[arg(long, default_value_t = 0.3)]
    pub p_in: f64,
    #[arg(long, default_value_t = 0.02)]
    pub p_out: f64,
    /// Feature dimension.
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Feature noise standard deviation.
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GenerateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub sbm: SbmArgs,
}

/// Where the input graph comes from: a file, or a generated block model.
#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GraphArgs {
    /// Graph JSON file; without it a block model is generated from the seed.
    #[arg(long, value_name = "FILE")]
    pub graph: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub sbm: SbmArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct NegArgs {
    /// Kernel: qd, cosine, community or node.
    #[arg(long, default_value = "qd")]
    pub kernel: String,
    #[arg(long, default_value_t = sdgcn::dpp::DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Negative strategy: sdgcn, full-dpp, random or none.
    #[arg(long, default_value = "sdgcn")]
    pub neg: String,
    /// Maximum shortest-path length for candidate pools.
    #[arg(long, default_value_t = sdgcn::negsamp::DEFAULT_PATH_LEN)]
    pub path_len: usize,
    /// Anchors: all, deg1, topk:F or rand:F.
    #[arg(long, default_value = "all")]
    pub anchors: String,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// Initial weight of the negative term.
    #[arg(long, default_value_t = sdgcn::gnn::DEFAULT_OMEGA)]
    pub omega: f64,
    /// When negatives are redrawn: per-epoch or per-layer.
    #[arg(long, default_value = "per-epoch")]
    pub resample: String,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub neg: NegArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SampleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub neg: NegArgs,
    /// Sampling stream epoch.
    #[arg(long, default_value_t = 0)]
    pub epoch: usize,
    /// Also run the exactness self-test on a small induced subgraph.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainArgs,
    /// Number of seeds, counted up from --seed.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// `neg` compares plain GCN with the chosen strategy; `kernel` sweeps
    /// qd, community and node.
    #[arg(long, default_value = "neg")]
    pub compare: String,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CostArgs {
    /// Measure pools on this graph (or on a generated one when no closed-form
    /// statistics are given).
    #[command(flatten)]
    #[serde(flatten)]
    pub graph: GraphArgs,
    /// Node count for the closed-form estimate.
    #[arg(long, requires = "avg_degree")]
    pub nodes: Option<usize>,
    /// Average degree for the closed-form estimate.
    #[arg(long, requires = "nodes")]
    pub avg_degree: Option<f64>,
    #[arg(long, default_value_t = sdgcn::negsamp::DEFAULT_PATH_LEN)]
    pub path_len: usize,
}

/// Settings after merging flags with the `--config` file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Resolved<T> {
    pub seed: u64,
    #[serde(flatten)]
    pub args: T,
}

/// Overlays `config` onto the flag values. Keys must name existing settings.
pub fn merge<T>(seed: u64, args: T, config: Option<&Value>) -> Result<Resolved<T>, UsageError>
where
    T: Serialize + DeserializeOwned,
{
    let resolved = Resolved { seed, args };
    let Some(config) = config else {
        return Ok(resolved);
    };
    let Value::Object(overrides) = config else {
        return Err(UsageError("config must be a JSON object".into()));
    };
    let Value::Object(mut base) = serde_json::to_value(&resolved).expect("settings serialise") else {
        unreachable!("settings serialise to an object");
    };
    for (key, value) in overrides {
        let key = key.replace('-', "_");
        if !base.contains_key(&key) {
            return Err(UsageError(format!("unknown config key `{key}`")));
        }
        base.insert(key, value.clone());
    }
    serde_json::from_value(Value::Object(base))
        .map_err(|e| UsageError(format!("invalid config value: {e}")))
}
