use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use sdgcn::community::label_propagation;
use sdgcn::dpp::{KernelSpec, KernelVariant};
use sdgcn::gnn::{train_with_callback, Resample, TrainConfig};
use sdgcn::graph::{generate_sbm, SbmParams};
use sdgcn::negsamp::{
    build_negative_table, cost_estimate, measure_cost, select_anchor_nodes, AnchorStrategy,
    NegStrategy, NegativeConfig, SamplingStream,
};
use sdgcn::Graph;

use crate::args::{merge, CostArgs, EvalArgs, GenerateArgs, GraphArgs, NegArgs, SampleArgs, SbmArgs, TrainArgs};
use crate::manifest::{content_hash, Clock, RunManifest};
use crate::verify::self_test;
use crate::UsageError;

pub struct Context {
    pub seed: u64,
    pub out: PathBuf,
    config: Option<Value>,
}

impl Context {
    pub fn new(cli: &crate::args::Cli) -> Result<Context> {
        let config = match &cli.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                Some(serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?)
            }
            None => None,
        };
        Ok(Context {
            seed: cli.seed,
            out: cli.out.clone(),
            config,
        })
    }

    fn resolve<T: Serialize + serde::de::DeserializeOwned>(&self, args: &T) -> Result<(u64, T, Value)> {
        let r = merge(self.seed, args_clone(args)?, self.config.as_ref())?;
        let value = serde_json::to_value(&r)?;
        Ok((r.seed, r.args, value))
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating output directory {}", self.out.display()))?;
        Ok(&self.out)
    }
}

fn args_clone<T: Serialize + serde::de::DeserializeOwned>(args: &T) -> Result<T> {
    Ok(serde_json::from_value(serde_json::to_value(args)?)?)
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn sbm_params(a: &SbmArgs, seed: u64) -> SbmParams {
    SbmParams {
        blocks: a.blocks,
        nodes_per_block: a.per_block,
        p_in: a.p_in,
        p_out: a.p_out,
        feature_dim: a.dim,
        feature_noise: a.noise,
        seed,
    }
}

struct LoadedGraph {
    graph: Graph,
    source: Value,
    hash: String,
}

fn load_graph(a: &GraphArgs, seed: u64) -> Result<LoadedGraph> {
    match &a.graph {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading graph {}", path.display()))?;
            let graph = Graph::from_json_str(&text).with_context(|| format!("loading graph {}", path.display()))?;
            Ok(LoadedGraph {
                graph,
                source: json!({ "file": path }),
                hash: content_hash(text.as_bytes()),
            })
        }
        None => {
            let params = sbm_params(&a.sbm, seed);
            let graph = generate_sbm(&params)?;
            let hash = content_hash(graph.to_json_string().as_bytes());
            Ok(LoadedGraph {
                graph,
                source: json!({ "sbm": params }),
                hash,
            })
        }
    }
}

fn negative_config(a: &NegArgs) -> Result<(NegativeConfig, AnchorStrategy)> {
    let variant: KernelVariant = a.kernel.parse()?;
    let strategy: NegStrategy = a.neg.parse()?;
    let anchors: AnchorStrategy = a.anchors.parse()?;
    if a.path_len < 2 {
        return Err(usage("--path-len must be at least 2"));
    }
    Ok((
        NegativeConfig {
            strategy,
            kernel: KernelSpec::new(variant, a.epsilon)?,
            path_len: a.path_len,
        },
        anchors,
    ))
}

fn train_config(a: &TrainArgs, seed: u64) -> Result<TrainConfig> {
    let (negatives, anchors) = negative_config(&a.neg)?;
    let resample: Resample = a.model.resample.parse()?;
    let cfg = TrainConfig {
        layers: a.model.layers,
        hidden_dim: a.model.hidden,
        epochs: a.model.epochs,
        lr: a.model.lr,
        seed,
        negatives,
        anchors,
        resample,
        omega_init: a.model.omega,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_manifest(dir: &Path, m: &RunManifest) -> Result<()> {
    write_json(&dir.join("manifest.json"), m)
}

pub fn generate(ctx: &Context, a: &GenerateArgs) -> Result<()> {
    let clock = Clock::start();
    let (seed, a, config) = ctx.resolve(a)?;
    let params = sbm_params(&a.sbm, seed);
    let g = generate_sbm(&params)?;
    let dir = ctx.out_dir()?;
    let text = g.to_json_string();
    fs::write(dir.join("graph.json"), &text).context("writing graph.json")?;
    println!(
        "n={} edges={} avg_degree={:.3}",
        g.n(),
        g.num_undirected_edges(),
        g.average_degree()
    );
    write_manifest(
        dir,
        &RunManifest {
            command: "generate",
            version: env!("CARGO_PKG_VERSION"),
            config,
            graph_source: json!({ "sbm": params }),
            input_hash: content_hash(text.as_bytes()),
            timings: clock.finish(),
        },
    )
}

#[derive(Serialize)]
struct RunSummary {
    train_acc: f64,
    val_acc: Option<f64>,
    test_acc: Option<f64>,
    mad: f64,
    omega: Vec<f64>,
    anchors: usize,
    communities: usize,
}

/// Trains one model, streaming the trace to `trace_path`.
fn run_training(g: &Graph, cfg: &TrainConfig, trace_path: &Path) -> Result<RunSummary> {
    let file = File::create(trace_path).with_context(|| format!("creating {}", trace_path.display()))?;
    let mut trace = BufWriter::new(file);
    let mut write_err = None;
    let outcome = train_with_callback(g, cfg, |rec| {
        if write_err.is_some() {
            return;
        }
        let line = serde_json::to_string(rec).expect("records serialise");
        if let Err(e) = writeln!(trace, "{line}") {
            write_err = Some(e);
        }
        info!("epoch {} loss {:.4} train {:.3}", rec.epoch, rec.loss, rec.train_acc);
    })?;
    if let Some(e) = write_err {
        return Err(e).with_context(|| format!("writing {}", trace_path.display()));
    }
    trace.flush()?;
    let r = outcome.final_report;
    Ok(RunSummary {
        train_acc: r.train_acc,
        val_acc: r.val_acc,
        test_acc: r.test_acc,
        mad: r.mad,
        omega: outcome.model.omegas(),
        anchors: outcome.anchors.len(),
        communities: outcome.communities.k,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

pub fn train(ctx: &Context, a: &TrainArgs) -> Result<()> {
    let mut clock = Clock::start();
    let (seed, a, config) = ctx.resolve(a)?;
    let cfg = train_config(&a, seed)?;
    let loaded = load_graph(&a.graph, seed)?;
    let dir = ctx.out_dir()?;
    clock.phase("load");
    let summary = run_training(&loaded.graph, &cfg, &dir.join("trace.jsonl"))?;
    clock.phase("train");
    println!(
        "train_acc={:.4} val_acc={} test_acc={} mad={:.4}",
        summary.train_acc,
        fmt_opt(summary.val_acc),
        fmt_opt(summary.test_acc),
        summary.mad
    );
    write_json(&dir.join("summary.json"), &summary)?;
    write_manifest(
        dir,
        &RunManifest {
            command: "train",
            version: env!("CARGO_PKG_VERSION"),
            config,
            graph_source: loaded.source,
            input_hash: loaded.hash,
            timings: clock.finish(),
        },
    )
}

#[derive(Serialize)]
struct TableDump {
    strategy: NegStrategy,
    kernel: KernelSpec,
    path_len: usize,
    epoch: usize,
    anchors: Vec<usize>,
    negatives: std::collections::BTreeMap<usize, Vec<usize>>,
    fallback: Vec<usize>,
}

pub fn sample(ctx: &Context, a: &SampleArgs) -> Result<()> {
    let mut clock = Clock::start();
    let (seed, a, config) = ctx.resolve(a)?;
    let (neg, anchor_strategy) = negative_config(&a.neg)?;
    let loaded = load_graph(&a.graph, seed)?;
    let g = &loaded.graph;
    let dir = ctx.out_dir()?;
    clock.phase("load");

    let communities = label_propagation(g, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anchors = select_anchor_nodes(g, anchor_strategy, &mut rng)?;
    let stream = SamplingStream {
        seed,
        epoch: a.epoch,
        layer: 0,
    };
    let table = build_negative_table(g, g.features(), &communities.membership, &neg, &anchors, stream)?;
    clock.phase("sample");
    let fallback: Vec<usize> = (0..g.n()).filter(|&i| table.used_fallback(i)).collect();
    println!(
        "anchors={} negatives={} fallback={}",
        anchors.len(),
        table.total_negatives(),
        fallback.len()
    );
    let mut sorted_anchors = anchors.clone();
    sorted_anchors.sort_unstable();
    write_json(
        &dir.join("negatives.json"),
        &TableDump {
            strategy: neg.strategy,
            kernel: neg.kernel,
            path_len: neg.path_len,
            epoch: a.epoch,
            anchors: sorted_anchors,
            negatives: table.to_map(),
            fallback,
        },
    )?;

    if a.verify {
        let report = self_test(g, neg.kernel, seed)?;
        clock.phase("verify");
        println!("{report}");
        write_json(&dir.join("verify.json"), &report)?;
        if !report.passed() {
            return Err(sdgcn::Error::Numerical(format!(
                "sampler self-test failed: total variation {:.5}",
                report.tv
            ))
            .into());
        }
    }

    write_manifest(
        dir,
        &RunManifest {
            command: "sample",
            version: env!("CARGO_PKG_VERSION"),
            config,
            graph_source: loaded.source,
            input_hash: loaded.hash,
            timings: clock.finish(),
        },
    )
}

#[derive(Serialize)]
struct EvalRun {
    label: String,
    seed: u64,
    #[serde(flatten)]
    summary: RunSummary,
}

#[derive(Serialize)]
struct EvalGroup {
    label: String,
    runs: usize,
    median_test_acc: f64,
    mean_test_acc: f64,
    std_test_acc: f64,
    median_mad: f64,
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn eval(ctx: &Context, a: &EvalArgs) -> Result<()> {
    let mut clock = Clock::start();
    let (seed0, a, config) = ctx.resolve(a)?;
    if a.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    let base = train_config(&a.train, seed0)?;
    let variants: Vec<(String, NegativeConfig)> = match a.compare.as_str() {
        "neg" => {
            let none = NegativeConfig {
                strategy: NegStrategy::None,
                ..base.negatives
            };
            let mut v = vec![("gcn".to_string(), none)];
            if base.negatives.strategy != NegStrategy::None {
                v.push((base.negatives.strategy.to_string(), base.negatives));
            }
            v
        }
        "kernel" => [
            KernelVariant::QualityDiversity,
            KernelVariant::Community,
            KernelVariant::Node,
        ]
        .into_iter()
        .map(|variant| {
            let mut neg = base.negatives;
            neg.strategy = NegStrategy::Sdgcn;
            neg.kernel.variant = variant;
            (variant.to_string(), neg)
        })
        .collect(),
        other => return Err(usage(format!("unknown comparison `{other}` (expected neg or kernel)"))),
    };

    let dir = ctx.out_dir()?;
    let traces = dir.join("traces");
    fs::create_dir_all(&traces).context("creating traces directory")?;
    let mut runs = Vec::new();
    let mut sources = Vec::new();
    let mut hashes = Vec::new();
    for seed in seed0..seed0 + a.seeds {
        let loaded = load_graph(&a.train.graph, seed)?;
        clock.phase("load");
        for (label, neg) in &variants {
            let cfg = TrainConfig {
                seed,
                negatives: *neg,
                ..base.clone()
            };
            let path = traces.join(format!("{label}-seed{seed}.jsonl"));
            let summary = run_training(&loaded.graph, &cfg, &path)?;
            clock.phase("train");
            eprintln!(
                "{label} seed {seed}: test_acc={} mad={:.4}",
                fmt_opt(summary.test_acc),
                summary.mad
            );
            runs.push(EvalRun {
                label: label.clone(),
                seed,
                summary,
            });
        }
        sources.push(loaded.source);
        hashes.push(loaded.hash);
    }

    let groups: Vec<EvalGroup> = variants
        .iter()
        .map(|(label, _)| {
            let mine: Vec<&EvalRun> = runs.iter().filter(|r| &r.label == label).collect();
            let acc: Vec<f64> = mine.iter().map(|r| r.summary.test_acc.unwrap_or(f64::NAN)).collect();
            let mad: Vec<f64> = mine.iter().map(|r| r.summary.mad).collect();
            let (mean, std) = mean_std(&acc);
            EvalGroup {
                label: label.clone(),
                runs: mine.len(),
                median_test_acc: median(&acc),
                mean_test_acc: mean,
                std_test_acc: std,
                median_mad: median(&mad),
            }
        })
        .collect();
    println!("{:<10} {:>5} {:>10} {:>10} {:>10} {:>10}", "model", "runs", "med_acc", "mean_acc", "std_acc", "med_mad");
    for gr in &groups {
        println!(
            "{:<10} {:>5} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            gr.label, gr.runs, gr.median_test_acc, gr.mean_test_acc, gr.std_test_acc, gr.median_mad
        );
    }
    write_json(&dir.join("eval.json"), &json!({ "groups": groups, "runs": runs }))?;
    write_manifest(
        dir,
        &RunManifest {
            command: "eval",
            version: env!("CARGO_PKG_VERSION"),
            config,
            graph_source: Value::Array(sources),
            input_hash: content_hash(hashes.join("\n").as_bytes()),
            timings: clock.finish(),
        },
    )
}

pub fn cost(ctx: &Context, a: &CostArgs) -> Result<()> {
    let clock = Clock::start();
    let (seed, a, config) = ctx.resolve(a)?;
    if a.path_len < 2 {
        return Err(usage("--path-len must be at least 2"));
    }
    let avg_path = (a.path_len - 1) as f64;
    let (report, source, hash) = match (a.nodes, a.avg_degree) {
        (Some(n), Some(d)) => {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(usage("--avg-degree must be a non-negative number"));
            }
            (cost_estimate(n, d, avg_path), json!({ "statistics": { "nodes": n, "avg_degree": d } }), String::new())
        }
        _ => {
            let loaded = load_graph(&a.graph, seed)?;
            (measure_cost(&loaded.graph, a.path_len, seed)?, loaded.source, loaded.hash)
        }
    };
    println!("nodes={} avg_degree={:.4} avg_path={}", report.nodes, report.avg_degree, report.avg_path);
    println!("full_cost N^3={:.6e}", report.full_cost);
    println!("reduced_cost (pa*deg)^3={:.1}", report.reduced_cost);
    if let (Some(mean), Some(max), Some(bound)) =
        (report.mean_candidates, report.max_candidates, report.candidate_bound)
    {
        println!("candidates mean={mean:.2} max={max} bound={bound}");
    }
    let dir = ctx.out_dir()?;
    write_json(&dir.join("cost.json"), &report)?;
    write_manifest(
        dir,
        &RunManifest {
            command: "cost",
            version: env!("CARGO_PKG_VERSION"),
            config,
            graph_source: source,
            input_hash: hash,
            timings: clock.finish(),
        },
    )
}
