//! Command implementations behind the `hodgeconv` binary.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::complex::SimplicialComplex;
use crate::error::{Error, Result};
use crate::filters::{filter_support, laguerre_apply, numeric_support, stacked_apply, FilterBank};
use crate::io::{file_sha256, fmt_f64, load_complex_or_matrix, write_json, SCHEMA_VERSION};
use crate::laplacian::{hodge_laplacian, spectral_decompose_with_limit, DEFAULT_ORACLE_LIMIT};
use crate::layers::{Checkpoint, Model, ModelConfig};
use crate::signal::SimplexSignal;
use crate::train::{
    cross_validate, fit, generate_synthetic, history_csv, saliency_map, std_dev, Dataset, SyntheticSpec,
    TrainConfig,
};

/// Tolerance below which a filtered value counts as zero.
pub const SUPPORT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(name = "hodgeconv", version, about = "Hodge-Laplacian graph convolution experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter a unit pulse with Laguerre filters of several degrees.
    Localization(LocalizationArgs),
    /// Generate a synthetic dataset with a planted edge signal.
    Generate(GenerateArgs),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Group-level saliency of a trained model.
    Saliency(SaliencyArgs),
    /// Report simplex counts and Laplacian spectrum of a complex.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct ComplexArgs {
    /// Complex JSON, connectivity matrix (CSV/JSON), or builtin:NAME
    /// (path3, path4, pathN, grid, gridRxC, triangle, empty).
    #[arg(long)]
    pub complex: String,
    /// Connectivity entries with |value| above this become edges.
    #[arg(long, default_value_t = 0.0)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct LocalizationArgs {
    #[command(flatten)]
    pub complex: ComplexArgs,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Polynomial degrees; degree d uses Laguerre terms 0..=d.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub orders: Vec<usize>,
    /// Number of stacked degree-1 filters in the comparison run.
    #[arg(long, default_value_t = 4)]
    pub stacked_layers: usize,
    #[arg(long, default_value_t = 0)]
    pub source: usize,
    /// Divisor of the Laplacian; defaults to its estimated largest eigenvalue.
    #[arg(long)]
    pub spectral_scale: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// JSON file with generator settings; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub time: Option<usize>,
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub planted: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// JSON with optional `model` and `train` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides both the training seed and the initialization seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Also run repeated k-fold cross-validation.
    #[arg(long)]
    pub cv: bool,
    #[arg(long, default_value_t = 5)]
    pub cv_folds: usize,
    #[arg(long, default_value_t = 6)]
    pub cv_repeats: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SaliencyArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Edge saliency CSV; node saliency goes to `<stem>_nodes.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub complex: ComplexArgs,
    #[arg(long, default_value_t = 0)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_ORACLE_LIMIT)]
    pub oracle_limit: usize,
    /// Fail with the oracle-limit exit code instead of omitting the spectrum.
    #[arg(long)]
    pub require_spectrum: bool,
    /// Also write the report (and a manifest) to this path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Training configuration file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written once per command run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn hash_paths(paths: &[PathBuf]) -> Result<Vec<Artifact>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files = Vec::new();
            collect_files(p, &mut files)?;
            for f in files {
                out.push(Artifact { path: f.display().to_string(), sha256: file_sha256(&f)? });
            }
        } else if p.is_file() {
            out.push(Artifact { path: p.display().to_string(), sha256: file_sha256(p)? });
        }
    }
    Ok(out)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for e in entries {
        if e.is_dir() {
            collect_files(&e, out)?;
        } else {
            out.push(e);
        }
    }
    Ok(())
}

struct ManifestBuilder {
    command: &'static str,
    started: f64,
}

impl ManifestBuilder {
    fn start(command: &'static str) -> Self {
        Self { command, started: unix_now() }
    }

    fn finish(self, path: &Path, config: Value, seed: Option<u64>, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<()> {
        let manifest = RunManifest {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.to_string(),
            config,
            seed,
            started_unix: self.started,
            finished_unix: unix_now(),
            inputs: hash_paths(inputs)?,
            outputs: hash_paths(outputs)?,
        };
        write_json(path, &manifest)
    }
}

/// Resolves `builtin:NAME` or loads a complex/matrix file.
pub fn load_complex(spec: &str, threshold: f64) -> Result<SimplicialComplex> {
    let Some(name) = spec.strip_prefix("builtin:") else {
        return load_complex_or_matrix(Path::new(spec), threshold);
    };
    let bad = || Error::InputFormat(format!("unknown builtin complex {name:?}"));
    match name {
        "triangle" => Ok(SimplicialComplex::filled_triangle()),
        "grid" => Ok(SimplicialComplex::grid(5, 5)),
        "empty" => SimplicialComplex::new(0, [], []),
        _ => {
            if let Some(n) = name.strip_prefix("path") {
                let n: usize = n.parse().map_err(|_| bad())?;
                return Ok(SimplicialComplex::path(n));
            }
            if let Some(dims) = name.strip_prefix("grid") {
                let (r, c) = dims.split_once('x').ok_or_else(bad)?;
                let r: usize = r.parse().map_err(|_| bad())?;
                let c: usize = c.parse().map_err(|_| bad())?;
                return Ok(SimplicialComplex::grid(r, c));
            }
            Err(bad())
        }
    }
}

fn complex_input(spec: &str) -> Vec<PathBuf> {
    if spec.starts_with("builtin:") {
        Vec::new()
    } else {
        vec![PathBuf::from(spec)]
    }
}

fn simplex_label(c: &SimplicialComplex, k: usize, i: usize) -> String {
    match k {
        0 => i.to_string(),
        _ => {
            let [u, v] = c.edges()[i];
            format!("{u}-{v}")
        }
    }
}

/// Estimated largest eigenvalue, or 1 for a zero Laplacian. A unit scale
/// makes `T_0 + T_1 = 2I - L` vanish on simplices of Laplacian degree 2.
pub fn default_scale(l: &crate::laplacian::HodgeLaplacian) -> f64 {
    let s = l.lambda_max_estimate(100);
    if s > 1e-12 {
        s
    } else {
        1.0
    }
}

fn join_set(s: &BTreeSet<usize>) -> String {
    s.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Localization(a) => cmd_localization(&a),
        Command::Generate(a) => cmd_generate(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Saliency(a) => cmd_saliency(&a),
        Command::Inspect(a) => cmd_inspect(&a).map(|report| {
            println!("{}", serde_json::to_string_pretty(&report).unwrap_or_default());
        }),
    }
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } => 3,
        Error::OracleLimit { .. } => 4,
        _ => 2,
    }
}

pub fn cmd_localization(a: &LocalizationArgs) -> Result<()> {
    let manifest = ManifestBuilder::start("localization");
    let complex = load_complex(&a.complex.complex, a.complex.threshold)?;
    let l = hodge_laplacian(&complex, a.k)?;
    let n = l.dim();
    if a.source >= n {
        return Err(Error::InvalidParameter(format!("source {} out of range for {n} simplices", a.source)));
    }
    let hops = complex.hop_distances(a.k, a.source)?;
    let pulse = SimplexSignal::pulse(n, a.source);
    let scale = match a.spectral_scale {
        Some(s) if s.is_finite() && s > 0.0 => s,
        Some(s) => return Err(Error::InvalidParameter(format!("spectral scale {s} must be positive"))),
        None => default_scale(&l),
    };
    let uniform = |p: usize| -> Result<FilterBank> { FilterBank::new(p, 1, 1, scale, vec![1.0; p]) };

    let mut columns: Vec<(String, usize, SimplexSignal, BTreeSet<usize>)> = Vec::new();
    for &d in &a.orders {
        let bank = uniform(d + 1)?;
        let out = laguerre_apply(&l, &bank, &pulse)?;
        columns.push((format!("degree_{d}"), d, out, filter_support(&l, d + 1, a.source)?));
    }
    if a.stacked_layers > 0 {
        let banks = vec![uniform(2)?; a.stacked_layers];
        let out = stacked_apply(&l, &banks, &pulse)?;
        let s = a.stacked_layers;
        columns.push((format!("stacked_{s}x1"), s, out, filter_support(&l, s + 1, a.source)?));
    }

    fs::create_dir_all(&a.out)?;
    let mut signals = String::from("simplex,label,hops");
    for (name, ..) in &columns {
        signals.push(',');
        signals.push_str(name);
    }
    signals.push('\n');
    for i in 0..n {
        let hop = hops[i].map(|h| h.to_string()).unwrap_or_default();
        let _ = write!(signals, "{i},{},{hop}", simplex_label(&complex, a.k, i));
        for (_, _, s, _) in &columns {
            let _ = write!(signals, ",{}", fmt_f64(s.get(i, 0)));
        }
        signals.push('\n');
    }
    let mut support = String::from("filter,degree,structural_support,numeric_support\n");
    for (name, d, s, structural) in &columns {
        let numeric = numeric_support(s, SUPPORT_TOLERANCE);
        let _ = writeln!(support, "{name},{d},{},{}", join_set(structural), join_set(&numeric));
    }
    let signals_path = a.out.join("localization.csv");
    let support_path = a.out.join("support.csv");
    fs::write(&signals_path, signals)?;
    fs::write(&support_path, support)?;
    let config = json!({
        "complex": a.complex.complex,
        "threshold": a.complex.threshold,
        "k": a.k,
        "orders": a.orders,
        "stacked_layers": a.stacked_layers,
        "source": a.source,
        "spectral_scale": scale,
        "theta": "uniform",
    });
    manifest.finish(
        &a.out.join("manifest.json"),
        config,
        None,
        &complex_input(&a.complex.complex),
        &[signals_path, support_path],
    )
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let manifest = ManifestBuilder::start("generate");
    let mut spec: SyntheticSpec = match &a.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
            .map_err(|e| Error::InputFormat(format!("{}: {e}", p.display())))?,
        None => SyntheticSpec::default(),
    };
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    if let Some(v) = a.samples {
        spec.n_samples = v;
    }
    if let Some(v) = a.nodes {
        spec.n_nodes = v;
    }
    if let Some(v) = a.time {
        spec.time_len = v;
    }
    if let Some(v) = a.density {
        spec.density = v;
    }
    if let Some(v) = a.noise {
        spec.noise_sigma = v;
    }
    if let Some(v) = a.planted {
        spec.n_planted = v;
        spec.planted_weights = None;
    }
    let data = generate_synthetic(&spec)?;
    data.save(&a.out)?;
    let outputs = vec![
        a.out.join("atlas.json"),
        a.out.join("samples.csv"),
        a.out.join("planted.json"),
        a.out.join("series"),
        a.out.join("edges"),
    ];
    let inputs: Vec<PathBuf> = a.config.iter().cloned().collect();
    manifest.finish(&a.out.join("manifest.json"), serde_json::to_value(&spec)?, Some(spec.seed), &inputs, &outputs)
}

pub fn load_run_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
            .map_err(|e| Error::InputFormat(format!("{}: {e}", p.display()))),
        None => Ok(RunConfig::default()),
    }
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let manifest = ManifestBuilder::start("train");
    let mut cfg = load_run_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.train.seed = s;
        cfg.model.init_seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    let data = Dataset::load(&a.data)?;
    let mut model = Model::new(cfg.model.clone(), &data.atlas)?;
    let report = fit(&mut model, &data, &cfg.train)?;

    fs::create_dir_all(&a.out)?;
    let checkpoint_path = a.out.join("checkpoint.json");
    let history_path = a.out.join("history.csv");
    model.to_checkpoint().save(&checkpoint_path)?;
    fs::write(&history_path, history_csv(&report.history))?;
    let mut outputs = vec![checkpoint_path, history_path];

    let train_rmse = crate::train::evaluate(&model, &data, &report.train_indices)?;
    let val_rmse = if report.val_indices.is_empty() {
        None
    } else {
        Some(crate::train::evaluate(&model, &data, &report.val_indices)?)
    };
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "selected_epoch": report.selected_epoch,
        "train_rmse": train_rmse,
        "val_rmse": val_rmse,
        "target_std": std_dev(&data.targets),
        "n_train": report.train_indices.len(),
        "n_val": report.val_indices.len(),
        "parameters": model.parameter_count(),
    });
    let summary_path = a.out.join("summary.json");
    write_json(&summary_path, &summary)?;
    outputs.push(summary_path);

    if a.cv {
        let folds = cross_validate(&cfg.model, &data, &cfg.train, a.cv_folds, a.cv_repeats)?;
        let mut csv = String::from("repeat,fold,val_rmse\n");
        for f in &folds {
            let _ = writeln!(csv, "{},{},{}", f.repeat, f.fold, fmt_f64(f.val_rmse));
        }
        let cv_path = a.out.join("cv.csv");
        fs::write(&cv_path, csv)?;
        outputs.push(cv_path);
    }
    let mut config = serde_json::to_value(&cfg)?;
    config["cv"] = json!({ "enabled": a.cv, "folds": a.cv_folds, "repeats": a.cv_repeats });
    let mut inputs = vec![a.data.clone()];
    inputs.extend(a.config.iter().cloned());
    manifest.finish(&a.out.join("manifest.json"), config, Some(cfg.train.seed), &inputs, &outputs)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("saliency");
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn cmd_saliency(a: &SaliencyArgs) -> Result<()> {
    let manifest = ManifestBuilder::start("saliency");
    let data = Dataset::load(&a.data)?;
    let model = Model::from_checkpoint(Checkpoint::load(&a.checkpoint)?, &data.atlas)?;
    let sal = saliency_map(&model, &data)?;

    let mut edges = String::from("edge,u,v,saliency\n");
    for (e, (&[u, v], s)) in data.atlas.edges().iter().zip(&sal.edges).enumerate() {
        let _ = writeln!(edges, "{e},{u},{v},{}", fmt_f64(*s));
    }
    let mut nodes = String::from("node,saliency\n");
    for (n, s) in sal.nodes.iter().enumerate() {
        let _ = writeln!(nodes, "{n},{}", fmt_f64(*s));
    }
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let node_path = sibling(&a.out, "_nodes.csv");
    fs::write(&a.out, edges)?;
    fs::write(&node_path, nodes)?;
    let config = json!({
        "checkpoint": a.checkpoint.display().to_string(),
        "data": a.data.display().to_string(),
    });
    manifest.finish(
        &sibling(&a.out, "_manifest.json"),
        config,
        None,
        &[a.checkpoint.clone(), a.data.clone()],
        &[a.out.clone(), node_path],
    )
}

/// Builds the inspection report; writes it and a manifest when `--out` is set.
pub fn cmd_inspect(a: &InspectArgs) -> Result<Value> {
    let manifest = ManifestBuilder::start("inspect");
    let complex = load_complex(&a.complex.complex, a.complex.threshold)?;
    let l = hodge_laplacian(&complex, a.k)?;
    let degrees: Vec<usize> = complex.node_neighbors().iter().map(|n| n.len()).collect();
    let degree_stats = if degrees.is_empty() {
        Value::Null
    } else {
        json!({
            "min": degrees.iter().min(),
            "max": degrees.iter().max(),
            "mean": degrees.iter().sum::<usize>() as f64 / degrees.len() as f64,
        })
    };
    let spectrum = match spectral_decompose_with_limit(&l, a.oracle_limit) {
        Ok(d) => Some(d.eigenvalues),
        Err(e @ Error::OracleLimit { .. }) if a.require_spectrum => return Err(e),
        Err(Error::OracleLimit { .. }) => None,
        Err(e) => return Err(e),
    };
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "complex": a.complex.complex,
        "k": a.k,
        "counts": {
            "nodes": complex.n_nodes(),
            "edges": complex.n_edges(),
            "triangles": complex.n_triangles(),
        },
        "connected_components": complex.connected_components(),
        "node_degree": degree_stats,
        "laplacian": {
            "dim": l.dim(),
            "nnz": l.matrix.nnz(),
            "lambda_max_estimate": l.lambda_max_estimate(100),
        },
        "spectrum": spectrum,
        "lambda_min": spectrum.as_ref().and_then(|s| s.first()),
        "lambda_max": spectrum.as_ref().and_then(|s| s.last()),
        "oracle_limit": a.oracle_limit,
    });
    if let Some(out) = &a.out {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        write_json(out, &report)?;
        let config = json!({
            "complex": a.complex.complex,
            "threshold": a.complex.threshold,
            "k": a.k,
            "oracle_limit": a.oracle_limit,
            "require_spectrum": a.require_spectrum,
        });
        manifest.finish(
            &sibling(out, "_manifest.json"),
            config,
            None,
            &complex_input(&a.complex.complex),
            std::slice::from_ref(out),
        )?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins() {
        assert_eq!(load_complex("builtin:path3", 0.0).unwrap().n_edges(), 2);
        assert_eq!(load_complex("builtin:path4", 0.0).unwrap().n_edges(), 3);
        assert_eq!(load_complex("builtin:grid", 0.0).unwrap().n_edges(), 40);
        assert_eq!(load_complex("builtin:grid2x3", 0.0).unwrap().n_nodes(), 6);
        assert_eq!(load_complex("builtin:triangle", 0.0).unwrap().n_triangles(), 1);
        assert_eq!(load_complex("builtin:empty", 0.0).unwrap().n_nodes(), 0);
        assert!(load_complex("builtin:nope", 0.0).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Divergence { epoch: 1 }), 3);
        assert_eq!(exit_code(&Error::OracleLimit { dim: 5, limit: 2 }), 4);
        assert_eq!(exit_code(&Error::InputFormat("x".into())), 2);
    }

    #[test]
    fn config_defaults_fill_missing_fields() {
        let cfg: RunConfig = serde_json::from_str(r#"{"train": {"epochs": 3}}"#).unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.learning_rate, 0.005);
        assert_eq!(cfg.model, ModelConfig::default());
        assert!(serde_json::from_str::<RunConfig>(r#"{"trian": {}}"#).is_err());
    }
}
