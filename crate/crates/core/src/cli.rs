//! Command-line front end: `prepare`, `train`, `eval`, `score`, `report`.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::artifact::{load_cache, save_cache, write_atomic, ModelArtifact};
use crate::config::PipelineConfig;
use crate::dataset::parse_record;
use crate::error::{Error, Result, StageContext};
use crate::eval::{render_report, EvalReport};
use crate::features::FeatureSchema;
use crate::models::{argmax, CLASSES};
use crate::pipeline::{self, EncodedSet, PrepareSummary, Prepared};

#[derive(Debug, Parser)]
#[command(
    name = "kdd-ids",
    version,
    about = "NSL-KDD intrusion detection with autoencoder and MLP classifiers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, filter, encode and cache both splits.
    Prepare(ConfigArgs),
    /// Train a classifier and write the model artifact.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Artifact path (default: <out-dir>/<model>.model.json).
        #[arg(long)]
        artifact: Option<PathBuf>,
    },
    /// Evaluate an artifact on the cached test split.
    Eval {
        #[arg(long)]
        artifact: PathBuf,
        /// Encoded test cache (default: test.cache beside the artifact).
        #[arg(long)]
        test_cache: Option<PathBuf>,
    },
    /// Score raw records (41-43 comma-separated fields per line).
    Score {
        #[arg(long)]
        artifact: PathBuf,
        /// Input file; `-` reads standard input.
        #[arg(long, default_value = "-")]
        input: PathBuf,
    },
    /// Render per-class and accuracy tables from saved evaluation reports.
    Report {
        /// Report files (default: every *.report.json in --out-dir).
        reports: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory containing KDDTrain+.txt and KDDTest+.txt
    /// (default: $KDD_IDS_DATA_DIR, else ./data).
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub train_path: Option<PathBuf>,
    #[arg(long)]
    pub test_path: Option<PathBuf>,
    /// Outlier threshold in MAD units.
    #[arg(long)]
    pub k: Option<f64>,
    /// MAD consistency constant.
    #[arg(long = "c")]
    pub mad_scale: Option<f64>,
    #[arg(long)]
    pub zero_ratio_threshold: Option<f64>,
    /// Comma-separated autoencoder code sizes, e.g. 50,25,12.
    #[arg(long)]
    pub code_sizes: Option<String>,
    #[arg(long)]
    pub mlp_hidden: Option<usize>,
    #[arg(long)]
    pub pretrain_iters: Option<usize>,
    #[arg(long)]
    pub finetune_iters: Option<usize>,
    #[arg(long)]
    pub head_iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// ae or mlp
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl ConfigArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        if let Some(dir) = &self.data_dir {
            cfg.set("data_dir", &dir.to_string_lossy())?;
        }
        if let Some(p) = &self.train_path {
            cfg.train_path = p.clone();
        }
        if let Some(p) = &self.test_path {
            cfg.test_path = p.clone();
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.mad_scale {
            cfg.mad_scale = v;
        }
        if let Some(v) = self.zero_ratio_threshold {
            cfg.zero_ratio_threshold = v;
        }
        if let Some(v) = &self.code_sizes {
            cfg.set("code_sizes", v)?;
        }
        if let Some(v) = self.mlp_hidden {
            cfg.mlp_hidden = v;
        }
        if let Some(v) = self.pretrain_iters {
            cfg.pretrain_iters = v;
        }
        if let Some(v) = self.finetune_iters {
            cfg.finetune_iters = v;
        }
        if let Some(v) = self.head_iters {
            cfg.head_iters = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.model {
            cfg.set("model", v)?;
        }
        if let Some(v) = &self.out_dir {
            cfg.out_dir = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub const SCHEMA_FILE: &str = "schema.json";
pub const SUMMARY_FILE: &str = "prepare_summary.json";
pub const TRAIN_CACHE: &str = "train.cache";
pub const TEST_CACHE: &str = "test.cache";

fn write_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &serde_json::to_vec_pretty(value)?)
}

/// Runs preprocessing and writes schema, caches and summary into `out_dir`.
pub fn cmd_prepare(cfg: &PipelineConfig, out: &mut dyn Write) -> Result<Prepared> {
    let prepared = pipeline::prepare(cfg)?;
    let hash = prepared.schema.hash();
    let pre_hash = cfg.preprocessing_hash();
    let dir = &cfg.out_dir;
    write_json(&dir.join(SCHEMA_FILE), &prepared.schema).stage("write schema")?;
    write_json(&dir.join(SUMMARY_FILE), &prepared.summary).stage("write summary")?;
    save_cache(&dir.join(TRAIN_CACHE), &prepared.train, &hash, &pre_hash).stage("write cache")?;
    save_cache(&dir.join(TEST_CACHE), &prepared.test, &hash, &pre_hash).stage("write cache")?;
    write_out(out, &prepared.summary.render())?;
    write_out(
        out,
        &format!("schema {hash}\ncaches written to {}\n", dir.display()),
    )?;
    Ok(prepared)
}

/// Loads cached preprocessing output when it matches `cfg`.
fn load_prepared(cfg: &PipelineConfig) -> Option<(FeatureSchema, EncodedSet, PrepareSummary)> {
    let dir = &cfg.out_dir;
    let schema: FeatureSchema =
        serde_json::from_slice(&std::fs::read(dir.join(SCHEMA_FILE)).ok()?).ok()?;
    let summary: PrepareSummary =
        serde_json::from_slice(&std::fs::read(dir.join(SUMMARY_FILE)).ok()?).ok()?;
    let (header, train) = load_cache(&dir.join(TRAIN_CACHE)).ok()?;
    let matches = header.schema_hash == schema.hash()
        && header.preprocessing_hash == cfg.preprocessing_hash()
        && header.dim == schema.input_dim;
    matches.then_some((schema, train, summary))
}

pub fn cmd_train(
    cfg: &PipelineConfig,
    artifact_path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<ModelArtifact> {
    let (schema, train) = match load_prepared(cfg) {
        Some((schema, train, _)) => {
            write_out(
                out,
                &format!("using cached preprocessing in {}\n", cfg.out_dir.display()),
            )?;
            (schema, train)
        }
        None => {
            write_out(out, "no matching cache, preparing\n")?;
            let p = cmd_prepare(cfg, out)?;
            (p.schema, p.train)
        }
    };
    write_out(
        out,
        &format!(
            "training {} on {} records ({} inputs), seed {}\n",
            cfg.model_tag(),
            train.len(),
            train.inputs.ncols(),
            cfg.seed
        ),
    )?;
    let model = pipeline::train(&train, cfg)?;
    for stage in &model.stages {
        let mut line = format!(
            "{:<16} {:>4} iterations  loss {:.6} -> {:.6}  ({:?})\n  trace:",
            stage.stage, stage.iterations, stage.initial_loss, stage.final_loss, stage.stop
        );
        let step = (stage.trace.len() / 10).max(1);
        for (i, v) in stage.trace.iter().enumerate().step_by(step) {
            line.push_str(&format!(" [{i}] {v:.5}"));
        }
        line.push('\n');
        write_out(out, &line)?;
    }
    for w in &model.warnings {
        write_out(out, &format!("warning: {w}\n"))?;
    }
    let artifact = ModelArtifact::new(&schema, &model, cfg);
    let path = artifact_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.artifact_path());
    artifact.save(&path).stage("write artifact")?;
    write_out(
        out,
        &format!(
            "topology {:?}\nartifact written to {}\n",
            artifact.topology.dims,
            path.display()
        ),
    )?;
    Ok(artifact)
}

pub fn report_path(artifact_path: &Path) -> PathBuf {
    let name = artifact_path
        .file_name()
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_default();
    let stem = name
        .strip_suffix(".model.json")
        .unwrap_or(name.strip_suffix(".json").unwrap_or(&name));
    artifact_path.with_file_name(format!("{stem}.report.json"))
}

pub fn cmd_eval(
    artifact_path: &Path,
    test_cache: Option<&Path>,
    out: &mut dyn Write,
) -> Result<EvalReport> {
    let artifact = ModelArtifact::load(artifact_path).stage("load artifact")?;
    let net = artifact.network().stage("load artifact")?;
    let cache_path = test_cache.map(Path::to_path_buf).unwrap_or_else(|| {
        artifact_path
            .parent()
            .unwrap_or(Path::new("."))
            .join(TEST_CACHE)
    });
    let (header, test) = load_cache(&cache_path).stage("load test cache")?;
    if header.schema_hash != artifact.schema_hash {
        return Err(Error::Artifact(format!(
            "schema mismatch: artifact {} vs cache {}",
            artifact.schema_hash, header.schema_hash
        )))
        .stage("eval");
    }
    let report = pipeline::evaluate(&net, &test, &artifact.model_tag, &artifact.config_hash)?;
    write_out(out, &render_report(std::slice::from_ref(&report))?)?;
    write_out(
        out,
        &format!(
            "accuracy {:.4} on {} records\n",
            report.accuracy,
            test.len()
        ),
    )?;
    let path = report_path(artifact_path);
    write_json(&path, &report).stage("write report")?;
    write_out(out, &format!("report written to {}\n", path.display()))?;
    Ok(report)
}

fn score_line(
    artifact: &ModelArtifact,
    net: &crate::neuralnet::Network,
    line: &str,
) -> std::result::Result<String, String> {
    let rec = parse_record(line, false)?;
    let x = artifact.schema.encode(&rec);
    let probs = net
        .forward(&x)
        .map_err(|e| e.to_string())?
        .pop()
        .expect("output layer");
    let class = argmax(&probs);
    let mut s = CLASSES[class].name().to_string();
    for p in probs {
        s.push_str(&format!("\t{p:.6}"));
    }
    Ok(s)
}

/// One output line per non-blank input line: `class\tp_normal\tp_dos\tp_probe\tp_r2l`,
/// or `error\tline N: reason` for lines that fail to parse.
pub fn cmd_score(artifact_path: &Path, input: &Path, out: &mut dyn Write) -> Result<usize> {
    let artifact = ModelArtifact::load(artifact_path).stage("load artifact")?;
    let net = artifact.network().stage("load artifact")?;
    let reader: Box<dyn std::io::Read> = if input == Path::new("-") {
        Box::new(std::io::stdin())
    } else {
        Box::new(
            std::fs::File::open(input)
                .map_err(|e| Error::io(input, e))
                .stage("score")?,
        )
    };
    let lines: Vec<(usize, String)> = BufReader::new(reader)
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)))
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(input, e))
        .stage("score")?;
    let results: Vec<String> = lines
        .par_iter()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| match score_line(&artifact, &net, l) {
            Ok(s) => s,
            Err(e) => format!("error\tline {n}: {e}"),
        })
        .collect();
    for r in &results {
        write_out(out, r)?;
        write_out(out, "\n")?;
    }
    Ok(results.len())
}

pub fn cmd_report(paths: &[PathBuf], out_dir: &Path, out: &mut dyn Write) -> Result<String> {
    let mut paths = paths.to_vec();
    if paths.is_empty() {
        let entries = std::fs::read_dir(out_dir).map_err(|e| Error::io(out_dir, e))?;
        paths = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(".report.json"))
            .collect();
        paths.sort();
    }
    let reports = paths
        .iter()
        .map(|p| {
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            Ok(serde_json::from_slice::<EvalReport>(&bytes)?)
        })
        .collect::<Result<Vec<_>>>()
        .stage("report")?;
    let text = render_report(&reports).stage("report")?;
    write_out(out, &text)?;
    Ok(text)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Prepare(args) => {
            let cfg = args.resolve()?;
            cmd_prepare(&cfg, out).map(|_| ())
        }
        Command::Train { config, artifact } => {
            let cfg = config.resolve()?;
            cmd_train(&cfg, artifact.as_deref(), out).map(|_| ())
        }
        Command::Eval {
            artifact,
            test_cache,
        } => cmd_eval(&artifact, test_cache.as_deref(), out).map(|_| ()),
        Command::Score { artifact, input } => cmd_score(&artifact, &input, out).map(|_| ()),
        Command::Report { reports, out_dir } => cmd_report(&reports, &out_dir, out).map(|_| ()),
    }
}
