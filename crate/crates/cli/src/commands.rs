//! Subcommand arguments and implementations.
//!
//! Every command is deterministic in its flags: the master seed fixes every
//! random stream, and parallel rows are written back in grid order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use declab_core::autoregress::{generate as run_generation, GenerationParams};
use declab_core::frame::{
    build_world, novelty_curve, rollout, trial_config, FrameGrid, KSweepEntry, Rollout,
};
use declab_core::ngram::{detokenize, tokenize, NGramModel, NextTokenModel};
use declab_core::prob::entropy;
use declab_core::rng::derive_seed;
use declab_core::{frame, SamplerConfig, TokenAlphabet};
use rayon::prelude::*;

use crate::config::{parse_list, pick, require, RunConfig};
use crate::error::{CliError, CliResult};
use crate::formats::{load_model, save_model, write_json, GenerationDoc, RolloutDoc};
use crate::pgm;

pub const DEFAULT_ORDER: usize = 4;
pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_MAX_LEN: usize = 200;
pub const DEFAULT_STEPS: usize = 20;
pub const DEFAULT_TRIALS: usize = 10;
pub const DEFAULT_MIN_P_GRID: [f64; 3] = [0.0, 0.06, 0.15];
pub const DEFAULT_K_GRID: [usize; 4] = [1, 50, 200, 500];

pub const SWEEP_HEADER: [&str; 9] = [
    "run_id",
    "T",
    "k",
    "top_p",
    "min_p",
    "seed",
    "mean_entropy",
    "mean_survivors_final",
    "output_text",
];
pub const SIMULATE_HEADER: [&str; 4] = ["k", "trial", "freeze_index", "mean_novelty"];

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    /// UTF-8 plain-text corpus
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// n-gram order
    #[arg(long)]
    pub order: Option<usize>,
    /// Additive smoothing constant
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Model JSON to write
    #[arg(long = "out")]
    pub model_out: Option<PathBuf>,
    /// JSON config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SamplerArgs {
    /// Softmax temperature T (0 selects argmax decoding)
    #[arg(long = "temp")]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub top_p: Option<f64>,
    /// Absolute probability floor applied after top-P
    #[arg(long)]
    pub min_p: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub prompt: Option<String>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Context buffer capacity (tokens)
    #[arg(long)]
    pub context: Option<usize>,
    /// Write the generation record with per-token traces to this JSON file
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub prompt: Option<String>,
    /// Comma-separated temperatures
    #[arg(long)]
    pub temps: Option<String>,
    /// Comma-separated top-k values
    #[arg(long)]
    pub top_ks: Option<String>,
    /// Comma-separated top-P values
    #[arg(long)]
    pub top_ps: Option<String>,
    /// Comma-separated min-P values
    #[arg(long)]
    pub min_ps: Option<String>,
    /// Master seed; row seeds are derived from it
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub context: Option<usize>,
    /// CSV output path (stdout when omitted)
    #[arg(long = "out")]
    pub csv_out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// Patch-token vocabulary size V
    #[arg(long)]
    pub vocab: Option<usize>,
    #[arg(long)]
    pub stay_mass: Option<f64>,
    /// Comma-separated top-k values
    #[arg(long)]
    pub k_grid: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Master seed for world, prompt frame and trials
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// CSV output path (stdout when omitted)
    #[arg(long = "out")]
    pub csv_out: Option<PathBuf>,
    /// Directory for PGM frames and rollout JSON of every run
    #[arg(long)]
    pub frames_out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn train(args: &TrainArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let corpus_path = require("corpus", args.corpus.clone(), cfg.corpus)?;
    let model_out = require("out", args.model_out.clone(), cfg.model_out)?;
    let order = pick(args.order, cfg.order, DEFAULT_ORDER);
    let alpha = pick(args.alpha, cfg.alpha, DEFAULT_ALPHA);

    let text = fs::read_to_string(&corpus_path).map_err(|e| CliError::io(&corpus_path, e))?;
    let alphabet = TokenAlphabet::default_text();
    let tokens = tokenize(&text, &alphabet);
    let model = NGramModel::train(&tokens, alphabet, order, alpha)?;
    save_model(&model, &model_out)?;
    log::info!("wrote {}", model_out.display());
    writeln!(out, "tokens: {}", tokens.len()).map_err(stdout_err)?;
    writeln!(out, "contexts: {}", model.context_count()).map_err(stdout_err)?;
    Ok(())
}

fn sampler_config(args: &SamplerArgs, cfg: &RunConfig, seed: u64) -> CliResult<SamplerConfig> {
    let d = SamplerConfig::default();
    Ok(SamplerConfig::new(
        pick(args.temperature, cfg.temperature, d.temperature()),
        pick(args.top_k, cfg.top_k, d.top_k()),
        pick(args.top_p, cfg.top_p, d.top_p()),
        pick(args.min_p, cfg.min_p, d.min_p()),
        seed,
    )?)
}

pub fn generate(args: &GenerateArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let seed = pick(args.seed, cfg.seed, 0);
    let sampler = sampler_config(&args.sampler, &cfg, seed)?;
    let max_len = pick(args.max_len, cfg.max_len, DEFAULT_MAX_LEN);
    let context = pick(
        args.context,
        cfg.context,
        declab_core::autoregress::DEFAULT_CONTEXT_CAPACITY,
    );
    let params = GenerationParams::new(sampler, max_len, context)?;
    let prompt = pick(args.prompt.clone(), cfg.prompt.clone(), String::new());
    let trace_out = args.trace_out.clone().or(cfg.trace_out.clone());
    let model_path = require("model", args.model.clone(), cfg.model)?;

    let model = load_model(&model_path)?;
    let alphabet = model.alphabet();
    let result = run_generation(&model, &params, &tokenize(&prompt, alphabet))?;
    writeln!(out, "{}", detokenize(&result.output_tokens, alphabet)).map_err(stdout_err)?;
    if let Some(path) = trace_out {
        write_json(
            &GenerationDoc::new(&result, alphabet, &sampler, max_len, context, true),
            &path,
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
struct SweepRow {
    run_id: usize,
    sampler: SamplerConfig,
    mean_entropy: f64,
    mean_survivors_final: f64,
    output_text: String,
}

pub fn sweep(args: &SweepArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let grid_list =
        |field: &str, flag: &Option<String>, file: &Option<Vec<f64>>, default: &[f64]| match flag {
            Some(raw) => parse_list::<f64>(field, raw),
            None => Ok(file.clone().unwrap_or_else(|| default.to_vec())),
        };
    let d = SamplerConfig::default();
    let temps = grid_list("temps", &args.temps, &cfg.temperatures, &[d.temperature()])?;
    let top_ps = grid_list("top_ps", &args.top_ps, &cfg.top_ps, &[d.top_p()])?;
    let min_ps = grid_list("min_ps", &args.min_ps, &cfg.min_ps, &DEFAULT_MIN_P_GRID)?;
    let top_ks = match &args.top_ks {
        Some(raw) => parse_list::<usize>("top_ks", raw)?,
        None => cfg.top_ks.clone().unwrap_or_else(|| vec![d.top_k()]),
    };
    let master = pick(args.seed, cfg.seed, 0);
    let max_len = pick(args.max_len, cfg.max_len, DEFAULT_MAX_LEN);
    let context = pick(
        args.context,
        cfg.context,
        declab_core::autoregress::DEFAULT_CONTEXT_CAPACITY,
    );
    let prompt = pick(args.prompt.clone(), cfg.prompt.clone(), String::new());
    let csv_out = args.csv_out.clone().or(cfg.csv_out.clone());

    let mut grid = Vec::new();
    for &t in &temps {
        for &k in &top_ks {
            for &p in &top_ps {
                for &m in &min_ps {
                    let seed = derive_seed(master, grid.len() as u64);
                    grid.push(SamplerConfig::new(t, k, p, m, seed)?);
                }
            }
        }
    }
    if grid.is_empty() {
        return Err(CliError::usage("sweep grid is empty"));
    }
    GenerationParams::new(grid[0], max_len, context)?;
    let model_path = require("model", args.model.clone(), cfg.model)?;
    let model = load_model(&model_path)?;
    let prompt_tokens = tokenize(&prompt, model.alphabet());

    let rows = grid
        .par_iter()
        .enumerate()
        .map(|(run_id, &sampler)| {
            sweep_row(&model, run_id, sampler, max_len, context, &prompt_tokens)
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mut writer = csv_writer(csv_out.as_deref(), out)?;
    writer.write_record(SWEEP_HEADER)?;
    for row in &rows {
        writer.write_record([
            row.run_id.to_string(),
            row.sampler.temperature().to_string(),
            row.sampler.top_k().to_string(),
            row.sampler.top_p().to_string(),
            row.sampler.min_p().to_string(),
            row.sampler.seed().to_string(),
            row.mean_entropy.to_string(),
            row.mean_survivors_final.to_string(),
            row.output_text.clone(),
        ])?;
    }
    writer.flush().map_err(stdout_err)?;
    Ok(())
}

/// Generation for one grid point. `mean_entropy` is the entropy of the
/// final-stage (sampled-from) distribution, averaged over emitted tokens.
fn sweep_row(
    model: &NGramModel,
    run_id: usize,
    sampler: SamplerConfig,
    max_len: usize,
    context: usize,
    prompt: &[declab_core::TokenId],
) -> CliResult<SweepRow> {
    let params = GenerationParams::new(sampler, max_len, context)?;
    let result = run_generation(model, &params, prompt)?;
    let n = result.traces.len() as f64;
    let mut entropy_sum = 0.0;
    let mut survivor_sum = 0.0;
    for trace in &result.traces {
        let last = trace.final_stage();
        entropy_sum += entropy(&last.distribution()?);
        survivor_sum += last.survivors as f64;
    }
    Ok(SweepRow {
        run_id,
        sampler,
        mean_entropy: entropy_sum / n,
        mean_survivors_final: survivor_sum / n,
        output_text: detokenize(&result.output_tokens, model.alphabet()),
    })
}

pub fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let height = pick(args.height, cfg.height, frame::DEFAULT_HEIGHT);
    let width = pick(args.width, cfg.width, frame::DEFAULT_WIDTH);
    let vocab = pick(args.vocab, cfg.vocab, frame::DEFAULT_VOCAB);
    let stay_mass = pick(args.stay_mass, cfg.stay_mass, frame::DEFAULT_STAY_MASS);
    let steps = pick(args.steps, cfg.steps, DEFAULT_STEPS);
    let trials = pick(args.trials, cfg.trials, DEFAULT_TRIALS);
    let master = pick(args.seed, cfg.seed, 0);
    let k_grid = match &args.k_grid {
        Some(raw) => parse_list::<usize>("k_grid", raw)?,
        None => cfg
            .k_grid
            .clone()
            .unwrap_or_else(|| DEFAULT_K_GRID.to_vec()),
    };
    let csv_out = args.csv_out.clone().or(cfg.csv_out.clone());
    let frames_out = args.frames_out.clone().or(cfg.frames_out.clone());

    if k_grid.is_empty() {
        return Err(CliError::usage("k grid is empty"));
    }
    if trials == 0 {
        return Err(CliError::usage("invalid trials: must be >= 1"));
    }
    if steps == 0 {
        return Err(CliError::usage("invalid steps: must be >= 1"));
    }
    // Open sampling unless overridden: T = 1, top-P = 1, min-P = 0.
    let base = SamplerConfig::new(
        pick(args.sampler.temperature, cfg.temperature, 1.0),
        1,
        pick(args.sampler.top_p, cfg.top_p, 1.0),
        pick(args.sampler.min_p, cfg.min_p, 0.0),
        master,
    )?;
    let world = build_world(height, width, vocab, stay_mass, master)?;
    let prompt = FrameGrid::random(height, width, vocab, derive_seed(master, u64::MAX))?;

    let jobs: Vec<(usize, usize)> = k_grid
        .iter()
        .flat_map(|&k| (0..trials).map(move |trial| (k, trial)))
        .collect();
    let rollouts = jobs
        .par_iter()
        .map(|&(k, trial)| {
            let cfg = trial_config(&base, k, master, trial as u64)?;
            Ok(rollout(&world, &prompt, &cfg, steps)?)
        })
        .collect::<CliResult<Vec<Rollout>>>()?;

    let mut writer = csv_writer(csv_out.as_deref(), out)?;
    writer.write_record(SIMULATE_HEADER)?;
    for (&(k, trial), r) in jobs.iter().zip(&rollouts) {
        let freeze = r.freeze_index.map_or(-1, |i| i as i64);
        writer.write_record([
            k.to_string(),
            trial.to_string(),
            freeze.to_string(),
            r.mean_novelty().to_string(),
        ])?;
    }
    writer.flush().map_err(stdout_err)?;
    drop(writer);

    let sweep: Vec<KSweepEntry> = k_grid
        .iter()
        .enumerate()
        .map(|(i, &k)| KSweepEntry {
            k,
            rollouts: rollouts[i * trials..(i + 1) * trials].to_vec(),
        })
        .collect();
    for row in novelty_curve(&sweep)? {
        log::info!(
            "k={} mean_novelty={:.4} ± {:.4} over {} trials",
            row.k,
            row.mean_novelty,
            row.std_error,
            row.trials
        );
    }

    if let Some(dir) = frames_out {
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        for (&(k, trial), r) in jobs.iter().zip(&rollouts) {
            dump_rollout(&dir, k, trial, r)?;
        }
    }
    Ok(())
}

fn dump_rollout(dir: &Path, k: usize, trial: usize, r: &Rollout) -> CliResult<()> {
    let stem = format!("k{k}_trial{trial}");
    write_json(&RolloutDoc::from(r), &dir.join(format!("{stem}.json")))?;
    for (i, frame) in r.frames.iter().enumerate() {
        pgm::write(frame, &dir.join(format!("{stem}_frame{i:03}.pgm")))?;
    }
    Ok(())
}

fn csv_writer<'a>(
    path: Option<&Path>,
    out: &'a mut dyn Write,
) -> CliResult<csv::Writer<Box<dyn Write + 'a>>> {
    let sink: Box<dyn Write + 'a> = match path {
        Some(p) => Box::new(fs::File::create(p).map_err(|e| CliError::io(p, e))?),
        None => Box::new(out),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn stdout_err(e: std::io::Error) -> CliError {
    CliError::io("<output>", e)
}
