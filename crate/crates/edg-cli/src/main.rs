//! `edg` — command-line front end for the evolving-domain-generalization lab.
//!
//! Subcommands: `gen` (write a dataset file), `train` (multi-seed experiment),
//! `eval` (score a checkpoint on a dataset file), `ldda` (closed-form linear
//! solve), `sweep` (one axis, many values), `export-grid` (decision-boundary
//! lattice). `EDG_THREADS` caps seed-level parallelism.

use clap::{Parser, Subcommand};
use edg_core::config::{parse_config_file, parse_config_str, RunConfig};
use edg_core::dataio::{load_checkpoint, load_dataset, save_dataset, Checkpoint};
use edg_core::datagen::split_train_val;
use edg_core::grid::{boundary_grid, write_grid, GridBounds};
use edg_core::ldda::{ldda_predict, solve_psi};
use edg_core::nn::{Activation, MlpParams};
use edg_core::report::{format_summary_line, ResultRecord, SUMMARY_SEED};
use edg_core::runner::{
    build_dataset, erm_from_checkpoint, evaluate_checkpoint, model_from_checkpoint,
    run_config_from_echo, run_experiment, sweep,
};
use edg_core::tensor::Tensor;
use edg_core::{dda, EdgError};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "edg",
    version,
    about = "Desk-scale laboratory for evolving domain generalization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write it as an .edgdata file
    Gen(GenArgs),
    /// Run a configured experiment over its seeds and write results + checkpoints
    Train(TrainArgs),
    /// Evaluate a saved checkpoint on a dataset file at one horizon
    Eval(EvalArgs),
    /// Closed-form linear solve: print psi, residual, and per-target accuracy as CSV
    Ldda(LddaArgs),
    /// Re-run an experiment template for each value of one hyperparameter axis
    Sweep(SweepArgs),
    /// Sample a checkpoint's decision boundary on a 2-D lattice and write it as CSV
    ExportGrid(ExportGridArgs),
}

#[derive(clap::Args)]
struct GenArgs {
    /// rotated_gaussian, sine, or rotating_images
    #[arg(long)]
    dataset: String,
    /// Domains including targets (defaults per dataset)
    #[arg(long)]
    n_domains: Option<usize>,
    /// Samples per domain (defaults per dataset)
    #[arg(long)]
    n_per_domain: Option<usize>,
    /// Per-domain rotation in degrees (rotated_gaussian, rotating_images)
    #[arg(long)]
    delta_deg: Option<f64>,
    /// Trailing domains held out as targets (rotated_gaussian, sine)
    #[arg(long)]
    n_targets: Option<usize>,
    /// Sine amplitude (sine only)
    #[arg(long)]
    amp: Option<f64>,
    /// Sampling-box margin beyond the amplitude (sine only)
    #[arg(long)]
    margin: Option<f64>,
    /// IDX image file (rotating_images only)
    #[arg(long)]
    images_path: Option<String>,
    /// IDX label file (rotating_images only)
    #[arg(long)]
    labels_path: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output .edgdata file
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct TrainArgs {
    /// key=value config file
    #[arg(long)]
    config: PathBuf,
    /// Run this single seed instead of the config's seed list
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config's out_dir)
    #[arg(long)]
    out: Option<String>,
}

#[derive(clap::Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// .edgdata dataset file to evaluate on
    #[arg(long)]
    dataset: PathBuf,
    /// Target horizon (1 = first held-out domain)
    #[arg(long, default_value_t = 1)]
    horizon: usize,
}

#[derive(clap::Args)]
struct LddaArgs {
    /// .edgdata dataset file
    #[arg(long)]
    dataset: PathBuf,
    /// Report a single horizon instead of every target
    #[arg(long)]
    target_offset: Option<usize>,
}

#[derive(clap::Args)]
struct SweepArgs {
    /// key=value config file used as the template
    #[arg(long)]
    config: PathBuf,
    /// Hyperparameter to vary (e.g. lambda, alpha, inner_steps_aug)
    #[arg(long)]
    axis: String,
    /// Comma-separated values, e.g. 0,0.2,0.4
    #[arg(long)]
    values: String,
}

#[derive(clap::Args)]
struct ExportGridArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Lattice points per axis
    #[arg(long)]
    resolution: usize,
    /// x1_min,x1_max,x2_min,x2_max
    #[arg(long, allow_hyphen_values = true)]
    bounds: String,
    /// Output CSV file
    #[arg(long, default_value = "grid.csv")]
    out: PathBuf,
    /// Dataset file for horizon adaptation (dda checkpoints)
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Adapt the classifier to this horizon before sampling (needs --dataset)
    #[arg(long)]
    horizon: Option<usize>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ldda(args) => cmd_ldda(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::ExportGrid(args) => cmd_export_grid(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

type CmdResult = Result<(), EdgError>;

/// Resolve generator parameters exactly like a config file would: unset flags
/// fall back to the dataset's documented defaults, misapplied flags are
/// rejected with the config parser's own message.
fn gen_spec(args: &GenArgs) -> Result<RunConfig, EdgError> {
    let mut text = format!("method=ldda\ndataset={}\n", args.dataset);
    let mut push = |key: &str, value: Option<String>| {
        if let Some(v) = value {
            text.push_str(&format!("{key}={v}\n"));
        }
    };
    push("n_domains", args.n_domains.map(|v| v.to_string()));
    push("n_per_domain", args.n_per_domain.map(|v| v.to_string()));
    push("delta_deg", args.delta_deg.map(|v| v.to_string()));
    push("n_targets", args.n_targets.map(|v| v.to_string()));
    push("amp", args.amp.map(|v| v.to_string()));
    push("margin", args.margin.map(|v| v.to_string()));
    push("images_path", args.images_path.clone());
    push("labels_path", args.labels_path.clone());
    parse_config_str(&text)
}

fn cmd_gen(args: GenArgs) -> CmdResult {
    let cfg = gen_spec(&args)?;
    let ds = build_dataset(&cfg.dataset, args.seed)?;
    save_dataset(&args.out, &ds)?;
    println!(
        "wrote {} source + {} target domain(s), {} samples/domain, to {}",
        ds.sources.len(),
        ds.targets.len(),
        ds.sources.first().map(|d| d.n()).unwrap_or(0),
        args.out.display()
    );
    Ok(())
}

fn print_record(r: &ResultRecord) {
    if r.seed == SUMMARY_SEED {
        println!("{}", format_summary_line(r));
    } else {
        println!(
            "{} {} seed {} horizon {}: accuracy {:.3} [{}]",
            r.method, r.dataset, r.seed, r.horizon, r.accuracy, r.status
        );
    }
}

fn cmd_train(args: TrainArgs) -> CmdResult {
    let mut cfg = parse_config_file(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    let records = run_experiment(&cfg)?;
    for r in &records {
        print_record(r);
    }
    println!("results: {}/results.csv", cfg.out_dir);
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CmdResult {
    let ck = load_checkpoint(&args.checkpoint)?;
    let ds = load_dataset(&args.dataset)?;
    let acc = evaluate_checkpoint(&ck, &ds, args.horizon)?;
    println!("{} horizon {} accuracy {acc}", ck.kind, args.horizon);
    Ok(())
}

fn cmd_ldda(args: LddaArgs) -> CmdResult {
    let ds = load_dataset(&args.dataset)?;
    let lp = solve_psi(&ds)?;
    if let Some(k) = args.target_offset {
        if k == 0 || k > ds.targets.len() {
            return Err(EdgError::MissingTarget {
                horizon: k,
                available: ds.targets.len(),
            });
        }
    }
    let mut w = csv::Writer::from_writer(std::io::stdout());
    w.write_record(["key", "value"])?;
    let d = lp.psi.shape()[0];
    for i in 0..d {
        for j in 0..d {
            w.write_record([format!("psi[{i}][{j}]"), lp.psi.at2(i, j).to_string()])?;
        }
    }
    w.write_record(["residual".into(), format!("{:e}", lp.residual)])?;
    w.write_record(["cond".into(), format!("{:e}", lp.cond)])?;
    let horizons: Vec<usize> = match args.target_offset {
        Some(k) => vec![k],
        None => (1..=ds.targets.len()).collect(),
    };
    for k in horizons {
        let acc = ldda_predict(&lp, &ds, k)?;
        w.write_record([format!("accuracy_horizon_{k}"), acc.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> CmdResult {
    let cfg = parse_config_file(&args.config)?;
    let values: Vec<String> = args
        .values
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    let rows = sweep(&cfg, &args.axis, &values)?;
    for r in &rows {
        println!(
            "{}={} horizon {}: accuracy {:.3} ± {:.3} ({} seeds)",
            r.axis, r.value, r.horizon, r.accuracy, r.acc_std, r.seeds_ok
        );
    }
    println!("results: {}/sweep_{}.csv", cfg.out_dir, args.axis);
    Ok(())
}

/// A d→d identity network: lets `boundary_grid` score a single composed net.
fn identity_mlp(d: usize) -> Result<MlpParams, EdgError> {
    let mut eye = vec![0.0; d * d];
    for i in 0..d {
        eye[i * d + i] = 1.0;
    }
    Ok(MlpParams {
        layer_dims: vec![d, d],
        weights: vec![Tensor::matrix(d, d, eye)?],
        biases: vec![Tensor::vector(vec![0.0; d])],
        activation: Activation::Identity,
    })
}

/// Featurizer/classifier pair for the lattice: erm uses its composed stack
/// as-is; dda uses φ with either the meta-trained classifier or, given a
/// dataset and horizon, the fast-adapted one.
fn grid_model(
    ck: &Checkpoint,
    dataset: Option<&PathBuf>,
    horizon: Option<usize>,
) -> Result<(MlpParams, MlpParams), EdgError> {
    match ck.kind.as_str() {
        "erm" => {
            let net = erm_from_checkpoint(ck)?;
            let ident = identity_mlp(*net.layer_dims.last().unwrap())?;
            Ok((net, ident))
        }
        "dda" => {
            let mp = model_from_checkpoint(ck)?;
            match (dataset, horizon) {
                (Some(path), Some(k)) => {
                    let (cfg, seed) = run_config_from_echo(ck)?;
                    let dda_cfg = cfg.dda.ok_or_else(|| {
                        EdgError::CheckpointFormat("dda checkpoint echoes a non-dda config".into())
                    })?;
                    let ds = load_dataset(path)?;
                    let (tr, va) = split_train_val(&ds, 1.0 - cfg.val_frac, seed)?;
                    let (h, _) =
                        dda::infer_target(&mp, &tr.sources, &va.sources, &ds.targets, &dda_cfg, k)?;
                    Ok((mp.phi, h))
                }
                (None, None) => Ok((mp.phi, mp.h)),
                _ => Err(EdgError::InvalidArg(
                    "--dataset and --horizon go together".into(),
                )),
            }
        }
        other => Err(EdgError::CheckpointFormat(format!(
            "checkpoint kind '{other}' has no decision boundary to export"
        ))),
    }
}

fn cmd_export_grid(args: ExportGridArgs) -> CmdResult {
    let ck = load_checkpoint(&args.checkpoint)?;
    let (featurizer, classifier) = grid_model(&ck, args.dataset.as_ref(), args.horizon)?;
    let bounds = GridBounds::parse(&args.bounds)?;
    let rows = boundary_grid(&featurizer, &classifier, &bounds, args.resolution)?;
    write_grid(&args.out, &rows)?;
    println!("wrote {} lattice rows to {}", rows.len(), args.out.display());
    Ok(())
}
