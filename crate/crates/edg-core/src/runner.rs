//! Experiment orchestration: per-seed dataset generation, training, horizon
//! evaluation, checkpointing, CSV reporting, and parameter sweeps.
//!
//! Each seed's run is single-threaded and deterministic given (config, seed);
//! seeds execute in parallel on a pool capped by the `EDG_THREADS` environment
//! variable. Per-seed and per-horizon failures are recorded in the `status`
//! column without aborting the other runs.

use crate::config::{
    config_hash, config_key_values, parse_config_str, serialize_config, set_sweep_axis, ArchSpec,
    DatasetSpec, Method, RunConfig,
};
use crate::dataio::{load_dataset, save_checkpoint, Checkpoint};
use crate::datagen::{gen_rotated_gaussian, gen_sine, split_train_val, EvolvingDataset};
use crate::dda::{self, DdaConfig, ModelParams};
use crate::erm::{self, ErmConfig};
use crate::error::{EdgError, Result};
use crate::idx::load_rotating_images;
use crate::ldda;
use crate::nn::MlpParams;
use crate::report::{summarize, validate_records, write_records, ResultRecord, SUMMARY_SEED};
use crate::rng::derive_stream;
use crate::tensor::Tensor;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Materialize the configured dataset for one seed. Generators are re-seeded
/// per run seed; file datasets load as-is.
pub fn build_dataset(spec: &DatasetSpec, seed: u64) -> Result<EvolvingDataset> {
    match spec {
        DatasetSpec::RotatedGaussian {
            n_domains,
            n_per_domain,
            delta_deg,
            n_targets,
        } => gen_rotated_gaussian(*n_domains, *n_per_domain, *delta_deg, *n_targets, seed),
        DatasetSpec::Sine {
            n_domains,
            n_per_domain,
            amp,
            margin,
            n_targets,
        } => gen_sine(*n_domains, *n_per_domain, *n_targets, *amp, *margin, seed),
        DatasetSpec::RotatingImages {
            images_path,
            labels_path,
            n_domains,
            n_per_domain,
            delta_deg,
        } => load_rotating_images(
            images_path,
            labels_path,
            *n_domains,
            *n_per_domain,
            *delta_deg,
            seed,
        ),
        DatasetSpec::File(path) => load_dataset(path),
    }
}

/// Initialize the meta-model for one seed from the architecture spec.
pub fn init_model(arch: &ArchSpec, seed: u64) -> Result<ModelParams> {
    let mut rng = derive_stream(seed, "init.dda", 0);
    ModelParams::init(
        &arch.phi_dims,
        &arch.tf_dims,
        &arch.h_dims,
        arch.activation,
        &mut rng,
    )
}

/// ERM trains the composed featurizer∘classifier stack as one MLP.
pub fn erm_dims(arch: &ArchSpec) -> Vec<usize> {
    let mut dims = arch.phi_dims.clone();
    dims.extend_from_slice(&arch.h_dims[1..]);
    dims
}

fn init_erm(arch: &ArchSpec, seed: u64) -> Result<MlpParams> {
    let mut rng = derive_stream(seed, "init.erm", 0);
    MlpParams::init(&erm_dims(arch), arch.activation, &mut rng)
}

fn arch_of(cfg: &RunConfig) -> Result<&ArchSpec> {
    cfg.arch.as_ref().ok_or_else(|| {
        EdgError::Config(format!(
            "method '{}' needs an architecture",
            cfg.method.name()
        ))
    })
}

/// Provenance echo stored in checkpoints: the canonical config plus the seed.
fn checkpoint_config(cfg: &RunConfig, seed: u64) -> BTreeMap<String, String> {
    let mut map = config_key_values(cfg);
    map.insert("run_seed".into(), seed.to_string());
    map
}

struct SeedOutcome {
    records: Vec<ResultRecord>,
    checkpoint: (PathBuf, Checkpoint),
}

fn record_base(cfg: &RunConfig, seed: u64) -> ResultRecord {
    ResultRecord {
        method: cfg.method.name().to_string(),
        dataset: cfg.dataset.name().to_string(),
        seed: seed.to_string(),
        horizon: 0,
        accuracy: 0.0,
        acc_std: 0.0,
        episodes_to_best: 0,
        wall_clock_s: 0.0,
        config_hash: config_hash(cfg),
        status: "ok".to_string(),
    }
}

/// Evaluate one trained artifact on every requested horizon, isolating
/// per-horizon errors into their records.
fn horizon_records(
    cfg: &RunConfig,
    seed: u64,
    episodes_to_best: u64,
    mut eval: impl FnMut(usize) -> Result<f64>,
) -> Vec<ResultRecord> {
    cfg.horizons
        .iter()
        .map(|&k| {
            let mut rec = record_base(cfg, seed);
            rec.horizon = k;
            rec.episodes_to_best = episodes_to_best;
            match eval(k) {
                Ok(acc) => rec.accuracy = acc,
                Err(e) => rec.status = format!("error: {e}"),
            }
            rec
        })
        .collect()
}

fn run_seed_dda(cfg: &RunConfig, dda_cfg: &DdaConfig, seed: u64) -> Result<SeedOutcome> {
    let ds = build_dataset(&cfg.dataset, seed)?;
    let (tr, va) = split_train_val(&ds, 1.0 - cfg.val_frac, seed)?;
    let init = init_model(arch_of(cfg)?, seed)?;
    let trained = dda::train(&init, &tr.sources, &va.sources, dda_cfg, seed)?;
    let records = horizon_records(cfg, seed, trained.episodes_to_best as u64, |k| {
        dda::infer_target(
            &trained.params,
            &tr.sources,
            &va.sources,
            &ds.targets,
            dda_cfg,
            k,
        )
        .map(|(_, acc)| acc)
    });
    let ck = Checkpoint {
        kind: "dda".into(),
        named: trained.params.to_named(),
        config: checkpoint_config(cfg, seed),
        episodes_to_best: trained.episodes_to_best as u64,
        best_val: trained.best_val,
    };
    Ok(SeedOutcome {
        records,
        checkpoint: (checkpoint_path(cfg, seed), ck),
    })
}

/// erm checkpoints store the composed stack under `net.w{i}` / `net.b{i}`.
fn erm_named(params: &MlpParams) -> Vec<(String, Tensor)> {
    let mut out = Vec::with_capacity(2 * params.weights.len());
    for (i, (w, b)) in params.weights.iter().zip(&params.biases).enumerate() {
        out.push((format!("net.w{i}"), w.clone()));
        out.push((format!("net.b{i}"), b.clone()));
    }
    out
}

fn run_seed_erm(cfg: &RunConfig, erm_cfg: &ErmConfig, seed: u64) -> Result<SeedOutcome> {
    let ds = build_dataset(&cfg.dataset, seed)?;
    let (tr, va) = split_train_val(&ds, 1.0 - cfg.val_frac, seed)?;
    let init = init_erm(arch_of(cfg)?, seed)?;
    let trained = erm::train_erm(&init, &tr.sources, &va.sources, erm_cfg, seed)?;
    let records = horizon_records(cfg, seed, trained.steps_to_best as u64, |k| {
        let target = ds.targets.get(k - 1).ok_or(EdgError::MissingTarget {
            horizon: k,
            available: ds.targets.len(),
        })?;
        erm::eval_on(&trained.params, target)
    });
    let ck = Checkpoint {
        kind: "erm".into(),
        named: erm_named(&trained.params),
        config: checkpoint_config(cfg, seed),
        episodes_to_best: trained.steps_to_best as u64,
        best_val: trained.best_val,
    };
    Ok(SeedOutcome {
        records,
        checkpoint: (checkpoint_path(cfg, seed), ck),
    })
}

fn run_seed_ldda(cfg: &RunConfig, seed: u64) -> Result<SeedOutcome> {
    let ds = build_dataset(&cfg.dataset, seed)?;
    // Closed form, no model selection: fit on the full source domains.
    let lp = ldda::solve_psi(&ds)?;
    let records = horizon_records(cfg, seed, 0, |k| ldda::ldda_predict(&lp, &ds, k));
    let mut config = checkpoint_config(cfg, seed);
    config.insert("ldda_residual".into(), format!("{:e}", lp.residual));
    config.insert("ldda_cond".into(), format!("{:e}", lp.cond));
    let ck = Checkpoint {
        kind: "ldda".into(),
        named: vec![("psi".into(), lp.psi.clone())],
        config,
        episodes_to_best: 0,
        // The stationarity residual stands in for a validation metric.
        best_val: lp.residual,
    };
    Ok(SeedOutcome {
        records,
        checkpoint: (checkpoint_path(cfg, seed), ck),
    })
}

fn checkpoint_path(cfg: &RunConfig, seed: u64) -> PathBuf {
    let dataset = match &cfg.dataset {
        DatasetSpec::File(path) => Path::new(path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "file".into()),
        other => other.name().to_string(),
    };
    Path::new(&cfg.out_dir).join(format!("{}_{dataset}_seed{seed}.edgckpt", cfg.method.name()))
}

fn run_one_seed(cfg: &RunConfig, seed: u64) -> Vec<ResultRecord> {
    let start = Instant::now();
    let outcome = match (&cfg.method, &cfg.dda, &cfg.erm) {
        (Method::Dda, Some(dda_cfg), _) => run_seed_dda(cfg, dda_cfg, seed),
        (Method::Erm, _, Some(erm_cfg)) => run_seed_erm(cfg, erm_cfg, seed),
        (Method::Ldda, _, _) => run_seed_ldda(cfg, seed),
        (m, _, _) => Err(EdgError::Config(format!(
            "method '{}' is missing its hyperparameter block",
            m.name()
        ))),
    };
    let elapsed = start.elapsed().as_secs_f64();
    let mut records = match outcome {
        Ok(SeedOutcome {
            mut records,
            checkpoint: (path, ck),
        }) => {
            if let Err(e) = save_checkpoint(&path, &ck) {
                for r in &mut records {
                    r.status = format!("error: checkpoint write failed: {e}");
                }
            }
            records
        }
        // The whole seed failed (dataset or training); one record per
        // requested horizon so the CSV shape stays stable.
        Err(e) => {
            let status = format!("error: {e}");
            let mut records = horizon_records(cfg, seed, 0, |_| Ok(0.0));
            for r in &mut records {
                r.status = status.clone();
            }
            records
        }
    };
    for r in &mut records {
        r.wall_clock_s = elapsed;
    }
    records
}

/// Worker cap: `EDG_THREADS` (0 or unset → one worker per seed, up to the
/// machine's parallelism).
fn thread_cap(n_jobs: usize) -> usize {
    match std::env::var("EDG_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        Some(n) if n > 0 => n.min(n_jobs.max(1)),
        _ => n_jobs.max(1),
    }
}

/// Run every seed with at most `workers` in flight; the result order follows
/// the seed list regardless of scheduling.
fn run_seeds_with_workers(cfg: &RunConfig, workers: usize) -> Result<Vec<ResultRecord>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| EdgError::Config(format!("thread pool: {e}")))?;
    let per_seed: Vec<Vec<ResultRecord>> = pool.install(|| {
        use rayon::prelude::*;
        cfg.seeds.par_iter().map(|&s| run_one_seed(cfg, s)).collect()
    });
    Ok(per_seed.into_iter().flatten().collect())
}

/// Execute a full experiment: train/evaluate every seed, write checkpoints,
/// `results.csv` (per-run rows plus summary rows) and the canonical config
/// echo under the output directory. Returns all records in CSV order.
pub fn run_experiment(cfg: &RunConfig) -> Result<Vec<ResultRecord>> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(
        Path::new(&cfg.out_dir).join("config.txt"),
        serialize_config(cfg),
    )?;
    let workers = thread_cap(cfg.seeds.len());
    let mut records = run_seeds_with_workers(cfg, workers)?;
    let summary = summarize(&records);
    records.extend(summary);
    validate_records(&records)?;
    write_records(&Path::new(&cfg.out_dir).join("results.csv"), &records)?;
    Ok(records)
}

/// One sweep point's aggregate outcome.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub horizon: usize,
    pub accuracy: f64,
    pub acc_std: f64,
    pub seeds_ok: usize,
}

/// Run the experiment once per axis value (each under its own subdirectory)
/// and write `sweep_<axis>.csv` with one row per (value, horizon).
pub fn sweep(template: &RunConfig, axis: &str, values: &[String]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(EdgError::Config("sweep needs a non-empty value list".into()));
    }
    let mut rows = Vec::new();
    for value in values {
        let mut cfg = template.clone();
        set_sweep_axis(&mut cfg, axis, value)?;
        cfg.out_dir = Path::new(&template.out_dir)
            .join(format!("sweep_{axis}_{value}"))
            .to_string_lossy()
            .into_owned();
        let records = run_experiment(&cfg)?;
        for r in records.iter().filter(|r| r.seed == SUMMARY_SEED) {
            // "ok (k/n seeds)" → k
            let seeds_ok = r
                .status
                .split('(')
                .nth(1)
                .and_then(|s| s.split('/').next())
                .and_then(|s| s.trim().parse::<usize>().ok())
                .unwrap_or(0);
            rows.push(SweepRow {
                axis: axis.to_string(),
                value: value.clone(),
                horizon: r.horizon,
                accuracy: r.accuracy,
                acc_std: r.acc_std,
                seeds_ok,
            });
        }
    }
    std::fs::create_dir_all(&template.out_dir)?;
    let path = Path::new(&template.out_dir).join(format!("sweep_{axis}.csv"));
    let mut w = csv::Writer::from_path(&path)?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(rows)
}

fn echo_dims(ck: &Checkpoint, key: &str) -> Result<Vec<usize>> {
    let raw = ck.config_value(key)?;
    raw.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| EdgError::CheckpointFormat(format!("bad dims '{raw}' under '{key}'")))
        })
        .collect()
}

fn echo_activation(ck: &Checkpoint) -> Result<crate::nn::Activation> {
    crate::nn::Activation::parse(ck.config_value("activation")?)
}

/// Rebuild a dda checkpoint's parameters from its named tensors; dims and
/// activation come from the config echo.
pub fn model_from_checkpoint(ck: &Checkpoint) -> Result<ModelParams> {
    if ck.kind != "dda" {
        return Err(EdgError::CheckpointFormat(format!(
            "expected a dda checkpoint, got kind '{}'",
            ck.kind
        )));
    }
    ModelParams::from_named(
        &ck.named,
        &echo_dims(ck, "phi_dims")?,
        &echo_dims(ck, "tf_dims")?,
        &echo_dims(ck, "h_dims")?,
        echo_activation(ck)?,
    )
}

/// Rebuild an erm checkpoint's composed classifier stack.
pub fn erm_from_checkpoint(ck: &Checkpoint) -> Result<MlpParams> {
    if ck.kind != "erm" {
        return Err(EdgError::CheckpointFormat(format!(
            "expected an erm checkpoint, got kind '{}'",
            ck.kind
        )));
    }
    let activation = echo_activation(ck)?;
    if ck.named.is_empty() || ck.named.len() % 2 != 0 {
        return Err(EdgError::CheckpointFormat(format!(
            "erm checkpoint has {} tensors; expected an even, positive count",
            ck.named.len()
        )));
    }
    let n = ck.named.len() / 2;
    let mut weights = Vec::with_capacity(n);
    let mut biases = Vec::with_capacity(n);
    let mut layer_dims = Vec::with_capacity(n + 1);
    for i in 0..n {
        let w = ck.tensor(&format!("net.w{i}"))?.clone();
        let b = ck.tensor(&format!("net.b{i}"))?.clone();
        if i == 0 {
            layer_dims.push(w.shape()[1]);
        }
        layer_dims.push(w.shape()[0]);
        weights.push(w);
        biases.push(b);
    }
    Ok(MlpParams {
        layer_dims,
        weights,
        biases,
        activation,
    })
}

/// Keys a checkpoint's config echo carries beyond the run-config keys.
const ECHO_EXTRA_KEYS: &[&str] = &["run_seed", "ldda_residual", "ldda_cond"];

/// Reconstruct the run configuration and run seed from a checkpoint's echo.
pub fn run_config_from_echo(ck: &Checkpoint) -> Result<(RunConfig, u64)> {
    let seed: u64 = ck.config_value("run_seed")?.parse().map_err(|_| {
        EdgError::CheckpointFormat("bad run_seed in checkpoint config echo".into())
    })?;
    let text: String = ck
        .config
        .iter()
        .filter(|(k, _)| !ECHO_EXTRA_KEYS.contains(&k.as_str()))
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect();
    Ok((parse_config_str(&text)?, seed))
}

/// Evaluate a saved checkpoint at one horizon of `ds`. dda checkpoints replay
/// the training-time source split (seeded by the echoed run seed) before fast
/// adaptation; erm and ldda score their saved artifacts directly.
pub fn evaluate_checkpoint(ck: &Checkpoint, ds: &EvolvingDataset, horizon: usize) -> Result<f64> {
    if horizon == 0 || horizon > ds.targets.len() {
        return Err(EdgError::MissingTarget {
            horizon,
            available: ds.targets.len(),
        });
    }
    match ck.kind.as_str() {
        "dda" => {
            let (cfg, seed) = run_config_from_echo(ck)?;
            let dda_cfg = cfg.dda.ok_or_else(|| {
                EdgError::CheckpointFormat("dda checkpoint echoes a non-dda config".into())
            })?;
            let mp = model_from_checkpoint(ck)?;
            let (tr, va) = split_train_val(ds, 1.0 - cfg.val_frac, seed)?;
            dda::infer_target(&mp, &tr.sources, &va.sources, &ds.targets, &dda_cfg, horizon)
                .map(|(_, acc)| acc)
        }
        "erm" => {
            let net = erm_from_checkpoint(ck)?;
            erm::eval_on(&net, &ds.targets[horizon - 1])
        }
        "ldda" => {
            let echo_f64 = |key: &str| -> Result<f64> {
                ck.config_value(key)?.parse::<f64>().map_err(|_| {
                    EdgError::CheckpointFormat(format!("bad {key} in checkpoint config echo"))
                })
            };
            let lp = ldda::LinearPsi {
                psi: ck.tensor("psi")?.clone(),
                residual: echo_f64("ldda_residual")?,
                cond: echo_f64("ldda_cond")?,
            };
            ldda::ldda_predict(&lp, ds, horizon)
        }
        other => Err(EdgError::CheckpointFormat(format!(
            "unknown checkpoint kind '{other}'"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::load_checkpoint;
    use crate::report::records_equal_ignoring_wall_clock;

    fn tiny_cfg(method: &str, dir: &str) -> RunConfig {
        let text = format!(
            "method={method}\ndataset=rotated_gaussian\nn_domains=4\nn_per_domain=20\n\
             delta_deg=30\nn_targets=1\nseeds=0,1\nhorizons=1\nval_frac=0.25\n\
             out_dir={dir}\n{}",
            match method {
                "dda" => "episodes=3\nbatch=4\nval_every=2\ntf_dims=2,3,2\nalpha=0.5\n",
                "erm" => "erm_epochs=3\nerm_batch=8\n",
                _ => "",
            }
        );
        parse_config_str(&text).unwrap()
    }

    fn temp_dir(tag: &str) -> String {
        let dir = std::env::temp_dir().join(format!("edg_runner_{tag}"));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir.to_string_lossy().into_owned()
    }

    // End-to-end determinism for all three methods: two invocations agree
    // record-for-record (wall clock aside), and sequential equals parallel.
    #[test]
    fn experiments_are_deterministic_and_parallel_safe() {
        for method in ["dda", "erm", "ldda"] {
            let dir = temp_dir(method);
            let cfg = tiny_cfg(method, &dir);
            let a = run_experiment(&cfg).unwrap();
            let b = run_experiment(&cfg).unwrap();
            assert!(
                records_equal_ignoring_wall_clock(&a, &b),
                "{method}: reruns disagree"
            );
            let seq = run_seeds_with_workers(&cfg, 1).unwrap();
            let par = run_seeds_with_workers(&cfg, 2).unwrap();
            assert!(
                records_equal_ignoring_wall_clock(&seq, &par),
                "{method}: parallel order leak"
            );
            // 2 per-seed rows + 1 summary.
            assert_eq!(a.len(), 3, "{method}");
            assert!(a.iter().all(|r| r.is_ok()), "{method}: {a:?}");
            assert!(Path::new(&dir).join("results.csv").exists());
            assert!(Path::new(&dir).join("config.txt").exists());
        }
    }

    // Per-horizon errors are isolated; other horizons keep their records.
    #[test]
    fn horizon_errors_are_isolated() {
        let dir = temp_dir("horizons");
        let mut cfg = tiny_cfg("ldda", &dir);
        cfg.horizons = vec![1, 3];
        let records = run_experiment(&cfg).unwrap();
        let ok: Vec<_> = records
            .iter()
            .filter(|r| r.is_ok() && r.seed != SUMMARY_SEED)
            .collect();
        let failed: Vec<_> = records.iter().filter(|r| !r.is_ok()).collect();
        assert_eq!(ok.len(), 2, "horizon 1 per seed");
        assert_eq!(failed.len(), 2, "horizon 3 per seed");
        assert!(failed[0].status.contains("horizon"), "{}", failed[0].status);
        // Summary exists only for the successful horizon.
        let summaries: Vec<_> = records.iter().filter(|r| r.seed == SUMMARY_SEED).collect();
        assert_eq!(summaries.len(), 1);
        assert_eq!(summaries[0].horizon, 1);
    }

    // Checkpoints round-trip into usable models.
    #[test]
    fn checkpoints_reload() {
        let dir = temp_dir("ckpt");
        let cfg = tiny_cfg("dda", &dir);
        run_experiment(&cfg).unwrap();
        let ck =
            load_checkpoint(Path::new(&dir).join("dda_rotated_gaussian_seed0.edgckpt")).unwrap();
        assert_eq!(ck.kind, "dda");
        assert_eq!(ck.config.get("run_seed").map(String::as_str), Some("0"));
        let mp = model_from_checkpoint(&ck).unwrap();
        assert_eq!(mp.h.layer_dims, vec![2, 2]);
        assert_eq!(mp.tf.psi_q.layer_dims, vec![2, 3, 2]);
        assert!(erm_from_checkpoint(&ck).is_err());

        let dir = temp_dir("ckpt_erm");
        let cfg = tiny_cfg("erm", &dir);
        run_experiment(&cfg).unwrap();
        let ck =
            load_checkpoint(Path::new(&dir).join("erm_rotated_gaussian_seed1.edgckpt")).unwrap();
        let net = erm_from_checkpoint(&ck).unwrap();
        assert_eq!(net.layer_dims, vec![2, 2]);
    }

    // `evaluate_checkpoint` reproduces the recorded accuracy bit-for-bit for
    // every method: the checkpoint + dataset + horizon fully determine it.
    #[test]
    fn evaluate_checkpoint_replays_recorded_accuracy() {
        for method in ["dda", "erm", "ldda"] {
            let dir = temp_dir(&format!("replay_{method}"));
            let cfg = tiny_cfg(method, &dir);
            let records = run_experiment(&cfg).unwrap();
            let recorded = records
                .iter()
                .find(|r| r.seed == "0" && r.horizon == 1)
                .unwrap()
                .accuracy;
            let ck = load_checkpoint(
                Path::new(&dir).join(format!("{method}_rotated_gaussian_seed0.edgckpt")),
            )
            .unwrap();
            let ds = build_dataset(&cfg.dataset, 0).unwrap();
            let replay = evaluate_checkpoint(&ck, &ds, 1).unwrap();
            assert_eq!(replay.to_bits(), recorded.to_bits(), "{method}");
            assert!(matches!(
                evaluate_checkpoint(&ck, &ds, 9),
                Err(EdgError::MissingTarget { .. })
            ));
        }
    }

    // Sweeps: one row per (value, horizon); empty value list rejected.
    #[test]
    fn sweep_shape() {
        let dir = temp_dir("sweep");
        let cfg = tiny_cfg("dda", &dir);
        let rows = sweep(&cfg, "lambda", &["0".into(), "1".into()]).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.axis == "lambda" && r.seeds_ok == 2));
        assert!(Path::new(&dir).join("sweep_lambda.csv").exists());
        assert!(Path::new(&dir).join("sweep_lambda_0/results.csv").exists());
        let err = sweep(&cfg, "lambda", &[]).unwrap_err();
        assert!(err.to_string().contains("non-empty"));
        let err = sweep(&cfg, "nope", &["1".into()]).unwrap_err();
        assert!(err.to_string().contains("sweepable"));
    }

    // ERM evaluates the same static model at every horizon.
    #[test]
    fn erm_multi_horizon() {
        let dir = temp_dir("erm_h");
        let mut cfg = tiny_cfg("erm", &dir);
        match &mut cfg.dataset {
            DatasetSpec::RotatedGaussian { n_targets, .. } => *n_targets = 2,
            _ => unreachable!(),
        }
        cfg.horizons = vec![1, 2];
        cfg.seeds = vec![0];
        let records = run_experiment(&cfg).unwrap();
        let per_run: Vec<_> = records.iter().filter(|r| r.seed == "0").collect();
        assert_eq!(per_run.len(), 2);
        assert!(per_run.iter().all(|r| r.is_ok()));
    }
}
