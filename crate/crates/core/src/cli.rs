//! `boxloss` command line.
//!
//! Every command first resolves its flags into a flat key/value set, then
//! executes from that set alone. The set is written next to the outputs as a
//! manifest, and `boxloss replay <manifest>` executes it again, rewriting the
//! same files byte for byte.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid flags or configuration,
//! 3 gradient check above tolerance, 4 infeasible dataset generation.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{apply_fit_keys, fit_keys, KeyValues};
use crate::csv;
use crate::fit::{compare_losses, FitConfig};
use crate::gradients::{finite_diff_check, OverlapRegime, SamplerConfig};
use crate::losses::{HuberParams, LossKind};
use crate::profiler::{delta_study, sweep, sweep_mismatch, SweepConfig};
use crate::Error;

pub const SEED_ENV: &str = "BOXLOSS_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_GRADCHECK: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "boxloss", version, about = "Bounding-box localization loss profiles, gradient checks and fit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sliding-box loss profile sweep (optionally a δ study or size mismatch).
    Profile(ProfileArgs),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Fit synthetic predicted boxes to targets under one or more losses.
    Fit(FitArgs),
    /// Re-run a command from a manifest written by a previous run.
    Replay {
        manifest: PathBuf,
    },
}

#[derive(Debug, Args)]
struct ProfileArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    mismatch_scale: f64,
    #[arg(long, default_value_t = 161)]
    samples: usize,
    /// Comma-separated δ values; writes one CSV per value.
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// huber, squared, iou, smooth_iou or all
    #[arg(long, default_value = "all")]
    loss: String,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// disjoint, partial, nested, shifted or mixed
    #[arg(long, default_value = "mixed")]
    regime: String,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    /// Optional CSV report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Flat `key = value` config file; inline flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated loss kinds to compare over several seeds.
    #[arg(long)]
    compare: Option<String>,
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    pairs: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    decay: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    translation_sigma: Option<String>,
    #[arg(long)]
    scale_sigma: Option<String>,
    #[arg(long)]
    size_min: Option<String>,
    #[arg(long)]
    size_max: Option<String>,
    /// xmin,ymin,xmax,ymax
    #[arg(long)]
    frame: Option<String>,
}

/// Outcome of a command that ran to completion.
enum Outcome {
    Done,
    GradcheckFailed,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) => EXIT_IO,
        Error::Infeasible { .. } => EXIT_INFEASIBLE,
        _ => EXIT_USAGE,
    }
}

/// Runs the CLI, reading the default seed from `BOXLOSS_SEED`.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with_env(args, std::env::var(SEED_ENV).ok())
}

/// Runs the CLI with an explicit value for the default-seed override.
pub fn run_with_env<I, T>(args: I, env_seed: Option<String>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let resolved = match resolve(cli.command, env_seed) {
        Ok(kv) => kv,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    match execute(&resolved) {
        Ok(Outcome::Done) => EXIT_OK,
        Ok(Outcome::GradcheckFailed) => EXIT_GRADCHECK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn env_seed_value(env_seed: Option<String>) -> crate::Result<Option<u64>> {
    env_seed
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|e| Error::InvalidParam(format!("{SEED_ENV}='{s}': {e}")))
        })
        .transpose()
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Turns parsed flags into the key/value set a command executes from.
fn resolve(command: Command, env_seed: Option<String>) -> crate::Result<KeyValues> {
    let mut kv = KeyValues::new();
    match command {
        Command::Replay { manifest } => {
            let text = std::fs::read_to_string(&manifest)?;
            let kv = KeyValues::parse(&text)?;
            if let Some(v) = kv.get("version") {
                if v != env!("CARGO_PKG_VERSION") {
                    eprintln!("warning: manifest written by version {v}, running {}", env!("CARGO_PKG_VERSION"));
                }
            }
            return Ok(kv);
        }
        Command::Profile(a) => {
            kv.insert("command", "profile");
            kv.insert("out", path_str(&a.out));
            kv.insert("delta", a.delta);
            kv.insert("mismatch_scale", a.mismatch_scale);
            kv.insert("samples", a.samples);
            if let Some(ds) = a.deltas {
                kv.insert("deltas", ds.iter().map(|d| format!("{d:?}")).collect::<Vec<_>>().join(","));
            }
        }
        Command::Gradcheck(a) => {
            let seed = match a.seed {
                Some(s) => s,
                None => env_seed_value(env_seed)?.unwrap_or(0),
            };
            kv.insert("command", "gradcheck");
            kv.insert("loss", a.loss);
            kv.insert("samples", a.samples);
            kv.insert("step", a.step);
            kv.insert("tol", a.tol);
            kv.insert("seed", seed);
            kv.insert("regime", a.regime);
            kv.insert("delta", a.delta);
            if let Some(out) = a.out {
                kv.insert("out", path_str(&out));
            }
        }
        Command::Fit(a) => {
            let mut base = FitConfig::default();
            if let Some(seed) = env_seed_value(env_seed)? {
                base.seed = seed;
            }
            if let Some(path) = &a.config {
                let text = std::fs::read_to_string(path)?;
                base = apply_fit_keys(&KeyValues::parse(&text)?, base)?;
            }
            let mut inline = KeyValues::new();
            let flags = [
                ("loss", &a.loss),
                ("regime", &a.regime),
                ("pairs", &a.pairs),
                ("steps", &a.steps),
                ("lr", &a.lr),
                ("optimizer", &a.optimizer),
                ("decay", &a.decay),
                ("delta", &a.delta),
                ("seed", &a.seed),
                ("batch_size", &a.batch_size),
                ("translation_sigma", &a.translation_sigma),
                ("scale_sigma", &a.scale_sigma),
                ("size_min", &a.size_min),
                ("size_max", &a.size_max),
                ("frame", &a.frame),
            ];
            for (key, value) in flags {
                if let Some(v) = value {
                    inline.insert(key, v);
                }
            }
            let config = apply_fit_keys(&inline, base)?;
            config.validate()?;

            kv.insert("command", "fit");
            kv.insert("out", path_str(&a.out));
            if let Some(list) = a.compare {
                kv.insert("compare", parse_kinds(&list)?.iter().map(|k| k.name()).collect::<Vec<_>>().join(","));
                kv.insert("seeds", a.seeds);
            }
            for (k, v) in fit_keys(&config).iter() {
                kv.insert(k, v);
            }
        }
    }
    kv.insert("version", env!("CARGO_PKG_VERSION"));
    Ok(kv)
}

fn parse_kinds(list: &str) -> crate::Result<Vec<LossKind>> {
    let kinds: Vec<LossKind> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<crate::Result<_>>()?;
    if kinds.is_empty() {
        return Err(Error::InvalidParam("empty loss kind list".into()));
    }
    Ok(kinds)
}

fn required<'a>(kv: &'a KeyValues, key: &str) -> crate::Result<&'a str> {
    kv.get(key)
        .ok_or_else(|| Error::InvalidParam(format!("missing key '{key}'")))
}

fn required_parsed<T>(kv: &KeyValues, key: &str) -> crate::Result<T>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    kv.get_parsed(key)?
        .ok_or_else(|| Error::InvalidParam(format!("missing key '{key}'")))
}

fn write_file(path: &Path, contents: &str) -> crate::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, contents)?;
    Ok(())
}

fn write_manifest(path: &Path, kv: &KeyValues, outputs: &[PathBuf]) -> crate::Result<()> {
    let mut m = kv.clone();
    m.insert(
        "outputs",
        outputs.iter().map(|p| path_str(p)).collect::<Vec<_>>().join(","),
    );
    let mut text = String::from("# boxloss run manifest; re-run with `boxloss replay <this file>`\n");
    text.push_str(&m.to_text());
    write_file(path, &text)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn execute(kv: &KeyValues) -> crate::Result<Outcome> {
    match required(kv, "command")? {
        "profile" => execute_profile(kv),
        "gradcheck" => execute_gradcheck(kv),
        "fit" => execute_fit(kv),
        other => Err(Error::InvalidParam(format!("unknown command '{other}' in manifest"))),
    }
}

fn execute_profile(kv: &KeyValues) -> crate::Result<Outcome> {
    let out = PathBuf::from(required(kv, "out")?);
    let scale: f64 = required_parsed(kv, "mismatch_scale")?;
    let config = SweepConfig {
        delta: required_parsed(kv, "delta")?,
        num_samples: required_parsed(kv, "samples")?,
        ..SweepConfig::default()
    };
    config.validate()?;

    let mut outputs = Vec::new();
    if let Some(list) = kv.get("deltas") {
        let deltas: Vec<f64> = list
            .split(',')
            .map(|d| {
                d.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidParam(format!("delta '{d}': {e}")))
            })
            .collect::<crate::Result<_>>()?;
        let study = if scale == 1.0 {
            delta_study(&config, &deltas)?
        } else {
            deltas
                .iter()
                .map(|&delta| Ok((delta, sweep_mismatch(&SweepConfig { delta, ..config }, scale)?)))
                .collect::<crate::Result<Vec<_>>>()?
        };
        for (delta, rows) in study {
            let path = with_suffix(&out, &format!("_delta{delta:?}.csv"));
            write_file(&path, &csv::sweep_csv(&rows))?;
            println!("delta {delta:?}: {} rows -> {}", rows.len(), path.display());
            outputs.push(path);
        }
    } else {
        let rows = if scale == 1.0 {
            sweep(&config)?
        } else {
            sweep_mismatch(&config, scale)?
        };
        write_file(&out, &csv::sweep_csv(&rows))?;
        println!("{} rows -> {}", rows.len(), out.display());
        outputs.push(out.clone());
    }
    write_manifest(&with_suffix(&out, ".manifest"), kv, &outputs)?;
    Ok(Outcome::Done)
}

fn execute_gradcheck(kv: &KeyValues) -> crate::Result<Outcome> {
    let loss = required(kv, "loss")?;
    let kinds: Vec<LossKind> = if loss == "all" {
        LossKind::ALL.to_vec()
    } else {
        parse_kinds(loss)?
    };
    let step: f64 = required_parsed(kv, "step")?;
    let tol: f64 = required_parsed(kv, "tol")?;
    let sampler = SamplerConfig {
        regime: required_parsed::<OverlapRegime>(kv, "regime")?,
        samples: required_parsed(kv, "samples")?,
        seed: required_parsed(kv, "seed")?,
        params: HuberParams::new(required_parsed(kv, "delta")?)?,
        ..SamplerConfig::default()
    };

    let mut results = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let r = finite_diff_check(kind, &sampler, tol, step)?;
        println!(
            "{kind}: max_relative_error={:e} checked={} skipped_near_kink={} {}",
            r.max_relative_error,
            r.num_points_checked,
            r.num_skipped_near_kink,
            if r.passed() { "PASS" } else { "FAIL" }
        );
        results.push((kind, r));
    }
    if let Some(out) = kv.get("out") {
        let out = PathBuf::from(out);
        write_file(&out, &csv::gradcheck_csv(&results))?;
        write_manifest(&with_suffix(&out, ".manifest"), kv, &[out.clone()])?;
    }
    if results.iter().all(|(_, r)| r.passed()) {
        Ok(Outcome::Done)
    } else {
        Ok(Outcome::GradcheckFailed)
    }
}

fn execute_fit(kv: &KeyValues) -> crate::Result<Outcome> {
    let out = PathBuf::from(required(kv, "out")?);
    let config = apply_fit_keys(kv, FitConfig::default())?;
    config.validate()?;

    let (kinds, seeds) = match kv.get("compare") {
        Some(list) => (parse_kinds(list)?, required_parsed::<usize>(kv, "seeds")?),
        None => (vec![config.loss_kind], 1),
    };
    let cmp = compare_losses(&config, &kinds, seeds)?;

    std::fs::create_dir_all(&out)?;
    let mut outputs = Vec::new();
    for run in &cmp.runs {
        let path = out.join(format!("trajectory_{}_seed{}.csv", run.loss_kind, run.seed));
        write_file(&path, &csv::trajectory_csv(&run.result))?;
        if run.result.diverged {
            println!("warning: {} seed {} diverged", run.loss_kind, run.seed);
        }
        outputs.push(path);
    }
    let summary = out.join("summary.csv");
    write_file(&summary, &csv::summary_csv(&cmp.rows))?;
    outputs.push(summary);

    for r in &cmp.rows {
        println!(
            "{:<11} final IoU {:.4} ± {:.4} (initial {:.4}, {} seed{})",
            r.loss_kind.name(),
            r.mean_final_iou,
            r.stddev_final_iou,
            r.mean_initial_iou,
            seeds,
            if seeds == 1 { "" } else { "s" }
        );
    }
    write_manifest(&out.join("manifest.txt"), kv, &outputs)?;
    Ok(Outcome::Done)
}
