//! Command-line harness: `certify`, `train`, `sweep-radius`, `audit-sampler`
//! and `bias-gap`, all driven by one JSON config.

mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use config::{AuditSpec, BiasSpec, EnvSpec, ExperimentConfig, PolicySpec, SweepSpec, TabularKernel, CONFIG_VERSION};

use crate::decay::{certificate, DecayCertificate};
use crate::error::{Error, Result};
use crate::estimation::{audit_sampler, AuditSettings};
use crate::npg::{bias_gap, centralized_npg, decentralized_npg, localization_bound, Baseline, RunRecord};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CERTIFICATION: i32 = 2;
pub const EXIT_SIZE: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "locnpg", version, about = "Decentralized NPG experiments on networked MDPs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; results go to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (also `LOCNPG_THREADS`); never changes results.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dobrushin certificate and decay constants as JSON.
    Certify(Common),
    /// Decentralized (or centralized baseline) NPG run.
    Train(Common),
    /// Final min-gap and localization bound per (radius, seed).
    SweepRadius(Common),
    /// Sampler audit against the exact oracle.
    AuditSampler(Common),
    /// Localized vs full regression bias per radius.
    BiasGap(Common),
}

/// Float formatting with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub const TRAIN_HEADER: &str = "iter,V_mu,gap,eta,mean_w_norm,eps_stat_proxy";
pub const SWEEP_HEADER: &str = "r,seed,min_gap,loc_bound";

pub fn train_csv(rec: &RunRecord) -> String {
    let mut out = String::from(TRAIN_HEADER);
    out.push('\n');
    for row in &rec.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.iter,
            fmt_f64(row.v_mu),
            fmt_opt(row.gap),
            fmt_f64(row.eta),
            fmt_f64(row.mean_w_norm()),
            fmt_opt(row.eps_stat_proxy)
        );
    }
    out
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", common.config.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = common.seed {
        cfg.npg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> Option<PathBuf> {
    common.out.clone().or_else(|| cfg.output.as_ref().map(PathBuf::from))
}

/// Writes `name` under the output directory, or prints it when there is none.
fn emit(dir: Option<&Path>, name: &str, body: &str) -> Result<()> {
    match dir {
        Some(d) => {
            fs::create_dir_all(d)?;
            fs::write(d.join(name), body)?;
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct CertifyOutput<'a> {
    #[serde(flatten)]
    cert: &'a DecayCertificate,
    c_row_sums: Vec<f64>,
}

fn cmd_certify(common: &Common) -> Result<i32> {
    let cfg = load(common)?;
    let mdp = match cfg.build_mdp() {
        Ok(m) => m,
        Err(Error::Certification(msg)) => {
            print!("{}", to_json(&serde_json::json!({ "ok": false, "error": msg }))?);
            return Ok(EXIT_CERTIFICATION);
        }
        Err(e) => return Err(e),
    };
    let policy = cfg.build_policy(&mdp)?;
    let cert = certificate(&mdp, Some(&policy), cfg.certify)?;
    for w in &cert.warnings {
        eprintln!("warning: {w}");
    }
    let out = CertifyOutput {
        c_row_sums: cert.c.iter().map(|r| r.iter().sum()).collect(),
        cert: &cert,
    };
    let body = to_json(&out)?;
    let dir = out_dir(common, &cfg);
    if let Some(d) = &dir {
        emit(Some(d), "certificate.json", &body)?;
    }
    print!("{body}");
    Ok(if cert.ok { EXIT_OK } else { EXIT_CERTIFICATION })
}

fn train_once(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let mdp = cfg.build_mdp()?;
    let mut policy = cfg.build_policy(&mdp)?;
    match cfg.npg.baseline {
        Baseline::None => decentralized_npg(&mdp, &mut policy, &cfg.npg),
        Baseline::Centralized => centralized_npg(&mdp, &mut policy, &cfg.npg),
    }
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    config: &'a ExperimentConfig,
    eta: f64,
    radius: usize,
    v_star: Option<f64>,
    min_gap: Option<f64>,
    loc_bound: Option<f64>,
    optimization_term: f64,
    v_final: f64,
    warnings: &'a [String],
    final_policy: &'a crate::policy::PolicyCheckpoint,
}

fn cmd_train(common: &Common) -> Result<i32> {
    let cfg = load(common)?;
    let rec = train_once(&cfg)?;
    for w in &rec.warnings {
        eprintln!("warning: {w}");
    }
    let dir = out_dir(common, &cfg);
    emit(dir.as_deref(), "train.csv", &train_csv(&rec))?;
    if let Some(d) = &dir {
        let summary = TrainSummary {
            config: &cfg,
            eta: rec.eta,
            radius: rec.radius,
            v_star: rec.v_star,
            min_gap: rec.min_gap,
            loc_bound: rec.loc_bound,
            optimization_term: rec.optimization_term,
            v_final: rec.v_final,
            warnings: &rec.warnings,
            final_policy: &rec.final_policy,
        };
        emit(Some(d), "summary.json", &to_json(&summary)?)?;
    }
    Ok(EXIT_OK)
}

fn cmd_sweep(common: &Common) -> Result<i32> {
    let cfg = load(common)?;
    let seeds = if cfg.sweep.seeds.is_empty() {
        vec![cfg.npg.seed]
    } else {
        cfg.sweep.seeds.clone()
    };
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    let gamma = cfg.gamma;
    for &r in &cfg.sweep.radii {
        for &seed in &seeds {
            let mut run_cfg = cfg.clone();
            run_cfg.npg.radius = r;
            run_cfg.npg.seed = seed;
            let rec = train_once(&run_cfg)?;
            let loc = rec.constants.as_ref().map(|c| localization_bound(c, r, gamma));
            let _ = writeln!(out, "{r},{seed},{},{}", fmt_opt(rec.min_gap), fmt_opt(loc));
        }
    }
    emit(out_dir(common, &cfg).as_deref(), "sweep.csv", &out)?;
    Ok(EXIT_OK)
}

fn cmd_audit(common: &Common) -> Result<i32> {
    let cfg = load(common)?;
    let mdp = cfg.build_mdp()?;
    let policy = cfg.build_policy(&mdp)?;
    let table = policy.to_table(&mdp);
    let settings = AuditSettings {
        seed: cfg.npg.seed,
        episodes: cfg.audit.episodes,
        advantage_episodes: cfg.audit.advantage_episodes,
        max_tv: cfg.audit.max_tv,
        max_z: cfg.audit.max_z,
        sampler: cfg.npg.sampler,
    };
    let dir = out_dir(common, &cfg);
    let mut csv = String::from("episode,accept_step,branch");
    for k in 0..mdp.num_agents() {
        let _ = write!(csv, ",A_hat_{k}");
    }
    csv.push('\n');
    let keep = cfg.audit.write_episodes && dir.is_some();
    let report = audit_sampler(&mdp, &policy, &table, &settings, |e| {
        if keep {
            let branch = if e.estimate.sample_q { "Q" } else { "V" };
            let _ = write!(csv, "{},{},{branch}", e.id, e.sample.accept_step);
            for v in &e.estimate.values {
                let _ = write!(csv, ",{}", fmt_f64(*v));
            }
            csv.push('\n');
        }
    })?;
    let body = to_json(&report)?;
    if let Some(d) = &dir {
        if keep {
            emit(Some(d), "sampler.csv", &csv)?;
        }
        emit(Some(d), "audit.json", &body)?;
    }
    print!("{body}");
    Ok(EXIT_OK)
}

fn cmd_bias(common: &Common) -> Result<i32> {
    let cfg = load(common)?;
    let mdp = cfg.build_mdp()?;
    let policy = cfg.build_policy(&mdp)?;
    let radii: Vec<usize> = if cfg.bias.radii.is_empty() {
        (0..=mdp.graph().max_diameter()).collect()
    } else {
        cfg.bias.radii.clone()
    };
    let rows = bias_gap(&mdp, &policy, cfg.npg.w_radius, &radii)?;
    let body = to_json(&rows)?;
    emit(out_dir(common, &cfg).as_deref(), "bias_gap.json", &body)?;
    Ok(EXIT_OK)
}

fn thread_count(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| std::env::var("LOCNPG_THREADS").ok().and_then(|v| v.parse().ok()))
        .filter(|&n| n > 0)
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Certification(_) => EXIT_CERTIFICATION,
        Error::Size { .. } => EXIT_SIZE,
        Error::Config(_) | Error::Json(_) | Error::Input(_) => EXIT_CONFIG,
        Error::Io(_) => EXIT_OTHER,
    }
}

pub fn execute(cli: Cli) -> i32 {
    let common = match &cli.command {
        Command::Certify(c)
        | Command::Train(c)
        | Command::SweepRadius(c)
        | Command::AuditSampler(c)
        | Command::BiasGap(c) => c.clone(),
    };
    let body = || match &cli.command {
        Command::Certify(c) => cmd_certify(c),
        Command::Train(c) => cmd_train(c),
        Command::SweepRadius(c) => cmd_sweep(c),
        Command::AuditSampler(c) => cmd_audit(c),
        Command::BiasGap(c) => cmd_bias(c),
    };
    let result = match thread_count(common.threads) {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(body),
            Err(e) => {
                eprintln!("error: cannot start thread pool: {e}");
                return EXIT_OTHER;
            }
        },
        None => body(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_OK
            }
        }
    }
}
