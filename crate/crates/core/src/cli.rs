//! Batch experiments driven by a TOML configuration: parsing, seeding,
//! worker pool, data files and the result manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::energy::field::{electric_energy, truncated_field_grid, truncation_correction, GridParams};
use crate::energy::{splitting_terms, Configuration, TruncationVector};
use crate::equilibrium::{equilibrium_measure, semicircle_cdf, EquilibriumMeasure, PotentialSpec};
use crate::error::{Error, Result};
use crate::fluctstats::stats::{ks_one_sample, ks_two_sample, sup_distance};
use crate::fluctstats::{clt_report, log_laplace_of, variance_prediction, LinearStatistic, TestFunction, MIN_LAPLACE_SAMPLES};
use crate::jellium::{default_etas, lattice_scan_2d, renorm_energy_periodic, LatticeSpec};
use crate::kernel::{KernelCase, KernelSpec};
use crate::sampler::{chain_rng, sample_beta_tridiag, sample_ginibre, Chain, ChainReport, Checkpoint, GibbsParams, Schedule};
use crate::thermo::{closed_form_entries, expansion_fit, logz_closed_form, logz_estimate_ti, LogZEntry, TiSettings};
use crate::verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_TOLERANCE: i32 = 3;
pub const EXIT_ACCEPTANCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "coulomb-lab", version, about = "Experiments on log and Coulomb gases")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML experiment configuration, or a manifest JSON to rerun.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Size of the worker pool.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Chain checkpoint to continue (`sample` only).
    #[arg(long, global = true)]
    pub resume: Option<PathBuf>,
}

#[derive(Clone, Debug, Subcommand, PartialEq)]
pub enum Command {
    /// Run Metropolis chains and store thinned configurations.
    Sample,
    /// Draw from the random-matrix oracle and compare with the chains.
    Oracle,
    /// Splitting terms (and optionally the electric energy) of random configurations.
    EnergyAudit,
    /// Fluctuations of a linear statistic.
    Fluct,
    /// Renormalized energies of lattices and the 2D lattice scan.
    Jellium,
    /// Closed forms, expansion fit and thermodynamic integration of log Z.
    Logz,
    /// Run the acceptance suite.
    Verify {
        /// Restrict to these criteria.
        #[arg(long = "criterion")]
        criteria: Vec<u8>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Oracle => "oracle",
            Command::EnergyAudit => "energy-audit",
            Command::Fluct => "fluct",
            Command::Jellium => "jellium",
            Command::Logz => "logz",
            Command::Verify { .. } => "verify",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsConfig {
    pub kernel: KernelSpec,
    pub beta: f64,
    pub n: usize,
    /// `V(x) = a|x|²`.
    pub a: f64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self { kernel: KernelSpec::log2(), beta: 2.0, n: 64, a: 1.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub chains: u64,
    pub sweeps: usize,
    pub burn_in: f64,
    pub thin: usize,
    pub target_accept: f64,
    pub initial_step: Option<f64>,
    /// Write a checkpoint every this many sweeps.
    pub checkpoint_every: Option<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        let s = Schedule::default();
        Self {
            chains: 2,
            sweeps: s.sweeps,
            burn_in: s.burn_in,
            thin: 10,
            target_accept: s.target_accept,
            initial_step: s.initial_step,
            checkpoint_every: None,
        }
    }
}

impl SamplerConfig {
    pub fn schedule(&self) -> Schedule {
        Schedule {
            sweeps: self.sweeps,
            burn_in: self.burn_in,
            thin: self.thin,
            target_accept: self.target_accept,
            initial_step: self.initial_step,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub draws: usize,
    /// Also run the chains of `[sampler]` and compare.
    pub compare_mcmc: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { draws: 100, compare_mcmc: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyConfig {
    pub configs: usize,
    /// Compute the electric energy with uniform truncation radius `eta`.
    pub electric: bool,
    pub eta: f64,
    pub electric_tol: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self { configs: 1, electric: false, eta: 1e-2, electric_tol: 1e-2 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum XiConfig {
    RadialBump { center: Vec<f64>, inner: f64, outer: f64 },
    Polynomial { coeffs: Vec<f64>, lo: f64, hi: f64, ramp: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FluctConfig {
    /// Defaults to a bump at the origin with radii `0.2 R` and `0.6 R`.
    pub xi: Option<XiConfig>,
    pub laplace_s: Vec<f64>,
}

impl Default for FluctConfig {
    fn default() -> Self {
        Self { xi: None, laplace_s: vec![-1.0, -0.5, 0.5, 1.0] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct JelliumConfig {
    /// Named lattices: integer, square, triangular, cubic, bcc, fcc.
    pub lattices: Vec<String>,
    pub scan_re: usize,
    pub scan_im: usize,
    pub scan_im_max: f64,
}

impl Default for JelliumConfig {
    fn default() -> Self {
        Self {
            lattices: vec!["integer".into(), "square".into(), "triangular".into(), "bcc".into(), "fcc".into()],
            scan_re: 21,
            scan_im: 41,
            scan_im_max: 2.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LogzConfig {
    pub ns: Vec<usize>,
    pub anchor_beta: f64,
    /// Run thermodynamic integration to this β for each of `ti_ns`.
    pub target_beta: Option<f64>,
    pub ti_ns: Vec<usize>,
    pub intervals: usize,
    pub max_intervals: usize,
    pub tol: Option<f64>,
}

impl Default for LogzConfig {
    fn default() -> Self {
        Self {
            ns: vec![8, 16, 32, 64],
            anchor_beta: 2.0,
            target_beta: None,
            ti_ns: vec![16],
            intervals: 4,
            max_intervals: 16,
            tol: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: PathBuf,
    pub gibbs: GibbsConfig,
    pub sampler: SamplerConfig,
    pub oracle: OracleConfig,
    pub energy: EnergyConfig,
    pub fluct: FluctConfig,
    pub jellium: JelliumConfig,
    pub logz: LogzConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            workers: None,
            out: PathBuf::from("out"),
            gibbs: GibbsConfig::default(),
            sampler: SamplerConfig::default(),
            oracle: OracleConfig::default(),
            energy: EnergyConfig::default(),
            fluct: FluctConfig::default(),
            jellium: JelliumConfig::default(),
            logz: LogzConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML, rejecting unknown keys with their path.
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Config { path: String::new(), msg: e.message().to_string() })?;
        serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            msg: e.inner().message().to_string(),
        })
    }

    /// The `config` object of an emitted manifest.
    pub fn from_manifest_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config { path: String::new(), msg: e.to_string() })?;
        let cfg = v.get("config").ok_or_else(|| Error::Config { path: "config".into(), msg: "manifest has no config".into() })?;
        serde_path_to_error::deserialize(cfg).map_err(|e| Error::Config {
            path: format!("config.{}", e.path()),
            msg: e.inner().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_manifest_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn params(&self) -> Result<GibbsParams> {
        GibbsParams::new(self.gibbs.beta, self.gibbs.n, self.gibbs.kernel, PotentialSpec::quadratic(self.gibbs.a)?)
    }

    pub fn equilibrium(&self) -> Result<EquilibriumMeasure> {
        equilibrium_measure(&PotentialSpec::quadratic(self.gibbs.a)?, self.gibbs.kernel)
    }

    /// Hash of the fields that determine the numbers (not `out` or `workers`).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.workers = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..6])
    }

    pub fn test_function(&self) -> Result<TestFunction> {
        let eqm = self.equilibrium()?;
        let d = eqm.dim();
        match &self.fluct.xi {
            None => TestFunction::radial_bump(vec![0.0; d], 0.2 * eqm.radius(), 0.6 * eqm.radius()),
            Some(XiConfig::RadialBump { center, inner, outer }) => {
                if center.len() != d {
                    return Err(Error::Config { path: "fluct.xi.center".into(), msg: format!("expected {d} coordinates") });
                }
                TestFunction::radial_bump(center.clone(), *inner, *outer)
            }
            Some(XiConfig::Polynomial { coeffs, lo, hi, ramp }) => {
                if d != 1 {
                    return Err(Error::Config { path: "fluct.xi".into(), msg: "polynomial test functions are one-dimensional".into() });
                }
                TestFunction::polynomial_1d(coeffs.clone(), *lo, *hi, *ramp)
            }
        }
    }
}

/// A comma-separated table with a header row.
#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push<I: IntoIterator<Item = String>>(&mut self, row: I) {
        let row: Vec<String> = row.into_iter().collect();
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

#[derive(Clone, Debug, Serialize)]
pub struct OutputRecord {
    pub name: String,
    /// Where the numbers come from: `mcmc`, `oracle`, `closed-form`, `quadrature`, ...
    pub source: String,
    pub data: serde_json::Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct RngStream {
    pub task: String,
    pub seed: u64,
    pub stream: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResultManifest {
    pub artifact_version: String,
    pub command: String,
    /// `complete` or `INCOMPLETE`.
    pub status: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub outputs: Vec<OutputRecord>,
    pub files: Vec<String>,
    pub rng: Vec<RngStream>,
    pub failure: Option<String>,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
}

/// Collects outputs while a command runs.
pub struct Run {
    pub config: ExperimentConfig,
    command: String,
    outputs: Vec<OutputRecord>,
    tables: Vec<Table>,
    /// Files already written by the command itself (checkpoints).
    extra_files: Vec<String>,
    rng: Vec<RngStream>,
}

impl Run {
    fn new(config: ExperimentConfig, command: &str) -> Self {
        Self { config, command: command.into(), outputs: Vec::new(), tables: Vec::new(), extra_files: Vec::new(), rng: Vec::new() }
    }

    fn output<T: Serialize>(&mut self, name: &str, source: &str, data: &T) -> Result<()> {
        let data = serde_json::to_value(data).map_err(|e| Error::Consistency(e.to_string()))?;
        self.outputs.push(OutputRecord { name: name.into(), source: source.into(), data });
        Ok(())
    }

    fn stream(&mut self, task: &str, seed: u64, stream: u64) {
        self.rng.push(RngStream { task: task.into(), seed, stream });
    }

    fn file_name(&self, what: &str, ext: &str) -> String {
        format!("{}_{what}_seed{}_{}.{ext}", self.command, self.config.seed, self.config.hash())
    }
}

/// Writes the data files and the manifest; a failure marks the manifest INCOMPLETE.
pub fn emit_report(run: &Run, failure: Option<&Error>, started: SystemTime, clock: Instant) -> Result<ResultManifest> {
    let dir = &run.config.out;
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for t in &run.tables {
        let name = run.file_name(&t.name, "csv");
        let body = if failure.is_some() { format!("# INCOMPLETE\n{}", t.to_csv()) } else { t.to_csv() };
        fs::write(dir.join(&name), body)?;
        files.push(name);
    }
    files.extend(run.extra_files.iter().cloned());
    let manifest = ResultManifest {
        artifact_version: env!("CARGO_PKG_VERSION").into(),
        command: run.command.clone(),
        status: if failure.is_some() { "INCOMPLETE".into() } else { "complete".into() },
        config: run.config.clone(),
        config_hash: run.config.hash(),
        outputs: run.outputs.clone(),
        files,
        rng: run.rng.clone(),
        failure: failure.map(|e| e.to_string()),
        started_unix: started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Consistency(e.to_string()))?;
    fs::write(dir.join(run.file_name("manifest", "json")), text)?;
    Ok(manifest)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Tolerance { .. } | Error::InsufficientData(_) | Error::Range(_) | Error::Singularity(_) => EXIT_TOLERANCE,
        _ => EXIT_VALIDATION,
    }
}

/// Resolves the configuration (file, then flags) and runs the command.
pub fn run_cli(cli: Cli) -> i32 {
    let mut config = match &cli.config {
        Some(p) => match ExperimentConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_VALIDATION;
            }
        },
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(w) = cli.workers {
        config.workers = Some(w);
    }
    if let Some(o) = &cli.out {
        config.out = o.clone();
    }
    if let Some(w) = config.workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return EXIT_VALIDATION;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            log::warn!("worker pool already initialised: {e}");
        }
    }
    if cli.resume.is_some() && cli.command != Command::Sample {
        eprintln!("error: --resume applies to `sample` only");
        return EXIT_VALIDATION;
    }
    let started = SystemTime::now();
    let clock = Instant::now();
    let mut run = Run::new(config, cli.command.name());
    let result = match &cli.command {
        Command::Sample => cmd_sample(&mut run, cli.resume.as_deref()),
        Command::Oracle => cmd_oracle(&mut run),
        Command::EnergyAudit => cmd_energy_audit(&mut run),
        Command::Fluct => cmd_fluct(&mut run),
        Command::Jellium => cmd_jellium(&mut run),
        Command::Logz => cmd_logz(&mut run),
        Command::Verify { criteria } => cmd_verify(&mut run, criteria),
    };
    let failure = result.as_ref().err();
    if let Some(e) = failure {
        eprintln!("error: {e}");
    }
    match emit_report(&run, failure, started, clock) {
        Ok(m) => println!(
            "manifest: {} ({} data files)",
            run.config.out.join(run.file_name("manifest", "json")).display(),
            m.files.len()
        ),
        Err(e) => {
            eprintln!("error writing report: {e}");
            return EXIT_VALIDATION;
        }
    }
    match result {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_ACCEPTANCE,
        Err(e) => exit_code(&e),
    }
}

fn chain_table(reports: &[ChainReport]) -> Table {
    let mut t = Table::new("chains", &["chain", "sweeps", "burn_in", "emitted", "acceptance", "coincident", "final_step"]);
    for r in reports {
        t.push([
            r.chain.to_string(),
            r.sweeps.to_string(),
            r.burn_in.to_string(),
            r.emitted.to_string(),
            num(r.acceptance),
            r.coincident.to_string(),
            num(r.final_step),
        ]);
    }
    t
}

fn config_table(samples: &[(u64, usize, Configuration)]) -> Table {
    let d = samples.first().map(|s| s.2.dim()).unwrap_or(1);
    let mut cols = vec!["chain".to_string(), "sweep".into(), "particle".into()];
    cols.extend((0..d).map(|k| format!("x{k}")));
    let mut t = Table { name: "configs".into(), columns: cols, rows: Vec::new() };
    for (c, s, cfg) in samples {
        for (i, p) in cfg.points().enumerate() {
            let mut row = vec![c.to_string(), s.to_string(), i.to_string()];
            row.extend(p.iter().map(|&x| num(x)));
            t.rows.push(row);
        }
    }
    t
}

/// Runs one chain in segments, overwriting its checkpoint file after each.
fn drive_chain(mut chain: Chain, every: Option<usize>, run: &Run) -> Result<(Vec<(usize, Configuration)>, ChainReport, String)> {
    let total = chain.checkpoint().schedule.sweeps;
    let step = every.unwrap_or(total).max(1);
    let name = run.file_name(&format!("checkpoint_chain{}", chain.checkpoint().stream), "json");
    let path = run.config.out.join(&name);
    fs::create_dir_all(&run.config.out)?;
    let mut out = Vec::new();
    let mut emitted = 0;
    loop {
        let stop = (chain.state().sweep + step).min(total);
        let mut report = chain.run_until(stop, |s| out.push((s.sweep, s.config.clone())));
        emitted += report.emitted;
        let text = serde_json::to_string(&chain.checkpoint()).map_err(|e| Error::Consistency(e.to_string()))?;
        fs::write(&path, text)?;
        if stop == total {
            report.emitted = emitted;
            return Ok((out, report, name));
        }
    }
}

fn cmd_sample(run: &mut Run, resume: Option<&Path>) -> Result<bool> {
    let schedule = run.config.sampler.schedule();
    let every = run.config.sampler.checkpoint_every;
    let results: Vec<(u64, Vec<(usize, Configuration)>, ChainReport, String)> = match resume {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let cp: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Config { path: path.display().to_string(), msg: e.to_string() })?;
            run.stream("resumed chain", cp.seed, cp.stream);
            let chain = Chain::from_checkpoint(&cp)?;
            let (out, rep, files) = drive_chain(chain, every, run)?;
            vec![(cp.stream, out, rep, files)]
        }
        None => {
            let params = run.config.params()?;
            let seed = run.config.seed;
            for c in 0..run.config.sampler.chains {
                run.stream("chain", seed, c);
            }
            let r: &Run = run;
            (0..r.config.sampler.chains)
                .into_par_iter()
                .map(|c| {
                    let chain = Chain::new(params.clone(), schedule, seed, c)?;
                    drive_chain(chain, every, r).map(|(o, rep, f)| (c, o, rep, f))
                })
                .collect::<Result<_>>()?
        }
    };
    let mut samples = Vec::new();
    let mut reports = Vec::new();
    for (c, out, rep, file) in results {
        samples.extend(out.into_iter().map(|(s, cfg)| (c, s, cfg)));
        reports.push(rep);
        run.extra_files.push(file);
    }
    run.output("chains", "mcmc", &reports)?;
    run.tables.push(chain_table(&reports));
    run.tables.push(config_table(&samples));
    Ok(true)
}

/// The scalar each oracle comparison uses: moduli in the plane, one uniformly
/// chosen coordinate per configuration on the line.
fn oracle_statistic<R: Rng + ?Sized>(cfg: &Configuration, pick: &mut R) -> Vec<f64> {
    if cfg.dim() == 1 {
        vec![cfg.coords()[pick.random_range(0..cfg.n())]]
    } else {
        cfg.points().map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
    }
}

fn cmd_oracle(run: &mut Run) -> Result<bool> {
    let g = run.config.gibbs.clone();
    let eqm = run.config.equilibrium()?;
    let seed = run.config.seed;
    let mut rng = chain_rng(seed, 1 << 32);
    run.stream("oracle draws", seed, 1 << 32);
    let mut pick = chain_rng(seed, (1 << 32) + 1);
    run.stream("marginal picks", seed, (1 << 32) + 1);
    let (source, draws): (&str, Vec<Configuration>) = match (g.kernel.case(), g.a, g.beta) {
        (KernelCase::Log1, a, beta) if (a - 0.5).abs() < 1e-15 => (
            "oracle:tridiagonal",
            (0..run.config.oracle.draws)
                .map(|_| Configuration::new(1, sample_beta_tridiag(g.n, beta, &mut rng)?))
                .collect::<Result<_>>()?,
        ),
        (KernelCase::Log2, a, beta) if (a - 1.0).abs() < 1e-15 && beta == 2.0 => (
            "oracle:ginibre",
            (0..run.config.oracle.draws).map(|_| sample_ginibre(g.n, &mut rng)).collect::<Result<_>>()?,
        ),
        _ => return Err(Error::Capability("oracles exist for the line with V = x²/2 and the plane at β = 2 with V = |x|²".into())),
    };
    let oracle: Vec<f64> = draws.iter().flat_map(|c| oracle_statistic(c, &mut pick)).collect();
    let law = |x: f64| if eqm.dim() == 1 { semicircle_cdf(eqm.radius(), x) } else { eqm.radial_cdf(x) };
    let mut t = Table::new("ks", &["sample", "statistic", "values", "sup_distance", "ks_p"]);
    let (d_o, p_o) = ks_one_sample(&oracle, law)?;
    t.push(["oracle".into(), "vs equilibrium".into(), oracle.len().to_string(), num(d_o), num(p_o)]);
    let mut record = vec![serde_json::json!({"sample": "oracle", "against": "equilibrium", "sup_distance": d_o, "ks_p": p_o})];
    if run.config.oracle.compare_mcmc {
        let params = run.config.params()?;
        for c in 0..run.config.sampler.chains {
            run.stream("chain", seed, c);
        }
        let runs = crate::sampler::run_chains(&params, run.config.sampler.schedule(), seed, run.config.sampler.chains, |s| s.config.clone())?;
        let mut mcmc = Vec::new();
        let mut reports = Vec::new();
        for (cs, rep) in runs {
            mcmc.extend(cs.iter().flat_map(|c| oracle_statistic(c, &mut pick)));
            reports.push(rep);
        }
        let d_m = sup_distance(&mcmc, law)?;
        let (d_2, p_2) = ks_two_sample(&mcmc, &oracle)?;
        t.push(["mcmc".into(), "vs equilibrium".into(), mcmc.len().to_string(), num(d_m), "".into()]);
        t.push(["mcmc".into(), "vs oracle".into(), mcmc.len().to_string(), num(d_2), num(p_2)]);
        record.push(serde_json::json!({"sample": "mcmc", "against": "equilibrium", "sup_distance": d_m}));
        record.push(serde_json::json!({"sample": "mcmc", "against": "oracle", "sup_distance": d_2, "ks_p": p_2}));
        run.tables.push(chain_table(&reports));
    }
    run.output("ks_table", source, &record)?;
    run.tables.push(t);
    Ok(true)
}

fn cmd_energy_audit(run: &mut Run) -> Result<bool> {
    let params = run.config.params()?;
    let eqm = run.config.equilibrium()?;
    let seed = run.config.seed;
    let e = run.config.energy.clone();
    let mut rng = chain_rng(seed, 2 << 32);
    run.stream("audit configurations", seed, 2 << 32);
    let d = eqm.dim();
    let mut t = Table::new("audit", &["config", "h_n", "n2_iv", "zeta_term", "f_n", "residual", "tolerance"]);
    let mut el = Table::new("electric", &["config", "eta", "electric", "electric_error", "correction", "f_n", "disjoint"]);
    let mut records = Vec::new();
    for k in 0..e.configs {
        let mut c = vec![0.0; params.n * d];
        for p in c.chunks_exact_mut(d) {
            eqm.sample_into(&mut rng, p);
        }
        let cfg = Configuration::new(d, c)?;
        let s = splitting_terms(&cfg, &params.potential, &eqm, &params.kernel)?;
        let tol = 1e-8 * [s.h_n, s.iv_term, s.zeta_term, s.f_n, 1.0].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if s.residual.abs() > tol {
            return Err(Error::Tolerance { what: "splitting identity".into(), achieved: s.residual.abs(), requested: tol });
        }
        t.push([k.to_string(), num(s.h_n), num(s.iv_term), num(s.zeta_term), num(s.f_n), num(s.residual), num(tol)]);
        records.push(s);
        if e.electric {
            let trunc = TruncationVector::uniform(params.n, e.eta)?;
            let field = truncated_field_grid(&cfg, &eqm, &trunc, GridParams::default())?;
            let ee = electric_energy(&field, e.electric_tol)?;
            let corr = truncation_correction(&cfg, &eqm, &trunc);
            el.push([
                k.to_string(),
                num(e.eta),
                num(ee.value),
                num(ee.error),
                num(corr),
                num(s.f_n),
                trunc.disjoint_for(&cfg).to_string(),
            ]);
        }
    }
    run.output("splitting_terms", "direct summation", &records)?;
    run.tables.push(t);
    if e.electric {
        run.tables.push(el);
    }
    Ok(true)
}

fn cmd_fluct(run: &mut Run) -> Result<bool> {
    let params = run.config.params()?;
    let eqm = run.config.equilibrium()?;
    let xi = run.config.test_function()?;
    let stat = LinearStatistic::new(xi.clone(), &eqm)?;
    let seed = run.config.seed;
    for c in 0..run.config.sampler.chains {
        run.stream("chain", seed, c);
    }
    let runs = crate::sampler::run_chains(&params, run.config.sampler.schedule(), seed, run.config.sampler.chains, |s| stat.eval(&s.config))?;
    let mut values = Vec::new();
    let mut reports = Vec::new();
    for (vs, rep) in runs {
        values.extend(vs);
        reports.push(rep);
    }
    let prediction = variance_prediction(&xi, params.beta, &eqm).ok();
    let rep = clt_report(&values, params.n, params.beta, prediction)?;
    let mut t = Table::new("clt", &["beta", "N", "mean", "mean_se", "var", "var_se", "var_pred", "p_normal", "ess"]);
    t.push([
        num(rep.beta),
        rep.n.to_string(),
        num(rep.mean),
        num(rep.mean_se),
        num(rep.variance),
        num(rep.variance_se),
        rep.predicted_variance.map(num).unwrap_or_default(),
        num(rep.normality_p),
        num(rep.ess),
    ]);
    run.output("clt", "mcmc", &rep)?;
    run.tables.push(t);
    run.tables.push(chain_table(&reports));
    if values.len() >= MIN_LAPLACE_SAMPLES {
        let mut lt = Table::new("laplace", &["s", "log_laplace", "se"]);
        let mut pts = Vec::new();
        for &s in &run.config.fluct.laplace_s {
            let p = log_laplace_of(&values, s)?;
            lt.push([num(p.s), num(p.value), num(p.se)]);
            pts.push(p);
        }
        run.output("log_laplace", "mcmc", &pts)?;
        run.tables.push(lt);
    } else {
        log::warn!("{} samples: log-Laplace transform skipped (needs {MIN_LAPLACE_SAMPLES})", values.len());
    }
    Ok(true)
}

fn named_lattice(name: &str) -> Result<(LatticeSpec, KernelSpec)> {
    Ok(match name {
        "integer" => (LatticeSpec::integer(), KernelSpec::log1()),
        "square" => (LatticeSpec::square(), KernelSpec::log2()),
        "triangular" => (LatticeSpec::triangular(), KernelSpec::log2()),
        "cubic" => (LatticeSpec::cubic(), KernelSpec::coulomb(3)?),
        "bcc" => (LatticeSpec::bcc(), KernelSpec::coulomb(3)?),
        "fcc" => (LatticeSpec::fcc(), KernelSpec::coulomb(3)?),
        other => return Err(Error::Config { path: "jellium.lattices".into(), msg: format!("unknown lattice `{other}`") }),
    })
}

fn cmd_jellium(run: &mut Run) -> Result<bool> {
    let j = run.config.jellium.clone();
    let mut t = Table::new("lattices", &["lattice", "W", "error", "W_direct"]);
    let mut out = Vec::new();
    for name in &j.lattices {
        let (cell, kernel) = named_lattice(name)?;
        let pc = cell.as_periodic();
        let w = renorm_energy_periodic(&pc, &kernel, &default_etas(&pc))?;
        t.push([name.clone(), num(w.value), num(w.error), num(w.direct)]);
        out.push(serde_json::json!({"lattice": name, "W": w.value, "error": w.error, "W_direct": w.direct}));
    }
    run.output("lattice_energies", "ewald + truncation extrapolation", &out)?;
    run.tables.push(t);
    let scan = lattice_scan_2d(j.scan_re, j.scan_im, j.scan_im_max)?;
    let mut g = Table::new("scan", &["tau_re", "tau_im", "W", "tolerance"]);
    for &(re, im, w) in &scan.grid {
        g.push([num(re), num(im), num(w), num(1e-10)]);
    }
    run.output("scan_argmin", "ewald", &serde_json::json!({"tau_re": scan.argmin.0, "tau_im": scan.argmin.1, "W": scan.min}))?;
    run.tables.push(g);
    Ok(true)
}

fn cmd_logz(run: &mut Run) -> Result<bool> {
    let g = run.config.gibbs.clone();
    let l = run.config.logz.clone();
    let v = PotentialSpec::quadratic(g.a)?;
    let mut t = Table::new("logz", &["N", "beta", "logz", "se", "exact"]);
    let mut entries: Vec<LogZEntry> = Vec::new();
    match closed_form_entries(&l.ns, g.beta, &g.kernel, &v) {
        Ok(es) => entries = es,
        Err(Error::Capability(m)) => log::warn!("no closed forms at β = {}: {m}", g.beta),
        Err(e) => return Err(e),
    }
    for e in &entries {
        t.push([e.n.to_string(), num(g.beta), num(e.value), num(e.se), e.exact.to_string()]);
    }
    if entries.len() >= 4 {
        let rep = expansion_fit(&entries, g.beta, &g.kernel, &v)?;
        let mut f = Table::new("fit", &["term", "fitted", "predicted", "max_abs_residual"]);
        let res = rep.residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        f.push([format!("N^{}", rep.leading_power), num(rep.fit_leading), num(rep.predicted_leading), num(res)]);
        if let (Some(a), Some(b)) = (rep.fit_nlogn, rep.predicted_nlogn) {
            f.push(["N log N".into(), num(a), num(b), num(res)]);
        }
        f.push(["N".into(), num(rep.fit_linear), "".into(), num(res)]);
        run.output("expansion_fit", "closed-form", &rep)?;
        run.tables.push(f);
    }
    if let Some(target) = l.target_beta {
        let mut ti_out = Vec::new();
        for &n in &l.ti_ns {
            let params = GibbsParams::new(l.anchor_beta, n, g.kernel, v.clone())?;
            let settings = TiSettings {
                schedule: run.config.sampler.schedule(),
                chains: run.config.sampler.chains,
                seed: run.config.seed.wrapping_add(n as u64),
                intervals: l.intervals,
                max_intervals: l.max_intervals,
                tol: l.tol.unwrap_or(f64::INFINITY),
            };
            run.stream(&format!("thermodynamic integration N={n}"), settings.seed, 0);
            let est = logz_estimate_ti(&params, l.anchor_beta, target, &settings)?;
            t.push([n.to_string(), num(target), num(est.value), num(est.error()), "false".into()]);
            if let Ok(exact) = logz_closed_form(n, target, &g.kernel, &v) {
                t.push([n.to_string(), num(target), num(exact), num(0.0), "true".into()]);
            }
            ti_out.push(est);
        }
        run.output("thermodynamic_integration", "mcmc", &ti_out)?;
    }
    run.output("logz", "closed-form", &entries)?;
    run.tables.push(t);
    Ok(true)
}

fn cmd_verify(run: &mut Run, criteria: &[u8]) -> Result<bool> {
    let ids: Vec<u8> = if criteria.is_empty() { verify::CRITERIA.to_vec() } else { criteria.to_vec() };
    let mut t = Table::new("acceptance", &["criterion", "check", "value", "bound", "passed"]);
    let mut all = true;
    let mut outcomes = Vec::new();
    let mut text = String::new();
    for id in ids {
        let o = verify::run_criterion(id, run.config.seed)?;
        println!("{}", o.detail());
        let _ = writeln!(text, "{}", o.line());
        all &= o.passed();
        for c in &o.checks {
            t.push([id.to_string(), c.name.replace(',', ";"), num(c.value), c.bound.clone(), c.passed.to_string()]);
        }
        outcomes.push(o);
    }
    run.output("acceptance", "verify", &outcomes)?;
    run.tables.push(t);
    print!("{text}");
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_report_their_path() {
        let err = ExperimentConfig::from_toml("[sampler]\nsweeps = 10\nsweps = 3\n").unwrap_err();
        match err {
            Error::Config { path, msg } => {
                assert_eq!(path, "sampler.sweps");
                assert!(msg.contains("sweps"), "{msg}");
            }
            e => panic!("{e}"),
        }
        let err = ExperimentConfig::from_toml("[gibbs]\nbeta = \"two\"\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "gibbs.beta"), "{err}");
    }

    #[test]
    fn minimal_config_and_kernel_syntax() {
        let c = ExperimentConfig::from_toml("seed = 7\n[gibbs]\nkernel = { case = \"log1\" }\na = 0.5\nn = 8\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.gibbs.kernel, KernelSpec::log1());
        assert_eq!(c.sampler, SamplerConfig::default());
        assert!(ExperimentConfig::from_toml("[gibbs]\nkernel = { case = \"riesz\", d = 2 }\n").is_err());
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.out = PathBuf::from("elsewhere");
        b.workers = Some(3);
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn manifest_config_round_trips() {
        let mut c = ExperimentConfig::default();
        c.fluct.xi = Some(XiConfig::RadialBump { center: vec![0.1, 0.0], inner: 0.1, outer: 0.3 });
        let json = serde_json::json!({ "config": c }).to_string();
        assert_eq!(ExperimentConfig::from_manifest_json(&json).unwrap(), c);
        let toml_text = toml::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&toml_text).unwrap(), c);
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new("x", &["a", "b"]);
        t.push(["1".into(), num(0.5)]);
        assert_eq!(t.to_csv(), "a,b\n1,0.5\n");
    }
}
