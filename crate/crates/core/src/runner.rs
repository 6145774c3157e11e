//! Configuration, scenario orchestration and persistence.
//!
//! A run is fully determined by the canonical form of its configuration
//! and the master seed. Each module derives its own streams from the
//! master seed and a component name, so subcommands never share draws.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::killed_sim::{
    check_exit_bound, run_until, survival_curve, write_survival_csv, write_trajectory_csv, DomainSpec, InitialLaw,
};
use crate::lyapunov::{select_params, verify_c3, LyapunovFamily, LyapunovParams, SelectOptions, ShellPlan};
use crate::potentials::{validate_assumptions, Assumption, PotentialKind, PotentialSpec, SamplingPlan};
use crate::processes::{Family, ProcessSpec, State};
use crate::qsd_estimate::{
    conditional_convergence, estimate_decay_rate, fleming_viot, grid_oracle_kl_1d, grid_oracle_refinement, phi_probe,
    Binning, FvConfig, OracleGrid, GRID_CONVERGENCE,
};
use crate::rng;

/// Environment variable overriding the configured master seed.
pub const SEED_ENV: &str = "QSD_LAB_SEED";
pub const DEFAULT_OUT_DIR: &str = "qsd-lab-out";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub potential: PotentialSpec,
    pub process: ProcessSpec,
    pub domain: DomainSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovSection>,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validate: Option<ValidateSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSection {
    #[serde(flatten)]
    pub set: DomainSpec,
    /// A point of `O_V` outside the closure of `O`; required unless `O` is
    /// the whole space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovSection {
    pub family: LyapunovFamily,
    pub delta: f64,
    #[serde(default)]
    pub select: SelectOptions,
    /// Explicit parameters; selection is skipped when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<LyapunovParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shells: Option<ShellPlan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    /// Survival grid; twenty equal steps up to `t_max` when empty.
    #[serde(default)]
    pub times: Vec<f64>,
    /// Path thinning for `simulate`.
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialLaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fleming_viot: Option<FvConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converge: Option<ConvergeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<PhiSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_bound: Option<ExitBoundSection>,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_t_max() -> f64 {
    1.0
}

fn default_n_traj() -> usize {
    1000
}

fn default_record_every() -> u64 {
    10
}

impl Default for EstimatorSection {
    fn default() -> Self {
        EstimatorSection {
            dt: default_dt(),
            t_max: default_t_max(),
            n_traj: default_n_traj(),
            times: Vec::new(),
            record_every: default_record_every(),
            initial: None,
            fleming_viot: None,
            oracle: None,
            converge: None,
            phi: None,
            exit_bound: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub nx: usize,
    pub nv: usize,
    pub v_cut: f64,
    /// Also solve on the doubled grid and the doubled velocity window.
    #[serde(default)]
    pub refine: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSection {
    pub nu1: InitialLaw,
    pub nu2: InitialLaw,
    pub times: Vec<f64>,
    pub n_traj: usize,
    pub bins: Binning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiSection {
    pub probes: Vec<State>,
    pub t_probe: f64,
    pub n_traj: usize,
}

/// Monte-Carlo check of the energy exit bound, run by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitBoundSection {
    pub x0: State,
    pub r_level: f64,
    pub t: f64,
    pub n_traj: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    pub assumptions: Vec<Assumption>,
    #[serde(default)]
    pub plan: SamplingPlan,
}

impl RunConfig {
    /// The process with its potential attached.
    pub fn process_spec(&self) -> ProcessSpec {
        let mut p = self.process.clone();
        p.potential = self.potential.clone();
        p
    }

    /// Every violated cross-constraint, each naming the condition it encodes.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let proc = self.process_spec();
        errs.extend(proc.check());
        if proc.family == Family::NoseHoover && !(proc.gamma > 0.0) {
            errs.push(format!(
                "process: the Nosé-Hoover thermostat is defined where γ > 0, got γ = {}",
                proc.gamma
            ));
        }
        let dim = self.potential.dim();
        match (&self.domain.set, &self.domain.witness) {
            (DomainSpec::Whole, _) => {}
            (_, None) => errs.push("domain: a witness point in O_V outside the closure of O is required".into()),
            (set, Some(w)) => errs.extend(set.check(&self.potential, Some(w), self.seed)),
        }
        if let Some(l) = &self.lyapunov {
            errs.extend(lyapunov_constraints(l, &proc));
        }
        let est = &self.estimator;
        if !(est.dt > 0.0) || !est.dt.is_finite() {
            errs.push("estimator: dt must be positive".into());
        }
        if !(est.t_max > 0.0) {
            errs.push("estimator: t_max must be positive".into());
        }
        if !est.times.is_empty() && (est.times[0] < 0.0 || est.times.windows(2).any(|w| !(w[0] < w[1]))) {
            errs.push("estimator: times must be nonnegative and increasing".into());
        }
        if let Some(init) = &est.initial {
            errs.extend(init.check(&proc));
        }
        if let Some(fv) = &est.fleming_viot {
            errs.extend(fv.check());
        }
        if let Some(o) = &est.oracle {
            if proc.family != Family::KineticLangevin || dim != 1 {
                errs.push("oracle: the grid oracle covers the one-dimensional kinetic Langevin process only".into());
            }
            if !matches!(&self.domain.set, DomainSpec::Box { lo, .. } if lo.len() == 1) {
                errs.push("oracle: the domain must be a bounded interval".into());
            }
            if o.nx < 4 || o.nv < 4 || !(o.v_cut > 0.0) {
                errs.push("oracle: need nx >= 4, nv >= 4 and v_cut > 0".into());
            }
        }
        if let Some(c) = &est.converge {
            errs.extend(c.nu1.check(&proc).into_iter().map(|e| format!("converge nu1: {e}")));
            errs.extend(c.nu2.check(&proc).into_iter().map(|e| format!("converge nu2: {e}")));
            errs.extend(c.bins.check("converge bins"));
            if c.times.is_empty() || c.times[0] < 0.0 || c.times.windows(2).any(|w| !(w[0] < w[1])) {
                errs.push("converge: times must be nonempty, nonnegative and increasing".into());
            }
        }
        if let Some(p) = &est.phi {
            if p.probes.is_empty() || !(p.t_probe > 0.0) {
                errs.push("phi: need at least one probe and t_probe > 0".into());
            }
            for s in &p.probes {
                if s.x.len() != dim || s.v.len() != dim || s.aux.len() != proc.aux_len() {
                    errs.push(format!("phi: probe {:?} has the wrong shape", s.x));
                }
            }
        }
        errs
    }

    /// Canonical TOML text. Parsing it back yields an equal config.
    pub fn to_canonical_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(vec![format!("serialization failed: {e}")]))
    }

    /// SHA-256 of the canonical JSON form (sorted keys, compact).
    pub fn hash(&self) -> Result<String> {
        let v = serde_json::to_value(self).map_err(|e| Error::Config(vec![e.to_string()]))?;
        Ok(hex(&Sha256::digest(v.to_string().as_bytes())))
    }
}

fn lyapunov_constraints(l: &LyapunovSection, proc: &ProcessSpec) -> Vec<String> {
    let mut errs = Vec::new();
    let d = l.delta;
    match l.family {
        LyapunovFamily::NoseHoover => {
            if proc.family != Family::NoseHoover {
                errs.push("lyapunov: the Nosé-Hoover weight needs the Nosé-Hoover process".into());
            }
            if !(d > 0.5 && d <= 1.0) {
                errs.push(format!("lyapunov: the Nosé-Hoover weight needs δ ∈ (1/2, 1], got δ = {d}"));
            }
        }
        LyapunovFamily::GlRegular | LyapunovFamily::GlSingular => {
            if proc.family != Family::GeneralizedLangevin {
                errs.push("lyapunov: the generalized Langevin weight needs the generalized Langevin process".into());
            }
            if !(d > 0.0 && d <= 1.0) {
                errs.push(format!("lyapunov: the generalized Langevin weight needs (1 - β)/k < δ ≤ 1, got δ = {d}"));
            }
        }
    }
    if l.family == LyapunovFamily::GlRegular && proc.gamma == 0.0 {
        let k = match proc.potential.kind {
            PotentialKind::Quadratic => Some(2.0),
            PotentialKind::PolyConfining => Some(proc.potential.poly_k),
            _ => None,
        };
        if let Some(k) = k {
            if !(k > 1.0 && k <= 2.0) {
                errs.push(format!("lyapunov: γ = 0 requires k ∈ (1, 2], got k = {k}"));
            }
        }
    }
    if let Some(s) = &l.shells {
        if s.n_per_shell == 0 || s.kind.n_shells() == 0 {
            errs.push("lyapunov: the shell plan needs at least one shell and one sample per shell".into());
        }
    }
    errs
}

/// Reads, parses and cross-validates a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
    let errs = cfg.validate();
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    ValidatePotential,
    Simulate,
    Survival,
    FlemingViot,
    VerifyC3,
    Oracle1d,
    Converge,
}

impl Subcommand {
    pub const ALL: [Subcommand; 7] = [
        Subcommand::ValidatePotential,
        Subcommand::Simulate,
        Subcommand::Survival,
        Subcommand::FlemingViot,
        Subcommand::VerifyC3,
        Subcommand::Oracle1d,
        Subcommand::Converge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Subcommand::ValidatePotential => "validate-potential",
            Subcommand::Simulate => "simulate",
            Subcommand::Survival => "survival",
            Subcommand::FlemingViot => "fleming-viot",
            Subcommand::VerifyC3 => "verify-c3",
            Subcommand::Oracle1d => "oracle-1d",
            Subcommand::Converge => "converge",
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subcommand {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Subcommand::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown subcommand '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Cli,
    Env,
    Config,
}

/// Master seed by precedence: command line, then [`SEED_ENV`], then config.
pub fn resolve_seed(cli: Option<u64>, env: Option<&str>, config: u64) -> Result<(u64, SeedSource)> {
    if let Some(s) = cli {
        return Ok((s, SeedSource::Cli));
    }
    if let Some(e) = env {
        let s = e
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::Usage(format!("{SEED_ENV} must be a nonnegative integer, got '{e}'")))?;
        return Ok((s, SeedSource::Env));
    }
    Ok((config, SeedSource::Config))
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    /// Worker threads; the machine default when absent. Outputs do not
    /// depend on it.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub subcommand: Subcommand,
    pub config_hash: String,
    pub master_seed: u64,
    pub seed_source: SeedSource,
    pub versions: serde_json::Value,
    pub outputs: Vec<OutputFile>,
    /// Whether every check performed by the subcommand passed.
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Pretty JSON with object keys in sorted order.
pub fn to_sorted_json<T: Serialize>(v: &T) -> Result<String> {
    let v = serde_json::to_value(v).map_err(|e| Error::Usage(format!("cannot serialize report: {e}")))?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::Usage(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

struct Outputs {
    dir: PathBuf,
    provenance: serde_json::Value,
    files: Vec<OutputFile>,
}

impl Outputs {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.push(OutputFile {
            file: name.to_string(),
            sha256: hex(&Sha256::digest(bytes)),
        });
        Ok(())
    }

    /// JSON report wrapped with its provenance.
    fn json<T: Serialize>(&mut self, name: &str, report: &T) -> Result<()> {
        let body = serde_json::json!({
            "provenance": self.provenance,
            "report": serde_json::to_value(report).map_err(|e| Error::Usage(e.to_string()))?,
        });
        let s = to_sorted_json(&body)?;
        self.write(name, s.as_bytes())
    }

    /// CSV with a leading `#` provenance comment line.
    fn csv<F>(&mut self, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    {
        let p = &self.provenance;
        let mut buf = format!(
            "# config_hash={} master_seed={} manifest={}\n",
            p["config_hash"].as_str().unwrap_or(""),
            p["master_seed"],
            MANIFEST_FILE
        )
        .into_bytes();
        body(&mut buf)?;
        self.write(name, &buf)
    }
}

fn need<'a, T>(v: &'a Option<T>, what: &str, sub: Subcommand) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| Error::Config(vec![format!("{what} is required for `{sub}`")]))
}

fn survival_grid(est: &EstimatorSection) -> Vec<f64> {
    if est.times.is_empty() {
        (1..=20).map(|k| est.t_max * k as f64 / 20.0).collect()
    } else {
        est.times.clone()
    }
}

/// Runs one subcommand and writes its outputs and manifest.
pub fn run_scenario(cfg: &RunConfig, sub: Subcommand, opts: &RunOptions) -> Result<RunResult> {
    let env = std::env::var(SEED_ENV).ok();
    let (seed, source) = resolve_seed(opts.seed, env.as_deref(), cfg.seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?;
    let out_dir = opts
        .out_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    fs::create_dir_all(&out_dir)?;
    let config_hash = cfg.hash()?;
    let mut out = Outputs {
        dir: out_dir.clone(),
        provenance: serde_json::json!({
            "config_hash": config_hash,
            "master_seed": seed,
            "manifest": MANIFEST_FILE,
            "subcommand": sub.as_str(),
        }),
        files: Vec::new(),
    };
    out.write("config.toml", cfg.to_canonical_toml()?.as_bytes())?;
    let pass = pool.install(|| dispatch(cfg, sub, seed, &mut out))?;
    let manifest = Manifest {
        subcommand: sub,
        config_hash,
        master_seed: seed,
        seed_source: source,
        versions: serde_json::json!({
            "qsd-lab": env!("CARGO_PKG_VERSION"),
            "output_format": 1,
        }),
        outputs: out.files,
        pass,
    };
    fs::write(out_dir.join(MANIFEST_FILE), to_sorted_json(&manifest)?)?;
    Ok(RunResult { out_dir, manifest })
}

fn dispatch(cfg: &RunConfig, sub: Subcommand, seed: u64, out: &mut Outputs) -> Result<bool> {
    let proc = cfg.process_spec();
    let domain = &cfg.domain.set;
    let est = &cfg.estimator;
    match sub {
        Subcommand::ValidatePotential => {
            let v = need(&cfg.validate, "[validate]", sub)?;
            let mut plan = v.plan.clone();
            plan.seed = rng::stream_label(seed, "validate", 0);
            let reports = v
                .assumptions
                .iter()
                .map(|a| validate_assumptions(&cfg.potential, a, &plan))
                .collect::<Result<Vec<_>>>()?;
            let pass = reports.iter().all(|r| r.pass);
            out.json("validation.json", &reports)?;
            Ok(pass)
        }
        Subcommand::Simulate => {
            let init = need(&est.initial, "[estimator.initial]", sub)?;
            let mut r = rng::stream(seed, "simulate", 0);
            let s0 = init.sample(&mut r);
            if !domain.contains(&s0.x) {
                return Err(Error::Usage("initial state must lie in D".into()));
            }
            let res = run_until(
                &proc,
                &s0,
                |s| domain.contains(&s.x),
                est.dt,
                est.t_max,
                &mut r,
                est.record_every.max(1),
            )?;
            out.csv("path.csv", |w| {
                use std::io::Write;
                let n = proc.dim();
                let mut head = vec!["t".to_string()];
                head.extend((0..n).map(|i| format!("x{i}")));
                head.extend((0..n).map(|i| format!("v{i}")));
                head.extend((0..proc.aux_len()).map(|i| format!("aux{i}")));
                writeln!(w, "{}", head.join(","))?;
                for (t, s) in res.path_samples.iter().flatten() {
                    let vals: Vec<String> = std::iter::once(*t)
                        .chain(s.x.iter().copied())
                        .chain(s.v.iter().copied())
                        .chain(s.aux.iter().copied())
                        .map(|a| a.to_string())
                        .collect();
                    writeln!(w, "{}", vals.join(","))?;
                }
                Ok(())
            })?;
            let summary = serde_json::json!({
                "initial": s0,
                "outcome": res.outcome,
                "n_steps": res.n_steps,
            });
            out.json("simulate.json", &summary)?;
            let mut pass = true;
            if let Some(eb) = &est.exit_bound {
                let rep = check_exit_bound(&proc, &eb.x0, eb.r_level, eb.t, est.dt, eb.n_traj, seed)?;
                pass = rep.pass;
                out.json("exit_bound.json", &rep)?;
            }
            Ok(pass)
        }
        Subcommand::Survival => {
            let init = need(&est.initial, "[estimator.initial]", sub)?;
            let grid = survival_grid(est);
            let table = survival_curve(|r| init.sample(r), &proc, domain, est.dt, &grid, est.n_traj, seed)?;
            out.csv("survival.csv", |w| write_survival_csv(&table.rows, w))?;
            out.csv("trajectories.csv", |w| write_trajectory_csv(&table.trajectories, w))?;
            let fit = match estimate_decay_rate(&table.rows) {
                Ok(f) => serde_json::json!({ "fit": f }),
                Err(e) => serde_json::json!({ "fit": null, "error": e.to_string() }),
            };
            out.json("decay.json", &fit)?;
            Ok(true)
        }
        Subcommand::FlemingViot => {
            let init = need(&est.initial, "[estimator.initial]", sub)?;
            let fv = need(&est.fleming_viot, "[estimator.fleming_viot]", sub)?;
            let mut rep = match fleming_viot(&proc, domain, init, fv, seed) {
                Ok(r) => r,
                Err(e @ Error::Extinction { .. }) => {
                    eprintln!("fleming-viot: {e}");
                    out.json("extinction.json", &serde_json::json!({ "error": e.to_string() }))?;
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            if let Some(p) = &est.phi {
                rep.phi_probes = phi_probe(&proc, domain, &p.probes, p.t_probe, p.n_traj, rep.lambda_hat, est.dt, seed)?;
            }
            out.json("qsd_report.json", &rep)?;
            for (k, h) in rep.x_marginals.iter().enumerate() {
                out.csv(&format!("x_marginal_{k}.csv"), |w| h.write_csv(w))?;
            }
            for (k, h) in rep.v_marginals.iter().enumerate() {
                out.csv(&format!("v_marginal_{k}.csv"), |w| h.write_csv(w))?;
            }
            Ok(true)
        }
        Subcommand::VerifyC3 => {
            let l = need(&cfg.lyapunov, "[lyapunov]", sub)?;
            let plan = need(&l.shells, "[lyapunov.shells]", sub)?;
            let params = match &l.params {
                Some(p) => p.clone(),
                None => {
                    let mut opts = l.select.clone();
                    opts.seed = rng::stream_label(seed, "lyapunov/select", 0);
                    select_params(l.family, &proc, l.delta, &opts)?
                }
            };
            let rep = verify_c3(&params, &proc, plan, seed)?;
            out.json("c3_report.json", &rep)?;
            Ok(rep.pass)
        }
        Subcommand::Oracle1d => {
            let o = need(&est.oracle, "[estimator.oracle]", sub)?;
            let (lo, hi) = match domain {
                DomainSpec::Box { lo, hi } if lo.len() == 1 => (lo[0], hi[0]),
                _ => return Err(Error::Usage("oracle-1d needs an interval domain".into())),
            };
            let grid = OracleGrid {
                lo,
                hi,
                nx: o.nx,
                nv: o.nv,
                v_cut: o.v_cut,
            };
            let (res, refinement, converged) = if o.refine {
                let r = grid_oracle_refinement(&cfg.potential, proc.gamma, &grid)?;
                let converged = r.converged(GRID_CONVERGENCE);
                let summary = serde_json::json!({
                    "converged": converged,
                    "tolerance": GRID_CONVERGENCE,
                    "grid_change": r.grid_change,
                    "v_cut_change": r.v_cut_change,
                    "refined": r.refined,
                    "widened": r.widened,
                });
                (r.base, Some(summary), converged)
            } else {
                (grid_oracle_kl_1d(&cfg.potential, proc.gamma, &grid)?, None, true)
            };
            let report = serde_json::json!({
                "oracle": res,
                "min_phi": res.min_phi(),
                "min_mu": res.min_mu(),
                "refinement": refinement,
            });
            out.json("oracle.json", &report)?;
            out.csv("oracle_phi.csv", |w| res.write_phi_csv(w))?;
            out.csv("oracle_mu.csv", |w| res.write_mu_csv(w))?;
            Ok(converged && res.min_phi() > 0.0 && res.min_mu() > 0.0)
        }
        Subcommand::Converge => {
            let c = need(&est.converge, "[estimator.converge]", sub)?;
            let rep = conditional_convergence(&proc, domain, &c.nu1, &c.nu2, &c.times, c.n_traj, c.bins, est.dt, seed)?;
            out.csv("convergence.csv", |w| rep.write_csv(w))?;
            out.json("convergence.json", &rep)?;
            Ok(rep.ci.is_some_and(|ci| ci[0] > 0.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[potential]
kind = "quadratic"

[process]
family = "kinetic_langevin"
gamma = 1.0

[domain]
shape = "box"
lo = [-1.0]
hi = [1.0]
witness = [2.0]
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.estimator.dt, 1e-3);
        assert_eq!(cfg.potential.floor, 1.0);
        assert_eq!(cfg.process.lambda_c, 1.0);
    }

    #[test]
    fn canonical_form_is_a_fixed_point() {
        let cfg = parse_config(MINIMAL).unwrap();
        let a = cfg.to_canonical_toml().unwrap();
        let b = parse_config(&a).unwrap().to_canonical_toml().unwrap();
        assert_eq!(a, b);
        assert_eq!(parse_config(&a).unwrap().hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn nose_hoover_without_friction_is_rejected() {
        let text = MINIMAL.replace("kinetic_langevin", "nose_hoover").replace("gamma = 1.0", "gamma = 0.0");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("where γ > 0"), "{err}");
    }

    #[test]
    fn missing_witness_is_rejected() {
        let text = MINIMAL.replace("witness = [2.0]\n", "");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("witness"), "{err}");
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(3), Some("5"), 7).unwrap(), (3, SeedSource::Cli));
        assert_eq!(resolve_seed(None, Some("5"), 7).unwrap(), (5, SeedSource::Env));
        assert_eq!(resolve_seed(None, None, 7).unwrap(), (7, SeedSource::Config));
        assert!(resolve_seed(None, Some("x"), 7).is_err());
    }

    #[test]
    fn subcommand_names_round_trip() {
        for s in Subcommand::ALL {
            assert_eq!(s.as_str().parse::<Subcommand>().unwrap(), s);
        }
    }
}
