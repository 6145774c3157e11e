use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::histogram::{binned_tv, Binning, Counts, Histogram};
use super::PhiProbe;
use crate::error::{Error, Result};
use crate::killed_sim::{DomainSpec, InitialLaw, Stepper};
use crate::processes::{ProcessSpec, State};
use crate::rng::{self, Stream};

/// Particles per parallel work item. Results do not depend on it.
const CHUNK: usize = 256;
pub const MIN_PARTICLES: usize = 10;
pub const CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FvConfig {
    pub n_particles: usize,
    pub dt: f64,
    pub t_burnin: f64,
    pub t_sample: f64,
    #[serde(default = "default_batches")]
    pub n_batches: usize,
    /// Steps between histogram records during the sampling window.
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Ensemble snapshots kept at evenly spaced sampling times.
    #[serde(default)]
    pub n_snapshots: usize,
    /// Binning applied to every position coordinate.
    pub x_bins: Binning,
    /// Binning applied to every velocity coordinate.
    pub v_bins: Binning,
}

fn default_batches() -> usize {
    20
}

fn default_record_every() -> usize {
    10
}

impl FvConfig {
    pub fn check(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.n_particles < MIN_PARTICLES {
            errs.push(format!("fleming-viot: n_particles must be >= {MIN_PARTICLES}"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            errs.push("fleming-viot: dt must be positive".into());
        }
        if !(self.t_burnin >= 0.0) || !(self.t_sample > 0.0) {
            errs.push("fleming-viot: need t_burnin >= 0 and t_sample > 0".into());
        }
        if self.n_batches < 2 {
            errs.push("fleming-viot: n_batches must be >= 2".into());
        }
        if self.record_every == 0 {
            errs.push("fleming-viot: record_every must be >= 1".into());
        }
        if self.dt > 0.0 && ((self.t_sample / self.dt).round() as usize) < self.n_batches.max(2) {
            errs.push("fleming-viot: sampling window shorter than one step per batch".into());
        }
        errs.extend(self.x_bins.check("fleming-viot x_bins"));
        errs.extend(self.v_bins.check("fleming-viot v_bins"));
        errs
    }
}

/// Particle system state between steps.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub states: Vec<State>,
    pub time: f64,
    /// Kills per sampling batch.
    pub kill_history: Vec<u64>,
    /// Index of the particle each one descends from since burn-in ended.
    pub ancestors: Vec<u32>,
    streams: Vec<Stream>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `(sum c)^2 / sum c^2` over ancestor family sizes `c`.
    pub fn effective_sample_size(&self) -> f64 {
        let mut c = vec![0u64; self.len()];
        for &a in &self.ancestors {
            c[a as usize] += 1;
        }
        let s2: f64 = c.iter().map(|&k| (k * k) as f64).sum();
        (self.len() as f64).powi(2) / s2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FvDiagnostics {
    pub effective_sample_size: f64,
    /// Fraction of particles resampled per step during sampling.
    pub resampling_rate: f64,
    /// Largest binned TV between x-marginals of the two halves of the
    /// sampling window.
    pub stationarity_gap: f64,
    pub n_steps: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QsdReport {
    pub lambda_hat: f64,
    pub ci: [f64; 2],
    pub stderr: f64,
    pub confidence: f64,
    pub n_particles: usize,
    pub dt: f64,
    pub t_burnin: f64,
    pub t_sample: f64,
    pub n_kills: u64,
    pub batch_rates: Vec<f64>,
    pub x_marginals: Vec<Histogram>,
    pub v_marginals: Vec<Histogram>,
    pub phi_probes: Vec<PhiProbe>,
    pub diagnostics: FvDiagnostics,
    #[serde(skip)]
    pub ensemble: Option<Ensemble>,
    #[serde(skip)]
    pub snapshots: Vec<Vec<State>>,
}

/// Advances one particle by `dt`, splitting the step when the integrator
/// halves it. Returns whether the particle is still in `D`.
fn advance_particle(
    st: &mut Stepper,
    domain: &DomainSpec,
    s: &mut State,
    tmp: &mut State,
    dt: f64,
    t: f64,
    r: &mut Stream,
) -> Result<bool> {
    let mut tau = 0.0;
    while tau < dt * (1.0 - 1e-12) {
        let used = st.advance(s, dt - tau, t + tau, r, tmp)?;
        std::mem::swap(s, tmp);
        tau += used;
        if !domain.contains(&s.x) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn step_all(proc: &ProcessSpec, domain: &DomainSpec, ens: &mut Ensemble, alive: &mut [bool], dt: f64) -> Result<()> {
    let t = ens.time;
    ens.states
        .par_chunks_mut(CHUNK)
        .zip(ens.streams.par_chunks_mut(CHUNK))
        .zip(alive.par_chunks_mut(CHUNK))
        .try_for_each(|((ss, rs), al)| -> Result<()> {
            let mut st = Stepper::new(proc);
            let mut tmp = ss[0].clone();
            for ((s, r), a) in ss.iter_mut().zip(rs.iter_mut()).zip(al.iter_mut()) {
                *a = advance_particle(&mut st, domain, s, &mut tmp, dt, t, r)?;
            }
            Ok(())
        })
}

/// Replaces every killed particle, in index order, by a copy of a
/// uniformly chosen survivor. Returns the number of kills.
fn resample(ens: &mut Ensemble, alive: &[bool], r: &mut Stream) -> Result<u64> {
    let survivors: Vec<usize> = (0..alive.len()).filter(|&i| alive[i]).collect();
    let kills = alive.len() - survivors.len();
    if kills == 0 {
        return Ok(0);
    }
    if survivors.is_empty() {
        return Err(Error::Extinction {
            n: alive.len(),
            t: ens.time,
        });
    }
    for i in 0..alive.len() {
        if !alive[i] {
            let j = survivors[r.random_range(0..survivors.len())];
            ens.states[i] = ens.states[j].clone();
            ens.ancestors[i] = ens.ancestors[j];
        }
    }
    Ok(kills as u64)
}

/// Initial ensemble: particle `i` draws from stream `i` of `"fv/particle"`
/// and keeps that stream for its whole life.
pub fn initial_ensemble(proc: &ProcessSpec, domain: &DomainSpec, init: &InitialLaw, n: usize, seed: u64) -> Result<Ensemble> {
    let errs = init.check(proc);
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let mut states = Vec::with_capacity(n);
    let mut streams = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = rng::stream(seed, "fv/particle", i as u64);
        let s = init.sample(&mut r);
        if !domain.contains(&s.x) || !proc.potential.in_domain(&s.x) {
            return Err(Error::Usage(format!(
                "initial law must be supported in D; particle {i} drew x = {:?}",
                s.x
            )));
        }
        states.push(s);
        streams.push(r);
    }
    Ok(Ensemble {
        states,
        time: 0.0,
        kill_history: Vec::new(),
        ancestors: (0..n as u32).collect(),
        streams,
    })
}

struct Marginals {
    x: Vec<Counts>,
    v: Vec<Counts>,
}

impl Marginals {
    fn new(dim: usize, cfg: &FvConfig) -> Self {
        Marginals {
            x: (0..dim).map(|_| Counts::new(cfg.x_bins)).collect(),
            v: (0..dim).map(|_| Counts::new(cfg.v_bins)).collect(),
        }
    }

    fn record(&mut self, states: &[State]) {
        for s in states {
            for (c, &a) in self.x.iter_mut().zip(&s.x) {
                c.add(a);
            }
            for (c, &a) in self.v.iter_mut().zip(&s.v) {
                c.add(a);
            }
        }
    }
}

fn t_quantile(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64)
        .map(|d| d.inverse_cdf(0.5 + 0.5 * CONFIDENCE))
        .unwrap_or(f64::INFINITY)
}

/// Fleming-Viot estimate of the quasi-stationary law and decay rate.
///
/// Particles are propagated in parallel, each on its own stream; kills are
/// resampled serially in particle-index order from stream `"fv/resample"`,
/// so the output does not depend on the worker count.
pub fn fleming_viot(proc: &ProcessSpec, domain: &DomainSpec, init: &InitialLaw, cfg: &FvConfig, seed: u64) -> Result<QsdReport> {
    let errs = cfg.check();
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let n = cfg.n_particles;
    let mut ens = initial_ensemble(proc, domain, init, n, seed)?;
    let mut rr = rng::stream(seed, "fv/resample", 0);
    let mut alive = vec![true; n];
    let n_burn = (cfg.t_burnin / cfg.dt).round() as usize;
    let n_samp = (cfg.t_sample / cfg.dt).round() as usize;
    let mut n_steps = 0u64;
    for _ in 0..n_burn {
        step_all(proc, domain, &mut ens, &mut alive, cfg.dt)?;
        ens.time += cfg.dt;
        resample(&mut ens, &alive, &mut rr)?;
        n_steps += 1;
    }
    ens.ancestors = (0..n as u32).collect();
    ens.kill_history = vec![0; cfg.n_batches];
    let dim = proc.dim();
    let mut all = Marginals::new(dim, cfg);
    let mut halves = [Marginals::new(dim, cfg), Marginals::new(dim, cfg)];
    let mut batch_steps = vec![0u64; cfg.n_batches];
    let mut snapshots = Vec::new();
    for k in 0..n_samp {
        step_all(proc, domain, &mut ens, &mut alive, cfg.dt)?;
        ens.time += cfg.dt;
        let kills = resample(&mut ens, &alive, &mut rr)?;
        n_steps += 1;
        let b = k * cfg.n_batches / n_samp;
        ens.kill_history[b] += kills;
        batch_steps[b] += 1;
        if (k + 1) % cfg.record_every == 0 {
            all.record(&ens.states);
            halves[usize::from(2 * k >= n_samp)].record(&ens.states);
        }
        if cfg.n_snapshots > 0 && (k + 1) * cfg.n_snapshots % n_samp < cfg.n_snapshots {
            snapshots.push(ens.states.clone());
        }
    }
    let n_kills: u64 = ens.kill_history.iter().sum();
    let span = n_samp as f64 * cfg.dt;
    let lambda_hat = n_kills as f64 / (n as f64 * span);
    let batch_rates: Vec<f64> = ens
        .kill_history
        .iter()
        .zip(&batch_steps)
        .map(|(&k, &s)| k as f64 / (n as f64 * s as f64 * cfg.dt))
        .collect();
    let nb = batch_rates.len() as f64;
    let mean = batch_rates.iter().sum::<f64>() / nb;
    let var = batch_rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (nb - 1.0);
    let stderr = (var / nb).sqrt();
    let q = t_quantile(batch_rates.len() - 1);
    let mut gap = 0.0f64;
    for (a, b) in halves[0].x.iter().zip(&halves[1].x) {
        gap = gap.max(binned_tv(&a.histogram(), &b.histogram())?);
    }
    let diagnostics = FvDiagnostics {
        effective_sample_size: ens.effective_sample_size(),
        resampling_rate: n_kills as f64 / (n as f64 * n_samp as f64),
        stationarity_gap: gap,
        n_steps,
    };
    Ok(QsdReport {
        lambda_hat,
        ci: [lambda_hat - q * stderr, lambda_hat + q * stderr],
        stderr,
        confidence: CONFIDENCE,
        n_particles: n,
        dt: cfg.dt,
        t_burnin: cfg.t_burnin,
        t_sample: cfg.t_sample,
        n_kills,
        batch_rates,
        x_marginals: all.x.iter().map(Counts::histogram).collect(),
        v_marginals: all.v.iter().map(Counts::histogram).collect(),
        phi_probes: Vec::new(),
        diagnostics,
        ensemble: Some(ens),
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::PotentialSpec;
    use crate::processes::Family;

    fn cfg(n: usize) -> FvConfig {
        FvConfig {
            n_particles: n,
            dt: 1e-2,
            t_burnin: 0.2,
            t_sample: 0.5,
            n_batches: 5,
            record_every: 1,
            n_snapshots: 2,
            x_bins: Binning::new(-1.0, 1.0, 10),
            v_bins: Binning::new(-4.0, 4.0, 10),
        }
    }

    #[test]
    fn count_is_preserved_and_states_stay_inside() {
        let p = ProcessSpec::new(Family::KineticLangevin, 1.0, PotentialSpec::quadratic(1, 1.0, 1.0));
        let d = DomainSpec::interval(-1.0, 1.0);
        let init = InitialLaw::point(&State::zeros(1, 0));
        let rep = fleming_viot(&p, &d, &init, &cfg(64), 3).unwrap();
        let ens = rep.ensemble.as_ref().unwrap();
        assert_eq!(ens.len(), 64);
        assert!(ens.states.iter().all(|s| d.contains(&s.x)));
        assert_eq!(rep.snapshots.len(), 2);
        for h in rep.x_marginals.iter().chain(&rep.v_marginals) {
            assert!((h.total_mass() - 1.0).abs() < 1e-12);
        }
        assert!(rep.lambda_hat > 0.0);
    }

    #[test]
    fn no_absorption_means_no_kills() {
        let p = ProcessSpec::new(Family::KineticLangevin, 1.0, PotentialSpec::quadratic(1, 1.0, 1.0));
        let init = InitialLaw::point(&State::zeros(1, 0));
        let rep = fleming_viot(&p, &DomainSpec::Whole, &init, &cfg(32), 3).unwrap();
        assert_eq!(rep.n_kills, 0);
        assert_eq!(rep.lambda_hat, 0.0);
        assert_eq!(rep.ci, [0.0, 0.0]);
    }

    #[test]
    fn rejects_tiny_ensembles() {
        let p = ProcessSpec::new(Family::KineticLangevin, 1.0, PotentialSpec::quadratic(1, 1.0, 1.0));
        let init = InitialLaw::point(&State::zeros(1, 0));
        let err = fleming_viot(&p, &DomainSpec::Whole, &init, &cfg(5), 3).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
