//! Single-particle Metropolis sampler for `exp(-(β/2) N^{min(2/d-1,0)} H_N)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{dist2, Configuration};
use crate::equilibrium::{equilibrium_measure, PotentialSpec};
use crate::error::{Error, Result};
use crate::kernel::{KernelCase, KernelSpec};

/// Parameters of the Gibbs measure.
#[derive(Clone, Debug)]
pub struct GibbsParams {
    pub beta: f64,
    pub n: usize,
    pub kernel: KernelSpec,
    pub potential: PotentialSpec,
}

impl GibbsParams {
    pub fn new(beta: f64, n: usize, kernel: KernelSpec, potential: PotentialSpec) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("β must be positive, got {beta}")));
        }
        if n == 0 {
            return Err(Error::Domain("need at least one particle".into()));
        }
        Ok(Self { beta, n, kernel, potential })
    }

    /// `N^{min(2/d - 1, 0)}`.
    pub fn normalization(&self) -> f64 {
        let d = self.kernel.dim() as f64;
        (self.n as f64).powf((2.0 / d - 1.0).min(0.0))
    }

    /// Factor multiplying `ΔH` in the log acceptance ratio.
    pub fn energy_scale(&self) -> f64 {
        0.5 * self.beta * self.normalization()
    }
}

/// Sweep schedule. Burn-in is a fraction of `sweeps`; `thin` counts sweeps.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    pub sweeps: usize,
    pub burn_in: f64,
    pub thin: usize,
    pub target_accept: f64,
    /// Initial proposal standard deviation; a multiple of the mean spacing if absent.
    pub initial_step: Option<f64>,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            sweeps: 1000,
            burn_in: 0.2,
            thin: 1,
            target_accept: 0.3,
            initial_step: None,
        }
    }
}

impl Schedule {
    pub fn new(sweeps: usize, thin: usize) -> Self {
        Self { sweeps, thin, ..Self::default() }
    }

    pub fn burn_in_sweeps(&self) -> usize {
        (self.burn_in * self.sweeps as f64).floor() as usize
    }

    fn validate(&self) -> Result<()> {
        if self.sweeps == 0 || self.thin == 0 {
            return Err(Error::Domain("sweeps and thinning must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::Domain("burn-in fraction must lie in [0, 1)".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Domain("target acceptance must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Snapshot of one chain.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub config: Configuration,
    /// Proposal standard deviation per coordinate.
    pub step: Vec<f64>,
    pub accepted: u64,
    pub proposed: u64,
    /// Proposals landing exactly on another particle, rejected.
    pub coincident: u64,
    pub sweep: usize,
    rng: ChaCha8Rng,
    seed: u64,
    stream: u64,
}

impl ChainState {
    pub fn acceptance(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Serializable chain checkpoint; restores the RNG position exactly.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub beta: f64,
    pub n: usize,
    pub kernel: KernelSpec,
    pub a: f64,
    pub schedule: Schedule,
    pub seed: u64,
    pub stream: u64,
    /// ChaCha word position, as a decimal string (it is a `u128`).
    pub word_pos: String,
    pub coords: Vec<f64>,
    pub step: Vec<f64>,
    pub accepted: u64,
    pub proposed: u64,
    pub coincident: u64,
    pub sweep: usize,
    pub post_accepted: u64,
    pub post_proposed: u64,
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Acceptance statistics of a finished run.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ChainReport {
    pub chain: u64,
    pub sweeps: usize,
    pub burn_in: usize,
    pub emitted: usize,
    /// Acceptance over the post-burn-in sweeps.
    pub acceptance: f64,
    pub coincident: u64,
    pub final_step: f64,
}

/// A Metropolis chain.
#[derive(Clone, Debug)]
pub struct Chain {
    params: GibbsParams,
    schedule: Schedule,
    state: ChainState,
    post_accepted: u64,
    post_proposed: u64,
}

pub fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl Chain {
    /// Starts a chain from i.i.d. draws of the equilibrium measure (a Gaussian
    /// cloud when none is available), on RNG stream `chain_index`.
    pub fn new(params: GibbsParams, schedule: Schedule, seed: u64, chain_index: u64) -> Result<Self> {
        schedule.validate()?;
        let mut rng = chain_rng(seed, chain_index);
        let d = params.kernel.dim();
        let n = params.n;
        let mut coords = vec![0.0; n * d];
        let eqm = if params.potential.is_quadratic() {
            equilibrium_measure(&params.potential, params.kernel).ok()
        } else {
            None
        };
        let scale = match &eqm {
            Some(m) => {
                for p in coords.chunks_exact_mut(d) {
                    m.sample_into(&mut rng, p);
                }
                m.radius()
            }
            None => {
                let s = (1.0 / (2.0 * params.potential.a())).sqrt();
                for c in coords.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *c = s * z;
                }
                s
            }
        };
        let spacing = scale * (n as f64).powf(-1.0 / d as f64);
        let step = schedule.initial_step.unwrap_or(0.5 * spacing);
        let config = Configuration::new(d, coords)?;
        Ok(Self {
            params,
            schedule,
            state: ChainState {
                config,
                step: vec![step; d],
                accepted: 0,
                proposed: 0,
                coincident: 0,
                sweep: 0,
                rng,
                seed,
                stream: chain_index,
            },
            post_accepted: 0,
            post_proposed: 0,
        })
    }

    /// Replaces the starting configuration (before any sweep has run).
    pub fn with_start(mut self, config: Configuration) -> Result<Self> {
        if config.n() != self.params.n || config.dim() != self.params.kernel.dim() {
            return Err(Error::Consistency("starting configuration has the wrong shape".into()));
        }
        self.state.config = config;
        Ok(self)
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn params(&self) -> &GibbsParams {
        &self.params
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            beta: self.params.beta,
            n: self.params.n,
            kernel: self.params.kernel,
            a: self.params.potential.a(),
            schedule: self.schedule,
            seed: self.state.seed,
            stream: self.state.stream,
            word_pos: self.state.rng.get_word_pos().to_string(),
            coords: self.state.config.coords().to_vec(),
            step: self.state.step.clone(),
            accepted: self.state.accepted,
            proposed: self.state.proposed,
            coincident: self.state.coincident,
            sweep: self.state.sweep,
            post_accepted: self.post_accepted,
            post_proposed: self.post_proposed,
        }
    }

    /// Resumes from a checkpoint; the continuation is bit-identical to an
    /// uninterrupted run.
    pub fn from_checkpoint(cp: &Checkpoint) -> Result<Self> {
        if cp.version != CHECKPOINT_VERSION {
            return Err(Error::Consistency(format!("unsupported checkpoint version {}", cp.version)));
        }
        let potential = PotentialSpec::quadratic(cp.a)?;
        let params = GibbsParams::new(cp.beta, cp.n, cp.kernel, potential)?;
        let mut rng = chain_rng(cp.seed, cp.stream);
        let pos: u128 = cp
            .word_pos
            .parse()
            .map_err(|_| Error::Consistency("corrupt RNG position in checkpoint".into()))?;
        rng.set_word_pos(pos);
        let config = Configuration::new(cp.kernel.dim(), cp.coords.clone())?;
        if config.n() != cp.n || cp.step.len() != cp.kernel.dim() || cp.sweep > cp.schedule.sweeps {
            return Err(Error::Consistency("checkpoint fields disagree with each other".into()));
        }
        Ok(Self {
            params,
            schedule: cp.schedule,
            state: ChainState {
                config,
                step: cp.step.clone(),
                accepted: cp.accepted,
                proposed: cp.proposed,
                coincident: cp.coincident,
                sweep: cp.sweep,
                rng,
                seed: cp.seed,
                stream: cp.stream,
            },
            post_accepted: cp.post_accepted,
            post_proposed: cp.post_proposed,
        })
    }

    /// `Σ_{j≠k} [g(new - x_j) - g(x_k - x_j)]`, or `None` if `new` hits a particle.
    fn pair_delta(&self, k: usize, new: &[f64]) -> Option<f64> {
        let cfg = &self.state.config;
        let old = cfg.point(k);
        let kernel = &self.params.kernel;
        let n = cfg.n();
        if kernel.is_log() {
            // Σ ½ log(r_old² / r_new²), with one logarithm per block of 8 terms.
            let mut total = 0.0;
            let mut num = 1.0;
            let mut den = 1.0;
            let mut block = [0usize; 8];
            let mut fill = 0;
            let d = cfg.dim();
            for (j, xj) in cfg.coords().chunks_exact(d).enumerate() {
                if j == k {
                    continue;
                }
                let (mut rn, mut ro) = (0.0, 0.0);
                for a in 0..d {
                    let u = new[a] - xj[a];
                    let v = old[a] - xj[a];
                    rn += u * u;
                    ro += v * v;
                }
                if rn == 0.0 {
                    return None;
                }
                num *= ro;
                den *= rn;
                block[fill] = j;
                fill += 1;
                if fill == 8 {
                    total += block_log(num, den, cfg, old, new, &block);
                    num = 1.0;
                    den = 1.0;
                    fill = 0;
                }
            }
            total += block_log(num, den, cfg, old, new, &block[..fill]);
            Some(0.5 * total)
        } else {
            let mut total = 0.0;
            for j in 0..n {
                if j == k {
                    continue;
                }
                let xj = cfg.point(j);
                let rn = dist2(new, xj);
                if rn == 0.0 {
                    return None;
                }
                total += kernel.g_r2(rn) - kernel.g_r2(dist2(old, xj));
            }
            Some(total)
        }
    }

    /// `H_N(x with x_k -> new) - H_N(x)`, or `None` on coincidence.
    pub fn delta_h(&self, k: usize, new: &[f64]) -> Option<f64> {
        let pair = self.pair_delta(k, new)?;
        let v = &self.params.potential;
        let old = self.state.config.point(k);
        Some(2.0 * pair + self.params.n as f64 * (v.eval(new) - v.eval(old)))
    }

    /// `min(1, exp(-(β/2) N^{min(2/d-1,0)} ΔH))` for moving particle `k` to `new`.
    pub fn accept_probability(&self, k: usize, new: &[f64]) -> f64 {
        match self.delta_h(k, new) {
            None => 0.0,
            Some(dh) => (-self.params.energy_scale() * dh).exp().min(1.0),
        }
    }

    /// One systematic sweep; returns the number of accepted moves.
    pub fn sweep(&mut self) -> u64 {
        let d = self.params.kernel.dim();
        let n = self.params.n;
        let scale = self.params.energy_scale();
        let mut new = [0.0; 8];
        let mut acc = 0;
        for k in 0..n {
            for a in 0..d {
                let z: f64 = self.state.rng.sample(StandardNormal);
                new[a] = self.state.config.point(k)[a] + self.state.step[a] * z;
            }
            let u: f64 = self.state.rng.random();
            self.state.proposed += 1;
            match self.delta_h(k, &new[..d]) {
                None => self.state.coincident += 1,
                Some(dh) => {
                    if u < (-scale * dh).exp() {
                        self.state.config.coords_mut()[k * d..(k + 1) * d].copy_from_slice(&new[..d]);
                        acc += 1;
                    }
                }
            }
        }
        self.state.accepted += acc;
        self.state.sweep += 1;
        acc
    }

    /// Runs the remaining sweeps of the schedule, calling `observe` at each
    /// emitted (post-burn-in, thinned) state.
    pub fn run<F: FnMut(&ChainState)>(&mut self, observe: F) -> ChainReport {
        self.run_until(self.schedule.sweeps, observe)
    }

    /// Like [`Chain::run`] but stops after sweep `stop` (capped by the schedule).
    pub fn run_until<F: FnMut(&ChainState)>(&mut self, stop: usize, mut observe: F) -> ChainReport {
        let burn = self.schedule.burn_in_sweeps();
        let n = self.params.n as f64;
        let stop = stop.min(self.schedule.sweeps);
        let mut emitted = 0;
        while self.state.sweep < stop {
            let acc = self.sweep();
            let s = self.state.sweep;
            if s <= burn {
                // Robbins–Monro on the log step, frozen after burn-in.
                let rate = acc as f64 / n;
                let gain = (1.0 + s as f64).powf(-0.6);
                let f = (gain * (rate - self.schedule.target_accept)).exp();
                for st in self.state.step.iter_mut() {
                    *st *= f;
                }
            } else {
                self.post_accepted += acc;
                self.post_proposed += self.params.n as u64;
                if (s - burn) % self.schedule.thin == 0 {
                    observe(&self.state);
                    emitted += 1;
                }
            }
        }
        ChainReport {
            chain: self.state.stream,
            sweeps: self.state.sweep,
            burn_in: burn,
            emitted,
            acceptance: if self.post_proposed > 0 {
                self.post_accepted as f64 / self.post_proposed as f64
            } else {
                self.state.acceptance()
            },
            coincident: self.state.coincident,
            final_step: self.state.step[0],
        }
    }
}

#[inline]
fn block_log(num: f64, den: f64, cfg: &Configuration, old: &[f64], new: &[f64], block: &[usize]) -> f64 {
    if block.is_empty() {
        return 0.0;
    }
    if num.is_normal() && den.is_normal() {
        let ratio = num / den;
        if ratio.is_normal() {
            return ratio.ln();
        }
    }
    // The products left the floating range; redo the block term by term.
    block
        .iter()
        .map(|&j| (dist2(old, cfg.point(j)) / dist2(new, cfg.point(j))).ln())
        .sum()
}

/// Runs the chain and collects every emitted configuration.
pub fn mcmc_run(params: &GibbsParams, schedule: Schedule, seed: u64, chain_index: u64) -> Result<(Vec<Configuration>, ChainReport)> {
    let mut chain = Chain::new(params.clone(), schedule, seed, chain_index)?;
    let mut out = Vec::new();
    let report = chain.run(|s| out.push(s.config.clone()));
    Ok((out, report))
}

/// Runs `chains` independent chains (streams `0..chains`) in parallel, reducing
/// each emitted state with `observe` into a per-chain record; results are in
/// chain order regardless of scheduling.
pub fn run_chains<T, F>(params: &GibbsParams, schedule: Schedule, seed: u64, chains: u64, observe: F) -> Result<Vec<(Vec<T>, ChainReport)>>
where
    T: Send,
    F: Fn(&ChainState) -> T + Sync,
{
    (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut chain = Chain::new(params.clone(), schedule, seed, c)?;
            let mut out = Vec::new();
            let report = chain.run(|s| out.push(observe(s)));
            Ok((out, report))
        })
        .collect()
}

/// Whether the kernel is one the sampler has an oracle for at `β = 2`.
pub fn has_oracle(kernel: &KernelSpec) -> bool {
    matches!(kernel.case(), KernelCase::Log1 | KernelCase::Log2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::hamiltonian;

    fn params(kernel: KernelSpec, a: f64, beta: f64, n: usize) -> GibbsParams {
        GibbsParams::new(beta, n, kernel, PotentialSpec::quadratic(a).unwrap()).unwrap()
    }

    #[test]
    fn normalization_exponent() {
        assert_eq!(params(KernelSpec::log1(), 0.5, 2.0, 64).normalization(), 1.0);
        assert_eq!(params(KernelSpec::log2(), 1.0, 2.0, 64).normalization(), 1.0);
        let p = params(KernelSpec::coulomb(3).unwrap(), 1.0, 2.0, 64);
        assert!((p.normalization() - 64f64.powf(-1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn detailed_balance_two_particles() {
        for (k, a, d) in [
            (KernelSpec::log2(), 1.0, 2),
            (KernelSpec::log1(), 0.5, 1),
            (KernelSpec::coulomb(3).unwrap(), 1.0, 3),
        ] {
            let p = params(k, a, 1.7, 2);
            let chain = Chain::new(p.clone(), Schedule::default(), 5, 0).unwrap();
            let cfg = chain.state().config.clone();
            let new: Vec<f64> = cfg.point(1).iter().map(|v| v + 0.13).collect();
            let mut moved = cfg.coords().to_vec();
            moved[d..2 * d].copy_from_slice(&new);
            let moved = Configuration::new(d, moved).unwrap();
            let dh = hamiltonian(&moved, &p.potential, &k).unwrap() - hamiltonian(&cfg, &p.potential, &k).unwrap();
            let expected = (-0.5 * p.beta * p.normalization() * dh).exp().min(1.0);
            assert!((chain.accept_probability(1, &new) - expected).abs() < 1e-12);
            assert!((chain.delta_h(1, &new).unwrap() - dh).abs() < 1e-12 * dh.abs().max(1.0));
        }
    }

    #[test]
    fn log_delta_matches_direct_for_many_points() {
        let p = params(KernelSpec::log2(), 1.0, 2.0, 37);
        let chain = Chain::new(p.clone(), Schedule::default(), 9, 0).unwrap();
        let cfg = chain.state().config.clone();
        for k in [0, 17, 36] {
            let new = [cfg.point(k)[0] * 0.9 + 0.01, cfg.point(k)[1] - 0.02];
            let mut moved = cfg.coords().to_vec();
            moved[2 * k..2 * k + 2].copy_from_slice(&new);
            let moved = Configuration::new(2, moved).unwrap();
            let dh = hamiltonian(&moved, &p.potential, &p.kernel).unwrap() - hamiltonian(&cfg, &p.potential, &p.kernel).unwrap();
            assert!((chain.delta_h(k, &new).unwrap() - dh).abs() < 1e-9);
        }
        let hit = cfg.point(3).to_vec();
        assert!(chain.delta_h(0, &hit).is_none());
        assert_eq!(chain.accept_probability(0, &hit), 0.0);
    }

    #[test]
    fn one_particle_marginal_is_gaussian() {
        // N = 1, V = x²/2, β = 2: density ∝ exp(-x²/2).
        let p = params(KernelSpec::log1(), 0.5, 2.0, 1);
        let sched = Schedule { sweeps: 125_000, thin: 1, initial_step: Some(2.0), ..Schedule::default() };
        let mut xs = Vec::new();
        let mut chain = Chain::new(p, sched, 11, 0).unwrap();
        let rep = chain.run(|s| xs.push(s.config.point(0)[0]));
        assert!(xs.len() >= 100_000);
        assert!((0.2..=0.5).contains(&rep.acceptance), "acceptance {}", rep.acceptance);
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        use statrs::distribution::ContinuousCDF;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| (normal.cdf(x) - i as f64 / n).abs().max((normal.cdf(x) - (i + 1) as f64 / n).abs()))
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "sup distance {ks}");
    }

    #[test]
    fn reproducible_and_resumable() {
        let p = params(KernelSpec::log2(), 1.0, 2.0, 12);
        let sched = Schedule::new(60, 3);
        let (a, rep_a) = mcmc_run(&p, sched, 42, 2).unwrap();
        let (b, _) = mcmc_run(&p, sched, 42, 2).unwrap();
        assert_eq!(a, b);
        for stop in [5, 30] {
            let mut first = Chain::new(p.clone(), sched, 42, 2).unwrap();
            let mut emitted = Vec::new();
            first.run_until(stop, |s| emitted.push(s.config.clone()));
            let json = serde_json::to_string(&first.checkpoint()).unwrap();
            let cp: Checkpoint = serde_json::from_str(&json).unwrap();
            assert_eq!(cp, first.checkpoint());
            let mut resumed = Chain::from_checkpoint(&cp).unwrap();
            let rep = resumed.run(|s| emitted.push(s.config.clone()));
            assert_eq!(emitted, a);
            assert_eq!(rep.acceptance, rep_a.acceptance);
        }
    }

    #[test]
    fn chains_are_order_deterministic() {
        let p = params(KernelSpec::log1(), 0.5, 2.0, 6);
        let sched = Schedule::new(40, 5);
        let r1 = run_chains(&p, sched, 7, 3, |s| s.config.point(0)[0]).unwrap();
        let r2 = run_chains(&p, sched, 7, 3, |s| s.config.point(0)[0]).unwrap();
        let v1: Vec<_> = r1.iter().map(|r| r.0.clone()).collect();
        let v2: Vec<_> = r2.iter().map(|r| r.0.clone()).collect();
        assert_eq!(v1, v2);
        assert_ne!(v1[0], v1[1]);
    }
}
