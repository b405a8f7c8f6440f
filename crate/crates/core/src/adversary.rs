//! Attacks on the ballots.
//!
//! A cheating voter against the anti-cheat scheme (phase estimation of the voting
//! qudits followed by `s` applications of `U(theta'_y, theta'_n)`), eavesdroppers on
//! the traveling and distributed ballots, the pair check that exposes the swap
//! attack, and an eavesdropper on the classical zero-sum baseline.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::anticheat::{AntiCheatConfig, AuthoritySecrets, Choice, ROutcome, ReadoutResult, Session, VoterTranscriptEntry};
use crate::backend::{sample_index, Backend, QuantumState};
use crate::branch::BranchState;
use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::measurement::{Projector, ProjectiveMeasurement};
use crate::protocols::{ghz_phase_readout, traveling_readout, zero_sum_ballots};
use crate::rng::SimRng;
use crate::scalar::{cis, wrap_angle, Scalar, C};
use crate::state::ops;

/// Smallest inverse-CDF grid used by [`PhaseSampler`].
pub const MIN_GRID: usize = 4096;
/// Largest grid; doubling stops here even if the tolerance is not met.
pub const MAX_GRID: usize = 1 << 20;
/// Target for the gap between the phase-error CDF and its linear interpolant.
pub const GRID_TOLERANCE: f64 = 1e-7;

/// `p(x) = (1/2 pi D) |sum_j e^{i j x}|^2` for the estimation error `x = theta' - theta`.
pub fn phase_error_density(dim: usize, x: f64) -> f64 {
    let d = dim as f64;
    let mut s = 1.0;
    for n in 1..dim {
        s += 2.0 * (1.0 - n as f64 / d) * (n as f64 * x).cos();
    }
    s / TAU
}

/// `CDF(x) = (1/2 pi) [x + 2 sum_{n=1}^{D-1} (1 - n/D) sin(n x) / n]` on `[0, 2 pi]`.
pub fn phase_error_cdf(dim: usize, x: f64) -> f64 {
    let d = dim as f64;
    let mut s = x;
    for n in 1..dim {
        let nf = n as f64;
        s += 2.0 * (1.0 - nf / d) * (nf * x).sin() / nf;
    }
    s / TAU
}

/// `E[e^{i k x}]` under the phase-error density.
fn fejer_char(dim: usize, k: i64) -> f64 {
    let a = k.unsigned_abs() as f64 / dim as f64;
    if a < 1.0 {
        1.0 - a
    } else {
        0.0
    }
}

/// Inverse-CDF sampler for the phase-estimation error, on a uniform grid with
/// linear interpolation.
#[derive(Debug, Clone)]
pub struct PhaseSampler {
    dim: usize,
    cdf: Vec<f64>,
}

impl PhaseSampler {
    /// Starts from [`MIN_GRID`] cells and doubles until the interpolation error is
    /// below [`GRID_TOLERANCE`] or the grid reaches [`MAX_GRID`].
    pub fn new(dim: usize) -> Result<Self> {
        let mut n = MIN_GRID;
        loop {
            let s = Self::with_grid(dim, n)?;
            if n >= MAX_GRID || s.interpolation_error() <= GRID_TOLERANCE {
                return Ok(s);
            }
            n *= 2;
        }
    }

    pub fn with_grid(dim: usize, cells: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension("phase estimation needs D >= 1".into()));
        }
        if cells < 2 {
            return Err(Error::Precondition("the sampling grid needs at least 2 cells".into()));
        }
        let h = TAU / cells as f64;
        let mut cdf = Vec::with_capacity(cells + 1);
        let mut running: f64 = 0.0;
        for i in 0..=cells {
            // Rounding can make the analytic CDF dip near zeros of the density.
            running = running.max(phase_error_cdf(dim, i as f64 * h));
            cdf.push(running);
        }
        cdf[0] = 0.0;
        cdf[cells] = 1.0;
        Ok(Self { dim, cdf })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> usize {
        self.cdf.len() - 1
    }

    fn step(&self) -> f64 {
        TAU / self.cells() as f64
    }

    /// Largest gap between the CDF and the interpolant at the cell midpoints.
    pub fn interpolation_error(&self) -> f64 {
        let h = self.step();
        (0..self.cells())
            .map(|i| {
                let exact = phase_error_cdf(self.dim, (i as f64 + 0.5) * h);
                (exact - 0.5 * (self.cdf[i] + self.cdf[i + 1])).abs()
            })
            .fold(0.0, f64::max)
    }

    /// One draw of `x = theta' - theta` in `[0, 2 pi)`.
    pub fn sample_offset(&self, rng: &mut SimRng) -> f64 {
        let u = rng.uniform();
        let n = self.cells();
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, n);
        let (lo, hi) = (self.cdf[i - 1], self.cdf[i]);
        let t = if hi > lo { (u - lo) / (hi - lo) } else { 0.5 };
        ((i - 1) as f64 + t) * self.step()
    }
}

/// The phase-estimation POVM `E(theta') = (D / 2 pi) |Phi(theta')><Phi(theta')|`
/// applied to `|psi(theta_true)>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePOVM {
    pub dim: usize,
    pub theta_true: f64,
}

impl PhasePOVM {
    pub fn new(dim: usize, theta_true: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension("phase estimation needs D >= 1".into()));
        }
        if !theta_true.is_finite() {
            return Err(Error::Precondition("theta must be finite".into()));
        }
        Ok(Self { dim, theta_true })
    }

    pub fn density(&self, theta_est: f64) -> f64 {
        phase_error_density(self.dim, theta_est - self.theta_true)
    }

    /// Probability that the estimate lies in `[theta_true, theta_true + x)` for `x` in `[0, 2 pi]`.
    pub fn cdf_offset(&self, x: f64) -> f64 {
        phase_error_cdf(self.dim, x)
    }

    /// Trapezoid integral of the density over one period.
    pub fn normalization(&self, points: usize) -> f64 {
        let h = TAU / points as f64;
        (0..points).map(|i| self.density(i as f64 * h)).sum::<f64>() * h
    }

    /// Draws an estimate in `[0, 2 pi)`.
    pub fn sample(&self, sampler: &PhaseSampler, rng: &mut SimRng) -> Result<f64> {
        if sampler.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: sampler.dim() });
        }
        Ok(wrap_angle(self.theta_true + sampler.sample_offset(rng)))
    }
}

/// `p(q | r, m, theta'_y, theta'_n)` for a cheater who votes `no` with their estimate
/// and applies `U(theta'_y, theta'_n)` `s` times, after `m` honest `yes` votes.
#[allow(clippy::too_many_arguments)]
pub fn conditional_pq<T: Scalar>(
    dim: usize,
    secrets: &AuthoritySecrets<T>,
    s: usize,
    m: usize,
    q: usize,
    r: usize,
    theta_y_est: T,
    theta_n_est: T,
) -> T {
    let d = T::from_usize_lossy(dim);
    let theta_y = secrets.theta(Choice::Yes, dim);
    let theta_n = secrets.theta(Choice::No, dim);
    let phi = T::from_usize_lossy(m) * (theta_y - theta_n) - theta_n - T::TAU() * T::from_usize_lossy(q) / d;
    let beta = T::from_usize_lossy(s) * (theta_n_est - theta_y_est) + theta_n_est + phi;
    let lead = cis(d * (theta_n_est - secrets.delta));
    let mut head = C::new(T::zero(), T::zero());
    let mut tail = C::new(T::zero(), T::zero());
    for j in 0..dim {
        let term = cis(T::from_usize_lossy(j) * beta);
        if j < r {
            head += term;
        } else {
            tail += term;
        }
    }
    (lead * head + tail).norm_sqr() / (d * d)
}

/// `p(q | r, m)`: the conditional averaged over both estimate distributions.
///
/// Exact for any `s`, `r` and secrets with `(l_y - l_n) = step`; the cheater's `yes`
/// count `m` may be any integer.
pub fn exact_pq_given_r(dim: usize, step: usize, s: usize, m: usize, q: usize, r: usize) -> f64 {
    let d = dim as i64;
    let psi = TAU * ((m as i64 - s as i64) * step as i64 - q as i64) as f64 / dim as f64;
    let (s, r) = (s as i64, r as i64);
    let mut total = 0.0;
    for j in 0..d {
        for k in 0..d {
            let n = j - k;
            let eps = i64::from(j < r) - i64::from(k < r);
            total += (n as f64 * psi).cos() * fejer_char(dim, n * (s + 1) + d * eps) * fejer_char(dim, n * s);
        }
    }
    total / (dim * dim) as f64
}

/// `p(q | m)`, averaging [`exact_pq_given_r`] over the uniform distribution of `r`.
pub fn exact_pq(dim: usize, step: usize, s: usize, m: usize, q: usize) -> f64 {
    (0..dim).map(|r| exact_pq_given_r(dim, step, s, m, q, r)).sum::<f64>() / dim as f64
}

fn check_regime(dim: usize, s: usize, m: usize) -> Result<()> {
    if dim < 3 || 2 * s <= dim || s >= dim {
        return Err(Error::OutOfRegime(format!("needs D/2 < s <= D-1, got D={dim}, s={s}")));
    }
    if m >= dim {
        return Err(Error::OutOfRegime(format!("m={m} must be below D={dim}")));
    }
    Ok(())
}

/// Closed form of `p(q | r, m)` for `D = N + 1`, `l_y = 1`, `l_n = 0` and `D/2 < s <= D-1`.
///
/// Independent of `r` for `r >= 1`; see [`exact_pq_given_r`] for `r = 0`.
pub fn analytic_pq(dim: usize, s: usize, m: usize, q: usize) -> Result<f64> {
    check_regime(dim, s, m)?;
    if q >= dim {
        return Err(Error::Precondition(format!("q={q} must be below D={dim}")));
    }
    let (d, sf) = (dim as f64, s as f64);
    let c = 2.0 * (d - sf) * ((d - 2.0) * (d - sf - 1.0) + (sf + 1.0)) / (d * d * d);
    let angle = TAU * (m as f64 - sf - q as f64) / d;
    Ok((1.0 + c * angle.cos()) / d)
}

/// [`analytic_pq`] for every `q`.
pub fn analytic_distribution(dim: usize, s: usize, m: usize) -> Result<Vec<f64>> {
    (0..dim).map(|q| analytic_pq(dim, s, m, q)).collect()
}

/// What the cheater did in one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheaterPlan {
    pub s: usize,
    pub theta_y: f64,
    pub theta_n: f64,
    pub r: usize,
}

/// Where the cheater's angle estimates come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimates {
    /// Phase-estimation measurements on the two voting qudits.
    Sampled,
    Fixed { theta_y: f64, theta_n: f64 },
}

/// An anti-cheat round with one dishonest voter.
#[derive(Debug, Clone)]
pub struct CheaterScenario<T> {
    pub config: AntiCheatConfig<T>,
    pub honest_votes: Vec<usize>,
    pub cheater: usize,
    pub s: usize,
}

impl<T: Scalar> CheaterScenario<T> {
    /// `honest_votes` lists the other `N - 1` voters in order.
    pub fn new(config: AntiCheatConfig<T>, honest_votes: Vec<usize>, cheater: usize, s: usize) -> Result<Self> {
        config.validate()?;
        let n = config.voters;
        if honest_votes.len() + 1 != n {
            return Err(Error::DimensionMismatch { expected: n - 1, found: honest_votes.len() });
        }
        if honest_votes.iter().any(|&v| v > 1) {
            return Err(Error::Precondition("honest votes must be 0 (no) or 1 (yes)".into()));
        }
        if cheater >= n {
            return Err(Error::Precondition(format!("cheater {cheater} is not one of the {n} voters")));
        }
        if s == 0 {
            return Err(Error::Precondition("s = 0 is an honest no vote, not an attack".into()));
        }
        if s >= config.dim {
            return Err(Error::Precondition(format!("s={s} must be below D={}", config.dim)));
        }
        Ok(Self { config, honest_votes, cheater, s })
    }

    /// Number of honest `yes` votes.
    pub fn yes_count(&self) -> usize {
        self.honest_votes.iter().sum()
    }

    fn honest_vote(&self, voter: usize) -> usize {
        self.honest_votes[if voter < self.cheater { voter } else { voter - 1 }]
    }
}

/// One round with a cheater: their plan, the readout outcome and the transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheaterRun {
    pub plan: CheaterPlan,
    pub r_probability: f64,
    pub outcome: usize,
    pub readout: ReadoutResult,
    pub transcript: Vec<VoterTranscriptEntry>,
}

/// Votes `no` with `|psi(theta'_n)>` and applies `U(theta'_y, theta'_n)^s` to the ballot.
fn cheat<S: QuantumState<T>, T: Scalar>(
    session: &mut Session<S, T>,
    voter: usize,
    s: usize,
    theta_y_est: T,
    theta_n_est: T,
    outcome: ROutcome<'_>,
) -> Result<(usize, T)> {
    let d = session.dim();
    let (r, p) = session.vote_with_angle(voter, theta_n_est, None, outcome)?;
    let angle = T::from_usize_lossy(s) * (theta_n_est - theta_y_est);
    session.apply_to_ballot(voter, &ops::phase_ramp(d, angle))?;
    Ok((r, p))
}

fn estimates<T: Scalar>(
    secrets: &AuthoritySecrets<T>,
    dim: usize,
    how: Estimates,
    sampler: &PhaseSampler,
    rng: &mut SimRng,
) -> Result<(f64, f64)> {
    match how {
        Estimates::Fixed { theta_y, theta_n } => Ok((theta_y, theta_n)),
        Estimates::Sampled => {
            let y = PhasePOVM::new(dim, secrets.theta(Choice::Yes, dim).to_f64_lossy())?.sample(sampler, rng)?;
            let n = PhasePOVM::new(dim, secrets.theta(Choice::No, dim).to_f64_lossy())?.sample(sampler, rng)?;
            Ok((y, n))
        }
    }
}

/// Plays the round up to the authority corrections.
fn play<S: QuantumState<T>, T: Scalar>(
    scn: &CheaterScenario<T>,
    how: Estimates,
    forced_r: Option<usize>,
    sampler: &PhaseSampler,
    rng: &mut SimRng,
) -> Result<(Session<S, T>, CheaterPlan, f64)> {
    let mut session = Session::<S, T>::setup(&scn.config, rng)?;
    let mut plan = None;
    for voter in 0..scn.config.voters {
        if voter == scn.cheater {
            let (ty, tn) = estimates(session.secrets(), scn.config.dim, how, sampler, rng)?;
            let outcome = match forced_r {
                Some(r) => ROutcome::Forced(r),
                None => ROutcome::Sample(rng),
            };
            let (r, p) = cheat(&mut session, voter, scn.s, T::lit(ty), T::lit(tn), outcome)?;
            plan = Some((CheaterPlan { s: scn.s, theta_y: ty, theta_n: tn, r }, p.to_f64_lossy()));
        } else {
            session.vote(voter, Choice::from_bit(scn.honest_vote(voter)), rng)?;
        }
    }
    session.authority_correct()?;
    let (plan, p) = plan.expect("the cheater is one of the voters");
    Ok((session, plan, p))
}

fn cheater_round<S: QuantumState<T>, T: Scalar>(
    scn: &CheaterScenario<T>,
    how: Estimates,
    sampler: &PhaseSampler,
    rng: &mut SimRng,
) -> Result<CheaterRun> {
    let (session, plan, r_probability) = play::<S, T>(scn, how, None, sampler, rng)?;
    let dist = session.readout_distribution()?;
    let outcome = sample_index(&dist, rng);
    let readout = ReadoutResult::interpret(outcome, scn.config.dim, session.secrets().step(), scn.config.voters);
    Ok(CheaterRun { plan, r_probability, outcome, readout, transcript: session.transcript().to_vec() })
}

/// Runs one round of the anti-cheat protocol with a cheating voter.
pub fn run_cheater_attack<T: Scalar>(
    scn: &CheaterScenario<T>,
    how: Estimates,
    backend: Backend,
    sampler: &PhaseSampler,
    rng: &mut SimRng,
) -> Result<CheaterRun> {
    if sampler.dim() != scn.config.dim {
        return Err(Error::DimensionMismatch { expected: scn.config.dim, found: sampler.dim() });
    }
    dispatch!(backend, cheater_round, scn, how, sampler, rng)
}

fn conditional_round<S: QuantumState<T>, T: Scalar>(
    scn: &CheaterScenario<T>,
    how: Estimates,
    r: usize,
    sampler: &PhaseSampler,
) -> Result<Vec<T>> {
    // The honest r values are corrected away, so the stream choice is immaterial.
    let mut rng = SimRng::new(0);
    let (session, _, _) = play::<S, T>(scn, how, Some(r), sampler, &mut rng)?;
    session.readout_distribution()
}

/// Readout distribution (`q = 0..D-1`, then the error outcome) for fixed estimates
/// and a forced `r`, by direct simulation. Requires a fixed `delta`.
pub fn cheater_conditional<T: Scalar>(
    scn: &CheaterScenario<T>,
    theta_y_est: f64,
    theta_n_est: f64,
    r: usize,
    backend: Backend,
) -> Result<Vec<T>> {
    if scn.config.delta.is_none() {
        return Err(Error::Precondition("the conditional distribution needs a fixed delta".into()));
    }
    let sampler = PhaseSampler::with_grid(scn.config.dim, 2)?;
    let how = Estimates::Fixed { theta_y: theta_y_est, theta_n: theta_n_est };
    dispatch!(backend, conditional_round, scn, how, r, &sampler)
}

/// Counts over `0..bins`; anything else is tallied as rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: Vec<u64>,
    pub rejected: u64,
}

impl Histogram {
    pub fn new(bins: usize) -> Self {
        Self { counts: vec![0; bins], rejected: 0 }
    }

    pub fn record(&mut self, value: usize) {
        match self.counts.get_mut(value) {
            Some(c) => *c += 1,
            None => self.rejected += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.rejected
    }

    /// Relative frequencies of the bins (all zero when empty).
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.total();
        self.counts.iter().map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 }).collect()
    }

    pub fn tv_distance(&self, p: &[f64]) -> f64 {
        tv_distance(&self.frequencies(), p)
    }

    /// The most frequent bin (lowest on ties).
    pub fn mode(&self) -> Option<usize> {
        let max = *self.counts.iter().max()?;
        if max == 0 {
            return None;
        }
        self.counts.iter().position(|&c| c == max)
    }
}

/// `(1/2) sum |p_i - q_i|`, with missing entries read as zero.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    0.5 * (0..n)
        .map(|i| (p.get(i).copied().unwrap_or(0.0) - q.get(i).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// Histogram of the authority's `q` with a cheater voting last, in the closed-form
/// regime (`N = D - 1`, `l_y = 1`, `l_n = 0`).
///
/// Each trial starts from the ballot the cheater receives after `m` honest `yes`
/// votes and `N - 1 - m` honest `no` votes have been cast and corrected, then
/// runs the cheater's steps, the corrections and the readout on the branch backend.
/// Trial `t` uses `rng.split(t)` and draws a fresh `delta`.
pub fn monte_carlo_pq<T: Scalar>(dim: usize, s: usize, m: usize, trials: u64, rng: &SimRng) -> Result<Histogram> {
    check_regime(dim, s, m)?;
    let voters = dim - 1;
    let config = AntiCheatConfig::<T>::new(dim, voters, 1, 0);
    let sampler = PhaseSampler::new(dim)?;
    let ghz = BranchState::<T>::ghz(dim, 2 * voters - 1)?;
    let mut hist = Histogram::new(dim);
    for t in 0..trials {
        let mut trng = rng.split(t);
        let delta = AuthoritySecrets::<T>::random_delta(dim, &mut trng);
        let secrets = AuthoritySecrets::new(1, 0, delta, dim, voters)?;
        let no_votes = T::from_f64(voters as f64 - 1.0 - m as f64).expect("small integer");
        let phase = T::from_usize_lossy(m) * secrets.theta(Choice::Yes, dim) + no_votes * secrets.theta(Choice::No, dim);
        let xi = ghz.apply_local(0, &ops::phase_ramp(dim, phase))?;
        let mut session = Session::resume(&config, secrets, xi, voters - 1)?;
        let (ty, tn) = estimates(&secrets, dim, Estimates::Sampled, &sampler, &mut trng)?;
        cheat(&mut session, voters - 1, s, T::lit(ty), T::lit(tn), ROutcome::Sample(&mut trng))?;
        session.authority_correct()?;
        let dist = session.readout_distribution()?;
        hist.record(sample_index(&dist, &mut trng));
    }
    Ok(hist)
}

/// Attack families reported by the runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    Cheater,
    Mitm,
    Swap,
    Entangling,
    ClassicalEavesdrop,
}

impl AttackKind {
    pub const ALL: [AttackKind; 5] =
        [AttackKind::Cheater, AttackKind::Mitm, AttackKind::Swap, AttackKind::Entangling, AttackKind::ClassicalEavesdrop];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Cheater => "cheater",
            AttackKind::Mitm => "mitm",
            AttackKind::Swap => "swap",
            AttackKind::Entangling => "entangling",
            AttackKind::ClassicalEavesdrop => "classical-eavesdrop",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown attack '{s}' (expected one of cheater, mitm, swap, entangling, classical-eavesdrop)"))
    }
}

/// Shared knobs of the eavesdropping experiments.
///
/// Attack ballots only need `D >= 2`; tallies are reported mod `D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackParams {
    pub dim: usize,
    pub trials: u64,
    pub seed: u64,
    pub backend: Backend,
    /// Whether the eavesdropper restores the vote she intercepted.
    pub repair: bool,
}

impl AttackParams {
    pub fn new(dim: usize) -> Self {
        Self { dim, trials: 1, seed: 0, backend: Backend::Branch, repair: true }
    }

    pub fn with_trials(mut self, trials: u64) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_repair(mut self, repair: bool) -> Self {
        self.repair = repair;
        self
    }

    fn check(&self, votes: &[usize], target: usize) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidDimension(format!("attack ballots need D >= 2, got {}", self.dim)));
        }
        if votes.is_empty() {
            return Err(Error::Precondition("at least one voter is required".into()));
        }
        if votes.iter().any(|&v| v > 1) {
            return Err(Error::Precondition("votes must be 0 (no) or 1 (yes)".into()));
        }
        if target >= votes.len() {
            return Err(Error::Precondition(format!("target {target} is not one of the {} voters", votes.len())));
        }
        Ok(())
    }
}

/// One attacked round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackTrial {
    pub index: u64,
    pub detected: bool,
    /// The eavesdropper's guess of the target's vote.
    pub leaked_vote: Option<usize>,
    pub true_vote: usize,
    /// The eavesdropper's raw measurement outcome.
    pub outcome: Option<usize>,
    /// Tally read by the authority, if the round was not aborted.
    pub tally: Option<usize>,
    pub expected_tally: usize,
}

/// Per-trial outcomes and summary statistics of an attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub kind: AttackKind,
    pub dim: usize,
    pub seed: u64,
    pub trials: Vec<AttackTrial>,
    /// Counts of the eavesdropper's outcomes.
    pub histogram: Vec<u64>,
    /// Predicted per-round detection probability, where one is known.
    pub analytic_detection: Option<f64>,
}

impl AttackReport {
    fn new(kind: AttackKind, dim: usize, seed: u64, analytic_detection: Option<f64>) -> Self {
        Self { kind, dim, seed, trials: Vec::new(), histogram: vec![0; dim], analytic_detection }
    }

    fn push(&mut self, trial: AttackTrial) {
        if let Some(o) = trial.outcome {
            if o >= self.histogram.len() {
                self.histogram.resize(o + 1, 0);
            }
            self.histogram[o] += 1;
        }
        self.trials.push(trial);
    }

    /// Whether any round was caught.
    pub fn detected(&self) -> bool {
        self.trials.iter().any(|t| t.detected)
    }

    pub fn detection_count(&self) -> u64 {
        self.trials.iter().filter(|t| t.detected).count() as u64
    }

    pub fn detection_frequency(&self) -> f64 {
        ratio(self.detection_count(), self.trials.len() as u64)
    }

    /// Fraction of undetected rounds in which the guess equals the target's vote.
    pub fn leak_accuracy(&self) -> Option<f64> {
        let (hits, n) = self.leak_counts();
        (n > 0).then(|| ratio(hits, n))
    }

    /// How many standard deviations the guesses beat a fair coin by.
    pub fn leak_advantage_sigmas(&self) -> f64 {
        let (hits, n) = self.leak_counts();
        if n == 0 {
            return 0.0;
        }
        let n = n as f64;
        (hits as f64 - 0.5 * n) / (0.25 * n).sqrt()
    }

    fn leak_counts(&self) -> (u64, u64) {
        let live = self.trials.iter().filter(|t| !t.detected);
        live.fold((0, 0), |(h, n), t| (h + u64::from(t.leaked_vote == Some(t.true_vote)), n + 1))
    }

    /// Fraction of completed rounds whose tally is right (mod `D`).
    pub fn tally_accuracy(&self) -> Option<f64> {
        let done: Vec<_> = self.trials.iter().filter_map(|t| t.tally.map(|v| v == t.expected_tally)).collect();
        (!done.is_empty()).then(|| ratio(done.iter().filter(|&&ok| ok).count() as u64, done.len() as u64))
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn expected_tally(votes: &[usize], d: usize) -> usize {
    votes.iter().sum::<usize>() % d
}

fn tally_of(outcome: usize, d: usize) -> Option<usize> {
    (outcome < d).then_some(outcome)
}

fn mitm_trial<S: QuantumState<T>, T: Scalar>(
    d: usize,
    votes: &[usize],
    target: usize,
    repair: bool,
    rng: &mut SimRng,
) -> Result<AttackTrial> {
    let mut state = S::ghz(d, 2)?;
    let mut outcome = None;
    for (v, &b) in votes.iter().enumerate() {
        if v == target {
            // The target shifts Eve's blank probe instead of the ballot.
            let probe = state.attach(d, &ops::basis_vector(d, 0))?.apply_local(2, &ops::shift(d, b as i64))?;
            let m = probe.measure(&[2], &ProjectiveMeasurement::computational(vec![d])?, rng)?;
            state = m.state.detach(2, m.outcome)?;
            if repair {
                state = state.apply_local(1, &ops::shift(d, m.outcome as i64))?;
            }
            outcome = Some(m.outcome);
        } else {
            state = state.apply_local(1, &ops::shift(d, b as i64))?;
        }
    }
    let read = state.measure(&[0, 1], &traveling_readout(d)?, rng)?;
    Ok(AttackTrial {
        index: 0,
        detected: false,
        leaked_vote: outcome,
        true_vote: votes[target],
        outcome,
        tally: tally_of(read.outcome, d),
        expected_tally: expected_tally(votes, d),
    })
}

/// Eve hands a blank probe to `target` on the traveling ballot, reads it and, with
/// `repair`, adds the intercepted vote to the real ballot before forwarding it.
pub fn run_mitm_traveling<T: Scalar>(params: &AttackParams, votes: &[usize], target: usize) -> Result<AttackReport> {
    params.check(votes, target)?;
    let base = SimRng::new(params.seed);
    let mut report = AttackReport::new(AttackKind::Mitm, params.dim, params.seed, Some(0.0));
    for t in 0..params.trials {
        let mut rng = base.split(t);
        let mut trial = dispatch!(params.backend, mitm_trial, params.dim, votes, target, params.repair, &mut rng)?;
        trial.index = t;
        report.push(trial);
    }
    Ok(report)
}

/// `{P_ij, 1 - P_ij}` with `P_ij` the projector onto equal values of two registers.
pub fn pair_check_measurement<T: Scalar>(d: usize) -> Result<ProjectiveMeasurement<T>> {
    let mask = (0..d * d).map(|k| k / d == k % d).collect();
    ProjectiveMeasurement::with_remainder(vec![d, d], vec![Projector::Diagonal(mask)])
}

/// Measures `P_ij` on `pair`; returns whether it passed and the post-measurement state.
pub fn run_pair_check<S: QuantumState<T>, T: Scalar>(state: &S, pair: (usize, usize), rng: &mut SimRng) -> Result<(bool, S)> {
    if pair.0 == pair.1 {
        return Err(Error::Precondition("the pair check needs two distinct registers".into()));
    }
    let layout = state.layout();
    layout.check_targets(&[pair.0, pair.1])?;
    let (da, db) = (layout.dim(pair.0), layout.dim(pair.1));
    if da != db {
        return Err(Error::DimensionMismatch { expected: da, found: db });
    }
    let m = state.measure(&[pair.0, pair.1], &pair_check_measurement(da)?, rng)?;
    Ok((m.outcome == 0, m.state))
}

/// A pairing is a list of disjoint pairs of ballot registers.
pub fn check_pairing(pairing: &[(usize, usize)], voters: usize) -> Result<()> {
    let mut seen = vec![false; voters];
    for &(i, j) in pairing {
        if i == j || i >= voters || j >= voters {
            return Err(Error::Precondition(format!("pair ({i}, {j}) must name two distinct ballot registers")));
        }
        for r in [i, j] {
            if std::mem::replace(&mut seen[r], true) {
                return Err(Error::Precondition(format!("register {r} appears in two pairs")));
            }
        }
    }
    Ok(())
}

fn covers(pairing: &[(usize, usize)], target: usize) -> bool {
    pairing.iter().any(|&(i, j)| i == target || j == target)
}

/// Runs the pair check on every pair; `false` as soon as one fails.
fn check_all<S: QuantumState<T>, T: Scalar>(state: S, pairing: &[(usize, usize)], rng: &mut SimRng) -> Result<(bool, S)> {
    let mut state = state;
    for &p in pairing {
        let (passed, st) = run_pair_check(&state, p, rng)?;
        if !passed {
            return Ok((false, st));
        }
        state = st;
    }
    Ok((true, state))
}

fn fourier_measurement<T: Scalar>(d: usize) -> Result<ProjectiveMeasurement<T>> {
    ProjectiveMeasurement::new(vec![d], (0..d).map(|k| Projector::Rank1(ops::fourier_vector(d, k))).collect())
}

fn swap_trial<S: QuantumState<T>, T: Scalar>(
    d: usize,
    votes: &[usize],
    target: usize,
    pairing: &[(usize, usize)],
    repair: bool,
    rng: &mut SimRng,
) -> Result<AttackTrial> {
    let n = votes.len();
    let e = n;
    let mut state = S::ghz(d, n)?.attach(d, &ops::fourier_vector(d, 0))?.swap_registers(e, target)?;
    let mut trial = AttackTrial {
        index: 0,
        detected: false,
        leaked_vote: None,
        true_vote: votes[target],
        outcome: None,
        tally: None,
        expected_tally: expected_tally(votes, d),
    };
    let (passed, st) = check_all(state, pairing, rng)?;
    if !passed {
        trial.detected = true;
        return Ok(trial);
    }
    state = st;
    for (v, &b) in votes.iter().enumerate() {
        state = state.apply_local(v, &ops::clock(d, b as i64))?;
    }
    state = state.swap_registers(e, target)?;
    let m = state.measure(&[e], &fourier_measurement(d)?, rng)?;
    let o = m.outcome;
    state = m.state.apply_local(e, &ops::fourier(d).adjoint())?.detach(e, o)?;
    if repair {
        state = state.apply_local(target, &ops::clock(d, o as i64))?;
    }
    let regs: Vec<usize> = (0..n).collect();
    let read = state.measure(&regs, &ghz_phase_readout(d, n)?, rng)?;
    trial.leaked_vote = Some(o);
    trial.outcome = Some(o);
    trial.tally = tally_of(read.outcome, d);
    Ok(trial)
}

/// Eve swaps a uniform superposition into the target's ballot register before
/// voting, swaps it back afterwards and reads the target's phase in the Fourier
/// basis. The pair checks of `pairing` run right after the first swap.
pub fn run_swap_attack<T: Scalar>(
    params: &AttackParams,
    votes: &[usize],
    target: usize,
    pairing: &[(usize, usize)],
) -> Result<AttackReport> {
    params.check(votes, target)?;
    check_pairing(pairing, votes.len())?;
    let d = params.dim;
    let analytic = if covers(pairing, target) { 1.0 - 1.0 / d as f64 } else { 0.0 };
    let base = SimRng::new(params.seed);
    let mut report = AttackReport::new(AttackKind::Swap, d, params.seed, Some(analytic));
    for t in 0..params.trials {
        let mut rng = base.split(t);
        let mut trial = dispatch!(params.backend, swap_trial, d, votes, target, pairing, params.repair, &mut rng)?;
        trial.index = t;
        report.push(trial);
    }
    Ok(report)
}

/// A joint unitary `U_E1` on Eve's ancilla `E` (most significant) and the target's
/// ballot register, applied with the ancilla in `|0>`.
#[derive(Debug, Clone)]
pub struct EntanglingAttack<T> {
    ancilla_dim: usize,
    dim: usize,
    unitary: Matrix<T>,
}

impl<T: Scalar> EntanglingAttack<T> {
    pub fn new(ancilla_dim: usize, dim: usize, unitary: Matrix<T>) -> Result<Self> {
        if ancilla_dim == 0 || dim < 2 {
            return Err(Error::InvalidDimension(format!("ancilla dim {ancilla_dim}, ballot dim {dim}")));
        }
        let n = ancilla_dim * dim;
        if unitary.rows() != n || unitary.cols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: unitary.rows() });
        }
        let deviation = unitary.unitarity_deviation();
        if deviation > T::tolerance() {
            return Err(Error::NotUnitary { deviation: deviation.to_f64_lossy() });
        }
        Ok(Self { ancilla_dim, dim, unitary })
    }

    pub fn identity(ancilla_dim: usize, dim: usize) -> Result<Self> {
        Self::new(ancilla_dim, dim, Matrix::identity(ancilla_dim * dim))
    }

    /// Plain swap of the blank ancilla with the ballot register.
    pub fn swap(dim: usize) -> Result<Self> {
        Self::new(dim, dim, ops::swap(dim))
    }

    /// Swap after preparing the ancilla in the uniform superposition.
    pub fn uniform_swap(dim: usize) -> Result<Self> {
        let prep = ops::fourier(dim).kron(&Matrix::identity(dim));
        Self::new(dim, dim, ops::swap(dim).matmul(&prep))
    }

    /// `U = sum_j V_j (x) |j><j|` with `V_j |0> = eta_j`: the attacks that pass every pair check.
    pub fn product_form(etas: &[Vec<C<T>>]) -> Result<Self> {
        let dim = etas.len();
        let de = etas.first().map_or(0, Vec::len);
        if etas.iter().any(|eta| eta.len() != de) {
            return Err(Error::Precondition("all eta_j must have the same length".into()));
        }
        let mut u = Matrix::zeros(de * dim, de * dim);
        for (j, eta) in etas.iter().enumerate() {
            let v = Matrix::completing_unitary(eta);
            for a in 0..de {
                for b in 0..de {
                    u[(a * dim + j, b * dim + j)] = v[(a, b)];
                }
            }
        }
        Self::new(de, dim, u)
    }

    pub fn random(ancilla_dim: usize, dim: usize, rng: &mut SimRng) -> Result<Self> {
        Self::new(ancilla_dim, dim, Matrix::random_unitary(ancilla_dim * dim, rng))
    }

    pub fn random_product_form(ancilla_dim: usize, dim: usize, rng: &mut SimRng) -> Result<Self> {
        let etas: Vec<Vec<C<T>>> = (0..dim)
            .map(|_| {
                let u = Matrix::<T>::random_unitary(ancilla_dim, rng);
                (0..ancilla_dim).map(|a| u[(a, 0)]).collect()
            })
            .collect();
        Self::product_form(&etas)
    }

    pub fn ancilla_dim(&self) -> usize {
        self.ancilla_dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn unitary(&self) -> &Matrix<T> {
        &self.unitary
    }

    /// `(1/D) sum_j <phi_j| (I (x) |j><j|) |phi_j>` with `|phi_j> = U |0>|j>`: the
    /// probability of passing a pair check on the attacked register.
    pub fn non_detection(&self) -> T {
        let d = self.dim;
        let mut total = T::zero();
        for j in 0..d {
            for e in 0..self.ancilla_dim {
                total += self.unitary[(e * d + j, j)].norm_sqr();
            }
        }
        total / T::from_usize_lossy(d)
    }
}

fn entangled_ballot<S: QuantumState<T>, T: Scalar>(
    attack: &EntanglingAttack<T>,
    voters: usize,
    target: usize,
) -> Result<S> {
    let de = attack.ancilla_dim;
    S::ghz(attack.dim, voters)?
        .attach(de, &ops::basis_vector(de, 0))?
        .apply_joint(&[voters, target], &attack.unitary)
}

fn entangling_trial<S: QuantumState<T>, T: Scalar>(
    attack: &EntanglingAttack<T>,
    votes: &[usize],
    target: usize,
    pairing: &[(usize, usize)],
    rng: &mut SimRng,
) -> Result<AttackTrial> {
    let d = attack.dim;
    let n = votes.len();
    let e = n;
    let mut state: S = entangled_ballot(attack, n, target)?;
    let mut trial = AttackTrial {
        index: 0,
        detected: false,
        leaked_vote: None,
        true_vote: votes[target],
        outcome: None,
        tally: None,
        expected_tally: expected_tally(votes, d),
    };
    let (passed, st) = check_all(state, pairing, rng)?;
    if !passed {
        trial.detected = true;
        return Ok(trial);
    }
    state = st;
    for (v, &b) in votes.iter().enumerate() {
        state = state.apply_local(v, &ops::clock(d, b as i64))?;
    }
    // Undo U_E1 and read the ancilla.
    state = state.apply_joint(&[e, target], &attack.unitary.adjoint())?;
    let m = state.measure(&[e], &ProjectiveMeasurement::computational(vec![attack.ancilla_dim])?, rng)?;
    let regs: Vec<usize> = (0..n).collect();
    let read = m.state.measure(&regs, &ghz_phase_readout(d, n)?, rng)?;
    trial.leaked_vote = Some(m.outcome);
    trial.outcome = Some(m.outcome);
    trial.tally = tally_of(read.outcome, d);
    Ok(trial)
}

/// Eve entangles an ancilla with the target's register before voting. With a pair
/// check covering the target, rounds are caught with probability `1 - non_detection`.
/// Afterwards she undoes `U_E1` and measures the ancilla.
pub fn run_entangling_attack<T: Scalar>(
    params: &AttackParams,
    votes: &[usize],
    target: usize,
    attack: &EntanglingAttack<T>,
    pairing: &[(usize, usize)],
) -> Result<AttackReport> {
    params.check(votes, target)?;
    check_pairing(pairing, votes.len())?;
    if attack.dim != params.dim {
        return Err(Error::DimensionMismatch { expected: params.dim, found: attack.dim });
    }
    let analytic = if covers(pairing, target) { 1.0 - attack.non_detection().to_f64_lossy() } else { 0.0 };
    let base = SimRng::new(params.seed);
    let mut report = AttackReport::new(AttackKind::Entangling, attack.ancilla_dim.max(params.dim), params.seed, Some(analytic));
    for t in 0..params.trials {
        let mut rng = base.split(t);
        let mut trial = dispatch!(params.backend, entangling_trial, attack, votes, target, pairing, &mut rng)?;
        trial.index = t;
        report.push(trial);
    }
    Ok(report)
}

fn rho_after_voting<S: QuantumState<T>, T: Scalar>(
    attack: &EntanglingAttack<T>,
    votes: &[usize],
    target: usize,
) -> Result<DensityMatrix<T>> {
    let mut state: S = entangled_ballot(attack, votes.len(), target)?;
    for (v, &b) in votes.iter().enumerate() {
        state = state.apply_local(v, &ops::clock(attack.dim, b as i64))?;
    }
    state.reduced_density(&[votes.len(), target])
}

/// Reduced state of the ancilla and the target's register after everyone voted.
pub fn entangling_rho_e1<T: Scalar>(
    attack: &EntanglingAttack<T>,
    votes: &[usize],
    target: usize,
    backend: Backend,
) -> Result<DensityMatrix<T>> {
    AttackParams::new(attack.dim).check(votes, target)?;
    dispatch!(backend, rho_after_voting, attack, votes, target)
}

/// Eve reads a voter's zero-sum ballot before it is handed over and the value the
/// voter announces, and subtracts.
pub fn run_classical_eavesdrop(votes: &[usize], target: usize, trials: u64, seed: u64) -> Result<AttackReport> {
    let n = votes.len();
    let modulus = n + 1;
    AttackParams::new(modulus).check(votes, target)?;
    let base = SimRng::new(seed);
    let mut report = AttackReport::new(AttackKind::ClassicalEavesdrop, modulus, seed, Some(0.0));
    for t in 0..trials {
        let mut rng = base.split(t);
        let ballots = zero_sum_ballots(n, &mut rng);
        let cast: Vec<usize> = ballots.iter().zip(votes).map(|(&l, &b)| (l + b) % modulus).collect();
        let leaked = (cast[target] + modulus - ballots[target]) % modulus;
        report.push(AttackTrial {
            index: t,
            detected: false,
            leaked_vote: Some(leaked),
            true_vote: votes[target],
            outcome: Some(leaked),
            tally: Some(cast.iter().sum::<usize>() % modulus),
            expected_tally: votes.iter().sum::<usize>() % modulus,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::DenseState;

    #[test]
    fn cdf_matches_integrated_density() {
        for d in [1, 2, 5, 8] {
            let n = 20_000;
            let h = TAU / n as f64;
            let mut acc = 0.0;
            for i in 0..n {
                let x0 = i as f64 * h;
                acc += 0.5 * h * (phase_error_density(d, x0) + phase_error_density(d, x0 + h));
                if i % 997 == 0 {
                    assert!((acc - phase_error_cdf(d, x0 + h)).abs() < 1e-6, "D={d} at {x0}");
                }
            }
            assert!((phase_error_cdf(d, TAU) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn density_is_the_squared_sum() {
        let d = 6;
        for x in [0.0, 0.3, 1.7, 4.0] {
            let s: C<f64> = (0..d).map(|j| cis(j as f64 * x)).sum();
            let direct = s.norm_sqr() / (TAU * d as f64);
            assert!((direct - phase_error_density(d, x)).abs() < 1e-12);
        }
    }

    #[test]
    fn povm_density_integrates_to_one() {
        for d in [1, 3, 8, 16] {
            let p = PhasePOVM::new(d, 1.234).unwrap();
            assert!((p.normalization(4096) - 1.0).abs() < 1e-9);
        }
        assert!(PhasePOVM::new(0, 0.0).is_err());
    }

    #[test]
    fn grid_doubles_until_accurate() {
        let s = PhaseSampler::new(8).unwrap();
        assert!(s.cells() >= MIN_GRID);
        assert!(s.interpolation_error() <= GRID_TOLERANCE || s.cells() == MAX_GRID);
        let coarse = PhaseSampler::with_grid(8, MIN_GRID).unwrap();
        assert!(coarse.interpolation_error() > s.interpolation_error());
    }

    #[test]
    fn dimension_one_is_uniform() {
        let s = PhaseSampler::new(1).unwrap();
        let mut rng = SimRng::new(3);
        let n = 20_000;
        let mut bins = [0u32; 4];
        for _ in 0..n {
            let x = s.sample_offset(&mut rng);
            assert!((0.0..TAU).contains(&x));
            bins[(x / (TAU / 4.0)) as usize] += 1;
        }
        for b in bins {
            assert!((b as f64 / n as f64 - 0.25).abs() < 0.02);
        }
    }

    #[test]
    fn samples_follow_the_cdf() {
        let d = 5;
        let s = PhaseSampler::new(d).unwrap();
        let mut rng = SimRng::new(11);
        let n = 40_000;
        let mut xs: Vec<f64> = (0..n).map(|_| s.sample_offset(&mut rng)).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| (phase_error_cdf(d, x) - (i as f64 + 0.5) / n as f64).abs())
            .fold(0.0, f64::max);
        // Kolmogorov-Smirnov at well below the 0.1% level.
        assert!(ks < 1.95 / (n as f64).sqrt(), "ks={ks}");
    }

    #[test]
    fn conditional_matches_direct_simulation() {
        let d = 4;
        let delta = 0.37;
        let config = AntiCheatConfig::new(d, 3, 1, 0).with_delta(delta);
        let secrets = AuthoritySecrets::new(1, 0, delta, d, 3).unwrap();
        for (honest, s) in [(vec![1, 0], 1), (vec![1, 1], 3), (vec![0, 0], 2)] {
            let scn = CheaterScenario::new(config.clone(), honest.clone(), 2, s).unwrap();
            let m = scn.yes_count();
            for (ty, tn) in [(1.9, 0.2), (0.4, 5.1)] {
                for r in 0..d {
                    let sim = cheater_conditional::<f64>(&scn, ty, tn, r, Backend::Dense).unwrap();
                    assert!(sim[d] < 1e-10);
                    for q in 0..d {
                        let f = conditional_pq(d, &secrets, s, m, q, r, ty, tn);
                        assert!((sim[q] - f).abs() < 1e-10, "r={r} q={q}: {} vs {f}", sim[q]);
                    }
                }
            }
        }
    }

    #[test]
    fn conditional_agrees_across_backends_and_positions() {
        let d = 4;
        let config = AntiCheatConfig::new(d, 3, 1, 0).with_delta(0.1);
        let a = CheaterScenario::new(config.clone(), vec![1, 0], 0, 3).unwrap();
        let b = CheaterScenario::new(config, vec![1, 0], 2, 3).unwrap();
        let x = cheater_conditional::<f64>(&a, 1.0, 0.5, 2, Backend::Dense).unwrap();
        let y = cheater_conditional::<f64>(&b, 1.0, 0.5, 2, Backend::Branch).unwrap();
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    /// Averages the conditional over both estimate densities by quadrature.
    fn quadrature_pq(d: usize, s: usize, m: usize, q: usize, r: usize) -> f64 {
        let secrets = AuthoritySecrets::new(1, 0, 0.2, d, d - 1).unwrap();
        let (ty, tn) = (secrets.theta(Choice::Yes, d), secrets.theta(Choice::No, d));
        let n = 96;
        let h = TAU / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            for k in 0..n {
                let (a, b) = (i as f64 * h, k as f64 * h);
                let w = phase_error_density(d, b - ty) * phase_error_density(d, a - tn);
                acc += w * conditional_pq(d, &secrets, s, m, q, r, b, a);
            }
        }
        acc * h * h
    }

    #[test]
    fn exact_average_matches_quadrature() {
        let d = 5;
        for (s, m, q, r) in [(3, 1, 0, 2), (4, 3, 4, 0), (1, 0, 2, 4)] {
            let e = exact_pq_given_r(d, 1, s, m, q, r);
            let quad = quadrature_pq(d, s, m, q, r);
            assert!((e - quad).abs() < 1e-9, "s={s} m={m} q={q} r={r}: {e} vs {quad}");
        }
    }

    #[test]
    fn closed_form_holds_for_nonzero_r() {
        for d in [4, 5, 8, 9] {
            for s in (d / 2 + 1)..d {
                for m in 0..d {
                    for q in 0..d {
                        let closed = analytic_pq(d, s, m, q).unwrap();
                        for r in 1..d {
                            assert!((exact_pq_given_r(d, 1, s, m, q, r) - closed).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn r_zero_differs_from_the_closed_form() {
        let (d, s, m, q) = (8, 5, 6, 1);
        let closed = analytic_pq(d, s, m, q).unwrap();
        let zero = exact_pq_given_r(d, 1, s, m, q, 0);
        assert!((closed - 0.15137).abs() < 1e-4);
        assert!((zero - closed).abs() > 1e-4);
        let (df, sf) = (d as f64, s as f64);
        let c0 = 2.0 * (df - sf) * ((df - 1.0) * (df - sf - 1.0)) / df.powi(3);
        let angle = TAU * (m as f64 - sf - q as f64) / df;
        assert!((zero - (1.0 + c0 * angle.cos()) / df).abs() < 1e-12);
    }

    #[test]
    fn closed_form_is_a_distribution_peaked_at_m_minus_s() {
        let (d, s, m) = (8, 6, 3);
        let p = analytic_distribution(d, s, m).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let peak = p.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
        assert_eq!(peak, (m + d - s) % d);
    }

    #[test]
    fn regime_is_enforced() {
        assert!(matches!(analytic_pq(8, 4, 0, 0), Err(Error::OutOfRegime(_))));
        assert!(matches!(analytic_pq(8, 8, 0, 0), Err(Error::OutOfRegime(_))));
        assert!(matches!(analytic_pq(8, 5, 8, 0), Err(Error::OutOfRegime(_))));
        assert!(analytic_pq(8, 5, 7, 0).is_ok());
    }

    #[test]
    fn cheater_scenario_rejects_s_zero() {
        let config = AntiCheatConfig::<f64>::new(4, 3, 1, 0);
        assert!(CheaterScenario::new(config.clone(), vec![1, 0], 2, 0).is_err());
        assert!(CheaterScenario::new(config.clone(), vec![1], 2, 1).is_err());
        assert!(CheaterScenario::new(config, vec![1, 0], 3, 1).is_err());
    }

    #[test]
    fn cheater_run_records_plan_and_transcript() {
        let config = AntiCheatConfig::<f64>::new(4, 3, 1, 0);
        let scn = CheaterScenario::new(config, vec![1, 1], 1, 3).unwrap();
        let sampler = PhaseSampler::new(4).unwrap();
        let run = run_cheater_attack(&scn, Estimates::Sampled, Backend::Branch, &sampler, &mut SimRng::new(5)).unwrap();
        assert_eq!(run.transcript.len(), 3);
        assert_eq!(run.transcript[1].vote_hidden, None);
        assert_eq!(run.plan.s, 3);
        assert!(run.outcome < 4);
        let again = run_cheater_attack(&scn, Estimates::Sampled, Backend::Branch, &sampler, &mut SimRng::new(5)).unwrap();
        assert_eq!(run, again);
    }

    #[test]
    fn monte_carlo_is_close_to_the_closed_form() {
        let (d, s, m) = (5, 3, 2);
        let hist = monte_carlo_pq::<f64>(d, s, m, 4000, &SimRng::new(1)).unwrap();
        assert_eq!(hist.rejected, 0);
        let exact: Vec<f64> = (0..d).map(|q| exact_pq(d, 1, s, m, q)).collect();
        assert!(hist.tv_distance(&exact) < 0.05);
    }

    #[test]
    fn monte_carlo_with_no_trials_is_empty() {
        let hist = monte_carlo_pq::<f64>(5, 3, 2, 0, &SimRng::new(1)).unwrap();
        assert_eq!(hist.total(), 0);
        assert_eq!(hist.mode(), None);
    }

    #[test]
    fn mitm_leaks_and_repairs() {
        for backend in [Backend::Dense, Backend::Branch] {
            let params = AttackParams::new(4).with_trials(5).with_backend(backend);
            let rep = run_mitm_traveling::<f64>(&params, &[1, 0, 1], 2).unwrap();
            assert_eq!(rep.leak_accuracy(), Some(1.0));
            assert_eq!(rep.tally_accuracy(), Some(1.0));
            assert!(!rep.detected());
            let broken = run_mitm_traveling::<f64>(&params.with_repair(false), &[1, 0, 1], 2).unwrap();
            assert_eq!(broken.tally_accuracy(), Some(0.0));
        }
    }

    #[test]
    fn swap_attack_leaks_without_a_check() {
        let params = AttackParams::new(3).with_trials(20);
        for votes in [[0, 1, 1], [1, 0, 0]] {
            let rep = run_swap_attack::<f64>(&params, &votes, 0, &[]).unwrap();
            assert_eq!(rep.leak_accuracy(), Some(1.0));
            assert_eq!(rep.tally_accuracy(), Some(1.0));
        }
    }

    #[test]
    fn swap_attack_is_caught_by_the_pair_check() {
        let params = AttackParams::new(4).with_trials(4000).with_seed(2);
        let rep = run_swap_attack::<f64>(&params, &[1, 0], 0, &[(0, 1)]).unwrap();
        assert!((rep.detection_frequency() - 0.75).abs() < 0.03);
        assert_eq!(rep.analytic_detection, Some(0.75));
        let off = run_swap_attack::<f64>(&params.with_trials(50), &[1, 0, 1], 0, &[(1, 2)]).unwrap();
        assert_eq!(off.detection_count(), 0);
    }

    #[test]
    fn pair_check_rejects_bad_pairs() {
        let s = DenseState::<f64>::uniform_ghz(3, 3).unwrap();
        assert!(run_pair_check(&s, (1, 1), &mut SimRng::new(0)).is_err());
        let (ok, _) = run_pair_check(&s, (0, 2), &mut SimRng::new(0)).unwrap();
        assert!(ok);
        assert!(run_swap_attack::<f64>(&AttackParams::new(3), &[1, 0], 0, &[(0, 0)]).is_err());
        assert!(run_swap_attack::<f64>(&AttackParams::new(3), &[1, 0, 1], 0, &[(0, 1), (1, 2)]).is_err());
    }

    #[test]
    fn non_detection_of_named_attacks() {
        for d in [2, 3, 5] {
            assert!((EntanglingAttack::<f64>::swap(d).unwrap().non_detection() - 1.0 / d as f64).abs() < 1e-12);
            assert!((EntanglingAttack::<f64>::uniform_swap(d).unwrap().non_detection() - 1.0 / d as f64).abs() < 1e-12);
            assert!((EntanglingAttack::<f64>::identity(2, d).unwrap().non_detection() - 1.0).abs() < 1e-12);
            let pf = EntanglingAttack::<f64>::random_product_form(3, d, &mut SimRng::new(d as u64)).unwrap();
            assert!((pf.non_detection() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_swap_leaks_through_the_generic_strategy() {
        let d = 3;
        let attack = EntanglingAttack::<f64>::uniform_swap(d).unwrap();
        let params = AttackParams::new(d).with_trials(10);
        let rep = run_entangling_attack(&params, &[1, 0, 1], 0, &attack, &[]).unwrap();
        assert_eq!(rep.leak_accuracy(), Some(1.0));
    }

    #[test]
    fn product_form_state_is_vote_independent() {
        let d = 3;
        let attack = EntanglingAttack::<f64>::random_product_form(2, d, &mut SimRng::new(8)).unwrap();
        let a = entangling_rho_e1(&attack, &[1, 0, 0], 0, Backend::Dense).unwrap();
        let b = entangling_rho_e1(&attack, &[0, 1, 1], 0, Backend::Branch).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-10);
    }

    #[test]
    fn entangling_rejects_non_unitary() {
        let m = Matrix::<f64>::zeros(4, 4);
        assert!(matches!(EntanglingAttack::new(2, 2, m), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn classical_eavesdrop_always_leaks() {
        let rep = run_classical_eavesdrop(&[1, 0, 1, 1], 2, 50, 4).unwrap();
        assert_eq!(rep.leak_accuracy(), Some(1.0));
        assert_eq!(rep.tally_accuracy(), Some(1.0));
    }

    #[test]
    fn attack_kind_round_trips() {
        for k in AttackKind::ALL {
            assert_eq!(k.name().parse::<AttackKind>().unwrap(), k);
        }
        assert!("nope".parse::<AttackKind>().is_err());
    }
}
