//! Honest-but-curious voting protocols: traveling and distributed ballots, the
//! mod-D labelled ballot with public announcements, anonymous broadcast,
//! anonymous survey and the classical zero-sum baseline.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, QuantumState};
use crate::error::{Error, Result};
use crate::measurement::{Projector, ProjectiveMeasurement};
use crate::rng::SimRng;
use crate::scalar::{root_of_unity, Scalar, C};
use crate::state::{ops, DenseState};

/// Protocol selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Traveling,
    Distributed,
    Dolev,
    Broadcast,
    Survey,
    ClassicalBaseline,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Traveling,
        Scheme::Distributed,
        Scheme::Dolev,
        Scheme::Broadcast,
        Scheme::Survey,
        Scheme::ClassicalBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Traveling => "traveling",
            Scheme::Distributed => "distributed",
            Scheme::Dolev => "dolev",
            Scheme::Broadcast => "broadcast",
            Scheme::Survey => "survey",
            Scheme::ClassicalBaseline => "classical-baseline",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown scheme '{s}'"))
    }
}

/// Per-voter choices: 0/1 for plain votes, multiplicities for surveys.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VoteVector {
    votes: Vec<usize>,
}

impl VoteVector {
    /// Yes/no votes; every entry must be 0 or 1.
    pub fn binary(votes: Vec<usize>) -> Result<Self> {
        if let Some(v) = votes.iter().find(|&&v| v > 1) {
            return Err(Error::Precondition(format!("vote {v} is not 0 (no) or 1 (yes)")));
        }
        Self::multiplicities(votes)
    }

    /// Survey multiplicities (non-negative integers).
    pub fn multiplicities(votes: Vec<usize>) -> Result<Self> {
        if votes.is_empty() {
            return Err(Error::Precondition("at least one voter is required (N >= 1)".into()));
        }
        Ok(Self { votes })
    }

    /// Every binary vote vector of length `n`, in counting order with voter 1 as the high bit.
    pub fn all_binary(n: usize) -> impl Iterator<Item = VoteVector> {
        (0..1usize << n).map(move |bits| VoteVector { votes: (0..n).map(|i| (bits >> (n - 1 - i)) & 1).collect() })
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.votes
    }

    pub fn len(&self) -> usize {
        self.votes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }

    pub fn total(&self) -> usize {
        self.votes.iter().sum()
    }

    pub fn is_binary(&self) -> bool {
        self.votes.iter().all(|&v| v <= 1)
    }
}

/// Dimensions and options of one protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub scheme: Scheme,
    /// Qudit dimension `D`.
    pub dim: usize,
    /// Number of voters `N`.
    pub voters: usize,
    pub seed: u64,
    /// Keep a dense copy of the state after every step (small instances only).
    #[serde(default)]
    pub record_states: bool,
}

impl ProtocolConfig {
    pub fn new(scheme: Scheme, dim: usize, voters: usize) -> Self {
        Self { scheme, dim, voters, seed: 0, record_states: false }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn recording(mut self, on: bool) -> Self {
        self.record_states = on;
        self
    }

    /// Structural constraints of the scheme.
    pub fn validate(&self) -> Result<()> {
        if self.voters == 0 {
            return Err(Error::Precondition("at least one voter is required (N >= 1)".into()));
        }
        if self.scheme != Scheme::ClassicalBaseline && self.dim < 2 {
            return Err(Error::InvalidDimension(format!("qudit dimension {} must be at least 2", self.dim)));
        }
        match self.scheme {
            Scheme::Traveling | Scheme::Distributed if self.dim <= self.voters => Err(Error::Precondition(format!(
                "{} ballot requires D>N (got D={}, N={})",
                self.scheme, self.dim, self.voters
            ))),
            Scheme::Dolev if self.dim != self.voters + 1 => Err(Error::Precondition(format!(
                "dolev ballot requires D=N+1 (got D={}, N={})",
                self.dim, self.voters
            ))),
            _ => Ok(()),
        }
    }

    /// Checks a vote vector against the scheme.
    pub fn check_votes(&self, votes: &VoteVector) -> Result<()> {
        self.validate()?;
        if votes.len() != self.voters {
            return Err(Error::Precondition(format!("expected {} votes, got {}", self.voters, votes.len())));
        }
        match self.scheme {
            Scheme::Survey => {
                if votes.total() >= self.dim {
                    return Err(Error::Precondition(format!(
                        "survey total {} must stay below D={} (requires D>sum of votes)",
                        votes.total(),
                        self.dim
                    )));
                }
            }
            Scheme::Broadcast => {}
            _ => {
                if !votes.is_binary() {
                    return Err(Error::Precondition("votes must be 0 (no) or 1 (yes)".into()));
                }
            }
        }
        Ok(())
    }
}

/// A protocol participant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Authority,
    /// Zero-based voter index.
    Voter(usize),
    Eve,
}

/// One transcript record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Prepare { registers: usize, dim: usize },
    Operation { party: Party, registers: Vec<usize>, op: String },
    /// Trace distance of the register's reduced state from `I/D`.
    PrivacyCheck { party: Party, register: usize, distance: f64 },
    Measurement { party: Party, registers: Vec<usize>, outcome: usize, probability: f64 },
    Announcement { party: Party, value: usize },
}

/// Outcome of a protocol run.
#[derive(Debug, Clone, PartialEq)]
pub struct TallyResult<T> {
    /// Yes-count, broadcast message or survey total.
    pub value: usize,
    pub transcript: Vec<Event>,
    /// Survey average `total / N`.
    pub average: Option<Ratio<u64>>,
    /// Public announcements in voter order.
    pub announcements: Vec<usize>,
    /// Simulation-only ground truth hidden from every party (labels or pads).
    pub hidden: Vec<usize>,
    /// Dense state after preparation and after every voter step, when recording.
    pub snapshots: Vec<DenseState<T>>,
}

impl<T> TallyResult<T> {
    /// Largest recorded privacy-check distance.
    pub fn max_privacy_distance(&self) -> f64 {
        self.transcript
            .iter()
            .filter_map(|e| match e {
                Event::PrivacyCheck { distance, .. } => Some(*distance),
                _ => None,
            })
            .fold(0.0, f64::max)
    }

    pub fn privacy_checks(&self) -> usize {
        self.transcript.iter().filter(|e| matches!(e, Event::PrivacyCheck { .. })).count()
    }
}

pub(crate) struct Recorder<T> {
    record: bool,
    pub events: Vec<Event>,
    pub snapshots: Vec<DenseState<T>>,
}

impl<T: Scalar> Recorder<T> {
    pub fn new(record: bool) -> Self {
        Self { record, events: Vec::new(), snapshots: Vec::new() }
    }

    pub fn push(&mut self, e: Event) {
        self.events.push(e);
    }

    pub fn snapshot<S: QuantumState<T>>(&mut self, state: &S) -> Result<()> {
        if self.record {
            self.snapshots.push(state.to_dense()?);
        }
        Ok(())
    }

    pub fn privacy<S: QuantumState<T>>(&mut self, state: &S, party: Party, register: usize) -> Result<()> {
        let rho = state.reduced_density(&[register])?;
        let distance = rho.distance_from_maximally_mixed().to_f64_lossy();
        self.events.push(Event::PrivacyCheck { party, register, distance });
        Ok(())
    }

    pub fn op(&mut self, party: Party, registers: Vec<usize>, op: impl Into<String>) {
        self.events.push(Event::Operation { party, registers, op: op.into() });
    }

    pub fn finish(self, value: usize) -> TallyResult<T> {
        TallyResult {
            value,
            transcript: self.events,
            average: None,
            announcements: Vec::new(),
            hidden: Vec::new(),
            snapshots: self.snapshots,
        }
    }
}

/// `|Psi_m> = D^{-1/2} sum_j |j>_a |j+m>_b` as a vector over the two ballot registers.
pub fn traveling_basis_vector<T: Scalar>(d: usize, m: usize) -> Vec<C<T>> {
    let s = T::one() / T::from_usize_lossy(d).sqrt();
    let mut v = vec![C::new(T::zero(), T::zero()); d * d];
    for j in 0..d {
        v[j * d + (j + m) % d] = C::new(s, T::zero());
    }
    v
}

/// Phases `e^{2 pi i j q / D}` of the GHZ-phase state with label `q`.
pub fn ghz_phases<T: Scalar>(d: usize, q: usize) -> Vec<C<T>> {
    (0..d).map(|j| root_of_unity((j * q) as i64, d)).collect()
}

/// `D^{-1/2} sum_j e^{2 pi i j q / D} |j>^{(x) n}`.
pub fn ghz_phase_state<T: Scalar>(d: usize, n: usize, q: usize) -> Result<DenseState<T>> {
    DenseState::uniform_ghz(d, n)?.apply_local(0, &ops::clock(d, q as i64))
}

/// The authority's readout of the traveling ballot, `{|Psi_m>}` plus remainder.
pub fn traveling_readout<T: Scalar>(d: usize) -> Result<ProjectiveMeasurement<T>> {
    ProjectiveMeasurement::with_remainder(
        vec![d, d],
        (0..d).map(|m| Projector::Rank1(traveling_basis_vector(d, m))).collect(),
    )
}

/// Readout in the GHZ-phase basis of `n` registers, plus remainder.
pub fn ghz_phase_readout<T: Scalar>(d: usize, n: usize) -> Result<ProjectiveMeasurement<T>> {
    ProjectiveMeasurement::with_remainder(vec![d; n], (0..d).map(|q| Projector::GhzPhase(ghz_phases(d, q))).collect())
}

fn readout_outcome(outcome: usize, meas_len: usize) -> Result<usize> {
    if outcome >= meas_len {
        return Err(Error::Protocol("readout landed outside the ballot basis".into()));
    }
    Ok(outcome)
}

fn traveling<S: QuantumState<T>, T: Scalar>(config: &ProtocolConfig, votes: &[usize]) -> Result<TallyResult<T>> {
    let d = config.dim;
    let mut rng = SimRng::new(config.seed);
    let mut rec = Recorder::new(config.record_states);
    let mut state = S::ghz(d, 2)?;
    rec.push(Event::Prepare { registers: 2, dim: d });
    rec.snapshot(&state)?;
    rec.privacy(&state, Party::Authority, 0)?;
    for (n, &k) in votes.iter().enumerate() {
        rec.privacy(&state, Party::Voter(n), 1)?;
        if k > 0 {
            state = state.apply_local(1, &ops::shift(d, k as i64))?;
            rec.op(Party::Voter(n), vec![1], if k == 1 { "E+".to_string() } else { format!("E+^{k}") });
        } else {
            rec.op(Party::Voter(n), vec![1], "I");
        }
        rec.privacy(&state, Party::Authority, 0)?;
        rec.snapshot(&state)?;
    }
    let meas = traveling_readout(d)?;
    let out = state.measure(&[0, 1], &meas, &mut rng)?;
    rec.push(Event::Measurement {
        party: Party::Authority,
        registers: vec![0, 1],
        outcome: out.outcome,
        probability: out.probability.to_f64_lossy(),
    });
    let m = readout_outcome(out.outcome, d)?;
    Ok(rec.finish(m))
}

fn distributed<S: QuantumState<T>, T: Scalar>(config: &ProtocolConfig, votes: &[usize]) -> Result<TallyResult<T>> {
    let (d, n) = (config.dim, config.voters);
    let mut rng = SimRng::new(config.seed);
    let mut rec = Recorder::new(config.record_states);
    let mut state = S::ghz(d, n)?;
    rec.push(Event::Prepare { registers: n, dim: d });
    rec.snapshot(&state)?;
    for v in 0..n {
        rec.privacy(&state, Party::Voter(v), v)?;
    }
    for (v, &b) in votes.iter().enumerate() {
        if b == 1 {
            state = state.apply_local(v, &ops::clock(d, 1))?;
            rec.op(Party::Voter(v), vec![v], "F");
        } else {
            rec.op(Party::Voter(v), vec![v], "I");
        }
        for w in 0..n {
            rec.privacy(&state, Party::Voter(w), w)?;
        }
        rec.snapshot(&state)?;
    }
    let regs: Vec<usize> = (0..n).collect();
    let meas = ghz_phase_readout(d, n)?;
    let out = state.measure(&regs, &meas, &mut rng)?;
    rec.push(Event::Measurement {
        party: Party::Authority,
        registers: regs,
        outcome: out.outcome,
        probability: out.probability.to_f64_lossy(),
    });
    let m = readout_outcome(out.outcome, d)?;
    Ok(rec.finish(m))
}

/// `D^{-(N-1)/2} sum_{l_1+...+l_N = 0 mod D} |l_1 ... l_N>` via a Fourier transform on every GHZ register.
fn labelled_ballot<S: QuantumState<T>, T: Scalar>(d: usize, n: usize) -> Result<S> {
    let f = ops::fourier(d);
    let mut state = S::ghz(d, n)?;
    for r in 0..n {
        state = state.apply_local(r, &f)?;
    }
    Ok(state)
}

/// Applies `E+^{shifts[v]}` on register `v`, then every party measures and announces.
fn announce_round<S: QuantumState<T>, T: Scalar>(
    config: &ProtocolConfig,
    shifts: &[usize],
) -> Result<TallyResult<T>> {
    let (d, n) = (config.dim, config.voters);
    let mut rng = SimRng::new(config.seed);
    let mut rec = Recorder::new(config.record_states);
    let mut state: S = labelled_ballot(d, n)?;
    rec.push(Event::Prepare { registers: n, dim: d });
    rec.snapshot(&state)?;
    for v in 0..n {
        rec.privacy(&state, Party::Voter(v), v)?;
    }
    for (v, &k) in shifts.iter().enumerate() {
        if k % d != 0 {
            state = state.apply_local(v, &ops::shift(d, k as i64))?;
            rec.op(Party::Voter(v), vec![v], if k == 1 { "E+".to_string() } else { format!("E+^{k}") });
        } else {
            rec.op(Party::Voter(v), vec![v], "I");
        }
        for w in 0..n {
            rec.privacy(&state, Party::Voter(w), w)?;
        }
        rec.snapshot(&state)?;
    }
    let meas = ProjectiveMeasurement::computational(vec![d])?;
    let mut announced = Vec::with_capacity(n);
    for v in 0..n {
        let out = state.measure(&[v], &meas, &mut rng)?;
        rec.push(Event::Measurement {
            party: Party::Voter(v),
            registers: vec![v],
            outcome: out.outcome,
            probability: out.probability.to_f64_lossy(),
        });
        rec.push(Event::Announcement { party: Party::Voter(v), value: out.outcome });
        announced.push(out.outcome);
        state = out.state;
    }
    let x = announced.iter().sum::<usize>() % d;
    let hidden = announced.iter().zip(shifts).map(|(&a, &k)| (a + d - k % d) % d).collect();
    let mut res = rec.finish(x);
    res.announcements = announced;
    res.hidden = hidden;
    Ok(res)
}


/// Traveling two-qudit ballot: yes applies `E+`, the authority reads `m` in the `{|Psi_m>}` basis.
pub fn run_traveling<T: Scalar>(config: &ProtocolConfig, votes: &VoteVector, backend: Backend) -> Result<TallyResult<T>> {
    let config = ProtocolConfig { scheme: Scheme::Traveling, ..config.clone() };
    config.check_votes(votes)?;
    dispatch!(backend, traveling, &config, votes.as_slice())
}

/// Distributed N-qudit ballot: yes applies `F`, the authority reads `m` in the GHZ-phase basis.
pub fn run_distributed<T: Scalar>(config: &ProtocolConfig, votes: &VoteVector, backend: Backend) -> Result<TallyResult<T>> {
    let config = ProtocolConfig { scheme: Scheme::Distributed, ..config.clone() };
    config.check_votes(votes)?;
    dispatch!(backend, distributed, &config, votes.as_slice())
}

/// Zero-sum labelled ballot with `D = N + 1`; the tally is the sum of the announcements mod `D`.
pub fn run_dolev<T: Scalar>(config: &ProtocolConfig, votes: &VoteVector, backend: Backend) -> Result<TallyResult<T>> {
    let config = ProtocolConfig { scheme: Scheme::Dolev, ..config.clone() };
    config.check_votes(votes)?;
    dispatch!(backend, announce_round, &config, votes.as_slice())
}

/// One-to-many anonymous broadcast of `message` in `[0, D)` by party `sender`.
pub fn run_broadcast<T: Scalar>(
    config: &ProtocolConfig,
    sender: usize,
    message: usize,
    backend: Backend,
) -> Result<TallyResult<T>> {
    let config = ProtocolConfig { scheme: Scheme::Broadcast, ..config.clone() };
    config.validate()?;
    let shifts = broadcast_shifts(&config, sender, message)?;
    dispatch!(backend, announce_round, &config, &shifts)
}

fn broadcast_shifts(config: &ProtocolConfig, sender: usize, message: usize) -> Result<Vec<usize>> {
    if message >= config.dim {
        return Err(Error::Precondition(format!("message {message} outside [0, D={})", config.dim)));
    }
    if sender >= config.voters {
        return Err(Error::Precondition(format!("sender {sender} is not one of the {} parties", config.voters)));
    }
    let mut shifts = vec![0; config.voters];
    shifts[sender] = message;
    Ok(shifts)
}

/// Exact joint distribution of the announcement tuple of a broadcast (dense expansion).
pub fn broadcast_distribution<T: Scalar>(
    config: &ProtocolConfig,
    sender: usize,
    message: usize,
) -> Result<BTreeMap<Vec<usize>, T>> {
    config.validate()?;
    let shifts = broadcast_shifts(config, sender, message)?;
    let (d, n) = (config.dim, config.voters);
    let mut state: DenseState<T> = labelled_ballot(d, n)?;
    state = state.apply_local(sender, &ops::shift(d, shifts[sender] as i64))?;
    let mut out = BTreeMap::new();
    for (i, a) in state.amps().iter().enumerate() {
        let p = a.norm_sqr();
        if p > T::tolerance() {
            out.insert(state.layout().digits(i), p);
        }
    }
    Ok(out)
}

/// Traveling ballot where voter `k` applies `E+` as many times as their multiplicity.
pub fn run_survey<T: Scalar>(config: &ProtocolConfig, salaries: &VoteVector, backend: Backend) -> Result<TallyResult<T>> {
    let config = ProtocolConfig { scheme: Scheme::Survey, ..config.clone() };
    config.check_votes(salaries)?;
    let mut res = dispatch!(backend, traveling, &config, salaries.as_slice())?;
    res.average = Some(Ratio::new(res.value as u64, config.voters as u64));
    Ok(res)
}

/// Classical zero-sum ballots mod `N + 1`: yes adds 1, the counting authority sums.
pub fn run_classical_baseline<T: Scalar>(votes: &VoteVector, rng: &mut SimRng) -> Result<TallyResult<T>> {
    if !votes.is_binary() {
        return Err(Error::Precondition("votes must be 0 (no) or 1 (yes)".into()));
    }
    let n = votes.len();
    let modulus = n + 1;
    let ballots = zero_sum_ballots(n, rng);
    let mut rec = Recorder::<T>::new(false);
    let mut cast = Vec::with_capacity(n);
    for (v, (&l, &b)) in ballots.iter().zip(votes.as_slice()).enumerate() {
        rec.op(Party::Voter(v), vec![v], if b == 1 { "+1" } else { "+0" });
        cast.push((l + b) % modulus);
    }
    for (v, &x) in cast.iter().enumerate() {
        rec.push(Event::Announcement { party: Party::Voter(v), value: x });
    }
    let tally = cast.iter().sum::<usize>() % modulus;
    let mut res = rec.finish(tally);
    res.announcements = cast;
    res.hidden = ballots;
    Ok(res)
}

/// `n` integers in `[0, n]` drawn uniformly from the set summing to zero mod `n + 1`.
pub fn zero_sum_ballots(n: usize, rng: &mut SimRng) -> Vec<usize> {
    let modulus = n + 1;
    let mut ballots: Vec<usize> = (0..n - 1).map(|_| rng.below(modulus)).collect();
    let partial = ballots.iter().sum::<usize>() % modulus;
    ballots.push((modulus - partial) % modulus);
    ballots
}

/// Naive classical traveling ballot: each voter adds vote plus a private pad, the
/// authority subtracts the pads it later receives.
///
/// `announcements` holds the running ballot value seen after each voter and
/// `hidden` the pads. Knowing one pad and the neighbouring ballot values
/// reveals that voter's choice, see [`padded_leak`].
pub fn run_classical_padded<T: Scalar>(votes: &VoteVector, modulus: usize, rng: &mut SimRng) -> Result<TallyResult<T>> {
    if !votes.is_binary() {
        return Err(Error::Precondition("votes must be 0 (no) or 1 (yes)".into()));
    }
    if modulus <= votes.len() {
        return Err(Error::Precondition(format!("modulus {modulus} must exceed the number of voters")));
    }
    let mut rec = Recorder::<T>::new(false);
    let mut running = 0;
    let mut seen = Vec::with_capacity(votes.len());
    let mut pads = Vec::with_capacity(votes.len());
    for (v, &b) in votes.as_slice().iter().enumerate() {
        let pad = rng.below(modulus);
        running = (running + b + pad) % modulus;
        rec.op(Party::Voter(v), vec![0], "+vote+pad");
        seen.push(running);
        pads.push(pad);
    }
    let pad_sum = pads.iter().sum::<usize>() % modulus;
    let tally = (running + modulus - pad_sum) % modulus;
    let mut res = rec.finish(tally);
    res.announcements = seen;
    res.hidden = pads;
    Ok(res)
}

/// Vote of voter `index` recovered from the ballot values just before and after them and their pad.
pub fn padded_leak(before: usize, after: usize, pad: usize, modulus: usize) -> usize {
    (after + 2 * modulus - before - pad) % modulus
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(scheme: Scheme, d: usize, n: usize) -> ProtocolConfig {
        ProtocolConfig::new(scheme, d, n)
    }

    fn votes(v: &[usize]) -> VoteVector {
        VoteVector::binary(v.to_vec()).unwrap()
    }

    #[test]
    fn traveling_examples() {
        let c = cfg(Scheme::Traveling, 4, 3);
        for (v, m) in [([0, 0, 0], 0), ([1, 0, 1], 2), ([1, 1, 1], 3)] {
            for b in [Backend::Dense, Backend::Branch] {
                assert_eq!(run_traveling::<f64>(&c, &votes(&v), b).unwrap().value, m);
            }
        }
    }

    #[test]
    fn traveling_rejects_small_dimension() {
        let c = cfg(Scheme::Traveling, 3, 3);
        assert!(matches!(run_traveling::<f64>(&c, &votes(&[0, 0, 0]), Backend::Dense), Err(Error::Precondition(_))));
    }

    #[test]
    fn distributed_example_and_precondition() {
        let c = cfg(Scheme::Distributed, 5, 4);
        assert_eq!(run_distributed::<f64>(&c, &votes(&[1, 1, 0, 1]), Backend::Branch).unwrap().value, 3);
        assert_eq!(run_distributed::<f64>(&c, &votes(&[0, 0, 0, 0]), Backend::Dense).unwrap().value, 0);
        let bad = cfg(Scheme::Distributed, 4, 4);
        let err = run_distributed::<f64>(&bad, &votes(&[0, 0, 0, 0]), Backend::Dense).unwrap_err();
        assert!(err.to_string().contains("D>N"));
    }

    #[test]
    fn dolev_tally_and_zero_sum_labels() {
        let c = cfg(Scheme::Dolev, 4, 3);
        for seed in 0..20 {
            let r = run_dolev::<f64>(&c.clone().with_seed(seed), &votes(&[0, 1, 0]), Backend::Branch).unwrap();
            assert_eq!(r.value, 1);
            assert_eq!(r.hidden.iter().sum::<usize>() % 4, 0);
            let mut rev = r.announcements.clone();
            rev.reverse();
            assert_eq!(rev.iter().sum::<usize>() % 4, 1);
        }
        let err = run_dolev::<f64>(&cfg(Scheme::Dolev, 5, 3), &votes(&[0, 0, 0]), Backend::Dense).unwrap_err();
        assert!(err.to_string().contains("D=N+1"));
    }

    #[test]
    fn broadcast_reconstructs_message() {
        let c = cfg(Scheme::Broadcast, 5, 3);
        assert_eq!(run_broadcast::<f64>(&c, 2, 3, Backend::Dense).unwrap().value, 3);
        assert_eq!(run_broadcast::<f64>(&c, 0, 0, Backend::Branch).unwrap().value, 0);
        assert!(run_broadcast::<f64>(&c, 0, 5, Backend::Branch).is_err());
    }

    #[test]
    fn broadcast_sender_is_hidden_in_distribution() {
        let c = cfg(Scheme::Broadcast, 3, 2);
        for m in 0..3 {
            let a = broadcast_distribution::<f64>(&c, 0, m).unwrap();
            let b = broadcast_distribution::<f64>(&c, 1, m).unwrap();
            assert_eq!(a.len(), 3);
            assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
            for (k, p) in &a {
                assert!((p - b[k]).abs() < 1e-12);
                assert!((p - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn survey_total_and_average() {
        let c = cfg(Scheme::Survey, 10, 3);
        let s = VoteVector::multiplicities(vec![2, 3, 1]).unwrap();
        let r = run_survey::<f64>(&c, &s, Backend::Dense).unwrap();
        assert_eq!(r.value, 6);
        assert_eq!(r.average, Some(Ratio::from_integer(2)));
        let zero = run_survey::<f64>(&cfg(Scheme::Survey, 10, 2), &VoteVector::multiplicities(vec![0, 0]).unwrap(), Backend::Branch);
        assert_eq!(zero.unwrap().value, 0);
        let wrap = VoteVector::multiplicities(vec![5, 5]).unwrap();
        assert!(run_survey::<f64>(&cfg(Scheme::Survey, 10, 2), &wrap, Backend::Dense).is_err());
    }

    #[test]
    fn classical_baseline_counts_votes() {
        let mut rng = SimRng::new(7);
        assert_eq!(run_classical_baseline::<f64>(&votes(&[0, 0, 0]), &mut rng).unwrap().value, 0);
        for _ in 0..1000 {
            let r = run_classical_baseline::<f64>(&votes(&[1, 0, 1, 1]), &mut rng).unwrap();
            assert_eq!(r.value, 3);
            assert_eq!(r.hidden.iter().sum::<usize>() % 5, 0);
            assert!(r.hidden.iter().all(|&x| x <= 4));
        }
    }

    #[test]
    fn padded_scheme_leaks_with_one_pad() {
        let mut rng = SimRng::new(3);
        let v = votes(&[1, 0, 1, 1]);
        let r = run_classical_padded::<f64>(&v, 7, &mut rng).unwrap();
        assert_eq!(r.value, 3);
        for i in 1..4 {
            let leaked = padded_leak(r.announcements[i - 1], r.announcements[i], r.hidden[i], 7);
            assert_eq!(leaked, v.as_slice()[i]);
        }
    }

    #[test]
    fn privacy_checkpoints_are_mixed() {
        let c = cfg(Scheme::Distributed, 4, 3);
        let r = run_distributed::<f64>(&c, &votes(&[1, 0, 1]), Backend::Dense).unwrap();
        assert_eq!(r.privacy_checks(), 12);
        assert!(r.max_privacy_distance() <= 1e-12);
    }

    #[test]
    fn all_binary_enumerates_in_order() {
        let all: Vec<_> = VoteVector::all_binary(2).map(|v| v.as_slice().to_vec()).collect();
        assert_eq!(all, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
    }
}
