//! Voting with secret-angle voting qudits, which makes repeated votes detectable.
//!
//! Each voter transfers the phase of `|psi(theta)>` onto their ballot register
//! through the two-qudit measurement `R = sum_r r P_r` and the shift `V_r`. The
//! authority removes the `e^{i D delta}` factors with `W_r`, strips the `no`
//! offset and reads `q = m (l_y - l_n)` in the `{|Omega_q>}` basis.

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, QuantumState};
use crate::branch::BranchState;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::measurement::{Projector, ProjectiveMeasurement};
use crate::protocols::{ghz_phase_readout, ghz_phase_state};
use crate::rng::SimRng;
use crate::scalar::{cis, Scalar, C};
use crate::state::{ops, DenseState};

/// Integers `l_y`, `l_n` and offset `delta` known only to the authority.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuthoritySecrets<T> {
    pub l_y: usize,
    pub l_n: usize,
    pub delta: T,
}

impl<T: Scalar> AuthoritySecrets<T> {
    /// Requires `l_y > l_n`, `(l_y - l_n) N < D` and `0 <= delta < 2 pi / D`.
    pub fn new(l_y: usize, l_n: usize, delta: T, dim: usize, voters: usize) -> Result<Self> {
        if l_y >= dim || l_n >= dim {
            return Err(Error::Precondition(format!("secret labels must lie in [0, D={dim})")));
        }
        if l_y <= l_n {
            return Err(Error::Precondition(format!("requires l_y > l_n (got l_y={l_y}, l_n={l_n})")));
        }
        if (l_y - l_n) * voters >= dim {
            return Err(Error::Precondition(format!(
                "requires (l_y-l_n)N < D (got ({l_y}-{l_n})*{voters} >= {dim})"
            )));
        }
        let bound = T::TAU() / T::from_usize_lossy(dim);
        if !(delta >= T::zero() && delta < bound) {
            return Err(Error::Precondition(format!("requires 0 <= delta < 2pi/D (got {delta})")));
        }
        Ok(Self { l_y, l_n, delta })
    }

    /// Uniformly random legal secrets.
    pub fn random(dim: usize, voters: usize, rng: &mut SimRng) -> Result<Self> {
        let max_step = (dim - 1) / voters.max(1);
        if voters == 0 || max_step == 0 {
            return Err(Error::Precondition(format!("no secrets satisfy (l_y-l_n)N < D for D={dim}, N={voters}")));
        }
        let step = 1 + rng.below(max_step);
        let l_n = rng.below(dim - step);
        let delta = Self::random_delta(dim, rng);
        Self::new(l_n + step, l_n, delta, dim, voters)
    }

    /// Uniform draw from `[0, 2 pi / D)`.
    pub fn random_delta(dim: usize, rng: &mut SimRng) -> T {
        T::lit(rng.uniform()) * T::TAU() / T::from_usize_lossy(dim)
    }

    /// `l_y - l_n`.
    pub fn step(&self) -> usize {
        self.l_y - self.l_n
    }

    pub fn theta(&self, choice: Choice, dim: usize) -> T {
        let l = match choice {
            Choice::Yes => self.l_y,
            Choice::No => self.l_n,
        };
        T::TAU() * T::from_usize_lossy(l) / T::from_usize_lossy(dim) + self.delta
    }
}

/// A voter's choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    Yes,
    No,
}

impl Choice {
    pub fn from_bit(b: usize) -> Self {
        if b == 1 {
            Choice::Yes
        } else {
            Choice::No
        }
    }
}

/// Ballot layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// One ballot register per voter; voting qudits are returned to the authority.
    Distributed,
    /// One register kept by the authority and one traveling register; voting qudits are disentangled.
    Traveling,
}

/// Public record of one vote. `vote_hidden` is simulation ground truth, never shown to the authority.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoterTranscriptEntry {
    pub voter: usize,
    pub announced_r: usize,
    pub vote_hidden: Option<Choice>,
}

/// Outcome of the authority's measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReadoutResult {
    /// `None` when the error projector fired.
    pub q: Option<usize>,
    pub m_inferred: Option<usize>,
    pub cheat_detected: bool,
}

impl ReadoutResult {
    /// Interprets readout outcome `outcome` (`dim` denotes the error projector).
    pub fn interpret(outcome: usize, dim: usize, step: usize, voters: usize) -> Self {
        if outcome >= dim {
            return Self { q: None, m_inferred: None, cheat_detected: true };
        }
        let legal = outcome.is_multiple_of(step) && outcome / step <= voters;
        Self { q: Some(outcome), m_inferred: legal.then_some(outcome / step), cheat_detected: !legal }
    }
}

/// Parameters of an anti-cheat run.
#[derive(Debug, Clone, PartialEq)]
pub struct AntiCheatConfig<T> {
    pub dim: usize,
    pub voters: usize,
    pub l_y: usize,
    pub l_n: usize,
    /// Fixed offset; drawn uniformly from `[0, 2 pi / D)` when absent.
    pub delta: Option<T>,
    pub variant: Variant,
    /// Register receiving `W` and the offset removal.
    pub correction_register: usize,
}

impl<T: Scalar> AntiCheatConfig<T> {
    pub fn new(dim: usize, voters: usize, l_y: usize, l_n: usize) -> Self {
        Self { dim, voters, l_y, l_n, delta: None, variant: Variant::Distributed, correction_register: 0 }
    }

    pub fn with_delta(mut self, delta: T) -> Self {
        self.delta = Some(delta);
        self
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_correction_register(mut self, register: usize) -> Self {
        self.correction_register = register;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidDimension(format!("qudit dimension {} must be at least 2", self.dim)));
        }
        if self.voters == 0 {
            return Err(Error::Precondition("at least one voter is required (N >= 1)".into()));
        }
        let registers = self.final_registers();
        if self.correction_register >= registers {
            return Err(Error::Precondition(format!(
                "correction register {} outside the {registers} returned registers",
                self.correction_register
            )));
        }
        let delta = self.delta.unwrap_or(T::zero());
        AuthoritySecrets::new(self.l_y, self.l_n, delta, self.dim, self.voters).map(|_| ())
    }

    /// Registers held by the authority at readout time.
    pub fn final_registers(&self) -> usize {
        match self.variant {
            Variant::Distributed => 2 * self.voters,
            Variant::Traveling => 2,
        }
    }
}

/// How the outcome of the `R` measurement is chosen.
#[derive(Debug)]
pub enum ROutcome<'a> {
    Sample(&'a mut SimRng),
    /// Conditions on a fixed outcome; the probability of that outcome is returned.
    Forced(usize),
}

/// `P_r = sum_j |j+r><j+r|_b (x) |j><j|_v`, diagonal on `(b, v)` with `b` most significant.
pub fn r_projector<T: Scalar>(d: usize, r: usize) -> Projector<T> {
    Projector::Diagonal((0..d * d).map(|i| (i / d + d - i % d) % d == r).collect())
}

/// The complete `R` measurement on `(ballot, voting)`.
pub fn r_measurement<T: Scalar>(d: usize) -> Result<ProjectiveMeasurement<T>> {
    ProjectiveMeasurement::new(vec![d, d], (0..d).map(|r| r_projector(d, r)).collect())
}

/// `W_r |k> = e^{-i D delta} |k>` for `k < r`, identity otherwise.
pub fn w_correction<T: Scalar>(d: usize, r: usize, delta: T) -> Matrix<T> {
    let phase = cis(-T::from_usize_lossy(d) * delta);
    let one = C::new(T::one(), T::zero());
    Matrix::diag(&(0..d).map(|k| if k < r { phase } else { one }).collect::<Vec<_>>())
}

/// `|j>_b |v>_v -> |j>_b |v - j + r>_v`, which sends `|j>|j - r>` to `|j>|0>`.
pub fn u_disentangle<T: Scalar>(d: usize, r: usize) -> Matrix<T> {
    let mut m = Matrix::zeros(d * d, d * d);
    for j in 0..d {
        for v in 0..d {
            m[(j * d + (v + 2 * d - j + r) % d, j * d + v)] = C::new(T::one(), T::zero());
        }
    }
    m
}

/// `|Omega_q>` over `registers` qudits.
pub fn omega_state<T: Scalar>(d: usize, registers: usize, q: usize) -> Result<DenseState<T>> {
    ghz_phase_state(d, registers, q)
}

/// One anti-cheat voting round over a chosen backend.
#[derive(Debug, Clone)]
pub struct Session<S, T> {
    dim: usize,
    voters: usize,
    secrets: AuthoritySecrets<T>,
    variant: Variant,
    correction_register: usize,
    state: S,
    entries: Vec<VoterTranscriptEntry>,
    voted: Vec<bool>,
    corrected: bool,
}

impl<S: QuantumState<T>, T: Scalar> Session<S, T> {
    /// Prepares the ballot and fixes the secrets (drawing `delta` when not fixed).
    pub fn setup(config: &AntiCheatConfig<T>, rng: &mut SimRng) -> Result<Self> {
        config.validate()?;
        let delta = match config.delta {
            Some(d) => d,
            None => AuthoritySecrets::random_delta(config.dim, rng),
        };
        let secrets = AuthoritySecrets::new(config.l_y, config.l_n, delta, config.dim, config.voters)?;
        Self::with_secrets(config, secrets)
    }

    /// Prepares the ballot with explicit secrets.
    pub fn with_secrets(config: &AntiCheatConfig<T>, secrets: AuthoritySecrets<T>) -> Result<Self> {
        config.validate()?;
        let registers = match config.variant {
            Variant::Distributed => config.voters,
            Variant::Traveling => 2,
        };
        Ok(Self {
            dim: config.dim,
            voters: config.voters,
            secrets,
            variant: config.variant,
            correction_register: config.correction_register,
            state: S::ghz(config.dim, registers)?,
            entries: Vec::new(),
            voted: vec![false; config.voters],
            corrected: false,
        })
    }

    /// Continues from a distributed ballot in which voters `0..voted` have voted and
    /// their `W_r` factors are already applied.
    pub(crate) fn resume(config: &AntiCheatConfig<T>, secrets: AuthoritySecrets<T>, state: S, voted: usize) -> Result<Self> {
        let mut session = Self::with_secrets(config, secrets)?;
        if session.variant != Variant::Distributed || voted > session.voters {
            return Err(Error::Precondition("resume needs a distributed ballot and voted <= N".into()));
        }
        if state.layout().len() != session.voters + voted {
            return Err(Error::DimensionMismatch { expected: session.voters + voted, found: state.layout().len() });
        }
        session.state = state;
        session.voted[..voted].iter_mut().for_each(|v| *v = true);
        Ok(session)
    }

    pub fn state(&self) -> &S {
        &self.state
    }

    pub fn secrets(&self) -> &AuthoritySecrets<T> {
        &self.secrets
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn voters(&self) -> usize {
        self.voters
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn transcript(&self) -> &[VoterTranscriptEntry] {
        &self.entries
    }

    /// The pair of voting qudits handed to every voter.
    pub fn voting_qudits(&self) -> (Vec<C<T>>, Vec<C<T>>) {
        (
            ops::phase_state(self.dim, self.secrets.theta(Choice::Yes, self.dim)),
            ops::phase_state(self.dim, self.secrets.theta(Choice::No, self.dim)),
        )
    }

    /// The register a voter's ballot operations act on.
    pub fn ballot_register(&self, voter: usize) -> usize {
        match self.variant {
            Variant::Distributed => voter,
            Variant::Traveling => 1,
        }
    }

    fn check_voter(&self, voter: usize) -> Result<()> {
        if voter >= self.voters {
            return Err(Error::Precondition(format!("voter {voter} is not one of the {} voters", self.voters)));
        }
        if self.voted[voter] {
            return Err(Error::Protocol(format!("voter {voter} has already voted")));
        }
        if self.corrected {
            return Err(Error::Protocol("the ballot was already corrected by the authority".into()));
        }
        Ok(())
    }

    /// Honest vote with the voting qudit matching `choice`; returns the announced `r`.
    pub fn vote(&mut self, voter: usize, choice: Choice, rng: &mut SimRng) -> Result<usize> {
        let theta = self.secrets.theta(choice, self.dim);
        self.vote_with_angle(voter, theta, Some(choice), ROutcome::Sample(rng)).map(|(r, _)| r)
    }

    /// Runs the voting step with `|psi(theta)>` for an arbitrary angle.
    ///
    /// Returns the announced `r` and its probability.
    pub fn vote_with_angle(
        &mut self,
        voter: usize,
        theta: T,
        hidden: Option<Choice>,
        outcome: ROutcome<'_>,
    ) -> Result<(usize, T)> {
        self.check_voter(voter)?;
        let d = self.dim;
        let b = self.ballot_register(voter);
        let joined = self.state.attach(d, &ops::phase_state(d, theta))?;
        let v = joined.layout().len() - 1;
        let meas = r_measurement(d)?;
        let (r, p, state) = match outcome {
            ROutcome::Sample(rng) => {
                let m = joined.measure(&[b, v], &meas, rng)?;
                (m.outcome, m.probability, m.state)
            }
            ROutcome::Forced(r) => {
                if r >= d {
                    return Err(Error::Precondition(format!("outcome r={r} outside [0, D={d})")));
                }
                let (p, s) = joined.collapse(&[b, v], &meas, r)?;
                (r, p, s)
            }
        };
        self.state = match self.variant {
            Variant::Distributed => state.apply_local(v, &ops::shift(d, r as i64))?,
            Variant::Traveling => state
                .apply_local(0, &w_correction(d, r, self.secrets.delta))?
                .apply_joint(&[b, v], &u_disentangle(d, r))?
                .detach(v, 0)?,
        };
        self.voted[voter] = true;
        self.entries.push(VoterTranscriptEntry { voter, announced_r: r, vote_hidden: hidden });
        Ok((r, p))
    }

    /// Distribution of `r` if `voter` voted now with angle `theta`.
    pub fn r_distribution(&self, voter: usize, theta: T) -> Result<Vec<T>> {
        self.check_voter(voter)?;
        let b = self.ballot_register(voter);
        let joined = self.state.attach(self.dim, &ops::phase_state(self.dim, theta))?;
        let v = joined.layout().len() - 1;
        joined.outcome_probabilities(&[b, v], &r_measurement(self.dim)?)
    }

    /// Applies `op` to the voter's ballot register (used by dishonest voters).
    pub fn apply_to_ballot(&mut self, voter: usize, op: &Matrix<T>) -> Result<()> {
        self.state = self.state.apply_local(self.ballot_register(voter), op)?;
        Ok(())
    }

    /// Applies `W = prod_k W_{r_k}` (distributed) and removes `e^{i j N theta_n}`.
    pub fn authority_correct(&mut self) -> Result<()> {
        if self.corrected {
            return Err(Error::Protocol("corrections were already applied".into()));
        }
        if let Some(missing) = self.voted.iter().position(|v| !v) {
            return Err(Error::Protocol(format!("voter {missing} has not announced r")));
        }
        let d = self.dim;
        let reg = self.correction_register;
        if self.variant == Variant::Distributed {
            let mut w = Matrix::identity(d);
            for e in &self.entries {
                w = w.matmul(&w_correction(d, e.announced_r, self.secrets.delta));
            }
            self.state = self.state.apply_local(reg, &w)?;
        }
        let n_theta = T::from_usize_lossy(self.voters) * self.secrets.theta(Choice::No, d);
        self.state = self.state.apply_local(reg, &ops::phase_ramp(d, -n_theta))?;
        self.corrected = true;
        Ok(())
    }

    fn readout_measurement(&self) -> Result<(Vec<usize>, ProjectiveMeasurement<T>)> {
        if !self.corrected {
            return Err(Error::Protocol("readout requires the authority corrections".into()));
        }
        let n = self.state.layout().len();
        Ok(((0..n).collect(), ghz_phase_readout(self.dim, n)?))
    }

    /// Probabilities of `q = 0..D-1` followed by the error outcome.
    pub fn readout_distribution(&self) -> Result<Vec<T>> {
        let (regs, meas) = self.readout_measurement()?;
        let mut p = self.state.outcome_probabilities(&regs, &meas)?;
        if p.len() == self.dim {
            p.push(T::zero());
        }
        Ok(p)
    }

    /// Measures `{M_q}` plus the error projector.
    pub fn authority_readout(&self, rng: &mut SimRng) -> Result<ReadoutResult> {
        let (regs, meas) = self.readout_measurement()?;
        let out = self.state.measure(&regs, &meas, rng)?;
        Ok(ReadoutResult::interpret(out.outcome, self.dim, self.secrets.step(), self.voters))
    }
}

/// Outcome of several rounds with identical votes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatedResult {
    pub rounds: Vec<ReadoutResult>,
    pub cheat_detected: bool,
}

impl RepeatedResult {
    /// Flags cheating when any round flags or two rounds disagree.
    pub fn aggregate(rounds: Vec<ReadoutResult>) -> Self {
        let flagged = rounds.iter().any(|r| r.cheat_detected);
        let disagree = rounds.windows(2).any(|w| w[0].q != w[1].q);
        Self { cheat_detected: flagged || disagree, rounds }
    }
}

fn honest_round<S: QuantumState<T>, T: Scalar>(
    config: &AntiCheatConfig<T>,
    secrets: AuthoritySecrets<T>,
    votes: &[usize],
    rng: &mut SimRng,
) -> Result<ReadoutResult> {
    let mut session = Session::<S, T>::with_secrets(config, secrets)?;
    for (v, &b) in votes.iter().enumerate() {
        session.vote(v, Choice::from_bit(b), rng)?;
    }
    session.authority_correct()?;
    session.authority_readout(rng)
}

fn check_votes(voters: usize, votes: &[usize]) -> Result<()> {
    if votes.len() != voters {
        return Err(Error::Precondition(format!("expected {voters} votes, got {}", votes.len())));
    }
    if votes.iter().any(|&b| b > 1) {
        return Err(Error::Precondition("votes must be 0 (no) or 1 (yes)".into()));
    }
    Ok(())
}

/// One honest round.
pub fn run_honest<T: Scalar>(
    config: &AntiCheatConfig<T>,
    votes: &[usize],
    backend: Backend,
    rng: &mut SimRng,
) -> Result<ReadoutResult> {
    Ok(run_repeated(config, votes, 1, backend, rng)?.rounds[0])
}

/// `k` honest rounds sharing the same secrets; voters vote identically each round.
pub fn run_repeated<T: Scalar>(
    config: &AntiCheatConfig<T>,
    votes: &[usize],
    k: usize,
    backend: Backend,
    rng: &mut SimRng,
) -> Result<RepeatedResult> {
    if k == 0 {
        return Err(Error::Precondition("at least one repetition is required (K >= 1)".into()));
    }
    config.validate()?;
    check_votes(config.voters, votes)?;
    let delta = config.delta.unwrap_or_else(|| AuthoritySecrets::random_delta(config.dim, rng));
    let secrets = AuthoritySecrets::new(config.l_y, config.l_n, delta, config.dim, config.voters)?;
    let rounds = (0..k)
        .map(|_| match backend {
            Backend::Dense => honest_round::<DenseState<T>, T>(config, secrets, votes, rng),
            Backend::Branch => honest_round::<BranchState<T>, T>(config, secrets, votes, rng),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RepeatedResult::aggregate(rounds))
}

#[cfg(test)]
mod tests {
    use super::*;

    type Dense = Session<DenseState<f64>, f64>;
    type Branchy = Session<BranchState<f64>, f64>;

    #[test]
    fn secrets_preconditions() {
        assert!(AuthoritySecrets::new(1, 0, 0.3, 8, 3).is_ok());
        let err = AuthoritySecrets::new(2, 0, 0.1, 4, 3).unwrap_err();
        assert!(err.to_string().contains("(l_y-l_n)N < D"));
        assert!(AuthoritySecrets::new(1, 1, 0.1, 8, 3).is_err());
        assert!(AuthoritySecrets::new(1, 0, 1.0, 8, 3).is_err());
    }

    #[test]
    fn random_secrets_are_legal() {
        let mut rng = SimRng::new(4);
        for _ in 0..200 {
            let s = AuthoritySecrets::<f64>::random(9, 4, &mut rng).unwrap();
            assert!(s.step() * 4 < 9 && s.l_y < 9);
        }
    }

    #[test]
    fn r_projectors_form_a_complete_measurement() {
        assert!(r_measurement::<f64>(4).is_ok());
    }

    #[test]
    fn disentangler_example() {
        let d = 4;
        for r in 0..d {
            let u = u_disentangle::<f64>(d, r);
            assert!(u.is_unitary(1e-12));
            for j in 0..d {
                let v = (j + d - r) % d;
                assert_eq!(u[(j * d, j * d + v)].re, 1.0);
            }
        }
    }

    #[test]
    fn r_zero_leaves_no_wrap_terms() {
        let d = 5;
        let cfg = AntiCheatConfig::new(d, 2, 1, 0).with_delta(0.2);
        let mut s = Dense::setup(&cfg, &mut SimRng::new(0)).unwrap();
        let theta = s.secrets().theta(Choice::Yes, d);
        s.vote_with_angle(0, theta, Some(Choice::Yes), ROutcome::Forced(0)).unwrap();
        let expected = DenseState::uniform_ghz(d, 3).unwrap().apply_local(0, &ops::phase_ramp(d, theta)).unwrap();
        assert!(s.state().max_deviation_up_to_phase(&expected).unwrap() < 1e-12);
    }

    #[test]
    fn r_is_uniform() {
        let cfg = AntiCheatConfig::new(3, 2, 1, 0).with_delta(0.5);
        let s = Dense::setup(&cfg, &mut SimRng::new(0)).unwrap();
        for choice in [Choice::Yes, Choice::No] {
            for p in s.r_distribution(0, s.secrets().theta(choice, 3)).unwrap() {
                assert!((p - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn honest_run_reaches_omega() {
        let cfg = AntiCheatConfig::new(8, 3, 1, 0).with_delta(0.37);
        let mut rng = SimRng::new(11);
        let mut s = Dense::setup(&cfg, &mut rng).unwrap();
        for (v, c) in [Choice::Yes, Choice::No, Choice::Yes].into_iter().enumerate() {
            s.vote(v, c, &mut rng).unwrap();
        }
        s.authority_correct().unwrap();
        let omega = omega_state(8, 6, 2).unwrap();
        assert!(s.state().max_deviation_up_to_phase(&omega).unwrap() < 1e-12);
        let res = s.authority_readout(&mut rng).unwrap();
        assert_eq!(res, ReadoutResult { q: Some(2), m_inferred: Some(2), cheat_detected: false });
    }

    #[test]
    fn correction_register_is_immaterial() {
        let mut states = Vec::new();
        for reg in 0..4 {
            let cfg = AntiCheatConfig::new(5, 2, 2, 0).with_delta(0.9).with_correction_register(reg);
            let mut rng = SimRng::new(5);
            let mut s = Branchy::setup(&cfg, &mut rng).unwrap();
            s.vote(0, Choice::Yes, &mut rng).unwrap();
            s.vote(1, Choice::No, &mut rng).unwrap();
            s.authority_correct().unwrap();
            states.push(s.state().to_dense().unwrap());
        }
        for s in &states[1..] {
            assert!(s.max_deviation_up_to_phase(&states[0]).unwrap() < 1e-12);
        }
    }

    #[test]
    fn double_vote_and_missing_announcement_rejected() {
        let cfg = AntiCheatConfig::new(5, 2, 1, 0);
        let mut rng = SimRng::new(1);
        let mut s = Branchy::setup(&cfg, &mut rng).unwrap();
        s.vote(0, Choice::Yes, &mut rng).unwrap();
        assert!(s.vote(0, Choice::Yes, &mut rng).is_err());
        assert!(s.authority_correct().is_err());
    }

    #[test]
    fn traveling_disentangles_voting_qudit() {
        let cfg = AntiCheatConfig::new(6, 3, 1, 0).with_delta(0.4).with_variant(Variant::Traveling);
        let mut rng = SimRng::new(9);
        let mut s = Branchy::setup(&cfg, &mut rng).unwrap();
        for (v, c) in [Choice::Yes, Choice::Yes, Choice::No].into_iter().enumerate() {
            s.vote(v, c, &mut rng).unwrap();
            assert_eq!(s.state().layout().len(), 2);
            assert_eq!(s.state().branch_count(), 6);
        }
        s.authority_correct().unwrap();
        assert_eq!(s.authority_readout(&mut rng).unwrap().m_inferred, Some(2));
    }

    #[test]
    fn illegal_readout_flags_cheating() {
        let r = ReadoutResult::interpret(1, 8, 2, 3);
        assert!(r.cheat_detected && r.m_inferred.is_none());
        assert!(ReadoutResult::interpret(8, 8, 1, 3).cheat_detected);
        assert!(ReadoutResult::interpret(6, 8, 2, 3).m_inferred == Some(3));
    }

    #[test]
    fn repeated_aggregation() {
        let ok = ReadoutResult::interpret(2, 8, 1, 3);
        let other = ReadoutResult::interpret(3, 8, 1, 3);
        assert!(!RepeatedResult::aggregate(vec![ok]).cheat_detected);
        assert!(!RepeatedResult::aggregate(vec![ok; 5]).cheat_detected);
        assert!(RepeatedResult::aggregate(vec![ok, other]).cheat_detected);
        let r = run_repeated::<f64>(&AntiCheatConfig::new(8, 3, 2, 0), &[1, 1, 0], 5, Backend::Branch, &mut SimRng::new(2));
        let r = r.unwrap();
        assert!(!r.cheat_detected);
        assert!(r.rounds.iter().all(|x| x.q == Some(4)));
    }
}
