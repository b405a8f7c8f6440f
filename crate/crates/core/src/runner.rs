//! Scenario files, their execution and the reports.
//!
//! A scenario is a flat `key = value` document split into `[protocol]`, `[attack]`
//! and `[run]` sections. Lists are comma separated, angles are in radians and
//! `#` starts a comment. Every precondition of the selected scheme is checked at
//! parse time, so a parsed [`ScenarioConfig`] only fails at run time on resource
//! budgets.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::adversary::{
    self, analytic_distribution, check_pairing, exact_pq, run_cheater_attack, AttackKind, AttackParams,
    AttackReport, CheaterScenario, EntanglingAttack, Estimates, Histogram, PhaseSampler,
};
use crate::anticheat::{omega_state, run_repeated, AntiCheatConfig, AuthoritySecrets, Variant};
use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::group::{check_protocol_ready, run_group_traveling, FiniteGroup, Representation};
use crate::protocols::{
    ghz_phase_state, run_broadcast, run_classical_baseline, run_distributed, run_dolev, run_survey, run_traveling,
    traveling_basis_vector, ProtocolConfig, Scheme, TallyResult, VoteVector,
};
use crate::rng::SimRng;
use crate::scalar::C;

/// Tolerance of the exact invariants checked by `verify`.
pub const INVARIANT_TOLERANCE: f64 = 1e-12;

/// Schemes a scenario can select.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioScheme {
    Traveling,
    Distributed,
    Dolev,
    Broadcast,
    Survey,
    ClassicalBaseline,
    AntiCheat,
    Group,
}

impl ScenarioScheme {
    pub const ALL: [ScenarioScheme; 8] = [
        ScenarioScheme::Traveling,
        ScenarioScheme::Distributed,
        ScenarioScheme::Dolev,
        ScenarioScheme::Broadcast,
        ScenarioScheme::Survey,
        ScenarioScheme::ClassicalBaseline,
        ScenarioScheme::AntiCheat,
        ScenarioScheme::Group,
    ];

    pub fn name(self) -> &'static str {
        match self.protocol() {
            Some(s) => s.name(),
            None if self == ScenarioScheme::AntiCheat => "anti-cheat",
            None => "group",
        }
    }

    /// The plain voting scheme, if this is one.
    pub fn protocol(self) -> Option<Scheme> {
        match self {
            ScenarioScheme::Traveling => Some(Scheme::Traveling),
            ScenarioScheme::Distributed => Some(Scheme::Distributed),
            ScenarioScheme::Dolev => Some(Scheme::Dolev),
            ScenarioScheme::Broadcast => Some(Scheme::Broadcast),
            ScenarioScheme::Survey => Some(Scheme::Survey),
            ScenarioScheme::ClassicalBaseline => Some(Scheme::ClassicalBaseline),
            ScenarioScheme::AntiCheat | ScenarioScheme::Group => None,
        }
    }
}

impl fmt::Display for ScenarioScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioScheme {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = if s == "classical" { "classical-baseline" } else { s };
        ScenarioScheme::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            format!("unknown scheme '{s}' (expected traveling, distributed, dolev, broadcast, survey, classical-baseline, anti-cheat or group)")
        })
    }
}

/// Backend selection, including running both and comparing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    Dense,
    Branch,
    Both,
}

impl BackendChoice {
    pub fn backends(self) -> Vec<Backend> {
        match self {
            BackendChoice::Dense => vec![Backend::Dense],
            BackendChoice::Branch => vec![Backend::Branch],
            BackendChoice::Both => vec![Backend::Dense, Backend::Branch],
        }
    }
}

impl FromStr for BackendChoice {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dense" => Ok(BackendChoice::Dense),
            "branch" => Ok(BackendChoice::Branch),
            "both" => Ok(BackendChoice::Both),
            _ => Err(format!("unknown backend '{s}' (expected dense, branch or both)")),
        }
    }
}

impl fmt::Display for BackendChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendChoice::Dense => "dense",
            BackendChoice::Branch => "branch",
            BackendChoice::Both => "both",
        })
    }
}

/// Source of the cheater's angle estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaMode {
    Sampled,
    Fixed,
}

/// Named joint unitaries for the entangling attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnitaryKind {
    Identity,
    Swap,
    UniformSwap,
    Product,
    Random,
}

impl FromStr for UnitaryKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "identity" => Ok(UnitaryKind::Identity),
            "swap" => Ok(UnitaryKind::Swap),
            "uniform-swap" => Ok(UnitaryKind::UniformSwap),
            "product" => Ok(UnitaryKind::Product),
            "random" => Ok(UnitaryKind::Random),
            _ => Err(format!("unknown unitary '{s}' (expected identity, swap, uniform-swap, product or random)")),
        }
    }
}

/// The `[attack]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub target: usize,
    pub pairing: Vec<(usize, usize)>,
    pub repair: bool,
    pub s: usize,
    pub theta_mode: ThetaMode,
    pub theta_y: Option<f64>,
    pub theta_n: Option<f64>,
    /// Honest yes count for the Monte Carlo cheater; without it the full protocol runs.
    pub m: Option<usize>,
    pub unitary: UnitaryKind,
    pub ancilla_dim: Option<usize>,
}

/// A parsed and validated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scheme: ScenarioScheme,
    pub dim: usize,
    pub voters: usize,
    pub votes: Option<Vec<usize>>,
    /// Draw fresh binary votes per trial with this yes probability.
    pub yes_probability: Option<f64>,
    pub sender: Option<usize>,
    pub message: Option<usize>,
    pub l_y: usize,
    pub l_n: usize,
    pub delta: Option<f64>,
    pub variant: Variant,
    pub group: Option<String>,
    pub choices: Option<Vec<usize>>,
    pub backend: BackendChoice,
    pub attack: Option<AttackSpec>,
    pub repetitions: usize,
    pub trials: u64,
    pub seed: u64,
}

const PROTOCOL_KEYS: &[&str] = &[
    "scheme", "dim", "voters", "votes", "yes_probability", "sender", "message", "l_y", "l_n", "delta", "variant",
    "group", "choices",
];
const ATTACK_KEYS: &[&str] =
    &["kind", "target", "pairing", "repair", "s", "theta_mode", "theta_y", "theta_n", "m", "unitary", "ancilla_dim"];
const RUN_KEYS: &[&str] = &["backend", "seed", "trials", "repetitions"];

/// Raw `key = value` entries with their line numbers.
struct Document {
    entries: HashMap<(String, String), (usize, String)>,
    attack_line: Option<usize>,
}

impl Document {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        let mut section: Option<String> = None;
        let mut attack_line = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(name) = body.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Parse { line, message: format!("malformed section header '{body}'") })?
                    .trim();
                if !["protocol", "attack", "run"].contains(&name) {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown section [{name}] (expected [protocol], [attack] or [run])"),
                    });
                }
                if name == "attack" {
                    attack_line = Some(line);
                }
                section = Some(name.to_string());
                continue;
            }
            let sec = section
                .clone()
                .ok_or_else(|| Error::Parse { line, message: "key outside a section; start with [protocol]".into() })?;
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| Error::Parse { line, message: format!("expected 'key = value', found '{body}'") })?;
            let key = key.trim().to_string();
            let known = match sec.as_str() {
                "protocol" => PROTOCOL_KEYS,
                "attack" => ATTACK_KEYS,
                _ => RUN_KEYS,
            };
            if !known.contains(&key.as_str()) {
                return Err(Error::Parse { line, message: format!("unknown key '{key}' in [{sec}]") });
            }
            if let Some((first, _)) = entries.insert((sec.clone(), key.clone()), (line, value.trim().to_string())) {
                return Err(Error::Parse { line, message: format!("duplicate key '{key}' (first set on line {first})") });
            }
        }
        Ok(Self { entries, attack_line })
    }

    fn raw(&self, sec: &str, key: &str) -> Option<&(usize, String)> {
        self.entries.get(&(sec.to_string(), key.to_string()))
    }

    fn line(&self, sec: &str, key: &str) -> usize {
        self.raw(sec, key).map_or(0, |(l, _)| *l)
    }

    fn get<V: FromStr>(&self, sec: &str, key: &str) -> Result<Option<V>>
    where
        V::Err: fmt::Display,
    {
        match self.raw(sec, key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<V>()
                .map(Some)
                .map_err(|e| Error::Parse { line: *line, message: format!("{key}: cannot parse '{v}': {e}") }),
        }
    }

    fn list<V: FromStr>(&self, sec: &str, key: &str) -> Result<Option<Vec<V>>>
    where
        V::Err: fmt::Display,
    {
        match self.raw(sec, key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<V>()
                        .map_err(|e| Error::Parse { line: *line, message: format!("{key}: cannot parse '{t}': {e}") })
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    fn pairs(&self, sec: &str, key: &str) -> Result<Vec<(usize, usize)>> {
        let Some((line, v)) = self.raw(sec, key) else { return Ok(Vec::new()) };
        v.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                let bad = || Error::Parse { line: *line, message: format!("{key}: expected 'i-j', found '{t}'") };
                let (a, b) = t.split_once('-').ok_or_else(bad)?;
                Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
            })
            .collect()
    }
}

/// Parses and validates a scenario.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let doc = Document::parse(text)?;
    let scheme: ScenarioScheme = doc
        .get("protocol", "scheme")?
        .ok_or(Error::Parse { line: 0, message: "missing [protocol] scheme".into() })?;
    let choices = doc.list("protocol", "choices")?;
    let group: Option<String> = doc.get("protocol", "group")?;
    let (dim, voters) = if scheme == ScenarioScheme::Group {
        let spec = group.as_deref().unwrap_or("klein4");
        let rep = representation(spec).map_err(|e| at(doc.line("protocol", "group"), "group", e))?;
        (rep.dim(), choices.as_ref().map_or(0, Vec::len))
    } else {
        let dim = doc.get("protocol", "dim")?.ok_or(Error::Parse { line: 0, message: "missing [protocol] dim".into() })?;
        let voters =
            doc.get("protocol", "voters")?.ok_or(Error::Parse { line: 0, message: "missing [protocol] voters".into() })?;
        (dim, voters)
    };
    let attack = match doc.attack_line {
        None => None,
        Some(line) => Some(AttackSpec {
            kind: doc.get("attack", "kind")?.ok_or(Error::Parse { line, message: "missing [attack] kind".into() })?,
            target: doc.get("attack", "target")?.unwrap_or(0),
            pairing: doc.pairs("attack", "pairing")?,
            repair: doc.get("attack", "repair")?.unwrap_or(true),
            s: doc.get("attack", "s")?.unwrap_or(1),
            theta_mode: match doc.get::<String>("attack", "theta_mode")?.as_deref() {
                None | Some("sampled") => ThetaMode::Sampled,
                Some("fixed") => ThetaMode::Fixed,
                Some(other) => {
                    return Err(Error::Parse {
                        line: doc.line("attack", "theta_mode"),
                        message: format!("theta_mode: expected sampled or fixed, found '{other}'"),
                    })
                }
            },
            theta_y: doc.get("attack", "theta_y")?,
            theta_n: doc.get("attack", "theta_n")?,
            m: doc.get("attack", "m")?,
            unitary: doc.get("attack", "unitary")?.unwrap_or(UnitaryKind::Swap),
            ancilla_dim: doc.get("attack", "ancilla_dim")?,
        }),
    };
    let variant = match doc.get::<String>("protocol", "variant")?.as_deref() {
        None | Some("distributed") => Variant::Distributed,
        Some("traveling") => Variant::Traveling,
        Some(other) => {
            return Err(Error::Parse {
                line: doc.line("protocol", "variant"),
                message: format!("variant: expected distributed or traveling, found '{other}'"),
            })
        }
    };
    let config = ScenarioConfig {
        scheme,
        dim,
        voters,
        votes: doc.list("protocol", "votes")?,
        yes_probability: doc.get("protocol", "yes_probability")?,
        sender: doc.get("protocol", "sender")?,
        message: doc.get("protocol", "message")?,
        l_y: doc.get("protocol", "l_y")?.unwrap_or(1),
        l_n: doc.get("protocol", "l_n")?.unwrap_or(0),
        delta: doc.get("protocol", "delta")?,
        variant,
        group,
        choices,
        backend: doc.get("run", "backend")?.unwrap_or(BackendChoice::Branch),
        attack,
        repetitions: doc.get("run", "repetitions")?.unwrap_or(1),
        trials: doc.get("run", "trials")?.unwrap_or(1),
        seed: doc.get("run", "seed")?.unwrap_or(0),
    };
    config.validate().map_err(|(sec, key, e)| at(doc.line(sec, key).max(doc.line("protocol", "scheme")), key, e))?;
    Ok(config)
}

fn at(line: usize, field: &str, e: Error) -> Error {
    match e {
        Error::Parse { .. } => e,
        other => Error::Parse { line, message: format!("{field}: {other}") },
    }
}

type Violation = (&'static str, &'static str, Error);

fn fail(sec: &'static str, key: &'static str, message: String) -> std::result::Result<(), Violation> {
    Err((sec, key, Error::Precondition(message)))
}

impl ScenarioConfig {
    /// Checks every precondition of the selected scheme and attack; names the offending field.
    fn validate(&self) -> std::result::Result<(), Violation> {
        let tag = |key: &'static str| move |e: Error| ("protocol", key, e);
        if self.trials == 0 && self.attack.as_ref().is_none_or(|a| a.kind != AttackKind::Cheater) {
            return fail("run", "trials", "at least one trial is required".into());
        }
        if self.repetitions == 0 {
            return fail("run", "repetitions", "at least one repetition is required (K >= 1)".into());
        }
        if let Some(p) = self.yes_probability {
            if !(0.0..=1.0).contains(&p) {
                return fail("protocol", "yes_probability", format!("{p} is not a probability"));
            }
            if self.votes.is_some() {
                return fail("protocol", "yes_probability", "give either votes or yes_probability".into());
            }
        }
        let attack_ballot = self.attack.as_ref().is_some_and(|a| a.kind != AttackKind::Cheater);
        match self.scheme {
            ScenarioScheme::Group => {
                let spec = self.group.as_deref().unwrap_or("klein4");
                let rep = representation(spec).map_err(tag("group"))?;
                let choices = self.choices.as_ref().ok_or(("protocol", "choices", missing("choices")))?;
                if choices.is_empty() {
                    return fail("protocol", "choices", "at least one party is required".into());
                }
                if let Some(&g) = choices.iter().find(|&&g| g >= rep.group().order()) {
                    return fail("protocol", "choices", format!("element {g} outside a group of order {}", rep.group().order()));
                }
            }
            ScenarioScheme::AntiCheat => {
                let mut ac = AntiCheatConfig::new(self.dim, self.voters, self.l_y, self.l_n).with_variant(self.variant);
                if let Some(d) = self.delta {
                    ac = ac.with_delta(d);
                }
                ac.validate().map_err(tag("l_y"))?;
                self.check_binary_votes()?;
            }
            ScenarioScheme::Broadcast => {
                ProtocolConfig::new(Scheme::Broadcast, self.dim, self.voters).validate().map_err(tag("dim"))?;
                let sender = self.sender.ok_or(("protocol", "sender", missing("sender")))?;
                if sender >= self.voters {
                    return fail("protocol", "sender", format!("sender {sender} is not one of the {} parties", self.voters));
                }
                if self.message.ok_or(("protocol", "message", missing("message")))? >= self.dim {
                    return fail("protocol", "message", format!("message must be below D={}", self.dim));
                }
            }
            other => {
                let scheme = other.protocol().expect("plain voting scheme");
                let pc = ProtocolConfig::new(scheme, self.dim, self.voters);
                if attack_ballot {
                    // Attack ballots report the tally mod D and only need D >= 2.
                    if self.voters == 0 || self.dim < 2 {
                        return fail("protocol", "dim", "attack ballots need D >= 2 and N >= 1".into());
                    }
                } else {
                    pc.validate().map_err(tag("dim"))?;
                }
                match (&self.votes, self.yes_probability) {
                    (Some(v), _) => {
                        let votes = if scheme == Scheme::Survey {
                            VoteVector::multiplicities(v.clone())
                        } else {
                            VoteVector::binary(v.clone())
                        }
                        .map_err(tag("votes"))?;
                        if attack_ballot {
                            if votes.len() != self.voters {
                                return fail("protocol", "votes", format!("expected {} votes, got {}", self.voters, votes.len()));
                            }
                        } else {
                            pc.check_votes(&votes).map_err(tag("votes"))?;
                        }
                    }
                    (None, Some(_)) if scheme == Scheme::Survey => {
                        return fail("protocol", "yes_probability", "survey scenarios need explicit votes".into())
                    }
                    (None, Some(_)) => {}
                    (None, None) => return Err(("protocol", "votes", missing("votes"))),
                }
            }
        }
        if let Some(a) = &self.attack {
            self.validate_attack(a)?;
        }
        Ok(())
    }

    /// Whether the protocol section fixes the per-trial inputs.
    fn has_inputs(&self) -> bool {
        self.votes.is_some() || self.yes_probability.is_some() || matches!(self.scheme, ScenarioScheme::Group | ScenarioScheme::Broadcast)
    }

    fn check_binary_votes(&self) -> std::result::Result<(), Violation> {
        match &self.votes {
            Some(v) => {
                if v.len() != self.voters {
                    return fail("protocol", "votes", format!("expected {} votes, got {}", self.voters, v.len()));
                }
                if v.iter().any(|&b| b > 1) {
                    return fail("protocol", "votes", "votes must be 0 (no) or 1 (yes)".into());
                }
                Ok(())
            }
            None if self.yes_probability.is_some() => Ok(()),
            // The Monte Carlo cheater draws its own honest ballots.
            None if self.attack.as_ref().is_some_and(|a| a.m.is_some()) => Ok(()),
            None => Err(("protocol", "votes", missing("votes"))),
        }
    }

    fn validate_attack(&self, a: &AttackSpec) -> std::result::Result<(), Violation> {
        let needs = |scheme: ScenarioScheme| -> std::result::Result<(), Violation> {
            if self.scheme != scheme {
                return fail("attack", "kind", format!("the {} attack needs the {scheme} scheme, not {}", a.kind, self.scheme));
            }
            Ok(())
        };
        match a.kind {
            AttackKind::Mitm => needs(ScenarioScheme::Traveling)?,
            AttackKind::Swap | AttackKind::Entangling => needs(ScenarioScheme::Distributed)?,
            AttackKind::ClassicalEavesdrop => needs(ScenarioScheme::ClassicalBaseline)?,
            AttackKind::Cheater => {
                needs(ScenarioScheme::AntiCheat)?;
                if a.m.is_some() {
                    if self.voters + 1 != self.dim || self.l_y != 1 || self.l_n != 0 {
                        return fail("attack", "m", "the Monte Carlo cheater needs D=N+1, l_y=1 and l_n=0".into());
                    }
                    adversary::analytic_pq(self.dim, a.s, a.m.unwrap_or(0), 0).map_err(|e| ("attack", "s", e))?;
                } else {
                    if self.trials == 0 {
                        return fail("run", "trials", "at least one trial is required".into());
                    }
                    if self.votes.is_none() {
                        return fail("protocol", "votes", "the cheater attack needs explicit votes".into());
                    }
                    if a.s == 0 || a.s >= self.dim {
                        return fail("attack", "s", format!("s must be in [1, D) (s = 0 is an honest vote), got {}", a.s));
                    }
                }
                if a.theta_mode == ThetaMode::Fixed && (a.theta_y.is_none() || a.theta_n.is_none()) {
                    return fail("attack", "theta_mode", "fixed estimates need theta_y and theta_n".into());
                }
                if a.theta_mode == ThetaMode::Fixed && a.m.is_some() {
                    return fail("attack", "theta_mode", "the Monte Carlo cheater samples its estimates".into());
                }
            }
        }
        if a.kind != AttackKind::Cheater || a.m.is_none() {
            if a.target >= self.voters {
                return fail("attack", "target", format!("target {} is not one of the {} voters", a.target, self.voters));
            }
            if a.kind != AttackKind::Cheater && self.votes.is_none() {
                return fail("protocol", "votes", "attacks need explicit votes".into());
            }
        }
        check_pairing(&a.pairing, self.voters).map_err(|e| ("attack", "pairing", e))?;
        if !a.pairing.is_empty() && !matches!(a.kind, AttackKind::Swap | AttackKind::Entangling) {
            return fail("attack", "pairing", "pair checks apply to the distributed swap and entangling attacks".into());
        }
        if a.ancilla_dim == Some(0) {
            return fail("attack", "ancilla_dim", "the ancilla needs dimension >= 1".into());
        }
        Ok(())
    }
}

fn missing(key: &str) -> Error {
    Error::Precondition(format!("missing '{key}'"))
}

/// `klein4` (Pauli, projective), `klein4-regular`, `s3` or `cyclic:<n>` (regular).
pub fn representation(spec: &str) -> Result<Representation<f64>> {
    match spec {
        "klein4" => Ok(Representation::pauli_klein4()),
        "klein4-regular" => Ok(Representation::regular(&FiniteGroup::klein4())),
        "s3" => Ok(Representation::regular(&FiniteGroup::s3())),
        _ => match spec.strip_prefix("cyclic:").map(str::parse::<usize>) {
            Some(Ok(n)) => Ok(Representation::regular(&FiniteGroup::cyclic(n)?)),
            _ => Err(Error::Precondition(format!(
                "unknown group '{spec}' (expected klein4, klein4-regular, s3 or cyclic:<n>)"
            ))),
        },
    }
}

/// CLI subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Runs the scenario (and its attack, if any).
    Run,
    /// Runs the invariant suite only.
    Verify,
    /// Enumerates every vote vector.
    Sweep,
    /// Runs the attack block.
    Attack,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Run => "run",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
            Command::Attack => "attack",
        })
    }
}

/// One named check and its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// One trial, as emitted on its own json line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: u64,
    pub votes: Vec<usize>,
    pub value: Option<usize>,
    pub expected: Option<usize>,
    pub detected: Option<bool>,
    pub leaked_vote: Option<usize>,
    pub outcome: Option<usize>,
}

impl TrialRecord {
    fn new(index: u64, votes: Vec<usize>) -> Self {
        Self { index, votes, value: None, expected: None, detected: None, leaked_vote: None, outcome: None }
    }
}

/// Aggregate results of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub command: Command,
    pub scenario: ScenarioConfig,
    pub seed: u64,
    pub trials: u64,
    /// Value shared by every trial, if they all agree.
    pub tally: Option<usize>,
    pub failures: u64,
    pub detection_frequency: Option<f64>,
    pub analytic_detection: Option<f64>,
    pub leak_accuracy: Option<f64>,
    pub tally_accuracy: Option<f64>,
    pub histogram: Vec<u64>,
    pub analytic_distribution: Option<Vec<f64>>,
    pub tv_distance: Option<f64>,
    pub max_backend_deviation: Option<f64>,
    pub invariants: Vec<InvariantCheck>,
}

/// Everything a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub summary: Summary,
    pub trials: Vec<TrialRecord>,
    /// Reported in the text format only, so json-lines output stays reproducible.
    pub wall_clock: Duration,
}

impl RunReport {
    /// Whether every invariant held.
    pub fn passed(&self) -> bool {
        self.summary.invariants.iter().all(|c| c.passed)
    }
}

/// A json-lines record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum Record {
    Trial(TrialRecord),
    Summary(Box<Summary>),
}

/// Output formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Text,
    JsonLines,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "text" => Ok(Format::Text),
            "json-lines" | "jsonl" => Ok(Format::JsonLines),
            _ => Err(format!("unknown format '{s}' (expected text or json-lines)")),
        }
    }
}

struct Builder {
    summary: Summary,
    trials: Vec<TrialRecord>,
}

impl Builder {
    fn new(command: Command, config: &ScenarioConfig) -> Self {
        Self {
            summary: Summary {
                command,
                scenario: config.clone(),
                seed: config.seed,
                trials: 0,
                tally: None,
                failures: 0,
                detection_frequency: None,
                analytic_detection: None,
                leak_accuracy: None,
                tally_accuracy: None,
                histogram: Vec::new(),
                analytic_distribution: None,
                tv_distance: None,
                max_backend_deviation: None,
                invariants: Vec::new(),
            },
            trials: Vec::new(),
        }
    }

    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.summary.invariants.push(InvariantCheck { name: name.into(), passed, detail });
    }

    fn deviation(&mut self, dev: f64) {
        let cur = self.summary.max_backend_deviation.unwrap_or(0.0);
        self.summary.max_backend_deviation = Some(cur.max(dev));
    }

    /// Tallies checked against their expected values.
    fn tally_check(&mut self) {
        let fails = self.trials.iter().filter(|t| t.expected.is_some() && t.value != t.expected).count() as u64;
        self.summary.failures = fails;
        let checked = self.trials.iter().filter(|t| t.expected.is_some()).count();
        self.check("tally", fails == 0, format!("{fails} of {checked} trials disagree with the expected value"));
    }

    fn finish(mut self, start: Instant) -> RunReport {
        self.summary.trials = self.summary.trials.max(self.trials.len() as u64);
        let first = self.trials.first().and_then(|t| t.value);
        if self.trials.iter().all(|t| t.value == first) {
            self.summary.tally = first;
        }
        RunReport { summary: self.summary, trials: self.trials, wall_clock: start.elapsed() }
    }
}

/// Executes a validated scenario.
pub fn execute(config: &ScenarioConfig, command: Command) -> Result<RunReport> {
    let start = Instant::now();
    let mut b = Builder::new(command, config);
    match command {
        Command::Run => {
            if config.has_inputs() {
                run_trials(config, &mut b)?;
            }
            if config.attack.is_some() {
                run_attack(config, &mut b)?;
            }
        }
        Command::Verify => verify(config, &mut b)?,
        Command::Sweep => sweep(config, &mut b)?,
        Command::Attack => {
            if config.attack.is_none() {
                return Err(Error::Precondition("the scenario has no [attack] section".into()));
            }
            run_attack(config, &mut b)?;
        }
    }
    Ok(b.finish(start))
}

/// Per-trial votes and protocol seed, both functions of `(seed, trial)`.
fn trial_inputs(config: &ScenarioConfig, t: u64) -> (Vec<usize>, u64) {
    let mut rng = SimRng::new(config.seed).split(t);
    let votes = match (&config.votes, config.yes_probability) {
        (Some(v), _) => v.clone(),
        (None, Some(p)) => (0..config.voters).map(|_| usize::from(rng.uniform() < p)).collect(),
        (None, None) => Vec::new(),
    };
    (votes, rng.next_u64())
}

fn expected_value(config: &ScenarioConfig, votes: &[usize]) -> usize {
    match config.scheme {
        ScenarioScheme::Broadcast => config.message.unwrap_or(0),
        ScenarioScheme::AntiCheat => votes.iter().sum::<usize>() * (config.l_y - config.l_n),
        _ => votes.iter().sum(),
    }
}

fn protocol_run(config: &ScenarioConfig, votes: &[usize], seed: u64, record: bool, backend: Backend) -> Result<TallyResult<f64>> {
    let scheme = config.scheme.protocol().expect("plain voting scheme");
    let pc = ProtocolConfig::new(scheme, config.dim, config.voters).with_seed(seed).recording(record);
    match scheme {
        Scheme::Traveling => run_traveling(&pc, &VoteVector::binary(votes.to_vec())?, backend),
        Scheme::Distributed => run_distributed(&pc, &VoteVector::binary(votes.to_vec())?, backend),
        Scheme::Dolev => run_dolev(&pc, &VoteVector::binary(votes.to_vec())?, backend),
        Scheme::Broadcast => run_broadcast(&pc, config.sender.unwrap_or(0), config.message.unwrap_or(0), backend),
        Scheme::Survey => run_survey(&pc, &VoteVector::multiplicities(votes.to_vec())?, backend),
        Scheme::ClassicalBaseline => run_classical_baseline(&VoteVector::binary(votes.to_vec())?, &mut SimRng::new(seed)),
    }
}

/// Runs one trial on every selected backend; records backend disagreement.
fn one_trial(config: &ScenarioConfig, index: u64, votes: Vec<usize>, seed: u64, b: &mut Builder) -> Result<TrialRecord> {
    let mut rec = TrialRecord::new(index, votes.clone());
    rec.expected = Some(expected_value(config, &votes));
    let both = config.backend == BackendChoice::Both;
    match config.scheme {
        ScenarioScheme::AntiCheat => {
            let mut results = Vec::new();
            for backend in config.backend.backends() {
                let ac = anti_cheat_config(config);
                let r = run_repeated(&ac, &votes, config.repetitions, backend, &mut SimRng::new(seed))?;
                results.push(r);
            }
            if both {
                b.deviation(if results[0] == results[1] { 0.0 } else { 1.0 });
            }
            let r = &results[0];
            rec.value = r.rounds[0].q;
            rec.outcome = r.rounds[0].q;
            rec.detected = Some(r.cheat_detected);
            if r.rounds.iter().any(|x| x.q != rec.value) {
                rec.value = None;
            }
        }
        ScenarioScheme::Group => {
            let rep = representation(config.group.as_deref().unwrap_or("klein4"))?;
            let choices = config.choices.clone().unwrap_or_default();
            let mut results = Vec::new();
            for backend in config.backend.backends() {
                results.push(run_group_traveling(&rep, &choices, backend, &mut SimRng::new(seed))?);
            }
            if both {
                b.deviation(if results[0].element == results[1].element { 0.0 } else { 1.0 });
            }
            rec.votes = choices.clone();
            rec.value = Some(results[0].element);
            rec.expected = Some(rep.group().product(&choices));
        }
        _ => {
            let mut results = Vec::new();
            for backend in config.backend.backends() {
                results.push(protocol_run(config, &votes, seed, both, backend)?);
            }
            if both {
                let (d, r) = (&results[0], &results[1]);
                let mut dev: f64 = if d.value == r.value && d.announcements == r.announcements { 0.0 } else { 1.0 };
                for (x, y) in d.snapshots.iter().zip(&r.snapshots) {
                    dev = dev.max(x.max_deviation_up_to_phase(y)?);
                }
                b.deviation(dev);
            }
            rec.value = Some(results[0].value);
        }
    }
    Ok(rec)
}

fn anti_cheat_config(config: &ScenarioConfig) -> AntiCheatConfig<f64> {
    let ac = AntiCheatConfig::new(config.dim, config.voters, config.l_y, config.l_n).with_variant(config.variant);
    match config.delta {
        Some(d) => ac.with_delta(d),
        None => ac,
    }
}

fn backend_check(config: &ScenarioConfig, b: &mut Builder) {
    if config.backend == BackendChoice::Both {
        let dev = b.summary.max_backend_deviation.unwrap_or(0.0);
        b.check("backend-agreement", dev <= INVARIANT_TOLERANCE, format!("max dense/branch deviation {dev:.3e}"));
    }
}

fn run_trials(config: &ScenarioConfig, b: &mut Builder) -> Result<()> {
    for t in 0..config.trials {
        let (votes, seed) = trial_inputs(config, t);
        let rec = one_trial(config, t, votes, seed, b)?;
        b.trials.push(rec);
    }
    b.tally_check();
    backend_check(config, b);
    Ok(())
}

/// Every vote vector the scheme admits at this size.
fn all_inputs(config: &ScenarioConfig) -> Result<Vec<Vec<usize>>> {
    let n = config.voters;
    let radix = match config.scheme {
        ScenarioScheme::Survey => config.dim,
        ScenarioScheme::Group => representation(config.group.as_deref().unwrap_or("klein4"))?.group().order(),
        _ => 2,
    };
    let count = (radix as u128).checked_pow(n as u32).filter(|&c| c <= 1 << 20).ok_or_else(|| {
        Error::BudgetExceeded { requested: (radix as u128).saturating_pow(n as u32), limit: 1 << 20 }
    })?;
    let mut out = Vec::new();
    for k in 0..count as usize {
        let mut v = vec![0; n];
        let mut x = k;
        for slot in v.iter_mut().rev() {
            *slot = x % radix;
            x /= radix;
        }
        if config.scheme == ScenarioScheme::Survey && v.iter().sum::<usize>() >= config.dim {
            continue;
        }
        out.push(v);
    }
    Ok(out)
}

fn sweep(config: &ScenarioConfig, b: &mut Builder) -> Result<()> {
    let inputs = if config.scheme == ScenarioScheme::Broadcast {
        (0..config.voters).flat_map(|s| (0..config.dim).map(move |m| vec![s, m])).collect()
    } else {
        all_inputs(config)?
    };
    for (t, input) in inputs.into_iter().enumerate() {
        let (_, seed) = trial_inputs(config, t as u64);
        let rec = match config.scheme {
            ScenarioScheme::Broadcast => {
                let c = ScenarioConfig { sender: Some(input[0]), message: Some(input[1]), ..config.clone() };
                let mut r = one_trial(&c, t as u64, Vec::new(), seed, b)?;
                r.votes = input;
                r
            }
            ScenarioScheme::Group => {
                let c = ScenarioConfig { choices: Some(input.clone()), ..config.clone() };
                one_trial(&c, t as u64, input, seed, b)?
            }
            _ => one_trial(config, t as u64, input, seed, b)?,
        };
        b.trials.push(rec);
    }
    b.tally_check();
    backend_check(config, b);
    Ok(())
}

/// Largest entry of `|G - I|` for the Gram matrix of `vectors`.
pub fn gram_deviation(vectors: &[Vec<C<f64>>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, u) in vectors.iter().enumerate() {
        for (j, v) in vectors.iter().enumerate() {
            let g: C<f64> = u.iter().zip(v).map(|(a, b)| a.conj() * b).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - C::new(target, 0.0)).norm());
        }
    }
    worst
}

fn verify(config: &ScenarioConfig, b: &mut Builder) -> Result<()> {
    if !config.has_inputs() {
        return Err(Error::Precondition("verify needs votes or yes_probability".into()));
    }
    run_trials(config, b)?;
    let d = config.dim;
    match config.scheme {
        ScenarioScheme::Group => {
            let rep = representation(config.group.as_deref().unwrap_or("klein4"))?;
            let ready = check_protocol_ready(&rep);
            b.check("orthogonality", ready.ready, format!("max overlap of encoded states {:.3e}", ready.max_overlap));
        }
        ScenarioScheme::AntiCheat => {
            let regs = anti_cheat_config(config).final_registers();
            let basis = (0..d).map(|q| omega_state::<f64>(d, regs, q).map(|s| s.amps().to_vec())).collect::<Result<Vec<_>>>()?;
            let dev = gram_deviation(&basis);
            b.check("orthogonality", dev <= INVARIANT_TOLERANCE, format!("Omega_q Gram deviation {dev:.3e}"));
            let honest = b.trials.iter().all(|t| t.detected == Some(false) && t.value == t.expected);
            b.check("honest-determinism", honest, format!("{} trials x {} repetitions", b.trials.len(), config.repetitions));
        }
        ScenarioScheme::ClassicalBaseline => {}
        _ => {
            let (votes, seed) = trial_inputs(config, 0);
            let mut worst: f64 = 0.0;
            for backend in config.backend.backends() {
                worst = worst.max(protocol_run(config, &votes, seed, false, backend)?.max_privacy_distance());
            }
            b.check("privacy", worst <= INVARIANT_TOLERANCE, format!("max single-register distance from I/D {worst:.3e}"));
            let basis: Option<Vec<Vec<C<f64>>>> = match config.scheme {
                ScenarioScheme::Traveling => Some((0..d).map(|m| traveling_basis_vector(d, m)).collect()),
                ScenarioScheme::Distributed => Some(
                    (0..d)
                        .map(|q| ghz_phase_state::<f64>(d, config.voters, q).map(|s| s.amps().to_vec()))
                        .collect::<Result<Vec<_>>>()?,
                ),
                _ => None,
            };
            if let Some(basis) = basis {
                let dev = gram_deviation(&basis);
                b.check("orthogonality", dev <= INVARIANT_TOLERANCE, format!("readout basis Gram deviation {dev:.3e}"));
            }
        }
    }
    Ok(())
}

fn attack_params(config: &ScenarioConfig, spec: &AttackSpec, backend: Backend) -> AttackParams {
    AttackParams::new(config.dim)
        .with_trials(config.trials)
        .with_seed(config.seed)
        .with_backend(backend)
        .with_repair(spec.repair)
}

fn entangling_unitary(config: &ScenarioConfig, spec: &AttackSpec) -> Result<EntanglingAttack<f64>> {
    let d = config.dim;
    let de = spec.ancilla_dim.unwrap_or(d);
    // The attack's own randomness is separated from the trial streams.
    let mut rng = SimRng::with_stream(config.seed, u64::MAX);
    match spec.unitary {
        UnitaryKind::Identity => EntanglingAttack::identity(de, d),
        UnitaryKind::Swap => EntanglingAttack::swap(d),
        UnitaryKind::UniformSwap => EntanglingAttack::uniform_swap(d),
        UnitaryKind::Product => EntanglingAttack::random_product_form(de, d, &mut rng),
        UnitaryKind::Random => EntanglingAttack::random(de, d, &mut rng),
    }
}

fn eavesdrop_report(config: &ScenarioConfig, spec: &AttackSpec, backend: Backend) -> Result<AttackReport> {
    let votes = config.votes.clone().unwrap_or_default();
    let params = attack_params(config, spec, backend);
    match spec.kind {
        AttackKind::Mitm => adversary::run_mitm_traveling::<f64>(&params, &votes, spec.target),
        AttackKind::Swap => adversary::run_swap_attack::<f64>(&params, &votes, spec.target, &spec.pairing),
        AttackKind::Entangling => {
            let attack = entangling_unitary(config, spec)?;
            adversary::run_entangling_attack(&params, &votes, spec.target, &attack, &spec.pairing)
        }
        AttackKind::ClassicalEavesdrop => adversary::run_classical_eavesdrop(&votes, spec.target, config.trials, config.seed),
        AttackKind::Cheater => unreachable!("handled by the cheater path"),
    }
}

/// `|x - p| <= 3 sigma` for a binomial frequency, exact at `p` in `{0, 1}`.
pub fn within_three_sigma(freq: f64, p: f64, n: u64) -> bool {
    let sigma = (p * (1.0 - p) / n.max(1) as f64).sqrt();
    (freq - p).abs() <= 3.0 * sigma + 1e-12
}

fn run_attack(config: &ScenarioConfig, b: &mut Builder) -> Result<()> {
    let spec = config.attack.clone().expect("attack section present");
    if spec.kind == AttackKind::Cheater {
        return run_cheater(config, &spec, b);
    }
    let mut reports = Vec::new();
    let backends = if spec.kind == AttackKind::ClassicalEavesdrop { vec![Backend::Branch] } else { config.backend.backends() };
    for backend in backends {
        reports.push(eavesdrop_report(config, &spec, backend)?);
    }
    if reports.len() == 2 {
        b.deviation(if reports[0] == reports[1] { 0.0 } else { 1.0 });
    }
    let report = &reports[0];
    let votes = config.votes.clone().unwrap_or_default();
    for t in &report.trials {
        b.trials.push(TrialRecord {
            index: t.index,
            votes: votes.clone(),
            value: t.tally,
            expected: t.tally.map(|_| t.expected_tally),
            detected: Some(t.detected),
            leaked_vote: t.leaked_vote,
            outcome: t.outcome,
        });
    }
    let s = &mut b.summary;
    s.detection_frequency = Some(report.detection_frequency());
    s.analytic_detection = report.analytic_detection;
    s.leak_accuracy = report.leak_accuracy();
    s.tally_accuracy = report.tally_accuracy();
    s.histogram = report.histogram.clone();
    if let Some(p) = report.analytic_detection {
        let f = report.detection_frequency();
        let n = report.trials.len() as u64;
        b.check("detection-rate", within_three_sigma(f, p, n), format!("empirical {f:.6} vs predicted {p:.6} over {n} trials"));
    }
    let covered = spec.pairing.iter().any(|&(i, j)| i == spec.target || j == spec.target);
    let leaks = match spec.kind {
        AttackKind::Mitm | AttackKind::ClassicalEavesdrop => true,
        AttackKind::Swap => !covered,
        _ => false,
    };
    if leaks {
        let acc = report.leak_accuracy().unwrap_or(0.0);
        b.check("leak", acc == 1.0, format!("leak accuracy {acc:.6}"));
    }
    if spec.repair && matches!(spec.kind, AttackKind::Mitm | AttackKind::Swap | AttackKind::ClassicalEavesdrop) {
        if let Some(acc) = report.tally_accuracy() {
            b.check("tally-after-attack", acc == 1.0, format!("tally accuracy {acc:.6}"));
        }
    }
    backend_check(config, b);
    Ok(())
}

fn run_cheater(config: &ScenarioConfig, spec: &AttackSpec, b: &mut Builder) -> Result<()> {
    let d = config.dim;
    let base = SimRng::new(config.seed);
    let (hist, analytic) = match spec.m {
        Some(m) => (adversary::monte_carlo_pq::<f64>(d, spec.s, m, config.trials, &base)?, analytic_distribution(d, spec.s, m)?),
        None => {
            let votes = config.votes.clone().unwrap_or_default();
            let mut honest = votes.clone();
            honest.remove(spec.target);
            let m = honest.iter().sum::<usize>();
            let scn = CheaterScenario::new(anti_cheat_config(config), honest, spec.target, spec.s)?;
            let how = match spec.theta_mode {
                ThetaMode::Sampled => Estimates::Sampled,
                ThetaMode::Fixed => Estimates::Fixed { theta_y: spec.theta_y.unwrap_or(0.0), theta_n: spec.theta_n.unwrap_or(0.0) },
            };
            let sampler = PhaseSampler::new(d)?;
            let step = config.l_y - config.l_n;
            let mut hist = Histogram::new(d);
            let backends = config.backend.backends();
            for t in 0..config.trials {
                let mut runs = Vec::new();
                for &backend in &backends {
                    runs.push(run_cheater_attack(&scn, how, backend, &sampler, &mut base.split(t))?);
                }
                if runs.len() == 2 {
                    b.deviation(if runs[0] == runs[1] { 0.0 } else { 1.0 });
                }
                let run = &runs[0];
                hist.record(run.outcome);
                let mut rec = TrialRecord::new(t, votes.clone());
                rec.value = run.readout.q;
                rec.outcome = Some(run.outcome);
                rec.detected = Some(run.readout.cheat_detected);
                b.trials.push(rec);
            }
            let exact = (0..d).map(|q| exact_pq(d, step, spec.s, m, q)).collect();
            (hist, if how == Estimates::Sampled { exact } else { Vec::new() })
        }
    };
    let s = &mut b.summary;
    s.histogram = hist.counts.clone();
    if hist.rejected > 0 {
        s.histogram.push(hist.rejected);
    }
    if spec.m.is_some() {
        s.trials = hist.total();
    }
    if !analytic.is_empty() {
        let tv = hist.tv_distance(&analytic);
        s.tv_distance = Some(tv);
        s.analytic_distribution = Some(analytic);
        if hist.total() >= 100_000 {
            b.check("monte-carlo-tv", tv <= 0.02, format!("TV distance {tv:.5} at {} trials", hist.total()));
        }
    }
    let detected = b.trials.iter().filter(|t| t.detected == Some(true)).count();
    if !b.trials.is_empty() {
        b.summary.detection_frequency = Some(detected as f64 / b.trials.len() as f64);
    }
    backend_check(config, b);
    Ok(())
}

/// Serializes a report. Json-lines carries one record per trial, then the summary.
pub fn emit_report(report: &RunReport, format: Format) -> Result<Vec<u8>> {
    let json = |r: &Record| serde_json::to_string(r).map_err(|e| Error::InvalidState(format!("serialization failed: {e}")));
    match format {
        Format::JsonLines => {
            let mut out = String::new();
            for t in &report.trials {
                out.push_str(&json(&Record::Trial(t.clone()))?);
                out.push('\n');
            }
            out.push_str(&json(&Record::Summary(Box::new(report.summary.clone())))?);
            out.push('\n');
            Ok(out.into_bytes())
        }
        Format::Text => Ok(text_report(report).into_bytes()),
    }
}

fn opt<V: fmt::Display>(v: &Option<V>) -> String {
    v.as_ref().map_or("-".into(), |x| x.to_string())
}

fn text_report(report: &RunReport) -> String {
    let s = &report.summary;
    let c = &s.scenario;
    let mut out = String::new();
    let _ = writeln!(out, "command   {}", s.command);
    let _ = writeln!(out, "scheme    {} (D={}, N={}, backend {})", c.scheme, c.dim, c.voters, c.backend);
    if let Some(a) = &c.attack {
        let _ = writeln!(out, "attack    {} on voter {}", a.kind, a.target);
    }
    let _ = writeln!(out, "seed      {}", s.seed);
    let _ = writeln!(out, "trials    {}", s.trials);
    let _ = writeln!(out, "tally     {}", opt(&s.tally));
    let _ = writeln!(out, "failures  {}", s.failures);
    if s.detection_frequency.is_some() || s.analytic_detection.is_some() {
        let _ = writeln!(out, "detection {} (predicted {})", opt(&s.detection_frequency), opt(&s.analytic_detection));
    }
    if let Some(a) = s.leak_accuracy {
        let _ = writeln!(out, "leak      {a}");
    }
    if !s.histogram.is_empty() {
        let cells: Vec<String> = s.histogram.iter().map(u64::to_string).collect();
        let _ = writeln!(out, "histogram {}", cells.join(" "));
    }
    if let (Some(tv), Some(p)) = (s.tv_distance, &s.analytic_distribution) {
        let cells: Vec<String> = p.iter().map(|x| format!("{x:.5}")).collect();
        let _ = writeln!(out, "analytic  {}", cells.join(" "));
        let _ = writeln!(out, "tv        {tv:.5} (empirical vs analytic)");
    }
    if let Some(dev) = s.max_backend_deviation {
        let _ = writeln!(out, "backends  max deviation {dev:.3e}");
    }
    for inv in &s.invariants {
        let _ = writeln!(out, "{} {}: {}", if inv.passed { "PASS" } else { "FAIL" }, inv.name, inv.detail);
    }
    let _ = writeln!(out, "wall      {:.3}s", report.wall_clock.as_secs_f64());
    out
}

/// Parses the summary line of a json-lines report.
pub fn parse_summary(jsonl: &str) -> Result<Summary> {
    let last = jsonl.lines().rfind(|l| !l.trim().is_empty()).ok_or(Error::Parse { line: 0, message: "empty report".into() })?;
    match serde_json::from_str::<Record>(last) {
        Ok(Record::Summary(s)) => Ok(*s),
        Ok(Record::Trial(_)) => Err(Error::Parse { line: 0, message: "last record is not a summary".into() }),
        Err(e) => Err(Error::Parse { line: 0, message: e.to_string() }),
    }
}

/// Consistency of a config and its secrets, for callers building scenarios in code.
pub fn check_secrets(config: &ScenarioConfig) -> Result<()> {
    AuthoritySecrets::new(config.l_y, config.l_n, config.delta.unwrap_or(0.0), config.dim, config.voters).map(|_| ())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[protocol]\nscheme = distributed\ndim = 4\nvoters = 3\nvotes = 1, 0, 1\n";

    #[test]
    fn minimal_scenario_parses() {
        let c = parse_scenario(MINIMAL).unwrap();
        assert_eq!(c.scheme, ScenarioScheme::Distributed);
        assert_eq!(c.votes, Some(vec![1, 0, 1]));
        assert_eq!(c.backend, BackendChoice::Branch);
        assert_eq!(c.trials, 1);
    }

    #[test]
    fn d_equal_n_is_rejected() {
        let err = parse_scenario("[protocol]\nscheme = distributed\ndim = 3\nvoters = 3\nvotes = 1,0,1\n").unwrap_err();
        assert!(err.to_string().contains("D>N"), "{err}");
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn dolev_needs_d_equal_n_plus_one() {
        let err = parse_scenario("[protocol]\nscheme = dolev\ndim = 5\nvoters = 3\nvotes = 1,0,1\n").unwrap_err();
        assert!(err.to_string().contains("D=N+1"), "{err}");
    }

    #[test]
    fn secrets_precondition_is_named() {
        let err = parse_scenario("[protocol]\nscheme = anti-cheat\ndim = 4\nvoters = 3\nl_y = 2\nvotes = 1,0,1\n").unwrap_err();
        assert!(err.to_string().contains("(l_y-l_n)N < D"), "{err}");
    }

    #[test]
    fn unknown_keys_and_sections_name_the_line() {
        let err = parse_scenario("[protocol]\nscheme = distributed\ncolour = red\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        let err = parse_scenario("[protocol]\nscheme = distributed\n[extras]\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        let err = parse_scenario("[protocol]\nscheme = distributed\ndim = four\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        let err = parse_scenario("[protocol]\nscheme = distributed\ndim = 4\ndim = 5\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }));
    }

    #[test]
    fn honest_run_reports_the_tally() {
        let c = parse_scenario(&format!("{MINIMAL}[run]\nbackend = both\ntrials = 3\n")).unwrap();
        let r = execute(&c, Command::Run).unwrap();
        assert_eq!(r.summary.tally, Some(2));
        assert!(r.passed());
        assert!(r.summary.max_backend_deviation.unwrap() < 1e-12);
    }

    #[test]
    fn json_lines_has_one_record_per_trial_and_round_trips() {
        let c = parse_scenario(&format!("{MINIMAL}[run]\ntrials = 4\nseed = 9\n")).unwrap();
        let r = execute(&c, Command::Run).unwrap();
        let text = String::from_utf8(emit_report(&r, Format::JsonLines).unwrap()).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert_eq!(parse_summary(&text).unwrap(), r.summary);
        let again = execute(&c, Command::Run).unwrap();
        assert_eq!(emit_report(&again, Format::JsonLines).unwrap(), text.into_bytes());
    }

    #[test]
    fn empty_trials_emit_summary_only() {
        let c = parse_scenario(&format!("{MINIMAL}[run]\ntrials = 1\n")).unwrap();
        let mut r = execute(&c, Command::Run).unwrap();
        r.trials.clear();
        let text = String::from_utf8(emit_report(&r, Format::JsonLines).unwrap()).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.contains("\"record\":\"summary\""));
    }

    #[test]
    fn sweep_covers_every_vote_vector() {
        let c = parse_scenario("[protocol]\nscheme = traveling\ndim = 4\nvoters = 3\nvotes = 0,0,0\n[run]\nbackend = both\n").unwrap();
        let r = execute(&c, Command::Sweep).unwrap();
        assert_eq!(r.trials.len(), 8);
        assert!(r.passed());
    }

    #[test]
    fn verify_checks_privacy_and_orthogonality() {
        let c = parse_scenario(&format!("{MINIMAL}[run]\nbackend = dense\n")).unwrap();
        let r = execute(&c, Command::Verify).unwrap();
        let names: Vec<&str> = r.summary.invariants.iter().map(|i| i.name.as_str()).collect();
        assert!(names.contains(&"privacy") && names.contains(&"orthogonality"));
        assert!(r.passed());
    }

    #[test]
    fn swap_attack_scenario() {
        let c = parse_scenario(
            "[protocol]\nscheme = distributed\ndim = 4\nvoters = 2\nvotes = 1,0\n[attack]\nkind = swap\ntarget = 0\npairing = 0-1\n[run]\ntrials = 2000\nseed = 3\n",
        )
        .unwrap();
        let r = execute(&c, Command::Attack).unwrap();
        assert!(r.passed(), "{:?}", r.summary.invariants);
        let f = r.summary.detection_frequency.unwrap();
        assert!((f - 0.75).abs() < 0.05);
    }

    #[test]
    fn text_report_shows_tv_for_the_cheater() {
        let c = parse_scenario(
            "[protocol]\nscheme = anti-cheat\ndim = 5\nvoters = 4\n[attack]\nkind = cheater\ns = 3\nm = 2\n[run]\ntrials = 200\n",
        )
        .unwrap();
        let r = execute(&c, Command::Attack).unwrap();
        let text = String::from_utf8(emit_report(&r, Format::Text).unwrap()).unwrap();
        assert!(text.contains("tv "), "{text}");
        assert_eq!(r.summary.histogram.iter().sum::<u64>(), 200);
    }

    #[test]
    fn attack_needs_matching_scheme() {
        let err = parse_scenario(&format!("{MINIMAL}[attack]\nkind = mitm\n")).unwrap_err();
        assert!(err.to_string().contains("traveling"), "{err}");
    }

    #[test]
    fn group_scenario_multiplies() {
        let c = parse_scenario("[protocol]\nscheme = group\ngroup = s3\nchoices = 1, 4, 2\n[run]\nbackend = both\n").unwrap();
        let r = execute(&c, Command::Run).unwrap();
        assert_eq!(r.summary.tally, Some(FiniteGroup::s3().product(&[1, 4, 2])));
        assert!(r.passed());
    }
}
