//! Distributed group multiplication: finite groups given by Cayley tables,
//! (projective) unitary representations, the traveling scheme and the
//! distributed scheme for products of cyclic groups.

use crate::backend::{Backend, QuantumState};
use crate::branch::BranchState;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::measurement::{Projector, ProjectiveMeasurement};
use crate::protocols::ghz_phase_readout;
use crate::rng::SimRng;
use crate::scalar::{Scalar, C};
use crate::state::{ops, DenseState};

/// A finite group stored as its Cayley table, `table[a][b] = a * b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteGroup {
    table: Vec<Vec<usize>>,
    identity: usize,
    inverse: Vec<usize>,
    names: Vec<String>,
}

impl FiniteGroup {
    /// Validates closure, identity, inverses and associativity exhaustively.
    pub fn from_table(table: Vec<Vec<usize>>) -> Result<Self> {
        let n = table.len();
        if n == 0 {
            return Err(Error::InvalidGroup("empty Cayley table".into()));
        }
        if let Some((i, row)) = table.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::InvalidGroup(format!("row {i} has {} entries, expected {n}", row.len())));
        }
        if table.iter().flatten().any(|&x| x >= n) {
            return Err(Error::InvalidGroup(format!("table entry outside 0..{n}")));
        }
        let identity = (0..n)
            .find(|&e| (0..n).all(|x| table[e][x] == x && table[x][e] == x))
            .ok_or_else(|| Error::InvalidGroup("no identity element".into()))?;
        let mut inverse = Vec::with_capacity(n);
        for a in 0..n {
            let inv = (0..n)
                .find(|&b| table[a][b] == identity && table[b][a] == identity)
                .ok_or_else(|| Error::InvalidGroup(format!("element {a} has no inverse")))?;
            inverse.push(inv);
        }
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if table[table[a][b]][c] != table[a][table[b][c]] {
                        return Err(Error::InvalidGroup(format!("associativity fails for ({a}, {b}, {c})")));
                    }
                }
            }
        }
        let names = (0..n).map(|i| format!("g{i}")).collect();
        Ok(Self { table, identity, inverse, names })
    }

    /// Plain-text table: the order on the first line, then one space-separated row per line.
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (first, order_text) = lines.next().ok_or(Error::Parse { line: 1, message: "missing group order".into() })?;
        let order: usize = order_text
            .parse()
            .map_err(|_| Error::Parse { line: first, message: format!("expected the group order, found '{order_text}'") })?;
        let mut table = Vec::with_capacity(order);
        let mut last = first;
        for (line, text) in lines {
            last = line;
            let row = text
                .split_whitespace()
                .map(|t| t.parse::<usize>().map_err(|_| Error::Parse { line, message: format!("'{t}' is not an element index") }))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != order {
                return Err(Error::Parse { line, message: format!("expected {order} entries, found {}", row.len()) });
            }
            table.push(row);
        }
        if table.len() != order {
            return Err(Error::Parse { line: last, message: format!("expected {order} rows, found {}", table.len()) });
        }
        Self::from_table(table)
    }

    /// `Z_n` with addition mod `n`.
    pub fn cyclic(n: usize) -> Result<Self> {
        let mut g = Self::from_table((0..n).map(|a| (0..n).map(|b| (a + b) % n).collect()).collect())?;
        g.names = (0..n).map(|i| i.to_string()).collect();
        Ok(g)
    }

    /// `{e, x1, x2, x3}` with `x_j^2 = e` and `x_j x_k = x_l` for distinct `j, k, l`.
    pub fn klein4() -> Self {
        let mut g = Self::from_table((0..4).map(|a| (0..4).map(|b| a ^ b).collect()).collect()).expect("valid table");
        g.names = ["e", "x1", "x2", "x3"].map(String::from).to_vec();
        g
    }

    /// Permutations of three symbols under composition `(a * b)(i) = a(b(i))`.
    pub fn s3() -> Self {
        let perms: Vec<[usize; 3]> =
            vec![[0, 1, 2], [1, 2, 0], [2, 0, 1], [1, 0, 2], [0, 2, 1], [2, 1, 0]];
        let index = |p: [usize; 3]| perms.iter().position(|&q| q == p).expect("closed");
        let table = perms
            .iter()
            .map(|a| perms.iter().map(|b| index([a[b[0]], a[b[1]], a[b[2]]])).collect())
            .collect();
        let mut g = Self::from_table(table).expect("valid table");
        g.names = ["e", "(012)", "(021)", "(01)", "(12)", "(02)"].map(String::from).to_vec();
        g
    }

    /// `G x H` with element `(g, h)` at index `g * |H| + h`.
    pub fn direct_product(a: &Self, b: &Self) -> Self {
        let (na, nb) = (a.order(), b.order());
        let table = (0..na * nb)
            .map(|x| (0..na * nb).map(|y| a.mul(x / nb, y / nb) * nb + b.mul(x % nb, y % nb)).collect())
            .collect();
        let mut g = Self::from_table(table).expect("product of groups");
        g.names = (0..na * nb).map(|x| format!("({},{})", a.names[x / nb], b.names[x % nb])).collect();
        g
    }

    pub fn order(&self) -> usize {
        self.table.len()
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    pub fn inverse(&self, a: usize) -> usize {
        self.inverse[a]
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.table[a][b]
    }

    pub fn name(&self, a: usize) -> &str {
        &self.names[a]
    }

    pub fn table(&self) -> &[Vec<usize>] {
        &self.table
    }

    /// Left-to-right product `g_1 g_2 ... g_n`; identity for an empty list.
    pub fn product(&self, elements: &[usize]) -> usize {
        elements.iter().fold(self.identity, |acc, &g| self.mul(acc, g))
    }

    pub fn is_abelian(&self) -> bool {
        (0..self.order()).all(|a| (0..self.order()).all(|b| self.mul(a, b) == self.mul(b, a)))
    }

    fn check_element(&self, g: usize) -> Result<()> {
        if g >= self.order() {
            return Err(Error::Precondition(format!("element {g} outside a group of order {}", self.order())));
        }
        Ok(())
    }
}

/// Unitary matrices `U(g)`, ordinary or projective.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation<T> {
    group: FiniteGroup,
    matrices: Vec<Matrix<T>>,
    projective: bool,
}

impl<T: Scalar> Representation<T> {
    /// Checks unitarity and `U(a)U(b) = U(ab)`, or `= e^{i w} U(ab)` when `projective`.
    pub fn new(group: FiniteGroup, matrices: Vec<Matrix<T>>, projective: bool) -> Result<Self> {
        if matrices.len() != group.order() {
            return Err(Error::InvalidGroup(format!("{} matrices for a group of order {}", matrices.len(), group.order())));
        }
        let dim = matrices[0].rows();
        for (g, m) in matrices.iter().enumerate() {
            if !m.is_square() || m.rows() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: m.rows() });
            }
            let dev = m.unitarity_deviation();
            if dev > T::tolerance() {
                return Err(Error::InvalidGroup(format!("U({g}) is not unitary (deviation {dev})")));
            }
        }
        let tol = T::tolerance();
        for a in 0..group.order() {
            for b in 0..group.order() {
                let lhs = matrices[a].matmul(&matrices[b]);
                let target = &matrices[group.mul(a, b)];
                let factor = if projective {
                    let lambda = target.adjoint().matmul(&lhs).trace() / T::from_usize_lossy(dim);
                    if (lambda.norm() - T::one()).abs() > tol {
                        return Err(Error::InvalidGroup(format!("U({a})U({b}) is not a phase multiple of U({a}*{b})")));
                    }
                    lambda
                } else {
                    C::new(T::one(), T::zero())
                };
                if lhs.max_abs_diff(&target.scale(factor)) > tol {
                    return Err(Error::InvalidGroup(format!("homomorphism law fails for ({a}, {b})")));
                }
            }
        }
        Ok(Self { group, matrices, projective })
    }

    /// `{I, sigma_x, sigma_y, sigma_z}`, a projective representation of the Klein four-group.
    pub fn pauli_klein4() -> Self {
        let m = vec![Matrix::identity(2), ops::pauli_x(), ops::pauli_y(), ops::pauli_z()];
        Self::new(FiniteGroup::klein4(), m, true).expect("Pauli matrices")
    }

    /// `U(g_n)_{jk} = 1` iff `g_j^{-1} g_k = g_n`.
    pub fn regular(group: &FiniteGroup) -> Self {
        let n = group.order();
        let matrices = (0..n)
            .map(|g| {
                Matrix::from_fn(n, n, |j, k| {
                    if group.mul(group.inverse(j), k) == g {
                        C::new(T::one(), T::zero())
                    } else {
                        C::new(T::zero(), T::zero())
                    }
                })
            })
            .collect();
        Self { group: group.clone(), matrices, projective: false }
    }

    /// The one-dimensional trivial representation.
    pub fn trivial(group: &FiniteGroup) -> Self {
        Self { group: group.clone(), matrices: vec![Matrix::identity(1); group.order()], projective: false }
    }

    pub fn group(&self) -> &FiniteGroup {
        &self.group
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].rows()
    }

    pub fn matrix(&self, g: usize) -> &Matrix<T> {
        &self.matrices[g]
    }

    pub fn is_projective(&self) -> bool {
        self.projective
    }

    /// `(I (x) U(g)) |Psi>` with `|Psi> = D^{-1/2} sum_j |j>|j>`, flattened.
    pub fn encoded_state(&self, g: usize) -> Vec<C<T>> {
        let d = self.dim();
        let s = T::one() / T::from_usize_lossy(d).sqrt();
        let u = &self.matrices[g];
        let mut v = vec![C::new(T::zero(), T::zero()); d * d];
        for j in 0..d {
            for k in 0..d {
                v[j * d + k] = u[(k, j)] * s;
            }
        }
        v
    }
}

/// Pointwise pieces of the distinguishability condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Readiness {
    /// `|Tr U(g)|` per element.
    pub traces: Vec<f64>,
    /// `|<Psi| (I (x) U(g2))^dag (I (x) U(g1)) |Psi>|` for every ordered pair `g1 != g2`, row-major.
    pub overlaps: Vec<f64>,
    pub max_overlap: f64,
    pub ready: bool,
}

/// Checks `Tr U(g) = 0` off the identity and the orthogonality of the encoded states.
pub fn check_protocol_ready<T: Scalar>(rep: &Representation<T>) -> Readiness {
    let n = rep.group.order();
    let d = T::from_usize_lossy(rep.dim());
    let traces: Vec<f64> = rep.matrices.iter().map(|m| m.trace().norm().to_f64_lossy()).collect();
    let mut overlaps = Vec::with_capacity(n * n.saturating_sub(1));
    for g1 in 0..n {
        for g2 in 0..n {
            if g1 != g2 {
                let t = rep.matrices[g2].adjoint().matmul(&rep.matrices[g1]).trace().norm() / d;
                overlaps.push(t.to_f64_lossy());
            }
        }
    }
    let max_overlap = overlaps.iter().copied().fold(0.0, f64::max);
    let tol = T::tolerance().to_f64_lossy();
    let traceless = traces.iter().enumerate().all(|(g, &t)| g == rep.group.identity || t <= tol);
    Readiness { traces, overlaps, max_overlap, ready: traceless && max_overlap <= tol }
}

/// Result of one traveling group-multiplication run.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupRun {
    pub element: usize,
    /// Largest trace distance of the traveling register from `I/D` seen by any party.
    pub max_privacy_distance: f64,
}

fn group_traveling<S: QuantumState<T>, T: Scalar>(
    rep: &Representation<T>,
    choices: &[usize],
    rng: &mut SimRng,
) -> Result<GroupRun> {
    let d = rep.dim();
    let group = &rep.group;
    let mut state = S::ghz(d, 2)?;
    let mut worst = 0.0f64;
    for &g in choices {
        worst = worst.max(state.reduced_density(&[1])?.distance_from_maximally_mixed().to_f64_lossy());
        // Encoding g^{-1} makes the accumulated operator U((g_1 ... g_n)^{-1}).
        state = state.apply_local(1, rep.matrix(group.inverse(g)))?;
    }
    worst = worst.max(state.reduced_density(&[1])?.distance_from_maximally_mixed().to_f64_lossy());
    let projectors = (0..group.order()).map(|h| Projector::Rank1(rep.encoded_state(h))).collect();
    let meas = ProjectiveMeasurement::with_remainder(vec![d, d], projectors)?;
    let out = state.measure(&[0, 1], &meas, rng)?;
    if out.outcome >= group.order() {
        return Err(Error::Protocol("group readout landed outside the encoded states".into()));
    }
    Ok(GroupRun { element: group.inverse(out.outcome), max_privacy_distance: worst })
}

/// Traveling scheme: the parties act in turn on the second qudit of `D^{-1/2} sum_j |j>|j>`
/// and Donna discriminates the encoded states. Returns `g_1 g_2 ... g_n`.
pub fn run_group_traveling<T: Scalar>(
    rep: &Representation<T>,
    choices: &[usize],
    backend: Backend,
    rng: &mut SimRng,
) -> Result<GroupRun> {
    let ready = check_protocol_ready(rep);
    if !ready.ready {
        return Err(Error::Distinguishability(format!(
            "encoded states overlap up to {:.3e}; the representation must be traceless off the identity",
            ready.max_overlap
        )));
    }
    if rep.dim() * rep.dim() > 1 << 16 {
        return Err(Error::BudgetExceeded { requested: (rep.dim() * rep.dim()) as u128, limit: 1 << 16 });
    }
    for &g in choices {
        rep.group.check_element(g)?;
    }
    match backend {
        Backend::Dense => group_traveling::<DenseState<T>, T>(rep, choices, rng),
        Backend::Branch => group_traveling::<BranchState<T>, T>(rep, choices, rng),
    }
}

fn cyclic_factor<S: QuantumState<T>, T: Scalar>(d: usize, components: &[usize], rng: &mut SimRng) -> Result<usize> {
    let n = components.len();
    let mut state = S::ghz(d, n)?;
    for (p, &c) in components.iter().enumerate() {
        if c != 0 {
            state = state.apply_local(p, &ops::clock(d, c as i64))?;
        }
    }
    let regs: Vec<usize> = (0..n).collect();
    let out = state.measure(&regs, &ghz_phase_readout(d, n)?, rng)?;
    if out.outcome >= d {
        return Err(Error::Protocol("cyclic readout landed outside the phase basis".into()));
    }
    Ok(out.outcome)
}

/// Distributed scheme for `Z_{d_1} x ... x Z_{d_k}`: one GHZ state per cyclic factor,
/// party `p` applies `F^{c}` to its qudit of factor `i` for component `c = choices[p][i]`.
pub fn run_abelian_distributed<T: Scalar>(
    moduli: &[usize],
    choices: &[Vec<usize>],
    backend: Backend,
    rng: &mut SimRng,
) -> Result<Vec<usize>> {
    if moduli.is_empty() {
        return Err(Error::Precondition("at least one cyclic factor is required".into()));
    }
    if choices.is_empty() {
        return Err(Error::Precondition("at least one party is required".into()));
    }
    if let Some(&d) = moduli.iter().find(|&&d| d < 2) {
        return Err(Error::InvalidDimension(format!("cyclic factor of order {d}")));
    }
    for (p, c) in choices.iter().enumerate() {
        if c.len() != moduli.len() {
            return Err(Error::Precondition(format!("party {p} gave {} components for {} factors", c.len(), moduli.len())));
        }
        if let Some((i, &x)) = c.iter().enumerate().find(|(i, &x)| x >= moduli[*i]) {
            return Err(Error::Precondition(format!("party {p} component {i} = {x} is not below {}", moduli[i])));
        }
    }
    moduli
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let comps: Vec<usize> = choices.iter().map(|c| c[i]).collect();
            match backend {
                Backend::Dense => cyclic_factor::<DenseState<T>, T>(d, &comps, rng),
                Backend::Branch => cyclic_factor::<BranchState<T>, T>(d, &comps, rng),
            }
        })
        .collect()
}
