//! Branch representation: a sum of a few product states.
//!
//! Every ballot state in the protocols has the shape `sum_j c_j (x)_r |f_{j,r}>`
//! with one branch per ballot label `j`. Storing the factors instead of the full
//! tensor keeps the cost linear in the number of registers.
//!
//! Registers are grouped into blocks; every branch holds one [`LocalFactor`] per
//! block. Blocks start as single registers and are fused only when an operation
//! genuinely entangles them within a branch (for example a general two-register
//! attack unitary).


use crate::backend::{complete_probabilities, QuantumState};
use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::layout::{RegisterLayout, DENSE_BUDGET};
use crate::linalg::{dot, norm_sqr, Matrix};
use crate::measurement::{diagonal_index, Projector, ProjectiveMeasurement};
use crate::scalar::{c_one, c_real, c_zero, is_finite, Scalar, C};
use crate::state::{apply_operator, apply_projector, reduced_operator, DenseState};

/// Largest kept-space dimension for a reduced density matrix.
pub const DENSITY_BUDGET: usize = 4096;

/// Largest joint dimension of a fused block.
pub const BLOCK_BUDGET: usize = 1 << 16;

/// State of one block inside one branch.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalFactor<T> {
    /// Computational basis state (flat index within the block).
    Basis(usize),
    /// General, possibly unnormalized, vector over the block.
    Amps(Vec<C<T>>),
}

impl<T: Scalar> LocalFactor<T> {
    fn amp(&self, i: usize) -> C<T> {
        match self {
            LocalFactor::Basis(l) => {
                if *l == i {
                    c_one()
                } else {
                    c_zero()
                }
            }
            LocalFactor::Amps(a) => a[i],
        }
    }

    fn to_amps(&self, dim: usize) -> Vec<C<T>> {
        match self {
            LocalFactor::Basis(l) => {
                let mut v = vec![c_zero(); dim];
                v[*l] = c_one();
                v
            }
            LocalFactor::Amps(a) => a.clone(),
        }
    }

    /// `<self|other>`.
    fn inner(&self, other: &Self) -> C<T> {
        match (self, other) {
            (LocalFactor::Basis(a), LocalFactor::Basis(b)) => {
                if a == b {
                    c_one()
                } else {
                    c_zero()
                }
            }
            (LocalFactor::Basis(a), LocalFactor::Amps(v)) => v[*a],
            (LocalFactor::Amps(v), LocalFactor::Basis(b)) => v[*b].conj(),
            (LocalFactor::Amps(u), LocalFactor::Amps(v)) => dot(u, v),
        }
    }

    fn norm_sqr(&self) -> T {
        match self {
            LocalFactor::Basis(_) => T::one(),
            LocalFactor::Amps(a) => norm_sqr(a),
        }
    }

    /// Collapses a vector with a single nonzero entry to a basis factor, moving the
    /// entry into the branch coefficient.
    fn tidy(self, coeff: C<T>) -> (C<T>, Self) {
        if let LocalFactor::Amps(ref a) = self {
            let mut nz = a.iter().enumerate().filter(|(_, z)| z.re != T::zero() || z.im != T::zero());
            match (nz.next(), nz.next()) {
                (Some((i, &z)), None) => return (coeff * z, LocalFactor::Basis(i)),
                (None, _) => return (c_zero(), LocalFactor::Basis(0)),
                _ => {}
            }
        }
        (coeff, self)
    }

    fn is_basis(&self) -> bool {
        matches!(self, LocalFactor::Basis(_))
    }
}

/// One product-state term.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch<T> {
    pub coeff: C<T>,
    pub factors: Vec<LocalFactor<T>>,
}

/// Superposition of product-form branches over a register layout.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchState<T> {
    layout: RegisterLayout,
    blocks: Vec<Vec<usize>>,
    locate: Vec<(usize, usize)>,
    branches: Vec<Branch<T>>,
}

impl<T: Scalar> BranchState<T> {
    /// `D` branches, branch `j` with coefficient `1/sqrt(D)` and every register in `|j>`.
    pub fn ghz_branches(dim: usize, registers: usize) -> Result<Self> {
        if registers == 0 {
            return Err(Error::InvalidDimension("GHZ state needs at least one register".into()));
        }
        let layout = RegisterLayout::uniform(dim, registers)?;
        let a = c_real(T::one() / T::from_usize_lossy(dim).sqrt());
        let branches = (0..dim).map(|j| Branch { coeff: a, factors: vec![LocalFactor::Basis(j); registers] }).collect();
        Ok(Self::from_parts(layout, (0..registers).map(|r| vec![r]).collect(), branches))
    }

    /// A single product state.
    pub fn product(factors: &[Vec<C<T>>]) -> Result<Self> {
        let layout = RegisterLayout::new(factors.iter().map(|f| f.len()).collect())?;
        let mut coeff = c_one();
        let mut locals = Vec::with_capacity(factors.len());
        for f in factors {
            check_unit(f)?;
            let (c, lf) = LocalFactor::Amps(f.clone()).tidy(coeff);
            coeff = c;
            locals.push(lf);
        }
        let blocks = (0..factors.len()).map(|r| vec![r]).collect();
        Ok(Self::from_parts(layout, blocks, vec![Branch { coeff, factors: locals }]))
    }

    fn from_parts(layout: RegisterLayout, blocks: Vec<Vec<usize>>, branches: Vec<Branch<T>>) -> Self {
        let mut locate = vec![(usize::MAX, usize::MAX); layout.len()];
        for (b, regs) in blocks.iter().enumerate() {
            for (p, &r) in regs.iter().enumerate() {
                locate[r] = (b, p);
            }
        }
        Self { layout, blocks, locate, branches }
    }

    pub fn branches(&self) -> &[Branch<T>] {
        &self.branches
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    /// Register groups, one factor per group in every branch.
    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    fn block_dims(&self, b: usize) -> Vec<usize> {
        self.blocks[b].iter().map(|&r| self.layout.dim(r)).collect()
    }

    fn block_dim(&self, b: usize) -> usize {
        self.blocks[b].iter().map(|&r| self.layout.dim(r)).product()
    }

    fn block_layout(&self, b: usize) -> RegisterLayout {
        RegisterLayout::new(self.block_dims(b)).expect("valid dims")
    }

    /// Fuses the blocks holding `registers` into one block; returns its index.
    fn fuse(&self, registers: &[usize]) -> Result<(Self, usize)> {
        let mut ids: Vec<usize> = registers.iter().map(|&r| self.locate[r].0).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() == 1 {
            return Ok((self.clone(), ids[0]));
        }
        let fused_regs: Vec<usize> = ids.iter().flat_map(|&b| self.blocks[b].iter().copied()).collect();
        let fused_dim: u128 = ids.iter().map(|&b| self.block_dim(b) as u128).product();
        if fused_dim > BLOCK_BUDGET as u128 {
            return Err(Error::BudgetExceeded { requested: fused_dim, limit: BLOCK_BUDGET });
        }
        let keep: Vec<usize> = (0..self.blocks.len()).filter(|b| !ids.contains(b)).collect();
        let mut blocks: Vec<Vec<usize>> = keep.iter().map(|&b| self.blocks[b].clone()).collect();
        blocks.push(fused_regs);
        let dims: Vec<usize> = ids.iter().map(|&b| self.block_dim(b)).collect();
        let branches = self
            .branches
            .iter()
            .map(|br| {
                let mut factors: Vec<LocalFactor<T>> = keep.iter().map(|&b| br.factors[b].clone()).collect();
                let parts: Vec<&LocalFactor<T>> = ids.iter().map(|&b| &br.factors[b]).collect();
                let fused = if parts.iter().all(|f| f.is_basis()) {
                    let idx = parts.iter().zip(&dims).fold(0, |acc, (f, &d)| match f {
                        LocalFactor::Basis(l) => acc * d + l,
                        LocalFactor::Amps(_) => unreachable!(),
                    });
                    LocalFactor::Basis(idx)
                } else {
                    let mut v = vec![c_one::<T>()];
                    for (f, &d) in parts.iter().zip(&dims) {
                        let a = f.to_amps(d);
                        v = v.iter().flat_map(|&x| a.iter().map(move |&y| x * y)).collect();
                    }
                    LocalFactor::Amps(v)
                };
                factors.push(fused);
                Branch { coeff: br.coeff, factors }
            })
            .collect();
        let out = Self::from_parts(self.layout.clone(), blocks, branches);
        let idx = out.blocks.len() - 1;
        Ok((out, idx))
    }

    /// Applies `op` to `positions` of block `b` in every branch.
    fn apply_in_block(&mut self, b: usize, positions: &[usize], op: &Matrix<T>) {
        let blayout = self.block_layout(b);
        let single = self.blocks[b].len() == 1;
        let mono = op.monomial_columns();
        for br in &mut self.branches {
            let f = std::mem::replace(&mut br.factors[b], LocalFactor::Basis(0));
            let newf = match (&f, &mono) {
                (LocalFactor::Basis(l), Some(cols)) if single => {
                    let (row, v) = cols[*l];
                    br.coeff *= v;
                    LocalFactor::Basis(row)
                }
                (LocalFactor::Basis(l), Some(cols)) => {
                    let mut digits = blayout.digits(*l);
                    let sub_dims: Vec<usize> = positions.iter().map(|&p| blayout.dim(p)).collect();
                    let sub = positions.iter().zip(&sub_dims).fold(0, |acc, (&p, &d)| acc * d + digits[p]);
                    let (mut row, v) = cols[sub];
                    for (&p, &d) in positions.iter().zip(&sub_dims).rev() {
                        digits[p] = row % d;
                        row /= d;
                    }
                    br.coeff *= v;
                    LocalFactor::Basis(blayout.index_of(&digits))
                }
                _ => {
                    let amps = f.to_amps(blayout.total() as usize);
                    let (c, nf) = LocalFactor::Amps(apply_operator(&blayout, &amps, positions, op)).tidy(br.coeff);
                    br.coeff = c;
                    nf
                }
            };
            br.factors[b] = newf;
        }
    }

    /// Merges branches with identical basis factors and drops vanishing ones.
    ///
    /// Merged coefficients accumulate in branch order, into the first occurrence.
    fn compress(&mut self) {
        let tiny = T::epsilon() * T::epsilon();
        let label = |br: &Branch<T>, b: usize| match br.factors[b] {
            LocalFactor::Basis(l) => l,
            LocalFactor::Amps(_) => unreachable!("only basis branches are merged"),
        };
        let mut basis: Vec<usize> =
            (0..self.branches.len()).filter(|&i| self.branches[i].factors.iter().all(|f| f.is_basis())).collect();
        let blocks = self.blocks.len();
        let key_cmp = |a: &Branch<T>, b: &Branch<T>| (0..blocks).map(|k| label(a, k)).cmp((0..blocks).map(|k| label(b, k)));
        // Stable, so equal keys stay in branch order.
        basis.sort_by(|&a, &b| key_cmp(&self.branches[a], &self.branches[b]));
        let mut keep = vec![true; self.branches.len()];
        let mut run = 0;
        while run < basis.len() {
            let head = basis[run];
            let mut next = run + 1;
            while next < basis.len() && key_cmp(&self.branches[head], &self.branches[basis[next]]).is_eq() {
                let c = self.branches[basis[next]].coeff;
                self.branches[head].coeff += c;
                keep[basis[next]] = false;
                next += 1;
            }
            run = next;
        }
        let mut i = 0;
        self.branches.retain(|br| {
            let k = keep[i];
            i += 1;
            k && br.coeff.norm_sqr() * br.factors.iter().map(|f| f.norm_sqr()).fold(T::one(), |a, b| a * b) > tiny
        });
        self.split_basis_blocks();
    }

    /// Splits fused blocks whose factor is a basis state in every branch back into single registers.
    fn split_basis_blocks(&mut self) {
        let splittable: Vec<usize> = (0..self.blocks.len())
            .filter(|&b| self.blocks[b].len() > 1 && self.branches.iter().all(|br| br.factors[b].is_basis()))
            .collect();
        if splittable.is_empty() {
            return;
        }
        let layouts: Vec<RegisterLayout> = splittable.iter().map(|&b| self.block_layout(b)).collect();
        let mut blocks = Vec::with_capacity(self.layout.len());
        for (b, regs) in self.blocks.iter().enumerate() {
            if splittable.contains(&b) {
                blocks.extend(regs.iter().map(|&r| vec![r]));
            } else {
                blocks.push(regs.clone());
            }
        }
        for br in &mut self.branches {
            let mut factors = Vec::with_capacity(blocks.len());
            for (b, f) in br.factors.drain(..).enumerate() {
                match splittable.iter().position(|&x| x == b) {
                    Some(i) => {
                        let LocalFactor::Basis(l) = f else { unreachable!() };
                        factors.extend(layouts[i].digits(l).into_iter().map(LocalFactor::Basis));
                    }
                    None => factors.push(f),
                }
            }
            br.factors = factors;
        }
        *self = Self::from_parts(self.layout.clone(), blocks, std::mem::take(&mut self.branches));
    }

    /// `<psi|psi>` via the Gram matrix of the branches.
    fn gram_norm_sqr(&self) -> T {
        let mut total = c_zero::<T>();
        for (i, a) in self.branches.iter().enumerate() {
            let own: T = a.factors.iter().map(|f| f.norm_sqr()).fold(T::one(), |x, y| x * y);
            total += c_real(a.coeff.norm_sqr() * own);
            for b in &self.branches[i + 1..] {
                let mut ov = a.coeff.conj() * b.coeff;
                for (fa, fb) in a.factors.iter().zip(&b.factors) {
                    ov *= fa.inner(fb);
                    if ov.re == T::zero() && ov.im == T::zero() {
                        break;
                    }
                }
                total += c_real(ov.re * T::lit(2.0));
            }
        }
        total.re
    }

    /// Norm check required of every stored state.
    pub fn validate(&self) -> Result<()> {
        let n = self.gram_norm_sqr();
        if (n - T::one()).abs() > T::tolerance() {
            return Err(Error::InvalidState(format!("branch state norm^2 {n} != 1")));
        }
        if self.branches.iter().any(|b| !is_finite(b.coeff)) {
            return Err(Error::InvalidState("non-finite branch coefficient".into()));
        }
        Ok(())
    }

    fn check_operator(&self, registers: &[usize], op: &Matrix<T>) -> Result<()> {
        self.layout.check_targets(registers)?;
        let space: usize = registers.iter().map(|&r| self.layout.dim(r)).product();
        if !op.is_square() || op.rows() != space {
            return Err(Error::DimensionMismatch { expected: space, found: op.rows() });
        }
        let dev = op.unitarity_deviation();
        if dev > T::tolerance() {
            return Err(Error::NotUnitary { deviation: dev.to_f64_lossy() });
        }
        Ok(())
    }

    fn renormalized(mut self) -> Self {
        let n = self.gram_norm_sqr().sqrt();
        if n > T::zero() {
            for b in &mut self.branches {
                b.coeff /= n;
            }
        }
        self
    }

    fn all_singletons(&self, registers: &[usize]) -> bool {
        registers.iter().all(|&r| self.blocks[self.locate[r].0].len() == 1)
    }

    /// Whether `registers` is exactly a union of whole blocks.
    fn covers_whole_blocks(&self, registers: &[usize]) -> bool {
        registers.iter().all(|&r| self.blocks[self.locate[r].0].iter().all(|x| registers.contains(x)))
    }

    /// Diagonal projector when at most one measured factor per branch is a general vector.
    fn project_diagonal_conditional(&self, registers: &[usize], mask: &[bool]) -> Option<Self> {
        if !self.all_singletons(registers) {
            return None;
        }
        let dims = self.layout.sub_dims(registers);
        let blocks: Vec<usize> = registers.iter().map(|&r| self.locate[r].0).collect();
        let mut out = self.clone();
        for br in &mut out.branches {
            let free: Vec<usize> = (0..registers.len()).filter(|&i| !br.factors[blocks[i]].is_basis()).collect();
            if free.len() > 1 {
                return None;
            }
            let digit = |i: usize, x: usize, br: &Branch<T>| -> usize {
                if Some(&i) == free.first() {
                    x
                } else {
                    match br.factors[blocks[i]] {
                        LocalFactor::Basis(l) => l,
                        LocalFactor::Amps(_) => unreachable!(),
                    }
                }
            };
            let flat = |x: usize, br: &Branch<T>| (0..registers.len()).fold(0, |acc, i| acc * dims[i] + digit(i, x, br));
            match free.first() {
                None => {
                    if !mask[flat(0, br)] {
                        br.coeff = c_zero();
                    }
                }
                Some(&i) => {
                    let b = blocks[i];
                    let f = std::mem::replace(&mut br.factors[b], LocalFactor::Basis(0));
                    let mut amps = f.to_amps(dims[i]);
                    for (x, a) in amps.iter_mut().enumerate() {
                        if !mask[flat(x, br)] {
                            *a = c_zero();
                        }
                    }
                    let (c, nf) = LocalFactor::Amps(amps).tidy(br.coeff);
                    br.coeff = c;
                    br.factors[b] = nf;
                }
            }
        }
        out.compress();
        Some(out)
    }

    /// Overlap of each branch's measured blocks with `|v> = D^{-1/2} sum_j phases_j |j..j>`, per label `j`.
    fn ghz_overlaps(&self, registers: &[usize], phases: &[C<T>]) -> Vec<Vec<C<T>>> {
        let d = phases.len();
        let mut ids: Vec<usize> = registers.iter().map(|&r| self.locate[r].0).collect();
        ids.sort_unstable();
        ids.dedup();
        self.branches
            .iter()
            .map(|br| {
                (0..d)
                    .map(|j| {
                        let mut a = c_one::<T>();
                        for &b in &ids {
                            a *= br.factors[b].amp(diagonal_index(j, d, self.blocks[b].len()));
                            if a.re == T::zero() && a.im == T::zero() {
                                break;
                            }
                        }
                        a
                    })
                    .collect()
            })
            .collect()
    }

    fn project_ghz(&self, registers: &[usize], phases: &[C<T>]) -> Self {
        let d = phases.len();
        let s = T::one() / T::from_usize_lossy(d).sqrt();
        let overlaps = self.ghz_overlaps(registers, phases);
        let mut ids: Vec<usize> = registers.iter().map(|&r| self.locate[r].0).collect();
        ids.sort_unstable();
        ids.dedup();
        let covers_all = ids.len() == self.blocks.len();
        let mut branches = Vec::new();
        if covers_all {
            let total = self.branches.iter().zip(&overlaps).fold(c_zero::<T>(), |acc, (br, ov)| {
                acc + br.coeff * ov.iter().zip(phases).fold(c_zero(), |x, (&o, &p)| x + p.conj() * s * o)
            });
            for (j, &p) in phases.iter().enumerate() {
                let factors =
                    (0..self.blocks.len()).map(|b| LocalFactor::Basis(diagonal_index(j, d, self.blocks[b].len()))).collect();
                branches.push(Branch { coeff: total * p * s, factors });
            }
        } else {
            for (br, ov) in self.branches.iter().zip(&overlaps) {
                let a = ov.iter().zip(phases).fold(c_zero::<T>(), |x, (&o, &p)| x + p.conj() * s * o);
                if a.re == T::zero() && a.im == T::zero() {
                    continue;
                }
                for (j, &p) in phases.iter().enumerate() {
                    let mut factors = br.factors.clone();
                    for &b in &ids {
                        factors[b] = LocalFactor::Basis(diagonal_index(j, d, self.blocks[b].len()));
                    }
                    branches.push(Branch { coeff: br.coeff * a * p * s, factors });
                }
            }
        }
        let mut out = Self { branches, ..self.clone() };
        out.compress();
        out
    }

    /// General projection: fuse the measured registers and project each branch's block vector.
    fn project_fused(&self, registers: &[usize], projector: &Projector<T>) -> Result<Self> {
        let (mut st, b) = self.fuse(registers)?;
        let blayout = st.block_layout(b);
        let positions: Vec<usize> =
            registers.iter().map(|r| st.blocks[b].iter().position(|x| x == r).expect("fused")).collect();
        let dim = blayout.total() as usize;
        for br in &mut st.branches {
            let amps = br.factors[b].to_amps(dim);
            let (c, nf) = LocalFactor::Amps(apply_projector(&blayout, &amps, &positions, projector)).tidy(br.coeff);
            br.coeff = c;
            br.factors[b] = nf;
        }
        st.compress();
        Ok(st)
    }

    fn project_one(&self, registers: &[usize], projector: &Projector<T>) -> Result<Self> {
        match projector {
            Projector::Diagonal(mask) => {
                if let Some(s) = self.project_diagonal_conditional(registers, mask) {
                    return Ok(s);
                }
            }
            Projector::GhzPhase(phases) if self.covers_whole_blocks(registers) => {
                return Ok(self.project_ghz(registers, phases));
            }
            _ => {}
        }
        self.project_fused(registers, projector)
    }

    fn can_project_unfused(&self, registers: &[usize], projector: &Projector<T>) -> bool {
        match projector {
            Projector::Diagonal(mask) => self.project_diagonal_conditional(registers, mask).is_some(),
            Projector::GhzPhase(_) => self.covers_whole_blocks(registers),
            _ => false,
        }
    }

    fn concat_branches(&self, parts: Vec<(C<T>, Self)>) -> Self {
        let mut branches = Vec::new();
        for (w, p) in parts {
            branches.extend(p.branches.into_iter().map(|mut b| {
                b.coeff *= w;
                b
            }));
        }
        let mut out = Self { branches, ..self.clone() };
        out.compress();
        out
    }
}

fn check_unit<T: Scalar>(amps: &[C<T>]) -> Result<()> {
    if !amps.iter().all(|&z| is_finite(z)) {
        return Err(Error::InvalidState("non-finite amplitude".into()));
    }
    let n = norm_sqr(amps);
    if (n - T::one()).abs() > T::tolerance() {
        return Err(Error::InvalidState(format!("local state norm^2 {n} != 1")));
    }
    Ok(())
}

impl<T: Scalar> QuantumState<T> for BranchState<T> {
    fn ghz(dim: usize, registers: usize) -> Result<Self> {
        Self::ghz_branches(dim, registers)
    }

    fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    fn apply_local(&self, register: usize, op: &Matrix<T>) -> Result<Self> {
        self.check_operator(&[register], op)?;
        let (b, p) = self.locate[register];
        let mut out = self.clone();
        out.apply_in_block(b, &[p], op);
        out.compress();
        Ok(out)
    }

    fn apply_joint(&self, registers: &[usize], op: &Matrix<T>) -> Result<Self> {
        self.check_operator(registers, op)?;
        let (mut st, b) = self.fuse(registers)?;
        let positions: Vec<usize> =
            registers.iter().map(|r| st.blocks[b].iter().position(|x| x == r).expect("fused")).collect();
        st.apply_in_block(b, &positions, op);
        st.compress();
        Ok(st.renormalized())
    }

    fn swap_registers(&self, a: usize, b: usize) -> Result<Self> {
        self.layout.check_targets(&[a, b])?;
        if self.layout.dim(a) != self.layout.dim(b) {
            return Err(Error::DimensionMismatch { expected: self.layout.dim(a), found: self.layout.dim(b) });
        }
        let blocks = self
            .blocks
            .iter()
            .map(|regs| regs.iter().map(|&r| if r == a { b } else if r == b { a } else { r }).collect())
            .collect();
        Ok(Self::from_parts(self.layout.clone(), blocks, self.branches.clone()))
    }

    fn attach(&self, dim: usize, amps: &[C<T>]) -> Result<Self> {
        if self.branches.is_empty() {
            return Err(Error::InvalidState("cannot attach a register to a state without branches".into()));
        }
        if amps.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: amps.len() });
        }
        check_unit(amps)?;
        let layout = self.layout.extended(dim)?;
        let mut blocks = self.blocks.clone();
        blocks.push(vec![self.layout.len()]);
        let (scale, factor) = LocalFactor::Amps(amps.to_vec()).tidy(c_one());
        let branches = self
            .branches
            .iter()
            .map(|br| {
                let mut factors = br.factors.clone();
                factors.push(factor.clone());
                Branch { coeff: br.coeff * scale, factors }
            })
            .collect();
        Ok(Self::from_parts(layout, blocks, branches))
    }

    fn detach(&self, register: usize, label: usize) -> Result<Self> {
        self.layout.check_register(register)?;
        let (b, _) = self.locate[register];
        if self.blocks[b].len() != 1 {
            return Err(Error::NotProduct(register));
        }
        let d = self.layout.dim(register);
        if label >= d {
            return Err(Error::InvalidState(format!("label {label} >= dimension {d}")));
        }
        let mut branches = Vec::with_capacity(self.branches.len());
        for br in &self.branches {
            let (c, f) = br.factors[b].clone().tidy(br.coeff);
            let c = match f {
                LocalFactor::Basis(l) if l == label => c,
                LocalFactor::Basis(_) => continue,
                LocalFactor::Amps(a) => c * a[label],
            };
            if c.norm_sqr() == T::zero() {
                continue;
            }
            let mut factors = br.factors.clone();
            factors.remove(b);
            branches.push(Branch { coeff: c, factors });
        }
        let layout = self.layout.without(register);
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != b)
            .map(|(_, regs)| regs.iter().map(|&r| if r > register { r - 1 } else { r }).collect())
            .collect();
        let kept = Self::from_parts(layout, blocks, branches);
        // <label|psi> and its complement are orthogonal, so the norms add.
        if self.norm_sqr() - kept.norm_sqr() > T::tolerance() {
            return Err(Error::NotProduct(register));
        }
        Ok(kept.renormalized())
    }

    fn project(&self, registers: &[usize], meas: &ProjectiveMeasurement<T>, outcome: usize) -> Result<Self> {
        self.check_measurement(registers, meas)?;
        if Some(outcome) != meas.remainder_outcome() {
            return self.project_one(registers, &meas.projectors()[outcome]);
        }
        let unfused = meas.projectors().iter().all(|p| self.can_project_unfused(registers, p));
        let base = if unfused { self.clone() } else { self.fuse(registers)?.0 };
        let mut parts = vec![(c_one(), base.clone())];
        for p in meas.projectors() {
            let part = if unfused { base.project_one(registers, p)? } else { base.project_fused(registers, p)? };
            parts.push((-c_one::<T>(), part));
        }
        Ok(base.concat_branches(parts))
    }

    fn norm_sqr(&self) -> T {
        self.gram_norm_sqr()
    }

    fn outcome_probabilities(&self, registers: &[usize], meas: &ProjectiveMeasurement<T>) -> Result<Vec<T>> {
        self.check_measurement(registers, meas)?;
        let ghz_only = meas.projectors().iter().all(|p| matches!(p, Projector::GhzPhase(_)));
        let mut ids: Vec<usize> = registers.iter().map(|&r| self.locate[r].0).collect();
        ids.sort_unstable();
        ids.dedup();
        let probs = if ghz_only && ids.len() == self.blocks.len() && self.covers_whole_blocks(registers) {
            // Every projector is rank one on the whole state: p_k = |<v_k|psi>|^2, one overlap table.
            let Some(Projector::GhzPhase(first)) = meas.projectors().first() else {
                return complete_probabilities(Vec::new(), self.norm_sqr(), meas);
            };
            let overlaps = self.ghz_overlaps(registers, first);
            let s = T::one() / T::from_usize_lossy(first.len()).sqrt();
            meas.projectors()
                .iter()
                .map(|p| {
                    let Projector::GhzPhase(phases) = p else { unreachable!() };
                    let amp = self.branches.iter().zip(&overlaps).fold(c_zero::<T>(), |acc, (br, ov)| {
                        acc + br.coeff * ov.iter().zip(phases).fold(c_zero(), |x, (&o, &q)| x + q.conj() * s * o)
                    });
                    amp.norm_sqr()
                })
                .collect()
        } else {
            (0..meas.projectors().len())
                .map(|k| Ok(self.project(registers, meas, k)?.norm_sqr()))
                .collect::<Result<Vec<T>>>()?
        };
        complete_probabilities(probs, self.norm_sqr(), meas)
    }

    fn rescale(&self, factor: T) -> Self {
        let mut out = self.clone();
        for b in &mut out.branches {
            b.coeff *= factor;
        }
        out
    }

    fn reduced_density(&self, keep: &[usize]) -> Result<DensityMatrix<T>> {
        self.layout.check_targets(keep)?;
        let kept: usize = keep.iter().map(|&r| self.layout.dim(r)).product();
        if kept > DENSITY_BUDGET {
            return Err(Error::BudgetExceeded { requested: kept as u128, limit: DENSITY_BUDGET });
        }
        let mut ids: Vec<usize> = keep.iter().map(|&r| self.locate[r].0).collect();
        ids.sort_unstable();
        ids.dedup();
        let regs: Vec<usize> = ids.iter().flat_map(|&b| self.blocks[b].iter().copied()).collect();
        let sub_layout = RegisterLayout::new(regs.iter().map(|&r| self.layout.dim(r)).collect())?;
        let sub_dim = sub_layout.total();
        if sub_dim > BLOCK_BUDGET as u128 {
            return Err(Error::BudgetExceeded { requested: sub_dim, limit: BLOCK_BUDGET });
        }
        let positions: Vec<usize> = keep.iter().map(|r| regs.iter().position(|x| x == r).expect("kept")).collect();
        let others: Vec<usize> = (0..self.blocks.len()).filter(|b| !ids.contains(b)).collect();
        let vectors: Vec<Vec<C<T>>> = self
            .branches
            .iter()
            .map(|br| {
                let mut v = vec![c_one::<T>()];
                for &b in &ids {
                    let a = br.factors[b].to_amps(self.block_dim(b));
                    v = v.iter().flat_map(|&x| a.iter().map(move |&y| x * y)).collect();
                }
                v
            })
            .collect();
        let mut rho = Matrix::zeros(kept, kept);
        for (i, a) in self.branches.iter().enumerate() {
            for (j, b) in self.branches.iter().enumerate() {
                let mut w = a.coeff * b.coeff.conj();
                for &o in &others {
                    w *= b.factors[o].inner(&a.factors[o]);
                    if w.re == T::zero() && w.im == T::zero() {
                        break;
                    }
                }
                if w.re == T::zero() && w.im == T::zero() {
                    continue;
                }
                let part = reduced_operator(&sub_layout, &vectors[i], &vectors[j], &positions)?;
                rho = rho.add(&part.scale(w));
            }
        }
        Ok(DensityMatrix::from_trusted(rho))
    }

    fn to_dense(&self) -> Result<DenseState<T>> {
        let size = self.layout.dense_size()?;
        let strides = self.layout.strides();
        let mut amps = vec![c_zero(); size];
        for br in &self.branches {
            let mut support: Vec<(usize, C<T>)> = vec![(0, br.coeff)];
            for (b, regs) in self.blocks.iter().enumerate() {
                let bl = self.block_layout(b);
                let entries: Vec<(usize, C<T>)> = match &br.factors[b] {
                    LocalFactor::Basis(l) => vec![(*l, c_one())],
                    LocalFactor::Amps(a) => a.iter().copied().enumerate().filter(|(_, z)| z.norm_sqr() > T::zero()).collect(),
                };
                let mut next = Vec::with_capacity(support.len() * entries.len());
                for &(off, amp) in &support {
                    for &(idx, z) in &entries {
                        let digits = bl.digits(idx);
                        let o: usize = regs.iter().zip(&digits).map(|(&r, &x)| x * strides[r]).sum();
                        next.push((off + o, amp * z));
                    }
                }
                support = next;
            }
            for (i, z) in support {
                amps[i] += z;
            }
        }
        debug_assert!(size <= DENSE_BUDGET);
        Ok(DenseState::raw(self.layout.clone(), amps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use crate::scalar::root_of_unity;
    use crate::state::ops;

    fn dense_eq(a: &BranchState<f64>, b: &DenseState<f64>) -> f64 {
        a.to_dense().unwrap().max_deviation_up_to_phase(b).unwrap()
    }

    #[test]
    fn ghz_phase_probabilities_match_dense() {
        let d = 3;
        let meas = crate::protocols::ghz_phase_readout::<f64>(d, 3).unwrap();
        let mut rng = SimRng::new(4);
        let u = Matrix::<f64>::random_unitary(d, &mut rng);
        let b = BranchState::<f64>::ghz(d, 3).unwrap().apply_local(1, &ops::clock(d, 1)).unwrap();
        // Whole-state GHZ readout, then one block fused by a joint gate, then a partial readout.
        let fused = b.apply_joint(&[0, 2], &u.kron(&u)).unwrap();
        for st in [&b, &fused] {
            let dense = st.to_dense().unwrap();
            let fast = st.outcome_probabilities(&[0, 1, 2], &meas).unwrap();
            let slow = dense.outcome_probabilities(&[0, 1, 2], &meas).unwrap();
            assert!(fast.iter().zip(&slow).all(|(x, y)| (x - y).abs() < 1e-12), "{fast:?} vs {slow:?}");
        }
        let partial = crate::protocols::ghz_phase_readout::<f64>(d, 2).unwrap();
        let fast = fused.outcome_probabilities(&[0, 1], &partial).unwrap();
        let slow = fused.to_dense().unwrap().outcome_probabilities(&[0, 1], &partial).unwrap();
        assert!(fast.iter().zip(&slow).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn ghz_branches_structure() {
        let s = BranchState::<f64>::ghz_branches(2, 3).unwrap();
        assert_eq!(s.branch_count(), 2);
        for (j, b) in s.branches().iter().enumerate() {
            assert!((b.coeff.re - 0.5f64.sqrt()).abs() < 1e-15);
            assert!(b.factors.iter().all(|f| *f == LocalFactor::Basis(j)));
        }
    }

    #[test]
    fn ghz_matches_dense_oracle() {
        let s = BranchState::<f64>::ghz_branches(3, 2).unwrap();
        assert!(dense_eq(&s, &DenseState::uniform_ghz(3, 2).unwrap()) < 1e-15);
    }

    #[test]
    fn degenerate_dimension_rejected() {
        assert!(BranchState::<f64>::ghz_branches(1, 1).is_err());
    }

    #[test]
    fn clock_multiplies_branch_coefficients() {
        let d = 5;
        let s = BranchState::<f64>::ghz_branches(d, 3).unwrap().apply_local(1, &ops::clock(d, 1)).unwrap();
        for (j, b) in s.branches().iter().enumerate() {
            let expected = root_of_unity::<f64>(j as i64, d) / (d as f64).sqrt();
            assert!((b.coeff - expected).norm() < 1e-14);
            assert!(b.factors.iter().all(|f| f.is_basis()));
        }
    }

    #[test]
    fn shift_moves_labels() {
        let d = 4;
        let s = BranchState::<f64>::ghz_branches(d, 2).unwrap().apply_local(1, &ops::shift(d, 1)).unwrap();
        for b in s.branches() {
            let (LocalFactor::Basis(x), LocalFactor::Basis(y)) = (&b.factors[0], &b.factors[1]) else { panic!() };
            assert_eq!((x + 1) % d, *y);
        }
    }

    #[test]
    fn non_monomial_promotes_factor() {
        let d = 3;
        let s = BranchState::<f64>::ghz_branches(d, 2).unwrap().apply_local(0, &ops::fourier(d)).unwrap();
        assert!(s.branches().iter().all(|b| !b.factors[0].is_basis()));
        let dense = DenseState::uniform_ghz(d, 2).unwrap().apply_local(0, &ops::fourier(d)).unwrap();
        assert!(dense_eq(&s, &dense) < 1e-14);
    }

    #[test]
    fn attach_adds_factor_to_every_branch() {
        let s = BranchState::<f64>::ghz_branches(3, 2).unwrap().attach(3, &ops::basis_vector(3, 0)).unwrap();
        assert!(s.branches().iter().all(|b| b.factors[2] == LocalFactor::Basis(0)));
        let psi = ops::phase_state(3, 0.7);
        let s = BranchState::<f64>::ghz_branches(3, 2).unwrap().attach(3, &psi).unwrap();
        let dense = DenseState::uniform_ghz(3, 2).unwrap().attach(3, &psi).unwrap();
        assert!(dense_eq(&s, &dense) < 1e-15);
    }

    #[test]
    fn attach_to_empty_state_rejected() {
        let mut s = BranchState::<f64>::ghz_branches(2, 1).unwrap();
        s.branches.clear();
        assert!(s.attach(2, &ops::basis_vector(2, 0)).is_err());
    }

    #[test]
    fn joint_swap_fuses_and_matches_dense() {
        let d = 3;
        let psi = ops::fourier_vector(d, 1);
        let s = BranchState::<f64>::ghz_branches(d, 2).unwrap().attach(d, &psi).unwrap();
        let t = s.apply_joint(&[2, 0], &ops::swap(d)).unwrap();
        let dense = DenseState::uniform_ghz(d, 2).unwrap().attach(d, &psi).unwrap().apply_joint(&[2, 0], &ops::swap(d)).unwrap();
        assert!(dense_eq(&t, &dense) < 1e-14);
        let u = s.swap_registers(2, 0).unwrap();
        assert!(dense_eq(&u, &dense) < 1e-14);
    }

    #[test]
    fn reduced_density_matches_dense() {
        let d = 3;
        let psi = ops::phase_state(d, 0.4);
        let s = BranchState::<f64>::ghz_branches(d, 3)
            .unwrap()
            .apply_local(1, &ops::clock(d, 1))
            .unwrap()
            .attach(d, &psi)
            .unwrap()
            .apply_joint(&[3, 0], &ops::swap(d))
            .unwrap();
        let dense = s.to_dense().unwrap();
        for keep in [vec![0], vec![1], vec![3], vec![0, 3], vec![3, 1], vec![0, 1, 2, 3]] {
            let a = s.reduced_density(&keep).unwrap();
            let b = dense.partial_trace(&keep).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-12, "keep {keep:?}");
        }
    }

    #[test]
    fn single_register_reduced_density_is_mixed() {
        let s = BranchState::<f64>::ghz_branches(5, 4).unwrap();
        assert!(s.reduced_density(&[2]).unwrap().distance_from_maximally_mixed() < 1e-12);
    }

    #[test]
    fn pair_projector_on_untampered_ballot() {
        let d = 4;
        let s = BranchState::<f64>::ghz_branches(d, 3).unwrap();
        let mask: Vec<bool> = (0..d * d).map(|i| i / d == i % d).collect();
        let m = ProjectiveMeasurement::new(vec![d, d], vec![Projector::Diagonal(mask.clone()), Projector::Diagonal(mask.iter().map(|b| !b).collect())]).unwrap();
        let p = s.outcome_probabilities(&[0, 2], &m).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1].abs() < 1e-12);
    }

    #[test]
    fn empty_measurement_rejected() {
        assert!(ProjectiveMeasurement::<f64>::new(vec![2], vec![]).is_err());
    }

    #[test]
    fn measurement_matches_dense_for_every_projector_kind() {
        let d = 3;
        let psi = ops::phase_state(d, 1.1);
        let s = BranchState::<f64>::ghz_branches(d, 3)
            .unwrap()
            .apply_local(0, &ops::clock(d, 1))
            .unwrap()
            .attach(d, &psi)
            .unwrap();
        let dense = s.to_dense().unwrap();
        let masks: Vec<Projector<f64>> = (0..d)
            .map(|r| Projector::Diagonal((0..d * d).map(|i| i / d == (i % d + r) % d).collect()))
            .collect();
        let ghz: Vec<Projector<f64>> =
            (0..d).map(|q| Projector::GhzPhase((0..d).map(|j| root_of_unity((j * q) as i64, d)).collect())).collect();
        let cases: Vec<(Vec<usize>, ProjectiveMeasurement<f64>)> = vec![
            (vec![1, 3], ProjectiveMeasurement::new(vec![d, d], masks).unwrap()),
            (vec![0, 1, 2], ProjectiveMeasurement::with_remainder(vec![d; 3], ghz.clone()).unwrap()),
            (vec![0, 1, 2, 3], ProjectiveMeasurement::with_remainder(vec![d; 4], ghz).unwrap()),
            (vec![3], ProjectiveMeasurement::new(vec![d], (0..d).map(|m| Projector::Rank1(ops::fourier_vector(d, m))).collect()).unwrap()),
        ];
        for (regs, m) in cases {
            let pa = s.outcome_probabilities(&regs, &m).unwrap();
            let pb = dense.outcome_probabilities(&regs, &m).unwrap();
            for (k, (x, y)) in pa.iter().zip(&pb).enumerate() {
                assert!((x - y).abs() < 1e-12, "regs {regs:?}");
                if *y > 1e-9 {
                    let (_, sa) = s.collapse(&regs, &m, k).unwrap();
                    let (_, sb) = dense.collapse(&regs, &m, k).unwrap();
                    assert!(dense_eq(&sa, &sb) < 1e-12, "regs {regs:?} outcome {k}");
                }
            }
        }
    }

    #[test]
    fn sampled_outcomes_agree_with_dense_for_same_seed() {
        let d = 4;
        let s = BranchState::<f64>::ghz_branches(d, 2).unwrap().apply_local(0, &ops::fourier(d)).unwrap();
        let dense = s.to_dense().unwrap();
        let m = ProjectiveMeasurement::computational(vec![d]).unwrap();
        for seed in 0..50 {
            let a = s.measure(&[1], &m, &mut SimRng::new(seed)).unwrap();
            let b = dense.measure(&[1], &m, &mut SimRng::new(seed)).unwrap();
            assert_eq!(a.outcome, b.outcome);
        }
    }

    #[test]
    fn detach_requires_product_register() {
        let s = BranchState::<f64>::ghz_branches(3, 2).unwrap();
        assert!(matches!(s.detach(1, 0), Err(Error::NotProduct(1))));
        let t = s.attach(2, &ops::basis_vector(2, 1)).unwrap().detach(2, 1).unwrap();
        assert_eq!(t, s);
    }
}
