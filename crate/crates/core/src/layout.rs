use crate::error::{Error, Result};

/// Maximum number of amplitudes the dense backend will allocate.
pub const DENSE_BUDGET: usize = 1 << 22;

/// Ordered per-register dimensions.
///
/// Flattened basis indices put register 0 in the most significant digit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RegisterLayout {
    dims: Vec<usize>,
}

impl RegisterLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if let Some(&d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidDimension(format!("register dimension {d} < 2")));
        }
        Ok(Self { dims })
    }

    pub fn uniform(dim: usize, registers: usize) -> Result<Self> {
        Self::new(vec![dim; registers])
    }

    pub fn empty() -> Self {
        Self { dims: Vec::new() }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn dim(&self, register: usize) -> usize {
        self.dims[register]
    }

    /// Product of all dimensions, saturating at `u128::MAX`.
    pub fn total(&self) -> u128 {
        product(self.dims.iter().copied())
    }

    /// Total size, or a budget error if the dense backend cannot hold it.
    pub fn dense_size(&self) -> Result<usize> {
        let total = self.total();
        if total > DENSE_BUDGET as u128 {
            return Err(Error::BudgetExceeded { requested: total, limit: DENSE_BUDGET });
        }
        Ok(total as usize)
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.dims.len()];
        for i in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1].saturating_mul(self.dims[i + 1]);
        }
        strides
    }

    pub fn check_register(&self, register: usize) -> Result<()> {
        if register >= self.dims.len() {
            return Err(Error::InvalidRegister { index: register, count: self.dims.len() });
        }
        Ok(())
    }

    /// Validates a non-empty list of distinct registers.
    pub fn check_targets(&self, targets: &[usize]) -> Result<()> {
        if targets.is_empty() {
            return Err(Error::InvalidRegister { index: usize::MAX, count: self.dims.len() });
        }
        for (i, &t) in targets.iter().enumerate() {
            self.check_register(t)?;
            if targets[..i].contains(&t) {
                return Err(Error::DuplicateRegister(t));
            }
        }
        Ok(())
    }

    pub fn sub_dims(&self, targets: &[usize]) -> Vec<usize> {
        targets.iter().map(|&t| self.dims[t]).collect()
    }

    pub fn extended(&self, dim: usize) -> Result<Self> {
        let mut dims = self.dims.clone();
        dims.push(dim);
        Self::new(dims)
    }

    pub fn concat(&self, other: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self { dims }
    }

    pub fn without(&self, register: usize) -> Self {
        let mut dims = self.dims.clone();
        dims.remove(register);
        Self { dims }
    }

    /// Digits of a flat index (register 0 first).
    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (slot, &d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = index % d;
            index /= d;
        }
        out
    }

    pub fn index_of(&self, digits: &[usize]) -> usize {
        digits.iter().zip(&self.dims).fold(0, |acc, (&x, &d)| acc * d + x)
    }
}

pub(crate) fn product(it: impl IntoIterator<Item = usize>) -> u128 {
    it.into_iter().fold(1u128, |acc, d| acc.saturating_mul(d as u128))
}

/// Index bookkeeping for an operator acting on `targets` inside a flat vector.
///
/// `offsets[s]` is the flat offset of target sub-index `s` (first target most
/// significant); `bases` lists every flat index whose target digits are zero.
pub(crate) struct Subspace {
    pub offsets: Vec<usize>,
    pub bases: Vec<usize>,
}

impl Subspace {
    pub fn new(layout: &RegisterLayout, targets: &[usize]) -> Self {
        let strides = layout.strides();
        let mut offsets = vec![0usize];
        for &t in targets {
            let mut next = Vec::with_capacity(offsets.len() * layout.dim(t));
            for &o in &offsets {
                for x in 0..layout.dim(t) {
                    next.push(o + x * strides[t]);
                }
            }
            offsets = next;
        }
        let mut bases = vec![0usize];
        for r in 0..layout.len() {
            if targets.contains(&r) {
                continue;
            }
            let mut next = Vec::with_capacity(bases.len() * layout.dim(r));
            for &b in &bases {
                for x in 0..layout.dim(r) {
                    next.push(b + x * strides[r]);
                }
            }
            bases = next;
        }
        Self { offsets, bases }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_zero_is_most_significant() {
        let l = RegisterLayout::new(vec![2, 3]).unwrap();
        assert_eq!(l.index_of(&[1, 0]), 3);
        assert_eq!(l.digits(5), vec![1, 2]);
        assert_eq!(l.strides(), vec![3, 1]);
    }

    #[test]
    fn rejects_degenerate_dims() {
        assert!(RegisterLayout::new(vec![2, 1]).is_err());
    }

    #[test]
    fn budget_is_enforced() {
        let l = RegisterLayout::uniform(2, 23).unwrap();
        assert!(matches!(l.dense_size(), Err(Error::BudgetExceeded { .. })));
        assert_eq!(RegisterLayout::uniform(2, 22).unwrap().dense_size().unwrap(), 1 << 22);
    }

    #[test]
    fn subspace_covers_every_index_once() {
        let l = RegisterLayout::new(vec![2, 3, 2]).unwrap();
        let s = Subspace::new(&l, &[2, 0]);
        let mut seen = vec![false; 12];
        for &b in &s.bases {
            for &o in &s.offsets {
                assert!(!seen[b + o]);
                seen[b + o] = true;
            }
        }
        assert!(seen.into_iter().all(|x| x));
        // target order: register 2 is the most significant sub-digit
        assert_eq!(s.offsets, vec![0, 6, 1, 7]);
    }
}
