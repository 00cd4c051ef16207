//! Player block structure over the flattened profile vector.
//!
//! A profile `x` lives in `R^n` with `n = n_1 + ... + n_p`; player `nu`
//! (0-based everywhere in the API, 1-based only in surface syntax and CLI
//! output) owns the contiguous slice starting at `offset(nu)`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockStructure {
    dims: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockStructure {
    /// Panics on an empty player list or a zero-dimensional block.
    pub fn new(dims: Vec<usize>) -> Self {
        assert!(!dims.is_empty(), "at least one player");
        assert!(dims.iter().all(|&d| d > 0), "blocks must be nonempty");
        let mut offsets = Vec::with_capacity(dims.len());
        let mut acc = 0;
        for &d in &dims {
            offsets.push(acc);
            acc += d;
        }
        BlockStructure { dims, offsets }
    }

    pub fn players(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self) -> usize {
        self.offsets.last().unwrap() + self.dims.last().unwrap()
    }

    pub fn block_dim(&self, nu: usize) -> usize {
        self.dims[nu]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn range(&self, nu: usize) -> Range<usize> {
        let o = self.offsets[nu];
        o..o + self.dims[nu]
    }

    pub fn indices(&self, nu: usize) -> Vec<usize> {
        self.range(nu).collect()
    }

    pub fn block<'a>(&self, x: &'a [f64], nu: usize) -> &'a [f64] {
        &x[self.range(nu)]
    }

    /// Rival coordinates of `x`, i.e. everything outside block `nu`,
    /// in flat order.
    pub fn rivals(&self, x: &[f64], nu: usize) -> Vec<f64> {
        let r = self.range(nu);
        x.iter()
            .enumerate()
            .filter(|(i, _)| !r.contains(i))
            .map(|(_, v)| *v)
            .collect()
    }

    /// Full profile with block `nu` of `base` replaced by `block`.
    pub fn assemble(&self, base: &[f64], nu: usize, block: &[f64]) -> Vec<f64> {
        assert_eq!(base.len(), self.dim());
        assert_eq!(block.len(), self.dims[nu]);
        let mut out = base.to_vec();
        out[self.range(nu)].copy_from_slice(block);
        out
    }

    /// True when `a` and `b` agree outside block `nu` within `tol`
    /// (componentwise).
    pub fn rivals_match(&self, a: &[f64], b: &[f64], nu: usize, tol: f64) -> bool {
        let r = self.range(nu);
        a.iter()
            .zip(b)
            .enumerate()
            .all(|(i, (u, v))| r.contains(&i) || (u - v).abs() <= tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let b = BlockStructure::new(vec![2, 1, 3]);
        assert_eq!(b.players(), 3);
        assert_eq!(b.dim(), 6);
        assert_eq!(b.range(1), 2..3);
        let x = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(b.block(&x, 2), &[3.0, 4.0, 5.0]);
        assert_eq!(b.rivals(&x, 1), vec![0.0, 1.0, 3.0, 4.0, 5.0]);
        assert_eq!(b.assemble(&x, 0, &[9.0, 8.0]), vec![9.0, 8.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn rivals_match_ignores_own_block() {
        let b = BlockStructure::new(vec![1, 1]);
        assert!(b.rivals_match(&[5.0, 1.0], &[7.0, 1.0], 0, 1e-9));
        assert!(!b.rivals_match(&[5.0, 1.0], &[5.0, 2.0], 0, 1e-9));
    }
}
