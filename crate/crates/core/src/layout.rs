//! Named-register layouts and subsystem addressing.
//!
//! A [`SystemLayout`] is an ordered list of `(name, dim)` registers. Basis
//! indices are row-major over the register order: the leftmost register
//! varies slowest. Every permutation of registers is done through an
//! explicit reindexing (`permutation_to`), so there is a single source of
//! truth for subsystem addressing.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemLayout {
    regs: Vec<(String, usize)>,
}

impl SystemLayout {
    pub fn new(regs: Vec<(String, usize)>) -> Result<Self> {
        for (name, dim) in &regs {
            if *dim == 0 {
                return Err(Error::Dimension(format!("register {name} has dimension 0")));
            }
        }
        for i in 0..regs.len() {
            for j in (i + 1)..regs.len() {
                if regs[i].0 == regs[j].0 {
                    return Err(Error::Addressing(format!(
                        "duplicate register name {}",
                        regs[i].0
                    )));
                }
            }
        }
        Ok(SystemLayout { regs })
    }

    pub fn of(regs: &[(&str, usize)]) -> Self {
        SystemLayout::new(regs.iter().map(|(n, d)| (n.to_string(), *d)).collect())
            .expect("static layout must be valid")
    }

    pub fn registers(&self) -> &[(String, usize)] {
        &self.regs
    }

    pub fn len(&self) -> usize {
        self.regs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regs.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.regs.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.regs.iter().map(|(_, d)| d).product()
    }

    pub fn dim_of(&self, name: &str) -> Result<usize> {
        self.position(name).map(|i| self.regs[i].1)
    }

    /// Product of dims over a set of registers.
    pub fn dim_of_set(&self, names: &[&str]) -> Result<usize> {
        let mut d = 1usize;
        for n in names {
            d *= self.dim_of(n)?;
        }
        Ok(d)
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.regs
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Addressing(format!("unknown register {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.regs.iter().any(|(n, _)| n == name)
    }

    /// Row-major strides: index = sum_k strides[k] * i_k, leftmost slowest.
    pub fn strides(&self) -> Vec<usize> {
        let n = self.regs.len();
        let mut s = vec![1usize; n];
        for k in (0..n.saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.regs[k + 1].1;
        }
        s
    }

    /// Concatenation; register names must stay disjoint.
    pub fn concat(&self, other: &SystemLayout) -> Result<SystemLayout> {
        for (n, _) in &other.regs {
            if self.contains(n) {
                return Err(Error::Addressing(format!(
                    "register name collision on {n}"
                )));
            }
        }
        let mut regs = self.regs.clone();
        regs.extend(other.regs.iter().cloned());
        SystemLayout::new(regs)
    }

    /// Sub-layout of the named registers, preserving this layout's order.
    pub fn subset(&self, keep: &[&str]) -> Result<SystemLayout> {
        for k in keep {
            self.position(k)?;
        }
        let regs = self
            .regs
            .iter()
            .filter(|(n, _)| keep.contains(&n.as_str()))
            .cloned()
            .collect();
        SystemLayout::new(regs)
    }

    /// Complement of the named registers, preserving order.
    pub fn complement(&self, drop: &[&str]) -> Result<SystemLayout> {
        for k in drop {
            self.position(k)?;
        }
        let regs = self
            .regs
            .iter()
            .filter(|(n, _)| !drop.contains(&n.as_str()))
            .cloned()
            .collect();
        SystemLayout::new(regs)
    }

    pub fn rename(&self, from: &str, to: &str) -> Result<SystemLayout> {
        let idx = self.position(from)?;
        let mut regs = self.regs.clone();
        regs[idx].0 = to.to_string();
        SystemLayout::new(regs)
    }

    /// Flat basis index for the given per-register indices.
    pub fn flat_index(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.regs.len());
        let strides = self.strides();
        multi.iter().zip(&strides).map(|(i, s)| i * s).sum()
    }

    /// Per-register indices for a flat basis index.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let strides = self.strides();
        strides
            .iter()
            .map(|s| {
                let q = flat / s;
                flat %= s;
                q
            })
            .collect()
    }

    /// The flat-index permutation carrying this layout onto `target` (same
    /// registers, possibly different order): `perm[i]` is the target index
    /// of source basis vector `i`.
    pub fn permutation_to(&self, target: &SystemLayout) -> Result<Vec<usize>> {
        if self.len() != target.len() || self.total_dim() != target.total_dim() {
            return Err(Error::Addressing(
                "permutation requires identical register sets".into(),
            ));
        }
        let mut src_pos_of_target_reg = Vec::with_capacity(target.len());
        for (n, d) in &target.regs {
            let p = self.position(n)?;
            if self.regs[p].1 != *d {
                return Err(Error::Dimension(format!(
                    "register {n} has dim {} vs {}",
                    self.regs[p].1, d
                )));
            }
            src_pos_of_target_reg.push(p);
        }
        let dim = self.total_dim();
        let mut perm = vec![0usize; dim];
        for flat in 0..dim {
            let multi = self.multi_index(flat);
            let tmulti: Vec<usize> = src_pos_of_target_reg.iter().map(|&p| multi[p]).collect();
            perm[flat] = target.flat_index(&tmulti);
        }
        Ok(perm)
    }
}

/// Replica register name for copy `i` (1-based) of a base register.
pub fn replica_name(base: &str, i: usize) -> String {
    format!("{base}{i}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strides_row_major() {
        let l = SystemLayout::of(&[("A", 2), ("B", 3), ("C", 4)]);
        assert_eq!(l.strides(), vec![12, 4, 1]);
        assert_eq!(l.total_dim(), 24);
        assert_eq!(l.flat_index(&[1, 2, 3]), 12 + 8 + 3);
        assert_eq!(l.multi_index(23), vec![1, 2, 3]);
    }

    #[test]
    fn duplicate_names_rejected() {
        assert!(SystemLayout::new(vec![("A".into(), 2), ("A".into(), 2)]).is_err());
    }

    #[test]
    fn permutation_round_trip() {
        let l = SystemLayout::of(&[("A", 2), ("B", 3)]);
        let t = SystemLayout::of(&[("B", 3), ("A", 2)]);
        let p = l.permutation_to(&t).unwrap();
        // (a,b) at a*3+b goes to b*2+a
        for a in 0..2 {
            for b in 0..3 {
                assert_eq!(p[a * 3 + b], b * 2 + a);
            }
        }
        let back = t.permutation_to(&l).unwrap();
        for i in 0..6 {
            assert_eq!(back[p[i]], i);
        }
    }

    #[test]
    fn unknown_register_errors() {
        let l = SystemLayout::of(&[("A", 2)]);
        assert!(l.subset(&["Q"]).is_err());
        assert!(l.position("Q").is_err());
    }
}
