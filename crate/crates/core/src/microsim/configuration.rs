use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};

/// Occupation numbers `η_0, …, η_N` with the particle count cached.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    occ: Vec<u8>,
    mass: usize,
}

impl Configuration {
    pub fn empty(n: usize) -> Self {
        Self {
            occ: vec![0; n + 1],
            mass: 0,
        }
    }

    pub fn filled(n: usize) -> Self {
        Self {
            occ: vec![1; n + 1],
            mass: n + 1,
        }
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        if bits.len() < 2 {
            return Err(invalid("a configuration needs at least two sites"));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(invalid("occupation numbers must be 0 or 1"));
        }
        Ok(Self {
            occ: bits.to_vec(),
            mass: bits.iter().map(|&b| b as usize).sum(),
        })
    }

    /// Lattice size `N`; the configuration has `N + 1` sites.
    pub fn n(&self) -> usize {
        self.occ.len() - 1
    }

    pub fn sites(&self) -> &[u8] {
        &self.occ
    }

    #[inline]
    pub fn get(&self, i: usize) -> u8 {
        self.occ[i]
    }

    pub fn mass(&self) -> usize {
        self.mass
    }

    /// Exchanges `η_i` and `η_{i+1}`.
    #[inline]
    pub fn swap(&mut self, i: usize) {
        self.occ.swap(i, i + 1);
    }

    /// Toggles `η_i`.
    #[inline]
    pub fn flip(&mut self, i: usize) {
        let v = self.occ[i];
        self.occ[i] = 1 - v;
        if v == 1 {
            self.mass -= 1;
        } else {
            self.mass += 1;
        }
    }

    /// Whether the cached mass matches the occupation count.
    pub fn audit(&self) -> bool {
        self.occ.iter().map(|&b| b as usize).sum::<usize>() == self.mass
    }

    /// Run-length encoding `first runs…`, e.g. `1 3,5,2` for `111 00000 11`.
    pub fn to_rle(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{} ", self.occ[0]);
        let mut current = self.occ[0];
        let mut run = 0usize;
        let mut first = true;
        for &b in &self.occ {
            if b == current {
                run += 1;
            } else {
                if !first {
                    out.push(',');
                }
                let _ = write!(out, "{run}");
                first = false;
                current = b;
                run = 1;
            }
        }
        if !first {
            out.push(',');
        }
        let _ = write!(out, "{run}");
        out
    }

    pub fn from_rle(text: &str) -> Result<Self> {
        let bad = || Error::Config(format!("malformed run-length encoding: {text:?}"));
        let mut parts = text.split_whitespace();
        let mut bit: u8 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let runs = parts.next().ok_or_else(bad)?;
        if bit > 1 || parts.next().is_some() {
            return Err(bad());
        }
        let mut occ = Vec::new();
        for run in runs.split(',') {
            let len: usize = run.parse().map_err(|_| bad())?;
            if len == 0 {
                return Err(bad());
            }
            occ.extend(std::iter::repeat(bit).take(len));
            bit = 1 - bit;
        }
        Self::from_bits(&occ)
    }
}
