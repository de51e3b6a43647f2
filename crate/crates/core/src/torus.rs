//! Periodic lattice geometry shared by every module.
//!
//! Sites are stored flat in row-major order. A torus with `side` sites per
//! dimension carries the macroscopic unit torus with spacing `1/side`, so the
//! scale parameter `n` of the particle system is the side length itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Torus {
    dim: usize,
    side: usize,
}

impl Torus {
    pub fn new(dim: usize, side: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Dimension(dim));
        }
        if side < 2 || !side.is_multiple_of(2) {
            return Err(Error::TorusSide(side));
        }
        Ok(Torus { dim, side })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn sites(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    /// `n^d`, the inverse of the per-site measure weight.
    pub fn volume_factor(&self) -> f64 {
        (self.side as f64).powi(self.dim as i32)
    }

    pub fn coords(&self, index: usize) -> [usize; 2] {
        if self.dim == 1 {
            [index, 0]
        } else {
            [index / self.side, index % self.side]
        }
    }

    pub fn index(&self, coords: [usize; 2]) -> usize {
        if self.dim == 1 {
            coords[0]
        } else {
            coords[0] * self.side + coords[1]
        }
    }

    /// Site reached from `index` by the displacement `disp` (periodic).
    #[inline]
    pub fn shift(&self, index: usize, disp: [i64; 2]) -> usize {
        let m = self.side as i64;
        if self.dim == 1 {
            (index as i64 + disp[0]).rem_euclid(m) as usize
        } else {
            let r = (index / self.side) as i64;
            let c = (index % self.side) as i64;
            let r = (r + disp[0]).rem_euclid(m) as usize;
            let c = (c + disp[1]).rem_euclid(m) as usize;
            r * self.side + c
        }
    }

    /// Macroscopic position `x / n` of a site.
    pub fn point(&self, index: usize) -> [f64; 2] {
        let c = self.coords(index);
        let h = 1.0 / self.side as f64;
        [c[0] as f64 * h, c[1] as f64 * h]
    }

    /// Centered representative in `(-side/2, side/2]` of a residue.
    pub fn centered(&self, k: usize) -> i64 {
        let m = self.side as i64;
        let k = k as i64;
        if k > m / 2 {
            k - m
        } else {
            k
        }
    }

    /// Signed Fourier mode (or displacement) attached to a flat index.
    pub fn signed(&self, index: usize) -> [i64; 2] {
        let c = self.coords(index);
        if self.dim == 1 {
            [self.centered(c[0]), 0]
        } else {
            [self.centered(c[0]), self.centered(c[1])]
        }
    }

    /// Flat index of a signed mode or displacement (taken modulo the side).
    pub fn wrap(&self, v: [i64; 2]) -> usize {
        self.shift(0, v)
    }

    /// Flat index of `-v` for the vector stored at `index`.
    pub fn negate(&self, index: usize) -> usize {
        let s = self.signed(index);
        self.wrap([-s[0], -s[1]])
    }

    pub fn iter(&self) -> std::ops::Range<usize> {
        0..self.sites()
    }
}
