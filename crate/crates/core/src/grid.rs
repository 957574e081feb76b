//! Periodic lattice over the box `[-R_box, R_box)^n`, the cube `Ω = [-L, L]^n`
//! and the ball `B = B(0, R)` sitting between them.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Lattice geometry. Coordinates run `x_j = -R_box + j h`, row-major with the
/// first axis slowest. Unused trailing components of a point are zero in 2-D.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: usize,
    r_box: f64,
    l_omega: f64,
    r_ball: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, r_box: f64, l_omega: f64, r_ball: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{2, 3}}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("N = {n} must be a power of two >= 8")));
        }
        if !(r_box > 0.0 && r_box.is_finite()) {
            return Err(Error::InvalidGrid(format!("R_box = {r_box} must be positive")));
        }
        let grid = Self { dim, n, r_box, l_omega, r_ball };
        let h = grid.h();
        let cells = l_omega / h;
        if l_omega <= 0.0 || (cells - cells.round()).abs() > 1e-9 || cells.round() < 1.0 {
            return Err(Error::InvalidGrid(format!(
                "L_Omega = {l_omega} must be a positive multiple of h = {h}"
            )));
        }
        let corner = l_omega * (dim as f64).sqrt();
        if r_ball - corner < h - 1e-12 {
            return Err(Error::InvalidGrid(format!(
                "ball radius {r_ball} must exceed the cube corner distance {corner:.4} by h = {h}"
            )));
        }
        if r_box - r_ball < h - 1e-12 {
            return Err(Error::InvalidGrid(format!(
                "ball radius {r_ball} must stay h = {h} inside R_box = {r_box}"
            )));
        }
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r_box(&self) -> f64 {
        self.r_box
    }

    pub fn l_omega(&self) -> f64 {
        self.l_omega
    }

    pub fn r_ball(&self) -> f64 {
        self.r_ball
    }

    pub fn h(&self) -> f64 {
        2.0 * self.r_box / self.n as f64
    }

    /// Total number of lattice nodes, `N^n`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume of one lattice cell, `h^n`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    /// Half-width of Ω in lattice cells.
    pub fn omega_cells(&self) -> usize {
        (self.l_omega / self.h()).round() as usize
    }

    /// Lattice index of the origin along each axis.
    pub fn center_index(&self) -> usize {
        self.n / 2
    }

    pub fn coord(&self, j: usize) -> f64 {
        -self.r_box + j as f64 * self.h()
    }

    pub fn multi_index(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        for a in (0..self.dim).rev() {
            out[a] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    pub fn flat_index(&self, mi: &[usize; 3]) -> usize {
        (0..self.dim).fold(0, |acc, a| acc * self.n + mi[a])
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        let mi = self.multi_index(idx);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.coord(mi[a]);
        }
        x
    }

    /// Index of the neighbour one step along `axis` in direction `step` (±1), with periodic wrap.
    pub fn neighbor(&self, idx: usize, axis: usize, step: isize) -> usize {
        let mut mi = self.multi_index(idx);
        mi[axis] = (mi[axis] as isize + step).rem_euclid(self.n as isize) as usize;
        self.flat_index(&mi)
    }

    /// Offset of each axis index from the center, in cells.
    pub fn offsets(&self, idx: usize) -> [isize; 3] {
        let mi = self.multi_index(idx);
        let c = self.center_index() as isize;
        let mut o = [0isize; 3];
        for a in 0..self.dim {
            o[a] = mi[a] as isize - c;
        }
        o
    }

    /// Node lies in the closed cube Ω̄.
    pub fn in_omega(&self, idx: usize) -> bool {
        let m = self.omega_cells() as isize;
        self.offsets(idx)[..self.dim].iter().all(|o| o.abs() <= m)
    }

    /// Node lies strictly inside Ω.
    pub fn in_omega_interior(&self, idx: usize) -> bool {
        let m = self.omega_cells() as isize;
        self.offsets(idx)[..self.dim].iter().all(|o| o.abs() < m)
    }

    /// Node lies on ∂Ω.
    pub fn on_omega_boundary(&self, idx: usize) -> bool {
        self.in_omega(idx) && !self.in_omega_interior(idx)
    }

    pub fn in_ball(&self, idx: usize) -> bool {
        let x = self.point(idx);
        norm(&x[..self.dim]) <= self.r_ball + 1e-12
    }

    /// Spacing of the frequency lattice, `π / R_box`.
    pub fn dxi(&self) -> f64 {
        PI / self.r_box
    }

    /// Frequency cell volume `(π/R_box)^n`.
    pub fn freq_cell_volume(&self) -> f64 {
        self.dxi().powi(self.dim as i32)
    }

    /// Signed integer frequency for FFT bin `k` along one axis.
    pub fn signed_bin(&self, k: usize) -> isize {
        if k < self.n / 2 {
            k as isize
        } else {
            k as isize - self.n as isize
        }
    }

    /// Lattice frequency ξ of FFT bin `idx` (same flat layout as the spatial lattice).
    pub fn frequency(&self, idx: usize) -> [f64; 3] {
        let mi = self.multi_index(idx);
        let mut xi = [0.0; 3];
        for a in 0..self.dim {
            xi[a] = self.signed_bin(mi[a]) as f64 * self.dxi();
        }
        xi
    }

    /// Flat FFT index of the lattice frequency closest to `xi`, with the distance to it.
    pub fn nearest_frequency(&self, xi: &[f64]) -> (usize, f64) {
        let mut mi = [0usize; 3];
        let mut d2 = 0.0;
        for a in 0..self.dim {
            let b = (xi[a] / self.dxi()).round();
            d2 += (xi[a] - b * self.dxi()).powi(2);
            mi[a] = (b as isize).rem_euclid(self.n as isize) as usize;
        }
        (self.flat_index(&mi), d2.sqrt())
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
