//! Coefficient phantoms, their compact-support extension, and the Liouville
//! transform `v = √γ u` taking the diffusion equation to `Δv + Q v = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, RealField};
use crate::grid::{norm, Grid};

/// Which coefficient a bump perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BumpTarget {
    Gamma,
    D,
}

/// `a · exp(-1 / (1 - |x-c|²/ρ²))` inside `|x - c| < ρ`, zero outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: f64,
    pub target: BumpTarget,
}

impl Bump {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let d2: f64 = self.center.iter().zip(x).map(|(c, x)| (x - c).powi(2)).sum();
        let t = d2 / (self.radius * self.radius);
        if t >= 1.0 {
            0.0
        } else {
            self.amplitude * (-1.0 / (1.0 - t)).exp()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Phantom {
    #[serde(default)]
    pub bumps: Vec<Bump>,
}

impl Phantom {
    /// Reference pair: a shared conductivity bump, and the same bump plus an
    /// absorption bump.
    pub fn reference_pair() -> (Phantom, Phantom) {
        let base = Phantom {
            bumps: vec![Bump { center: vec![0.1, 0.0, 0.0], radius: 0.4, amplitude: 0.5, target: BumpTarget::Gamma }],
        };
        let mut other = base.clone();
        other.bumps.push(Bump { center: vec![-0.1, 0.1, 0.0], radius: 0.35, amplitude: 1.5, target: BumpTarget::D });
        (base, other)
    }
}

/// A `(γ, D, k)` triple with `γ = 1`, `D = 0` off the bump supports.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub gamma: RealField,
    pub dcoef: RealField,
    pub k: f64,
    pub m_bound: f64,
}

impl CoefficientSet {
    pub fn grid(&self) -> &Grid {
        self.gamma.grid()
    }

    /// Same coefficients at another frequency.
    pub fn with_k(&self, k: f64) -> Self {
        Self { k, ..self.clone() }
    }

    /// `√γ` sampled on the lattice.
    pub fn sqrt_gamma(&self) -> RealField {
        self.gamma.map(f64::sqrt)
    }
}

/// Sample a phantom. Bump supports must stay one lattice spacing inside Ω,
/// which keeps `γ - 1` and `D` zero on ∂Ω and on the first interior layer.
pub fn make_phantom(grid: Grid, phantom: &Phantom, k: f64, m_bound: f64) -> Result<CoefficientSet> {
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::DomainViolation(format!("frequency k = {k} must be >= 0")));
    }
    if !(m_bound > 1.0) {
        return Err(Error::DomainViolation(format!("M = {m_bound} must exceed 1")));
    }
    let dim = grid.dim();
    let margin = grid.h();
    for (index, b) in phantom.bumps.iter().enumerate() {
        if b.center.len() != dim || !(b.radius > 0.0) {
            return Err(Error::BumpOutsideOmega { index, margin });
        }
        let reach = b.center.iter().fold(0.0f64, |m, c| m.max(c.abs())) + b.radius;
        if reach > grid.l_omega() - margin + 1e-12 {
            return Err(Error::BumpOutsideOmega { index, margin });
        }
    }
    let sample = |target: BumpTarget, base: f64| {
        Field::from_fn(grid, |_, x| {
            base + phantom
                .bumps
                .iter()
                .filter(|b| b.target == target)
                .map(|b| b.eval(&x[..dim]))
                .sum::<f64>()
        })
    };
    let gamma = sample(BumpTarget::Gamma, 1.0);
    let dcoef = sample(BumpTarget::D, 0.0);
    let floor = 1.0 / m_bound;
    let gmin = gamma.values().iter().cloned().fold(f64::INFINITY, f64::min);
    if gmin <= floor || gamma.max_abs() > m_bound {
        return Err(Error::PositivityViolated { min: gmin, floor });
    }
    if dcoef.max_abs() > m_bound {
        return Err(Error::DomainViolation(format!(
            "sup|D| = {} exceeds M = {m_bound}",
            dcoef.max_abs()
        )));
    }
    Ok(CoefficientSet { gamma, dcoef, k, m_bound })
}

/// Second-order `2n+1`-point Laplacian with periodic wrap.
pub fn discrete_laplacian(f: &RealField) -> RealField {
    let g = *f.grid();
    let inv_h2 = 1.0 / (g.h() * g.h());
    let v = f.values();
    Field::from_fn(g, |i, _| {
        let mut acc = -2.0 * g.dim() as f64 * v[i];
        for a in 0..g.dim() {
            acc += v[g.neighbor(i, a, 1)] + v[g.neighbor(i, a, -1)];
        }
        acc * inv_h2
    })
}

/// `q = -Δ√γ / √γ`.
pub fn liouville_q(coeffs: &CoefficientSet) -> RealField {
    let s = coeffs.sqrt_gamma();
    discrete_laplacian(&s).zip_map(&s, |lap, s| -lap / s)
}

/// Indicator of the closed cube Ω̄ on the lattice.
pub fn omega_indicator(grid: &Grid) -> RealField {
    Field::from_fn(*grid, |i, _| if grid.in_omega(i) { 1.0 } else { 0.0 })
}

/// `Q = q + (k² + D) γ⁻¹ χ_Ω`, the potential of `Δv + Qv = 0`.
#[allow(non_snake_case)]
pub fn liouville_Q(coeffs: &CoefficientSet) -> RealField {
    let grid = *coeffs.grid();
    let q = liouville_q(coeffs);
    let k2 = coeffs.k * coeffs.k;
    let (g, d) = (coeffs.gamma.values(), coeffs.dcoef.values());
    Field::from_fn(grid, |i, _| {
        let mass = if grid.in_omega(i) { (k2 + d[i]) / g[i] } else { 0.0 };
        q.values()[i] + mass
    })
}

/// `v = √γ · u`.
pub fn liouville_forward<T>(coeffs: &CoefficientSet, u: &Field<T>) -> Result<Field<T>>
where
    T: Copy + std::ops::Mul<f64, Output = T>,
{
    u.check_same_grid(&coeffs.gamma)?;
    Ok(u.zip_map(&coeffs.gamma, |u, g| u * g.sqrt()))
}

/// `u = γ^{-1/2} · v`.
pub fn liouville_inverse<T>(coeffs: &CoefficientSet, v: &Field<T>) -> Result<Field<T>>
where
    T: Copy + std::ops::Mul<f64, Output = T>,
{
    v.check_same_grid(&coeffs.gamma)?;
    Ok(v.zip_map(&coeffs.gamma, |v, g| v * (1.0 / g.sqrt())))
}

/// Euclidean distance helper shared with the tests.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d)
}
