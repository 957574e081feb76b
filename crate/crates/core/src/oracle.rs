//! Brute-force reference computations on small grids: dense Dirichlet solves,
//! direct quadrature and direct Fourier sums. Nothing here uses sparsity, FFTs
//! or factorization reuse.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::fields::CoefficientSet;
use crate::grid::Grid;

/// Largest Ω̄ side, in nodes, the dense oracle accepts.
pub const MAX_DENSE_SIDE: usize = 12;

/// Dense interior operator and boundary coupling.
#[derive(Debug, Clone)]
pub struct DenseProblem {
    pub interior: Vec<usize>,
    pub boundary: Vec<usize>,
    pub matrix: DMatrix<f64>,
    pub coupling: DMatrix<f64>,
}

impl DenseProblem {
    /// Rows of `Σ_j √(γ_i γ_j)(u_j − u_i)/h² + (k² + D_i) u_i = 0` at interior nodes.
    pub fn new(coeffs: &CoefficientSet) -> Result<Self> {
        let grid = *coeffs.grid();
        let side = 2 * grid.omega_cells() + 1;
        if side > MAX_DENSE_SIDE {
            return Err(Error::DomainViolation(format!(
                "dense oracle limited to {MAX_DENSE_SIDE} nodes per axis of Ω̄, got {side}"
            )));
        }
        let interior: Vec<usize> = (0..grid.len()).filter(|&i| grid.in_omega_interior(i)).collect();
        let boundary: Vec<usize> = (0..grid.len()).filter(|&i| grid.on_omega_boundary(i)).collect();
        let gam = coeffs.gamma.values();
        let h2 = grid.h() * grid.h();
        let mut matrix = DMatrix::zeros(interior.len(), interior.len());
        let mut coupling = DMatrix::zeros(interior.len(), boundary.len());
        for (r, &i) in interior.iter().enumerate() {
            matrix[(r, r)] += coeffs.k * coeffs.k + coeffs.dcoef.values()[i];
            for axis in 0..grid.dim() {
                for step in [-1, 1] {
                    let j = grid.neighbor(i, axis, step);
                    let w = (gam[i] * gam[j]).sqrt() / h2;
                    matrix[(r, r)] -= w;
                    if let Ok(c) = interior.binary_search(&j) {
                        matrix[(r, c)] += w;
                    } else {
                        let c = boundary.binary_search(&j).expect("neighbor of an interior node lies in Ω̄");
                        coupling[(r, c)] += w;
                    }
                }
            }
        }
        Ok(Self { interior, boundary, matrix, coupling })
    }
}

/// Dense LU solution of the Dirichlet problem; zero outside Ω̄.
pub fn dense_solve(coeffs: &CoefficientSet, g: &[f64]) -> Result<RealField> {
    let p = DenseProblem::new(coeffs)?;
    if g.len() != p.boundary.len() {
        return Err(Error::ShapeMismatch(format!("expected {} boundary values", p.boundary.len())));
    }
    let rhs = -(&p.coupling * DVector::from_column_slice(g));
    let x = p.matrix.clone().lu().solve(&rhs).ok_or(Error::SingularMatrix)?;
    let grid = *coeffs.grid();
    let mut values = vec![0.0; grid.len()];
    for (r, &i) in p.interior.iter().enumerate() {
        values[i] = x[r];
    }
    for (c, &i) in p.boundary.iter().enumerate() {
        values[i] = g[c];
    }
    RealField::from_values(grid, values)
}

/// Integration region for [`quadrature_integral`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Omega,
    Ball,
    Box,
}

fn in_region(grid: &Grid, i: usize, region: Region) -> bool {
    match region {
        Region::Omega => grid.in_omega(i),
        Region::Ball => grid.in_ball(i),
        Region::Box => true,
    }
}

/// `hⁿ Σ_{x ∈ region} Π_j f_j(x)`.
pub fn quadrature_integral(fields: &[&RealField], region: Region) -> f64 {
    let grid = *fields[0].grid();
    (0..grid.len())
        .filter(|&i| in_region(&grid, i, region))
        .map(|i| fields.iter().map(|f| f.values()[i]).product::<f64>())
        .sum::<f64>()
        * grid.cell_volume()
}

pub fn quadrature_integral_complex(fields: &[&ComplexField], region: Region) -> Complex64 {
    let grid = *fields[0].grid();
    (0..grid.len())
        .filter(|&i| in_region(&grid, i, region))
        .map(|i| fields.iter().map(|f| f.values()[i]).product::<Complex64>())
        .sum::<Complex64>()
        * grid.cell_volume()
}

/// `hⁿ Σ_x (Q₂ − Q₁)(x) e^{−i r η·x}` over the whole box.
pub fn fourier_mode_oracle(q1: &RealField, q2: &RealField, r: f64, eta: &[f64]) -> Complex64 {
    let grid = *q1.grid();
    (0..grid.len())
        .map(|i| {
            let x = grid.point(i);
            let phase: f64 = eta.iter().zip(&x).map(|(e, xa)| e * xa).sum::<f64>() * r;
            (q2.values()[i] - q1.values()[i]) * Complex64::from_polar(1.0, -phase)
        })
        .sum::<Complex64>()
        * grid.cell_volume()
}

/// Volume side of the boundary identity for solutions `u₁`, `u₂` of the two
/// problems, by direct lattice quadrature with `v_j = √γ_j u_j`:
///
/// ```text
/// Σ ∇√γ₂·∇(v₁v₂/√γ₂) − Σ ∇√γ₁·∇(v₁v₂/√γ₁) + Σ ((k²+D₂)/γ₂ − (k²+D₁)/γ₁) v₁v₂
/// ```
///
/// with forward differences on lattice edges of Ω̄.
pub fn volume_identity(c1: &CoefficientSet, c2: &CoefficientSet, u1: &RealField, u2: &RealField) -> f64 {
    let grid = *c1.grid();
    let h = grid.h();
    let hn = grid.cell_volume();
    let s1: Vec<f64> = c1.gamma.values().iter().map(|g| g.sqrt()).collect();
    let s2: Vec<f64> = c2.gamma.values().iter().map(|g| g.sqrt()).collect();
    let prod: Vec<f64> = (0..grid.len()).map(|i| s1[i] * u1.values()[i] * s2[i] * u2.values()[i]).collect();
    let k2 = c1.k * c1.k;
    let mut total = 0.0;
    for i in 0..grid.len() {
        if !grid.in_omega(i) {
            continue;
        }
        for axis in 0..grid.dim() {
            let j = grid.neighbor(i, axis, 1);
            if !grid.in_omega(j) || grid.offsets(j)[axis] < grid.offsets(i)[axis] {
                continue;
            }
            let term = |s: &[f64]| (s[j] - s[i]) * (prod[j] / s[j] - prod[i] / s[i]) / (h * h);
            total += (term(&s2) - term(&s1)) * hn;
        }
        let m2 = (k2 + c2.dcoef.values()[i]) / c2.gamma.values()[i];
        let m1 = (k2 + c1.dcoef.values()[i]) / c1.gamma.values()[i];
        total += (m2 - m1) * prod[i] * hn;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{make_phantom, Bump, BumpTarget, Phantom};
    use crate::spectral::{fft_real, spectral_measure};

    fn grid8() -> Grid {
        Grid::new(3, 8, 2.0, 0.5, 1.4).unwrap()
    }

    #[test]
    fn constants_solve_exactly() {
        let g = grid8();
        let c = make_phantom(g, &Phantom::default(), 0.0, 4.0).unwrap();
        let p = DenseProblem::new(&c).unwrap();
        let u = dense_solve(&c, &vec![1.0; p.boundary.len()]).unwrap();
        for i in 0..g.len() {
            if g.in_omega(i) {
                assert!((u.values()[i] - 1.0).abs() < 1e-12);
            }
        }
        assert!((&p.matrix - p.matrix.transpose()).amax() < 1e-14);
    }

    #[test]
    fn reflection_symmetry() {
        let g = Grid::new(3, 16, 2.0, 0.75, 1.6).unwrap();
        let bump = |c: f64| Phantom {
            bumps: vec![Bump { center: vec![c, 0.0, 0.0], radius: 0.3, amplitude: 0.7, target: BumpTarget::Gamma }],
        };
        let ca = make_phantom(g, &bump(0.2), 1.0, 4.0).unwrap();
        let cb = make_phantom(g, &bump(-0.2), 1.0, 4.0).unwrap();
        let pa = DenseProblem::new(&ca).unwrap();
        let reflect = |i: usize| {
            let mut m = g.multi_index(i);
            for a in 0..3 {
                m[a] = (g.n() - m[a]) % g.n();
            }
            g.flat_index(&m)
        };
        let ga: Vec<f64> = pa.boundary.iter().map(|&i| g.point(i)[0] + 0.3 * g.point(i)[1].powi(2)).collect();
        let gb: Vec<f64> = pa.boundary.iter().map(|&i| ga[pa.boundary.binary_search(&reflect(i)).unwrap()]).collect();
        let ua = dense_solve(&ca, &ga).unwrap();
        let ub = dense_solve(&cb, &gb).unwrap();
        for i in 0..g.len() {
            assert!((ua.values()[i] - ub.values()[reflect(i)]).abs() < 1e-10);
        }
    }

    #[test]
    fn guard_rejects_large_omega() {
        let g = Grid::new(3, 32, 2.0, 0.75, 1.6).unwrap();
        let c = make_phantom(g, &Phantom::default(), 0.0, 4.0).unwrap();
        assert!(DenseProblem::new(&c).is_err());
    }

    #[test]
    fn quadrature_examples() {
        let g = Grid::new(3, 16, 2.0, 0.75, 1.6).unwrap();
        let one = RealField::filled(g, 1.0);
        let vol = quadrature_integral(&[&one], Region::Omega);
        let surface_nodes = (0..g.len()).filter(|&i| g.on_omega_boundary(i)).count() as f64;
        assert!((vol - 1.5f64.powi(3)).abs() <= g.cell_volume() * surface_nodes);
        let odd = RealField::from_fn(g, |_, x| x[0] * (1.0 + x[1] * x[1]));
        assert!(quadrature_integral(&[&odd], Region::Omega).abs() < 1e-12);
        let f = RealField::from_fn(g, |_, x| (x[0] - 0.2).sin() * (-x[1] * x[1]).exp());
        let w = RealField::from_fn(g, |_, x| x[2].cos() + x[0]);
        let direct = quadrature_integral(&[&f, &w], Region::Box);
        let (fh, wh) = (fft_real(&f), fft_real(&w));
        let spectral: f64 =
            fh.coeffs().iter().zip(wh.coeffs()).map(|(a, b)| (a * b.conj()).re).sum::<f64>() * spectral_measure(&g);
        assert!((direct - spectral).abs() < 1e-10 * direct.abs().max(1.0));
    }

    #[test]
    fn fourier_mode_examples() {
        let g = grid8();
        let q1 = RealField::from_fn(g, |_, x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp());
        let q2 = RealField::from_fn(g, |_, x| (-(x[0] * x[0] + x[1] * x[1] + 2.0 * x[2] * x[2])).exp());
        assert_eq!(fourier_mode_oracle(&q1, &q1, 3.0, &[0.0, 0.0, 1.0]), Complex64::default());
        let diff = q2.zip_map(&q1, |a, b| a - b);
        let plain = quadrature_integral(&[&diff], Region::Box);
        assert!((fourier_mode_oracle(&q1, &q2, 0.0, &[1.0, 0.0, 0.0]) - plain).norm() < 1e-12);
        let spec = fft_real(&diff);
        let idx = g.flat_index(&[6, 1, 0]);
        let xi = g.frequency(idx);
        let r = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
        let eta: Vec<f64> = xi.iter().map(|x| x / r).collect();
        assert!((fourier_mode_oracle(&q1, &q2, r, &eta) - spec.coeffs()[idx]).norm() < 1e-10);
    }
}
