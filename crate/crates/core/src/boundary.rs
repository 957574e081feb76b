//! Boundary eigenbasis of the cube surface, `H^{±1/2}(∂Ω)` norms, the operator
//! norm `‖·‖∗` and the data proxy `A`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Eigenpairs of the graph Laplacian on the boundary nodes of Ω̄, orthonormal
/// under the quadrature weight `hⁿ⁻¹` and sorted by eigenvalue.
#[derive(Debug, Clone)]
pub struct BoundaryBasis {
    grid: Grid,
    /// Global lattice indices of the boundary nodes, increasing.
    pub nodes: Vec<usize>,
    pub lambda: Vec<f64>,
    /// Column `i` holds `φ_i` at every boundary node.
    pub phi: DMatrix<f64>,
    pub weight: f64,
}

impl BoundaryBasis {
    pub fn new(grid: Grid) -> Self {
        let nodes: Vec<usize> = (0..grid.len()).filter(|&i| grid.on_omega_boundary(i)).collect();
        let nb = nodes.len();
        let h = grid.h();
        let w = 1.0 / (h * h);
        let mut lap = DMatrix::<f64>::zeros(nb, nb);
        for (p, &i) in nodes.iter().enumerate() {
            for axis in 0..grid.dim() {
                let j = grid.neighbor(i, axis, 1);
                if grid.offsets(j)[axis] < grid.offsets(i)[axis] {
                    continue; // wrapped around the box
                }
                if let Ok(q) = nodes.binary_search(&j) {
                    lap[(p, p)] += w;
                    lap[(q, q)] += w;
                    lap[(p, q)] -= w;
                    lap[(q, p)] -= w;
                }
            }
        }
        let eig = SymmetricEigen::new(lap);
        let mut order: Vec<usize> = (0..nb).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let weight = h.powi(grid.dim() as i32 - 1);
        let scale = weight.sqrt().recip();
        let mut phi = DMatrix::zeros(nb, nb);
        let mut lambda = Vec::with_capacity(nb);
        for (col, &src) in order.iter().enumerate() {
            let v = eig.eigenvectors.column(src);
            let pivot = v.iter().enumerate().fold(0, |m, (i, x)| if x.abs() > v[m].abs() + 1e-12 { i } else { m });
            let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
            phi.set_column(col, &(v * (sign * scale)));
            lambda.push(eig.eigenvalues[src].max(0.0));
        }
        lambda[0] = 0.0;
        Self { grid, nodes, lambda, phi, weight }
    }

    pub(crate) fn from_parts(grid: Grid, nodes: Vec<usize>, lambda: Vec<f64>, phi: DMatrix<f64>) -> Self {
        let weight = grid.h().powi(grid.dim() as i32 - 1);
        Self { grid, nodes, lambda, phi, weight }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    /// Identifier recorded with serialized DtN matrices.
    pub fn id(&self) -> String {
        format!(
            "cube-surface-n{}-N{}-Rbox{}-L{}",
            self.grid.dim(),
            self.grid.n(),
            self.grid.r_box(),
            self.grid.l_omega()
        )
    }

    /// Default truncation: 64 modes in 2-D, 128 in 3-D, capped by the basis size.
    pub fn default_modes(&self) -> usize {
        let m = if self.grid.dim() == 2 { 64 } else { 128 };
        m.min(self.len())
    }

    /// `c_i = Σ_b φ_i(b) g(b) hⁿ⁻¹` for the first `m` modes.
    pub fn coefficients(&self, g: &[f64], m: usize) -> Vec<f64> {
        (0..m).map(|i| self.phi.column(i).iter().zip(g).map(|(p, v)| p * v).sum::<f64>() * self.weight).collect()
    }

    pub fn coefficients_complex(&self, g: &[Complex64], m: usize) -> Vec<Complex64> {
        (0..m)
            .map(|i| self.phi.column(i).iter().zip(g).map(|(p, v)| v * *p).sum::<Complex64>() * self.weight)
            .collect()
    }

    /// `Σ_i c_i φ_i`.
    pub fn synthesize(&self, c: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.nodes.len()];
        for (i, ci) in c.iter().enumerate() {
            for (gb, p) in g.iter_mut().zip(self.phi.column(i).iter()) {
                *gb += ci * p;
            }
        }
        g
    }

    /// `Φ_mᵀ S Φ_m` for a nodal operator `S` with `⟨Λg, w⟩ = wᵀ S g`.
    pub fn project(&self, nodal: &DMatrix<f64>, m: usize, k: f64, label: &str) -> Result<DtNMatrix> {
        if m > self.len() || m == 0 {
            return Err(Error::ShapeMismatch(format!("{m} modes requested, basis has {}", self.len())));
        }
        if nodal.nrows() != self.len() || nodal.ncols() != self.len() {
            return Err(Error::ShapeMismatch("nodal operator does not match the boundary".into()));
        }
        let pm = self.phi.columns(0, m);
        let entries = pm.transpose() * nodal * pm;
        Ok(DtNMatrix {
            entries: (&entries + entries.transpose()) * 0.5,
            lambda: self.lambda[..m].to_vec(),
            k,
            id: format!("{label}:{}", self.id()),
        })
    }
}

/// DtN operator in boundary-eigenbasis coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DtNMatrix {
    pub entries: DMatrix<f64>,
    /// Eigenvalues of the modes spanning the matrix.
    pub lambda: Vec<f64>,
    pub k: f64,
    pub id: String,
}

impl DtNMatrix {
    pub fn modes(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|v| v.is_finite())
    }

    /// `L₁ − L₂`, keeping the metadata of `self`.
    pub fn difference(&self, other: &DtNMatrix) -> Result<DtNMatrix> {
        if self.modes() != other.modes() {
            return Err(Error::ShapeMismatch("DtN matrices have different truncations".into()));
        }
        Ok(DtNMatrix { entries: &self.entries - &other.entries, ..self.clone() })
    }

    /// `D L D` with `D = diag((1 + λ_i)^{-1/4})`.
    fn weighted(&self) -> DMatrix<f64> {
        let d: Vec<f64> = self.lambda.iter().map(|l| (1.0 + l).powf(-0.25)).collect();
        DMatrix::from_fn(self.modes(), self.modes(), |i, j| d[i] * self.entries[(i, j)] * d[j])
    }
}

/// `(Σ_i (1 + λ_i)^s |c_i|²)^{1/2}`.
pub fn sobolev_boundary_norm(basis: &BoundaryBasis, c: &[f64], s: f64) -> f64 {
    assert!(c.len() <= basis.len());
    c.iter().zip(&basis.lambda).map(|(ci, l)| (1.0 + l).powf(s) * ci * ci).sum::<f64>().sqrt()
}

/// Largest singular value of `W₋ L W₊⁻¹`, the `H^{1/2} → H^{-1/2}` norm.
pub fn operator_norm_star(l: &DtNMatrix) -> f64 {
    if l.entries.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    l.weighted().singular_values().max()
}

/// Share of the weighted singular-value mass carried by the last 10% of them.
pub fn truncation_tail_ratio(l: &DtNMatrix) -> f64 {
    let mut sv: Vec<f64> = l.weighted().singular_values().iter().cloned().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = sv.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let tail = (sv.len() / 10).max(1);
    sv[sv.len() - tail..].iter().sum::<f64>() / total
}

/// Data proxy `A = max(d², d^{2δ})` with `d = ‖L₁ − L₂‖∗`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataProxy {
    pub d: f64,
    pub a: f64,
    pub minus_log_a: f64,
    /// `−log A ≥ 1`.
    pub log_regime: bool,
}

pub fn data_proxy_from_norm(d: f64, delta: f64) -> Result<DataProxy> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::DomainViolation(format!("delta = {delta} must lie in (0, 1)")));
    }
    if d == 0.0 {
        return Err(Error::IdenticalData);
    }
    let a = (d * d).max(d.powf(2.0 * delta));
    let minus_log_a = -a.ln();
    Ok(DataProxy { d, a, minus_log_a, log_regime: minus_log_a >= 1.0 })
}

pub fn data_proxy_a(l1: &DtNMatrix, l2: &DtNMatrix, delta: f64) -> Result<DataProxy> {
    data_proxy_from_norm(operator_norm_star(&l1.difference(l2)?), delta)
}

/// Power iteration on `(D L D)ᵀ(D L D)`; an independent estimate of `‖L‖∗`.
pub fn operator_norm_power(l: &DtNMatrix, iterations: usize) -> f64 {
    let m = l.weighted();
    let mtm = m.transpose() * &m;
    let mut v = DVector::from_fn(l.modes(), |i, _| 1.0 + (i as f64 * 0.37).sin());
    let mut est = 0.0;
    for _ in 0..iterations {
        let w = &mtm * &v;
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        est = nw / v.norm();
        v = w / nw;
    }
    est.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis() -> BoundaryBasis {
        BoundaryBasis::new(Grid::new(3, 8, 2.0, 0.5, 1.4).unwrap())
    }

    fn random_dtn(b: &BoundaryBasis, m: usize, seed: u64) -> DtNMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DtNMatrix {
            entries: DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0)),
            lambda: b.lambda[..m].to_vec(),
            k: 1.0,
            id: "test".into(),
        }
    }

    #[test]
    fn basis_is_orthonormal_and_sorted() {
        let b = basis();
        assert_eq!(b.len(), 3usize.pow(3) - 1);
        let gram = b.phi.transpose() * &b.phi * b.weight;
        assert!((gram - DMatrix::identity(b.len(), b.len())).amax() < 1e-10);
        assert_eq!(b.lambda[0], 0.0);
        assert!(b.lambda.windows(2).all(|w| w[0] <= w[1]));
        let c0 = b.phi.column(0);
        assert!((c0.max() - c0.min()).abs() < 1e-10 && c0.min() > 0.0);
    }

    #[test]
    fn sobolev_norm_examples() {
        let b = basis();
        let mut e = vec![0.0; 10];
        e[0] = 1.0;
        assert!((sobolev_boundary_norm(&b, &e, 0.5) - 1.0).abs() < 1e-15);
        assert!((sobolev_boundary_norm(&b, &e, -0.5) - 1.0).abs() < 1e-15);
        e[0] = 0.0;
        e[7] = 1.0;
        let expect = (1.0 + b.lambda[7]).powf(0.25);
        assert!((sobolev_boundary_norm(&b, &e, 0.5) - expect).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(sobolev_boundary_norm(&b, &c, -0.5) <= sobolev_boundary_norm(&b, &c, 0.5));
    }

    #[test]
    fn star_norm_examples_and_norm_axioms() {
        let b = basis();
        let mut z = random_dtn(&b, 12, 1);
        z.entries.fill(0.0);
        assert_eq!(operator_norm_star(&z), 0.0);
        let d: Vec<f64> = (0..12).map(|i| (i as f64 - 5.5) * 0.3).collect();
        let diag = DtNMatrix { entries: DMatrix::from_diagonal(&DVector::from_vec(d.clone())), ..z.clone() };
        let expect = d.iter().zip(&b.lambda).map(|(di, l)| di.abs() / (1.0 + l).sqrt()).fold(0.0, f64::max);
        assert!((operator_norm_star(&diag) - expect).abs() < 1e-12);
        for seed in 0..5 {
            let a = random_dtn(&b, 12, 10 + seed);
            let c = random_dtn(&b, 12, 20 + seed);
            let p = operator_norm_power(&a, 2000);
            assert!((operator_norm_star(&a) - p).abs() < 1e-8 * p);
            let sum = DtNMatrix { entries: &a.entries + &c.entries, ..a.clone() };
            assert!(operator_norm_star(&sum) <= operator_norm_star(&a) + operator_norm_star(&c) + 1e-10);
            let scaled = DtNMatrix { entries: &a.entries * -2.5, ..a.clone() };
            assert!((operator_norm_star(&scaled) - 2.5 * operator_norm_star(&a)).abs() < 1e-10);
        }
    }

    #[test]
    fn data_proxy_examples() {
        let b = basis();
        let a = random_dtn(&b, 8, 3);
        assert!(matches!(data_proxy_a(&a, &a, 0.5), Err(Error::IdenticalData)));
        let p = data_proxy_from_norm(1.0, 0.3).unwrap();
        assert_eq!(p.a, 1.0);
        let p = data_proxy_from_norm((-2.0f64).exp(), 0.5).unwrap();
        assert!((p.a - (-2.0f64).exp()).abs() < 1e-15);
        assert!(p.log_regime);
        assert!(data_proxy_from_norm(0.1, 1.0).is_err());
        let mut prev = 0.0;
        for d in [1e-6, 1e-3, 0.1, 0.5, 2.0] {
            let p = data_proxy_from_norm(d, 0.5).unwrap();
            assert!(p.a >= d * d && p.a >= d && p.a > prev);
            prev = p.a;
        }
    }

    #[test]
    fn round_trip_through_coefficients() {
        let b = basis();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g: Vec<f64> = (0..b.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let back = b.synthesize(&b.coefficients(&g, b.len()));
        assert!(back.iter().zip(&g).all(|(a, c)| (a - c).abs() < 1e-10));
    }
}
