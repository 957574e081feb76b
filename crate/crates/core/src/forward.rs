//! Dirichlet problem `∇·γ∇u + (k² + D)u = 0` on the lattice cube Ω̄ and the
//! discrete Dirichlet-to-Neumann map.
//!
//! The scheme is the 5/7-point divergence-form stencil with edge conductivity
//! `√(γ_i γ_j)`. The DtN map is the Schur complement of the energy form
//!
//! ```text
//! E(u, w) = Σ_edges c_e γ_e (Du)(Dw) hⁿ⁻² − Σ_nodes m_i (k² + D_i) u_i w_i hⁿ
//! ```
//!
//! where `c_e` and `m_i` are the fractions of each edge and node owned by Ω̄.
//! Interior rows of `E` reproduce the finite-difference equations exactly.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::banded::{BandLu, BandMatrix};
use crate::boundary::{BoundaryBasis, DtNMatrix};
use crate::error::{Error, Result};
use crate::field::RealField;
use crate::fields::CoefficientSet;
use crate::grid::Grid;

/// Condition estimate above which a factorization is reported near-singular.
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Interior(usize),
    Boundary(usize),
}

/// One lattice edge of Ω̄ with its weight `c_e γ_e hⁿ⁻²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub axis: usize,
    pub weight: f64,
}

/// Energy-form discretization of the operator on Ω̄.
#[derive(Debug, Clone)]
pub struct OmegaStencil {
    grid: Grid,
    side: usize,
    /// Global lattice index of each Ω̄ node, local row-major order.
    pub nodes: Vec<usize>,
    /// Local indices of interior nodes, increasing.
    pub interior: Vec<usize>,
    /// Local indices of boundary nodes, increasing.
    pub boundary: Vec<usize>,
    roles: Vec<Role>,
    pub edges: Vec<Edge>,
    /// `m_i (k² + D_i) hⁿ` per local node.
    pub mass: Vec<f64>,
}

/// Local Ω̄ geometry shared by every coefficient set on a grid.
fn omega_nodes(grid: &Grid) -> (usize, Vec<usize>) {
    let side = 2 * grid.omega_cells() + 1;
    let nodes = (0..grid.len()).filter(|&i| grid.in_omega(i)).collect::<Vec<_>>();
    debug_assert_eq!(nodes.len(), side.pow(grid.dim() as u32));
    (side, nodes)
}

/// Fraction of a node (or of an edge, skipping `skip`) owned by Ω̄.
fn owned_fraction(local: &[usize], side: usize, skip: Option<usize>) -> f64 {
    local
        .iter()
        .enumerate()
        .filter(|&(a, &l)| Some(a) != skip && (l == 0 || l == side - 1))
        .fold(1.0, |f, _| f * 0.5)
}

impl OmegaStencil {
    pub fn new(coeffs: &CoefficientSet) -> Self {
        let grid = *coeffs.grid();
        let dim = grid.dim();
        let h = grid.h();
        let (side, nodes) = omega_nodes(&grid);
        let locals: Vec<Vec<usize>> = (0..nodes.len()).map(|p| local_coords(p, side, dim)).collect();
        let mut roles = Vec::with_capacity(nodes.len());
        let (mut interior, mut boundary) = (Vec::new(), Vec::new());
        for (p, l) in locals.iter().enumerate() {
            if l.iter().all(|&c| c > 0 && c < side - 1) {
                roles.push(Role::Interior(interior.len()));
                interior.push(p);
            } else {
                roles.push(Role::Boundary(boundary.len()));
                boundary.push(p);
            }
        }
        let gamma = coeffs.gamma.values();
        let dvals = coeffs.dcoef.values();
        let k2 = coeffs.k * coeffs.k;
        let hn = grid.cell_volume();
        let mut edges = Vec::new();
        for (p, l) in locals.iter().enumerate() {
            for axis in 0..dim {
                if l[axis] + 1 == side {
                    continue;
                }
                let q = p + side.pow((dim - 1 - axis) as u32);
                let ge = (gamma[nodes[p]] * gamma[nodes[q]]).sqrt();
                let weight = owned_fraction(l, side, Some(axis)) * ge * h.powi(dim as i32 - 2);
                edges.push(Edge { a: p, b: q, axis, weight });
            }
        }
        let mass = locals
            .iter()
            .enumerate()
            .map(|(p, l)| owned_fraction(l, side, None) * (k2 + dvals[nodes[p]]) * hn)
            .collect();
        Self { grid, side, nodes, interior, boundary, roles, edges, mass }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Nodes per axis of Ω̄.
    pub fn side(&self) -> usize {
        self.side
    }

    /// Band half-width of the interior matrix.
    fn bandwidth(&self) -> usize {
        (self.side - 2).pow(self.grid.dim() as u32 - 1)
    }

    /// `E(u, w)` for nodal vectors on Ω̄ in local order.
    pub fn energy(&self, u: &[f64], w: &[f64]) -> f64 {
        let grad: f64 = self.edges.iter().map(|e| e.weight * (u[e.b] - u[e.a]) * (w[e.b] - w[e.a])).sum();
        let mass: f64 = self.mass.iter().zip(u.iter().zip(w)).map(|(m, (a, b))| m * a * b).sum();
        grad - mass
    }

    fn interior_matrix(&self) -> BandMatrix<f64> {
        let bw = self.bandwidth();
        let mut a = BandMatrix::zeros(self.interior.len(), bw, bw);
        for e in &self.edges {
            match (self.roles[e.a], self.roles[e.b]) {
                (Role::Interior(i), Role::Interior(j)) => {
                    a.add(i, i, e.weight);
                    a.add(j, j, e.weight);
                    a.add(i, j, -e.weight);
                    a.add(j, i, -e.weight);
                }
                (Role::Interior(i), Role::Boundary(_)) | (Role::Boundary(_), Role::Interior(i)) => {
                    a.add(i, i, e.weight);
                }
                _ => {}
            }
        }
        for (i, &p) in self.interior.iter().enumerate() {
            a.add(i, i, -self.mass[p]);
        }
        a
    }

    /// Interior–boundary couplings `(interior row, boundary column, value)`.
    fn coupling(&self) -> Vec<(usize, usize, f64)> {
        self.edges
            .iter()
            .filter_map(|e| match (self.roles[e.a], self.roles[e.b]) {
                (Role::Interior(i), Role::Boundary(b)) | (Role::Boundary(b), Role::Interior(i)) => {
                    Some((i, b, -e.weight))
                }
                _ => None,
            })
            .collect()
    }

    /// Dense boundary–boundary block.
    fn boundary_block(&self) -> DMatrix<f64> {
        let nb = self.boundary.len();
        let mut s = DMatrix::zeros(nb, nb);
        for e in &self.edges {
            if let (Role::Boundary(i), Role::Boundary(j)) = (self.roles[e.a], self.roles[e.b]) {
                s[(i, i)] += e.weight;
                s[(j, j)] += e.weight;
                s[(i, j)] -= e.weight;
                s[(j, i)] -= e.weight;
            } else if let (Role::Interior(_), Role::Boundary(b)) | (Role::Boundary(b), Role::Interior(_)) =
                (self.roles[e.a], self.roles[e.b])
            {
                s[(b, b)] += e.weight;
            }
        }
        for (i, &p) in self.boundary.iter().enumerate() {
            s[(i, i)] -= self.mass[p];
        }
        s
    }

    /// Factor the interior block once for repeated solves.
    pub fn factor(&self) -> Result<InteriorSolver<'_>> {
        let matrix = self.interior_matrix();
        let lu = matrix.clone().factor().map_err(|e| match e {
            Error::SingularMatrix => Error::NearSingularSystem { column: None, estimate: f64::INFINITY },
            other => other,
        })?;
        lu.check_condition(CONDITION_LIMIT)?;
        Ok(InteriorSolver { stencil: self, matrix, lu, coupling: self.coupling() })
    }

    /// Global lattice field from a local nodal vector, zero outside Ω̄.
    pub fn to_field(&self, u: &[f64]) -> RealField {
        let mut values = vec![0.0; self.grid.len()];
        for (p, &g) in self.nodes.iter().enumerate() {
            values[g] = u[p];
        }
        RealField::from_values(self.grid, values).expect("grid length")
    }

    /// Local nodal vector of a lattice field.
    pub fn restrict(&self, f: &RealField) -> Vec<f64> {
        self.nodes.iter().map(|&g| f.values()[g]).collect()
    }

    /// Lattice coordinates of the boundary nodes, in boundary order.
    pub fn boundary_points(&self) -> Vec<[f64; 3]> {
        self.boundary.iter().map(|&p| self.grid.point(self.nodes[p])).collect()
    }

    /// Interior–interior operator difference `A₂ − A₁` as sparse triples.
    fn interior_difference(&self, other: &OmegaStencil) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (e1, e2) in self.edges.iter().zip(&other.edges) {
            let d = e2.weight - e1.weight;
            if d == 0.0 {
                continue;
            }
            if let (Role::Interior(i), Role::Interior(j)) = (self.roles[e1.a], self.roles[e1.b]) {
                out.extend([(i, i, d), (j, j, d), (i, j, -d), (j, i, -d)]);
            }
        }
        for (i, &p) in self.interior.iter().enumerate() {
            let d = self.mass[p] - other.mass[p];
            if d != 0.0 {
                out.push((i, i, d));
            }
        }
        out
    }

    /// Whether the boundary blocks of two stencils coincide exactly.
    fn same_boundary_blocks(&self, other: &OmegaStencil) -> bool {
        self.edges.iter().zip(&other.edges).all(|(e1, e2)| {
            matches!((self.roles[e1.a], self.roles[e1.b]), (Role::Interior(_), Role::Interior(_)))
                || e1.weight == e2.weight
        }) && self.boundary.iter().all(|&p| self.mass[p] == other.mass[p])
    }
}

fn local_coords(mut p: usize, side: usize, dim: usize) -> Vec<usize> {
    let mut l = vec![0; dim];
    for a in (0..dim).rev() {
        l[a] = p % side;
        p /= side;
    }
    l
}

/// Factorization of the interior block, shared read-only across solves.
pub struct InteriorSolver<'a> {
    stencil: &'a OmegaStencil,
    matrix: BandMatrix<f64>,
    lu: BandLu<f64>,
    coupling: Vec<(usize, usize, f64)>,
}

/// Result of one Dirichlet solve.
#[derive(Debug, Clone)]
pub struct DirichletSolve {
    /// Solution on Ω̄, zero elsewhere.
    pub u: RealField,
    /// `‖A_II u_I + A_IB g‖ / ‖A_IB g‖` over interior rows.
    pub residual_norm: f64,
    /// One-sided outward flux `γ ∂_ν u` at each boundary node.
    pub flux: Vec<f64>,
}

impl InteriorSolver<'_> {
    pub fn condition_estimate(&self) -> f64 {
        self.lu.condition_estimate()
    }

    fn rhs(&self, g: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.stencil.interior.len()];
        for &(i, b, v) in &self.coupling {
            r[i] -= v * g[b];
        }
        r
    }

    /// Interior values for boundary data `g`, with one refinement step.
    pub fn interior_values(&self, g: &[f64]) -> (Vec<f64>, f64) {
        let rhs = self.rhs(g);
        let mut x = self.lu.solve(&rhs);
        let residual = |x: &[f64]| -> Vec<f64> {
            self.matrix.mul_vec(x).iter().zip(&rhs).map(|(a, b)| b - a).collect()
        };
        let r = residual(&x);
        let dx = self.lu.solve(&r);
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += d;
        }
        let rn = residual(&x).iter().map(|v| v * v).sum::<f64>().sqrt();
        let bn = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        (x, if bn > 0.0 { rn / bn } else { rn })
    }

    /// Full nodal vector on Ω̄ for boundary data `g`.
    pub fn nodal(&self, g: &[f64]) -> (Vec<f64>, f64) {
        let s = self.stencil;
        let (x, res) = self.interior_values(g);
        let mut u = vec![0.0; s.nodes.len()];
        for (i, &p) in s.interior.iter().enumerate() {
            u[p] = x[i];
        }
        for (b, &p) in s.boundary.iter().enumerate() {
            u[p] = g[b];
        }
        (u, res)
    }

    /// Columns `A_II⁻¹ A_IB e_b` for every boundary node, as a dense matrix.
    fn responses(&self) -> DMatrix<f64> {
        let s = self.stencil;
        let ni = s.interior.len();
        let nb = s.boundary.len();
        let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nb];
        for &(i, b, v) in &self.coupling {
            by_col[b].push((i, v));
        }
        let cols: Vec<Vec<f64>> = by_col
            .par_iter()
            .map(|entries| {
                if entries.is_empty() {
                    return vec![0.0; ni];
                }
                let mut rhs = vec![0.0; ni];
                for &(i, v) in entries {
                    rhs[i] += v;
                }
                self.lu.solve(&rhs)
            })
            .collect();
        DMatrix::from_fn(ni, nb, |i, b| cols[b][i])
    }

    /// Nodal DtN `S = A_BB − A_BI A_II⁻¹ A_IB`, symmetrized.
    pub fn schur(&self) -> DMatrix<f64> {
        let s = self.stencil;
        let x = self.responses();
        let mut out = s.boundary_block();
        for &(i, b, v) in &self.coupling {
            for c in 0..out.ncols() {
                out[(b, c)] -= v * x[(i, c)];
            }
        }
        (&out + out.transpose()) * 0.5
    }
}

/// Second-order one-sided outward flux at every boundary node, averaged over
/// the faces a node belongs to.
fn boundary_flux(stencil: &OmegaStencil, gamma: &RealField, u: &[f64]) -> Vec<f64> {
    let dim = stencil.grid.dim();
    let side = stencil.side;
    let h = stencil.grid.h();
    stencil
        .boundary
        .iter()
        .map(|&p| {
            let l = local_coords(p, side, dim);
            let (mut sum, mut faces) = (0.0, 0);
            for a in 0..dim {
                let stride = side.pow((dim - 1 - a) as u32) as isize;
                let inward = if l[a] == 0 {
                    stride
                } else if l[a] == side - 1 {
                    -stride
                } else {
                    continue;
                };
                let q1 = (p as isize + inward) as usize;
                let q2 = (p as isize + 2 * inward) as usize;
                sum += (3.0 * u[p] - 4.0 * u[q1] + u[q2]) / (2.0 * h);
                faces += 1;
            }
            gamma.values()[stencil.nodes[p]] * sum / faces as f64
        })
        .collect()
}

/// Solve the Dirichlet problem with boundary data `g` in boundary-node order.
pub fn solve_dirichlet(coeffs: &CoefficientSet, g: &[f64]) -> Result<DirichletSolve> {
    let stencil = OmegaStencil::new(coeffs);
    if g.len() != stencil.boundary.len() {
        return Err(Error::ShapeMismatch(format!(
            "boundary data has {} entries, expected {}",
            g.len(),
            stencil.boundary.len()
        )));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::DomainViolation("boundary data must be finite".into()));
    }
    let solver = stencil.factor()?;
    let (u, residual_norm) = solver.nodal(g);
    let flux = boundary_flux(&stencil, &coeffs.gamma, &u);
    Ok(DirichletSolve { u: stencil.to_field(&u), residual_norm, flux })
}

/// Nodal DtN matrix `S`; `⟨Λg, w⟩ = wᵀ S g`.
pub fn nodal_dtn(coeffs: &CoefficientSet) -> Result<DMatrix<f64>> {
    let stencil = OmegaStencil::new(coeffs);
    let solver = stencil.factor()?;
    Ok(solver.schur())
}

/// Nodal gap `S₁ − S₂`, computed without cancellation when the two sets share
/// their boundary couplings.
pub fn nodal_dtn_gap(c1: &CoefficientSet, c2: &CoefficientSet) -> Result<DMatrix<f64>> {
    if c1.grid() != c2.grid() || c1.k != c2.k {
        return Err(Error::ShapeMismatch("coefficient sets differ in grid or k".into()));
    }
    let s1 = OmegaStencil::new(c1);
    let s2 = OmegaStencil::new(c2);
    if !s1.same_boundary_blocks(&s2) {
        return Ok(s1.factor()?.schur() - s2.factor()?.schur());
    }
    let diff = s1.interior_difference(&s2);
    let nb = s1.boundary.len();
    if diff.is_empty() {
        return Ok(DMatrix::zeros(nb, nb));
    }
    let x1 = s1.factor()?.responses();
    let x2 = s2.factor()?.responses();
    // S₁ − S₂ = −X₁ᵀ (A₂ − A₁) X₂ with X = A_II⁻¹ A_IB
    let mut rows: Vec<usize> = diff.iter().map(|t| t.0).collect();
    rows.sort_unstable();
    rows.dedup();
    let pos = |i: usize| rows.binary_search(&i).unwrap();
    let mut y = DMatrix::<f64>::zeros(rows.len(), nb);
    for &(i, j, v) in &diff {
        let r = pos(i);
        for c in 0..nb {
            y[(r, c)] += v * x2[(j, c)];
        }
    }
    let x1r = DMatrix::from_fn(rows.len(), nb, |r, c| x1[(rows[r], c)]);
    let g = -(x1r.transpose() * y);
    Ok((&g + g.transpose()) * 0.5)
}

/// DtN map in the first `m_modes` boundary eigenvectors.
pub fn assemble_dtn(coeffs: &CoefficientSet, basis: &BoundaryBasis, m_modes: usize) -> Result<DtNMatrix> {
    let s = nodal_dtn(coeffs)?;
    basis.project(&s, m_modes, coeffs.k, "dtn")
}

/// `Λ₁ − Λ₂` in the first `m_modes` boundary eigenvectors.
pub fn assemble_dtn_gap(
    c1: &CoefficientSet,
    c2: &CoefficientSet,
    basis: &BoundaryBasis,
    m_modes: usize,
) -> Result<DtNMatrix> {
    let g = nodal_dtn_gap(c1, c2)?;
    basis.project(&g, m_modes, c1.k, "dtn-gap")
}
