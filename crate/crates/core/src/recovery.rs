//! Recovery of `𝓕(Q₂ − Q₁)` from DtN data through CGO pairings, assembly of
//! the `H^{-s}` error over a polar frequency design, and the stability
//! envelope.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::boundary::{data_proxy_from_norm, operator_norm_star, BoundaryBasis, DataProxy, DtNMatrix};
use crate::cgo::{cgo_trace, lattice_null_pair, make_zeta_pair, min_tau_for_k, solve_remainder, RemainderOptions, ZetaPair};
use crate::error::{Error, Result};
use crate::field::{Field, RealField};
use crate::fields::{liouville_Q, make_phantom, CoefficientSet, Phantom};
use crate::forward::assemble_dtn_gap;
use crate::grid::Grid;
use crate::oracle::fourier_mode_oracle;
use crate::spectral::{fft_real, hs_norm, ifft, spectral_measure, SpectralField, Symbol};

/// `g₂ᵀ (L₁ − L₂) g₁` with the bilinear pairing.
pub fn pairing(l1: &DtNMatrix, l2: &DtNMatrix, g1: &[Complex64], g2: &[Complex64]) -> Result<Complex64> {
    Ok(pairing_gap(&l1.difference(l2)?, g1, g2))
}

/// `g₂ᵀ G g₁` for a precomputed gap `G = L₁ − L₂`.
pub fn pairing_gap(gap: &DtNMatrix, g1: &[Complex64], g2: &[Complex64]) -> Complex64 {
    let m = gap.modes();
    assert!(g1.len() == m && g2.len() == m, "coefficient vectors must match the DtN truncation");
    let mut total = Complex64::default();
    for i in 0..m {
        let row: Complex64 = (0..m).map(|j| g1[j] * gap.entries[(i, j)]).sum();
        total += g2[i] * row;
    }
    total
}

/// Additive Gaussian perturbation of DtN entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    pub sigma: f64,
    pub seed: u64,
}

/// Perturb `L₁` and `L₂` independently by `σ·N(0, 1)` per entry.
pub fn perturb_gap(gap: &DtNMatrix, noise: Noise) -> DtNMatrix {
    if noise.sigma == 0.0 {
        return gap.clone();
    }
    let m = gap.modes();
    let normal = Normal::new(0.0, noise.sigma).expect("finite sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let n1 = DMatrix::from_fn(m, m, |_, _| normal.sample(&mut rng));
    let n2 = DMatrix::from_fn(m, m, |_, _| normal.sample(&mut rng));
    DtNMatrix { entries: &gap.entries + n1 - n2, ..gap.clone() }
}

/// Two coefficient sets with their potentials and a shared boundary basis.
#[derive(Debug, Clone)]
pub struct Problem {
    pub c1: CoefficientSet,
    pub c2: CoefficientSet,
    pub q1: RealField,
    pub q2: RealField,
}

impl Problem {
    pub fn new(c1: CoefficientSet, c2: CoefficientSet) -> Result<Self> {
        if c1.grid() != c2.grid() || c1.k != c2.k {
            return Err(Error::ShapeMismatch("coefficient sets differ in grid or k".into()));
        }
        let (q1, q2) = (liouville_Q(&c1), liouville_Q(&c2));
        Ok(Self { c1, c2, q1, q2 })
    }

    pub fn grid(&self) -> &Grid {
        self.c1.grid()
    }

    pub fn k(&self) -> f64 {
        self.c1.k
    }

    /// `Q₂ − Q₁`.
    pub fn q_diff(&self) -> RealField {
        self.q2.zip_map(&self.q1, |a, b| a - b)
    }

    /// Noise-free `Λ₁ − Λ₂` on `m` modes.
    pub fn dtn_gap(&self, basis: &BoundaryBasis, m: usize) -> Result<DtNMatrix> {
        assemble_dtn_gap(&self.c1, &self.c2, basis, m)
    }
}

/// One recovered Fourier coefficient.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeEstimate {
    pub r: f64,
    pub eta: [f64; 3],
    pub tau: f64,
    pub fhat_est: Complex64,
    pub fhat_true: Complex64,
    /// `|⟨Q₂−Q₁|e^{−irη·x}(ψ₁+ψ₂)⟩|`, `|⟨Q₁ψ₁|e^{−irη·x}ψ₂⟩|`, `|⟨Q₂ψ₂|e^{−irη·x}ψ₁⟩|`.
    pub remainder_terms: [f64; 3],
    /// Signed sum of the three terms, `fhat_est − fhat_true` for exact data.
    pub remainder_sum: Complex64,
    pub pairing_value: Complex64,
    /// `rη` is farther than half a frequency cell from the lattice.
    pub off_lattice: bool,
    pub projection_loss: [f64; 2],
    pub psi_ratio: [f64; 2],
}

/// Settings shared by mode recovery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeOptions {
    pub remainder: RemainderOptions,
    /// Seed of the `η₁` draw.
    pub seed: u64,
}

impl Default for ModeOptions {
    fn default() -> Self {
        Self { remainder: RemainderOptions::default(), seed: 0 }
    }
}

/// Estimate `𝓕(Q₂ − Q₁)(rη)` by pairing the CGO traces against `gap`.
pub fn recover_fourier_mode(
    problem: &Problem,
    basis: &BoundaryBasis,
    gap: &DtNMatrix,
    zp: &ZetaPair,
    opts: &ModeOptions,
) -> Result<ModeEstimate> {
    let grid = *problem.grid();
    let (z1, z2) = match opts.remainder.symbol {
        Symbol::Lattice => lattice_null_pair(zp, grid.h())?,
        Symbol::Continuum => (zp.zeta1, zp.zeta2),
    };
    let s1 = solve_remainder(&problem.q1, &z1, &opts.remainder)?;
    let s2 = solve_remainder(&problem.q2, &z2, &opts.remainder)?;
    let m = gap.modes();
    let t1 = cgo_trace(&s1, &problem.c1.gamma, basis, m)?;
    let t2 = cgo_trace(&s2, &problem.c2.gamma, basis, m)?;
    let scaled = pairing_gap(gap, &t1.coeffs, &t2.coeffs);
    let pairing_value = scaled * (t1.log_scale + t2.log_scale).exp();

    let xi = zp.frequency();
    let fhat_true = fourier_mode_oracle(&problem.q1, &problem.q2, zp.r, &zp.eta[..grid.dim()]);
    let (_, dist) = grid.nearest_frequency(&xi[..grid.dim()]);
    let hn = grid.cell_volume();
    let mut terms = [Complex64::default(); 3];
    for i in 0..grid.len() {
        let x = grid.point(i);
        let phase: f64 = (0..grid.dim()).map(|j| xi[j] * x[j]).sum();
        let e = Complex64::from_polar(1.0, -phase);
        let (p1, p2) = (s1.psi.values()[i], s2.psi.values()[i]);
        let (q1, q2) = (problem.q1.values()[i], problem.q2.values()[i]);
        terms[0] += (q2 - q1) * e * (p1 + p2);
        terms[1] += q1 * p1 * e * p2;
        terms[2] += q2 * p2 * e * p1;
    }
    for t in terms.iter_mut() {
        *t *= hn;
    }
    Ok(ModeEstimate {
        r: zp.r,
        eta: zp.eta,
        tau: zp.tau,
        fhat_est: pairing_value,
        fhat_true,
        remainder_terms: [terms[0].norm(), terms[1].norm(), terms[2].norm()],
        remainder_sum: terms[0] - terms[1] + terms[2],
        pairing_value,
        off_lattice: dist > grid.dxi() / 2.0,
        projection_loss: [t1.projection_loss, t2.projection_loss],
        psi_ratio: [s1.psi_ratio(), s2.psi_ratio()],
    })
}

/// `n` quasi-uniform unit vectors: a Fibonacci sphere in 3-D, equally spaced
/// angles in 2-D.
pub fn fibonacci_directions(dim: usize, n: usize) -> Vec<[f64; 3]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            if dim == 2 {
                let t = 2.0 * PI * (i as f64 + 0.5) / n as f64;
                [t.cos(), t.sin(), 0.0]
            } else {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let rho = (1.0 - z * z).sqrt();
                let t = golden * i as f64;
                [rho * t.cos(), rho * t.sin(), z]
            }
        })
        .collect()
}

/// Radii `r_j = T (j/J)²` and directions for a sample budget.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarDesign {
    pub radii: Vec<f64>,
    pub directions: Vec<[f64; 3]>,
}

impl PolarDesign {
    pub fn new(dim: usize, t_cut: f64, budget: usize) -> Self {
        let budget = budget.max(2);
        let shells = if dim == 3 { (budget as f64).cbrt().round() as usize } else { (budget as f64).sqrt().round() as usize };
        let shells = shells.max(1);
        let per_shell = ((budget - 1) / shells).max(1);
        let radii = (0..=shells).map(|j| t_cut * (j as f64 / shells as f64).powi(2)).collect();
        Self { radii, directions: fibonacci_directions(dim, per_shell) }
    }

    /// `(r, η)` samples; the origin appears once.
    pub fn samples(&self) -> Vec<(f64, [f64; 3])> {
        let mut out = Vec::new();
        for &r in &self.radii {
            if r == 0.0 {
                out.push((0.0, self.directions[0]));
            } else {
                out.extend(self.directions.iter().map(|d| (r, *d)));
            }
        }
        out
    }

    /// Trapezoid weights in `r` for `∫ f(r) r^{n−1} dr`.
    fn radial_weights(&self, dim: usize) -> Vec<f64> {
        let r = &self.radii;
        let j = r.len();
        (0..j)
            .map(|i| {
                let left = if i > 0 { (r[i] - r[i - 1]) / 2.0 } else { 0.0 };
                let right = if i + 1 < j { (r[i + 1] - r[i]) / 2.0 } else { 0.0 };
                (left + right) * r[i].powi(dim as i32 - 1)
            })
            .collect()
    }
}

/// How `τ` is chosen per frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauSchedule {
    pub c_star: f64,
    /// Multiple of `min_tau_for_k` used as the floor.
    pub factor: f64,
    pub a0: f64,
    pub alpha: f64,
}

impl TauSchedule {
    /// `τ = max(factor·τ∗(k), a₀k^α)` for `r ≤ a₀k^α`, and `max(factor·τ∗(k), r)` beyond.
    pub fn tau(&self, k: f64, r: f64) -> f64 {
        let floor = self.factor * min_tau_for_k(k, self.c_star);
        let split = self.a0 * k.powf(self.alpha);
        let t = if r <= split { floor.max(split) } else { floor.max(r) };
        t.max(r / 2.0)
    }
}

/// Result of [`recover_q_diff`].
#[derive(Debug, Clone)]
pub struct QRecovery {
    /// `Q₂ − Q₁` reconstructed from the binned estimates.
    pub field: RealField,
    /// `H^{-s}` discrepancy: polar quadrature of the mode errors inside `T`,
    /// plus the unrecovered lattice tail beyond `T`.
    pub error_hs: f64,
    /// `‖field − (Q₂ − Q₁)‖_{H^{-s}}` on the lattice.
    pub field_error_hs: f64,
    pub estimates: Vec<ModeEstimate>,
    pub failures: Vec<(f64, [f64; 3], String)>,
    pub projection_loss_count: usize,
    pub contraction_failure_count: usize,
}

impl QRecovery {
    pub fn modes_ok(&self) -> usize {
        self.estimates.len()
    }

    pub fn modes_failed(&self) -> usize {
        self.failures.len()
    }
}

/// Settings for [`recover_q_diff`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QRecoveryOptions {
    pub t_cut: f64,
    pub mode_budget: usize,
    pub s: f64,
    pub schedule: TauSchedule,
    pub mode: ModeOptions,
}

/// Recover `Q₂ − Q₁` on a polar design over `|ξ| ≤ T` and measure the
/// `H^{-s}` discrepancy against the oracle.
pub fn recover_q_diff(
    problem: &Problem,
    basis: &BoundaryBasis,
    gap: &DtNMatrix,
    opts: &QRecoveryOptions,
) -> Result<QRecovery> {
    let grid = *problem.grid();
    let dim = grid.dim();
    let k = problem.k();
    let sched = opts.schedule;
    if opts.t_cut < sched.a0 * k.powf(sched.alpha) {
        return Err(Error::DomainViolation(format!(
            "T_cut = {} below a0·k^alpha = {}",
            opts.t_cut,
            sched.a0 * k.powf(sched.alpha)
        )));
    }
    let design = PolarDesign::new(dim, opts.t_cut, opts.mode_budget);
    let samples = design.samples();
    let outcomes: Vec<std::result::Result<ModeEstimate, (f64, [f64; 3], Error)>> = samples
        .par_iter()
        .enumerate()
        .map(|(idx, &(r, eta))| {
            let tau = sched.tau(k, r);
            let run = || -> Result<ModeEstimate> {
                let zp = make_zeta_pair(dim, r, &eta[..dim], tau, opts.mode.seed.wrapping_add(idx as u64))?;
                recover_fourier_mode(problem, basis, gap, &zp, &opts.mode)
            };
            run().map_err(|e| (r, eta, e))
        })
        .collect();

    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    let (mut projection_loss_count, mut contraction_failure_count) = (0, 0);
    // per-sample (estimate, truth), failed modes contribute a zero estimate
    let mut values = Vec::with_capacity(samples.len());
    for (out, &(r, eta)) in outcomes.into_iter().zip(&samples) {
        match out {
            Ok(m) => {
                values.push((m.fhat_est, m.fhat_true));
                estimates.push(m);
            }
            Err((_, _, e)) => {
                match e {
                    Error::ProjectionLoss { .. } => projection_loss_count += 1,
                    Error::ContractionFailure { .. } => contraction_failure_count += 1,
                    _ => {}
                }
                let truth = fourier_mode_oracle(&problem.q1, &problem.q2, r, &eta[..dim]);
                values.push((Complex64::default(), truth));
                failures.push((r, eta, e.to_string()));
            }
        }
    }

    // polar quadrature of |est − true|² (1 + r²)^{-s} over |ξ| ≤ T
    let sphere = if dim == 3 { 4.0 * PI } else { 2.0 * PI };
    let radial = design.radial_weights(dim);
    let nd = design.directions.len() as f64;
    let mut inside = 0.0;
    let mut cursor = 0;
    for (j, &r) in design.radii.iter().enumerate() {
        let count = if r == 0.0 { 1 } else { design.directions.len() };
        let mean: f64 = values[cursor..cursor + count].iter().map(|(e, t)| (e - t).norm_sqr()).sum::<f64>()
            / if r == 0.0 { 1.0 } else { nd };
        inside += radial[j] * sphere * mean * (1.0 + r * r).powf(-opts.s);
        cursor += count;
    }
    inside /= (2.0 * PI).powi(dim as i32);
    let diff = problem.q_diff();
    let diff_hat = fft_real(&diff);
    let tail: f64 = (0..grid.len())
        .filter_map(|i| {
            let xi = grid.frequency(i);
            let r2: f64 = xi[..dim].iter().map(|x| x * x).sum();
            (r2 > opts.t_cut * opts.t_cut).then(|| (1.0 + r2).powf(-opts.s) * diff_hat.coeffs()[i].norm_sqr())
        })
        .sum::<f64>()
        * spectral_measure(&grid);
    let error_hs = (inside + tail).sqrt();

    let field = bin_estimates(&grid, &samples, &values, opts.t_cut);
    let field_error_hs = hs_norm(&field.zip_map(&diff, |a, b| a - b), opts.s);
    Ok(QRecovery {
        field,
        error_hs,
        field_error_hs,
        estimates,
        failures,
        projection_loss_count,
        contraction_failure_count,
    })
}

/// Fill every lattice frequency with `|ξ| ≤ T` from the nearest sample of the
/// Hermitian-symmetrized design, then transform back.
fn bin_estimates(grid: &Grid, samples: &[(f64, [f64; 3])], values: &[(Complex64, Complex64)], t_cut: f64) -> RealField {
    let dim = grid.dim();
    let mut pts: Vec<([f64; 3], Complex64)> = Vec::with_capacity(2 * samples.len());
    for (&(r, eta), &(est, _)) in samples.iter().zip(values) {
        let p = [r * eta[0], r * eta[1], r * eta[2]];
        pts.push((p, est));
        pts.push(([-p[0], -p[1], -p[2]], est.conj()));
    }
    let coeffs = (0..grid.len())
        .map(|i| {
            let xi = grid.frequency(i);
            let r2: f64 = xi[..dim].iter().map(|x| x * x).sum();
            if r2 > t_cut * t_cut || pts.is_empty() {
                return Complex64::default();
            }
            let mut best = (f64::INFINITY, Complex64::default());
            for (p, v) in &pts {
                let d: f64 = (0..dim).map(|a| (p[a] - xi[a]).powi(2)).sum();
                if d < best.0 {
                    best = (d, *v);
                }
            }
            best.1
        })
        .collect();
    ifft(&SpectralField::new(*grid, coeffs)).re()
}

/// Constants of the stability envelope; `m = 2s − 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub c: f64,
    pub alpha: f64,
    pub delta: f64,
    pub s: f64,
    pub epsilon: f64,
}

impl Default for EnvelopeParams {
    fn default() -> Self {
        Self { c: 1.0, alpha: 5.0, delta: 0.5, s: 4.0, epsilon: 0.5 }
    }
}

impl EnvelopeParams {
    pub fn m(&self) -> f64 {
        2.0 * self.s - 2.0
    }
}

/// Both right-hand sides `(E₁, E₂)` of the stability estimate at `(k, A)`.
///
/// `E₁ = C e^{Ck^α} A^{1/2} + C max{k^{−αε/(1+ε)}, k^{4−α}, k²(k^α + log(1/A))^{1−s}}`,
/// `E₂ = C e^{Ck^α} A^{1/2} + C max{k^{−2}, k^{2−α}}`.
pub fn envelope(p: &EnvelopeParams, dim: usize, k: f64, a: f64) -> Result<(f64, f64)> {
    if k < 1.0 {
        return Err(Error::DomainViolation(format!("k = {k} < 1")));
    }
    if !(a > 0.0) || -a.ln() < 1.0 {
        return Err(Error::DomainViolation(format!("need A > 0 and −log A ≥ 1, got A = {a}")));
    }
    if p.alpha <= 4.0 {
        return Err(Error::DomainViolation(format!("alpha = {} must exceed 4", p.alpha)));
    }
    if 2.0 * p.s <= dim as f64 + 3.0 {
        return Err(Error::DomainViolation(format!("need 2s > n + 3, got s = {}", p.s)));
    }
    if !(p.epsilon > 0.0 && p.epsilon < 1.0) || !(p.delta > 0.0 && p.delta < 1.0) || !(p.c > 0.0) {
        return Err(Error::DomainViolation("need C > 0 and ε, δ in (0, 1)".into()));
    }
    let lip = p.c * (p.c * k.powf(p.alpha)).exp() * a.sqrt();
    let e = p.epsilon;
    let log_part = k
        .powf(-p.alpha * e / (1.0 + e))
        .max(k.powf(4.0 - p.alpha))
        .max(k * k * (k.powf(p.alpha) + (1.0 / a).ln()).powf(1.0 - p.s));
    let e1 = lip + p.c * log_part;
    let e2 = lip + p.c * (k.powi(-2)).max(k.powf(2.0 - p.alpha));
    Ok((e1, e2))
}

/// Least-squares fit of `log C` so that `log E₁(k, A; C)` matches `log error`.
pub fn fit_envelope_c(params: &EnvelopeParams, dim: usize, rows: &[(f64, f64, f64)]) -> Result<f64> {
    let cost = |log_c: f64| -> f64 {
        let p = EnvelopeParams { c: log_c.exp(), ..*params };
        rows.iter()
            .map(|&(k, a, err)| match envelope(&p, dim, k, a) {
                Ok((e1, _)) if e1.is_finite() && err > 0.0 => (e1.ln() - err.ln()).powi(2),
                _ => f64::INFINITY,
            })
            .sum()
    };
    // coarse scan, then golden section on the best bracket
    let grid: Vec<f64> = (0..=120).map(|i| -30.0 + 0.25 * i as f64).collect();
    let costs: Vec<f64> = grid.iter().map(|&x| cost(x)).collect();
    let best = (0..grid.len()).min_by(|&a, &b| costs[a].total_cmp(&costs[b])).unwrap();
    if !costs[best].is_finite() {
        return Err(Error::DomainViolation("envelope undefined on every row".into()));
    }
    let (mut lo, mut hi) = (grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let x1 = hi - g * (hi - lo);
        let x2 = lo + g * (hi - lo);
        if cost(x1) <= cost(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    Ok(((lo + hi) / 2.0).exp())
}

/// Estimate of `‖γ₁⁻¹ − γ₂⁻¹‖_{H^{-s}}` from a reconstructed `Q₂ − Q₁`,
/// with the oracle value.
pub fn gamma_inverse_diff(problem: &Problem, recon: &RealField, s: f64) -> (f64, f64) {
    let grid = *problem.grid();
    let k = problem.k();
    let restricted = Field::from_fn(grid, |i, _| if grid.in_omega(i) { recon.values()[i] } else { 0.0 });
    let estimate = if k > 0.0 { hs_norm(&restricted, s) / (k * k) } else { f64::INFINITY };
    let (g1, g2) = (problem.c1.gamma.values(), problem.c2.gamma.values());
    let oracle = hs_norm(&Field::from_fn(grid, |i, _| 1.0 / g1[i] - 1.0 / g2[i]), s);
    (estimate, oracle)
}

/// One row of a frequency sweep. Rows that did not complete carry `NaN`
/// numbers and a non-`ok` status.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub k: f64,
    /// `ok`, `identical_data`, or `failed: <reason>`.
    pub status: String,
    pub a: f64,
    pub minus_log_a: f64,
    pub recovery_error_hs: f64,
    pub envelope_value: f64,
    pub t_cut: f64,
    pub mode_count: usize,
    pub modes_ok: usize,
    pub modes_failed: usize,
    pub projection_loss_count: usize,
    pub contraction_failure_count: usize,
}

impl StabilityRecord {
    fn empty(k: f64, status: String) -> Self {
        Self {
            k,
            status,
            a: f64::NAN,
            minus_log_a: f64::NAN,
            recovery_error_hs: f64::NAN,
            envelope_value: f64::NAN,
            t_cut: f64::NAN,
            mode_count: 0,
            modes_ok: 0,
            modes_failed: 0,
            projection_loss_count: 0,
            contraction_failure_count: 0,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Everything a frequency sweep needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub grid: Grid,
    pub phantom1: Phantom,
    pub phantom2: Phantom,
    pub m_bound: f64,
    pub ks: Vec<f64>,
    pub delta: f64,
    pub s: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub a0: f64,
    pub c_star: f64,
    pub tau_factor: f64,
    /// `T_cut(k) = max(t_cut_min, a₀k^α)`.
    pub t_cut_min: f64,
    pub mode_budget: usize,
    pub sigma: f64,
    pub seed: u64,
    /// DtN truncation; `None` uses the full boundary basis.
    pub m_modes: Option<usize>,
}

impl SweepConfig {
    pub fn t_cut(&self, k: f64) -> f64 {
        self.t_cut_min.max(self.a0 * k.powf(self.alpha))
    }

    pub fn schedule(&self) -> TauSchedule {
        TauSchedule { c_star: self.c_star, factor: self.tau_factor, a0: self.a0, alpha: self.alpha }
    }
}

/// Rows of a sweep with the fitted envelope constant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub records: Vec<StabilityRecord>,
    /// Fitted `C`; `None` when no completed row admits the envelope.
    pub envelope_c: Option<f64>,
}

impl SweepResult {
    pub fn all_ok(&self) -> bool {
        self.records.iter().all(StabilityRecord::is_ok)
    }

    /// Every completed row lies under its envelope value.
    pub fn envelope_bounds_all(&self) -> bool {
        self.records.iter().filter(|r| r.is_ok()).all(|r| r.envelope_value >= r.recovery_error_hs)
    }

    /// Errors of completed rows strictly decrease with the row order.
    pub fn strictly_decreasing(&self) -> bool {
        self.all_ok() && self.records.windows(2).all(|w| w[1].recovery_error_hs < w[0].recovery_error_hs)
    }
}

fn sweep_row(cfg: &SweepConfig, basis: &BoundaryBasis, index: usize, k: f64) -> Result<StabilityRecord> {
    let c1 = make_phantom(cfg.grid, &cfg.phantom1, k, cfg.m_bound)?;
    let c2 = make_phantom(cfg.grid, &cfg.phantom2, k, cfg.m_bound)?;
    let problem = Problem::new(c1, c2)?;
    let m = cfg.m_modes.unwrap_or(basis.len()).min(basis.len());
    let clean = problem.dtn_gap(basis, m)?;
    if clean.entries.iter().all(|v| *v == 0.0) {
        return Ok(StabilityRecord::empty(k, "identical_data".into()));
    }
    let row_seed = cfg.seed.wrapping_add(1000 * index as u64);
    let gap = perturb_gap(&clean, Noise { sigma: cfg.sigma, seed: row_seed });
    let proxy = gap_proxy(&gap, cfg.delta)?.ok_or(Error::IdenticalData)?;
    let t_cut = cfg.t_cut(k);
    let opts = QRecoveryOptions {
        t_cut,
        mode_budget: cfg.mode_budget,
        s: cfg.s,
        schedule: cfg.schedule(),
        mode: ModeOptions { remainder: RemainderOptions::default(), seed: row_seed },
    };
    let rec = recover_q_diff(&problem, basis, &gap, &opts)?;
    Ok(StabilityRecord {
        k,
        status: "ok".into(),
        a: proxy.a,
        minus_log_a: proxy.minus_log_a,
        recovery_error_hs: rec.error_hs,
        envelope_value: f64::NAN,
        t_cut,
        mode_count: rec.modes_ok() + rec.modes_failed(),
        modes_ok: rec.modes_ok(),
        modes_failed: rec.modes_failed(),
        projection_loss_count: rec.projection_loss_count,
        contraction_failure_count: rec.contraction_failure_count,
    })
}

/// Simulate, perturb and recover at every `k`, then fit the envelope
/// constant over the completed rows.
pub fn run_sweep(cfg: &SweepConfig, basis: &BoundaryBasis) -> Result<SweepResult> {
    if cfg.ks.len() < 3 {
        return Err(Error::DomainViolation(format!("k list needs at least 3 entries, got {}", cfg.ks.len())));
    }
    if !(cfg.sigma >= 0.0) {
        return Err(Error::DomainViolation(format!("noise sigma = {} must be nonnegative", cfg.sigma)));
    }
    let mut records: Vec<StabilityRecord> = cfg
        .ks
        .iter()
        .enumerate()
        .map(|(i, &k)| sweep_row(cfg, basis, i, k).unwrap_or_else(|e| StabilityRecord::empty(k, format!("failed: {e}"))))
        .collect();
    let params = EnvelopeParams { c: 1.0, alpha: cfg.alpha, delta: cfg.delta, s: cfg.s, epsilon: cfg.epsilon };
    let rows: Vec<(f64, f64, f64)> =
        records.iter().filter(|r| r.is_ok()).map(|r| (r.k, r.a, r.recovery_error_hs)).collect();
    let envelope_c = if rows.is_empty() { None } else { fit_envelope_c(&params, cfg.grid.dim(), &rows).ok() };
    if let Some(c) = envelope_c {
        let fitted = EnvelopeParams { c, ..params };
        for r in records.iter_mut().filter(|r| r.is_ok()) {
            r.envelope_value = envelope(&fitted, cfg.grid.dim(), r.k, r.a).map(|e| e.0).unwrap_or(f64::NAN);
        }
    }
    Ok(SweepResult { records, envelope_c })
}

/// Data proxy of a (possibly perturbed) gap; `None` for identical data.
pub fn gap_proxy(gap: &DtNMatrix, delta: f64) -> Result<Option<DataProxy>> {
    match data_proxy_from_norm(operator_norm_star(gap), delta) {
        Ok(p) => Ok(Some(p)),
        Err(Error::IdenticalData) => Ok(None),
        Err(e) => Err(e),
    }
}
