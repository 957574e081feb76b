//! Complex frequency pairs, the remainder equation `Δ_ζψ + Qψ = −Q` for
//! complex geometrical optics solutions `v = e^{ζ·x}(1 + ψ)`, their boundary
//! traces, and the averaged `Ẋ^{-1/2}_ζ` norm of `Q`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryBasis;
use crate::error::{Error, Result};
use crate::field::{ComplexField, Field, RealField};
use crate::grid::{dot, norm, Grid};
use crate::spectral::{
    fft, fft_real, ifft, lattice_symbol, symbol_p, xnorm_spectral, BourgainWeight, CVec, SpectralField, Symbol,
    ZeroSetRule,
};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// `ζ₁ = τη₁ + i(β − rη/2)`, `ζ₂ = −τη₁ − i(β + rη/2)` with the frame
/// `η ⊥ η₁ ⊥ β ⊥ η`, `|β|² + r²/4 = τ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaPair {
    pub dim: usize,
    pub r: f64,
    pub eta: [f64; 3],
    pub eta1: [f64; 3],
    pub beta: [f64; 3],
    pub tau: f64,
    pub zeta1: CVec,
    pub zeta2: CVec,
}

/// Bilinear `a·b` over the first `dim` components.
pub fn cdot(a: &CVec, b: &CVec, dim: usize) -> Complex64 {
    (0..dim).map(|j| a[j] * b[j]).sum()
}

/// `Σ |a_j|²`.
pub fn cnorm_sqr(a: &CVec, dim: usize) -> f64 {
    (0..dim).map(|j| a[j].norm_sqr()).sum()
}

impl ZetaPair {
    /// Largest violation among the frame and pair identities.
    pub fn identity_residuals(&self) -> [f64; 4] {
        let n = self.dim;
        let (e, e1, b) = (&self.eta[..n], &self.eta1[..n], &self.beta[..n]);
        let frame = if n == 3 {
            dot(e1, b).abs().max(dot(e1, e).abs()).max(dot(e, b).abs())
        } else {
            dot(e1, b).abs()
        };
        let tau2 = self.tau * self.tau;
        let lengths = ((dot(b, b) + self.r * self.r / 4.0) - tau2).abs() / tau2.max(1.0);
        let null = cdot(&self.zeta1, &self.zeta1, n).norm().max(cdot(&self.zeta2, &self.zeta2, n).norm()) / tau2.max(1.0);
        let sum = (0..n)
            .map(|j| (self.zeta1[j] + self.zeta2[j] + I * self.r * self.eta[j]).norm())
            .fold(0.0, f64::max);
        let mag = (cnorm_sqr(&self.zeta1, n) - 2.0 * tau2).abs().max((cnorm_sqr(&self.zeta2, n) - 2.0 * tau2).abs())
            / tau2.max(1.0);
        [frame.max(lengths), null, sum, mag]
    }

    /// `rη`.
    pub fn frequency(&self) -> [f64; 3] {
        let mut xi = [0.0; 3];
        for j in 0..self.dim {
            xi[j] = self.r * self.eta[j];
        }
        xi
    }
}

fn unit(v: [f64; 3], dim: usize) -> [f64; 3] {
    let nv = norm(&v[..dim]);
    let mut out = [0.0; 3];
    for j in 0..dim {
        out[j] = v[j] / nv;
    }
    out
}

/// Build the pair for `(r, η, τ)` with `η₁` drawn from `seed`.
///
/// In two dimensions only `r = 0` is admitted; `β` is then `τη`, which keeps
/// `ζ·ζ = 0` and `ζ₁ + ζ₂ = 0`.
pub fn make_zeta_pair(dim: usize, r: f64, eta: &[f64], tau: f64, seed: u64) -> Result<ZetaPair> {
    if !(dim == 2 || dim == 3) || eta.len() < dim {
        return Err(Error::FrameInfeasible(format!("dimension {dim} not supported")));
    }
    if !(tau > 0.0) || r < 0.0 || tau < r / 2.0 {
        return Err(Error::FrameInfeasible(format!("need 0 ≤ r ≤ 2τ, got r = {r}, τ = {tau}")));
    }
    let mut e = [0.0; 3];
    e[..dim].copy_from_slice(&eta[..dim]);
    if (norm(&e[..dim]) - 1.0).abs() > 1e-12 {
        return Err(Error::FrameInfeasible("η must be a unit vector".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (eta1, beta) = if dim == 3 {
        let e1 = loop {
            let mut v = [0.0; 3];
            for c in v.iter_mut() {
                *c = rng.sample(StandardNormal);
            }
            let p = dot(&v, &e);
            for j in 0..3 {
                v[j] -= p * e[j];
            }
            if norm(&v) > 1e-3 {
                break unit(v, 3);
            }
        };
        // one more projection pass keeps orthogonality at rounding level
        let mut e1 = e1;
        let p = dot(&e1, &e);
        for j in 0..3 {
            e1[j] -= p * e[j];
        }
        let e1 = unit(e1, 3);
        let cross = [e[1] * e1[2] - e[2] * e1[1], e[2] * e1[0] - e[0] * e1[2], e[0] * e1[1] - e[1] * e1[0]];
        let cross = unit(cross, 3);
        let bl = (tau * tau - r * r / 4.0).max(0.0).sqrt();
        (e1, [bl * cross[0], bl * cross[1], bl * cross[2]])
    } else {
        if r > 0.0 {
            return Err(Error::FrameInfeasible("two-dimensional frames require r = 0".into()));
        }
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let e1 = [-sign * e[1], sign * e[0], 0.0];
        (e1, [tau * e[0], tau * e[1], 0.0])
    };
    let mut zeta1 = [Complex64::default(); 3];
    let mut zeta2 = [Complex64::default(); 3];
    for j in 0..dim {
        zeta1[j] = Complex64::new(tau * eta1[j], beta[j] - r * e[j] / 2.0);
        zeta2[j] = Complex64::new(-tau * eta1[j], -beta[j] - r * e[j] / 2.0);
    }
    Ok(ZetaPair { dim, r, eta: e, eta1, beta, tau, zeta1, zeta2 })
}

/// Smallest admissible `τ` for `|ζ| ≥ C∗k²`, using `|ζ|² = 2τ²`.
pub fn min_tau_for_k(k: f64, c_star: f64) -> f64 {
    c_star * k * k / 2f64.sqrt()
}

/// Correct a pair so that `e^{ζ_l·x}` are exactly harmonic for the
/// `2n+1`-point lattice Laplacian, keeping `ζ₁ + ζ₂ = −irη`.
///
/// Minimum-norm damped Newton on `Σ_j cosh(hζ_j) = n` for both vectors.
pub fn lattice_null_pair(zp: &ZetaPair, h: f64) -> Result<(CVec, CVec)> {
    let n = zp.dim;
    let shift: Vec<Complex64> = (0..n).map(|j| I * zp.r * zp.eta[j]).collect();
    let residual = |z: &[Complex64]| -> [Complex64; 2] {
        let f1 = z.iter().map(|v| (v * h).cosh()).sum::<Complex64>() - n as f64;
        let f2 = z.iter().zip(&shift).map(|(v, s)| ((v + s) * h).cosh()).sum::<Complex64>() - n as f64;
        [f1, f2]
    };
    let size = |f: &[Complex64; 2]| f[0].norm().max(f[1].norm());
    let mut z: Vec<Complex64> = zp.zeta1[..n].to_vec();
    let mut f = residual(&z);
    let target = 1e-14 * n as f64;
    let single = zp.r == 0.0;
    for _ in 0..200 {
        if size(&f) <= target {
            break;
        }
        let j1: Vec<Complex64> = z.iter().map(|v| (v * h).sinh() * h).collect();
        let j2: Vec<Complex64> = z.iter().zip(&shift).map(|(v, s)| ((v + s) * h).sinh() * h).collect();
        // δ = −Jᴴ (J Jᴴ)⁻¹ F
        let step: Vec<Complex64> = if single {
            let g: f64 = j1.iter().map(|a| a.norm_sqr()).sum();
            j1.iter().map(|a| -a.conj() * f[0] / g).collect()
        } else {
            let a11: Complex64 = j1.iter().map(|a| a.norm_sqr()).sum::<f64>().into();
            let a22: Complex64 = j2.iter().map(|a| a.norm_sqr()).sum::<f64>().into();
            let a12: Complex64 = j1.iter().zip(&j2).map(|(a, b)| a * b.conj()).sum();
            let a21 = a12.conj();
            let det = a11 * a22 - a12 * a21;
            if det.norm() < 1e-300 {
                return Err(Error::FrameInfeasible("lattice correction is degenerate".into()));
            }
            let y1 = (a22 * f[0] - a12 * f[1]) / det;
            let y2 = (a11 * f[1] - a21 * f[0]) / det;
            j1.iter().zip(&j2).map(|(a, b)| -(a.conj() * y1 + b.conj() * y2)).collect()
        };
        let mut t = 1.0;
        loop {
            let trial: Vec<Complex64> = z.iter().zip(&step).map(|(a, d)| a + d * t).collect();
            let ft = residual(&trial);
            if size(&ft) < size(&f) || t < 1e-6 {
                z = trial;
                f = ft;
                break;
            }
            t *= 0.5;
        }
    }
    if size(&f) > 1e-10 * n as f64 {
        return Err(Error::FrameInfeasible(format!("lattice correction stalled at |F| = {:.3e}", size(&f))));
    }
    let mut z1 = [Complex64::default(); 3];
    let mut z2 = [Complex64::default(); 3];
    for j in 0..n {
        z1[j] = z[j];
        z2[j] = -shift[j] - z[j];
    }
    Ok((z1, z2))
}

/// Settings for [`solve_remainder`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderOptions {
    pub max_iter: usize,
    /// Stop when successive `Ẋ^{1/2}_ζ` updates fall below `tol · ‖Q‖_{Ẋ^{-1/2}_ζ}`.
    pub tol: f64,
    pub symbol: Symbol,
    /// Zero-set rule for the reported norms; the solve itself clamps.
    pub norm_rule: ZeroSetRule,
    /// Consecutive growing updates tolerated before giving up.
    pub growth_limit: usize,
}

impl Default for RemainderOptions {
    fn default() -> Self {
        Self { max_iter: 500, tol: 1e-11, symbol: Symbol::Lattice, norm_rule: ZeroSetRule::CellAverage, growth_limit: 3 }
    }
}

/// Converged remainder and the CGO field it defines.
#[derive(Debug, Clone)]
pub struct CgoSolution {
    pub zeta: CVec,
    pub psi: ComplexField,
    pub xnorm_psi: f64,
    pub xnorm_q: f64,
    /// `‖Δ_ζψ + Qψ + Q − f‖_{Ẋ^{-1/2}_ζ}` where `f` is the compensating source
    /// supported outside `B`.
    pub residual: f64,
    pub iterations: usize,
    /// Ratio of the last two updates.
    pub contraction: f64,
    /// `e^{ζ·x − log_scale}(1 + ψ)`.
    pub v: ComplexField,
    pub log_scale: f64,
    /// Amplitude of the compensating source outside `B`.
    pub source_weight: Complex64,
    pub min_abs_symbol: f64,
    /// Nonzero frequencies whose symbol was clamped during the solve.
    pub clamped_modes: usize,
}

impl CgoSolution {
    pub fn relative_residual(&self) -> f64 {
        if self.xnorm_q == 0.0 {
            self.residual
        } else {
            self.residual / self.xnorm_q
        }
    }

    pub fn psi_ratio(&self) -> f64 {
        if self.xnorm_q == 0.0 {
            0.0
        } else {
            self.xnorm_psi / self.xnorm_q
        }
    }
}

/// `max_{x ∈ Ω̄} Re(ζ·x)`.
fn omega_gauge(grid: &Grid, zeta: &CVec) -> f64 {
    grid.l_omega() * (0..grid.dim()).map(|j| zeta[j].re.abs()).sum::<f64>()
}

fn raw_symbols(grid: &Grid, zeta: &CVec, symbol: Symbol) -> Vec<Complex64> {
    let dim = grid.dim();
    (0..grid.len())
        .map(|i| {
            let xi = grid.frequency(i);
            match symbol {
                Symbol::Continuum => symbol_p(&zeta[..dim], &xi[..dim]),
                Symbol::Lattice => lattice_symbol(&zeta[..dim], &xi[..dim], grid.h()),
            }
        })
        .collect()
}

/// Fixed-point solve of `Δ_ζψ + Qψ = −Q` on the periodic lattice.
///
/// The `ξ = 0` mode of `Δ_ζ` vanishes, so each iterate is made solvable by a
/// constant source placed outside `B`; `ψ̂(0) = 0` fixes the gauge. The
/// resulting `v` solves `Δv + Qv = 0` exactly at every lattice node of `B`.
pub fn solve_remainder(q: &RealField, zeta: &CVec, opts: &RemainderOptions) -> Result<CgoSolution> {
    let grid = *q.grid();
    let len = grid.len();
    let weight = BourgainWeight::new(*zeta).with_symbol(opts.symbol);
    let raw = raw_symbols(&grid, zeta, opts.symbol);
    let floor = weight.reg_floor;
    let mut clamped_modes = 0;
    let mut min_abs_symbol = f64::INFINITY;
    let multiplier: Vec<Complex64> = raw
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let a = p.norm();
            if i > 0 {
                min_abs_symbol = min_abs_symbol.min(a);
            }
            if i == 0 {
                Complex64::default()
            } else if a < floor {
                clamped_modes += 1;
                if a > 0.0 {
                    1.0 / (p * (floor / a))
                } else {
                    Complex64::new(1.0 / floor, 0.0)
                }
            } else {
                1.0 / p
            }
        })
        .collect();
    let norm_symbol = weight.with_rule(opts.norm_rule).effective_symbol(&grid);
    let q_hat = fft_real(q);
    let xnorm_q = xnorm_spectral(&q_hat, &norm_symbol, -0.5);
    let x_half = |s: &SpectralField| xnorm_spectral(s, &norm_symbol, 0.5);

    let outside = RealField::from_fn(grid, |i, _| if grid.in_ball(i) { 0.0 } else { 1.0 });
    let outside_mass = outside.values().iter().sum::<f64>() * grid.cell_volume();
    let outside_hat = fft_real(&outside);

    let log_scale = omega_gauge(&grid, zeta);
    let make_v = |psi: &ComplexField| {
        Field::from_fn(grid, |i, x| {
            let zx: Complex64 = (0..grid.dim()).map(|j| zeta[j] * x[j]).sum();
            (zx - log_scale).exp() * (1.0 + psi.values()[i])
        })
    };

    let zero = Field::filled(grid, Complex64::default());
    if q.values().iter().all(|v| *v == 0.0) {
        return Ok(CgoSolution {
            zeta: *zeta,
            v: make_v(&zero),
            psi: zero,
            xnorm_psi: 0.0,
            xnorm_q: 0.0,
            residual: 0.0,
            iterations: 0,
            contraction: 0.0,
            log_scale,
            source_weight: Complex64::default(),
            min_abs_symbol,
            clamped_modes,
        });
    }

    let step = |psi: &ComplexField| -> (SpectralField, Complex64) {
        let w = Field::from_fn(grid, |i, _| q.values()[i] * (1.0 + psi.values()[i]));
        let w_hat = fft(&w);
        let kappa = w_hat.coeffs()[0] / outside_mass;
        let coeffs = (0..len)
            .map(|i| (outside_hat.coeffs()[i] * kappa - w_hat.coeffs()[i]) * multiplier[i])
            .collect();
        (SpectralField::new(grid, coeffs), kappa)
    };

    let mut psi = zero;
    let mut psi_hat = SpectralField::new(grid, vec![Complex64::default(); len]);
    let mut prev_update = f64::INFINITY;
    let mut growth = 0;
    let mut contraction = 0.0;
    let mut iterations = 0;
    let mut kappa;
    loop {
        let (next_hat, k_next) = step(&psi);
        kappa = k_next;
        iterations += 1;
        let diff = SpectralField::new(
            grid,
            next_hat.coeffs().iter().zip(psi_hat.coeffs()).map(|(a, b)| a - b).collect(),
        );
        let update = x_half(&diff);
        if prev_update.is_finite() && prev_update > 0.0 {
            contraction = update / prev_update;
        }
        growth = if update > prev_update { growth + 1 } else { 0 };
        psi_hat = next_hat;
        psi = ifft(&psi_hat);
        if !update.is_finite() || growth >= opts.growth_limit {
            return Err(Error::ContractionFailure { iterations, update });
        }
        if update < opts.tol * xnorm_q {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::ContractionFailure { iterations, update });
        }
        prev_update = update;
    }

    // spectral residual of Δ_ζψ + Q(1 + ψ) − κ·1_{ℝⁿ∖B}
    let w_hat = fft(&Field::from_fn(grid, |i, _| q.values()[i] * (1.0 + psi.values()[i])));
    let final_kappa = w_hat.coeffs()[0] / outside_mass;
    let res = SpectralField::new(
        grid,
        (0..len)
            .map(|i| raw[i] * psi_hat.coeffs()[i] + w_hat.coeffs()[i] - outside_hat.coeffs()[i] * final_kappa)
            .collect(),
    );
    let residual = xnorm_spectral(&res, &norm_symbol, -0.5);
    let _ = kappa;
    Ok(CgoSolution {
        zeta: *zeta,
        v: make_v(&psi),
        xnorm_psi: x_half(&psi_hat),
        psi,
        xnorm_q,
        residual,
        iterations,
        contraction,
        log_scale,
        source_weight: final_kappa,
        min_abs_symbol,
        clamped_modes,
    })
}

/// Boundary trace of `u = γ^{-1/2} v` in the scaled gauge.
#[derive(Debug, Clone)]
pub struct CgoTrace {
    /// Nodal trace, scaled by `e^{-log_scale}`.
    pub nodal: Vec<Complex64>,
    /// Coefficients on the first `coeffs.len()` basis vectors.
    pub coeffs: Vec<Complex64>,
    pub log_scale: f64,
    /// Share of the trace energy outside the kept modes.
    pub projection_loss: f64,
}

/// Largest share of trace energy the truncation may discard.
pub const PROJECTION_LOSS_LIMIT: f64 = 0.2;

/// Trace energy fraction lost when keeping `m` modes, without failing.
pub fn trace_projection(sol: &CgoSolution, gamma: &RealField, basis: &BoundaryBasis, m: usize) -> CgoTrace {
    let nodal: Vec<Complex64> = basis.nodes.iter().map(|&i| sol.v.values()[i] / gamma.values()[i].sqrt()).collect();
    let coeffs = basis.coefficients_complex(&nodal, m);
    let total: f64 = nodal.iter().map(|v| v.norm_sqr()).sum::<f64>() * basis.weight;
    let kept: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
    let projection_loss = if total > 0.0 { ((total - kept) / total).max(0.0) } else { 0.0 };
    CgoTrace { nodal, coeffs, log_scale: sol.log_scale, projection_loss }
}

/// Trace on `m` modes; fails when more than 20% of its energy is discarded.
pub fn cgo_trace(sol: &CgoSolution, gamma: &RealField, basis: &BoundaryBasis, m: usize) -> Result<CgoTrace> {
    if m > basis.len() {
        return Err(Error::ShapeMismatch(format!("{m} modes requested, basis has {}", basis.len())));
    }
    let t = trace_projection(sol, gamma, basis, m);
    if t.projection_loss > PROJECTION_LOSS_LIMIT {
        return Err(Error::ProjectionLoss { fraction: t.projection_loss });
    }
    Ok(t)
}

/// Monte Carlo mean and standard error of `‖Q‖²_{Ẋ^{-1/2}_ζ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedNorm {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Average of `‖Q‖²_{Ẋ^{-1/2}_ζ}` over `τ ~ U[λ, 2λ]` and `η₁` uniform on the
/// circle orthogonal to `η = e_n`, with the continuum symbol and cell-averaged
/// zero set.
pub fn averaged_q_norm(q: &RealField, lambda: f64, r: f64, samples: usize, seed: u64) -> Result<AveragedNorm> {
    if lambda < 1.0 || samples < 2 {
        return Err(Error::DomainViolation("averaged norm needs λ ≥ 1 and at least 2 samples".into()));
    }
    let grid = *q.grid();
    let dim = grid.dim();
    let mut eta = [0.0; 3];
    eta[dim - 1] = 1.0;
    let q_hat = fft_real(q);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(f64, u64)> = (0..samples).map(|_| (rng.random_range(lambda..2.0 * lambda), rng.random())).collect();
    let values: Vec<f64> = draws
        .par_iter()
        .map(|&(tau, s)| {
            let zp = make_zeta_pair(dim, if dim == 2 { 0.0 } else { r.min(2.0 * tau) }, &eta, tau, s)?;
            let w = BourgainWeight::new(zp.zeta1).with_rule(ZeroSetRule::CellAverage);
            let v = xnorm_spectral(&q_hat, &w.effective_symbol(&grid), -0.5);
            Ok(v * v)
        })
        .collect::<Result<_>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(AveragedNorm { mean, std_error: (var / n).sqrt(), samples })
}

/// Smallest power of two `C∗` for which [`solve_remainder`] contracts at
/// `τ = min_tau_for_k(k, C∗)` for every potential and every `k` given.
///
/// `potentials(k)` returns the potentials to test at frequency `k`.
pub fn calibrate_c_star(
    ks: &[f64],
    potentials: impl Fn(f64) -> Result<Vec<RealField>>,
    opts: &RemainderOptions,
    max_power: i32,
) -> Result<f64> {
    'outer: for p in -2..=max_power {
        let c = 2f64.powi(p);
        for &k in ks {
            for q in potentials(k)? {
                let grid = *q.grid();
                let mut eta = [0.0; 3];
                eta[grid.dim() - 1] = 1.0;
                let zp = make_zeta_pair(grid.dim(), 0.0, &eta, min_tau_for_k(k, c), 0)?;
                let zeta = match opts.symbol {
                    Symbol::Lattice => lattice_null_pair(&zp, grid.h())?.0,
                    Symbol::Continuum => zp.zeta1,
                };
                match solve_remainder(&q, &zeta, opts) {
                    Ok(sol) if sol.contraction < 1.0 => {}
                    Ok(_) | Err(Error::ContractionFailure { .. }) => continue 'outer,
                    Err(e) => return Err(e),
                }
            }
        }
        return Ok(c);
    }
    Err(Error::ContractionFailure { iterations: 0, update: f64::INFINITY })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{liouville_Q, make_phantom, Bump, BumpTarget, Phantom};
    use crate::spectral::inv_delta_zeta;

    fn grid16() -> Grid {
        Grid::new(3, 16, 2.0, 0.75, 1.6).unwrap()
    }

    fn phantom_q(grid: Grid, k: f64, scale: f64) -> RealField {
        let p = Phantom {
            bumps: vec![
                Bump { center: vec![0.1, 0.0, 0.0], radius: 0.4, amplitude: 0.8 * scale, target: BumpTarget::Gamma },
                Bump { center: vec![-0.1, 0.1, 0.0], radius: 0.3, amplitude: 1.5 * scale, target: BumpTarget::D },
            ],
        };
        liouville_Q(&make_phantom(grid, &p, k, 8.0).unwrap())
    }

    #[test]
    fn zeta_pair_reference_example() {
        // η₁ orthogonal to e₃ from the seed; check the forced quantities
        let zp = make_zeta_pair(3, 2.0, &[0.0, 0.0, 1.0], 5.0, 7).unwrap();
        assert!((norm(&zp.beta) - 24f64.sqrt()).abs() < 1e-12);
        for j in 0..3 {
            let s = zp.zeta1[j] + zp.zeta2[j];
            let expect = if j == 2 { Complex64::new(0.0, -2.0) } else { Complex64::default() };
            assert!((s - expect).norm() < 1e-12);
        }
        assert!((cnorm_sqr(&zp.zeta1, 3) - 50.0).abs() < 1e-12);
        assert!(zp.identity_residuals().iter().all(|e| *e < 1e-12));
    }

    #[test]
    fn zeta_pair_degenerate_and_infeasible() {
        let zp = make_zeta_pair(3, 0.0, &[1.0, 0.0, 0.0], 3.0, 1).unwrap();
        for j in 0..3 {
            assert!((zp.zeta1[j] + zp.zeta2[j]).norm() < 1e-15);
            assert!((zp.zeta2[j] + zp.zeta1[j].conj() + 2.0 * I * zp.zeta1[j].im).norm() < 1e-12);
        }
        let zp = make_zeta_pair(3, 4.0, &[0.0, 1.0, 0.0], 2.0, 1).unwrap();
        assert_eq!(norm(&zp.beta), 0.0);
        assert!(zp.identity_residuals().iter().all(|e| *e < 1e-12));
        assert!(matches!(make_zeta_pair(3, 5.0, &[0.0, 1.0, 0.0], 2.0, 1), Err(Error::FrameInfeasible(_))));
        assert!(matches!(make_zeta_pair(2, 1.0, &[0.0, 1.0], 2.0, 1), Err(Error::FrameInfeasible(_))));
        let zp = make_zeta_pair(2, 0.0, &[0.0, 1.0], 2.0, 1).unwrap();
        assert!(zp.identity_residuals()[1..].iter().all(|e| *e < 1e-12));
    }

    #[test]
    fn min_tau_examples() {
        assert!((min_tau_for_k(1.0, 2.0) - 2f64.sqrt()).abs() < 1e-15);
        assert!((min_tau_for_k(2.0, 2.0) - 4.0 * 2f64.sqrt()).abs() < 1e-14);
        assert!(min_tau_for_k(3.0, 2.0) > min_tau_for_k(2.0, 2.0));
    }

    #[test]
    fn lattice_null_pair_is_discretely_harmonic() {
        let g = grid16();
        let zp = make_zeta_pair(3, 3.0, &[0.0, 0.6, 0.8], 4.0, 3).unwrap();
        let (z1, z2) = lattice_null_pair(&zp, g.h()).unwrap();
        for z in [z1, z2] {
            let p0 = lattice_symbol(&z, &[0.0, 0.0, 0.0], g.h());
            assert!(p0.norm() < 1e-10, "{p0}");
        }
        for j in 0..3 {
            assert!((z1[j] + z2[j] + I * zp.r * zp.eta[j]).norm() < 1e-14);
        }
        // direct 7-point Laplacian of e^{ζ·x} at a node
        let f = |x: [f64; 3]| (z1[0] * x[0] + z1[1] * x[1] + z1[2] * x[2]).exp();
        let x0 = [0.25, -0.5, 0.0];
        let h = g.h();
        let mut lap = -6.0 * f(x0);
        for a in 0..3 {
            for s in [-1.0, 1.0] {
                let mut x = x0;
                x[a] += s * h;
                lap += f(x);
            }
        }
        assert!(lap.norm() / (h * h) < 1e-9 * f(x0).norm() * cnorm_sqr(&z1, 3));
    }

    #[test]
    fn zero_potential_gives_zero_remainder() {
        let g = grid16();
        let zp = make_zeta_pair(3, 0.0, &[0.0, 0.0, 1.0], 3.0, 0).unwrap();
        let sol = solve_remainder(&RealField::filled(g, 0.0), &zp.zeta1, &RemainderOptions::default()).unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.psi.max_abs(), 0.0);
    }

    #[test]
    fn small_potential_matches_first_neumann_term() {
        let g = grid16();
        let q = phantom_q(g, 0.0, 1.0).map(|v| v * 1e-3);
        let zp = make_zeta_pair(3, 0.0, &[0.0, 0.0, 1.0], 4.0, 2).unwrap();
        let opts = RemainderOptions { symbol: Symbol::Continuum, ..Default::default() };
        let sol = solve_remainder(&q, &zp.zeta1, &opts).unwrap();
        // first term of the Neumann series with the same compensation
        let first = solve_remainder(&q, &zp.zeta1, &RemainderOptions { max_iter: 1, tol: f64::INFINITY, ..opts });
        let first = first.unwrap();
        let w = BourgainWeight::new(zp.zeta1);
        let diff = sol.psi.zip_map(&first.psi, |a, b| a - b);
        let d = crate::spectral::xnorm(&diff, &w, 0.5);
        assert!(d <= 1e-2 * sol.xnorm_psi, "{d} vs {}", sol.xnorm_psi);
        // away from ξ = 0 the first term is the plain multiplier
        let plain = inv_delta_zeta(&q.to_complex().map(|v| -v), &w).0;
        let far = |f: &ComplexField| {
            let mut s = fft(f);
            s.coeffs_mut()[0] = Complex64::default();
            s
        };
        let (a, b) = (far(&first.psi), far(&plain));
        let num: f64 = a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        let den: f64 = b.coeffs().iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        assert!(num <= 0.05 * den, "{num} vs {den}");
    }

    #[test]
    fn phantom_remainder_converges_with_small_residual() {
        let g = grid16();
        let q = phantom_q(g, 1.0, 1.0);
        let zp = make_zeta_pair(3, 1.0, &[0.0, 0.0, 1.0], 4.0, 5).unwrap();
        let (z1, _) = lattice_null_pair(&zp, g.h()).unwrap();
        let sol = solve_remainder(&q, &z1, &RemainderOptions::default()).unwrap();
        assert!(sol.relative_residual() <= 1e-8, "{}", sol.relative_residual());
        assert!(sol.contraction < 1.0);
        assert_eq!(sol.clamped_modes, 0);
        // v solves Δ_h v + Q v = 0 at every node of B
        let v = &sol.v;
        let h = g.h();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..g.len() {
            if !g.in_ball(i) {
                continue;
            }
            let mut lap = -6.0 * v.values()[i];
            for a in 0..3 {
                for s in [-1, 1] {
                    lap += v.values()[g.neighbor(i, a, s)];
                }
            }
            let r = lap / (h * h) + q.values()[i] * v.values()[i];
            worst = worst.max(r.norm());
            scale = scale.max(v.values()[i].norm() * cnorm_sqr(&z1, 3));
        }
        assert!(worst <= 1e-8 * scale, "{worst} vs {scale}");
    }

    #[test]
    fn weak_frequency_fails_to_contract() {
        let g = grid16();
        let q = phantom_q(g, 4.0, 1.0);
        let zp = make_zeta_pair(3, 0.0, &[0.0, 0.0, 1.0], 0.5, 5).unwrap();
        let (z1, _) = lattice_null_pair(&zp, g.h()).unwrap();
        let err = solve_remainder(&q, &z1, &RemainderOptions::default()).unwrap_err();
        assert!(matches!(err, Error::ContractionFailure { .. }));
    }

    #[test]
    fn trace_of_plain_exponential() {
        let g = grid16();
        let basis = BoundaryBasis::new(g);
        let zp = make_zeta_pair(3, 0.0, &[0.0, 0.0, 1.0], 1.5, 1).unwrap();
        let sol = solve_remainder(&RealField::filled(g, 0.0), &zp.zeta1, &RemainderOptions::default()).unwrap();
        let gamma = RealField::filled(g, 1.0);
        let t = trace_projection(&sol, &gamma, &basis, basis.len());
        for (&i, val) in basis.nodes.iter().zip(&t.nodal) {
            let x = g.point(i);
            let zx: Complex64 = (0..3).map(|j| zp.zeta1[j] * x[j]).sum();
            assert!((val - (zx - t.log_scale).exp()).norm() < 1e-12);
        }
        assert!(t.projection_loss < 1e-10);
        let part = trace_projection(&sol, &gamma, &basis, 10);
        assert!(part.projection_loss >= 0.0 && part.projection_loss <= 1.0);
        let kept: f64 = part.coeffs.iter().map(|c| c.norm_sqr()).sum();
        let total: f64 = t.nodal.iter().map(|v| v.norm_sqr()).sum::<f64>() * basis.weight;
        assert!(kept <= total * (1.0 + 1e-12));
    }

    #[test]
    fn averaged_norm_of_zero_and_decay() {
        let g = grid16();
        let zero = averaged_q_norm(&RealField::filled(g, 0.0), 4.0, 0.0, 16, 1).unwrap();
        assert_eq!(zero.mean, 0.0);
        let q = phantom_q(g, 1.0, 1.0);
        let a = averaged_q_norm(&q, 4.0, 0.0, 16, 1).unwrap();
        let b = averaged_q_norm(&q, 16.0, 0.0, 16, 1).unwrap();
        assert!(b.mean < a.mean);
    }
}
