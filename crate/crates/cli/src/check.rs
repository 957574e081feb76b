//! Oracle and invariant suite behind `dotlab check`.

use dotlab::boundary::BoundaryBasis;
use dotlab::cgo::{lattice_null_pair, make_zeta_pair, min_tau_for_k, solve_remainder, RemainderOptions};
use dotlab::error::Error;
use dotlab::field::{Field, RealField};
use dotlab::fields::{liouville_Q, liouville_q, CoefficientSet};
use dotlab::forward::{nodal_dtn_gap, solve_dirichlet, OmegaStencil};
use dotlab::grid::Grid;
use dotlab::io;
use dotlab::oracle::{dense_solve, fourier_mode_oracle, quadrature_integral, volume_identity, Region};
use dotlab::recovery::{envelope, recover_fourier_mode, EnvelopeParams, ModeOptions, Problem};
use dotlab::spectral::{fft_real, ifft, inv_delta_zeta, spectral_measure, xnorm, BourgainWeight, SpectralField};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed discrepancy.
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub grid: Grid,
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
}

fn outcome(name: &'static str, value: f64, tolerance: f64, detail: impl Into<String>) -> CheckOutcome {
    CheckOutcome { name, passed: value <= tolerance, value, tolerance, detail: detail.into() }
}

fn failed(name: &'static str, err: impl std::fmt::Display) -> CheckOutcome {
    CheckOutcome { name, passed: false, value: f64::INFINITY, tolerance: 0.0, detail: err.to_string() }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Random `γ`, `D` on the interior of Ω, background elsewhere.
fn random_coeffs(grid: Grid, rng: &mut ChaCha8Rng, k: f64, with_gamma: bool) -> CoefficientSet {
    let gamma = Field::from_fn(grid, |i, _| {
        if with_gamma && grid.in_omega_interior(i) {
            rng.random_range(0.7..1.5)
        } else {
            1.0
        }
    });
    let dcoef = Field::from_fn(grid, |i, _| if grid.in_omega_interior(i) { rng.random_range(0.0..0.5) } else { 0.0 });
    CoefficientSet { gamma, dcoef, k, m_bound: 8.0 }
}

fn random_boundary(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn zeta_identities() -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for seed in 0..1000 {
        let eta: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let nrm = eta.iter().map(|x| x * x).sum::<f64>().sqrt();
        let eta: Vec<f64> = eta.iter().map(|x| x / nrm).collect();
        let r = rng.random_range(0.0..10.0);
        let tau = r / 2.0 + rng.random_range(0.1..20.0);
        match make_zeta_pair(3, r, &eta, tau, seed) {
            Ok(zp) => worst = zp.identity_residuals().into_iter().fold(worst, f64::max),
            Err(e) => return failed("zeta_identities", e),
        }
    }
    outcome("zeta_identities", worst, 1e-12, "1000 random (r, eta, tau) draws")
}

fn multiplier_norm(grid: Grid) -> CheckOutcome {
    let zp = match make_zeta_pair(grid.dim(), 0.0, &unit_last(grid.dim()), 2.0, 5) {
        Ok(z) => z,
        Err(e) => return failed("multiplier_unit_norm", e),
    };
    let w = BourgainWeight::new(zp.zeta1);
    let mut worst: f64 = 0.0;
    for k0 in 0..grid.len() {
        let mut spec = SpectralField::new(grid, vec![Complex64::default(); grid.len()]);
        spec.coeffs_mut()[k0] = Complex64::new(1.0, 0.5);
        let f = ifft(&spec);
        let (u, _) = inv_delta_zeta(&f, &w);
        worst = worst.max((xnorm(&u, &w, 0.5) / xnorm(&f, &w, -0.5) - 1.0).abs());
    }
    outcome("multiplier_unit_norm", worst, 1e-12, format!("{} lattice modes", grid.len()))
}

fn unit_last(dim: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[dim - 1] = 1.0;
    e
}

fn q_recomposition(grid: Grid) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c = random_coeffs(grid, &mut rng, 1.3, true);
    let (q, big_q) = (liouville_q(&c), liouville_Q(&c));
    let k2 = c.k * c.k;
    let worst = (0..grid.len())
        .filter(|&i| grid.in_omega(i))
        .map(|i| {
            let expect = q.values()[i] + (k2 + c.dcoef.values()[i]) / c.gamma.values()[i];
            (big_q.values()[i] - expect).abs() / expect.abs().max(1.0)
        })
        .fold(0.0, f64::max);
    outcome("q_recomposition", worst, 1e-14, "Q = q + (k^2 + D)/gamma on Omega")
}

fn dense_oracle(grid: Grid) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (mut worst, mut worst_res): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let k = rng.random_range(0.0..1.5);
        let c = random_coeffs(grid, &mut rng, k, true);
        let nb = OmegaStencil::new(&c).boundary.len();
        let g = random_boundary(nb, &mut rng);
        let fast = match solve_dirichlet(&c, &g) {
            Ok(s) => s,
            Err(e) => return failed("dense_oracle", e),
        };
        let slow = match dense_solve(&c, &g) {
            Ok(u) => u,
            Err(e) => return failed("dense_oracle", e),
        };
        worst_res = worst_res.max(fast.residual_norm);
        let scale = slow.max_abs().max(1.0);
        worst = fast.u.values().iter().zip(slow.values()).map(|(a, b)| (a - b).abs() / scale).fold(worst, f64::max);
    }
    let mut o = outcome("dense_oracle", worst, 1e-8, format!("20 random cases; worst interior residual {worst_res:.2e}"));
    if worst_res > 1e-10 {
        o.passed = false;
    }
    o
}

fn dtn_symmetry(grid: Grid) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let c = random_coeffs(grid, &mut rng, 1.0, true);
    let st = OmegaStencil::new(&c);
    let solver = match st.factor() {
        Ok(s) => s,
        Err(e) => return failed("dtn_symmetry", e),
    };
    let extend = |g: &[f64]| {
        let mut w = vec![0.0; st.nodes.len()];
        for (b, &p) in st.boundary.iter().enumerate() {
            w[p] = g[b];
        }
        w
    };
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let g = random_boundary(st.boundary.len(), &mut rng);
        let h = random_boundary(st.boundary.len(), &mut rng);
        let (ug, _) = solver.nodal(&g);
        let (uh, _) = solver.nodal(&h);
        // ⟨Λg, h⟩ = E(u_g, w) for any extension w of h
        worst = worst.max(rel(st.energy(&ug, &extend(&h)), st.energy(&uh, &extend(&g))));
    }
    outcome("dtn_symmetry", worst, 1e-8, "50 random boundary pairs")
}

fn pairing_identity(grid: Grid) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let c1 = random_coeffs(grid, &mut rng, 1.0, true);
        let c2 = random_coeffs(grid, &mut rng, 1.0, true);
        let gap = match nodal_dtn_gap(&c1, &c2) {
            Ok(g) => g,
            Err(e) => return failed("pairing_identity", e),
        };
        let nb = gap.nrows();
        let g1 = random_boundary(nb, &mut rng);
        let g2 = random_boundary(nb, &mut rng);
        let (u1, u2) = match (solve_dirichlet(&c1, &g1), solve_dirichlet(&c2, &g2)) {
            (Ok(a), Ok(b)) => (a.u, b.u),
            (Err(e), _) | (_, Err(e)) => return failed("pairing_identity", e),
        };
        let pairing: f64 = (0..nb).map(|i| g2[i] * (0..nb).map(|j| gap[(i, j)] * g1[j]).sum::<f64>()).sum();
        worst = worst.max(rel(pairing, volume_identity(&c1, &c2, &u1, &u2)));
    }
    outcome("pairing_identity", worst, 1e-6, "boundary pairing vs volume quadrature, 10 random pairs")
}

fn random_real(grid: Grid, seed: u64) -> RealField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Field::from_fn(grid, |_, _| rng.random_range(-1.0..1.0))
}

fn plancherel(grid: Grid) -> CheckOutcome {
    let (f, g) = (random_real(grid, 31), random_real(grid, 37));
    let direct = quadrature_integral(&[&f, &g], Region::Box);
    let (fh, gh) = (fft_real(&f), fft_real(&g));
    let spectral: Complex64 =
        fh.coeffs().iter().zip(gh.coeffs()).map(|(a, b)| a * b.conj()).sum::<Complex64>() * spectral_measure(&grid);
    let value = (spectral - direct).norm() / direct.abs().max(1e-300);
    outcome("plancherel", value, 1e-10, "quadrature of f*g vs spectral inner product")
}

fn fourier_oracle(grid: Grid) -> CheckOutcome {
    let (q1, q2) = (random_real(grid, 41), random_real(grid, 43));
    let diff = q2.zip_map(&q1, |a, b| a - b);
    let spec = fft_real(&diff);
    let mut worst: f64 = 0.0;
    for idx in [1usize, 7, grid.len() / 3, grid.len() - 2] {
        let xi = grid.frequency(idx);
        let r = xi[..grid.dim()].iter().map(|x| x * x).sum::<f64>().sqrt();
        let eta: Vec<f64> = xi[..grid.dim()].iter().map(|x| x / r).collect();
        let direct = fourier_mode_oracle(&q1, &q2, r, &eta);
        worst = worst.max((direct - spec.coeffs()[idx]).norm() / spec.coeffs()[idx].norm().max(1e-300));
    }
    outcome("fourier_oracle_fft", worst, 1e-10, "direct sum vs FFT at lattice frequencies")
}

fn cgo_residual(grid: Grid, c_star: f64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let c = random_coeffs(grid, &mut rng, 1.0, true);
    let q = liouville_Q(&c);
    let tau = 4.0 * min_tau_for_k(1.0, c_star);
    let run = || -> Result<f64, Error> {
        let zp = make_zeta_pair(grid.dim(), 0.0, &unit_last(grid.dim()), tau, 1)?;
        let (z1, _) = lattice_null_pair(&zp, grid.h())?;
        Ok(solve_remainder(&q, &z1, &RemainderOptions::default())?.relative_residual())
    };
    match run() {
        Ok(v) => outcome("cgo_residual", v, 1e-8, format!("tau = 4 min_tau = {tau:.3}")),
        Err(e) => failed("cgo_residual", e),
    }
}

fn mode_identity(grid: Grid, c_star: f64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let c1 = random_coeffs(grid, &mut rng, 1.0, false);
    let c2 = random_coeffs(grid, &mut rng, 1.0, false);
    let basis = BoundaryBasis::new(grid);
    let run = || -> Result<f64, Error> {
        let p = Problem::new(c1.clone(), c2.clone())?;
        let gap = p.dtn_gap(&basis, basis.len())?;
        let tau = 4.0 * min_tau_for_k(1.0, c_star);
        let zp = make_zeta_pair(grid.dim(), 0.0, &unit_last(grid.dim()), tau, 2)?;
        let m = recover_fourier_mode(&p, &basis, &gap, &zp, &ModeOptions::default())?;
        let scale = m.fhat_true.norm() + m.remainder_terms.iter().sum::<f64>();
        Ok((m.fhat_est - m.fhat_true - m.remainder_sum).norm() / scale.max(1e-300))
    };
    match run() {
        Ok(v) => outcome("mode_identity", v, 1e-6, "fhat_est - fhat_true equals the remainder expansion"),
        Err(e) => failed("mode_identity", e),
    }
}

fn identical_gap(grid: Grid) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(59);
    let c = random_coeffs(grid, &mut rng, 1.0, true);
    match nodal_dtn_gap(&c, &c.clone()) {
        Ok(g) => outcome("identical_gap_zero", g.amax(), 0.0, "identical coefficient sets"),
        Err(e) => failed("identical_gap_zero", e),
    }
}

fn envelope_reference(dim: usize) -> CheckOutcome {
    let p = EnvelopeParams { c: 1.0, alpha: 5.0, epsilon: 0.5, s: 4.0, delta: 0.5 };
    match envelope(&p, dim.max(3), 1.0, (-10.0f64).exp()) {
        Ok((e1, _)) => outcome("envelope_reference", (e1 - ((-4.0f64).exp() + 1.0)).abs(), 1e-12, "C=1, alpha=5, k=1, A=e^-10"),
        Err(e) => failed("envelope_reference", e),
    }
}

fn dotf_corruption(grid: Grid) -> CheckOutcome {
    let mut bytes = io::encode_real(&random_real(grid, 61));
    bytes.truncate(bytes.len() - 5);
    match io::decode_real(&bytes, &grid) {
        Err(Error::Format { offset, msg }) => {
            CheckOutcome { name: "dotf_corruption", passed: true, value: 0.0, tolerance: 0.0, detail: format!("byte {offset}: {msg}") }
        }
        Err(e) => failed("dotf_corruption", format!("unexpected error kind: {e}")),
        Ok(_) => failed("dotf_corruption", "truncated file was accepted"),
    }
}

fn precondition_gate(cfg: &RunConfig) -> CheckOutcome {
    let mut bad = cfg.clone();
    let k = bad.k.first().copied().unwrap_or(1.0);
    bad.mode.tau = Some(0.5 * min_tau_for_k(k, bad.c_star));
    match bad.validate() {
        Err(e) if format!("{e:#}").starts_with("mode.tau") => {
            CheckOutcome { name: "precondition_gate", passed: true, value: 0.0, tolerance: 0.0, detail: format!("{e:#}") }
        }
        Err(e) => failed("precondition_gate", format!("rejected for another reason: {e:#}")),
        Ok(_) => failed("precondition_gate", "tau below min_tau_for_k was accepted"),
    }
}

/// Run every check on `grid`.
pub fn run_checks(cfg: &RunConfig, grid: Grid) -> CheckReport {
    let checks = vec![
        zeta_identities(),
        multiplier_norm(grid),
        q_recomposition(grid),
        dense_oracle(grid),
        dtn_symmetry(grid),
        pairing_identity(grid),
        plancherel(grid),
        fourier_oracle(grid),
        cgo_residual(grid, cfg.c_star),
        mode_identity(grid, cfg.c_star),
        identical_gap(grid),
        envelope_reference(grid.dim()),
        dotf_corruption(grid),
        precondition_gate(cfg),
    ];
    let passed = checks.iter().all(|c| c.passed);
    CheckReport { grid, passed, checks }
}
