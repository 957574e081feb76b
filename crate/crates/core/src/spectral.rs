//! Lattice Fourier transform, the symbol `p_ζ(ξ) = -|ξ|² + 2iζ·ξ` of
//! `Δ_ζ = Δ + 2ζ·∇`, Bourgain-weighted norms `Ẋ^b_ζ`, the multiplier `Δ_ζ⁻¹`
//! and negative Sobolev norms.
//!
//! Conventions: `f̂(ξ) = hⁿ Σ_x f(x) e^{-iξ·x}` over lattice frequencies
//! `ξ ∈ (π/R_box){-N/2, …, N/2-1}ⁿ`; every norm integrates against
//! `dμ = Δξ / (2π)ⁿ`, so that the unweighted norm is the `L²` norm.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

use crate::field::{ComplexField, Field, RealField};
use crate::grid::Grid;

/// Complex frequency vector; trailing components are zero in 2-D.
pub type CVec = [Complex64; 3];

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Fourier coefficients on the lattice, stored in FFT bin order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(grid: Grid, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), grid.len());
        Self { grid, coeffs }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Measure of one frequency cell, `Δξ / (2π)ⁿ`.
    pub fn cell_measure(&self) -> f64 {
        spectral_measure(&self.grid)
    }

    /// `(Σ_ξ |f̂|² dμ)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        (self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.cell_measure()).sqrt()
    }
}

pub fn spectral_measure(grid: &Grid) -> f64 {
    grid.freq_cell_volume() / (2.0 * PI).powi(grid.dim() as i32)
}

fn transform_axes(grid: &Grid, data: &mut [Complex64], inverse: bool) {
    let n = grid.n();
    let dim = grid.dim();
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let mut line = vec![Complex64::default(); n];
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        let total = data.len();
        for start in 0..total {
            // a line starts where the axis index is zero
            if (start / stride) % n != 0 {
                continue;
            }
            for j in 0..n {
                line[j] = data[start + j * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for j in 0..n {
                data[start + j * stride] = line[j];
            }
        }
    }
}

/// Parity `(-1)^{Σ k_a}` from shifting the origin to the box center.
fn origin_phase(grid: &Grid, idx: usize) -> f64 {
    let mi = grid.multi_index(idx);
    let s: isize = (0..grid.dim()).map(|a| grid.signed_bin(mi[a])).sum();
    if s.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn fft(f: &ComplexField) -> SpectralField {
    let grid = *f.grid();
    let mut data = f.values().to_vec();
    transform_axes(&grid, &mut data, false);
    let hn = grid.cell_volume();
    for (i, c) in data.iter_mut().enumerate() {
        *c *= hn * origin_phase(&grid, i);
    }
    SpectralField { grid, coeffs: data }
}

pub fn fft_real(f: &RealField) -> SpectralField {
    fft(&f.to_complex())
}

pub fn ifft(spec: &SpectralField) -> ComplexField {
    let grid = spec.grid;
    let mut data = spec.coeffs.clone();
    let scale = 1.0 / (2.0 * grid.r_box()).powi(grid.dim() as i32);
    for (i, c) in data.iter_mut().enumerate() {
        *c *= scale * origin_phase(&grid, i);
    }
    transform_axes(&grid, &mut data, true);
    Field::from_values(grid, data).expect("lattice size preserved")
}

/// `p_ζ(ξ) = -|ξ|² + 2i ζ·ξ` with the bilinear dot product.
pub fn symbol_p(zeta: &[Complex64], xi: &[f64]) -> Complex64 {
    let xi2: f64 = xi.iter().map(|x| x * x).sum();
    let zx: Complex64 = zeta.iter().zip(xi).map(|(z, x)| z * x).sum();
    -xi2 + 2.0 * I * zx
}

/// Symbol of the conjugated finite-difference Laplacian,
/// `e^{-ζ·x} Δ_h e^{ζ·x} e^{iξ·x} = Σ_j (2cosh(h(ζ_j + iξ_j)) - 2)/h² · e^{iξ·x}`.
pub fn lattice_symbol(zeta: &[Complex64], xi: &[f64], h: f64) -> Complex64 {
    zeta.iter()
        .zip(xi)
        .map(|(z, x)| (2.0 * ((z + I * x) * h).cosh() - 2.0) / (h * h))
        .sum()
}

/// Which operator the weight and multiplier describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Symbol {
    /// `Δ + 2ζ·∇` in the continuum.
    #[default]
    Continuum,
    /// The conjugated `2n+1`-point lattice Laplacian.
    Lattice,
}

/// Treatment of frequency cells that may meet the characteristic set `p = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroSetRule {
    /// `|p|` clamped from below at `reg_floor`, phase preserved.
    #[default]
    Clamp,
    /// `1/p` replaced by its average over the frequency cell.
    CellAverage,
}

/// `|p_ζ(ξ)|^b` weights of the `Ẋ^b_ζ` norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BourgainWeight {
    pub zeta: CVec,
    pub reg_floor: f64,
    pub symbol: Symbol,
    pub rule: ZeroSetRule,
}

/// Per-bin symbol actually used by norms and multipliers.
#[derive(Debug, Clone)]
pub struct EffectiveSymbol {
    pub values: Vec<Complex64>,
    /// `min_ξ |p(ξ)|` before regularization.
    pub min_abs: f64,
    /// Bins whose value was clamped or cell-averaged.
    pub regularized: Vec<usize>,
}

impl BourgainWeight {
    /// Default floor `1e-6 |ζ|²`, continuum symbol, clamping.
    pub fn new(zeta: CVec) -> Self {
        let z2: f64 = zeta.iter().map(|z| z.norm_sqr()).sum();
        Self { zeta, reg_floor: 1e-6 * z2, symbol: Symbol::Continuum, rule: ZeroSetRule::Clamp }
    }

    pub fn with_symbol(mut self, symbol: Symbol) -> Self {
        self.symbol = symbol;
        self
    }

    pub fn with_rule(mut self, rule: ZeroSetRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn raw_symbol(&self, grid: &Grid, xi: &[f64]) -> Complex64 {
        let z = &self.zeta[..grid.dim()];
        match self.symbol {
            Symbol::Continuum => symbol_p(z, xi),
            Symbol::Lattice => lattice_symbol(z, xi, grid.h()),
        }
    }

    /// Bound on `|p(ξ₀ + d) - p(ξ₀)|` over the frequency cell of `ξ₀`.
    fn cell_variation(&self, grid: &Grid, xi: &[f64]) -> f64 {
        let dim = grid.dim();
        let delta = grid.dxi() * (dim as f64).sqrt() / 2.0;
        let (grad, curv) = match self.symbol {
            Symbol::Continuum => {
                let g2: f64 = (0..dim).map(|a| (-2.0 * xi[a] + 2.0 * I * self.zeta[a]).norm_sqr()).sum();
                (g2.sqrt(), 1.0)
            }
            Symbol::Lattice => {
                let h = grid.h();
                let g2: f64 = (0..dim)
                    .map(|a| (2.0 * I * ((self.zeta[a] + I * xi[a]) * h).sinh() / h).norm_sqr())
                    .sum();
                let c = (0..dim).fold(1.0f64, |m, a| m.max((h * self.zeta[a].re.abs()).cosh()));
                (g2.sqrt(), c)
            }
        };
        1.2 * (grad * delta + curv * delta * delta)
    }

    /// Contribution of one axis to the symbol; both symbols are separable.
    fn axis_term(&self, grid: &Grid, axis: usize, x: f64) -> Complex64 {
        let z = self.zeta[axis];
        match self.symbol {
            Symbol::Continuum => -x * x + 2.0 * I * z * x,
            Symbol::Lattice => {
                let h = grid.h();
                (2.0 * ((z + I * x) * h).cosh() - 2.0) / (h * h)
            }
        }
    }

    /// Midpoint average of `1/p` over the frequency cell centered at `xi`.
    fn cell_average_inverse(&self, grid: &Grid, xi: &[f64]) -> Complex64 {
        let dim = grid.dim();
        let sub: usize = if dim == 3 { 24 } else { 96 };
        let step = grid.dxi() / sub as f64;
        let terms: Vec<Vec<Complex64>> = (0..dim)
            .map(|a| {
                (0..sub)
                    .map(|j| self.axis_term(grid, a, xi[a] - grid.dxi() / 2.0 + (j as f64 + 0.5) * step))
                    .collect()
            })
            .collect();
        let total = sub.pow(dim as u32);
        let mut acc = Complex64::default();
        for t in 0..total {
            let mut r = t;
            let mut p = Complex64::default();
            for axis_terms in &terms {
                p += axis_terms[r % sub];
                r /= sub;
            }
            acc += 1.0 / p;
        }
        acc / total as f64
    }

    pub fn effective_symbol(&self, grid: &Grid) -> EffectiveSymbol {
        let mut min_abs = f64::INFINITY;
        let mut regularized = Vec::new();
        let values = (0..grid.len())
            .map(|i| {
                let xi = grid.frequency(i);
                let xi = &xi[..grid.dim()];
                let p = self.raw_symbol(grid, xi);
                let a = p.norm();
                min_abs = min_abs.min(a);
                match self.rule {
                    ZeroSetRule::Clamp => {
                        if a < self.reg_floor {
                            regularized.push(i);
                            if a > 0.0 {
                                p * (self.reg_floor / a)
                            } else {
                                Complex64::new(self.reg_floor, 0.0)
                            }
                        } else {
                            p
                        }
                    }
                    ZeroSetRule::CellAverage => {
                        if a <= self.cell_variation(grid, xi) {
                            regularized.push(i);
                            let avg = self.cell_average_inverse(grid, xi);
                            let p_eff = 1.0 / avg;
                            if p_eff.norm() < self.reg_floor {
                                p_eff * (self.reg_floor / p_eff.norm().max(f64::MIN_POSITIVE))
                            } else {
                                p_eff
                            }
                        } else {
                            p
                        }
                    }
                }
            })
            .collect();
        EffectiveSymbol { values, min_abs, regularized }
    }
}

fn weighted_norm(spec: &SpectralField, weight: impl Fn(usize) -> f64) -> f64 {
    let s: f64 = spec.coeffs.iter().enumerate().map(|(i, c)| weight(i) * c.norm_sqr()).sum();
    (s * spec.cell_measure()).sqrt()
}

/// `Ẋ^b_ζ` norm for `b = ±1/2`, from precomputed effective symbol values.
pub fn xnorm_spectral(spec: &SpectralField, symbol: &EffectiveSymbol, b: f64) -> f64 {
    weighted_norm(spec, |i| symbol.values[i].norm().powf(2.0 * b))
}

/// `(Σ_ξ max(|p_ζ(ξ)|, reg_floor)^{2b} |f̂(ξ)|² dμ)^{1/2}`.
pub fn xnorm(f: &ComplexField, w: &BourgainWeight, b: f64) -> f64 {
    assert!((b.abs() - 0.5).abs() < 1e-12, "only b = ±1/2 is supported");
    let spec = fft(f);
    xnorm_spectral(&spec, &w.effective_symbol(f.grid()), b)
}

/// Diagnostics of one application of `Δ_ζ⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseDiagnostics {
    pub min_abs_symbol: f64,
    pub regularized_modes: usize,
    /// Set when some `|p_ζ(ξ)|` fell below the floor.
    pub below_floor: bool,
}

/// `ifft(f̂ / p_reg)`.
pub fn inv_delta_zeta(f: &ComplexField, w: &BourgainWeight) -> (ComplexField, InverseDiagnostics) {
    let eff = w.effective_symbol(f.grid());
    let mut spec = fft(f);
    for (c, p) in spec.coeffs.iter_mut().zip(&eff.values) {
        *c /= p;
    }
    let diag = InverseDiagnostics {
        min_abs_symbol: eff.min_abs,
        regularized_modes: eff.regularized.len(),
        below_floor: eff.min_abs < w.reg_floor,
    };
    (ifft(&spec), diag)
}

/// Spectral application of `Δ_ζ` with the same effective symbol.
pub fn apply_delta_zeta(f: &ComplexField, w: &BourgainWeight) -> ComplexField {
    let eff = w.effective_symbol(f.grid());
    let mut spec = fft(f);
    for (c, p) in spec.coeffs.iter_mut().zip(&eff.values) {
        *c *= p;
    }
    ifft(&spec)
}

/// `(Σ_ξ (1+|ξ|²)^{-s} |f̂(ξ)|² dμ)^{1/2}`.
pub fn hs_norm_spectral(spec: &SpectralField, s: f64) -> f64 {
    let grid = spec.grid;
    weighted_norm(spec, |i| {
        let xi = grid.frequency(i);
        let r2: f64 = xi[..grid.dim()].iter().map(|x| x * x).sum();
        (1.0 + r2).powf(-s)
    })
}

pub fn hs_norm(f: &RealField, s: f64) -> f64 {
    hs_norm_spectral(&fft_real(f), s)
}

pub fn hs_norm_complex(f: &ComplexField, s: f64) -> f64 {
    hs_norm_spectral(&fft(f), s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid8() -> Grid {
        Grid::new(3, 8, 2.0, 0.5, 1.4).unwrap()
    }

    fn random_field(grid: Grid, seed: u64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::from_fn(grid, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn zeta_sample() -> CVec {
        // τ e₁ + i τ e₂: ζ·ζ = 0
        [Complex64::new(1.5, 0.0), Complex64::new(0.0, 1.5), Complex64::new(0.0, 0.0)]
    }

    fn l2(f: &ComplexField) -> f64 {
        (f.values().iter().map(|v| v.norm_sqr()).sum::<f64>() * f.grid().cell_volume()).sqrt()
    }

    #[test]
    fn zero_and_plane_wave() {
        let g = grid8();
        let z = fft(&Field::filled(g, Complex64::default()));
        assert!(z.coeffs().iter().all(|c| c.norm() == 0.0));
        let k0 = g.flat_index(&[1, 7, 2]);
        let xi0 = g.frequency(k0);
        let wave = Field::from_fn(g, |_, x| (I * (xi0[0] * x[0] + xi0[1] * x[1] + xi0[2] * x[2])).exp());
        let spec = fft(&wave);
        let vol = 4.0f64.powi(3);
        for (i, c) in spec.coeffs().iter().enumerate() {
            let expect = if i == k0 { vol } else { 0.0 };
            assert!((c - expect).norm() < 1e-12 * vol, "bin {i}: {c}");
        }
    }

    #[test]
    fn round_trip_and_plancherel() {
        let g = Grid::new(3, 16, 2.0, 0.75, 1.6).unwrap();
        let f = random_field(g, 3);
        let spec = fft(&f);
        let back = ifft(&spec);
        let err = back.values().iter().zip(f.values()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let scale = f.values().iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!(err / scale < 1e-12);
        assert!((spec.l2_norm() - l2(&f)).abs() / l2(&f) < 1e-12);
    }

    #[test]
    fn symbol_examples() {
        let z = zeta_sample();
        assert_eq!(symbol_p(&z, &[0.0, 0.0, 0.0]), Complex64::default());
        let tau = 1.7;
        let p = symbol_p(&[Complex64::new(tau, 0.0), Complex64::default(), Complex64::default()], &[2.0 * tau, 0.0, 0.0]);
        assert!((p - Complex64::new(-4.0 * tau * tau, 4.0 * tau * tau)).norm() < 1e-12);
        // independent scalar recomputation
        let xi = [0.3, -1.1, 2.0];
        let zx = z[0] * xi[0] + z[1] * xi[1] + z[2] * xi[2];
        let expect = Complex64::new(-(0.09 + 1.21 + 4.0), 0.0) + Complex64::new(0.0, 2.0) * zx;
        assert!((symbol_p(&z, &xi) - expect).norm() < 1e-13);
    }

    #[test]
    fn lattice_symbol_tends_to_continuum() {
        let z = zeta_sample();
        let xi = [0.7, -0.4, 0.2];
        let e1 = (lattice_symbol(&z, &xi, 0.02) - symbol_p(&z, &xi)).norm();
        let e2 = (lattice_symbol(&z, &xi, 0.01) - symbol_p(&z, &xi)).norm();
        assert!((e1 / e2 - 4.0).abs() < 0.1);
    }

    #[test]
    fn xnorm_single_mode_and_zero() {
        let g = grid8();
        let w = BourgainWeight::new(zeta_sample());
        assert_eq!(xnorm(&Field::filled(g, Complex64::default()), &w, 0.5), 0.0);
        let k0 = g.flat_index(&[2, 1, 0]);
        let mut spec = SpectralField::new(g, vec![Complex64::default(); g.len()]);
        spec.coeffs_mut()[k0] = Complex64::new(2.0, -1.0);
        let f = ifft(&spec);
        let xi = g.frequency(k0);
        let p = symbol_p(&w.zeta, &xi).norm();
        for b in [0.5, -0.5] {
            let expect = p.powf(b) * 5.0f64.sqrt() * spectral_measure(&g).sqrt();
            assert!((xnorm(&f, &w, b) - expect).abs() < 1e-12 * expect);
        }
    }

    #[test]
    fn duality_bound_on_random_pairs() {
        let g = grid8();
        let w = BourgainWeight::new(zeta_sample());
        for seed in 0..20 {
            let f = random_field(g, seed);
            let h = random_field(g, 100 + seed);
            // brute-force L² inner product on the lattice
            let ip: Complex64 = f.values().iter().zip(h.values()).map(|(a, b)| a * b.conj()).sum::<Complex64>()
                * g.cell_volume();
            assert!(ip.norm() <= xnorm(&f, &w, -0.5) * xnorm(&h, &w, 0.5) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn inverse_is_exact_on_single_modes_and_has_unit_norm() {
        let g = grid8();
        let w = BourgainWeight::new(zeta_sample());
        let eff = w.effective_symbol(&g);
        assert_eq!(inv_delta_zeta(&Field::filled(g, Complex64::default()), &w).0.max_abs(), 0.0);
        for k0 in 0..g.len() {
            let mut spec = SpectralField::new(g, vec![Complex64::default(); g.len()]);
            spec.coeffs_mut()[k0] = Complex64::new(1.0, 0.5);
            let f = ifft(&spec);
            let (u, diag) = inv_delta_zeta(&f, &w);
            let uhat = fft(&u);
            if !eff.regularized.contains(&k0) {
                let xi = g.frequency(k0);
                let expect = Complex64::new(1.0, 0.5) / symbol_p(&w.zeta, &xi);
                assert!((uhat.coeffs()[k0] - expect).norm() < 1e-12 * expect.norm());
            }
            let ratio = xnorm(&u, &w, 0.5) / xnorm(&f, &w, -0.5);
            assert!((ratio - 1.0).abs() < 1e-12, "mode {k0}: ratio {ratio}");
            assert!(diag.min_abs_symbol >= 0.0);
        }
    }

    #[test]
    fn delta_zeta_undoes_inverse_on_unclamped_modes() {
        let g = grid8();
        let w = BourgainWeight::new(zeta_sample());
        let eff = w.effective_symbol(&g);
        let mut f = random_field(g, 9);
        // remove the clamped bins (ξ = 0 among them)
        let mut spec = fft(&f);
        for &i in &eff.regularized {
            spec.coeffs_mut()[i] = Complex64::default();
        }
        f = ifft(&spec);
        let back = apply_delta_zeta(&inv_delta_zeta(&f, &w).0, &w);
        let err = back.values().iter().zip(f.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12 * f.max_abs());
    }

    #[test]
    fn hs_norm_properties() {
        let g = grid8();
        let f = random_field(g, 11).re();
        assert_eq!(hs_norm(&Field::filled(g, 0.0), 2.0), 0.0);
        let l2 = (f.values().iter().map(|v| v * v).sum::<f64>() * g.cell_volume()).sqrt();
        assert!((hs_norm(&f, 0.0) - l2).abs() < 1e-12 * l2);
        let mut prev = f64::INFINITY;
        for s in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let v = hs_norm(&f, s);
            assert!(v <= prev);
            prev = v;
        }
        // lattice delta of unit mass: every coefficient equals 1
        let c = g.center_index();
        let delta = Field::from_fn(g, |i, _| if i == g.flat_index(&[c, c, c]) { 1.0 / g.cell_volume() } else { 0.0 });
        let s = 2.5;
        let direct: f64 = (0..g.len())
            .map(|i| {
                let xi = g.frequency(i);
                (1.0 + xi.iter().map(|x| x * x).sum::<f64>()).powf(-s)
            })
            .sum::<f64>()
            * spectral_measure(&g);
        assert!((hs_norm(&delta, s) - direct.sqrt()).abs() < 1e-12 * direct.sqrt());
    }

    #[test]
    fn cell_average_keeps_unit_norm_and_finite_zero_cell() {
        let g = grid8();
        let w = BourgainWeight::new(zeta_sample()).with_rule(ZeroSetRule::CellAverage);
        let eff = w.effective_symbol(&g);
        assert!(eff.regularized.contains(&0));
        let p0 = eff.values[0];
        assert!(p0.norm() > w.reg_floor && p0.norm().is_finite());
        let f = random_field(g, 5);
        let u = inv_delta_zeta(&f, &w).0;
        let ratio = xnorm(&u, &w, 0.5) / xnorm(&f, &w, -0.5);
        assert!((ratio - 1.0).abs() < 1e-12);
    }
}
