//! Run configuration: a TOML file, optionally patched by `key=value`
//! overrides, validated before any compute.

use anyhow::{anyhow, bail, Context, Result};
use dotlab::cgo::min_tau_for_k;
use dotlab::fields::{make_phantom, Phantom};
use dotlab::grid::Grid;
use dotlab::recovery::SweepConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    #[serde(rename = "R_box")]
    pub r_box: f64,
    #[serde(rename = "L_Omega")]
    pub l_omega: f64,
    #[serde(rename = "R")]
    pub r_ball: f64,
}

impl GridSpec {
    pub fn grid(&self) -> Result<Grid> {
        Ok(Grid::new(self.n, self.big_n, self.r_box, self.l_omega, self.r_ball)?)
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { n: 3, big_n: 32, r_box: 2.0, l_omega: 0.75, r_ball: 1.6 }
    }
}

/// Single-mode settings used by `cgo` and `recover`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModeSpec {
    pub r: f64,
    pub eta: Vec<f64>,
    /// Explicit `τ`; `None` uses `tau_factor · min_tau_for_k`.
    pub tau: Option<f64>,
}

impl Default for ModeSpec {
    fn default() -> Self {
        Self { r: 0.0, eta: vec![0.0, 0.0, 1.0], tau: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub phantom1: Phantom,
    pub phantom2: Phantom,
    pub m_bound: f64,
    pub k: Vec<f64>,
    pub delta: f64,
    pub s: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub a0: f64,
    #[serde(rename = "C_star")]
    pub c_star: f64,
    pub tau_factor: f64,
    pub t_cut_min: f64,
    pub mode_budget: usize,
    pub sigma: f64,
    pub seed: u64,
    /// DtN truncation; 0 keeps the whole boundary basis.
    pub m_modes: usize,
    /// Data proxy values for `bound`.
    #[serde(rename = "A")]
    pub a_values: Vec<f64>,
    pub mode: ModeSpec,
    /// Constant used by `bound`.
    pub envelope_c: f64,
    /// Grid of the `check` suite.
    pub check_grid: GridSpec,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let (phantom1, phantom2) = Phantom::reference_pair();
        Self {
            grid: GridSpec::default(),
            phantom1,
            phantom2,
            m_bound: 8.0,
            k: vec![1.0, 2.0, 4.0],
            delta: 0.5,
            s: 4.0,
            alpha: 5.0,
            epsilon: 0.5,
            a0: 0.002,
            c_star: 0.5,
            tau_factor: 1.0,
            t_cut_min: 8.0,
            mode_budget: 200,
            sigma: 1e-6,
            seed: 1,
            m_modes: 0,
            a_values: vec![1e-6, 1e-4, 1e-2],
            mode: ModeSpec::default(),
            envelope_c: 1.0,
            check_grid: GridSpec { n: 3, big_n: 8, r_box: 2.0, l_omega: 0.5, r_ball: 1.4 },
            output: PathBuf::from("out"),
        }
    }
}

/// Parse an override value as TOML, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Apply `a.b.c=value` to a TOML table, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| anyhow!("override `{assignment}` is not key=value"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| anyhow!("override key `{key}`: `{part}` is not a table"))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Overlay `top` onto `base`, recursing into tables present in both.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

impl RunConfig {
    /// Defaults, then the file (if any), then the overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = toml::Table::try_from(RunConfig::default())?;
        if let Some(p) = path {
            let file = std::fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))?
                .parse::<toml::Table>()
                .with_context(|| format!("parsing {}", p.display()))?;
            merge(&mut table, file);
        }
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into().context("invalid configuration")?;
        Ok(cfg)
    }

    /// Check every precondition, naming the first violated one.
    pub fn validate(&self) -> Result<Grid> {
        let grid = self.grid.grid().context("grid")?;
        if self.k.is_empty() {
            bail!("k: list is empty");
        }
        if let Some(k) = self.k.iter().find(|&&k| !(k >= 1.0 && k.is_finite())) {
            bail!("k: every frequency must be >= 1, got {k}");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            bail!("delta: must lie in (0, 1), got {}", self.delta);
        }
        if !(2.0 * self.s > grid.dim() as f64 + 3.0) {
            bail!("s: need 2s > n + 3, got s = {}", self.s);
        }
        if !(self.alpha > 4.0) {
            bail!("alpha: must exceed 4, got {}", self.alpha);
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            bail!("epsilon: must lie in (0, 1), got {}", self.epsilon);
        }
        if !(self.a0 > 0.0) {
            bail!("a0: must be positive, got {}", self.a0);
        }
        if !(self.c_star > 0.0) {
            bail!("C_star: must be positive, got {}", self.c_star);
        }
        if !(self.tau_factor >= 1.0) {
            bail!("tau_factor: tau must be at least min_tau_for_k, got multiplier {}", self.tau_factor);
        }
        if let Some(tau) = self.mode.tau {
            let k = self.k[0];
            let floor = min_tau_for_k(k, self.c_star);
            if tau < floor {
                bail!("mode.tau: {tau} is below min_tau_for_k({k}, {}) = {floor}", self.c_star);
            }
            if tau < self.mode.r / 2.0 {
                bail!("mode.tau: {tau} is below r/2 = {}", self.mode.r / 2.0);
            }
        }
        if self.mode.eta.len() != grid.dim() {
            bail!("mode.eta: needs {} components", grid.dim());
        }
        if !(self.mode.r >= 0.0) {
            bail!("mode.r: must be nonnegative");
        }
        if !(self.t_cut_min > 0.0) {
            bail!("t_cut_min: must be positive, got {}", self.t_cut_min);
        }
        if self.mode_budget < 2 {
            bail!("mode_budget: need at least 2 samples");
        }
        if !(self.sigma >= 0.0) {
            bail!("sigma: must be nonnegative, got {}", self.sigma);
        }
        if let Some(a) = self.a_values.iter().find(|&&a| !(a > 0.0)) {
            bail!("A: values must be positive, got {a}");
        }
        for (name, p) in [("phantom1", &self.phantom1), ("phantom2", &self.phantom2)] {
            for &k in &self.k {
                make_phantom(grid, p, k, self.m_bound).with_context(|| format!("{name} at k = {k}"))?;
            }
        }
        Ok(grid)
    }

    pub fn m_modes(&self) -> Option<usize> {
        (self.m_modes > 0).then_some(self.m_modes)
    }

    pub fn sweep_config(&self, grid: Grid) -> SweepConfig {
        SweepConfig {
            grid,
            phantom1: self.phantom1.clone(),
            phantom2: self.phantom2.clone(),
            m_bound: self.m_bound,
            ks: self.k.clone(),
            delta: self.delta,
            s: self.s,
            alpha: self.alpha,
            epsilon: self.epsilon,
            a0: self.a0,
            c_star: self.c_star,
            tau_factor: self.tau_factor,
            t_cut_min: self.t_cut_min,
            mode_budget: self.mode_budget,
            sigma: self.sigma,
            seed: self.seed,
            m_modes: self.m_modes(),
        }
    }
}
