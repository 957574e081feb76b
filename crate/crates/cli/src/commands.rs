//! Subcommand bodies. Each writes its artifacts under the configured output
//! directory and returns whether every step completed.

use anyhow::{Context, Result};
use dotlab::boundary::{operator_norm_star, truncation_tail_ratio, BoundaryBasis};
use dotlab::cgo::{lattice_null_pair, make_zeta_pair, min_tau_for_k, solve_remainder, RemainderOptions};
use dotlab::fields::{liouville_Q, make_phantom, CoefficientSet};
use dotlab::forward::assemble_dtn;
use dotlab::grid::Grid;
use dotlab::io;
use dotlab::recovery::{
    envelope, gamma_inverse_diff, gap_proxy, perturb_gap, recover_q_diff, run_sweep, EnvelopeParams, ModeOptions,
    Noise, Problem, QRecoveryOptions, StabilityRecord,
};
use serde::Serialize;
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};

use crate::check::run_checks;
use crate::config::RunConfig;

/// Column order of `sweep.csv`.
pub const SWEEP_COLUMNS: [&str; 8] =
    ["k", "A", "minus_log_A", "recovery_error_hs", "envelope_value", "T_cut", "modes_ok", "modes_failed"];

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.output).with_context(|| format!("creating {}", cfg.output.display()))?;
    Ok(cfg.output.clone())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn basis_for(cfg: &RunConfig, grid: &Grid) -> Result<BoundaryBasis> {
    Ok(io::cached_basis(cfg.output.join("cache"), grid)?)
}

fn pair_at(cfg: &RunConfig, grid: Grid, k: f64) -> Result<(CoefficientSet, CoefficientSet)> {
    let c1 = make_phantom(grid, &cfg.phantom1, k, cfg.m_bound).context("phantom1")?;
    let c2 = make_phantom(grid, &cfg.phantom2, k, cfg.m_bound).context("phantom2")?;
    Ok((c1, c2))
}

fn m_for(cfg: &RunConfig, basis: &BoundaryBasis) -> usize {
    cfg.m_modes().unwrap_or(basis.len()).min(basis.len())
}

/// Manifest fields shared by every command.
fn manifest(cfg: &RunConfig, command: &str) -> serde_json::Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "config": cfg,
    })
}

/// Coefficients and potentials of both sets at the first `k`.
pub fn cmd_phantom(cfg: &RunConfig) -> Result<bool> {
    let grid = cfg.validate()?;
    let dir = out_dir(cfg)?;
    let k = cfg.k[0];
    let (c1, c2) = pair_at(cfg, grid, k)?;
    let mut summary = Vec::new();
    for (tag, c) in [("1", &c1), ("2", &c2)] {
        let q = liouville_Q(c);
        io::write_real(dir.join(format!("gamma_{tag}.dotf")), &c.gamma)?;
        io::write_real(dir.join(format!("D_{tag}.dotf")), &c.dcoef)?;
        io::write_real(dir.join(format!("Q_{tag}.dotf")), &q)?;
        let gmin = c.gamma.values().iter().cloned().fold(f64::INFINITY, f64::min);
        summary.push(json!({"set": tag, "k": k, "gamma_min": gmin, "gamma_max": c.gamma.max_abs(),
            "D_max": c.dcoef.max_abs(), "Q_max": q.max_abs()}));
    }
    let mut m = manifest(cfg, "phantom");
    m["sets"] = json!(summary);
    write_json(&dir.join("phantom.json"), &m)?;
    Ok(true)
}

fn k_tag(k: f64) -> String {
    format!("k{k}")
}

/// Potentials and both DtN matrices at every `k`.
pub fn cmd_forward(cfg: &RunConfig) -> Result<bool> {
    let grid = cfg.validate()?;
    let dir = out_dir(cfg)?;
    let basis = basis_for(cfg, &grid)?;
    let m = m_for(cfg, &basis);
    let mut rows = Vec::new();
    for &k in &cfg.k {
        let (c1, c2) = pair_at(cfg, grid, k)?;
        for (tag, c) in [("1", &c1), ("2", &c2)] {
            io::write_real(dir.join(format!("Q_{tag}_{}.dotf", k_tag(k))), &liouville_Q(c))?;
            let l = assemble_dtn(c, &basis, m).with_context(|| format!("DtN of set {tag} at k = {k}"))?;
            io::write_dtn(dir.join(format!("dtn_{tag}_{}.bin", k_tag(k))), &grid, &l)?;
            rows.push(json!({"set": tag, "k": k, "m_modes": m, "norm_star": operator_norm_star(&l),
                "tail_ratio": truncation_tail_ratio(&l)}));
        }
    }
    let mut man = manifest(cfg, "forward");
    man["dtn"] = json!(rows);
    write_json(&dir.join("forward.json"), &man)?;
    Ok(true)
}

/// DtN gaps and data proxies at every `k`, with the configured noise.
pub fn cmd_dtn(cfg: &RunConfig) -> Result<bool> {
    let grid = cfg.validate()?;
    let dir = out_dir(cfg)?;
    let basis = basis_for(cfg, &grid)?;
    let m = m_for(cfg, &basis);
    let mut rows = Vec::new();
    let mut ok = true;
    for (i, &k) in cfg.k.iter().enumerate() {
        let (c1, c2) = pair_at(cfg, grid, k)?;
        let clean = Problem::new(c1, c2)?.dtn_gap(&basis, m)?;
        let identical = clean.entries.iter().all(|v| *v == 0.0);
        let gap = perturb_gap(&clean, Noise { sigma: cfg.sigma, seed: cfg.seed.wrapping_add(1000 * i as u64) });
        io::write_dtn(dir.join(format!("dtn_gap_{}.bin", k_tag(k))), &grid, &gap)?;
        let proxy = if identical { None } else { gap_proxy(&gap, cfg.delta)? };
        ok &= proxy.is_some();
        rows.push(json!({
            "k": k,
            "status": if identical { "identical_data" } else { "ok" },
            "norm_star": operator_norm_star(&gap),
            "A": proxy.map(|p| p.a),
            "minus_log_A": proxy.map(|p| p.minus_log_a),
            "log_regime": proxy.map(|p| p.log_regime),
        }));
    }
    let mut man = manifest(cfg, "dtn");
    man["gaps"] = json!(rows);
    write_json(&dir.join("dtn.json"), &man)?;
    Ok(ok)
}

fn mode_tau(cfg: &RunConfig, k: f64) -> f64 {
    cfg.mode.tau.unwrap_or_else(|| (cfg.tau_factor * min_tau_for_k(k, cfg.c_star)).max(cfg.mode.r / 2.0))
}

/// CGO solutions of both potentials at the configured mode and first `k`.
pub fn cmd_cgo(cfg: &RunConfig) -> Result<bool> {
    let grid = cfg.validate()?;
    let dir = out_dir(cfg)?;
    let k = cfg.k[0];
    let (c1, c2) = pair_at(cfg, grid, k)?;
    let tau = mode_tau(cfg, k);
    let zp = make_zeta_pair(grid.dim(), cfg.mode.r, &cfg.mode.eta, tau, cfg.seed)?;
    let (z1, z2) = lattice_null_pair(&zp, grid.h())?;
    let opts = RemainderOptions::default();
    let mut metas = Vec::new();
    for (tag, c, z) in [("1", &c1, z1), ("2", &c2, z2)] {
        let sol = solve_remainder(&liouville_Q(c), &z, &opts).with_context(|| format!("remainder for set {tag}"))?;
        metas.push(io::write_cgo(&dir, &format!("cgo_{tag}"), &sol, tau, cfg.mode.r)?);
    }
    let mut man = manifest(cfg, "cgo");
    man["zeta_pair"] = json!(zp);
    man["solutions"] = json!(metas);
    write_json(&dir.join("cgo.json"), &man)?;
    Ok(true)
}

/// Recovery of `Q₂ − Q₁` at the first `k`.
pub fn cmd_recover(cfg: &RunConfig) -> Result<bool> {
    let grid = cfg.validate()?;
    let dir = out_dir(cfg)?;
    let basis = basis_for(cfg, &grid)?;
    let k = cfg.k[0];
    let (c1, c2) = pair_at(cfg, grid, k)?;
    let problem = Problem::new(c1, c2)?;
    let gap = perturb_gap(&problem.dtn_gap(&basis, m_for(cfg, &basis))?, Noise { sigma: cfg.sigma, seed: cfg.seed });
    let sweep = cfg.sweep_config(grid);
    let opts = QRecoveryOptions {
        t_cut: sweep.t_cut(k),
        mode_budget: cfg.mode_budget,
        s: cfg.s,
        schedule: sweep.schedule(),
        mode: ModeOptions { remainder: RemainderOptions::default(), seed: cfg.seed },
    };
    let rec = recover_q_diff(&problem, &basis, &gap, &opts)?;
    io::write_real(dir.join("dq_recovered.dotf"), &rec.field)?;
    io::write_real(dir.join("dq_true.dotf"), &problem.q_diff())?;
    let mut w = csv::Writer::from_path(dir.join("modes.csv"))?;
    w.write_record(["r", "eta_x", "eta_y", "eta_z", "tau", "est_re", "est_im", "true_re", "true_im", "rem_1", "rem_2", "rem_3", "off_lattice"])?;
    for m in &rec.estimates {
        w.write_record(
            [m.r, m.eta[0], m.eta[1], m.eta[2], m.tau, m.fhat_est.re, m.fhat_est.im, m.fhat_true.re, m.fhat_true.im]
                .iter()
                .chain(&m.remainder_terms)
                .map(|v| v.to_string())
                .chain([m.off_lattice.to_string()]),
        )?;
    }
    w.flush()?;
    let (gamma_est, gamma_oracle) = gamma_inverse_diff(&problem, &rec.field, cfg.s);
    let mut man = manifest(cfg, "recover");
    man["result"] = json!({
        "k": k,
        "t_cut": opts.t_cut,
        "error_hs": rec.error_hs,
        "field_error_hs": rec.field_error_hs,
        "modes_ok": rec.modes_ok(),
        "modes_failed": rec.modes_failed(),
        "projection_loss_count": rec.projection_loss_count,
        "contraction_failure_count": rec.contraction_failure_count,
        "gamma_inverse_diff_estimate": gamma_est,
        "gamma_inverse_diff_oracle": gamma_oracle,
        "failures": rec.failures.iter().map(|(r, eta, e)| json!({"r": r, "eta": eta, "error": e})).collect::<Vec<_>>(),
    });
    write_json(&dir.join("recover.json"), &man)?;
    Ok(rec.modes_failed() == 0)
}

fn csv_number(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:e}")
    }
}

/// Write `sweep.csv` with the fixed column order.
pub fn write_sweep_csv(path: &Path, records: &[StabilityRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SWEEP_COLUMNS)?;
    for r in records {
        w.write_record([
            csv_number(r.k),
            csv_number(r.a),
            csv_number(r.minus_log_a),
            csv_number(r.recovery_error_hs),
            csv_number(r.envelope_value),
            csv_number(r.t_cut),
            r.modes_ok.to_string(),
            r.modes_failed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Frequency sweep: `sweep.csv` plus `manifest.json`.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<bool> {
    let grid = cfg.validate()?;
    let dir = out_dir(cfg)?;
    let basis = basis_for(cfg, &grid)?;
    let res = run_sweep(&cfg.sweep_config(grid), &basis)?;
    write_sweep_csv(&dir.join("sweep.csv"), &res.records)?;
    let mut man = manifest(cfg, "sweep");
    man["envelope_c"] = json!(res.envelope_c);
    man["strictly_decreasing"] = json!(res.strictly_decreasing());
    man["envelope_bounds_all"] = json!(res.envelope_bounds_all());
    man["rows"] = json!(res.records);
    write_json(&dir.join("manifest.json"), &man)?;
    Ok(res.all_ok())
}

/// Oracle and invariant suite on the check grid.
pub fn cmd_check(cfg: &RunConfig) -> Result<bool> {
    let grid = cfg.check_grid.grid().context("check_grid")?;
    let dir = out_dir(cfg)?;
    let report = run_checks(cfg, grid);
    write_json(&dir.join("check_report.json"), &report)?;
    for c in &report.checks {
        println!("{:<22} {}  value={:.3e} tol={:.1e}  {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.value, c.tolerance, c.detail);
    }
    Ok(report.passed)
}

/// Envelope values on the `k × A` grid with `C = envelope_c`.
pub fn cmd_bound(cfg: &RunConfig) -> Result<bool> {
    let grid = cfg.validate()?;
    let dir = out_dir(cfg)?;
    let p = EnvelopeParams { c: cfg.envelope_c, alpha: cfg.alpha, delta: cfg.delta, s: cfg.s, epsilon: cfg.epsilon };
    let mut w = csv::Writer::from_path(dir.join("bound.csv"))?;
    w.write_record(["k", "A", "E1", "E2"])?;
    let mut ok = true;
    for &k in &cfg.k {
        for &a in &cfg.a_values {
            let (e1, e2) = match envelope(&p, grid.dim(), k, a) {
                Ok(v) => v,
                Err(e) => {
                    eprintln!("k = {k}, A = {a}: {e}");
                    ok = false;
                    (f64::NAN, f64::NAN)
                }
            };
            w.write_record([csv_number(k), csv_number(a), csv_number(e1), csv_number(e2)])?;
        }
    }
    w.flush()?;
    Ok(ok)
}
