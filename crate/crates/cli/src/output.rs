//! CSV writers. Floats use Rust's shortest round-trip formatting, so equal values give
//! equal bytes.

use std::fs::File;
use std::path::Path;

use islsim_core::Flow;

use crate::experiments::{ConvergenceStudy, MfgOutputs, RunOutcome, ScalingStudy, VariantSummary};
use crate::verify::SuiteReport;
use crate::ExperimentError;

type Csv = csv::Writer<File>;

fn open(path: &Path, header: &[&str]) -> Result<Csv, ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    Ok(w)
}

fn f(v: f64) -> String {
    format!("{v}")
}

pub fn write_metrics(path: &Path, runs: &[RunOutcome]) -> Result<(), ExperimentError> {
    let mut w = open(path, &["run_seed", "variant", "theta", "esr", "fvr", "ee_bits_per_J"])?;
    for r in runs {
        w.write_record([r.run_seed.to_string(), r.variant.label().to_string(), f(r.theta), f(r.esr), f(r.fvr), f(r.ee)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_battery(path: &Path, run: &RunOutcome) -> Result<(), ExperimentError> {
    let tr = &run.episode.trace;
    let mut w = open(path, &["satellite", "slot", "charge_J", "phi", "depleted"])?;
    for t in 0..tr.num_slots {
        for m in 0..tr.num_satellites {
            let i = t * tr.num_satellites + m;
            w.write_record([
                m.to_string(),
                t.to_string(),
                f(tr.charge[i]),
                u8::from(tr.illuminated[i]).to_string(),
                u8::from(tr.is_depleted(m, t)).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per directed link per slot; `power_W` is the link's transmit power.
pub fn write_solution(path: &Path, run: &RunOutcome) -> Result<(), ExperimentError> {
    let mut w = open(path, &["satellite", "slot", "neighbor", "rate_bps", "power_W"])?;
    for (t, s) in run.episode.slots.iter().enumerate() {
        for e in 0..s.from.len() {
            w.write_record([s.from[e].to_string(), t.to_string(), s.to[e].to_string(), f(s.rates[e]), f(s.edge_power[e])])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_flows(path: &Path, flows: &[Flow]) -> Result<(), ExperimentError> {
    let mut w = open(path, &["flow_id", "src", "dst", "demand_bps"])?;
    for fl in flows {
        w.write_record([fl.id.to_string(), fl.source.to_string(), fl.sink.to_string(), f(fl.demand)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep(path: &Path, rows: &[VariantSummary]) -> Result<(), ExperimentError> {
    let mut w = open(path, &["theta", "variant", "esr_mean", "esr_sem"])?;
    for r in rows {
        w.write_record([f(r.theta), r.variant.label().to_string(), f(r.esr.mean), f(r.esr.sem)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ablation(path: &Path, rows: &[VariantSummary]) -> Result<(), ExperimentError> {
    let mut w = open(
        path,
        &["variant", "esr_mean", "esr_sem", "fvr_mean", "fvr_sem", "ee_mean", "ee_sem", "min_charge_J", "converged_slots", "slots"],
    )?;
    for r in rows {
        w.write_record([
            r.variant.label().to_string(),
            f(r.esr.mean),
            f(r.esr.sem),
            f(r.fvr.mean),
            f(r.fvr.sem),
            f(r.ee.mean),
            f(r.ee.sem),
            f(r.min_charge),
            r.converged_slots.to_string(),
            r.total_slots.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_convergence(path: &Path, study: &ConvergenceStudy) -> Result<(), ExperimentError> {
    let mut w = open(path, &["slot", "k", "residual"])?;
    for (k, r) in study.residual.iter().enumerate() {
        w.write_record([study.slot.to_string(), k.to_string(), f(*r)])?;
    }
    w.flush()?;
    Ok(())
}

/// Work counts only; wall times vary between runs and go to the manifest.
pub fn write_scaling(path: &Path, study: &ScalingStudy) -> Result<(), ExperimentError> {
    let mut w = open(path, &["M", "edges", "flows", "slots", "iterations"])?;
    for p in &study.points {
        w.write_record([
            p.satellites.to_string(),
            p.edges.to_string(),
            p.flows.to_string(),
            p.slots.to_string(),
            p.iterations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_gap(path: &Path, out: &MfgOutputs) -> Result<(), ExperimentError> {
    let mut w = open(path, &["M", "gap"])?;
    for (m, g) in out.gap.sizes.iter().zip(&out.gap.gaps) {
        w.write_record([m.to_string(), f(*g)])?;
    }
    w.write_record(["slope".to_string(), f(out.gap.slope)])?;
    w.flush()?;
    Ok(())
}

/// Density and policy at slot boundaries (every sub-step would repeat each slot many times).
pub fn write_mfg_fields(density: &Path, policy: &Path, out: &MfgOutputs, slots: usize) -> Result<(), ExperimentError> {
    let model = &out.model;
    let per_slot = (model.steps() / slots.max(1)).max(1);
    let centers = model.grid.centers();
    let mut d = open(density, &["t", "c_J", "mu"])?;
    for (k, mu) in out.mfe.density.iter().enumerate().step_by(per_slot) {
        let t = f(k as f64 * model.dt);
        for (c, v) in centers.iter().zip(mu) {
            d.write_record([t.clone(), f(*c), f(*v)])?;
        }
    }
    d.flush()?;
    let mut p = open(policy, &["t", "c_J", "rate_bps"])?;
    for (k, row) in out.mfe.value.policy.iter().enumerate().step_by(per_slot) {
        let t = f(k as f64 * model.dt);
        for (c, v) in centers.iter().zip(row) {
            p.write_record([t.clone(), f(*c), f(*v)])?;
        }
    }
    p.flush()?;
    Ok(())
}

pub fn write_verify_report(path: &Path, reports: &[SuiteReport]) -> Result<(), ExperimentError> {
    let mut text = String::new();
    for r in reports {
        text.push_str(&r.line());
        text.push('\n');
    }
    let passed = reports.iter().filter(|r| r.passed).count();
    text.push_str(&format!("{passed}/{} suites passed\n", reports.len()));
    std::fs::write(path, text)?;
    Ok(())
}
