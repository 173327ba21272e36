//! The experiments behind each subcommand, returning plain data so tests can drive them.

use std::time::Instant;

use islsim_core::metrics::{energy_efficiency, esr, fvr, linear_fit, loglog_slope, mean_delivered, moving_average, residual_series, summarize};
use islsim_core::mfg::{gap_study, solve_mfe, uniform_density, GapConfig, GapStudy, MfeSolution, MfgModel};
use islsim_core::scenario::{derive_seed, Stream};
use islsim_core::solvers::{hbag_slot, slot_game, Variant};
use islsim_core::traffic::FlowAllocation;
use islsim_core::{EpisodeResult, Flow, Scenario};
use rayon::prelude::*;

use crate::ExperimentError;

/// Bootstrap resamples used for every summary.
pub const BOOTSTRAP_SAMPLES: usize = 1000;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub index: usize,
    pub run_seed: u64,
    pub variant: Variant,
    pub theta: f64,
    pub flows: Vec<Flow>,
    pub episode: EpisodeResult,
    pub esr: f64,
    pub fvr: f64,
    /// Delivered bits per ISL joule; NaN when no ISL energy was spent.
    pub ee: f64,
    pub seconds: f64,
}

impl RunOutcome {
    pub fn min_charge(&self) -> f64 {
        self.episode.trace.charge.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn run_one(scn: &Scenario, variant: Variant, index: usize) -> Result<RunOutcome, ExperimentError> {
    let start = Instant::now();
    let run_seed = scn.run_seed(index);
    let inputs = scn.assemble(run_seed)?;
    let mut config = scn.solver_config();
    config.variant = variant;
    let episode = inputs.run(&config)?;
    let delivered: Vec<Vec<f64>> = episode.slots.iter().map(|s| s.delivered.clone()).collect();
    let mean = mean_delivered(&delivered, inputs.flows.len())?;
    let throughput: Vec<f64> = episode.slots.iter().map(|s| s.delivered.iter().sum()).collect();
    let power: Vec<f64> = episode.slots.iter().map(|s| s.satellite_power.iter().sum()).collect();
    Ok(RunOutcome {
        index,
        run_seed,
        variant,
        theta: scn.eclipse_fraction,
        esr: esr(&episode.trace)?,
        fvr: fvr(&inputs.flows, &mean)?,
        ee: energy_efficiency(&throughput, &power, inputs.slot_duration).unwrap_or(f64::NAN),
        flows: inputs.flows,
        episode,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs `0..seeds` concurrently on the current rayon pool; results stay in seed order.
pub fn run_seeds(scn: &Scenario, variant: Variant, seeds: usize) -> Result<Vec<RunOutcome>, ExperimentError> {
    (0..seeds).into_par_iter().map(|i| run_one(scn, variant, i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    /// Zero with a single run.
    pub sem: f64,
}

pub fn stat(values: &[f64], seed: u64) -> Result<Stat, ExperimentError> {
    match values.len() {
        0 => Err(ExperimentError::Check("no runs to summarize")),
        1 => Ok(Stat { mean: values[0], sem: 0.0 }),
        _ => {
            let s = summarize(values, BOOTSTRAP_SAMPLES, seed)?;
            Ok(Stat { mean: s.mean, sem: s.sem })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantSummary {
    pub variant: Variant,
    pub theta: f64,
    pub esr: Stat,
    pub fvr: Stat,
    pub ee: Stat,
    pub min_charge: f64,
    pub converged_slots: usize,
    pub total_slots: usize,
}

pub fn summarize_runs(runs: &[RunOutcome], seed: u64) -> Result<VariantSummary, ExperimentError> {
    let first = runs.first().ok_or(ExperimentError::Check("no runs to summarize"))?;
    let pick = |f: fn(&RunOutcome) -> f64| runs.iter().map(f).filter(|v| v.is_finite()).collect::<Vec<_>>();
    let ee = pick(|r| r.ee);
    Ok(VariantSummary {
        variant: first.variant,
        theta: first.theta,
        esr: stat(&pick(|r| r.esr), seed)?,
        fvr: stat(&pick(|r| r.fvr), seed)?,
        ee: if ee.is_empty() { Stat { mean: f64::NAN, sem: f64::NAN } } else { stat(&ee, seed)? },
        min_charge: runs.iter().map(RunOutcome::min_charge).fold(f64::INFINITY, f64::min),
        converged_slots: runs.iter().map(|r| r.episode.slots.iter().filter(|s| s.converged).count()).sum(),
        total_slots: runs.iter().map(|r| r.episode.slots.len()).sum(),
    })
}

/// One summary per (θ, variant), θ-major.
pub fn sweep_theta(
    scn: &Scenario,
    thetas: &[f64],
    variants: &[Variant],
    seeds: usize,
) -> Result<Vec<VariantSummary>, ExperimentError> {
    let mut rows = Vec::with_capacity(thetas.len() * variants.len());
    for &theta in thetas {
        let mut s = scn.clone();
        s.eclipse_fraction = theta;
        s.validate()?;
        for &v in variants {
            rows.push(summarize_runs(&run_seeds(&s, v, seeds)?, derive_seed(scn.seed, Stream::Bootstrap, 0))?);
        }
    }
    Ok(rows)
}

pub fn ablate(scn: &Scenario, seeds: usize) -> Result<Vec<VariantSummary>, ExperimentError> {
    [Variant::V0, Variant::V1, Variant::V2, Variant::V3]
        .into_iter()
        .map(|v| summarize_runs(&run_seeds(scn, v, seeds)?, derive_seed(scn.seed, Stream::Bootstrap, 0)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub slot: usize,
    /// `r^{(k)}` for `k = 0..=horizon`.
    pub residual: Vec<f64>,
    pub smoothed: Vec<f64>,
    /// Log–log slope of the smoothed residual over `k ∈ [10, horizon]`.
    pub slope: f64,
    pub final_ratio: f64,
}

/// Residual of HBAG iterates on one slot against the final iterate of a `reference`-step run,
/// started from zero rates with the run's initial batteries.
pub fn convergence_study(
    scn: &Scenario,
    run_index: usize,
    slot: usize,
    horizon: usize,
    reference: usize,
) -> Result<ConvergenceStudy, ExperimentError> {
    if horizon < 11 || reference <= horizon || slot >= scn.num_slots {
        return Err(ExperimentError::Check("need slot < num_slots and 10 < horizon < reference"));
    }
    let inputs = scn.assemble(scn.run_seed(run_index))?;
    let setup = inputs.setup();
    let (game, _) = slot_game(&setup, scn.variant, slot, &inputs.initial_charge)?;
    let mut config = scn.solver_config();
    config.max_iterations = reference;
    config.tolerance = f64::MIN_POSITIVE;
    let init = FlowAllocation::zeros(game.flows.len(), game.links.num_edges());
    let sol = hbag_slot(&game, &init, &config, true)?;
    let last = sol.iterates.last().ok_or(ExperimentError::Check("no iterates recorded"))?;
    let residual = residual_series(&sol.iterates[..=horizon.min(sol.iterates.len() - 1)], last)?;
    let smoothed = moving_average(&residual, 5);
    let ks: Vec<f64> = (10..smoothed.len()).map(|k| k as f64).collect();
    let slope = loglog_slope(&ks, &smoothed[10..]).unwrap_or(f64::NAN);
    let final_ratio = *residual.last().unwrap_or(&f64::NAN);
    Ok(ConvergenceStudy { slot, residual, smoothed, slope, final_ratio })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalePoint {
    pub satellites: usize,
    pub edges: usize,
    pub flows: usize,
    pub slots: usize,
    pub iterations: usize,
    pub seconds_per_slot: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingStudy {
    pub points: Vec<ScalePoint>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Per-slot wall time of V3 episodes on `slots` slots as the constellation grows.
pub fn scaling_study(scn: &Scenario, sizes: &[usize], slots: usize) -> Result<ScalingStudy, ExperimentError> {
    let mut points = Vec::with_capacity(sizes.len());
    for &m in sizes {
        let mut s = scn.clone();
        s.num_satellites = m;
        s.num_slots = slots;
        s.validate()?;
        let inputs = s.assemble(s.run_seed(0))?;
        let mut config = s.solver_config();
        config.variant = Variant::V3;
        let start = Instant::now();
        let ep = inputs.run(&config)?;
        let secs = start.elapsed().as_secs_f64();
        points.push(ScalePoint {
            satellites: m,
            edges: ep.slots.iter().map(|r| r.from.len()).max().unwrap_or(0),
            flows: inputs.flows.len(),
            slots,
            iterations: ep.slots.iter().map(|r| r.iterations).sum(),
            seconds_per_slot: secs / slots as f64,
        });
    }
    let pts: Vec<(f64, f64)> = points.iter().map(|p| (p.satellites as f64, p.seconds_per_slot)).collect();
    let (slope, intercept, r2) = linear_fit(&pts).unwrap_or((f64::NAN, f64::NAN, f64::NAN));
    Ok(ScalingStudy { points, slope, intercept, r2 })
}

#[derive(Debug, Clone)]
pub struct MfgOutputs {
    pub model: MfgModel<f64>,
    pub mfe: MfeSolution<f64>,
    pub gap: GapStudy<f64>,
}

/// Initial population: uniform over the middle half of `[C_min, C_max]`.
pub fn mfg_initial_range(scn: &Scenario) -> (f64, f64) {
    let span = scn.capacity_j - scn.floor_j;
    (scn.floor_j + 0.25 * span, scn.floor_j + 0.75 * span)
}

pub fn mfg_study(scn: &Scenario, sizes: &[usize], repetitions: usize) -> Result<MfgOutputs, ExperimentError> {
    let eph = scn.ephemeris(scn.run_seed(0))?;
    let model = MfgModel::from_scenario(scn, &eph, 0)?;
    let nu = model.default_viscosity(scn.viscosity_scale);
    let (low, high) = mfg_initial_range(scn);
    let mfe = solve_mfe(&model, &uniform_density(&model.grid, low, high), nu, scn.picard_max, scn.picard_tol)?;
    let cfg = GapConfig {
        initial_low: low,
        initial_high: high,
        viscosity: nu,
        max_picard: scn.picard_max,
        tol: scn.picard_tol,
        repetitions,
        seed: derive_seed(scn.seed, Stream::Charges, 0),
    };
    let gap = gap_study(&model, sizes, &cfg)?;
    Ok(MfgOutputs { model, mfe, gap })
}
