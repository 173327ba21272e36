//! Argument parsing and subcommand dispatch.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use islsim_core::solvers::Variant;
use islsim_core::Scenario;

use crate::experiments::{self, VariantSummary};
use crate::manifest::RunManifest;
use crate::output;
use crate::verify;
use crate::ExperimentError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NONCONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "islsim", version, about = "Battery-aware ISL power and rate allocation experiments")]
pub struct Cli {
    /// Scenario file (`key = value` lines); defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "results")]
    pub out: PathBuf,
    /// Number of runs per configuration.
    #[arg(long, global = true)]
    pub seeds: Option<usize>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Exit with 3 when any solve stops at its iteration limit.
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Episodes of one variant: metrics.csv plus per-run battery, solution and flow tables.
    Run {
        /// v0, v1, v2 or v3; defaults to `solver.variant`.
        #[arg(long)]
        variant: Option<String>,
    },
    /// ESR of each variant across eclipse fractions.
    SweepTheta {
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.38,0.5,0.6")]
        thetas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "v0,v3")]
        variants: Vec<String>,
    },
    /// Normalized residual of one slot's solve.
    Converge {
        #[arg(long, default_value_t = 0)]
        slot: usize,
        /// Run index whose traffic and ephemeris are used.
        #[arg(long, default_value_t = 0)]
        run: usize,
        #[arg(long, default_value_t = 200)]
        iterations: usize,
        /// Length of the run whose last iterate is the reference.
        #[arg(long, default_value_t = 3000)]
        reference: usize,
    },
    /// Per-slot wall time against constellation size.
    Scale {
        #[arg(long, value_delimiter = ',', default_value = "16,32,64,128")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        slots: usize,
    },
    /// Mean-field equilibrium and the finite-population gap.
    MfgGap {
        #[arg(long, value_delimiter = ',', default_value = "32,64,128,256")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
    },
    /// All four variants on the same runs.
    Ablate,
    /// Potential, gradient, concavity, W1 and FPK self-checks.
    Verify,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Run { .. } => "run",
            Command::SweepTheta { .. } => "sweep-theta",
            Command::Converge { .. } => "converge",
            Command::Scale { .. } => "scale",
            Command::MfgGap { .. } => "mfg-gap",
            Command::Ablate => "ablate",
            Command::Verify => "verify",
        }
    }

    fn default_seeds(&self) -> usize {
        match self {
            Command::SweepTheta { .. } => 3,
            Command::Ablate => 5,
            _ => 1,
        }
    }
}

/// What a command produced beyond its files.
struct Outcome {
    checks_passed: bool,
    all_converged: bool,
    lines: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { checks_passed: true, all_converged: true, lines: Vec::new() }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.checks_passed &= ok;
        self.lines.push(format!("{} {line}", if ok { "PASS" } else { "FAIL" }));
    }
}

pub fn load_scenario(path: Option<&Path>) -> Result<Scenario, ExperimentError> {
    let mut scn = match path {
        Some(p) => Scenario::load(p)?,
        None => Scenario::default(),
    };
    scn.apply_env()?;
    scn.validate()?;
    Ok(scn)
}

pub fn parse_variant(s: &str) -> Result<Variant, ExperimentError> {
    Variant::parse(s).ok_or_else(|| ExperimentError::Usage(format!("unknown variant {s:?}")))
}

/// Parses `args` (including the program name) and runs the command; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let arguments = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, arguments) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_CHECK
            }
        }
    }
}

/// Runs a parsed command; `arguments` are recorded in the manifest.
pub fn execute(cli: &Cli, arguments: Vec<String>) -> Result<i32, ExperimentError> {
    let scn = load_scenario(cli.config.as_deref())?;
    let seeds = cli.seeds.unwrap_or_else(|| cli.command.default_seeds());
    if seeds == 0 {
        return Err(ExperimentError::Usage("--seeds must be at least 1".into()));
    }
    let threads = cli.threads.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| ExperimentError::Usage(format!("thread pool: {e}")))?;

    check_arguments(&cli.command)?;
    std::fs::create_dir_all(&cli.out)?;
    let mut manifest = RunManifest::new(
        cli.command.name(),
        arguments,
        scn.content_hash(),
        (0..seeds).map(|i| scn.run_seed(i)).collect(),
        &cli.out,
    );
    manifest.write()?;

    let start = Instant::now();
    let mut files = Vec::new();
    let result = pool.install(|| dispatch(&cli.command, &scn, seeds, &cli.out, &mut files, &mut manifest));
    manifest.timings.insert("total_s".into(), start.elapsed().as_secs_f64());
    manifest.files = files;
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            manifest.status = "error".into();
            manifest.write()?;
            return Err(e);
        }
    };
    for line in &outcome.lines {
        println!("{line}");
    }
    let code = if !outcome.checks_passed {
        EXIT_CHECK
    } else if cli.strict && !outcome.all_converged {
        EXIT_NONCONVERGED
    } else {
        EXIT_OK
    };
    manifest.status = match code {
        EXIT_OK => "ok",
        EXIT_NONCONVERGED => "non-converged",
        _ => "check-failed",
    }
    .into();
    manifest.write()?;
    Ok(code)
}

/// Rejects bad subcommand arguments before anything is written.
fn check_arguments(command: &Command) -> Result<(), ExperimentError> {
    match command {
        Command::Run { variant: Some(v) } => parse_variant(v).map(|_| ()),
        Command::SweepTheta { thetas, variants } => {
            variants_of(variants)?;
            match thetas.iter().find(|t| !(0.0..=1.0).contains(*t)) {
                Some(t) => Err(ExperimentError::Usage(format!("theta {t} outside [0, 1]"))),
                None => Ok(()),
            }
        }
        _ => Ok(()),
    }
}

fn variants_of(names: &[String]) -> Result<Vec<Variant>, ExperimentError> {
    names.iter().map(|s| parse_variant(s)).collect()
}

fn summary_line(r: &VariantSummary) -> String {
    format!(
        "theta {} {}: esr {:.4} ± {:.4}, fvr {:.4} ± {:.4}, min charge {:.0} J, {}/{} slots converged",
        r.theta,
        r.variant,
        r.esr.mean,
        r.esr.sem,
        r.fvr.mean,
        r.fvr.sem,
        r.min_charge,
        r.converged_slots,
        r.total_slots
    )
}

fn dispatch(
    command: &Command,
    scn: &Scenario,
    seeds: usize,
    out: &Path,
    files: &mut Vec<String>,
    manifest: &mut RunManifest,
) -> Result<Outcome, ExperimentError> {
    let mut o = Outcome::new();
    let mut file = |name: &str| {
        files.push(name.to_string());
        out.join(name)
    };
    match command {
        Command::Run { variant } => {
            let v = match variant {
                Some(s) => parse_variant(s)?,
                None => scn.variant,
            };
            let runs = experiments::run_seeds(scn, v, seeds)?;
            output::write_metrics(&file("metrics.csv"), &runs)?;
            for r in &runs {
                let dir = format!("run_{:03}", r.index);
                std::fs::create_dir_all(out.join(&dir))?;
                output::write_battery(&file(&format!("{dir}/battery.csv")), r)?;
                output::write_solution(&file(&format!("{dir}/solution.csv")), r)?;
                output::write_flows(&file(&format!("{dir}/flows.csv")), &r.flows)?;
                manifest.timings.insert(format!("run_{:03}_s", r.index), r.seconds);
                o.all_converged &= r.episode.all_converged();
                o.lines.push(format!("run {} ({}): esr {:.4} fvr {:.4} ee {:.4e} bits/J", r.index, r.variant, r.esr, r.fvr, r.ee));
            }
        }
        Command::SweepTheta { thetas, variants } => {
            let rows = experiments::sweep_theta(scn, thetas, &variants_of(variants)?, seeds)?;
            output::write_sweep(&file("sweep_theta.csv"), &rows)?;
            for r in &rows {
                o.all_converged &= r.converged_slots == r.total_slots;
                o.lines.push(summary_line(r));
            }
        }
        Command::Converge { slot, run, iterations, reference } => {
            let study = experiments::convergence_study(scn, *run, *slot, *iterations, *reference)?;
            output::write_convergence(&file("convergence.csv"), &study)?;
            o.check(
                (-0.7..=-0.3).contains(&study.slope),
                format!("slope of smoothed residual over k in [10, {iterations}] = {:.4} in [-0.7, -0.3]", study.slope),
            );
            o.check(study.final_ratio <= 0.3, format!("residual at k = {iterations}: {:.4} <= 0.3", study.final_ratio));
        }
        Command::Scale { sizes, slots } => {
            let study = experiments::scaling_study(scn, sizes, *slots)?;
            output::write_scaling(&file("scaling.csv"), &study)?;
            for p in &study.points {
                manifest.timings.insert(format!("M{:04}_seconds_per_slot", p.satellites), p.seconds_per_slot);
                o.lines.push(format!("M = {}: {:.4} s per slot, {} iterations", p.satellites, p.seconds_per_slot, p.iterations));
            }
            o.check(study.r2 >= 0.9, format!("linear fit of per-slot time on M: R² = {:.4} >= 0.9", study.r2));
        }
        Command::MfgGap { sizes, repetitions } => {
            let res = experiments::mfg_study(scn, sizes, *repetitions)?;
            output::write_gap(&file("gap_study.csv"), &res)?;
            output::write_mfg_fields(&file("mfg_density.csv"), &file("mfg_policy.csv"), &res, scn.num_slots)?;
            o.all_converged &= res.mfe.converged && res.gap.converged.iter().all(|c| *c);
            let gaps = &res.gap.gaps;
            let down = gaps.windows(2).filter(|w| w[1] <= w[0]).count();
            let pairs = gaps.len().saturating_sub(1);
            o.lines.push(format!("MFE: {} Picard iterations, converged {}", res.mfe.iterations, res.mfe.converged));
            for (m, g) in sizes.iter().zip(gaps) {
                o.lines.push(format!("M = {m}: gap {g:.4e}"));
            }
            o.check(gaps.iter().all(|g| *g > 0.0), "all gaps positive".into());
            o.check(3 * down >= 2 * pairs, format!("gap nonincreasing in {down} of {pairs} adjacent pairs"));
            o.check(
                (-0.45..=-0.05).contains(&res.gap.slope),
                format!("log-log slope {:.4} in [-0.45, -0.05]", res.gap.slope),
            );
        }
        Command::Ablate => {
            let rows = experiments::ablate(scn, seeds)?;
            output::write_ablation(&file("ablation.csv"), &rows)?;
            for r in &rows {
                o.all_converged &= r.converged_slots == r.total_slots;
                o.lines.push(summary_line(r));
            }
            let (v1, v2, v3) = (&rows[1], &rows[2], &rows[3]);
            o.check(v3.esr.mean >= v1.esr.mean, format!("ESR(V3) {:.4} >= ESR(V1) {:.4}", v3.esr.mean, v1.esr.mean));
            o.check(v3.fvr.mean <= v2.fvr.mean, format!("FVR(V3) {:.4} <= FVR(V2) {:.4}", v3.fvr.mean, v2.fvr.mean));
        }
        Command::Verify => {
            let reports = verify::run_all(scn, scn.seed)?;
            output::write_verify_report(&file("verify_report.txt"), &reports)?;
            for r in &reports {
                manifest.timings.insert(format!("{}_s", r.name), r.seconds);
                o.check(r.passed, format!("{}: {}", r.name, r.detail));
            }
        }
    }
    Ok(o)
}
