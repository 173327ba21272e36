//! Scenario configuration: flat `section.key = value` text, defaults, validation,
//! environment overrides, content hashing and seed derivation.
//!
//! Seed scheme: run `i` of a command uses `derive_seed(master, Stream::Run, i)`; everything
//! random inside that run derives from the run seed with its own [`Stream`] tag, so adding a
//! consumer never shifts the others.

use sha2::{Digest, Sha256};

use crate::constellation::{propagate, ConstellationConfig, ConstellationError, Ephemeris};
use crate::energy::EnergyParams;
use crate::game::GameParams;
use crate::link::{db_to_linear, max_rate_under_bound, offset_for_snr, wavelength_to_frequency, LinkParams, BOLTZMANN, SPEED_OF_LIGHT};
use crate::solvers::{run_episode, EpisodeResult, EpisodeSetup, SolverConfig, SolverError, Variant};
use crate::traffic::{generate_weighted_flows, Flow, TrafficError};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Constellation(#[from] ConstellationError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// A config value that renders back to the text it was parsed from.
trait ConfigValue: Sized {
    fn parse(raw: &str) -> Result<Self, String>;
    fn render(&self) -> String;
}

impl ConfigValue for f64 {
    fn parse(raw: &str) -> Result<Self, String> {
        raw.parse::<f64>().map_err(|_| format!("expected a number, got `{raw}`")).and_then(|v| {
            if v.is_finite() { Ok(v) } else { Err(format!("expected a finite number, got `{raw}`")) }
        })
    }
    fn render(&self) -> String {
        format!("{self}")
    }
}

impl ConfigValue for usize {
    fn parse(raw: &str) -> Result<Self, String> {
        raw.parse().map_err(|_| format!("expected a nonnegative integer, got `{raw}`"))
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for u64 {
    fn parse(raw: &str) -> Result<Self, String> {
        raw.parse().map_err(|_| format!("expected a nonnegative integer, got `{raw}`"))
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

/// `auto` (or `none`) selects the derived default.
impl ConfigValue for Option<f64> {
    fn parse(raw: &str) -> Result<Self, String> {
        match raw {
            "auto" | "none" => Ok(None),
            _ => f64::parse(raw).map(Some),
        }
    }
    fn render(&self) -> String {
        match self {
            None => "auto".into(),
            Some(v) => v.render(),
        }
    }
}

impl ConfigValue for Option<Vec<f64>> {
    fn parse(raw: &str) -> Result<Self, String> {
        if raw == "none" {
            return Ok(None);
        }
        raw.split(',').map(|s| f64::parse(s.trim())).collect::<Result<Vec<_>, _>>().map(Some)
    }
    fn render(&self) -> String {
        match self {
            None => "none".into(),
            Some(v) => v.iter().map(|x| x.render()).collect::<Vec<_>>().join(","),
        }
    }
}

impl ConfigValue for Variant {
    fn parse(raw: &str) -> Result<Self, String> {
        Variant::parse(raw).ok_or_else(|| format!("unknown variant `{raw}` (v0..v3)"))
    }
    fn render(&self) -> String {
        self.label().into()
    }
}

macro_rules! scenario {
    ($( $field:ident : $ty:ty = $default:expr => $key:literal, )*) => {
        /// Every tunable of a run, in config units (degrees, joules, watts, bits/s).
        #[derive(Debug, Clone, PartialEq)]
        pub struct Scenario {
            $(pub $field: $ty,)*
        }

        impl Default for Scenario {
            fn default() -> Self {
                Scenario { $($field: $default,)* }
            }
        }

        /// All recognized keys, in file order.
        pub const KEYS: &[&str] = &[$($key),*];

        impl Scenario {
            fn set(&mut self, key: &str, raw: &str) -> Option<Result<(), String>> {
                match key {
                    $($key => Some(<$ty as ConfigValue>::parse(raw).map(|v| self.$field = v)),)*
                    _ => None,
                }
            }

            fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$(($key, ConfigValue::render(&self.$field)),)*]
            }
        }
    };
}

scenario! {
    num_satellites: usize = 172 => "constellation.num_satellites",
    num_planes: usize = 4 => "constellation.num_planes",
    altitude_m: f64 = 550e3 => "constellation.altitude_m",
    inclination_deg: f64 = 53.0 => "constellation.inclination_deg",
    orbit_period_s: f64 = 5400.0 => "constellation.orbit_period_s",
    eclipse_fraction: f64 = 0.38 => "constellation.eclipse_fraction",
    slot_duration_s: f64 = 15.0 => "constellation.slot_duration_s",
    num_slots: usize = 360 => "constellation.num_slots",
    earth_radius_m: f64 = 6371e3 => "constellation.earth_radius_m",

    wavelength_m: f64 = 1.55e-6 => "link.wavelength_m",
    bandwidth_hz: f64 = 1e10 => "link.bandwidth_hz",
    tx_gain_dbi: f64 = 30.0 => "link.tx_gain_dbi",
    rx_gain_dbi: f64 = 30.0 => "link.rx_gain_dbi",
    noise_temperature_k: f64 = 290.0 => "link.noise_temperature_k",
    reference_distance_m: f64 = 1e6 => "link.reference_distance_m",
    reference_snr: f64 = 10.0 => "link.reference_snr",
    budget_offset: Option<f64> = None => "link.budget_offset",

    panel_efficiency: f64 = 0.30 => "energy.panel_efficiency",
    irradiance_w_m2: f64 = 1361.0 => "energy.irradiance_w_m2",
    panel_area_m2: f64 = 2.5 => "energy.panel_area_m2",
    capacity_j: f64 = 400e3 => "energy.capacity_j",
    floor_j: f64 = 40e3 => "energy.floor_j",
    initial_charge_j: f64 = 320e3 => "energy.initial_charge_j",
    base_load_w: f64 = 55.0 => "energy.base_load_w",
    max_power_w: f64 = 10.0 => "energy.max_power_w",

    energy_weight: Option<f64> = None => "game.energy_weight",
    penalty_weight: f64 = 0.2 => "game.penalty_weight",
    safety_margin: f64 = 0.2 => "game.safety_margin",
    rate_unit_bps: Option<f64> = None => "game.rate_unit_bps",
    energy_unit_j: Option<f64> = None => "game.energy_unit_j",

    num_flows: usize = 8 => "traffic.num_flows",
    intensity: f64 = 0.65 => "traffic.intensity",
    endpoint_weights: Option<Vec<f64>> = None => "traffic.endpoint_weights",

    rho: f64 = 1.0 => "solver.rho",
    step_c0: f64 = 0.1 => "solver.step_c0",
    inner_steps: usize = 10 => "solver.inner_steps",
    inner_step: f64 = 1.0 => "solver.inner_step",
    max_iterations: usize = 200 => "solver.max_iterations",
    tolerance: f64 = 1e-4 => "solver.tolerance",
    dual_cap: Option<f64> = None => "solver.dual_cap",
    variant: Variant = Variant::V3 => "solver.variant",

    grid_cells: usize = 200 => "mfg.grid_cells",
    coupling: f64 = 10.0 => "mfg.coupling",
    viscosity_scale: f64 = 1e-3 => "mfg.viscosity_scale",
    picard_max: usize = 60 => "mfg.picard_max",
    picard_tol: f64 = 1e-6 => "mfg.picard_tol",

    seed: u64 = 1 => "run.seed",
}

/// Environment variable that overrides `key`: `ISLSIM_` + the key uppercased.
/// The dotted form is canonical; [`env_var_alias`] is accepted too because shells cannot
/// export names containing dots.
pub fn env_var_name(key: &str) -> String {
    format!("ISLSIM_{}", key.to_ascii_uppercase())
}

/// `ISLSIM_` + key uppercased with dots replaced by underscores.
pub fn env_var_alias(key: &str) -> String {
    env_var_name(key).replace('.', "_")
}

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Run = 1,
    Traffic = 2,
    Epoch = 3,
    Bootstrap = 4,
    Init = 5,
    Charges = 6,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `splitmix(parent ⊕ splitmix(stream · 2³² + index))`.
pub fn derive_seed(parent: u64, stream: Stream, index: u64) -> u64 {
    splitmix(parent ^ splitmix(((stream as u64) << 32).wrapping_add(index)))
}

impl Scenario {
    /// Parse config text; blank lines and `#` comments are ignored, unknown keys rejected.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut s = Scenario::default();
        let mut problems = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ScenarioError::Parse { line: i + 1, msg: format!("expected `key = value`, got `{line}`") });
            };
            let (k, v) = (k.trim(), v.trim());
            match s.set(k, v) {
                None => problems.push(format!("line {}: unknown key `{k}`", i + 1)),
                Some(Err(e)) => problems.push(format!("line {}: {k}: {e}", i + 1)),
                Some(Ok(())) => {}
            }
        }
        if !problems.is_empty() {
            return Err(ScenarioError::Invalid(problems));
        }
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    /// Canonical text listing every key.
    pub fn save(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for (k, v) in self.entries() {
            let sec = k.split('.').next().unwrap_or("");
            if sec != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                out.push_str(&format!("# {sec}\n"));
                section = sec;
            }
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// SHA-256 of the canonical text, hex.
    pub fn content_hash(&self) -> String {
        Sha256::digest(self.save().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Apply `(name, value)` pairs whose name is an override variable for a known key.
    pub fn apply_overrides<I, K, V>(&mut self, vars: I) -> Result<Vec<&'static str>, ScenarioError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let names: Vec<(String, &'static str)> = KEYS
            .iter()
            .flat_map(|k| [(env_var_name(k), *k), (env_var_alias(k), *k)])
            .collect();
        let mut applied = Vec::new();
        let mut problems = Vec::new();
        for (name, value) in vars {
            if let Some((_, key)) = names.iter().find(|(n, _)| n == name.as_ref()) {
                match self.set(key, value.as_ref().trim()) {
                    Some(Err(e)) => problems.push(format!("{}: {e}", name.as_ref())),
                    _ => applied.push(*key),
                }
            }
        }
        if !problems.is_empty() {
            return Err(ScenarioError::Invalid(problems));
        }
        applied.sort_unstable();
        self.validate()?;
        Ok(applied)
    }

    pub fn apply_env(&mut self) -> Result<Vec<&'static str>, ScenarioError> {
        self.apply_overrides(std::env::vars())
    }

    /// Every violated invariant at once.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut v = Vec::new();
        let mut need = |ok: bool, msg: &str| {
            if !ok {
                v.push(msg.to_string());
            }
        };
        need(self.num_satellites >= 2, "constellation.num_satellites must be at least 2");
        need(self.num_planes >= 1, "constellation.num_planes must be at least 1");
        need(
            self.num_planes == 0 || self.num_satellites % self.num_planes.max(1) == 0,
            "constellation.num_satellites must be a multiple of constellation.num_planes",
        );
        need(self.altitude_m > 0.0, "constellation.altitude_m must be positive");
        need(self.orbit_period_s > 0.0, "constellation.orbit_period_s must be positive");
        need((0.0..=1.0).contains(&self.eclipse_fraction), "constellation.eclipse_fraction must lie in [0, 1]");
        need(self.slot_duration_s > 0.0, "constellation.slot_duration_s must be positive");
        need(self.num_slots >= 1, "constellation.num_slots must be at least 1");
        need(self.earth_radius_m > 0.0, "constellation.earth_radius_m must be positive");
        need(self.wavelength_m > 0.0, "link.wavelength_m must be positive");
        need(self.bandwidth_hz > 0.0, "link.bandwidth_hz must be positive");
        need(self.noise_temperature_k > 0.0, "link.noise_temperature_k must be positive");
        need(self.reference_distance_m > 0.0, "link.reference_distance_m must be positive");
        need(self.reference_snr > 0.0, "link.reference_snr must be positive");
        need(self.budget_offset.is_none_or(|b| b > 0.0), "link.budget_offset must be positive");
        need((0.0..=1.0).contains(&self.panel_efficiency), "energy.panel_efficiency must lie in [0, 1]");
        need(self.irradiance_w_m2 >= 0.0, "energy.irradiance_w_m2 must be nonnegative");
        need(self.panel_area_m2 >= 0.0, "energy.panel_area_m2 must be nonnegative");
        need(self.capacity_j > 0.0, "energy.capacity_j must be positive");
        need(self.floor_j >= 0.0, "energy.floor_j must be nonnegative");
        need(self.floor_j < self.capacity_j, "energy.floor_j must be below energy.capacity_j");
        need(self.initial_charge_j <= self.capacity_j, "energy.initial_charge_j must not exceed energy.capacity_j");
        need(self.initial_charge_j >= 0.0, "energy.initial_charge_j must be nonnegative");
        need(self.base_load_w >= 0.0, "energy.base_load_w must be nonnegative");
        need(self.max_power_w > 0.0, "energy.max_power_w must be positive");
        need(self.energy_weight.is_none_or(|a| a >= 0.0), "game.energy_weight must be nonnegative");
        need(self.penalty_weight >= 0.0, "game.penalty_weight must be nonnegative");
        need(self.safety_margin > 0.0, "game.safety_margin must be positive");
        need(self.rate_unit_bps.is_none_or(|u| u > 0.0), "game.rate_unit_bps must be positive");
        need(self.energy_unit_j.is_none_or(|u| u > 0.0), "game.energy_unit_j must be positive");
        need(self.num_flows >= 1, "traffic.num_flows must be at least 1");
        need(self.intensity > 0.0, "traffic.intensity must be positive");
        need(
            self.endpoint_weights.as_ref().is_none_or(|w| w.len() == self.num_satellites && w.iter().all(|x| *x >= 0.0)),
            "traffic.endpoint_weights needs one nonnegative weight per satellite",
        );
        need(self.rho > 0.0, "solver.rho must be positive");
        need(self.step_c0 > 0.0, "solver.step_c0 must be positive");
        need(self.inner_steps >= 1, "solver.inner_steps must be at least 1");
        need(self.inner_step > 0.0, "solver.inner_step must be positive");
        need(self.max_iterations >= 1, "solver.max_iterations must be at least 1");
        need(self.tolerance > 0.0, "solver.tolerance must be positive");
        need(self.dual_cap.is_none_or(|c| c > 0.0), "solver.dual_cap must be positive");
        need(self.grid_cells >= 2, "mfg.grid_cells must be at least 2");
        need(self.coupling >= 0.0, "mfg.coupling must be nonnegative");
        need(self.viscosity_scale >= 0.0, "mfg.viscosity_scale must be nonnegative");
        need(self.picard_max >= 1, "mfg.picard_max must be at least 1");
        need(self.picard_tol > 0.0, "mfg.picard_tol must be positive");
        if v.is_empty() { Ok(()) } else { Err(ScenarioError::Invalid(v)) }
    }

    pub fn constellation_config(&self) -> ConstellationConfig<f64> {
        ConstellationConfig {
            num_satellites: self.num_satellites,
            num_planes: self.num_planes,
            altitude: self.altitude_m,
            inclination: self.inclination_deg.to_radians(),
            orbit_period: self.orbit_period_s,
            eclipse_fraction: self.eclipse_fraction,
            slot_duration: self.slot_duration_s,
            num_slots: self.num_slots,
            earth_radius: self.earth_radius_m,
        }
    }

    pub fn link_params(&self) -> LinkParams<f64> {
        let bare = LinkParams {
            carrier_frequency: wavelength_to_frequency(self.wavelength_m, SPEED_OF_LIGHT),
            bandwidth: self.bandwidth_hz,
            tx_gain: db_to_linear(self.tx_gain_dbi),
            rx_gain: db_to_linear(self.rx_gain_dbi),
            boltzmann: BOLTZMANN,
            noise_temperature: self.noise_temperature_k,
            speed_of_light: SPEED_OF_LIGHT,
            budget_offset: 1.0,
        };
        let offset = self.budget_offset.unwrap_or_else(|| {
            offset_for_snr(self.reference_snr, self.reference_distance_m, self.max_power_w, &bare)
                .expect("reference distance validated positive")
        });
        LinkParams { budget_offset: offset, ..bare }
    }

    pub fn energy_params(&self) -> EnergyParams<f64> {
        EnergyParams {
            panel_efficiency: self.panel_efficiency,
            irradiance: self.irradiance_w_m2,
            panel_area: self.panel_area_m2,
            capacity: self.capacity_j,
            floor: self.floor_j,
            initial_charge: self.initial_charge_j,
            base_load: self.base_load_w,
            static_cap: self.max_power_w,
        }
    }

    pub fn game_params(&self) -> GameParams<f64> {
        GameParams {
            energy_weight: self.energy_weight.unwrap_or(1.0 / self.slot_duration_s),
            slot_duration: self.slot_duration_s,
            penalty_weight: self.penalty_weight,
            safety_margin: self.safety_margin,
            rate_unit: self.rate_unit_bps.unwrap_or(self.bandwidth_hz),
            energy_unit: self.energy_unit_j.unwrap_or(self.capacity_j),
            floor: self.floor_j,
        }
    }

    pub fn solver_config(&self) -> SolverConfig<f64> {
        SolverConfig {
            rho: self.rho,
            step_c0: self.step_c0,
            inner_steps: self.inner_steps,
            inner_step: self.inner_step,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            dual_cap: self.dual_cap,
            variant: self.variant,
        }
    }

    /// Capacity of one reference-length hop at `P_max`, bits/s.
    pub fn hop_capacity(&self) -> f64 {
        let link = self.link_params();
        let kappa = link.kappa(self.reference_distance_m).expect("reference distance validated positive");
        max_rate_under_bound(self.max_power_w, kappa, self.bandwidth_hz)
    }

    pub fn flows(&self, run_seed: u64) -> Result<Vec<Flow<f64>>, ScenarioError> {
        Ok(generate_weighted_flows(
            derive_seed(run_seed, Stream::Traffic, 0),
            self.num_satellites,
            self.num_flows,
            self.intensity,
            self.hop_capacity(),
            self.endpoint_weights.as_deref(),
        )?)
    }

    pub fn ephemeris(&self, run_seed: u64) -> Result<Ephemeris<f64>, ScenarioError> {
        Ok(propagate(&self.constellation_config(), derive_seed(run_seed, Stream::Epoch, 0))?)
    }

    /// Seed of run `index` under this scenario's master seed.
    pub fn run_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, Stream::Run, index as u64)
    }

    /// Everything needed to simulate one run.
    pub fn assemble(&self, run_seed: u64) -> Result<RunInputs, ScenarioError> {
        Ok(RunInputs {
            ephemeris: self.ephemeris(run_seed)?,
            link: self.link_params(),
            energy: self.energy_params(),
            game: self.game_params(),
            flows: self.flows(run_seed)?,
            initial_charge: vec![self.initial_charge_j; self.num_satellites],
            slot_duration: self.slot_duration_s,
        })
    }
}

/// Owned inputs of one episode.
#[derive(Debug, Clone)]
pub struct RunInputs {
    pub ephemeris: Ephemeris<f64>,
    pub link: LinkParams<f64>,
    pub energy: EnergyParams<f64>,
    pub game: GameParams<f64>,
    pub flows: Vec<Flow<f64>>,
    pub initial_charge: Vec<f64>,
    pub slot_duration: f64,
}

impl RunInputs {
    pub fn setup(&self) -> EpisodeSetup<'_, f64> {
        EpisodeSetup {
            ephemeris: &self.ephemeris,
            link: &self.link,
            energy: &self.energy,
            game: &self.game,
            flows: &self.flows,
            slot_duration: self.slot_duration,
            initial_charge: self.initial_charge.clone(),
        }
    }

    pub fn run(&self, config: &SolverConfig<f64>) -> Result<EpisodeResult<f64>, ScenarioError> {
        Ok(run_episode(&self.setup(), config)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let s = Scenario::parse("").unwrap();
        assert_eq!(s, Scenario::default());
        assert_eq!(s.num_satellites, 172);
        assert_eq!(s.capacity_j, 400e3);
        assert_eq!(s.floor_j, 40e3);
        assert_eq!(s.initial_charge_j, 320e3);
        assert_eq!(s.panel_area_m2, 2.5);
        assert_eq!(s.panel_efficiency, 0.30);
        assert_eq!(s.base_load_w, 55.0);
        assert_eq!(s.bandwidth_hz, 1e10);
        assert_eq!((s.tx_gain_dbi, s.rx_gain_dbi), (30.0, 30.0));
        assert_eq!(s.max_power_w, 10.0);
        assert_eq!(s.slot_duration_s, 15.0);
        assert_eq!(s.num_slots, 360);
        assert_eq!((s.penalty_weight, s.safety_margin), (0.2, 0.2));
        assert_eq!((s.rho, s.step_c0), (1.0, 0.1));
    }

    #[test]
    fn contradiction_lists_every_violation() {
        let err = Scenario::parse("energy.floor_j = 500000\nenergy.initial_charge_j = 900000\n").unwrap_err();
        match err {
            ScenarioError::Invalid(v) => {
                assert!(v.iter().any(|m| m.contains("floor_j")));
                assert!(v.iter().any(|m| m.contains("initial_charge_j")));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(Scenario::parse("energy.capacity = 3"), Err(ScenarioError::Invalid(_))));
        assert!(matches!(Scenario::parse("no equals sign"), Err(ScenarioError::Parse { .. })));
    }

    #[test]
    fn round_trip_and_hash() {
        let text = "constellation.num_satellites = 20\nlink.budget_offset = 0.37\ntraffic.intensity = 0.123456789\nsolver.variant = v1\n";
        let s = Scenario::parse(text).unwrap();
        let again = Scenario::parse(&s.save()).unwrap();
        assert_eq!(s, again);
        assert_eq!(s.content_hash(), again.content_hash());
        assert_ne!(s.content_hash(), Scenario::default().content_hash());
    }

    #[test]
    fn comments_and_whitespace() {
        let s = Scenario::parse("# header\n  energy.base_load_w=40   # trailing\n\n").unwrap();
        assert_eq!(s.base_load_w, 40.0);
    }

    #[test]
    fn overrides_by_variable_name() {
        let mut s = Scenario::default();
        assert_eq!(env_var_name("energy.capacity_j"), "ISLSIM_ENERGY.CAPACITY_J");
        assert_eq!(env_var_alias("energy.capacity_j"), "ISLSIM_ENERGY_CAPACITY_J");
        let applied = s
            .apply_overrides([("ISLSIM_ENERGY.CAPACITY_J", "500000"), ("ISLSIM_ENERGY_BASE_LOAD_W", "50"), ("PATH", "/bin")])
            .unwrap();
        assert_eq!(applied, vec!["energy.base_load_w", "energy.capacity_j"]);
        assert_eq!(s.capacity_j, 500e3);
        assert!(s.apply_overrides([("ISLSIM_SOLVER_RHO", "abc")]).is_err());
    }

    #[test]
    fn seeds_split_by_stream() {
        let a = derive_seed(1, Stream::Traffic, 0);
        assert_eq!(a, derive_seed(1, Stream::Traffic, 0));
        assert_ne!(a, derive_seed(1, Stream::Epoch, 0));
        assert_ne!(a, derive_seed(2, Stream::Traffic, 0));
        assert_ne!(a, derive_seed(1, Stream::Traffic, 1));
    }

    #[test]
    fn derived_defaults() {
        let s = Scenario::default();
        let g = s.game_params();
        assert!((g.energy_cost() - 1.0).abs() < 1e-15);
        assert_eq!(g.rate_unit, 1e10);
        assert_eq!(g.energy_unit, 400e3);
        let link = s.link_params();
        let snr = s.max_power_w / link.kappa(s.reference_distance_m).unwrap();
        assert!((snr - 10.0).abs() < 1e-9);
        assert!((s.hop_capacity() - 1e10 * 11f64.log2()).abs() < 1.0);
    }
}
