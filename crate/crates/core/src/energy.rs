//! Solar harvesting, battery evolution and the battery-dependent ISL power ceiling.

use crate::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnergyError {
    #[error("ISL power sum must be nonnegative, got {0} W")]
    NegativePower(f64),
    #[error("battery charge {0} J outside [0, {1}] J")]
    ChargeOutOfRange(f64, f64),
    #[error("remaining eclipse duration must be positive, got {0} s")]
    NonPositiveEclipse(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams<T> {
    pub panel_efficiency: T,
    /// Solar irradiance γ' in W/m².
    pub irradiance: T,
    pub panel_area: T,
    pub capacity: T,
    pub floor: T,
    pub initial_charge: T,
    pub base_load: T,
    pub static_cap: T,
}

impl<T: Real> EnergyParams<T> {
    pub fn peak_harvest(&self) -> T {
        self.panel_efficiency * self.irradiance * self.panel_area
    }
}

/// `φ η γ' A sin σ`.
pub fn harvest_power<T: Real>(illuminated: bool, panel_angle: T, p: &EnergyParams<T>) -> T {
    if !illuminated {
        return T::zero();
    }
    p.peak_harvest() * panel_angle.sin().max(T::zero())
}

/// Battery after one slot, together with the energy discarded by clamping (always ≥ 0).
pub fn step_battery_with_loss<T: Real>(
    charge: T,
    isl_power_sum: T,
    harvest: T,
    p: &EnergyParams<T>,
    slot: T,
) -> Result<(T, T), EnergyError> {
    if isl_power_sum < T::zero() {
        return Err(EnergyError::NegativePower(isl_power_sum.to_f64_lossy()));
    }
    if charge < T::zero() || charge > p.capacity {
        return Err(EnergyError::ChargeOutOfRange(charge.to_f64_lossy(), p.capacity.to_f64_lossy()));
    }
    let delta = slot * harvest - slot * (isl_power_sum + p.base_load);
    let raw = charge + delta;
    let next = if delta > T::zero() { raw.min(p.capacity) } else { raw.max(T::zero()) };
    Ok((next, (raw - next).abs()))
}

pub fn step_battery<T: Real>(
    charge: T,
    isl_power_sum: T,
    harvest: T,
    p: &EnergyParams<T>,
    slot: T,
) -> Result<T, EnergyError> {
    step_battery_with_loss(charge, isl_power_sum, harvest, p, slot).map(|(c, _)| c)
}

/// Per-satellite ISL power ceiling for the coming slot.
pub fn dynamic_power_bound<T: Real>(
    charge: T,
    illuminated: bool,
    harvest: T,
    remaining_eclipse: T,
    p: &EnergyParams<T>,
) -> Result<T, EnergyError> {
    if !(remaining_eclipse > T::zero()) {
        return Err(EnergyError::NonPositiveEclipse(remaining_eclipse.to_f64_lossy()));
    }
    let budget = charge.max(T::zero()) / remaining_eclipse;
    let raw = if illuminated { harvest + budget } else { budget };
    Ok(raw.min(p.static_cap))
}

/// Per-satellite, per-slot battery charge after each slot's step.
#[derive(Debug, Clone, PartialEq)]
pub struct BatteryTrace<T> {
    pub num_satellites: usize,
    pub num_slots: usize,
    /// Row-major `[slot][satellite]`.
    pub charge: Vec<T>,
    pub illuminated: Vec<bool>,
    pub floor: T,
    /// Total energy lost to clamping, per satellite.
    pub clamp_loss: Vec<T>,
}

impl<T: Real> BatteryTrace<T> {
    pub fn new(num_satellites: usize, floor: T) -> Self {
        BatteryTrace {
            num_satellites,
            num_slots: 0,
            charge: Vec::new(),
            illuminated: Vec::new(),
            floor,
            clamp_loss: vec![T::zero(); num_satellites],
        }
    }

    pub fn push_slot(&mut self, charges: &[T], illuminated: &[bool]) {
        assert_eq!(charges.len(), self.num_satellites);
        assert_eq!(illuminated.len(), self.num_satellites);
        self.charge.extend_from_slice(charges);
        self.illuminated.extend_from_slice(illuminated);
        self.num_slots += 1;
    }

    pub fn at(&self, m: usize, t: usize) -> T {
        self.charge[t * self.num_satellites + m]
    }

    pub fn is_depleted(&self, m: usize, t: usize) -> bool {
        self.at(m, t) <= self.floor
    }

    /// `(satellite, slot)` pairs at or below the floor, in slot-major order.
    pub fn depletion_events(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for t in 0..self.num_slots {
            for m in 0..self.num_satellites {
                if self.is_depleted(m, t) {
                    out.push((m, t));
                }
            }
        }
        out
    }

    pub fn min_charge(&self, m: usize) -> Option<T> {
        (0..self.num_slots).map(|t| self.at(m, t)).reduce(T::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn table2() -> EnergyParams<f64> {
        EnergyParams {
            panel_efficiency: 0.30,
            irradiance: 1361.0,
            panel_area: 2.5,
            capacity: 400e3,
            floor: 40e3,
            initial_charge: 320e3,
            base_load: 55.0,
            static_cap: 10.0,
        }
    }

    #[test]
    fn peak_harvest_matches_table() {
        let p = table2();
        let h = harvest_power(true, std::f64::consts::FRAC_PI_2, &p);
        assert!((h - 1020.75).abs() < 1e-9);
        assert!((h - 1020.0).abs() < 1.0, "≈ 1.02 kW");
        assert_eq!(harvest_power(false, 1.0, &p), 0.0);
        assert_eq!(harvest_power(true, 0.0, &p), 0.0);
    }

    #[test]
    fn battery_step_examples() {
        let p = table2();
        // +100 kJ over one slot saturates at capacity.
        let c = step_battery(320e3, 0.0, 100e3 / 15.0 + 55.0, &p, 15.0).unwrap();
        assert_eq!(c, 400e3);
        let c = step_battery(200e3, 5.0, 0.0, &p, 15.0).unwrap();
        assert!((c - (200e3 - 900.0)).abs() < 1e-9);
        let c = step_battery(500.0, 5.0, 0.0, &p, 15.0).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn battery_step_rejects_negative_power() {
        assert!(step_battery(1.0, -1.0, 0.0, &table2(), 15.0).is_err());
    }

    #[test]
    fn dynamic_bound_examples() {
        let p = table2();
        assert!((dynamic_power_bound(10.5e3, false, 0.0, 2100.0, &p).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(dynamic_power_bound(400e3, false, 0.0, 2100.0, &p).unwrap(), 10.0);
        assert!((dynamic_power_bound(10.5e3, true, 3.0, 2100.0, &p).unwrap() - 8.0).abs() < 1e-12);
        assert!(dynamic_power_bound(1.0, false, 0.0, 0.0, &p).is_err());
    }

    #[test]
    fn trace_depletion_uses_inclusive_floor() {
        let mut tr = BatteryTrace::new(2, 40e3);
        tr.push_slot(&[50e3, 40e3], &[true, false]);
        assert_eq!(tr.depletion_events(), vec![(1, 0)]);
    }
}
