//! Optical ISL physics: free-space path loss, Shannon capacity and the
//! convex power–rate map with its derivatives.

use crate::Real;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const BOLTZMANN: f64 = 1.380_649e-23;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinkError {
    #[error("link distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
    #[error("transmit power must be nonnegative, got {0} W")]
    NegativePower(f64),
}

/// Physical parameters shared by every link of a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams<T> {
    pub carrier_frequency: T,
    pub bandwidth: T,
    /// Linear transmit gain.
    pub tx_gain: T,
    /// Linear receive gain.
    pub rx_gain: T,
    pub boltzmann: T,
    pub noise_temperature: T,
    pub speed_of_light: T,
    /// Multiplicative factor on `tx_gain * rx_gain`; 1 reproduces the bare link budget.
    pub budget_offset: T,
}

impl<T: Real> LinkParams<T> {
    /// Noise power spectral product `k_B τ B` divided by the effective gain.
    fn noise_over_gain(&self) -> T {
        self.boltzmann * self.noise_temperature * self.bandwidth
            / (self.tx_gain * self.rx_gain * self.budget_offset)
    }

    /// Power–rate coefficient κ of an active link of length `d`.
    pub fn kappa(&self, d: T) -> Result<T, LinkError> {
        Ok(self.noise_over_gain() * path_loss(d, self)?)
    }
}

/// `(4π d f / c)^2`.
pub fn path_loss<T: Real>(d: T, p: &LinkParams<T>) -> Result<T, LinkError> {
    if !(d > T::zero()) {
        return Err(LinkError::NonPositiveDistance(d.to_f64_lossy()));
    }
    let a = T::lit(4.0) * T::PI() * d * p.carrier_frequency / p.speed_of_light;
    Ok(a * a)
}

/// Shannon capacity in bits/s of a link of length `d` driven at `tx_power` watts.
pub fn capacity<T: Real>(tx_power: T, d: T, p: &LinkParams<T>) -> Result<T, LinkError> {
    if tx_power < T::zero() {
        return Err(LinkError::NegativePower(tx_power.to_f64_lossy()));
    }
    let kappa = p.kappa(d)?;
    Ok(p.bandwidth * (tx_power / kappa).ln_1p() / T::LN_2())
}

/// `κ (2^{R/B} − 1)`.
#[inline]
pub fn power_for_rate<T: Real>(rate: T, kappa: T, bandwidth: T) -> T {
    kappa * ((rate / bandwidth) * T::LN_2()).exp_m1()
}

/// First and second derivative of [`power_for_rate`] with respect to the rate.
#[inline]
pub fn power_rate_derivatives<T: Real>(rate: T, kappa: T, bandwidth: T) -> (T, T) {
    let s = T::LN_2() / bandwidth;
    let g = kappa * s * (rate / bandwidth).exp2();
    (g, g * s)
}

/// Largest rate whose power does not exceed `p_cap`; zero for an absent link.
#[inline]
pub fn max_rate_under_bound<T: Real>(p_cap: T, kappa: T, bandwidth: T) -> T {
    if kappa <= T::zero() || p_cap <= T::zero() {
        return T::zero();
    }
    bandwidth * (p_cap / kappa).ln_1p() / T::LN_2()
}

/// Wavelength to carrier frequency.
pub fn wavelength_to_frequency<T: Real>(wavelength: T, speed_of_light: T) -> T {
    speed_of_light / wavelength
}

pub fn db_to_linear<T: Real>(db: T) -> T {
    T::lit(10.0).powf(db / T::lit(10.0))
}

/// Budget offset that gives SNR `snr` on a link of length `distance` at `power` watts.
pub fn offset_for_snr<T: Real>(snr: T, distance: T, power: T, p: &LinkParams<T>) -> Result<T, LinkError> {
    let bare = LinkParams { budget_offset: T::one(), ..*p };
    let kappa = bare.kappa(distance)?;
    Ok(snr * kappa / power)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> LinkParams<f64> {
        LinkParams {
            carrier_frequency: 1e9,
            bandwidth: 1e10,
            tx_gain: 1000.0,
            rx_gain: 1000.0,
            boltzmann: BOLTZMANN,
            noise_temperature: 290.0,
            speed_of_light: 3e8,
            budget_offset: 1.0,
        }
    }

    #[test]
    fn path_loss_hand_value() {
        let l = path_loss(1000.0, &params()).unwrap();
        let expected = (4.0 * std::f64::consts::PI * 1e12 / 3e8).powi(2);
        assert!((l - expected).abs() / expected < 1e-12);
        assert!((l - 1.7546e9).abs() / 1.7546e9 < 1e-4);
    }

    #[test]
    fn path_loss_unit_argument_and_square_law() {
        let p = params();
        let d1 = p.speed_of_light / (4.0 * std::f64::consts::PI * p.carrier_frequency);
        assert!((path_loss(d1, &p).unwrap() - 1.0).abs() < 1e-12);
        let a = path_loss(3.0e5, &p).unwrap();
        let b = path_loss(6.0e5, &p).unwrap();
        assert!((b / a - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_distance() {
        assert!(path_loss(0.0, &params()).is_err());
        assert!(capacity(1.0, -5.0, &params()).is_err());
    }

    #[test]
    fn capacity_edge_cases() {
        let p = params();
        assert_eq!(capacity(0.0, 1e6, &p).unwrap(), 0.0);
        let kappa = p.kappa(1e6).unwrap();
        let c = capacity(kappa, 1e6, &p).unwrap();
        assert!((c - p.bandwidth).abs() / p.bandwidth < 1e-12);
    }

    #[test]
    fn power_for_rate_examples() {
        assert_eq!(power_for_rate(0.0, 2e-3, 1e10), 0.0);
        assert!((power_for_rate(1e10f64, 2e-3, 1e10) - 2e-3).abs() < 1e-15);
        assert!((power_for_rate(2e10f64, 2e-3, 1e10) - 6e-3).abs() < 1e-15);
    }

    #[test]
    fn derivative_at_zero() {
        let (d1, _) = power_rate_derivatives(0.0, 3.0, 1e10);
        assert!((d1 - 3.0 * std::f64::consts::LN_2 / 1e10).abs() < 1e-22);
    }

    #[test]
    fn max_rate_examples() {
        assert_eq!(max_rate_under_bound(0.0, 1.0, 1e10), 0.0);
        assert_eq!(max_rate_under_bound(5.0, 0.0, 1e10), 0.0);
        assert!((max_rate_under_bound(0.7f64, 0.7, 1e10) - 1e10).abs() < 1e-3);
    }

    #[test]
    fn offset_hits_requested_snr() {
        let p = params();
        let off = offset_for_snr(10.0, 1e6, 10.0, &p).unwrap();
        let q = LinkParams { budget_offset: off, ..p };
        let kappa = q.kappa(1e6).unwrap();
        assert!((10.0 / kappa - 10.0).abs() < 1e-9);
    }

    #[test]
    fn works_in_f32() {
        let p = power_for_rate(1.0f32, 2.0f32, 1.0f32);
        assert!((p - 2.0).abs() < 1e-6);
    }
}
