//! Link budget: path gain, Rayleigh fading, SINR, Shannon rate and the
//! alpha-fair utility family.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use thiserror::Error;

/// Below this distance from 1 the log branch of the utility is used.
pub const LOG_BRANCH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("singular distance: transmitter and receiver coincide")]
    SingularDistance,
    #[error("non-positive rate {0}")]
    NonPositiveRate(f64),
    #[error("invalid channel parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("femto power ({femto} mW) must be below macro power ({macro_} mW)")]
    TierOrdering { macro_: f64, femto: f64 },
}

/// Linear power in milliwatts.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Milliwatts(pub f64);

/// Logarithmic power in dBm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Dbm(pub f64);

impl From<Dbm> for Milliwatts {
    fn from(p: Dbm) -> Self {
        Milliwatts(10f64.powf(p.0 / 10.0))
    }
}

impl From<Milliwatts> for Dbm {
    fn from(p: Milliwatts) -> Self {
        Dbm(10.0 * p.0.log10())
    }
}

/// Linear ratio to decibels.
pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    path_loss_exponent: f64,
    propagation_constant: f64,
    noise: Milliwatts,
}

impl ChannelParams {
    pub fn new(
        path_loss_exponent: f64,
        propagation_constant: f64,
        noise: Milliwatts,
    ) -> Result<Self, ChannelError> {
        let check = |name, value: f64, ok: bool| {
            if value.is_finite() && ok {
                Ok(())
            } else {
                Err(ChannelError::InvalidParameter { name, value })
            }
        };
        check("path_loss_exponent", path_loss_exponent, path_loss_exponent >= 2.0)?;
        check("propagation_constant", propagation_constant, propagation_constant > 0.0)?;
        check("noise", noise.0, noise.0 > 0.0)?;
        Ok(Self { path_loss_exponent, propagation_constant, noise })
    }

    pub fn path_loss_exponent(&self) -> f64 {
        self.path_loss_exponent
    }

    pub fn propagation_constant(&self) -> f64 {
        self.propagation_constant
    }

    pub fn noise(&self) -> Milliwatts {
        self.noise
    }
}

/// Transmit powers of the two BS tiers and of user devices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TierPowers {
    macro_tx: Milliwatts,
    femto_tx: Milliwatts,
    device_tx: Milliwatts,
}

impl TierPowers {
    pub fn new(
        macro_tx: Milliwatts,
        femto_tx: Milliwatts,
        device_tx: Milliwatts,
    ) -> Result<Self, ChannelError> {
        for (name, p) in [("macro_tx", macro_tx), ("femto_tx", femto_tx), ("device_tx", device_tx)] {
            if !(p.0.is_finite() && p.0 > 0.0) {
                return Err(ChannelError::InvalidParameter { name, value: p.0 });
            }
        }
        if femto_tx.0 >= macro_tx.0 {
            return Err(ChannelError::TierOrdering { macro_: macro_tx.0, femto: femto_tx.0 });
        }
        Ok(Self { macro_tx, femto_tx, device_tx })
    }

    pub fn macro_tx(&self) -> Milliwatts {
        self.macro_tx
    }

    pub fn femto_tx(&self) -> Milliwatts {
        self.femto_tx
    }

    pub fn device_tx(&self) -> Milliwatts {
        self.device_tx
    }

    /// Every power multiplied by `factor` (tier ordering is preserved).
    pub fn scaled(&self, factor: f64) -> Result<Self, ChannelError> {
        Self::new(
            Milliwatts(self.macro_tx.0 * factor),
            Milliwatts(self.femto_tx.0 * factor),
            Milliwatts(self.device_tx.0 * factor),
        )
    }
}

/// `K * d^-alpha`.
pub fn path_gain(distance: f64, params: &ChannelParams) -> Result<f64, ChannelError> {
    if distance <= 0.0 {
        return Err(ChannelError::SingularDistance);
    }
    Ok(params.propagation_constant * distance.powf(-params.path_loss_exponent))
}

/// Received power for transmit power `tx`, fading gain `fading` and
/// distance `distance`.
pub fn received_power(
    tx: Milliwatts,
    fading: f64,
    distance: f64,
    params: &ChannelParams,
) -> Result<Milliwatts, ChannelError> {
    Ok(Milliwatts(tx.0 * fading * path_gain(distance, params)?))
}

/// Unit-mean exponential power gain (Rayleigh amplitude).
pub fn sample_fading<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

pub fn sinr(signal: f64, interferers: &[f64], noise: f64) -> f64 {
    signal / (interferers.iter().sum::<f64>() + noise)
}

/// Shannon–Hartley rate when `sharing_users` split the band equally.
pub fn shannon_rate(bandwidth_hz: f64, sharing_users: usize, sinr: f64) -> f64 {
    assert!(sharing_users >= 1, "at least one user must occupy the band");
    bandwidth_hz / sharing_users as f64 * (1.0 + sinr).log2()
}

/// Alpha-fair utility of rate `rate`.
pub fn utility(rate: f64, alpha: f64) -> Result<f64, ChannelError> {
    if !(rate > 0.0) {
        return Err(ChannelError::NonPositiveRate(rate));
    }
    if (alpha - 1.0).abs() < LOG_BRANCH_TOLERANCE {
        Ok(rate.ln())
    } else {
        Ok(rate.powf(1.0 - alpha) / (1.0 - alpha))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(alpha: f64) -> ChannelParams {
        ChannelParams::new(alpha, 1.0, Milliwatts(1e-10)).unwrap()
    }

    #[test]
    fn path_gain_values() {
        assert_eq!(path_gain(1.0, &params(4.0)).unwrap(), 1.0);
        assert!((path_gain(10.0, &params(4.0)).unwrap() - 1e-4).abs() < 1e-18);
        assert_eq!(path_gain(2.0, &params(2.0)).unwrap(), 0.25);
        assert_eq!(path_gain(0.0, &params(4.0)), Err(ChannelError::SingularDistance));
    }

    #[test]
    fn received_power_values() {
        let p = params(4.0);
        assert_eq!(received_power(Milliwatts(2.0), 1.0, 1.0, &p).unwrap(), Milliwatts(2.0));
        assert_eq!(received_power(Milliwatts(2.0), 0.0, 3.0, &p).unwrap(), Milliwatts(0.0));
    }

    #[test]
    fn fading_mean_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mean = (0..n).map(|_| sample_fading(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn sinr_values() {
        assert_eq!(sinr(1.0, &[], 1.0), 1.0);
        assert!((sinr(1.0, &[1.0], 0.5) - 2.0 / 3.0).abs() < 1e-15);
        assert!(sinr(1.0, &[1.0, 0.1], 0.5) < sinr(1.0, &[1.0], 0.5));
    }

    #[test]
    fn shannon_values() {
        assert_eq!(shannon_rate(1.0, 1, 1.0), 1.0);
        assert!((shannon_rate(20e6, 2, 3.0) - 2e7).abs() < 1e-6);
        assert_eq!(shannon_rate(5.0, 3, 0.0), 0.0);
    }

    #[test]
    fn utility_values() {
        assert_eq!(utility(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(utility(1.0, 2.0).unwrap(), -1.0);
        assert_eq!(utility(4.0, 0.5).unwrap(), 4.0);
        assert_eq!(utility(0.0, 0.5), Err(ChannelError::NonPositiveRate(0.0)));
        assert_eq!(utility(2.0, 1.0 + 1e-12).unwrap(), 2f64.ln());
    }

    #[test]
    fn dbm_round_trip() {
        let mw: Milliwatts = Dbm(46.0).into();
        assert!((mw.0 - 39810.717055349734).abs() < 1e-6);
        let back: Dbm = mw.into();
        assert!((back.0 - 46.0).abs() < 1e-12);
        assert!((Milliwatts::from(Dbm(-106.0)).0 - 2.511886431509582e-11).abs() < 1e-20);
    }

    #[test]
    fn parameter_validation() {
        assert!(ChannelParams::new(1.5, 1.0, Milliwatts(1.0)).is_err());
        assert!(ChannelParams::new(4.0, 0.0, Milliwatts(1.0)).is_err());
        assert!(ChannelParams::new(4.0, 1.0, Milliwatts(0.0)).is_err());
        assert!(TierPowers::new(Milliwatts(1.0), Milliwatts(2.0), Milliwatts(1.0)).is_err());
        assert!(TierPowers::new(Milliwatts(2.0), Milliwatts(1.0), Milliwatts(-1.0)).is_err());
    }
}
