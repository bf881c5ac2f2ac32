//! Network snapshots: two tiers of base stations plus users, drawn from
//! independent Poisson processes, and the per-link SINR/rate matrices they
//! induce.

use ndarray::Array2;
use rand::Rng;
use thiserror::Error;

use crate::channel::{self, ChannelParams, Milliwatts, TierPowers};
use crate::geometry::{self, GeometryError, Point2, Region};

/// Users closer than this to any station are redrawn.
pub const MIN_USER_SEPARATION: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeploymentError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("deployment has no base stations")]
    NoStations,
    #[error("invalid user count: {0}")]
    InvalidUsers(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tier {
    Macro,
    Femto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Station {
    pub position: Point2,
    pub tier: Tier,
}

/// How many users a snapshot holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UserPopulation {
    /// Poisson-distributed count with this mean over the region.
    Poisson(f64),
    /// Exactly this many users, uniformly placed.
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeploymentParams {
    pub region: Region,
    /// Expected macro stations over the region.
    pub macro_intensity: f64,
    /// Expected femto stations over the region.
    pub femto_intensity: f64,
    pub users: UserPopulation,
}

/// A realized network. Stations are indexed macro-first, then femto.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub region: Region,
    pub stations: Vec<Station>,
    pub users: Vec<Point2>,
}

impl Deployment {
    pub fn new(region: Region, stations: Vec<Station>, users: Vec<Point2>) -> Self {
        Self { region, stations, users }
    }

    pub fn station_positions(&self) -> Vec<Point2> {
        self.stations.iter().map(|s| s.position).collect()
    }

    pub fn count(&self, tier: Tier) -> usize {
        self.stations.iter().filter(|s| s.tier == tier).count()
    }

    /// Draws a snapshot: macro points, femto points, user count, then users
    /// (each redrawn while it sits within [`MIN_USER_SEPARATION`] of a station).
    pub fn generate<R: Rng + ?Sized>(
        params: &DeploymentParams,
        rng: &mut R,
    ) -> Result<Self, DeploymentError> {
        let region = params.region;
        let macros = geometry::sample_ppp(params.macro_intensity, &region, rng)?;
        let femtos = geometry::sample_ppp(params.femto_intensity, &region, rng)?;
        let stations: Vec<Station> = macros
            .into_iter()
            .map(|position| Station { position, tier: Tier::Macro })
            .chain(femtos.into_iter().map(|position| Station { position, tier: Tier::Femto }))
            .collect();
        let n_users = match params.users {
            UserPopulation::Fixed(n) => n,
            UserPopulation::Poisson(mean) => {
                if !(mean.is_finite() && mean >= 0.0) {
                    return Err(DeploymentError::InvalidUsers(mean));
                }
                if mean == 0.0 {
                    0
                } else {
                    use rand_distr::{Distribution, Poisson};
                    Poisson::new(mean).map_err(|_| DeploymentError::InvalidUsers(mean))?.sample(rng) as usize
                }
            }
        };
        let users = (0..n_users)
            .map(|_| loop {
                let p = region.sample_uniform(rng);
                if stations.iter().all(|s| s.position.distance(p) >= MIN_USER_SEPARATION) {
                    break p;
                }
            })
            .collect();
        Ok(Self { region, stations, users })
    }
}

/// Spectral efficiency (bits/s/Hz) and SINR of every (user, station) pair
/// on one link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkMatrices {
    pub sinr: Array2<f64>,
    pub spectral_efficiency: Array2<f64>,
}

/// Instantaneous SINR matrices for both links with one fresh fading draw per
/// (user, station, link). Every station other than the candidate server
/// counts as an interferer. Downlink transmitters are the stations at their
/// tier powers; uplink transmitters use the device power over the same set
/// of paths.
pub fn link_matrices<R: Rng + ?Sized>(
    deployment: &Deployment,
    powers: &TierPowers,
    params: &ChannelParams,
    rng: &mut R,
) -> Result<(LinkMatrices, LinkMatrices), DeploymentError> {
    let n_users = deployment.users.len();
    let n_bs = deployment.stations.len();
    if n_bs == 0 {
        return Err(DeploymentError::NoStations);
    }
    let mut rx_dl = Array2::<f64>::zeros((n_users, n_bs));
    let mut rx_ul = Array2::<f64>::zeros((n_users, n_bs));
    for (u, user) in deployment.users.iter().enumerate() {
        for (b, station) in deployment.stations.iter().enumerate() {
            let d = user.distance(station.position).max(MIN_USER_SEPARATION);
            let gain = channel::path_gain(d, params).expect("distance clamped positive");
            let h_dl = channel::sample_fading(rng);
            let h_ul = channel::sample_fading(rng);
            rx_dl[[u, b]] = tier_power(powers, station.tier).0 * h_dl * gain;
            rx_ul[[u, b]] = powers.device_tx().0 * h_ul * gain;
        }
    }
    let noise = params.noise().0;
    let finish = |rx: Array2<f64>| {
        let mut sinr = Array2::<f64>::zeros(rx.raw_dim());
        for (u, row) in rx.outer_iter().enumerate() {
            let total: f64 = row.sum();
            for b in 0..n_bs {
                sinr[[u, b]] = row[b] / ((total - row[b]).max(0.0) + noise);
            }
        }
        let se = sinr.mapv(|s| (1.0 + s).log2());
        LinkMatrices { sinr, spectral_efficiency: se }
    };
    Ok((finish(rx_dl), finish(rx_ul)))
}

pub fn tier_power(powers: &TierPowers, tier: Tier) -> Milliwatts {
    match tier {
        Tier::Macro => powers.macro_tx(),
        Tier::Femto => powers.femto_tx(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> DeploymentParams {
        DeploymentParams {
            region: Region::square(1000.0).unwrap(),
            macro_intensity: 3.0,
            femto_intensity: 9.0,
            users: UserPopulation::Fixed(40),
        }
    }

    #[test]
    fn generate_is_deterministic_and_ordered() {
        let a = Deployment::generate(&params(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = Deployment::generate(&params(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.users.len(), 40);
        let first_femto = a.stations.iter().position(|s| s.tier == Tier::Femto);
        if let Some(i) = first_femto {
            assert!(a.stations[i..].iter().all(|s| s.tier == Tier::Femto));
        }
    }

    #[test]
    fn users_keep_their_distance() {
        let d = Deployment::generate(&params(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        for u in &d.users {
            for s in &d.stations {
                assert!(u.distance(s.position) >= MIN_USER_SEPARATION);
            }
        }
    }

    #[test]
    fn sinr_matrix_matches_direct_formula() {
        let region = Region::square(100.0).unwrap();
        let dep = Deployment::new(
            region,
            vec![
                Station { position: Point2::new(0.0, 0.0), tier: Tier::Macro },
                Station { position: Point2::new(10.0, 0.0), tier: Tier::Femto },
            ],
            vec![Point2::new(3.0, 4.0)],
        );
        let powers = TierPowers::new(Milliwatts(100.0), Milliwatts(10.0), Milliwatts(1.0)).unwrap();
        let ch = ChannelParams::new(4.0, 1.0, Milliwatts(1e-6)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (dl, ul) = link_matrices(&dep, &powers, &ch, &mut rng).unwrap();
        // Replay the same fading stream to form the oracle.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h: Vec<f64> = (0..4).map(|_| channel::sample_fading(&mut rng)).collect();
        let g0 = 5f64.powi(-4);
        let g1 = (49f64 + 16.0).sqrt().powi(-4);
        let s0 = 100.0 * h[0] * g0;
        let s1 = 10.0 * h[2] * g1;
        assert!((dl.sinr[[0, 0]] - s0 / (s1 + 1e-6)).abs() < 1e-9 * dl.sinr[[0, 0]]);
        assert!((dl.sinr[[0, 1]] - s1 / (s0 + 1e-6)).abs() < 1e-9 * dl.sinr[[0, 1]]);
        let u0 = h[1] * g0;
        let u1 = h[3] * g1;
        assert!((ul.sinr[[0, 0]] - u0 / (u1 + 1e-6)).abs() < 1e-9 * ul.sinr[[0, 0]]);
        assert!((dl.spectral_efficiency[[0, 0]] - (1.0 + dl.sinr[[0, 0]]).log2()).abs() < 1e-12);
    }
}
