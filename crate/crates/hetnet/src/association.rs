//! Cell association: decoupled (DUDe) and received-power baselines, case
//! classification and Monte-Carlo case frequencies.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{ChannelParams, TierPowers};
use crate::deployment::{tier_power, Deployment, DeploymentError, DeploymentParams, Tier};
use crate::geometry::Point2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssociationError {
    #[error("no base station available")]
    NoStation,
    #[error("at least one map is required")]
    NoMaps,
    #[error(transparent)]
    Deployment(#[from] DeploymentError),
}

/// Tier pattern of a user's (downlink, uplink) servers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AssociationCase {
    /// Macro on both links.
    MacroBoth,
    /// Macro downlink, femto uplink.
    MacroDownFemtoUp,
    /// Femto downlink, macro uplink. Impossible while femto power < macro power.
    FemtoDownMacroUp,
    /// Femto on both links.
    FemtoBoth,
}

impl AssociationCase {
    pub fn from_tiers(dl: Tier, ul: Tier) -> Self {
        match (dl, ul) {
            (Tier::Macro, Tier::Macro) => Self::MacroBoth,
            (Tier::Macro, Tier::Femto) => Self::MacroDownFemtoUp,
            (Tier::Femto, Tier::Macro) => Self::FemtoDownMacroUp,
            (Tier::Femto, Tier::Femto) => Self::FemtoBoth,
        }
    }

    /// Numeric case label, 1 through 4.
    pub fn id(self) -> u8 {
        match self {
            Self::MacroBoth => 1,
            Self::MacroDownFemtoUp => 2,
            Self::FemtoDownMacroUp => 3,
            Self::FemtoBoth => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssociationOutcome {
    pub dl_bs: usize,
    pub ul_bs: usize,
    pub case: AssociationCase,
}

/// Serving station per user on each link. Equivalent to a binary
/// association matrix with exactly one 1 per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssociationVectors {
    pub dl: Vec<usize>,
    pub ul: Vec<usize>,
    pub n_stations: usize,
}

impl AssociationVectors {
    pub fn from_outcomes(outcomes: &[AssociationOutcome], n_stations: usize) -> Self {
        Self {
            dl: outcomes.iter().map(|o| o.dl_bs).collect(),
            ul: outcomes.iter().map(|o| o.ul_bs).collect(),
            n_stations,
        }
    }

    pub fn n_users(&self) -> usize {
        self.dl.len()
    }

    pub fn indicator_dl(&self) -> Array2<f64> {
        indicator(&self.dl, self.n_stations)
    }

    pub fn indicator_ul(&self) -> Array2<f64> {
        indicator(&self.ul, self.n_stations)
    }
}

fn indicator(serving: &[usize], n: usize) -> Array2<f64> {
    let mut z = Array2::zeros((serving.len(), n));
    for (u, &b) in serving.iter().enumerate() {
        z[[u, b]] = 1.0;
    }
    z
}

/// Fading-averaged downlink power `P_tier * d^-alpha` (the propagation
/// constant is common to all stations and dropped). A user sitting on a
/// station sees infinite power from it.
fn mean_downlink_power<'a>(
    user: Point2,
    deployment: &'a Deployment,
    powers: &'a TierPowers,
    params: &ChannelParams,
) -> impl Iterator<Item = f64> + 'a {
    let alpha = params.path_loss_exponent();
    deployment.stations.iter().map(move |s| {
        let d = user.distance(s.position);
        if d == 0.0 {
            f64::INFINITY
        } else {
            tier_power(powers, s.tier).0 * d.powf(-alpha)
        }
    })
}

fn argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

fn downlink_choice(
    user: Point2,
    deployment: &Deployment,
    powers: &TierPowers,
    params: &ChannelParams,
) -> Result<usize, AssociationError> {
    argmax(mean_downlink_power(user, deployment, powers, params)).ok_or(AssociationError::NoStation)
}

fn outcome(deployment: &Deployment, dl_bs: usize, ul_bs: usize) -> AssociationOutcome {
    let case = AssociationCase::from_tiers(
        deployment.stations[dl_bs].tier,
        deployment.stations[ul_bs].tier,
    );
    AssociationOutcome { dl_bs, ul_bs, case }
}

/// Decoupled association: downlink to the strongest average received
/// power, uplink to the nearest station.
pub fn dude_associate(
    user: Point2,
    deployment: &Deployment,
    powers: &TierPowers,
    params: &ChannelParams,
) -> Result<AssociationOutcome, AssociationError> {
    let dl = downlink_choice(user, deployment, powers, params)?;
    let mut ul = 0;
    let mut best = f64::INFINITY;
    for (i, s) in deployment.stations.iter().enumerate() {
        let d = user.distance(s.position);
        if d < best {
            best = d;
            ul = i;
        }
    }
    Ok(outcome(deployment, dl, ul))
}

/// Coupled baseline: both links follow the downlink received-power rule.
pub fn rp_associate(
    user: Point2,
    deployment: &Deployment,
    powers: &TierPowers,
    params: &ChannelParams,
) -> Result<AssociationOutcome, AssociationError> {
    let dl = downlink_choice(user, deployment, powers, params)?;
    Ok(outcome(deployment, dl, dl))
}

/// Associates every user of a deployment with `rule`.
pub fn associate_all<F>(
    deployment: &Deployment,
    powers: &TierPowers,
    params: &ChannelParams,
    rule: F,
) -> Result<Vec<AssociationOutcome>, AssociationError>
where
    F: Fn(Point2, &Deployment, &TierPowers, &ChannelParams) -> Result<AssociationOutcome, AssociationError>,
{
    deployment.users.iter().map(|&u| rule(u, deployment, powers, params)).collect()
}

/// Fractions of users falling into cases 1..=4 (index 0..=3).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CaseFrequencies(pub [f64; 4]);

impl CaseFrequencies {
    pub fn of(&self, case: AssociationCase) -> f64 {
        self.0[usize::from(case.id() - 1)]
    }

    pub fn from_counts(counts: [u64; 4]) -> Self {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Self::default();
        }
        Self(counts.map(|c| c as f64 / total as f64))
    }
}

pub fn case_counts(outcomes: &[AssociationOutcome]) -> [u64; 4] {
    let mut counts = [0u64; 4];
    for o in outcomes {
        counts[usize::from(o.case.id() - 1)] += 1;
    }
    counts
}

/// Pools DUDe case counts over `maps` independent snapshots; map `i` uses
/// seed `seed + i`. Maps without stations or users contribute nothing.
pub fn association_probabilities(
    maps: usize,
    params: &DeploymentParams,
    powers: &TierPowers,
    channel: &ChannelParams,
    seed: u64,
) -> Result<CaseFrequencies, AssociationError> {
    if maps == 0 {
        return Err(AssociationError::NoMaps);
    }
    let per_map: Result<Vec<[u64; 4]>, AssociationError> = (0..maps)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let dep = Deployment::generate(params, &mut rng)?;
            if dep.stations.is_empty() {
                return Ok([0; 4]);
            }
            Ok(case_counts(&associate_all(&dep, powers, channel, dude_associate)?))
        })
        .collect();
    let mut counts = [0u64; 4];
    for c in per_map? {
        for k in 0..4 {
            counts[k] += c[k];
        }
    }
    Ok(CaseFrequencies::from_counts(counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{Dbm, Milliwatts};
    use crate::deployment::Station;
    use crate::geometry::Region;

    fn powers() -> TierPowers {
        TierPowers::new(Dbm(46.0).into(), Dbm(20.0).into(), Dbm(20.0).into()).unwrap()
    }

    fn channel() -> ChannelParams {
        ChannelParams::new(4.0, 1.0, Milliwatts(1e-10)).unwrap()
    }

    fn two_tier() -> Deployment {
        Deployment::new(
            Region::square(1000.0).unwrap(),
            vec![
                Station { position: Point2::new(0.0, 0.0), tier: Tier::Macro },
                Station { position: Point2::new(100.0, 0.0), tier: Tier::Femto },
            ],
            vec![],
        )
    }

    #[test]
    fn macro_everywhere_near_macro() {
        let o = dude_associate(Point2::new(5.0, 0.0), &two_tier(), &powers(), &channel()).unwrap();
        assert_eq!((o.dl_bs, o.ul_bs, o.case.id()), (0, 0, 1));
    }

    #[test]
    fn decoupled_between_tiers() {
        // Femto closer, macro still stronger: (46-20) dB over alpha=4 gives a
        // downlink edge at d_F/d_M = 10^(-26/40) ~ 0.224, so x = 60 is case 2.
        let dep = two_tier();
        let user = Point2::new(60.0, 0.0);
        let o = dude_associate(user, &dep, &powers(), &channel()).unwrap();
        assert_eq!((o.dl_bs, o.ul_bs, o.case), (0, 1, AssociationCase::MacroDownFemtoUp));
        let rp = rp_associate(user, &dep, &powers(), &channel()).unwrap();
        assert_eq!((rp.dl_bs, rp.ul_bs), (0, 0));
        assert_ne!(rp.ul_bs, o.ul_bs);
    }

    #[test]
    fn femto_both_near_femto() {
        let o = dude_associate(Point2::new(95.0, 0.0), &two_tier(), &powers(), &channel()).unwrap();
        assert_eq!(o.case, AssociationCase::FemtoBoth);
    }

    #[test]
    fn single_station_and_empty() {
        let mut dep = two_tier();
        dep.stations.truncate(1);
        let p = Point2::new(300.0, 40.0);
        assert_eq!(dude_associate(p, &dep, &powers(), &channel()).unwrap().ul_bs, 0);
        assert_eq!(rp_associate(p, &dep, &powers(), &channel()).unwrap().ul_bs, 0);
        dep.stations.clear();
        assert_eq!(dude_associate(p, &dep, &powers(), &channel()), Err(AssociationError::NoStation));
    }

    #[test]
    fn case_labels() {
        assert_eq!(AssociationCase::from_tiers(Tier::Femto, Tier::Macro).id(), 3);
        let f = CaseFrequencies::from_counts([1, 1, 0, 2]);
        assert_eq!(f.0, [0.25, 0.25, 0.0, 0.5]);
        assert_eq!(f.of(AssociationCase::FemtoBoth), 0.5);
    }

    #[test]
    fn no_femtos_means_case_one() {
        let params = DeploymentParams {
            region: Region::square(1000.0).unwrap(),
            macro_intensity: 3.0,
            femto_intensity: 0.0,
            users: crate::deployment::UserPopulation::Fixed(50),
        };
        let f = association_probabilities(20, &params, &powers(), &channel(), 1).unwrap();
        assert_eq!(f.0, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            association_probabilities(0, &params, &powers(), &channel(), 1),
            Err(AssociationError::NoMaps)
        );
    }
}
