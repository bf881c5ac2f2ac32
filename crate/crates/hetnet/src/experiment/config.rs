//! Flat `key = value` scenario configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Powers are given in
//! dBm and converted to milliwatts once, when the typed parameter structs
//! are built. Serialization writes every key in a fixed order, so
//! parse → serialize → parse is the identity.

use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::{ChannelError, ChannelParams, Dbm, Milliwatts, TierPowers};
use crate::deployment::{DeploymentParams, UserPopulation};
use crate::geometry::{GeometryError, Region};
use crate::msa::{AllocationFormula, MsaParams, PriceState};
use crate::ssa::{SsaError, SsaParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown configuration keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("invalid value for {key}: `{value}` ({reason})")]
    Value { key: String, value: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Ssa(#[from] SsaError),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

macro_rules! scenario_config {
    ($( $(#[doc = $doc:literal])* $field:ident : $ty:ty = $default:expr ),* $(,)?) => {
        /// Every tunable of a scenario. Defaults reproduce the deployment
        /// study parameters; [`ScenarioConfig::optimization_preset`] switches to
        /// the small-network setting used by the allocation scenarios.
        #[derive(Debug, Clone, PartialEq)]
        pub struct ScenarioConfig {
            $( $(#[doc = $doc])* pub $field: $ty, )*
        }

        impl Default for ScenarioConfig {
            fn default() -> Self {
                Self { $( $field: $default, )* }
            }
        }

        impl ScenarioConfig {
            pub const KEYS: &'static [&'static str] = &[$( stringify!($field) ),*];

            /// Sets one key from its textual value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
                match key {
                    $( stringify!($field) => {
                        self.$field = ConfigValue::parse(value).map_err(|reason| ConfigError::Value {
                            key: key.to_string(),
                            value: value.to_string(),
                            reason,
                        })?;
                        Ok(())
                    } )*
                    other => Err(ConfigError::UnknownKeys(vec![other.to_string()])),
                }
            }

            /// `key = value` lines for every key, in declaration order.
            pub fn serialize(&self) -> String {
                let mut out = String::new();
                $( writeln!(out, "{} = {}", stringify!($field), self.$field.render()).expect("write to string"); )*
                out
            }
        }
    };
}

scenario_config! {
    /// Side of the square study region, meters.
    side_m: f64 = 1000.0,
    /// Expected macro stations per region.
    macro_intensity: f64 = 3.0,
    /// Expected femto stations per macro station.
    femto_ratio: f64 = 1.0,
    /// Expected users per region in the deployment study.
    user_intensity: f64 = 5500.0,
    /// Users simultaneously active on the downlink (bandwidth sharing).
    active_users_dl: usize = 500,
    /// Users simultaneously active on the uplink.
    active_users_ul: usize = 400,
    /// Fixed user count for the allocation scenarios (ssa, msa, compare).
    users: usize = 50,
    macro_power_dbm: f64 = 46.0,
    femto_power_dbm: f64 = 20.0,
    device_power_dbm: f64 = 20.0,
    path_loss_exponent: f64 = 4.0,
    propagation_constant: f64 = 1.0,
    noise_dbm: f64 = -106.0,
    bandwidth_macro_hz: f64 = 20e6,
    bandwidth_femto_hz: f64 = 1e9,
    /// Fairness exponent shared by the allocation schemes.
    alpha: f64 = 0.5,
    /// Weight of the asymmetry penalty in the fixed-association allocator.
    asymmetry_weight: f64 = 2.0,
    /// Per-user asymmetry bound in the dual-decomposition allocator.
    epsilon_u: f64 = 2.0,
    gamma: f64 = 0.004,
    iterations: usize = 8000,
    allocation_formula: AllocationFormula = AllocationFormula::Modified,
    hysteresis: f64 = 0.0,
    initial_station_price: f64 = 0.01,
    initial_user_price: f64 = 0.01,
    /// Trailing rounds inspected by the oscillation detector.
    oscillation_window: usize = 200,
    /// Detrended price range above which a station counts as oscillating.
    oscillation_tolerance: f64 = 0.002,
    replications: usize = 450,
    seed: u64 = 1,
    grid_resolution: usize = 100,
    histogram_bins: usize = 50,
    out_dir: PathBuf = PathBuf::from("out"),
}

trait ConfigValue: Sized {
    fn parse(s: &str) -> Result<Self, String>;
    fn render(&self) -> String;
}

impl ConfigValue for f64 {
    fn parse(s: &str) -> Result<Self, String> {
        let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err("must be finite".into())
        }
    }
    fn render(&self) -> String {
        format!("{self:?}")
    }
}

impl ConfigValue for usize {
    fn parse(s: &str) -> Result<Self, String> {
        s.parse().map_err(|e| format!("{e}"))
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for u64 {
    fn parse(s: &str) -> Result<Self, String> {
        s.parse().map_err(|e| format!("{e}"))
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for AllocationFormula {
    fn parse(s: &str) -> Result<Self, String> {
        s.parse()
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for PathBuf {
    fn parse(s: &str) -> Result<Self, String> {
        if s.is_empty() {
            Err("empty path".into())
        } else {
            Ok(PathBuf::from(s))
        }
    }
    fn render(&self) -> String {
        self.display().to_string()
    }
}

impl ScenarioConfig {
    /// Parameters of the small-network allocation comparison: three macro
    /// stations, three femtos per macro, 50 users.
    pub fn optimization_preset() -> Self {
        Self { femto_ratio: 3.0, users: 50, replications: 20, ..Self::default() }
    }

    /// Applies `key = value` text on top of `self`. Every unknown key is
    /// reported at once.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut unknown = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
            };
            let (key, value) = (key.trim(), value.trim());
            if !Self::KEYS.contains(&key) {
                unknown.push(key.to_string());
                continue;
            }
            self.set(key, value)?;
        }
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::UnknownKeys(unknown))
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_file(&mut self, path: &std::path::Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        self.apply_text(&text)
    }

    /// Short SHA-256 digest of the serialized configuration.
    /// Short digest of every setting except `out_dir`, so the same
    /// scenario written to two places reports the same hash.
    pub fn hash(&self) -> String {
        let scenario = ScenarioConfig { out_dir: PathBuf::new(), ..self.clone() };
        let digest = Sha256::digest(scenario.serialize().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let nonneg = [
            ("macro_intensity", self.macro_intensity),
            ("femto_ratio", self.femto_ratio),
            ("user_intensity", self.user_intensity),
            ("hysteresis", self.hysteresis),
            ("initial_station_price", self.initial_station_price),
            ("initial_user_price", self.initial_user_price),
            ("epsilon_u", self.epsilon_u),
            ("asymmetry_weight", self.asymmetry_weight),
            ("oscillation_tolerance", self.oscillation_tolerance),
        ];
        let mut bad: Vec<String> =
            nonneg.iter().filter(|(_, v)| *v < 0.0).map(|(k, v)| format!("{k} = {v} < 0")).collect();
        for (k, v) in [("alpha", self.alpha), ("gamma", self.gamma), ("bandwidth_macro_hz", self.bandwidth_macro_hz), ("bandwidth_femto_hz", self.bandwidth_femto_hz)] {
            if v <= 0.0 {
                bad.push(format!("{k} = {v} must be positive"));
            }
        }
        for (k, v) in [("replications", self.replications), ("iterations", self.iterations), ("histogram_bins", self.histogram_bins)] {
            if v == 0 {
                bad.push(format!("{k} must be at least 1"));
            }
        }
        if self.grid_resolution < 2 {
            bad.push("grid_resolution must be at least 2".into());
        }
        if bad.is_empty() {
            self.channel()?;
            self.powers()?;
            self.region()?;
            Ok(())
        } else {
            Err(ConfigError::Invalid(bad.join("; ")))
        }
    }

    pub fn region(&self) -> Result<Region, ConfigError> {
        Ok(Region::square(self.side_m)?)
    }

    pub fn channel(&self) -> Result<ChannelParams, ConfigError> {
        Ok(ChannelParams::new(
            self.path_loss_exponent,
            self.propagation_constant,
            Milliwatts::from(Dbm(self.noise_dbm)),
        )?)
    }

    pub fn powers(&self) -> Result<TierPowers, ConfigError> {
        Ok(TierPowers::new(
            Dbm(self.macro_power_dbm).into(),
            Dbm(self.femto_power_dbm).into(),
            Dbm(self.device_power_dbm).into(),
        )?)
    }

    pub fn femto_intensity(&self) -> f64 {
        self.macro_intensity * self.femto_ratio
    }

    /// Deployment with a Poisson user population (deployment study).
    pub fn deployment_params(&self) -> Result<DeploymentParams, ConfigError> {
        Ok(DeploymentParams {
            region: self.region()?,
            macro_intensity: self.macro_intensity,
            femto_intensity: self.femto_intensity(),
            users: UserPopulation::Poisson(self.user_intensity),
        })
    }

    /// Deployment with exactly `users` users (allocation scenarios).
    pub fn optimization_deployment_params(&self) -> Result<DeploymentParams, ConfigError> {
        Ok(DeploymentParams { users: UserPopulation::Fixed(self.users), ..self.deployment_params()? })
    }

    pub fn ssa_params(&self) -> Result<SsaParams, ConfigError> {
        Ok(SsaParams::new(self.alpha, self.asymmetry_weight)?)
    }

    pub fn msa_params(&self) -> MsaParams {
        MsaParams {
            alpha: self.alpha,
            epsilon: self.epsilon_u,
            step: self.gamma,
            iterations: self.iterations,
            formula: self.allocation_formula,
            hysteresis: self.hysteresis,
        }
    }

    pub fn initial_prices(&self, users: usize, stations: usize) -> PriceState {
        PriceState::uniform(users, stations, self.initial_station_price, self.initial_user_price)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut cfg = ScenarioConfig::optimization_preset();
        cfg.alpha = 0.123456789012345;
        cfg.allocation_formula = AllocationFormula::Original;
        cfg.out_dir = PathBuf::from("some/dir");
        let again = ScenarioConfig::parse(&cfg.serialize()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(again.serialize(), cfg.serialize());
    }

    #[test]
    fn unknown_keys_listed() {
        let err = ScenarioConfig::parse("alpha = 1\nfoo = 2\n# comment\nbar=3").unwrap_err();
        match err {
            ConfigError::UnknownKeys(k) => assert_eq!(k, vec!["foo", "bar"]),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn bad_values_rejected() {
        assert!(matches!(ScenarioConfig::parse("alpha = x"), Err(ConfigError::Value { .. })));
        assert!(matches!(ScenarioConfig::parse("alpha"), Err(ConfigError::Syntax { line: 1, .. })));
        let cfg = ScenarioConfig::parse("replications = 0\ngamma = -1").unwrap();
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
        let cfg = ScenarioConfig::parse("femto_power_dbm = 50").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn units_converted_once() {
        let cfg = ScenarioConfig::default();
        let p = cfg.powers().unwrap();
        assert!((p.macro_tx().0 - 39810.717055349734).abs() < 1e-6);
        assert!((cfg.channel().unwrap().noise().0 - 2.511886431509582e-11).abs() < 1e-22);
        assert_eq!(cfg.femto_intensity(), 3.0);
    }

    #[test]
    fn hash_tracks_content() {
        let a = ScenarioConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.out_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }
}
