//! Scenario runners. Replication `i` always uses seed `seed + i`; the
//! replications run in parallel and are gathered in index order, so the
//! output does not depend on scheduling.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use super::config::{ConfigError, ScenarioConfig};
use super::output;
use super::testcases::{load_testcase, TestcaseError};
use crate::association::{
    self, associate_all, dude_associate, rp_associate, AssociationError, AssociationVectors,
};
use crate::channel::{self, ChannelParams, TierPowers};
use crate::deployment::{self, Deployment, DeploymentError, DeploymentParams, Tier};
use crate::geometry::{self, GeometryError, Point2, WeightedSite};
use crate::metrics::{self, MetricsError, RunMetrics};
use crate::msa::{self, MsaError, MsaParams, MsaSolution, PriceState};
use crate::ssa::{self, FixedAssociationProblem, SsaError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Deployment(#[from] DeploymentError),
    #[error(transparent)]
    Association(#[from] AssociationError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Ssa(#[from] SsaError),
    #[error(transparent)]
    Msa(#[from] MsaError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Testcase(#[from] TestcaseError),
    #[error("empty deployment: {0}")]
    EmptyDeployment(String),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Explicit overrides of a hand-built scenario's own settings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TestcaseOverrides {
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub step: Option<f64>,
    pub iterations: Option<usize>,
    pub formula: Option<msa::AllocationFormula>,
    pub hysteresis: Option<f64>,
    pub initial_station_price: Option<f64>,
    pub initial_user_price: Option<f64>,
}

impl TestcaseOverrides {
    pub fn apply(&self, p: MsaParams) -> MsaParams {
        MsaParams {
            alpha: self.alpha.unwrap_or(p.alpha),
            epsilon: self.epsilon.unwrap_or(p.epsilon),
            step: self.step.unwrap_or(p.step),
            iterations: self.iterations.unwrap_or(p.iterations),
            formula: self.formula.unwrap_or(p.formula),
            hysteresis: self.hysteresis.unwrap_or(p.hysteresis),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    /// Association statistics over random maps.
    Deploy,
    /// Decoupled association with the fixed-association optimal split.
    Ssa,
    /// Dual-decomposition joint association and allocation.
    Msa,
    /// Baseline vs fixed-association optimum vs dual decomposition.
    Compare,
    /// One of the hand-built rate scenarios.
    Testcase { number: u8, variant: Option<String>, overrides: TestcaseOverrides },
}

impl Mode {
    pub fn name(&self) -> String {
        match self {
            Mode::Deploy => "deploy".into(),
            Mode::Ssa => "ssa".into(),
            Mode::Msa => "msa".into(),
            Mode::Compare => "compare".into(),
            Mode::Testcase { number, variant, .. } => {
                format!("testcase {number}{}", variant.as_deref().unwrap_or(""))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub summary: String,
    pub files: Vec<PathBuf>,
}

/// Runs `mode` and writes its files into `config.out_dir`.
pub fn run_scenario(config: &ScenarioConfig, mode: &Mode) -> Result<RunReport, RunError> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir)?;
    let mut files = Vec::new();
    let body = match mode {
        Mode::Deploy => run_deploy(config, &mut files)?,
        Mode::Ssa => run_ssa(config, &mut files)?,
        Mode::Msa => run_msa_mode(config, &mut files)?,
        Mode::Compare => run_compare(config, &mut files)?,
        Mode::Testcase { number, variant, overrides } => {
            run_testcase(config, *number, variant.as_deref(), overrides, &mut files)?
        }
    };
    let mut summary = String::new();
    writeln!(summary, "mode: {}", mode.name()).unwrap();
    writeln!(summary, "config_hash: {}", config.hash()).unwrap();
    writeln!(summary, "seed: {}", config.seed).unwrap();
    summary.push_str(&body);
    let path = config.out_dir.join("summary.txt");
    output::write_text(&path, &summary)?;
    files.push(path);
    Ok(RunReport { summary, files })
}

fn out(config: &ScenarioConfig, name: &str, files: &mut Vec<PathBuf>) -> PathBuf {
    let p = config.out_dir.join(name);
    files.push(p.clone());
    p
}

fn fmt(v: f64) -> String {
    v.to_string()
}

// ---------------------------------------------------------------------------
// Deployment study

/// Statistics of one random map.
#[derive(Debug, Clone, PartialEq)]
pub struct MapStats {
    pub seed: u64,
    pub macros: usize,
    pub femtos: usize,
    pub users: usize,
    pub case_counts: [u64; 4],
    /// Uplink serving distances under the decoupled rule, per user.
    pub ul_distance_dude: Vec<f64>,
    pub ul_distance_rp: Vec<f64>,
    pub dl_distance: Vec<f64>,
    pub sinr_dl: Vec<f64>,
    pub sinr_ul_dude: Vec<f64>,
    pub sinr_ul_rp: Vec<f64>,
    pub throughput_dl: Vec<f64>,
    pub throughput_ul_dude: Vec<f64>,
    pub throughput_ul_rp: Vec<f64>,
}

/// Pooled results of the deployment study.
#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentStudy {
    pub maps: Vec<MapStats>,
    /// Maps drawn without any station.
    pub skipped: usize,
}

fn pooled_mean(maps: &[MapStats], f: impl Fn(&MapStats) -> &Vec<f64>) -> f64 {
    let (sum, n) = maps.iter().fold((0.0, 0usize), |(s, n), m| (s + f(m).iter().sum::<f64>(), n + f(m).len()));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn pooled_db_mean(maps: &[MapStats], f: impl Fn(&MapStats) -> &Vec<f64>) -> f64 {
    let (sum, n) = maps.iter().fold((0.0, 0usize), |(s, n), m| {
        (s + f(m).iter().map(|&v| channel::to_db(v)).sum::<f64>(), n + f(m).len())
    });
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

impl DeploymentStudy {
    pub fn case_frequencies(&self) -> association::CaseFrequencies {
        let mut counts = [0u64; 4];
        for m in &self.maps {
            for k in 0..4 {
                counts[k] += m.case_counts[k];
            }
        }
        association::CaseFrequencies::from_counts(counts)
    }

    pub fn mean_ul_distance_dude(&self) -> f64 {
        pooled_mean(&self.maps, |m| &m.ul_distance_dude)
    }

    pub fn mean_ul_distance_rp(&self) -> f64 {
        pooled_mean(&self.maps, |m| &m.ul_distance_rp)
    }

    pub fn mean_dl_distance(&self) -> f64 {
        pooled_mean(&self.maps, |m| &m.dl_distance)
    }

    /// Mean uplink SINR in dB (mean of per-user dB values).
    pub fn mean_ul_sinr_db_dude(&self) -> f64 {
        pooled_db_mean(&self.maps, |m| &m.sinr_ul_dude)
    }

    pub fn mean_ul_sinr_db_rp(&self) -> f64 {
        pooled_db_mean(&self.maps, |m| &m.sinr_ul_rp)
    }

    pub fn mean_dl_sinr_db(&self) -> f64 {
        pooled_db_mean(&self.maps, |m| &m.sinr_dl)
    }

    pub fn ul_distances_dude(&self) -> Vec<f64> {
        self.maps.iter().flat_map(|m| m.ul_distance_dude.iter().copied()).collect()
    }
}

fn serving_throughput(
    active: usize,
    serving: &[usize],
    sinr: &Array2<f64>,
    deployment: &Deployment,
    config: &ScenarioConfig,
) -> Vec<f64> {
    let active = active.min(serving.len());
    let mut load = vec![0usize; deployment.stations.len()];
    for &b in &serving[..active] {
        load[b] += 1;
    }
    (0..active)
        .map(|u| {
            let b = serving[u];
            let bw = match deployment.stations[b].tier {
                Tier::Macro => config.bandwidth_macro_hz,
                Tier::Femto => config.bandwidth_femto_hz,
            };
            channel::shannon_rate(bw, load[b], sinr[[u, b]])
        })
        .collect()
}

fn deploy_map(
    config: &ScenarioConfig,
    params: &DeploymentParams,
    powers: &TierPowers,
    ch: &ChannelParams,
    seed: u64,
) -> Result<Option<MapStats>, RunError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dep = Deployment::generate(params, &mut rng)?;
    if dep.stations.is_empty() {
        return Ok(None);
    }
    let dude = associate_all(&dep, powers, ch, dude_associate)?;
    let rp = associate_all(&dep, powers, ch, rp_associate)?;
    let (dl, ul) = deployment::link_matrices(&dep, powers, ch, &mut rng)?;
    let dist = |u: usize, b: usize| dep.users[u].distance(dep.stations[b].position);
    let n = dep.users.len();
    let dude_dl: Vec<usize> = dude.iter().map(|o| o.dl_bs).collect();
    let dude_ul: Vec<usize> = dude.iter().map(|o| o.ul_bs).collect();
    let rp_ul: Vec<usize> = rp.iter().map(|o| o.ul_bs).collect();
    Ok(Some(MapStats {
        seed,
        macros: dep.count(Tier::Macro),
        femtos: dep.count(Tier::Femto),
        users: n,
        case_counts: association::case_counts(&dude),
        ul_distance_dude: (0..n).map(|u| dist(u, dude_ul[u])).collect(),
        ul_distance_rp: (0..n).map(|u| dist(u, rp_ul[u])).collect(),
        dl_distance: (0..n).map(|u| dist(u, dude_dl[u])).collect(),
        sinr_dl: (0..n).map(|u| dl.sinr[[u, dude_dl[u]]]).collect(),
        sinr_ul_dude: (0..n).map(|u| ul.sinr[[u, dude_ul[u]]]).collect(),
        sinr_ul_rp: (0..n).map(|u| ul.sinr[[u, rp_ul[u]]]).collect(),
        throughput_dl: serving_throughput(config.active_users_dl, &dude_dl, &dl.sinr, &dep, config),
        throughput_ul_dude: serving_throughput(config.active_users_ul, &dude_ul, &ul.sinr, &dep, config),
        throughput_ul_rp: serving_throughput(config.active_users_ul, &rp_ul, &ul.sinr, &dep, config),
    }))
}

/// Runs `config.replications` random maps and gathers association,
/// distance, SINR and throughput statistics.
pub fn deployment_study(config: &ScenarioConfig) -> Result<DeploymentStudy, RunError> {
    config.validate()?;
    let params = config.deployment_params()?;
    if params.macro_intensity == 0.0 && params.femto_intensity == 0.0 {
        return Err(RunError::EmptyDeployment("both station intensities are zero".into()));
    }
    let powers = config.powers()?;
    let ch = config.channel()?;
    let results: Result<Vec<Option<MapStats>>, RunError> = (0..config.replications)
        .into_par_iter()
        .map(|i| deploy_map(config, &params, &powers, &ch, config.seed.wrapping_add(i as u64)))
        .collect();
    let results = results?;
    let skipped = results.iter().filter(|r| r.is_none()).count();
    Ok(DeploymentStudy { maps: results.into_iter().flatten().collect(), skipped })
}

fn mean_or_nan(v: &[f64]) -> f64 {
    metrics::mean(v).unwrap_or(f64::NAN)
}

fn run_deploy(config: &ScenarioConfig, files: &mut Vec<PathBuf>) -> Result<String, RunError> {
    let study = deployment_study(config)?;
    let header = [
        "replication", "seed", "macros", "femtos", "users", "case1", "case2", "case3", "case4",
        "mean_ul_distance_dude_m", "mean_ul_distance_rp_m", "mean_dl_distance_m",
        "mean_sinr_dl_db", "mean_sinr_ul_dude_db", "mean_sinr_ul_rp_db",
        "sinr_dl_db_of_mean", "sinr_ul_dude_db_of_mean", "sinr_ul_rp_db_of_mean",
        "mean_throughput_dl_bps", "mean_throughput_ul_dude_bps", "mean_throughput_ul_rp_bps",
    ];
    let mut rows = Vec::new();
    for m in &study.maps {
        let freq = association::CaseFrequencies::from_counts(m.case_counts);
        let db = |v: &[f64]| metrics::sinr_summary(v).map(|s| (s.mean_of_db, s.db_of_mean)).unwrap_or((f64::NAN, f64::NAN));
        let (dl_db, dl_lin) = db(&m.sinr_dl);
        let (uld_db, uld_lin) = db(&m.sinr_ul_dude);
        let (ulr_db, ulr_lin) = db(&m.sinr_ul_rp);
        let mut row = vec![
            (m.seed - config.seed).to_string(),
            m.seed.to_string(),
            m.macros.to_string(),
            m.femtos.to_string(),
            m.users.to_string(),
        ];
        row.extend(freq.0.iter().map(|&f| fmt(f)));
        row.extend(
            [
                mean_or_nan(&m.ul_distance_dude),
                mean_or_nan(&m.ul_distance_rp),
                mean_or_nan(&m.dl_distance),
                dl_db,
                uld_db,
                ulr_db,
                dl_lin,
                uld_lin,
                ulr_lin,
                mean_or_nan(&m.throughput_dl),
                mean_or_nan(&m.throughput_ul_dude),
                mean_or_nan(&m.throughput_ul_rp),
            ]
            .map(fmt),
        );
        rows.push(row);
    }
    output::write_table(&out(config, "metrics.csv", files), &header, &rows)?;

    let distances = study.ul_distances_dude();
    if !distances.is_empty() {
        let h = metrics::distance_pdf(&distances, config.histogram_bins)?;
        let rows: Vec<Vec<String>> = h
            .density
            .iter()
            .enumerate()
            .map(|(i, d)| vec![fmt(h.bin_center(i)), fmt(*d)])
            .collect();
        output::write_table(&out(config, "distance_pdf.csv", files), &["distance_m", "density"], &rows)?;
    }

    // Coverage maps and per-user association of the first map.
    let params = config.deployment_params()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dep = Deployment::generate(&params, &mut rng)?;
    if !dep.stations.is_empty() {
        write_coverage(config, &dep, files)?;
        let outcomes = associate_all(&dep, &config.powers()?, &config.channel()?, dude_associate)?;
        let rows: Vec<Vec<String>> = outcomes
            .iter()
            .enumerate()
            .map(|(u, o)| {
                vec![(u + 1).to_string(), (o.dl_bs + 1).to_string(), (o.ul_bs + 1).to_string(), o.case.id().to_string()]
            })
            .collect();
        output::write_table(&out(config, "associations.csv", files), &["user", "dl_bs", "ul_bs", "case"], &rows)?;
    }

    let freq = study.case_frequencies();
    let mut s = String::new();
    writeln!(s, "maps: {} (skipped without stations: {})", study.maps.len(), study.skipped).unwrap();
    writeln!(s, "femto_ratio: {}", config.femto_ratio).unwrap();
    writeln!(s, "case_frequencies: {:?}", freq.0).unwrap();
    writeln!(s, "mean_ul_distance_dude_m: {}", study.mean_ul_distance_dude()).unwrap();
    writeln!(s, "mean_ul_distance_rp_m: {}", study.mean_ul_distance_rp()).unwrap();
    writeln!(s, "mean_dl_distance_m: {}", study.mean_dl_distance()).unwrap();
    writeln!(s, "mean_sinr_dl_db: {}", study.mean_dl_sinr_db()).unwrap();
    writeln!(s, "mean_sinr_ul_dude_db: {}", study.mean_ul_sinr_db_dude()).unwrap();
    writeln!(s, "mean_sinr_ul_rp_db: {}", study.mean_ul_sinr_db_rp()).unwrap();
    writeln!(s, "mean_throughput_dl_bps: {}", pooled_mean(&study.maps, |m| &m.throughput_dl)).unwrap();
    writeln!(s, "mean_throughput_ul_dude_bps: {}", pooled_mean(&study.maps, |m| &m.throughput_ul_dude)).unwrap();
    writeln!(s, "mean_throughput_ul_rp_bps: {}", pooled_mean(&study.maps, |m| &m.throughput_ul_rp)).unwrap();
    Ok(s)
}

/// Downlink weight of a station: `P^(1/alpha)`, so that ordering by
/// `d / W` matches ordering by average received power.
pub fn downlink_weight(tx_mw: f64, path_loss_exponent: f64) -> f64 {
    tx_mw.powf(1.0 / path_loss_exponent)
}

fn write_coverage(config: &ScenarioConfig, dep: &Deployment, files: &mut Vec<PathBuf>) -> Result<(), RunError> {
    let powers = config.powers()?;
    let alpha = config.path_loss_exponent;
    let dl_sites: Vec<WeightedSite> = dep
        .stations
        .iter()
        .map(|s| WeightedSite::new(s.position, downlink_weight(deployment::tier_power(&powers, s.tier).0, alpha)))
        .collect::<Result<_, _>>()?;
    let ul_sites: Vec<WeightedSite> =
        dep.stations.iter().map(|s| WeightedSite::new(s.position, 1.0)).collect::<Result<_, _>>()?;
    // Boundary between each femto and its nearest macro.
    let macros: Vec<(usize, Point2)> = dep
        .stations
        .iter()
        .enumerate()
        .filter(|(_, s)| s.tier == Tier::Macro)
        .map(|(i, s)| (i, s.position))
        .collect();
    let mut overlays = Vec::new();
    if !macros.is_empty() {
        let macro_pos: Vec<Point2> = macros.iter().map(|m| m.1).collect();
        for (i, s) in dep.stations.iter().enumerate() {
            if s.tier == Tier::Femto {
                let m = macros[geometry::nearest_site(s.position, &macro_pos)?].0;
                if let Ok(b) = geometry::apollonius_boundary(&dl_sites[i], &dl_sites[m]) {
                    overlays.push(b);
                }
            }
        }
    }
    let region = dep.region;
    let dl_grid = geometry::rasterize_coverage(&dl_sites, &region, config.grid_resolution)?;
    let ul_grid = geometry::rasterize_coverage(&ul_sites, &region, config.grid_resolution)?;
    output::write_text(
        &out(config, "coverage_dl.svg", files),
        &output::coverage_svg(&region, &dl_grid, dep, &overlays, "downlink coverage"),
    )?;
    output::write_text(
        &out(config, "coverage_ul.svg", files),
        &output::coverage_svg(&region, &ul_grid, dep, &[], "uplink coverage"),
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Allocation scenarios on random maps

/// A random map with its spectral-efficiency matrices and decoupled
/// association.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationInstance {
    pub seed: u64,
    pub deployment: Deployment,
    pub rates_dl: Array2<f64>,
    pub rates_ul: Array2<f64>,
    pub dude: AssociationVectors,
}

pub fn optimization_instance(config: &ScenarioConfig, seed: u64) -> Result<Option<OptimizationInstance>, RunError> {
    let params = config.optimization_deployment_params()?;
    let powers = config.powers()?;
    let ch = config.channel()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dep = Deployment::generate(&params, &mut rng)?;
    if dep.stations.is_empty() || dep.users.is_empty() {
        return Ok(None);
    }
    let outcomes = associate_all(&dep, &powers, &ch, dude_associate)?;
    let (dl, ul) = deployment::link_matrices(&dep, &powers, &ch, &mut rng)?;
    let dude = AssociationVectors::from_outcomes(&outcomes, dep.stations.len());
    Ok(Some(OptimizationInstance {
        seed,
        deployment: dep,
        rates_dl: dl.spectral_efficiency,
        rates_ul: ul.spectral_efficiency,
        dude,
    }))
}

/// Equal split of every station among the users it serves.
pub fn equal_split(serving: &[usize], n_stations: usize) -> Array2<f64> {
    let mut load = vec![0usize; n_stations];
    for &b in serving {
        load[b] += 1;
    }
    let mut y = Array2::zeros((serving.len(), n_stations));
    for (u, &b) in serving.iter().enumerate() {
        y[[u, b]] = 1.0 / load[b] as f64;
    }
    y
}

/// Metrics of the three schemes on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub seed: u64,
    pub baseline: RunMetrics,
    pub ssa: RunMetrics,
    pub msa: RunMetrics,
    /// Largest per-station allocation sum of the raw dual-decomposition
    /// result (its metrics are scored after rescaling to the budgets).
    pub msa_max_budget: f64,
}

fn max_budget(y_dl: &Array2<f64>, y_ul: &Array2<f64>) -> f64 {
    msa::max_column_sum(y_dl).max(msa::max_column_sum(y_ul))
}

/// Metrics of a dual-decomposition result, scored on its budget-feasible
/// rescaling.
fn msa_metrics(rates_dl: &Array2<f64>, rates_ul: &Array2<f64>, m: &MsaSolution) -> Result<RunMetrics, MetricsError> {
    RunMetrics::evaluate(
        rates_dl,
        rates_ul,
        &msa::feasible_allocation(&m.y_dl),
        &msa::feasible_allocation(&m.y_ul),
        &m.chosen_dl,
        &m.chosen_ul,
    )
}

fn msa_on(inst: &OptimizationInstance, config: &ScenarioConfig) -> Result<MsaSolution, RunError> {
    let (u, b) = inst.rates_dl.dim();
    Ok(msa::run_msa(&inst.rates_dl, &inst.rates_ul, &config.msa_params(), config.initial_prices(u, b))?)
}

fn ssa_on(inst: &OptimizationInstance, config: &ScenarioConfig) -> Result<(FixedAssociationProblem, ssa::SsaSolution), RunError> {
    let problem = FixedAssociationProblem::new(inst.rates_dl.clone(), inst.rates_ul.clone(), inst.dude.clone())?;
    let sol = ssa::allocate_fixed(&problem, &config.ssa_params()?)?;
    Ok((problem, sol))
}

pub fn compare_instance(inst: &OptimizationInstance, config: &ScenarioConfig) -> Result<ComparisonRow, RunError> {
    let n_bs = inst.dude.n_stations;
    let base_dl = equal_split(&inst.dude.dl, n_bs);
    let base_ul = equal_split(&inst.dude.ul, n_bs);
    let baseline = RunMetrics::evaluate(&inst.rates_dl, &inst.rates_ul, &base_dl, &base_ul, &inst.dude.dl, &inst.dude.ul)?;
    let (_, s) = ssa_on(inst, config)?;
    let ssa = RunMetrics::evaluate(&inst.rates_dl, &inst.rates_ul, &s.y_dl, &s.y_ul, &inst.dude.dl, &inst.dude.ul)?;
    let m = msa_on(inst, config)?;
    let msa = msa_metrics(&inst.rates_dl, &inst.rates_ul, &m)?;
    Ok(ComparisonRow { seed: inst.seed, baseline, ssa, msa, msa_max_budget: max_budget(&m.y_dl, &m.y_ul) })
}

fn instances(config: &ScenarioConfig) -> Result<(Vec<OptimizationInstance>, usize), RunError> {
    let all: Result<Vec<Option<OptimizationInstance>>, RunError> = (0..config.replications)
        .into_par_iter()
        .map(|i| optimization_instance(config, config.seed.wrapping_add(i as u64)))
        .collect();
    let all = all?;
    let skipped = all.iter().filter(|i| i.is_none()).count();
    let kept: Vec<OptimizationInstance> = all.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(RunError::EmptyDeployment("no replication produced stations and users".into()));
    }
    Ok((kept, skipped))
}

/// Runs the three-way comparison over all replications.
pub fn comparison_study(config: &ScenarioConfig) -> Result<Vec<ComparisonRow>, RunError> {
    config.validate()?;
    let (inst, _) = instances(config)?;
    inst.par_iter().map(|i| compare_instance(i, config)).collect()
}

const METRIC_COLUMNS: [&str; 5] = ["aggregate_se_dl", "aggregate_se_ul", "mean_asymmetry", "load_variance_dl", "load_variance_ul"];

fn metric_fields(m: &RunMetrics) -> Vec<String> {
    [m.aggregate_se_dl, m.aggregate_se_ul, m.mean_asymmetry, m.load_variance_dl, m.load_variance_ul]
        .map(fmt)
        .to_vec()
}

fn average(rows: &[RunMetrics]) -> RunMetrics {
    let n = rows.len().max(1) as f64;
    let sum = |f: fn(&RunMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
    RunMetrics {
        aggregate_se_dl: sum(|m| m.aggregate_se_dl),
        aggregate_se_ul: sum(|m| m.aggregate_se_ul),
        mean_asymmetry: sum(|m| m.mean_asymmetry),
        load_variance_dl: sum(|m| m.load_variance_dl),
        load_variance_ul: sum(|m| m.load_variance_ul),
    }
}

fn describe(name: &str, m: &RunMetrics) -> String {
    format!(
        "{name}: se_dl={} se_ul={} mean_asymmetry={} load_var_dl={} load_var_ul={}\n",
        m.aggregate_se_dl, m.aggregate_se_ul, m.mean_asymmetry, m.load_variance_dl, m.load_variance_ul
    )
}

fn run_compare(config: &ScenarioConfig, files: &mut Vec<PathBuf>) -> Result<String, RunError> {
    let (inst, skipped) = instances(config)?;
    let rows: Vec<ComparisonRow> = inst.par_iter().map(|i| compare_instance(i, config)).collect::<Result<_, _>>()?;
    let mut header = vec!["replication", "seed", "scheme"];
    header.extend(METRIC_COLUMNS);
    header.push("max_budget");
    let mut table = Vec::new();
    for r in &rows {
        for (name, m, budget) in [("baseline", &r.baseline, 1.0), ("ssa", &r.ssa, 1.0), ("msa", &r.msa, r.msa_max_budget)] {
            let mut row = vec![(r.seed - config.seed).to_string(), r.seed.to_string(), name.to_string()];
            row.extend(metric_fields(m));
            row.push(if name == "msa" { fmt(budget) } else { String::new() });
            table.push(row);
        }
    }
    output::write_table(&out(config, "metrics.csv", files), &header, &table)?;
    write_first_instance_msa(config, &inst[0], files)?;
    write_coverage(config, &inst[0].deployment, files)?;

    let mut s = String::new();
    writeln!(s, "replications: {} (skipped: {skipped})", rows.len()).unwrap();
    let collect = |f: fn(&ComparisonRow) -> &RunMetrics| rows.iter().map(|r| f(r).clone()).collect::<Vec<_>>();
    s.push_str(&describe("baseline", &average(&collect(|r| &r.baseline))));
    s.push_str(&describe("ssa", &average(&collect(|r| &r.ssa))));
    s.push_str(&describe("msa", &average(&collect(|r| &r.msa))));
    let worst = rows.iter().map(|r| r.msa_max_budget).fold(0.0, f64::max);
    writeln!(s, "msa_max_budget: {worst}").unwrap();
    Ok(s)
}

fn write_first_instance_msa(config: &ScenarioConfig, inst: &OptimizationInstance, files: &mut Vec<PathBuf>) -> Result<MsaSolution, RunError> {
    let m = msa_on(inst, config)?;
    output::write_matrix(&out(config, "allocations_dl.csv", files), &m.y_dl)?;
    output::write_matrix(&out(config, "allocations_ul.csv", files), &m.y_ul)?;
    output::write_trace(&out(config, "trace.csv", files), &m.trace, 1)?;
    Ok(m)
}

fn run_ssa(config: &ScenarioConfig, files: &mut Vec<PathBuf>) -> Result<String, RunError> {
    let (inst, skipped) = instances(config)?;
    let params = config.ssa_params()?;
    struct Row {
        seed: u64,
        metrics: RunMetrics,
        sign_ok: f64,
        kkt: f64,
    }
    let rows: Vec<Row> = inst
        .par_iter()
        .map(|i| -> Result<Row, RunError> {
            let (problem, s) = ssa_on(i, config)?;
            Ok(Row {
                seed: i.seed,
                metrics: RunMetrics::evaluate(&i.rates_dl, &i.rates_ul, &s.y_dl, &s.y_ul, &i.dude.dl, &i.dude.ul)?,
                sign_ok: s.sign_approx_ok_fraction,
                kkt: ssa::check_kkt_residuals(&s, &problem, &params),
            })
        })
        .collect::<Result<_, _>>()?;
    let mut header = vec!["replication", "seed"];
    header.extend(METRIC_COLUMNS);
    header.extend(["sign_approx_ok_fraction", "kkt_residual"]);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![(r.seed - config.seed).to_string(), r.seed.to_string()];
            row.extend(metric_fields(&r.metrics));
            row.extend([fmt(r.sign_ok), fmt(r.kkt)]);
            row
        })
        .collect();
    output::write_table(&out(config, "metrics.csv", files), &header, &table)?;

    let (problem, first) = ssa_on(&inst[0], config)?;
    output::write_matrix(&out(config, "allocations_dl.csv", files), &first.y_dl)?;
    output::write_matrix(&out(config, "allocations_ul.csv", files), &first.y_ul)?;
    let users: Vec<Vec<String>> = (0..problem.n_users())
        .map(|u| {
            let (dl, ul) = (problem.assoc().dl[u], problem.assoc().ul[u]);
            let se_dl = problem.serving_rate(u, ssa::Link::Downlink) * first.y_dl[[u, dl]];
            let se_ul = problem.serving_rate(u, ssa::Link::Uplink) * first.y_ul[[u, ul]];
            vec![
                (u + 1).to_string(),
                fmt(first.y_dl[[u, dl]]),
                fmt(first.y_ul[[u, ul]]),
                fmt(se_dl),
                fmt(se_ul),
                fmt((se_dl - se_ul).abs()),
            ]
        })
        .collect();
    output::write_table(
        &out(config, "users.csv", files),
        &["user", "dl_alloc", "ul_alloc", "dl_se", "ul_se", "asymmetry"],
        &users,
    )?;
    write_coverage(config, &inst[0].deployment, files)?;

    let mut s = String::new();
    writeln!(s, "replications: {} (skipped: {skipped})", rows.len()).unwrap();
    s.push_str(&describe("ssa", &average(&rows.iter().map(|r| r.metrics.clone()).collect::<Vec<_>>())));
    let n = rows.len() as f64;
    writeln!(s, "mean_sign_approx_ok_fraction: {}", rows.iter().map(|r| r.sign_ok).sum::<f64>() / n).unwrap();
    writeln!(s, "max_kkt_residual: {}", rows.iter().map(|r| r.kkt).fold(0.0, f64::max)).unwrap();
    Ok(s)
}

fn run_msa_mode(config: &ScenarioConfig, files: &mut Vec<PathBuf>) -> Result<String, RunError> {
    let (inst, skipped) = instances(config)?;
    let rows: Vec<(u64, RunMetrics, f64)> = inst
        .par_iter()
        .map(|i| -> Result<_, RunError> {
            let m = msa_on(i, config)?;
            let metrics = msa_metrics(&i.rates_dl, &i.rates_ul, &m)?;
            Ok((i.seed, metrics, max_budget(&m.y_dl, &m.y_ul)))
        })
        .collect::<Result<_, _>>()?;
    let mut header = vec!["replication", "seed"];
    header.extend(METRIC_COLUMNS);
    header.push("max_budget");
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|(seed, m, b)| {
            let mut row = vec![(seed - config.seed).to_string(), seed.to_string()];
            row.extend(metric_fields(m));
            row.push(fmt(*b));
            row
        })
        .collect();
    output::write_table(&out(config, "metrics.csv", files), &header, &table)?;
    let first = write_first_instance_msa(config, &inst[0], files)?;
    write_coverage(config, &inst[0].deployment, files)?;
    let mut s = String::new();
    writeln!(s, "replications: {} (skipped: {skipped})", rows.len()).unwrap();
    s.push_str(&describe("msa", &average(&rows.iter().map(|r| r.1.clone()).collect::<Vec<_>>())));
    s.push_str(&oscillation_report(config, &first));
    Ok(s)
}

fn oscillation_report(config: &ScenarioConfig, sol: &MsaSolution) -> String {
    let fmt_set = |set: std::collections::BTreeSet<usize>| {
        set.into_iter().map(|b| format!("bs{}", b + 1)).collect::<Vec<_>>().join(" ")
    };
    let dl = msa::detect_oscillation(&sol.trace.station_prices_dl(), config.oscillation_window, config.oscillation_tolerance);
    let ul = msa::detect_oscillation(&sol.trace.station_prices_ul(), config.oscillation_window, config.oscillation_tolerance);
    format!(
        "oscillating_dl: [{}]\noscillating_ul: [{}]\nsaturated_rounds: {}\n",
        fmt_set(dl),
        fmt_set(ul),
        sol.saturated_rounds
    )
}

// ---------------------------------------------------------------------------
// Hand-built scenarios

/// Runs a hand-built scenario with its own settings, adjusted by
/// `overrides`.
pub fn solve_testcase(
    number: u8,
    variant: Option<&str>,
    overrides: &TestcaseOverrides,
) -> Result<MsaSolution, RunError> {
    let t = load_testcase(number, variant)?;
    let params = overrides.apply(t.params);
    let mut init: PriceState = t.initial_prices();
    let (u, b) = t.rates_dl.dim();
    if overrides.initial_station_price.is_some() || overrides.initial_user_price.is_some() {
        init = PriceState::uniform(
            u,
            b,
            overrides.initial_station_price.unwrap_or(init.station_dl[0]),
            overrides.initial_user_price.unwrap_or(init.user_dl[0]),
        );
    }
    Ok(msa::run_msa(&t.rates_dl, &t.rates_ul, &params, init)?)
}

fn run_testcase(
    config: &ScenarioConfig,
    number: u8,
    variant: Option<&str>,
    overrides: &TestcaseOverrides,
    files: &mut Vec<PathBuf>,
) -> Result<String, RunError> {
    let t = load_testcase(number, variant)?;
    let params = overrides.apply(t.params);
    params.validate()?;
    let sol = solve_testcase(number, variant, overrides)?;
    output::write_matrix(&out(config, "allocations_dl.csv", files), &sol.y_dl)?;
    output::write_matrix(&out(config, "allocations_ul.csv", files), &sol.y_ul)?;
    output::write_trace(&out(config, "trace.csv", files), &sol.trace, 1)?;
    let m = RunMetrics::evaluate(&t.rates_dl, &t.rates_ul, &sol.y_dl, &sol.y_ul, &sol.chosen_dl, &sol.chosen_ul)?;
    let mut header = METRIC_COLUMNS.to_vec();
    header.push("max_budget");
    let mut row = metric_fields(&m);
    row.push(fmt(max_budget(&sol.y_dl, &sol.y_ul)));
    output::write_table(&out(config, "metrics.csv", files), &header, &[row])?;
    let rate_dl = metrics::user_rates(&t.rates_dl, &sol.y_dl);
    let rate_ul = metrics::user_rates(&t.rates_ul, &sol.y_ul);
    let users: Vec<Vec<String>> = (0..t.rates_dl.nrows())
        .map(|u| {
            vec![
                (u + 1).to_string(),
                (sol.chosen_dl[u] + 1).to_string(),
                (sol.chosen_ul[u] + 1).to_string(),
                fmt(rate_dl[u]),
                fmt(rate_ul[u]),
                fmt(rate_dl[u] - rate_ul[u]),
            ]
        })
        .collect();
    output::write_table(
        &out(config, "users.csv", files),
        &["user", "dl_bs", "ul_bs", "dl_rate", "ul_rate", "asymmetry"],
        &users,
    )?;

    let mut s = String::new();
    writeln!(s, "testcase: {}", t.label()).unwrap();
    writeln!(
        s,
        "alpha: {} epsilon_u: {} gamma: {} iterations: {} formula: {} hysteresis: {}",
        params.alpha, params.epsilon, params.step, params.iterations, params.formula, params.hysteresis
    )
    .unwrap();
    let idx = |v: &[usize]| v.iter().map(|b| (b + 1).to_string()).collect::<Vec<_>>().join(" ");
    writeln!(s, "chosen_dl: [{}]", idx(&sol.chosen_dl)).unwrap();
    writeln!(s, "chosen_ul: [{}]", idx(&sol.chosen_ul)).unwrap();
    s.push_str(&describe("metrics", &m));
    s.push_str(&oscillation_report(config, &sol));
    Ok(s)
}

/// Convenience for tests and tools: the files a run wrote, relative to
/// the output directory.
pub fn relative_names(report: &RunReport, dir: &Path) -> Vec<String> {
    report
        .files
        .iter()
        .map(|p| p.strip_prefix(dir).unwrap_or(p).display().to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_split_divides_load() {
        let y = equal_split(&[0, 0, 1], 3);
        assert_eq!(y.row(0).to_vec(), vec![0.5, 0.0, 0.0]);
        assert_eq!(y.row(2).to_vec(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn downlink_weight_orders_like_power() {
        let w_m = downlink_weight(100.0, 4.0);
        let w_f = downlink_weight(1.0, 4.0);
        // Equal weighted distance <=> equal received power.
        let (d_m, d_f) = (10.0 * w_m, 10.0 * w_f);
        assert!((100.0 * d_m.powi(-4) - d_f.powi(-4)).abs() < 1e-15);
    }

    #[test]
    fn overrides_apply() {
        let o = TestcaseOverrides { alpha: Some(2.0), hysteresis: Some(0.1), ..Default::default() };
        let p = o.apply(MsaParams::default());
        assert_eq!((p.alpha, p.hysteresis, p.step), (2.0, 0.1, 0.004));
    }
}
