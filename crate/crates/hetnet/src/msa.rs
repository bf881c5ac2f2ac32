//! Joint association and allocation by dual decomposition.
//!
//! Every station posts a resource price per link and every user an
//! asymmetry price pair. In each round all users, at fixed prices, pick the
//! station with the cheapest price per unit rate and demand their
//! utility-optimal share; then all prices take one projected gradient step.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView1};
use thiserror::Error;

use crate::channel::{self, ChannelError, LOG_BRANCH_TOLERANCE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MsaError {
    #[error("unreachable user {0}: every rate is zero")]
    UnreachableUser(usize),
    #[error("price collapse: non-positive allocation denominator {0}")]
    PriceCollapse(f64),
    #[error("rate matrices must share a shape, got {dl:?} and {ul:?}")]
    Shape { dl: (usize, usize), ul: (usize, usize) },
    #[error("rates must be finite and non-negative")]
    InvalidRate,
    #[error("initial prices do not match {users} users and {stations} stations")]
    PriceShape { users: usize, stations: usize },
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Which closed form a user applies once it has picked a station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AllocationFormula {
    /// Asymmetry prices enter the share:
    /// `(r^(1-a) / (nu - r*(lambda_other - lambda_own)))^(1/a)`.
    Original,
    /// Asymmetry prices only steer the station choice: `(r^(1-a) / nu)^(1/a)`.
    #[default]
    Modified,
}

impl std::str::FromStr for AllocationFormula {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "original" => Ok(Self::Original),
            "modified" => Ok(Self::Modified),
            other => Err(format!("unknown allocation formula '{other}' (original|modified)")),
        }
    }
}

impl std::fmt::Display for AllocationFormula {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Original => "original",
            Self::Modified => "modified",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsaParams {
    pub alpha: f64,
    /// Per-user bound on |downlink rate - uplink rate|.
    pub epsilon: f64,
    /// Gradient step.
    pub step: f64,
    pub iterations: usize,
    pub formula: AllocationFormula,
    /// A user leaves its current station only when another one is cheaper
    /// by more than this margin.
    pub hysteresis: f64,
}

impl Default for MsaParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            epsilon: 2.0,
            step: 0.004,
            iterations: 8000,
            formula: AllocationFormula::Modified,
            hysteresis: 0.0,
        }
    }
}

impl MsaParams {
    pub fn validate(&self) -> Result<(), MsaError> {
        let bad = |name, value| Err(MsaError::InvalidParameter { name, value });
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad("alpha", self.alpha);
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return bad("epsilon", self.epsilon);
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return bad("step", self.step);
        }
        if self.iterations == 0 {
            return bad("iterations", 0.0);
        }
        if !(self.hysteresis.is_finite() && self.hysteresis >= 0.0) {
            return bad("hysteresis", self.hysteresis);
        }
        Ok(())
    }
}

/// Dual variables: per-station prices and per-user asymmetry prices.
///
/// `user_dl` prices the constraint `R' - R <= eps` and `user_ul` prices
/// `R - R' <= eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceState {
    pub station_dl: Vec<f64>,
    pub station_ul: Vec<f64>,
    pub user_dl: Vec<f64>,
    pub user_ul: Vec<f64>,
    pub iteration: usize,
}

impl PriceState {
    pub fn uniform(users: usize, stations: usize, station_price: f64, user_price: f64) -> Self {
        Self {
            station_dl: vec![station_price; stations],
            station_ul: vec![station_price; stations],
            user_dl: vec![user_price; users],
            user_ul: vec![user_price; users],
            iteration: 0,
        }
    }

    fn all_nonnegative(&self) -> bool {
        self.station_dl
            .iter()
            .chain(&self.station_ul)
            .chain(&self.user_dl)
            .chain(&self.user_ul)
            .all(|&v| v >= 0.0)
    }

    /// Shift of the per-unit-rate cost seen by user `u` on the downlink.
    pub fn coupling_dl(&self, u: usize) -> f64 {
        self.user_ul[u] - self.user_dl[u]
    }

    pub fn coupling_ul(&self, u: usize) -> f64 {
        self.user_dl[u] - self.user_ul[u]
    }
}

fn station_metric(price: f64, rate: f64, coupling: f64) -> f64 {
    (price - rate * coupling) / rate
}

/// Cheapest station per unit rate among those with positive rate. With
/// hysteresis, the incumbent is kept unless the best alternative beats it
/// by more than the margin.
pub fn choose_bs(
    rates: ArrayView1<f64>,
    prices: &[f64],
    coupling: f64,
    incumbent: Option<usize>,
    hysteresis: f64,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (b, (&r, &p)) in rates.iter().zip(prices).enumerate() {
        if r <= 0.0 {
            continue;
        }
        let m = station_metric(p, r, coupling);
        match best {
            Some((_, bm)) if m >= bm => {}
            _ => best = Some((b, m)),
        }
    }
    let (b, m) = best?;
    match incumbent {
        Some(i) if hysteresis > 0.0 && rates[i] > 0.0 => {
            let mi = station_metric(prices[i], rates[i], coupling);
            Some(if mi - m > hysteresis { b } else { i })
        }
        _ => Some(b),
    }
}

/// Downlink choice of user `u` (the cheapest station per unit rate).
pub fn choose_bs_dl(
    u: usize,
    rates: ArrayView1<f64>,
    state: &PriceState,
    incumbent: Option<usize>,
    hysteresis: f64,
) -> Result<usize, MsaError> {
    choose_bs(rates, &state.station_dl, state.coupling_dl(u), incumbent, hysteresis)
        .ok_or(MsaError::UnreachableUser(u))
}

pub fn choose_bs_ul(
    u: usize,
    rates: ArrayView1<f64>,
    state: &PriceState,
    incumbent: Option<usize>,
    hysteresis: f64,
) -> Result<usize, MsaError> {
    choose_bs(rates, &state.station_ul, state.coupling_ul(u), incumbent, hysteresis)
        .ok_or(MsaError::UnreachableUser(u))
}

/// Utility-optimal share at station price `price` for rate `rate`, clamped
/// to [0, 1].
pub fn user_allocation(
    rate: f64,
    price: f64,
    coupling: f64,
    alpha: f64,
    formula: AllocationFormula,
) -> Result<f64, MsaError> {
    let denominator = match formula {
        AllocationFormula::Original => price - rate * coupling,
        AllocationFormula::Modified => price,
    };
    if !(denominator > 0.0) {
        return Err(MsaError::PriceCollapse(denominator));
    }
    let y = if (alpha - 1.0).abs() < LOG_BRANCH_TOLERANCE {
        1.0 / denominator
    } else {
        (rate.powf(1.0 - alpha) / denominator).powf(1.0 / alpha)
    };
    Ok(y.clamp(0.0, 1.0))
}

pub fn user_allocation_dl(
    u: usize,
    rate: f64,
    station: usize,
    state: &PriceState,
    params: &MsaParams,
) -> Result<f64, MsaError> {
    user_allocation(rate, state.station_dl[station], state.coupling_dl(u), params.alpha, params.formula)
}

pub fn user_allocation_ul(
    u: usize,
    rate: f64,
    station: usize,
    state: &PriceState,
    params: &MsaParams,
) -> Result<f64, MsaError> {
    user_allocation(rate, state.station_ul[station], state.coupling_ul(u), params.alpha, params.formula)
}

fn project_step(price: &mut f64, step: f64, slack: f64) {
    *price = (*price - step * slack).max(0.0);
}

/// Station prices fall when their budget is under-used and rise otherwise.
pub fn update_bs_prices(state: &mut PriceState, y_dl: &Array2<f64>, y_ul: &Array2<f64>, step: f64) {
    for (prices, y) in [(&mut state.station_dl, y_dl), (&mut state.station_ul, y_ul)] {
        for (b, p) in prices.iter_mut().enumerate() {
            project_step(p, step, 1.0 - y.column(b).sum());
        }
    }
}

/// Asymmetry prices grow while a user's rate gap exceeds `epsilon`.
pub fn update_user_prices(
    state: &mut PriceState,
    rate_dl: &[f64],
    rate_ul: &[f64],
    epsilon: f64,
    step: f64,
) {
    for u in 0..state.user_dl.len() {
        project_step(&mut state.user_dl[u], step, rate_ul[u] - rate_dl[u] + epsilon);
        project_step(&mut state.user_ul[u], step, rate_dl[u] - rate_ul[u] + epsilon);
    }
}

/// Price history, one snapshot per completed round (after the update).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub prices: Vec<PriceState>,
    pub choices_dl: Vec<Vec<usize>>,
    pub choices_ul: Vec<Vec<usize>>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    /// Downlink station prices, one row per round.
    pub fn station_prices_dl(&self) -> Vec<Vec<f64>> {
        self.prices.iter().map(|p| p.station_dl.clone()).collect()
    }

    pub fn station_prices_ul(&self) -> Vec<Vec<f64>> {
        self.prices.iter().map(|p| p.station_ul.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsaSolution {
    pub y_dl: Array2<f64>,
    pub y_ul: Array2<f64>,
    pub chosen_dl: Vec<usize>,
    pub chosen_ul: Vec<usize>,
    pub prices: PriceState,
    pub trace: Trace,
    /// Rounds in which some user met a non-positive price denominator and
    /// was saturated at a full share.
    pub saturated_rounds: usize,
}

/// Share used inside the iteration: a non-positive denominator means the
/// resource is free to the user, so the demand saturates at the cap.
fn iteration_share(rate: f64, price: f64, coupling: f64, params: &MsaParams) -> (f64, bool) {
    match user_allocation(rate, price, coupling, params.alpha, params.formula) {
        Ok(y) => (y, false),
        Err(_) => (1.0, true),
    }
}

/// Runs `params.iterations` synchronous rounds from `initial`.
pub fn run_msa(
    rates_dl: &Array2<f64>,
    rates_ul: &Array2<f64>,
    params: &MsaParams,
    initial: PriceState,
) -> Result<MsaSolution, MsaError> {
    params.validate()?;
    if rates_dl.dim() != rates_ul.dim() {
        return Err(MsaError::Shape { dl: rates_dl.dim(), ul: rates_ul.dim() });
    }
    if rates_dl.iter().chain(rates_ul.iter()).any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(MsaError::InvalidRate);
    }
    let (n_users, n_bs) = rates_dl.dim();
    if initial.station_dl.len() != n_bs
        || initial.station_ul.len() != n_bs
        || initial.user_dl.len() != n_users
        || initial.user_ul.len() != n_users
        || !initial.all_nonnegative()
    {
        return Err(MsaError::PriceShape { users: n_users, stations: n_bs });
    }

    let mut state = initial;
    let mut chosen_dl: Vec<Option<usize>> = vec![None; n_users];
    let mut chosen_ul: Vec<Option<usize>> = vec![None; n_users];
    let mut y_dl = Array2::zeros((n_users, n_bs));
    let mut y_ul = Array2::zeros((n_users, n_bs));
    let mut trace = Trace::default();
    let mut saturated_rounds = 0;

    for _ in 0..params.iterations {
        y_dl.fill(0.0);
        y_ul.fill(0.0);
        let mut saturated = false;
        for u in 0..n_users {
            let b = choose_bs_dl(u, rates_dl.row(u), &state, chosen_dl[u], params.hysteresis)?;
            let (y, sat) = iteration_share(rates_dl[[u, b]], state.station_dl[b], state.coupling_dl(u), params);
            y_dl[[u, b]] = y;
            chosen_dl[u] = Some(b);
            saturated |= sat;

            let b = choose_bs_ul(u, rates_ul.row(u), &state, chosen_ul[u], params.hysteresis)?;
            let (y, sat) = iteration_share(rates_ul[[u, b]], state.station_ul[b], state.coupling_ul(u), params);
            y_ul[[u, b]] = y;
            chosen_ul[u] = Some(b);
            saturated |= sat;
        }
        saturated_rounds += usize::from(saturated);

        let rate_dl: Vec<f64> = (0..n_users).map(|u| rates_dl.row(u).dot(&y_dl.row(u))).collect();
        let rate_ul: Vec<f64> = (0..n_users).map(|u| rates_ul.row(u).dot(&y_ul.row(u))).collect();
        update_bs_prices(&mut state, &y_dl, &y_ul, params.step);
        update_user_prices(&mut state, &rate_dl, &rate_ul, params.epsilon, params.step);
        state.iteration += 1;
        debug_assert!(state.all_nonnegative());

        let unwrap = |c: &[Option<usize>]| c.iter().map(|b| b.expect("every user chose")).collect();
        trace.choices_dl.push(unwrap(&chosen_dl));
        trace.choices_ul.push(unwrap(&chosen_ul));
        trace.prices.push(state.clone());
    }

    let flatten = |c: Vec<Option<usize>>| c.into_iter().map(|b| b.expect("every user chose")).collect();
    Ok(MsaSolution {
        y_dl,
        y_ul,
        chosen_dl: flatten(chosen_dl),
        chosen_ul: flatten(chosen_ul),
        prices: state,
        trace,
        saturated_rounds,
    })
}

/// Stations whose price keeps swinging at the end of the run.
///
/// Only the trailing `window` rounds are inspected, and never more than the
/// second half of the run. A least-squares line is removed from each
/// station's prices first, so slow monotone convergence is not mistaken for
/// oscillation; a station is flagged when the range of what remains
/// exceeds `tol`.
pub fn detect_oscillation(prices: &[Vec<f64>], window: usize, tol: f64) -> BTreeSet<usize> {
    let mut flagged = BTreeSet::new();
    let n = prices.len();
    let w = window.min(n / 2);
    if w < 3 {
        return flagged;
    }
    let tail = &prices[n - w..];
    let n_bs = tail[0].len();
    let t_mean = (w - 1) as f64 / 2.0;
    let t_var: f64 = (0..w).map(|t| (t as f64 - t_mean).powi(2)).sum();
    for b in 0..n_bs {
        let series: Vec<f64> = tail.iter().map(|row| row[b]).collect();
        let mean = series.iter().sum::<f64>() / w as f64;
        let cov: f64 = series.iter().enumerate().map(|(t, v)| (t as f64 - t_mean) * (v - mean)).sum();
        let slope = cov / t_var;
        let (lo, hi) = series
            .iter()
            .enumerate()
            .map(|(t, v)| v - mean - slope * (t as f64 - t_mean))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
        if hi - lo > tol {
            flagged.insert(b);
        }
    }
    flagged
}

/// Largest per-station allocation sum.
pub fn max_column_sum(y: &Array2<f64>) -> f64 {
    y.columns().into_iter().map(|c| c.sum()).fold(0.0, f64::max)
}

/// Scales down every station column whose allocations sum above 1. The
/// dual iterates only satisfy the budgets on average, so this gives a
/// feasible allocation to score.
pub fn feasible_allocation(y: &Array2<f64>) -> Array2<f64> {
    let mut y = y.clone();
    for mut col in y.columns_mut() {
        let s = col.sum();
        if s > 1.0 {
            col.mapv_inplace(|v| v / s);
        }
    }
    y
}

/// Sum of alpha-fair utilities of both links' user rates.
pub fn objective(
    rates_dl: &Array2<f64>,
    rates_ul: &Array2<f64>,
    y_dl: &Array2<f64>,
    y_ul: &Array2<f64>,
    alpha: f64,
) -> Result<f64, MsaError> {
    let mut total = 0.0;
    for u in 0..rates_dl.nrows() {
        total += channel::utility(rates_dl.row(u).dot(&y_dl.row(u)), alpha)?;
        total += channel::utility(rates_ul.row(u).dot(&y_ul.row(u)), alpha)?;
    }
    Ok(total)
}
