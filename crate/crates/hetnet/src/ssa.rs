//! Optimal resource split under a fixed single-station association.
//!
//! Each user is served by one station per link. Per station the allocation
//! maximizing the alpha-fair utility minus an asymmetry penalty
//! `A * |R - R'|` has the closed form
//! `y = (r^(1-alpha) / (A*r*s + lambda))^(1/alpha)` where `s` is the sign of
//! the user's (downlink - uplink) serving rate and `lambda` is the station's
//! budget multiplier, found by bisection. The uplink uses `-A*r'*s`.

use ndarray::Array2;
use thiserror::Error;

use crate::association::AssociationVectors;
use crate::channel::{self, ChannelError, LOG_BRANCH_TOLERANCE};

/// Multiplier bisection stops once the budget residual is this small.
pub const BUDGET_TOLERANCE: f64 = 1e-10;
const MAX_BISECTION_STEPS: usize = 200;
const BRACKET_OFFSET: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SsaError {
    #[error("idle station {0}: no user is served on this link")]
    IdleStation(usize),
    #[error("bisection bracket could not be established for station {0}")]
    BisectionBracket(usize),
    #[error("fairness alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("asymmetry weight must be non-negative and finite, got {0}")]
    InvalidWeight(f64),
    #[error("rate matrices must both be {users}x{stations}")]
    Shape { users: usize, stations: usize },
    #[error("user {user} has non-positive serving rate on its {link} station")]
    ZeroServingRate { user: usize, link: Link },
    #[error("rates must be finite and non-negative")]
    InvalidRate,
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Downlink,
    Uplink,
}

impl std::fmt::Display for Link {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Link::Downlink => "downlink",
            Link::Uplink => "uplink",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsaParams {
    alpha: f64,
    asymmetry_weight: f64,
}

impl SsaParams {
    pub fn new(alpha: f64, asymmetry_weight: f64) -> Result<Self, SsaError> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(SsaError::InvalidAlpha(alpha));
        }
        if !(asymmetry_weight.is_finite() && asymmetry_weight >= 0.0) {
            return Err(SsaError::InvalidWeight(asymmetry_weight));
        }
        Ok(Self { alpha, asymmetry_weight })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn asymmetry_weight(&self) -> f64 {
        self.asymmetry_weight
    }
}

/// Rates of every (user, station) pair plus the fixed serving stations.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedAssociationProblem {
    rates_dl: Array2<f64>,
    rates_ul: Array2<f64>,
    assoc: AssociationVectors,
}

impl FixedAssociationProblem {
    pub fn new(
        rates_dl: Array2<f64>,
        rates_ul: Array2<f64>,
        assoc: AssociationVectors,
    ) -> Result<Self, SsaError> {
        let shape = (assoc.n_users(), assoc.n_stations);
        let shape_err = SsaError::Shape { users: shape.0, stations: shape.1 };
        if rates_dl.dim() != shape || rates_ul.dim() != shape || assoc.ul.len() != shape.0 {
            return Err(shape_err);
        }
        if assoc.dl.iter().chain(&assoc.ul).any(|&b| b >= shape.1) {
            return Err(shape_err);
        }
        if rates_dl.iter().chain(rates_ul.iter()).any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(SsaError::InvalidRate);
        }
        for u in 0..shape.0 {
            if rates_dl[[u, assoc.dl[u]]] <= 0.0 {
                return Err(SsaError::ZeroServingRate { user: u, link: Link::Downlink });
            }
            if rates_ul[[u, assoc.ul[u]]] <= 0.0 {
                return Err(SsaError::ZeroServingRate { user: u, link: Link::Uplink });
            }
        }
        Ok(Self { rates_dl, rates_ul, assoc })
    }

    pub fn rates_dl(&self) -> &Array2<f64> {
        &self.rates_dl
    }

    pub fn rates_ul(&self) -> &Array2<f64> {
        &self.rates_ul
    }

    pub fn assoc(&self) -> &AssociationVectors {
        &self.assoc
    }

    pub fn n_users(&self) -> usize {
        self.assoc.n_users()
    }

    pub fn n_stations(&self) -> usize {
        self.assoc.n_stations
    }

    /// Rate of user `u` at its serving station on `link`.
    pub fn serving_rate(&self, u: usize, link: Link) -> f64 {
        match link {
            Link::Downlink => self.rates_dl[[u, self.assoc.dl[u]]],
            Link::Uplink => self.rates_ul[[u, self.assoc.ul[u]]],
        }
    }

    fn users_of(&self, bs: usize, link: Link) -> Vec<usize> {
        let serving = match link {
            Link::Downlink => &self.assoc.dl,
            Link::Uplink => &self.assoc.ul,
        };
        (0..serving.len()).filter(|&u| serving[u] == bs).collect()
    }
}

/// Sign of (downlink - uplink) serving rate of user `u`: -1, 0 or +1.
pub fn sign_metric(problem: &FixedAssociationProblem, u: usize) -> i8 {
    let diff = problem.serving_rate(u, Link::Downlink) - problem.serving_rate(u, Link::Uplink);
    sign(diff)
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

fn is_log_branch(alpha: f64) -> bool {
    (alpha - 1.0).abs() < LOG_BRANCH_TOLERANCE
}

/// Closed-form share for rate `rate` given the denominator
/// `penalty + lambda`.
fn share(rate: f64, denominator: f64, alpha: f64) -> f64 {
    if is_log_branch(alpha) {
        1.0 / denominator
    } else {
        (rate.powf(1.0 - alpha) / denominator).powf(1.0 / alpha)
    }
}

/// Penalty coefficient entering the denominator for user `u` on `link`.
fn penalty(problem: &FixedAssociationProblem, params: &SsaParams, u: usize, link: Link) -> f64 {
    let s = f64::from(sign_metric(problem, u));
    let r = problem.serving_rate(u, link);
    match link {
        Link::Downlink => params.asymmetry_weight * r * s,
        Link::Uplink => -params.asymmetry_weight * r * s,
    }
}

fn solve_bs_multiplier(
    bs: usize,
    link: Link,
    problem: &FixedAssociationProblem,
    params: &SsaParams,
) -> Result<f64, SsaError> {
    let users = problem.users_of(bs, link);
    if users.is_empty() {
        return Err(SsaError::IdleStation(bs));
    }
    let terms: Vec<(f64, f64)> = users
        .iter()
        .map(|&u| (problem.serving_rate(u, link), penalty(problem, params, u, link)))
        .collect();
    let budget_excess = |lambda: f64| -> f64 {
        terms.iter().map(|&(r, c)| share(r, c + lambda, params.alpha)).sum::<f64>() - 1.0
    };

    let min_penalty = terms.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
    let pole = (-min_penalty).max(0.0);
    if pole == 0.0 && min_penalty > 0.0 {
        // Every denominator stays positive at lambda = 0: the budget may be
        // slack, in which case the multiplier is zero.
        if budget_excess(0.0) <= 0.0 {
            return Ok(0.0);
        }
    }
    let mut lo = pole + BRACKET_OFFSET;
    if budget_excess(lo) <= 0.0 {
        return Ok(lo);
    }
    let mut hi = lo.max(1.0);
    while budget_excess(hi) >= 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(SsaError::BisectionBracket(bs));
        }
    }
    let mut best = (hi, budget_excess(hi).abs());
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = budget_excess(mid);
        if f.abs() < best.1 {
            best = (mid, f.abs());
        }
        if f > 0.0 {
            lo = mid;
        } else if f < 0.0 {
            hi = mid;
        } else {
            break;
        }
    }
    if best.1 > BUDGET_TOLERANCE {
        return Err(SsaError::BisectionBracket(bs));
    }
    Ok(best.0)
}

/// Downlink budget multiplier of station `bs`.
pub fn solve_bs_multiplier_dl(
    bs: usize,
    problem: &FixedAssociationProblem,
    params: &SsaParams,
) -> Result<f64, SsaError> {
    solve_bs_multiplier(bs, Link::Downlink, problem, params)
}

/// Uplink budget multiplier of station `bs`.
pub fn solve_bs_multiplier_ul(
    bs: usize,
    problem: &FixedAssociationProblem,
    params: &SsaParams,
) -> Result<f64, SsaError> {
    solve_bs_multiplier(bs, Link::Uplink, problem, params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsaSolution {
    pub y_dl: Array2<f64>,
    pub y_ul: Array2<f64>,
    /// Per-station multipliers; `None` for stations idle on that link.
    pub lambda_dl: Vec<Option<f64>>,
    pub lambda_ul: Vec<Option<f64>>,
    /// Fraction of users whose realized rate ordering agrees with the
    /// serving-rate sign used to build the solution.
    pub sign_approx_ok_fraction: f64,
}

/// Allocation for user `u` on `link` at multiplier `lambda`.
pub fn user_share(
    problem: &FixedAssociationProblem,
    params: &SsaParams,
    u: usize,
    link: Link,
    lambda: f64,
) -> f64 {
    let r = problem.serving_rate(u, link);
    share(r, penalty(problem, params, u, link) + lambda, params.alpha)
}

pub fn allocate_fixed(
    problem: &FixedAssociationProblem,
    params: &SsaParams,
) -> Result<SsaSolution, SsaError> {
    let (n_users, n_bs) = (problem.n_users(), problem.n_stations());
    let mut y_dl = Array2::zeros((n_users, n_bs));
    let mut y_ul = Array2::zeros((n_users, n_bs));
    let mut lambda_dl = vec![None; n_bs];
    let mut lambda_ul = vec![None; n_bs];
    for bs in 0..n_bs {
        for (link, lambdas, y) in [
            (Link::Downlink, &mut lambda_dl, &mut y_dl),
            (Link::Uplink, &mut lambda_ul, &mut y_ul),
        ] {
            let users = problem.users_of(bs, link);
            if users.is_empty() {
                continue;
            }
            let lambda = solve_bs_multiplier(bs, link, problem, params)?;
            lambdas[bs] = Some(lambda);
            for u in users {
                y[[u, bs]] = user_share(problem, params, u, link, lambda);
            }
        }
    }
    let agree = (0..n_users)
        .filter(|&u| {
            let r = problem.serving_rate(u, Link::Downlink) * y_dl[[u, problem.assoc.dl[u]]];
            let r_ul = problem.serving_rate(u, Link::Uplink) * y_ul[[u, problem.assoc.ul[u]]];
            sign(r - r_ul) == sign_metric(problem, u)
        })
        .count();
    let sign_approx_ok_fraction = if n_users == 0 { 1.0 } else { agree as f64 / n_users as f64 };
    Ok(SsaSolution { y_dl, y_ul, lambda_dl, lambda_ul, sign_approx_ok_fraction })
}

/// Largest violation of the optimality conditions (stationarity under the
/// sign approximation, primal and dual feasibility, complementary
/// slackness, zero allocation off the association).
pub fn check_kkt_residuals(
    solution: &SsaSolution,
    problem: &FixedAssociationProblem,
    params: &SsaParams,
) -> f64 {
    let mut worst: f64 = 0.0;
    let (n_users, n_bs) = (problem.n_users(), problem.n_stations());
    for (link, y, lambdas, serving) in [
        (Link::Downlink, &solution.y_dl, &solution.lambda_dl, &problem.assoc.dl),
        (Link::Uplink, &solution.y_ul, &solution.lambda_ul, &problem.assoc.ul),
    ] {
        for bs in 0..n_bs {
            let used: f64 = (0..n_users).map(|u| y[[u, bs]]).sum();
            worst = worst.max(used - 1.0);
            let lambda = lambdas[bs].unwrap_or(0.0);
            worst = worst.max(-lambda);
            worst = worst.max((lambda * (1.0 - used)).abs());
        }
        for u in 0..n_users {
            for bs in 0..n_bs {
                let v = y[[u, bs]];
                worst = worst.max(-v);
                if bs != serving[u] {
                    worst = worst.max(v.abs());
                    continue;
                }
                let Some(lambda) = lambdas[bs] else {
                    return f64::INFINITY;
                };
                let r = problem.serving_rate(u, link);
                if v <= 0.0 {
                    return f64::INFINITY;
                }
                // r * U'(r*y) = penalty + lambda, scaled to stay unit-free.
                let marginal = r * (r * v).powf(-params.alpha);
                let rhs = penalty(problem, params, u, link) + lambda;
                worst = worst.max((marginal - rhs).abs() / rhs.abs().max(1.0));
            }
        }
    }
    worst
}

/// Sum of user utilities minus the exact (unsmoothed) asymmetry penalty.
pub fn objective(
    problem: &FixedAssociationProblem,
    params: &SsaParams,
    y_dl: &Array2<f64>,
    y_ul: &Array2<f64>,
) -> Result<f64, SsaError> {
    let mut total = 0.0;
    for u in 0..problem.n_users() {
        let r_dl = problem.serving_rate(u, Link::Downlink) * y_dl[[u, problem.assoc.dl[u]]];
        let r_ul = problem.serving_rate(u, Link::Uplink) * y_ul[[u, problem.assoc.ul[u]]];
        total += channel::utility(r_dl, params.alpha)? + channel::utility(r_ul, params.alpha)?
            - params.asymmetry_weight * (r_dl - r_ul).abs();
    }
    Ok(total)
}
