//! Oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use hetnet::ssa::{objective, FixedAssociationProblem, SsaParams};
use ndarray::Array2;

/// All allocations of one unit among `k` users on a grid of `steps` parts.
pub fn simplex_grid(k: usize, steps: usize) -> Vec<Vec<f64>> {
    match k {
        0 => vec![vec![]],
        1 => vec![vec![1.0]],
        _ => (1..steps)
            .flat_map(|i| {
                simplex_grid(k - 1, steps - i)
                    .into_iter()
                    .map(move |rest| {
                        let scale = (steps - i) as f64 / steps as f64;
                        let mut v = vec![i as f64 / steps as f64];
                        v.extend(rest.into_iter().map(|r| r * scale));
                        v
                    })
            })
            .collect(),
    }
}

/// Every grid allocation of one link: a list of (user, station, share).
pub fn link_grid(serving: &[usize], stations: usize, steps: usize) -> Vec<Vec<(usize, usize, f64)>> {
    let mut acc: Vec<Vec<(usize, usize, f64)>> = vec![vec![]];
    for b in 0..stations {
        let users: Vec<usize> = (0..serving.len()).filter(|&u| serving[u] == b).collect();
        if users.is_empty() {
            continue;
        }
        let options = simplex_grid(users.len(), steps);
        acc = acc
            .into_iter()
            .flat_map(|prefix| {
                let users = &users;
                options.iter().map(move |shares| {
                    let mut v = prefix.clone();
                    v.extend(users.iter().zip(shares).map(|(&u, &s)| (u, b, s)));
                    v
                }).collect::<Vec<_>>()
            })
            .collect();
    }
    acc
}

/// Best objective over every grid allocation that uses each busy
/// station's whole budget in steps of `1 / steps`.
pub fn grid_search_best(p: &FixedAssociationProblem, params: &SsaParams, steps: usize) -> f64 {
    let dl_grid = link_grid(&p.assoc().dl, p.n_stations(), steps);
    let ul_grid = link_grid(&p.assoc().ul, p.n_stations(), steps);
    let shape = (p.n_users(), p.n_stations());
    let mut best = f64::NEG_INFINITY;
    for g_dl in &dl_grid {
        let mut y_dl = Array2::zeros(shape);
        for &(u, b, s) in g_dl {
            y_dl[[u, b]] = s;
        }
        for g_ul in &ul_grid {
            let mut y_ul = Array2::zeros(shape);
            for &(u, b, s) in g_ul {
                y_ul[[u, b]] = s;
            }
            best = best.max(objective(p, params, &y_dl, &y_ul).unwrap());
        }
    }
    best
}
