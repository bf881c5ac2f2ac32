//! Performance indicators shared by every scenario.

use ndarray::Array2;
use thiserror::Error;

use crate::channel::to_db;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no samples")]
    NoSamples,
    #[error("at least one bin is required")]
    NoBins,
    #[error("at least one station is required")]
    NoStations,
}

/// `sum r_ub * y_ub` over all pairs.
pub fn aggregate_spectral_efficiency(rates: &Array2<f64>, alloc: &Array2<f64>) -> f64 {
    (rates * alloc).sum()
}

/// Per-user effective rate `sum_b r_ub * y_ub`.
pub fn user_rates(rates: &Array2<f64>, alloc: &Array2<f64>) -> Vec<f64> {
    (rates * alloc).rows().into_iter().map(|r| r.sum()).collect()
}

/// Mean over users of |downlink rate - uplink rate|.
pub fn mean_rate_asymmetry(
    rates_dl: &Array2<f64>,
    rates_ul: &Array2<f64>,
    alloc_dl: &Array2<f64>,
    alloc_ul: &Array2<f64>,
) -> f64 {
    let dl = user_rates(rates_dl, alloc_dl);
    let ul = user_rates(rates_ul, alloc_ul);
    if dl.is_empty() {
        return 0.0;
    }
    dl.iter().zip(&ul).map(|(a, b)| (a - b).abs()).sum::<f64>() / dl.len() as f64
}

/// Population variance of per-station user counts, idle stations included.
pub fn load_variance(serving: &[usize], n_stations: usize) -> Result<f64, MetricsError> {
    if n_stations == 0 {
        return Err(MetricsError::NoStations);
    }
    let mut counts = vec![0.0; n_stations];
    for &b in serving {
        counts[b] += 1.0;
    }
    let mean = counts.iter().sum::<f64>() / n_stations as f64;
    Ok(counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n_stations as f64)
}

/// Density histogram over `[min, max]` of the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lower: f64,
    pub bin_width: f64,
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn integral(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.lower + (i as f64 + 0.5) * self.bin_width
    }
}

/// Normalized histogram of serving distances. Constant samples collapse to
/// a single unit-width bin holding all the mass.
pub fn distance_pdf(samples: &[f64], bins: usize) -> Result<Histogram, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::NoSamples);
    }
    if bins == 0 {
        return Err(MetricsError::NoBins);
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(Histogram { lower: lo - 0.5, bin_width: 1.0, density: vec![1.0] });
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &s in samples {
        let i = (((s - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let norm = samples.len() as f64 * width;
    Ok(Histogram { lower: lo, bin_width: width, density: counts.iter().map(|&c| c as f64 / norm).collect() })
}

/// Mean of the dB values and mean of the linear values (reported in dB).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrSummary {
    pub mean_of_db: f64,
    pub db_of_mean: f64,
}

pub fn sinr_summary(linear: &[f64]) -> Result<SinrSummary, MetricsError> {
    if linear.is_empty() {
        return Err(MetricsError::NoSamples);
    }
    let n = linear.len() as f64;
    Ok(SinrSummary {
        mean_of_db: linear.iter().map(|&s| to_db(s)).sum::<f64>() / n,
        db_of_mean: to_db(linear.iter().sum::<f64>() / n),
    })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Everything a single run reports.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMetrics {
    pub aggregate_se_dl: f64,
    pub aggregate_se_ul: f64,
    pub mean_asymmetry: f64,
    pub load_variance_dl: f64,
    pub load_variance_ul: f64,
}

impl RunMetrics {
    pub fn evaluate(
        rates_dl: &Array2<f64>,
        rates_ul: &Array2<f64>,
        alloc_dl: &Array2<f64>,
        alloc_ul: &Array2<f64>,
        serving_dl: &[usize],
        serving_ul: &[usize],
    ) -> Result<Self, MetricsError> {
        let n_bs = rates_dl.ncols();
        Ok(Self {
            aggregate_se_dl: aggregate_spectral_efficiency(rates_dl, alloc_dl),
            aggregate_se_ul: aggregate_spectral_efficiency(rates_ul, alloc_ul),
            mean_asymmetry: mean_rate_asymmetry(rates_dl, rates_ul, alloc_dl, alloc_ul),
            load_variance_dl: load_variance(serving_dl, n_bs)?,
            load_variance_ul: load_variance(serving_ul, n_bs)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn aggregate_values() {
        let r = array![[4.0], [1.0]];
        assert_eq!(aggregate_spectral_efficiency(&r, &Array2::zeros((2, 1))), 0.0);
        assert_eq!(aggregate_spectral_efficiency(&r, &array![[0.5], [0.5]]), 2.5);
    }

    #[test]
    fn asymmetry_values() {
        let r = array![[3.0, 1.0]];
        let y = array![[0.2, 0.6]];
        assert_eq!(mean_rate_asymmetry(&r, &r, &y, &y), 0.0);
        assert_eq!(mean_rate_asymmetry(&array![[3.0]], &array![[1.0]], &array![[1.0]], &array![[1.0]]), 2.0);
    }

    #[test]
    fn variance_values() {
        assert_eq!(load_variance(&[0, 0, 0, 0], 4).unwrap(), 3.0);
        assert_eq!(load_variance(&[0, 1, 2, 3], 4).unwrap(), 0.0);
        assert_eq!(load_variance(&[], 0), Err(MetricsError::NoStations));
    }

    #[test]
    fn histogram_values() {
        let h = distance_pdf(&[5.0, 5.0, 5.0], 10).unwrap();
        assert_eq!(h.density, vec![1.0]);
        assert_eq!(h.integral(), 1.0);
        let h = distance_pdf(&[0.0, 1.0, 2.0, 3.0, 10.0], 7).unwrap();
        assert!((h.integral() - 1.0).abs() < 1e-12);
        assert_eq!(distance_pdf(&[], 3), Err(MetricsError::NoSamples));
    }

    #[test]
    fn sinr_domains() {
        let s = sinr_summary(&[1.0, 100.0]).unwrap();
        assert!((s.mean_of_db - 10.0).abs() < 1e-12);
        assert!((s.db_of_mean - to_db(50.5)).abs() < 1e-12);
    }
}
