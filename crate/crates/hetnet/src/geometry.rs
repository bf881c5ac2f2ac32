//! Planar geometry: Poisson point deployments, (weighted) nearest-site
//! queries, Apollonius boundaries and rasterized coverage maps.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("no sites")]
    NoSites,
    #[error("degenerate pair: sites share a position")]
    DegeneratePair,
    #[error("invalid region {width}x{height}: both sides must be positive and finite")]
    InvalidRegion { width: f64, height: f64 },
    #[error("invalid weight {0}: must be positive and finite")]
    InvalidWeight(f64),
    #[error("invalid intensity {0}: must be non-negative and finite")]
    InvalidIntensity(f64),
    #[error("raster resolution {0} too small (need at least 2)")]
    ResolutionTooSmall(usize),
}

/// A point in the plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn distance_sq(self, other: Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Axis-aligned rectangle anchored at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    width: f64,
    height: f64,
}

impl Region {
    pub fn new(width: f64, height: f64) -> Result<Self, GeometryError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(width) && ok(height) {
            Ok(Self { width, height })
        } else {
            Err(GeometryError::InvalidRegion { width, height })
        }
    }

    pub fn square(side: f64) -> Result<Self, GeometryError> {
        Self::new(side, side)
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn contains(&self, p: Point2) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    /// Uniform point inside the region; x is drawn before y.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point2 {
        let x = rng.random::<f64>() * self.width;
        let y = rng.random::<f64>() * self.height;
        Point2::new(x, y)
    }
}

/// A site carrying a multiplicative weight; larger weight = larger cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedSite {
    pub position: Point2,
    weight: f64,
}

impl WeightedSite {
    pub fn new(position: Point2, weight: f64) -> Result<Self, GeometryError> {
        if weight.is_finite() && weight > 0.0 {
            Ok(Self { position, weight })
        } else {
            Err(GeometryError::InvalidWeight(weight))
        }
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Weighted distance `|p - site| / weight`.
    pub fn weighted_distance(&self, p: Point2) -> f64 {
        p.distance(self.position) / self.weight
    }
}

/// The locus of points equally weighted-distant from two sites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ApolloniusBoundary {
    Circle {
        center: Point2,
        radius: f64,
        /// True when the first site of the pair owns the unbounded region
        /// outside the circle (i.e. it has the larger weight).
        first_dominates_outside: bool,
    },
    /// Equal weights: perpendicular bisector through `midpoint`, with unit
    /// `normal` pointing from the first site to the second.
    Bisector { midpoint: Point2, normal: Point2 },
}

impl ApolloniusBoundary {
    /// A point on the boundary parametrized by `t`: an angle in radians for
    /// circles, a signed offset along the bisector line otherwise.
    pub fn point_at(&self, t: f64) -> Point2 {
        match *self {
            Self::Circle { center, radius, .. } => {
                Point2::new(center.x + radius * t.cos(), center.y + radius * t.sin())
            }
            Self::Bisector { midpoint, normal } => {
                Point2::new(midpoint.x - normal.y * t, midpoint.y + normal.x * t)
            }
        }
    }
}

/// Draws a homogeneous Poisson point process with `intensity` expected
/// points over the whole region. The count is drawn first, then points in
/// order, each as (x, y).
pub fn sample_ppp<R: Rng + ?Sized>(
    intensity: f64,
    region: &Region,
    rng: &mut R,
) -> Result<Vec<Point2>, GeometryError> {
    if !intensity.is_finite() || intensity < 0.0 {
        return Err(GeometryError::InvalidIntensity(intensity));
    }
    if intensity == 0.0 {
        return Ok(Vec::new());
    }
    let poisson = Poisson::new(intensity).map_err(|_| GeometryError::InvalidIntensity(intensity))?;
    let n = poisson.sample(rng) as usize;
    Ok((0..n).map(|_| region.sample_uniform(rng)).collect())
}

/// Index of the Euclidean-nearest site; ties go to the lowest index.
pub fn nearest_site(p: Point2, sites: &[Point2]) -> Result<usize, GeometryError> {
    argmin_by(sites.iter().map(|s| p.distance_sq(*s)))
}

/// Index minimizing `d(p, site) / weight`; ties go to the lowest index.
pub fn weighted_nearest_site(p: Point2, sites: &[WeightedSite]) -> Result<usize, GeometryError> {
    argmin_by(sites.iter().map(|s| s.weighted_distance(p)))
}

fn argmin_by(values: impl Iterator<Item = f64>) -> Result<usize, GeometryError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        match best {
            Some((_, b)) if v >= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i).ok_or(GeometryError::NoSites)
}

/// Boundary between the weighted cells of `p` and `q`.
pub fn apollonius_boundary(
    p: &WeightedSite,
    q: &WeightedSite,
) -> Result<ApolloniusBoundary, GeometryError> {
    let (a, b) = (p.position, q.position);
    let sep = a.distance(b);
    if sep == 0.0 {
        return Err(GeometryError::DegeneratePair);
    }
    let ratio = p.weight / q.weight;
    if ratio == 1.0 {
        return Ok(ApolloniusBoundary::Bisector {
            midpoint: Point2::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y)),
            normal: Point2::new((b.x - a.x) / sep, (b.y - a.y) / sep),
        });
    }
    let r2 = ratio * ratio;
    let denom = 1.0 - r2;
    Ok(ApolloniusBoundary::Circle {
        center: Point2::new((a.x - b.x * r2) / denom, (a.y - b.y * r2) / denom),
        radius: ratio * sep / denom.abs(),
        first_dominates_outside: ratio > 1.0,
    })
}

/// Row-major grid of owning site indices; row 0 is the bottom strip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageGrid {
    resolution: usize,
    cells: Vec<usize>,
}

impl CoverageGrid {
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn get(&self, row: usize, col: usize) -> usize {
        self.cells[row * self.resolution + col]
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Center of cell (row, col) in region coordinates.
    pub fn cell_center(region: &Region, resolution: usize, row: usize, col: usize) -> Point2 {
        Point2::new(
            (col as f64 + 0.5) * region.width / resolution as f64,
            (row as f64 + 0.5) * region.height / resolution as f64,
        )
    }
}

/// Assigns every raster cell to the weighted-nearest site of its center.
/// Rows are computed in parallel; the result does not depend on scheduling.
pub fn rasterize_coverage(
    sites: &[WeightedSite],
    region: &Region,
    resolution: usize,
) -> Result<CoverageGrid, GeometryError> {
    if resolution < 2 {
        return Err(GeometryError::ResolutionTooSmall(resolution));
    }
    if sites.is_empty() {
        return Err(GeometryError::NoSites);
    }
    let rows: Vec<Vec<usize>> = (0..resolution)
        .into_par_iter()
        .map(|row| {
            (0..resolution)
                .map(|col| {
                    let c = CoverageGrid::cell_center(region, resolution, row, col);
                    weighted_nearest_site(c, sites).expect("sites checked non-empty")
                })
                .collect()
        })
        .collect();
    Ok(CoverageGrid {
        resolution,
        cells: rows.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ws(x: f64, y: f64, w: f64) -> WeightedSite {
        WeightedSite::new(Point2::new(x, y), w).unwrap()
    }

    #[test]
    fn nearest_basic_and_tie() {
        let sites = [Point2::new(1.0, 0.0), Point2::new(5.0, 5.0)];
        assert_eq!(nearest_site(Point2::new(0.0, 0.0), &sites), Ok(0));
        let tie = [Point2::new(-1.0, 0.0), Point2::new(1.0, 0.0)];
        assert_eq!(nearest_site(Point2::new(0.0, 3.0), &tie), Ok(0));
        assert_eq!(nearest_site(Point2::new(0.0, 0.0), &[]), Err(GeometryError::NoSites));
    }

    #[test]
    fn weighted_tie_goes_low() {
        let sites = [ws(0.0, 0.0, 2.0), ws(3.0, 0.0, 1.0)];
        assert_eq!(weighted_nearest_site(Point2::new(2.0, 0.0), &sites), Ok(0));
        assert_eq!(weighted_nearest_site(Point2::new(2.0, 0.0), &sites[..1]), Ok(0));
        assert_eq!(weighted_nearest_site(Point2::new(0.0, 0.0), &[]), Err(GeometryError::NoSites));
    }

    #[test]
    fn apollonius_worked_example() {
        let b = apollonius_boundary(&ws(0.0, 0.0, 2.0), &ws(3.0, 0.0, 1.0)).unwrap();
        match b {
            ApolloniusBoundary::Circle { center, radius, first_dominates_outside } => {
                assert!((center.x - 4.0).abs() < 1e-12 && center.y.abs() < 1e-12);
                assert!((radius - 2.0).abs() < 1e-12);
                assert!(first_dominates_outside);
            }
            other => panic!("expected circle, got {other:?}"),
        }
        for x in [2.0, 6.0] {
            let p = Point2::new(x, 0.0);
            let ratio = p.distance(Point2::new(0.0, 0.0)) / p.distance(Point2::new(3.0, 0.0));
            assert!((ratio - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn apollonius_equal_weights_is_bisector() {
        let b = apollonius_boundary(&ws(0.0, 0.0, 1.0), &ws(1.0, 0.0, 1.0)).unwrap();
        assert_eq!(
            b,
            ApolloniusBoundary::Bisector {
                midpoint: Point2::new(0.5, 0.0),
                normal: Point2::new(1.0, 0.0)
            }
        );
        assert!((b.point_at(7.0).x - 0.5).abs() < 1e-15);
    }

    #[test]
    fn apollonius_rejects_coincident() {
        let r = apollonius_boundary(&ws(1.0, 1.0, 1.0), &ws(1.0, 1.0, 2.0));
        assert_eq!(r, Err(GeometryError::DegeneratePair));
    }

    #[test]
    fn lighter_first_site_is_enclosed() {
        let b = apollonius_boundary(&ws(0.0, 0.0, 1.0), &ws(3.0, 0.0, 2.0)).unwrap();
        let ApolloniusBoundary::Circle { center, radius, first_dominates_outside } = b else {
            panic!("expected circle")
        };
        assert!(!first_dominates_outside);
        assert!(Point2::new(0.0, 0.0).distance(center) < radius);
    }

    #[test]
    fn ppp_zero_and_determinism() {
        let region = Region::square(1000.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_ppp(0.0, &region, &mut rng).unwrap().is_empty());
        let a = sample_ppp(30.0, &region, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = sample_ppp(30.0, &region, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| region.contains(*p)));
        assert!(sample_ppp(-1.0, &region, &mut rng).is_err());
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(Region::new(0.0, 1.0).is_err());
        assert!(Region::new(1.0, f64::NAN).is_err());
        assert!(WeightedSite::new(Point2::default(), 0.0).is_err());
        let sites = [ws(0.0, 0.0, 1.0)];
        let region = Region::square(1.0).unwrap();
        assert_eq!(rasterize_coverage(&sites, &region, 1), Err(GeometryError::ResolutionTooSmall(1)));
        assert_eq!(rasterize_coverage(&[], &region, 4), Err(GeometryError::NoSites));
    }

    #[test]
    fn raster_two_sites_splits_at_bisector() {
        let region = Region::square(100.0).unwrap();
        let sites = [ws(25.0, 50.0, 1.0), ws(75.0, 50.0, 1.0)];
        let grid = rasterize_coverage(&sites, &region, 100).unwrap();
        for row in 0..100 {
            for col in 0..100 {
                assert_eq!(grid.get(row, col), usize::from(col >= 50));
            }
        }
    }
}
