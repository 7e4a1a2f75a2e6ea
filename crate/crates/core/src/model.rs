//! Scenario geometry, range synthesis, likelihood costs and error metrics.
//!
//! Index conventions used everywhere in the crate: unknown positions are
//! stacked as sensors `0..n` followed by targets `0..m`, each as `(x, y)`.
//! Measurements exist only between a target and a sensor or an anchor.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Matrix2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlatError};

/// Smallest range value ever stored. Noisy draws below it are replaced.
pub const RANGE_FLOOR: f64 = 1e-5;

/// A position in the plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

/// Axis-aligned square region `[lo, hi]²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareBox {
    pub lo: f64,
    pub hi: f64,
}

impl SquareBox {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn side(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, p: &Point2) -> bool {
        p.x >= self.lo && p.x <= self.hi && p.y >= self.lo && p.y <= self.hi
    }
}

/// Ground-truth network: anchors (known), sensors and targets (unknown to the estimators).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Scenario {
    pub anchors: Vec<Point2>,
    pub sensors: Vec<Point2>,
    pub targets: Vec<Point2>,
}

impl Scenario {
    pub fn n_anchors(&self) -> usize {
        self.anchors.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.sensors.len()
    }

    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    /// Ground-truth unknowns in stacked order.
    pub fn truth(&self) -> StackedCoords {
        StackedCoords::from_parts(&self.sensors, &self.targets)
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.anchors.iter().chain(&self.sensors).chain(&self.targets);
        if all.into_iter().any(|p| !p.is_finite()) {
            return Err(SlatError::config("scenario contains non-finite coordinates"));
        }
        Ok(())
    }
}

/// Unknown sensor and target coordinates concatenated as `[x1, y1, x2, y2, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedCoords(Vec<f64>);

impl StackedCoords {
    pub fn zeros(num_points: usize) -> Self {
        StackedCoords(vec![0.0; 2 * num_points])
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        if !data.len().is_multiple_of(2) {
            return Err(SlatError::dim(format!(
                "stacked coordinate vector has odd length {}",
                data.len()
            )));
        }
        Ok(StackedCoords(data))
    }

    pub fn from_points(points: &[Point2]) -> Self {
        StackedCoords(points.iter().flat_map(|p| [p.x, p.y]).collect())
    }

    pub fn from_parts(sensors: &[Point2], targets: &[Point2]) -> Self {
        StackedCoords(sensors.iter().chain(targets).flat_map(|p| [p.x, p.y]).collect())
    }

    pub fn num_points(&self) -> usize {
        self.0.len() / 2
    }

    pub fn point(&self, idx: usize) -> Point2 {
        Point2::new(self.0[2 * idx], self.0[2 * idx + 1])
    }

    pub fn set_point(&mut self, idx: usize, p: Point2) {
        self.0[2 * idx] = p.x;
        self.0[2 * idx + 1] = p.y;
    }

    pub fn push(&mut self, p: Point2) {
        self.0.push(p.x);
        self.0.push(p.y);
    }

    pub fn to_points(&self) -> Vec<Point2> {
        (0..self.num_points()).map(|i| self.point(i)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Which (sensor, target) and (anchor, target) pairs carry a range.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMask {
    n_anchors: usize,
    n_sensors: usize,
    n_targets: usize,
    sensor_target: BTreeSet<(usize, usize)>,
    anchor_target: BTreeSet<(usize, usize)>,
}

impl ObservationMask {
    /// Every sensor and every anchor ranges every target.
    pub fn complete(n_anchors: usize, n_sensors: usize, n_targets: usize) -> Self {
        let sensor_target = (0..n_sensors)
            .flat_map(|i| (0..n_targets).map(move |j| (i, j)))
            .collect();
        let anchor_target = (0..n_anchors)
            .flat_map(|k| (0..n_targets).map(move |j| (k, j)))
            .collect();
        Self { n_anchors, n_sensors, n_targets, sensor_target, anchor_target }
    }

    pub fn new(
        n_anchors: usize,
        n_sensors: usize,
        n_targets: usize,
        sensor_target: impl IntoIterator<Item = (usize, usize)>,
        anchor_target: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let sensor_target: BTreeSet<_> = sensor_target.into_iter().collect();
        let anchor_target: BTreeSet<_> = anchor_target.into_iter().collect();
        if let Some(&(i, j)) = sensor_target.iter().find(|&&(i, j)| i >= n_sensors || j >= n_targets) {
            return Err(SlatError::dim(format!("sensor-target pair ({i}, {j}) out of range")));
        }
        if let Some(&(k, j)) = anchor_target.iter().find(|&&(k, j)| k >= n_anchors || j >= n_targets) {
            return Err(SlatError::dim(format!("anchor-target pair ({k}, {j}) out of range")));
        }
        Ok(Self { n_anchors, n_sensors, n_targets, sensor_target, anchor_target })
    }

    pub fn for_scenario(s: &Scenario) -> Self {
        Self::complete(s.n_anchors(), s.n_sensors(), s.n_targets())
    }

    pub fn n_anchors(&self) -> usize {
        self.n_anchors
    }

    pub fn n_sensors(&self) -> usize {
        self.n_sensors
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    pub fn sensor_target(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.sensor_target.iter().copied()
    }

    pub fn anchor_target(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.anchor_target.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.sensor_target.len() + self.anchor_target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn matches(&self, s: &Scenario) -> bool {
        self.n_anchors == s.n_anchors() && self.n_sensors == s.n_sensors() && self.n_targets == s.n_targets()
    }
}

/// Observed ranges keyed by measurement pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeData {
    pub sensor_target: BTreeMap<(usize, usize), f64>,
    pub anchor_target: BTreeMap<(usize, usize), f64>,
    mask: ObservationMask,
}

impl RangeData {
    /// Builds range data from explicit maps; the mask is derived from the keys.
    pub fn new(
        n_anchors: usize,
        n_sensors: usize,
        n_targets: usize,
        sensor_target: BTreeMap<(usize, usize), f64>,
        anchor_target: BTreeMap<(usize, usize), f64>,
    ) -> Result<Self> {
        let mask = ObservationMask::new(
            n_anchors,
            n_sensors,
            n_targets,
            sensor_target.keys().copied(),
            anchor_target.keys().copied(),
        )?;
        let bad = sensor_target.values().chain(anchor_target.values()).any(|d| !d.is_finite());
        if bad {
            return Err(SlatError::config("range data contains non-finite distances"));
        }
        let clamp = |m: BTreeMap<(usize, usize), f64>| m.into_iter().map(|(k, d)| (k, d.max(RANGE_FLOOR))).collect();
        Ok(Self { sensor_target: clamp(sensor_target), anchor_target: clamp(anchor_target), mask })
    }

    pub fn mask(&self) -> &ObservationMask {
        &self.mask
    }

    pub fn n_sensors(&self) -> usize {
        self.mask.n_sensors
    }

    pub fn n_targets(&self) -> usize {
        self.mask.n_targets
    }

    pub fn n_anchors(&self) -> usize {
        self.mask.n_anchors
    }

    pub fn num_unknowns(&self) -> usize {
        self.mask.n_sensors + self.mask.n_targets
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn min_range(&self) -> Option<f64> {
        self.sensor_target.values().chain(self.anchor_target.values()).copied().reduce(f64::min)
    }

    pub fn max_range(&self) -> Option<f64> {
        self.sensor_target.values().chain(self.anchor_target.values()).copied().reduce(f64::max)
    }

    /// Stacked index of target `j`.
    pub fn target_index(&self, j: usize) -> usize {
        self.mask.n_sensors + j
    }

    /// Appends one new target with the given ranges from every sensor and anchor.
    pub fn with_new_target(&self, sensor_ranges: &[f64], anchor_ranges: &[f64]) -> Result<RangeData> {
        if sensor_ranges.len() != self.n_sensors() || anchor_ranges.len() != self.n_anchors() {
            return Err(SlatError::dim(format!(
                "new target needs {} sensor and {} anchor ranges, got {} and {}",
                self.n_sensors(),
                self.n_anchors(),
                sensor_ranges.len(),
                anchor_ranges.len()
            )));
        }
        let j = self.n_targets();
        let mut st = self.sensor_target.clone();
        let mut at = self.anchor_target.clone();
        st.extend(sensor_ranges.iter().enumerate().map(|(i, &d)| ((i, j), d)));
        at.extend(anchor_ranges.iter().enumerate().map(|(k, &d)| ((k, j), d)));
        RangeData::new(self.n_anchors(), self.n_sensors(), j + 1, st, at)
    }

    /// Restriction to the first `m` targets.
    pub fn first_targets(&self, m: usize) -> Result<RangeData> {
        let st = self.sensor_target.iter().filter(|(k, _)| k.1 < m).map(|(&k, &d)| (k, d)).collect();
        let at = self.anchor_target.iter().filter(|(k, _)| k.1 < m).map(|(&k, &d)| (k, d)).collect();
        RangeData::new(self.n_anchors(), self.n_sensors(), m, st, at)
    }

    fn check_dims(&self, x: &StackedCoords, anchors: &[Point2]) -> Result<()> {
        if x.num_points() != self.num_unknowns() {
            return Err(SlatError::dim(format!(
                "coordinate vector holds {} points, ranges expect {}",
                x.num_points(),
                self.num_unknowns()
            )));
        }
        if anchors.len() != self.n_anchors() {
            return Err(SlatError::dim(format!(
                "{} anchors supplied, ranges expect {}",
                anchors.len(),
                self.n_anchors()
            )));
        }
        Ok(())
    }
}

/// Where selective-Gaussian outliers land.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OutlierPlacement {
    /// `count` distinct measurements drawn uniformly from the whole mask.
    RandomEdges { count: usize },
    /// Every measurement taken by one anchor.
    SingleAnchor { index: usize },
}

/// Additive range noise models. A standard deviation of zero yields exact ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseModel {
    Gaussian { sigma: f64 },
    /// Laplacian parameterized by its standard deviation (scale `sigma / sqrt(2)`).
    Laplacian { sigma: f64 },
    /// Gaussian noise everywhere plus a nonnegative `|N(0, sigma_outlier²)|` offset on selected ranges.
    SelectiveGaussian { sigma_gaussian: f64, sigma_outlier: f64, placement: OutlierPlacement },
}

impl NoiseModel {
    pub fn exact() -> Self {
        NoiseModel::Gaussian { sigma: 0.0 }
    }

    /// Standard deviation of the dense (non-outlier) noise component.
    pub fn base_sigma(&self) -> f64 {
        match *self {
            NoiseModel::Gaussian { sigma } | NoiseModel::Laplacian { sigma } => sigma,
            NoiseModel::SelectiveGaussian { sigma_gaussian, .. } => sigma_gaussian,
        }
    }

    fn validate(&self, mask: &ObservationMask) -> Result<()> {
        let ok = |s: f64| s.is_finite() && s >= 0.0;
        match *self {
            NoiseModel::Gaussian { sigma } | NoiseModel::Laplacian { sigma } if !ok(sigma) => {
                Err(SlatError::config(format!("noise sigma must be nonnegative, got {sigma}")))
            }
            NoiseModel::SelectiveGaussian { sigma_gaussian, sigma_outlier, placement } => {
                if !ok(sigma_gaussian) || !ok(sigma_outlier) {
                    return Err(SlatError::config("selective noise sigmas must be nonnegative"));
                }
                match placement {
                    OutlierPlacement::RandomEdges { count } if count > mask.len() => Err(SlatError::config(
                        format!("{count} outliers requested but only {} measurements exist", mask.len()),
                    )),
                    OutlierPlacement::SingleAnchor { index } if index >= mask.n_anchors() => Err(
                        SlatError::config(format!("outlier anchor {index} does not exist")),
                    ),
                    _ => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }
}

fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform_point(rng: &mut ChaCha8Rng, b: &SquareBox) -> Point2 {
    Point2::new(rng.random_range(b.lo..=b.hi), rng.random_range(b.lo..=b.hi))
}

/// Non-collinearity test on the centered `2 x l` anchor matrix.
pub fn anchors_non_collinear(anchors: &[Point2]) -> bool {
    if anchors.len() < 3 {
        return false;
    }
    let l = anchors.len() as f64;
    let cx = anchors.iter().map(|a| a.x).sum::<f64>() / l;
    let cy = anchors.iter().map(|a| a.y).sum::<f64>() / l;
    let mut scatter = Matrix2::<f64>::zeros();
    for a in anchors {
        let (dx, dy) = (a.x - cx, a.y - cy);
        scatter[(0, 0)] += dx * dx;
        scatter[(0, 1)] += dx * dy;
        scatter[(1, 1)] += dy * dy;
    }
    scatter[(1, 0)] = scatter[(0, 1)];
    let eig = scatter.symmetric_eigenvalues();
    let (lo, hi) = (eig.min().max(0.0).sqrt(), eig.max().max(0.0).sqrt());
    hi > 0.0 && lo > 1e-9 * hi
}

/// Draws a random network with every point uniform over `region`.
pub fn generate_scenario(l: usize, n: usize, m: usize, region: SquareBox, seed: u64) -> Result<Scenario> {
    if l < 3 {
        return Err(SlatError::config(format!("at least 3 anchors are required, got {l}")));
    }
    if !(region.side() > 0.0) || !region.lo.is_finite() || !region.hi.is_finite() {
        return Err(SlatError::config("scenario box must have positive finite side"));
    }
    let mut rng = rng_from(seed);
    let anchors = loop {
        let candidate: Vec<Point2> = (0..l).map(|_| uniform_point(&mut rng, &region)).collect();
        if anchors_non_collinear(&candidate) {
            break candidate;
        }
    };
    let sensors = (0..n).map(|_| uniform_point(&mut rng, &region)).collect();
    let targets = (0..m).map(|_| uniform_point(&mut rng, &region)).collect();
    Ok(Scenario { anchors, sensors, targets })
}

fn laplace_sample(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    // Inverse CDF on u in (-1/2, 1/2).
    let u: f64 = rng.random::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

/// Noisy ranges over `mask` for the scenario's ground truth.
pub fn synthesize_ranges(s: &Scenario, noise: &NoiseModel, mask: &ObservationMask, seed: u64) -> Result<RangeData> {
    if !mask.matches(s) {
        return Err(SlatError::dim("observation mask does not match scenario sizes"));
    }
    noise.validate(mask)?;
    let mut rng = rng_from(seed);

    // Fixed measurement order: all sensor-target pairs, then all anchor-target pairs.
    let st: Vec<(usize, usize)> = mask.sensor_target().collect();
    let at: Vec<(usize, usize)> = mask.anchor_target().collect();
    let mut dist: Vec<f64> = st
        .iter()
        .map(|&(i, j)| s.sensors[i].dist(&s.targets[j]))
        .chain(at.iter().map(|&(k, j)| s.anchors[k].dist(&s.targets[j])))
        .collect();

    match *noise {
        NoiseModel::Gaussian { sigma } => {
            if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).expect("finite sigma");
                dist.iter_mut().for_each(|d| *d += normal.sample(&mut rng));
            }
        }
        NoiseModel::Laplacian { sigma } => {
            if sigma > 0.0 {
                let scale = sigma / std::f64::consts::SQRT_2;
                dist.iter_mut().for_each(|d| *d += laplace_sample(&mut rng, scale));
            }
        }
        NoiseModel::SelectiveGaussian { sigma_gaussian, sigma_outlier, placement } => {
            if sigma_gaussian > 0.0 {
                let normal = Normal::new(0.0, sigma_gaussian).expect("finite sigma");
                dist.iter_mut().for_each(|d| *d += normal.sample(&mut rng));
            }
            let hit: Vec<usize> = match placement {
                OutlierPlacement::RandomEdges { count } => {
                    let mut v = sample(&mut rng, dist.len(), count).into_vec();
                    v.sort_unstable();
                    v
                }
                OutlierPlacement::SingleAnchor { index } => at
                    .iter()
                    .enumerate()
                    .filter(|(_, &(k, _))| k == index)
                    .map(|(pos, _)| st.len() + pos)
                    .collect(),
            };
            let outlier = Normal::new(0.0, sigma_outlier.max(0.0)).expect("finite sigma");
            for idx in hit {
                dist[idx] += outlier.sample(&mut rng).abs();
            }
        }
    }

    let mut values = dist.into_iter().map(|d| d.max(RANGE_FLOOR));
    let sensor_target = st.iter().map(|&k| (k, values.next().unwrap())).collect();
    let anchor_target = at.iter().map(|&k| (k, values.next().unwrap())).collect();
    Ok(RangeData { sensor_target, anchor_target, mask: mask.clone() })
}

/// Per-measurement residuals `‖x_i − e_j‖ − d` in mask order (sensor terms first).
pub fn residuals(x: &StackedCoords, anchors: &[Point2], r: &RangeData) -> Result<Vec<f64>> {
    r.check_dims(x, anchors)?;
    let n = r.n_sensors();
    let st = r.sensor_target.iter().map(|(&(i, j), &d)| x.point(i).dist(&x.point(n + j)) - d);
    let at = r.anchor_target.iter().map(|(&(k, j), &d)| anchors[k].dist(&x.point(n + j)) - d);
    Ok(st.chain(at).collect())
}

/// Gaussian negative log-likelihood (up to scale): sum of squared range residuals.
pub fn cost_gaussian(x: &StackedCoords, anchors: &[Point2], r: &RangeData) -> Result<f64> {
    Ok(residuals(x, anchors, r)?.iter().map(|e| e * e).sum())
}

/// Laplacian negative log-likelihood (up to scale): sum of absolute range residuals.
pub fn cost_laplacian(x: &StackedCoords, anchors: &[Point2], r: &RangeData) -> Result<f64> {
    Ok(residuals(x, anchors, r)?.iter().map(|e| e.abs()).sum())
}

/// Total RMSE over `K` Monte Carlo runs, averaged per unknown point.
pub fn total_rmse(estimates: &[StackedCoords], truth: &[StackedCoords]) -> Result<f64> {
    if estimates.is_empty() || estimates.len() != truth.len() {
        return Err(SlatError::dim(format!(
            "need K >= 1 matching runs, got {} estimates and {} truths",
            estimates.len(),
            truth.len()
        )));
    }
    let points = estimates[0].num_points();
    if points == 0 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for (est, tru) in estimates.iter().zip(truth) {
        if est.num_points() != points || tru.num_points() != points {
            return Err(SlatError::dim("inconsistent point counts across runs"));
        }
        acc += est.as_slice().iter().zip(tru.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok((acc / (estimates.len() as f64 * points as f64)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn single_pair() -> (StackedCoords, RangeData) {
        let x = StackedCoords::from_points(&[Point2::new(0.0, 0.0), Point2::new(2.0, 0.0)]);
        let st = BTreeMap::from([((0, 0), 1.0)]);
        let r = RangeData::new(0, 1, 1, st, BTreeMap::new()).unwrap();
        (x, r)
    }

    #[test]
    fn scenario_points_inside_box() {
        let b = SquareBox::new(0.0, 2.0);
        let s = generate_scenario(4, 5, 6, b, 11).unwrap();
        assert_eq!((s.n_anchors(), s.n_sensors(), s.n_targets()), (4, 5, 6));
        assert!(s.anchors.iter().chain(&s.sensors).chain(&s.targets).all(|p| b.contains(p)));
        assert!(anchors_non_collinear(&s.anchors));
    }

    #[test]
    fn anchors_only_scenario_and_determinism() {
        let s = generate_scenario(3, 0, 0, SquareBox::new(0.0, 1.0), 5).unwrap();
        assert_eq!(s.anchors.len(), 3);
        assert!(s.truth().as_slice().is_empty());
        assert_eq!(s, generate_scenario(3, 0, 0, SquareBox::new(0.0, 1.0), 5).unwrap());
        assert!(generate_scenario(2, 1, 1, SquareBox::new(0.0, 1.0), 5).is_err());
    }

    #[test]
    fn collinear_anchors_detected() {
        let line = [Point2::new(0.0, 0.0), Point2::new(1.0, 1.0), Point2::new(2.0, 2.0)];
        assert!(!anchors_non_collinear(&line));
        let tri = [Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)];
        assert!(anchors_non_collinear(&tri));
    }

    #[test]
    fn zero_noise_reproduces_distances() {
        let s = generate_scenario(3, 2, 2, SquareBox::new(0.0, 2.0), 3).unwrap();
        let r = synthesize_ranges(&s, &NoiseModel::exact(), &ObservationMask::for_scenario(&s), 9).unwrap();
        for (&(i, j), &d) in &r.sensor_target {
            assert_relative_eq!(d, s.sensors[i].dist(&s.targets[j]).max(RANGE_FLOOR));
        }
        assert!(cost_gaussian(&s.truth(), &s.anchors, &r).unwrap() < 1e-24);
    }

    #[test]
    fn selective_noise_hits_exactly_two_measurements() {
        let s = generate_scenario(4, 5, 6, SquareBox::new(0.0, 2.0), 21).unwrap();
        let mask = ObservationMask::for_scenario(&s);
        let exact = synthesize_ranges(&s, &NoiseModel::exact(), &mask, 1).unwrap();
        let noise = NoiseModel::SelectiveGaussian {
            sigma_gaussian: 0.0,
            sigma_outlier: 0.8,
            placement: OutlierPlacement::RandomEdges { count: 2 },
        };
        let r = synthesize_ranges(&s, &noise, &mask, 1).unwrap();
        let diffs: Vec<f64> = r
            .sensor_target
            .values()
            .chain(r.anchor_target.values())
            .zip(exact.sensor_target.values().chain(exact.anchor_target.values()))
            .map(|(a, b)| a - b)
            .collect();
        assert_eq!(diffs.iter().filter(|d| d.abs() > 0.0).count(), 2);
        assert!(diffs.iter().all(|&d| d >= 0.0));
    }

    #[test]
    fn single_anchor_outliers_only_touch_that_anchor() {
        let s = generate_scenario(5, 0, 3, SquareBox::new(-10.0, 10.0), 4).unwrap();
        let mask = ObservationMask::for_scenario(&s);
        let noise = NoiseModel::SelectiveGaussian {
            sigma_gaussian: 0.0,
            sigma_outlier: 1.0,
            placement: OutlierPlacement::SingleAnchor { index: 1 },
        };
        let r = synthesize_ranges(&s, &noise, &mask, 2).unwrap();
        for (&(k, j), &d) in &r.anchor_target {
            let truth = s.anchors[k].dist(&s.targets[j]);
            if k == 1 {
                assert!(d >= truth);
            } else {
                assert_relative_eq!(d, truth);
            }
        }
    }

    #[test]
    fn negative_draws_are_clamped() {
        let st = BTreeMap::from([((0, 0), -0.003)]);
        let r = RangeData::new(0, 1, 1, st, BTreeMap::new()).unwrap();
        assert_eq!(r.sensor_target[&(0, 0)], 1e-5);

        // Coincident sensor and target under noise: stored values never fall below the floor.
        let s = Scenario {
            anchors: vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)],
            sensors: vec![Point2::new(0.5, 0.5)],
            targets: vec![Point2::new(0.5, 0.5)],
        };
        let r = synthesize_ranges(&s, &NoiseModel::Gaussian { sigma: 0.1 }, &ObservationMask::for_scenario(&s), 0)
            .unwrap();
        assert!(r.min_range().unwrap() >= RANGE_FLOOR);
    }

    #[test]
    fn laplacian_samples_have_requested_std() {
        let mut rng = rng_from(17);
        let scale = 0.4 / std::f64::consts::SQRT_2;
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| laplace_sample(&mut rng, scale)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 5e-3);
        assert_relative_eq!(var.sqrt(), 0.4, max_relative = 0.01);
    }

    #[test]
    fn cost_single_pair() {
        let (x, r) = single_pair();
        assert_relative_eq!(cost_gaussian(&x, &[], &r).unwrap(), 1.0);
        assert_relative_eq!(cost_laplacian(&x, &[], &r).unwrap(), 1.0);
    }

    #[test]
    fn cost_gaussian_matches_resummation() {
        let s = generate_scenario(3, 0, 1, SquareBox::new(-5.0, 5.0), 77).unwrap();
        let r = synthesize_ranges(&s, &NoiseModel::Gaussian { sigma: 0.3 }, &ObservationMask::for_scenario(&s), 8)
            .unwrap();
        let e = Point2::new(0.25, -1.5);
        let x = StackedCoords::from_points(&[e]);
        let mut oracle = 0.0;
        for k in 0..3 {
            let dx = s.anchors[k].x - e.x;
            let dy = s.anchors[k].y - e.y;
            let t = (dx * dx + dy * dy).sqrt() - r.anchor_target[&(k, 0)];
            oracle += t * t;
        }
        assert_relative_eq!(cost_gaussian(&x, &s.anchors, &r).unwrap(), oracle, max_relative = 1e-14);
    }

    #[test]
    fn laplacian_outlier_adds_offset_at_truth() {
        let s = generate_scenario(4, 3, 2, SquareBox::new(0.0, 2.0), 5).unwrap();
        let mut r = synthesize_ranges(&s, &NoiseModel::exact(), &ObservationMask::for_scenario(&s), 0).unwrap();
        let base = cost_laplacian(&s.truth(), &s.anchors, &r).unwrap();
        *r.anchor_target.get_mut(&(2, 1)).unwrap() += 10.0;
        let bumped = cost_laplacian(&s.truth(), &s.anchors, &r).unwrap();
        assert_relative_eq!(bumped - base, 10.0, epsilon = 1e-12);
    }

    #[test]
    fn rmse_examples() {
        let t = StackedCoords::from_points(&[Point2::new(1.0, 1.0)]);
        assert_eq!(total_rmse(std::slice::from_ref(&t), std::slice::from_ref(&t)).unwrap(), 0.0);
        let e = StackedCoords::from_points(&[Point2::new(4.0, 5.0)]);
        assert_relative_eq!(total_rmse(&[e], &[t]).unwrap(), 5.0);

        let truth = StackedCoords::from_points(&[Point2::new(0.0, 0.0), Point2::new(0.0, 0.0)]);
        let run1 = StackedCoords::from_points(&[Point2::new(1.0, 0.0), Point2::new(1.0, 0.0)]);
        let run2 = StackedCoords::from_points(&[Point2::new(2.0_f64.sqrt(), 0.0), Point2::new(2.0_f64.sqrt(), 0.0)]);
        let v = total_rmse(&[run1, run2], &[truth.clone(), truth]).unwrap();
        assert_relative_eq!(v, 1.5_f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn scenario_json_shape() {
        let s = Scenario {
            anchors: vec![Point2::new(0.0, 1.0)],
            sensors: vec![],
            targets: vec![Point2::new(2.5, -1.0)],
        };
        let txt = serde_json::to_string(&s).unwrap();
        assert_eq!(txt, r#"{"anchors":[[0.0,1.0]],"sensors":[],"targets":[[2.5,-1.0]]}"#);
    }

    proptest! {
        #[test]
        fn synthesis_deterministic_and_floored(seed in 0u64..10_000, sigma in 0.0f64..0.5) {
            let s = generate_scenario(3, 2, 3, SquareBox::new(0.0, 1.0), seed).unwrap();
            let mask = ObservationMask::for_scenario(&s);
            let a = synthesize_ranges(&s, &NoiseModel::Laplacian { sigma }, &mask, seed ^ 0xabc).unwrap();
            let b = synthesize_ranges(&s, &NoiseModel::Laplacian { sigma }, &mask, seed ^ 0xabc).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.min_range().unwrap() >= RANGE_FLOOR);
        }

        #[test]
        fn costs_invariant_under_rigid_motion(seed in 0u64..10_000, angle in 0.0f64..std::f64::consts::TAU, tx in -3.0f64..3.0, flip: bool) {
            let s = generate_scenario(3, 2, 2, SquareBox::new(0.0, 2.0), seed).unwrap();
            let r = synthesize_ranges(&s, &NoiseModel::exact(), &ObservationMask::for_scenario(&s), 0).unwrap();
            let x = generate_scenario(3, 2, 2, SquareBox::new(0.0, 2.0), seed + 1).unwrap().truth();
            let (c, sn) = (angle.cos(), angle.sin());
            let f = if flip { -1.0 } else { 1.0 };
            let m = |p: Point2| Point2::new(c * p.x - sn * f * p.y + tx, sn * p.x + c * f * p.y - tx);
            let anchors2: Vec<Point2> = s.anchors.iter().map(|&p| m(p)).collect();
            let x2 = StackedCoords::from_points(&x.to_points().into_iter().map(m).collect::<Vec<_>>());
            let g1 = cost_gaussian(&x, &s.anchors, &r).unwrap();
            let g2 = cost_gaussian(&x2, &anchors2, &r).unwrap();
            prop_assert!((g1 - g2).abs() <= 1e-9 * (1.0 + g1));
            let l1 = cost_laplacian(&x, &s.anchors, &r).unwrap();
            let l2 = cost_laplacian(&x2, &anchors2, &r).unwrap();
            prop_assert!((l1 - l2).abs() <= 1e-9 * (1.0 + l1));
        }

        #[test]
        fn cauchy_schwarz_between_costs(seed in 0u64..10_000) {
            let s = generate_scenario(4, 3, 3, SquareBox::new(0.0, 2.0), seed).unwrap();
            let r = synthesize_ranges(&s, &NoiseModel::Gaussian { sigma: 0.1 }, &ObservationMask::for_scenario(&s), seed).unwrap();
            let x = generate_scenario(4, 3, 3, SquareBox::new(0.0, 2.0), seed + 7).unwrap().truth();
            let lap = cost_laplacian(&x, &s.anchors, &r).unwrap();
            let gau = cost_gaussian(&x, &s.anchors, &r).unwrap();
            prop_assert!(lap * lap <= r.len() as f64 * gau * (1.0 + 1e-12));
        }
    }
}
