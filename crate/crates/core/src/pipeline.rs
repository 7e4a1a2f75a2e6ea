//! Batch and time-recursive SLAT: initialization followed by likelihood refinement.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::conic::SolveStatus;
use crate::edm::{
    build_partial_edm, complete_edm_r_dump, complete_edm_r_l1_dump, complete_edm_sr_dump, default_e_max,
    edm_to_csv, extract_coordinates,
};
use crate::error::{Result, SlatError};
use crate::model::{Point2, RangeData, StackedCoords};
use crate::refine::{run_refinement, CostMode, RefinementConfig, RefinementTrace};
use crate::source_loc::{
    covering_box, grid_oracle, sll1_locate, slcp_locate, CircleSet, DEFAULT_PROJECTOR_SIGMA,
};

/// Rank-1 ratio below which a relaxed single-source estimate is replaced by the grid oracle.
pub const RANK1_FALLBACK_RATIO: f64 = 10.0;
/// Coarse grid cells per side of the fallback search box.
const FALLBACK_CELLS: f64 = 100.0;
/// Final resolution of the fallback search.
const FALLBACK_FINE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InitMethod {
    #[serde(rename = "edm-sr")]
    EdmSr,
    #[serde(rename = "edm-r")]
    EdmR,
    #[serde(rename = "edm-r-l1")]
    EdmRL1,
}

impl InitMethod {
    pub const ALL: [InitMethod; 3] = [InitMethod::EdmSr, InitMethod::EdmR, InitMethod::EdmRL1];

    pub fn name(&self) -> &'static str {
        match self {
            InitMethod::EdmSr => "edm-sr",
            InitMethod::EdmR => "edm-r",
            InitMethod::EdmRL1 => "edm-r-l1",
        }
    }
}

impl fmt::Display for InitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitMethod {
    type Err = SlatError;
    fn from_str(s: &str) -> Result<Self> {
        InitMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| SlatError::config(format!("unknown initialization method '{s}'")))
    }
}

/// Initialization method, noise model and refinement settings of one pipeline.
///
/// The noise mode selects the refinement: Gaussian runs plain MM, Laplacian runs weighted MM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub init_method: InitMethod,
    pub noise_mode: CostMode,
    pub refinement: RefinementConfig,
    /// Projector constant of the Laplacian single-source relaxation.
    pub sll1_sigma: f64,
}

impl PipelineConfig {
    pub fn new(init_method: InitMethod, noise_mode: CostMode) -> Self {
        Self { init_method, noise_mode, refinement: RefinementConfig::default(), sll1_sigma: DEFAULT_PROJECTOR_SIGMA }
    }

    pub fn validate(&self) -> Result<()> {
        self.refinement.validate()?;
        if !(self.sll1_sigma > 0.0) || self.sll1_sigma.is_nan() {
            return Err(SlatError::config(format!("sll1 sigma must be positive, got {}", self.sll1_sigma)));
        }
        Ok(())
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::new(InitMethod::EdmR, CostMode::Gaussian)
    }
}

/// How the newest position of a recursive step was initialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocateDiagnostics {
    pub rank1_ratio: f64,
    pub status: SolveStatus,
    pub grid_fallback: bool,
}

/// Refined estimate with its starting point.
#[derive(Debug, Clone)]
pub struct SlatEstimate {
    pub coords: StackedCoords,
    pub init_coords: StackedCoords,
    pub init_cost: f64,
    pub final_cost: f64,
    pub trace: RefinementTrace,
    pub locate: Option<LocateDiagnostics>,
}

impl SlatEstimate {
    fn from_trace(init_coords: StackedCoords, trace: RefinementTrace, locate: Option<LocateDiagnostics>) -> Self {
        Self {
            coords: trace.estimate.clone(),
            init_coords,
            init_cost: trace.initial_cost(),
            final_cost: trace.final_cost(),
            trace,
            locate,
        }
    }
}

/// Optional text dumps collected during a run.
#[derive(Debug, Clone, Default)]
pub struct Dumps {
    pub conic: Option<String>,
    pub edm: Option<String>,
}

/// Ranges from every sensor and every anchor to one new target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewTargetRanges {
    pub sensor: Vec<f64>,
    pub anchor: Vec<f64>,
}

/// EDM initialization only, without refinement.
pub fn initialize(anchors: &[Point2], r: &RangeData, method: InitMethod) -> Result<StackedCoords> {
    initialize_dump(anchors, r, method, None)
}

fn initialize_dump(anchors: &[Point2], r: &RangeData, method: InitMethod, dumps: Option<&mut Dumps>) -> Result<StackedCoords> {
    let p = build_partial_edm(anchors, r)?;
    let mut conic_text = String::new();
    let want = dumps.is_some();
    let dump = want.then_some(&mut conic_text);
    let sol = match method {
        InitMethod::EdmSr => complete_edm_sr_dump(&p, dump)?,
        InitMethod::EdmR => complete_edm_r_dump(&p, dump)?,
        InitMethod::EdmRL1 => complete_edm_r_l1_dump(&p, default_e_max(&p), dump)?,
    };
    if let Some(d) = dumps {
        d.conic = Some(conic_text);
        d.edm = Some(edm_to_csv(&sol.e));
    }
    Ok(extract_coordinates(&sol.e, anchors)?.coords)
}

/// EDM completion, coordinate extraction and refinement in the configured noise mode.
pub fn slat_batch(anchors: &[Point2], r: &RangeData, cfg: &PipelineConfig) -> Result<SlatEstimate> {
    slat_batch_dump(anchors, r, cfg, None)
}

pub fn slat_batch_dump(
    anchors: &[Point2],
    r: &RangeData,
    cfg: &PipelineConfig,
    dumps: Option<&mut Dumps>,
) -> Result<SlatEstimate> {
    cfg.validate()?;
    let x0 = initialize_dump(anchors, r, cfg.init_method, dumps)?;
    let trace = run_refinement(&x0, anchors, r, cfg.noise_mode, &cfg.refinement)?;
    Ok(SlatEstimate::from_trace(x0, trace, None))
}

/// Single-source estimate of a new target from fixed stations, with the grid
/// oracle taking over when the relaxation is far from rank one.
pub fn locate_new_target(
    stations: &CircleSet,
    mode: CostMode,
    sll1_sigma: f64,
) -> Result<(Point2, LocateDiagnostics)> {
    let res = match mode {
        CostMode::Gaussian => slcp_locate(stations)?,
        CostMode::Laplacian => sll1_locate(stations, sll1_sigma)?,
    };
    let mut diag = LocateDiagnostics { rank1_ratio: res.rank1_ratio, status: res.status, grid_fallback: false };
    if res.rank1_ratio >= RANK1_FALLBACK_RATIO {
        return Ok((res.position, diag));
    }
    let region = covering_box(stations);
    let coarse = (region.side() / FALLBACK_CELLS).max(FALLBACK_FINE);
    let grid = grid_oracle(stations, mode, region, coarse, FALLBACK_FINE)?;
    diag.grid_fallback = true;
    // Keep the relaxed point if the grid did not improve on it.
    let best = if stations.cost(mode, &grid) < stations.cost(mode, &res.position) { grid } else { res.position };
    Ok((best, diag))
}

/// Adds one target: locates it against the current sensor estimates and the
/// anchors, appends it, and refines every position over the enlarged data set.
/// Returns the new estimate and the enlarged range data; `prior_ranges` is untouched.
pub fn slat_recursive(
    prior: &SlatEstimate,
    anchors: &[Point2],
    prior_ranges: &RangeData,
    new_ranges: &NewTargetRanges,
    cfg: &PipelineConfig,
) -> Result<(SlatEstimate, RangeData)> {
    cfg.validate()?;
    if prior.coords.num_points() != prior_ranges.num_unknowns() {
        return Err(SlatError::dim(format!(
            "prior estimate holds {} points, ranges describe {}",
            prior.coords.num_points(),
            prior_ranges.num_unknowns()
        )));
    }
    let ranges = prior_ranges.with_new_target(&new_ranges.sensor, &new_ranges.anchor)?;
    let n = prior_ranges.n_sensors();
    let centers: Vec<Point2> = (0..n).map(|i| prior.coords.point(i)).chain(anchors.iter().copied()).collect();
    let radii: Vec<f64> = new_ranges.sensor.iter().chain(&new_ranges.anchor).map(|d| d.max(crate::model::RANGE_FLOOR)).collect();
    let stations = CircleSet::new(centers, radii)?;
    let (position, diag) = locate_new_target(&stations, cfg.noise_mode, cfg.sll1_sigma)?;

    let mut x0 = prior.coords.clone();
    x0.push(position);
    let trace = run_refinement(&x0, anchors, &ranges, cfg.noise_mode, &cfg.refinement)?;
    Ok((SlatEstimate::from_trace(x0, trace, Some(diag)), ranges))
}
