//! Monte Carlo experiments, CSV reports and a small SVG plotter.
//!
//! Run `k` of an experiment uses seed `seed + k` for its scenario and a derived
//! seed for its noise, so results do not depend on how runs are scheduled.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crlb::{averaged_crlb, fisher_information, inverse_trace};
use crate::error::{Result, SlatError};
use crate::io::Method;
use crate::model::{
    generate_scenario, synthesize_ranges, total_rmse, NoiseModel, ObservationMask, OutlierPlacement, Point2,
    RangeData, Scenario, SquareBox, StackedCoords,
};
use crate::pipeline::{initialize, slat_batch, slat_recursive, InitMethod, NewTargetRanges, PipelineConfig};
use crate::refine::{CostMode, RefinementConfig, RefinementTrace};
use crate::source_loc::{sll1_locate, slcp_locate, CircleSet, DEFAULT_PROJECTOR_SIGMA};

/// Caps the worker threads used for Monte Carlo runs.
pub const THREADS_ENV: &str = "SLATKIT_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Experiment {
    Example1,
    Example2Stats,
    Example3,
    Example4,
    Custom,
}

impl Experiment {
    pub const ALL: [Experiment; 5] =
        [Experiment::Example1, Experiment::Example2Stats, Experiment::Example3, Experiment::Example4, Experiment::Custom];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Example1 => "example1",
            Experiment::Example2Stats => "example2-stats",
            Experiment::Example3 => "example3",
            Experiment::Example4 => "example4",
            Experiment::Custom => "custom",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = SlatError;
    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| SlatError::config(format!("unknown experiment '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub n_anchors: usize,
    pub n_sensors: usize,
    pub n_targets: usize,
    pub region: SquareBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub scenario: ScenarioParams,
    pub noise_grid: Vec<NoiseModel>,
    pub methods: Vec<Method>,
    pub runs: usize,
    pub seed: u64,
    /// Reuse the scenario drawn from `seed` in every run (only the noise changes).
    pub fixed_scenario: bool,
    pub refinement: RefinementConfig,
    pub sll1_sigma: f64,
}

fn gaussian_grid(levels: &[f64]) -> Vec<NoiseModel> {
    levels.iter().map(|&sigma| NoiseModel::Gaussian { sigma }).collect()
}

impl ExperimentConfig {
    fn base(experiment: Experiment, scenario: ScenarioParams, noise_grid: Vec<NoiseModel>, methods: Vec<Method>, runs: usize) -> Self {
        Self {
            experiment,
            scenario,
            noise_grid,
            methods,
            runs,
            seed: 0,
            fixed_scenario: false,
            refinement: RefinementConfig::default(),
            sll1_sigma: DEFAULT_PROJECTOR_SIGMA,
        }
    }

    /// Default configuration of each experiment.
    pub fn preset(experiment: Experiment) -> Self {
        use CostMode::*;
        use InitMethod::*;
        let unit_box = SquareBox::new(0.0, 2.0);
        match experiment {
            Experiment::Example1 => Self::base(
                experiment,
                ScenarioParams { n_anchors: 4, n_sensors: 5, n_targets: 6, region: unit_box },
                gaussian_grid(&[0.005, 0.01, 0.015, 0.02, 0.025, 0.03]),
                vec![
                    Method::edm(EdmSr, None),
                    Method::edm(EdmR, None),
                    Method::edm(EdmRL1, None),
                    Method::edm(EdmSr, Some(Gaussian)),
                    Method::edm(EdmR, Some(Gaussian)),
                    Method::edm(EdmRL1, Some(Gaussian)),
                ],
                50,
            ),
            Experiment::Example2Stats => {
                let mut c = Self::base(
                    experiment,
                    ScenarioParams { n_anchors: 4, n_sensors: 10, n_targets: 11, region: unit_box },
                    gaussian_grid(&[0.025]),
                    vec![Method::edm(EdmSr, Some(Gaussian)), Method::edm(EdmR, Some(Gaussian))],
                    100,
                );
                c.fixed_scenario = true;
                c
            }
            Experiment::Example3 => Self::base(
                experiment,
                ScenarioParams { n_anchors: 5, n_sensors: 0, n_targets: 1, region: SquareBox::new(-10.0, 10.0) },
                gaussian_grid(&[1e-3, 1e-2, 1e-1, 1.0]),
                vec![Method::Sll1, Method::Slcp],
                100,
            ),
            Experiment::Example4 => Self::base(
                experiment,
                ScenarioParams { n_anchors: 4, n_sensors: 16, n_targets: 11, region: unit_box },
                vec![NoiseModel::Gaussian { sigma: 0.04 }, NoiseModel::Laplacian { sigma: 0.1 }],
                vec![Method::edm(EdmR, Some(Gaussian)), Method::edm(EdmRL1, Some(Laplacian))],
                10,
            ),
            Experiment::Custom => Self::base(
                experiment,
                ScenarioParams { n_anchors: 4, n_sensors: 5, n_targets: 6, region: unit_box },
                gaussian_grid(&[0.01]),
                vec![Method::edm(EdmR, Some(Gaussian))],
                50,
            ),
        }
    }

    /// Example 1 with two random outliers per run on top of Gaussian noise.
    pub fn example1_outliers() -> Self {
        let mut c = Self::preset(Experiment::Example1);
        c.noise_grid = [0.4, 0.8, 1.2, 1.6, 2.0]
            .iter()
            .map(|&so| NoiseModel::SelectiveGaussian {
                sigma_gaussian: 0.01,
                sigma_outlier: so,
                placement: OutlierPlacement::RandomEdges { count: 2 },
            })
            .collect();
        c.methods = InitMethod::ALL.iter().map(|&i| Method::edm(i, Some(CostMode::Laplacian))).collect();
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(SlatError::config("at least one Monte Carlo run is required"));
        }
        if self.methods.is_empty() {
            return Err(SlatError::config("no methods selected"));
        }
        let sc = &self.scenario;
        if sc.n_anchors < 3 {
            return Err(SlatError::config("experiments need at least 3 anchors"));
        }
        if !(sc.region.side() > 0.0) {
            return Err(SlatError::config("scenario region is empty"));
        }
        for n in &self.noise_grid {
            if !(noise_level(n) > 0.0) && *n != NoiseModel::exact() {
                return Err(SlatError::config(format!("noise grid levels must be positive, got {n:?}")));
            }
        }
        let single_source = self.methods.iter().any(|m| matches!(m, Method::Slcp | Method::Sll1));
        if single_source && sc.n_sensors > 0 {
            return Err(SlatError::config("slcp / sll1 locate targets from anchors only; use a scenario without sensors"));
        }
        self.refinement.validate()?;
        if !(self.sll1_sigma > 0.0) {
            return Err(SlatError::config("sll1 sigma must be positive"));
        }
        Ok(())
    }
}

/// Grid coordinate of a noise model: its sigma, or the outlier sigma for the selective model.
pub fn noise_level(n: &NoiseModel) -> f64 {
    match *n {
        NoiseModel::Gaussian { sigma } | NoiseModel::Laplacian { sigma } => sigma,
        NoiseModel::SelectiveGaussian { sigma_outlier, .. } => sigma_outlier,
    }
}

/// One `(noise level, method)` cell of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub sigma: f64,
    pub method: String,
    pub rmse: f64,
    pub crlb: Option<f64>,
    pub runtime_ms: f64,
    pub failures: usize,
}

pub const CRLB_METHOD: &str = "crlb";
const CSV_HEADER: [&str; 6] = ["sigma", "method", "rmse", "crlb", "runtime_ms", "failures"];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MCReport {
    pub rows: Vec<ReportRow>,
}

fn same_f64(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}

impl MCReport {
    pub fn row(&self, sigma: f64, method: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && same_f64(r.sigma, sigma))
    }

    pub fn rmse(&self, sigma: f64, method: &str) -> Option<f64> {
        self.row(sigma, method).map(|r| r.rmse)
    }

    /// Equality of everything except wall-clock timings.
    pub fn same_results(&self, other: &MCReport) -> bool {
        self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                same_f64(a.sigma, b.sigma)
                    && a.method == b.method
                    && same_f64(a.rmse, b.rmse)
                    && match (a.crlb, b.crlb) {
                        (Some(x), Some(y)) => same_f64(x, y),
                        (None, None) => true,
                        _ => false,
                    }
                    && a.failures == b.failures
            })
    }

    /// Floats use shortest round-trip formatting so parsing reproduces the report exactly.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| SlatError::Parse(e.to_string());
        w.write_record(CSV_HEADER).map_err(err)?;
        for r in &self.rows {
            w.write_record([
                format!("{:?}", r.sigma),
                r.method.clone(),
                format!("{:?}", r.rmse),
                r.crlb.map(|c| format!("{c:?}")).unwrap_or_default(),
                format!("{:?}", r.runtime_ms),
                r.failures.to_string(),
            ])
            .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| SlatError::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| SlatError::Parse(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<MCReport> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let header = rd.headers().map_err(|e| SlatError::Parse(e.to_string()))?.clone();
        if header.iter().ne(CSV_HEADER) {
            return Err(SlatError::Parse(format!("unexpected report header {header:?}")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| SlatError::Parse(format!("bad number '{s}'")));
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| SlatError::Parse(e.to_string()))?;
            rows.push(ReportRow {
                sigma: num(&rec[0])?,
                method: rec[1].to_string(),
                rmse: num(&rec[2])?,
                crlb: if rec[3].is_empty() { None } else { Some(num(&rec[3])?) },
                runtime_ms: num(&rec[4])?,
                failures: rec[5].parse().map_err(|_| SlatError::Parse(format!("bad count '{}'", &rec[5])))?,
            });
        }
        Ok(MCReport { rows })
    }
}

/// splitmix64 finalizer; decorrelates the noise seed from the scenario seed.
fn mix(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Scenario and noise seeds of run `k`.
pub fn run_seeds(cfg: &ExperimentConfig, k: usize) -> (u64, u64) {
    let run_seed = cfg.seed.wrapping_add(k as u64);
    let scenario_seed = if cfg.fixed_scenario { cfg.seed } else { run_seed };
    (scenario_seed, mix(run_seed))
}

pub fn run_scenario(cfg: &ExperimentConfig, scenario_seed: u64) -> Result<Scenario> {
    let p = &cfg.scenario;
    generate_scenario(p.n_anchors, p.n_sensors, p.n_targets, p.region, scenario_seed)
}

/// Targets located one at a time from anchor ranges only.
fn locate_each_target(s: &Scenario, r: &RangeData, method: Method, sll1_sigma: f64) -> Result<StackedCoords> {
    let mut pts = Vec::with_capacity(s.n_targets());
    for j in 0..s.n_targets() {
        let (centers, radii): (Vec<Point2>, Vec<f64>) =
            r.anchor_target.iter().filter(|(k, _)| k.1 == j).map(|(&(k, _), &d)| (s.anchors[k], d)).unzip();
        let c = CircleSet::new(centers, radii)?;
        let res = match method {
            Method::Sll1 => sll1_locate(&c, sll1_sigma)?,
            _ => slcp_locate(&c)?,
        };
        pts.push(res.position);
    }
    Ok(StackedCoords::from_points(&pts))
}

/// Runs one method on one data set.
pub fn run_method(method: Method, s: &Scenario, r: &RangeData, cfg: &ExperimentConfig) -> Result<StackedCoords> {
    let est = match method {
        Method::Edm { init, refine: None } => initialize(&s.anchors, r, init)?,
        Method::Edm { init, refine: Some(mode) } => {
            let pc = PipelineConfig { init_method: init, noise_mode: mode, refinement: cfg.refinement, sll1_sigma: cfg.sll1_sigma };
            slat_batch(&s.anchors, r, &pc)?.coords
        }
        Method::Slcp | Method::Sll1 => locate_each_target(s, r, method, cfg.sll1_sigma)?,
    };
    if est.as_slice().iter().all(|v| v.is_finite()) {
        Ok(est)
    } else {
        Err(SlatError::Solver { status: crate::conic::SolveStatus::NumericalFailure, detail: "non-finite estimate".into() })
    }
}

/// Everything one Monte Carlo run produces, indexed `[level][method]`.
struct RunOutcome {
    truth: StackedCoords,
    results: Vec<Vec<Option<(StackedCoords, f64)>>>,
    crlb_traces: Vec<Option<f64>>,
}

fn one_run(cfg: &ExperimentConfig, k: usize) -> Result<RunOutcome> {
    let (scenario_seed, noise_seed) = run_seeds(cfg, k);
    let s = run_scenario(cfg, scenario_seed)?;
    let mask = ObservationMask::for_scenario(&s);
    let truth = s.truth();
    let mut results = Vec::with_capacity(cfg.noise_grid.len());
    let mut crlb_traces = Vec::with_capacity(cfg.noise_grid.len());
    for noise in &cfg.noise_grid {
        let r = synthesize_ranges(&s, noise, &mask, noise_seed)?;
        let row = cfg
            .methods
            .iter()
            .map(|&m| {
                let t0 = Instant::now();
                run_method(m, &s, &r, cfg).ok().map(|e| (e, t0.elapsed().as_secs_f64() * 1e3))
            })
            .collect();
        results.push(row);
        crlb_traces.push(match *noise {
            NoiseModel::Gaussian { sigma } if sigma > 0.0 => fisher_information(&truth, &s.anchors, &mask, sigma)
                .and_then(|f| inverse_trace(&f))
                .ok()
                .map(|t| t.trace),
            _ => None,
        });
    }
    Ok(RunOutcome { truth, results, crlb_traces })
}

/// Applies `f` to every run index with at most `SLATKIT_THREADS` workers; output in run order.
pub fn par_runs<T: Send>(runs: usize, f: impl Fn(usize) -> T + Sync + Send) -> Result<Vec<T>> {
    let threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| SlatError::config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..runs).into_par_iter().map(&f).collect()))
}

/// Runs every method at every noise level over `cfg.runs` random instances.
pub fn run_monte_carlo(cfg: &ExperimentConfig) -> Result<MCReport> {
    cfg.validate()?;
    let outcomes = par_runs(cfg.runs, |k| one_run(cfg, k))?.into_iter().collect::<Result<Vec<_>>>()?;
    let points = cfg.scenario.n_sensors + cfg.scenario.n_targets;
    let mut rows = Vec::new();
    for (li, noise) in cfg.noise_grid.iter().enumerate() {
        let sigma = noise_level(noise);
        let traces: Vec<f64> = outcomes.iter().filter_map(|o| o.crlb_traces[li]).collect();
        let crlb = averaged_crlb(&traces, points);
        for (mi, method) in cfg.methods.iter().enumerate() {
            let mut est = Vec::new();
            let mut truth = Vec::new();
            let mut ms = 0.0;
            for o in &outcomes {
                if let Some((e, t)) = &o.results[li][mi] {
                    est.push(e.clone());
                    truth.push(o.truth.clone());
                    ms += t;
                }
            }
            let ok = est.len();
            let rmse = if ok > 0 { total_rmse(&est, &truth)? } else { f64::NAN };
            rows.push(ReportRow {
                sigma,
                method: method.to_string(),
                rmse,
                crlb,
                runtime_ms: if ok > 0 { ms / ok as f64 } else { 0.0 },
                failures: cfg.runs - ok,
            });
        }
        if let Some(c) = crlb {
            rows.push(ReportRow { sigma, method: CRLB_METHOD.into(), rmse: c, crlb: Some(c), runtime_ms: 0.0, failures: 0 });
        }
    }
    Ok(MCReport { rows })
}

/// Writes `report.csv` and `report.svg` into `dir`.
pub fn emit_report(r: &MCReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.csv"), r.to_csv()?)?;
    std::fs::write(dir.join("report.svg"), report_svg(r))?;
    Ok(())
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Log-y line plot of RMSE against noise level, one polyline per method.
/// The x axis is logarithmic when the levels span at least a decade.
pub fn report_svg(r: &MCReport) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const L: f64 = 70.0;
    const R: f64 = 170.0;
    const T: f64 = 20.0;
    const B: f64 = 50.0;
    let mut methods: Vec<&str> = Vec::new();
    for row in &r.rows {
        if !methods.contains(&row.method.as_str()) {
            methods.push(&row.method);
        }
    }
    let pts: Vec<&ReportRow> = r.rows.iter().filter(|p| p.rmse > 0.0 && p.rmse.is_finite() && p.sigma > 0.0).collect();
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    if pts.is_empty() {
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">no data</text>"#, W / 2.0, H / 2.0);
        svg.push_str("</svg>\n");
        return svg;
    }
    let fold = |f: fn(f64, f64) -> f64, init: f64, g: fn(&ReportRow) -> f64| pts.iter().map(|p| g(p)).fold(init, f);
    let (xmin, xmax) = (fold(f64::min, f64::INFINITY, |p| p.sigma), fold(f64::max, 0.0, |p| p.sigma));
    let (ymin, ymax) = (fold(f64::min, f64::INFINITY, |p| p.rmse), fold(f64::max, 0.0, |p| p.rmse));
    let log_x = xmax / xmin >= 10.0;
    let (x0, x1) = if log_x {
        (xmin.log10().floor(), xmax.log10().ceil())
    } else if xmax > xmin {
        (xmin, xmax)
    } else {
        (xmin * 0.5, xmax * 1.5)
    };
    let (y0, y1) = {
        let (a, b) = (ymin.log10().floor(), ymax.log10().ceil());
        if b > a { (a, b) } else { (a, a + 1.0) }
    };
    let px = |s: f64| {
        let v = if log_x { s.log10() } else { s };
        L + (v - x0) / (x1 - x0) * (W - L - R)
    };
    let py = |v: f64| H - B - (v.log10() - y0) / (y1 - y0) * (H - T - B);
    let _ = writeln!(svg, r#"<rect x="{L}" y="{T}" width="{}" height="{}" fill="none" stroke="black"/>"#, W - L - R, H - T - B);
    for e in (y0 as i32)..=(y1 as i32) {
        let y = py(10f64.powi(e));
        let _ = writeln!(svg, r##"<line x1="{L}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##, W - R);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"#, L - 6.0, y + 4.0);
    }
    let xticks: Vec<f64> = if log_x {
        ((x0 as i32)..=(x1 as i32)).map(|e| 10f64.powi(e)).collect()
    } else {
        (0..=4).map(|i| x0 + (x1 - x0) * i as f64 / 4.0).collect()
    };
    for s in xticks {
        let x = px(s);
        let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, H - B, H - B + 5.0);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{s:.3e}</text>"#, H - B + 18.0);
    }
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">sigma</text>"#, L + (W - L - R) / 2.0, H - 10.0);
    let _ = writeln!(svg, r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">RMSE</text>"#, T + (H - T - B) / 2.0, T + (H - T - B) / 2.0);
    for (i, m) in methods.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut line: Vec<(f64, f64)> = pts.iter().filter(|p| p.method == *m).map(|p| (px(p.sigma), py(p.rmse))).collect();
        line.sort_by(|a, b| a.0.total_cmp(&b.0));
        let coords: Vec<String> = line.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let dash = if *m == CRLB_METHOD { r#" stroke-dasharray="5,4""# } else { "" };
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#, coords.join(" "));
        let ly = T + 14.0 + 16.0 * i as f64;
        let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"{dash}/>"#, W - R + 12.0, W - R + 34.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{m}</text>"#, W - R + 40.0, ly + 4.0);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Per-position sample mean and covariance of one method's estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionStat {
    pub method: String,
    pub point: usize,
    pub truth: Point2,
    pub mean: Point2,
    /// `[xx, xy, yy]`.
    pub cov: [f64; 3],
    pub samples: usize,
}

/// Example 2: spread of the estimates of every position over runs on a fixed scenario.
pub fn position_stats(cfg: &ExperimentConfig) -> Result<Vec<PositionStat>> {
    cfg.validate()?;
    let noise = *cfg.noise_grid.first().ok_or_else(|| SlatError::config("position statistics need one noise level"))?;
    let mut fixed = cfg.clone();
    fixed.fixed_scenario = true;
    let s = run_scenario(&fixed, fixed.seed)?;
    let mask = ObservationMask::for_scenario(&s);
    let truth = s.truth();
    let per_run = par_runs(cfg.runs, |k| -> Result<Vec<Option<StackedCoords>>> {
        let (_, noise_seed) = run_seeds(&fixed, k);
        let r = synthesize_ranges(&s, &noise, &mask, noise_seed)?;
        Ok(fixed.methods.iter().map(|&m| run_method(m, &s, &r, &fixed).ok()).collect())
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (mi, method) in fixed.methods.iter().enumerate() {
        let ests: Vec<&StackedCoords> = per_run.iter().filter_map(|r| r[mi].as_ref()).collect();
        for p in 0..truth.num_points() {
            let pts: Vec<Point2> = ests.iter().map(|e| e.point(p)).collect();
            let n = pts.len() as f64;
            let mean = Point2::new(pts.iter().map(|q| q.x).sum::<f64>() / n, pts.iter().map(|q| q.y).sum::<f64>() / n);
            let denom = (n - 1.0).max(1.0);
            let cov = [
                pts.iter().map(|q| (q.x - mean.x).powi(2)).sum::<f64>() / denom,
                pts.iter().map(|q| (q.x - mean.x) * (q.y - mean.y)).sum::<f64>() / denom,
                pts.iter().map(|q| (q.y - mean.y).powi(2)).sum::<f64>() / denom,
            ];
            out.push(PositionStat { method: method.to_string(), point: p, truth: truth.point(p), mean, cov, samples: pts.len() });
        }
    }
    Ok(out)
}

pub fn position_stats_csv(stats: &[PositionStat]) -> String {
    let mut out = String::from("method,point,true_x,true_y,mean_x,mean_y,cov_xx,cov_xy,cov_yy,samples\n");
    for s in stats {
        let _ = writeln!(
            out,
            "{},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{}",
            s.method, s.point, s.truth.x, s.truth.y, s.mean.x, s.mean.y, s.cov[0], s.cov[1], s.cov[2], s.samples
        );
    }
    out
}

/// Cost descent of batch and time-recursive initialization on the same data.
#[derive(Debug, Clone)]
pub struct DescentComparison {
    pub seed: u64,
    pub mode: CostMode,
    pub batch: RefinementTrace,
    pub recursive: RefinementTrace,
}

/// Example 4: a network whose last target arrives after the others were estimated.
///
/// The prior estimate is a batch run on all but the last target. The recursive
/// path locates the last target from it and refines everything; the batch path
/// restarts from a fresh EDM completion of all targets.
pub fn example4_descent(cfg: &ExperimentConfig, k: usize, noise: &NoiseModel, mode: CostMode) -> Result<DescentComparison> {
    let (scenario_seed, noise_seed) = run_seeds(cfg, k);
    let s = run_scenario(cfg, scenario_seed)?;
    if s.n_targets() < 2 {
        return Err(SlatError::config("the recursive comparison needs at least two targets"));
    }
    let r = synthesize_ranges(&s, noise, &ObservationMask::for_scenario(&s), noise_seed)?;
    let m = s.n_targets() - 1;
    let init = match mode {
        CostMode::Gaussian => InitMethod::EdmR,
        CostMode::Laplacian => InitMethod::EdmRL1,
    };
    let pc = PipelineConfig { init_method: init, noise_mode: mode, refinement: cfg.refinement, sll1_sigma: cfg.sll1_sigma };
    let prior_ranges = r.first_targets(m)?;
    let prior = slat_batch(&s.anchors, &prior_ranges, &pc)?;
    let new = NewTargetRanges {
        sensor: (0..s.n_sensors()).map(|i| r.sensor_target[&(i, m)]).collect(),
        anchor: (0..s.n_anchors()).map(|a| r.anchor_target[&(a, m)]).collect(),
    };
    let (recursive, _) = slat_recursive(&prior, &s.anchors, &prior_ranges, &new, &pc)?;
    let batch = slat_batch(&s.anchors, &r, &pc)?;
    Ok(DescentComparison { seed: scenario_seed, mode, batch: batch.trace, recursive: recursive.trace })
}

/// `seed,mode,path,iter,cost` rows.
pub fn descent_csv(runs: &[DescentComparison]) -> String {
    let mut out = String::from("seed,mode,path,iter,cost\n");
    for d in runs {
        let mode = match d.mode {
            CostMode::Gaussian => "gaussian",
            CostMode::Laplacian => "laplacian",
        };
        for (path, trace) in [("batch", &d.batch), ("recursive", &d.recursive)] {
            for (i, c) in trace.costs.iter().enumerate() {
                let _ = writeln!(out, "{},{mode},{path},{i},{c:?}", d.seed);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::preset(Experiment::Example3);
        c.runs = 3;
        c.noise_grid = gaussian_grid(&[1e-2, 1e-1]);
        c
    }

    #[test]
    fn empty_report_is_header_only() {
        assert_eq!(MCReport::default().to_csv().unwrap(), "sigma,method,rmse,crlb,runtime_ms,failures\n");
    }

    #[test]
    fn report_csv_round_trips() {
        let r = run_monte_carlo(&tiny()).unwrap();
        // Two methods and a bound row per level.
        assert_eq!(r.rows.len(), 6);
        let text = r.to_csv().unwrap();
        let back = MCReport::from_csv(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_csv().unwrap(), text);
        assert!(report_svg(&r).contains("<polyline"));
        assert_eq!(report_svg(&r), report_svg(&back));
    }

    #[test]
    fn experiments_parse() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
            ExperimentConfig::preset(e).validate().unwrap();
        }
        ExperimentConfig::example1_outliers().validate().unwrap();
    }

    #[test]
    fn single_source_methods_need_anchor_only_scenarios() {
        let mut c = ExperimentConfig::preset(Experiment::Example1);
        c.methods = vec![Method::Slcp];
        assert!(c.validate().is_err());
    }
}
