//! File formats and the textual noise / method grammar used by the CLI.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlatError};
use crate::model::{NoiseModel, OutlierPlacement, RangeData, Scenario};
use crate::pipeline::InitMethod;
use crate::refine::CostMode;

pub fn scenario_to_json(s: &Scenario) -> Result<String> {
    Ok(serde_json::to_string_pretty(s)?)
}

pub fn scenario_from_json(text: &str) -> Result<Scenario> {
    let s: Scenario = serde_json::from_str(text)?;
    s.validate()?;
    Ok(s)
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    scenario_from_json(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct RangeRow {
    kind: String,
    i: usize,
    j: usize,
    d: String,
}

/// `kind,i,j,d` CSV, `st` rows before `at` rows, distances with 9 decimals.
pub fn ranges_to_csv(r: &RangeData) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let rows = r
        .sensor_target
        .iter()
        .map(|(&(i, j), &d)| ("st", i, j, d))
        .chain(r.anchor_target.iter().map(|(&(k, j), &d)| ("at", k, j, d)));
    for (kind, i, j, d) in rows {
        w.serialize(RangeRow { kind: kind.into(), i, j, d: format!("{d:.9}") })
            .map_err(|e| SlatError::Parse(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| SlatError::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| SlatError::Parse(e.to_string()))
}

/// Parses ranges for a network of the given size.
pub fn ranges_from_csv(text: &str, n_anchors: usize, n_sensors: usize, n_targets: usize) -> Result<RangeData> {
    let mut st = BTreeMap::new();
    let mut at = BTreeMap::new();
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    for (line, row) in rd.deserialize::<RangeRow>().enumerate() {
        let row = row.map_err(|e| SlatError::Parse(format!("ranges row {}: {e}", line + 1)))?;
        let d: f64 = row.d.trim().parse().map_err(|_| SlatError::Parse(format!("bad distance '{}'", row.d)))?;
        let target = match row.kind.as_str() {
            "st" => &mut st,
            "at" => &mut at,
            other => return Err(SlatError::Parse(format!("unknown range kind '{other}'"))),
        };
        if target.insert((row.i, row.j), d).is_some() {
            return Err(SlatError::Parse(format!("duplicate {} pair ({}, {})", row.kind, row.i, row.j)));
        }
    }
    RangeData::new(n_anchors, n_sensors, n_targets, st, at)
}

pub fn read_ranges(path: &Path, s: &Scenario) -> Result<RangeData> {
    ranges_from_csv(&std::fs::read_to_string(path)?, s.n_anchors(), s.n_sensors(), s.n_targets())
}

fn parse_f64(field: &str, what: &str) -> Result<f64> {
    field.trim().parse().map_err(|_| SlatError::config(format!("{what}: '{field}' is not a number")))
}

/// `gaussian:S`, `laplacian:S`, `selective:SG:SO:COUNT` or `selective:SG:SO:aK`
/// (all ranges of anchor `K`).
pub fn parse_noise(spec: &str) -> Result<NoiseModel> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || SlatError::config(format!("noise '{spec}' does not match gaussian:S | laplacian:S | selective:SG:SO:N"));
    let positive = |v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(SlatError::config(format!("noise '{spec}' needs positive sigmas")))
        }
    };
    match parts.as_slice() {
        ["gaussian", s] => Ok(NoiseModel::Gaussian { sigma: positive(parse_f64(s, "gaussian sigma")?)? }),
        ["laplacian", s] => Ok(NoiseModel::Laplacian { sigma: positive(parse_f64(s, "laplacian sigma")?)? }),
        ["selective", sg, so, place] => {
            let placement = match place.strip_prefix('a') {
                Some(k) => OutlierPlacement::SingleAnchor {
                    index: k.parse().map_err(|_| bad())?,
                },
                None => OutlierPlacement::RandomEdges { count: place.parse().map_err(|_| bad())? },
            };
            Ok(NoiseModel::SelectiveGaussian {
                sigma_gaussian: positive(parse_f64(sg, "gaussian sigma")?)?,
                sigma_outlier: positive(parse_f64(so, "outlier sigma")?)?,
                placement,
            })
        }
        _ => Err(bad()),
    }
}

/// Inverse of [`parse_noise`].
pub fn format_noise(n: &NoiseModel) -> String {
    match *n {
        NoiseModel::Gaussian { sigma } => format!("gaussian:{sigma}"),
        NoiseModel::Laplacian { sigma } => format!("laplacian:{sigma}"),
        NoiseModel::SelectiveGaussian { sigma_gaussian, sigma_outlier, placement } => {
            let place = match placement {
                OutlierPlacement::RandomEdges { count } => count.to_string(),
                OutlierPlacement::SingleAnchor { index } => format!("a{index}"),
            };
            format!("selective:{sigma_gaussian}:{sigma_outlier}:{place}")
        }
    }
}

/// Estimation method as named on the command line and in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// EDM initialization, optionally followed by MM (`Gaussian`) or weighted MM (`Laplacian`).
    Edm { init: InitMethod, refine: Option<CostMode> },
    Slcp,
    Sll1,
}

impl Method {
    pub fn edm(init: InitMethod, refine: Option<CostMode>) -> Self {
        Method::Edm { init, refine }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Edm { init, refine: None } => write!(f, "{init}"),
            Method::Edm { init, refine: Some(CostMode::Gaussian) } => write!(f, "{init}+mm"),
            Method::Edm { init, refine: Some(CostMode::Laplacian) } => write!(f, "{init}+wmm"),
            Method::Slcp => f.write_str("slcp"),
            Method::Sll1 => f.write_str("sll1"),
        }
    }
}

impl FromStr for Method {
    type Err = SlatError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slcp" => return Ok(Method::Slcp),
            "sll1" => return Ok(Method::Sll1),
            _ => {}
        }
        let (init, refine) = match s.split_once('+') {
            Some((init, "mm")) => (init, Some(CostMode::Gaussian)),
            Some((init, "wmm")) => (init, Some(CostMode::Laplacian)),
            Some(_) => return Err(SlatError::config(format!("unknown refinement in method '{s}'"))),
            None => (s, None),
        };
        Ok(Method::Edm { init: init.parse()?, refine })
    }
}
