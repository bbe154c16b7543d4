//! Route-following evaluation: dense reference paths, cross-track RMSE per
//! route, and mean/min/max/std aggregates over routes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::drivesim::RouteSpec;
use crate::error::{contract, CoreError, Result};
use crate::geometry::{dist, project_on_segment, Point};

/// Densely resampled centerline, at most `resolution` meters between points.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePath {
    points: Vec<Point>,
}

impl ReferencePath {
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| dist(w[0], w[1])).sum()
    }
}

/// Piecewise-linear resampling: every route segment is split into
/// `ceil(len / resolution)` equal pieces, so original vertices are kept.
pub fn interpolate_waypoints(route: &RouteSpec, resolution: f64) -> Result<ReferencePath> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return contract(format!("resolution must be positive, got {resolution}"));
    }
    route.validate()?;
    let wp = &route.waypoints;
    let mut points = vec![wp[0]];
    for w in wp.windows(2) {
        let (a, b) = (w[0], w[1]);
        let pieces = (dist(a, b) / resolution).ceil().max(1.0) as usize;
        for k in 1..pieces {
            let t = k as f64 / pieces as f64;
            points.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
        points.push(b);
    }
    Ok(ReferencePath { points })
}

/// Minimum distance from `p` to any segment of the path.
pub fn cross_track_error(p: Point, path: &ReferencePath) -> f64 {
    match path.points.as_slice() {
        [] => f64::INFINITY,
        [only] => dist(p, *only),
        pts => pts.windows(2).map(|w| project_on_segment(p, w[0], w[1]).0).fold(f64::INFINITY, f64::min),
    }
}

/// Root mean square of the cross-track errors of every trace sample.
pub fn route_rmse(trace: &[Point], path: &ReferencePath) -> Result<f64> {
    if trace.is_empty() {
        return contract("cannot score an empty trace");
    }
    let sum: f64 = trace.iter().map(|p| cross_track_error(*p, path).powi(2)).sum();
    Ok((sum / trace.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn aggregate(values: &[f64]) -> Result<Aggregate> {
    if values.is_empty() {
        return contract("cannot aggregate an empty list");
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::Numeric("non-finite value in aggregate".into()));
    }
    let n = values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Clamp rounding so min ≤ mean ≤ max holds exactly (and equal values give std 0).
    let mean = (values.iter().sum::<f64>() / n).clamp(min, max);
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(Aggregate { mean, min, max, std: var.sqrt() })
}

/// Outcome of driving one route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResult {
    pub route: usize,
    pub rmse: f64,
    pub completed: bool,
    pub steps: usize,
    #[serde(rename = "return")]
    pub episode_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub route_count: usize,
    pub routes: Vec<RouteResult>,
    #[serde(flatten)]
    pub aggregate: Aggregate,
    pub completion_rate: f64,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    method: &'a str,
    mean: f64,
    min: f64,
    max: f64,
    std: f64,
    completion_rate: f64,
}

impl EvalReport {
    pub fn new(method: impl Into<String>, routes: Vec<RouteResult>) -> Result<Self> {
        let rmses: Vec<f64> = routes.iter().map(|r| r.rmse).collect();
        let aggregate = aggregate(&rmses)?;
        let completion_rate = routes.iter().filter(|r| r.completed).count() as f64 / routes.len() as f64;
        Ok(Self { method: method.into(), route_count: routes.len(), routes, aggregate, completion_rate })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// One header row and one data row: method, mean, min, max, std, completion_rate.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let a = self.aggregate;
        w.serialize(CsvRow {
            method: &self.method,
            mean: a.mean,
            min: a.min,
            max: a.max,
            std: a.std,
            completion_rate: self.completion_rate,
        })
        .map_err(csv_err)?;
        let bytes = w.into_inner().map_err(|e| CoreError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        std::fs::write(dir.join("report.csv"), self.to_csv()?)?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> CoreError {
    CoreError::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(len: f64) -> RouteSpec {
        RouteSpec::new(vec![[0.0, 0.0], [len, 0.0]], 1.75, 2.0).unwrap()
    }

    #[test]
    fn subdivision_counts() {
        let p = interpolate_waypoints(&straight(10.0), 1.0).unwrap();
        assert_eq!(p.points().len(), 11);
        for (k, q) in p.points().iter().enumerate() {
            assert!((q[0] - k as f64).abs() < 1e-12 && q[1] == 0.0);
        }
        let p = interpolate_waypoints(&straight(10.0), 50.0).unwrap();
        assert_eq!(p.points(), &[[0.0, 0.0], [10.0, 0.0]]);
        assert!(interpolate_waypoints(&straight(10.0), 0.0).is_err());
    }

    #[test]
    fn rmse_hand_values() {
        let path = interpolate_waypoints(&straight(10.0), 0.1).unwrap();
        assert_eq!(route_rmse(&[[1.0, 0.0], [5.5, 0.0]], &path).unwrap(), 0.0);
        let r = route_rmse(&[[2.0, 0.1], [3.0, -0.1], [7.0, 0.1]], &path).unwrap();
        assert!((r - 0.1).abs() < 1e-12);
        let r = route_rmse(&[[2.0, 0.3], [3.0, -0.4]], &path).unwrap();
        assert!((r - (0.125f64).sqrt()).abs() < 1e-12);
        assert!((r - 0.3536).abs() < 1e-4);
        assert!(route_rmse(&[], &path).is_err());
    }

    #[test]
    fn aggregate_cases() {
        let a = aggregate(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((a.mean, a.min, a.max), (2.0, 1.0, 3.0));
        assert_eq!(a.std, (2.0f64 / 3.0).sqrt());
        let a = aggregate(&[0.7]).unwrap();
        assert_eq!((a.mean, a.min, a.max, a.std), (0.7, 0.7, 0.7, 0.0));
        assert_eq!(aggregate(&[0.3; 5]).unwrap().std, 0.0);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn csv_layout() {
        let r = RouteResult { route: 0, rmse: 0.5, completed: true, steps: 10, episode_return: 1.0 };
        let report = EvalReport::new("fusion-sac", vec![r]).unwrap();
        let csv = report.to_csv().unwrap();
        assert_eq!(csv.lines().next().unwrap(), "method,mean,min,max,std,completion_rate");
        assert_eq!(csv.lines().nth(1).unwrap(), "fusion-sac,0.5,0.5,0.5,0.0,1.0");
    }
}
