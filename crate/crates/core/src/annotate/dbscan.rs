//! Density-based clustering over a 3-D embedding of position and time.
//!
//! A point's neighborhood is every point (itself included) within Euclidean
//! distance `eps`. Points with at least `min_pts` neighbors are core points.
//! Clusters are seeded in input order, so the lowest-index core point of each
//! connected core component names its cluster, and a border point reachable
//! from several clusters joins the one seeded first.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::AnnotateError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbscanParams {
    /// Neighborhood radius in embedding units (meters, with time scaled to meters).
    pub eps: f64,
    pub min_pts: usize,
    /// Seconds per meter of embedding; the time axis is `t / time_scale`.
    pub time_scale: f64,
}

impl Default for DbscanParams {
    fn default() -> Self {
        DbscanParams { eps: 1.5, min_pts: 10, time_scale: 5.0 }
    }
}

impl DbscanParams {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(AnnotateError::InvalidParams(format!("dbscan.eps must be > 0, got {}", self.eps)));
        }
        if self.min_pts < 2 {
            return Err(AnnotateError::InvalidParams(format!("dbscan.min_pts must be >= 2, got {}", self.min_pts)));
        }
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return Err(AnnotateError::InvalidParams(format!(
                "dbscan.time_scale must be > 0, got {}",
                self.time_scale
            )));
        }
        Ok(())
    }

    /// `(x, y, t / time_scale)`.
    pub fn embed(&self, x: f64, y: f64, t_seconds: f64) -> [f64; 3] {
        [x, y, t_seconds / self.time_scale]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    /// Cluster id per point; `None` is noise.
    pub labels: Vec<Option<usize>>,
    pub n_clusters: usize,
}

impl Clustering {
    pub fn is_noise(&self, i: usize) -> bool {
        self.labels[i].is_none()
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }
}

type CellKey = (i64, i64, i64);

struct Grid<'a> {
    points: &'a [[f64; 3]],
    cells: HashMap<CellKey, Vec<usize>>,
    eps: f64,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [[f64; 3]], eps: f64) -> Self {
        let mut cells: HashMap<CellKey, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, eps)).or_default().push(i);
        }
        Grid { points, cells, eps }
    }

    fn key(p: &[f64; 3], eps: f64) -> CellKey {
        ((p[0] / eps).floor() as i64, (p[1] / eps).floor() as i64, (p[2] / eps).floor() as i64)
    }

    /// Neighbors of point `i` in ascending index order.
    fn neighbors(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = &self.points[i];
        let (cx, cy, ct) = Self::key(p, self.eps);
        let eps2 = self.eps * self.eps;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dt in -1..=1 {
                    if let Some(bucket) = self.cells.get(&(cx + dx, cy + dy, ct + dt)) {
                        for &j in bucket {
                            let q = &self.points[j];
                            let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                            if d2 <= eps2 {
                                out.push(j);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
    }
}

pub fn dbscan(points: &[[f64; 3]], params: &DbscanParams) -> Result<Clustering, AnnotateError> {
    params.validate()?;
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(AnnotateError::InvalidParams("dbscan points must be finite".into()));
    }
    let grid = Grid::new(points, params.eps);
    let n = points.len();
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut n_clusters = 0;
    let mut neigh = Vec::new();
    let mut queue = Vec::new();

    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        grid.neighbors(seed, &mut neigh);
        if neigh.len() < params.min_pts {
            continue;
        }
        let cluster = n_clusters;
        n_clusters += 1;
        labels[seed] = Some(cluster);
        queue.clear();
        queue.extend(neigh.iter().copied());
        let mut head = 0;
        while head < queue.len() {
            let j = queue[head];
            head += 1;
            if labels[j].is_none() {
                labels[j] = Some(cluster);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            grid.neighbors(j, &mut neigh);
            if neigh.len() >= params.min_pts {
                queue.extend(neigh.iter().copied().filter(|&k| !visited[k] || labels[k].is_none()));
            }
        }
    }
    Ok(Clustering { labels, n_clusters })
}
