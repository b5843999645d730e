//! Fiber core detection with DBSCAN.
//!
//! Bright camera pixels become 2D points; DBSCAN groups them into one cluster
//! per core speckle pattern without knowing the number of cores. Each cluster
//! yields an intensity-weighted centroid, near-duplicate centroids (one core
//! split into several clusters) are merged, and every surviving site receives
//! a square area of interest on the camera.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{SpeckleFrame, MAX_COUNT};

/// Label of a point that belongs to no cluster.
pub const NOISE: i32 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
    /// Pixels strictly above this count become points. `None` picks the
    /// threshold with Otsu's method.
    #[serde(default)]
    pub intensity_threshold: Option<u16>,
}

impl Default for DbscanParams {
    fn default() -> Self {
        DbscanParams {
            eps: 3.0,
            min_pts: 13,
            intensity_threshold: None,
        }
    }
}

impl DbscanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::invalid("clustering.eps must be > 0"));
        }
        if self.min_pts == 0 {
            return Err(Error::invalid("clustering.min_pts must be >= 1"));
        }
        if let Some(t) = self.intensity_threshold {
            if t > MAX_COUNT {
                return Err(Error::invalid(
                    "clustering.intensity_threshold must be within [0, 4095]",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabeling {
    pub labels: Vec<i32>,
    pub cluster_count: usize,
}

impl ClusterLabeling {
    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    /// Point indices of each cluster, in cluster-id order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.cluster_count];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                out[l as usize].push(i);
            }
        }
        out
    }
}

/// Uniform grid of `eps`-sized cells for radius queries.
struct GridIndex {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl GridIndex {
    fn new(points: &[[f64; 2]], cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(p, cell)).or_default().push(i);
        }
        GridIndex { cell, buckets }
    }

    fn key(p: &[f64; 2], cell: f64) -> (i64, i64) {
        ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64)
    }

    /// Indices within `eps` of `points[i]` (inclusive, the point itself
    /// included), in ascending index order.
    fn neighbors(&self, points: &[[f64; 2]], i: usize, eps: f64, out: &mut Vec<usize>) {
        out.clear();
        let p = points[i];
        let (cx, cy) = Self::key(&p, self.cell);
        let eps2 = eps * eps;
        for dy in -1..=1 {
            for dx in -1..=1 {
                if let Some(b) = self.buckets.get(&(cx + dx, cy + dy)) {
                    for &j in b {
                        let q = points[j];
                        let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                        if d2 <= eps2 {
                            out.push(j);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
    }
}

/// Classic DBSCAN over 2D points.
///
/// A point is a core point when at least `min_pts` points (itself included)
/// lie within `eps`. Points are scanned in input order; a border point joins
/// the first cluster that reaches it.
pub fn dbscan(points: &[[f64; 2]], params: &DbscanParams) -> Result<ClusterLabeling> {
    params.validate()?;
    if points
        .iter()
        .any(|p| !p[0].is_finite() || !p[1].is_finite())
    {
        return Err(Error::invalid("point coordinates must be finite"));
    }
    const UNVISITED: i32 = -2;
    let n = points.len();
    let mut labels = vec![UNVISITED; n];
    let index = GridIndex::new(points, params.eps);
    let mut cluster = 0i32;
    let mut nbrs = Vec::new();
    let mut inner = Vec::new();
    let mut queue = Vec::new();

    for i in 0..n {
        if labels[i] != UNVISITED {
            continue;
        }
        index.neighbors(points, i, params.eps, &mut nbrs);
        if nbrs.len() < params.min_pts {
            labels[i] = NOISE;
            continue;
        }
        labels[i] = cluster;
        queue.clear();
        queue.extend(nbrs.iter().copied().filter(|&j| j != i));
        let mut head = 0;
        while head < queue.len() {
            let j = queue[head];
            head += 1;
            if labels[j] == NOISE {
                // border point claimed by this cluster
                labels[j] = cluster;
                continue;
            }
            if labels[j] != UNVISITED {
                continue;
            }
            labels[j] = cluster;
            index.neighbors(points, j, params.eps, &mut inner);
            if inner.len() >= params.min_pts {
                queue.extend(inner.iter().copied().filter(|&k| labels[k] < 0));
            }
        }
        cluster += 1;
    }
    Ok(ClusterLabeling {
        labels,
        cluster_count: cluster as usize,
    })
}

/// Rectangular area of interest on the camera.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aoi {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Aoi {
    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x0 + self.width && y >= self.y0 && y < self.y0 + self.height
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoreSite {
    pub id: u32,
    pub cx: f64,
    pub cy: f64,
    pub aoi: Aoi,
}

impl CoreSite {
    /// True when the frame edge cut the nominal AOI.
    pub fn is_clipped(&self, aoi_size_px: usize) -> bool {
        self.aoi.width < aoi_size_px || self.aoi.height < aoi_size_px
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoreMap {
    pub frame_width: usize,
    pub frame_height: usize,
    pub sites: Vec<CoreSite>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoreMapJson {
    frame: FrameDimsJson,
    sites: Vec<SiteJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameDimsJson {
    w: usize,
    h: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SiteJson {
    id: u32,
    cx: f64,
    cy: f64,
    aoi: [usize; 4],
}

impl CoreMap {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn site(&self, id: u32) -> Option<&CoreSite> {
        self.sites.iter().find(|s| s.id == id)
    }

    /// Serializes as `{frame: {w, h}, sites: [{id, cx, cy, aoi: [x0, y0, w, h]}]}`.
    pub fn to_json(&self) -> String {
        let j = CoreMapJson {
            frame: FrameDimsJson {
                w: self.frame_width,
                h: self.frame_height,
            },
            sites: self
                .sites
                .iter()
                .map(|s| SiteJson {
                    id: s.id,
                    cx: s.cx,
                    cy: s.cy,
                    aoi: [s.aoi.x0, s.aoi.y0, s.aoi.width, s.aoi.height],
                })
                .collect(),
        };
        serde_json::to_string_pretty(&j).expect("core map serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: CoreMapJson = serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("core map JSON: {e}")))?;
        let map = CoreMap {
            frame_width: j.frame.w,
            frame_height: j.frame.h,
            sites: j
                .sites
                .into_iter()
                .map(|s| CoreSite {
                    id: s.id,
                    cx: s.cx,
                    cy: s.cy,
                    aoi: Aoi {
                        x0: s.aoi[0],
                        y0: s.aoi[1],
                        width: s.aoi[2],
                        height: s.aoi[3],
                    },
                })
                .collect(),
        };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.sites.iter().enumerate() {
            if s.id as usize != i {
                return Err(Error::invalid(format!(
                    "core map ids must be dense from 0; site {i} has id {}",
                    s.id
                )));
            }
            if s.aoi.x0 + s.aoi.width > self.frame_width
                || s.aoi.y0 + s.aoi.height > self.frame_height
            {
                return Err(Error::invalid(format!(
                    "site {} AOI leaves the frame",
                    s.id
                )));
            }
            if !s.cx.is_finite() || !s.cy.is_finite() {
                return Err(Error::invalid(format!("site {} centroid not finite", s.id)));
            }
        }
        Ok(())
    }

    /// Median distance from each centroid to its nearest neighbour.
    pub fn median_spacing(&self) -> Option<f64> {
        let pts: Vec<[f64; 2]> = self.sites.iter().map(|s| [s.cx, s.cy]).collect();
        median_nn_distance(&pts)
    }
}

fn median_nn_distance(pts: &[[f64; 2]]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let mut nn: Vec<f64> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            pts.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    nn.sort_by(f64::total_cmp);
    let m = nn.len();
    Some(if m % 2 == 1 {
        nn[m / 2]
    } else {
        0.5 * (nn[m / 2 - 1] + nn[m / 2])
    })
}

/// Otsu's threshold over the 12-bit histogram: the count `t` maximizing the
/// between-class variance of `{v ≤ t}` and `{v > t}`.
pub fn otsu_threshold(frame: &SpeckleFrame) -> u16 {
    let mut hist = vec![0u64; MAX_COUNT as usize + 1];
    for &v in frame.values() {
        hist[v as usize] += 1;
    }
    let total = frame.values().len() as f64;
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(v, &c)| v as f64 * c as f64)
        .sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best_t, mut best_var) = (0u16, -1.0);
    for (t, &c) in hist.iter().enumerate() {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let var = w0 * w1 * (m0 - m1).powi(2);
        if var > best_var {
            best_var = var;
            best_t = t as u16;
        }
    }
    best_t
}

struct Cluster {
    cx: f64,
    cy: f64,
    brightness: f64,
}

/// Locates every core in `frame` and assigns each an AOI of
/// `aoi_size_px × aoi_size_px` centered on its centroid.
///
/// Sites are ordered by `(cy, cx)` and numbered densely from zero. A frame
/// with no clusters yields an empty map.
pub fn extract_core_map(
    frame: &SpeckleFrame,
    params: &DbscanParams,
    aoi_size_px: usize,
) -> Result<CoreMap> {
    params.validate()?;
    if aoi_size_px < 4 || !aoi_size_px.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "AOI size must be even and >= 4, got {aoi_size_px}"
        )));
    }
    let threshold = params
        .intensity_threshold
        .unwrap_or_else(|| otsu_threshold(frame));

    // points in (y, x) raster order, which fixes border-point ownership
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for y in 0..frame.height() {
        for x in 0..frame.width() {
            let v = frame.get(x, y);
            if v > threshold {
                points.push([x as f64, y as f64]);
                weights.push(v as f64);
            }
        }
    }
    let labeling = dbscan(&points, params)?;

    let clusters: Vec<Cluster> = labeling
        .members()
        .into_iter()
        .map(|idx| {
            let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
            for &i in &idx {
                sx += weights[i] * points[i][0];
                sy += weights[i] * points[i][1];
                sw += weights[i];
            }
            Cluster {
                cx: sx / sw,
                cy: sy / sw,
                brightness: sw,
            }
        })
        .collect();
    let kept = deduplicate(clusters);

    let mut centroids: Vec<[f64; 2]> = kept.iter().map(|c| [c.cx, c.cy]).collect();
    centroids.sort_by(|a, b| a[1].total_cmp(&b[1]).then(a[0].total_cmp(&b[0])));
    let sites = centroids
        .iter()
        .enumerate()
        .map(|(id, &[cx, cy])| CoreSite {
            id: id as u32,
            cx,
            cy,
            aoi: centered_aoi(cx, cy, aoi_size_px, frame.width(), frame.height()),
        })
        .collect();
    Ok(CoreMap {
        frame_width: frame.width(),
        frame_height: frame.height(),
        sites,
    })
}

/// Drops any centroid closer than half the median nearest-neighbour spacing
/// to a brighter one.
fn deduplicate(mut clusters: Vec<Cluster>) -> Vec<Cluster> {
    let pts: Vec<[f64; 2]> = clusters.iter().map(|c| [c.cx, c.cy]).collect();
    let Some(spacing) = median_nn_distance(&pts) else {
        return clusters;
    };
    let min_sep = 0.5 * spacing;
    clusters.sort_by(|a, b| {
        b.brightness
            .total_cmp(&a.brightness)
            .then(a.cy.total_cmp(&b.cy))
            .then(a.cx.total_cmp(&b.cx))
    });
    let mut kept: Vec<Cluster> = Vec::with_capacity(clusters.len());
    for c in clusters {
        let dup = kept
            .iter()
            .any(|k| ((k.cx - c.cx).powi(2) + (k.cy - c.cy).powi(2)).sqrt() < min_sep);
        if !dup {
            kept.push(c);
        }
    }
    kept
}

/// Square AOI whose pixel centers are symmetric about `(cx, cy)` to within
/// half a pixel, clipped to the frame.
pub fn centered_aoi(cx: f64, cy: f64, size: usize, width: usize, height: usize) -> Aoi {
    let half = size as f64 / 2.0;
    let clip = |c: f64, limit: usize| -> (usize, usize) {
        let start = (c - half + 1.0).floor() as i64;
        let end = start + size as i64;
        let s = start.clamp(0, limit as i64) as usize;
        let e = end.clamp(0, limit as i64) as usize;
        (s, e - s)
    };
    let (x0, w) = clip(cx, width);
    let (y0, h) = clip(cy, height);
    Aoi {
        x0,
        y0,
        width: w,
        height: h,
    }
}
