use std::collections::BTreeSet;

use mcmmf::clustering::{dbscan, extract_core_map, DbscanParams, NOISE};
use mcmmf::experiments::{Bench, InstrumentConfig};
use mcmmf::frame::SpeckleFrame;
use mcmmf::optics::{FiberSpec, WavelengthGrid};
use mcmmf::rng::stream_rng;
use rand::Rng;

fn params(eps: f64, min_pts: usize) -> DbscanParams {
    DbscanParams {
        eps,
        min_pts,
        intensity_threshold: None,
    }
}

/// Core points and their density-connected components, by exhaustive
/// pairwise distances and union-find.
fn brute_force_core_components(
    points: &[[f64; 2]],
    eps: f64,
    min_pts: usize,
) -> BTreeSet<Vec<usize>> {
    let n = points.len();
    let near = |i: usize, j: usize| {
        (points[i][0] - points[j][0]).hypot(points[i][1] - points[j][1]) <= eps
    };
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts)
        .collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for i in 0..n {
        for j in 0..i {
            if core[i] && core[j] && near(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in (0..n).filter(|&i| core[i]) {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

fn core_components_from_labels(labels: &[i32], core: &BTreeSet<usize>) -> BTreeSet<Vec<usize>> {
    let mut groups: std::collections::BTreeMap<i32, Vec<usize>> = Default::default();
    for &i in core {
        groups.entry(labels[i]).or_default().push(i);
    }
    groups.into_values().collect()
}

#[test]
fn two_grids_match_brute_force() {
    let mut pts = Vec::new();
    for ox in [0.0, 100.0] {
        for i in 0..3 {
            for j in 0..3 {
                pts.push([ox + i as f64, j as f64]);
            }
        }
    }
    let lab = dbscan(&pts, &params(3.0, 4)).unwrap();
    assert_eq!(lab.cluster_count, 2);
    assert_eq!(lab.noise_count(), 0);
    let oracle = brute_force_core_components(&pts, 3.0, 4);
    let core: BTreeSet<usize> = oracle.iter().flatten().copied().collect();
    assert_eq!(core.len(), 18);
    assert_eq!(core_components_from_labels(&lab.labels, &core), oracle);
}

#[test]
fn random_clouds_match_brute_force() {
    for seed in 0..20 {
        let mut rng = stream_rng(seed, 7);
        let n = rng.random_range(20..120);
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.random_range(0.0..40.0), rng.random_range(0.0..40.0)])
            .collect();
        let (eps, min_pts) = (rng.random_range(2.0..6.0), rng.random_range(2..6));
        let lab = dbscan(&pts, &params(eps, min_pts)).unwrap();
        let oracle = brute_force_core_components(&pts, eps, min_pts);
        let core: BTreeSet<usize> = oracle.iter().flatten().copied().collect();
        assert_eq!(lab.cluster_count, oracle.len(), "seed {seed}");
        assert!(core.iter().all(|&i| lab.labels[i] != NOISE));
        assert_eq!(
            core_components_from_labels(&lab.labels, &core),
            oracle,
            "seed {seed}"
        );
    }
}

fn blob_frame(w: usize, h: usize, blobs: &[(usize, usize, usize, usize)]) -> SpeckleFrame {
    let mut v = vec![0u16; w * h];
    for &(x0, y0, bw, bh) in blobs {
        for y in y0..y0 + bh {
            for x in x0..x0 + bw {
                v[y * w + x] = 3000;
            }
        }
    }
    SpeckleFrame::new(w, h, v).unwrap()
}

#[test]
fn split_core_is_deduplicated() {
    // 3×3 lattice of 9×8 blobs at 30 px; the center blob loses columns 3..6
    let mut blobs = Vec::new();
    for r in 0..3 {
        for c in 0..3 {
            let (x0, y0) = (20 + 30 * c, 20 + 30 * r);
            if (r, c) == (1, 1) {
                blobs.push((x0, y0, 3, 8));
                blobs.push((x0 + 6, y0, 3, 8));
            } else {
                blobs.push((x0, y0, 9, 8));
            }
        }
    }
    let frame = blob_frame(120, 120, &blobs);
    let p = DbscanParams {
        intensity_threshold: Some(100),
        ..DbscanParams::default()
    };
    let map = extract_core_map(&frame, &p, 10).unwrap();
    assert_eq!(map.len(), 9);
    let center = map
        .sites
        .iter()
        .find(|s| (s.cx - 54.0).abs() < 4.0 && (s.cy - 53.5).abs() < 1.0);
    assert!(center.is_some(), "{:?}", map.sites);
}

#[test]
fn brightness_scaling_keeps_the_map() {
    let blobs: Vec<_> = (0..4).map(|k| (10 + 25 * k, 10, 10, 10)).collect();
    let bright = blob_frame(120, 40, &blobs);
    let dim = SpeckleFrame::new(120, 40, bright.values().iter().map(|&v| v / 3).collect()).unwrap();
    let p = DbscanParams {
        intensity_threshold: Some(100),
        ..DbscanParams::default()
    };
    assert_eq!(
        extract_core_map(&bright, &p, 10).unwrap(),
        extract_core_map(&dim, &p, 10).unwrap()
    );
}

#[test]
fn rendered_bundle_is_fully_detected() {
    let grid = WavelengthGrid::uniform(650.0, 2.0, 6).unwrap();
    let cfg = InstrumentConfig::for_grid(FiberSpec::default(), grid, 5);
    let bench = Bench::build(&cfg).unwrap();
    let frame = bench.white_light_frame().unwrap();
    let map = extract_core_map(&frame, &cfg.dbscan, cfg.aoi_size_px).unwrap();
    assert!(map.len() >= 198, "{} sites", map.len());
    let matched = bench.match_sites(&map);
    assert!(matched.iter().filter(|m| m.is_some()).count() >= 198);
    for (site, truth) in map.sites.iter().zip(&matched) {
        let Some(t) = truth else { continue };
        let c = bench.layout().centers[*t];
        assert!((c[0] - site.cx).hypot(c[1] - site.cy) <= 2.0);
    }
    let again = extract_core_map(&frame, &cfg.dbscan, cfg.aoi_size_px).unwrap();
    assert_eq!(map, again);
}
