use std::collections::BTreeSet;

use mcmmf::experiments::{Bench, InstrumentConfig};
use mcmmf::frame::MAX_COUNT;
use mcmmf::optics::{Camera, FiberSpec, LinearFrame, WavelengthGrid};
use mcmmf::stm::{calibrate, load_stm, save_stm, Stm};

const X: usize = 6;

fn bench() -> (InstrumentConfig, Bench) {
    let grid = WavelengthGrid::uniform(650.0, 2.0, X).unwrap();
    let cfg = InstrumentConfig::for_grid(FiberSpec::default(), grid, 9);
    let bench = Bench::build(&cfg).unwrap();
    (cfg, bench)
}

fn channel_linear(bench: &Bench, j: usize, scale: f64) -> LinearFrame {
    let mut s = vec![0.0; X];
    s[j] = scale;
    bench.render_linear(&vec![s; bench.core_count()]).unwrap()
}

fn calibrated(cfg: &InstrumentConfig, bench: &Bench) -> (Stm, Camera) {
    let linear: Vec<LinearFrame> = (0..X).map(|j| channel_linear(bench, j, 1.0)).collect();
    let peak = linear
        .iter()
        .flat_map(|f| f.values.iter())
        .cloned()
        .fold(0.0, f64::max);
    let camera = Camera {
        gain: 0.9 * MAX_COUNT as f64 / peak,
    };
    let frames: Vec<_> = linear.iter().map(|f| camera.expose(f)).collect();
    let map = bench.true_core_map(cfg.aoi_size_px);
    let cal = calibrate(&frames, &cfg.grid, &map, cfg.pixels_per_core).unwrap();
    assert!(cal.skipped.is_empty());
    (cal.stm, camera)
}

#[test]
fn half_intensity_frame_halves_the_column() {
    let (cfg, bench) = bench();
    let (stm, camera) = calibrated(&cfg, &bench);
    let j = 2;
    let half = camera.expose(&channel_linear(&bench, j, 0.5));
    for core in stm.cores() {
        let y = stm.extract_pixel_vector(&half, core.id).unwrap();
        let col = core.column(j, X);
        assert_eq!(y.len(), cfg.pixels_per_core);
        for (a, b) in y.values.iter().zip(&col) {
            assert!((a - 0.5 * *b as f64).abs() <= 1.0 / MAX_COUNT as f64 + 1e-9);
        }
    }
}

#[test]
fn shapes_follow_the_grid() {
    let (cfg, bench) = bench();
    let (stm, _) = calibrated(&cfg, &bench);
    assert_eq!(stm.cores().len(), 200);
    for c in stm.cores() {
        assert_eq!(c.rows(), 4 * X);
        assert_eq!(c.matrix.len(), 4 * X * X);
        assert!(c.matrix.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn subsample_rows_are_nested() {
    let (cfg, bench) = bench();
    let (stm, _) = calibrated(&cfg, &bench);
    let rows = |s: &Stm| -> Vec<BTreeSet<(u32, u32)>> {
        s.cores()
            .iter()
            .map(|c| c.pixels.iter().copied().collect())
            .collect()
    };
    let mut prev = rows(&stm);
    for ratio in [3.0, 2.0, 1.0, 0.5] {
        let sub = stm.subsample(ratio, 77).unwrap();
        let cur = rows(&sub);
        for (small, big) in cur.iter().zip(&prev) {
            assert_eq!(small.len(), (ratio * X as f64).round() as usize);
            assert!(small.is_subset(big));
        }
        prev = cur;
    }
    assert_ne!(
        stm.subsample(1.0, 77).unwrap(),
        stm.subsample(1.0, 78).unwrap()
    );
}

#[test]
fn subsampled_extraction_reads_the_kept_rows() {
    let (cfg, bench) = bench();
    let (stm, camera) = calibrated(&cfg, &bench);
    let sub = stm.subsample(1.5, 3).unwrap();
    let frame = camera.expose(&channel_linear(&bench, 4, 1.0));
    for core in sub.cores() {
        let y = sub.extract_pixel_vector(&frame, core.id).unwrap();
        let col: Vec<f64> = core.column(4, X).iter().map(|&v| v as f64).collect();
        assert_eq!(y.values, col);
    }
}

#[test]
fn save_load_round_trip_on_disk() {
    let (cfg, bench) = bench();
    let (stm, _) = calibrated(&cfg, &bench);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bundle.stm");
    save_stm(&stm, &path).unwrap();
    let back = load_stm(&path).unwrap();
    assert_eq!(back, stm);
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
    assert!(load_stm(&path).is_err());
}
