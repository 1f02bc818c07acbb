use std::f64::consts::PI;

use swave::geometry::CartesianGrid;
use swave::inversion::{invert, smooth, CartesianPhasorSet, CurlMode, ElasticityVolume, FilterBank};
use swave::{Execution, Volume, C64};

const RHO: f64 = 1000.0;

/// Transverse plane shear wave of wavelength `lambda` along a fixed oblique direction.
fn plane_wave(extent: f64, h: f64, lambda: f64, scale: C64) -> CartesianPhasorSet {
    let n = [0.8, 0.36, 0.48];
    let pol = [-0.6, 0.48, 0.64];
    let k = 2.0 * PI / lambda;
    let dims = [(extent / h).round() as usize; 3].map(|d| d.max(4));
    let dims = [dims[0], dims[1], (dims[2] * 2) / 3];
    let grid = CartesianGrid::isotropic(dims, h, [0.0; 3]).unwrap();
    let comp = |c: usize| {
        Volume::from_fn(dims, |i, j, l| {
            let x = grid.point(i, j, l);
            scale * C64::from_polar(pol[c], -k * (n[0] * x[0] + n[1] * x[1] + n[2] * x[2]))
        })
    };
    CartesianPhasorSet {
        frequencies: vec![100.0],
        components: vec![[comp(0), comp(1), comp(2)]],
        grid,
        mask: Volume::filled(dims, true),
    }
}

fn youngs(lambda: f64, f: f64) -> f64 {
    3.0 * RHO * (lambda * f).powi(2)
}

/// Values at least `margin` [m] inside every face.
fn interior(e: &ElasticityVolume, margin: f64) -> Vec<f64> {
    let d = e.grid.dims;
    let m = (margin / e.grid.spacing[0]).ceil() as usize;
    let mut out = Vec::new();
    for i in m..d[0] - m {
        for j in m..d[1] - m {
            for l in m.min(d[2] / 2 - 1)..d[2] - m.min(d[2] / 2 - 1) {
                if e.mask[[i, j, l]] && e.e[[i, j, l]].is_finite() {
                    out.push(e.e[[i, j, l]]);
                }
            }
        }
    }
    out
}

fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty());
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn plane_wave_modulus_is_recovered() {
    let lambda = 9.0e-3;
    let truth = youngs(lambda, 100.0);
    let cart = plane_wave(36e-3, 1e-3, lambda, C64::new(1.0, 0.0));
    for mode in CurlMode::ALL {
        let e = &invert(&cart, mode, RHO, &FilterBank::default(), Execution::Parallel).unwrap()[0];
        let m = median(interior(e, 8e-3));
        assert!((m / truth - 1.0).abs() < 0.10, "{mode:?}: {m} vs {truth}");
    }
}

#[test]
fn complex_rescaling_leaves_modulus_unchanged() {
    let lambda = 9.0e-3;
    let a = plane_wave(28e-3, 1e-3, lambda, C64::new(1.0, 0.0));
    let b = plane_wave(28e-3, 1e-3, lambda, C64::new(-2.5e-5, 7.0e-6));
    for mode in [CurlMode::None, CurlMode::Curl3d] {
        let ea = &invert(&a, mode, RHO, &FilterBank::default(), Execution::Parallel).unwrap()[0];
        let eb = &invert(&b, mode, RHO, &FilterBank::default(), Execution::Parallel).unwrap()[0];
        let mut worst: f64 = 0.0;
        for (x, y) in ea.e.iter().zip(eb.e.iter()) {
            if x.is_finite() {
                worst = worst.max((x - y).abs() / x.abs());
            }
        }
        assert!(worst < 1e-9, "{mode:?}: {worst}");
    }
}

#[test]
fn halving_the_spacing_is_consistent() {
    let lambda = 9.0e-3;
    let coarse = plane_wave(30e-3, 1e-3, lambda, C64::new(1.0, 0.0));
    let fine = plane_wave(30e-3, 0.5e-3, lambda, C64::new(1.0, 0.0));
    let bank = FilterBank::default();
    let ec = median(interior(&invert(&coarse, CurlMode::Curl3d, RHO, &bank, Execution::Parallel).unwrap()[0], 8e-3));
    let ef = median(interior(&invert(&fine, CurlMode::Curl3d, RHO, &bank, Execution::Parallel).unwrap()[0], 8e-3));
    assert!((ef / ec - 1.0).abs() < 0.02, "h=1 mm {ec}, h=0.5 mm {ef}");
}

#[test]
fn shorter_waves_read_softer() {
    let bank = FilterBank::default();
    let median_e = |lambda: f64| {
        let cart = plane_wave(36e-3, 1e-3, lambda, C64::new(1.0, 0.0));
        median(interior(&invert(&cart, CurlMode::Curl3d, RHO, &bank, Execution::Parallel).unwrap()[0], 8e-3))
    };
    assert!(median_e(7e-3) < median_e(11e-3));
}

#[test]
fn smoothing_preserves_a_long_wave() {
    let cart = plane_wave(24e-3, 1e-3, 20e-3, C64::new(1.0, 0.0));
    let s = smooth(&cart, 0.5e-3, Execution::Sequential).unwrap();
    let q = [12, 12, 8];
    let (a, b) = (cart.components[0][0][q], s.components[0][0][q]);
    assert!((b - a).norm() < 0.05 * a.norm());
}

#[test]
fn parallel_and_sequential_agree() {
    let cart = plane_wave(20e-3, 1e-3, 9e-3, C64::new(1.0, 0.0));
    let bank = FilterBank::default();
    let par = invert(&cart, CurlMode::Curl3d, RHO, &bank, Execution::Parallel).unwrap();
    let seq = invert(&cart, CurlMode::Curl3d, RHO, &bank, Execution::Sequential).unwrap();
    assert_eq!(par, seq);
}

#[test]
fn negative_equalization_is_rejected() {
    let cart = plane_wave(12e-3, 1e-3, 9e-3, C64::new(1.0, 0.0));
    let bank = FilterBank { equalize: -1.0, ..FilterBank::default() };
    assert!(invert(&cart, CurlMode::None, RHO, &bank, Execution::Sequential).is_err());
}
