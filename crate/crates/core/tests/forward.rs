use std::f64::consts::PI;

use swave::forward::{ExcitationSpec, HarmonicField, PotentialShape, PotentialSpec, SourceGeometry, SteadyStateField};
use swave::phantom::{build_phantom, Material, PhantomSpec};
use swave::sequence::fundamental_period;
use swave::C64;

type Point = [f64; 3];

fn field(youngs: f64, eta: f64, freqs: &[f64]) -> SteadyStateField {
    let phantom =
        build_phantom(&PhantomSpec::homogeneous(0.1, 0.002, Material::from_youngs(youngs, 1000.0, eta))).unwrap();
    let exc = ExcitationSpec::tones(freqs, 50e-6, SourceGeometry::bottom_plate(&phantom.bounds(), 20.0));
    SteadyStateField::new(&phantom, &exc).unwrap()
}

fn along(x: Point, d: Point, s: f64) -> Point {
    [x[0] + s * d[0], x[1] + s * d[1], x[2] + s * d[2]]
}

fn dominant(v: [C64; 3]) -> C64 {
    *v.iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap()
}

#[test]
fn simulated_wavelength_matches_elastic_speed() {
    for &(youngs, f) in &[(2800.0, 40.0), (6200.0, 60.0), (21200.0, 50.0)] {
        let fld = field(youngs, 0.0, &[f]);
        let k = ExcitationSpec::tones(&[f], 1.0, SourceGeometry::bottom_plate(&fld.bounds(), 20.0)).basis().unwrap()[0];
        let lambda = (youngs / 3.0 / 1000.0).sqrt() / f;
        let step = lambda / 16.0;
        let start = [0.06, 0.0, 0.0];
        // Unwrapped phase along the propagation direction, 16 samples per wavelength.
        let mut phase = Vec::new();
        let mut prev = dominant(fld.harmonics(start).phasors[0]).arg();
        let mut acc = prev;
        for n in 0..24 {
            let a = dominant(fld.harmonics(along(start, k, n as f64 * step)).phasors[0]).arg();
            let mut d = a - prev;
            while d > PI {
                d -= 2.0 * PI;
            }
            while d < -PI {
                d += 2.0 * PI;
            }
            acc += d;
            prev = a;
            phase.push((n as f64 * step, acc));
        }
        let n = phase.len() as f64;
        let (ms, mp) = phase.iter().fold((0.0, 0.0), |(a, b), (s, p)| (a + s / n, b + p / n));
        let slope = phase.iter().map(|(s, p)| (s - ms) * (p - mp)).sum::<f64>()
            / phase.iter().map(|(s, _)| (s - ms).powi(2)).sum::<f64>();
        let measured = 2.0 * PI / slope.abs();
        assert!((measured / lambda - 1.0).abs() < 0.02, "E {youngs} f {f}: {measured} vs {lambda}");
    }
}

#[test]
fn field_is_periodic_in_the_fundamental() {
    let freqs = [40.0, 50.0, 60.0];
    let fld = field(6200.0, 0.5, &freqs);
    let t0 = fundamental_period(&freqs).unwrap();
    for &x in &[[0.03, 0.0, 0.0], [0.05, 0.01, -0.004], [0.08, -0.02, 0.002]] {
        for &t in &[0.0, 0.0137, 0.071] {
            let u = fld.displacement(x, t);
            for m in [1.0, 2.0, 7.0] {
                let v = fld.displacement(x, t + m * t0);
                for a in 0..3 {
                    assert!((u[a] - v[a]).abs() <= 1e-12 * 50e-6, "x {x:?} t {t} m {m}");
                }
            }
        }
    }
}

#[test]
fn voigt_speed_is_continuous_at_zero_viscosity() {
    for youngs in [2800.0, 6200.0, 11600.0, 21200.0] {
        let elastic = Material::from_youngs(youngs, 1000.0, 0.0);
        let soft = Material::from_youngs(youngs, 1000.0, 1e-6);
        for f in [40.0, 100.0, 200.0] {
            let a = elastic.phase_speed(f).unwrap();
            let b = soft.phase_speed(f).unwrap();
            assert!((b / a - 1.0).abs() < 1e-3);
        }
    }
}

#[test]
fn voigt_speed_rises_with_frequency() {
    let m = Material::from_youngs(6200.0, 1000.0, 1.0);
    let speeds: Vec<f64> = [40.0, 60.0, 100.0, 160.0, 200.0].iter().map(|&f| m.phase_speed(f).unwrap()).collect();
    assert!(speeds.windows(2).all(|w| w[1] > w[0]), "{speeds:?}");
}

/// Curl of a complex vector field by central differences with step `h` [m].
fn curl(f: impl Fn(Point) -> [C64; 3], x: Point, h: f64) -> [C64; 3] {
    let d = |a: usize, c: usize| {
        let mut p = x;
        let mut m = x;
        p[a] += h;
        m[a] -= h;
        (f(p)[c] - f(m)[c]) / (2.0 * h)
    };
    [d(1, 2) - d(2, 1), d(2, 0) - d(0, 2), d(0, 1) - d(1, 0)]
}

fn norm3(v: [C64; 3]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

#[test]
fn shear_field_rotates_and_gradient_contaminant_does_not() {
    let f = 50.0;
    let fld = field(6200.0, 0.0, &[f]);
    let lambda = (6200.0f64 / 3000.0).sqrt() / f;
    let h = lambda * 1e-4;
    let k = 2.0 * PI / lambda;
    let x = [0.05, 0.003, -0.002];
    let shear = curl(|p| fld.harmonics(p).phasors[0], x, h);
    let amp = norm3(fld.harmonics(x).phasors[0]);
    assert!(norm3(shear) > 0.5 * k * amp);

    for shape in [
        PotentialShape::PlaneWave { direction: [0.6, 0.48, 0.64], speed: 10.0, origin: [0.0; 3] },
        PotentialShape::Sinusoid { wavevector: [300.0, -120.0, 80.0] },
        PotentialShape::Quadratic { center: [0.01, 0.0, 0.0] },
    ] {
        let pot = PotentialSpec { shape, frequencies: vec![f] };
        let g = |p: Point| pot.gradient(p, 1e-5, Some(f));
        let r = curl(g, x, h);
        let scale = norm3(g(x)).max(1e-5 * 0.01);
        assert!(norm3(r) < 1e-6 * scale * k, "{:?}: {}", pot.shape, norm3(r));
    }
}

#[test]
fn viscous_amplitude_decays_toward_the_probe() {
    let fld = field(6200.0, 1.0, &[100.0]);
    let deep = norm3(fld.harmonics([0.09, 0.0, 0.0]).phasors[0]);
    let shallow = norm3(fld.harmonics([0.02, 0.0, 0.0]).phasors[0]);
    assert!(shallow < deep);
}
