//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero when any criterion fails.
//!
//! Run a subset with `SWAVE_ACCEPTANCE=4,5,6 cargo test --test acceptance`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swave::acquisition::{acquire_sweep, form_volumes, AcquisitionParams};
use swave::arfi::{
    elasticity_from_sws, estimate_group_sws, estimate_phase_velocity, repeat_measurements, repeat_seeds, ArfiScene,
};
use swave::forward::{ExcitationSpec, PotentialShape, PotentialSpec, SourceGeometry, SteadyStateField};
use swave::geometry::{CartesianGrid, FrustumGeometry};
use swave::inversion::{curl2d, curl3d, CartesianPhasorSet, CurlMode};
use swave::io::ManifestEntry;
use swave::phantom::{build_phantom, Material};
use swave::phasor::ToneFitter;
use swave::pipeline::{
    acquisition_time_report, f_set_label, invert_mode, run_pipeline, run_to_phasors, stats_rows, ContaminantConfig,
    DisplacementSource, PhantomConfig, RunConfig, REFERENCE_MODULI,
};
use swave::sequence::{plan_sequence, spectral_separability, validate_synchronization, SequenceParams, SequencePlan};
use swave::{Error, Execution, Volume, C64};

// Criterion 1
const ORACLE_RECOVERY: f64 = 0.15;
const TRACKED_RECOVERY: f64 = 0.20;
const PHANTOM_BUDGET_S: f64 = 300.0;
const MAX_GRID_SIDE: usize = 128;
// Criteria 2 and 3
const CONTAMINANT_FRACTION: f64 = 0.2;
const CONTAMINANT_SPEED: f64 = 10.0;
const ORDERING_MIN_PHANTOMS: usize = 3;
const IMMUNITY_SHIFT: f64 = 0.03;
// Criterion 5
const SEPARABILITY_TOLERANCE: f64 = 0.05;
// Criterion 6
const DEEP_REDUCTION_PCT: f64 = 83.3;
const SHALLOW_REDUCTION_PCT: f64 = 87.5;
const REDUCTION_PRECISION_PCT: f64 = 0.05;
// Criterion 7
const PHASOR_EXACT: f64 = 1e-9;
// Criterion 8
const CURL_ZERO: f64 = 1e-10;
// Criterion 9
const GROUP_SPEED_TOLERANCE: f64 = 0.01;
const CLOSURE_TOLERANCE: f64 = 0.05;
const NOISY_MEAN_TOLERANCE: f64 = 0.10;
const NOISY_SNR_DB: f64 = 20.0;
const REPEATS: usize = 8;
// Criterion 10
const VISCOUS_YOUNGS: f64 = 6200.0;
const VISCOUS_ETA: f64 = 2.0;
// Criterion 12
const PHASE_SPREAD_MAX: f64 = 1e-9;

const COARSE_AXIAL_PITCH: f64 = 0.45e-3;
const COARSE_AXIAL_COUNT: usize = 223;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

type Check = fn() -> swave::Result<Outcome>;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Pipeline configuration shared by the phantom criteria: 1 mm Cartesian
/// spacing and every ninth frame. Oracle runs sample the exact field on a
/// 0.45 mm axial raster, which is still finer than the output grid.
fn phantom_config(youngs: f64, eta: f64, source: DisplacementSource) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.name = format!("E{youngs}");
    cfg.phantom = PhantomConfig::homogeneous(youngs, eta);
    cfg.acquisition.source = source;
    cfg.acquisition.frame_stride = 9;
    cfg.inversion.spacing = 1e-3;
    cfg.outputs.intermediates = false;
    cfg.outputs.slices = false;
    if source == DisplacementSource::Oracle {
        cfg.geometry.axial_pitch = COARSE_AXIAL_PITCH;
        cfg.geometry.n_axial = COARSE_AXIAL_COUNT;
    }
    cfg
}

fn contaminant() -> ContaminantConfig {
    ContaminantConfig {
        potential: PotentialSpec {
            shape: PotentialShape::PlaneWave { direction: [1.0, 0.0, 0.0], speed: CONTAMINANT_SPEED, origin: [0.0; 3] },
            frequencies: vec![40.0, 50.0, 60.0],
        },
        fraction: CONTAMINANT_FRACTION,
    }
}

/// ROI mean and std of one frequency-set label.
#[derive(Clone, Copy, Debug)]
struct Roi {
    mean: f64,
    std: f64,
}

/// Per-mode ROI statistics, keyed by frequency-set label.
#[derive(Clone, Debug, Default)]
struct ModeRows {
    rows: HashMap<(CurlMode, String), Roi>,
    seconds: f64,
    grid: [usize; 3],
}

impl ModeRows {
    fn get(&self, mode: CurlMode, f_set: &str) -> Roi {
        self.rows[&(mode, f_set.to_string())]
    }
}

fn evaluate(cfg: &RunConfig, modes: &[CurlMode]) -> swave::Result<ModeRows> {
    let start = Instant::now();
    let stage = run_to_phasors(cfg, Execution::Parallel)?;
    let mut out = ModeRows { grid: stage.cartesian.grid.dims, ..ModeRows::default() };
    for &mode in modes {
        let (per_freq, fused) = invert_mode(&stage, cfg, mode, Execution::Parallel)?;
        for r in stats_rows(cfg, mode, &per_freq, &fused)? {
            out.rows.insert((mode, r.f_set.clone()), Roi { mean: r.mean_pa, std: r.std_pa });
        }
    }
    out.seconds = start.elapsed().as_secs_f64();
    Ok(out)
}

static ORACLE_CACHE: Mutex<Vec<((u64, bool), ModeRows)>> = Mutex::new(Vec::new());

/// Oracle runs under all three curl modes, shared between criteria.
fn oracle_rows(youngs: f64, contaminated: bool) -> swave::Result<ModeRows> {
    let key = (youngs.to_bits(), contaminated);
    if let Some((_, rows)) = ORACLE_CACHE.lock().unwrap().iter().find(|(k, _)| *k == key) {
        return Ok(rows.clone());
    }
    let mut cfg = phantom_config(youngs, 0.0, DisplacementSource::Oracle);
    if contaminated {
        cfg.contaminant = Some(contaminant());
    }
    let rows = evaluate(&cfg, &CurlMode::ALL)?;
    ORACLE_CACHE.lock().unwrap().push((key, rows.clone()));
    Ok(rows)
}

const DEEP_SET: &str = "40/50/60";

fn homogeneous_recovery() -> swave::Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for &e in &REFERENCE_MODULI {
        let oracle = oracle_rows(e, false)?.get(CurlMode::Curl3d, DEEP_SET).mean;
        let tracked = evaluate(&phantom_config(e, 0.0, DisplacementSource::Tracked), &[CurlMode::Curl3d])?;
        let t = tracked.get(CurlMode::Curl3d, DEEP_SET).mean;
        let ok = rel(oracle, e) <= ORACLE_RECOVERY
            && rel(t, e) <= TRACKED_RECOVERY
            && tracked.seconds <= PHANTOM_BUDGET_S
            && tracked.grid.iter().all(|&n| n <= MAX_GRID_SIDE);
        pass &= ok;
        parts.push(format!(
            "{:.1}k: oracle {:+.1}% tracked {:+.1}% ({:.0} s)",
            e / 1e3,
            100.0 * (oracle / e - 1.0),
            100.0 * (t / e - 1.0),
            tracked.seconds
        ));
    }
    Ok(Outcome::new(pass, parts.join(", ")))
}

fn curl_ordering() -> swave::Result<Outcome> {
    let mut holds = 0;
    let mut parts = Vec::new();
    for &e in &REFERENCE_MODULI {
        let r = oracle_rows(e, true)?;
        let [none, c2, c3] = CurlMode::ALL.map(|m| r.get(m, DEEP_SET).std);
        let ok = c3 <= c2 && c3 <= none;
        holds += ok as usize;
        parts.push(format!("{:.1}k {}: {c3:.1}/{c2:.1}/{none:.1}", e / 1e3, if ok { "ok" } else { "no" }));
    }
    Ok(Outcome::new(
        holds >= ORDERING_MIN_PHANTOMS,
        format!("{holds}/4 phantoms; std curl3d/curl2d/none [Pa] {}", parts.join(", ")),
    ))
}

fn compressional_immunity() -> swave::Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for &e in &REFERENCE_MODULI {
        let clean = oracle_rows(e, false)?;
        let dirty = oracle_rows(e, true)?;
        let shift = |m| rel(dirty.get(m, DEEP_SET).mean, clean.get(m, DEEP_SET).mean);
        let (s3, s0) = (shift(CurlMode::Curl3d), shift(CurlMode::None));
        pass &= s3 < IMMUNITY_SHIFT && s0 > s3;
        parts.push(format!("{:.1}k: curl3d {:.2}% none {:.2}%", e / 1e3, 100.0 * s3, 100.0 * s0));
    }
    Ok(Outcome::new(pass, parts.join(", ")))
}

fn presets() -> swave::Result<(SequencePlan, SequencePlan)> {
    Ok((plan_sequence(&SequenceParams::deep())?, plan_sequence(&SequenceParams::shallow())?))
}

fn sequence_budgets() -> swave::Result<Outcome> {
    let (deep, shallow) = presets()?;
    let got = |p: &SequencePlan| (p.frames_per_plane, p.total_frames, (p.total_time * 1e3).round() as u64);
    let pass = got(&deep) == (549, 5490, 2000) && got(&shallow) == (399, 3990, 1500);
    Ok(Outcome::new(
        pass,
        format!(
            "deep {}/{} frames {:.3} s, shallow {}/{} frames {:.3} s",
            deep.frames_per_plane,
            deep.total_frames,
            deep.total_time,
            shallow.frames_per_plane,
            shallow.total_frames,
            shallow.total_time
        ),
    ))
}

fn spectral_separation() -> swave::Result<Outcome> {
    let (deep, shallow) = presets()?;
    let mut pass = true;
    let mut parts = Vec::new();
    for plan in [&deep, &shallow] {
        let rep = spectral_separability(plan, SEPARABILITY_TOLERANCE);
        pass &= rep.passed;
        let worst = rep.tones.iter().map(|t| t.deviation).fold(0.0, f64::max);
        parts.push(format!(
            "{:.0} ms window worst {:.2}%",
            plan.frames_per_plane as f64 / plan.frame_rate * 1e3,
            100.0 * worst
        ));
    }
    Ok(Outcome::new(pass, parts.join(", ")))
}

fn acquisition_time() -> swave::Result<Outcome> {
    let (deep, shallow) = presets()?;
    let rows = acquisition_time_report(&deep, &shallow, REPEATS);
    let find = |m: &str| rows.iter().find(|r| r.method == m).cloned();
    let (Some(d), Some(s)) = (find("UF S-WAVE deep"), find("UF S-WAVE shallow")) else {
        return Ok(Outcome::new(false, "report rows missing"));
    };
    let pass = (d.reduction_pct - DEEP_REDUCTION_PCT).abs() < REDUCTION_PRECISION_PCT
        && (s.reduction_pct - SHALLOW_REDUCTION_PCT).abs() < REDUCTION_PRECISION_PCT
        && d.reduction_display == "83%"
        && s.reduction_display == "88%";
    Ok(Outcome::new(
        pass,
        format!(
            "deep {:.1}% ({}), shallow {:.1}% ({})",
            d.reduction_pct, d.reduction_display, s.reduction_pct, s.reduction_display
        ),
    ))
}

fn synthesize(t: &[f64], freqs: &[f64], dc: f64, p: &[C64]) -> Vec<f64> {
    t.iter()
        .map(|&t| dc + freqs.iter().zip(p).map(|(&f, z)| (z * C64::from_polar(1.0, 2.0 * PI * f * t)).re).sum::<f64>())
        .collect()
}

fn phasor_err(a: &[C64], b: &[C64]) -> f64 {
    let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}

fn phasor_exactness() -> swave::Result<Outcome> {
    let (deep, shallow) = presets()?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = [0.0f64; 4];
    for plan in [&deep, &shallow] {
        let t: Vec<f64> = (0..plan.frames_per_plane).map(|n| plan.frame_time(0, n)).collect();
        let freqs = &plan.frequencies;
        let fitter = ToneFitter::new(&t, freqs)?;
        let draw = |rng: &mut ChaCha8Rng| -> Vec<C64> {
            freqs.iter().map(|_| C64::from_polar(rng.random_range(0.1..2.0), rng.random_range(-PI..PI))).collect()
        };
        for _ in 0..64 {
            let p = draw(&mut rng);
            let q = draw(&mut rng);
            let dc: f64 = rng.random_range(-5.0..5.0);
            let (_, est, _) = fitter.fit(&synthesize(&t, freqs, dc, &p));
            worst[0] = worst[0].max(phasor_err(&est, &p));

            let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let u = synthesize(&t, freqs, 0.0, &p);
            let v = synthesize(&t, freqs, 0.0, &q);
            let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let (_, fu, _) = fitter.fit(&u);
            let (_, fv, _) = fitter.fit(&v);
            let (_, fm, _) = fitter.fit(&mix);
            let expect: Vec<C64> = fu.iter().zip(&fv).map(|(x, y)| x * a + y * b).collect();
            worst[1] = worst[1].max(phasor_err(&fm, &expect));

            let tau = rng.random_range(0.0..plan.fundamental_period);
            let shifted: Vec<f64> = t.iter().map(|&t| t + tau).collect();
            let (_, fs, _) = fitter.fit(&synthesize(&shifted, freqs, 0.0, &p));
            let rotated: Vec<C64> =
                freqs.iter().zip(&p).map(|(&f, z)| z * C64::from_polar(1.0, 2.0 * PI * f * tau)).collect();
            worst[2] = worst[2].max(phasor_err(&fs, &rotated));

            let offset: Vec<f64> = u.iter().map(|x| x + dc).collect();
            let (d0, fo, _) = fitter.fit(&offset);
            worst[3] = worst[3].max(phasor_err(&fo, &fu)).max((d0 - dc).abs() / dc.abs().max(1.0));
        }
    }
    Ok(Outcome::new(
        worst.iter().all(|&w| w <= PHASOR_EXACT),
        format!(
            "recovery {:.1e}, linearity {:.1e}, time shift {:.1e}, DC {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    ))
}

fn cartesian(dims: [usize; 3], h: f64, field: impl Fn([f64; 3]) -> [C64; 3]) -> swave::Result<CartesianPhasorSet> {
    let grid = CartesianGrid::isotropic(dims, h, [0.0; 3])?;
    let mut comps = [(); 3].map(|_| Volume::filled(dims, C64::default()));
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let v = field(grid.point(i, j, k));
                for c in 0..3 {
                    comps[c][[i, j, k]] = v[c];
                }
            }
        }
    }
    Ok(CartesianPhasorSet {
        frequencies: vec![50.0],
        components: vec![comps],
        grid,
        mask: Volume::filled(dims, true),
    })
}

fn curl_correctness() -> swave::Result<Outcome> {
    let dims = [24, 20, 16];
    let h = 0.5e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut a = [[0.0f64; 3]; 3];
    for r in 0..3 {
        for c in r..3 {
            a[r][c] = rng.random_range(-1.0..1.0);
            a[c][r] = a[r][c];
        }
    }
    let phase = C64::from_polar(1.0, 0.7);
    let linear = cartesian(dims, h, |x| {
        [0, 1, 2].map(|r| phase * (a[r][0] * x[0] + a[r][1] * x[1] + a[r][2] * x[2]))
    })?;
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let c3 = curl3d(&linear)?;
    let mut zero_err: f64 = 0.0;
    for q in 0..c3.boundary.len() {
        if !c3.boundary.as_slice()[q] {
            for comp in &c3.components[0] {
                zero_err = zero_err.max(comp.as_slice()[q].norm() / scale);
            }
        }
    }

    let k = 2.0 * PI / 8e-3;
    let bound = k.powi(3) * h * h / 6.0;
    let wave = |x: [f64; 3]| C64::from_polar(1.0, -k * x[0]);
    let along_z = cartesian(dims, h, |x| [C64::default(), C64::default(), wave(x)])?;
    let along_y = cartesian(dims, h, |x| [C64::default(), wave(x), C64::default()])?;
    let c3 = curl3d(&along_z)?;
    let c2 = curl2d(&along_y)?;
    let (mut err3, mut err2) = (0.0f64, 0.0f64);
    let grid = along_z.grid;
    for q in 0..c3.boundary.len() {
        let [i, j, kk] = c3.boundary.coords_of(q);
        let x = grid.point(i, j, kk);
        let i_k = C64::new(0.0, k);
        if !c3.boundary.as_slice()[q] {
            let expect = [C64::default(), i_k * wave(x), C64::default()];
            for (comp, e) in c3.components[0].iter().zip(expect) {
                err3 = err3.max((comp.as_slice()[q] - e).norm());
            }
        }
        if !c2.boundary.as_slice()[q] {
            err2 = err2.max((c2.components[0][0].as_slice()[q] + i_k * wave(x)).norm());
        }
    }
    let pass = zero_err <= CURL_ZERO && err3 <= bound && err2 <= bound;
    Ok(Outcome::new(
        pass,
        format!(
            "linear field {zero_err:.1e}; plane wave curl3d {err3:.3e}, curl2d {err2:.3e} (bound {bound:.3e} 1/m)"
        ),
    ))
}

fn arfi_closure() -> swave::Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for &e in &REFERENCE_MODULI {
        let material = Material::from_youngs(e, 1000.0, 0.0);
        let scene = ArfiScene { material, ..ArfiScene::default() };
        let g = estimate_group_sws(&scene.simulate()?)?;
        let c_true = (material.mu / material.rho).sqrt();
        let e_est = elasticity_from_sws(g.speed, material.rho)?;
        pass &= rel(g.speed, c_true) <= GROUP_SPEED_TOLERANCE && rel(e_est, e) <= CLOSURE_TOLERANCE;
        parts.push(format!("{:.1}k: c {:+.2}% E {:+.2}%", e / 1e3, 100.0 * (g.speed / c_true - 1.0), 100.0 * (e_est / e - 1.0)));
    }
    let e = 6200.0;
    let scene = ArfiScene {
        material: Material::from_youngs(e, 1000.0, 0.0),
        snr_db: Some(NOISY_SNR_DB),
        ..ArfiScene::default()
    };
    let noisy = repeat_measurements(&scene, &repeat_seeds(2024, REPEATS), Execution::Parallel)?;
    pass &= rel(noisy.mean, e) <= NOISY_MEAN_TOLERANCE;
    parts.push(format!("x{REPEATS} at {NOISY_SNR_DB} dB: {:.0} +/- {:.0} Pa", noisy.mean, noisy.std));
    Ok(Outcome::new(pass, parts.join(", ")))
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

fn dispersion_trend() -> swave::Result<Outcome> {
    let material = Material::from_youngs(VISCOUS_YOUNGS, 1000.0, VISCOUS_ETA);
    // Tones whose wavelength fits inside the tracked aperture.
    let arfi_freqs = [150.0, 170.0, 190.0, 210.0, 230.0];
    let scene = ArfiScene { material, frequencies: arfi_freqs.to_vec(), ..ArfiScene::default() };
    let pv = estimate_phase_velocity(&scene.simulate()?, &arfi_freqs)?;
    let speeds: Vec<f64> = pv.iter().filter_map(|p| p.speed).collect();
    let phase_ok = speeds.len() == arfi_freqs.len() && strictly_increasing(&speeds);

    let mut per_freq_ok = true;
    let mut fused = Vec::new();
    let mut parts = vec![format!(
        "ARFI c(f) {}",
        speeds.iter().map(|c| format!("{c:.3}")).collect::<Vec<_>>().join("<")
    )];
    for params in [SequenceParams::deep(), SequenceParams::shallow()] {
        let mut cfg = phantom_config(VISCOUS_YOUNGS, VISCOUS_ETA, DisplacementSource::Oracle);
        let label = f_set_label(&params.frequencies);
        let freqs = params.frequencies.clone();
        cfg.sequence = params;
        let rows = evaluate(&cfg, &[CurlMode::Curl3d])?;
        let e: Vec<f64> = freqs.iter().map(|&f| rows.get(CurlMode::Curl3d, &f_set_label(&[f])).mean).collect();
        per_freq_ok &= strictly_increasing(&e);
        let f = rows.get(CurlMode::Curl3d, &label).mean;
        fused.push(f);
        parts.push(format!(
            "{label}: {} fused {:.0}",
            e.iter().map(|v| format!("{v:.0}")).collect::<Vec<_>>().join("<"),
            f
        ));
    }
    let pass = phase_ok && per_freq_ok && fused[1] > fused[0];
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn manifest(cfg: &RunConfig) -> swave::Result<(Vec<u8>, Vec<ManifestEntry>)> {
    let report = run_pipeline(cfg, Execution::Parallel)?;
    let csv = std::fs::read(cfg.output_dir.join("stats.csv"))?;
    Ok((csv, report.artifacts))
}

fn determinism() -> swave::Result<Outcome> {
    let dirs = [tempfile::tempdir()?, tempfile::tempdir()?];
    let runs = dirs
        .iter()
        .map(|d| {
            let mut cfg = phantom_config(6200.0, 0.0, DisplacementSource::Oracle);
            cfg.outputs.intermediates = true;
            cfg.outputs.slices = true;
            cfg.output_dir = d.path().to_path_buf();
            manifest(&cfg)
        })
        .collect::<swave::Result<Vec<_>>>()?;
    let same_csv = runs[0].0 == runs[1].0;
    let same_hashes = runs[0].1 == runs[1].1 && !runs[0].1.is_empty();
    Ok(Outcome::new(
        same_csv && same_hashes,
        format!("stats.csv identical: {same_csv}, {} artifact hashes identical: {same_hashes}", runs[0].1.len()),
    ))
}

fn phase_coherence() -> swave::Result<Outcome> {
    let geometry = FrustumGeometry { n_axial: 24, n_lateral: 8, ..FrustumGeometry::default() };
    let phantom = build_phantom(&PhantomConfig::homogeneous(6200.0, 0.0).spec(&geometry))?;
    let base = SequenceParams::deep();
    let sets: [&[f64]; 5] = [&[40.0, 50.0, 60.0], &[100.0, 160.0, 200.0], &[25.0, 50.0], &[30.0, 45.0, 60.0], &[80.0]];
    let mut worst: f64 = 0.0;
    let mut plans = Vec::new();
    for (i, f) in sets.iter().enumerate() {
        let params = SequenceParams {
            frequencies: f.to_vec(),
            min_imaging: if i == 1 { 0.120 } else { base.min_imaging },
            ..base.clone()
        };
        plans.push(plan_sequence(&params)?);
    }
    let acquire = |plan: &SequencePlan| {
        let exc = ExcitationSpec::tones(&plan.frequencies, 50e-6, SourceGeometry::bottom_plate(&phantom.bounds(), 20.0));
        let field = SteadyStateField::new(&phantom, &exc)?;
        let params = AcquisitionParams { frame_stride: 7, ..AcquisitionParams::default() };
        acquire_sweep(&field, plan, &geometry, &params, Execution::Parallel)
    };
    for plan in &plans {
        let record = acquire(plan)?;
        let vols = form_volumes(&record)?;
        worst = worst.max(vols.phase_spread(&record));
    }
    let deep = &plans[0];
    let desync = deep.with_per_plane_period(deep.per_plane_period + 0.013);
    let rejected = matches!(form_volumes(&acquire(&desync)?), Err(Error::Synchronization { .. }));
    let flagged = !validate_synchronization(&desync).passed;
    Ok(Outcome::new(
        worst <= PHASE_SPREAD_MAX && rejected && flagged,
        format!(
            "worst spread {worst:.1e} s over {} plans; desynchronized plan rejected: {rejected}, flagged: {flagged}",
            plans.len()
        ),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 12] = [
        ("homogeneous recovery", homogeneous_recovery),
        ("curl std ordering", curl_ordering),
        ("compressional immunity", compressional_immunity),
        ("sequence budgets", sequence_budgets),
        ("spectral separability", spectral_separation),
        ("acquisition-time report", acquisition_time),
        ("phasor exactness", phasor_exactness),
        ("curl correctness", curl_correctness),
        ("ARFI baseline closure", arfi_closure),
        ("dispersion trend", dispersion_trend),
        ("determinism", determinism),
        ("phase coherence", phase_coherence),
    ];
    let selected: Option<Vec<usize>> = std::env::var("SWAVE_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if selected.as_ref().is_some_and(|s| !s.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = check().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        failed += !outcome.pass as usize;
        println!(
            "{} {id:>2} {name:<24} {} [{:.1} s]",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
