//! Synchronized sweep planning.
//!
//! A plane's acquisition slot (motor pulses, settling, imaging) must last an
//! integer number of excitation fundamental periods so that every plane starts
//! imaging at the same excitation phase.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::{self, PeakOptions};
use crate::volume::C64;

/// Frequencies are reduced to integer multiples of this quantum before the gcd.
pub const FREQUENCY_QUANTUM_HZ: f64 = 1e-3;
/// Longest fundamental period accepted as a usable common period [s].
pub const MAX_FUNDAMENTAL_PERIOD: f64 = 1.0;
/// Tolerance on `per_plane_period mod T0` [s].
pub const SYNC_TOLERANCE: f64 = 1e-6;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Fundamental period `T0 = 1 / gcd(frequencies)` [s].
pub fn fundamental_period(frequencies: &[f64]) -> Result<f64> {
    if frequencies.is_empty() {
        return Err(Error::Planning("no excitation frequencies".into()));
    }
    let mut g = 0u64;
    for &f in frequencies {
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::Planning(format!("frequency {f} Hz is not positive")));
        }
        let q = f / FREQUENCY_QUANTUM_HZ;
        let r = q.round();
        if (q - r).abs() > 1e-6 * r.max(1.0) {
            return Err(Error::Planning(format!(
                "frequency {f} Hz is not a multiple of the {FREQUENCY_QUANTUM_HZ} Hz quantum; \
                 frequencies are incommensurable"
            )));
        }
        g = gcd(g, r as u64);
    }
    let t0 = 1.0 / (g as f64 * FREQUENCY_QUANTUM_HZ);
    if t0 > MAX_FUNDAMENTAL_PERIOD {
        return Err(Error::Planning(format!(
            "frequencies {frequencies:?} share only a {:.3} Hz common divisor (T0 = {t0:.3} s > {MAX_FUNDAMENTAL_PERIOD} s); \
             treated as incommensurable",
            1.0 / t0
        )));
    }
    Ok(t0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SequenceParams {
    pub frequencies: Vec<f64>,
    pub frame_rate: f64,
    pub n_planes: usize,
    pub plane_angle_step_deg: f64,
    pub settling_time: f64,
    pub pulse_time: f64,
    pub pulse_count: u32,
    pub min_imaging: f64,
}

impl Default for SequenceParams {
    fn default() -> Self {
        Self::deep()
    }
}

impl SequenceParams {
    /// 40/50/60 Hz sequence with a 200 ms plane slot.
    pub fn deep() -> Self {
        SequenceParams {
            frequencies: vec![40.0, 50.0, 60.0],
            frame_rate: 3000.0,
            n_planes: 10,
            plane_angle_step_deg: 0.45,
            settling_time: 0.010,
            pulse_time: 0.007,
            pulse_count: 4,
            min_imaging: 0.180,
        }
    }

    /// 100/160/200 Hz sequence with a 150 ms plane slot.
    pub fn shallow() -> Self {
        SequenceParams {
            frequencies: vec![100.0, 160.0, 200.0],
            min_imaging: 0.120,
            ..Self::deep()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequencePlan {
    pub frequencies: Vec<f64>,
    pub frame_rate: f64,
    pub n_planes: usize,
    pub plane_angle_step_deg: f64,
    pub imaging_duration: f64,
    pub settling_time: f64,
    pub pulse_time: f64,
    pub pulse_count: u32,
    pub per_plane_period: f64,
    pub frames_per_plane: usize,
    pub total_time: f64,
    pub total_frames: usize,
    pub fundamental_period: f64,
}

impl SequencePlan {
    /// Start of plane `p`'s imaging window [s].
    pub fn imaging_start(&self, p: usize) -> f64 {
        p as f64 * self.per_plane_period + self.pulse_time + self.settling_time
    }

    /// Timestamp of frame `n` of plane `p` [s].
    pub fn frame_time(&self, p: usize, n: usize) -> f64 {
        self.imaging_start(p) + n as f64 / self.frame_rate
    }

    /// Period multiple `per_plane_period / T0`.
    pub fn period_multiple(&self) -> f64 {
        self.per_plane_period / self.fundamental_period
    }

    /// Copy of the plan with a different per-plane period and the dependent fields
    /// recomputed. The result is not guaranteed to be synchronized.
    pub fn with_per_plane_period(&self, per_plane_period: f64) -> SequencePlan {
        let imaging = per_plane_period - self.pulse_time - self.settling_time;
        let frames = (imaging * self.frame_rate).round().max(0.0) as usize;
        SequencePlan {
            per_plane_period,
            imaging_duration: imaging,
            frames_per_plane: frames,
            total_time: self.n_planes as f64 * per_plane_period,
            total_frames: self.n_planes * frames,
            ..self.clone()
        }
    }
}

/// Smallest synchronized plan meeting the minimum imaging time.
pub fn plan_sequence(params: &SequenceParams) -> Result<SequencePlan> {
    let t0 = fundamental_period(&params.frequencies)?;
    if !(params.frame_rate > 0.0 && params.frame_rate.is_finite()) {
        return Err(Error::Planning(format!("frame rate must be positive, got {}", params.frame_rate)));
    }
    if params.n_planes == 0 {
        return Err(Error::Planning("at least one plane is required".into()));
    }
    for (name, v) in [
        ("settling_time", params.settling_time),
        ("pulse_time", params.pulse_time),
        ("min_imaging", params.min_imaging),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Planning(format!("{name} must be non-negative, got {v}")));
        }
    }
    let need = params.pulse_time + params.settling_time + params.min_imaging;
    let multiple = ((need / t0) - 1e-9).ceil().max(1.0) as u64;
    let per_plane = multiple as f64 * t0;
    let imaging = per_plane - params.pulse_time - params.settling_time;
    let frames = (imaging * params.frame_rate).round() as usize;
    Ok(SequencePlan {
        frequencies: params.frequencies.clone(),
        frame_rate: params.frame_rate,
        n_planes: params.n_planes,
        plane_angle_step_deg: params.plane_angle_step_deg,
        imaging_duration: imaging,
        settling_time: params.settling_time,
        pulse_time: params.pulse_time,
        pulse_count: params.pulse_count,
        per_plane_period: per_plane,
        frames_per_plane: frames,
        total_time: params.n_planes as f64 * per_plane,
        total_frames: params.n_planes * frames,
        fundamental_period: t0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    pub checks: Vec<Check>,
    /// `per_plane_period mod T0`, folded to the nearest multiple [s].
    pub residual: f64,
    pub passed: bool,
}

/// Check every timing invariant of a plan; failures are reported, not raised.
pub fn validate_synchronization(plan: &SequencePlan) -> SyncReport {
    let mut checks = Vec::new();
    let t0 = fundamental_period(&plan.frequencies).ok();
    checks.push(Check {
        name: "fundamental_period".into(),
        passed: t0.is_some_and(|t| (t - plan.fundamental_period).abs() <= 1e-12),
        residual: t0.map_or(f64::NAN, |t| (t - plan.fundamental_period).abs()),
    });
    let residual = match t0 {
        Some(t) => {
            let r = plan.per_plane_period.rem_euclid(t);
            r.min(t - r)
        }
        None => f64::NAN,
    };
    checks.push(Check {
        name: "period_multiple".into(),
        passed: residual <= SYNC_TOLERANCE && plan.per_plane_period > 0.0,
        residual,
    });
    let slot = plan.pulse_time + plan.settling_time + plan.imaging_duration;
    let r = (plan.per_plane_period - slot).abs();
    checks.push(Check { name: "slot_budget".into(), passed: r <= 1e-12, residual: r });
    let frames = (plan.imaging_duration * plan.frame_rate).round();
    let r = (plan.frames_per_plane as f64 - frames).abs();
    checks.push(Check { name: "frames_per_plane".into(), passed: r == 0.0, residual: r });
    let r = (plan.total_frames as f64 - (plan.n_planes * plan.frames_per_plane) as f64).abs();
    checks.push(Check { name: "total_frames".into(), passed: r == 0.0, residual: r });
    let r = (plan.total_time - plan.n_planes as f64 * plan.per_plane_period).abs();
    checks.push(Check { name: "total_time".into(), passed: r <= 1e-9, residual: r });
    let passed = checks.iter().all(|c| c.passed);
    SyncReport { checks, residual, passed }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToneDeviation {
    pub frequency: f64,
    pub located: Option<f64>,
    /// `|located - frequency| / frequency`.
    pub deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub tones: Vec<ToneDeviation>,
    pub located_peaks: Vec<f64>,
    pub tolerance_fraction: f64,
    pub passed: bool,
    pub diagnostic: Option<String>,
}

/// Whether a unit multi-tone record of one imaging window resolves every tone.
pub fn spectral_separability(plan: &SequencePlan, tolerance_fraction: f64) -> SeparabilityReport {
    spectral_separability_with(plan, tolerance_fraction, &PeakOptions::default())
}

pub fn spectral_separability_with(
    plan: &SequencePlan,
    tolerance_fraction: f64,
    opts: &PeakOptions,
) -> SeparabilityReport {
    let n = plan.frames_per_plane;
    let tau = 2.0 * std::f64::consts::PI;
    let signal: Vec<C64> = (0..n)
        .map(|m| {
            let t = m as f64 / plan.frame_rate;
            plan.frequencies.iter().map(|&f| C64::from_polar(1.0, tau * f * t)).sum()
        })
        .collect();
    let peaks = spectrum::find_peaks(&signal, plan.frame_rate, opts);
    let tones: Vec<ToneDeviation> = plan
        .frequencies
        .iter()
        .map(|&f| match spectrum::nearest_peak(&peaks, f) {
            Some(p) => ToneDeviation {
                frequency: f,
                located: Some(p.frequency),
                deviation: (p.frequency - f).abs() / f,
            },
            None => ToneDeviation { frequency: f, located: None, deviation: f64::INFINITY },
        })
        .collect();
    let located_peaks: Vec<f64> = peaks.iter().map(|p| p.frequency).collect();
    let mut diagnostic = None;
    let mut passed = tones.iter().all(|t| t.deviation <= tolerance_fraction);
    if located_peaks.len() < plan.frequencies.len() {
        passed = false;
        diagnostic = Some(format!(
            "located {} dominant peaks for {} excitation tones",
            located_peaks.len(),
            plan.frequencies.len()
        ));
    }
    SeparabilityReport { tones, located_peaks, tolerance_fraction, passed, diagnostic }
}

/// Text timeline of the sweep: pulses, settling, and imaging per plane.
pub fn render_timeline(plan: &SequencePlan) -> String {
    let ms = |s: f64| s * 1e3;
    let freqs: Vec<String> = plan.frequencies.iter().map(|f| format!("{f}")).collect();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "excitation {} Hz, T0 = {:.3} ms, frame rate {} Hz",
        freqs.join(", "),
        ms(plan.fundamental_period),
        plan.frame_rate
    );
    let _ = writeln!(
        out,
        "plane slot {:.3} ms = {} x T0: {} pulses {:.3} ms | settle {:.3} ms | imaging {:.3} ms ({} frames)",
        ms(plan.per_plane_period),
        plan.period_multiple().round(),
        plan.pulse_count,
        ms(plan.pulse_time),
        ms(plan.settling_time),
        ms(plan.imaging_duration),
        plan.frames_per_plane
    );
    let width = 40usize;
    let cols = |d: f64| ((d / plan.per_plane_period) * width as f64).round() as usize;
    let pulse_cols = cols(plan.pulse_time).max(usize::from(plan.pulse_time > 0.0));
    let settle_cols = cols(plan.settling_time).max(usize::from(plan.settling_time > 0.0));
    let image_cols = width.saturating_sub(pulse_cols + settle_cols);
    let bar = format!(
        "{}{}{}",
        "P".repeat(pulse_cols),
        "s".repeat(settle_cols),
        "#".repeat(image_cols)
    );
    for p in 0..plan.n_planes {
        let start = p as f64 * plan.per_plane_period;
        let _ = writeln!(
            out,
            "plane {p:>2} {:>6.2} deg [{:>9.3} .. {:>9.3} ms] {bar}",
            p as f64 * plan.plane_angle_step_deg,
            ms(start),
            ms(start + plan.per_plane_period)
        );
    }
    let _ = writeln!(out, "legend: P motor pulses, s settling, # imaging");
    let _ = writeln!(
        out,
        "total {:.3} s, {} frames",
        plan.total_time, plan.total_frames
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fundamental_periods() {
        assert!((fundamental_period(&[40.0, 50.0, 60.0]).unwrap() - 0.1).abs() < 1e-15);
        assert!((fundamental_period(&[100.0, 160.0, 200.0]).unwrap() - 0.05).abs() < 1e-15);
        assert!(fundamental_period(&[40.0, 63.7]).is_err());
        assert!(fundamental_period(&[40.0, 50.0001]).is_err());
        assert!(fundamental_period(&[]).is_err());
    }

    #[test]
    fn single_tone_plan_is_one_period() {
        let plan = plan_sequence(&SequenceParams {
            frequencies: vec![50.0],
            settling_time: 0.0,
            pulse_time: 0.0,
            min_imaging: 0.001,
            ..SequenceParams::deep()
        })
        .unwrap();
        assert!((plan.per_plane_period - 0.020).abs() < 1e-15);
    }

    #[test]
    fn long_imaging_rounds_up_to_the_next_multiple() {
        let plan = plan_sequence(&SequenceParams { min_imaging: 1.5, ..SequenceParams::deep() }).unwrap();
        assert!((plan.per_plane_period - 1.6).abs() < 1e-12);
        let r = plan_sequence(&SequenceParams { min_imaging: -0.1, ..SequenceParams::deep() });
        assert!(matches!(r, Err(Error::Planning(_))));
    }

    #[test]
    fn off_multiple_period_fails_validation() {
        let plan = plan_sequence(&SequenceParams::deep()).unwrap();
        let bad = plan.with_per_plane_period(0.250);
        let rep = validate_synchronization(&bad);
        assert!(!rep.passed);
        assert!((rep.residual - 0.05).abs() < 1e-12);
        assert!(validate_synchronization(&plan.with_per_plane_period(0.300)).passed);
    }

    #[test]
    fn timeline_mentions_every_plane() {
        let plan = plan_sequence(&SequenceParams::deep()).unwrap();
        let text = render_timeline(&plan);
        assert_eq!(text.matches("plane ").count(), 11);
        assert!(text.contains("4 pulses 7.000 ms | settle 10.000 ms | imaging 183.000 ms (549 frames)"));
    }
}
