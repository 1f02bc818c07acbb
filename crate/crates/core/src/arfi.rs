//! Transient push baseline: a kinematic outward shear pulse tracked at several
//! lateral positions, with group-speed and phase-velocity estimators.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::phantom::Material;
use crate::volume::C64;

/// Duration of one push-and-track measurement [s].
pub const SINGLE_MEASUREMENT_TIME: f64 = 1.27;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PushPulse {
    /// Peak displacement at one pulse width from the origin [m].
    pub amplitude: f64,
    /// Spatial Gaussian width `w` [m].
    pub width: f64,
    /// Time at which the pulse leaves the origin [s].
    pub delay: f64,
}

impl Default for PushPulse {
    fn default() -> Self {
        PushPulse { amplitude: 10e-6, width: 1.0e-3, delay: 3e-3 }
    }
}

/// Axial displacement over time at lateral tracking positions.
#[derive(Clone, Debug, PartialEq)]
pub struct TransientField {
    /// `frames[t][x]`.
    pub frames: Vec<Vec<f64>>,
    pub timestamps: Vec<f64>,
    pub lateral_positions: Vec<f64>,
    pub push_origin: f64,
    pub pulse_width: f64,
}

impl TransientField {
    pub fn trace(&self, x: usize) -> Vec<f64> {
        self.frames.iter().map(|f| f[x]).collect()
    }

    fn distance(&self, x: usize) -> f64 {
        (self.lateral_positions[x] - self.push_origin).abs()
    }
}

/// Shear pulse `A g((r - c (t - t0)) / w) sqrt(w / r)`; dispersive when `eta > 0`.
pub fn simulate_push_response(
    material: &Material,
    pulse: &PushPulse,
    push_origin: f64,
    timestamps: &[f64],
    lateral_positions: &[f64],
) -> Result<TransientField> {
    if timestamps.is_empty() || lateral_positions.is_empty() {
        return Err(Error::Contract("push response needs timestamps and positions".into()));
    }
    material.validate()?;
    if !(pulse.width > 0.0) {
        return Err(Error::Parameter("pulse width must be positive".into()));
    }
    let w = pulse.width;
    let c0 = (material.mu / material.rho).sqrt();
    let sigma_t = w / c0;
    let decay = |r: f64| (w / r.max(w)).sqrt();
    let mut frames = vec![vec![0.0; lateral_positions.len()]; timestamps.len()];
    if pulse.amplitude == 0.0 {
        return Ok(TransientField {
            frames,
            timestamps: timestamps.to_vec(),
            lateral_positions: lateral_positions.to_vec(),
            push_origin,
            pulse_width: w,
        });
    }
    if material.eta == 0.0 {
        for (t, frame) in timestamps.iter().zip(frames.iter_mut()) {
            for (x, v) in lateral_positions.iter().zip(frame.iter_mut()) {
                let r = (x - push_origin).abs();
                let s = (r - c0 * (t - pulse.delay)) / w;
                *v = pulse.amplitude * (-0.5 * s * s).exp() * decay(r);
            }
        }
    } else {
        // u(r, t) = (1/pi) Re int_0^inf G(w) exp(i w (t - t0) - i k*(w) r) dw
        let t_lo = timestamps.iter().cloned().fold(f64::INFINITY, f64::min);
        let t_hi = timestamps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let r_max = lateral_positions.iter().map(|x| (x - push_origin).abs()).fold(0.0, f64::max);
        let span = (t_hi - t_lo) + (pulse.delay - t_lo).abs() + r_max / c0 + 20.0 * sigma_t;
        let dw = 2.0 * PI / (4.0 * span);
        let w_max = 12.0 / sigma_t;
        let n = (w_max / dw).ceil() as usize + 1;
        let gain = pulse.amplitude * (2.0 * PI).sqrt() * sigma_t;
        let spectrum: Vec<(f64, f64, C64)> = (0..n)
            .map(|m| {
                let om = m as f64 * dw;
                let g = gain * (-0.5 * om * om * sigma_t * sigma_t).exp();
                let k = material.complex_wavenumber(om / (2.0 * PI));
                let weight = if m == 0 { 0.5 } else { 1.0 };
                (om, g * weight * dw / PI, k)
            })
            .collect();
        for (xi, x) in lateral_positions.iter().enumerate() {
            let r = (x - push_origin).abs();
            let prop: Vec<(f64, C64)> = spectrum
                .iter()
                .map(|&(om, g, k)| (om, g * (C64::new(0.0, -1.0) * k * r).exp()))
                .collect();
            for (t, frame) in timestamps.iter().zip(frames.iter_mut()) {
                let tau = t - pulse.delay;
                let mut acc = 0.0;
                for &(om, a) in &prop {
                    acc += (a * C64::from_polar(1.0, om * tau)).re;
                }
                frame[xi] = acc * decay(r);
            }
        }
    }
    Ok(TransientField {
        frames,
        timestamps: timestamps.to_vec(),
        lateral_positions: lateral_positions.to_vec(),
        push_origin,
        pulse_width: w,
    })
}

/// Time of the trace maximum with parabolic refinement.
pub fn time_to_peak(trace: &[f64], timestamps: &[f64]) -> f64 {
    let (mut best, mut idx) = (f64::NEG_INFINITY, 0usize);
    for (i, &v) in trace.iter().enumerate() {
        if v > best {
            best = v;
            idx = i;
        }
    }
    if idx == 0 || idx + 1 >= trace.len() {
        return timestamps[idx];
    }
    let (a, b, c) = (trace[idx - 1], trace[idx], trace[idx + 1]);
    let den = a - 2.0 * b + c;
    let delta = if den < 0.0 { (0.5 * (a - c) / den).clamp(-0.5, 0.5) } else { 0.0 };
    let dt = if delta >= 0.0 {
        timestamps[idx + 1] - timestamps[idx]
    } else {
        timestamps[idx] - timestamps[idx - 1]
    };
    timestamps[idx] + delta * dt
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSpeed {
    pub speed: f64,
    /// RMS residual of the arrival-time regression [s].
    pub residual: f64,
    pub distances: Vec<f64>,
    pub arrivals: Vec<f64>,
}

fn usable_positions(field: &TransientField) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..field.lateral_positions.len())
        .filter(|&x| field.distance(x) >= 2.0 * field.pulse_width)
        .collect();
    idx.sort_by(|&a, &b| field.distance(a).total_cmp(&field.distance(b)));
    idx
}

fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    (slope, icpt, (rss / n).sqrt())
}

/// Group speed from a least-squares line through time-to-peak against distance.
pub fn estimate_group_sws(field: &TransientField) -> Result<GroupSpeed> {
    let idx = usable_positions(field);
    if idx.len() < 4 {
        return Err(Error::Contract(format!(
            "only {} positions lie beyond two pulse widths; at least 4 are needed",
            idx.len()
        )));
    }
    let distances: Vec<f64> = idx.iter().map(|&x| field.distance(x)).collect();
    let arrivals: Vec<f64> = idx.iter().map(|&x| time_to_peak(&field.trace(x), &field.timestamps)).collect();
    if let Some(w) = arrivals.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::Quality(format!(
            "arrival times decrease between {:.2} mm and {:.2} mm",
            distances[w] * 1e3,
            distances[w + 1] * 1e3
        )));
    }
    let (slope, _, residual) = line_fit(&distances, &arrivals);
    if !(slope > 0.0) {
        return Err(Error::Quality("arrival-time slope is not positive".into()));
    }
    Ok(GroupSpeed { speed: 1.0 / slope, residual, distances, arrivals })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseFlag {
    /// Less than -20 dB of the spectral maximum at this frequency.
    LowEnergy,
    /// The tracked aperture is shorter than one wavelength.
    ShortAperture,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseVelocity {
    pub frequency: f64,
    pub speed: Option<f64>,
    pub flag: Option<PhaseFlag>,
}

fn dft_at(trace: &[f64], timestamps: &[f64], f: f64) -> C64 {
    let w = 2.0 * PI * f;
    trace
        .iter()
        .zip(timestamps)
        .map(|(&u, &t)| u * C64::from_polar(1.0, -w * t))
        .sum()
}

/// Phase velocity per frequency from the slope of unwrapped spectral phase
/// along distance, `c(f) = -2 pi f / (d phi / dx)`.
pub fn estimate_phase_velocity(field: &TransientField, frequencies: &[f64]) -> Result<Vec<PhaseVelocity>> {
    let idx = usable_positions(field);
    if idx.len() < 2 {
        return Err(Error::Contract("phase velocity needs at least 2 positions".into()));
    }
    let n_t = field.timestamps.len();
    if n_t < 4 {
        return Err(Error::Contract("phase velocity needs at least 4 samples".into()));
    }
    let traces: Vec<Vec<f64>> = idx.iter().map(|&x| field.trace(x)).collect();
    let distances: Vec<f64> = idx.iter().map(|&x| field.distance(x)).collect();
    let aperture = distances[distances.len() - 1] - distances[0];
    let mean_mag = |f: f64| {
        traces.iter().map(|tr| dft_at(tr, &field.timestamps, f).norm()).sum::<f64>() / traces.len() as f64
    };
    let dt = (field.timestamps[n_t - 1] - field.timestamps[0]) / (n_t - 1) as f64;
    let nyquist = 0.5 / dt;
    let df = 1.0 / (n_t as f64 * dt);
    let reference = (1..(nyquist / df) as usize).map(|m| mean_mag(m as f64 * df)).fold(0.0, f64::max);
    let gate = reference * 0.1;
    Ok(frequencies
        .iter()
        .map(|&f| {
            if !(f > 0.0 && f < nyquist) || !(mean_mag(f) >= gate) || reference == 0.0 {
                return PhaseVelocity { frequency: f, speed: None, flag: Some(PhaseFlag::LowEnergy) };
            }
            let mut phase: Vec<f64> = traces.iter().map(|tr| dft_at(tr, &field.timestamps, f).arg()).collect();
            for i in 1..phase.len() {
                let mut d = phase[i] - phase[i - 1];
                d -= 2.0 * PI * (d / (2.0 * PI)).round();
                phase[i] = phase[i - 1] + d;
            }
            let (slope, _, _) = line_fit(&distances, &phase);
            let c = -2.0 * PI * f / slope;
            if !(c > 0.0 && c.is_finite()) {
                return PhaseVelocity { frequency: f, speed: None, flag: Some(PhaseFlag::LowEnergy) };
            }
            if aperture < c / f {
                return PhaseVelocity { frequency: f, speed: None, flag: Some(PhaseFlag::ShortAperture) };
            }
            PhaseVelocity { frequency: f, speed: Some(c), flag: None }
        })
        .collect())
}

/// `E = 3 rho c^2`.
pub fn elasticity_from_sws(c: f64, rho: f64) -> Result<f64> {
    if !(c > 0.0) || !(rho > 0.0) {
        return Err(Error::Domain(format!("speed and density must be positive (got {c}, {rho})")));
    }
    Ok(3.0 * rho * c * c)
}

/// One baseline measurement setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArfiScene {
    pub material: Material,
    pub pulse: PushPulse,
    pub push_origin: f64,
    /// Tracking positions `first + i * pitch` for `i < count` [m].
    pub first_position: f64,
    pub position_pitch: f64,
    pub position_count: usize,
    /// Tracking pulse repetition frequency [Hz].
    pub sample_rate: f64,
    pub duration: f64,
    /// Peak signal to noise ratio per trace; `None` is noiseless.
    pub snr_db: Option<f64>,
    pub frequencies: Vec<f64>,
}

impl Default for ArfiScene {
    fn default() -> Self {
        ArfiScene {
            material: Material::from_youngs(6200.0, 1000.0, 0.0),
            pulse: PushPulse::default(),
            push_origin: 0.0,
            first_position: 2.0e-3,
            position_pitch: 1.0e-3,
            position_count: 14,
            sample_rate: 10_000.0,
            duration: 0.03,
            snr_db: None,
            frequencies: vec![100.0, 150.0, 200.0],
        }
    }
}

impl ArfiScene {
    pub fn timestamps(&self) -> Vec<f64> {
        let n = (self.duration * self.sample_rate).round() as usize;
        (0..n).map(|i| i as f64 / self.sample_rate).collect()
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.position_count)
            .map(|i| self.push_origin + self.first_position + i as f64 * self.position_pitch)
            .collect()
    }

    pub fn simulate(&self) -> Result<TransientField> {
        simulate_push_response(&self.material, &self.pulse, self.push_origin, &self.timestamps(), &self.positions())
    }
}

/// Add white noise with per-trace standard deviation `peak / 10^(snr/20)`.
pub fn add_noise(field: &mut TransientField, snr_db: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = field.lateral_positions.len();
    let scale = 10f64.powf(-snr_db / 20.0);
    for x in 0..nx {
        let peak = field.frames.iter().map(|f| f[x].abs()).fold(0.0, f64::max);
        if peak == 0.0 {
            continue;
        }
        let normal = Normal::new(0.0, peak * scale).expect("finite sigma");
        for frame in field.frames.iter_mut() {
            frame[x] += normal.sample(&mut rng);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    pub group_speed: f64,
    pub youngs_modulus: f64,
    pub phase_velocities: Vec<PhaseVelocity>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatReport {
    pub repeats: Vec<RepeatResult>,
    pub mean: f64,
    /// Population standard deviation of E [Pa].
    pub std: f64,
    pub total_time: f64,
}

/// Run the baseline once per seed. Results are ordered by repeat index.
pub fn repeat_measurements(scene: &ArfiScene, seeds: &[u64], exec: Execution) -> Result<RepeatReport> {
    if seeds.is_empty() {
        return Err(Error::Parameter("at least one repeat is required".into()));
    }
    let clean = scene.simulate()?;
    let runs = exec::map_range(exec, seeds.len(), |i| -> Result<RepeatResult> {
        let mut field = clean.clone();
        if let Some(snr) = scene.snr_db {
            add_noise(&mut field, snr, seeds[i]);
        }
        let group = estimate_group_sws(&field)?;
        Ok(RepeatResult {
            repeat: i,
            seed: seeds[i],
            group_speed: group.speed,
            youngs_modulus: elasticity_from_sws(group.speed, scene.material.rho)?,
            phase_velocities: estimate_phase_velocity(&field, &scene.frequencies)?,
        })
    });
    let repeats = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let n = repeats.len() as f64;
    let mean = repeats.iter().map(|r| r.youngs_modulus).sum::<f64>() / n;
    let std = (repeats.iter().map(|r| (r.youngs_modulus - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(RepeatReport { repeats, mean, std, total_time: n * SINGLE_MEASUREMENT_TIME })
}

/// Seeds for `n` repeats derived from a master seed.
pub fn repeat_seeds(master: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| master.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407 ^ i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elastic_arrivals_follow_shear_speed() {
        let scene = ArfiScene { material: Material::new(2066.7, 1000.0, 0.0), ..ArfiScene::default() };
        let field = scene.simulate().unwrap();
        let g = estimate_group_sws(&field).unwrap();
        let c = (2066.7f64 / 1000.0).sqrt();
        assert!((g.speed - c).abs() / c < 0.01, "{}", g.speed);
    }

    #[test]
    fn spectral_path_matches_closed_form_when_elastic() {
        let m = Material::new(2066.7, 1000.0, 0.0);
        let pulse = PushPulse::default();
        let ts: Vec<f64> = (0..200).map(|i| i as f64 * 1e-4).collect();
        let xs = [3e-3, 6e-3, 9e-3];
        let closed = simulate_push_response(&m, &pulse, 0.0, &ts, &xs).unwrap();
        // A vanishing viscosity forces the spectral path.
        let spectral = simulate_push_response(&Material { eta: 1e-12, ..m }, &pulse, 0.0, &ts, &xs).unwrap();
        for (a, b) in closed.frames.iter().zip(&spectral.frames) {
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() < 1e-4 * pulse.amplitude, "{u} {v}");
            }
        }
    }

    #[test]
    fn arithmetic_chain() {
        assert!((elasticity_from_sws(1.4376, 1000.0).unwrap() - 6200.0).abs() < 1.0);
        assert_eq!(elasticity_from_sws(1.0, 1000.0).unwrap(), 3000.0);
        assert!(matches!(elasticity_from_sws(0.0, 1000.0), Err(Error::Domain(_))));
    }
}
