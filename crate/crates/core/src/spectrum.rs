//! Interpolated peak picking on zero-padded DFT magnitude spectra.

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::volume::C64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeakOptions {
    /// Zero-padding factor applied to the record length.
    pub pad_factor: usize,
    /// Peaks below `max + threshold_db` are ignored.
    pub threshold_db: f64,
    /// A peak must be the largest value within this many native bins.
    pub min_separation_bins: f64,
    /// Subtract the record mean before transforming.
    pub remove_mean: bool,
}

impl Default for PeakOptions {
    fn default() -> Self {
        PeakOptions {
            pad_factor: 16,
            threshold_db: -20.0,
            min_separation_bins: 1.5,
            remove_mean: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub frequency: f64,
    /// Level relative to the strongest peak [dB].
    pub level_db: f64,
}

/// Magnitude spectrum on the positive-frequency half of a zero-padded DFT.
///
/// Returns `(bin_spacing_hz, magnitudes)`.
pub fn magnitude_spectrum(signal: &[C64], sample_rate: f64, opts: &PeakOptions) -> (f64, Vec<f64>) {
    let n = signal.len();
    let big_n = (n * opts.pad_factor.max(1)).max(2);
    let mean = if opts.remove_mean && n > 0 {
        signal.iter().sum::<C64>() / n as f64
    } else {
        C64::default()
    };
    let mut buf = vec![C64::default(); big_n];
    for (b, s) in buf.iter_mut().zip(signal) {
        *b = s - mean;
    }
    FftPlanner::new().plan_fft_forward(big_n).process(&mut buf);
    let half = big_n / 2 + 1;
    (
        sample_rate / big_n as f64,
        buf[..half].iter().map(|c| c.norm()).collect(),
    )
}

/// Locate dominant positive-frequency peaks of an already computed magnitude spectrum.
pub fn peaks_in_magnitude(mag: &[f64], df: f64, pad_factor: usize, opts: &PeakOptions) -> Vec<Peak> {
    let peak = mag.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0) || mag.len() < 3 {
        return Vec::new();
    }
    let floor = peak * 1e-12;
    let log = |v: f64| v.max(floor).ln();
    let reach = (opts.min_separation_bins * pad_factor.max(1) as f64).floor() as usize;
    let mut out = Vec::new();
    for k in 1..mag.len() - 1 {
        let v = mag[k];
        if !(v > mag[k - 1] && v >= mag[k + 1]) {
            continue;
        }
        let level_db = 20.0 * (v / peak).log10();
        if level_db < opts.threshold_db {
            continue;
        }
        let lo = k.saturating_sub(reach);
        let hi = (k + reach + 1).min(mag.len());
        if mag[lo..hi].iter().any(|&u| u > v) {
            continue;
        }
        let (a, b, c) = (log(mag[k - 1]), log(v), log(mag[k + 1]));
        let denom = a - 2.0 * b + c;
        let offset = if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
        out.push(Peak {
            frequency: (k as f64 + offset) * df,
            level_db,
        });
    }
    out
}

/// Dominant spectral peaks of a uniformly sampled record.
pub fn find_peaks(signal: &[C64], sample_rate: f64, opts: &PeakOptions) -> Vec<Peak> {
    let (df, mag) = magnitude_spectrum(signal, sample_rate, opts);
    peaks_in_magnitude(&mag, df, opts.pad_factor, opts)
}

/// Real-valued convenience wrapper around [`find_peaks`].
pub fn find_peaks_real(signal: &[f64], sample_rate: f64, opts: &PeakOptions) -> Vec<Peak> {
    let c: Vec<C64> = signal.iter().map(|&x| C64::new(x, 0.0)).collect();
    find_peaks(&c, sample_rate, opts)
}

/// Peak closest to `f`, if any.
pub fn nearest_peak(peaks: &[Peak], f: f64) -> Option<Peak> {
    peaks
        .iter()
        .copied()
        .min_by(|a, b| (a.frequency - f).abs().total_cmp(&(b.frequency - f).abs()))
}
