//! Least-squares phasor extraction at known excitation frequencies.
//!
//! Convention: `u(t) = dc + sum_f Re{F_f e^{i w_f t}}`, so a fitted pair
//! `a cos(wt) + b sin(wt)` maps to `F = a - i b`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::geometry::FrustumGeometry;
use crate::spectrum::{self, Peak, PeakOptions};
use crate::tracking::DisplacementSeries;
use crate::volume::{Volume, VectorVolume, C64};

/// Largest accepted condition number of the design matrix.
pub const MAX_CONDITION: f64 = 1e8;

/// Pseudo-inverse of the `[1, cos, sin, ...]` design for fixed timestamps.
#[derive(Clone, Debug)]
pub struct ToneFitter {
    frequencies: Vec<f64>,
    design: DMatrix<f64>,
    pinv: DMatrix<f64>,
    condition_number: f64,
}

impl ToneFitter {
    pub fn new(timestamps: &[f64], frequencies: &[f64]) -> Result<Self> {
        let p = 1 + 2 * frequencies.len();
        let t = timestamps.len();
        if t < p {
            return Err(Error::Conditioning { condition_number: f64::INFINITY });
        }
        let design = DMatrix::from_fn(t, p, |r, c| {
            if c == 0 {
                return 1.0;
            }
            let f = frequencies[(c - 1) / 2];
            let ph = 2.0 * PI * f * timestamps[r];
            if c % 2 == 1 {
                ph.cos()
            } else {
                ph.sin()
            }
        });
        let svd = design.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(condition_number <= MAX_CONDITION) {
            return Err(Error::Conditioning { condition_number });
        }
        let pinv = svd
            .pseudo_inverse(smax * f64::EPSILON * t as f64)
            .map_err(|_| Error::Conditioning { condition_number })?;
        Ok(ToneFitter { frequencies: frequencies.to_vec(), design, pinv, condition_number })
    }

    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Fit one series; returns `(dc, phasors, rms residual)`.
    pub fn fit(&self, series: &[f64]) -> (f64, Vec<C64>, f64) {
        let beta = &self.pinv * DMatrix::from_column_slice(series.len(), 1, series);
        let fitted = &self.design * &beta;
        let ss: f64 = series.iter().zip(fitted.iter()).map(|(u, v)| (u - v).powi(2)).sum();
        let phasors = (0..self.frequencies.len())
            .map(|f| C64::new(beta[1 + 2 * f], -beta[2 + 2 * f]))
            .collect();
        (beta[0], phasors, (ss / series.len() as f64).sqrt())
    }
}

/// Phasor volumes per excitation frequency, plane-local components.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasorSet {
    pub frequencies: Vec<f64>,
    /// `components[f][c]` is component `c` (axial, lateral, elevational) at frequency `f`.
    pub components: Vec<[Volume<C64>; 3]>,
    pub dc: VectorVolume<f64>,
    /// RMS fit residual over time and components [m].
    pub residual: Volume<f64>,
    pub geometry: FrustumGeometry,
}

/// Fit DC plus one cos/sin pair per frequency at every voxel and component.
pub fn fit_phasors(disp: &DisplacementSeries, frequencies: &[f64], exec: Execution) -> Result<PhasorSet> {
    if disp.frames.len() != disp.timestamps.len() {
        return Err(Error::Contract("frame and timestamp counts differ".into()));
    }
    let fitter = ToneFitter::new(&disp.timestamps, frequencies)?;
    let dims = disp.dims();
    let n: usize = dims.iter().product();
    let t = disp.timestamps.len();
    let p = 1 + 2 * frequencies.len();
    let nf = frequencies.len();
    let chunk = 4096;
    let pinv = &fitter.pinv;
    let design = &fitter.design;
    // Per chunk of voxels: coefficients for 3 components and squared residual sums.
    let n_chunks = n.div_ceil(chunk);
    let results = exec::map_range(exec, n_chunks, |ci| {
        let lo = ci * chunk;
        let hi = (lo + chunk).min(n);
        let m = hi - lo;
        let mut beta = vec![0.0; 3 * p * m];
        for c in 0..3 {
            for (ti, frame) in disp.frames.iter().enumerate() {
                let u = &frame[c].as_slice()[lo..hi];
                for k in 0..p {
                    let w = pinv[(k, ti)];
                    let b = &mut beta[(c * p + k) * m..(c * p + k + 1) * m];
                    for (bv, &uv) in b.iter_mut().zip(u) {
                        *bv += w * uv;
                    }
                }
            }
        }
        let mut ss = vec![0.0; m];
        let mut fitted = vec![0.0; m];
        for c in 0..3 {
            for (ti, frame) in disp.frames.iter().enumerate() {
                fitted.iter_mut().for_each(|v| *v = 0.0);
                for k in 0..p {
                    let w = design[(ti, k)];
                    let b = &beta[(c * p + k) * m..(c * p + k + 1) * m];
                    for (fv, &bv) in fitted.iter_mut().zip(b) {
                        *fv += w * bv;
                    }
                }
                let u = &frame[c].as_slice()[lo..hi];
                for q in 0..m {
                    ss[q] += (u[q] - fitted[q]).powi(2);
                }
            }
        }
        (beta, ss)
    });
    let mut comps: Vec<[Vec<C64>; 3]> = (0..nf).map(|_| [vec![], vec![], vec![]]).collect();
    let mut dc: [Vec<f64>; 3] = [vec![], vec![], vec![]];
    let mut residual = Vec::with_capacity(n);
    for (ci, (beta, ss)) in results.into_iter().enumerate() {
        let lo = ci * chunk;
        let m = (lo + chunk).min(n) - lo;
        for c in 0..3 {
            dc[c].extend_from_slice(&beta[(c * p) * m..(c * p + 1) * m]);
            for (f, comp) in comps.iter_mut().enumerate() {
                let a = &beta[(c * p + 1 + 2 * f) * m..(c * p + 2 + 2 * f) * m];
                let b = &beta[(c * p + 2 + 2 * f) * m..(c * p + 3 + 2 * f) * m];
                comp[c].extend(a.iter().zip(b).map(|(&a, &b)| C64::new(a, -b)));
            }
        }
        residual.extend(ss.iter().map(|s| (s / (3 * t) as f64).sqrt()));
    }
    let vol = |v: Vec<C64>| Volume::from_vec(dims, v).expect("shape");
    let components = comps.into_iter().map(|[a, b, c]| [vol(a), vol(b), vol(c)]).collect();
    let dc = dc.map(|v| Volume::from_vec(dims, v).expect("shape"));
    Ok(PhasorSet {
        frequencies: frequencies.to_vec(),
        components,
        dc,
        residual: Volume::from_vec(dims, residual)?,
        geometry: disp.geometry,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub sample_rate: f64,
    /// Dominant peaks of the averaged magnitude spectrum per component.
    pub components: [Vec<Peak>; 3],
}

impl SpectrumReport {
    /// Peaks of the component with the strongest spectrum, falling back to any non-empty list.
    pub fn dominant(&self) -> &[Peak] {
        self.components
            .iter()
            .max_by_key(|p| p.len())
            .map(|p| p.as_slice())
            .unwrap_or(&[])
    }
}

/// Spectral peaks of the displacement series, averaged over a voxel subsample.
pub fn phasor_spectrum_report(disp: &DisplacementSeries, opts: &PeakOptions) -> Result<SpectrumReport> {
    let t = disp.timestamps.len();
    if t < 3 {
        return Err(Error::Contract("spectrum needs at least 3 frames".into()));
    }
    let dt = (disp.timestamps[t - 1] - disp.timestamps[0]) / (t - 1) as f64;
    let fs = 1.0 / dt;
    let n: usize = disp.dims().iter().product();
    let step = (n / 2000).max(1);
    let voxels: Vec<usize> = (0..n).step_by(step).collect();
    let components = [0usize, 1, 2].map(|c| {
        let mut avg: Vec<f64> = Vec::new();
        let mut df = 0.0;
        let mut scale = 0.0;
        for &q in &voxels {
            let series: Vec<C64> = disp.frames.iter().map(|f| C64::new(f[c].as_slice()[q], 0.0)).collect();
            scale += series.iter().map(|v| v.norm_sqr()).sum::<f64>();
            let (d, mag) = spectrum::magnitude_spectrum(&series, fs, opts);
            df = d;
            if avg.is_empty() {
                avg = mag;
            } else {
                avg.iter_mut().zip(&mag).for_each(|(a, m)| *a += m);
            }
        }
        let rms = (scale / (voxels.len() * t) as f64).sqrt();
        let peak = avg.iter().cloned().fold(0.0, f64::max) / voxels.len() as f64;
        // Magnitudes scale with the record length; compare against the raw signal level.
        if !(peak > 1e-9 * rms * t as f64) {
            return Vec::new();
        }
        spectrum::peaks_in_magnitude(&avg, df, opts.pad_factor, opts)
    });
    Ok(SpectrumReport { sample_rate: fs, components })
}
