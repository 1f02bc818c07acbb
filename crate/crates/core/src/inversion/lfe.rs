use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::fft::{fftfreq, Fft3};
use crate::geometry::CartesianGrid;
use crate::volume::{Volume, C64};

use super::scan::gaussian_blur;
use super::{CurlMode, ElasticityVolume, Provenance, WaveImage, FLAG_BOUNDARY, FLAG_OUT_OF_BAND};

/// Confidence multiplier for flagged voxels.
pub const LOW_CONFIDENCE: f64 = 0.1;

/// Radial lognormal x directional filter bank.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterBank {
    pub n_centers: usize,
    /// Standard deviation of the radial profile in natural-log units.
    pub sigma_ln: f64,
    /// Lowest centre frequency [cycles/m]; defaults to 0.8 x the admissible lower bound.
    pub lowest_center: Option<f64>,
    /// Shortest admissible wavelength in samples.
    pub min_wavelength_samples: f64,
    /// Longest admissible wavelength as a fraction of the largest extent.
    pub max_wavelength_fraction: f64,
    /// Width of the Gaussian envelope each channel is divided by before
    /// filtering [m]; zero disables equalization.
    pub equalize: f64,
}

impl Default for FilterBank {
    fn default() -> Self {
        FilterBank {
            n_centers: 6,
            sigma_ln: 0.4,
            lowest_center: None,
            min_wavelength_samples: 4.0,
            max_wavelength_fraction: 1.0 / 1.5,
            equalize: 5e-3,
        }
    }
}

/// The six icosahedral axes; `sum_d (k . n_d)^2 = 2 |k|^2` for every `k`.
pub fn directions() -> [[f64; 3]; 6] {
    let phi = 0.5 * (1.0 + 5f64.sqrt());
    let s = 1.0 / (1.0 + phi * phi).sqrt();
    [
        [0.0, s, phi * s],
        [0.0, -s, phi * s],
        [s, phi * s, 0.0],
        [-s, phi * s, 0.0],
        [phi * s, 0.0, s],
        [phi * s, 0.0, -s],
    ]
}

impl FilterBank {
    /// Admissible spatial-frequency band `[lo, hi]` [cycles/m] for a grid.
    pub fn band(&self, grid: &CartesianGrid) -> (f64, f64) {
        let h = grid.spacing[0];
        let extent = (0..3).map(|a| (grid.dims[a] - 1) as f64 * h).fold(0.0, f64::max);
        (1.0 / (extent * self.max_wavelength_fraction), 1.0 / (self.min_wavelength_samples * h))
    }

    pub fn centers(&self, grid: &CartesianGrid) -> Vec<f64> {
        let (lo, _) = self.band(grid);
        let first = self.lowest_center.unwrap_or(0.8 * lo);
        (0..self.n_centers).map(|i| first * 2f64.powi(i as i32)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_centers < 2 {
            return Err(Error::Parameter("the filter bank needs at least 2 centres".into()));
        }
        if !(self.sigma_ln > 0.0) {
            return Err(Error::Parameter("sigma_ln must be positive".into()));
        }
        if !(self.equalize >= 0.0 && self.equalize.is_finite()) {
            return Err(Error::Parameter("equalize must be non-negative".into()));
        }
        if self.lowest_center.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Parameter("lowest_center must be positive".into()));
        }
        Ok(())
    }
}

/// Replace invalid voxels with the nearest valid value along z, then x, then y.
pub fn fill_invalid(data: &Volume<C64>, mask: &Volume<bool>) -> Volume<C64> {
    let d = data.dims();
    let mut out = data.clone();
    let mut valid = mask.clone();
    for axis in [2usize, 0, 1] {
        let (a1, a2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let snapshot_valid = valid.clone();
        let snapshot = out.clone();
        for u in 0..d[a1] {
            for w in 0..d[a2] {
                let at = |t: usize| {
                    let mut p = [0usize; 3];
                    p[axis] = t;
                    p[a1] = u;
                    p[a2] = w;
                    p
                };
                let idx: Vec<usize> = (0..d[axis]).filter(|&t| snapshot_valid[at(t)]).collect();
                if idx.is_empty() {
                    continue;
                }
                let mut nearest = 0usize;
                for t in 0..d[axis] {
                    let p = at(t);
                    if snapshot_valid[p] {
                        continue;
                    }
                    while nearest + 1 < idx.len() && idx[nearest + 1].abs_diff(t) <= idx[nearest].abs_diff(t) {
                        nearest += 1;
                    }
                    out[p] = snapshot[at(idx[nearest])];
                    valid[p] = true;
                }
            }
        }
    }
    out
}

/// Divide by the local RMS amplitude so long-support bands are not dominated by
/// distant high-amplitude regions. Returns the equalized channel and the envelope.
fn equalize(data: &Volume<C64>, sigma: f64, h: f64, exec: Execution) -> (Volume<C64>, Vec<f64>) {
    let d = data.dims();
    let power: Vec<C64> = data.iter().map(|v| C64::new(v.norm_sqr(), 0.0)).collect();
    let ones = vec![C64::new(1.0, 0.0); power.len()];
    let p = gaussian_blur(power, d, sigma / h, exec);
    let w = gaussian_blur(ones, d, sigma / h, exec);
    let env: Vec<f64> = p.iter().zip(&w).map(|(p, w)| (p.re / w.re).max(0.0).sqrt()).collect();
    let out = data.iter().zip(&env).map(|(v, &e)| if e > 0.0 { v / e } else { C64::default() }).collect();
    (Volume::from_vec(d, out).expect("shape"), env)
}

fn mirror_pad(src: &Volume<C64>) -> (Vec<C64>, [usize; 3]) {
    let d = src.dims();
    let pd = d.map(|n| if n > 1 { 2 * n } else { 1 });
    let map = |m: usize, n: usize| if m < n { m } else { 2 * n - 1 - m };
    let mut out = Vec::with_capacity(pd[0] * pd[1] * pd[2]);
    for i in 0..pd[0] {
        let si = map(i, d[0]);
        for j in 0..pd[1] {
            let sj = map(j, d[1]);
            for k in 0..pd[2] {
                out.push(src[[si, sj, map(k, d[2])]]);
            }
        }
    }
    (out, pd)
}

/// Per-channel band magnitudes `M_i(x) = sum_d |q_{i,d}(x)|` for every centre.
pub fn band_magnitudes(
    channel: &Volume<C64>,
    grid: &CartesianGrid,
    centers: &[f64],
    sigma_ln: f64,
    exec: Execution,
) -> Vec<Vec<f64>> {
    let d = channel.dims();
    let (padded, pd) = mirror_pad(channel);
    let plan = Fft3::new(pd);
    let mut spec = padded;
    plan.forward(&mut spec, exec);
    let h = grid.spacing[0];
    let kf: [Vec<f64>; 3] = [fftfreq(pd[0], h), fftfreq(pd[1], h), fftfreq(pd[2], h)];
    let dirs = directions();
    let n = d[0] * d[1] * d[2];
    let inv2s2 = 1.0 / (2.0 * sigma_ln * sigma_ln);
    let jobs: Vec<(usize, usize)> = (0..centers.len()).flat_map(|i| (0..6).map(move |q| (i, q))).collect();
    let parts = exec::map_range(exec, jobs.len(), |jq| {
        let (ci, di) = jobs[jq];
        let ln_c = centers[ci].ln();
        let dir = dirs[di];
        let mut buf = vec![C64::default(); spec.len()];
        let mut idx = 0usize;
        for &kx in &kf[0] {
            for &ky in &kf[1] {
                for &kz in &kf[2] {
                    let r2 = kx * kx + ky * ky + kz * kz;
                    if r2 > 0.0 {
                        let l = 0.5 * r2.ln() - ln_c;
                        let radial = (-l * l * inv2s2).exp();
                        let c = kx * dir[0] + ky * dir[1] + kz * dir[2];
                        buf[idx] = spec[idx] * (radial * c * c / r2);
                    }
                    idx += 1;
                }
            }
        }
        plan.inverse(&mut buf, Execution::Sequential);
        let mut mag = Vec::with_capacity(n);
        for i in 0..d[0] {
            for j in 0..d[1] {
                let o = (i * pd[1] + j) * pd[2];
                mag.extend(buf[o..o + d[2]].iter().map(|v| v.norm()));
            }
        }
        mag
    });
    let mut out = vec![vec![0.0; n]; centers.len()];
    for ((ci, _), mag) in jobs.iter().zip(parts) {
        for (o, m) in out[*ci].iter_mut().zip(mag) {
            *o += m;
        }
    }
    out
}

/// Local spatial frequency per voxel from adjacent-band magnitude ratios.
/// Returns `(nu, weight)` where weight is the total band amplitude.
fn channel_estimate(m: &[Vec<f64>], centers: &[f64], sigma_ln: f64, q: usize) -> (f64, f64) {
    let expo = sigma_ln * sigma_ln / std::f64::consts::LN_2;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..centers.len() - 1 {
        let (a, b) = (m[i][q], m[i + 1][q]);
        if !(a > 0.0 && b > 0.0) {
            continue;
        }
        let w = a * b;
        let nu = (centers[i] * centers[i + 1]).sqrt() * (b / a).powf(expo);
        num += w * nu;
        den += w;
    }
    let amp: f64 = m.iter().map(|v| v[q]).sum();
    if den > 0.0 {
        (num / den, amp)
    } else {
        (f64::NAN, 0.0)
    }
}

/// Local frequency estimation: Young's modulus from the dominant local wavelength.
pub fn lfe(
    input: &WaveImage<'_>,
    f_exc: f64,
    rho: f64,
    bank: &FilterBank,
    mode: CurlMode,
    exec: Execution,
) -> Result<ElasticityVolume> {
    bank.validate()?;
    if !(f_exc > 0.0) || !(rho > 0.0) {
        return Err(Error::Domain(format!("lfe needs f > 0 and rho > 0 (got {f_exc}, {rho})")));
    }
    let grid = input.grid;
    if !grid.is_isotropic() {
        return Err(Error::Parameter("lfe needs isotropic spacing".into()));
    }
    if input.channels.is_empty() {
        return Err(Error::DegenerateInput("no input channels".into()));
    }
    let dims = grid.dims;
    let mask = input.mask;
    let any_signal = input.channels.iter().any(|c| {
        c.as_slice().iter().zip(mask.as_slice()).any(|(v, &m)| m && v.norm() > 0.0)
    });
    if !any_signal {
        return Err(Error::DegenerateInput("all input channels are zero inside the mask".into()));
    }
    let centers = bank.centers(&grid);
    let (lo, hi) = bank.band(&grid);
    let n = dims.iter().product::<usize>();
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    for ch in &input.channels {
        let filled = fill_invalid(ch, mask);
        let (filled, env) = if bank.equalize > 0.0 {
            let (v, e) = equalize(&filled, bank.equalize, grid.spacing[0], exec);
            (v, Some(e))
        } else {
            (filled, None)
        };
        let m = band_magnitudes(&filled, &grid, &centers, bank.sigma_ln, exec);
        for q in 0..n {
            if !mask.as_slice()[q] {
                continue;
            }
            let (nu, mut w) = channel_estimate(&m, &centers, bank.sigma_ln, q);
            if let Some(env) = &env {
                w *= env[q];
            }
            if w > 0.0 && nu.is_finite() {
                num[q] += w * nu;
                den[q] += w;
            }
        }
    }
    let mut e = vec![0.0; n];
    let mut conf = vec![0.0; n];
    let mut flags = vec![0u8; n];
    let mut out_mask = vec![false; n];
    for q in 0..n {
        if !mask.as_slice()[q] || !(den[q] > 0.0) {
            continue;
        }
        let nu = num[q] / den[q];
        let c = f_exc / nu;
        e[q] = 3.0 * rho * c * c;
        conf[q] = den[q];
        if nu < lo || nu > hi {
            flags[q] |= FLAG_OUT_OF_BAND;
        }
        if input.reduced.is_some_and(|r| r.as_slice()[q]) {
            flags[q] |= FLAG_BOUNDARY;
        }
        if flags[q] != 0 {
            conf[q] *= LOW_CONFIDENCE;
        }
        out_mask[q] = true;
    }
    Ok(ElasticityVolume {
        e: Volume::from_vec(dims, e)?,
        confidence: Volume::from_vec(dims, conf)?,
        mask: Volume::from_vec(dims, out_mask)?,
        flags: Volume::from_vec(dims, flags)?,
        grid,
        provenance: Provenance { mode, frequencies: vec![f_exc] },
    })
}
