//! Scan conversion, curl, local frequency estimation and elasticity statistics.

mod curl;
mod lfe;
mod scan;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::{Aabb, CartesianGrid};
use crate::volume::{Volume, C64};

pub use curl::{curl2d, curl3d, CurlMode, CurlSet};
pub use lfe::{band_magnitudes, directions, fill_invalid, lfe, FilterBank, LOW_CONFIDENCE};
pub use scan::{covering_grid, scan_convert, scan_convert_to, smooth, CartesianPhasorSet};

/// The estimated frequency lies outside the filter bank's admissible band.
pub const FLAG_OUT_OF_BAND: u8 = 1;
/// A one-sided derivative was used when computing the curl.
pub const FLAG_BOUNDARY: u8 = 2;

/// One frequency's complex wave field, possibly multi-channel.
#[derive(Clone, Debug)]
pub struct WaveImage<'a> {
    pub grid: CartesianGrid,
    pub mask: &'a Volume<bool>,
    pub channels: Vec<&'a Volume<C64>>,
    /// Voxels with reduced-accuracy derivatives.
    pub reduced: Option<&'a Volume<bool>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub mode: CurlMode,
    pub frequencies: Vec<f64>,
}

/// Young's modulus map [Pa] with per-voxel confidence.
#[derive(Clone, Debug, PartialEq)]
pub struct ElasticityVolume {
    pub e: Volume<f64>,
    pub confidence: Volume<f64>,
    pub mask: Volume<bool>,
    pub flags: Volume<u8>,
    pub grid: CartesianGrid,
    pub provenance: Provenance,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoiStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

/// Confidence-weighted mean over frequencies. Where every confidence is zero the
/// plain mean is used.
pub fn fuse_frequencies(vols: &[ElasticityVolume]) -> Result<ElasticityVolume> {
    let first = vols.first().ok_or_else(|| Error::Contract("nothing to fuse".into()))?;
    for v in &vols[1..] {
        if v.grid != first.grid {
            return Err(Error::Contract("fused volumes must share a grid".into()));
        }
        if v.provenance.mode != first.provenance.mode {
            return Err(Error::Contract("fused volumes must share a curl mode".into()));
        }
    }
    let n = first.e.len();
    let mut e = vec![0.0; n];
    let mut conf = vec![0.0; n];
    let mut mask = vec![false; n];
    let mut flags = vec![0u8; n];
    for q in 0..n {
        if !vols.iter().all(|v| v.mask.as_slice()[q]) {
            continue;
        }
        let wsum: f64 = vols.iter().map(|v| v.confidence.as_slice()[q]).sum();
        e[q] = if wsum > 0.0 {
            vols.iter().map(|v| v.confidence.as_slice()[q] * v.e.as_slice()[q]).sum::<f64>() / wsum
        } else {
            vols.iter().map(|v| v.e.as_slice()[q]).sum::<f64>() / vols.len() as f64
        };
        conf[q] = wsum;
        flags[q] = vols.iter().fold(0, |f, v| f | v.flags.as_slice()[q]);
        mask[q] = true;
    }
    let dims = first.grid.dims;
    Ok(ElasticityVolume {
        e: Volume::from_vec(dims, e)?,
        confidence: Volume::from_vec(dims, conf)?,
        mask: Volume::from_vec(dims, mask)?,
        flags: Volume::from_vec(dims, flags)?,
        grid: first.grid,
        provenance: Provenance {
            mode: first.provenance.mode,
            frequencies: vols.iter().flat_map(|v| v.provenance.frequencies.iter().copied()).collect(),
        },
    })
}

/// Mean, population std and count of valid voxels whose centres lie in `roi`.
pub fn roi_stats(vol: &ElasticityVolume, roi: &Aabb) -> Result<RoiStats> {
    let d = vol.grid.dims;
    let mut vals = Vec::new();
    for i in 0..d[0] {
        for j in 0..d[1] {
            for k in 0..d[2] {
                if vol.mask[[i, j, k]] && roi.contains(vol.grid.point(i, j, k), 1e-12) {
                    vals.push(vol.e[[i, j, k]]);
                }
            }
        }
    }
    if vals.is_empty() {
        return Err(Error::Contract("the ROI contains no valid voxels".into()));
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(RoiStats { mean, std: var.sqrt(), count: vals.len() })
}

/// Erode a mask with a box element: `in_plane` metres along x and y, `elevation`
/// voxels along z.
pub fn erode_mask(mask: &Volume<bool>, grid: &CartesianGrid, in_plane: f64, elevation: usize) -> Volume<bool> {
    let r = [
        (in_plane / grid.spacing[0]).round() as usize,
        (in_plane / grid.spacing[1]).round() as usize,
        elevation,
    ];
    let mut cur = mask.clone();
    for (axis, &radius) in r.iter().enumerate() {
        if radius == 0 {
            continue;
        }
        let d = cur.dims();
        let mut next = cur.clone();
        for i in 0..d[0] {
            for j in 0..d[1] {
                for k in 0..d[2] {
                    if !cur[[i, j, k]] {
                        continue;
                    }
                    let p = [i, j, k];
                    let lo = p[axis].saturating_sub(radius);
                    let hi = p[axis] + radius;
                    let keep = lo + radius == p[axis]
                        && hi < d[axis]
                        && (lo..=hi).all(|t| {
                            let mut s = p;
                            s[axis] = t;
                            cur[s]
                        });
                    next[p] = keep;
                }
            }
        }
        cur = next;
    }
    cur
}

/// Restrict an elasticity volume to a narrower mask.
pub fn apply_mask(vol: &ElasticityVolume, mask: &Volume<bool>) -> Result<ElasticityVolume> {
    if mask.dims() != vol.grid.dims {
        return Err(Error::Contract("mask shape does not match the volume".into()));
    }
    let mut out = vol.clone();
    for (m, &keep) in out.mask.as_mut_slice().iter_mut().zip(mask.as_slice()) {
        *m &= keep;
    }
    Ok(out)
}

/// Per-frequency elasticity from Cartesian phasors under a curl mode.
pub fn invert(
    cart: &CartesianPhasorSet,
    mode: CurlMode,
    rho: f64,
    bank: &FilterBank,
    exec: Execution,
) -> Result<Vec<ElasticityVolume>> {
    let curls = match mode {
        CurlMode::None => None,
        CurlMode::Curl2d => Some(curl2d(cart)?),
        CurlMode::Curl3d => Some(curl3d(cart)?),
    };
    cart.frequencies
        .iter()
        .enumerate()
        .map(|(fi, &f)| {
            let img = match &curls {
                Some(c) => c.wave_image(fi),
                None => cart.wave_image(fi),
            };
            lfe(&img, f, rho, bank, mode, exec)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(e: f64, c: f64, grid: CartesianGrid) -> ElasticityVolume {
        ElasticityVolume {
            e: Volume::filled(grid.dims, e),
            confidence: Volume::filled(grid.dims, c),
            mask: Volume::filled(grid.dims, true),
            flags: Volume::filled(grid.dims, 0),
            grid,
            provenance: Provenance { mode: CurlMode::Curl3d, frequencies: vec![50.0] },
        }
    }

    #[test]
    fn fusion_weights_by_confidence() {
        let g = CartesianGrid::isotropic([2, 2, 2], 1e-3, [0.0; 3]).unwrap();
        let f = fuse_frequencies(&[constant(1.0, 1.0, g), constant(4.0, 3.0, g)]).unwrap();
        assert!((f.e[[0, 0, 0]] - 3.25).abs() < 1e-12);
        let z = fuse_frequencies(&[constant(1.0, 0.0, g), constant(4.0, 0.0, g)]).unwrap();
        assert!((z.e[[1, 1, 1]] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn erosion_strips_edges() {
        let g = CartesianGrid::isotropic([7, 7, 5], 1e-3, [0.0; 3]).unwrap();
        let m = erode_mask(&Volume::filled(g.dims, true), &g, 2e-3, 1);
        let kept = m.iter().filter(|&&b| b).count();
        assert_eq!(kept, 3 * 3 * 3);
        assert!(m[[3, 3, 2]] && !m[[1, 3, 2]]);
    }
}
