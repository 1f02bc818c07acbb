use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::geometry::{CartesianGrid, FrustumGeometry};
use crate::phasor::PhasorSet;
use crate::volume::{Volume, C64};

use super::WaveImage;

/// Phasors resampled onto an isotropic Cartesian grid, in global components.
#[derive(Clone, Debug, PartialEq)]
pub struct CartesianPhasorSet {
    pub frequencies: Vec<f64>,
    /// `components[f][c]` for global axis `c` (x, y, z).
    pub components: Vec<[Volume<C64>; 3]>,
    pub grid: CartesianGrid,
    /// True inside the sampled frustum.
    pub mask: Volume<bool>,
}

impl CartesianPhasorSet {
    pub fn wave_image(&self, f: usize) -> WaveImage<'_> {
        WaveImage {
            grid: self.grid,
            mask: &self.mask,
            channels: self.components[f].iter().collect(),
            reduced: None,
        }
    }
}

/// Cartesian grid covering the frustum's bounding box at the given spacing,
/// centred on the box.
pub fn covering_grid(geometry: &FrustumGeometry, spacing: f64) -> Result<CartesianGrid> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::Parameter(format!("scan spacing must be positive, got {spacing}")));
    }
    let b = geometry.bounds();
    let ext = b.extent();
    let dims = ext.map(|e| (e / spacing + 1e-9).floor() as usize + 1);
    let origin = [0, 1, 2].map(|a| b.min[a] + 0.5 * (ext[a] - (dims[a] - 1) as f64 * spacing));
    CartesianGrid::isotropic(dims, spacing, origin)
}

/// Trilinear stencil into the (axial, lateral, plane) raster.
#[derive(Clone, Copy)]
struct Stencil {
    corner: [usize; 3],
    w: [f64; 3],
}

fn stencil(geometry: &FrustumGeometry, x: [f64; 3]) -> Option<Stencil> {
    let f = geometry.locate(x);
    let n = geometry.dims();
    let tol = 1e-9;
    let mut corner = [0usize; 3];
    let mut w = [0.0; 3];
    for a in 0..3 {
        if n[a] == 1 {
            if a == 2 {
                let dz = x[2] - geometry.probe_origin[2];
                if dz.abs() > 1e-9 {
                    return None;
                }
            } else if f[a].abs() > tol {
                return None;
            }
            continue;
        }
        if f[a] < -tol || f[a] > (n[a] - 1) as f64 + tol {
            return None;
        }
        let v = f[a].clamp(0.0, (n[a] - 1) as f64);
        let c = (v.floor() as usize).min(n[a] - 2);
        corner[a] = c;
        w[a] = v - c as f64;
    }
    Some(Stencil { corner, w })
}

/// Truncated Gaussian taps for resampling from `pitch` to `spacing`; `None` when
/// the source is not finer than the target.
fn antialias_taps(pitch: f64, spacing: f64) -> Option<Vec<f64>> {
    if spacing <= pitch {
        return None;
    }
    let sigma = 0.4 * (spacing * spacing - pitch * pitch).sqrt() / pitch;
    let r = (3.0 * sigma).ceil() as isize;
    Some((-r..=r).map(|d| (-0.5 * (d as f64 / sigma).powi(2)).exp()).collect())
}

/// Separable low-pass of one (axial, lateral, plane) raster, with the kernel
/// renormalized where it leaves the raster. Elevational taps vary with depth.
fn antialias(src: &[C64], dims: [usize; 3], taps: [Option<&[f64]>; 2], elevation: &[Option<Vec<f64>>]) -> Vec<C64> {
    let mut cur = src.to_vec();
    let stride = [dims[1] * dims[2], dims[2], 1];
    for ax in 0..3 {
        if ax < 2 && taps[ax].is_none() || ax == 2 && elevation.iter().all(Option::is_none) {
            continue;
        }
        let n = dims[ax] as isize;
        let mut out = vec![C64::default(); cur.len()];
        for (q, o) in out.iter_mut().enumerate() {
            let t = if ax < 2 { taps[ax] } else { elevation[q / stride[0]].as_deref() };
            let Some(t) = t else {
                *o = cur[q];
                continue;
            };
            let r = (t.len() / 2) as isize;
            let c = ((q / stride[ax]) % dims[ax]) as isize;
            let (mut acc, mut wsum) = (C64::default(), 0.0);
            for d in (-r).max(-c)..=r.min(n - 1 - c) {
                let w = t[(d + r) as usize];
                acc += cur[(q as isize + d * stride[ax] as isize) as usize] * w;
                wsum += w;
            }
            *o = acc / wsum;
        }
        cur = out;
    }
    cur
}

/// Resample frustum phasors onto `grid`, rotating each plane's local components
/// into global axes before interpolating. Rasters finer than the grid are
/// low-passed in-plane first so sub-voxel detail does not alias.
pub fn scan_convert_to(
    phasors: &PhasorSet,
    grid: &CartesianGrid,
    exec: Execution,
) -> Result<CartesianPhasorSet> {
    if !grid.is_isotropic() {
        return Err(Error::Parameter("scan conversion needs an isotropic grid".into()));
    }
    let g = &phasors.geometry;
    let fd = g.dims();
    let bases: Vec<[[f64; 3]; 3]> = (0..fd[2]).map(|p| g.plane_basis(p)).collect();
    let [n0, n1, n2] = grid.dims;
    let stencils: Vec<Option<Stencil>> = exec::map_range(exec, n0, |i| {
        let mut row = Vec::with_capacity(n1 * n2);
        for j in 0..n1 {
            for k in 0..n2 {
                row.push(stencil(g, grid.point(i, j, k)));
            }
        }
        row
    })
    .into_iter()
    .flatten()
    .collect();
    let mask = Volume::from_vec(grid.dims, stencils.iter().map(|s| s.is_some()).collect())?;
    let taps = [
        antialias_taps(g.axial_pitch, grid.spacing[0]),
        antialias_taps(g.lateral_pitch, grid.spacing[0]),
    ];
    let elevation: Vec<Option<Vec<f64>>> = if fd[2] > 1 {
        (0..fd[0]).map(|i| antialias_taps(g.elevational_spacing(i as f64), grid.spacing[0])).collect()
    } else {
        vec![None; fd[0]]
    };
    let corner_range = |a: usize, c: usize| if fd[a] == 1 { c..c + 1 } else { c..c + 2 };
    let components = phasors
        .components
        .iter()
        .map(|local| {
            let filtered: Vec<Vec<C64>> = if taps.iter().any(Option::is_some) || elevation.iter().any(Option::is_some) {
                local.iter().map(|v| antialias(v.as_slice(), fd, [taps[0].as_deref(), taps[1].as_deref()], &elevation)).collect()
            } else {
                local.iter().map(|v| v.as_slice().to_vec()).collect()
            };
            let src = [filtered[0].as_slice(), filtered[1].as_slice(), filtered[2].as_slice()];
            let mut out: [Vec<C64>; 3] = [
                vec![C64::default(); stencils.len()],
                vec![C64::default(); stencils.len()],
                vec![C64::default(); stencils.len()],
            ];
            let values: Vec<[C64; 3]> = exec::map_range(exec, stencils.len(), |q| {
                let Some(s) = stencils[q] else {
                    return [C64::default(); 3];
                };
                let mut acc = [C64::default(); 3];
                for a in corner_range(0, s.corner[0]) {
                    let wa = if a == s.corner[0] { 1.0 - s.w[0] } else { s.w[0] };
                    for b in corner_range(1, s.corner[1]) {
                        let wb = if b == s.corner[1] { 1.0 - s.w[1] } else { s.w[1] };
                        for p in corner_range(2, s.corner[2]) {
                            let wp = if p == s.corner[2] { 1.0 - s.w[2] } else { s.w[2] };
                            let w = wa * wb * wp;
                            if w == 0.0 {
                                continue;
                            }
                            let idx = (a * fd[1] + b) * fd[2] + p;
                            let e = &bases[p];
                            for (c, out_c) in acc.iter_mut().enumerate() {
                                let v = src[0][idx] * e[0][c] + src[1][idx] * e[1][c] + src[2][idx] * e[2][c];
                                *out_c += v * w;
                            }
                        }
                    }
                }
                acc
            });
            for (q, v) in values.into_iter().enumerate() {
                for c in 0..3 {
                    out[c][q] = v[c];
                }
            }
            out.map(|v| Volume::from_vec(grid.dims, v).expect("shape"))
        })
        .collect();
    Ok(CartesianPhasorSet {
        frequencies: phasors.frequencies.clone(),
        components,
        grid: *grid,
        mask,
    })
}

/// Scan-convert onto the covering grid at `spacing`.
pub fn scan_convert(phasors: &PhasorSet, spacing: f64, exec: Execution) -> Result<CartesianPhasorSet> {
    let grid = covering_grid(&phasors.geometry, spacing)?;
    scan_convert_to(phasors, &grid, exec)
}

/// Separable Gaussian blur with zero extension; `sigma` in voxels.
pub(crate) fn gaussian_blur(src: Vec<C64>, d: [usize; 3], sigma: f64, exec: Execution) -> Vec<C64> {
    let r = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-r..=r).map(|t| (-0.5 * (t as f64 / sigma).powi(2)).exp()).collect();
    let stride = [d[1] * d[2], d[2], 1];
    let mut cur = src;
    for ax in 0..3 {
        let n = d[ax] as isize;
        cur = exec::map_range(exec, cur.len(), |q| {
            let c = ((q / stride[ax]) % d[ax]) as isize;
            let mut acc = C64::default();
            for t in (-r).max(-c)..=r.min(n - 1 - c) {
                acc += cur[(q as isize + t * stride[ax] as isize) as usize] * taps[(t + r) as usize];
            }
            acc
        });
    }
    cur
}

/// Mask-normalized isotropic Gaussian smoothing of every phasor channel;
/// `sigma` in metres, zero returns the input unchanged.
pub fn smooth(cart: &CartesianPhasorSet, sigma: f64, exec: Execution) -> Result<CartesianPhasorSet> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!("smoothing sigma must be non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(cart.clone());
    }
    let d = cart.grid.dims;
    let mask = &cart.mask;
    let sv = sigma / cart.grid.spacing[0];
    let weight: Vec<C64> = mask.iter().map(|&m| C64::new(m as u8 as f64, 0.0)).collect();
    let blur = |src: Vec<C64>| gaussian_blur(src, d, sv, exec);
    let norm = blur(weight);
    let components = cart
        .components
        .iter()
        .map(|chs| {
            chs.clone().map(|v| {
                let masked: Vec<C64> =
                    v.iter().zip(mask.iter()).map(|(&x, &m)| if m { x } else { C64::default() }).collect();
                let out: Vec<C64> = blur(masked)
                    .into_iter()
                    .zip(&norm)
                    .zip(mask.iter())
                    .map(|((x, w), &m)| if m && w.re > 0.0 { x / w.re } else { C64::default() })
                    .collect();
                Volume::from_vec(d, out).expect("shape")
            })
        })
        .collect();
    Ok(CartesianPhasorSet { components, ..cart.clone() })
}
