//! Speckle tracking by block matching, plus the oracle bypass.

use serde::{Deserialize, Serialize};

use crate::acquisition::{AcquisitionMode, VolumeSeries};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::forward::DisplacementFieldSeries;
use crate::geometry::{FieldGrid, FrustumGeometry};
use crate::volume::{Volume, VectorVolume};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Tracked,
    Oracle,
}

/// Displacement volumes in plane-local components on the frustum grid [m].
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementSeries {
    pub frames: Vec<VectorVolume<f64>>,
    pub timestamps: Vec<f64>,
    /// Mean peak correlation per voxel, in [0, 1].
    pub quality: Volume<f64>,
    pub geometry: FrustumGeometry,
    pub provenance: Provenance,
}

impl DisplacementSeries {
    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Wrap displacement-mode volumes, whose frames are exact field samples.
    pub fn from_displacement_volumes(vols: &VolumeSeries) -> Result<Self> {
        if vols.mode != AcquisitionMode::Displacement {
            return Err(Error::Contract("volumes do not hold displacement frames".into()));
        }
        let frames = vols
            .volumes
            .iter()
            .map(|v| [v[0].clone(), v[1].clone(), v[2].clone()])
            .collect();
        Ok(DisplacementSeries {
            frames,
            timestamps: vols.frame_times.clone(),
            quality: Volume::filled(vols.geometry.dims(), 1.0),
            geometry: vols.geometry,
            provenance: Provenance::Oracle,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingParams {
    /// Matching window (axial, lateral, elevational) in samples; odd sizes.
    pub window: [usize; 3],
    /// Search radius per axis in samples.
    pub search: [usize; 3],
    /// Number of 3x3x3 median passes applied to each pairwise estimate.
    pub regularization: usize,
    /// Refine with the full quadratic (mixed second differences included)
    /// instead of independent per-axis parabolas.
    pub cross_terms: bool,
}

impl Default for TrackingParams {
    fn default() -> Self {
        TrackingParams { window: [9, 9, 3], search: [4, 4, 1], regularization: 1, cross_terms: false }
    }
}

/// Pairwise displacement estimate in samples, with peak correlation.
#[derive(Clone, Debug, PartialEq)]
pub struct PairEstimate {
    pub shift: [Volume<f64>; 3],
    pub correlation: Volume<f64>,
}

/// Replicate-pad `src` by `pad[a]` samples on both sides of each axis.
fn pad_replicate(src: &[f64], dims: [usize; 3], pad: [usize; 3]) -> (Vec<f64>, [usize; 3]) {
    let pd = [dims[0] + 2 * pad[0], dims[1] + 2 * pad[1], dims[2] + 2 * pad[2]];
    let mut out = Vec::with_capacity(pd[0] * pd[1] * pd[2]);
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    for i in 0..pd[0] {
        let si = clamp(i as isize - pad[0] as isize, dims[0]);
        for j in 0..pd[1] {
            let sj = clamp(j as isize - pad[1] as isize, dims[1]);
            let row = &src[(si * dims[1] + sj) * dims[2]..(si * dims[1] + sj + 1) * dims[2]];
            for k in 0..pd[2] {
                out.push(row[clamp(k as isize - pad[2] as isize, dims[2])]);
            }
        }
    }
    (out, pd)
}

/// Sums over every `w`-sized box fully inside `src` ("valid" mode).
fn box_sum(src: &[f64], dims: [usize; 3], w: [usize; 3]) -> (Vec<f64>, [usize; 3]) {
    let od = [dims[0] + 1 - w[0], dims[1] + 1 - w[1], dims[2] + 1 - w[2]];
    // Axis 2.
    let d1 = [dims[0], dims[1], od[2]];
    let mut a = vec![0.0; d1[0] * d1[1] * d1[2]];
    for r in 0..dims[0] * dims[1] {
        let row = &src[r * dims[2]..(r + 1) * dims[2]];
        let out = &mut a[r * od[2]..(r + 1) * od[2]];
        let mut s: f64 = row[..w[2]].iter().sum();
        out[0] = s;
        for k in 1..od[2] {
            s += row[k + w[2] - 1] - row[k - 1];
            out[k] = s;
        }
    }
    // Axis 1.
    let d2 = [dims[0], od[1], od[2]];
    let mut b = vec![0.0; d2[0] * d2[1] * d2[2]];
    let n2 = od[2];
    for i in 0..dims[0] {
        let slab = &a[i * dims[1] * n2..(i + 1) * dims[1] * n2];
        let out = &mut b[i * od[1] * n2..(i + 1) * od[1] * n2];
        for k in 0..n2 {
            let mut s = 0.0;
            for j in 0..w[1] {
                s += slab[j * n2 + k];
            }
            out[k] = s;
            for j in 1..od[1] {
                s += slab[(j + w[1] - 1) * n2 + k] - slab[(j - 1) * n2 + k];
                out[j * n2 + k] = s;
            }
        }
    }
    // Axis 0.
    let plane = od[1] * od[2];
    let mut c = vec![0.0; od[0] * plane];
    let mut acc = b[..w[0] * plane]
        .chunks(plane)
        .fold(vec![0.0; plane], |mut acc, p| {
            for (x, y) in acc.iter_mut().zip(p) {
                *x += y;
            }
            acc
        });
    c[..plane].copy_from_slice(&acc);
    for i in 1..od[0] {
        let add = &b[(i + w[0] - 1) * plane..(i + w[0]) * plane];
        let sub = &b[(i - 1) * plane..i * plane];
        for q in 0..plane {
            acc[q] += add[q] - sub[q];
        }
        c[i * plane..(i + 1) * plane].copy_from_slice(&acc);
    }
    (c, od)
}

fn validate_params(params: &TrackingParams, dims: [usize; 3]) -> Result<()> {
    for a in 0..3 {
        let w = params.window[a];
        if w == 0 || w % 2 == 0 {
            return Err(Error::Parameter(format!("window sizes must be odd and positive, got {:?}", params.window)));
        }
        if w > dims[a] {
            return Err(Error::Parameter(format!(
                "window {:?} is larger than the volume {:?}",
                params.window, dims
            )));
        }
    }
    Ok(())
}

/// Match volume `a` against volume `b`; the shift moves content of `a` onto `b`.
pub fn track_pair(
    a: &Volume<f64>,
    b: &Volume<f64>,
    params: &TrackingParams,
    exec: Execution,
) -> Result<PairEstimate> {
    let dims = a.dims();
    if b.dims() != dims {
        return Err(Error::Contract("volume shapes differ".into()));
    }
    validate_params(params, dims)?;
    let h = params.window.map(|w| w / 2);
    let s = params.search;
    // In-plane edges are replicate-padded. Elevationally the window is cut to
    // the planes present in both volumes, which keeps the few-plane sweep
    // unbiased at its first and last planes.
    let plane_window = [params.window[0], params.window[1], 1];
    let wn = (params.window[0] * params.window[1]) as f64;
    let (ap, apd) = pad_replicate(a.as_slice(), dims, [h[0], h[1], 0]);
    let (bp, bpd) = pad_replicate(b.as_slice(), dims, [h[0] + s[0], h[1] + s[1], 0]);
    let sq = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<_>>();
    let (sa, _) = box_sum(&ap, apd, plane_window);
    let (saa, _) = box_sum(&sq(&ap), apd, plane_window);
    let (sb, sbd) = box_sum(&bp, bpd, plane_window);
    let (sbb, _) = box_sum(&sq(&bp), bpd, plane_window);

    let offsets: Vec<[isize; 3]> = {
        let mut v = Vec::new();
        for o0 in -(s[0] as isize)..=s[0] as isize {
            for o1 in -(s[1] as isize)..=s[1] as isize {
                for o2 in -(s[2] as isize)..=s[2] as isize {
                    v.push([o0, o1, o2]);
                }
            }
        }
        v
    };
    let n = dims[0] * dims[1] * dims[2];
    let np = dims[2] as isize;
    let scores: Vec<Vec<f32>> = exec::map_range(exec, offsets.len(), |oi| {
        let o = offsets[oi];
        let base = [(o[0] + s[0] as isize) as usize, (o[1] + s[1] as isize) as usize];
        // Planes of `a` whose partner plane k + o2 exists in `b`.
        let lo = (-o[2]).max(0);
        let hi = (np - o[2]).min(np);
        let mut prod = vec![0.0; ap.len()];
        for i in 0..apd[0] {
            for j in 0..apd[1] {
                let ar = (i * apd[1] + j) * apd[2];
                let br = ((i + base[0]) * bpd[1] + j + base[1]) * bpd[2];
                for k in lo..hi {
                    prod[ar + k as usize] = ap[ar + k as usize] * bp[br + (k + o[2]) as usize];
                }
            }
        }
        let (sab, _) = box_sum(&prod, apd, plane_window);
        let mut out = Vec::with_capacity(n);
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                let qa = (i * dims[1] + j) * dims[2];
                let rb = ((i + base[0]) * sbd[1] + j + base[1]) * sbd[2];
                for k in 0..np {
                    let k0 = (k - h[2] as isize).max(lo);
                    let k1 = (k + h[2] as isize + 1).min(hi);
                    if k1 <= k0 {
                        out.push(f32::NAN);
                        continue;
                    }
                    let (mut xa, mut xaa, mut xb, mut xbb, mut xab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for kk in k0..k1 {
                        let qa = qa + kk as usize;
                        let rb = rb + (kk + o[2]) as usize;
                        xa += sa[qa];
                        xaa += saa[qa];
                        xb += sb[rb];
                        xbb += sbb[rb];
                        xab += sab[qa];
                    }
                    let m = wn * (k1 - k0) as f64;
                    let cov = xab - xa * xb / m;
                    let va = xaa - xa * xa / m;
                    let vb = xbb - xb * xb / m;
                    let den = (va * vb).sqrt();
                    out.push(if den > 0.0 { (cov / den) as f32 } else { 0.0 });
                }
            }
        }
        out
    });

    let extent = s.map(|v| 2 * v + 1);
    let flat = |o: [usize; 3]| (o[0] * extent[1] + o[1]) * extent[2] + o[2];
    let signed = |o: [usize; 3]| [0, 1, 2].map(|a| o[a] as isize - s[a] as isize);
    // Three-point peak fits are biased by the local asymmetry of the
    // correlation surface. Matching b onto a sees the mirrored bias, and those
    // scores are the forward scores re-indexed: S_ba(q, o) = S_ab(q + o, -o).
    // Averaging both directions cancels the bias to first order.
    let peak = |score: &dyn Fn(usize) -> Option<f32>| -> Option<([f64; 3], [bool; 3], f32)> {
        let mut best = None;
        let mut best_v = f32::NEG_INFINITY;
        for oi in 0..scores.len() {
            if let Some(v) = score(oi) {
                if v > best_v {
                    best_v = v;
                    best = Some(oi);
                }
            }
        }
        let best = best?;
        let bo = [best / (extent[1] * extent[2]), (best / extent[2]) % extent[1], best % extent[2]];
        if params.cross_terms {
            if let Some(d) = newton_step(bo, extent, &|o| score(flat(o))) {
                return Some(([0, 1, 2].map(|a| bo[a] as f64 - s[a] as f64 + d[a]), [true; 3], best_v));
            }
        }
        let mut out = [0.0; 3];
        let mut refined = [false; 3];
        for ax in 0..3 {
            let mut sub = 0.0;
            if bo[ax] > 0 && bo[ax] + 1 < extent[ax] {
                let mut lo = bo;
                lo[ax] -= 1;
                let mut hi = bo;
                hi[ax] += 1;
                if let (Some(cm), Some(cp)) = (score(flat(lo)), score(flat(hi))) {
                    let (cm, c0, cp) = (cm as f64, best_v as f64, cp as f64);
                    let den = cm - 2.0 * c0 + cp;
                    if den < 0.0 {
                        sub = (0.5 * (cm - cp) / den).clamp(-0.5, 0.5);
                        refined[ax] = true;
                    }
                }
            }
            out[ax] = bo[ax] as f64 - s[ax] as f64 + sub;
        }
        Some((out, refined, best_v))
    };
    let offset_index: Vec<[usize; 3]> = (0..offsets.len())
        .map(|oi| [oi / (extent[1] * extent[2]), (oi / extent[2]) % extent[1], oi % extent[2]])
        .collect();
    let mut shift = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut corr = vec![0.0; n];
    for q in 0..n {
        let Some((fwd, _, best_v)) = peak(&|oi| Some(scores[oi][q]).filter(|v| !v.is_nan())) else {
            continue;
        };
        corr[q] = (best_v as f64).clamp(0.0, 1.0);
        let c = [q / (dims[1] * dims[2]), (q / dims[2]) % dims[1], q % dims[2]];
        let bwd = peak(&|oi| {
            let o = signed(offset_index[oi]);
            let mut t = [0usize; 3];
            let mut back = [0usize; 3];
            for a in 0..3 {
                let v = c[a] as isize + o[a];
                if v < 0 || v >= dims[a] as isize {
                    return None;
                }
                t[a] = v as usize;
                back[a] = (s[a] as isize - o[a]) as usize;
            }
            Some(scores[flat(back)][(t[0] * dims[1] + t[1]) * dims[2] + t[2]]).filter(|v| !v.is_nan())
        });
        for ax in 0..3 {
            shift[ax][q] = match bwd {
                Some((b, _, _)) => 0.5 * (fwd[ax] - b[ax]),
                _ => fwd[ax],
            };
        }
    }
    let mut shift = shift.map(|v| Volume::from_vec(dims, v).expect("shape"));
    for _ in 0..params.regularization {
        shift = shift.map(|v| median3(&v));
    }
    Ok(PairEstimate { shift, correlation: Volume::from_vec(dims, corr)? })
}

/// Peak offset of the quadratic through the 3x3x3 neighbourhood of `bo`, or
/// `None` when a neighbour is missing or the surface is not a maximum there.
fn newton_step(bo: [usize; 3], extent: [usize; 3], score: &dyn Fn([usize; 3]) -> Option<f32>) -> Option<[f64; 3]> {
    if (0..3).any(|a| bo[a] == 0 || bo[a] + 1 >= extent[a]) {
        return None;
    }
    let at = |d: [isize; 3]| -> Option<f64> {
        let o = [0, 1, 2].map(|a| (bo[a] as isize + d[a]) as usize);
        score(o).map(f64::from)
    };
    let unit = |a: usize, v: isize| {
        let mut d = [0isize; 3];
        d[a] = v;
        d
    };
    let c0 = at([0; 3])?;
    let mut g = [0.0; 3];
    let mut h = [[0.0; 3]; 3];
    for a in 0..3 {
        let (p, m) = (at(unit(a, 1))?, at(unit(a, -1))?);
        g[a] = 0.5 * (p - m);
        h[a][a] = p - 2.0 * c0 + m;
        for b in a + 1..3 {
            let pair = |sa: isize, sb: isize| {
                let mut d = unit(a, sa);
                d[b] = sb;
                at(d)
            };
            let v = 0.25 * (pair(1, 1)? - pair(1, -1)? - pair(-1, 1)? + pair(-1, -1)?);
            h[a][b] = v;
            h[b][a] = v;
        }
    }
    // Negative definite by leading minors.
    let m1 = h[0][0];
    let m2 = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    let det = h[0][0] * (h[1][1] * h[2][2] - h[1][2] * h[2][1]) - h[0][1] * (h[1][0] * h[2][2] - h[1][2] * h[2][0])
        + h[0][2] * (h[1][0] * h[2][1] - h[1][1] * h[2][0]);
    if !(m1 < 0.0 && m2 > 0.0 && det < 0.0) {
        return None;
    }
    // d = -H^-1 g by Cramer's rule.
    let mut d = [0.0; 3];
    for (col, dc) in d.iter_mut().enumerate() {
        let mut m = h;
        for r in 0..3 {
            m[r][col] = -g[r];
        }
        let dm = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        *dc = (dm / det).clamp(-0.5, 0.5);
    }
    Some(d)
}

/// 3x3x3 median with edge clamping.
pub fn median3(v: &Volume<f64>) -> Volume<f64> {
    let d = v.dims();
    let clamp = |x: isize, n: usize| x.clamp(0, n as isize - 1) as usize;
    let mut buf = Vec::with_capacity(27);
    Volume::from_fn(d, |i, j, k| {
        buf.clear();
        for di in -1..=1isize {
            for dj in -1..=1isize {
                for dk in -1..=1isize {
                    buf.push(v[[clamp(i as isize + di, d[0]), clamp(j as isize + dj, d[1]), clamp(k as isize + dk, d[2])]]);
                }
            }
        }
        buf.select_nth_unstable_by(13, f64::total_cmp);
        buf[13]
    })
}

/// Pairwise block matching over consecutive speckle volumes, accumulated to
/// displacement relative to the first volume.
pub fn track_displacements(
    vols: &VolumeSeries,
    params: &TrackingParams,
    exec: Execution,
) -> Result<DisplacementSeries> {
    if vols.mode != AcquisitionMode::Speckle {
        return Err(Error::Contract("tracking needs speckle volumes".into()));
    }
    if vols.len() < 2 {
        return Err(Error::Contract(format!("tracking needs at least 2 volumes, got {}", vols.len())));
    }
    let g = vols.geometry;
    let dims = g.dims();
    validate_params(params, dims)?;
    if vols.volumes.iter().all(|v| v[0].max_abs() == 0.0) {
        return Err(Error::DegenerateInput("all speckle volumes are zero".into()));
    }
    let elev_pitch: Vec<f64> = (0..g.n_axial).map(|i| g.elevational_spacing(i as f64)).collect();
    let mut frames = Vec::with_capacity(vols.len());
    let mut acc: VectorVolume<f64> = crate::volume::zero_vector(dims);
    let mut quality = vec![0.0; dims.iter().product()];
    frames.push(acc.clone());
    for n in 1..vols.len() {
        let est = track_pair(&vols.volumes[n - 1][0], &vols.volumes[n][0], params, exec)?;
        for q in 0..quality.len() {
            let [i, _, _] = acc[0].coords_of(q);
            acc[0].as_mut_slice()[q] += est.shift[0].as_slice()[q] * g.axial_pitch;
            acc[1].as_mut_slice()[q] += est.shift[1].as_slice()[q] * g.lateral_pitch;
            acc[2].as_mut_slice()[q] += est.shift[2].as_slice()[q] * elev_pitch[i];
            quality[q] += est.correlation.as_slice()[q];
        }
        frames.push(acc.clone());
    }
    let pairs = (vols.len() - 1) as f64;
    for v in &mut quality {
        *v = (*v / pairs).clamp(0.0, 1.0);
    }
    Ok(DisplacementSeries {
        frames,
        timestamps: vols.frame_times.clone(),
        quality: Volume::from_vec(dims, quality)?,
        geometry: g,
        provenance: Provenance::Tracked,
    })
}

/// Forward exact field samples as a displacement series.
pub fn oracle_displacements(field: &DisplacementFieldSeries, vols: &VolumeSeries) -> Result<DisplacementSeries> {
    if field.grid != FieldGrid::Frustum(vols.geometry) {
        return Err(Error::Contract("field and volumes use different geometry".into()));
    }
    if field.timestamps.len() != vols.frame_times.len()
        || field.timestamps.iter().zip(&vols.frame_times).any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(Error::Contract("field and volume timestamps differ".into()));
    }
    Ok(DisplacementSeries {
        frames: field.frames.clone(),
        timestamps: field.timestamps.clone(),
        quality: Volume::filled(vols.geometry.dims(), 1.0),
        geometry: vols.geometry,
        provenance: Provenance::Oracle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_sum_matches_brute_force() {
        let dims = [5, 6, 4];
        let src: Vec<f64> = (0..120).map(|i| ((i * 7) % 11) as f64).collect();
        let w = [3, 3, 3];
        let (out, od) = box_sum(&src, dims, w);
        assert_eq!(od, [3, 4, 2]);
        for i in 0..od[0] {
            for j in 0..od[1] {
                for k in 0..od[2] {
                    let mut s = 0.0;
                    for a in 0..3 {
                        for b in 0..3 {
                            for c in 0..3 {
                                s += src[((i + a) * dims[1] + j + b) * dims[2] + k + c];
                            }
                        }
                    }
                    assert!((out[(i * od[1] + j) * od[2] + k] - s).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn median_removes_isolated_spike() {
        let mut v = Volume::filled([5, 5, 5], 1.0);
        v[[2, 2, 2]] = 100.0;
        assert_eq!(median3(&v)[[2, 2, 2]], 1.0);
    }
}
