//! Virtual swept transducer and volume formation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::forward::{rotate_complex, synthesize_frames, HarmonicField, Harmonics};
use crate::geometry::{to_basis, Aabb, FieldGrid, FrustumGeometry, Point};
use crate::sequence::{fundamental_period, SequencePlan};
use crate::volume::Volume;

/// Allowed spread of `t mod T0` inside one volume [s].
pub const PHASE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcquisitionMode {
    #[default]
    Displacement,
    Speckle,
}

impl AcquisitionMode {
    pub fn components(self) -> usize {
        match self {
            AcquisitionMode::Displacement => 3,
            AcquisitionMode::Speckle => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeckleParams {
    pub seed: u64,
    /// Scatterers per cubic millimetre.
    pub density_per_mm3: f64,
    /// Gaussian point-spread standard deviations (axial, lateral, elevational) [m].
    pub psf_sigma: [f64; 3],
    /// Additive white noise relative to the speckle RMS; `None` for noiseless images.
    pub noise_snr_db: Option<f64>,
}

impl Default for SpeckleParams {
    fn default() -> Self {
        SpeckleParams {
            seed: 1,
            density_per_mm3: 2.0,
            psf_sigma: [0.3e-3, 0.8e-3, 0.8e-3],
            noise_snr_db: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionParams {
    pub mode: AcquisitionMode,
    /// Keep every `frame_stride`-th frame of each imaging window.
    pub frame_stride: usize,
    pub speckle: SpeckleParams,
}

impl Default for AcquisitionParams {
    fn default() -> Self {
        AcquisitionParams {
            mode: AcquisitionMode::Displacement,
            frame_stride: 1,
            speckle: SpeckleParams::default(),
        }
    }
}

/// Identity of one acquired frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameId {
    pub plane: usize,
    pub index: usize,
}

/// Frames of one imaging plane. Each frame stores its components back to back,
/// each component an axial-major `n_axial x n_lateral` raster.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneStack {
    pub frames: Vec<Vec<f64>>,
    pub timestamps: Vec<f64>,
    pub ids: Vec<FrameId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcquisitionRecord {
    pub mode: AcquisitionMode,
    pub planes: Vec<PlaneStack>,
    pub plane_angles: Vec<f64>,
    pub geometry: FrustumGeometry,
    pub plan: SequencePlan,
    pub frame_stride: usize,
}

impl AcquisitionRecord {
    pub fn components(&self) -> usize {
        self.mode.components()
    }

    pub fn frames_per_plane(&self) -> usize {
        self.planes.first().map_or(0, |p| p.frames.len())
    }
}

fn check_geometry(geometry: &FrustumGeometry, plan: &SequencePlan) -> Result<()> {
    geometry.validate()?;
    if geometry.n_planes != plan.n_planes {
        return Err(Error::Contract(format!(
            "frustum has {} planes but the plan has {}",
            geometry.n_planes, plan.n_planes
        )));
    }
    if plan.n_planes > 1 && (geometry.plane_angle_step_deg - plan.plane_angle_step_deg).abs() > 1e-12 {
        return Err(Error::Contract(format!(
            "frustum plane step {} deg differs from the plan's {} deg",
            geometry.plane_angle_step_deg, plan.plane_angle_step_deg
        )));
    }
    Ok(())
}

fn plane_bounds(geometry: &FrustumGeometry, p: usize) -> Aabb {
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for i in [0, geometry.n_axial - 1] {
        for j in [0, geometry.n_lateral - 1] {
            let q = geometry.point(i, j, p);
            for a in 0..3 {
                min[a] = min[a].min(q[a]);
                max[a] = max[a].max(q[a]);
            }
        }
    }
    Aabb { min, max }
}

/// Harmonics of one plane in plane-local components, axial-major.
fn plane_harmonics(field: &dyn HarmonicField, geometry: &FrustumGeometry, p: usize) -> Vec<Harmonics> {
    let basis = geometry.plane_basis(p);
    geometry
        .plane_points(p)
        .into_iter()
        .map(|x| {
            let mut h = field.harmonics(x);
            h.dc = to_basis(h.dc, &basis);
            for ph in &mut h.phasors {
                *ph = rotate_complex(*ph, &basis);
            }
            h
        })
        .collect()
}

/// Sample the field plane by plane on the plan's schedule.
pub fn acquire_sweep(
    field: &dyn HarmonicField,
    plan: &SequencePlan,
    geometry: &FrustumGeometry,
    params: &AcquisitionParams,
    exec: Execution,
) -> Result<AcquisitionRecord> {
    check_geometry(geometry, plan)?;
    let stride = params.frame_stride.max(1);
    let bounds = field.bounds();
    for p in 0..geometry.n_planes {
        if !bounds.contains_box(&plane_bounds(geometry, p), 1e-9) {
            return Err(Error::Geometry(format!("plane {p} extends outside the simulated field")));
        }
    }
    let indices: Vec<usize> = (0..plan.frames_per_plane).step_by(stride).collect();
    let scene = match params.mode {
        AcquisitionMode::Speckle => Some(SpeckleScene::new(geometry, &params.speckle)),
        AcquisitionMode::Displacement => None,
    };
    let plane_len = geometry.plane_len();
    let planes = exec::map_range(exec, geometry.n_planes, |p| {
        let harmonics = plane_harmonics(field, geometry, p);
        let timestamps: Vec<f64> = indices.iter().map(|&n| plan.frame_time(p, n)).collect();
        let disp = synthesize_frames(
            &harmonics,
            field.frequencies(),
            [geometry.n_axial, geometry.n_lateral, 1],
            &timestamps,
            Execution::Sequential,
        );
        let frames = disp
            .into_iter()
            .zip(&indices)
            .map(|(u, &n)| {
                let comps = [u[0].as_slice(), u[1].as_slice(), u[2].as_slice()];
                match &scene {
                    None => {
                        let mut out = Vec::with_capacity(3 * plane_len);
                        for c in comps {
                            out.extend_from_slice(c);
                        }
                        out
                    }
                    Some(scene) => {
                        let mut img = scene.render(p, Some(comps));
                        scene.add_noise(&mut img, p, n);
                        img
                    }
                }
            })
            .collect();
        PlaneStack {
            frames,
            timestamps,
            ids: indices.iter().map(|&index| FrameId { plane: p, index }).collect(),
        }
    });
    Ok(AcquisitionRecord {
        mode: params.mode,
        planes,
        plane_angles: (0..geometry.n_planes).map(|p| geometry.plane_angle_deg(p)).collect(),
        geometry: *geometry,
        plan: plan.clone(),
        frame_stride: stride,
    })
}

/// Seeded scatterer population shared by every plane of the sweep.
#[derive(Clone, Debug)]
pub struct SpeckleScene {
    geometry: FrustumGeometry,
    params: SpeckleParams,
    /// Per plane: scatterers near that plane as (axial index, lateral index, elevational offset [m], amplitude).
    per_plane: Vec<Vec<[f64; 4]>>,
}

impl SpeckleScene {
    pub fn new(geometry: &FrustumGeometry, params: &SpeckleParams) -> Self {
        let g = geometry;
        let sig = params.psf_sigma;
        let margin = 4.0 * sig[0].max(sig[1]).max(sig[2]);
        let b = g.bounds();
        let lo = [b.min[0] - margin, b.min[1] - margin, b.min[2] - margin];
        let hi = [b.max[0] + margin, b.max[1] + margin, b.max[2] + margin];
        let volume_mm3 = (0..3).map(|a| (hi[a] - lo[a]) * 1e3).product::<f64>();
        let count = (volume_mm3 * params.density_per_mm3).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let scatterers: Vec<(Point, f64)> = (0..count)
            .map(|_| {
                let x = [
                    rng.random_range(lo[0]..hi[0]),
                    rng.random_range(lo[1]..hi[1]),
                    rng.random_range(lo[2]..hi[2]),
                ];
                let a: f64 = StandardNormal.sample(&mut rng);
                (x, a)
            })
            .collect();
        let reach = 3.5 * sig[2];
        let step = g.plane_angle_step_deg.to_radians();
        let per_plane = (0..g.n_planes)
            .map(|p| {
                let theta_p = g.plane_tilt(p as f64);
                scatterers
                    .iter()
                    .filter_map(|&(x, amp)| {
                        let dx = x[0] - g.probe_origin[0] + g.sweep_radius;
                        let dz = x[2] - g.probe_origin[2];
                        let r = (dx * dx + dz * dz).sqrt();
                        let e = if g.n_planes > 1 || step > 0.0 {
                            r * (dz.atan2(dx) - theta_p)
                        } else {
                            dz
                        };
                        if e.abs() > reach {
                            return None;
                        }
                        let i = (r - g.sweep_radius - g.depth_start) / g.axial_pitch;
                        let j = (x[1] - g.probe_origin[1]) / g.lateral_pitch
                            + 0.5 * (g.n_lateral as f64 - 1.0);
                        Some([i, j, e, amp])
                    })
                    .collect()
            })
            .collect();
        SpeckleScene { geometry: *g, params: *params, per_plane }
    }

    pub fn geometry(&self) -> &FrustumGeometry {
        &self.geometry
    }

    /// Echo image of plane `p` with scatterers moved by the plane-local
    /// displacement components (axial, lateral, elevational) [m].
    pub fn render(&self, p: usize, displacement: Option<[&[f64]; 3]>) -> Vec<f64> {
        let g = &self.geometry;
        let (na, nl) = (g.n_axial, g.n_lateral);
        let sig = self.params.psf_sigma;
        let sa = sig[0] / g.axial_pitch;
        let sl = sig[1] / g.lateral_pitch;
        let ra = (3.0 * sa).ceil() as isize;
        let rl = (3.0 * sl).ceil() as isize;
        let mut img = vec![0.0; na * nl];
        let mut wa = vec![0.0; (2 * ra + 1) as usize];
        let mut wl = vec![0.0; (2 * rl + 1) as usize];
        for &[i, j, e, amp] in &self.per_plane[p] {
            let (mut i, mut j, mut e) = (i, j, e);
            if let Some(u) = displacement {
                let s = bilinear(u, na, nl, i, j);
                i += s[0] / g.axial_pitch;
                j += s[1] / g.lateral_pitch;
                e += s[2];
            }
            let we = amp * (-0.5 * (e / sig[2]).powi(2)).exp();
            let ic = i.round() as isize;
            let jc = j.round() as isize;
            if ic + ra < 0 || jc + rl < 0 || ic - ra >= na as isize || jc - rl >= nl as isize {
                continue;
            }
            for (m, w) in wa.iter_mut().enumerate() {
                let d = (ic - ra + m as isize) as f64 - i;
                *w = (-0.5 * (d / sa).powi(2)).exp();
            }
            for (m, w) in wl.iter_mut().enumerate() {
                let d = (jc - rl + m as isize) as f64 - j;
                *w = (-0.5 * (d / sl).powi(2)).exp();
            }
            for (m, &a) in wa.iter().enumerate() {
                let ii = ic - ra + m as isize;
                if ii < 0 || ii >= na as isize {
                    continue;
                }
                let row = &mut img[ii as usize * nl..(ii as usize + 1) * nl];
                let f = we * a;
                for (q, &l) in wl.iter().enumerate() {
                    let jj = jc - rl + q as isize;
                    if jj >= 0 && (jj as usize) < nl {
                        row[jj as usize] += f * l;
                    }
                }
            }
        }
        img
    }

    /// Add seeded white noise to frame `n` of plane `p` at the configured SNR.
    pub fn add_noise(&self, img: &mut [f64], p: usize, n: usize) {
        let Some(snr) = self.params.noise_snr_db else {
            return;
        };
        let rms = (img.iter().map(|v| v * v).sum::<f64>() / img.len().max(1) as f64).sqrt();
        let sd = rms * 10f64.powf(-snr / 20.0);
        let seed = self
            .params
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(((p as u64) << 32) ^ n as u64 ^ 0xA5A5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in img {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sd * z;
        }
    }
}

fn bilinear(u: [&[f64]; 3], na: usize, nl: usize, i: f64, j: f64) -> [f64; 3] {
    let ic = i.clamp(0.0, (na - 1) as f64);
    let jc = j.clamp(0.0, (nl - 1) as f64);
    let i0 = (ic.floor() as usize).min(na.saturating_sub(2));
    let j0 = (jc.floor() as usize).min(nl.saturating_sub(2));
    let i1 = (i0 + 1).min(na - 1);
    let j1 = (j0 + 1).min(nl - 1);
    let fi = ic - i0 as f64;
    let fj = jc - j0 as f64;
    u.map(|c| {
        let a = c[i0 * nl + j0] * (1.0 - fj) + c[i0 * nl + j1] * fj;
        let b = c[i1 * nl + j0] * (1.0 - fj) + c[i1 * nl + j1] * fj;
        a * (1.0 - fi) + b * fi
    })
}

/// One speckle image of plane `plane`, optionally warped by a plane-local
/// displacement frame (three axial-major rasters) [m].
pub fn synthesize_speckle(
    params: &SpeckleParams,
    geometry: &FrustumGeometry,
    plane: usize,
    displacement: Option<[&[f64]; 3]>,
) -> Vec<f64> {
    SpeckleScene::new(geometry, params).render(plane, displacement)
}

/// Time-major volumes, each holding one frame from every plane.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeSeries {
    /// Per volume, one volume per component with dims (axial, lateral, plane).
    pub volumes: Vec<Vec<Volume<f64>>>,
    /// Excitation phase of each volume as `t mod T0` [s].
    pub volume_timestamps: Vec<f64>,
    /// Acquisition time of plane 0's frame in each volume [s].
    pub frame_times: Vec<f64>,
    pub frame_ids: Vec<Vec<FrameId>>,
    pub geometry: FrustumGeometry,
    pub mode: AcquisitionMode,
    pub fundamental_period: f64,
}

impl VolumeSeries {
    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }

    pub fn grid(&self) -> FieldGrid {
        FieldGrid::Frustum(self.geometry)
    }

    /// Largest within-volume spread of `t mod T0` over the series [s].
    pub fn phase_spread(&self, record: &AcquisitionRecord) -> f64 {
        let t0 = self.fundamental_period;
        let mut worst: f64 = 0.0;
        for n in 0..self.len() {
            let t_ref = record.planes[0].timestamps[n];
            for stack in &record.planes {
                let d = (stack.timestamps[n] - t_ref).rem_euclid(t0);
                worst = worst.max(d.min(t0 - d));
            }
        }
        worst
    }
}

/// Regroup plane-major frames into phase-coherent volumes.
pub fn form_volumes(record: &AcquisitionRecord) -> Result<VolumeSeries> {
    let t0 = fundamental_period(&record.plan.frequencies)?;
    let n_planes = record.planes.len();
    if n_planes == 0 {
        return Err(Error::Contract("record has no planes".into()));
    }
    let n_frames = record.frames_per_plane();
    if record.planes.iter().any(|p| p.frames.len() != n_frames || p.timestamps.len() != n_frames) {
        return Err(Error::Contract("planes hold different frame counts".into()));
    }
    for n in 0..n_frames {
        let t_ref = record.planes[0].timestamps[n];
        for (p, stack) in record.planes.iter().enumerate().skip(1) {
            let d = (stack.timestamps[n] - t_ref).rem_euclid(t0);
            let residual = if d > 0.5 * t0 { d - t0 } else { d };
            if residual.abs() > PHASE_TOLERANCE {
                return Err(Error::Synchronization { plane: p, residual });
            }
        }
    }
    let g = &record.geometry;
    let dims = [g.n_axial, g.n_lateral, n_planes];
    let plane_len = g.plane_len();
    let comps = record.components();
    let mut volumes = Vec::with_capacity(n_frames);
    let mut frame_ids = Vec::with_capacity(n_frames);
    for n in 0..n_frames {
        let mut vol = Vec::with_capacity(comps);
        for c in 0..comps {
            let mut data = vec![0.0; plane_len * n_planes];
            for (p, stack) in record.planes.iter().enumerate() {
                let src = &stack.frames[n][c * plane_len..(c + 1) * plane_len];
                for (q, &v) in src.iter().enumerate() {
                    data[q * n_planes + p] = v;
                }
            }
            vol.push(Volume::from_vec(dims, data)?);
        }
        volumes.push(vol);
        frame_ids.push(record.planes.iter().map(|s| s.ids[n]).collect());
    }
    let frame_times: Vec<f64> = record.planes[0].timestamps.clone();
    Ok(VolumeSeries {
        volumes,
        volume_timestamps: frame_times.iter().map(|t| t.rem_euclid(t0)).collect(),
        frame_times,
        frame_ids,
        geometry: *g,
        mode: record.mode,
        fundamental_period: t0,
    })
}

/// Normalized cross-correlation of two equally sized images.
pub fn ncc(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x - ma, y - mb);
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    sab / (saa * sbb).sqrt().max(f64::MIN_POSITIVE)
}
