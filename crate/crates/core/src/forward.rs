//! Analytic steady-state displacement fields.
//!
//! Each homogeneous region carries its own damped shear plane wave launched
//! from the source plate; regions do not exchange energy. Optional
//! compressional contaminants are added as exact gradients of scalar
//! potentials.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::geometry::{cross, dot, normalize, to_basis, Aabb, FieldGrid, Point};
use crate::phantom::{ElasticityPhantom, Medium};
use crate::sequence;
use crate::volume::{Volume, VectorVolume, C64};

/// Planar vibration source: plate centre and unit propagation direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceGeometry {
    pub origin: Point,
    pub direction: Point,
}

impl SourceGeometry {
    /// Plate on the deep face of `bounds`, radiating toward the probe face with
    /// a tilt of `tilt_deg` toward +y.
    pub fn bottom_plate(bounds: &Aabb, tilt_deg: f64) -> Self {
        let c = bounds.center();
        let t = tilt_deg.to_radians();
        SourceGeometry {
            origin: [bounds.max[0], c[1], c[2]],
            direction: [-t.cos(), t.sin(), 0.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSpec {
    pub frequencies: Vec<f64>,
    /// Displacement amplitude per tone at the source [m].
    pub amplitudes: Vec<f64>,
    /// Initial phase per tone [rad].
    pub phases: Vec<f64>,
    pub source: SourceGeometry,
    /// Weights of the two transverse polarizations: the one in the plane spanned
    /// by the propagation direction and the axial axis, and the one orthogonal to it.
    pub direction_mix: [f64; 2],
}

impl ExcitationSpec {
    /// Equal-amplitude, zero-phase tones.
    pub fn tones(frequencies: &[f64], amplitude: f64, source: SourceGeometry) -> Self {
        ExcitationSpec {
            frequencies: frequencies.to_vec(),
            amplitudes: vec![amplitude; frequencies.len()],
            phases: vec![0.0; frequencies.len()],
            source,
            direction_mix: [0.6, 0.8],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.frequencies.len();
        if n == 0 {
            return Err(Error::Contract("excitation has no frequencies".into()));
        }
        if self.amplitudes.len() != n || self.phases.len() != n {
            return Err(Error::Validation(format!(
                "{n} frequencies but {} amplitudes and {} phases",
                self.amplitudes.len(),
                self.phases.len()
            )));
        }
        for (i, &f) in self.frequencies.iter().enumerate() {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::Validation(format!("frequency {f} Hz is not positive")));
            }
            if self.frequencies[..i].iter().any(|&g| (g - f).abs() < sequence::FREQUENCY_QUANTUM_HZ) {
                return Err(Error::Validation(format!("frequency {f} Hz is repeated")));
            }
        }
        if self.amplitudes.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(Error::Validation("amplitudes must be non-negative".into()));
        }
        sequence::fundamental_period(&self.frequencies)
            .map_err(|e| Error::Validation(e.to_string()))?;
        self.basis()?;
        Ok(())
    }

    /// Propagation direction and the two transverse polarization axes.
    pub fn basis(&self) -> Result<[Point; 3]> {
        let k = normalize(self.source.direction)
            .ok_or_else(|| Error::Validation("source direction must be nonzero".into()))?;
        let t1 = normalize(cross([0.0, 0.0, 1.0], k))
            .or_else(|| normalize(cross([1.0, 0.0, 0.0], k)))
            .expect("a unit vector is parallel to at most one axis");
        let t2 = cross(k, t1);
        Ok([k, t1, t2])
    }

    /// Unit polarization vector, orthogonal to the propagation direction.
    pub fn polarization(&self) -> Result<Point> {
        let [_, t1, t2] = self.basis()?;
        let [a, b] = self.direction_mix;
        let p = [a * t1[0] + b * t2[0], a * t1[1] + b * t2[1], a * t1[2] + b * t2[2]];
        normalize(p).ok_or_else(|| Error::Validation("direction_mix must not be all zero".into()))
    }
}

/// DC term plus one complex 3-vector per excitation frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct Harmonics {
    pub dc: [f64; 3],
    pub phasors: Vec<[C64; 3]>,
}

impl Harmonics {
    pub fn zero(n: usize) -> Self {
        Harmonics { dc: [0.0; 3], phasors: vec![[C64::default(); 3]; n] }
    }
}

/// A displacement field that is a finite sum of tones, evaluable anywhere.
pub trait HarmonicField: Send + Sync {
    fn frequencies(&self) -> &[f64];

    /// Region where the field is defined.
    fn bounds(&self) -> Aabb;

    fn harmonics(&self, x: Point) -> Harmonics;

    /// Displacement at `x` and time `t` with `u = dc + sum Re{F e^{i w t}}`.
    fn displacement(&self, x: Point, t: f64) -> [f64; 3] {
        let h = self.harmonics(x);
        let mut u = h.dc;
        for (f, ph) in self.frequencies().iter().zip(&h.phasors) {
            let e = C64::from_polar(1.0, 2.0 * PI * f * t);
            for a in 0..3 {
                u[a] += (ph[a] * e).re;
            }
        }
        u
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PotentialShape {
    /// `phi = |x - center|^2`; gradient `2 (x - center)`.
    Quadratic { center: Point },
    /// Travelling wave `phi ~ exp(-i k n.(x - origin))` normalized so that `|grad phi|` equals the amplitude.
    PlaneWave { direction: Point, speed: f64, origin: Point },
    /// Standing wave `phi = sin(kappa . x) / |kappa|`; gradient `kappa_hat cos(kappa . x)`.
    Sinusoid { wavevector: Point },
}

/// Scalar potential whose gradient contaminates the shear field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub shape: PotentialShape,
    /// Oscillation frequencies; empty for a static potential.
    #[serde(default)]
    pub frequencies: Vec<f64>,
}

impl PotentialSpec {
    pub fn validate(&self) -> Result<()> {
        match &self.shape {
            PotentialShape::PlaneWave { direction, speed, .. } => {
                if normalize(*direction).is_none() || !(*speed > 0.0) {
                    return Err(Error::Contract(
                        "plane-wave potential needs a nonzero direction and positive speed".into(),
                    ));
                }
                if self.frequencies.is_empty() {
                    return Err(Error::Contract("plane-wave potential needs frequencies".into()));
                }
            }
            PotentialShape::Sinusoid { wavevector } if normalize(*wavevector).is_none() => {
                return Err(Error::Contract("sinusoid potential needs a nonzero wavevector".into()));
            }
            _ => {}
        }
        if self.frequencies.iter().any(|f| !(*f > 0.0)) {
            return Err(Error::Contract("potential frequencies must be positive".into()));
        }
        Ok(())
    }

    /// Gradient phasor at frequency `f` (or the static gradient when `f` is `None`).
    pub fn gradient(&self, x: Point, amplitude: f64, f: Option<f64>) -> [C64; 3] {
        let real = |v: Point| v.map(|c| C64::new(c, 0.0));
        match &self.shape {
            PotentialShape::Quadratic { center } => real([
                2.0 * amplitude * (x[0] - center[0]),
                2.0 * amplitude * (x[1] - center[1]),
                2.0 * amplitude * (x[2] - center[2]),
            ]),
            PotentialShape::PlaneWave { direction, speed, origin } => {
                let n = normalize(*direction).unwrap_or([1.0, 0.0, 0.0]);
                let k = 2.0 * PI * f.unwrap_or(0.0) / speed;
                let d = dot(n, [x[0] - origin[0], x[1] - origin[1], x[2] - origin[2]]);
                let e = C64::from_polar(amplitude, -k * d);
                n.map(|c| e * c)
            }
            PotentialShape::Sinusoid { wavevector } => {
                let n = normalize(*wavevector).unwrap_or([1.0, 0.0, 0.0]);
                let c = amplitude * dot(*wavevector, x).cos();
                real(n.map(|v| v * c))
            }
        }
    }

    /// Gradient as harmonics on the frequency list `frequencies`.
    fn accumulate(&self, x: Point, amplitude: f64, frequencies: &[f64], h: &mut Harmonics) {
        if self.frequencies.is_empty() {
            let g = self.gradient(x, amplitude, None);
            for a in 0..3 {
                h.dc[a] += g[a].re;
            }
            return;
        }
        for &f in &self.frequencies {
            if let Some(i) = frequencies.iter().position(|&g| (g - f).abs() < 1e-9) {
                let g = self.gradient(x, amplitude, Some(f));
                for a in 0..3 {
                    h.phasors[i][a] += g[a];
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Contaminant {
    potential: PotentialSpec,
    amplitude: f64,
}

/// Shear plane waves through a piecewise-homogeneous medium.
#[derive(Clone, Debug)]
pub struct SteadyStateField {
    medium: Medium,
    excitation: ExcitationSpec,
    direction: Point,
    polarization: Point,
    /// Complex wavenumber per region and frequency.
    wavenumbers: Vec<Vec<C64>>,
    contaminants: Vec<Contaminant>,
}

impl SteadyStateField {
    pub fn new(phantom: &ElasticityPhantom, excitation: &ExcitationSpec) -> Result<Self> {
        excitation.validate()?;
        let [k, ..] = excitation.basis()?;
        let medium = phantom.medium().clone();
        let wavenumbers = medium
            .regions()
            .iter()
            .map(|r| excitation.frequencies.iter().map(|&f| r.material.complex_wavenumber(f)).collect())
            .collect();
        Ok(SteadyStateField {
            medium,
            excitation: excitation.clone(),
            direction: k,
            polarization: excitation.polarization()?,
            wavenumbers,
            contaminants: Vec::new(),
        })
    }

    pub fn excitation(&self) -> &ExcitationSpec {
        &self.excitation
    }

    /// Add `amplitude * grad(phi)`. Frequencies of the potential must be excitation frequencies.
    pub fn with_compressional(mut self, potential: &PotentialSpec, amplitude: f64) -> Result<Self> {
        if !(amplitude >= 0.0) {
            return Err(Error::Contract(format!("contaminant amplitude must be >= 0, got {amplitude}")));
        }
        potential.validate()?;
        for &f in &potential.frequencies {
            if !self.excitation.frequencies.iter().any(|&g| (g - f).abs() < 1e-9) {
                return Err(Error::Contract(format!(
                    "potential frequency {f} Hz is not an excitation frequency"
                )));
            }
        }
        if amplitude > 0.0 {
            self.contaminants.push(Contaminant { potential: potential.clone(), amplitude });
        }
        Ok(self)
    }

    /// Shear part only, as a phasor per frequency.
    pub fn shear_harmonics(&self, x: Point) -> Harmonics {
        let n = self.excitation.frequencies.len();
        let mut h = Harmonics::zero(n);
        let Some(region) = self.medium.region_at(x) else {
            return h;
        };
        let o = self.excitation.source.origin;
        let d = dot(self.direction, [x[0] - o[0], x[1] - o[1], x[2] - o[2]]);
        for (i, ph) in h.phasors.iter_mut().enumerate() {
            let k = self.wavenumbers[region][i];
            let a = C64::from_polar(self.excitation.amplitudes[i], self.excitation.phases[i]);
            let s = a * (-C64::i() * k * d).exp();
            *ph = self.polarization.map(|p| s * p);
        }
        h
    }
}

impl HarmonicField for SteadyStateField {
    fn frequencies(&self) -> &[f64] {
        &self.excitation.frequencies
    }

    fn bounds(&self) -> Aabb {
        self.medium.bounds()
    }

    fn harmonics(&self, x: Point) -> Harmonics {
        let mut h = self.shear_harmonics(x);
        for c in &self.contaminants {
            c.potential.accumulate(x, c.amplitude, &self.excitation.frequencies, &mut h);
        }
        h
    }
}

/// Time series of displacement volumes. On frustum grids the components are
/// plane-local (axial, lateral, elevational).
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementFieldSeries {
    pub frames: Vec<VectorVolume<f64>>,
    pub timestamps: Vec<f64>,
    pub grid: FieldGrid,
}

fn check_timestamps(timestamps: &[f64]) -> Result<()> {
    if timestamps.is_empty() {
        return Err(Error::Contract("no timestamps".into()));
    }
    if let Some(w) = timestamps.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::Contract(format!(
            "timestamps must be strictly ascending (index {} -> {})",
            w,
            w + 1
        )));
    }
    Ok(())
}

/// Per-voxel harmonics expressed in the grid's component basis.
pub fn sample_harmonics(field: &dyn HarmonicField, grid: &FieldGrid, exec: Execution) -> Vec<Harmonics> {
    let [n0, n1, n2] = grid.dims();
    let bases: Vec<[Point; 3]> = (0..n2).map(|c| grid.basis(c)).collect();
    let rows = exec::map_range(exec, n0, |a| {
        let mut row = Vec::with_capacity(n1 * n2);
        for b in 0..n1 {
            for c in 0..n2 {
                let mut h = field.harmonics(grid.point(a, b, c));
                let basis = &bases[c];
                h.dc = to_basis(h.dc, basis);
                for ph in &mut h.phasors {
                    *ph = rotate_complex(*ph, basis);
                }
                row.push(h);
            }
        }
        row
    });
    rows.into_iter().flatten().collect()
}

/// Express a complex global vector in the given basis.
pub fn rotate_complex(v: [C64; 3], basis: &[Point; 3]) -> [C64; 3] {
    basis.map(|e| v[0] * e[0] + v[1] * e[1] + v[2] * e[2])
}

/// Synthesize frames from per-voxel harmonics.
pub fn synthesize_frames(
    harmonics: &[Harmonics],
    frequencies: &[f64],
    dims: [usize; 3],
    timestamps: &[f64],
    exec: Execution,
) -> Vec<VectorVolume<f64>> {
    exec::map_range(exec, timestamps.len(), |n| {
        let t = timestamps[n];
        let rot: Vec<C64> = frequencies.iter().map(|f| C64::from_polar(1.0, 2.0 * PI * f * t)).collect();
        let mut comps = [
            Vec::with_capacity(harmonics.len()),
            Vec::with_capacity(harmonics.len()),
            Vec::with_capacity(harmonics.len()),
        ];
        for h in harmonics {
            let mut u = h.dc;
            for (ph, e) in h.phasors.iter().zip(&rot) {
                for a in 0..3 {
                    u[a] += ph[a].re * e.re - ph[a].im * e.im;
                }
            }
            for a in 0..3 {
                comps[a].push(u[a]);
            }
        }
        comps.map(|c| Volume::from_vec(dims, c).expect("length matches grid"))
    })
}

/// Sample any harmonic field on a grid at the given times.
pub fn sample_series(
    field: &dyn HarmonicField,
    grid: &FieldGrid,
    timestamps: &[f64],
    exec: Execution,
) -> Result<DisplacementFieldSeries> {
    check_timestamps(timestamps)?;
    if !field.bounds().contains_box(&grid.bounds(), 1e-9) {
        return Err(Error::Geometry("sampling grid extends outside the field".into()));
    }
    let harmonics = sample_harmonics(field, grid, exec);
    let frames = synthesize_frames(&harmonics, field.frequencies(), grid.dims(), timestamps, exec);
    Ok(DisplacementFieldSeries { frames, timestamps: timestamps.to_vec(), grid: *grid })
}

/// Steady-state shear field of `phantom` under `exc`, sampled on `grid`.
pub fn simulate_steady_state(
    phantom: &ElasticityPhantom,
    exc: &ExcitationSpec,
    timestamps: &[f64],
    grid: &FieldGrid,
    exec: Execution,
) -> Result<DisplacementFieldSeries> {
    if exc.frequencies.is_empty() {
        return Err(Error::Contract("excitation has no frequencies".into()));
    }
    check_timestamps(timestamps)?;
    let field = SteadyStateField::new(phantom, exc)?;
    sample_series(&field, grid, timestamps, exec)
}

/// Return `field + amplitude * grad(phi)` with the gradient evaluated analytically.
pub fn add_compressional_component(
    mut field: DisplacementFieldSeries,
    potential: &PotentialSpec,
    amplitude: f64,
    exec: Execution,
) -> Result<DisplacementFieldSeries> {
    if !(amplitude >= 0.0) {
        return Err(Error::Contract(format!("contaminant amplitude must be >= 0, got {amplitude}")));
    }
    if amplitude == 0.0 {
        return Ok(field);
    }
    potential.validate()?;
    let grid = field.grid;
    let freqs = potential.frequencies.clone();
    let mut harmonics: Vec<Harmonics> = Vec::with_capacity(grid.len());
    let [n0, n1, n2] = grid.dims();
    let rows = exec::map_range(exec, n0, |a| {
        let mut row = Vec::with_capacity(n1 * n2);
        for b in 0..n1 {
            for c in 0..n2 {
                let x = grid.point(a, b, c);
                let basis = grid.basis(c);
                let mut h = Harmonics::zero(freqs.len());
                potential.accumulate(x, amplitude, &freqs, &mut h);
                h.dc = to_basis(h.dc, &basis);
                for ph in &mut h.phasors {
                    *ph = rotate_complex(*ph, &basis);
                }
                row.push(h);
            }
        }
        row
    });
    harmonics.extend(rows.into_iter().flatten());
    let added = synthesize_frames(&harmonics, &freqs, grid.dims(), &field.timestamps, exec);
    for (frame, extra) in field.frames.iter_mut().zip(added) {
        for a in 0..3 {
            for (u, e) in frame[a].as_mut_slice().iter_mut().zip(extra[a].as_slice()) {
                *u += e;
            }
        }
    }
    Ok(field)
}
