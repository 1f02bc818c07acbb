//! Sampling geometries: uniform Cartesian grids and the swept-plane frustum.
//!
//! Global axes are x = axial (depth, increasing away from the probe),
//! y = lateral, z = elevational.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Point, b: Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: Point) -> Option<Point> {
    let n = norm(a);
    (n > 0.0 && n.is_finite()).then(|| [a[0] / n, a[1] / n, a[2] / n])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] - tol && p[a] <= self.max[a] + tol)
    }

    pub fn contains_box(&self, other: &Aabb, tol: f64) -> bool {
        self.contains(other.min, tol) && self.contains(other.max, tol)
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= other.max[a] && other.min[a] <= self.max[a])
    }

    pub fn center(&self) -> Point {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        ]
    }

    pub fn extent(&self) -> Point {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    /// Axis-aligned box with the given center and edge lengths.
    pub fn centered(center: Point, size: Point) -> Self {
        Aabb {
            min: [
                center[0] - 0.5 * size[0],
                center[1] - 0.5 * size[1],
                center[2] - 0.5 * size[2],
            ],
            max: [
                center[0] + 0.5 * size[0],
                center[1] + 0.5 * size[1],
                center[2] + 0.5 * size[2],
            ],
        }
    }
}

/// Node-centered uniform grid: sample `(i, j, k)` sits at `origin + (i, j, k) * spacing`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CartesianGrid {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: Point,
}

impl CartesianGrid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: Point) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Parameter(format!("grid dims must be positive, got {dims:?}")));
        }
        if spacing.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::Parameter(format!(
                "grid spacing must be positive, got {spacing:?}"
            )));
        }
        Ok(CartesianGrid { dims, spacing, origin })
    }

    pub fn isotropic(dims: [usize; 3], spacing: f64, origin: Point) -> Result<Self> {
        Self::new(dims, [spacing; 3], origin)
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize, k: usize) -> Point {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_isotropic(&self) -> bool {
        let h = self.spacing[0];
        self.spacing.iter().all(|&s| (s - h).abs() <= 1e-12 * h)
    }

    pub fn bounds(&self) -> Aabb {
        Aabb {
            min: self.origin,
            max: self.point(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1),
        }
    }

    /// All sample positions in storage order.
    pub fn points(&self) -> Vec<Point> {
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.dims[0] {
            for j in 0..self.dims[1] {
                for k in 0..self.dims[2] {
                    out.push(self.point(i, j, k));
                }
            }
        }
        out
    }
}

/// A fan of imaging planes swept about a lateral rotation axis.
///
/// Each plane is an axial x lateral raster. Plane `p` is tilted by
/// `(p - (n_planes - 1) / 2) * plane_angle_step` about an axis parallel to the
/// lateral direction, placed `sweep_radius` behind the probe face, so the
/// fan is symmetric about the probe axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrustumGeometry {
    pub axial_pitch: f64,
    pub lateral_pitch: f64,
    pub plane_angle_step_deg: f64,
    pub n_axial: usize,
    pub n_lateral: usize,
    pub n_planes: usize,
    /// Depth of the first axial sample below the probe face [m].
    pub depth_start: f64,
    /// Distance from the rotation axis to the probe face [m].
    pub sweep_radius: f64,
    /// Global position of the probe face center.
    pub probe_origin: Point,
}

impl Default for FrustumGeometry {
    fn default() -> Self {
        FrustumGeometry {
            axial_pitch: 0.15e-3,
            lateral_pitch: 0.48e-3,
            plane_angle_step_deg: 0.45,
            n_axial: 667,
            n_lateral: 80,
            n_planes: 10,
            depth_start: 0.0,
            sweep_radius: 0.02,
            probe_origin: [0.0, 0.0, 0.0],
        }
    }
}

impl FrustumGeometry {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("axial_pitch", self.axial_pitch),
            ("lateral_pitch", self.lateral_pitch),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_axial == 0 || self.n_lateral == 0 || self.n_planes == 0 {
            return Err(Error::Parameter("frustum raster must be non-empty".into()));
        }
        if self.n_planes > 1 && !(self.plane_angle_step_deg > 0.0) {
            return Err(Error::Parameter("plane angle step must be positive".into()));
        }
        if self.depth_start < 0.0 || self.sweep_radius < 0.0 {
            return Err(Error::Parameter(
                "depth_start and sweep_radius must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn plane_dims(&self) -> [usize; 2] {
        [self.n_axial, self.n_lateral]
    }

    /// Volume dims as (axial, lateral, plane).
    pub fn dims(&self) -> [usize; 3] {
        [self.n_axial, self.n_lateral, self.n_planes]
    }

    pub fn plane_len(&self) -> usize {
        self.n_axial * self.n_lateral
    }

    /// Motor angle of plane `p` in degrees, counted from the first plane.
    pub fn plane_angle_deg(&self, p: usize) -> f64 {
        p as f64 * self.plane_angle_step_deg
    }

    /// Physical tilt of plane `p` relative to the probe axis [rad].
    pub fn plane_tilt(&self, p: f64) -> f64 {
        (p - 0.5 * (self.n_planes as f64 - 1.0)) * self.plane_angle_step_deg.to_radians()
    }

    #[inline]
    pub fn depth(&self, i: f64) -> f64 {
        self.depth_start + i * self.axial_pitch
    }

    #[inline]
    pub fn lateral(&self, j: f64) -> f64 {
        (j - 0.5 * (self.n_lateral as f64 - 1.0)) * self.lateral_pitch
    }

    /// Global position of raster sample `(i, j)` on plane `p`.
    pub fn point(&self, i: usize, j: usize, p: usize) -> Point {
        self.point_frac(i as f64, j as f64, p as f64)
    }

    pub fn point_frac(&self, i: f64, j: f64, p: f64) -> Point {
        let theta = self.plane_tilt(p);
        let r = self.sweep_radius + self.depth(i);
        [
            self.probe_origin[0] + r * theta.cos() - self.sweep_radius,
            self.probe_origin[1] + self.lateral(j),
            self.probe_origin[2] + r * theta.sin(),
        ]
    }

    /// Plane-local unit vectors (axial, lateral, elevational) in global coordinates.
    pub fn plane_basis(&self, p: usize) -> [Point; 3] {
        let theta = self.plane_tilt(p as f64);
        let (s, c) = theta.sin_cos();
        [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
    }

    /// Fractional raster coordinates `(i, j, p)` of a global point.
    pub fn locate(&self, x: Point) -> [f64; 3] {
        let dx = x[0] - self.probe_origin[0] + self.sweep_radius;
        let dz = x[2] - self.probe_origin[2];
        let r = (dx * dx + dz * dz).sqrt();
        let theta = dz.atan2(dx);
        let i = (r - self.sweep_radius - self.depth_start) / self.axial_pitch;
        let j = (x[1] - self.probe_origin[1]) / self.lateral_pitch
            + 0.5 * (self.n_lateral as f64 - 1.0);
        let step = self.plane_angle_step_deg.to_radians();
        let p = if self.n_planes > 1 {
            theta / step + 0.5 * (self.n_planes as f64 - 1.0)
        } else {
            0.0
        };
        [i, j, p]
    }

    /// True when the point lies inside the sampled hull (with fractional tolerance `tol`).
    pub fn contains(&self, x: Point, tol: f64) -> bool {
        let [i, j, p] = self.locate(x);
        let inside = |v: f64, n: usize| v >= -tol && v <= (n as f64 - 1.0) + tol;
        let p_ok = if self.n_planes > 1 {
            inside(p, self.n_planes)
        } else {
            let dz = x[2] - self.probe_origin[2];
            dz.abs() <= 1e-12
        };
        inside(i, self.n_axial) && inside(j, self.n_lateral) && p_ok
    }

    /// Arc length between neighbouring planes at raster depth index `i` [m].
    pub fn elevational_spacing(&self, i: f64) -> f64 {
        (self.sweep_radius + self.depth(i)) * self.plane_angle_step_deg.to_radians()
    }

    /// Axis-aligned bounding box of every sample.
    pub fn bounds(&self) -> Aabb {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        let corners_i = [0, self.n_axial - 1];
        let corners_j = [0, self.n_lateral - 1];
        for p in 0..self.n_planes {
            for &i in &corners_i {
                for &j in &corners_j {
                    let q = self.point(i, j, p);
                    for a in 0..3 {
                        min[a] = min[a].min(q[a]);
                        max[a] = max[a].max(q[a]);
                    }
                }
            }
        }
        Aabb { min, max }
    }

    /// Sample positions of plane `p` in raster order (axial-major).
    pub fn plane_points(&self, p: usize) -> Vec<Point> {
        let mut out = Vec::with_capacity(self.plane_len());
        for i in 0..self.n_axial {
            for j in 0..self.n_lateral {
                out.push(self.point(i, j, p));
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.n_axial * self.n_lateral * self.n_planes
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Where a field series is sampled, and in which component basis.
///
/// Cartesian samples carry global (x, y, z) components; frustum samples carry
/// plane-local (axial, lateral, elevational) components, stored with volume
/// dims `(axial, lateral, plane)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FieldGrid {
    Cartesian(CartesianGrid),
    Frustum(FrustumGeometry),
}

impl FieldGrid {
    pub fn dims(&self) -> [usize; 3] {
        match self {
            FieldGrid::Cartesian(g) => g.dims,
            FieldGrid::Frustum(f) => f.dims(),
        }
    }

    pub fn len(&self) -> usize {
        let d = self.dims();
        d[0] * d[1] * d[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bounds(&self) -> Aabb {
        match self {
            FieldGrid::Cartesian(g) => g.bounds(),
            FieldGrid::Frustum(f) => f.bounds(),
        }
    }

    /// Position of storage index `(a, b, c)`.
    pub fn point(&self, a: usize, b: usize, c: usize) -> Point {
        match self {
            FieldGrid::Cartesian(g) => g.point(a, b, c),
            FieldGrid::Frustum(f) => f.point(a, b, c),
        }
    }

    /// Component basis at storage index `(_, _, c)`; identity for Cartesian grids.
    pub fn basis(&self, c: usize) -> [Point; 3] {
        match self {
            FieldGrid::Cartesian(_) => [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            FieldGrid::Frustum(f) => f.plane_basis(c),
        }
    }

    pub fn points(&self) -> Vec<Point> {
        let [n0, n1, n2] = self.dims();
        let mut out = Vec::with_capacity(n0 * n1 * n2);
        for a in 0..n0 {
            for b in 0..n1 {
                for c in 0..n2 {
                    out.push(self.point(a, b, c));
                }
            }
        }
        out
    }
}

/// Express a global vector in the given orthonormal basis.
#[inline]
pub fn to_basis(v: Point, basis: &[Point; 3]) -> Point {
    [dot(v, basis[0]), dot(v, basis[1]), dot(v, basis[2])]
}

/// Rebuild a global vector from components in the given basis.
#[inline]
pub fn from_basis(c: Point, basis: &[Point; 3]) -> Point {
    [
        c[0] * basis[0][0] + c[1] * basis[1][0] + c[2] * basis[2][0],
        c[0] * basis[0][1] + c[1] * basis[1][1] + c[2] * basis[2][1],
        c[0] * basis[0][2] + c[1] * basis[1][2] + c[2] * basis[2][2],
    ]
}
