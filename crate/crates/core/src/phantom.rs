//! Voxelized tissue phantoms and the Voigt material law.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, Aabb, CartesianGrid, Point};
use crate::volume::{Volume, C64};

/// Linear viscoelastic (Kelvin-Voigt) material.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material {
    /// Shear modulus [Pa].
    pub mu: f64,
    /// Density [kg/m^3].
    pub rho: f64,
    /// Shear viscosity [Pa s].
    #[serde(default)]
    pub eta: f64,
}

impl Material {
    pub fn new(mu: f64, rho: f64, eta: f64) -> Self {
        Material { mu, rho, eta }
    }

    /// Material with shear modulus `E / 3`.
    pub fn from_youngs(youngs: f64, rho: f64, eta: f64) -> Self {
        Material { mu: youngs / 3.0, rho, eta }
    }

    pub fn youngs_modulus(&self) -> f64 {
        3.0 * self.mu
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Validation(format!("shear modulus must be positive, got {}", self.mu)));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Validation(format!("density must be positive, got {}", self.rho)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Validation(format!("viscosity must be non-negative, got {}", self.eta)));
        }
        Ok(())
    }

    /// Complex wavenumber `k* = w sqrt(rho / (mu + i w eta))`; the imaginary part is
    /// non-positive so that `exp(-i k* d)` decays along `d`.
    pub fn complex_wavenumber(&self, f: f64) -> C64 {
        let w = 2.0 * PI * f;
        let mu_star = C64::new(self.mu, w * self.eta);
        w * (C64::new(self.rho, 0.0) / mu_star).sqrt()
    }

    pub fn phase_speed(&self, f: f64) -> Result<f64> {
        shear_speed(self.mu, self.rho, self.eta, f)
    }
}

/// Shear-wave phase speed of a Voigt medium [m/s].
pub fn shear_speed(mu: f64, rho: f64, eta: f64, f: f64) -> Result<f64> {
    if !(mu > 0.0) || !(rho > 0.0) || !(f > 0.0) {
        return Err(Error::Domain(format!(
            "shear speed needs mu, rho, f > 0 (got mu={mu}, rho={rho}, f={f})"
        )));
    }
    if !(eta >= 0.0) {
        return Err(Error::Domain(format!("viscosity must be non-negative, got {eta}")));
    }
    if eta == 0.0 {
        return Ok((mu / rho).sqrt());
    }
    let w = 2.0 * PI * f;
    let m = (mu * mu + w * w * eta * eta).sqrt();
    Ok((2.0 * m * m / (rho * (mu + m))).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    /// Everything not claimed by another region.
    Background,
    /// Points with `(x - point) . normal >= 0`.
    HalfSpace { point: Point, normal: Point },
    /// Points with `min <= x[axis] < max`.
    Slab { axis: usize, min: f64, max: f64 },
    Sphere { center: Point, radius: f64 },
    Box { min: Point, max: Point },
}

impl Shape {
    pub fn contains(&self, x: Point) -> bool {
        match self {
            Shape::Background => true,
            Shape::HalfSpace { point, normal } => {
                dot([x[0] - point[0], x[1] - point[1], x[2] - point[2]], *normal) >= 0.0
            }
            Shape::Slab { axis, min, max } => x[*axis] >= *min && x[*axis] < *max,
            Shape::Sphere { center, radius } => {
                let d = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
                dot(d, d) <= radius * radius
            }
            Shape::Box { min, max } => (0..3).all(|a| x[a] >= min[a] && x[a] <= max[a]),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Shape::HalfSpace { normal, .. } if dot(*normal, *normal) == 0.0 => {
                Err(Error::Validation("half-space normal must be nonzero".into()))
            }
            Shape::Slab { axis, min, max } if *axis > 2 || !(max > min) => Err(Error::Validation(
                format!("slab needs axis in 0..3 and max > min (axis={axis}, {min}..{max})"),
            )),
            Shape::Sphere { radius, .. } if !(*radius > 0.0) => {
                Err(Error::Validation("sphere radius must be positive".into()))
            }
            Shape::Box { min, max } if (0..3).any(|a| !(max[a] >= min[a])) => {
                Err(Error::Validation("box max must not be below min".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub id: String,
    pub shape: Shape,
    pub material: Material,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    /// Voxel pitch [m].
    pub spacing: f64,
    /// Position of voxel (0, 0, 0) [m].
    pub origin: Point,
    pub regions: Vec<RegionSpec>,
}

impl PhantomSpec {
    /// Cube of `extent` metres with its top face centred on the origin, made of one material.
    pub fn homogeneous(extent: f64, spacing: f64, material: Material) -> Self {
        let n = (extent / spacing).round() as usize + 1;
        PhantomSpec {
            dims: [n; 3],
            spacing,
            origin: [0.0, -0.5 * extent, -0.5 * extent],
            regions: vec![RegionSpec {
                id: "background".into(),
                shape: Shape::Background,
                material,
            }],
        }
    }
}

/// Region layout without the voxel maps; enough to classify arbitrary points.
#[derive(Clone, Debug, PartialEq)]
pub struct Medium {
    regions: Vec<RegionSpec>,
    background: Option<usize>,
    bounds: Aabb,
}

impl Medium {
    pub fn regions(&self) -> &[RegionSpec] {
        &self.regions
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    /// Index of the region owning `x`; `None` if no region covers it.
    pub fn region_at(&self, x: Point) -> Option<usize> {
        self.regions
            .iter()
            .enumerate()
            .find(|(i, r)| Some(*i) != self.background && r.shape.contains(x))
            .map(|(i, _)| i)
            .or(self.background)
    }

    /// Conflicting non-background regions covering `x`, if any.
    fn conflict_at(&self, x: Point) -> Option<(usize, usize)> {
        let mut first: Option<usize> = None;
        for (i, r) in self.regions.iter().enumerate() {
            if Some(i) == self.background || !r.shape.contains(x) {
                continue;
            }
            match first {
                None => first = Some(i),
                Some(f) if self.regions[f].material != r.material => return Some((f, i)),
                _ => {}
            }
        }
        None
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElasticityPhantom {
    pub grid: CartesianGrid,
    pub mu: Volume<f64>,
    pub rho: Volume<f64>,
    pub eta: Volume<f64>,
    pub labels: Volume<u16>,
    medium: Medium,
}

impl ElasticityPhantom {
    pub fn medium(&self) -> &Medium {
        &self.medium
    }

    pub fn regions(&self) -> &[RegionSpec] {
        &self.medium.regions
    }

    pub fn bounds(&self) -> Aabb {
        self.grid.bounds()
    }

    /// Ground-truth Young's modulus `E = 3 mu` per voxel.
    pub fn youngs_modulus(&self) -> Volume<f64> {
        self.mu.map(|m| 3.0 * m)
    }

    /// Voxel count per region, in region order.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.medium.regions.len()];
        for &l in self.labels.iter() {
            counts[l as usize] += 1;
        }
        counts
    }

    /// The single material when every voxel shares one, otherwise `None`.
    pub fn homogeneous_material(&self) -> Option<Material> {
        let counts = self.label_counts();
        let used: Vec<_> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, _)| self.medium.regions[i].material)
            .collect();
        let first = *used.first()?;
        used.iter().all(|m| *m == first).then_some(first)
    }
}

/// Voxelize a region specification.
pub fn build_phantom(spec: &PhantomSpec) -> Result<ElasticityPhantom> {
    let grid = CartesianGrid::isotropic(spec.dims, spec.spacing, spec.origin)
        .map_err(|e| Error::Validation(e.to_string()))?;
    if spec.regions.is_empty() {
        return Err(Error::Validation("phantom needs at least one region".into()));
    }
    if spec.regions.len() > u16::MAX as usize {
        return Err(Error::Validation("too many regions".into()));
    }
    let mut background = None;
    for (i, r) in spec.regions.iter().enumerate() {
        r.material
            .validate()
            .map_err(|e| Error::Validation(format!("region `{}`: {e}", r.id)))?;
        r.shape.validate()?;
        if r.shape == Shape::Background {
            if background.is_some() {
                return Err(Error::Validation("more than one background region".into()));
            }
            background = Some(i);
        }
    }
    let medium = Medium {
        regions: spec.regions.clone(),
        background,
        bounds: grid.bounds(),
    };

    let dims = spec.dims;
    let mut labels = Volume::filled(dims, 0u16);
    let mut covered = vec![0usize; spec.regions.len()];
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let x = grid.point(i, j, k);
                if let Some((a, b)) = medium.conflict_at(x) {
                    return Err(Error::RegionConflict {
                        first: spec.regions[a].id.clone(),
                        second: spec.regions[b].id.clone(),
                    });
                }
                let r = medium.region_at(x).ok_or_else(|| {
                    Error::Validation(format!(
                        "voxel ({i}, {j}, {k}) is not covered by any region"
                    ))
                })?;
                labels[[i, j, k]] = r as u16;
                covered[r] += 1;
            }
        }
    }
    for (r, &c) in spec.regions.iter().zip(&covered) {
        if c == 0 && r.shape != Shape::Background && !any_voxel_inside(&r.shape, &grid) {
            return Err(Error::Validation(format!("region `{}` lies outside the grid", r.id)));
        }
    }

    let mat = |f: fn(&Material) -> f64| labels.map(|&l| f(&spec.regions[l as usize].material));
    Ok(ElasticityPhantom {
        grid,
        mu: mat(|m| m.mu),
        rho: mat(|m| m.rho),
        eta: mat(|m| m.eta),
        labels,
        medium,
    })
}

fn any_voxel_inside(shape: &Shape, grid: &CartesianGrid) -> bool {
    let d = grid.dims;
    (0..d[0]).any(|i| (0..d[1]).any(|j| (0..d[2]).any(|k| shape.contains(grid.point(i, j, k)))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homogeneous_phantom_has_one_label() {
        let spec = PhantomSpec::homogeneous(0.01, 0.001, Material::from_youngs(6200.0, 1000.0, 0.0));
        let p = build_phantom(&spec).unwrap();
        assert_eq!(p.label_counts(), vec![11 * 11 * 11]);
        assert!((p.mu[[3, 4, 5]] - 2066.666_666_666_7).abs() < 1e-9);
        assert_eq!(p.homogeneous_material().unwrap().mu, 6200.0 / 3.0);
    }

    #[test]
    fn zero_modulus_is_rejected() {
        let spec = PhantomSpec::homogeneous(0.01, 0.001, Material::from_youngs(0.0, 1000.0, 0.0));
        assert!(matches!(build_phantom(&spec), Err(Error::Validation(_))));
    }

    #[test]
    fn conflicting_inclusions_name_both_regions() {
        let mut spec = PhantomSpec::homogeneous(0.01, 0.001, Material::new(1000.0, 1000.0, 0.0));
        for (id, mu) in [("a", 2000.0), ("b", 3000.0)] {
            spec.regions.push(RegionSpec {
                id: id.into(),
                shape: Shape::Sphere { center: [0.005, 0.0, 0.0], radius: 0.002 },
                material: Material::new(mu, 1000.0, 0.0),
            });
        }
        match build_phantom(&spec) {
            Err(Error::RegionConflict { first, second }) => {
                assert_eq!((first.as_str(), second.as_str()), ("a", "b"));
            }
            other => panic!("expected conflict, got {other:?}"),
        }
    }

    #[test]
    fn region_outside_grid_is_rejected() {
        let mut spec = PhantomSpec::homogeneous(0.01, 0.001, Material::new(1000.0, 1000.0, 0.0));
        spec.regions.push(RegionSpec {
            id: "far".into(),
            shape: Shape::Sphere { center: [1.0, 1.0, 1.0], radius: 0.001 },
            material: Material::new(2000.0, 1000.0, 0.0),
        });
        assert!(matches!(build_phantom(&spec), Err(Error::Validation(_))));
    }

    #[test]
    fn viscous_wavenumber_matches_phase_speed() {
        let m = Material::new(2066.7, 1000.0, 2.0);
        for f in [40.0, 100.0, 200.0] {
            let k = m.complex_wavenumber(f);
            assert!(k.im < 0.0);
            let c = 2.0 * PI * f / k.re;
            assert!((c - m.phase_speed(f).unwrap()).abs() < 1e-12 * c);
        }
    }
}
