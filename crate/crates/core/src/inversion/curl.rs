use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CartesianGrid;
use crate::volume::{Volume, C64};

use super::scan::CartesianPhasorSet;
use super::WaveImage;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurlMode {
    None,
    Curl2d,
    #[default]
    Curl3d,
}

impl CurlMode {
    pub const ALL: [CurlMode; 3] = [CurlMode::None, CurlMode::Curl2d, CurlMode::Curl3d];

    pub fn name(self) -> &'static str {
        match self {
            CurlMode::None => "none",
            CurlMode::Curl2d => "curl2d",
            CurlMode::Curl3d => "curl3d",
        }
    }
}

impl std::str::FromStr for CurlMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "no-curl" => Ok(CurlMode::None),
            "curl2d" => Ok(CurlMode::Curl2d),
            "curl3d" => Ok(CurlMode::Curl3d),
            other => Err(Error::Config(format!("unknown curl mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurlSet {
    pub mode: CurlMode,
    pub frequencies: Vec<f64>,
    /// Per frequency: (x, y, z) components for curl3d, the z component alone for curl2d.
    pub components: Vec<Vec<Volume<C64>>>,
    pub grid: CartesianGrid,
    pub mask: Volume<bool>,
    /// Voxels where at least one derivative fell back to a one-sided difference.
    pub boundary: Volume<bool>,
}

impl CurlSet {
    pub fn wave_image(&self, f: usize) -> WaveImage<'_> {
        WaveImage {
            grid: self.grid,
            mask: &self.mask,
            channels: self.components[f].iter().collect(),
            reduced: Some(&self.boundary),
        }
    }
}

/// Mask-aware first derivative along `axis`.
struct Deriv<'a> {
    mask: &'a Volume<bool>,
    h: f64,
}

impl Deriv<'_> {
    fn valid(&self, p: [isize; 3]) -> bool {
        let d = self.mask.dims();
        (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < d[a])
            && self.mask[[p[0] as usize, p[1] as usize, p[2] as usize]]
    }

    /// Returns the derivative and whether a one-sided stencil was needed.
    fn at(&self, f: &Volume<C64>, v: [usize; 3], axis: usize) -> (C64, bool) {
        let c = v.map(|x| x as isize);
        let mut lo = c;
        lo[axis] -= 1;
        let mut hi = c;
        hi[axis] += 1;
        let get = |p: [isize; 3]| f[[p[0] as usize, p[1] as usize, p[2] as usize]];
        match (self.valid(lo), self.valid(hi)) {
            (true, true) => ((get(hi) - get(lo)) / (2.0 * self.h), false),
            (false, true) => ((get(hi) - f[v]) / self.h, true),
            (true, false) => ((f[v] - get(lo)) / self.h, true),
            (false, false) => (C64::default(), true),
        }
    }
}

fn check_support(grid: &CartesianGrid, mask: &Volume<bool>) -> Result<()> {
    if !grid.is_isotropic() {
        return Err(Error::Geometry("curl needs isotropic spacing".into()));
    }
    let d = grid.dims;
    for axis in 0..3 {
        if d[axis] < 3 {
            return Err(Error::Geometry(format!(
                "axis {axis} has {} samples; the curl needs at least 3",
                d[axis]
            )));
        }
        // Longest run of valid samples along this axis.
        let mut best = 0usize;
        let (a1, a2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for u in 0..d[a1] {
            for w in 0..d[a2] {
                let mut run = 0usize;
                for t in 0..d[axis] {
                    let mut p = [0usize; 3];
                    p[axis] = t;
                    p[a1] = u;
                    p[a2] = w;
                    if mask[p] {
                        run += 1;
                        best = best.max(run);
                    } else {
                        run = 0;
                    }
                }
            }
        }
        if best < 3 {
            return Err(Error::Geometry(format!(
                "fewer than 3 valid samples along axis {axis}"
            )));
        }
    }
    Ok(())
}

fn curl_impl(cart: &CartesianPhasorSet, full: bool) -> Result<CurlSet> {
    check_support(&cart.grid, &cart.mask)?;
    let dims = cart.grid.dims;
    let d = Deriv { mask: &cart.mask, h: cart.grid.spacing[0] };
    let mut boundary = Volume::filled(dims, false);
    let mut components = Vec::with_capacity(cart.frequencies.len());
    for fc in &cart.components {
        let [fx, fy, fz] = fc;
        let mut cx = Volume::filled(dims, C64::default());
        let mut cy = Volume::filled(dims, C64::default());
        let mut cz = Volume::filled(dims, C64::default());
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let v = [i, j, k];
                    if !cart.mask[v] {
                        continue;
                    }
                    let (dyx, b1) = d.at(fy, v, 0);
                    let (dxy, b2) = d.at(fx, v, 1);
                    cz[v] = dyx - dxy;
                    let mut edge = b1 || b2;
                    if full {
                        let (dzy, b3) = d.at(fz, v, 1);
                        let (dyz, b4) = d.at(fy, v, 2);
                        let (dxz, b5) = d.at(fx, v, 2);
                        let (dzx, b6) = d.at(fz, v, 0);
                        cx[v] = dzy - dyz;
                        cy[v] = dxz - dzx;
                        edge |= b3 || b4 || b5 || b6;
                    }
                    if edge {
                        boundary[v] = true;
                    }
                }
            }
        }
        components.push(if full { vec![cx, cy, cz] } else { vec![cz] });
    }
    Ok(CurlSet {
        mode: if full { CurlMode::Curl3d } else { CurlMode::Curl2d },
        frequencies: cart.frequencies.clone(),
        components,
        grid: cart.grid,
        mask: cart.mask.clone(),
        boundary,
    })
}

/// All three components of the curl by central differences.
pub fn curl3d(cart: &CartesianPhasorSet) -> Result<CurlSet> {
    curl_impl(cart, true)
}

/// The elevational (z) component of the curl only.
pub fn curl2d(cart: &CartesianPhasorSet) -> Result<CurlSet> {
    curl_impl(cart, false)
}
