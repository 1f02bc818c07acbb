//! Dense 3D storage shared by every stage.
//!
//! Volumes are row-major with the last axis contiguous: index `(i, j, k)`
//! lives at `(i * ny + j) * nz + k`.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

#[derive(Clone, Debug, PartialEq)]
pub struct Volume<T> {
    dims: [usize; 3],
    data: Vec<T>,
}

/// Three-component vector field stored as one volume per component.
pub type VectorVolume<T> = [Volume<T>; 3];

impl<T: Clone> Volume<T> {
    pub fn filled(dims: [usize; 3], value: T) -> Self {
        Volume {
            dims,
            data: vec![value; dims[0] * dims[1] * dims[2]],
        }
    }
}

impl<T> Volume<T> {
    pub fn from_vec(dims: [usize; 3], data: Vec<T>) -> Result<Self> {
        if data.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::Contract(format!(
                "volume of shape {dims:?} needs {} values, got {}",
                dims[0] * dims[1] * dims[2],
                data.len()
            )));
        }
        Ok(Volume { dims, data })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    data.push(f(i, j, k));
                }
            }
        }
        Volume { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index_of(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    /// Inverse of [`Volume::index_of`].
    #[inline]
    pub fn coords_of(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.dims[2];
        let j = (idx / self.dims[2]) % self.dims[1];
        let i = idx / (self.dims[1] * self.dims[2]);
        [i, j, k]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Volume<U> {
        Volume {
            dims: self.dims,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }
}

impl<T> Index<[usize; 3]> for Volume<T> {
    type Output = T;

    #[inline]
    fn index(&self, [i, j, k]: [usize; 3]) -> &T {
        &self.data[(i * self.dims[1] + j) * self.dims[2] + k]
    }
}

impl<T> IndexMut<[usize; 3]> for Volume<T> {
    #[inline]
    fn index_mut(&mut self, [i, j, k]: [usize; 3]) -> &mut T {
        let idx = (i * self.dims[1] + j) * self.dims[2] + k;
        &mut self.data[idx]
    }
}

impl Volume<f64> {
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Volume<C64> {
    pub fn max_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

/// Zero-valued three-component field.
pub fn zero_vector<T: Clone + Default>(dims: [usize; 3]) -> VectorVolume<T> {
    [
        Volume::filled(dims, T::default()),
        Volume::filled(dims, T::default()),
        Volume::filled(dims, T::default()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let v = Volume::from_fn([3, 4, 5], |i, j, k| i * 100 + j * 10 + k);
        for idx in 0..v.len() {
            let [i, j, k] = v.coords_of(idx);
            assert_eq!(v.index_of(i, j, k), idx);
            assert_eq!(v[[i, j, k]], i * 100 + j * 10 + k);
        }
    }

    #[test]
    fn wrong_length_is_rejected() {
        assert!(Volume::from_vec([2, 2, 2], vec![0.0; 7]).is_err());
    }
}
