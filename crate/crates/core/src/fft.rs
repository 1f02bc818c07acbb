//! Separable 3D FFT on row-major complex volumes.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::exec::{self, Execution};
use crate::volume::C64;

/// Forward and inverse plans for one volume shape.
pub struct Fft3 {
    dims: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = dims.map(|n| planner.plan_fft_forward(n));
        let inverse = dims.map(|n| planner.plan_fft_inverse(n));
        Fft3 { dims, forward, inverse }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, data: &mut [C64], exec: Execution) {
        assert_eq!(data.len(), self.len());
        for axis in 0..3 {
            transform_axis(&self.forward[axis], data, self.dims, axis, exec);
        }
    }

    /// Inverse transform scaled by `1 / N`.
    pub fn inverse(&self, data: &mut [C64], exec: Execution) {
        assert_eq!(data.len(), self.len());
        for axis in 0..3 {
            transform_axis(&self.inverse[axis], data, self.dims, axis, exec);
        }
        let scale = 1.0 / self.len() as f64;
        exec::for_each_chunk_mut(exec, data, 1 << 16, |_, c| {
            for v in c {
                *v *= scale;
            }
        });
    }
}

fn transform_axis(
    fft: &Arc<dyn Fft<f64>>,
    data: &mut [C64],
    dims: [usize; 3],
    axis: usize,
    exec: Execution,
) {
    let n = dims[axis];
    if n <= 1 {
        return;
    }
    let [_, n1, n2] = dims;
    match axis {
        2 => exec::for_each_chunk_mut(exec, data, n1 * n2, |_, slab| {
            let mut scratch = vec![C64::default(); fft.get_inplace_scratch_len()];
            fft.process_with_scratch(slab, &mut scratch);
        }),
        1 => exec::for_each_chunk_mut(exec, data, n1 * n2, |_, slab| {
            let mut lines = vec![C64::default(); n1 * n2];
            for j in 0..n1 {
                for k in 0..n2 {
                    lines[k * n1 + j] = slab[j * n2 + k];
                }
            }
            let mut scratch = vec![C64::default(); fft.get_inplace_scratch_len()];
            fft.process_with_scratch(&mut lines, &mut scratch);
            for j in 0..n1 {
                for k in 0..n2 {
                    slab[j * n2 + k] = lines[k * n1 + j];
                }
            }
        }),
        _ => {
            // Lines along the slowest axis: gather one block of (j, k) columns at a time.
            let n0 = dims[0];
            let plane = n1 * n2;
            let mut lines = vec![C64::default(); data.len()];
            let src: &[C64] = data;
            exec::for_each_chunk_mut(exec, &mut lines, n0 * n2, |j, block| {
                for k in 0..n2 {
                    for i in 0..n0 {
                        block[k * n0 + i] = src[i * plane + j * n2 + k];
                    }
                }
                let mut scratch = vec![C64::default(); fft.get_inplace_scratch_len()];
                fft.process_with_scratch(block, &mut scratch);
            });
            exec::for_each_chunk_mut(exec, data, plane, |i, slab| {
                for j in 0..n1 {
                    let block = &lines[j * n0 * n2..(j + 1) * n0 * n2];
                    for k in 0..n2 {
                        slab[j * n2 + k] = block[k * n0 + i];
                    }
                }
            });
        }
    }
}

/// Signed FFT sample frequencies in cycles per unit length for spacing `h`.
pub fn fftfreq(n: usize, h: f64) -> Vec<f64> {
    (0..n)
        .map(|m| {
            let s = if m <= (n - 1) / 2 { m as f64 } else { m as f64 - n as f64 };
            s / (n as f64 * h)
        })
        .collect()
}
