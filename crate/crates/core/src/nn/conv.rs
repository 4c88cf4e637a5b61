//! Convolution geometry for 1-D and 3-D grids, expressed as gather and
//! scatter index maps over `[channels, voxels]` activations.

use std::sync::Arc;

use super::tape::{IndexMap, Tape, Var};
use crate::scalar::Scalar;

pub fn conv_out_len(n: usize, k: usize, stride: usize, pad: usize) -> usize {
    (n + 2 * pad - k) / stride + 1
}

pub fn conv_transpose_out_len(n: usize, k: usize, stride: usize, pad: usize, out_pad: usize) -> usize {
    (n - 1) * stride + k + out_pad - 2 * pad
}

fn unravel(mut i: usize, dims: &[usize], out: &mut [usize]) {
    for d in (0..dims.len()).rev() {
        out[d] = i % dims[d];
        i /= dims[d];
    }
}

fn ravel(idx: &[usize], dims: &[usize]) -> usize {
    idx.iter().zip(dims).fold(0, |acc, (i, d)| acc * d + i)
}

/// Spatial shape plus kernel settings of one layer.
#[derive(Debug, Clone)]
pub struct ConvShape {
    pub in_dims: Vec<usize>,
    pub out_dims: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvShape {
    pub fn kernel_volume(&self) -> usize {
        self.kernel.pow(self.in_dims.len() as u32)
    }
    pub fn in_len(&self) -> usize {
        self.in_dims.iter().product()
    }
    pub fn out_len(&self) -> usize {
        self.out_dims.iter().product()
    }
}

/// im2col: `[cin, nin]` → `[cin·K, nout]`.
pub fn im2col_map(cin: usize, shape: &ConvShape) -> IndexMap {
    let kv = shape.kernel_volume();
    let (nin, nout) = (shape.in_len(), shape.out_len());
    let nd = shape.in_dims.len();
    let kdims = vec![shape.kernel; nd];
    let mut map = vec![IndexMap::NONE; cin * kv * nout];
    let (mut o, mut k, mut src) = (vec![0; nd], vec![0; nd], vec![0; nd]);
    for oi in 0..nout {
        unravel(oi, &shape.out_dims, &mut o);
        for ki in 0..kv {
            unravel(ki, &kdims, &mut k);
            let mut inside = true;
            for d in 0..nd {
                let p = (o[d] * shape.stride + k[d]) as isize - shape.pad as isize;
                if p < 0 || p >= shape.in_dims[d] as isize {
                    inside = false;
                    break;
                }
                src[d] = p as usize;
            }
            if !inside {
                continue;
            }
            let s = ravel(&src, &shape.in_dims);
            for c in 0..cin {
                map[(c * kv + ki) * nout + oi] = (c * nin + s) as u32;
            }
        }
    }
    IndexMap { map, out_shape: (cin * kv, nout) }
}

/// col2im for transposed convolution: `[cout·K, nin]` → `[cout, nout]`.
pub fn col2im_map(cout: usize, shape: &ConvShape) -> IndexMap {
    let kv = shape.kernel_volume();
    let (nin, nout) = (shape.in_len(), shape.out_len());
    let nd = shape.in_dims.len();
    let kdims = vec![shape.kernel; nd];
    let mut map = vec![IndexMap::NONE; cout * kv * nin];
    let (mut i, mut k, mut dst) = (vec![0; nd], vec![0; nd], vec![0; nd]);
    for ii in 0..nin {
        unravel(ii, &shape.in_dims, &mut i);
        for ki in 0..kv {
            unravel(ki, &kdims, &mut k);
            let mut inside = true;
            for d in 0..nd {
                let p = (i[d] * shape.stride + k[d]) as isize - shape.pad as isize;
                if p < 0 || p >= shape.out_dims[d] as isize {
                    inside = false;
                    break;
                }
                dst[d] = p as usize;
            }
            if !inside {
                continue;
            }
            let t = ravel(&dst, &shape.out_dims);
            for c in 0..cout {
                map[(c * kv + ki) * nin + ii] = (c * nout + t) as u32;
            }
        }
    }
    IndexMap { map, out_shape: (cout, nout) }
}

/// Strided convolution layer with cached geometry.
#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub cin: usize,
    pub cout: usize,
    pub shape: ConvShape,
    map: Arc<IndexMap>,
}

impl ConvLayer {
    pub fn new(cin: usize, cout: usize, in_dims: &[usize], kernel: usize, stride: usize, pad: usize) -> Self {
        let out_dims = in_dims.iter().map(|&n| conv_out_len(n, kernel, stride, pad)).collect();
        let shape = ConvShape { in_dims: in_dims.to_vec(), out_dims, kernel, stride, pad };
        let map = Arc::new(im2col_map(cin, &shape));
        Self { cin, cout, shape, map }
    }

    /// Weight is `[cout, cin·K]`, bias `[cout, 1]`.
    pub fn weight_shape(&self) -> (usize, usize) {
        (self.cout, self.cin * self.shape.kernel_volume())
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var, w: Var, b: Var) -> Var {
        let cols = tape.gather(x, self.map.clone());
        let y = tape.matmul(w, cols);
        tape.add_col(y, b)
    }
}

/// Transposed convolution layer with cached geometry.
#[derive(Debug, Clone)]
pub struct ConvTransposeLayer {
    pub cin: usize,
    pub cout: usize,
    pub shape: ConvShape,
    map: Arc<IndexMap>,
}

impl ConvTransposeLayer {
    pub fn new(
        cin: usize,
        cout: usize,
        in_dims: &[usize],
        kernel: usize,
        stride: usize,
        pad: usize,
        out_pad: usize,
    ) -> Self {
        let out_dims = in_dims
            .iter()
            .map(|&n| conv_transpose_out_len(n, kernel, stride, pad, out_pad))
            .collect();
        let shape = ConvShape { in_dims: in_dims.to_vec(), out_dims, kernel, stride, pad };
        let map = Arc::new(col2im_map(cout, &shape));
        Self { cin, cout, shape, map }
    }

    /// Weight is `[cout·K, cin]`, bias `[cout, 1]`.
    pub fn weight_shape(&self) -> (usize, usize) {
        (self.cout * self.shape.kernel_volume(), self.cin)
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var, w: Var, b: Var) -> Var {
        let cols = tape.matmul(w, x);
        let y = tape.scatter_add(cols, self.map.clone());
        tape.add_col(y, b)
    }
}
