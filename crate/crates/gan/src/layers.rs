//! Convolution layers with hand-written backward passes.
//!
//! Convolutions run as im2col + matmul; transposed convolutions as the
//! matching col2im route. Every layer caches what its backward pass needs,
//! so the calling pattern is strict forward-then-backward per step.

use ndarray::{Array1, Array2, Array4, ArrayD, Axis, Ix1, Ix2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::NnScalar;

/// Trainable tensor with gradient and Adam moment buffers.
#[derive(Debug, Clone)]
pub struct Param<T: NnScalar> {
    pub value: ArrayD<T>,
    pub grad: ArrayD<T>,
    pub m: ArrayD<T>,
    pub v: ArrayD<T>,
}

impl<T: NnScalar> Param<T> {
    pub fn new(value: ArrayD<T>) -> Self {
        let zeros = ArrayD::zeros(value.raw_dim());
        Self { grad: zeros.clone(), m: zeros.clone(), v: zeros, value }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// He-style normal init scaled by fan-in, drawn through f64 so f32 and f64
/// models see the same stream.
fn init_weights<T: NnScalar>(rng: &mut ChaCha8Rng, shape: (usize, usize), fan_in: usize) -> Array2<T> {
    let std = (2.0 / fan_in as f64).sqrt() * 0.5;
    Array2::from_shape_fn(shape, |_| {
        // Box-Muller from two uniform draws
        let u1: f64 = rng.gen::<f64>().max(1e-12);
        let u2: f64 = rng.gen();
        let n = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        T::from_f64_lossy(n * std)
    })
}

pub fn conv_out_size(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

pub fn conv_transpose_out_size(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    stride * (input - 1) + kernel - 2 * pad
}

/// Unfolds (N, C, H, W) into (C*k*k, N*Hout*Wout) patch columns.
fn im2col<T: NnScalar>(
    x: &Array4<T>,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> (Array2<T>, usize, usize) {
    let (n, c, h, w) = x.dim();
    let oh = conv_out_size(h, kernel, stride, pad);
    let ow = conv_out_size(w, kernel, stride, pad);
    let mut cols = Array2::<T>::zeros((c * kernel * kernel, n * oh * ow));
    for ni in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let col = (ni * oh + oy) * ow + ox;
                for ci in 0..c {
                    for ky in 0..kernel {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kernel {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let row = (ci * kernel + ky) * kernel + kx;
                            cols[[row, col]] = x[[ni, ci, iy as usize, ix as usize]];
                        }
                    }
                }
            }
        }
    }
    (cols, oh, ow)
}

/// Folds patch columns back onto an (N, C, H, W) grid, accumulating overlaps.
fn col2im<T: NnScalar>(
    cols: &Array2<T>,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Array4<T> {
    let mut x = Array4::<T>::zeros((n, c, h, w));
    for ni in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let col = (ni * oh + oy) * ow + ox;
                for ci in 0..c {
                    for ky in 0..kernel {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kernel {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let row = (ci * kernel + ky) * kernel + kx;
                            x[[ni, ci, iy as usize, ix as usize]] += cols[[row, col]];
                        }
                    }
                }
            }
        }
    }
    x
}

/// Strided 2-D convolution; weight layout (Cout, Cin*k*k).
#[derive(Debug)]
pub struct Conv2d<T: NnScalar> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    cache: Option<ConvCache<T>>,
}

#[derive(Debug)]
struct ConvCache<T: NnScalar> {
    cols: Array2<T>,
    in_dim: (usize, usize, usize, usize),
    out_hw: (usize, usize),
}

impl<T: NnScalar> Conv2d<T> {
    pub fn new(rng: &mut ChaCha8Rng, cin: usize, cout: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        let fan_in = cin * kernel * kernel;
        let w = init_weights(rng, (cout, fan_in), fan_in);
        Self {
            weight: Param::new(w.into_dyn()),
            bias: Param::new(Array1::<T>::zeros(cout).into_dyn()),
            cin,
            cout,
            kernel,
            stride,
            pad,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<T>) -> Array4<T> {
        let (n, c, h, w) = x.dim();
        debug_assert_eq!(c, self.cin);
        let (cols, oh, ow) = im2col(x, self.kernel, self.stride, self.pad);
        let wmat = self.weight.value.view().into_dimensionality::<Ix2>().unwrap();
        let mut y_mat = wmat.dot(&cols);
        let bias = self.bias.value.view().into_dimensionality::<Ix1>().unwrap();
        for (co, mut row) in y_mat.axis_iter_mut(Axis(0)).enumerate() {
            let b = bias[co];
            row.mapv_inplace(|v| v + b);
        }
        self.cache = Some(ConvCache { cols, in_dim: (n, c, h, w), out_hw: (oh, ow) });
        // (Cout, N*oh*ow) -> (N, Cout, oh, ow)
        y_mat
            .into_shape((self.cout, n, oh, ow))
            .unwrap()
            .permuted_axes([1, 0, 2, 3])
            .as_standard_layout()
            .to_owned()
    }

    /// Accumulates weight/bias grads and returns the input gradient.
    pub fn backward(&mut self, dy: &Array4<T>) -> Array4<T> {
        let cache = self.cache.take().expect("backward without forward");
        let (n, c, h, w) = cache.in_dim;
        let (oh, ow) = cache.out_hw;
        let dy_mat = dy
            .view()
            .permuted_axes([1, 0, 2, 3])
            .as_standard_layout()
            .to_owned()
            .into_shape((self.cout, n * oh * ow))
            .unwrap();
        let dw = dy_mat.dot(&cache.cols.t());
        let db = dy_mat.sum_axis(Axis(1));
        self.weight.grad += &dw.into_dyn();
        self.bias.grad += &db.into_dyn();
        let wmat = self.weight.value.view().into_dimensionality::<Ix2>().unwrap();
        let dcols = wmat.t().dot(&dy_mat);
        col2im(&dcols, n, c, h, w, self.kernel, self.stride, self.pad, oh, ow)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Strided 2-D transposed convolution; weight layout (Cin, Cout*k*k).
#[derive(Debug)]
pub struct ConvTranspose2d<T: NnScalar> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    cache: Option<(Array2<T>, (usize, usize, usize, usize))>,
}

impl<T: NnScalar> ConvTranspose2d<T> {
    pub fn new(rng: &mut ChaCha8Rng, cin: usize, cout: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        let fan_in = cin * kernel * kernel;
        let w = init_weights(rng, (cin, cout * kernel * kernel), fan_in);
        Self {
            weight: Param::new(w.into_dyn()),
            bias: Param::new(Array1::<T>::zeros(cout).into_dyn()),
            cin,
            cout,
            kernel,
            stride,
            pad,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<T>) -> Array4<T> {
        let (n, c, h, w) = x.dim();
        debug_assert_eq!(c, self.cin);
        let oh = conv_transpose_out_size(h, self.kernel, self.stride, self.pad);
        let ow = conv_transpose_out_size(w, self.kernel, self.stride, self.pad);
        // (Cin, N*H*W)
        let x_mat = x
            .view()
            .permuted_axes([1, 0, 2, 3])
            .as_standard_layout()
            .to_owned()
            .into_shape((self.cin, n * h * w))
            .unwrap();
        let wmat = self.weight.value.view().into_dimensionality::<Ix2>().unwrap();
        let cols = wmat.t().dot(&x_mat); // (Cout*k*k, N*H*W)
        let mut y = col2im(&cols, n, self.cout, oh, ow, self.kernel, self.stride, self.pad, h, w);
        let bias = self.bias.value.view().into_dimensionality::<Ix1>().unwrap();
        for ni in 0..n {
            for co in 0..self.cout {
                let b = bias[co];
                y.index_axis_mut(Axis(0), ni)
                    .index_axis_mut(Axis(0), co)
                    .mapv_inplace(|v| v + b);
            }
        }
        self.cache = Some((x_mat, (n, h, w, oh)));
        y
    }

    pub fn backward(&mut self, dy: &Array4<T>) -> Array4<T> {
        let (x_mat, (n, h, w, _oh)) = self.cache.take().expect("backward without forward");
        // the forward col2im is the adjoint of im2col with the same geometry
        let (dcols, doh, dow) = im2col(dy, self.kernel, self.stride, self.pad);
        debug_assert_eq!((doh, dow), (h, w));
        let dw = x_mat.dot(&dcols.t());
        self.weight.grad += &dw.into_dyn();
        let db = dy.sum_axis(Axis(0)).sum_axis(Axis(1)).sum_axis(Axis(1));
        self.bias.grad += &db.into_dyn();
        let wmat = self.weight.value.view().into_dimensionality::<Ix2>().unwrap();
        let dx_mat = wmat.dot(&dcols); // (Cin, N*H*W)
        dx_mat
            .into_shape((self.cin, n, h, w))
            .unwrap()
            .permuted_axes([1, 0, 2, 3])
            .as_standard_layout()
            .to_owned()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Leaky ReLU with cached derivative mask.
#[derive(Debug, Default)]
pub struct LeakyRelu<T: NnScalar> {
    pub slope: f64,
    mask: Option<Array4<T>>,
}

impl<T: NnScalar> LeakyRelu<T> {
    pub fn new(slope: f64) -> Self {
        Self { slope, mask: None }
    }

    pub fn forward(&mut self, x: &Array4<T>) -> Array4<T> {
        let slope = T::from_f64_lossy(self.slope);
        let mask = x.mapv(|v| if v > T::zero() { T::one() } else { slope });
        let y = x * &mask;
        self.mask = Some(mask);
        y
    }

    pub fn backward(&mut self, dy: &Array4<T>) -> Array4<T> {
        dy * &self.mask.take().expect("backward without forward")
    }
}

/// Inverted dropout: scales kept units by 1/(1-p) at apply time.
#[derive(Debug)]
pub struct Dropout<T: NnScalar> {
    pub p: f64,
    mask: Option<Array4<T>>,
}

impl<T: NnScalar> Dropout<T> {
    pub fn new(p: f64) -> Self {
        Self { p, mask: None }
    }

    /// `rng = None` means pass-through (deterministic mode).
    pub fn forward(&mut self, x: &Array4<T>, rng: Option<&mut ChaCha8Rng>) -> Array4<T> {
        match rng {
            Some(rng) if self.p > 0.0 => {
                let keep = 1.0 - self.p;
                let scale = T::from_f64_lossy(1.0 / keep);
                let mask = Array4::from_shape_fn(x.dim(), |_| {
                    if rng.gen::<f64>() < keep {
                        scale
                    } else {
                        T::zero()
                    }
                });
                let y = x * &mask;
                self.mask = Some(mask);
                y
            }
            _ => {
                self.mask = None;
                x.clone()
            }
        }
    }

    pub fn backward(&mut self, dy: &Array4<T>) -> Array4<T> {
        match self.mask.take() {
            Some(mask) => dy * &mask,
            None => dy.clone(),
        }
    }
}

pub fn tanh_forward<T: NnScalar>(x: &Array4<T>) -> Array4<T> {
    x.mapv(|v| v.tanh())
}

pub fn tanh_backward<T: NnScalar>(dy: &Array4<T>, y: &Array4<T>) -> Array4<T> {
    let mut dx = dy.clone();
    dx.zip_mut_with(y, |d, &yv| *d = *d * (T::one() - yv * yv));
    dx
}
