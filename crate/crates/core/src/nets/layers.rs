//! Layer kernels with explicit backward passes.
//!
//! Layers are plain shape descriptions; their weights live in a
//! [`ParamSet`] under `<name>.weight` / `<name>.bias` and their gradients in
//! a set of the same layout.

use crate::par::Exec;
use crate::rng::RngStream;
use crate::tensor::{gemm, Scalar, Tensor};

use super::params::ParamSet;

/// Samples per gradient partial in the conv backward pass. Fixed so that the
/// reduction order does not depend on the thread pool.
const GRAD_CHUNK: usize = 8;

fn weight_name(name: &str) -> String {
    format!("{name}.weight")
}

fn bias_name(name: &str) -> String {
    format!("{name}.bias")
}

fn uniform_tensor<T: Scalar>(shape: &[usize], bound: f64, rng: &mut RngStream) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64(rng.uniform_range(-bound, bound)))
        .collect();
    Tensor::from_vec(shape, data).expect("shape")
}

/// Weight initialisation scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// `U(±sqrt(6 / fan_in))`, for layers followed by ReLU.
    He,
    /// `U(±1 / sqrt(fan_in))`.
    FanIn,
    /// `FanIn` scaled by a constant.
    Scaled(f64),
}

impl Init {
    fn bound(self, fan_in: usize) -> f64 {
        let f = fan_in.max(1) as f64;
        match self {
            Init::He => (6.0 / f).sqrt(),
            Init::FanIn => 1.0 / f.sqrt(),
            Init::Scaled(s) => s / f.sqrt(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn new(name: &str, in_ch: usize, out_ch: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        Conv2d {
            name: name.to_string(),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let span = |n: usize| (n + 2 * self.pad - self.kernel) / self.stride + 1;
        (span(h), span(w))
    }

    pub fn col_rows(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }

    pub fn num_params(&self) -> usize {
        self.out_ch * self.col_rows() + self.out_ch
    }

    pub fn init<T: Scalar>(&self, params: &mut ParamSet<T>, init: Init, rng: &mut RngStream) {
        let bound = init.bound(self.col_rows());
        params.insert(
            weight_name(&self.name),
            uniform_tensor(&[self.out_ch, self.in_ch, self.kernel, self.kernel], bound, rng),
        );
        params.insert(bias_name(&self.name), Tensor::zeros(&[self.out_ch]));
    }

    /// Unfolds one `C x H x W` image into `(C k k) x (Ho Wo)` columns.
    fn im2col<T: Scalar>(&self, x: &[T], h: usize, w: usize, col: &mut [T]) {
        let (ho, wo) = self.out_hw(h, w);
        let k = self.kernel;
        let mut row = 0;
        for c in 0..self.in_ch {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let dst = &mut col[row * ho * wo..(row + 1) * ho * wo];
                    for oy in 0..ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        let out_row = &mut dst[oy * wo..(oy + 1) * wo];
                        if iy < 0 || iy >= h as isize {
                            out_row.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, o) in out_row.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            *o = if ix < 0 || ix >= w as isize {
                                T::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Folds columns back, accumulating into `dx`.
    fn col2im<T: Scalar>(&self, col: &[T], h: usize, w: usize, dx: &mut [T]) {
        let (ho, wo) = self.out_hw(h, w);
        let k = self.kernel;
        let mut row = 0;
        for c in 0..self.in_ch {
            let plane = &mut dx[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let src = &col[row * ho * wo..(row + 1) * ho * wo];
                    for oy in 0..ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        for ox in 0..wo {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += src[oy * wo + ox];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// `(N, C, H, W) -> (N, C_out, Ho, Wo)`.
    pub fn forward<T: Scalar>(&self, exec: Exec, params: &ParamSet<T>, x: &Tensor<T>) -> Tensor<T> {
        let (n, c, h, w) = dims4(x);
        assert_eq!(c, self.in_ch, "{}: input channels", self.name);
        let (ho, wo) = self.out_hw(h, w);
        let weight = params.get(&weight_name(&self.name)).data();
        let bias = params.get(&bias_name(&self.name)).data();
        let kdim = self.col_rows();
        let (in_len, out_len) = (c * h * w, self.out_ch * ho * wo);
        let mut out = Tensor::zeros(&[n, self.out_ch, ho, wo]);
        exec.for_each_chunk_mut(out.data_mut(), out_len, |i, y| {
            let mut col = vec![T::zero(); kdim * ho * wo];
            self.im2col(&x.data()[i * in_len..(i + 1) * in_len], h, w, &mut col);
            for (oc, plane) in y.chunks_exact_mut(ho * wo).enumerate() {
                plane.fill(bias[oc]);
            }
            gemm(false, false, self.out_ch, ho * wo, kdim, T::one(), weight, &col, T::one(), y);
        });
        out
    }

    /// Accumulates weight and bias gradients into `grads` and returns the
    /// input gradient when `need_dx`.
    pub fn backward<T: Scalar>(
        &self,
        exec: Exec,
        params: &ParamSet<T>,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        grads: &mut ParamSet<T>,
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        let (n, c, h, w) = dims4(x);
        let (ho, wo) = self.out_hw(h, w);
        let hw_out = ho * wo;
        let kdim = self.col_rows();
        let weight = params.get(&weight_name(&self.name)).data();
        let (in_len, out_len) = (c * h * w, self.out_ch * hw_out);
        let chunks = n.div_ceil(GRAD_CHUNK);

        struct Partial<T> {
            dw: Vec<T>,
            db: Vec<T>,
            dx: Vec<T>,
        }

        let partials = exec.map(chunks, |ci| {
            let lo = ci * GRAD_CHUNK;
            let hi = (lo + GRAD_CHUNK).min(n);
            let mut dw = vec![T::zero(); self.out_ch * kdim];
            let mut db = vec![T::zero(); self.out_ch];
            let mut dx = if need_dx { vec![T::zero(); (hi - lo) * in_len] } else { Vec::new() };
            let mut col = vec![T::zero(); kdim * hw_out];
            for s in lo..hi {
                let dys = &dy.data()[s * out_len..(s + 1) * out_len];
                self.im2col(&x.data()[s * in_len..(s + 1) * in_len], h, w, &mut col);
                gemm(false, true, self.out_ch, kdim, hw_out, T::one(), dys, &col, T::one(), &mut dw);
                for (oc, plane) in dys.chunks_exact(hw_out).enumerate() {
                    db[oc] += plane.iter().copied().sum::<T>();
                }
                if need_dx {
                    gemm(true, false, kdim, hw_out, self.out_ch, T::one(), weight, dys, T::zero(), &mut col);
                    let off = (s - lo) * in_len;
                    self.col2im(&col, h, w, &mut dx[off..off + in_len]);
                }
            }
            Partial { dw, db, dx }
        });

        let mut dx = need_dx.then(|| Tensor::zeros(x.shape()));
        {
            let gw = grads.get_mut(&weight_name(&self.name)).data_mut();
            for p in &partials {
                for (g, &d) in gw.iter_mut().zip(&p.dw) {
                    *g += d;
                }
            }
        }
        let gb = grads.get_mut(&bias_name(&self.name)).data_mut();
        for (ci, p) in partials.into_iter().enumerate() {
            for (g, &d) in gb.iter_mut().zip(&p.db) {
                *g += d;
            }
            if let Some(dx) = dx.as_mut() {
                let off = ci * GRAD_CHUNK * in_len;
                dx.data_mut()[off..off + p.dx.len()].copy_from_slice(&p.dx);
            }
        }
        dx
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub name: String,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(name: &str, input: usize, output: usize) -> Self {
        Linear {
            name: name.to_string(),
            input,
            output,
        }
    }

    pub fn num_params(&self) -> usize {
        self.output * self.input + self.output
    }

    pub fn init<T: Scalar>(&self, params: &mut ParamSet<T>, init: Init, rng: &mut RngStream) {
        let bound = init.bound(self.input);
        params.insert(
            weight_name(&self.name),
            uniform_tensor(&[self.output, self.input], bound, rng),
        );
        params.insert(bias_name(&self.name), Tensor::zeros(&[self.output]));
    }

    /// `(N, in) -> (N, out)`.
    pub fn forward<T: Scalar>(&self, params: &ParamSet<T>, x: &Tensor<T>) -> Tensor<T> {
        let n = x.dim(0);
        assert_eq!(x.row_len(), self.input, "{}: input width", self.name);
        let weight = params.get(&weight_name(&self.name)).data();
        let bias = params.get(&bias_name(&self.name)).data();
        let mut y = Tensor::zeros(&[n, self.output]);
        for row in y.data_mut().chunks_exact_mut(self.output) {
            row.copy_from_slice(bias);
        }
        gemm(false, true, n, self.output, self.input, T::one(), x.data(), weight, T::one(), y.data_mut());
        y
    }

    pub fn backward<T: Scalar>(
        &self,
        params: &ParamSet<T>,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        grads: Option<&mut ParamSet<T>>,
    ) -> Tensor<T> {
        let n = x.dim(0);
        if let Some(grads) = grads {
            gemm(
                true,
                false,
                self.output,
                self.input,
                n,
                T::one(),
                dy.data(),
                x.data(),
                T::one(),
                grads.get_mut(&weight_name(&self.name)).data_mut(),
            );
            let gb = grads.get_mut(&bias_name(&self.name)).data_mut();
            for row in dy.data().chunks_exact(self.output) {
                for (g, &d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
        }
        let weight = params.get(&weight_name(&self.name)).data();
        let mut dx = Tensor::zeros(&[n, self.input]);
        gemm(false, false, n, self.input, self.output, T::one(), dy.data(), weight, T::zero(), dx.data_mut());
        dx
    }
}

/// Layer normalisation over the last axis with learned scale and shift.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub name: String,
    pub dim: usize,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache<T> {
    normed: Tensor<T>,
    rstd: Vec<T>,
}

impl LayerNorm {
    pub fn new(name: &str, dim: usize) -> Self {
        LayerNorm {
            name: name.to_string(),
            dim,
            eps: 1e-5,
        }
    }

    pub fn num_params(&self) -> usize {
        2 * self.dim
    }

    pub fn init<T: Scalar>(&self, params: &mut ParamSet<T>) {
        params.insert(weight_name(&self.name), Tensor::full(&[self.dim], T::one()));
        params.insert(bias_name(&self.name), Tensor::zeros(&[self.dim]));
    }

    pub fn forward<T: Scalar>(&self, params: &ParamSet<T>, x: &Tensor<T>) -> (Tensor<T>, LayerNormCache<T>) {
        let gamma = params.get(&weight_name(&self.name)).data();
        let beta = params.get(&bias_name(&self.name)).data();
        let d = T::from_usize(self.dim);
        let eps = T::from_f64(self.eps);
        let mut normed = x.clone();
        let mut y = x.clone();
        let mut rstd = Vec::with_capacity(x.dim(0));
        for (nrow, yrow) in normed
            .data_mut()
            .chunks_exact_mut(self.dim)
            .zip(y.data_mut().chunks_exact_mut(self.dim))
        {
            let mean = nrow.iter().copied().sum::<T>() / d;
            let var = nrow.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / d;
            let r = T::one() / (var + eps).sqrt();
            for ((nv, yv), (&g, &b)) in nrow.iter_mut().zip(yrow.iter_mut()).zip(gamma.iter().zip(beta)) {
                *nv = (*nv - mean) * r;
                *yv = g * *nv + b;
            }
            rstd.push(r);
        }
        (y, LayerNormCache { normed, rstd })
    }

    pub fn backward<T: Scalar>(
        &self,
        params: &ParamSet<T>,
        cache: &LayerNormCache<T>,
        dy: &Tensor<T>,
        grads: Option<&mut ParamSet<T>>,
    ) -> Tensor<T> {
        let gamma = params.get(&weight_name(&self.name)).data();
        let d = T::from_usize(self.dim);
        let mut dx = Tensor::zeros(dy.shape());
        if let Some(g) = grads {
            let mut dgamma = vec![T::zero(); self.dim];
            let mut dbeta = vec![T::zero(); self.dim];
            for (nrow, drow) in cache
                .normed
                .data()
                .chunks_exact(self.dim)
                .zip(dy.data().chunks_exact(self.dim))
            {
                for j in 0..self.dim {
                    dgamma[j] += drow[j] * nrow[j];
                    dbeta[j] += drow[j];
                }
            }
            for (a, b) in g.get_mut(&weight_name(&self.name)).data_mut().iter_mut().zip(dgamma) {
                *a += b;
            }
            for (a, b) in g.get_mut(&bias_name(&self.name)).data_mut().iter_mut().zip(dbeta) {
                *a += b;
            }
        }
        for (((nrow, drow), xrow), &r) in cache
            .normed
            .data()
            .chunks_exact(self.dim)
            .zip(dy.data().chunks_exact(self.dim))
            .zip(dx.data_mut().chunks_exact_mut(self.dim))
            .zip(&cache.rstd)
        {
            let mut sum_g = T::zero();
            let mut sum_gn = T::zero();
            for j in 0..self.dim {
                let g = drow[j] * gamma[j];
                sum_g += g;
                sum_gn += g * nrow[j];
            }
            for j in 0..self.dim {
                let g = drow[j] * gamma[j];
                xrow[j] = r / d * (d * g - sum_g - nrow[j] * sum_gn);
            }
        }
        dx
    }
}

pub fn dims4<T: Scalar>(x: &Tensor<T>) -> (usize, usize, usize, usize) {
    let s = x.shape();
    assert_eq!(s.len(), 4, "expected NCHW tensor, got {s:?}");
    (s[0], s[1], s[2], s[3])
}

pub fn relu_inplace<T: Scalar>(x: &mut Tensor<T>) {
    x.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
}

/// Zeroes `dy` where the ReLU output was not positive.
pub fn relu_backward_inplace<T: Scalar>(out: &Tensor<T>, dy: &mut Tensor<T>) {
    for (d, &o) in dy.data_mut().iter_mut().zip(out.data()) {
        if o <= T::zero() {
            *d = T::zero();
        }
    }
}

pub fn tanh_inplace<T: Scalar>(x: &mut Tensor<T>) {
    x.data_mut().iter_mut().for_each(|v| *v = v.tanh());
}

pub fn tanh_backward_inplace<T: Scalar>(out: &Tensor<T>, dy: &mut Tensor<T>) {
    for (d, &o) in dy.data_mut().iter_mut().zip(out.data()) {
        *d *= T::one() - o * o;
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_tensor(shape: &[usize], rng: &mut RngStream) -> Tensor<f64> {
        uniform_tensor(shape, 1.0, rng)
    }

    /// Direct nested-loop convolution.
    fn conv_naive(c: &Conv2d, p: &ParamSet<f64>, x: &Tensor<f64>) -> Tensor<f64> {
        let (n, ci, h, w) = dims4(x);
        let (ho, wo) = c.out_hw(h, w);
        let wt = p.get(&weight_name(&c.name)).data();
        let b = p.get(&bias_name(&c.name)).data();
        let k = c.kernel;
        let mut y = Tensor::zeros(&[n, c.out_ch, ho, wo]);
        for s in 0..n {
            for oc in 0..c.out_ch {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = b[oc];
                        for ic in 0..ci {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * c.stride + ky) as isize - c.pad as isize;
                                    let ix = (ox * c.stride + kx) as isize - c.pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    acc += wt[((oc * ci + ic) * k + ky) * k + kx]
                                        * x.data()[((s * ci + ic) * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                        y.data_mut()[((s * c.out_ch + oc) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn conv_forward_matches_naive() {
        let mut rng = RngStream::new(1);
        for (stride, pad) in [(1, 1), (2, 0), (1, 0)] {
            let c = Conv2d::new("c", 3, 4, 3, stride, pad);
            let mut p = ParamSet::new();
            c.init(&mut p, Init::FanIn, &mut rng);
            *p.get_mut("c.bias") = rand_tensor(&[4], &mut rng);
            let x = rand_tensor(&[2, 3, 9, 8], &mut rng);
            let y = c.forward(Exec::Sequential, &p, &x);
            assert!(y.max_abs_diff(&conv_naive(&c, &p, &x)) < 1e-12);
        }
    }

    /// Loss = Σ y ⊙ r for a fixed random r; gradients vs central differences.
    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = RngStream::new(2);
        let c = Conv2d::new("c", 2, 3, 3, 2, 1);
        let mut p = ParamSet::new();
        c.init(&mut p, Init::FanIn, &mut rng);
        let x = rand_tensor(&[3, 2, 7, 6], &mut rng);
        let y0 = c.forward(Exec::Sequential, &p, &x);
        let r = rand_tensor(y0.shape(), &mut rng);
        let loss = |p: &ParamSet<f64>, x: &Tensor<f64>| -> f64 {
            c.forward(Exec::Sequential, p, x).data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        };
        let mut g = p.zeros_like();
        let dx = c.backward(Exec::Sequential, &p, &x, &r, &mut g, true).unwrap();
        let h = 1e-6;
        let flat = p.flatten();
        let gflat = g.flatten();
        for i in 0..flat.len() {
            let mut pp = p.clone();
            pp.set_flat(i, flat[i] + h);
            let mut pm = p.clone();
            pm.set_flat(i, flat[i] - h);
            let fd = (loss(&pp, &x) - loss(&pm, &x)) / (2.0 * h);
            assert!((fd - gflat[i]).abs() < 1e-6, "param {i}: {fd} vs {}", gflat[i]);
        }
        for i in (0..x.len()).step_by(7) {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let fd = (loss(&p, &xp) - loss(&p, &xm)) / (2.0 * h);
            assert!((fd - dx.data()[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn conv_sequential_and_parallel_are_bit_identical() {
        let mut rng = RngStream::new(3);
        let c = Conv2d::new("c", 3, 8, 3, 1, 1);
        let mut p = ParamSet::<f32>::new();
        c.init(&mut p, Init::He, &mut rng);
        let x: Tensor<f32> = uniform_tensor(&[19, 3, 12, 12], 1.0, &mut rng);
        let ys = c.forward(Exec::Sequential, &p, &x);
        let yp = c.forward(Exec::Parallel, &p, &x);
        assert_eq!(ys, yp);
        let (mut gs, mut gp) = (p.zeros_like(), p.zeros_like());
        let dxs = c.backward(Exec::Sequential, &p, &x, &ys, &mut gs, true);
        let dxp = c.backward(Exec::Parallel, &p, &x, &yp, &mut gp, true);
        assert_eq!(gs, gp);
        assert_eq!(dxs, dxp);
    }

    #[test]
    fn linear_and_layernorm_gradients() {
        let mut rng = RngStream::new(4);
        let lin = Linear::new("l", 5, 4);
        let ln = LayerNorm::new("n", 4);
        let mut p = ParamSet::new();
        lin.init(&mut p, Init::FanIn, &mut rng);
        ln.init(&mut p);
        *p.get_mut("n.weight") = rand_tensor(&[4], &mut rng);
        *p.get_mut("n.bias") = rand_tensor(&[4], &mut rng);
        let x = rand_tensor(&[3, 5], &mut rng);
        let r = rand_tensor(&[3, 4], &mut rng);
        let loss = |p: &ParamSet<f64>, x: &Tensor<f64>| -> f64 {
            let h = lin.forward(p, x);
            let (y, _) = ln.forward(p, &h);
            y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        };
        let h = lin.forward(&p, &x);
        let (_, cache) = ln.forward(&p, &h);
        let mut g = p.zeros_like();
        let dh = ln.backward(&p, &cache, &r, Some(&mut g));
        let dx = lin.backward(&p, &x, &dh, Some(&mut g));
        let eps = 1e-6;
        let flat = p.flatten();
        let gflat = g.flatten();
        for i in 0..flat.len() {
            let (mut pp, mut pm) = (p.clone(), p.clone());
            pp.set_flat(i, flat[i] + eps);
            pm.set_flat(i, flat[i] - eps);
            let fd = (loss(&pp, &x) - loss(&pm, &x)) / (2.0 * eps);
            assert!((fd - gflat[i]).abs() < 1e-6, "param {i}");
        }
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data_mut()[i] += eps;
            xm.data_mut()[i] -= eps;
            let fd = (loss(&p, &xp) - loss(&p, &xm)) / (2.0 * eps);
            assert!((fd - dx.data()[i]).abs() < 1e-6);
        }
    }
}
