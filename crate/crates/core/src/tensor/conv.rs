//! im2col convolution kernels backed by a blocked GEMM.

use super::{Result, Tensor, TensorError};

/// Border handling for [`conv2d_forward`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero-fill of `(k - 1) / 2` on every side.
    Same,
    Valid,
}

/// Geometry of one single-sample convolution.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(
        input_shape: &[usize],
        weight_shape: &[usize],
        bias_shape: &[usize],
        stride: usize,
        padding: Padding,
    ) -> Result<(usize, ConvGeom)> {
        const OP: &str = "conv2d";
        let (batch, cin, h, w) = match *input_shape {
            [c, h, w] => (0, c, h, w),
            [n, c, h, w] => (n, c, h, w),
            ref s => return Err(TensorError::dim(OP, "input rank", 3, s.len())),
        };
        let &[cout, wcin, kh, kw] = weight_shape else {
            return Err(TensorError::dim(OP, "weight rank", 4, weight_shape.len()));
        };
        if wcin != cin {
            return Err(TensorError::dim(OP, "input channels", wcin, cin));
        }
        if kh != kw {
            return Err(TensorError::dim(OP, "kernel width", kh, kw));
        }
        if kh % 2 == 0 {
            return Err(TensorError::contract(OP, format!("kernel size {kh} is not odd")));
        }
        if bias_shape != [cout] {
            return Err(TensorError::dim(OP, "bias length", cout, bias_shape.iter().product()));
        }
        if stride == 0 {
            return Err(TensorError::contract(OP, "stride must be at least 1"));
        }
        let k = kh;
        let pad = match padding {
            Padding::Same => (k - 1) / 2,
            Padding::Valid => 0,
        };
        if h + 2 * pad < k {
            return Err(TensorError::dim(OP, "height", k, h + 2 * pad));
        }
        if w + 2 * pad < k {
            return Err(TensorError::dim(OP, "width", k, w + 2 * pad));
        }
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        Ok((
            batch,
            ConvGeom {
                cin,
                h,
                w,
                cout,
                k,
                stride,
                pad,
                ho,
                wo,
            },
        ))
    }

    fn patch_len(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.ho * self.wo
    }

    pub fn in_len(&self) -> usize {
        self.cin * self.h * self.w
    }

    pub fn out_len(&self) -> usize {
        self.cout * self.ho * self.wo
    }
}

/// `c = beta * c + op(a) * op(b)` with `op(a)` being `m x k` and `op(b)` `k x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_trans { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_trans { (1, k) } else { (n, 1) };
    // SAFETY: slice lengths checked above cover every index reachable
    // through the given strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col(g: &ConvGeom, x: &[f64], cols: &mut [f64]) {
    let p = g.positions();
    for ci in 0..g.cin {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = &mut cols[((ci * g.k + ky) * g.k + kx) * p..][..p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let dst = &mut row[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &x[(ci * g.h + iy as usize) * g.w..][..g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(g: &ConvGeom, cols: &[f64], dx: &mut [f64]) {
    let p = g.positions();
    for ci in 0..g.cin {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = &cols[((ci * g.k + ky) * g.k + kx) * p..][..p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut dx[(ci * g.h + iy as usize) * g.w..][..g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            dst[ix as usize] += row[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Single-sample forward: `out` is `[cout, ho, wo]`.
pub(crate) fn conv_forward(g: &ConvGeom, x: &[f64], w: &[f64], b: &[f64], out: &mut [f64]) {
    let p = g.positions();
    let mut cols = vec![0.0; g.patch_len() * p];
    im2col(g, x, &mut cols);
    for (co, row) in out.chunks_exact_mut(p).enumerate() {
        row.fill(b[co]);
    }
    gemm(g.cout, g.patch_len(), p, w, false, &cols, false, 1.0, out);
}

/// Single-sample backward, accumulating into `dx`, `dw` and `db`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    g: &ConvGeom,
    x: &[f64],
    w: &[f64],
    dout: &[f64],
    dx: &mut [f64],
    dw: &mut [f64],
    db: &mut [f64],
) {
    let p = g.positions();
    let kl = g.patch_len();
    let mut cols = vec![0.0; kl * p];
    im2col(g, x, &mut cols);
    gemm(g.cout, p, kl, dout, false, &cols, true, 1.0, dw);
    for (co, row) in dout.chunks_exact(p).enumerate() {
        db[co] += row.iter().sum::<f64>();
    }
    gemm(kl, g.cout, p, w, true, dout, false, 0.0, &mut cols);
    col2im(g, &cols, dx);
}

/// Tape-free convolution (cross-correlation, no kernel flip).
///
/// Accepts `[Cin,H,W]` or `[N,Cin,H,W]` inputs and a `[Cout,Cin,k,k]` kernel.
pub fn conv2d_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: Padding,
) -> Result<Tensor> {
    let (batch, g) = ConvGeom::new(input.shape(), weight.shape(), bias.shape(), stride, padding)?;
    let n = batch.max(1);
    let mut out = vec![0.0; n * g.out_len()];
    for (xs, os) in input
        .data()
        .chunks_exact(g.in_len())
        .zip(out.chunks_exact_mut(g.out_len()))
    {
        conv_forward(&g, xs, weight.data(), bias.data(), os);
    }
    let shape = if batch == 0 {
        vec![g.cout, g.ho, g.wo]
    } else {
        vec![batch, g.cout, g.ho, g.wo]
    };
    Tensor::new(shape, out)
}
