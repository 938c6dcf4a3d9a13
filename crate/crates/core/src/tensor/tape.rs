use super::conv::{conv_backward, conv_forward, ConvGeom, Padding};
use super::{Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    /// 2x2 window, stride 2.
    Max2x2,
    /// 2x2 window, stride 2.
    Avg2x2,
    GlobalMax,
    AdaptiveAvg(usize),
}

/// Deliberate backward-rule corruption used to prove the gradient checker
/// catches faults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Scales the first weight-gradient entry of every conv by 1.5.
    ConvBackward,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
        batch: usize,
    },
    Relu(Var),
    Sigmoid(Var),
    /// Max pooling of either flavour; `argmax[o]` is the flat input index
    /// feeding output `o`.
    MaxPool { x: Var, argmax: Vec<usize> },
    AvgPool2 { x: Var },
    AdaptiveAvg { x: Var, bins: usize },
    ResizeNearest { x: Var },
    Concat { parts: Vec<Var> },
    SliceChannels { x: Var, start: usize },
    FullyConnected { x: Var, w: Var, b: Var },
    ChannelScale { p: Var, s: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Reshape(Var),
    Mse(Var, Var),
    Asymmetric {
        est: Var,
        truth: Var,
        alpha: f64,
        mean: bool,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    op: Op,
}

/// Linear record of operations. Node order is a topological order by
/// construction, so backward is a single reverse sweep.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    fault: Option<Fault>,
}

/// Bounds of cell `i` when splitting `n` into `bins` near-equal ranges.
pub(crate) fn adaptive_range(i: usize, n: usize, bins: usize) -> (usize, usize) {
    let start = i * n / bins;
    let end = ((i + 1) * n).div_ceil(bins);
    (start, end)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fault(fault: Fault) -> Self {
        Tape {
            nodes: Vec::new(),
            fault: Some(fault),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of `v`, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn grad_tensor(&self, v: Var) -> Option<Tensor> {
        self.grad(v)
            .map(|g| Tensor::new(self.shape(v).to_vec(), g.to_vec()).expect("grad shape"))
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    // ---- forward operations -------------------------------------------

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: Padding) -> Result<Var> {
        let (batch, geom) = ConvGeom::new(
            self.shape(x),
            self.shape(w),
            self.shape(b),
            stride,
            padding,
        )?;
        let n = batch.max(1);
        let mut out = vec![0.0; n * geom.out_len()];
        {
            let xd = self.value(x).data();
            let wd = self.value(w).data();
            let bd = self.value(b).data();
            for (xs, os) in xd
                .chunks_exact(geom.in_len())
                .zip(out.chunks_exact_mut(geom.out_len()))
            {
                conv_forward(&geom, xs, wd, bd, os);
            }
        }
        let shape = if batch == 0 {
            vec![geom.cout, geom.ho, geom.wo]
        } else {
            vec![batch, geom.cout, geom.ho, geom.wo]
        };
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Conv2d { x, w, b, geom, batch }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let value = Tensor::from_fn(src.shape(), |i| src.data()[i].max(0.0));
        self.push(value, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let value = Tensor::from_fn(src.shape(), |i| {
            let v = src.data()[i];
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        });
        self.push(value, Op::Sigmoid(x))
    }

    pub fn pool2d(&mut self, x: Var, mode: PoolMode) -> Result<Var> {
        let src = self.value(x);
        let (c, h, w) = src.chw("pool2d")?;
        let d = src.data();
        match mode {
            PoolMode::Max2x2 | PoolMode::Avg2x2 => {
                if h % 2 != 0 {
                    return Err(TensorError::contract("pool2d", format!("height {h} is odd")));
                }
                if w % 2 != 0 {
                    return Err(TensorError::contract("pool2d", format!("width {w} is odd")));
                }
                let (oh, ow) = (h / 2, w / 2);
                let mut out = vec![0.0; c * oh * ow];
                let mut argmax = Vec::new();
                if mode == PoolMode::Max2x2 {
                    argmax.resize(out.len(), 0);
                }
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let o = (ch * oh + oy) * ow + ox;
                            let base = (ch * h + 2 * oy) * w + 2 * ox;
                            let idx = [base, base + 1, base + w, base + w + 1];
                            if mode == PoolMode::Max2x2 {
                                let mut best = idx[0];
                                for &i in &idx[1..] {
                                    if d[i] > d[best] {
                                        best = i;
                                    }
                                }
                                out[o] = d[best];
                                argmax[o] = best;
                            } else {
                                out[o] = idx.iter().map(|&i| d[i]).sum::<f64>() * 0.25;
                            }
                        }
                    }
                }
                let value = Tensor::new(vec![c, oh, ow], out)?;
                let op = if mode == PoolMode::Max2x2 {
                    Op::MaxPool { x, argmax }
                } else {
                    Op::AvgPool2 { x }
                };
                Ok(self.push(value, op))
            }
            PoolMode::GlobalMax => {
                let plane = h * w;
                let mut out = Vec::with_capacity(c);
                let mut argmax = Vec::with_capacity(c);
                for ch in 0..c {
                    let base = ch * plane;
                    let mut best = base;
                    for i in base + 1..base + plane {
                        if d[i] > d[best] {
                            best = i;
                        }
                    }
                    out.push(d[best]);
                    argmax.push(best);
                }
                let value = Tensor::new(vec![c, 1, 1], out)?;
                Ok(self.push(value, Op::MaxPool { x, argmax }))
            }
            PoolMode::AdaptiveAvg(bins) => {
                if bins == 0 || bins > h.min(w) {
                    return Err(TensorError::contract(
                        "pool2d",
                        format!("adaptive bins {bins} do not fit a {h}x{w} map"),
                    ));
                }
                let mut out = vec![0.0; c * bins * bins];
                for ch in 0..c {
                    for by in 0..bins {
                        let (y0, y1) = adaptive_range(by, h, bins);
                        for bx in 0..bins {
                            let (x0, x1) = adaptive_range(bx, w, bins);
                            let mut s = 0.0;
                            for y in y0..y1 {
                                for xx in x0..x1 {
                                    s += d[(ch * h + y) * w + xx];
                                }
                            }
                            out[(ch * bins + by) * bins + bx] = s / ((y1 - y0) * (x1 - x0)) as f64;
                        }
                    }
                }
                let value = Tensor::new(vec![c, bins, bins], out)?;
                Ok(self.push(value, Op::AdaptiveAvg { x, bins }))
            }
        }
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn resize_nearest(&mut self, x: Var, factor: usize) -> Result<Var> {
        if factor == 0 {
            return Err(TensorError::contract("resize_nearest", "factor must be at least 1"));
        }
        let (_, h, w) = self.value(x).chw("resize_nearest")?;
        self.resize_nearest_to(x, h * factor, w * factor)
    }

    /// Nearest-neighbour resize to an arbitrary size; output pixel `(y, x)`
    /// reads source `(y*H/oh, x*W/ow)` (floor).
    pub fn resize_nearest_to(&mut self, x: Var, oh: usize, ow: usize) -> Result<Var> {
        let src = self.value(x);
        let (c, h, w) = src.chw("resize_nearest")?;
        if oh == 0 || ow == 0 {
            return Err(TensorError::contract("resize_nearest", "empty target size"));
        }
        let d = src.data();
        let mut out = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for y in 0..oh {
                let sy = y * h / oh;
                for xx in 0..ow {
                    out.push(d[(ch * h + sy) * w + xx * w / ow]);
                }
            }
        }
        let value = Tensor::new(vec![c, oh, ow], out)?;
        Ok(self.push(value, Op::ResizeNearest { x }))
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(TensorError::contract("concat_channels", "no parts"));
        };
        let (_, h, w) = self.value(first).chw("concat_channels")?;
        let mut total = 0;
        for &p in parts {
            let (c, ph, pw) = self.value(p).chw("concat_channels")?;
            if ph != h {
                return Err(TensorError::dim("concat_channels", "height", h, ph));
            }
            if pw != w {
                return Err(TensorError::dim("concat_channels", "width", w, pw));
            }
            total += c;
        }
        let mut out = Vec::with_capacity(total * h * w);
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        let value = Tensor::new(vec![total, h, w], out)?;
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Channels `start..start+len` of a `[C,H,W]` tensor.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let src = self.value(x);
        let (c, h, w) = src.chw("slice_channels")?;
        if len == 0 || start + len > c {
            return Err(TensorError::dim("slice_channels", "channels", c, start + len));
        }
        let plane = h * w;
        let data = src.data()[start * plane..(start + len) * plane].to_vec();
        let value = Tensor::new(vec![len, h, w], data)?;
        Ok(self.push(value, Op::SliceChannels { x, start }))
    }

    /// `y = W x + b` for `x: [n]`, `W: [m, n]`, `b: [m]`.
    pub fn fully_connected(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        const OP: &str = "fully_connected";
        let xs = self.value(x);
        let ws = self.value(w);
        let bs = self.value(b);
        if xs.rank() != 1 {
            return Err(TensorError::dim(OP, "input rank", 1, xs.rank()));
        }
        let &[m, n] = ws.shape() else {
            return Err(TensorError::dim(OP, "weight rank", 2, ws.rank()));
        };
        if xs.numel() != n {
            return Err(TensorError::dim(OP, "input length", n, xs.numel()));
        }
        if bs.shape() != [m] {
            return Err(TensorError::dim(OP, "bias length", m, bs.numel()));
        }
        let (xd, wd, bd) = (xs.data(), ws.data(), bs.data());
        let out: Vec<f64> = (0..m)
            .map(|i| {
                bd[i]
                    + wd[i * n..(i + 1) * n]
                        .iter()
                        .zip(xd)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect();
        let value = Tensor::new(vec![m], out)?;
        Ok(self.push(value, Op::FullyConnected { x, w, b }))
    }

    /// `out[i] = s[i] * p[i]` per channel `i`.
    pub fn channel_scale(&mut self, p: Var, s: Var) -> Result<Var> {
        let ps = self.value(p);
        let (c, h, w) = ps.chw("channel_scale")?;
        let ss = self.value(s);
        if ss.numel() != c {
            return Err(TensorError::dim("channel_scale", "channels", c, ss.numel()));
        }
        let plane = h * w;
        let sd = ss.data();
        let value = Tensor::from_fn(&[c, h, w], |i| ps.data()[i] * sd[i / plane]);
        Ok(self.push(value, Op::ChannelScale { p, s }))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != sb.len() {
            return Err(TensorError::dim(op, "rank", sa.len(), sb.len()));
        }
        for (&da, &db) in sa.iter().zip(sb) {
            if da != db {
                return Err(TensorError::dim(op, "extent", da, db));
            }
        }
        Ok(())
    }

    fn zip_with(&mut self, op_name: &'static str, a: Var, b: Var, f: fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.same_shape(op_name, a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let value = Tensor::from_fn(va.shape(), |i| f(va.data()[i], vb.data()[i]));
        Ok(self.push(value, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let src = self.value(x);
        let value = Tensor::from_fn(src.shape(), |i| src.data()[i] * c);
        self.push(value, Op::Scale(x, c))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape.to_vec())?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// Mean of squared differences over every element.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let s: f64 = va.iter().zip(vb).map(|(x, y)| (x - y) * (x - y)).sum();
        let value = Tensor::scalar(s / va.len() as f64);
        Ok(self.push(value, Op::Mse(a, b)))
    }

    /// `sum_i |alpha - [est_i < truth_i]| * (est_i - truth_i)^2`, optionally
    /// divided by the element count.
    pub fn asymmetric(&mut self, est: Var, truth: Var, alpha: f64, mean: bool) -> Result<Var> {
        self.same_shape("asymmetric_loss", est, truth)?;
        let (ve, vt) = (self.value(est).data(), self.value(truth).data());
        let mut s = 0.0;
        for (e, t) in ve.iter().zip(vt) {
            let d = e - t;
            s += asym_weight(d, alpha) * d * d;
        }
        if mean {
            s /= ve.len() as f64;
        }
        Ok(self.push(
            Tensor::scalar(s),
            Op::Asymmetric {
                est,
                truth,
                alpha,
                mean,
            },
        ))
    }

    // ---- backward ------------------------------------------------------

    /// Reverse sweep from a scalar `loss`. Gradients add onto whatever a
    /// previous call left behind until [`Tape::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(TensorError::contract(
                "backward",
                format!("loss must be scalar, has shape {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
            let node = &mut self.nodes[idx];
            match &mut node.grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let n = self.nodes[v.0].value.numel();
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom, batch } => {
                let xd = self.value(*x).data();
                let wd = self.value(*w).data();
                let mut dx = vec![0.0; xd.len()];
                let mut dw = vec![0.0; wd.len()];
                let mut db = vec![0.0; geom.cout];
                for s in 0..(*batch).max(1) {
                    conv_backward(
                        geom,
                        &xd[s * geom.in_len()..(s + 1) * geom.in_len()],
                        wd,
                        &g[s * geom.out_len()..(s + 1) * geom.out_len()],
                        &mut dx[s * geom.in_len()..(s + 1) * geom.in_len()],
                        &mut dw,
                        &mut db,
                    );
                }
                if self.fault == Some(Fault::ConvBackward) {
                    dw[0] = dw[0] * 1.5 + 1e-3;
                }
                acc(*x, &mut |s| add_into(s, &dx));
                acc(*w, &mut |s| add_into(s, &dw));
                acc(*b, &mut |s| add_into(s, &db));
            }
            Op::Relu(x) => {
                let xd = self.value(*x).data();
                acc(*x, &mut |s| {
                    for i in 0..s.len() {
                        if xd[i] > 0.0 {
                            s[i] += g[i];
                        }
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                acc(*x, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                });
            }
            Op::MaxPool { x, argmax } => acc(*x, &mut |s| {
                for (o, &i) in argmax.iter().enumerate() {
                    s[i] += g[o];
                }
            }),
            Op::AvgPool2 { x } => {
                let (c, h, w) = self.value(*x).chw("pool2d").expect("validated");
                let (oh, ow) = (h / 2, w / 2);
                acc(*x, &mut |s| {
                    for ch in 0..c {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let q = g[(ch * oh + oy) * ow + ox] * 0.25;
                                let base = (ch * h + 2 * oy) * w + 2 * ox;
                                for i in [base, base + 1, base + w, base + w + 1] {
                                    s[i] += q;
                                }
                            }
                        }
                    }
                });
            }
            Op::AdaptiveAvg { x, bins } => {
                let bins = *bins;
                let (c, h, w) = self.value(*x).chw("pool2d").expect("validated");
                acc(*x, &mut |s| {
                    for ch in 0..c {
                        for by in 0..bins {
                            let (y0, y1) = adaptive_range(by, h, bins);
                            for bx in 0..bins {
                                let (x0, x1) = adaptive_range(bx, w, bins);
                                let q = g[(ch * bins + by) * bins + bx] / ((y1 - y0) * (x1 - x0)) as f64;
                                for y in y0..y1 {
                                    for xx in x0..x1 {
                                        s[(ch * h + y) * w + xx] += q;
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Op::ResizeNearest { x } => {
                let (c, h, w) = self.value(*x).chw("resize_nearest").expect("validated");
                let (_, oh, ow) = node.value.chw("resize_nearest").expect("validated");
                acc(*x, &mut |s| {
                    for ch in 0..c {
                        for y in 0..oh {
                            let sy = y * h / oh;
                            for xx in 0..ow {
                                s[(ch * h + sy) * w + xx * w / ow] += g[(ch * oh + y) * ow + xx];
                            }
                        }
                    }
                });
            }
            Op::Concat { parts } => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    acc(p, &mut |s| add_into(s, &g[off..off + n]));
                    off += n;
                }
            }
            Op::SliceChannels { x, start } => {
                let (_, h, w) = node.value.chw("slice_channels").expect("validated");
                let off = start * h * w;
                acc(*x, &mut |s| add_into(&mut s[off..off + g.len()], g));
            }
            Op::FullyConnected { x, w, b } => {
                let xd = self.value(*x).data();
                let wd = self.value(*w).data();
                let (m, n) = (g.len(), xd.len());
                acc(*x, &mut |s| {
                    for i in 0..m {
                        for j in 0..n {
                            s[j] += wd[i * n + j] * g[i];
                        }
                    }
                });
                acc(*w, &mut |s| {
                    for i in 0..m {
                        for j in 0..n {
                            s[i * n + j] += g[i] * xd[j];
                        }
                    }
                });
                acc(*b, &mut |s| add_into(s, g));
            }
            Op::ChannelScale { p, s: sv } => {
                let pd = self.value(*p).data();
                let sd = self.value(*sv).data();
                let plane = pd.len() / sd.len();
                acc(*p, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * sd[i / plane];
                    }
                });
                acc(*sv, &mut |s| {
                    for (c, slot) in s.iter_mut().enumerate() {
                        let r = c * plane..(c + 1) * plane;
                        *slot += g[r.clone()].iter().zip(&pd[r]).map(|(a, b)| a * b).sum::<f64>();
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |s| add_into(s, g));
                acc(*b, &mut |s| add_into(s, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |s| add_into(s, g));
                acc(*b, &mut |s| s.iter_mut().zip(g).for_each(|(a, b)| *a -= b));
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * bd[i];
                    }
                });
                acc(*b, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * ad[i];
                    }
                });
            }
            Op::Scale(x, c) => acc(*x, &mut |s| s.iter_mut().zip(g).for_each(|(a, b)| *a += b * c)),
            Op::Sum(x) => acc(*x, &mut |s| s.iter_mut().for_each(|a| *a += g[0])),
            Op::Reshape(x) => acc(*x, &mut |s| add_into(s, g)),
            Op::Mse(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                let k = 2.0 * g[0] / ad.len() as f64;
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += k * (ad[i] - bd[i]);
                    }
                });
                acc(*b, &mut |s| {
                    for i in 0..s.len() {
                        s[i] -= k * (ad[i] - bd[i]);
                    }
                });
            }
            Op::Asymmetric {
                est,
                truth,
                alpha,
                mean,
            } => {
                let (ed, td) = (self.value(*est).data(), self.value(*truth).data());
                let norm = if *mean { ed.len() as f64 } else { 1.0 };
                let k = 2.0 * g[0] / norm;
                let dgrad = |i: usize| {
                    let d = ed[i] - td[i];
                    k * asym_weight(d, *alpha) * d
                };
                acc(*est, &mut |s| {
                    for (i, slot) in s.iter_mut().enumerate() {
                        *slot += dgrad(i);
                    }
                });
                acc(*truth, &mut |s| {
                    for (i, slot) in s.iter_mut().enumerate() {
                        *slot -= dgrad(i);
                    }
                });
            }
        }
    }
}

/// Weight `|alpha - [d < 0]|` applied to a squared estimation error `d`.
pub(crate) fn asym_weight(d: f64, alpha: f64) -> f64 {
    if d < 0.0 {
        1.0 - alpha
    } else {
        alpha
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}
