//! Residual UNet denoiser: 16 convolutions, all 3x3.
//!
//! | stage      | convs | width |
//! |------------|-------|-------|
//! | enc1       | 2     | w1    |
//! | enc2       | 2     | w2    |
//! | bottleneck | 4     | w3    |
//! | up2        | 1     | w2    |
//! | dec2       | 2     | w2    |
//! | up1        | 1     | w1    |
//! | dec1       | 2     | w1    |
//! | out        | 1     | B     |
//!
//! Downsampling is 2x2 max pooling, upsampling is nearest x2 followed by a
//! conv. Every conv but the last is followed by ReLU.

use crate::nn::{Conv, ParamStore};
use crate::tensor::{PoolMode, Result, Tape, TensorError, Var};

pub const UNET_LAYERS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct UNet {
    pub bands: usize,
    pub widths: [usize; 3],
    /// In forward order; the last entry is the linear output conv.
    pub layers: Vec<Conv>,
}

impl UNet {
    pub fn build(bands: usize, widths: [usize; 3], store: &mut ParamStore, prefix: &str) -> Self {
        let [w1, w2, w3] = widths;
        let spec: [(&str, usize, usize); UNET_LAYERS] = [
            ("enc1a", 2 * bands, w1),
            ("enc1b", w1, w1),
            ("enc2a", w1, w2),
            ("enc2b", w2, w2),
            ("mid1", w2, w3),
            ("mid2", w3, w3),
            ("mid3", w3, w3),
            ("mid4", w3, w3),
            ("up2", w3, w2),
            ("dec2a", 2 * w2, w2),
            ("dec2b", w2, w2),
            ("up1", w2, w1),
            ("dec1a", 2 * w1, w1),
            ("dec1b", w1, w1),
            ("dec1c", w1, w1),
            ("out", w1, bands),
        ];
        let layers = spec
            .iter()
            .map(|&(name, cin, cout)| Conv::new(store, &format!("{prefix}.{name}"), cin, cout, 3))
            .collect();
        UNet { bands, widths, layers }
    }

    /// Residual `R` such that the denoised cube is `Y + R`.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], y: Var, sigma: Var) -> Result<Var> {
        const OP: &str = "unet_forward";
        let (b, h, w) = tape.value(y).chw(OP)?;
        let (sb, sh, sw) = tape.value(sigma).chw(OP)?;
        if b != self.bands {
            return Err(TensorError::dim(OP, "bands", self.bands, b));
        }
        if (sb, sh, sw) != (b, h, w) {
            return Err(TensorError::contract(
                OP,
                format!("noise map {sb}x{sh}x{sw} does not match image {b}x{h}x{w}"),
            ));
        }
        if h % 4 != 0 || w % 4 != 0 {
            return Err(TensorError::contract(
                OP,
                format!("spatial dims {h}x{w} must be multiples of 4; pad the input first"),
            ));
        }
        let l = &self.layers;
        let x = tape.concat_channels(&[y, sigma])?;
        let e1 = l[0].forward_relu(tape, vars, x)?;
        let e1 = l[1].forward_relu(tape, vars, e1)?;
        let d1 = tape.pool2d(e1, PoolMode::Max2x2)?;
        let e2 = l[2].forward_relu(tape, vars, d1)?;
        let e2 = l[3].forward_relu(tape, vars, e2)?;
        let mut m = tape.pool2d(e2, PoolMode::Max2x2)?;
        for conv in &l[4..8] {
            m = conv.forward_relu(tape, vars, m)?;
        }
        let u2 = tape.resize_nearest(m, 2)?;
        let u2 = l[8].forward_relu(tape, vars, u2)?;
        let c2 = tape.concat_channels(&[u2, e2])?;
        let r2 = l[9].forward_relu(tape, vars, c2)?;
        let r2 = l[10].forward_relu(tape, vars, r2)?;
        let u1 = tape.resize_nearest(r2, 2)?;
        let u1 = l[11].forward_relu(tape, vars, u1)?;
        let c1 = tape.concat_channels(&[u1, e1])?;
        let r1 = l[12].forward_relu(tape, vars, c1)?;
        let r1 = l[13].forward_relu(tape, vars, r1)?;
        let r1 = l[14].forward_relu(tape, vars, r1)?;
        l[15].forward(tape, vars, r1)
    }

    /// `D = Y + R`.
    pub fn denoise(&self, tape: &mut Tape, vars: &[Var], y: Var, sigma: Var) -> Result<Var> {
        let r = self.forward(tape, vars, y, sigma)?;
        tape.add(y, r)
    }
}
