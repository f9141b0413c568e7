//! Single-level 2D Haar transform with unnormalized ±1 filters.
//!
//! Each output pixel of a subband is a signed four-term sum over one 2x2
//! input block (stride-2 correlation, no kernel flip). The filters carry no
//! 1/2 normalization, so the inverse divides by 4 and the energy identity is
//! `‖LL‖² + ‖LH‖² + ‖HL‖² + ‖HH‖² = 4‖x‖²`.
//!
//! Block layout, with `a b / c d` the 2x2 input block:
//!
//! ```text
//! LL =  a + b + c + d      HL = -a + b - c + d
//! LH = -a - b + c + d      HH =  a - b - c + d
//! ```

use crate::error::{CoreError, Result};
use crate::tensor::ImageTensor;

/// The four analysis filters, row-major 2x2.
pub const HAAR_LL: [f64; 4] = [1.0, 1.0, 1.0, 1.0];
pub const HAAR_LH: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];
pub const HAAR_HL: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];
pub const HAAR_HH: [f64; 4] = [1.0, -1.0, -1.0, 1.0];

/// The four half-resolution subbands of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct SubbandSet {
    pub ll: ImageTensor,
    pub lh: ImageTensor,
    pub hl: ImageTensor,
    pub hh: ImageTensor,
    source_shape: [usize; 3],
}

impl SubbandSet {
    pub fn new(
        ll: ImageTensor,
        lh: ImageTensor,
        hl: ImageTensor,
        hh: ImageTensor,
    ) -> Result<Self> {
        if !(ll.same_shape(&lh) && ll.same_shape(&hl) && ll.same_shape(&hh)) {
            return Err(CoreError::shape(format!(
                "subband shapes differ: {:?} {:?} {:?} {:?}",
                ll.shape(),
                lh.shape(),
                hl.shape(),
                hh.shape()
            )));
        }
        let source_shape = [ll.channels(), ll.height() * 2, ll.width() * 2];
        Ok(Self {
            ll,
            lh,
            hl,
            hh,
            source_shape,
        })
    }

    /// Shape `[C, H, W]` of the image the subbands came from.
    pub fn source_shape(&self) -> [usize; 3] {
        self.source_shape
    }

    pub fn subband_shape(&self) -> [usize; 3] {
        self.ll.shape()
    }
}

fn check_even(x: &ImageTensor) -> Result<()> {
    if x.height() % 2 != 0 || x.width() % 2 != 0 {
        return Err(CoreError::invalid(format!(
            "dwt2 requires even height and width, got {}x{}; inputs are not padded",
            x.height(),
            x.width()
        )));
    }
    if x.is_empty() {
        return Err(CoreError::invalid("dwt2 of empty tensor"));
    }
    Ok(())
}

/// Single-level Haar analysis: four `[C, H/2, W/2]` subbands.
pub fn dwt2(x: &ImageTensor) -> Result<SubbandSet> {
    check_even(x)?;
    let (c_n, h, w) = (x.channels(), x.height(), x.width());
    let (sh, sw) = (h / 2, w / 2);
    let mut ll = ImageTensor::zeros(c_n, sh, sw);
    let mut lh = ImageTensor::zeros(c_n, sh, sw);
    let mut hl = ImageTensor::zeros(c_n, sh, sw);
    let mut hh = ImageTensor::zeros(c_n, sh, sw);
    for c in 0..c_n {
        let src = x.channel(c);
        let dll = ll.channel_mut(c);
        let dlh = lh.channel_mut(c);
        let dhl = hl.channel_mut(c);
        let dhh = hh.channel_mut(c);
        for by in 0..sh {
            let top = 2 * by * w;
            let bot = top + w;
            for bx in 0..sw {
                let a = src[top + 2 * bx];
                let b = src[top + 2 * bx + 1];
                let cc = src[bot + 2 * bx];
                let d = src[bot + 2 * bx + 1];
                let o = by * sw + bx;
                dll[o] = a + b + cc + d;
                dlh[o] = -a - b + cc + d;
                dhl[o] = -a + b - cc + d;
                dhh[o] = a - b - cc + d;
            }
        }
    }
    SubbandSet::new(ll, lh, hl, hh)
}

/// Exact inverse of [`dwt2`].
pub fn idwt2(s: &SubbandSet) -> Result<ImageTensor> {
    let [c_n, sh, sw] = s.subband_shape();
    let (h, w) = (sh * 2, sw * 2);
    let mut out = ImageTensor::zeros(c_n, h, w);
    for c in 0..c_n {
        let (ll, lh, hl, hh) = (
            s.ll.channel(c),
            s.lh.channel(c),
            s.hl.channel(c),
            s.hh.channel(c),
        );
        let dst = out.channel_mut(c);
        for by in 0..sh {
            let top = 2 * by * w;
            let bot = top + w;
            for bx in 0..sw {
                let o = by * sw + bx;
                let (vll, vlh, vhl, vhh) = (ll[o], lh[o], hl[o], hh[o]);
                dst[top + 2 * bx] = (vll - vlh - vhl + vhh) / 4.0;
                dst[top + 2 * bx + 1] = (vll - vlh + vhl - vhh) / 4.0;
                dst[bot + 2 * bx] = (vll + vlh - vhl - vhh) / 4.0;
                dst[bot + 2 * bx + 1] = (vll + vlh + vhl + vhh) / 4.0;
            }
        }
    }
    Ok(out)
}

/// Squared Frobenius norm of each subband, in `(LL, LH, HL, HH)` order.
pub fn subband_sq_norms(s: &SubbandSet) -> (f64, f64, f64, f64) {
    (
        s.ll.sq_norm(),
        s.lh.sq_norm(),
        s.hl.sq_norm(),
        s.hh.sq_norm(),
    )
}

/// Adjoint of [`dwt2`]: scatters subband cotangents back to image space.
///
/// Since the analysis satisfies `W Wᵀ = 4I` per block, this equals
/// `4 · idwt2(g)`; it is implemented directly so gradient code does not
/// depend on that identity.
pub fn dwt2_adjoint(g: &SubbandSet) -> ImageTensor {
    let [c_n, sh, sw] = g.subband_shape();
    let (h, w) = (sh * 2, sw * 2);
    let mut out = ImageTensor::zeros(c_n, h, w);
    for c in 0..c_n {
        let (ll, lh, hl, hh) = (
            g.ll.channel(c),
            g.lh.channel(c),
            g.hl.channel(c),
            g.hh.channel(c),
        );
        let dst = out.channel_mut(c);
        for by in 0..sh {
            let top = 2 * by * w;
            let bot = top + w;
            for bx in 0..sw {
                let o = by * sw + bx;
                let (vll, vlh, vhl, vhh) = (ll[o], lh[o], hl[o], hh[o]);
                dst[top + 2 * bx] = vll - vlh - vhl + vhh;
                dst[top + 2 * bx + 1] = vll - vlh + vhl - vhh;
                dst[bot + 2 * bx] = vll + vlh - vhl - vhh;
                dst[bot + 2 * bx + 1] = vll + vlh + vhl + vhh;
            }
        }
    }
    out
}
