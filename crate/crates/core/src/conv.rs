//! Direct 2D convolution/correlation with declared boundary handling.
//!
//! Kernels are applied per channel (depthwise), matching the scalar blur
//! model `y = k ∗ x`. Output has the input shape (same padding). Adjoint
//! operators are built from the same index mapping as the forward pass, so
//! `<conv(x), g> == <x, conv_adjoint(g)>` holds to rounding error — the
//! guidance gradients rely on this.

use crate::error::{CoreError, Result};
use crate::tensor::ImageTensor;

/// Out-of-range handling for the same-padded convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Symmetric reflection with edge repeat: `-1 -> 0`, `n -> n-1`.
    Reflect,
    /// Out-of-range taps read zero.
    Zero,
    /// Periodic wrap-around.
    Circular,
}

/// True convolution (kernel flipped) or correlation (kernel as-is).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterMode {
    Convolve,
    Correlate,
}

/// Plain 2D coefficient array used as a convolution kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel2d {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Kernel2d {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(CoreError::shape(format!(
                "kernel data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let height = rows.len();
        if height == 0 {
            return Err(CoreError::invalid("empty kernel"));
        }
        let width = rows[0].len();
        if rows.iter().any(|r| r.len() != width) {
            return Err(CoreError::shape("ragged kernel rows"));
        }
        Self::new(height, width, rows.iter().flatten().copied().collect())
    }

    /// Kernel with 1 at the center and 0 elsewhere (identity under conv).
    pub fn delta(side: usize) -> Self {
        let mut data = vec![0.0; side * side];
        data[(side / 2) * side + side / 2] = 1.0;
        Self {
            height: side,
            width: side,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, ky: usize, kx: usize) -> f64 {
        self.data[ky * self.width + kx]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

#[inline]
fn map_index(i: isize, n: usize, boundary: Boundary) -> Option<usize> {
    let n_i = n as isize;
    if (0..n_i).contains(&i) {
        return Some(i as usize);
    }
    match boundary {
        Boundary::Zero => None,
        Boundary::Reflect => {
            // Single fold suffices: kernel half-width < n is checked upfront.
            let r = if i < 0 { -i - 1 } else { 2 * n_i - 1 - i };
            Some(r as usize)
        }
        Boundary::Circular => Some(i.rem_euclid(n_i) as usize),
    }
}

fn validate(image: &ImageTensor, kernel: &Kernel2d) -> Result<()> {
    if image.is_empty() {
        return Err(CoreError::invalid("empty image"));
    }
    if kernel.height % 2 == 0 || kernel.width % 2 == 0 {
        return Err(CoreError::invalid(format!(
            "kernel sides must be odd, got {}x{}",
            kernel.height, kernel.width
        )));
    }
    if image.height() < kernel.height || image.width() < kernel.width {
        return Err(CoreError::shape(format!(
            "image {}x{} smaller than kernel {}x{}",
            image.height(),
            image.width(),
            kernel.height,
            kernel.width
        )));
    }
    Ok(())
}

/// Same-padded depthwise filtering of `image` with `kernel`.
pub fn filter2d(
    image: &ImageTensor,
    kernel: &Kernel2d,
    boundary: Boundary,
    mode: FilterMode,
) -> Result<ImageTensor> {
    validate(image, kernel)?;
    let (h, w) = (image.height(), image.width());
    let (kh, kw) = (kernel.height, kernel.width);
    let (cy, cx) = ((kh / 2) as isize, (kw / 2) as isize);
    let mut out = ImageTensor::zeros(image.channels(), h, w);
    for c in 0..image.channels() {
        let src = image.channel(c);
        let dst = out.channel_mut(c);
        for oy in 0..h {
            for ox in 0..w {
                let mut acc = 0.0;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let weight = match mode {
                            FilterMode::Correlate => kernel.get(ky, kx),
                            FilterMode::Convolve => kernel.get(kh - 1 - ky, kw - 1 - kx),
                        };
                        let iy = oy as isize + ky as isize - cy;
                        let ix = ox as isize + kx as isize - cx;
                        if let (Some(sy), Some(sx)) =
                            (map_index(iy, h, boundary), map_index(ix, w, boundary))
                        {
                            acc += weight * src[sy * w + sx];
                        }
                    }
                }
                dst[oy * w + ox] = acc;
            }
        }
    }
    Ok(out)
}

/// True convolution (kernel flipped), same padding.
pub fn conv2d(image: &ImageTensor, kernel: &Kernel2d, boundary: Boundary) -> Result<ImageTensor> {
    filter2d(image, kernel, boundary, FilterMode::Convolve)
}

/// Adjoint of `x ↦ filter2d(x, kernel, boundary, mode)` applied to `cotangent`.
pub fn filter2d_adjoint_image(
    cotangent: &ImageTensor,
    kernel: &Kernel2d,
    boundary: Boundary,
    mode: FilterMode,
) -> Result<ImageTensor> {
    validate(cotangent, kernel)?;
    let (h, w) = (cotangent.height(), cotangent.width());
    let (kh, kw) = (kernel.height, kernel.width);
    let (cy, cx) = ((kh / 2) as isize, (kw / 2) as isize);
    let mut out = ImageTensor::zeros(cotangent.channels(), h, w);
    for c in 0..cotangent.channels() {
        let g = cotangent.channel(c);
        let dst = out.channel_mut(c);
        for oy in 0..h {
            for ox in 0..w {
                let go = g[oy * w + ox];
                if go == 0.0 {
                    continue;
                }
                for ky in 0..kh {
                    for kx in 0..kw {
                        let weight = match mode {
                            FilterMode::Correlate => kernel.get(ky, kx),
                            FilterMode::Convolve => kernel.get(kh - 1 - ky, kw - 1 - kx),
                        };
                        let iy = oy as isize + ky as isize - cy;
                        let ix = ox as isize + kx as isize - cx;
                        if let (Some(sy), Some(sx)) =
                            (map_index(iy, h, boundary), map_index(ix, w, boundary))
                        {
                            dst[sy * w + sx] += weight * go;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradient of `filter2d(x, kernel, ...)` with respect to the kernel,
/// contracted with `cotangent` and summed over channels.
pub fn filter2d_grad_kernel(
    x: &ImageTensor,
    cotangent: &ImageTensor,
    kernel_height: usize,
    kernel_width: usize,
    boundary: Boundary,
    mode: FilterMode,
) -> Result<Kernel2d> {
    x.check_same_shape(cotangent, "filter2d_grad_kernel")?;
    let probe = Kernel2d::new(
        kernel_height,
        kernel_width,
        vec![0.0; kernel_height * kernel_width],
    )?;
    validate(x, &probe)?;
    let (h, w) = (x.height(), x.width());
    let (cy, cx) = ((kernel_height / 2) as isize, (kernel_width / 2) as isize);
    let mut grad = vec![0.0; kernel_height * kernel_width];
    for c in 0..x.channels() {
        let src = x.channel(c);
        let g = cotangent.channel(c);
        for oy in 0..h {
            for ox in 0..w {
                let go = g[oy * w + ox];
                if go == 0.0 {
                    continue;
                }
                for ky in 0..kernel_height {
                    for kx in 0..kernel_width {
                        let iy = oy as isize + ky as isize - cy;
                        let ix = ox as isize + kx as isize - cx;
                        if let (Some(sy), Some(sx)) =
                            (map_index(iy, h, boundary), map_index(ix, w, boundary))
                        {
                            let slot = match mode {
                                FilterMode::Correlate => ky * kernel_width + kx,
                                FilterMode::Convolve => {
                                    (kernel_height - 1 - ky) * kernel_width + (kernel_width - 1 - kx)
                                }
                            };
                            grad[slot] += go * src[sy * w + sx];
                        }
                    }
                }
            }
        }
    }
    Kernel2d::new(kernel_height, kernel_width, grad)
}
