use crate::error::{Error, Result};

/// Shape bookkeeping for a batched 2-d cross-correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    /// Derives the geometry from an `[N, C, H, W]` input and `[O, C, kH, kW]` kernel.
    pub fn new(input: &[usize], kernel: &[usize], stride: usize, padding: usize) -> Result<Self> {
        if input.len() != 4 || kernel.len() != 4 || input[1] != kernel[1] {
            return Err(Error::Dimension {
                op: "conv2d",
                lhs: input.to_vec(),
                rhs: kernel.to_vec(),
            });
        }
        if stride == 0 {
            return Err(Error::config("conv2d stride must be positive"));
        }
        let out_dim = |size: usize, k: usize| -> Result<usize> {
            let padded = size + 2 * padding;
            if k == 0 || padded < k {
                return Err(Error::config(format!(
                    "conv2d output size is not positive: input {size}, padding {padding}, kernel {k}"
                )));
            }
            Ok((padded - k) / stride + 1)
        };
        Ok(Self {
            batch: input[0],
            in_channels: input[1],
            height: input[2],
            width: input[3],
            out_channels: kernel[0],
            kernel_h: kernel[2],
            kernel_w: kernel[3],
            stride,
            padding,
            out_h: out_dim(input[2], kernel[2])?,
            out_w: out_dim(input[3], kernel[3])?,
        })
    }

    /// Rows of one sample's column matrix: `C·kH·kW`.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    /// Columns of one sample's column matrix: `H'·W'`.
    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.batch, self.out_channels, self.out_h, self.out_w]
    }

    /// Input coordinate for output position `o` and kernel offset `k`, if inside the image.
    #[inline]
    fn source(&self, o: usize, k: usize, size: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < size).then_some(pos as usize)
    }

    /// Unfolds the input into per-sample `[C·kH·kW, H'·W']` blocks laid out back to back.
    pub(crate) fn im2col(&self, input: &[f64]) -> Vec<f64> {
        let (pl, np) = (self.patch_len(), self.positions());
        let mut cols = vec![0.0; self.batch * pl * np];
        let plane = self.height * self.width;
        for n in 0..self.batch {
            let img = &input[n * self.in_channels * plane..(n + 1) * self.in_channels * plane];
            let block = &mut cols[n * pl * np..(n + 1) * pl * np];
            for c in 0..self.in_channels {
                for ky in 0..self.kernel_h {
                    for kx in 0..self.kernel_w {
                        let row = (c * self.kernel_h + ky) * self.kernel_w + kx;
                        let dst = &mut block[row * np..(row + 1) * np];
                        for oy in 0..self.out_h {
                            let Some(iy) = self.source(oy, ky, self.height) else {
                                continue;
                            };
                            let src = &img[c * plane + iy * self.width..c * plane + (iy + 1) * self.width];
                            for ox in 0..self.out_w {
                                if let Some(ix) = self.source(ox, kx, self.width) {
                                    dst[oy * self.out_w + ox] = src[ix];
                                }
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`im2col`](Self::im2col) for a single sample: scatters-adds columns into `out`.
    pub(crate) fn col2im_sample(&self, cols: &[f64], out: &mut [f64]) {
        let np = self.positions();
        let plane = self.height * self.width;
        for c in 0..self.in_channels {
            for ky in 0..self.kernel_h {
                for kx in 0..self.kernel_w {
                    let row = (c * self.kernel_h + ky) * self.kernel_w + kx;
                    let src = &cols[row * np..(row + 1) * np];
                    for oy in 0..self.out_h {
                        let Some(iy) = self.source(oy, ky, self.height) else {
                            continue;
                        };
                        for ox in 0..self.out_w {
                            if let Some(ix) = self.source(ox, kx, self.width) {
                                out[c * plane + iy * self.width + ix] += src[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Non-overlapping `k×k` average pooling over `[N, C, H, W]`; trailing rows/cols that
/// do not fill a window are dropped.
pub(crate) fn avg_pool_forward(shape: &[usize], input: &[f64], k: usize) -> (Vec<usize>, Vec<f64>) {
    let (nc, h, w) = (shape[0] * shape[1], shape[2], shape[3]);
    let (oh, ow) = (h / k, w / k);
    let scale = 1.0 / (k * k) as f64;
    let mut out = vec![0.0; nc * oh * ow];
    for p in 0..nc {
        let src = &input[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for dy in 0..k {
                    let row = &src[(oy * k + dy) * w + ox * k..(oy * k + dy) * w + ox * k + k];
                    for v in row {
                        acc += v;
                    }
                }
                dst[oy * ow + ox] = acc * scale;
            }
        }
    }
    (vec![shape[0], shape[1], oh, ow], out)
}

pub(crate) fn avg_pool_backward(in_shape: &[usize], grad_out: &[f64], k: usize) -> Vec<f64> {
    let (nc, h, w) = (in_shape[0] * in_shape[1], in_shape[2], in_shape[3]);
    let (oh, ow) = (h / k, w / k);
    let scale = 1.0 / (k * k) as f64;
    let mut grad = vec![0.0; nc * h * w];
    for p in 0..nc {
        let g = &grad_out[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut grad[p * h * w..(p + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let v = g[oy * ow + ox] * scale;
                for dy in 0..k {
                    for dx in 0..k {
                        dst[(oy * k + dy) * w + ox * k + dx] = v;
                    }
                }
            }
        }
    }
    grad
}
