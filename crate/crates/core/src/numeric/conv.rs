//! Direct "same"-padded 2-D cross-correlation kernels on NCHW buffers.

use crate::error::{Error, Result};

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub dilation: usize,
    pub depthwise: bool,
}

impl ConvGeom {
    pub fn infer(input: &Tensor, kernel: &Tensor, dilation: usize, depthwise: bool) -> Result<Self> {
        let [batch, cin, height, width] = match input.shape() {
            &[b, c, h, w] => [b, c, h, w],
            other => return Err(Error::Shape(format!("conv2d input must be 4-D, got {other:?}"))),
        };
        let [cout, kin, kh, kw] = match kernel.shape() {
            &[o, i, h, w] => [o, i, h, w],
            other => return Err(Error::Shape(format!("conv2d kernel must be 4-D, got {other:?}"))),
        };
        if dilation == 0 {
            return Err(Error::Shape("dilation must be at least 1".into()));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::Shape(format!("same padding needs odd kernel sizes, got {kh}x{kw}")));
        }
        if depthwise {
            if kin != 1 || cout != cin {
                return Err(Error::Shape(format!(
                    "depthwise kernel {:?} does not match {cin} input channels",
                    kernel.shape()
                )));
            }
        } else if kin != cin {
            return Err(Error::Shape(format!(
                "kernel expects {kin} input channels, input has {cin}"
            )));
        }
        Ok(Self {
            batch,
            cin,
            cout,
            height,
            width,
            kh,
            kw,
            dilation,
            depthwise,
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.batch, self.cout, self.height, self.width]
    }

    fn kernel_in(&self) -> usize {
        if self.depthwise {
            1
        } else {
            self.cin
        }
    }

    /// Calls `f(co, ci, kernel_offset, dy, dx)` for every tap.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize, isize, isize)) {
        let pad_y = (self.dilation * (self.kh - 1) / 2) as isize;
        let pad_x = (self.dilation * (self.kw - 1) / 2) as isize;
        let kin = self.kernel_in();
        for co in 0..self.cout {
            for ki in 0..kin {
                let ci = if self.depthwise { co } else { ki };
                for ky in 0..self.kh {
                    for kx in 0..self.kw {
                        let dy = (ky * self.dilation) as isize - pad_y;
                        let dx = (kx * self.dilation) as isize - pad_x;
                        let off = ((co * kin + ki) * self.kh + ky) * self.kw + kx;
                        f(co, ci, off, dy, dx);
                    }
                }
            }
        }
    }
}

/// Valid output range `[lo, hi)` along one axis for a tap offset `d`.
#[inline]
fn span(len: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize - d).clamp(0, len as isize) as usize;
    (lo, hi.max(lo))
}

pub(crate) fn forward(g: &ConvGeom, input: &[f64], kernel: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let (h, w) = (g.height, g.width);
    let plane = h * w;
    let mut out = vec![0.0; g.batch * g.cout * plane];
    for b in 0..g.batch {
        let inp = &input[b * g.cin * plane..(b + 1) * g.cin * plane];
        let outb = &mut out[b * g.cout * plane..(b + 1) * g.cout * plane];
        if let Some(bias) = bias {
            for (co, chunk) in outb.chunks_mut(plane).enumerate() {
                chunk.fill(bias[co]);
            }
        }
        g.for_each_tap(|co, ci, off, dy, dx| {
            let wv = kernel[off];
            if wv == 0.0 {
                return;
            }
            let (y0, y1) = span(h, dy);
            let (x0, x1) = span(w, dx);
            if x0 >= x1 {
                return;
            }
            let src = &inp[ci * plane..(ci + 1) * plane];
            let dst = &mut outb[co * plane..(co + 1) * plane];
            for y in y0..y1 {
                let sy = (y as isize + dy) as usize;
                let sx0 = (x0 as isize + dx) as usize;
                let drow = &mut dst[y * w + x0..y * w + x1];
                let srow = &src[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                for (d, s) in drow.iter_mut().zip(srow) {
                    *d += wv * s;
                }
            }
        });
    }
    out
}

pub(crate) fn backward_input(g: &ConvGeom, grad_out: &[f64], kernel: &[f64]) -> Vec<f64> {
    let (h, w) = (g.height, g.width);
    let plane = h * w;
    let mut gin = vec![0.0; g.batch * g.cin * plane];
    for b in 0..g.batch {
        let gout = &grad_out[b * g.cout * plane..(b + 1) * g.cout * plane];
        let ginb = &mut gin[b * g.cin * plane..(b + 1) * g.cin * plane];
        g.for_each_tap(|co, ci, off, dy, dx| {
            let wv = kernel[off];
            if wv == 0.0 {
                return;
            }
            let (y0, y1) = span(h, dy);
            let (x0, x1) = span(w, dx);
            if x0 >= x1 {
                return;
            }
            let src = &gout[co * plane..(co + 1) * plane];
            let dst = &mut ginb[ci * plane..(ci + 1) * plane];
            for y in y0..y1 {
                let sy = (y as isize + dy) as usize;
                let sx0 = (x0 as isize + dx) as usize;
                let drow = &mut dst[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                let srow = &src[y * w + x0..y * w + x1];
                for (d, s) in drow.iter_mut().zip(srow) {
                    *d += wv * s;
                }
            }
        });
    }
    gin
}

pub(crate) fn backward_kernel(g: &ConvGeom, grad_out: &[f64], input: &[f64], kernel_len: usize) -> Vec<f64> {
    let (h, w) = (g.height, g.width);
    let plane = h * w;
    let mut gk = vec![0.0; kernel_len];
    for b in 0..g.batch {
        let gout = &grad_out[b * g.cout * plane..(b + 1) * g.cout * plane];
        let inp = &input[b * g.cin * plane..(b + 1) * g.cin * plane];
        g.for_each_tap(|co, ci, off, dy, dx| {
            let (y0, y1) = span(h, dy);
            let (x0, x1) = span(w, dx);
            if x0 >= x1 {
                return;
            }
            let go = &gout[co * plane..(co + 1) * plane];
            let src = &inp[ci * plane..(ci + 1) * plane];
            let mut acc = 0.0;
            for y in y0..y1 {
                let sy = (y as isize + dy) as usize;
                let sx0 = (x0 as isize + dx) as usize;
                let grow = &go[y * w + x0..y * w + x1];
                let srow = &src[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                acc += grow.iter().zip(srow).map(|(a, b)| a * b).sum::<f64>();
            }
            gk[off] += acc;
        });
    }
    gk
}

pub(crate) fn backward_bias(g: &ConvGeom, grad_out: &[f64]) -> Vec<f64> {
    let plane = g.height * g.width;
    let mut gb = vec![0.0; g.cout];
    for (i, chunk) in grad_out.chunks(plane).enumerate() {
        gb[i % g.cout] += chunk.iter().sum::<f64>();
    }
    gb
}
