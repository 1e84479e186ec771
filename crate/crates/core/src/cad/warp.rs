//! Differentiable backward warping with bilinear sampling.
//!
//! `out(x, y) = prev(x + flow_x(x, y), y + flow_y(x, y))`, sampled
//! bilinearly. Sample positions outside the frame are clamped to the border,
//! so every flow field is valid; the flow gradient is zero where the clamp is
//! active.

use crate::error::{Error, Result};
use crate::tensor::{CustomOp, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug)]
struct Geom {
    batch: usize,
    channels: usize,
    height: usize,
    width: usize,
}

/// Bilinear sample footprint for one output pixel.
#[derive(Clone, Copy, Debug)]
struct Footprint {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    wx: f64,
    wy: f64,
    /// Whether the unclamped coordinate was inside the frame.
    free_x: bool,
    free_y: bool,
}

fn footprint(x: usize, y: usize, fx: f64, fy: f64, w: usize, h: usize) -> Footprint {
    let axis = |pos: f64, extent: usize| {
        let hi = (extent - 1) as f64;
        let free = (0.0..=hi).contains(&pos);
        let p = pos.clamp(0.0, hi);
        let i0 = p.floor() as usize;
        let i1 = (i0 + 1).min(extent - 1);
        (i0, i1, p - i0 as f64, free)
    };
    let (x0, x1, wx, free_x) = axis(x as f64 + fx, w);
    let (y0, y1, wy, free_y) = axis(y as f64 + fy, h);
    Footprint {
        x0,
        x1,
        y0,
        y1,
        wx,
        wy,
        free_x,
        free_y,
    }
}

impl Geom {
    fn plane(&self) -> usize {
        self.height * self.width
    }
}

fn check(prev: &[usize], flow: &[usize]) -> Result<Geom> {
    if prev.len() != 4 || flow.len() != 4 {
        return Err(Error::dim(format!(
            "warp expects 4-d frame and flow, got {prev:?} and {flow:?}"
        )));
    }
    if flow[1] != 2 || flow[0] != prev[0] || flow[2] != prev[2] || flow[3] != prev[3] {
        return Err(Error::dim(format!(
            "flow of shape {flow:?} cannot warp a frame of shape {prev:?}"
        )));
    }
    Ok(Geom {
        batch: prev[0],
        channels: prev[1],
        height: prev[2],
        width: prev[3],
    })
}

fn forward(prev: &[f64], flow: &[f64], g: Geom) -> Vec<f64> {
    let plane = g.plane();
    let mut out = vec![0.0; prev.len()];
    for n in 0..g.batch {
        let fxs = &flow[(2 * n) * plane..][..plane];
        let fys = &flow[(2 * n + 1) * plane..][..plane];
        for y in 0..g.height {
            for x in 0..g.width {
                let p = y * g.width + x;
                let fp = footprint(x, y, fxs[p], fys[p], g.width, g.height);
                for c in 0..g.channels {
                    let src = &prev[(n * g.channels + c) * plane..][..plane];
                    let a = src[fp.y0 * g.width + fp.x0];
                    out[(n * g.channels + c) * plane + p] = if fp.wx == 0.0 && fp.wy == 0.0 {
                        a
                    } else {
                        let b = src[fp.y0 * g.width + fp.x1];
                        let cc = src[fp.y1 * g.width + fp.x0];
                        let d = src[fp.y1 * g.width + fp.x1];
                        (1.0 - fp.wy) * ((1.0 - fp.wx) * a + fp.wx * b)
                            + fp.wy * ((1.0 - fp.wx) * cc + fp.wx * d)
                    };
                }
            }
        }
    }
    out
}

struct WarpOp {
    geom: Geom,
}

impl CustomOp for WarpOp {
    fn name(&self) -> &'static str {
        "warp"
    }

    fn backward(
        &self,
        inputs: &[&[f64]],
        _output: &[f64],
        grad_out: &[f64],
    ) -> Vec<Option<Vec<f64>>> {
        let (prev, flow) = (inputs[0], inputs[1]);
        let g = self.geom;
        let plane = g.plane();
        let mut dprev = vec![0.0; prev.len()];
        let mut dflow = vec![0.0; flow.len()];
        for n in 0..g.batch {
            for y in 0..g.height {
                for x in 0..g.width {
                    let p = y * g.width + x;
                    let fx = flow[(2 * n) * plane + p];
                    let fy = flow[(2 * n + 1) * plane + p];
                    let fp = footprint(x, y, fx, fy, g.width, g.height);
                    let (mut gx, mut gy) = (0.0, 0.0);
                    for c in 0..g.channels {
                        let base = (n * g.channels + c) * plane;
                        let go = grad_out[base + p];
                        if go == 0.0 {
                            continue;
                        }
                        let ia = base + fp.y0 * g.width + fp.x0;
                        let ib = base + fp.y0 * g.width + fp.x1;
                        let ic = base + fp.y1 * g.width + fp.x0;
                        let id = base + fp.y1 * g.width + fp.x1;
                        dprev[ia] += go * (1.0 - fp.wx) * (1.0 - fp.wy);
                        dprev[ib] += go * fp.wx * (1.0 - fp.wy);
                        dprev[ic] += go * (1.0 - fp.wx) * fp.wy;
                        dprev[id] += go * fp.wx * fp.wy;
                        let (a, b, cc, d) = (prev[ia], prev[ib], prev[ic], prev[id]);
                        gx += go * ((1.0 - fp.wy) * (b - a) + fp.wy * (d - cc));
                        gy += go * ((1.0 - fp.wx) * (cc - a) + fp.wx * (d - b));
                    }
                    if fp.free_x {
                        dflow[(2 * n) * plane + p] = gx;
                    }
                    if fp.free_y {
                        dflow[(2 * n + 1) * plane + p] = gy;
                    }
                }
            }
        }
        vec![Some(dprev), Some(dflow)]
    }
}

/// Records `warp(prev, flow)` on the tape.
pub fn warp(tape: &mut Tape, prev: Var, flow: Var) -> Result<Var> {
    let geom = check(tape.shape(prev), tape.shape(flow))?;
    let value = forward(tape.value(prev), tape.value(flow), geom);
    let shape = tape.shape(prev).to_vec();
    tape.custom(&[prev, flow], shape, value, Box::new(WarpOp { geom }))
}

/// Warps a frame outside of any tape.
pub fn warp_tensor(prev: &Tensor, flow: &Tensor) -> Result<Tensor> {
    let geom = check(prev.shape(), flow.shape())?;
    let out = forward(&prev.to_f64(), &flow.to_f64(), geom);
    Tensor::from_f64(prev.shape().to_vec(), &out)
}
