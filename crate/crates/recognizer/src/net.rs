//! A small residual CNN with hand-written forward and backward passes.
//! All parameters live in one flat `f32` buffer so the optimizer and the
//! model file treat them uniformly.

use matrixmultiply::sgemm;
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn len(self) -> usize {
        self.c * self.h * self.w
    }
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    /// Offsets of the `[cout × cin·k·k]` weights and `[cout]` bias.
    w: usize,
    b: usize,
    init_gain: f32,
}

impl Conv {
    fn out_shape(&self, s: Shape) -> Shape {
        Shape {
            c: self.cout,
            h: (s.h + 2 * self.pad - self.k) / self.stride + 1,
            w: (s.w + 2 * self.pad - self.k) / self.stride + 1,
        }
    }

    fn patch(&self) -> usize {
        self.cin * self.k * self.k
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Conv(Conv),
    Relu,
    MaxPool2,
    /// `relu(x + conv2(relu(conv1(x))))`, shape-preserving.
    Residual(Conv, Conv),
    GlobalAvgPool,
    Linear {
        din: usize,
        dout: usize,
        w: usize,
        b: usize,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Network {
    ops: Vec<Op>,
    /// `shapes[i]` is the input of `ops[i]`; the last entry is the output.
    shapes: Vec<Shape>,
    param_len: usize,
}

struct Builder {
    ops: Vec<Op>,
    shapes: Vec<Shape>,
    params: usize,
}

impl Builder {
    fn cur(&self) -> Shape {
        *self.shapes.last().expect("input shape")
    }

    fn alloc_conv(&mut self, cin: usize, cout: usize, k: usize, stride: usize, gain: f32) -> Conv {
        let w = self.params;
        let b = w + cout * cin * k * k;
        self.params = b + cout;
        Conv {
            cin,
            cout,
            k,
            stride,
            pad: k / 2,
            w,
            b,
            init_gain: gain,
        }
    }

    fn conv(&mut self, cout: usize, stride: usize) {
        let s = self.cur();
        let c = self.alloc_conv(s.c, cout, 3, stride, 1.0);
        self.ops.push(Op::Conv(c));
        self.shapes.push(c.out_shape(s));
        self.relu();
    }

    fn relu(&mut self) {
        let s = self.cur();
        self.ops.push(Op::Relu);
        self.shapes.push(s);
    }

    fn pool(&mut self) {
        let s = self.cur();
        self.ops.push(Op::MaxPool2);
        self.shapes.push(Shape {
            c: s.c,
            h: s.h / 2,
            w: s.w / 2,
        });
    }

    fn residual(&mut self) {
        let s = self.cur();
        let c1 = self.alloc_conv(s.c, s.c, 3, 1, 1.0);
        // Start each block close to the identity.
        let c2 = self.alloc_conv(s.c, s.c, 3, 1, 0.1);
        self.ops.push(Op::Residual(c1, c2));
        self.shapes.push(s);
    }

    fn head(&mut self, classes: usize) {
        let s = self.cur();
        self.ops.push(Op::GlobalAvgPool);
        self.shapes.push(Shape { c: s.c, h: 1, w: 1 });
        let w = self.params;
        let b = w + classes * s.c;
        self.params = b + classes;
        self.ops.push(Op::Linear {
            din: s.c,
            dout: classes,
            w,
            b,
        });
        self.shapes.push(Shape { c: classes, h: 1, w: 1 });
    }
}

/// Per-sample activations recorded by a training forward pass.
pub(crate) struct Tape {
    inputs: Vec<Vec<f32>>,
    /// For residual ops: (conv1 output, pre-activation sum).
    residual: Vec<Option<(Vec<f32>, Vec<f32>)>>,
}

impl Network {
    /// Stem conv at full resolution, 2× max-pool, then three residual
    /// stages of width 16/32/64 (the latter two entered by stride-2 convs),
    /// global average pooling and a linear classifier.
    pub fn small_resnet(side: usize, classes: usize) -> Self {
        let mut b = Builder {
            ops: Vec::new(),
            shapes: vec![Shape { c: 3, h: side, w: side }],
            params: 0,
        };
        b.conv(16, 1);
        b.pool();
        b.residual();
        b.conv(32, 2);
        b.residual();
        b.conv(64, 2);
        b.residual();
        b.head(classes);
        Self {
            ops: b.ops,
            shapes: b.shapes,
            param_len: b.params,
        }
    }

    pub fn param_len(&self) -> usize {
        self.param_len
    }

    pub fn input_len(&self) -> usize {
        self.shapes[0].len()
    }

    /// He-normal weights, zero biases.
    pub fn init<R: Rng>(&self, rng: &mut R) -> Vec<f32> {
        let mut p = vec![0.0f32; self.param_len];
        let mut fill = |p: &mut [f32], fan_in: usize, gain: f32| {
            let std = gain * (2.0 / fan_in as f32).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            for v in p {
                *v = normal.sample(rng);
            }
        };
        for op in &self.ops {
            match *op {
                Op::Conv(c) => fill(&mut p[c.w..c.b], c.patch(), c.init_gain),
                Op::Residual(c1, c2) => {
                    fill(&mut p[c1.w..c1.b], c1.patch(), c1.init_gain);
                    fill(&mut p[c2.w..c2.b], c2.patch(), c2.init_gain);
                }
                // Plain Xavier-style scale for the logits layer.
                Op::Linear { din, w, b, .. } => fill(&mut p[w..b], din * 2, 1.0),
                _ => {}
            }
        }
        p
    }

    pub fn forward(&self, p: &[f32], x: &[f32]) -> Vec<f32> {
        self.run(p, x, None)
    }

    pub fn forward_recorded(&self, p: &[f32], x: &[f32]) -> (Vec<f32>, Tape) {
        let mut tape = Tape {
            inputs: Vec::with_capacity(self.ops.len()),
            residual: Vec::with_capacity(self.ops.len()),
        };
        let out = self.run(p, x, Some(&mut tape));
        (out, tape)
    }

    fn run(&self, p: &[f32], x: &[f32], mut tape: Option<&mut Tape>) -> Vec<f32> {
        debug_assert_eq!(x.len(), self.input_len());
        let mut cur = x.to_vec();
        for (i, op) in self.ops.iter().enumerate() {
            let (si, so) = (self.shapes[i], self.shapes[i + 1]);
            let mut extra = None;
            let next = match *op {
                Op::Conv(c) => conv_forward(&c, p, &cur, si, so),
                Op::Relu => cur.iter().map(|&v| v.max(0.0)).collect(),
                Op::MaxPool2 => max_pool_forward(&cur, si, so),
                Op::Residual(c1, c2) => {
                    let a1 = conv_forward(&c1, p, &cur, si, si);
                    let h: Vec<f32> = a1.iter().map(|&v| v.max(0.0)).collect();
                    let mut s = conv_forward(&c2, p, &h, si, si);
                    for (s, &x) in s.iter_mut().zip(&cur) {
                        *s += x;
                    }
                    let out = s.iter().map(|&v| v.max(0.0)).collect();
                    if tape.is_some() {
                        extra = Some((a1, s));
                    }
                    out
                }
                Op::GlobalAvgPool => {
                    let hw = si.h * si.w;
                    cur.chunks(hw).map(|c| c.iter().sum::<f32>() / hw as f32).collect()
                }
                Op::Linear { din, dout, w, b } => (0..dout)
                    .map(|o| {
                        let row = &p[w + o * din..w + (o + 1) * din];
                        p[b + o] + row.iter().zip(&cur).map(|(a, b)| a * b).sum::<f32>()
                    })
                    .collect(),
            };
            if let Some(t) = tape.as_deref_mut() {
                t.inputs.push(std::mem::replace(&mut cur, next));
                t.residual.push(extra);
            } else {
                cur = next;
            }
        }
        cur
    }

    /// Accumulate parameter gradients of one sample into `grad` given the
    /// gradient of the loss with respect to its logits.
    pub fn backward(&self, p: &[f32], tape: &Tape, dlogits: &[f32], grad: &mut [f32]) {
        let mut dy = dlogits.to_vec();
        for i in (0..self.ops.len()).rev() {
            let (si, so) = (self.shapes[i], self.shapes[i + 1]);
            let x = &tape.inputs[i];
            let need_dx = i > 0;
            dy = match self.ops[i] {
                Op::Conv(c) => conv_backward(&c, p, x, si, so, &dy, grad, need_dx),
                Op::Relu => dy.iter().zip(x).map(|(&g, &v)| if v > 0.0 { g } else { 0.0 }).collect(),
                Op::MaxPool2 => max_pool_backward(x, si, so, &dy),
                Op::Residual(c1, c2) => {
                    let (a1, s) = tape.residual[i].as_ref().expect("recorded residual");
                    let ds: Vec<f32> = dy.iter().zip(s).map(|(&g, &v)| if v > 0.0 { g } else { 0.0 }).collect();
                    let h: Vec<f32> = a1.iter().map(|&v| v.max(0.0)).collect();
                    let dh = conv_backward(&c2, p, &h, si, si, &ds, grad, true);
                    let da1: Vec<f32> = dh
                        .iter()
                        .zip(a1)
                        .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
                        .collect();
                    let dx1 = conv_backward(&c1, p, x, si, si, &da1, grad, need_dx);
                    if need_dx {
                        ds.iter().zip(&dx1).map(|(a, b)| a + b).collect()
                    } else {
                        Vec::new()
                    }
                }
                Op::GlobalAvgPool => {
                    let hw = si.h * si.w;
                    dy.iter()
                        .flat_map(|&g| std::iter::repeat(g / hw as f32).take(hw))
                        .collect()
                }
                Op::Linear { din, dout, w, b } => {
                    let mut dx = vec![0.0f32; din];
                    for o in 0..dout {
                        let g = dy[o];
                        grad[b + o] += g;
                        let (gw, pw) = (
                            &mut grad[w + o * din..w + (o + 1) * din],
                            &p[w + o * din..w + (o + 1) * din],
                        );
                        for d in 0..din {
                            gw[d] += g * x[d];
                            dx[d] += g * pw[d];
                        }
                    }
                    debug_assert_eq!(so.c, dout);
                    dx
                }
            };
        }
    }
}

fn im2col(x: &[f32], si: Shape, c: &Conv, so: Shape) -> Vec<f32> {
    let n = so.h * so.w;
    let mut cols = vec![0.0f32; c.patch() * n];
    for ci in 0..c.cin {
        let plane = &x[ci * si.h * si.w..(ci + 1) * si.h * si.w];
        for ky in 0..c.k {
            for kx in 0..c.k {
                let row = (ci * c.k + ky) * c.k + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..so.h {
                    let iy = (oy * c.stride + ky) as isize - c.pad as isize;
                    if iy < 0 || iy >= si.h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * si.w..(iy as usize + 1) * si.w];
                    for ox in 0..so.w {
                        let ix = (ox * c.stride + kx) as isize - c.pad as isize;
                        if ix >= 0 && ix < si.w as isize {
                            dst[oy * so.w + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f32], si: Shape, c: &Conv, so: Shape) -> Vec<f32> {
    let n = so.h * so.w;
    let mut x = vec![0.0f32; si.len()];
    for ci in 0..c.cin {
        let plane = &mut x[ci * si.h * si.w..(ci + 1) * si.h * si.w];
        for ky in 0..c.k {
            for kx in 0..c.k {
                let row = (ci * c.k + ky) * c.k + kx;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..so.h {
                    let iy = (oy * c.stride + ky) as isize - c.pad as isize;
                    if iy < 0 || iy >= si.h as isize {
                        continue;
                    }
                    for ox in 0..so.w {
                        let ix = (ox * c.stride + kx) as isize - c.pad as isize;
                        if ix >= 0 && ix < si.w as isize {
                            plane[iy as usize * si.w + ix as usize] += src[oy * so.w + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

fn conv_forward(c: &Conv, p: &[f32], x: &[f32], si: Shape, so: Shape) -> Vec<f32> {
    let (n, kk) = (so.h * so.w, c.patch());
    let cols = im2col(x, si, c, so);
    let mut y = vec![0.0f32; c.cout * n];
    for o in 0..c.cout {
        y[o * n..(o + 1) * n].fill(p[c.b + o]);
    }
    // SAFETY: all slices are sized for the stated dimensions and strides.
    unsafe {
        sgemm(
            c.cout,
            kk,
            n,
            1.0,
            p[c.w..].as_ptr(),
            kk as isize,
            1,
            cols.as_ptr(),
            n as isize,
            1,
            1.0,
            y.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    c: &Conv,
    p: &[f32],
    x: &[f32],
    si: Shape,
    so: Shape,
    dy: &[f32],
    grad: &mut [f32],
    need_dx: bool,
) -> Vec<f32> {
    let (n, kk) = (so.h * so.w, c.patch());
    let cols = im2col(x, si, c, so);
    for o in 0..c.cout {
        grad[c.b + o] += dy[o * n..(o + 1) * n].iter().sum::<f32>();
    }
    // SAFETY: as in `conv_forward`; colsᵀ is read through swapped strides.
    unsafe {
        sgemm(
            c.cout,
            n,
            kk,
            1.0,
            dy.as_ptr(),
            n as isize,
            1,
            cols.as_ptr(),
            1,
            n as isize,
            1.0,
            grad[c.w..].as_mut_ptr(),
            kk as isize,
            1,
        );
    }
    if !need_dx {
        return Vec::new();
    }
    let mut dcols = vec![0.0f32; kk * n];
    // SAFETY: Wᵀ is read through swapped strides.
    unsafe {
        sgemm(
            kk,
            c.cout,
            n,
            1.0,
            p[c.w..].as_ptr(),
            1,
            kk as isize,
            dy.as_ptr(),
            n as isize,
            1,
            0.0,
            dcols.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    col2im(&dcols, si, c, so)
}

fn max_pool_argmax(x: &[f32], si: Shape, ch: usize, oy: usize, ox: usize) -> usize {
    let mut best = ch * si.h * si.w + 2 * oy * si.w + 2 * ox;
    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
        let i = ch * si.h * si.w + (2 * oy + dy) * si.w + 2 * ox + dx;
        if x[i] > x[best] {
            best = i;
        }
    }
    best
}

fn max_pool_forward(x: &[f32], si: Shape, so: Shape) -> Vec<f32> {
    let mut y = Vec::with_capacity(so.len());
    for ch in 0..so.c {
        for oy in 0..so.h {
            for ox in 0..so.w {
                y.push(x[max_pool_argmax(x, si, ch, oy, ox)]);
            }
        }
    }
    y
}

fn max_pool_backward(x: &[f32], si: Shape, so: Shape, dy: &[f32]) -> Vec<f32> {
    let mut dx = vec![0.0f32; si.len()];
    let mut k = 0;
    for ch in 0..so.c {
        for oy in 0..so.h {
            for ox in 0..so.w {
                dx[max_pool_argmax(x, si, ch, oy, ox)] += dy[k];
                k += 1;
            }
        }
    }
    dx
}
