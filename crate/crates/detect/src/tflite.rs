//! Float inference for TF-Lite graphs built from the handful of builtin ops
//! that single-shot face detectors use. fp16 weights behind DEQUANTIZE ops
//! are folded to f32 at load time.

use half::f16;

use crate::flatbuf::{FbError, Table};

// BuiltinOperator codes from the TF-Lite schema.
const OP_ADD: i32 = 0;
const OP_CONCATENATION: i32 = 2;
const OP_CONV_2D: i32 = 3;
const OP_DEPTHWISE_CONV_2D: i32 = 4;
const OP_DEQUANTIZE: i32 = 6;
const OP_MAX_POOL_2D: i32 = 17;
const OP_RELU: i32 = 19;
const OP_RESHAPE: i32 = 22;
const OP_PAD: i32 = 34;

// TensorType codes.
const T_FLOAT32: u8 = 0;
const T_FLOAT16: u8 = 1;
const T_INT32: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Activation {
    None,
    Relu,
    Relu6,
}

impl Activation {
    fn from_code(code: u8) -> Result<Self, String> {
        match code {
            0 => Ok(Self::None),
            1 => Ok(Self::Relu),
            3 => Ok(Self::Relu6),
            other => Err(format!("unsupported fused activation {other}")),
        }
    }

    #[inline]
    fn apply(self, v: f32) -> f32 {
        match self {
            Self::None => v,
            Self::Relu => v.max(0.0),
            Self::Relu6 => v.clamp(0.0, 6.0),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Window {
    stride_h: usize,
    stride_w: usize,
    same: bool,
}

impl Window {
    /// Output extent and leading pad for one spatial axis.
    fn axis(same: bool, input: usize, kernel: usize, stride: usize) -> (usize, usize) {
        if same {
            let out = input.div_ceil(stride);
            let needed = ((out - 1) * stride + kernel).saturating_sub(input);
            (out, needed / 2)
        } else {
            ((input.saturating_sub(kernel)) / stride + 1, 0)
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Conv {
        input: usize,
        output: usize,
        weights: usize,
        bias: Option<usize>,
        window: Window,
        act: Activation,
    },
    Depthwise {
        input: usize,
        output: usize,
        weights: usize,
        bias: Option<usize>,
        window: Window,
        act: Activation,
    },
    MaxPool {
        input: usize,
        output: usize,
        window: Window,
        kh: usize,
        kw: usize,
    },
    Add {
        a: usize,
        b: usize,
        output: usize,
        act: Activation,
    },
    Relu {
        input: usize,
        output: usize,
    },
    Pad {
        input: usize,
        output: usize,
        pads: [(usize, usize); 4],
    },
    Reshape {
        input: usize,
        output: usize,
    },
    Concat {
        inputs: Vec<usize>,
        output: usize,
        axis: usize,
        act: Activation,
    },
}

#[derive(Debug, Clone)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

/// A loaded graph. Immutable after load, so one instance can serve many
/// threads; each `run` allocates its own activations.
#[derive(Debug, Clone)]
pub struct Graph {
    tensors: Vec<TensorInfo>,
    constants: Vec<Option<Vec<f32>>>,
    ops: Vec<Op>,
    input: usize,
    outputs: Vec<usize>,
}

fn fb(e: FbError) -> String {
    e.0
}

fn tensor_index(i: i32, count: usize) -> Result<usize, String> {
    usize::try_from(i)
        .ok()
        .filter(|&i| i < count)
        .ok_or_else(|| format!("tensor index {i} out of range"))
}

fn window_from(opts: Option<Table<'_>>) -> Result<Window, String> {
    let (padding, sw, sh) = match opts {
        Some(t) => (
            t.u8_or(0, 0).map_err(fb)?,
            t.i32_or(1, 1).map_err(fb)?,
            t.i32_or(2, 1).map_err(fb)?,
        ),
        None => (0, 1, 1),
    };
    if sw < 1 || sh < 1 {
        return Err(format!("invalid stride {sw}x{sh}"));
    }
    Ok(Window {
        stride_h: sh as usize,
        stride_w: sw as usize,
        same: padding == 0,
    })
}

impl Graph {
    pub fn parse(buf: &[u8]) -> Result<Self, String> {
        if buf.len() < 8 || &buf[4..8] != b"TFL3" {
            return Err("not a TF-Lite flatbuffer (missing TFL3 identifier)".into());
        }
        let model = Table::root(buf).map_err(fb)?;
        let opcodes: Vec<i32> = model
            .tables(1)
            .map_err(fb)?
            .iter()
            .map(|c| {
                let deprecated = c.u8_or(0, 0)? as i32;
                let code = c.i32_or(3, 0)?;
                Ok(code.max(deprecated))
            })
            .collect::<Result<_, FbError>>()
            .map_err(fb)?;
        let buffers = model.tables(4).map_err(fb)?;
        let subgraphs = model.tables(2).map_err(fb)?;
        let sg = subgraphs.first().ok_or("model has no subgraph")?;

        let tensor_tables = sg.tables(0).map_err(fb)?;
        let n = tensor_tables.len();
        let mut tensors = Vec::with_capacity(n);
        let mut constants: Vec<Option<Vec<f32>>> = vec![None; n];
        let mut raw_f16: Vec<Option<Vec<f32>>> = vec![None; n];
        let mut ints: Vec<Option<Vec<i32>>> = vec![None; n];
        for (i, t) in tensor_tables.iter().enumerate() {
            let shape = t
                .i32s(0)
                .map_err(fb)?
                .into_iter()
                .map(|d| usize::try_from(d).map_err(|_| format!("negative dim {d}")))
                .collect::<Result<Vec<_>, _>>()?;
            let ty = t.u8_or(1, T_FLOAT32).map_err(fb)?;
            let buffer = t.u32_or(2, 0).map_err(fb)? as usize;
            let name = t.string(3).map_err(fb)?;
            let data = match buffers.get(buffer) {
                Some(b) if buffer != 0 => b.bytes(0).map_err(fb)?,
                _ => &[],
            };
            if !data.is_empty() {
                let elems: usize = shape.iter().product();
                match ty {
                    T_FLOAT32 if data.len() == elems * 4 => {
                        constants[i] = Some(
                            data.chunks_exact(4)
                                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                                .collect(),
                        )
                    }
                    T_FLOAT16 if data.len() == elems * 2 => {
                        raw_f16[i] = Some(
                            data.chunks_exact(2)
                                .map(|c| f16::from_le_bytes([c[0], c[1]]).to_f32())
                                .collect(),
                        )
                    }
                    T_INT32 if data.len() == elems * 4 => {
                        ints[i] = Some(
                            data.chunks_exact(4)
                                .map(|c| i32::from_le_bytes(c.try_into().expect("4 bytes")))
                                .collect(),
                        )
                    }
                    _ => {
                        return Err(format!(
                            "tensor {name}: unsupported constant (type {ty}, {} bytes)",
                            data.len()
                        ))
                    }
                }
            }
            tensors.push(TensorInfo { name, shape });
        }

        let idx = |v: i32| tensor_index(v, n);
        let inputs = sg.i32s(1).map_err(fb)?;
        let [input] = inputs.as_slice() else {
            return Err(format!("expected one graph input, found {}", inputs.len()));
        };
        let input = idx(*input)?;
        let outputs = sg
            .i32s(2)
            .map_err(fb)?
            .into_iter()
            .map(idx)
            .collect::<Result<Vec<_>, _>>()?;

        let mut ops = Vec::new();
        for op in sg.tables(3).map_err(fb)? {
            let opcode_index = op.u32_or(0, 0).map_err(fb)? as usize;
            let code = *opcodes
                .get(opcode_index)
                .ok_or_else(|| format!("opcode index {opcode_index} out of range"))?;
            // Optional inputs are encoded as -1.
            let ins: Vec<Option<usize>> = op
                .i32s(1)
                .map_err(fb)?
                .into_iter()
                .map(|i| if i < 0 { Ok(None) } else { idx(i).map(Some) })
                .collect::<Result<_, _>>()?;
            let outs = op.i32s(2).map_err(fb)?;
            let output = idx(*outs.first().ok_or("operator without output")?)?;
            let opts = op.table(4).map_err(fb)?;
            let arg = |k: usize| -> Result<usize, String> {
                ins.get(k)
                    .copied()
                    .flatten()
                    .ok_or_else(|| format!("operator {code} missing input {k}"))
            };
            let act_at = |field: usize| -> Result<Activation, String> {
                let code = match opts {
                    Some(t) => t.u8_or(field, 0).map_err(fb)?,
                    None => 0,
                };
                Activation::from_code(code)
            };
            let dilation_is_one = |first: usize| -> Result<bool, String> {
                Ok(match opts {
                    Some(t) => t.i32_or(first, 1).map_err(fb)? == 1 && t.i32_or(first + 1, 1).map_err(fb)? == 1,
                    None => true,
                })
            };
            let parsed = match code {
                OP_DEQUANTIZE => {
                    let src = arg(0)?;
                    let folded = raw_f16[src]
                        .clone()
                        .ok_or("DEQUANTIZE of a non-constant tensor is not supported")?;
                    constants[output] = Some(folded);
                    continue;
                }
                OP_CONV_2D => {
                    if !dilation_is_one(4)? {
                        return Err("dilated CONV_2D is not supported".into());
                    }
                    Op::Conv {
                        input: arg(0)?,
                        output,
                        weights: arg(1)?,
                        bias: ins.get(2).copied().flatten(),
                        window: window_from(opts)?,
                        act: act_at(3)?,
                    }
                }
                OP_DEPTHWISE_CONV_2D => {
                    if !dilation_is_one(5)? {
                        return Err("dilated DEPTHWISE_CONV_2D is not supported".into());
                    }
                    Op::Depthwise {
                        input: arg(0)?,
                        output,
                        weights: arg(1)?,
                        bias: ins.get(2).copied().flatten(),
                        window: window_from(opts)?,
                        act: act_at(4)?,
                    }
                }
                OP_MAX_POOL_2D => {
                    let t = opts.ok_or("MAX_POOL_2D without options")?;
                    if act_at(5)? != Activation::None {
                        return Err("fused activation on MAX_POOL_2D is not supported".into());
                    }
                    Op::MaxPool {
                        input: arg(0)?,
                        output,
                        window: window_from(opts)?,
                        kw: t.i32_or(3, 1).map_err(fb)?.max(1) as usize,
                        kh: t.i32_or(4, 1).map_err(fb)?.max(1) as usize,
                    }
                }
                OP_ADD => Op::Add {
                    a: arg(0)?,
                    b: arg(1)?,
                    output,
                    act: act_at(0)?,
                },
                OP_RELU => Op::Relu { input: arg(0)?, output },
                OP_PAD => {
                    let p = ints[arg(1)?].as_ref().ok_or("PAD with non-constant paddings")?;
                    if p.len() != 8 || p.iter().any(|&v| v < 0) {
                        return Err("PAD expects constant non-negative 4x2 paddings".into());
                    }
                    let mut pads = [(0, 0); 4];
                    for (d, pad) in pads.iter_mut().enumerate() {
                        *pad = (p[2 * d] as usize, p[2 * d + 1] as usize);
                    }
                    Op::Pad {
                        input: arg(0)?,
                        output,
                        pads,
                    }
                }
                OP_RESHAPE => Op::Reshape { input: arg(0)?, output },
                OP_CONCATENATION => {
                    let axis = opts.map(|t| t.i32_or(0, 0)).transpose().map_err(fb)?;
                    let rank = tensors[output].shape.len() as i32;
                    let axis = axis.unwrap_or(0);
                    let axis = if axis < 0 { axis + rank } else { axis };
                    if axis < 0 || axis >= rank {
                        return Err(format!("concatenation axis {axis} out of range"));
                    }
                    Op::Concat {
                        inputs: ins.iter().copied().flatten().collect(),
                        output,
                        axis: axis as usize,
                        act: act_at(1)?,
                    }
                }
                other => return Err(format!("unsupported builtin operator {other}")),
            };
            ops.push(parsed);
        }

        let graph = Self {
            tensors,
            constants,
            ops,
            input,
            outputs,
        };
        graph.check_shapes()?;
        Ok(graph)
    }

    fn shape(&self, t: usize) -> &[usize] {
        &self.tensors[t].shape
    }

    fn nhwc(&self, t: usize) -> Result<[usize; 4], String> {
        match *self.shape(t) {
            [n, h, w, c] if n == 1 => Ok([n, h, w, c]),
            ref s => Err(format!(
                "{}: expected NHWC with batch 1, got {s:?}",
                self.tensors[t].name
            )),
        }
    }

    fn constant(&self, t: usize) -> Result<&[f32], String> {
        self.constants[t]
            .as_deref()
            .ok_or_else(|| format!("{}: expected constant weights", self.tensors[t].name))
    }

    /// Validate every op's static shapes once so `run` can index freely.
    fn check_shapes(&self) -> Result<(), String> {
        let elems = |t: usize| self.shape(t).iter().product::<usize>();
        for op in &self.ops {
            match op {
                Op::Conv {
                    input,
                    output,
                    weights,
                    bias,
                    window,
                    ..
                }
                | Op::Depthwise {
                    input,
                    output,
                    weights,
                    bias,
                    window,
                    ..
                } => {
                    let [_, h, w, c] = self.nhwc(*input)?;
                    let [_, oh, ow, oc] = self.nhwc(*output)?;
                    let [wo, kh, kw, wc] = match *self.shape(*weights) {
                        [a, b, c, d] => [a, b, c, d],
                        ref s => return Err(format!("bad filter shape {s:?}")),
                    };
                    let depthwise = matches!(op, Op::Depthwise { .. });
                    let ok_channels = if depthwise {
                        wo == 1 && wc == oc && oc % c == 0
                    } else {
                        wo == oc && wc == c
                    };
                    let (eh, _) = Window::axis(window.same, h, kh, window.stride_h);
                    let (ew, _) = Window::axis(window.same, w, kw, window.stride_w);
                    if !ok_channels || (eh, ew) != (oh, ow) {
                        return Err(format!("{}: inconsistent conv shapes", self.tensors[*output].name));
                    }
                    if self.constant(*weights)?.len() != elems(*weights) {
                        return Err("filter size mismatch".into());
                    }
                    if let Some(b) = bias {
                        if self.constant(*b)?.len() != oc {
                            return Err("bias size mismatch".into());
                        }
                    }
                }
                Op::MaxPool {
                    input,
                    output,
                    window,
                    kh,
                    kw,
                } => {
                    let [_, h, w, c] = self.nhwc(*input)?;
                    let [_, oh, ow, oc] = self.nhwc(*output)?;
                    let (eh, _) = Window::axis(window.same, h, *kh, window.stride_h);
                    let (ew, _) = Window::axis(window.same, w, *kw, window.stride_w);
                    if (eh, ew, c) != (oh, ow, oc) {
                        return Err("inconsistent pool shapes".into());
                    }
                }
                Op::Add { a, b, output, .. } => {
                    if self.shape(*a) != self.shape(*output) || self.shape(*b) != self.shape(*output) {
                        return Err("broadcasting ADD is not supported".into());
                    }
                }
                Op::Relu { input, output } | Op::Reshape { input, output } => {
                    if elems(*input) != elems(*output) {
                        return Err("element count mismatch".into());
                    }
                }
                Op::Pad { input, output, pads } => {
                    let i = self.nhwc(*input)?;
                    let o = self.nhwc(*output)?;
                    if (0..4).any(|d| i[d] + pads[d].0 + pads[d].1 != o[d]) {
                        return Err("inconsistent pad shapes".into());
                    }
                }
                Op::Concat {
                    inputs, output, axis, ..
                } => {
                    let out = self.shape(*output);
                    let mut along = 0;
                    for &i in inputs {
                        let s = self.shape(i);
                        if s.len() != out.len() || (0..s.len()).any(|d| d != *axis && s[d] != out[d]) {
                            return Err("inconsistent concatenation shapes".into());
                        }
                        along += s[*axis];
                    }
                    if along != out[*axis] {
                        return Err("inconsistent concatenation extent".into());
                    }
                }
            }
        }
        Ok(())
    }

    pub fn input_shape(&self) -> &[usize] {
        self.shape(self.input)
    }

    /// Output tensor index by name, falling back to `None` when absent.
    pub fn output_named(&self, name: &str) -> Option<usize> {
        self.outputs.iter().copied().find(|&t| self.tensors[t].name == name)
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    pub fn tensor_shape(&self, t: usize) -> &[usize] {
        self.shape(t)
    }

    /// Run the graph; returns the values of every graph output, in
    /// `outputs()` order.
    pub fn run(&self, input: &[f32]) -> Result<Vec<Vec<f32>>, String> {
        let want: usize = self.input_shape().iter().product();
        if input.len() != want {
            return Err(format!("input has {} values, graph expects {want}", input.len()));
        }
        let mut values: Vec<Option<Vec<f32>>> = vec![None; self.tensors.len()];
        values[self.input] = Some(input.to_vec());

        for op in &self.ops {
            let (output, result) = self.eval(op, &values)?;
            values[output] = Some(result);
        }
        self.outputs
            .iter()
            .map(|&t| {
                values[t]
                    .take()
                    .or_else(|| self.constants[t].clone())
                    .ok_or_else(|| format!("output {} was never computed", self.tensors[t].name))
            })
            .collect()
    }

    fn eval(&self, op: &Op, values: &[Option<Vec<f32>>]) -> Result<(usize, Vec<f32>), String> {
        let get = |t: usize| -> Result<&[f32], String> {
            values[t]
                .as_deref()
                .or(self.constants[t].as_deref())
                .ok_or_else(|| format!("{} used before it was computed", self.tensors[t].name))
        };
        Ok(match op {
            Op::Conv {
                input,
                output,
                weights,
                bias,
                window,
                act,
            } => {
                let x = get(*input)?;
                let out = conv2d(
                    x,
                    self.nhwc(*input)?,
                    self.constant(*weights)?,
                    self.shape(*weights),
                    bias.map(|b| self.constant(b)).transpose()?,
                    self.nhwc(*output)?,
                    *window,
                    *act,
                );
                (*output, out)
            }
            Op::Depthwise {
                input,
                output,
                weights,
                bias,
                window,
                act,
            } => {
                let x = get(*input)?;
                let out = depthwise(
                    x,
                    self.nhwc(*input)?,
                    self.constant(*weights)?,
                    self.shape(*weights),
                    bias.map(|b| self.constant(b)).transpose()?,
                    self.nhwc(*output)?,
                    *window,
                    *act,
                );
                (*output, out)
            }
            Op::MaxPool {
                input,
                output,
                window,
                kh,
                kw,
            } => {
                let out = max_pool(get(*input)?, self.nhwc(*input)?, self.nhwc(*output)?, *window, *kh, *kw);
                (*output, out)
            }
            Op::Add { a, b, output, act } => {
                let (a, b) = (get(*a)?, get(*b)?);
                (*output, a.iter().zip(b).map(|(x, y)| act.apply(x + y)).collect())
            }
            Op::Relu { input, output } => (*output, get(*input)?.iter().map(|v| v.max(0.0)).collect()),
            Op::Reshape { input, output } => (*output, get(*input)?.to_vec()),
            Op::Pad { input, output, pads } => (
                *output,
                pad(get(*input)?, self.nhwc(*input)?, self.nhwc(*output)?, pads),
            ),
            Op::Concat {
                inputs,
                output,
                axis,
                act,
            } => {
                let shape = self.shape(*output);
                let outer: usize = shape[..*axis].iter().product();
                let mut out = Vec::with_capacity(shape.iter().product());
                let parts = inputs
                    .iter()
                    .map(|&t| {
                        let inner: usize = self.shape(t)[*axis..].iter().product();
                        get(t).map(|v| (v, inner))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                for o in 0..outer {
                    for (v, inner) in &parts {
                        out.extend(v[o * inner..(o + 1) * inner].iter().map(|&x| act.apply(x)));
                    }
                }
                (*output, out)
            }
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn conv2d(
    x: &[f32],
    [_, h, w, c]: [usize; 4],
    filter: &[f32],
    fshape: &[usize],
    bias: Option<&[f32]>,
    [_, oh, ow, oc]: [usize; 4],
    win: Window,
    act: Activation,
) -> Vec<f32> {
    let (kh, kw) = (fshape[1], fshape[2]);
    let (_, pad_t) = Window::axis(win.same, h, kh, win.stride_h);
    let (_, pad_l) = Window::axis(win.same, w, kw, win.stride_w);
    let k = kh * kw * c;
    let rows = oh * ow;

    let pointwise = kh == 1 && kw == 1 && win.stride_h == 1 && win.stride_w == 1;
    let cols;
    let a: &[f32] = if pointwise {
        x
    } else {
        // im2col with zero padding
        let mut buf = vec![0f32; rows * k];
        for oy in 0..oh {
            for ox in 0..ow {
                let row = &mut buf[(oy * ow + ox) * k..][..k];
                for ky in 0..kh {
                    let iy = (oy * win.stride_h + ky) as isize - pad_t as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * win.stride_w + kx) as isize - pad_l as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let src = (iy as usize * w + ix as usize) * c;
                        row[(ky * kw + kx) * c..][..c].copy_from_slice(&x[src..src + c]);
                    }
                }
            }
        }
        cols = buf;
        &cols
    };

    let mut out = vec![0f32; rows * oc];
    if let Some(b) = bias {
        for r in out.chunks_exact_mut(oc) {
            r.copy_from_slice(b);
        }
    }
    // out[rows x oc] += a[rows x k] * filter^T, filter stored [oc x k].
    unsafe {
        matrixmultiply::sgemm(
            rows,
            k,
            oc,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            filter.as_ptr(),
            1,
            k as isize,
            1.0,
            out.as_mut_ptr(),
            oc as isize,
            1,
        );
    }
    if act != Activation::None {
        out.iter_mut().for_each(|v| *v = act.apply(*v));
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn depthwise(
    x: &[f32],
    [_, h, w, c]: [usize; 4],
    filter: &[f32],
    fshape: &[usize],
    bias: Option<&[f32]>,
    [_, oh, ow, oc]: [usize; 4],
    win: Window,
    act: Activation,
) -> Vec<f32> {
    let (kh, kw) = (fshape[1], fshape[2]);
    let mult = oc / c;
    let (_, pad_t) = Window::axis(win.same, h, kh, win.stride_h);
    let (_, pad_l) = Window::axis(win.same, w, kw, win.stride_w);
    let mut out = vec![0f32; oh * ow * oc];
    for oy in 0..oh {
        for ox in 0..ow {
            let acc = &mut out[(oy * ow + ox) * oc..][..oc];
            if let Some(b) = bias {
                acc.copy_from_slice(b);
            }
            for ky in 0..kh {
                let iy = (oy * win.stride_h + ky) as isize - pad_t as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (ox * win.stride_w + kx) as isize - pad_l as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let px = &x[(iy as usize * w + ix as usize) * c..][..c];
                    let f = &filter[(ky * kw + kx) * oc..][..oc];
                    if mult == 1 {
                        for ((a, &v), &wt) in acc.iter_mut().zip(px).zip(f) {
                            *a += v * wt;
                        }
                    } else {
                        for (o, a) in acc.iter_mut().enumerate() {
                            *a += px[o / mult] * f[o];
                        }
                    }
                }
            }
            if act != Activation::None {
                acc.iter_mut().for_each(|v| *v = act.apply(*v));
            }
        }
    }
    out
}

fn max_pool(
    x: &[f32],
    [_, h, w, c]: [usize; 4],
    [_, oh, ow, _]: [usize; 4],
    win: Window,
    kh: usize,
    kw: usize,
) -> Vec<f32> {
    let (_, pad_t) = Window::axis(win.same, h, kh, win.stride_h);
    let (_, pad_l) = Window::axis(win.same, w, kw, win.stride_w);
    let mut out = vec![f32::NEG_INFINITY; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let acc = &mut out[(oy * ow + ox) * c..][..c];
            for ky in 0..kh {
                let iy = (oy * win.stride_h + ky) as isize - pad_t as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (ox * win.stride_w + kx) as isize - pad_l as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let px = &x[(iy as usize * w + ix as usize) * c..][..c];
                    for (a, &v) in acc.iter_mut().zip(px) {
                        *a = a.max(v);
                    }
                }
            }
        }
    }
    out
}

fn pad(x: &[f32], i: [usize; 4], o: [usize; 4], pads: &[(usize, usize); 4]) -> Vec<f32> {
    let mut out = vec![0f32; o.iter().product()];
    for n in 0..i[0] {
        for y in 0..i[1] {
            for xx in 0..i[2] {
                let src = ((n * i[1] + y) * i[2] + xx) * i[3];
                let dst = (((n + pads[0].0) * o[1] + y + pads[1].0) * o[2] + xx + pads[2].0) * o[3] + pads[3].0;
                out[dst..dst + i[3]].copy_from_slice(&x[src..src + i[3]]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_padding_matches_tflite_convention() {
        // 128 wide, 5x5 kernel, stride 2: out 64, total pad 3, leading 1.
        assert_eq!(Window::axis(true, 128, 5, 2), (64, 1));
        assert_eq!(Window::axis(true, 16, 3, 1), (16, 1));
        assert_eq!(Window::axis(false, 16, 3, 1), (14, 0));
        assert_eq!(Window::axis(false, 9, 2, 2), (4, 0));
    }

    /// Direct nested-loop convolution as an oracle for the im2col path.
    fn naive_conv(x: &[f32], [h, w, c]: [usize; 3], f: &[f32], [oc, kh, kw]: [usize; 3], stride: usize) -> Vec<f32> {
        let (oh, pt) = Window::axis(true, h, kh, stride);
        let (ow, pl) = Window::axis(true, w, kw, stride);
        let mut out = vec![0f32; oh * ow * oc];
        for oy in 0..oh {
            for ox in 0..ow {
                for o in 0..oc {
                    let mut s = 0.0;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - pt as isize;
                            let ix = (ox * stride + kx) as isize - pl as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            for ci in 0..c {
                                s +=
                                    x[(iy as usize * w + ix as usize) * c + ci] * f[((o * kh + ky) * kw + kx) * c + ci];
                            }
                        }
                    }
                    out[(oy * ow + ox) * oc + o] = s;
                }
            }
        }
        out
    }

    #[test]
    fn im2col_conv_matches_direct_loops() {
        let (h, w, c, oc) = (7, 6, 3, 4);
        let x: Vec<f32> = (0..h * w * c).map(|i| ((i * 7 % 11) as f32) - 5.0).collect();
        for (k, stride) in [(3, 1), (3, 2), (5, 2), (1, 1)] {
            let f: Vec<f32> = (0..oc * k * k * c).map(|i| ((i * 5 % 9) as f32) * 0.1 - 0.4).collect();
            let (oh, _) = Window::axis(true, h, k, stride);
            let (ow, _) = Window::axis(true, w, k, stride);
            let got = conv2d(
                &x,
                [1, h, w, c],
                &f,
                &[oc, k, k, c],
                None,
                [1, oh, ow, oc],
                Window {
                    stride_h: stride,
                    stride_w: stride,
                    same: true,
                },
                Activation::None,
            );
            let want = naive_conv(&x, [h, w, c], &f, [oc, k, k], stride);
            for (g, e) in got.iter().zip(&want) {
                assert!((g - e).abs() < 1e-4, "k={k} s={stride}: {g} vs {e}");
            }
        }
    }

    #[test]
    fn pad_places_input_at_offset() {
        let x = [1.0, 2.0];
        let out = pad(&x, [1, 1, 1, 2], [1, 2, 2, 3], &[(0, 0), (1, 0), (0, 1), (1, 0)]);
        // y=1, x=0, channels 1..3
        let at = |y: usize, xx: usize, ch: usize| out[(y * 2 + xx) * 3 + ch];
        assert_eq!(at(1, 0, 1), 1.0);
        assert_eq!(at(1, 0, 2), 2.0);
        assert_eq!(out.iter().sum::<f32>(), 3.0);
    }

    #[test]
    fn rejects_non_tflite_bytes() {
        assert!(Graph::parse(b"").is_err());
        assert!(Graph::parse(b"\x10\0\0\0XXXXgarbage").is_err());
    }
}
