//! BlazeFace short-range decoding: fixed SSD anchors, sigmoid scores and
//! score-weighted non-maximum suppression.

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};

use crate::tflite::Graph;

/// Clusters overlap when IoU exceeds this.
const NMS_IOU: f32 = 0.3;
/// Raw logits are clipped to this magnitude before the sigmoid.
const SCORE_CLIP: f32 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct NormBox {
    pub xmin: f32,
    pub ymin: f32,
    pub xmax: f32,
    pub ymax: f32,
    pub score: f32,
}

impl NormBox {
    fn area(&self) -> f32 {
        (self.xmax - self.xmin).max(0.0) * (self.ymax - self.ymin).max(0.0)
    }

    fn iou(&self, o: &NormBox) -> f32 {
        let w = (self.xmax.min(o.xmax) - self.xmin.max(o.xmin)).max(0.0);
        let h = (self.ymax.min(o.ymax) - self.ymin.max(o.ymin)).max(0.0);
        let inter = w * h;
        let union = self.area() + o.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Anchor centres for a square input of `side` pixels: stride 8 with 2
/// anchors per cell, then stride 16 with 6 (the 16/32 layers share a grid).
pub(crate) fn anchors(side: usize) -> Vec<(f32, f32)> {
    let mut out = Vec::new();
    for (stride, per_cell) in [(8, 2), (16, 6)] {
        let g = side / stride;
        for y in 0..g {
            for x in 0..g {
                let c = ((x as f32 + 0.5) / g as f32, (y as f32 + 0.5) / g as f32);
                out.extend(std::iter::repeat(c).take(per_cell));
            }
        }
    }
    out
}

pub(crate) struct BlazeFace {
    graph: Graph,
    side: usize,
    anchors: Vec<(f32, f32)>,
    boxes_out: usize,
    scores_out: usize,
}

impl BlazeFace {
    pub fn new(graph: Graph) -> Result<Self, String> {
        let side = match *graph.input_shape() {
            [1, h, w, 3] if h == w && h % 16 == 0 => h,
            ref s => return Err(format!("expected a square RGB input, got {s:?}")),
        };
        let anchors = anchors(side);
        let pos = |t: usize| graph.outputs().iter().position(|&o| o == t);
        let by_width = |w: usize| {
            graph
                .outputs()
                .iter()
                .position(|&o| graph.tensor_shape(o).last() == Some(&w))
        };
        let boxes_out = graph
            .output_named("regressors")
            .and_then(pos)
            .or_else(|| by_width(16))
            .ok_or("no box regressor output")?;
        let scores_out = graph
            .output_named("classificators")
            .and_then(pos)
            .or_else(|| by_width(1))
            .ok_or("no classifier output")?;
        for (out, width) in [(boxes_out, 16), (scores_out, 1)] {
            let shape = graph.tensor_shape(graph.outputs()[out]);
            if shape.iter().product::<usize>() != anchors.len() * width {
                return Err(format!(
                    "output shape {shape:?} does not match {} anchors",
                    anchors.len()
                ));
            }
        }
        Ok(Self {
            graph,
            side,
            anchors,
            boxes_out,
            scores_out,
        })
    }

    pub fn native_side(&self) -> usize {
        self.side
    }

    /// Raw `(regressors, logits)` for an already-normalized NHWC input.
    pub fn raw(&self, input: &[f32]) -> Result<(Vec<f32>, Vec<f32>), String> {
        let mut outs = self.graph.run(input)?;
        let scores = std::mem::take(&mut outs[self.scores_out]);
        let boxes = std::mem::take(&mut outs[self.boxes_out]);
        Ok((boxes, scores))
    }

    /// Detect on a square canvas already sized to the network input.
    pub fn detect_canvas(&self, canvas: &RgbImage, min_score: f32) -> Result<Vec<NormBox>, String> {
        let input: Vec<f32> = canvas.as_raw().iter().map(|&v| v as f32 / 127.5 - 1.0).collect();
        let (boxes, logits) = self.raw(&input)?;
        Ok(weighted_nms(decode(
            &boxes,
            &logits,
            &self.anchors,
            self.side as f32,
            min_score,
        )))
    }
}

pub(crate) fn sigmoid(logit: f32) -> f32 {
    1.0 / (1.0 + (-logit.clamp(-SCORE_CLIP, SCORE_CLIP)).exp())
}

fn decode(boxes: &[f32], logits: &[f32], anchors: &[(f32, f32)], scale: f32, min_score: f32) -> Vec<NormBox> {
    anchors
        .iter()
        .enumerate()
        .filter_map(|(i, &(ax, ay))| {
            let score = sigmoid(logits[i]);
            if score < min_score {
                return None;
            }
            let r = &boxes[i * 16..i * 16 + 4];
            let (cx, cy) = (ax + r[0] / scale, ay + r[1] / scale);
            let (w, h) = (r[2] / scale, r[3] / scale);
            Some(NormBox {
                xmin: cx - w / 2.0,
                ymin: cy - h / 2.0,
                xmax: cx + w / 2.0,
                ymax: cy + h / 2.0,
                score,
            })
        })
        .collect()
}

/// Greedy clustering by score; each cluster's box is the score-weighted
/// mean of its members and its score the best member's.
pub(crate) fn weighted_nms(mut cands: Vec<NormBox>) -> Vec<NormBox> {
    cands.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut out = Vec::new();
    while let Some(&best) = cands.first() {
        let (cluster, rest): (Vec<NormBox>, Vec<NormBox>) = cands.into_iter().partition(|c| best.iou(c) > NMS_IOU);
        // `best` always overlaps itself unless degenerate; keep it regardless.
        let cluster = if cluster.is_empty() { vec![best] } else { cluster };
        let total: f32 = cluster.iter().map(|c| c.score).sum();
        let avg = |f: fn(&NormBox) -> f32| cluster.iter().map(|c| f(c) * c.score).sum::<f32>() / total;
        out.push(NormBox {
            xmin: avg(|c| c.xmin),
            ymin: avg(|c| c.ymin),
            xmax: avg(|c| c.xmax),
            ymax: avg(|c| c.ymax),
            score: best.score,
        });
        cands = rest.into_iter().filter(|c| *c != best).collect();
    }
    out
}

/// Pad `image` to a centred square and resample it to `side`. Returns the
/// canvas, the square's side in source pixels and the image's offset in it.
pub(crate) fn letterbox(image: &RgbImage, side: u32) -> (RgbImage, u32, (u32, u32)) {
    let (w, h) = image.dimensions();
    let s = w.max(h);
    let (ox, oy) = ((s - w) / 2, (s - h) / 2);
    let canvas = if w == h {
        image.clone()
    } else {
        let mut sq = RgbImage::from_pixel(s, s, Rgb([0, 0, 0]));
        imageops::replace(&mut sq, image, ox as i64, oy as i64);
        sq
    };
    let canvas = if s == side {
        canvas
    } else {
        imageops::resize(&canvas, side, side, FilterType::Triangle)
    };
    (canvas, s, (ox, oy))
}
