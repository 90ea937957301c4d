//! Evaluator for OpenCV boosted Haar cascades (the XML format written by
//! `opencv_traincascade`), following `CascadeClassifier::detectMultiScale`:
//! an image pyramid with factor 1.1, variance-normalized features, and
//! neighbour grouping of raw hits.

use image::{GrayImage, Luma, RgbImage};
use proctor_core::PixelRect;

const SCALE_FACTOR: f64 = 1.1;
const GROUP_EPS: f64 = 0.2;

#[derive(Debug, Clone)]
struct Feature {
    /// (x, y, w, h, weight) in window coordinates.
    rects: Vec<(u32, u32, u32, u32, f64)>,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    feature: usize,
    threshold: f64,
    /// Child index when > 0, otherwise `-leaf`.
    left: i32,
    right: i32,
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
    leaves: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Stage {
    threshold: f64,
    trees: Vec<Tree>,
}

#[derive(Debug, Clone)]
pub(crate) struct Cascade {
    win_w: u32,
    win_h: u32,
    stages: Vec<Stage>,
    features: Vec<Feature>,
}

fn nums<T: std::str::FromStr>(text: &str) -> Result<Vec<T>, String> {
    text.split_whitespace()
        .map(|t| t.parse::<T>().map_err(|_| format!("bad number {t:?}")))
        .collect()
}

fn child<'a, 'i>(n: roxmltree::Node<'a, 'i>, tag: &str) -> Result<roxmltree::Node<'a, 'i>, String> {
    n.children()
        .find(|c| c.has_tag_name(tag))
        .ok_or_else(|| format!("missing <{tag}>"))
}

fn items<'a, 'i>(n: roxmltree::Node<'a, 'i>) -> impl Iterator<Item = roxmltree::Node<'a, 'i>> {
    n.children().filter(|c| c.is_element())
}

fn text<'a>(n: roxmltree::Node<'a, '_>) -> &'a str {
    n.text().unwrap_or("")
}

impl Cascade {
    pub fn parse(xml: &str) -> Result<Self, String> {
        let doc = roxmltree::Document::parse(xml).map_err(|e| e.to_string())?;
        let root = doc
            .descendants()
            .find(|n| n.has_tag_name("cascade"))
            .ok_or("no <cascade> element (old-style cascades are not supported)")?;
        let kind = text(child(root, "featureType")?).trim();
        if kind != "HAAR" {
            return Err(format!("feature type {kind} is not supported"));
        }
        let win_w: u32 = text(child(root, "width")?).trim().parse().map_err(|_| "bad width")?;
        let win_h: u32 = text(child(root, "height")?).trim().parse().map_err(|_| "bad height")?;
        if win_w < 3 || win_h < 3 {
            return Err("window too small".into());
        }

        let mut features = Vec::new();
        for f in items(child(root, "features")?) {
            if let Ok(t) = child(f, "tilted") {
                if text(t).trim() != "0" {
                    return Err("tilted features are not supported".into());
                }
            }
            let mut rects = Vec::new();
            for r in items(child(f, "rects")?) {
                let v: Vec<f64> = nums(text(r))?;
                let [x, y, w, h, wt] = v[..] else {
                    return Err("feature rect needs 5 numbers".into());
                };
                if x < 0.0 || y < 0.0 || x + w > win_w as f64 || y + h > win_h as f64 {
                    return Err("feature rect outside the window".into());
                }
                rects.push((x as u32, y as u32, w as u32, h as u32, wt));
            }
            features.push(Feature { rects });
        }

        let mut stages = Vec::new();
        for s in items(child(root, "stages")?) {
            let threshold: f64 = text(child(s, "stageThreshold")?)
                .trim()
                .parse()
                .map_err(|_| "bad stage threshold")?;
            let mut trees = Vec::new();
            for w in items(child(s, "weakClassifiers")?) {
                let raw: Vec<f64> = nums(text(child(w, "internalNodes")?))?;
                let leaves: Vec<f64> = nums(text(child(w, "leafValues")?))?;
                if raw.is_empty() || raw.len() % 4 != 0 {
                    return Err("internalNodes must come in groups of 4".into());
                }
                let nodes: Vec<Node> = raw
                    .chunks_exact(4)
                    .map(|c| Node {
                        left: c[0] as i32,
                        right: c[1] as i32,
                        feature: c[2] as usize,
                        threshold: c[3],
                    })
                    .collect();
                for n in &nodes {
                    let ok = |i: i32| {
                        if i > 0 {
                            (i as usize) < nodes.len()
                        } else {
                            ((-i) as usize) < leaves.len()
                        }
                    };
                    if n.feature >= features.len() || !ok(n.left) || !ok(n.right) {
                        return Err("weak classifier references are out of range".into());
                    }
                }
                trees.push(Tree { nodes, leaves });
            }
            stages.push(Stage { threshold, trees });
        }
        if stages.is_empty() {
            return Err("cascade has no stages".into());
        }
        Ok(Self {
            win_w,
            win_h,
            stages,
            features,
        })
    }

    /// Raw window hits on one pyramid level.
    fn scan(&self, img: &GrayImage, factor: f64, win: (u32, u32), hits: &mut Vec<PixelRect>) {
        let (w, h) = img.dimensions();
        let ii = Integral::new(img);
        let step = if factor > 2.0 { 1 } else { 2 };
        let (nw, nh) = (self.win_w - 2, self.win_h - 2);
        let area = (nw * nh) as f64;
        let mut y = 0;
        while y + self.win_h <= h {
            let mut x = 0;
            while x + self.win_w <= w {
                let s = ii.sum(x + 1, y + 1, nw, nh);
                let sq = ii.sq_sum(x + 1, y + 1, nw, nh);
                let nf = area * sq - s * s;
                let inv_norm = 1.0 / if nf > 0.0 { nf.sqrt() } else { 1.0 };
                match self.run_at(&ii, x, y, inv_norm) {
                    Ok(()) => hits.push(PixelRect::new(
                        (x as f64 * factor).round() as u32,
                        (y as f64 * factor).round() as u32,
                        win.0,
                        win.1,
                    )),
                    // Rejected by the very first stage: skip ahead.
                    Err(0) => x += step,
                    Err(_) => {}
                }
                x += step;
            }
            y += step;
        }
    }

    fn stage_sum(&self, stage: &Stage, ii: &Integral, x: u32, y: u32, inv_norm: f64) -> f64 {
        let mut sum = 0.0;
        for tree in &stage.trees {
            let mut idx = 0i32;
            let leaf = loop {
                let node = tree.nodes[idx as usize];
                let f = &self.features[node.feature];
                let v: f64 = f
                    .rects
                    .iter()
                    .map(|&(rx, ry, rw, rh, wt)| wt * ii.sum(x + rx, y + ry, rw, rh))
                    .sum::<f64>()
                    * inv_norm;
                idx = if v < node.threshold { node.left } else { node.right };
                if idx <= 0 {
                    break (-idx) as usize;
                }
            };
            sum += tree.leaves[leaf];
        }
        sum
    }

    /// `Err(i)` when stage `i` rejects the window.
    fn run_at(&self, ii: &Integral, x: u32, y: u32, inv_norm: f64) -> Result<(), usize> {
        for (i, stage) in self.stages.iter().enumerate() {
            if self.stage_sum(stage, ii, x, y, inv_norm) < stage.threshold {
                return Err(i);
            }
        }
        Ok(())
    }

    /// Grouped detections with their neighbour counts, in `gray`'s pixels.
    pub fn detect(&self, gray: &GrayImage) -> Vec<(PixelRect, u32)> {
        let (w, h) = gray.dimensions();
        let mut hits = Vec::new();
        let mut factor = 1.0f64;
        loop {
            let win = (
                (self.win_w as f64 * factor).round() as u32,
                (self.win_h as f64 * factor).round() as u32,
            );
            let sw = (w as f64 / factor).round() as u32;
            let sh = (h as f64 / factor).round() as u32;
            if sw < self.win_w || sh < self.win_h || win.0 > w || win.1 > h {
                break;
            }
            let scaled = if factor == 1.0 {
                gray.clone()
            } else {
                resize_bilinear(gray, sw, sh)
            };
            self.scan(&scaled, factor, win, &mut hits);
            factor *= SCALE_FACTOR;
        }
        group_rectangles(&hits)
    }
}

struct Integral {
    stride: usize,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Integral {
    fn new(img: &GrayImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let stride = w + 1;
        let mut sum = vec![0f64; stride * (h + 1)];
        let mut sq = vec![0f64; stride * (h + 1)];
        for y in 0..h {
            let (mut rs, mut rq) = (0f64, 0f64);
            for x in 0..w {
                let v = img.get_pixel(x as u32, y as u32)[0] as f64;
                rs += v;
                rq += v * v;
                sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + rs;
                sq[(y + 1) * stride + x + 1] = sq[y * stride + x + 1] + rq;
            }
        }
        Self { stride, sum, sq }
    }

    fn rect(table: &[f64], stride: usize, x: u32, y: u32, w: u32, h: u32) -> f64 {
        let (x0, y0, x1, y1) = (x as usize, y as usize, (x + w) as usize, (y + h) as usize);
        table[y1 * stride + x1] - table[y0 * stride + x1] - table[y1 * stride + x0] + table[y0 * stride + x0]
    }

    fn sum(&self, x: u32, y: u32, w: u32, h: u32) -> f64 {
        Self::rect(&self.sum, self.stride, x, y, w, h)
    }

    fn sq_sum(&self, x: u32, y: u32, w: u32, h: u32) -> f64 {
        Self::rect(&self.sq, self.stride, x, y, w, h)
    }
}

/// BT.601 luma with the same fixed-point rounding OpenCV uses.
pub(crate) fn to_gray(img: &RgbImage) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let [r, g, b] = img.get_pixel(x, y).0;
        let v = (r as u32 * 4899 + g as u32 * 9617 + b as u32 * 1868 + (1 << 13)) >> 14;
        Luma([v as u8])
    })
}

/// Bilinear resampling with pixel-centre alignment, bit-exact with OpenCV's
/// fixed-point `INTER_LINEAR` path for 8-bit images.
pub(crate) fn resize_bilinear(img: &GrayImage, nw: u32, nh: u32) -> GrayImage {
    const ONE: i32 = 2048;
    let (w, h) = img.dimensions();
    let coord = |d: u32, scale: f64, max: u32| -> (u32, u32, i32) {
        let f = (d as f64 + 0.5) * scale - 0.5;
        let mut i = f.floor() as i64;
        let mut frac = f - i as f64;
        if i < 0 {
            (i, frac) = (0, 0.0);
        }
        if i >= max as i64 - 1 {
            (i, frac) = (max as i64 - 1, 0.0);
        }
        let i = i as u32;
        (i, (i + 1).min(max - 1), (frac * ONE as f64).round() as i32)
    };
    let xs: Vec<_> = (0..nw).map(|x| coord(x, w as f64 / nw as f64, w)).collect();
    let ys: Vec<_> = (0..nh).map(|y| coord(y, h as f64 / nh as f64, h)).collect();
    let p = |x: u32, y: u32| img.get_pixel(x, y)[0] as i32;
    GrayImage::from_fn(nw, nh, |x, y| {
        let (x0, x1, cx) = xs[x as usize];
        let (y0, y1, cy) = ys[y as usize];
        let r0 = p(x0, y0) * (ONE - cx) + p(x1, y0) * cx;
        let r1 = p(x0, y1) * (ONE - cx) + p(x1, y1) * cx;
        let v = ((((ONE - cy) * (r0 >> 4)) >> 16) + ((cy * (r1 >> 4)) >> 16) + 2) >> 2;
        Luma([v.clamp(0, 255) as u8])
    })
}

fn similar(a: &PixelRect, b: &PixelRect) -> bool {
    let delta = GROUP_EPS * (a.w.min(b.w) + a.h.min(b.h)) as f64 * 0.5;
    let d = |p: u32, q: u32| (p as f64 - q as f64).abs() <= delta;
    d(a.x, b.x) && d(a.y, b.y) && d(a.right(), b.right()) && d(a.bottom(), b.bottom())
}

/// Cluster similar hits, average each cluster, and drop clusters nested
/// inside a much better supported one. Returns (rect, member count).
pub(crate) fn group_rectangles(hits: &[PixelRect]) -> Vec<(PixelRect, u32)> {
    let n = hits.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in 0..i {
            if similar(&hits[i], &hits[j]) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut sums: std::collections::BTreeMap<usize, ([u64; 4], u32)> = Default::default();
    for (i, r) in hits.iter().enumerate() {
        let root = find(&mut parent, i);
        let e = sums.entry(root).or_default();
        e.0[0] += r.x as u64;
        e.0[1] += r.y as u64;
        e.0[2] += r.w as u64;
        e.0[3] += r.h as u64;
        e.1 += 1;
    }
    let groups: Vec<(PixelRect, u32)> = sums
        .into_values()
        .map(|(s, count)| {
            let avg = |v: u64| (v as f64 / count as f64).round() as u32;
            (PixelRect::new(avg(s[0]), avg(s[1]), avg(s[2]), avg(s[3])), count)
        })
        .collect();

    groups
        .iter()
        .enumerate()
        .filter(|&(i, &(r1, n1))| {
            !groups.iter().enumerate().any(|(j, &(r2, n2))| {
                let dx = (r2.w as f64 * GROUP_EPS).round() as i64;
                let dy = (r2.h as f64 * GROUP_EPS).round() as i64;
                j != i
                    && r1.x as i64 >= r2.x as i64 - dx
                    && r1.y as i64 >= r2.y as i64 - dy
                    && r1.right() as i64 <= r2.right() as i64 + dx
                    && r1.bottom() as i64 <= r2.bottom() as i64 + dy
                    && (n2 > n1.max(3) || n1 < 3)
            })
        })
        .map(|(_, g)| *g)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_matches_opencv_rounding() {
        let img = RgbImage::from_raw(3, 1, vec![255, 0, 0, 0, 255, 0, 10, 200, 30]).unwrap();
        let g = to_gray(&img);
        // cv2.cvtColor(..., COLOR_RGB2GRAY) on the same pixels
        assert_eq!(g.as_raw(), &vec![76, 150, 124]);
    }

    #[test]
    fn grouping_averages_clusters_and_counts_members() {
        let hits = [
            PixelRect::new(10, 10, 24, 24),
            PixelRect::new(12, 10, 24, 24),
            PixelRect::new(11, 12, 26, 26),
            PixelRect::new(200, 200, 24, 24),
        ];
        let mut g = group_rectangles(&hits);
        g.sort_by_key(|(r, _)| r.x);
        assert_eq!(
            g,
            vec![
                (PixelRect::new(11, 11, 25, 25), 3),
                (PixelRect::new(200, 200, 24, 24), 1)
            ]
        );
    }

    #[test]
    fn bilinear_identity_and_constant() {
        let img = GrayImage::from_fn(7, 5, |x, y| Luma([(x * 30 + y) as u8]));
        assert_eq!(resize_bilinear(&img, 7, 5), img);
        // cv2.resize(img, (4, 3), interpolation=INTER_LINEAR)
        let down = resize_bilinear(&img, 4, 3);
        assert_eq!(
            down.as_raw(),
            &vec![11, 64, 116, 169, 13, 66, 118, 171, 15, 67, 120, 172]
        );
        let flat = GrayImage::from_pixel(9, 9, Luma([77]));
        assert!(resize_bilinear(&flat, 4, 3).pixels().all(|p| p[0] == 77));
    }
}
