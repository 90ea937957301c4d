//! Template-matching OCR for single-line labels set in the built-in 5×7
//! font (light text on a dark background), at any integer or fractional
//! scale.

use image::GrayImage;

use crate::font::{self, Glyph, GLYPH_H, GLYPH_W};

/// Pixels at or above this level count as ink.
const INK: u8 = 128;
/// A gap wider than this many glyph widths is a word break. Inside a word
/// gaps are at most 4 font units, between words at least 7.
const SPACE_GAP: f32 = 5.5 / GLYPH_W as f32;
/// Runs narrower than this fraction of the typical glyph are noise.
const MIN_RUN: f32 = 0.12;

#[derive(Debug, Clone)]
pub struct GlyphMatcher {
    templates: Vec<Glyph>,
}

impl Default for GlyphMatcher {
    fn default() -> Self {
        Self {
            templates: font::glyphs(),
        }
    }
}

/// Inclusive-exclusive runs of `true` in `flags`.
fn runs(flags: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &f) in flags.iter().chain(std::iter::once(&false)).enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    out
}

impl GlyphMatcher {
    pub fn read(&self, img: &GrayImage) -> String {
        let (w, h) = (img.width() as usize, img.height() as usize);
        if w == 0 || h == 0 {
            return String::new();
        }
        let ink: Vec<bool> = img.as_raw().iter().map(|&p| p >= INK).collect();

        // Text line: the band of consecutive inked rows holding the most ink.
        let row_ink: Vec<usize> = (0..h)
            .map(|y| ink[y * w..(y + 1) * w].iter().filter(|&&b| b).count())
            .collect();
        let Some((top, bottom)) = runs(&row_ink.iter().map(|&n| n > 0).collect::<Vec<_>>())
            .into_iter()
            .max_by_key(|&(a, b)| row_ink[a..b].iter().sum::<usize>())
        else {
            return String::new();
        };
        let band_h = bottom - top;
        if band_h < GLYPH_H as usize / 2 {
            return String::new();
        }

        let col_ink: Vec<bool> = (0..w).map(|x| (top..bottom).any(|y| ink[y * w + x])).collect();
        let mut glyph_runs = runs(&col_ink);
        if glyph_runs.is_empty() {
            return String::new();
        }
        let mut widths: Vec<usize> = glyph_runs.iter().map(|(a, b)| b - a).collect();
        widths.sort_unstable();
        // Most letters are full width, so the upper half of run widths is a
        // stable estimate of one glyph.
        let typical = widths[widths.len() * 2 / 3].max(1) as f32;
        glyph_runs.retain(|(a, b)| (b - a) as f32 >= MIN_RUN * typical);
        let unit = typical / GLYPH_W as f32;

        let mut out = String::new();
        for (i, &(a, b)) in glyph_runs.iter().enumerate() {
            if i > 0 {
                let gap = (a - glyph_runs[i - 1].1) as f32;
                if gap > SPACE_GAP * typical {
                    out.push(' ');
                }
            }
            out.push(self.classify(&ink, w, (top, bottom), (a, b), unit));
        }
        out
    }

    fn classify(&self, ink: &[bool], w: usize, rows: (usize, usize), cols: (usize, usize), unit: f32) -> char {
        let (top, bottom) = rows;
        let (left, right) = cols;
        let run_units = (right - left) as f32 / unit;
        let mut best = ('?', f32::INFINITY);
        for t in &self.templates {
            let mut err = 0.0;
            for r in 0..GLYPH_H {
                let y0 = top + (r as usize * (bottom - top)) / GLYPH_H as usize;
                let y1 = (top + ((r as usize + 1) * (bottom - top)) / GLYPH_H as usize).max(y0 + 1);
                for c in 0..t.width {
                    let span = right - left;
                    let x0 = left + (c as usize * span) / t.width as usize;
                    let x1 = (left + ((c as usize + 1) * span) / t.width as usize).max(x0 + 1);
                    let mut on = 0usize;
                    for y in y0..y1 {
                        on += ink[y * w + x0..y * w + x1].iter().filter(|&&b| b).count();
                    }
                    let cov = on as f32 / ((y1 - y0) * (x1 - x0)) as f32;
                    let want = if t.bit(c, r) { 1.0 } else { 0.0 };
                    err += (cov - want) * (cov - want);
                }
            }
            let score = err / (GLYPH_H * t.width) as f32 + 0.15 * (run_units - t.width as f32).abs();
            if score < best.1 {
                best = (t.ch, score);
            }
        }
        best.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Luma;

    pub(crate) fn render(text: &str, sx: u32, sy: u32, pad: u32) -> GrayImage {
        let (w, h, mask) = font::rasterize(text, sx, sy);
        GrayImage::from_fn(w + 2 * pad, h + 2 * pad, |x, y| {
            let inside = x >= pad && y >= pad && x < w + pad && y < h + pad;
            let on = inside && mask[((y - pad) * w + (x - pad)) as usize];
            Luma([if on { 250 } else { 20 }])
        })
    }

    #[test]
    fn reads_every_glyph_at_several_scales() {
        let m = GlyphMatcher::default();
        let alphabet = "ABCDEFGHIJKLM NOPQRSTUVWXYZ O'NEIL-SMITH";
        for (sx, sy) in [(1, 1), (2, 3), (3, 3), (6, 9)] {
            assert_eq!(m.read(&render(alphabet, sx, sy, 4)), alphabet, "scale {sx}x{sy}");
        }
    }

    #[test]
    fn blank_and_tiny_inputs() {
        let m = GlyphMatcher::default();
        assert_eq!(m.read(&GrayImage::new(40, 10)), "");
        assert_eq!(m.read(&GrayImage::new(0, 0)), "");
        assert_eq!(m.read(&GrayImage::from_pixel(1, 1, Luma([255]))), "");
    }

    #[test]
    fn run_splitting() {
        assert_eq!(runs(&[false, true, true, false, true]), vec![(1, 3), (4, 5)]);
        assert_eq!(runs(&[]), vec![]);
    }
}
