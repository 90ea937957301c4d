//! Procedural head-and-shoulders portraits and name labels.
//!
//! Faces are flat-shaded cartoons, but with the proportions (skin oval,
//! dark eyes and brows, hairline) that pretrained face detectors key on.
//! Everything is derived from an identity number, so the same identity
//! looks the same in every generated recording.

use image::{Rgb, RgbImage};
use imageproc::drawing::{
    draw_filled_circle_mut, draw_filled_ellipse_mut, draw_filled_rect_mut, draw_hollow_ellipse_mut,
};
use imageproc::rect::Rect;
use proctor_core::PixelRect;
use proctor_ocr::font;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EMPTY_CELL: Rgb<u8> = Rgb([12, 12, 12]);
const LABEL_BOX: Rgb<u8> = Rgb([20, 20, 20]);
const LABEL_TEXT: Rgb<u8> = Rgb([240, 240, 240]);

const SKIN: [[u8; 3]; 5] = [
    [224, 172, 140],
    [198, 134, 102],
    [141, 85, 60],
    [241, 194, 165],
    [170, 120, 90],
];
const HAIR: [[u8; 3]; 5] = [[30, 20, 15], [90, 60, 30], [200, 170, 90], [20, 20, 20], [120, 40, 20]];

pub fn luminance(c: [u8; 3]) -> f32 {
    0.299 * c[0] as f32 + 0.587 * c[1] as f32 + 0.114 * c[2] as f32
}

/// Everything that distinguishes one synthetic person from another.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceStyle {
    pub skin: [u8; 3],
    pub hair: [u8; 3],
    /// Kept below luminance 150 so that only the label text survives the
    /// OCR threshold inside the name strip.
    pub shirt: [u8; 3],
    pub background: [u8; 3],
    /// Face width over face height.
    pub aspect: f32,
    /// Eye offset from the centre line, as a fraction of face width.
    pub eye_spacing: f32,
    pub eye_scale: f32,
    pub mouth_width: f32,
    pub long_hair: bool,
    pub glasses: bool,
    pub mustache: bool,
}

fn dark_color(rng: &mut ChaCha8Rng, max_luma: f32) -> [u8; 3] {
    loop {
        let c = [
            rng.random_range(20..200),
            rng.random_range(20..200),
            rng.random_range(20..200),
        ];
        if luminance(c) < max_luma {
            return c;
        }
    }
}

impl FaceStyle {
    pub fn for_identity(id: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_FACE ^ id as u64);
        let skin = SKIN[id as usize % SKIN.len()];
        Self {
            skin,
            hair: HAIR[(id as usize / 2) % HAIR.len()],
            shirt: dark_color(&mut rng, 140.0),
            background: dark_color(&mut rng, 100.0),
            aspect: rng.random_range(0.70..0.84),
            eye_spacing: rng.random_range(0.17..0.24),
            eye_scale: rng.random_range(0.85..1.2),
            mouth_width: rng.random_range(0.12..0.2),
            long_hair: rng.random_bool(0.35),
            glasses: rng.random_bool(0.3),
            mustache: rng.random_bool(0.25),
        }
    }
}

/// Small per-second head movement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub dx: i32,
    pub dy: i32,
    pub scale: f32,
}

impl Pose {
    pub const NEUTRAL: Pose = Pose {
        dx: 0,
        dy: 0,
        scale: 1.0,
    };
}

fn shade(c: [u8; 3], f: f32) -> Rgb<u8> {
    Rgb(c.map(|v| (v as f32 * f).clamp(0.0, 255.0) as u8))
}

/// Fill the part of an axis-aligned ellipse above (`upper`) or below its
/// centre line.
fn half_ellipse(img: &mut RgbImage, c: (i32, i32), r: (i32, i32), upper: bool, color: Rgb<u8>) {
    let (w, h) = (img.width() as i32, img.height() as i32);
    let (rx, ry) = (r.0.max(1) as f32, r.1.max(1) as f32);
    let (y0, y1) = if upper { (c.1 - r.1, c.1) } else { (c.1, c.1 + r.1) };
    for y in y0.max(0)..=y1.min(h - 1) {
        for x in (c.0 - r.0).max(0)..=(c.0 + r.0).min(w - 1) {
            let (u, v) = ((x - c.0) as f32 / rx, (y - c.1) as f32 / ry);
            if u * u + v * v <= 1.0 {
                img.put_pixel(x as u32, y as u32, color);
            }
        }
    }
}

/// A thick elliptical arc from `a0` to `a1` radians (0 = +x, y down).
fn arc(img: &mut RgbImage, c: (i32, i32), r: (i32, i32), a: (f32, f32), thick: i32, color: Rgb<u8>) {
    let steps = ((r.0.max(r.1) as f32) * (a.1 - a.0).abs()).ceil().max(8.0) as usize;
    for i in 0..=steps {
        let t = a.0 + (a.1 - a.0) * i as f32 / steps as f32;
        let p = (
            c.0 + (r.0 as f32 * t.cos()).round() as i32,
            c.1 + (r.1 as f32 * t.sin()).round() as i32,
        );
        draw_filled_circle_mut(img, p, (thick / 2).max(0), color);
    }
}

fn thick_line(img: &mut RgbImage, a: (i32, i32), b: (i32, i32), thick: i32, color: Rgb<u8>) {
    let n = (a.0 - b.0).abs().max((a.1 - b.1).abs()).max(1);
    for i in 0..=n {
        let p = (a.0 + (b.0 - a.0) * i / n, a.1 + (b.1 - a.1) * i / n);
        draw_filled_circle_mut(img, p, (thick / 2).max(0), color);
    }
}

fn rect(img: &mut RgbImage, x0: i32, y0: i32, x1: i32, y1: i32, color: Rgb<u8>) {
    if x1 > x0 && y1 > y0 {
        draw_filled_rect_mut(img, Rect::at(x0, y0).of_size((x1 - x0) as u32, (y1 - y0) as u32), color);
    }
}

/// Paint the cell background and, when `with_face`, a person. Returns the
/// face oval's bounding box in cell coordinates.
pub fn render_person(cell: &mut RgbImage, style: &FaceStyle, pose: Pose, with_face: bool) -> Option<PixelRect> {
    let (w, h) = (cell.width() as i32, cell.height() as i32);
    for p in cell.pixels_mut() {
        *p = Rgb(style.background);
    }
    if !with_face {
        return None;
    }
    let hf = h as f32;
    let fh = (0.62 * hf * pose.scale).round() as i32;
    let fw = (fh as f32 * style.aspect).round() as i32;
    let (cx, cy) = (w / 2 + pose.dx, (0.48 * hf).round() as i32 + pose.dy);
    let skin = style.skin;

    // shoulders and neck
    draw_filled_ellipse_mut(
        cell,
        (cx, h + (0.15 * hf) as i32),
        fw * 13 / 10,
        (0.4 * hf) as i32,
        Rgb(style.shirt),
    );
    rect(cell, cx - fw / 5, cy, cx + fw / 5, cy + fh / 2 + 10, shade(skin, 0.85));
    // hair behind the head
    draw_filled_ellipse_mut(
        cell,
        (cx, cy - fh / 10),
        fw / 2 + fw / 10,
        fh / 2 + fh / 12,
        Rgb(style.hair),
    );
    if style.long_hair {
        draw_filled_ellipse_mut(cell, (cx, cy + fh / 8), fw / 2 + fw / 8, fh / 2, Rgb(style.hair));
    }
    // shaded face oval
    let (rx, ry) = ((fw / 2).max(1) as f32, (fh / 2).max(1) as f32);
    for y in (cy - fh / 2).max(0)..=(cy + fh / 2).min(h - 1) {
        for x in (cx - fw / 2).max(0)..=(cx + fw / 2).min(w - 1) {
            let (u, v) = ((x - cx) as f32 / rx, (y - cy) as f32 / ry);
            let d2 = u * u + v * v;
            if d2 <= 1.0 {
                cell.put_pixel(x as u32, y as u32, shade(skin, (1.05 - 0.35 * d2).clamp(0.6, 1.1)));
            }
        }
    }
    // fringe
    half_ellipse(
        cell,
        (cx, cy - fh / 2 + fh / 12),
        (fw / 2, fh / 7),
        true,
        Rgb(style.hair),
    );

    let ey = cy - fh / 10;
    let ex = (fw as f32 * style.eye_spacing).round() as i32;
    let es = style.eye_scale;
    let brow = shade(style.hair, 0.6);
    for s in [-1, 1] {
        let c = (cx + s * ex, ey);
        arc(
            cell,
            (c.0, ey - fh / 10),
            (fw / 7, (fh / 40).max(1)),
            (std::f32::consts::PI, 2.0 * std::f32::consts::PI),
            (fh / 35).max(1),
            brow,
        );
        draw_filled_ellipse_mut(
            cell,
            c,
            ((fw / 9) as f32 * es) as i32,
            ((fh / 22) as f32 * es) as i32,
            Rgb([235, 235, 235]),
        );
        draw_filled_circle_mut(cell, c, (((fh / 24) as f32 * es) as i32).max(1), Rgb([20, 30, 40]));
        if style.glasses {
            for r in 0..2 {
                draw_hollow_ellipse_mut(cell, c, fw / 7 + r, fh / 12 + r, Rgb([30, 30, 30]));
            }
        }
    }
    if style.glasses {
        thick_line(
            cell,
            (cx - ex + fw / 7, ey),
            (cx + ex - fw / 7, ey),
            2,
            Rgb([30, 30, 30]),
        );
    }
    // nose
    thick_line(
        cell,
        (cx, ey + fh / 20),
        (cx - fw / 20, cy + fh / 8),
        (fh / 50).max(1),
        shade(skin, 0.7),
    );
    if style.mustache {
        draw_filled_ellipse_mut(cell, (cx, cy + fh / 6), fw / 6, (fh / 40).max(1), Rgb(style.hair));
    }
    // mouth
    let mw = (fw as f32 * style.mouth_width).round() as i32;
    arc(
        cell,
        (cx, cy + fh / 4),
        (mw, fh / 20),
        (0.0, std::f32::consts::PI),
        (fh / 30).max(1),
        Rgb([150, 50, 60]),
    );

    let x0 = (cx - fw / 2).max(0);
    let y0 = (cy - fh / 2).max(0);
    let x1 = (cx + fw / 2 + 1).min(w);
    let y1 = (cy + fh / 2 + 1).min(h);
    Some(PixelRect::new(x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32))
}

/// Font scale `(sx, sy)` used for labels in a cell of height `cell_h`:
/// glyphs are about a tenth of the cell tall.
pub fn label_scale(cell_h: u32) -> (u32, u32) {
    let sy = (cell_h / 70).max(1);
    let sx = ((sy * 2 + 1) / 3).max(1);
    (sx, sy)
}

/// Width in pixels of the label box for `name` in a cell of height `cell_h`.
pub fn label_width(name: &str, cell_h: u32) -> u32 {
    let (sx, _) = label_scale(cell_h);
    font::text_units(name) * sx + 2 * LABEL_PAD + LABEL_MARGIN
}

const LABEL_PAD: u32 = 3;
const LABEL_MARGIN: u32 = 4;

/// White text on a dark box in the bottom-left corner of the cell.
pub fn draw_name_label(cell: &mut RgbImage, name: &str) {
    let (cw, ch) = cell.dimensions();
    let (sx, sy) = label_scale(ch);
    let (tw, th, mask) = font::rasterize(name, sx, sy);
    let x0 = LABEL_MARGIN + LABEL_PAD;
    let y0 = ch.saturating_sub(th + LABEL_PAD + LABEL_MARGIN);
    rect(
        cell,
        LABEL_MARGIN as i32,
        y0 as i32 - LABEL_PAD as i32,
        (x0 + tw + LABEL_PAD).min(cw) as i32,
        (y0 + th + LABEL_PAD).min(ch) as i32,
        LABEL_BOX,
    );
    for y in 0..th {
        for x in 0..tw {
            if mask[(y * tw + x) as usize] && x0 + x < cw && y0 + y < ch {
                cell.put_pixel(x0 + x, y0 + y, LABEL_TEXT);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn styles_are_stable_and_dark_where_it_matters() {
        assert_eq!(FaceStyle::for_identity(3), FaceStyle::for_identity(3));
        for id in 0..40 {
            let s = FaceStyle::for_identity(id);
            assert!(luminance(s.shirt) < 150.0 && luminance(s.background) < 150.0);
        }
        assert_ne!(FaceStyle::for_identity(0), FaceStyle::for_identity(5));
    }

    #[test]
    fn face_is_large_and_inside_cell() {
        let mut cell = RgbImage::new(384, 216);
        let b = render_person(&mut cell, &FaceStyle::for_identity(0), Pose::NEUTRAL, true).unwrap();
        assert!(b.h * 3 >= 216, "{b:?}");
        assert!(b.fits_within(384, 216));
        // background only when absent
        let style = FaceStyle::for_identity(0);
        assert!(render_person(&mut cell, &style, Pose::NEUTRAL, false).is_none());
        assert!(cell.pixels().all(|p| p.0 == style.background));
    }

    #[test]
    fn label_scale_for_1080p_cells() {
        assert_eq!(label_scale(216), (2, 3));
        assert_eq!(label_width("CHAN TAI MAN", 216), 71 * 2 + 10);
    }
}
