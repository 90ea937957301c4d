//! A 5×7 bitmap font covering the name charset (letters, hyphen,
//! apostrophe, space). Lower-case letters share the upper-case glyphs.
//!
//! The synthetic generator renders name labels with this font and the
//! built-in OCR engine matches against the same glyphs.

pub const GLYPH_W: u32 = 5;
pub const GLYPH_H: u32 = 7;
/// Blank columns between adjacent glyphs.
pub const SPACING: u32 = 1;

const GLYPHS: &[(char, [&str; 7])] = &[
    ('A', ["01110", "10001", "10001", "11111", "10001", "10001", "10001"]),
    ('B', ["11110", "10001", "10001", "11110", "10001", "10001", "11110"]),
    ('C', ["01110", "10001", "10000", "10000", "10000", "10001", "01110"]),
    ('D', ["11100", "10010", "10001", "10001", "10001", "10010", "11100"]),
    ('E', ["11111", "10000", "10000", "11110", "10000", "10000", "11111"]),
    ('F', ["11111", "10000", "10000", "11110", "10000", "10000", "10000"]),
    ('G', ["01110", "10001", "10000", "10111", "10001", "10001", "01111"]),
    ('H', ["10001", "10001", "10001", "11111", "10001", "10001", "10001"]),
    ('I', ["01110", "00100", "00100", "00100", "00100", "00100", "01110"]),
    ('J', ["00111", "00010", "00010", "00010", "00010", "10010", "01100"]),
    ('K', ["10001", "10010", "10100", "11000", "10100", "10010", "10001"]),
    ('L', ["10000", "10000", "10000", "10000", "10000", "10000", "11111"]),
    ('M', ["10001", "11011", "10101", "10101", "10001", "10001", "10001"]),
    ('N', ["10001", "10001", "11001", "10101", "10011", "10001", "10001"]),
    ('O', ["01110", "10001", "10001", "10001", "10001", "10001", "01110"]),
    ('P', ["11110", "10001", "10001", "11110", "10000", "10000", "10000"]),
    ('Q', ["01110", "10001", "10001", "10001", "10101", "10010", "01101"]),
    ('R', ["11110", "10001", "10001", "11110", "10100", "10010", "10001"]),
    ('S', ["01111", "10000", "10000", "01110", "00001", "00001", "11110"]),
    ('T', ["11111", "00100", "00100", "00100", "00100", "00100", "00100"]),
    ('U', ["10001", "10001", "10001", "10001", "10001", "10001", "01110"]),
    ('V', ["10001", "10001", "10001", "10001", "10001", "01010", "00100"]),
    ('W', ["10001", "10001", "10001", "10101", "10101", "10101", "01010"]),
    ('X', ["10001", "10001", "01010", "00100", "01010", "10001", "10001"]),
    ('Y', ["10001", "10001", "10001", "01010", "00100", "00100", "00100"]),
    ('Z', ["11111", "00001", "00010", "00100", "01000", "10000", "11111"]),
    ('-', ["00000", "00000", "00000", "01110", "00000", "00000", "00000"]),
    ('\'', ["00100", "00100", "01000", "00000", "00000", "00000", "00000"]),
];

/// One glyph, trimmed to its non-empty columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Glyph {
    pub ch: char,
    /// Leading blank columns removed by trimming.
    pub left: u32,
    pub width: u32,
    /// Row-major `GLYPH_H × width` bits.
    pub bits: Vec<bool>,
}

impl Glyph {
    pub fn bit(&self, col: u32, row: u32) -> bool {
        self.bits[(row * self.width + col) as usize]
    }
}

fn build(ch: char, rows: &[&str; 7]) -> Glyph {
    let on = |r: usize, c: usize| rows[r].as_bytes()[c] == b'1';
    let used: Vec<usize> = (0..GLYPH_W as usize).filter(|&c| (0..7).any(|r| on(r, c))).collect();
    let (lo, hi) = (used[0], *used.last().expect("glyph has ink"));
    let mut bits = Vec::new();
    for r in 0..7 {
        for c in lo..=hi {
            bits.push(on(r, c));
        }
    }
    Glyph {
        ch,
        left: lo as u32,
        width: (hi - lo + 1) as u32,
        bits,
    }
}

pub fn glyphs() -> Vec<Glyph> {
    GLYPHS.iter().map(|(c, rows)| build(*c, rows)).collect()
}

pub fn glyph(ch: char) -> Option<Glyph> {
    let up = ch.to_ascii_uppercase();
    GLYPHS.iter().find(|(c, _)| *c == up).map(|(c, rows)| build(*c, rows))
}

/// Whether every character of `text` can be rendered.
pub fn supports(text: &str) -> bool {
    text.chars().all(|c| c == ' ' || glyph(c).is_some())
}

/// Width in font units (before scaling) of `text` on one line.
pub fn text_units(text: &str) -> u32 {
    let n = text.chars().count() as u32;
    if n == 0 {
        0
    } else {
        n * GLYPH_W + (n - 1) * SPACING
    }
}

/// Rasterize `text` into a `(width, height, mask)` bitmap with each font
/// unit drawn as `sx × sy` pixels. Unsupported characters render blank.
pub fn rasterize(text: &str, sx: u32, sy: u32) -> (u32, u32, Vec<bool>) {
    let (w, h) = (text_units(text) * sx, GLYPH_H * sy);
    let mut mask = vec![false; (w * h) as usize];
    for (i, ch) in text.chars().enumerate() {
        let Some(g) = glyph(ch) else { continue };
        let x0 = i as u32 * (GLYPH_W + SPACING) + g.left;
        for row in 0..GLYPH_H {
            for col in 0..g.width {
                if !g.bit(col, row) {
                    continue;
                }
                for dy in 0..sy {
                    for dx in 0..sx {
                        let (x, y) = ((x0 + col) * sx + dx, row * sy + dy);
                        mask[(y * w + x) as usize] = true;
                    }
                }
            }
        }
    }
    (w, h, mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glyphs_are_contiguous_and_full_height_letters() {
        for g in glyphs() {
            for c in 0..g.width {
                assert!((0..GLYPH_H).any(|r| g.bit(c, r)), "{} has an empty column", g.ch);
            }
            if g.ch.is_ascii_alphabetic() {
                assert!((0..g.width).any(|c| g.bit(c, 0)), "{} top row", g.ch);
                assert!((0..g.width).any(|c| g.bit(c, GLYPH_H - 1)), "{} bottom row", g.ch);
            }
        }
    }

    #[test]
    fn templates_are_distinct() {
        let all = glyphs();
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                assert!(a.bits != b.bits || a.width != b.width, "{} == {}", a.ch, b.ch);
            }
        }
    }

    #[test]
    fn rasterize_dimensions() {
        let (w, h, mask) = rasterize("AB", 2, 3);
        assert_eq!((w, h), ((5 + 1 + 5) * 2, 21));
        assert!(mask[2]); // 'A' top row starts at column 1 -> pixels 2..
        assert!(!mask[0]);
        assert_eq!(rasterize("", 2, 2).0, 0);
        assert!(supports("O'Neil-Smith Jr"));
        assert!(!supports("Zoë"));
    }
}
