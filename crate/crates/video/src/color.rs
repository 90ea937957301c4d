//! BT.601 limited-range conversion for planar 4:2:0 data.

use image::RgbImage;

#[inline]
fn clamp(v: i32) -> u8 {
    v.clamp(0, 255) as u8
}

pub(crate) fn yuv420_to_rgb(y: &[u8], u: &[u8], v: &[u8], width: usize, height: usize, chroma_w: usize) -> RgbImage {
    let mut out = vec![0u8; width * height * 3];
    for row in 0..height {
        let crow = row / 2;
        for col in 0..width {
            let c = y[row * width + col] as i32 - 16;
            let ci = crow * chroma_w + col / 2;
            let d = u[ci] as i32 - 128;
            let e = v[ci] as i32 - 128;
            let o = (row * width + col) * 3;
            out[o] = clamp((298 * c + 409 * e + 128) >> 8);
            out[o + 1] = clamp((298 * c - 100 * d - 208 * e + 128) >> 8);
            out[o + 2] = clamp((298 * c + 516 * d + 128) >> 8);
        }
    }
    RgbImage::from_raw(width as u32, height as u32, out).expect("buffer sized above")
}

pub(crate) fn gray_to_rgb(y: &[u8], width: usize, height: usize) -> RgbImage {
    let mut out = Vec::with_capacity(width * height * 3);
    for &p in &y[..width * height] {
        let g = clamp(((p as i32 - 16) * 298 + 128) >> 8);
        out.extend_from_slice(&[g, g, g]);
    }
    RgbImage::from_raw(width as u32, height as u32, out).expect("buffer sized above")
}

/// Returns (Y, U, V) planes; chroma is averaged over 2x2 blocks.
pub(crate) fn rgb_to_yuv420(img: &RgbImage) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (cw, ch) = (w.div_ceil(2), h.div_ceil(2));
    let raw = img.as_raw();
    let mut y = vec![0u8; w * h];
    let mut u = vec![0u8; cw * ch];
    let mut v = vec![0u8; cw * ch];
    for row in 0..h {
        for col in 0..w {
            let o = (row * w + col) * 3;
            let (r, g, b) = (raw[o] as i32, raw[o + 1] as i32, raw[o + 2] as i32);
            y[row * w + col] = clamp(((66 * r + 129 * g + 25 * b + 128) >> 8) + 16);
        }
    }
    for crow in 0..ch {
        for ccol in 0..cw {
            let (mut su, mut sv, mut n) = (0i32, 0i32, 0i32);
            for dy in 0..2 {
                for dx in 0..2 {
                    let (row, col) = (crow * 2 + dy, ccol * 2 + dx);
                    if row < h && col < w {
                        let o = (row * w + col) * 3;
                        let (r, g, b) = (raw[o] as i32, raw[o + 1] as i32, raw[o + 2] as i32);
                        su += ((-38 * r - 74 * g + 112 * b + 128) >> 8) + 128;
                        sv += ((112 * r - 94 * g - 18 * b + 128) >> 8) + 128;
                        n += 1;
                    }
                }
            }
            u[crow * cw + ccol] = clamp(su / n);
            v[crow * cw + ccol] = clamp(sv / n);
        }
    }
    (y, u, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_close() {
        let mut img = RgbImage::new(6, 4);
        for (i, p) in img.pixels_mut().enumerate() {
            // flat 2x2 blocks so chroma subsampling is lossless
            let v = ((i % 6) / 2 * 70 + 20) as u8;
            *p = image::Rgb([v, 255 - v, v / 2]);
        }
        let (y, u, v) = rgb_to_yuv420(&img);
        let back = yuv420_to_rgb(&y, &u, &v, 6, 4, 3);
        for (a, b) in img.pixels().zip(back.pixels()) {
            for c in 0..3 {
                assert!((a[c] as i32 - b[c] as i32).abs() <= 3, "{a:?} vs {b:?}");
            }
        }
    }
}
