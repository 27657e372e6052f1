//! A small built-in 5x7 digit face used to stamp plot numbers onto
//! synthetic maps and to render training samples for the baseline
//! recognizer. Nothing here knows about classification; it is just pixels.

use rand::Rng;

use crate::raster::{binarize, connected_components, extract_digit_patch, GrayRaster, Polarity};

pub const GLYPH_WIDTH: u32 = 5;
pub const GLYPH_HEIGHT: u32 = 7;

/// Row-major 5x7 bitmaps, `#` = ink.
const GLYPHS: [[&str; 7]; 10] = [
    [".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."],
    ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."],
    [".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"],
    [".###.", "#...#", "....#", "..##.", "....#", "#...#", ".###."],
    ["...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."],
    ["#####", "#....", "####.", "....#", "....#", "#...#", ".###."],
    ["..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."],
    ["#####", "....#", "...#.", "...#.", "..#..", "..#..", "..#.."],
    [".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."],
    [".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."],
];

/// Ink mask of one digit; panics on a non-digit label (caller bug).
pub fn glyph_rows(digit: u8) -> &'static [&'static str; 7] {
    &GLYPHS[usize::from(digit)]
}

/// Paints a digit onto `img` with integer scaling, top-left anchored.
/// Pixels outside the image are silently clipped.
pub fn stamp_digit(
    img: &mut GrayRaster,
    digit: u8,
    top_row: u32,
    left_col: u32,
    scale: u32,
    value: u8,
) {
    let rows = glyph_rows(digit);
    for (gr, row) in rows.iter().enumerate() {
        for (gc, ch) in row.bytes().enumerate() {
            if ch != b'#' {
                continue;
            }
            for dr in 0..scale {
                for dc in 0..scale {
                    let r = top_row + gr as u32 * scale + dr;
                    let c = left_col + gc as u32 * scale + dc;
                    if r < img.height() && c < img.width() {
                        img.set(r, c, value);
                    }
                }
            }
        }
    }
}

/// Width in pixels of a number stamped with [`stamp_number`].
pub fn number_width(text: &str, scale: u32, gap: u32) -> u32 {
    let n = text.len() as u32;
    if n == 0 {
        return 0;
    }
    n * GLYPH_WIDTH * scale + (n - 1) * gap
}

/// Paints a decimal string left to right; `gap` background pixels separate
/// consecutive digits so they stay distinct components.
pub fn stamp_number(
    img: &mut GrayRaster,
    text: &str,
    top_row: u32,
    left_col: u32,
    scale: u32,
    gap: u32,
    value: u8,
) {
    let mut col = left_col;
    for ch in text.bytes() {
        debug_assert!(ch.is_ascii_digit(), "stamp_number takes decimal strings");
        stamp_digit(img, ch - b'0', top_row, col, scale, value);
        col += GLYPH_WIDTH * scale + gap;
    }
}

/// Renders one jittered 28x28 training/evaluation sample in the classifier
/// convention (white ink on black). The digit is inked at a random scale
/// with salt-and-pepper noise, then normalized through the same component
/// extraction the production path uses, so samples land in the distribution
/// the classifier actually sees.
pub fn render_sample(digit: u8, rng: &mut impl Rng) -> GrayRaster {
    let scale = rng.gen_range(2..=4u32);
    let w = GLYPH_WIDTH * scale + 4;
    let h = GLYPH_HEIGHT * scale + 4;
    let mut ink = GrayRaster::filled(w, h, 255);
    stamp_digit(&mut ink, digit, 2, 2, scale, 0);
    for row in 0..h {
        for col in 0..w {
            if rng.gen_bool(0.02) {
                let v = ink.get(row, col);
                ink.set(row, col, if v == 0 { 255 } else { 0 });
            }
        }
    }
    let bin = binarize(&ink, 128, Polarity::DarkInk);
    let components = connected_components(&bin);
    let body = components
        .iter()
        .max_by(|a, b| a.area().cmp(&b.area()).then(b.id.cmp(&a.id)))
        .expect("a stamped digit always leaves ink");
    extract_digit_patch(body).0
}
