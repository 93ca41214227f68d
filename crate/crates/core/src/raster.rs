//! Deterministic preview renderer for scene documents: one colored box per
//! entity at its position, labeled with the entity id.

use std::io::Cursor;

use image::{ImageFormat, Rgb, RgbImage};
use sha2::{Digest, Sha256};

use crate::backends::scene::{Position, SceneDocument};

pub const SIZE: u32 = 320;
const BOX: u32 = 80;
const SCALE: u32 = 3;

/// 3x5 glyphs, one row per 3 low bits, top row first.
fn glyph(c: char) -> [u8; 5] {
    match c.to_ascii_lowercase() {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 7, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 1, 1],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        'a' => [2, 5, 7, 5, 5],
        'b' => [6, 5, 6, 5, 6],
        'c' => [7, 4, 4, 4, 7],
        'd' => [6, 5, 5, 5, 6],
        'e' => [7, 4, 6, 4, 7],
        'f' => [7, 4, 6, 4, 4],
        'g' => [7, 4, 5, 5, 7],
        'h' => [5, 5, 7, 5, 5],
        'i' => [7, 2, 2, 2, 7],
        'j' => [1, 1, 1, 5, 7],
        'k' => [5, 5, 6, 5, 5],
        'l' => [4, 4, 4, 4, 7],
        'm' => [5, 7, 7, 5, 5],
        'n' => [6, 5, 5, 5, 5],
        'o' => [7, 5, 5, 5, 7],
        'p' => [7, 5, 7, 4, 4],
        'q' => [7, 5, 5, 7, 1],
        'r' => [7, 5, 6, 5, 5],
        's' => [7, 4, 7, 1, 7],
        't' => [7, 2, 2, 2, 2],
        'u' => [5, 5, 5, 5, 7],
        'v' => [5, 5, 5, 5, 2],
        'w' => [5, 5, 7, 7, 5],
        'x' => [5, 5, 2, 5, 5],
        'y' => [5, 5, 2, 2, 2],
        'z' => [7, 1, 2, 4, 7],
        '-' => [0, 0, 7, 0, 0],
        _ => [0, 0, 0, 0, 0],
    }
}

pub fn named_color(name: &str) -> Rgb<u8> {
    let rgb = match name.trim().to_ascii_lowercase().as_str() {
        "red" => [220, 40, 40],
        "green" => [40, 170, 60],
        "blue" => [40, 80, 220],
        "yellow" => [240, 210, 40],
        "orange" => [245, 140, 30],
        "purple" => [140, 60, 180],
        "pink" => [240, 130, 180],
        "brown" => [130, 80, 40],
        "black" => [20, 20, 20],
        "white" => [245, 245, 245],
        "gray" | "grey" => [150, 150, 150],
        other => {
            let h = Sha256::digest(other.as_bytes());
            [h[0], h[1], h[2]]
        }
    };
    Rgb(rgb)
}

fn origin(position: Position) -> (u32, u32) {
    let mid = (SIZE - BOX) / 2;
    match position {
        Position::Left => (16, mid),
        Position::Right => (SIZE - BOX - 16, mid),
        Position::Top => (mid, 16),
        Position::Bottom => (mid, SIZE - BOX - 16),
        Position::Center => (mid, mid),
    }
}

fn fill(img: &mut RgbImage, x: u32, y: u32, w: u32, h: u32, color: Rgb<u8>) {
    for yy in y..(y + h).min(SIZE) {
        for xx in x..(x + w).min(SIZE) {
            img.put_pixel(xx, yy, color);
        }
    }
}

fn text(img: &mut RgbImage, x: u32, y: u32, s: &str) {
    let ink = Rgb([0, 0, 0]);
    for (i, c) in s.chars().enumerate() {
        let gx = x + i as u32 * 4 * SCALE;
        for (row, bits) in glyph(c).iter().enumerate() {
            for col in 0..3 {
                if bits & (4 >> col) != 0 {
                    fill(
                        img,
                        gx + col * SCALE,
                        y + row as u32 * SCALE,
                        SCALE,
                        SCALE,
                        ink,
                    );
                }
            }
        }
    }
}

/// Renders a scene to PNG bytes. Entities sharing a position are offset so
/// every box stays visible.
pub fn render_png(scene: &SceneDocument) -> Vec<u8> {
    let bg = scene
        .background
        .as_deref()
        .map(|b| {
            let Rgb([r, g, b]) = named_color(b);
            Rgb([r / 4 + 190, g / 4 + 190, b / 4 + 190])
        })
        .unwrap_or(Rgb([255, 255, 255]));
    let mut img = RgbImage::from_pixel(SIZE, SIZE, bg);
    let mut seen: Vec<Position> = Vec::new();
    for e in &scene.entities {
        let stacked = seen.iter().filter(|p| **p == e.position).count() as u32;
        seen.push(e.position);
        let (x, y) = origin(e.position);
        let (x, y) = (x + stacked * 10, y + stacked * 10);
        let color = match (&e.color, e.placeholder) {
            (_, true) | (None, _) => named_color("gray"),
            (Some(c), false) => named_color(c),
        };
        fill(&mut img, x, y, BOX, BOX, Rgb([0, 0, 0]));
        fill(&mut img, x + 2, y + 2, BOX - 4, BOX - 4, color);
        fill(
            &mut img,
            x + 4,
            y + 4,
            12 * SCALE + 4,
            5 * SCALE + 4,
            Rgb([255, 255, 255]),
        );
        let label: String = e.id.chars().take(3).collect();
        text(&mut img, x + 6, y + 6, &label);
    }
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .expect("png encoding to memory");
    out.into_inner()
}
