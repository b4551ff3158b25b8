//! Raster handling: PNG codec, crop/resize, landmark stars and change detection.

use std::fmt;
use std::io::Cursor;
use std::path::Path;
use std::sync::Arc;

use font8x8::UnicodeFonts;
use image::codecs::png::PngEncoder;
use image::imageops::FilterType;
use image::{ImageEncoder, Rgb, RgbImage};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::geometry::{Dims, GeometryError, Point};
use crate::RegionBox;

/// Per-pixel change threshold: a pixel counts as changed when any channel
/// moves by more than this many levels.
pub const PIXEL_DELTA_THRESHOLD: u8 = 8;

/// Fraction of changed pixels still treated as "no change".
pub const DEFAULT_DIFF_TOLERANCE: f64 = 0.001;

#[derive(Debug, Error)]
pub enum CanvasError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("landmark {label} at {at} lies outside the {dims} image")]
    LandmarkOutside { label: u32, at: Point, dims: Dims },
    #[error("landmark label {0} is used more than once")]
    DuplicateLabel(u32),
}

/// 64-bit content hash of a pixel buffer, rendered as 16 hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub u64);

impl Digest {
    pub fn of_pixels(img: &RgbImage) -> Digest {
        let mut h = Sha256::new();
        h.update(img.width().to_le_bytes());
        h.update(img.height().to_le_bytes());
        h.update(img.as_raw());
        let out = h.finalize();
        Digest(u64::from_be_bytes(
            out[..8].try_into().expect("sha256 is 32 bytes"),
        ))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl std::str::FromStr for Digest {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s, 16).map(Digest)
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse()
            .map_err(|_| D::Error::custom(format!("bad digest {s:?}")))
    }
}

/// An immutable RGB raster with its dimensions and content digest.
#[derive(Clone)]
pub struct Screenshot {
    pixels: Arc<RgbImage>,
    dims: Dims,
    digest: Digest,
}

impl fmt::Debug for Screenshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Screenshot")
            .field("dims", &self.dims)
            .field("digest", &self.digest)
            .finish()
    }
}

impl PartialEq for Screenshot {
    fn eq(&self, other: &Self) -> bool {
        self.digest == other.digest
            && (Arc::ptr_eq(&self.pixels, &other.pixels) || self.pixels == other.pixels)
    }
}

impl Screenshot {
    pub fn from_rgb(pixels: RgbImage) -> Result<Self, CanvasError> {
        let dims = Dims::new(pixels.width(), pixels.height())?;
        let digest = Digest::of_pixels(&pixels);
        Ok(Self {
            pixels: Arc::new(pixels),
            dims,
            digest,
        })
    }

    pub fn solid(dims: Dims, color: [u8; 3]) -> Self {
        Self::from_rgb(RgbImage::from_pixel(
            dims.width(),
            dims.height(),
            Rgb(color),
        ))
        .expect("dims are positive")
    }

    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self, CanvasError> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
        Self::from_rgb(img.to_rgb8())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CanvasError> {
        let bytes = std::fs::read(path)?;
        Self::from_png_bytes(&bytes)
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>, CanvasError> {
        let mut out = Vec::new();
        PngEncoder::new(Cursor::new(&mut out)).write_image(
            self.pixels.as_raw(),
            self.dims.width(),
            self.dims.height(),
            image::ExtendedColorType::Rgb8,
        )?;
        Ok(out)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), CanvasError> {
        std::fs::write(path, self.to_png_bytes()?)?;
        Ok(())
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn digest(&self) -> Digest {
        self.digest
    }

    pub fn pixels(&self) -> &RgbImage {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        self.pixels.get_pixel(x, y).0
    }

    /// Copy the raster out for editing; the result is a new image.
    pub fn to_rgb(&self) -> RgbImage {
        (*self.pixels).clone()
    }
}

/// What a landmark marks. All kinds share one glyph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkKind {
    History,
    Candidate,
    Judge,
}

/// A numbered star drawn at a full-image position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Landmark {
    pub at: Point,
    pub label: u32,
    pub kind: LandmarkKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StyleConfig {
    pub fill: [u8; 3],
    pub outline: [u8; 3],
    pub label_disc: [u8; 3],
    pub label_text: [u8; 3],
    pub min_radius: u32,
    /// Outer radius as a fraction of the shorter image side.
    pub radius_fraction: f64,
}

impl Default for StyleConfig {
    fn default() -> Self {
        Self {
            fill: [255, 105, 180],
            outline: [40, 40, 40],
            label_disc: [255, 255, 255],
            label_text: [0, 0, 0],
            min_radius: 12,
            radius_fraction: 0.015,
        }
    }
}

impl StyleConfig {
    pub fn outer_radius(&self, dims: Dims) -> u32 {
        let min_side = dims.width().min(dims.height()) as f64;
        self.min_radius
            .max((self.radius_fraction * min_side).round() as u32)
    }
}

pub fn crop(img: &Screenshot, b: &RegionBox) -> Result<Screenshot, CanvasError> {
    if !b.is_within(img.dims) {
        return Err(GeometryError::BoxOutside {
            x0: b.x0,
            y0: b.y0,
            x1: b.x1,
            y1: b.y1,
            width: img.dims.width(),
            height: img.dims.height(),
        }
        .into());
    }
    let sub = image::imageops::crop_imm(
        img.pixels.as_ref(),
        b.x0 as u32,
        b.y0 as u32,
        b.width() as u32,
        b.height() as u32,
    )
    .to_image();
    Screenshot::from_rgb(sub)
}

/// Bilinear resize; same-size requests return the input unchanged.
pub fn resize(img: &Screenshot, out: Dims) -> Screenshot {
    if out == img.dims {
        return img.clone();
    }
    let scaled = image::imageops::resize(
        img.pixels.as_ref(),
        out.width(),
        out.height(),
        FilterType::Triangle,
    );
    Screenshot::from_rgb(scaled).expect("output dims are positive")
}

/// Render every landmark as a numbered star on a copy of `img`.
pub fn draw_landmarks(
    img: &Screenshot,
    marks: &[Landmark],
    style: &StyleConfig,
) -> Result<Screenshot, CanvasError> {
    if marks.is_empty() {
        return Ok(img.clone());
    }
    let mut seen = std::collections::BTreeSet::new();
    for m in marks {
        if !img.dims.contains(m.at) {
            return Err(CanvasError::LandmarkOutside {
                label: m.label,
                at: m.at,
                dims: img.dims,
            });
        }
        if !seen.insert(m.label) {
            return Err(CanvasError::DuplicateLabel(m.label));
        }
    }
    let mut canvas = img.to_rgb();
    let radius = style.outer_radius(img.dims);
    for m in marks {
        draw_star(&mut canvas, m.at, radius as f64, style);
        draw_label(&mut canvas, m.at, m.label, radius, style);
    }
    Screenshot::from_rgb(canvas)
}

fn star_vertices(center: Point, outer: f64) -> [(f64, f64); 10] {
    // inner/outer radius ratio of a regular pentagram
    let inner = outer * 0.381_966;
    let (cx, cy) = (center.x as f64 + 0.5, center.y as f64 + 0.5);
    let mut v = [(0.0, 0.0); 10];
    for (i, slot) in v.iter_mut().enumerate() {
        let r = if i % 2 == 0 { outer } else { inner };
        let angle = (-90.0 + 36.0 * i as f64).to_radians();
        *slot = (cx + r * angle.cos(), cy + r * angle.sin());
    }
    v
}

fn inside_polygon(poly: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn draw_star(canvas: &mut RgbImage, center: Point, outer: f64, style: &StyleConfig) {
    let poly = star_vertices(center, outer);
    let reach = outer.ceil() as i64 + 2;
    let (cx, cy) = (center.x as i64, center.y as i64);
    let hit = |x: i64, y: i64| inside_polygon(&poly, x as f64 + 0.5, y as f64 + 0.5);
    for y in (cy - reach)..=(cy + reach) {
        for x in (cx - reach)..=(cx + reach) {
            if x < 0
                || y < 0
                || x >= canvas.width() as i64
                || y >= canvas.height() as i64
                || !hit(x, y)
            {
                continue;
            }
            let edge = !(hit(x - 1, y) && hit(x + 1, y) && hit(x, y - 1) && hit(x, y + 1));
            let color = if edge { style.outline } else { style.fill };
            canvas.put_pixel(x as u32, y as u32, Rgb(color));
        }
    }
}

fn draw_label(canvas: &mut RgbImage, center: Point, label: u32, outer: u32, style: &StyleConfig) {
    let text = label.to_string();
    let scale = (outer / 12).max(1);
    let tw = 8 * scale * text.len() as u32;
    let th = 8 * scale;
    let disc = (outer as f64 * 0.5).max(tw as f64 / 2.0 + 2.0);
    fill_disc(canvas, center, disc, style.label_disc);
    let left = center.x as i64 - tw as i64 / 2 + 1;
    let top = center.y as i64 - th as i64 / 2 + 1;
    draw_text(canvas, &text, left, top, scale, style.label_text);
}

fn fill_disc(canvas: &mut RgbImage, center: Point, radius: f64, color: [u8; 3]) {
    let reach = radius.ceil() as i64;
    let (cx, cy) = (center.x as i64, center.y as i64);
    for y in (cy - reach)..=(cy + reach) {
        for x in (cx - reach)..=(cx + reach) {
            let (dx, dy) = ((x - cx) as f64, (y - cy) as f64);
            if dx * dx + dy * dy <= radius * radius {
                put_clipped(canvas, x, y, color);
            }
        }
    }
}

fn put_clipped(canvas: &mut RgbImage, x: i64, y: i64, color: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < canvas.width() && (y as u32) < canvas.height() {
        canvas.put_pixel(x as u32, y as u32, Rgb(color));
    }
}

/// Draw `text` with the built-in 8x8 bitmap font, each font pixel blown up
/// to a `scale`x`scale` block. Pixels falling off the canvas are dropped.
pub fn draw_text(
    canvas: &mut RgbImage,
    text: &str,
    left: i64,
    top: i64,
    scale: u32,
    color: [u8; 3],
) {
    let scale = scale.max(1) as i64;
    for (i, ch) in text.chars().enumerate() {
        let glyph = font8x8::BASIC_FONTS
            .get(ch)
            .or_else(|| font8x8::BASIC_FONTS.get('?'))
            .unwrap_or([0; 8]);
        let gx = left + i as i64 * 8 * scale;
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..8 {
                if bits & (1 << col) == 0 {
                    continue;
                }
                for dy in 0..scale {
                    for dx in 0..scale {
                        put_clipped(
                            canvas,
                            gx + col * scale + dx,
                            top + row as i64 * scale + dy,
                            color,
                        );
                    }
                }
            }
        }
    }
}

pub fn fill_rect(canvas: &mut RgbImage, b: &RegionBox, color: [u8; 3]) {
    for y in b.y0..b.y1 {
        for x in b.x0..b.x1 {
            put_clipped(canvas, x, y, color);
        }
    }
}

pub fn stroke_rect(canvas: &mut RgbImage, b: &RegionBox, thickness: i64, color: [u8; 3]) {
    for y in b.y0..b.y1 {
        for x in b.x0..b.x1 {
            let border = x < b.x0 + thickness
                || x >= b.x1 - thickness
                || y < b.y0 + thickness
                || y >= b.y1 - thickness;
            if border {
                put_clipped(canvas, x, y, color);
            }
        }
    }
}

/// Outcome of comparing two screenshots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffReport {
    pub changed_fraction: f64,
    pub identical: bool,
}

impl DiffReport {
    pub fn changed(&self) -> bool {
        !self.identical
    }
}

/// Fraction of pixels whose largest channel delta exceeds
/// [`PIXEL_DELTA_THRESHOLD`]; `identical` when that fraction is within
/// `tolerance`. Screens of different sizes count as fully changed.
pub fn diff(a: &Screenshot, b: &Screenshot, tolerance: f64) -> DiffReport {
    if a.dims != b.dims {
        return DiffReport {
            changed_fraction: 1.0,
            identical: false,
        };
    }
    if Arc::ptr_eq(&a.pixels, &b.pixels) {
        return DiffReport {
            changed_fraction: 0.0,
            identical: true,
        };
    }
    let changed = a
        .pixels
        .as_raw()
        .chunks_exact(3)
        .zip(b.pixels.as_raw().chunks_exact(3))
        .filter(|(pa, pb)| {
            pa.iter()
                .zip(pb.iter())
                .any(|(x, y)| x.abs_diff(*y) > PIXEL_DELTA_THRESHOLD)
        })
        .count();
    let changed_fraction = changed as f64 / a.dims.area() as f64;
    DiffReport {
        changed_fraction,
        identical: changed_fraction <= tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn dims(w: u32, h: u32) -> Dims {
        Dims::new(w, h).unwrap()
    }

    fn noise(w: u32, h: u32, seed: u64) -> Screenshot {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let img = RgbImage::from_fn(w, h, |_, _| Rgb([rng.gen(), rng.gen(), rng.gen()]));
        Screenshot::from_rgb(img).unwrap()
    }

    fn bx(x0: i64, y0: i64, x1: i64, y1: i64) -> RegionBox {
        RegionBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn digest_is_a_function_of_pixels() {
        let a = noise(20, 10, 1);
        let b = Screenshot::from_rgb(a.to_rgb()).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), noise(20, 10, 2).digest());
        let d: Digest = a.digest().to_string().parse().unwrap();
        assert_eq!(d, a.digest());
    }

    #[test]
    fn png_round_trip_preserves_pixels() {
        let a = noise(17, 9, 3);
        let back = Screenshot::from_png_bytes(&a.to_png_bytes().unwrap()).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn full_crop_is_identity_and_single_pixel_crop_matches() {
        let a = noise(30, 20, 4);
        let full = crop(&a, &RegionBox::full(a.dims())).unwrap();
        assert_eq!(full.pixels().as_raw(), a.pixels().as_raw());
        let one = crop(&a, &bx(7, 11, 8, 12)).unwrap();
        assert_eq!(one.dims(), dims(1, 1));
        assert_eq!(one.pixel(0, 0), a.pixel(7, 11));
        assert!(crop(&a, &bx(25, 0, 31, 5)).is_err());
    }

    #[test]
    fn nested_crops_compose() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        for seed in 0..50 {
            let a = noise(40, 30, seed);
            let (ox0, oy0) = (rng.gen_range(0..20), rng.gen_range(0..15));
            let (ox1, oy1) = (rng.gen_range(ox0 + 2..=40), rng.gen_range(oy0 + 2..=30));
            let outer = bx(ox0, oy0, ox1, oy1);
            let (w, h) = (outer.width(), outer.height());
            let (ix0, iy0) = (rng.gen_range(0..w - 1), rng.gen_range(0..h - 1));
            let (ix1, iy1) = (rng.gen_range(ix0 + 1..=w), rng.gen_range(iy0 + 1..=h));
            let twice = crop(&crop(&a, &outer).unwrap(), &bx(ix0, iy0, ix1, iy1)).unwrap();
            let once = crop(&a, &bx(ox0 + ix0, oy0 + iy0, ox0 + ix1, oy0 + iy1)).unwrap();
            // pixel-by-pixel oracle against the source image
            for v in 0..twice.dims().height() {
                for u in 0..twice.dims().width() {
                    assert_eq!(
                        twice.pixel(u, v),
                        a.pixel((ox0 + ix0) as u32 + u, (oy0 + iy0) as u32 + v)
                    );
                }
            }
            assert_eq!(twice, once);
        }
    }

    #[test]
    fn resize_same_dims_and_constants() {
        let a = noise(12, 8, 6);
        assert_eq!(resize(&a, a.dims()).pixels().as_raw(), a.pixels().as_raw());
        let flat = Screenshot::solid(dims(10, 6), [200, 17, 90]);
        let up = resize(&flat, dims(20, 12));
        assert_eq!(up.dims(), dims(20, 12));
        assert!(up.pixels().pixels().all(|p| p.0 == [200, 17, 90]));
        assert_eq!(resize(&a, dims(24, 16)), resize(&a, dims(24, 16)));
    }

    #[test]
    fn empty_landmarks_is_identity() {
        let a = noise(50, 50, 7);
        let out = draw_landmarks(&a, &[], &StyleConfig::default()).unwrap();
        assert_eq!(out.pixels().as_raw(), a.pixels().as_raw());
    }

    #[test]
    fn landmarks_do_not_mutate_input_and_are_deterministic() {
        let a = Screenshot::solid(dims(200, 120), [250, 250, 250]);
        let marks = [
            Landmark {
                at: Point::new(40, 40),
                label: 1,
                kind: LandmarkKind::History,
            },
            Landmark {
                at: Point::new(150, 80),
                label: 2,
                kind: LandmarkKind::Candidate,
            },
        ];
        let s = StyleConfig::default();
        let one = draw_landmarks(&a, &marks, &s).unwrap();
        let two = draw_landmarks(&a, &marks, &s).unwrap();
        assert_eq!(one.pixels().as_raw(), two.pixels().as_raw());
        assert!(a.pixels().pixels().all(|p| p.0 == [250, 250, 250]));
        // pink fill present near the top arm of each star
        for m in &marks {
            assert_eq!(
                one.pixel(m.at.x, m.at.y - 8),
                s.fill,
                "star {} missing",
                m.label
            );
        }
    }

    #[test]
    fn landmark_validation() {
        let a = Screenshot::solid(dims(20, 20), [0, 0, 0]);
        let s = StyleConfig::default();
        let out = Landmark {
            at: Point::new(20, 3),
            label: 1,
            kind: LandmarkKind::Judge,
        };
        assert!(matches!(
            draw_landmarks(&a, &[out], &s),
            Err(CanvasError::LandmarkOutside { .. })
        ));
        let m = Landmark {
            at: Point::new(3, 3),
            label: 1,
            kind: LandmarkKind::Judge,
        };
        assert!(matches!(
            draw_landmarks(&a, &[m, m], &s),
            Err(CanvasError::DuplicateLabel(1))
        ));
    }

    #[test]
    fn star_radius_follows_style() {
        let s = StyleConfig::default();
        assert_eq!(s.outer_radius(dims(100, 100)), 12);
        assert_eq!(s.outer_radius(dims(2240, 1260)), 19);
    }

    #[test]
    fn diff_examples() {
        let a = noise(40, 25, 8);
        let same = diff(&a, &a.clone(), 0.0);
        assert_eq!(
            same,
            DiffReport {
                changed_fraction: 0.0,
                identical: true
            }
        );

        let mut inv = a.to_rgb();
        let p = inv.get_pixel_mut(3, 4);
        p.0 = p.0.map(|c| 255 - c);
        let b = Screenshot::from_rgb(inv).unwrap();
        assert!(!diff(&a, &b, 0.0).identical);

        let other = Screenshot::solid(dims(40, 26), [0, 0, 0]);
        assert_eq!(
            diff(&a, &other, 0.5),
            DiffReport {
                changed_fraction: 1.0,
                identical: false
            }
        );
    }

    #[test]
    fn diff_tolerance_counts_altered_pixels() {
        // 200x100 = 20_000 pixels; altering 10 of them is 0.05%
        let base = Screenshot::solid(dims(200, 100), [10, 10, 10]);
        let mut img = base.to_rgb();
        let altered: Vec<(u32, u32)> = (0..10).map(|i| (i * 17 % 200, i * 7 % 100)).collect();
        for &(x, y) in &altered {
            img.put_pixel(x, y, Rgb([10, 60, 10]));
        }
        // a sub-threshold wobble does not count
        img.put_pixel(199, 99, Rgb([18, 10, 10]));
        let b = Screenshot::from_rgb(img).unwrap();
        let oracle = altered.len() as f64 / 20_000.0;
        let r = diff(&base, &b, 0.001);
        assert_eq!(r.changed_fraction, oracle);
        assert!(r.identical);
        assert!(!diff(&base, &b, 0.0).identical);
    }
}
