//! Region proposal, boundary clamping, zoom scaling and coordinate rebasing.
//!
//! Public coordinates are integer pixels with the origin at the top-left
//! corner. A [`RegionBox`] spans the half-open pixel ranges `x0..x1` and
//! `y0..y1`; membership tests used for scoring ([`point_in_box`]) are
//! boundary-inclusive. Real arithmetic (scale factors, ratio products) is
//! carried out in a caller-chosen [`Scalar`] and rounded half away from zero.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point ({x}, {y}) lies outside a {width}x{height} frame")]
    PointOutside {
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
    #[error("at least one region ratio is required")]
    EmptyRatios,
    #[error("ratio side {0} is outside (0, 1]")]
    InvalidRatio(String),
    #[error("dimensions must be strictly positive, got {width}x{height}")]
    InvalidDims { width: u32, height: u32 },
    #[error("box ({x0},{y0})-({x1},{y1}) has no area")]
    EmptyBox { x0: i64, y0: i64, x1: i64, y1: i64 },
    #[error("box ({x0},{y0})-({x1},{y1}) is not inside a {width}x{height} image")]
    BoxOutside {
        x0: i64,
        y0: i64,
        x1: i64,
        y1: i64,
        width: u32,
        height: u32,
    },
}

/// Integer pixel position, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point {
    pub x: u32,
    pub y: u32,
}

impl Point {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }

    pub fn distance_squared(&self, other: &Point) -> u64 {
        let dx = self.x.abs_diff(other.x) as u64;
        let dy = self.y.abs_diff(other.y) as u64;
        dx * dx + dy * dy
    }

    /// Clamp onto the last valid pixel of `dims` on each axis.
    pub fn clamped_to(self, dims: Dims) -> Point {
        Point::new(self.x.min(dims.width - 1), self.y.min(dims.height - 1))
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Strictly positive pixel dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    width: u32,
    height: u32,
}

impl Dims {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidDims { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    /// True when `p` addresses a pixel of this frame.
    pub fn contains(&self, p: Point) -> bool {
        p.x < self.width && p.y < self.height
    }

    fn check(&self, p: Point) -> Result<(), GeometryError> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(GeometryError::PointOutside {
                x: p.x,
                y: p.y,
                width: self.width,
                height: self.height,
            })
        }
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl Serialize for Dims {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.width, self.height].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Dims {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [w, h] = <[u32; 2]>::deserialize(d)?;
        Dims::new(w, h).map_err(D::Error::custom)
    }
}

/// Region size as fractions of the full image's width and height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratio<F: Scalar> {
    rw: F,
    rh: F,
}

impl<F: Scalar> Ratio<F> {
    pub fn new(rw: F, rh: F) -> Result<Self, GeometryError> {
        for side in [rw, rh] {
            if !(side > F::zero() && side <= F::one()) {
                return Err(GeometryError::InvalidRatio(side.to_string()));
            }
        }
        Ok(Self { rw, rh })
    }

    pub fn width_fraction(&self) -> F {
        self.rw
    }

    pub fn height_fraction(&self) -> F {
        self.rh
    }

    /// Requested pixel size for an image: `round(r * side)`, at least one pixel.
    pub fn pixel_size(&self, image: Dims) -> (i64, i64) {
        let w = (self.rw * F::from_u32_exact(image.width))
            .round_i64()
            .max(1);
        let h = (self.rh * F::from_u32_exact(image.height))
            .round_i64()
            .max(1);
        (w, h)
    }
}

impl<F: Scalar> Serialize for Ratio<F> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.rw, self.rh].serialize(s)
    }
}

impl<'de, F: Scalar> Deserialize<'de> for Ratio<F> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [rw, rh] = <[F; 2]>::deserialize(d)?;
        Ratio::new(rw, rh).map_err(D::Error::custom)
    }
}

/// The ratio set used when nothing else is configured.
pub fn default_ratios<F: Scalar>() -> Vec<Ratio<F>> {
    [(0.5, 0.5), (0.3, 0.3), (0.4, 0.8), (0.8, 0.4)]
        .into_iter()
        .map(|(w, h)| {
            Ratio::new(F::from_f64(w).unwrap(), F::from_f64(h).unwrap())
                .expect("default ratios are valid")
        })
        .collect()
}

/// Axis-aligned rectangle in full-image pixels, spanning `x0..x1` by `y0..y1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct RegionBox<F: Scalar> {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_ratio: Option<Ratio<F>>,
}

impl<F: Scalar> RegionBox<F> {
    pub fn new(x0: i64, y0: i64, x1: i64, y1: i64) -> Result<Self, GeometryError> {
        if x1 <= x0 || y1 <= y0 {
            return Err(GeometryError::EmptyBox { x0, y0, x1, y1 });
        }
        Ok(Self {
            x0,
            y0,
            x1,
            y1,
            source_ratio: None,
        })
    }

    pub fn full(image: Dims) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: image.width as i64,
            y1: image.height as i64,
            source_ratio: None,
        }
    }

    pub fn with_ratio(mut self, ratio: Ratio<F>) -> Self {
        self.source_ratio = Some(ratio);
        self
    }

    pub fn width(&self) -> i64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> i64 {
        self.y1 - self.y0
    }

    pub fn is_within(&self, image: Dims) -> bool {
        self.x0 >= 0
            && self.y0 >= 0
            && self.x0 < self.x1
            && self.y0 < self.y1
            && self.x1 <= image.width as i64
            && self.y1 <= image.height as i64
    }

    /// True when `p` addresses a pixel covered by the box (half-open).
    pub fn covers(&self, p: Point) -> bool {
        let (x, y) = (p.x as i64, p.y as i64);
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    /// Center pixel, rounded toward the top-left.
    pub fn center(&self) -> Point {
        let cx = self.x0 + (self.x1 - self.x0 - 1) / 2;
        let cy = self.y0 + (self.y1 - self.y0 - 1) / 2;
        Point::new(cx.max(0) as u32, cy.max(0) as u32)
    }

    pub fn dims(&self) -> Result<Dims, GeometryError> {
        if self.width() <= 0
            || self.height() <= 0
            || self.width() > u32::MAX as i64
            || self.height() > u32::MAX as i64
        {
            return Err(GeometryError::EmptyBox {
                x0: self.x0,
                y0: self.y0,
                x1: self.x1,
                y1: self.y1,
            });
        }
        Dims::new(self.width() as u32, self.height() as u32)
    }

    fn require_within(&self, image: Dims) -> Result<(), GeometryError> {
        if self.is_within(image) {
            Ok(())
        } else {
            Err(GeometryError::BoxOutside {
                x0: self.x0,
                y0: self.y0,
                x1: self.x1,
                y1: self.y1,
                width: image.width,
                height: image.height,
            })
        }
    }
}

impl<F: Scalar> fmt::Display for RegionBox<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})-({},{})", self.x0, self.y0, self.x1, self.y1)
    }
}

/// How a region is blown up for per-region prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ZoomSpec<F: Scalar> {
    pub region: RegionBox<F>,
    pub scale: F,
    pub output: Dims,
}

/// One box per ratio, centered on `focal` and translated inside the image.
pub fn propose_regions<F: Scalar>(
    focal: Point,
    image: Dims,
    ratios: &[Ratio<F>],
) -> Result<Vec<RegionBox<F>>, GeometryError> {
    image.check(focal)?;
    if ratios.is_empty() {
        return Err(GeometryError::EmptyRatios);
    }
    Ok(ratios
        .iter()
        .map(|ratio| {
            let (w, h) = ratio.pixel_size(image);
            let x0 = focal.x as i64 - w / 2;
            let y0 = focal.y as i64 - h / 2;
            let raw = RegionBox {
                x0,
                y0,
                x1: x0 + w,
                y1: y0 + h,
                source_ratio: Some(*ratio),
            };
            clamp_box(&raw, image)
        })
        .collect())
}

fn clamp_axis(lo: i64, hi: i64, extent: i64) -> (i64, i64) {
    let len = (hi - lo).max(1);
    if len >= extent {
        (0, extent)
    } else if lo < 0 {
        (0, len)
    } else if lo + len > extent {
        (extent - len, extent)
    } else {
        (lo, lo + len)
    }
}

/// Translate a box inside the image, keeping its size on every axis it fits;
/// an axis it does not fit is spanned completely.
pub fn clamp_box<F: Scalar>(b: &RegionBox<F>, image: Dims) -> RegionBox<F> {
    let (x0, x1) = clamp_axis(b.x0, b.x1, image.width as i64);
    let (y0, y1) = clamp_axis(b.y0, b.y1, image.height as i64);
    RegionBox {
        x0,
        y0,
        x1,
        y1,
        source_ratio: b.source_ratio,
    }
}

/// Uniform, aspect-preserving upscale so one side of the region matches the
/// corresponding full-image side.
pub fn zoom_spec<F: Scalar>(b: &RegionBox<F>, image: Dims) -> Result<ZoomSpec<F>, GeometryError> {
    b.require_within(image)?;
    let (bw, bh) = (b.width(), b.height());
    let (iw, ih) = (
        F::from_u32_exact(image.width),
        F::from_u32_exact(image.height),
    );
    let sx = iw / F::from_i64_lossy(bw);
    let sy = ih / F::from_i64_lossy(bh);
    let (scale, out_w, out_h) = if sx <= sy {
        let h = (F::from_i64_lossy(bh) * sx)
            .round_i64()
            .clamp(1, image.height as i64);
        (sx, image.width, h as u32)
    } else {
        let w = (F::from_i64_lossy(bw) * sy)
            .round_i64()
            .clamp(1, image.width as i64);
        (sy, w as u32, image.height)
    };
    Ok(ZoomSpec {
        region: *b,
        scale,
        output: Dims::new(out_w, out_h)?,
    })
}

/// Map a pixel of the zoomed canvas back into the full frame.
pub fn to_full_coords<F: Scalar>(p: Point, spec: &ZoomSpec<F>) -> Result<Point, GeometryError> {
    spec.output.check(p)?;
    let b = &spec.region;
    let fx = b.x0 + (F::from_u32_exact(p.x) / spec.scale).round_i64();
    let fy = b.y0 + (F::from_u32_exact(p.y) / spec.scale).round_i64();
    let fx = fx.clamp(b.x0, b.x1 - 1);
    let fy = fy.clamp(b.y0, b.y1 - 1);
    Ok(Point::new(fx as u32, fy as u32))
}

/// Map a full-frame pixel inside the region onto the zoomed canvas.
pub fn to_region_coords<F: Scalar>(p: Point, spec: &ZoomSpec<F>) -> Result<Point, GeometryError> {
    let b = &spec.region;
    if !b.covers(p) {
        return Err(GeometryError::PointOutside {
            x: p.x,
            y: p.y,
            width: b.width().max(0) as u32,
            height: b.height().max(0) as u32,
        });
    }
    let rx = (F::from_i64_lossy(p.x as i64 - b.x0) * spec.scale).round_i64();
    let ry = (F::from_i64_lossy(p.y as i64 - b.y0) * spec.scale).round_i64();
    let rx = rx.clamp(0, spec.output.width as i64 - 1);
    let ry = ry.clamp(0, spec.output.height as i64 - 1);
    Ok(Point::new(rx as u32, ry as u32))
}

/// Boundary-inclusive hit test used for grounding accuracy.
pub fn point_in_box<F: Scalar>(p: Point, b: &RegionBox<F>) -> bool {
    let (x, y) = (p.x as i64, p.y as i64);
    b.x0 <= x && x <= b.x1 && b.y0 <= y && y <= b.y1
}

#[cfg(test)]
mod tests {
    use super::*;

    type R = Ratio<f64>;
    type B = RegionBox<f64>;

    fn dims(w: u32, h: u32) -> Dims {
        Dims::new(w, h).unwrap()
    }

    fn ratio(w: f64, h: f64) -> R {
        Ratio::new(w, h).unwrap()
    }

    fn bx(x0: i64, y0: i64, x1: i64, y1: i64) -> B {
        RegionBox {
            x0,
            y0,
            x1,
            y1,
            source_ratio: None,
        }
    }

    fn corners(b: &B) -> (i64, i64, i64, i64) {
        (b.x0, b.y0, b.x1, b.y1)
    }

    /// Exhaustively search every in-bounds placement of a `w`x`h` box and
    /// pick the one whose center is nearest the focal point.
    fn shift_clamp_oracle(focal: Point, image: Dims, w: i64, h: i64) -> (i64, i64, i64, i64) {
        let best_axis = |f: i64, len: i64, extent: i64| -> (i64, i64) {
            if len >= extent {
                return (0, extent);
            }
            let ideal = f - len / 2;
            let lo = (0..=extent - len)
                .min_by_key(|&s| (s - ideal).abs())
                .unwrap();
            (lo, lo + len)
        };
        let (x0, x1) = best_axis(focal.x as i64, w, image.width() as i64);
        let (y0, y1) = best_axis(focal.y as i64, h, image.height() as i64);
        (x0, y0, x1, y1)
    }

    #[test]
    fn centered_proposal_needs_no_clamping() {
        let boxes =
            propose_regions(Point::new(500, 500), dims(1000, 1000), &[ratio(0.5, 0.5)]).unwrap();
        assert_eq!(corners(&boxes[0]), (250, 250, 750, 750));
        assert_eq!(boxes[0].source_ratio, Some(ratio(0.5, 0.5)));
    }

    #[test]
    fn corner_proposal_matches_shift_clamp_oracle() {
        let image = dims(1000, 1000);
        let expected = shift_clamp_oracle(Point::new(50, 50), image, 500, 500);
        assert_eq!(expected, (0, 0, 500, 500));
        let boxes = propose_regions(Point::new(50, 50), image, &[ratio(0.5, 0.5)]).unwrap();
        assert_eq!(corners(&boxes[0]), expected);
    }

    #[test]
    fn tall_ratio_near_right_edge_matches_oracle() {
        let image = dims(2240, 1260);
        let r = ratio(0.4, 0.8);
        assert_eq!(r.pixel_size(image), (896, 1008));
        let expected = shift_clamp_oracle(Point::new(2200, 100), image, 896, 1008);
        assert_eq!(expected, (1344, 0, 2240, 1008));
        let boxes = propose_regions(Point::new(2200, 100), image, &[r]).unwrap();
        assert_eq!(corners(&boxes[0]), expected);
    }

    #[test]
    fn proposal_errors() {
        let image = dims(100, 100);
        assert!(matches!(
            propose_regions::<f64>(Point::new(100, 5), image, &default_ratios()),
            Err(GeometryError::PointOutside { .. })
        ));
        assert_eq!(
            propose_regions::<f64>(Point::new(5, 5), image, &[]),
            Err(GeometryError::EmptyRatios)
        );
    }

    #[test]
    fn identity_ratio_yields_full_image() {
        let image = dims(640, 480);
        for focal in [Point::new(0, 0), Point::new(639, 479), Point::new(10, 400)] {
            let b = propose_regions(focal, image, &[ratio(1.0, 1.0)]).unwrap();
            assert_eq!(corners(&b[0]), (0, 0, 640, 480));
        }
    }

    #[test]
    fn ratio_validation() {
        assert!(Ratio::new(0.0_f64, 0.5).is_err());
        assert!(Ratio::new(0.5_f64, 1.01).is_err());
        assert!(Ratio::new(f64::NAN, 0.5).is_err());
        assert!(Ratio::new(1.0_f32, 1.0).is_ok());
    }

    #[test]
    fn clamp_examples() {
        let image = dims(1000, 1000);
        assert_eq!(
            corners(&clamp_box(&bx(250, 250, 750, 750), image)),
            (250, 250, 750, 750)
        );
        assert_eq!(
            corners(&clamp_box(&bx(-200, -200, 300, 300), image)),
            (0, 0, 500, 500)
        );
        assert_eq!(
            corners(&clamp_box(&bx(-100, 0, 1100, 600), image)),
            (0, 0, 1000, 600)
        );
    }

    #[test]
    fn zoom_examples() {
        let z = zoom_spec(&bx(250, 250, 750, 750), dims(1000, 1000)).unwrap();
        assert_eq!(z.scale, 2.0);
        assert_eq!(z.output, dims(1000, 1000));

        let z = zoom_spec(&bx(1344, 0, 2240, 1008), dims(2240, 1260)).unwrap();
        assert_eq!(z.scale, 1.25);
        assert_eq!(z.output, dims(1120, 1260));

        let full = B::full(dims(333, 777));
        let z = zoom_spec(&full, dims(333, 777)).unwrap();
        assert_eq!(z.scale, 1.0);
        assert_eq!(z.output, dims(333, 777));

        assert!(zoom_spec(&bx(-1, 0, 10, 10), dims(100, 100)).is_err());
    }

    #[test]
    fn full_coordinate_examples() {
        let z = zoom_spec(&bx(250, 250, 750, 750), dims(1000, 1000)).unwrap();
        assert_eq!(
            to_full_coords(Point::new(0, 0), &z).unwrap(),
            Point::new(250, 250)
        );
        assert_eq!(
            to_full_coords(Point::new(500, 500), &z).unwrap(),
            Point::new(500, 500)
        );
        assert!(to_full_coords(Point::new(1000, 3), &z).is_err());

        let z = zoom_spec(&bx(1344, 0, 2240, 1008), dims(2240, 1260)).unwrap();
        assert_eq!(
            to_full_coords(Point::new(500, 625), &z).unwrap(),
            Point::new(1744, 500)
        );
    }

    #[test]
    fn region_coordinate_examples() {
        let z = zoom_spec(&bx(250, 250, 750, 750), dims(1000, 1000)).unwrap();
        assert_eq!(
            to_region_coords(Point::new(250, 250), &z).unwrap(),
            Point::new(0, 0)
        );
        assert_eq!(
            to_region_coords(Point::new(400, 600), &z).unwrap(),
            Point::new(300, 700)
        );
        assert!(to_region_coords(Point::new(100, 600), &z).is_err());
    }

    #[test]
    fn point_in_box_is_boundary_inclusive() {
        let b = bx(0, 0, 20, 20);
        assert!(point_in_box(Point::new(10, 10), &b));
        assert!(point_in_box(Point::new(20, 20), &b));
        assert!(point_in_box(Point::new(0, 20), &b));
        assert!(!point_in_box(Point::new(21, 10), &b));
    }

    #[test]
    fn f32_scalar_agrees_on_examples() {
        let image = Dims::new(2240, 1260).unwrap();
        let boxes = propose_regions::<f32>(
            Point::new(2200, 100),
            image,
            &[Ratio::new(0.4, 0.8).unwrap()],
        )
        .unwrap();
        let z = zoom_spec(&boxes[0], image).unwrap();
        assert_eq!(z.scale, 1.25_f32);
        assert_eq!(
            to_full_coords(Point::new(500, 625), &z).unwrap(),
            Point::new(1744, 500)
        );
    }

    #[test]
    fn serde_shapes() {
        let r: Ratio<f64> = serde_json::from_str("[0.4, 0.8]").unwrap();
        assert_eq!(r, ratio(0.4, 0.8));
        assert!(serde_json::from_str::<Ratio<f64>>("[0.0, 0.8]").is_err());
        assert!(serde_json::from_str::<Dims>("[0, 4]").is_err());
        let b: B = serde_json::from_str(r#"{"x0":1,"y0":2,"x1":3,"y1":4}"#).unwrap();
        assert_eq!(corners(&b), (1, 2, 3, 4));
    }
}
