//! Boxes, run-length masks and the detection record every other module consumes.
//!
//! Masks use the uncompressed COCO layout: column-major run lengths that start
//! with a background run. A pixel `(x, y)` has linear index `x * height + y`.
//! Boxes use continuous coordinates; pixel `(x, y)` is covered when its center
//! `(x + 0.5, y + 0.5)` lies inside the half-open box.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid box: width {w} and height {h} must be finite and positive")]
    InvalidBox { w: f64, h: f64 },
    #[error("invalid box origin ({x}, {y}): coordinates must be finite")]
    InvalidOrigin { x: f64, y: f64 },
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("run lengths sum to {sum}, expected {expected}")]
    RunLengthMismatch { sum: u64, expected: u64 },
    #[error("raster has {len} pixels, expected {expected}")]
    RasterSize { len: usize, expected: usize },
    #[error("occlusion score must be finite, got {0}")]
    NonFiniteScore(f64),
    #[error("detection score {0} outside [0, 1]")]
    ScoreRange(f64),
}

/// Axis-aligned box in pixel units. Width and height are always positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(GeometryError::InvalidOrigin { x, y });
        }
        if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
            return Err(GeometryError::InvalidBox { w, h });
        }
        Ok(Self { x, y, w, h })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        // a contained extent is taken as is, so that identical boxes have IoU exactly 1
        let overlap = |a0: f64, a1: f64, aw: f64, b0: f64, b1: f64, bw: f64| {
            if b0 >= a0 && b1 <= a1 {
                bw
            } else if a0 >= b0 && a1 <= b1 {
                aw
            } else {
                a1.min(b1) - a0.max(b0)
            }
        };
        let iw = overlap(self.x, self.right(), self.w, other.x, other.right(), other.w);
        let ih = overlap(self.y, self.bottom(), self.h, other.y, other.bottom(), other.h);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// Intersection over union, always in `[0, 1]`.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        if inter <= 0.0 {
            return 0.0;
        }
        let union = self.area() + other.area() - inter;
        (inter / union).clamp(0.0, 1.0)
    }

    pub fn covers_pixel(&self, px: u32, py: u32) -> bool {
        let cx = px as f64 + 0.5;
        let cy = py as f64 + 0.5;
        self.x <= cx && cx < self.right() && self.y <= cy && cy < self.bottom()
    }

    /// Rasterizes the box onto a `width x height` grid by the pixel-center rule.
    pub fn to_mask(&self, width: u32, height: u32) -> BitMask {
        // pixel columns whose centers fall in [x, x + w)
        let lo = |v: f64| (v - 0.5).ceil().max(0.0);
        let hi = |v: f64, limit: u32| ((v - 0.5).ceil()).clamp(0.0, limit as f64);
        let x0 = lo(self.x) as u32;
        let x1 = hi(self.right(), width) as u32;
        let y0 = lo(self.y) as u32;
        let y1 = hi(self.bottom(), height) as u32;
        BitMask::from_fn(width, height, |px, py| {
            px >= x0 && px < x1 && py >= y0 && py < y1
        })
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = GeometryError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x, self.y, self.w, self.h)
    }
}

/// Binary mask stored as canonical column-major run lengths.
///
/// Canonical means: the first run is background (possibly zero-length), every
/// later run is non-empty, and neighbouring runs alternate. Two masks with the
/// same pixels therefore compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawMask")]
pub struct BitMask {
    width: u32,
    height: u32,
    runs: Vec<u32>,
}

#[derive(Deserialize)]
struct RawMask {
    width: u32,
    height: u32,
    runs: Vec<u32>,
}

impl TryFrom<RawMask> for BitMask {
    type Error = GeometryError;

    fn try_from(raw: RawMask) -> Result<Self, Self::Error> {
        BitMask::from_runs(raw.width, raw.height, raw.runs)
    }
}

impl BitMask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            runs: vec![width * height],
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        let n = width * height;
        let runs = if n == 0 { vec![0] } else { vec![0, n] };
        Self {
            width,
            height,
            runs,
        }
    }

    /// Builds a mask from run lengths, normalizing zero-length interior runs.
    pub fn from_runs(width: u32, height: u32, runs: Vec<u32>) -> Result<Self, GeometryError> {
        let expected = width as u64 * height as u64;
        let sum: u64 = runs.iter().map(|&r| r as u64).sum();
        if sum != expected {
            return Err(GeometryError::RunLengthMismatch { sum, expected });
        }
        let mut canon: Vec<u32> = vec![0];
        let mut value = false;
        for r in runs {
            if r > 0 {
                let last_is_fg = canon.len() % 2 == 0;
                if last_is_fg == value {
                    *canon.last_mut().unwrap() += r;
                } else {
                    canon.push(r);
                }
            }
            value = !value;
        }
        Ok(Self {
            width,
            height,
            runs: canon,
        })
    }

    /// Encodes a row-major raster (`raster[y * width + x]`).
    pub fn from_raster(width: u32, height: u32, raster: &[bool]) -> Result<Self, GeometryError> {
        let expected = width as usize * height as usize;
        if raster.len() != expected {
            return Err(GeometryError::RasterSize {
                len: raster.len(),
                expected,
            });
        }
        Ok(Self::from_fn(width, height, |x, y| {
            raster[y as usize * width as usize + x as usize]
        }))
    }

    /// Encodes the predicate `f(x, y)` evaluated over the whole grid.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut runs = vec![0u32];
        let mut current = false;
        for x in 0..width {
            for y in 0..height {
                let v = f(x, y);
                if v == current {
                    *runs.last_mut().unwrap() += 1;
                } else {
                    runs.push(1);
                    current = v;
                }
            }
        }
        Self {
            width,
            height,
            runs,
        }
    }

    /// Builds a mask from an iterator of foreground pixels. Out-of-range
    /// pixels are ignored.
    pub fn from_pixels(width: u32, height: u32, pixels: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut raster = vec![false; width as usize * height as usize];
        for (x, y) in pixels {
            if x < width && y < height {
                raster[y as usize * width as usize + x as usize] = true;
            }
        }
        Self::from_fn(width, height, |x, y| raster[y as usize * width as usize + x as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn runs(&self) -> &[u32] {
        &self.runs
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    /// Row-major raster (`raster[y * width + x]`).
    pub fn to_raster(&self) -> Vec<bool> {
        let mut out = vec![false; self.width as usize * self.height as usize];
        for (x, y) in self.pixels() {
            out[y as usize * self.width as usize + x as usize] = true;
        }
        out
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        if x >= self.width || y >= self.height {
            return false;
        }
        let idx = x as u64 * self.height as u64 + y as u64;
        self.intervals().any(|(s, e)| s <= idx && idx < e)
    }

    /// Foreground intervals `[start, end)` in column-major index space.
    pub fn intervals(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        let mut pos = 0u64;
        self.runs.iter().enumerate().filter_map(move |(i, &r)| {
            let start = pos;
            pos += r as u64;
            (i % 2 == 1).then_some((start, pos))
        })
    }

    /// Foreground pixels as `(x, y)` in column-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let h = self.height as u64;
        self.intervals()
            .flat_map(move |(s, e)| (s..e).map(move |i| ((i / h) as u32, (i % h) as u32)))
    }

    /// Number of foreground pixels.
    pub fn area(&self) -> u64 {
        self.runs.iter().skip(1).step_by(2).map(|&r| r as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    fn check_dims(&self, other: &BitMask) -> Result<(), GeometryError> {
        if self.dims() != other.dims() {
            return Err(GeometryError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    /// `|A ∩ B|`, computed by merging foreground intervals.
    pub fn intersection_area(&self, other: &BitMask) -> Result<u64, GeometryError> {
        self.check_dims(other)?;
        let a: Vec<_> = self.intervals().collect();
        let b: Vec<_> = other.intervals().collect();
        let (mut i, mut j, mut total) = (0, 0, 0u64);
        while i < a.len() && j < b.len() {
            let lo = a[i].0.max(b[j].0);
            let hi = a[i].1.min(b[j].1);
            if hi > lo {
                total += hi - lo;
            }
            if a[i].1 < b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Ok(total)
    }

    pub fn union_area(&self, other: &BitMask) -> Result<u64, GeometryError> {
        let inter = self.intersection_area(other)?;
        Ok(self.area() + other.area() - inter)
    }

    /// Pixelwise combination of two masks of equal size.
    pub fn combine(
        &self,
        other: &BitMask,
        op: impl Fn(bool, bool) -> bool,
    ) -> Result<BitMask, GeometryError> {
        self.check_dims(other)?;
        let a = self.to_raster();
        let b = other.to_raster();
        let w = self.width as usize;
        Ok(BitMask::from_fn(self.width, self.height, |x, y| {
            let i = y as usize * w + x as usize;
            op(a[i], b[i])
        }))
    }

    pub fn union(&self, other: &BitMask) -> Result<BitMask, GeometryError> {
        self.combine(other, |a, b| a || b)
    }

    pub fn difference(&self, other: &BitMask) -> Result<BitMask, GeometryError> {
        self.combine(other, |a, b| a && !b)
    }

    /// Tight bounding box of the foreground, `None` for an empty mask.
    pub fn to_bbox(&self) -> Option<BBox> {
        let h = self.height as u64;
        let mut bounds: Option<(u64, u64, u64, u64)> = None;
        for (s, e) in self.intervals() {
            let (x0, x1) = (s / h, (e - 1) / h);
            let (y0, y1) = if x0 == x1 {
                (s % h, (e - 1) % h)
            } else {
                (0, h - 1)
            };
            bounds = Some(match bounds {
                None => (x0, x1, y0, y1),
                Some((a, b, c, d)) => (a.min(x0), b.max(x1), c.min(y0), d.max(y1)),
            });
        }
        bounds.map(|(x0, x1, y0, y1)| BBox {
            x: x0 as f64,
            y: y0 as f64,
            w: (x1 - x0 + 1) as f64,
            h: (y1 - y0 + 1) as f64,
        })
    }
}

/// Count of foreground pixels.
pub fn mask_area(m: &BitMask) -> u64 {
    m.area()
}

/// `|A ∩ B|`; errors when the masks differ in size.
pub fn mask_intersection(a: &BitMask, b: &BitMask) -> Result<u64, GeometryError> {
    a.intersection_area(b)
}

pub fn mask_to_bbox(m: &BitMask) -> Option<BBox> {
    m.to_bbox()
}

/// Segmenter confidence that the tracked object is visible. Logit-like and
/// unbounded, but always finite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct OcclusionScore(f64);

impl OcclusionScore {
    pub fn new(value: f64) -> Result<Self, GeometryError> {
        if value.is_finite() {
            Ok(Self(value))
        } else {
            Err(GeometryError::NonFiniteScore(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for OcclusionScore {
    type Error = GeometryError;

    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<OcclusionScore> for f64 {
    fn from(s: OcclusionScore) -> Self {
        s.0
    }
}

/// A single detector output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: u32,
    pub bbox: BBox,
    pub score: f64,
    pub label: String,
}

impl Detection {
    pub fn new(frame: u32, bbox: BBox, score: f64, label: impl Into<String>) -> Result<Self, GeometryError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(GeometryError::ScoreRange(score));
        }
        Ok(Self {
            frame,
            bbox,
            score,
            label: label.into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn area_of_full_and_empty() {
        assert_eq!(BitMask::full(4, 4).area(), 16);
        assert_eq!(BitMask::empty(4, 4).area(), 0);
    }

    #[test]
    fn area_from_runs() {
        let m = BitMask::from_runs(4, 4, vec![3, 5, 8]).unwrap();
        // brute force over the decoded raster
        let count = m.to_raster().iter().filter(|&&p| p).count();
        assert_eq!(count, 5);
        assert_eq!(mask_area(&m), 5);
    }

    #[test]
    fn runs_must_cover_grid() {
        assert_eq!(
            BitMask::from_runs(4, 4, vec![3, 5]),
            Err(GeometryError::RunLengthMismatch { sum: 8, expected: 16 })
        );
    }

    #[test]
    fn zero_runs_are_normalized() {
        let a = BitMask::from_runs(2, 2, vec![1, 0, 1, 2]).unwrap();
        let b = BitMask::from_runs(2, 2, vec![2, 2]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.runs(), &[2, 2]);
    }

    #[test]
    fn half_plane_intersection() {
        let left = BitMask::from_fn(4, 4, |x, _| x < 2);
        let top = BitMask::from_fn(4, 4, |_, y| y < 2);
        let brute = left
            .to_raster()
            .iter()
            .zip(top.to_raster())
            .filter(|(a, b)| **a && *b)
            .count() as u64;
        assert_eq!(brute, 4);
        assert_eq!(mask_intersection(&left, &top).unwrap(), 4);
        assert_eq!(mask_intersection(&left, &left).unwrap(), left.area());
        let right = BitMask::from_fn(4, 4, |x, _| x >= 2);
        assert_eq!(mask_intersection(&left, &right).unwrap(), 0);
    }

    #[test]
    fn intersection_rejects_size_mismatch() {
        let a = BitMask::empty(4, 4);
        let b = BitMask::empty(4, 5);
        assert!(matches!(
            a.intersection_area(&b),
            Err(GeometryError::DimensionMismatch(..))
        ));
    }

    #[test]
    fn bbox_of_pixels() {
        let single = BitMask::from_pixels(8, 8, [(2, 3)]);
        assert_eq!(single.to_bbox(), Some(bb(2.0, 3.0, 1.0, 1.0)));
        assert_eq!(BitMask::empty(8, 8).to_bbox(), None);
        let pair = BitMask::from_pixels(8, 8, [(1, 1), (4, 2)]);
        assert_eq!(mask_to_bbox(&pair), Some(bb(1.0, 1.0, 4.0, 2.0)));
    }

    #[test]
    fn box_rejects_degenerate_sizes() {
        assert!(BBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BBox::new(0.0, 0.0, 1.0, -1.0).is_err());
        assert!(BBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn box_raster_roundtrip() {
        let b = bb(2.0, 1.0, 3.0, 4.0);
        let m = b.to_mask(10, 10);
        assert_eq!(m.area(), 12);
        assert_eq!(m.to_bbox(), Some(b));
        // fractional edges follow the pixel-center rule
        let f = bb(1.6, 0.4, 1.0, 1.0);
        let fm = f.to_mask(10, 10);
        assert_eq!(fm.pixels().collect::<Vec<_>>(), vec![(2, 0)]);
    }

    #[test]
    fn occlusion_score_must_be_finite() {
        assert!(OcclusionScore::new(f64::INFINITY).is_err());
        assert!(OcclusionScore::new(f64::NAN).is_err());
        assert_eq!(OcclusionScore::new(-3.5).unwrap().value(), -3.5);
    }

    #[test]
    fn detection_score_range() {
        let b = bb(0.0, 0.0, 1.0, 1.0);
        assert!(Detection::new(0, b, 1.2, "x").is_err());
        assert!(Detection::new(0, b, 1.0, "x").is_ok());
    }

    #[test]
    fn serde_shapes() {
        let b = bb(1.0, 2.0, 3.0, 4.0);
        assert_eq!(serde_json::to_string(&b).unwrap(), "[1.0,2.0,3.0,4.0]");
        assert!(serde_json::from_str::<BBox>("[0,0,0,1]").is_err());
        let m = BitMask::from_runs(2, 2, vec![1, 2, 1]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"width":2,"height":2,"runs":[1,2,1]}"#);
        assert!(serde_json::from_str::<BitMask>(r#"{"width":2,"height":2,"runs":[1]}"#).is_err());
    }

    fn raster_strategy() -> impl Strategy<Value = (u32, u32, Vec<bool>)> {
        (1u32..=64, 1u32..=64).prop_flat_map(|(w, h)| {
            (
                Just(w),
                Just(h),
                proptest::collection::vec(any::<bool>(), (w * h) as usize),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn rle_roundtrip((w, h, raster) in raster_strategy()) {
            let m = BitMask::from_raster(w, h, &raster).unwrap();
            prop_assert_eq!(m.runs().iter().map(|&r| r as u64).sum::<u64>(), (w * h) as u64);
            prop_assert_eq!(m.to_raster(), raster.clone());
            let again = BitMask::from_runs(w, h, m.runs().to_vec()).unwrap();
            prop_assert_eq!(again, m);
        }
    }

    proptest! {
        #[test]
        fn intersection_bounds((w, h, ra) in raster_strategy(), seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let rb: Vec<bool> = (0..ra.len()).map(|_| rng.random_bool(0.5)).collect();
            let a = BitMask::from_raster(w, h, &ra).unwrap();
            let b = BitMask::from_raster(w, h, &rb).unwrap();
            let inter = a.intersection_area(&b).unwrap();
            let brute = ra.iter().zip(&rb).filter(|(x, y)| **x && **y).count() as u64;
            prop_assert_eq!(inter, brute);
            prop_assert_eq!(inter, b.intersection_area(&a).unwrap());
            prop_assert!(inter <= a.area().min(b.area()));
        }

        #[test]
        fn bbox_is_tight((w, h, raster) in raster_strategy()) {
            let m = BitMask::from_raster(w, h, &raster).unwrap();
            match m.to_bbox() {
                None => prop_assert!(m.is_empty()),
                Some(b) => {
                    let px: Vec<_> = m.pixels().collect();
                    for &(x, y) in &px {
                        prop_assert!(b.covers_pixel(x, y));
                    }
                    let (x0, y0) = (b.x() as u32, b.y() as u32);
                    let (x1, y1) = ((b.right() - 1.0) as u32, (b.bottom() - 1.0) as u32);
                    prop_assert!(px.iter().any(|p| p.0 == x0));
                    prop_assert!(px.iter().any(|p| p.0 == x1));
                    prop_assert!(px.iter().any(|p| p.1 == y0));
                    prop_assert!(px.iter().any(|p| p.1 == y1));
                }
            }
        }
    }
}
