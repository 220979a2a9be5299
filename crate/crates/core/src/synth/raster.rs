use serde::{Deserialize, Serialize};

use crate::geometry::BitMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Ellipse,
    Rectangle,
}

/// Pixels of a shape centered at `(cx, cy)` with full extent `size`, on an
/// unbounded grid. A pixel belongs to the shape when its center does.
pub fn shape_pixels(shape: Shape, cx: f64, cy: f64, size: [f64; 2]) -> Vec<(i64, i64)> {
    let (a, b) = (0.5 * size[0], 0.5 * size[1]);
    let x0 = (cx - a).floor() as i64 - 1;
    let x1 = (cx + a).ceil() as i64 + 1;
    let y0 = (cy - b).floor() as i64 - 1;
    let y1 = (cy + b).ceil() as i64 + 1;
    let mut out = Vec::new();
    for x in x0..=x1 {
        for y in y0..=y1 {
            let dx = (x as f64 + 0.5 - cx) / a;
            let dy = (y as f64 + 0.5 - cy) / b;
            let inside = match shape {
                Shape::Ellipse => dx * dx + dy * dy <= 1.0,
                Shape::Rectangle => dx.abs() <= 1.0 && dy.abs() <= 1.0,
            };
            if inside {
                out.push((x, y));
            }
        }
    }
    out
}

/// Row-major boolean canvas used while composing a frame.
#[derive(Debug, Clone)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
    cells: Vec<bool>,
}

impl Canvas {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            cells: vec![false; width as usize * height as usize],
        }
    }

    fn index(&self, x: i64, y: i64) -> Option<usize> {
        (x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64)
            .then(|| y as usize * self.width as usize + x as usize)
    }

    pub fn get(&self, x: i64, y: i64) -> bool {
        self.index(x, y).is_some_and(|i| self.cells[i])
    }

    pub fn set(&mut self, x: i64, y: i64) {
        if let Some(i) = self.index(x, y) {
            self.cells[i] = true;
        }
    }

    pub fn to_mask(&self) -> BitMask {
        BitMask::from_raster(self.width, self.height, &self.cells).expect("canvas matches its dims")
    }
}

/// Keeps the `fraction` of foreground pixels closest to the mask centroid.
/// Ties are broken by pixel position so the result is deterministic.
pub fn keep_fraction(mask: &BitMask, fraction: f64) -> BitMask {
    let fraction = fraction.clamp(0.0, 1.0);
    let area = mask.area() as usize;
    let keep = (area as f64 * fraction).round() as usize;
    if keep >= area {
        return mask.clone();
    }
    if keep == 0 {
        return BitMask::empty(mask.width(), mask.height());
    }
    let px: Vec<(u32, u32)> = mask.pixels().collect();
    let (sx, sy) = px
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x as f64, b + y as f64));
    let (cx, cy) = (sx / area as f64, sy / area as f64);
    let mut ranked: Vec<(f64, (u32, u32))> = px
        .into_iter()
        .map(|(x, y)| {
            let d = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            (d, (x, y))
        })
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    BitMask::from_pixels(
        mask.width(),
        mask.height(),
        ranked.into_iter().take(keep).map(|(_, p)| p),
    )
}
