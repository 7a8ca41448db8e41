use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound of the normalized coordinate grid.
pub const GRID_MAX: u16 = 1000;

/// Axis-aligned box on the 0–1000 grid, origin top-left.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[i64; 4]", into = "[u16; 4]")]
pub struct BoundingBox {
    pub x0: u16,
    pub y0: u16,
    pub x1: u16,
    pub y1: u16,
}

impl BoundingBox {
    pub const NULL: BoundingBox = BoundingBox {
        x0: 0,
        y0: 0,
        x1: 0,
        y1: 0,
    };

    pub fn new(x0: i64, y0: i64, x1: i64, y1: i64) -> Result<Self> {
        let max = GRID_MAX as i64;
        let in_grid = |v: i64| (0..=max).contains(&v);
        if ![x0, y0, x1, y1].into_iter().all(in_grid) {
            return Err(Error::Domain(format!(
                "box [{x0},{y0},{x1},{y1}] outside the 0..={max} grid"
            )));
        }
        if x0 > x1 || y0 > y1 {
            return Err(Error::Domain(format!("inverted box [{x0},{y0},{x1},{y1}]")));
        }
        Ok(BoundingBox {
            x0: x0 as u16,
            y0: y0 as u16,
            x1: x1 as u16,
            y1: y1 as u16,
        })
    }

    pub fn width(&self) -> u16 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u16 {
        self.y1 - self.y0
    }

    pub fn coords(&self) -> [u16; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }
}

impl TryFrom<[i64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(v: [i64; 4]) -> Result<Self> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [u16; 4] {
    fn from(b: BoundingBox) -> Self {
        b.coords()
    }
}

/// Box in page pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl PixelBox {
    /// Axis-aligned bounding rectangle of a quadrilateral given as four
    /// `(x, y)` corners in any order.
    pub fn from_quad(corners: [(f64, f64); 4]) -> Self {
        let xs = corners.map(|c| c.0);
        let ys = corners.map(|c| c.1);
        let min = |v: [f64; 4]| v.into_iter().fold(f64::INFINITY, f64::min);
        let max = |v: [f64; 4]| v.into_iter().fold(f64::NEG_INFINITY, f64::max);
        PixelBox {
            x0: min(xs),
            y0: min(ys),
            x1: max(xs),
            y1: max(ys),
        }
    }
}

/// Maps a pixel box onto the 0–1000 grid: scale by `1000 / page_dim`, round
/// half up, clamp.
pub fn normalize_box(pixel: PixelBox, page_width: f64, page_height: f64) -> Result<BoundingBox> {
    if !(page_width > 0.0 && page_height > 0.0) {
        return Err(Error::Domain(format!(
            "page size must be positive, got {page_width}x{page_height}"
        )));
    }
    let scale = |v: f64, dim: f64| -> u16 {
        let scaled = (v * GRID_MAX as f64 / dim + 0.5).floor();
        if scaled.is_nan() {
            0
        } else {
            scaled.clamp(0.0, GRID_MAX as f64) as u16
        }
    };
    let (a, b) = (scale(pixel.x0, page_width), scale(pixel.x1, page_width));
    let (c, d) = (scale(pixel.y0, page_height), scale(pixel.y1, page_height));
    Ok(BoundingBox {
        x0: a.min(b),
        x1: a.max(b),
        y0: c.min(d),
        y1: c.max(d),
    })
}

/// Approximates word boxes by cutting a line box horizontally in proportion
/// to word lengths in characters. A one-character separator sits between
/// consecutive words and its slice is dropped. Cut points are
/// `x0 + round(cumulative / total * width)`, rounding half up.
pub fn split_line_to_words<S: AsRef<str>>(line: BoundingBox, words: &[S]) -> Result<Vec<BoundingBox>> {
    if words.is_empty() {
        return Err(Error::Annotation("line has no words".into()));
    }
    let lens: Vec<u64> = words.iter().map(|w| w.as_ref().chars().count() as u64).collect();
    if let Some(i) = lens.iter().position(|&l| l == 0) {
        return Err(Error::Annotation(format!("word {i} of line is empty")));
    }
    let total: u64 = lens.iter().sum::<u64>() + lens.len() as u64 - 1;
    let width = line.width() as u64;
    let cut = |cum: u64| -> u16 { line.x0 + ((2 * cum * width + total) / (2 * total)) as u16 };

    let mut boxes = Vec::with_capacity(words.len());
    let mut cum = 0;
    for (i, &len) in lens.iter().enumerate() {
        if i > 0 {
            cum += 1;
        }
        let x0 = cut(cum);
        cum += len;
        let x1 = cut(cum);
        boxes.push(BoundingBox {
            x0,
            x1,
            y0: line.y0,
            y1: line.y1,
        });
    }
    Ok(boxes)
}
