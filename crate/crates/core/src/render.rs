//! Heatmap rasterization to plain-text PPM.

use std::path::Path;

use thiserror::Error;

use crate::mesh::{FaceLocator, Triangulation};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("range must satisfy min < max, got [{0}, {1}]")]
    InvalidRange(f64, f64),
    #[error("expected {expected} values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("image size must be positive")]
    EmptyImage,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Scalars attached to vertices (interpolated) or faces (piecewise constant).
#[derive(Debug, Clone, Copy)]
pub enum Field<'a> {
    Vertex(&'a [f64]),
    Face(&'a [f64]),
}

pub const DEFAULT_LONG_AXIS: usize = 800;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Row-major, top row first.
    pub pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    /// ASCII `P3` encoding.
    pub fn to_ppm(&self) -> String {
        let mut out = format!("P3\n{} {}\n255\n", self.width, self.height);
        for row in self.pixels.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|[r, g, b]| format!("{r} {g} {b}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<(), RenderError> {
        std::fs::write(path, self.to_ppm())?;
        Ok(())
    }
}

pub const WHITE: [u8; 3] = [255, 255, 255];

/// Blue at `t = 0`, white at `t = 0.5`, red at `t = 1`.
pub fn blue_white_red(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let ramp = |s: f64| (255.0 * s).round() as u8;
    if t < 0.5 {
        let s = 2.0 * t;
        [ramp(s), ramp(s), 255]
    } else {
        let s = 2.0 * (1.0 - t);
        [255, ramp(s), ramp(s)]
    }
}

pub fn render_heatmap(
    tri: &Triangulation,
    field: Field<'_>,
    range: (f64, f64),
    long_axis: usize,
) -> Result<Image, RenderError> {
    let (lo, hi) = range;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(RenderError::InvalidRange(lo, hi));
    }
    if long_axis == 0 {
        return Err(RenderError::EmptyImage);
    }
    let (values, expected) = match field {
        Field::Vertex(v) => (v, tri.vertex_count()),
        Field::Face(v) => (v, tri.face_count()),
    };
    if values.len() != expected {
        return Err(RenderError::DimensionMismatch { expected, found: values.len() });
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(RenderError::NonFinite(i));
    }

    let (mut min, mut max) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in tri.vertices() {
        for d in 0..2 {
            min[d] = min[d].min(p[d]);
            max[d] = max[d].max(p[d]);
        }
    }
    let span = [max[0] - min[0], max[1] - min[1]];
    let pixel = span[0].max(span[1]) / long_axis as f64;
    let width = ((span[0] / pixel).round() as usize).max(1);
    let height = ((span[1] / pixel).round() as usize).max(1);

    let locator = FaceLocator::new(tri);
    let mut pixels = Vec::with_capacity(width * height);
    for row in 0..height {
        let y = max[1] - (row as f64 + 0.5) * pixel;
        for col in 0..width {
            let x = min[0] + (col as f64 + 0.5) * pixel;
            let color = match locator.locate(tri, [x, y]) {
                None => WHITE,
                Some((f, bary)) => {
                    let v = match field {
                        Field::Face(_) => values[f],
                        Field::Vertex(_) => {
                            let face = tri.faces()[f];
                            (0..3).map(|k| bary[k] * values[face[k]]).sum()
                        }
                    };
                    blue_white_red((v - lo) / (hi - lo))
                }
            };
            pixels.push(color);
        }
    }
    Ok(Image { width, height, pixels })
}
