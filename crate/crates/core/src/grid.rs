//! Dense row-major 2-D grids and region masks.

use crate::error::{Error, Result};

/// Row-major 2-D array; `data[y * width + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Data(format!(
                "grid data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Grid { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Grid { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl Grid<f64> {
    /// Bilinear interpolation at continuous pixel coordinates.
    ///
    /// Pixel centres sit on integer coordinates; `(u, v)` must satisfy
    /// `0 <= u <= width - 1` and `0 <= v <= height - 1`.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> Result<f64> {
        let taps = bilinear_taps(u, v, self.width, self.height)?;
        Ok(taps.iter().map(|&(i, w)| w * self.data[i]).sum())
    }
}

/// Slack (in pixels) allowed past the border before a coordinate counts as
/// outside; absorbs round-off when a border pixel is projected to itself.
pub const BORDER_TOLERANCE: f64 = 1e-9;

/// The four (flat index, weight) pairs of a bilinear lookup.
///
/// Coordinates within [`BORDER_TOLERANCE`] of the border are clamped onto it.
/// Weights are non-negative and sum to one. At the last row/column the
/// upper neighbour repeats the lower one with zero weight, so lookups are
/// exact at every node including the border.
pub fn bilinear_taps(u: f64, v: f64, width: usize, height: usize) -> Result<[(usize, f64); 4]> {
    if width == 0 || height == 0 {
        return Err(Error::domain("bilinear lookup on an empty grid"));
    }
    let max_u = (width - 1) as f64;
    let max_v = (height - 1) as f64;
    let tol = BORDER_TOLERANCE;
    if !(-tol..=max_u + tol).contains(&u) || !(-tol..=max_v + tol).contains(&v) {
        return Err(Error::domain(format!(
            "bilinear coordinate ({u}, {v}) outside [0, {max_u}] x [0, {max_v}]"
        )));
    }
    let u = u.clamp(0.0, max_u);
    let v = v.clamp(0.0, max_v);
    let x0 = (u.floor() as usize).min(width.saturating_sub(2));
    let y0 = (v.floor() as usize).min(height.saturating_sub(2));
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let tx = u - x0 as f64;
    let ty = v - y0 as f64;
    Ok([
        (y0 * width + x0, (1.0 - tx) * (1.0 - ty)),
        (y0 * width + x1, tx * (1.0 - ty)),
        (y1 * width + x0, (1.0 - tx) * ty),
        (y1 * width + x1, tx * ty),
    ])
}

/// Boolean image-space region.
pub type Mask = Grid<bool>;

impl Mask {
    pub fn count(&self) -> usize {
        self.as_slice().iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Mask {
        self.map(|b| !b)
    }
}
