//! Sliding-window patch geometry, extraction and overlap-add reconstruction.
//!
//! Windows step by `n - p` from the top-left corner. When the stride does
//! not tile an axis, one extra window is clamped against the far edge, so
//! every pixel is covered without padding. Patches are vectorized row-major.

use crate::error::{Error, Result};
use crate::imageio::ImageBuffer;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    patch_size: usize,
    overlap: usize,
    image_width: usize,
    image_height: usize,
    row_offsets: Vec<usize>,
    col_offsets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub grid_row: usize,
    pub grid_col: usize,
    pub data: Vec<f64>,
}

fn axis_offsets(dim: usize, n: usize, stride: usize) -> Vec<usize> {
    let last = dim - n;
    let mut offsets: Vec<usize> = (0..=last).step_by(stride).collect();
    if *offsets.last().expect("dim >= n") != last {
        offsets.push(last);
    }
    offsets
}

impl PatchGrid {
    pub fn new(width: usize, height: usize, n: usize, p: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("patch size must be positive"));
        }
        if p >= n {
            return Err(Error::invalid(format!(
                "overlap {p} must be smaller than patch size {n}"
            )));
        }
        if n > width || n > height {
            return Err(Error::invalid(format!(
                "patch size {n} exceeds image dimensions {width}x{height}"
            )));
        }
        let stride = n - p;
        Ok(PatchGrid {
            patch_size: n,
            overlap: p,
            image_width: width,
            image_height: height,
            row_offsets: axis_offsets(height, n, stride),
            col_offsets: axis_offsets(width, n, stride),
        })
    }

    pub fn for_image(image: &ImageBuffer, n: usize, p: usize) -> Result<Self> {
        PatchGrid::new(image.width(), image.height(), n, p)
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn overlap(&self) -> usize {
        self.overlap
    }

    pub fn stride(&self) -> usize {
        self.patch_size - self.overlap
    }

    /// Patch vector length `n²`.
    pub fn patch_len(&self) -> usize {
        self.patch_size * self.patch_size
    }

    pub fn grid_rows(&self) -> usize {
        self.row_offsets.len()
    }

    pub fn grid_cols(&self) -> usize {
        self.col_offsets.len()
    }

    pub fn len(&self) -> usize {
        self.grid_rows() * self.grid_cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_offsets(&self) -> &[usize] {
        &self.col_offsets
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.image_width, self.image_height)
    }

    /// Top-left pixel `(x, y)` of window `(i, j)`.
    pub fn origin(&self, i: usize, j: usize) -> (usize, usize) {
        (self.col_offsets[j], self.row_offsets[i])
    }

    /// Number of windows covering each pixel, row-major.
    pub fn cover_counts(&self) -> Vec<u32> {
        let n = self.patch_size;
        let col_cover = axis_cover(self.image_width, &self.col_offsets, n);
        let row_cover = axis_cover(self.image_height, &self.row_offsets, n);
        let mut out = Vec::with_capacity(self.image_width * self.image_height);
        for &r in &row_cover {
            out.extend(col_cover.iter().map(|&c| r * c));
        }
        out
    }

    fn check_image(&self, image: &ImageBuffer) -> Result<()> {
        if image.dims() != self.image_dims() {
            return Err(Error::invalid(format!(
                "image is {}x{} but grid expects {}x{}",
                image.width(),
                image.height(),
                self.image_width,
                self.image_height
            )));
        }
        Ok(())
    }

    /// Copies window `(i, j)` of `image` into `out` (length `n²`).
    pub fn read_patch(&self, image: &ImageBuffer, i: usize, j: usize, out: &mut [f64]) {
        let n = self.patch_size;
        let (x0, y0) = self.origin(i, j);
        for (r, dst) in out.chunks_exact_mut(n).enumerate() {
            dst.copy_from_slice(&image.row(y0 + r)[x0..x0 + n]);
        }
    }

    /// Patches of `image` in row-major grid order.
    pub fn extract(&self, image: &ImageBuffer) -> Result<Vec<Patch>> {
        self.check_image(image)?;
        let mut patches = Vec::with_capacity(self.len());
        for i in 0..self.grid_rows() {
            for j in 0..self.grid_cols() {
                let mut data = vec![0.0; self.patch_len()];
                self.read_patch(image, i, j, &mut data);
                patches.push(Patch {
                    grid_row: i,
                    grid_col: j,
                    data,
                });
            }
        }
        Ok(patches)
    }

    /// Averages overlapping patch contributions back into an image. The list
    /// must hold exactly one patch per grid cell, in any order; summation
    /// runs in grid order regardless.
    pub fn overlap_add(&self, patches: &[Patch]) -> Result<ImageBuffer> {
        let mut slots: Vec<Option<&[f64]>> = vec![None; self.len()];
        for p in patches {
            if p.grid_row >= self.grid_rows() || p.grid_col >= self.grid_cols() {
                return Err(Error::invalid(format!(
                    "patch ({}, {}) outside {}x{} grid",
                    p.grid_row,
                    p.grid_col,
                    self.grid_rows(),
                    self.grid_cols()
                )));
            }
            if p.data.len() != self.patch_len() {
                return Err(Error::invalid(format!(
                    "patch has {} values, expected {}",
                    p.data.len(),
                    self.patch_len()
                )));
            }
            let slot = &mut slots[p.grid_row * self.grid_cols() + p.grid_col];
            if slot.is_some() {
                return Err(Error::invalid(format!(
                    "duplicate patch ({}, {})",
                    p.grid_row, p.grid_col
                )));
            }
            *slot = Some(&p.data);
        }
        if let Some(missing) = slots.iter().position(Option::is_none) {
            return Err(Error::invalid(format!(
                "incomplete patch list: cell ({}, {}) missing",
                missing / self.grid_cols(),
                missing % self.grid_cols()
            )));
        }
        let data: Vec<&[f64]> = slots.into_iter().map(|s| s.expect("checked")).collect();
        Ok(self.overlap_add_slices(&data))
    }

    /// Overlap-add over patch vectors already in row-major grid order.
    pub(crate) fn overlap_add_slices<P: AsRef<[f64]>>(&self, data: &[P]) -> ImageBuffer {
        debug_assert_eq!(data.len(), self.len());
        let n = self.patch_size;
        let (w, h) = self.image_dims();
        let mut acc = vec![0.0; w * h];
        for i in 0..self.grid_rows() {
            for j in 0..self.grid_cols() {
                let (x0, y0) = self.origin(i, j);
                let patch = data[i * self.grid_cols() + j].as_ref();
                for (r, src) in patch.chunks_exact(n).enumerate() {
                    let row = &mut acc[(y0 + r) * w + x0..(y0 + r) * w + x0 + n];
                    for (a, s) in row.iter_mut().zip(src) {
                        *a += s;
                    }
                }
            }
        }
        let counts = self.cover_counts();
        for (a, &c) in acc.iter_mut().zip(&counts) {
            *a /= f64::from(c);
        }
        ImageBuffer::new(w, h, acc).expect("finite patch data")
    }
}

fn axis_cover(dim: usize, offsets: &[usize], n: usize) -> Vec<u32> {
    let mut cover = vec![0u32; dim];
    for &o in offsets {
        for c in &mut cover[o..o + n] {
            *c += 1;
        }
    }
    cover
}

/// Builds the grid for a `width x height` image with `n x n` windows
/// overlapping by `p` pixels.
pub fn build_grid(width: usize, height: usize, n: usize, p: usize) -> Result<PatchGrid> {
    PatchGrid::new(width, height, n, p)
}

pub fn extract(image: &ImageBuffer, grid: &PatchGrid) -> Result<Vec<Patch>> {
    grid.extract(image)
}

pub fn overlap_add(patches: &[Patch], grid: &PatchGrid) -> Result<ImageBuffer> {
    grid.overlap_add(patches)
}
