use ndarray::{Array2, ArrayView2};

use crate::{Error, Result};

/// Counter-clockwise rotation by `r * 90°` of a square image stored
/// row-major in `src`, written to `dst`.
pub(crate) fn rotate_into(src: &[f64], side: usize, r: usize, dst: &mut [f64]) {
    debug_assert_eq!(src.len(), side * side);
    debug_assert_eq!(dst.len(), side * side);
    let last = side - 1;
    for i in 0..side {
        for j in 0..side {
            let (si, sj) = match r % 4 {
                0 => (i, j),
                1 => (j, last - i),
                2 => (last - i, last - j),
                _ => (last - j, i),
            };
            dst[i * side + j] = src[si * side + sj];
        }
    }
}

/// Lossless counter-clockwise rotation by `r * 90°`, `r` in `0..=3`.
pub fn rotate_image(img: ArrayView2<'_, f64>, r: usize) -> Result<Array2<f64>> {
    let (h, w) = img.dim();
    if h != w {
        return Err(Error::contract(format!("rotation needs a square image, got {h}x{w}")));
    }
    if r > 3 {
        return Err(Error::contract(format!("rotation index {r} outside 0..3")));
    }
    let src: Vec<f64> = img.iter().copied().collect();
    let mut dst = vec![0.0; src.len()];
    rotate_into(&src, h, r, &mut dst);
    Ok(Array2::from_shape_vec((h, w), dst).expect("square"))
}
