use ndarray::{s, ArrayView2, Axis};

use crate::{Error, Result};

const CHUNK: usize = 512;

/// Euclidean distance from every source row to its nearest target row.
///
/// Candidates come from the expanded form `|s|^2 + |t|^2 - 2 s.t` computed
/// blockwise with matrix products; the winner's distance is then recomputed
/// directly so exact matches give exactly zero.
pub fn nearest_distances(source: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    if target.nrows() == 0 {
        return Err(Error::config("nearest-neighbour weights need a non-empty target set"));
    }
    if source.ncols() != target.ncols() {
        return Err(Error::contract(format!(
            "source vectors have {} features, target vectors {}",
            source.ncols(),
            target.ncols()
        )));
    }
    let t_sq: Vec<f64> = target.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut out = Vec::with_capacity(source.nrows());
    let mut start = 0;
    while start < source.nrows() {
        let end = (start + CHUNK).min(source.nrows());
        let block = source.slice(s![start..end, ..]);
        let cross = block.dot(&target.t());
        for (row, src) in cross.axis_iter(Axis(0)).zip(block.rows()) {
            let s_sq = src.dot(&src);
            let mut best = (f64::INFINITY, 0);
            for (j, &c) in row.iter().enumerate() {
                let d2 = s_sq + t_sq[j] - 2.0 * c;
                if d2 < best.0 {
                    best = (d2, j);
                }
            }
            let exact: f64 = src
                .iter()
                .zip(target.row(best.1))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            out.push(exact);
        }
        start = end;
    }
    Ok(out)
}

/// `w_i = exp(-beta d_i)` with `d_i` the nearest-neighbour distance.
pub fn nn_weights(source: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>, beta: f64) -> Result<Vec<f64>> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::config(format!("NN decay must be positive, got {beta}")));
    }
    Ok(nearest_distances(source, target)?
        .into_iter()
        .map(|d| (-beta * d).exp())
        .collect())
}
