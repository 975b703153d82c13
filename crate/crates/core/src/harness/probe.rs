use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::{Error, Result};

pub const PROBE_MAX_ITER: usize = 800;
pub const PROBE_GRAD_TOL: f64 = 1e-6;

/// Multinomial logistic regression on standardised features.
#[derive(Debug, Clone)]
pub struct LinearProbe {
    mean: Array1<f64>,
    scale: Array1<f64>,
    weights: Array2<f64>,
    bias: Array1<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
}

impl LinearProbe {
    /// Full-batch gradient descent on the mean cross-entropy plus
    /// `(c / 2) |W|^2` with `c = 100 / (C * M)`.
    pub fn fit(features: ArrayView2<'_, f64>, labels: &[u8]) -> Result<Self> {
        let (n, m) = features.dim();
        if labels.len() != n {
            return Err(Error::contract(format!("{} labels for {n} feature rows", labels.len())));
        }
        let classes = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        let distinct = {
            let mut seen = vec![false; classes];
            labels.iter().for_each(|&l| seen[l as usize] = true);
            seen.iter().filter(|&&s| s).count()
        };
        if distinct < 2 || m == 0 {
            return Err(Error::config(format!(
                "linear probe needs at least two classes and one feature, got {distinct} classes, {m} features"
            )));
        }
        let mean = features.mean_axis(Axis(0)).expect("non-empty");
        let scale = features
            .var_axis(Axis(0), 0.0)
            .mapv(|v| if v > 1e-12 { 1.0 / v.sqrt() } else { 1.0 });
        let x = (&features - &mean) * &scale;
        let reg = 100.0 / (classes as f64 * m as f64);

        // Step size from the curvature bound 0.5 * lambda_max([X 1]^T [X 1] / n) + reg.
        let lip = 0.5 * top_eigenvalue(&x) + reg;
        let step = 1.0 / lip;

        let mut weights = Array2::<f64>::zeros((m, classes));
        let mut bias = Array1::<f64>::zeros(classes);
        let mut onehot = Array2::<f64>::zeros((n, classes));
        for (i, &l) in labels.iter().enumerate() {
            onehot[[i, l as usize]] = 1.0;
        }
        let mut iterations = 0;
        let mut grad_norm = f64::INFINITY;
        while iterations < PROBE_MAX_ITER {
            let mut p = x.dot(&weights) + &bias;
            softmax_rows(&mut p);
            p -= &onehot;
            p /= n as f64;
            let gw = x.t().dot(&p) + &(&weights * reg);
            let gb = p.sum_axis(Axis(0));
            grad_norm = (gw.iter().chain(gb.iter()).map(|v| v * v).sum::<f64>()).sqrt();
            if grad_norm < PROBE_GRAD_TOL {
                break;
            }
            weights.scaled_add(-step, &gw);
            bias.scaled_add(-step, &gb);
            iterations += 1;
        }
        Ok(Self {
            mean,
            scale,
            weights,
            bias,
            iterations,
            grad_norm,
        })
    }

    pub fn decision(&self, features: ArrayView2<'_, f64>) -> Array2<f64> {
        ((&features - &self.mean) * &self.scale).dot(&self.weights) + &self.bias
    }

    pub fn predict(&self, features: ArrayView2<'_, f64>) -> Vec<u8> {
        self.decision(features)
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
                    .0 as u8
            })
            .collect()
    }

    pub fn accuracy(&self, features: ArrayView2<'_, f64>, labels: &[u8]) -> Result<f64> {
        if labels.len() != features.nrows() || labels.is_empty() {
            return Err(Error::contract("accuracy needs one label per (non-empty) feature row"));
        }
        let hits = self.predict(features).iter().zip(labels).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / labels.len() as f64)
    }
}

fn softmax_rows(p: &mut Array2<f64>) {
    for mut row in p.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row /= s;
    }
}

/// Largest eigenvalue of `[X 1]^T [X 1] / n` by power iteration (an upper
/// estimate is fine, it only sets the step size).
fn top_eigenvalue(x: &Array2<f64>) -> f64 {
    let (n, m) = x.dim();
    let mut v = Array1::<f64>::from_elem(m + 1, 1.0 / ((m + 1) as f64).sqrt());
    let mut lambda = 1.0;
    for _ in 0..100 {
        let xv = x.dot(&v.slice(ndarray::s![..m])) + v[m];
        let mut next = Array1::zeros(m + 1);
        next.slice_mut(ndarray::s![..m]).assign(&x.t().dot(&xv));
        next[m] = xv.sum();
        next /= n as f64;
        let norm = next.dot(&next).sqrt();
        if norm == 0.0 {
            return 1.0;
        }
        let done = (norm - lambda).abs() <= 1e-6 * norm;
        lambda = norm;
        v = next / norm;
        if done {
            break;
        }
    }
    lambda * 1.01
}

/// Fits on `(train, train_labels)` and returns held-out accuracy.
pub fn linear_probe(
    train: ArrayView2<'_, f64>,
    train_labels: &[u8],
    test: ArrayView2<'_, f64>,
    test_labels: &[u8],
) -> Result<f64> {
    if train.ncols() != test.ncols() {
        return Err(Error::contract("train and test features differ in width"));
    }
    LinearProbe::fit(train, train_labels)?.accuracy(test, test_labels)
}
