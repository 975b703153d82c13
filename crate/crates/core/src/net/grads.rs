use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Axis, Zip};

use super::{losses, Layout, Model, ParamVector};
use crate::ndmath::{sample_standard_normal, RandomStream};
use crate::{Error, Result};

/// Layer inputs and pre-activation deltas for every row of a batch.
#[derive(Debug, Clone)]
pub(crate) struct Factor {
    pub slot: usize,
    pub inputs: Array2<f64>,
    pub deltas: Array2<f64>,
}

/// Exact per-example gradients in factored form.
///
/// Rows are grouped into instances of `rows_per_instance` consecutive rows
/// (a rotation instance contributes its four rotated copies); the gradient
/// of instance `i` is the sum over its rows and all factors of
/// `delta ⊗ input`.
#[derive(Debug, Clone)]
pub struct BatchGrads {
    layout: Arc<Layout>,
    factors: Vec<Factor>,
    instances: usize,
    rows_per_instance: usize,
}

impl BatchGrads {
    pub(crate) fn new(
        layout: Arc<Layout>,
        factors: Vec<Factor>,
        instances: usize,
        rows_per_instance: usize,
    ) -> Self {
        debug_assert!(factors
            .iter()
            .all(|f| f.inputs.nrows() == instances * rows_per_instance && f.deltas.nrows() == f.inputs.nrows()));
        Self {
            layout,
            factors,
            instances,
            rows_per_instance,
        }
    }

    pub fn len(&self) -> usize {
        self.instances
    }

    pub fn is_empty(&self) -> bool {
        self.instances == 0
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    fn row_weights(&self, weights: &[f64]) -> Vec<f64> {
        weights
            .iter()
            .flat_map(|&w| std::iter::repeat_n(w, self.rows_per_instance))
            .collect()
    }

    /// `sum_i weights[i] * g_i`.
    pub fn weighted_sum(&self, weights: &[f64]) -> Result<ParamVector> {
        if weights.len() != self.instances {
            return Err(Error::contract(format!(
                "{} weights for {} instances",
                weights.len(),
                self.instances
            )));
        }
        let row_w = self.row_weights(weights);
        let mut out = ParamVector::zeros(self.layout.clone());
        for f in &self.factors {
            let slot = &self.layout.slots[f.slot];
            let mut scaled = f.deltas.clone();
            for (mut row, &w) in scaled.axis_iter_mut(Axis(0)).zip(&row_w) {
                row *= w;
            }
            let dw = scaled.t().dot(&f.inputs);
            out.weight_mut(slot).assign(&dw);
            let db = scaled.sum_axis(Axis(0));
            out.values_mut()[slot.bias_range()].copy_from_slice(db.as_slice().expect("contiguous"));
        }
        Ok(out)
    }

    /// `<g_i, direction>` for every instance.
    pub fn dot_each(&self, direction: &ParamVector) -> Result<Vec<f64>> {
        if !(Arc::ptr_eq(&self.layout, direction.layout()) || *self.layout == **direction.layout()) {
            return Err(Error::contract("direction has a different parameter layout"));
        }
        let rows = self.instances * self.rows_per_instance;
        let mut row_dots = vec![0.0; rows];
        for f in &self.factors {
            let slot = &self.layout.slots[f.slot];
            // <delta ⊗ input, M> = delta · (M input)
            let projected = f.inputs.dot(&direction.weight(slot).t());
            let bias = direction.bias(slot);
            Zip::from(&mut row_dots)
                .and(projected.rows())
                .and(f.deltas.rows())
                .for_each(|acc, p, d| *acc += p.dot(&d) + d.dot(&bias));
        }
        Ok(row_dots
            .chunks(self.rows_per_instance)
            .map(|c| c.iter().sum())
            .collect())
    }

    /// One full parameter vector per instance. Memory heavy; intended for
    /// small models and verification.
    pub fn materialize(&self) -> Vec<ParamVector> {
        (0..self.instances)
            .map(|i| {
                let mut w = vec![0.0; self.instances];
                w[i] = 1.0;
                self.weighted_sum(&w).expect("weights sized to instances")
            })
            .collect()
    }
}

/// Which self-supervised loss an example is scored with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Negative ELBO with one reparameterized latent draw per example.
    Vae,
    /// Mean rotation-prediction cross-entropy over the four rotations.
    Rotation,
}

/// Per-instance losses and factored gradients of a batch. VAE latent
/// noise is drawn from `rng` in row order.
pub fn batch_grads(
    model: &Model,
    theta: &ParamVector,
    batch: ArrayView2<'_, f64>,
    kind: LossKind,
    rng: &mut RandomStream,
) -> Result<losses::LossEval> {
    if batch.nrows() == 0 {
        return Err(Error::contract("per-example gradients need a non-empty batch"));
    }
    match kind {
        LossKind::Vae => {
            let latent = model
                .spec()
                .latent_dim()
                .ok_or_else(|| Error::contract("VAE loss needs a VAE head"))?;
            let noise = Array2::from_shape_fn((batch.nrows(), latent), |_| sample_standard_normal(rng));
            losses::vae_batch(model, theta, batch, noise.view())
        }
        LossKind::Rotation => losses::rotation_batch(model, theta, batch),
    }
}

/// Exact per-instance gradients `g_i = ∇θ L(x_i; θ)`, one vector each.
pub fn per_example_grads(
    model: &Model,
    theta: &ParamVector,
    batch: ArrayView2<'_, f64>,
    kind: LossKind,
    rng: &mut RandomStream,
) -> Result<Vec<ParamVector>> {
    Ok(batch_grads(model, theta, batch, kind, rng)?.grads.materialize())
}

/// `theta - alpha * direction`; `theta` is left untouched.
pub fn sgd_step(theta: &ParamVector, direction: &ParamVector, alpha: f64) -> Result<ParamVector> {
    theta.check_layout(direction)?;
    let mut next = theta.clone();
    next.axpy(-alpha, direction)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::MlpSpec;

    type LossFn<'a> = dyn Fn(&ParamVector) -> Vec<f64> + 'a;

    /// Central differences of every instance loss in every coordinate.
    fn check_against_fd(theta: &ParamVector, grads: &[ParamVector], loss: &LossFn<'_>) {
        let h = 1e-5;
        let n = theta.len();
        let mut fd = vec![vec![0.0; n]; grads.len()];
        for c in 0..n {
            let (mut p, mut m) = (theta.clone(), theta.clone());
            p.values_mut()[c] += h;
            m.values_mut()[c] -= h;
            let (lp, lm) = (loss(&p), loss(&m));
            for i in 0..grads.len() {
                fd[i][c] = (lp[i] - lm[i]) / (2.0 * h);
            }
        }
        for (g, f) in grads.iter().zip(&fd) {
            let scale = g.values().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            let err = g.values().iter().zip(f).fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
            assert!(err <= 1e-6 * scale, "max error {err} vs scale {scale}");
        }
    }

    fn vae_fixture() -> (Model, ParamVector, Array2<f64>, Array2<f64>) {
        let model = Model::new(MlpSpec::vae(vec![9, 6, 1])).unwrap();
        let theta = model.init_params(&mut RandomStream::new(2, 0));
        let x = Array2::from_shape_fn((3, 9), |(i, j)| ((i * 4 + j * 7) % 10) as f64 / 9.0);
        let noise = Array2::from_shape_fn((3, 1), |(i, _)| 0.8 - 0.7 * i as f64);
        (model, theta, x, noise)
    }

    fn rotation_fixture() -> (Model, ParamVector, Array2<f64>) {
        let model = Model::new(MlpSpec::classifier(vec![16, 6, 4])).unwrap();
        let theta = model.init_params(&mut RandomStream::new(3, 0));
        let x = Array2::from_shape_fn((3, 16), |(i, j)| ((i * 5 + j * j) % 11) as f64 / 10.0);
        (model, theta, x)
    }

    #[test]
    fn vae_gradients_match_finite_differences() {
        let (model, theta, x, noise) = vae_fixture();
        assert!(theta.len() <= 200);
        let eval = losses::vae_batch(&model, &theta, x.view(), noise.view()).unwrap();
        let loss = |p: &ParamVector| {
            losses::vae_losses(&model, p, x.view(), noise.view())
                .unwrap()
                .iter()
                .map(|l| l.total)
                .collect()
        };
        check_against_fd(&theta, &eval.grads.materialize(), &loss);
    }

    #[test]
    fn rotation_gradients_match_finite_differences() {
        let (model, theta, x) = rotation_fixture();
        assert!(theta.len() <= 200);
        let eval = losses::rotation_batch(&model, &theta, x.view()).unwrap();
        let loss = |p: &ParamVector| losses::rotation_losses(&model, p, x.view()).unwrap();
        check_against_fd(&theta, &eval.grads.materialize(), &loss);
    }

    #[test]
    fn factored_products_match_materialised_gradients() {
        let (model, theta, x) = rotation_fixture();
        let grads = losses::rotation_batch(&model, &theta, x.view()).unwrap().grads;
        let dense = grads.materialize();
        let w = [0.2, -1.5, 0.7];
        let sum = grads.weighted_sum(&w).unwrap();
        let mut expect = theta.zeros_like();
        for (g, wi) in dense.iter().zip(w) {
            expect.axpy(wi, g).unwrap();
        }
        for (a, b) in sum.values().iter().zip(expect.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
        let dots = grads.dot_each(&theta).unwrap();
        for (d, g) in dots.iter().zip(&dense) {
            assert!((d - g.dot(&theta).unwrap()).abs() <= 1e-12 * d.abs().max(1.0));
        }
    }

    #[test]
    fn mean_of_instance_gradients_is_the_batch_gradient() {
        let (model, theta, x, noise) = vae_fixture();
        let eval = losses::vae_batch(&model, &theta, x.view(), noise.view()).unwrap();
        let mean = eval.grads.weighted_sum(&[1.0 / 3.0; 3]).unwrap();
        // Gradient of the mean loss, by differences of the averaged objective.
        let h = 1e-5;
        let mean_loss = |p: &ParamVector| {
            losses::vae_losses(&model, p, x.view(), noise.view())
                .unwrap()
                .iter()
                .map(|l| l.total)
                .sum::<f64>()
                / 3.0
        };
        for c in (0..theta.len()).step_by(7) {
            let (mut p, mut m) = (theta.clone(), theta.clone());
            p.values_mut()[c] += h;
            m.values_mut()[c] -= h;
            let fd = (mean_loss(&p) - mean_loss(&m)) / (2.0 * h);
            assert!((fd - mean.values()[c]).abs() <= 1e-6 * mean.norm());
        }
        let dense = eval.grads.materialize();
        let mut avg = theta.zeros_like();
        for g in &dense {
            avg.axpy(1.0 / 3.0, g).unwrap();
        }
        for (a, b) in avg.values().iter().zip(mean.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn identical_examples_have_identical_gradients() {
        let (model, theta, x) = rotation_fixture();
        let row = x.row(1).to_owned();
        let batch = Array2::from_shape_fn((3, 16), |(_, j)| row[j]);
        let g = per_example_grads(&model, &theta, batch.view(), LossKind::Rotation, &mut RandomStream::new(0, 0))
            .unwrap();
        assert_eq!(g[0].values(), g[1].values());
        assert_eq!(g[1].values(), g[2].values());
    }

    #[test]
    fn saturated_instance_has_vanishing_gradient() {
        // A constant image looks the same under every rotation, so give the
        // net an image whose rotations differ and a head that is certain.
        let model = Model::new(MlpSpec::classifier(vec![4, 4])).unwrap();
        let mut theta = model.zeros();
        let slot = model.layout().slot("layer0").unwrap().clone();
        {
            // Pixel layout [[1,0],[0,0]]; rotation r moves the bright pixel
            // to a distinct position, which the identity-like head reads.
            let mut w = theta.weight_mut(&slot);
            let pos = [0usize, 2, 3, 1];
            for (r, &p) in pos.iter().enumerate() {
                w[[r, p]] = 60.0;
            }
        }
        let x = Array2::from_shape_vec((1, 4), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let eval = losses::rotation_batch(&model, &theta, x.view()).unwrap();
        assert!(eval.losses[0] < 1e-12, "loss {}", eval.losses[0]);
        let g = per_example_grads(&model, &theta, x.view(), LossKind::Rotation, &mut RandomStream::new(0, 0)).unwrap();
        assert!(g[0].norm() <= 1e-8);
    }

    #[test]
    fn sgd_step_examples() {
        let model = Model::new(MlpSpec::classifier(vec![1, 1])).unwrap();
        let theta = ParamVector::from_values(model.layout().clone(), vec![1.0, 1.0]).unwrap();
        let dir = ParamVector::from_values(model.layout().clone(), vec![2.0, -2.0]).unwrap();
        assert_eq!(sgd_step(&theta, &dir, 0.5).unwrap().values(), &[0.0, 2.0]);
        assert_eq!(sgd_step(&theta, &dir, 0.0).unwrap().values(), theta.values());
        assert_eq!(sgd_step(&theta, &theta.zeros_like(), 3.0).unwrap().values(), theta.values());
        assert_eq!(theta.values(), &[1.0, 1.0]);
        let other = Model::new(MlpSpec::classifier(vec![2, 1])).unwrap().zeros();
        assert!(matches!(sgd_step(&theta, &other, 1.0), Err(Error::Contract(_))));
    }
}
