use serde::{Deserialize, Serialize};

use super::tables::LOG_PARAM_LIMIT;
use super::{BetaWeightTable, ScalarWeightTable};
use crate::ndmath::{implicit_beta_grad, sample_beta, BetaParams, RandomStream, IMPLICIT_CLAMP_EPS};
use crate::net::{sgd_step, BatchGrads, ParamVector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Inner (model) learning rate.
    pub alpha: f64,
    /// Outer (weight) learning rate.
    pub eta: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) || !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::config(format!(
                "learning rates must be finite and non-negative, got alpha={} eta={}",
                self.alpha, self.eta
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::config("batch size and epoch count must be at least 1"));
        }
        Ok(())
    }
}

/// Result of one weighted training step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Parameters to continue training from.
    pub theta: ParamVector,
    /// Meta-loss at the speculative parameters (`None` when not evaluated).
    pub meta_loss: Option<f64>,
    /// Weights the batch was trained with.
    pub weights: Vec<f64>,
    /// `dL_meta / dw_i`.
    pub hypergrads: Vec<f64>,
}

/// Extra BDW diagnostics: gradients in log-parameter space.
#[derive(Debug, Clone)]
pub struct BdwStep {
    pub outcome: StepOutcome,
    pub grad_log_a: Vec<f64>,
    pub grad_log_b: Vec<f64>,
    /// Draws that were clamped away from 0 or 1 before differentiating.
    pub clamped: usize,
}

/// `theta - (alpha / k) * sum_i w_i g_i`.
pub fn weighted_step(theta: &ParamVector, grads: &BatchGrads, weights: &[f64], alpha: f64) -> Result<ParamVector> {
    if grads.is_empty() {
        return Err(Error::contract("weighted step needs a non-empty batch"));
    }
    let direction = grads.weighted_sum(weights)?;
    sgd_step(theta, &direction, alpha / grads.len() as f64)
}

/// `dL_meta/dw_i = -(alpha / k) <g_i, m>` for explicit per-example gradients.
pub fn hypergrad_weights(g: &[ParamVector], m: &ParamVector, alpha: f64, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::contract("batch size must be positive"));
    }
    let scale = -alpha / k as f64;
    g.iter().map(|gi| Ok(scale * gi.dot(m)?)).collect()
}

/// Same as [`hypergrad_weights`] without materialising the `g_i`.
pub fn hypergrad_weights_factored(grads: &BatchGrads, m: &ParamVector, alpha: f64) -> Result<Vec<f64>> {
    let scale = -alpha / grads.len() as f64;
    Ok(grads.dot_each(m)?.into_iter().map(|d| scale * d).collect())
}

fn check_batch(batch: &[usize], grads: &BatchGrads, active: impl Fn(usize) -> Result<()>) -> Result<()> {
    if batch.len() != grads.len() {
        return Err(Error::contract(format!(
            "{} batch indices for {} gradient rows",
            batch.len(),
            grads.len()
        )));
    }
    batch.iter().try_for_each(|&i| active(i))
}

/// One BetaDataWeighter step: sample weights, take the speculative step,
/// differentiate the meta-loss back to `(log a, log b)` of each batch
/// instance, update those rows and commit the speculative parameters.
///
/// `meta` returns the meta-loss and its gradient at the given parameters.
pub fn bdw_step<F>(
    theta: &ParamVector,
    grads: &BatchGrads,
    batch: &[usize],
    table: &mut BetaWeightTable,
    hp: &HyperParams,
    meta: F,
    rng: &mut RandomStream,
) -> Result<BdwStep>
where
    F: FnOnce(&ParamVector) -> Result<(f64, ParamVector)>,
{
    bdw_step_with(theta, grads, batch, table, hp, meta, rng, false)
}

/// [`bdw_step`] with a test hook: `unit_weights` replaces every draw by 1
/// and leaves the table untouched, so the step reduces to plain SGD.
#[allow(clippy::too_many_arguments)]
pub fn bdw_step_with<F>(
    theta: &ParamVector,
    grads: &BatchGrads,
    batch: &[usize],
    table: &mut BetaWeightTable,
    hp: &HyperParams,
    meta: F,
    rng: &mut RandomStream,
    unit_weights: bool,
) -> Result<BdwStep>
where
    F: FnOnce(&ParamVector) -> Result<(f64, ParamVector)>,
{
    check_batch(batch, grads, |i| table.check_active(i))?;
    let weights: Vec<f64> = if unit_weights {
        vec![1.0; batch.len()]
    } else {
        batch
            .iter()
            .map(|&i| sample_beta(table.params(i), rng).clamp(IMPLICIT_CLAMP_EPS, 1.0 - IMPLICIT_CLAMP_EPS))
            .collect()
    };
    let theta_next = weighted_step(theta, grads, &weights, hp.alpha)?;
    let (loss, m) = meta(&theta_next)?;
    let hypergrads = hypergrad_weights_factored(grads, &m, hp.alpha)?;

    let mut grad_log_a = vec![0.0; batch.len()];
    let mut grad_log_b = vec![0.0; batch.len()];
    let mut clamped = 0;
    if !unit_weights {
        for (j, &i) in batch.iter().enumerate() {
            let p = table.params(i);
            let ig = implicit_beta_grad(weights[j], p)?;
            clamped += usize::from(ig.clamped);
            grad_log_a[j] = hypergrads[j] * ig.dx_da * p.a();
            grad_log_b[j] = hypergrads[j] * ig.dx_db * p.b();
        }
        if hp.eta != 0.0 {
            for (j, &i) in batch.iter().enumerate() {
                let p = table.params_mut(i);
                let la = (p.log_a - hp.eta * grad_log_a[j]).clamp(-LOG_PARAM_LIMIT, LOG_PARAM_LIMIT);
                let lb = (p.log_b - hp.eta * grad_log_b[j]).clamp(-LOG_PARAM_LIMIT, LOG_PARAM_LIMIT);
                *p = BetaParams::from_logs(la, lb)?;
            }
        }
    }
    Ok(BdwStep {
        outcome: StepOutcome {
            theta: theta_next,
            meta_loss: Some(loss),
            weights,
            hypergrads,
        },
        grad_log_a,
        grad_log_b,
        clamped,
    })
}

/// One DataWeighter step with point-estimate weights clipped to `[0, 1]`.
pub fn dw_step<F>(
    theta: &ParamVector,
    grads: &BatchGrads,
    batch: &[usize],
    table: &mut ScalarWeightTable,
    hp: &HyperParams,
    meta: F,
) -> Result<StepOutcome>
where
    F: FnOnce(&ParamVector) -> Result<(f64, ParamVector)>,
{
    check_batch(batch, grads, |i| table.check_active(i))?;
    let weights: Vec<f64> = batch.iter().map(|&i| table.weight(i)).collect();
    let theta_next = weighted_step(theta, grads, &weights, hp.alpha)?;
    let (loss, m) = meta(&theta_next)?;
    let hypergrads = hypergrad_weights_factored(grads, &m, hp.alpha)?;
    for (j, &i) in batch.iter().enumerate() {
        table.set_weight(i, weights[j] - hp.eta * hypergrads[j])?;
    }
    Ok(StepOutcome {
        theta: theta_next,
        meta_loss: Some(loss),
        weights,
        hypergrads,
    })
}

/// Clamp-and-normalise: `max(0, -h_i)` scaled to sum to one, or all zeros.
pub fn l2rw_weights(hypergrads: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = hypergrads.iter().map(|&h| (-h).max(0.0)).collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|r| r / total).collect()
    } else {
        vec![0.0; raw.len()]
    }
}

/// One L2RW step. Per-batch weights start at zero, so the probe point is
/// `theta` itself; the normalised weights replace the `1/k` average.
pub fn l2rw_step<F>(theta: &ParamVector, grads: &BatchGrads, hp: &HyperParams, meta: F) -> Result<StepOutcome>
where
    F: FnOnce(&ParamVector) -> Result<(f64, ParamVector)>,
{
    if grads.is_empty() {
        return Err(Error::contract("L2RW step needs a non-empty batch"));
    }
    let (loss, m) = meta(theta)?;
    let hypergrads = hypergrad_weights_factored(grads, &m, hp.alpha)?;
    let weights = l2rw_weights(&hypergrads);
    let direction = grads.weighted_sum(&weights)?;
    Ok(StepOutcome {
        theta: sgd_step(theta, &direction, hp.alpha)?,
        meta_loss: Some(loss),
        weights,
        hypergrads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metaloss::{meta_grad, meta_loss, MetaBatch};
    use crate::ndmath::{beta_cdf, beta_quantile};
    use crate::net::{vae_batch, MlpSpec, Model};
    use ndarray::Array2;

    struct Fixture {
        model: Model,
        theta: ParamVector,
        grads: BatchGrads,
        meta: MetaBatch,
        hp: HyperParams,
    }

    fn fixture(k: usize) -> Fixture {
        let model = Model::new(MlpSpec::vae(vec![4, 3, 1])).unwrap();
        let mut rng = RandomStream::new(11, 0);
        let theta = model.init_params(&mut rng);
        let x = Array2::from_shape_fn((k, 4), |(i, j)| ((i * 3 + j * 5) % 7) as f64 / 6.0);
        let noise = Array2::from_shape_fn((k, 1), |(i, _)| 0.3 - 0.2 * i as f64);
        let grads = vae_batch(&model, &theta, x.view(), noise.view()).unwrap().grads;
        let target = Array2::from_shape_fn((3, 4), |(i, j)| if (i + j) % 2 == 0 { 0.9 } else { 0.1 });
        let meta = MetaBatch::reconstruction(&model, target, &mut rng).unwrap();
        let hp = HyperParams {
            alpha: 0.5,
            eta: 0.0,
            batch_size: k,
            epochs: 1,
        };
        Fixture {
            model,
            theta,
            grads,
            meta,
            hp,
        }
    }

    impl Fixture {
        fn meta_fn(&self) -> impl Fn(&ParamVector) -> Result<(f64, ParamVector)> + '_ {
            move |p| meta_grad(&self.model, p, &self.meta)
        }

        fn loss_at(&self, w: &[f64]) -> f64 {
            let t = weighted_step(&self.theta, &self.grads, w, self.hp.alpha).unwrap();
            meta_loss(&self.model, &t, &self.meta).unwrap()
        }
    }

    #[test]
    fn hypergrad_closed_cases() {
        let f = fixture(2);
        let m = f.grads.materialize().remove(0);
        let h = hypergrad_weights(std::slice::from_ref(&m), &m, 1.0, 1).unwrap();
        assert!((h[0] + m.dot(&m).unwrap()).abs() < 1e-12);

        let mut ortho = m.zeros_like();
        let (i, j) = (0, 1);
        ortho.values_mut()[i] = m.values()[j];
        ortho.values_mut()[j] = -m.values()[i];
        let mut g = m.zeros_like();
        g.values_mut()[i] = m.values()[i];
        g.values_mut()[j] = m.values()[j];
        assert_eq!(hypergrad_weights(&[g], &ortho, 0.3, 4).unwrap(), vec![0.0]);
    }

    #[test]
    fn factored_hypergrad_matches_materialised() {
        let f = fixture(4);
        let (_, m) = (f.meta_fn())(&f.theta).unwrap();
        let dense = hypergrad_weights(&f.grads.materialize(), &m, 0.3, 4).unwrap();
        let fact = hypergrad_weights_factored(&f.grads, &m, 0.3).unwrap();
        for (a, b) in dense.iter().zip(&fact) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn hypergrad_matches_finite_differences() {
        let f = fixture(4);
        let w = [0.3, 0.8, 0.5, 0.1];
        let t = weighted_step(&f.theta, &f.grads, &w, f.hp.alpha).unwrap();
        let (_, m) = (f.meta_fn())(&t).unwrap();
        let h = hypergrad_weights_factored(&f.grads, &m, f.hp.alpha).unwrap();
        for i in 0..4 {
            let step = 1e-4;
            let (mut p, mut q) = (w, w);
            p[i] += step;
            q[i] -= step;
            let fd = (f.loss_at(&p) - f.loss_at(&q)) / (2.0 * step);
            assert!((fd - h[i]).abs() <= 1e-4 * h[i].abs(), "i={i} fd={fd} h={}", h[i]);
        }
    }

    #[test]
    fn zero_eta_leaves_table_and_takes_weighted_step() {
        let f = fixture(4);
        let mut table = BetaWeightTable::new(10);
        let before = table.clone();
        let mut rng = RandomStream::new(3, 1);
        let out = bdw_step(&f.theta, &f.grads, &[1, 4, 7, 9], &mut table, &f.hp, f.meta_fn(), &mut rng).unwrap();
        assert_eq!(table, before);
        let expect = weighted_step(&f.theta, &f.grads, &out.outcome.weights, f.hp.alpha).unwrap();
        assert_eq!(out.outcome.theta.values(), expect.values());
        assert!(out.outcome.weights.iter().all(|&w| w > 0.0 && w < 1.0));
    }

    #[test]
    fn unit_weight_hook_is_plain_sgd() {
        let f = fixture(4);
        let mut table = BetaWeightTable::new(4);
        let before = table.clone();
        let hp = HyperParams { eta: 10.0, ..f.hp };
        let mut rng = RandomStream::new(3, 1);
        let out =
            bdw_step_with(&f.theta, &f.grads, &[0, 1, 2, 3], &mut table, &hp, f.meta_fn(), &mut rng, true).unwrap();
        let mean = f.grads.weighted_sum(&[0.25; 4]).unwrap();
        let sgd = sgd_step(&f.theta, &mean, hp.alpha).unwrap();
        for (a, b) in out.outcome.theta.values().iter().zip(sgd.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(table, before);
    }

    #[test]
    fn updates_touch_only_batch_rows() {
        let f = fixture(4);
        let mut table = BetaWeightTable::new(8);
        let hp = HyperParams { eta: 10.0, ..f.hp };
        let mut rng = RandomStream::new(5, 1);
        let batch = [6, 2, 3, 0];
        bdw_step(&f.theta, &f.grads, &batch, &mut table, &hp, f.meta_fn(), &mut rng).unwrap();
        for i in 0..8 {
            let moved = table.params(i) != BetaParams::UNIFORM;
            assert_eq!(moved, batch.contains(&i), "row {i}");
        }
    }

    #[test]
    fn pathwise_log_param_gradient_matches_fixed_noise_differences() {
        let f = fixture(4);
        let mut table = BetaWeightTable::new(4);
        for (i, (a, b)) in [(1.0, 1.0), (2.0, 0.7), (0.8, 3.0), (4.0, 4.0)].into_iter().enumerate() {
            table.set_params(i, BetaParams::new(a, b).unwrap()).unwrap();
        }
        let mut rng = RandomStream::new(17, 1);
        let batch = [0, 1, 2, 3];
        let out = bdw_step(&f.theta, &f.grads, &batch, &mut table, &f.hp, f.meta_fn(), &mut rng).unwrap();
        assert_eq!(out.clamped, 0);
        let w = out.outcome.weights.clone();
        for j in 0..4 {
            let p = table.params(j);
            let u = beta_cdf(w[j], p).unwrap();
            let at = |la: f64, lb: f64| {
                let mut ww = w.clone();
                ww[j] = beta_quantile(u, BetaParams::from_logs(la, lb).unwrap()).unwrap();
                f.loss_at(&ww)
            };
            let h = 1e-3;
            let fd_a = (at(p.log_a + h, p.log_b) - at(p.log_a - h, p.log_b)) / (2.0 * h);
            let fd_b = (at(p.log_a, p.log_b + h) - at(p.log_a, p.log_b - h)) / (2.0 * h);
            assert!((fd_a - out.grad_log_a[j]).abs() <= 1e-2 * fd_a.abs(), "a j={j} {fd_a} {}", out.grad_log_a[j]);
            assert!((fd_b - out.grad_log_b[j]).abs() <= 1e-2 * fd_b.abs(), "b j={j} {fd_b} {}", out.grad_log_b[j]);
        }
    }

    #[test]
    fn inactive_instance_is_a_contract_error() {
        let f = fixture(2);
        let mut table = BetaWeightTable::new(3);
        table.deactivate(2);
        let mut rng = RandomStream::new(1, 1);
        let err = bdw_step(&f.theta, &f.grads, &[0, 2], &mut table, &f.hp, f.meta_fn(), &mut rng).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
        let err = bdw_step(&f.theta, &f.grads, &[0], &mut table, &f.hp, f.meta_fn(), &mut rng).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn dw_from_zero_is_a_no_op_then_moves_by_the_hypergradient() {
        let f = fixture(4);
        let mut table = ScalarWeightTable::new(4);
        let hp = HyperParams { eta: 0.01, ..f.hp };
        let out = dw_step(&f.theta, &f.grads, &[0, 1, 2, 3], &mut table, &hp, f.meta_fn()).unwrap();
        assert_eq!(out.theta.values(), f.theta.values());
        for (i, h) in out.hypergrads.iter().enumerate() {
            assert_eq!(table.weight(i), (-hp.eta * h).clamp(0.0, 1.0));
        }
    }

    #[test]
    fn dw_clips_to_unit_interval() {
        let f = fixture(2);
        let (_, m) = (f.meta_fn())(&f.theta).unwrap();
        let h = hypergrad_weights_factored(&f.grads, &m, f.hp.alpha).unwrap();
        // Pick eta so that instance 0 overshoots one way by a wide margin.
        let mut table = ScalarWeightTable::filled(2, 0.5);
        let hp = HyperParams { alpha: f.hp.alpha, eta: 1e3 / h[0].abs(), ..f.hp };
        let out = dw_step(&f.theta, &f.grads, &[0, 1], &mut table, &hp, f.meta_fn()).unwrap();
        let w0 = table.weight(0);
        assert!(w0 == 0.0 || w0 == 1.0);
        assert_eq!(w0 == 1.0, out.hypergrads[0] < 0.0);
        assert!(table.weights().iter().all(|w| (0.0..=1.0).contains(w)));
    }

    #[test]
    fn l2rw_weight_rules() {
        assert_eq!(l2rw_weights(&[0.1, 0.2, 0.0]), vec![0.0; 3]);
        assert_eq!(l2rw_weights(&[0.1, -0.2, 0.3]), vec![0.0, 1.0, 0.0]);
        let w = l2rw_weights(&[-1.0, -3.0, 2.0]);
        assert_eq!(w, vec![0.25, 0.75, 0.0]);
    }

    #[test]
    fn l2rw_with_no_helpful_instance_keeps_theta() {
        let f = fixture(3);
        // A meta-gradient equal to minus the batch mean makes every hypergradient positive
        // only in aligned cases, so force it with a constant closure.
        let m = f.grads.weighted_sum(&[1.0, 1.0, 1.0]).unwrap();
        let mut neg = m.clone();
        neg.scale(-1.0);
        let dots = f.grads.dot_each(&neg).unwrap();
        if dots.iter().all(|&d| d < 0.0) {
            let out = l2rw_step(&f.theta, &f.grads, &f.hp, |_| Ok((0.0, neg.clone()))).unwrap();
            assert_eq!(out.weights, vec![0.0; 3]);
            assert_eq!(out.theta.values(), f.theta.values());
        }
        let out = l2rw_step(&f.theta, &f.grads, &f.hp, |_| Ok((0.0, m.clone()))).unwrap();
        let total: f64 = out.weights.iter().sum();
        assert!(out.weights.iter().all(|&w| w >= 0.0));
        assert!((total - 1.0).abs() < 1e-12 || total == 0.0);
    }

    proptest::proptest! {
        #[test]
        fn l2rw_weights_sum_to_one_or_zero(h in proptest::collection::vec(-10.0f64..10.0, 1..64)) {
            let w = l2rw_weights(&h);
            let total: f64 = w.iter().sum();
            proptest::prop_assert!(w.iter().all(|&x| x >= 0.0));
            proptest::prop_assert!(total == 0.0 || (total - 1.0).abs() < 1e-12);
        }
    }
}
