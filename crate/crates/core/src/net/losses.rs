use ndarray::{s, Array2, ArrayView2, Axis};

use super::grads::BatchGrads;
use super::mlp::{backward_chain, check_input, forward_chain, ChainTrace, ForwardTrace};
use super::{HeadKind, Model, ParamVector};
use crate::data::rotate_into;
use crate::ndmath::{sample_standard_normal, RandomStream, Tensor};
use crate::{Error, Result};

/// Per-instance losses together with their exact gradients.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub losses: Vec<f64>,
    pub grads: BatchGrads,
}

/// Negative ELBO split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeLoss {
    /// Bernoulli cross-entropy summed over pixels.
    pub reconstruction: f64,
    /// KL(q(z|x) || N(0, I)).
    pub kl: f64,
    pub total: f64,
}

/// `-log softmax(logits)[label]`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if logits.len() < 2 {
        return Err(Error::contract("cross-entropy needs at least two classes"));
    }
    if label >= logits.len() {
        return Err(Error::contract(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    Ok(log_sum_exp(logits) - logits[label])
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Numerically stable `softplus(l) - x * l`, the Bernoulli negative
/// log-likelihood of target `x` under logit `l`.
fn bce_with_logit(logit: f64, target: f64) -> f64 {
    logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p()
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

struct VaePass {
    encoder: ChainTrace,
    decoder: ChainTrace,
    mu: Array2<f64>,
    log_var: Array2<f64>,
    losses: Vec<VaeLoss>,
}

fn vae_pass(
    model: &Model,
    theta: &ParamVector,
    x: ArrayView2<'_, f64>,
    noise: ArrayView2<'_, f64>,
) -> Result<VaePass> {
    check_input(model, theta, &x)?;
    let latent = match model.spec().head {
        HeadKind::VaeGaussianLatent => model.spec().latent_dim().expect("vae head"),
        HeadKind::ClassifierLogits => return Err(Error::contract("VAE loss needs a VAE head")),
    };
    if noise.dim() != (x.nrows(), latent) {
        return Err(Error::contract(format!(
            "latent noise must be {}x{latent}, got {:?}",
            x.nrows(),
            noise.dim()
        )));
    }
    let layout = model.layout();
    let encoder = forward_chain(theta, layout.encoder.clone(), x.to_owned());
    let mu = encoder.output().slice(s![.., ..latent]).to_owned();
    let log_var = encoder.output().slice(s![.., latent..]).to_owned();
    let z = &mu + &(log_var.mapv(|lv| (0.5 * lv).exp()) * noise);
    let decoder = forward_chain(theta, layout.decoder.clone(), z);

    let losses = (0..x.nrows())
        .map(|i| {
            let reconstruction: f64 = decoder
                .output()
                .row(i)
                .iter()
                .zip(x.row(i))
                .map(|(&l, &t)| bce_with_logit(l, t))
                .sum();
            let kl: f64 = mu
                .row(i)
                .iter()
                .zip(log_var.row(i))
                .map(|(&m, &lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
                .sum();
            VaeLoss {
                reconstruction,
                kl,
                total: reconstruction + kl,
            }
        })
        .collect();
    Ok(VaePass {
        encoder,
        decoder,
        mu,
        log_var,
        losses,
    })
}

/// Per-example VAE losses without gradients.
pub(crate) fn vae_losses(
    model: &Model,
    theta: &ParamVector,
    x: ArrayView2<'_, f64>,
    noise: ArrayView2<'_, f64>,
) -> Result<Vec<VaeLoss>> {
    Ok(vae_pass(model, theta, x, noise)?.losses)
}

/// Per-example negative ELBO and exact gradients for fixed latent noise
/// (`noise` holds one standard-normal row per example).
pub fn vae_batch(
    model: &Model,
    theta: &ParamVector,
    x: ArrayView2<'_, f64>,
    noise: ArrayView2<'_, f64>,
) -> Result<LossEval> {
    let pass = vae_pass(model, theta, x, noise)?;
    let VaePass {
        encoder,
        decoder,
        mu,
        log_var,
        losses,
    } = pass;

    // d(BCE)/d(logit) = sigmoid(logit) - x
    let mut d_logits = decoder.output().mapv(sigmoid);
    d_logits -= &x;
    let (mut factors, d_z) = backward_chain(theta, decoder, d_logits, true);
    let d_z = d_z.expect("requested input gradient");

    let latent = mu.ncols();
    let mut d_enc = Array2::zeros((x.nrows(), 2 * latent));
    for i in 0..x.nrows() {
        for j in 0..latent {
            let (m, lv, eps, dz) = (mu[[i, j]], log_var[[i, j]], noise[[i, j]], d_z[[i, j]]);
            let sigma = (0.5 * lv).exp();
            d_enc[[i, j]] = dz + m;
            d_enc[[i, latent + j]] = dz * eps * 0.5 * sigma + 0.5 * (lv.exp() - 1.0);
        }
    }
    let (enc_factors, _) = backward_chain(theta, encoder, d_enc, false);
    factors.extend(enc_factors);
    Ok(LossEval {
        losses: losses.iter().map(|l| l.total).collect(),
        grads: BatchGrads::new(model.layout().clone(), factors, x.nrows(), 1),
    })
}

/// Negative ELBO of one flattened image with the given latent noise.
pub fn vae_loss_with_noise(
    model: &Model,
    theta: &ParamVector,
    x: &[f64],
    noise: &[f64],
) -> Result<VaeLoss> {
    let xv = ArrayView2::from_shape((1, x.len()), x).expect("row view");
    let nv = ArrayView2::from_shape((1, noise.len()), noise).expect("row view");
    Ok(vae_pass(model, theta, xv, nv)?.losses[0])
}

/// Negative ELBO of one image with a single reparameterized latent draw
/// taken from `rng`.
pub fn vae_loss(
    model: &Model,
    theta: &ParamVector,
    x: &Tensor,
    rng: &mut RandomStream,
) -> Result<(VaeLoss, ForwardTrace)> {
    let latent = model
        .spec()
        .latent_dim()
        .ok_or_else(|| Error::contract("VAE loss needs a VAE head"))?;
    let noise: Vec<f64> = (0..latent).map(|_| sample_standard_normal(rng)).collect();
    let xv = ArrayView2::from_shape((1, x.len()), x.data()).expect("row view");
    let nv = ArrayView2::from_shape((1, latent), &noise).expect("row view");
    let pass = vae_pass(model, theta, xv, nv)?;
    Ok((
        pass.losses[0],
        ForwardTrace {
            encoder: pass.encoder,
            decoder: Some(pass.decoder),
        },
    ))
}

fn image_side(width: usize) -> Result<usize> {
    let side = (width as f64).sqrt().round() as usize;
    if side * side != width {
        return Err(Error::contract(format!(
            "rotation needs square images, input width {width} is not a square"
        )));
    }
    Ok(side)
}

fn rotation_rows(x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let side = image_side(x.ncols())?;
    let mut rows = Array2::zeros((4 * x.nrows(), x.ncols()));
    for (i, img) in x.rows().into_iter().enumerate() {
        let src = img.to_vec();
        for r in 0..4 {
            let mut dst = rows.row_mut(4 * i + r);
            rotate_into(&src, side, r, dst.as_slice_mut().expect("contiguous row"));
        }
    }
    Ok(rows)
}

fn check_classifier(model: &Model, classes: usize) -> Result<()> {
    if model.spec().head != HeadKind::ClassifierLogits || model.spec().output_width() != classes {
        return Err(Error::contract(format!(
            "rotation prediction needs a classifier head with {classes} outputs"
        )));
    }
    Ok(())
}

/// Rotation prediction: each instance is scored by the mean cross-entropy
/// of predicting `r` for its four copies rotated by `r * 90°`.
pub fn rotation_batch(model: &Model, theta: &ParamVector, x: ArrayView2<'_, f64>) -> Result<LossEval> {
    check_input(model, theta, &x)?;
    check_classifier(model, 4)?;
    let rows = rotation_rows(x)?;
    let trace = forward_chain(theta, model.layout().encoder.clone(), rows);
    let logits = trace.output();
    let mut d_logits = Array2::zeros(logits.dim());
    let mut losses = vec![0.0; x.nrows()];
    for (row, (lg, mut d)) in logits.rows().into_iter().zip(d_logits.rows_mut()).enumerate() {
        let label = row % 4;
        let lse = log_sum_exp(lg.as_slice().expect("contiguous"));
        losses[row / 4] += 0.25 * (lse - lg[label]);
        for (k, (dk, &l)) in d.iter_mut().zip(lg.iter()).enumerate() {
            let p = (l - lse).exp();
            *dk = 0.25 * (p - if k == label { 1.0 } else { 0.0 });
        }
    }
    let (factors, _) = backward_chain(theta, trace, d_logits, false);
    Ok(LossEval {
        losses,
        grads: BatchGrads::new(model.layout().clone(), factors, x.nrows(), 4),
    })
}

/// Mean rotation-prediction loss per instance, without gradients.
pub fn rotation_losses(model: &Model, theta: &ParamVector, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    check_input(model, theta, &x)?;
    check_classifier(model, 4)?;
    let rows = rotation_rows(x)?;
    let trace = forward_chain(theta, model.layout().encoder.clone(), rows);
    let logits = trace.output();
    let mut losses = vec![0.0; x.nrows()];
    for (row, lg) in logits.axis_iter(Axis(0)).enumerate() {
        let lse = log_sum_exp(lg.as_slice().expect("contiguous"));
        losses[row / 4] += 0.25 * (lse - lg[row % 4]);
    }
    Ok(losses)
}

/// Cross-entropy of predicting rotation `r` for `x` rotated by `r * 90°`.
pub fn rotation_loss(model: &Model, theta: &ParamVector, x: &Tensor, r: usize) -> Result<f64> {
    if r > 3 {
        return Err(Error::contract(format!("rotation index {r} outside 0..3")));
    }
    check_classifier(model, 4)?;
    let side = image_side(x.len())?;
    let mut rotated = vec![0.0; x.len()];
    rotate_into(x.data(), side, r, &mut rotated);
    let input = Array2::from_shape_vec((1, x.len()), rotated).expect("row");
    check_input(model, theta, &input.view())?;
    let trace = forward_chain(theta, model.layout().encoder.clone(), input);
    cross_entropy(trace.output().row(0).as_slice().expect("contiguous"), r)
}
