use std::ops::Range;

use ndarray::{Array2, ArrayView2, Axis};

use super::grads::{BatchGrads, Factor};
use super::{HeadKind, Model, ParamVector};
use crate::{Error, Result};

/// Activations of a chain of dense layers for a batch of rows.
/// `acts[0]` is the chain input and `acts[j + 1]` the output of its j-th slot.
#[derive(Debug, Clone)]
pub struct ChainTrace {
    pub slots: Range<usize>,
    pub acts: Vec<Array2<f64>>,
}

impl ChainTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("trace holds the input at least")
    }
}

/// Everything needed for an exact backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub encoder: ChainTrace,
    pub decoder: Option<ChainTrace>,
}

pub(crate) fn forward_chain(theta: &ParamVector, slots: Range<usize>, input: Array2<f64>) -> ChainTrace {
    let layout = theta.layout().clone();
    let mut acts = Vec::with_capacity(slots.len() + 1);
    acts.push(input);
    for s in slots.clone() {
        let slot = &layout.slots[s];
        let prev = acts.last().expect("non-empty");
        let mut z = prev.dot(&theta.weight(slot).t());
        z += &theta.bias(slot);
        let act = slot.activation;
        z.mapv_inplace(|v| act.apply(v));
        acts.push(z);
    }
    ChainTrace { slots, acts }
}

/// Back-propagates `d_out` (gradient w.r.t. the chain output, one row per
/// example) and returns the per-example factors plus, when requested, the
/// gradient with respect to the chain input.
pub(crate) fn backward_chain(
    theta: &ParamVector,
    trace: ChainTrace,
    d_out: Array2<f64>,
    need_input_grad: bool,
) -> (Vec<Factor>, Option<Array2<f64>>) {
    let layout = theta.layout().clone();
    let ChainTrace { slots, mut acts } = trace;
    let mut factors = Vec::with_capacity(slots.len());
    let mut grad = d_out;
    let first = slots.start;
    for s in slots.rev() {
        let slot = &layout.slots[s];
        let out = acts.pop().expect("one activation per slot");
        let act = slot.activation;
        if act != super::Activation::Identity {
            ndarray::Zip::from(&mut grad)
                .and(&out)
                .for_each(|g, &o| *g *= act.derivative_from_output(o));
        }
        let input = acts.last().expect("input of slot").clone();
        let next = if s > first || need_input_grad {
            Some(grad.dot(&theta.weight(slot)))
        } else {
            None
        };
        factors.push(Factor {
            slot: s,
            inputs: input,
            deltas: grad,
        });
        match next {
            Some(g) => grad = g,
            None => {
                factors.reverse();
                return (factors, None);
            }
        }
    }
    factors.reverse();
    (factors, Some(grad))
}

pub(crate) fn check_input(model: &Model, theta: &ParamVector, x: &ArrayView2<'_, f64>) -> Result<()> {
    if !same_model(model, theta) {
        return Err(Error::contract("parameters do not belong to this model"));
    }
    if x.ncols() != model.spec().input_width() {
        return Err(Error::contract(format!(
            "input width {} does not match model input width {}",
            x.ncols(),
            model.spec().input_width()
        )));
    }
    Ok(())
}

fn same_model(model: &Model, theta: &ParamVector) -> bool {
    std::sync::Arc::ptr_eq(model.layout(), theta.layout()) || **model.layout() == **theta.layout()
}

/// Deterministic forward pass. Classifiers return logits; VAEs decode the
/// posterior mean and return reconstruction logits.
pub fn forward(
    model: &Model,
    theta: &ParamVector,
    x: ArrayView2<'_, f64>,
) -> Result<(Array2<f64>, ForwardTrace)> {
    check_input(model, theta, &x)?;
    let layout = model.layout();
    let encoder = forward_chain(theta, layout.encoder.clone(), x.to_owned());
    match model.spec().head {
        HeadKind::ClassifierLogits => Ok((
            encoder.output().clone(),
            ForwardTrace {
                encoder,
                decoder: None,
            },
        )),
        HeadKind::VaeGaussianLatent => {
            let latent = model.spec().latent_dim().expect("vae head");
            let mu = encoder.output().slice(ndarray::s![.., ..latent]).to_owned();
            let decoder = forward_chain(theta, layout.decoder.clone(), mu);
            Ok((
                decoder.output().clone(),
                ForwardTrace {
                    encoder,
                    decoder: Some(decoder),
                },
            ))
        }
    }
}

fn trunk(model: &Model) -> Range<usize> {
    let enc = model.layout().encoder.clone();
    enc.start..enc.end - 1
}

/// Penultimate-layer features: the activations feeding the final encoder
/// (or classifier) layer. The trace's output holds one feature row per input.
pub fn features(model: &Model, theta: &ParamVector, x: ArrayView2<'_, f64>) -> Result<ChainTrace> {
    check_input(model, theta, &x)?;
    Ok(forward_chain(theta, trunk(model), x.to_owned()))
}

/// Gradient of `sum_rows <d_features[row], features[row]>` with respect to
/// the parameters, i.e. the pull-back of a feature-space gradient.
pub fn feature_backward(
    model: &Model,
    theta: &ParamVector,
    trace: ChainTrace,
    d_features: Array2<f64>,
) -> Result<ParamVector> {
    if d_features.dim() != trace.output().dim() {
        return Err(Error::contract("feature gradient shape does not match the features"));
    }
    let rows = d_features.len_of(Axis(0));
    let (factors, _) = backward_chain(theta, trace, d_features, false);
    let grads = BatchGrads::new(model.layout().clone(), factors, rows, 1);
    grads.weighted_sum(&vec![1.0; rows])
}
