use std::ops::Range;
use std::sync::Arc;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut2};
use serde::{Deserialize, Serialize};

use crate::ndmath::RandomStream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub(crate) fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation output.
    pub(crate) fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    /// Encoder `widths[0] -> ... -> 2 * latent` emitting `(mu, log sigma^2)`,
    /// followed by a mirrored decoder `latent -> ... -> widths[0]` emitting
    /// Bernoulli logits.
    VaeGaussianLatent,
    /// Plain chain `widths[0] -> ... -> widths[last]` emitting class logits.
    ClassifierLogits,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub head: HeadKind,
}

impl MlpSpec {
    pub fn vae(widths: Vec<usize>) -> Self {
        Self {
            widths,
            activation: Activation::Tanh,
            head: HeadKind::VaeGaussianLatent,
        }
    }

    pub fn classifier(widths: Vec<usize>) -> Self {
        Self {
            widths,
            activation: Activation::Tanh,
            head: HeadKind::ClassifierLogits,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::contract(format!(
                "an MLP needs at least two layer widths, got {:?}",
                self.widths
            )));
        }
        if self.widths.contains(&0) {
            return Err(Error::contract(format!("layer widths must be positive: {:?}", self.widths)));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        match self.head {
            HeadKind::VaeGaussianLatent => self.widths[0],
            HeadKind::ClassifierLogits => *self.widths.last().expect("validated"),
        }
    }

    pub fn latent_dim(&self) -> Option<usize> {
        match self.head {
            HeadKind::VaeGaussianLatent => self.widths.last().copied(),
            HeadKind::ClassifierLogits => None,
        }
    }
}

/// One dense layer `y = act(W x + b)` inside a flat parameter vector.
/// `W` is stored row-major with shape `(fan_out, fan_in)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseSlot {
    pub name: String,
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
    pub activation: Activation,
}

impl DenseSlot {
    pub fn param_count(&self) -> usize {
        self.fan_out * (self.fan_in + 1)
    }

    pub fn weight_range(&self) -> Range<usize> {
        self.weight_offset..self.weight_offset + self.fan_in * self.fan_out
    }

    pub fn bias_range(&self) -> Range<usize> {
        self.bias_offset..self.bias_offset + self.fan_out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub slots: Vec<DenseSlot>,
    /// Slots of the encoder (VAE) or of the whole classifier.
    pub encoder: Range<usize>,
    /// Slots of the VAE decoder; empty for classifiers.
    pub decoder: Range<usize>,
    len: usize,
}

impl Layout {
    fn from_spec(spec: &MlpSpec) -> Self {
        let mut slots = Vec::new();
        let mut offset = 0;
        let mut push_chain = |slots: &mut Vec<DenseSlot>, prefix: &str, widths: &[usize]| {
            let start = slots.len();
            let n = widths.len() - 1;
            for (i, pair) in widths.windows(2).enumerate() {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let slot = DenseSlot {
                    name: format!("{prefix}{i}"),
                    fan_in,
                    fan_out,
                    weight_offset: offset,
                    bias_offset: offset + fan_in * fan_out,
                    activation: if i + 1 == n {
                        Activation::Identity
                    } else {
                        spec.activation
                    },
                };
                offset += slot.param_count();
                slots.push(slot);
            }
            start..slots.len()
        };
        let (encoder, decoder) = match spec.head {
            HeadKind::ClassifierLogits => {
                let enc = push_chain(&mut slots, "layer", &spec.widths);
                let end = enc.end;
                (enc, end..end)
            }
            HeadKind::VaeGaussianLatent => {
                let latent = *spec.widths.last().expect("validated");
                let mut enc_widths = spec.widths.clone();
                *enc_widths.last_mut().expect("validated") = 2 * latent;
                let enc = push_chain(&mut slots, "enc", &enc_widths);
                let dec_widths: Vec<usize> = spec.widths.iter().rev().copied().collect();
                let dec = push_chain(&mut slots, "dec", &dec_widths);
                (enc, dec)
            }
        };
        Self {
            slots,
            encoder,
            decoder,
            len: offset,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn slot(&self, name: &str) -> Option<&DenseSlot> {
        self.slots.iter().find(|s| s.name == name)
    }
}

/// A model architecture: the spec plus its parameter layout.
#[derive(Debug, Clone)]
pub struct Model {
    spec: MlpSpec,
    layout: Arc<Layout>,
}

impl Model {
    pub fn new(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let layout = Arc::new(Layout::from_spec(&spec));
        Ok(Self { spec, layout })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn zeros(&self) -> ParamVector {
        ParamVector::zeros(self.layout.clone())
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_params(&self, rng: &mut RandomStream) -> ParamVector {
        let mut theta = self.zeros();
        for slot in &self.layout.slots {
            let limit = (6.0 / (slot.fan_in + slot.fan_out) as f64).sqrt();
            for v in &mut theta.values[slot.weight_range()] {
                *v = limit * (2.0 * rng.uniform() - 1.0);
            }
        }
        theta
    }
}

/// Flat trainable parameters together with the layout that names them.
#[derive(Debug, Clone)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Arc<Layout>,
}

impl PartialEq for ParamVector {
    fn eq(&self, other: &Self) -> bool {
        self.same_layout(other) && self.values == other.values
    }
}

impl ParamVector {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        Self {
            values: vec![0.0; layout.len()],
            layout,
        }
    }

    pub fn from_values(layout: Arc<Layout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::contract(format!(
                "layout holds {} parameters, got {}",
                layout.len(),
                values.len()
            )));
        }
        Ok(Self { values, layout })
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.layout.clone())
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || *self.layout == *other.layout
    }

    pub(crate) fn check_layout(&self, other: &Self) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::contract("parameter vectors have different layouts"))
        }
    }

    pub fn weight(&self, slot: &DenseSlot) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((slot.fan_out, slot.fan_in), &self.values[slot.weight_range()])
            .expect("slot inside layout")
    }

    pub fn weight_mut(&mut self, slot: &DenseSlot) -> ArrayViewMut2<'_, f64> {
        let range = slot.weight_range();
        ArrayViewMut2::from_shape((slot.fan_out, slot.fan_in), &mut self.values[range])
            .expect("slot inside layout")
    }

    pub fn bias(&self, slot: &DenseSlot) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.values[slot.bias_range()])
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_layout(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self += scale * other`
    pub fn axpy(&mut self, scale: f64, other: &Self) -> Result<()> {
        self.check_layout(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
