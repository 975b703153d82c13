use rand_distr::{Distribution, StandardNormal};

use super::{BetaParams, RandomStream};

pub fn sample_standard_normal(rng: &mut RandomStream) -> f64 {
    StandardNormal.sample(rng)
}

/// Natural logarithm of a unit-scale Gamma(shape) draw.
///
/// Marsaglia-Tsang squeeze/rejection for shape >= 1; for shape < 1 the
/// draw is boosted from Gamma(shape + 1) by `U^(1/shape)`, evaluated in log
/// space so tiny shapes do not underflow.
fn ln_gamma_draw(shape: f64, rng: &mut RandomStream) -> f64 {
    if shape < 1.0 {
        let boosted = ln_gamma_draw(shape + 1.0, rng);
        return boosted + rng.uniform_open0().ln() / shape;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z = sample_standard_normal(rng);
        let t = 1.0 + c * z;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = rng.uniform_open0();
        let z2 = z * z;
        if u < 1.0 - 0.0331 * z2 * z2 || u.ln() < 0.5 * z2 + d * (1.0 - v + v.ln()) {
            return d.ln() + v.ln();
        }
    }
}

/// Unit-scale Gamma(shape) draw.
pub fn sample_gamma(shape: f64, rng: &mut RandomStream) -> f64 {
    ln_gamma_draw(shape, rng).exp()
}

/// Beta(a, b) draw as `X / (X + Y)` with `X ~ Gamma(a)`, `Y ~ Gamma(b)`.
pub fn sample_beta(p: BetaParams, rng: &mut RandomStream) -> f64 {
    let lx = ln_gamma_draw(p.a(), rng);
    let ly = ln_gamma_draw(p.b(), rng);
    // X / (X + Y) = sigmoid(ln X - ln Y)
    let t = lx - ly;
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}
