use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Shape parameters of a Beta distribution stored as logarithms so that any
/// finite pair is a valid distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub log_a: f64,
    pub log_b: f64,
}

impl BetaParams {
    pub const UNIFORM: BetaParams = BetaParams {
        log_a: 0.0,
        log_b: 0.0,
    };

    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::domain(format!(
                "beta shapes must be positive and finite, got a={a}, b={b}"
            )));
        }
        Ok(Self {
            log_a: a.ln(),
            log_b: b.ln(),
        })
    }

    pub fn from_logs(log_a: f64, log_b: f64) -> Result<Self> {
        if !(log_a.is_finite() && log_b.is_finite()) {
            return Err(Error::domain(format!(
                "log shapes must be finite, got ({log_a}, {log_b})"
            )));
        }
        Ok(Self { log_a, log_b })
    }

    pub fn a(&self) -> f64 {
        self.log_a.exp()
    }

    pub fn b(&self) -> f64 {
        self.log_b.exp()
    }

    pub fn mean(&self) -> f64 {
        let (a, b) = (self.a(), self.b());
        a / (a + b)
    }

    pub fn variance(&self) -> f64 {
        let (a, b) = (self.a(), self.b());
        a * b / ((a + b).powi(2) * (a + b + 1.0))
    }
}

/// Samples whose distance to 0 or 1 is below this are clamped before the
/// implicit gradient divides by the density.
pub const IMPLICIT_CLAMP_EPS: f64 = 1e-7;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
const STIRLING_MIN: f64 = 15.0;

/// Natural logarithm of the Gamma function for positive arguments.
pub fn lgamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("lgamma needs a positive finite argument, got {x}")));
    }
    Ok(lgamma_pos(x))
}

pub(crate) fn lgamma_pos(x: f64) -> f64 {
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    if x >= STIRLING_MIN {
        return stirling(x);
    }
    // Shift into the asymptotic range: Γ(x) = Γ(x + n) / (x (x+1) ... (x+n-1)).
    let mut shifted = x;
    let mut prod = 1.0;
    while shifted < STIRLING_MIN {
        prod *= shifted;
        shifted += 1.0;
    }
    stirling(shifted) - prod.ln()
}

fn stirling(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli-number coefficients B_{2k} / (2k (2k-1)).
    let series = inv
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 360.0
                    + inv2
                        * (1.0 / 1260.0
                            + inv2
                                * (-1.0 / 1680.0
                                    + inv2
                                        * (1.0 / 1188.0
                                            + inv2
                                                * (-691.0 / 360_360.0
                                                    + inv2 * (1.0 / 156.0 + inv2 * (-3617.0 / 122_400.0))))))));
    (x - 0.5) * x.ln() - x + HALF_LN_2PI + series
}

/// ln B(a, b).
pub fn lbeta(a: f64, b: f64) -> f64 {
    lgamma_pos(a) + lgamma_pos(b) - lgamma_pos(a + b)
}

/// Beta density at `x` in the open unit interval.
pub fn beta_pdf(x: f64, p: BetaParams) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::domain(format!("beta_pdf needs 0 < x < 1, got {x}")));
    }
    Ok(pdf_unchecked(x, p.a(), p.b()))
}

fn pdf_unchecked(x: f64, a: f64, b: f64) -> f64 {
    ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - lbeta(a, b)).exp()
}

/// Regularized incomplete beta function `I_x(a, b)`, the Beta CDF.
pub fn beta_cdf(x: f64, p: BetaParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("beta_cdf needs 0 <= x <= 1, got {x}")));
    }
    Ok(incomplete_beta(x, p.a(), p.b()))
}

pub(crate) fn incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    if x > (a + 1.0) / (a + b + 2.0) {
        1.0 - incomplete_beta_cf(1.0 - x, b, a)
    } else {
        incomplete_beta_cf(x, a, b)
    }
}

/// Continued fraction for `I_x(a, b)` by the modified Lentz method. Converges
/// quickly for `x < (a+1)/(a+b+2)`.
fn incomplete_beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 10_000;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;

    let ln_front = a * x.ln() + b * (-x).ln_1p() - lbeta(a, b);
    let front = ln_front.exp() / a;
    if front == 0.0 {
        return 0.0;
    }

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        // even step
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // odd step
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    (front * h).clamp(0.0, 1.0)
}

/// Partial derivatives `(∂I/∂a, ∂I/∂b)` of the regularized incomplete beta
/// function by central differences with step `1e-5 * max(1, |param|)`.
pub fn beta_cdf_param_grads(x: f64, p: BetaParams) -> Result<(f64, f64)> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::domain(format!(
            "beta_cdf_param_grads needs 0 < x < 1, got {x}"
        )));
    }
    Ok(cdf_param_grads_unchecked(x, p.a(), p.b()))
}

fn cdf_param_grads_unchecked(x: f64, a: f64, b: f64) -> (f64, f64) {
    let step = |v: f64| (1e-5 * v.abs().max(1.0)).min(0.5 * v);
    let ha = step(a);
    let hb = step(b);
    // Difference whichever tail the continued fraction evaluates directly, so
    // a CDF close to 1 does not cancel against its complement.
    if x > (a + 1.0) / (a + b + 2.0) {
        let upper = |a: f64, b: f64| incomplete_beta_cf(1.0 - x, b, a);
        let da = (upper(a + ha, b) - upper(a - ha, b)) / (2.0 * ha);
        let db = (upper(a, b + hb) - upper(a, b - hb)) / (2.0 * hb);
        (-da, -db)
    } else {
        let lower = |a: f64, b: f64| incomplete_beta_cf(x, a, b);
        let da = (lower(a + ha, b) - lower(a - ha, b)) / (2.0 * ha);
        let db = (lower(a, b + hb) - lower(a, b - hb)) / (2.0 * hb);
        (da, db)
    }
}

/// Pathwise derivative of a Beta sample with respect to its shapes, holding
/// the underlying uniform noise fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImplicitGrad {
    pub dx_da: f64,
    pub dx_db: f64,
    /// The sample was moved into `[eps, 1 - eps]` before differentiating.
    pub clamped: bool,
}

/// Implicit reparameterization gradient `dx/dθ = -(∂F/∂θ) / f(x)` for a
/// draw `x ~ Beta(a, b)`.
pub fn implicit_beta_grad(x: f64, p: BetaParams) -> Result<ImplicitGrad> {
    if !(0.0..=1.0).contains(&x) || x.is_nan() {
        return Err(Error::domain(format!("implicit_beta_grad needs x in [0, 1], got {x}")));
    }
    let xc = x.clamp(IMPLICIT_CLAMP_EPS, 1.0 - IMPLICIT_CLAMP_EPS);
    let clamped = xc != x;
    let (a, b) = (p.a(), p.b());
    let pdf = pdf_unchecked(xc, a, b);
    if !(pdf > 0.0) || !pdf.is_finite() {
        return Ok(ImplicitGrad {
            dx_da: 0.0,
            dx_db: 0.0,
            clamped: true,
        });
    }
    let (da, db) = cdf_param_grads_unchecked(xc, a, b);
    Ok(ImplicitGrad {
        dx_da: -da / pdf,
        dx_db: -db / pdf,
        clamped,
    })
}

/// Inverse CDF by bisection on the log-odds of `x`, accurate to a few ulps
/// even for quantiles very close to 0 or 1.
pub fn beta_quantile(u: f64, p: BetaParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::domain(format!("beta_quantile needs 0 <= u <= 1, got {u}")));
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    if u == 1.0 {
        return Ok(1.0);
    }
    let (a, b) = (p.a(), p.b());
    let sigmoid = |t: f64| 1.0 / (1.0 + (-t).exp());
    let (mut lo, mut hi) = (-745.0_f64, 745.0_f64);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if incomplete_beta(sigmoid(mid), a, b) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(sigmoid(0.5 * (lo + hi)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(a: f64, b: f64) -> BetaParams {
        BetaParams::new(a, b).unwrap()
    }

    #[test]
    fn lgamma_reference_values() {
        assert_eq!(lgamma(1.0).unwrap(), 0.0);
        assert_eq!(lgamma(2.0).unwrap(), 0.0);
        assert!((lgamma(0.5).unwrap() - 0.572_364_942_924_700_1).abs() < 1e-12);
        assert!((lgamma(0.1).unwrap() - 2.252_712_651_734_206).abs() < 1e-12);
        assert!((lgamma(3.5).unwrap() - 1.200_973_602_347_074_3).abs() < 1e-12);
        assert!((lgamma(100.0).unwrap() - 359.134_205_369_575_4).abs() < 1e-12);
    }

    #[test]
    fn lgamma_matches_log_factorial() {
        let mut log_fact = 0.0_f64;
        for n in 1..200u32 {
            // Γ(n+1) = n!
            log_fact += f64::from(n).ln();
            let got = lgamma(f64::from(n) + 1.0).unwrap();
            let tol = 1e-12 * log_fact.abs().max(1.0);
            assert!((got - log_fact).abs() <= tol, "n={n}: {got} vs {log_fact}");
        }
    }

    #[test]
    fn lgamma_rejects_non_positive() {
        for x in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(lgamma(x), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn lgamma_large_argument_relative_accuracy() {
        // ln Γ(1e6) = 1e6 ln 1e6 - 1e6 - ½ ln 1e6 + ½ ln 2π + 1/(12e6) - ...
        let x = 1e6_f64;
        let expected = (x - 0.5) * x.ln() - x + HALF_LN_2PI + 1.0 / (12.0 * x);
        let got = lgamma(x).unwrap();
        assert!(((got - expected) / expected).abs() < 1e-15);
    }

    #[test]
    fn pdf_examples() {
        assert!((beta_pdf(0.5, params(1.0, 1.0)).unwrap() - 1.0).abs() < 1e-14);
        assert!((beta_pdf(0.5, params(2.0, 2.0)).unwrap() - 1.5).abs() < 1e-13);
        assert!((beta_pdf(0.5, params(0.5, 0.5)).unwrap() - std::f64::consts::FRAC_2_PI).abs() < 1e-12);
        assert!(matches!(beta_pdf(0.0, params(1.0, 1.0)), Err(Error::Domain(_))));
        assert!(matches!(beta_pdf(1.2, params(1.0, 1.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn cdf_examples() {
        assert!((beta_cdf(0.5, params(1.0, 1.0)).unwrap() - 0.5).abs() < 1e-14);
        assert!((beta_cdf(0.3, params(2.0, 2.0)).unwrap() - 0.216).abs() < 1e-13);
        let closed = 1.0 - 0.9_f64.powi(50);
        assert!((beta_cdf(0.1, params(1.0, 50.0)).unwrap() - closed).abs() < 1e-13);
        assert!((closed - 0.994_846_2).abs() < 1e-7);
        assert_eq!(beta_cdf(0.0, params(3.0, 0.5)).unwrap(), 0.0);
        assert_eq!(beta_cdf(1.0, params(3.0, 0.5)).unwrap(), 1.0);
        assert!(beta_cdf(-0.1, params(1.0, 1.0)).is_err());
    }

    #[test]
    fn cdf_reflection_symmetry() {
        for &(a, b) in &[(0.5, 2.0), (3.0, 7.0), (50.0, 1.0)] {
            for i in 1..20 {
                let x = f64::from(i) / 20.0;
                let lhs = beta_cdf(x, params(a, b)).unwrap();
                let rhs = 1.0 - beta_cdf(1.0 - x, params(b, a)).unwrap();
                assert!((lhs - rhs).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn param_grads_closed_forms() {
        // b = 1: I_x(a, 1) = x^a, so ∂/∂a = x^a ln x.
        let (da, db) = beta_cdf_param_grads(0.5, params(1.0, 1.0)).unwrap();
        assert!((da - 0.5 * 0.5_f64.ln()).abs() < 1e-9);
        assert!((da + 0.346_573_6).abs() < 1e-7);
        // a = 1: I_x(1, b) = 1 - (1-x)^b, so ∂/∂b = -(1-x)^b ln(1-x).
        assert!((db - 0.346_573_6).abs() < 1e-7);
    }

    #[test]
    fn param_grads_reflection() {
        for &(x, a, b) in &[(0.2, 2.0, 3.0), (0.7, 0.5, 5.0), (0.05, 1.5, 40.0)] {
            let (da, _) = beta_cdf_param_grads(x, params(a, b)).unwrap();
            let (_, db_ref) = beta_cdf_param_grads(1.0 - x, params(b, a)).unwrap();
            assert!((da + db_ref).abs() < 1e-8 * da.abs().max(1e-3), "{da} {db_ref}");
        }
    }

    #[test]
    fn implicit_grad_examples() {
        let g = implicit_beta_grad(0.5, params(1.0, 1.0)).unwrap();
        assert!((g.dx_da - 0.346_573_6).abs() < 1e-7);
        assert!((g.dx_db + 0.346_573_6).abs() < 1e-7);
        assert!(!g.clamped);
    }

    #[test]
    fn implicit_grad_signs_on_grid() {
        for &(a, b) in &[(0.5, 0.5), (1.0, 1.0), (2.0, 5.0), (5.0, 2.0), (20.0, 20.0)] {
            for i in 1..50 {
                let x = f64::from(i) / 50.0;
                let g = implicit_beta_grad(x, params(a, b)).unwrap();
                assert!(g.dx_da > 0.0, "a={a} b={b} x={x}");
                assert!(g.dx_db < 0.0, "a={a} b={b} x={x}");
            }
        }
    }

    #[test]
    fn implicit_grad_clamps_boundary_draws() {
        let g = implicit_beta_grad(0.0, params(2.0, 2.0)).unwrap();
        assert!(g.clamped);
        assert!(g.dx_da.is_finite() && g.dx_db.is_finite());
        let g = implicit_beta_grad(1.0 - 1e-12, params(2.0, 2.0)).unwrap();
        assert!(g.clamped);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &(a, b) in &[(0.5, 0.5), (1.0, 1.0), (2.0, 3.0), (50.0, 5.0), (0.1, 3.0)] {
            let p = params(a, b);
            for i in 1..20 {
                let u = f64::from(i) / 20.0;
                let x = beta_quantile(u, p).unwrap();
                assert!((beta_cdf(x, p).unwrap() - u).abs() < 1e-12);
            }
        }
        assert_eq!(beta_quantile(0.0, params(2.0, 2.0)).unwrap(), 0.0);
        assert!((beta_quantile(0.5, params(2.0, 2.0)).unwrap() - 0.5).abs() < 1e-14);
    }
}
