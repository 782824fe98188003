//! One-tailed paired t-test over per-trial accuracies.
//!
//! The p-value is the Student-t survival function computed through the
//! regularized incomplete beta function (continued fraction, Lentz's
//! method). Degenerate zero-variance inputs short-circuit to {0, 0.5, 1}
//! by the sign of the mean difference.

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Pre/post accuracy aggregate with the significance of the change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub pre_acc: f64,
    pub post_acc: f64,
    pub delta: f64,
    pub p_value: f64,
    pub n_trials: usize,
}

/// Paired one-tailed t-test for the hypothesis mean(post - pre) > 0.
pub fn one_tailed_paired_t(pre: &[f64], post: &[f64]) -> Result<SignificanceReport, EvalError> {
    if pre.len() != post.len() {
        return Err(EvalError::LengthMismatch(pre.len(), post.len()));
    }
    let n = pre.len();
    if n < 2 {
        return Err(EvalError::TooFewTrials(n));
    }
    let diffs: Vec<f64> = pre.iter().zip(post).map(|(a, b)| b - a).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let sd = var.sqrt();

    let p_value = if sd == 0.0 {
        if mean == 0.0 {
            0.5
        } else if mean > 0.0 {
            0.0
        } else {
            1.0
        }
    } else {
        let t = mean / (sd / (n as f64).sqrt());
        student_t_sf(t, (n - 1) as f64)
    };

    let pre_acc = pre.iter().sum::<f64>() / n as f64;
    let post_acc = post.iter().sum::<f64>() / n as f64;
    Ok(SignificanceReport {
        pre_acc,
        post_acc,
        delta: post_acc - pre_acc,
        p_value,
        n_trials: n,
    })
}

/// Survival function of the Student-t distribution: P(T_dof > t).
pub fn student_t_sf(t: f64, dof: f64) -> f64 {
    debug_assert!(dof > 0.0);
    let x = dof / (dof + t * t);
    let half = 0.5 * regularized_incomplete_beta(0.5 * dof, 0.5, x);
    if t >= 0.0 {
        half
    } else {
        1.0 - half
    }
}

/// Regularized incomplete beta function I_x(a, b).
fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    // Continued fraction converges fast for x < (a+1)/(a+b+2); use the
    // symmetry I_x(a,b) = 1 - I_{1-x}(b,a) otherwise.
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        let ln_front_sym = b * (1.0 - x).ln() + a * x.ln() - ln_beta(a, b);
        1.0 - ln_front_sym.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Continued fraction for the incomplete beta (Lentz's method).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;

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
    h
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Lanczos approximation of ln gamma, g = 7, 9 coefficients.
#[allow(clippy::excessive_precision)]
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, c) in COEFFS.iter().enumerate() {
        acc += c / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}
