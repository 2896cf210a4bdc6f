//! Statistics kernel: exact two-sided binomial test (log space) and
//! one-sample t-test via the regularized incomplete beta function.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("successes must be in 0..=n")]
    BadSuccesses,
    #[error("p0 must lie strictly between 0 and 1")]
    BadNull,
    #[error("need at least 2 samples")]
    TooFewSamples,
    #[error("samples have zero variance")]
    ZeroVariance,
}

/// ln Gamma via the Lanczos approximation (g = 7, 9 coefficients).
pub fn ln_gamma(x: f64) -> f64 {
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
            - (std::f64::consts::PI * x).sin().abs().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = 0.99999999999980993;
    for (i, &c) in COEFFS.iter().enumerate() {
        a += c / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * (std::f64::consts::TAU).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Exact two-sided binomial test: sums the probabilities of all outcomes at
/// most as probable as the observed count.
pub fn binomial_test(successes: u64, n: u64, p0: f64) -> Result<f64, StatsError> {
    if successes > n {
        return Err(StatsError::BadSuccesses);
    }
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(StatsError::BadNull);
    }
    let lp = p0.ln();
    let lq = (1.0 - p0).ln();
    let log_pmf =
        |k: u64| -> f64 { ln_choose(n, k) + k as f64 * lp + (n - k) as f64 * lq };
    let observed = log_pmf(successes);
    // Relative tolerance guards against outcomes that are equal in exact
    // arithmetic but differ in the last float bits.
    let cutoff = observed + 1e-7;
    let mut total = 0.0;
    for k in 0..=n {
        let l = log_pmf(k);
        if l <= cutoff {
            total += (l - observed).exp();
        }
    }
    Ok((total * observed.exp()).min(1.0))
}

/// Regularized incomplete beta function I_x(a, b) by continued fraction.
pub fn beta_reg(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0 && (0.0..=1.0).contains(&x));
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    // The front factor is symmetric under (a, b, x) -> (b, a, 1-x), so both
    // branches share it; the continued fraction is only used where it
    // converges fast.
    let ln_front = a * x.ln() + b * (1.0 - x).ln() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * betacf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * betacf(b, a, 1.0 - x) / b
    }
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
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

/// Two-sided p-value for a Student-t statistic with `dof` degrees of freedom.
pub fn t_sf_two_sided(t: f64, dof: f64) -> f64 {
    let x = dof / (dof + t * t);
    beta_reg(dof / 2.0, 0.5, x).min(1.0)
}

/// One-sample t-test of `samples` against mean `mu0`. Two-sided.
pub fn t_test_one_sample(samples: &[f64], mu0: f64) -> Result<(f64, f64), StatsError> {
    let n = samples.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let t = (mean - mu0) / (var.sqrt() / (n as f64).sqrt());
    let p = t_sf_two_sided(t, (n - 1) as f64);
    Ok((t, p))
}

/// One-sided paired comparison that `a` exceeds `b`: t-test on the paired
/// differences, halving the two-sided p when the direction is positive.
pub fn paired_one_sided_p(a: &[f64], b: &[f64]) -> Result<(f64, f64), StatsError> {
    assert_eq!(a.len(), b.len());
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (t, p2) = t_test_one_sample(&diffs, 0.0)?;
    let p = if t > 0.0 { p2 / 2.0 } else { 1.0 - p2 / 2.0 };
    Ok((t, p))
}
