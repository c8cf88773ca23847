//! Small statistics helpers used by the Monte Carlo harnesses and tests.

/// Sample mean and (unbiased) standard deviation.
pub fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    assert!(n > 0, "mean_std over empty sample");
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, var.sqrt())
}

/// Standard error of the sample mean.
pub fn stderr(samples: &[f64]) -> f64 {
    let (_, sd) = mean_std(samples);
    sd / (samples.len() as f64).sqrt()
}

/// Standard error of a binomial proportion estimate `p_hat` from `n` trials.
pub fn binomial_stderr(p_hat: f64, n: u64) -> f64 {
    (p_hat * (1.0 - p_hat) / n as f64).sqrt()
}

/// Upper critical value of the chi-square distribution with `df` degrees of
/// freedom at upper-tail probability `alpha`, via the Wilson-Hilferty cube
/// approximation. Accurate to a few percent for df >= 1, which is enough for
/// the pass/fail gates here.
pub fn chi_square_critical(df: usize, alpha: f64) -> f64 {
    assert!(df >= 1);
    let z = standard_normal_quantile(1.0 - alpha);
    let d = df as f64;
    let t = 1.0 - 2.0 / (9.0 * d) + z * (2.0 / (9.0 * d)).sqrt();
    d * t * t * t
}

/// Quantile of the standard normal via Acklam's rational approximation
/// (relative error below 1.15e-9 on (0, 1)).
pub fn standard_normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Two-sample chi-square homogeneity statistic over the union of categories.
///
/// `a` and `b` are per-category counts from two independent samples.
/// Returns `(statistic, degrees_of_freedom)`. Categories empty in both
/// samples are dropped.
pub fn two_sample_chi_square(a: &[u64], b: &[u64]) -> (f64, usize) {
    assert_eq!(a.len(), b.len());
    let total_a: u64 = a.iter().sum();
    let total_b: u64 = b.iter().sum();
    assert!(total_a > 0 && total_b > 0);
    let grand = (total_a + total_b) as f64;

    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&ca, &cb) in a.iter().zip(b) {
        let col = (ca + cb) as f64;
        if col == 0.0 {
            continue;
        }
        cells += 1;
        let ea = total_a as f64 * col / grand;
        let eb = total_b as f64 * col / grand;
        stat += (ca as f64 - ea) * (ca as f64 - ea) / ea;
        stat += (cb as f64 - eb) * (cb as f64 - eb) / eb;
    }
    assert!(
        cells >= 2,
        "chi-square needs at least two populated categories"
    );
    (stat, cells - 1)
}
