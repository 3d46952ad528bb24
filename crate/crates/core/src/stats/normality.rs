use crate::error::{Error, Result};
use crate::report::{Check, TestReport};

/// Sample mean and its standard error (sample s.d. over sqrt(n)).
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Moment checks of a sample against `N(mean0, var0)`:
///
/// * standardized mean `|z| <= 4`,
/// * variance ratio within 5 relative standard errors (`sqrt(2/(n-1))`) of 1,
/// * excess kurtosis within 5 standard errors (`sqrt(24/n)`) of 0.
pub fn normality_check(increments: &[f64], mean0: f64, var0: f64) -> Result<TestReport> {
    if !(var0 > 0.0) {
        return Err(Error::Parameter(format!("reference variance must be > 0, got {var0}")));
    }
    let n = increments.len();
    if n < 100 {
        return Err(Error::DegenerateInput(format!("normality check needs n >= 100, got {n}")));
    }
    let nf = n as f64;
    let mean = increments.iter().sum::<f64>() / nf;
    let (mut m2, mut m4) = (0.0, 0.0);
    for x in increments {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    let var = m2 / (nf - 1.0);
    m2 /= nf;
    m4 /= nf;

    let mut report = TestReport::new("normality");
    let z = (mean - mean0) / (var0 / nf).sqrt();
    report.push(Check::within("mean_z", z, 4.0, n));
    let rel_se = (2.0 / (nf - 1.0)).sqrt();
    report.push(Check::within("variance_ratio_rse", (var / var0 - 1.0) / rel_se, 5.0, n));
    let kurt = m4 / (m2 * m2) - 3.0;
    report.push(Check::within("excess_kurtosis_se", kurt / (24.0 / nf).sqrt(), 5.0, n));
    Ok(report)
}
