use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sorted sample with step-function CDF `F_n(x) = #{x_i <= x} / n`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Shape("empirical CDF of an empty sample".into()));
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(Error::Validation("NaN in sample".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(EmpiricalCdf { sorted })
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    pub fn sorted_samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&s| s <= x) as f64 / self.n() as f64
    }

    pub fn quantile(&self, q: f64) -> f64 {
        let idx = ((q.clamp(0.0, 1.0) * self.n() as f64).ceil() as usize).clamp(1, self.n());
        self.sorted[idx - 1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    /// 0 for the one-sample test.
    pub n2: usize,
}

/// `P(K > lambda)` for the limiting Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-theta form converges fast for small lambda.
        let y = -PI * PI / (8.0 * lambda * lambda);
        let sum: f64 = (1..=8)
            .map(|k| {
                let odd = (2 * k - 1) as f64;
                (odd * odd * y).exp()
            })
            .sum();
        (1.0 - (2.0 * PI).sqrt() / lambda * sum).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += sign * term;
            if term < 1e-18 {
                break;
            }
            sign = -sign;
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// Asymptotic p-value with Stephens' finite-sample adjustment of the scale.
fn ks_p_value(statistic: f64, n_eff: f64) -> f64 {
    let sn = n_eff.sqrt();
    kolmogorov_survival((sn + 0.12 + 0.11 / sn) * statistic)
}

/// One-sample KS test against `cdf`. The p-value is asymptotic and only
/// meaningful for `n >= 8`; the statistic is exact for any `n >= 1`.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    let ecdf = EmpiricalCdf::new(samples)?;
    let n = ecdf.n() as f64;
    let mut d: f64 = 0.0;
    let mut prev_f = 0.0;
    for (i, &x) in ecdf.sorted_samples().iter().enumerate() {
        let f = cdf(x);
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Validation(format!("reference CDF({x}) = {f} outside [0, 1]")));
        }
        if f < prev_f - 1e-9 {
            return Err(Error::Validation(format!(
                "reference CDF decreases at {x}: {prev_f} then {f}"
            )));
        }
        prev_f = prev_f.max(f);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max(hi - f).max(f - lo);
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, n),
        n1: ecdf.n(),
        n2: 0,
    })
}

/// Two-sample KS test with effective size `n1 n2 / (n1 + n2)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let ea = EmpiricalCdf::new(a)?;
    let eb = EmpiricalCdf::new(b)?;
    let (xa, xb) = (ea.sorted_samples(), eb.sorted_samples());
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, na * nb / (na + nb)),
        n1: xa.len(),
        n2: xb.len(),
    })
}
