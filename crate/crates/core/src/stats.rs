//! Two-proportion chi-square test and Holm step-down adjustment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProportionSample {
    pub successes: u64,
    pub trials: u64,
    pub label: String,
}

impl ProportionSample {
    pub fn new(successes: u64, trials: u64, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if trials == 0 || successes > trials {
            return Err(Error::Proportion {
                label,
                successes,
                trials,
            });
        }
        Ok(ProportionSample {
            successes,
            trials,
            label,
        })
    }

    pub fn proportion(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Pearson chi-square on the 2×2 table (successes, failures) × (a, b),
/// one degree of freedom, no continuity correction.
///
/// When the pooled proportion is 0 or 1 the table has an empty margin; the
/// proportions are then identical and the result is statistic 0, p 1.
pub fn two_proportion_chisq(a: &ProportionSample, b: &ProportionSample) -> Result<ChiSquareResult> {
    for s in [a, b] {
        if s.trials == 0 || s.successes > s.trials {
            return Err(Error::Proportion {
                label: s.label.clone(),
                successes: s.successes,
                trials: s.trials,
            });
        }
    }
    let (s1, n1) = (a.successes as f64, a.trials as f64);
    let (s2, n2) = (b.successes as f64, b.trials as f64);
    let (f1, f2) = (n1 - s1, n2 - s2);
    let n = n1 + n2;
    let successes = s1 + s2;
    let failures = f1 + f2;
    if successes == 0.0 || failures == 0.0 {
        return Ok(ChiSquareResult {
            statistic: 0.0,
            p_value: 1.0,
        });
    }
    let cross = s1 * f2 - s2 * f1;
    let statistic = n * cross * cross / (n1 * n2 * successes * failures);
    Ok(ChiSquareResult {
        statistic,
        p_value: chi_square_sf(statistic, 1.0),
    })
}

/// Upper tail `P(X > x)` of a chi-square distribution with `dof` degrees of freedom.
pub fn chi_square_sf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    regularized_gamma_q(dof / 2.0, x / 2.0)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos approximation, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const GAMMA_EPS: f64 = 1e-15;
const GAMMA_MAX_ITER: usize = 10_000;

/// Regularized upper incomplete gamma `Q(a, x)`: series for `x < a + 1`,
/// Lentz continued fraction otherwise.
pub fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0, "shape must be positive");
    if x <= 0.0 {
        return 1.0;
    }
    let log_prefix = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..GAMMA_MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * GAMMA_EPS {
                break;
            }
        }
        (1.0 - sum * log_prefix.exp()).clamp(0.0, 1.0)
    } else {
        let tiny = f64::MIN_POSITIVE / GAMMA_EPS;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..GAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < GAMMA_EPS {
                break;
            }
        }
        (log_prefix.exp() * h).clamp(0.0, 1.0)
    }
}

/// Holm step-down adjustment; results are returned in input order.
pub fn holm_adjust(p_values: &[f64]) -> Result<Vec<f64>> {
    if let Some(&bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::PValue(bad));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &i) in order.iter().enumerate() {
        running = running.max(p_values[i] * (m - rank) as f64).min(1.0);
        adjusted[i] = running;
    }
    Ok(adjusted)
}
