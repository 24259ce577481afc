//! Special functions used by the Student's-t weight updates: digamma, its
//! derivative and inverse, plus the log-gamma function.

use std::f64::consts::PI;

/// Digamma function psi(x), the logarithmic derivative of the gamma function.
///
/// Uses the ascending recurrence to push the argument above 12 and then the
/// asymptotic series. Negative non-integer arguments go through the
/// reflection formula.
pub fn digamma(x: f64) -> f64 {
    const C: f64 = 12.0;
    const S3: f64 = 1.0 / 12.0;
    const S4: f64 = 1.0 / 120.0;
    const S5: f64 = 1.0 / 252.0;
    const S6: f64 = 1.0 / 240.0;
    const S7: f64 = 1.0 / 132.0;

    if x.is_nan() || x == f64::NEG_INFINITY {
        return f64::NAN;
    }
    if x <= 0.0 && x.floor() == x {
        return f64::NEG_INFINITY;
    }
    if x < 0.0 {
        return digamma(1.0 - x) + PI / (-PI * x).tan();
    }
    if x <= 1e-6 {
        // psi(x) = -gamma - 1/x + pi^2/6 * x + O(x^2)
        return -0.577_215_664_901_532_9 - 1.0 / x + 1.644_934_066_848_226_4 * x;
    }

    let mut result = 0.0;
    let mut z = x;
    while z < C {
        result -= 1.0 / z;
        z += 1.0;
    }
    let mut r = 1.0 / z;
    result += z.ln() - 0.5 * r;
    r *= r;
    result -= r * (S3 - r * (S4 - r * (S5 - r * (S6 - r * S7))));
    result
}

/// Trigamma function psi'(x) for x > 0.
pub fn trigamma(x: f64) -> f64 {
    const C: f64 = 12.0;
    let mut result = 0.0;
    let mut z = x;
    while z < C {
        result += 1.0 / (z * z);
        z += 1.0;
    }
    // Asymptotic series 1/z + 1/(2z^2) + sum B_2n / z^(2n+1).
    let r = 1.0 / (z * z);
    result += 1.0 / z + 0.5 * r;
    result += (1.0 / z) * r * (1.0 / 6.0 - r * (1.0 / 30.0 - r * (1.0 / 42.0 - r / 30.0)));
    result
}

/// Inverse digamma: returns mu > 0 with psi(mu) = y, solved by Newton
/// iteration to |psi(mu) - y| < 1e-12.
///
/// The start point exp(y) + 0.5 comes from the large-argument approximation
/// psi(a) ~ log(a) - 1/(2a).
pub fn inv_digamma(y: f64) -> f64 {
    let mut mu = if y >= -2.22 {
        y.exp() + 0.5
    } else {
        // Small-argument regime: psi(x) ~ -1/x - gamma.
        -1.0 / (y + 0.577_215_664_901_532_9)
    };
    if !mu.is_finite() || mu <= 0.0 {
        mu = 1e-8;
    }
    for _ in 0..100 {
        let f = digamma(mu) - y;
        if f.abs() < 1e-12 {
            break;
        }
        let step = f / trigamma(mu);
        let mut next = mu - step;
        // psi is increasing and concave on (0, inf); keep the iterate positive.
        while next <= 0.0 {
            next = (mu + next.max(0.0)) / 2.0;
            if next <= f64::MIN_POSITIVE {
                next = mu / 2.0;
            }
        }
        mu = next;
    }
    mu
}

/// Natural log of the gamma function (Lanczos approximation, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
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
    if x < 0.5 {
        // Reflection: ln Gamma(x) = ln(pi / sin(pi x)) - ln Gamma(1 - x)
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = G[0];
    for (i, &g) in G.iter().enumerate().skip(1) {
        acc += g / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}
