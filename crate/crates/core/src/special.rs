//! Log-gamma, regularized incomplete gamma and chi-square quantiles.

use core::f64::consts::PI;

use libm::{exp, fabs, log, sin};

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

pub(crate) fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        return log(PI / fabs(sin(PI * x))) - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * log(2.0 * PI) + (x + 0.5) * log(t) - t + log(acc)
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub(crate) fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let prefactor = exp(-x + a * log(x) - ln_gamma(a));
    if x < a + 1.0 {
        // series
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..10_000 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if fabs(del) < fabs(sum) * 1e-16 {
                break;
            }
        }
        (sum * prefactor).min(1.0)
    } else {
        // Lentz continued fraction for Q(a, x)
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if fabs(d) < TINY {
                d = TINY;
            }
            c = b + an / c;
            if fabs(c) < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if fabs(del - 1.0) < 1e-16 {
                break;
            }
        }
        (1.0 - prefactor * h).max(0.0)
    }
}

pub(crate) fn chi2_cdf(dof: f64, x: f64) -> f64 {
    gamma_p(0.5 * dof, 0.5 * x)
}

fn chi2_pdf(dof: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let a = 0.5 * dof;
    exp((a - 1.0) * log(x) - 0.5 * x - a * log(2.0) - ln_gamma(a))
}

/// Quantile of the chi-square distribution, `p` in `(0, 1)`.
///
/// Newton iterations on the CDF, falling back to bisection whenever a step
/// would leave the current bracket.
pub(crate) fn chi2_quantile(dof: f64, p: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = dof.max(1.0);
    while chi2_cdf(dof, hi) < p {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..500 {
        let f = chi2_cdf(dof, x) - p;
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let pdf = chi2_pdf(dof, x);
        let newton = x - f / pdf;
        let next = if pdf > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if fabs(next - x) <= 1e-15 * x.max(1e-300) || hi - lo <= 1e-15 * hi {
            return next;
        }
        x = next;
    }
    x
}
