//! Error function, its complement and its inverse.
//!
//! `erf`/`erfc` follow the FreeBSD `s_erf.c` rational approximations, whose
//! notice is reproduced below. Absolute error is below 1e-16 on the real line.
//!
//! ====================================================
//! Copyright (C) 1993 by Sun Microsystems, Inc. All rights reserved.
//!
//! Developed at SunPro, a Sun Microsystems, Inc. business.
//! Permission to use, copy, modify, and distribute this
//! software is freely granted, provided that this notice
//! is preserved.
//! ====================================================

#![allow(clippy::excessive_precision)]

use std::f64::consts::FRAC_2_SQRT_PI;

use crate::error::{invalid, Result};

const ERX: f64 = 8.45062911510467529297e-01;

const EFX: f64 = 1.28379167095512586316e-01;
const EFX8: f64 = 1.02703333676410069053e+00;

// erf on [0, 0.84375]
const PP: [f64; 5] = [
    1.28379167095512558561e-01,
    -3.25042107247001499370e-01,
    -2.84817495755985104766e-02,
    -5.77027029648944159157e-03,
    -2.37630166566501626084e-05,
];
const QQ: [f64; 6] = [
    1.0,
    3.97917223959155352819e-01,
    6.50222499887672944485e-02,
    5.08130628187576562776e-03,
    1.32494738004321644526e-04,
    -3.96022827877536812320e-06,
];

// erf on [0.84375, 1.25]
const PA: [f64; 7] = [
    -2.36211856075265944077e-03,
    4.14856118683748331666e-01,
    -3.72207876035701323847e-01,
    3.18346619901161753674e-01,
    -1.10894694282396677476e-01,
    3.54783043256182359371e-02,
    -2.16637559486879084300e-03,
];
const QA: [f64; 7] = [
    1.0,
    1.06420880400844228286e-01,
    5.40397917702171048937e-01,
    7.18286544141962662868e-02,
    1.26171219808761642112e-01,
    1.36370839120290507362e-02,
    1.19844998467991074170e-02,
];

// erfc on [1.25, 1/0.35]
const RA: [f64; 8] = [
    -9.86494403484714822705e-03,
    -6.93858572707181764372e-01,
    -1.05586262253232909814e+01,
    -6.23753324503260060396e+01,
    -1.62396669462573470355e+02,
    -1.84605092906711035994e+02,
    -8.12874355063065934246e+01,
    -9.81432934416914548592e+00,
];
const SA: [f64; 9] = [
    1.0,
    1.96512716674392571292e+01,
    1.37657754143519042600e+02,
    4.34565877475229228821e+02,
    6.45387271733267880336e+02,
    4.29008140027567833386e+02,
    1.08635005541779435134e+02,
    6.57024977031928170135e+00,
    -6.04244152148580987438e-02,
];

// erfc on [1/0.35, 28]
const RB: [f64; 7] = [
    -9.86494292470009928597e-03,
    -7.99283237680523006574e-01,
    -1.77579549177547519889e+01,
    -1.60636384855821916062e+02,
    -6.37566443368389627722e+02,
    -1.02509513161107724954e+03,
    -4.83519191608651397019e+02,
];
const SB: [f64; 8] = [
    1.0,
    3.03380607434824582924e+01,
    3.25792512996573918826e+02,
    1.53672958608443695994e+03,
    3.19985821950859553908e+03,
    2.55305040643316442583e+03,
    4.74528541206955367215e+02,
    -2.24409524465858183362e+01,
];

const VERY_TINY: f64 = 2.848094538889218e-306;
const SMALL: f64 = 3.725_290_298_461_914e-9; // 2^-28
const TINY: f64 = 1.387_778_780_781_445_7e-17; // 2^-56

#[inline]
fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// `erfc(x) * x * exp(x^2)`-style tail for `1.25 <= x < 28`, returned as
/// `erfc(x)` for positive `x`.
fn erfc_tail(x: f64) -> f64 {
    let s = 1.0 / (x * x);
    let (r, q) = if x < 1.0 / 0.35 {
        (horner(&RA, s), horner(&SA, s))
    } else {
        (horner(&RB, s), horner(&SB, s))
    };
    // Truncate x to its high word so that z*z is exact.
    let z = f64::from_bits(x.to_bits() & 0xffff_ffff_0000_0000);
    (-z * z - 0.5625).exp() * ((z - x) * (z + x) + r / q).exp() / x
}

/// The Gauss error function `2/√π ∫₀ˣ exp(-r²) dr`.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let a = x.abs();
    let v = if a < 0.84375 {
        if a < SMALL {
            if a < VERY_TINY {
                0.125 * (8.0 * a + EFX8 * a)
            } else {
                a + EFX * a
            }
        } else {
            let z = a * a;
            a + a * (horner(&PP, z) / horner(&QQ, z))
        }
    } else if a < 1.25 {
        let s = a - 1.0;
        ERX + horner(&PA, s) / horner(&QA, s)
    } else if a >= 6.0 {
        1.0
    } else {
        1.0 - erfc_tail(a)
    };
    v.copysign(x)
}

/// The complementary error function `1 - erf(x)`, accurate in the tails.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let a = x.abs();
    let negative = x < 0.0;
    if a < 0.84375 {
        let t = if a < TINY {
            a
        } else {
            let z = a * a;
            let y = horner(&PP, z) / horner(&QQ, z);
            if a < 0.25 {
                a + a * y
            } else {
                0.5 + (a * y + (a - 0.5))
            }
        };
        return if negative { 1.0 + t } else { 1.0 - t };
    }
    if a < 1.25 {
        let s = a - 1.0;
        let p = horner(&PA, s) / horner(&QA, s);
        return if negative { 1.0 + ERX + p } else { 1.0 - ERX - p };
    }
    if a < 28.0 {
        if negative && a > 6.0 {
            return 2.0;
        }
        let r = erfc_tail(a);
        return if negative { 2.0 - r } else { r };
    }
    if negative {
        2.0
    } else {
        0.0
    }
}

/// Inverse of [`erf`] on the open interval `(-1, 1)`.
///
/// A single-precision rational guess is refined by Halley steps on `erf`
/// (or on `erfc` when `|p| >= 0.5`, where the complement carries the
/// information), falling back to bisection whenever a step leaves the
/// current bracket.
pub fn erf_inv(p: f64) -> Result<f64> {
    if !(p > -1.0 && p < 1.0) {
        return Err(invalid("p", format!("erf_inv needs p in (-1, 1), got {p}")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    Ok(erf_inv_positive(p.abs()).copysign(p))
}

fn erf_inv_positive(a: f64) -> f64 {
    let complement = 1.0 - a;
    let residual = |x: f64| {
        if a < 0.5 {
            erf(x) - a
        } else {
            complement - erfc(x)
        }
    };

    let mut x = initial_guess(a);
    // erf(6) rounds to 1, so the root of any representable a < 1 lies below.
    let (mut lo, mut hi) = (0.0_f64, 6.0_f64);
    for _ in 0..200 {
        let r = residual(x);
        if r == 0.0 {
            return x;
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let slope = FRAC_2_SQRT_PI * (-x * x).exp();
        let newton = r / slope;
        let step = newton / (1.0 + x * newton);
        let mut next = x - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * next.abs() {
            return next;
        }
        x = next;
    }
    x
}

/// Giles' single-precision approximation, used only as a starting point.
fn initial_guess(a: f64) -> f64 {
    let w = -((1.0 - a) * (1.0 + a)).ln();
    let p = if w < 5.0 {
        let w = w - 2.5;
        horner(
            &[
                1.50140941,
                0.246640727,
                -0.00417768164,
                -0.00125372503,
                0.00021858087,
                -4.39150654e-06,
                -3.5233877e-06,
                3.43273939e-07,
                2.81022636e-08,
            ],
            w,
        )
    } else {
        let w = w.sqrt() - 3.0;
        horner(
            &[
                2.83297682,
                1.00167406,
                0.00943887047,
                -0.0076224613,
                0.00573950773,
                -0.00367342844,
                0.00134934322,
                0.000100950558,
                -0.000200214257,
            ],
            w,
        )
    };
    (p * a).clamp(0.0, 6.0)
}
