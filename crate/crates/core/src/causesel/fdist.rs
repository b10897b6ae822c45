use super::CauseError;

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

/// Natural log of the gamma function for positive arguments.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
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

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
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

/// `ln Γ(x + a) - ln Γ(x)`, accurate when `x` dwarfs `a`.
fn ln_gamma_ratio(x: f64, a: f64) -> f64 {
    if x < 1e3 {
        return ln_gamma(x + a) - ln_gamma(x);
    }
    let tail = |t: f64| {
        let r = 1.0 / (t * t);
        (1.0 / 12.0 - r * (1.0 / 360.0 - r / 1260.0)) / t
    };
    (x - 0.5) * (a / x).ln_1p() + a * (x + a).ln() - a + tail(x + a) - tail(x)
}

fn ln_beta(a: f64, b: f64) -> f64 {
    let (small, large) = if a < b { (a, b) } else { (b, a) };
    ln_gamma(small) - ln_gamma_ratio(large, small)
}

/// Regularized incomplete beta I_x(a, b).
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    inc_beta_split(a, b, x, 1.0 - x)
}

/// I_x(a, b) with the complement `y = 1 - x` supplied exactly.
fn inc_beta_split(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let front = (a * x.ln() + b * y.ln() - ln_beta(a, b)).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, y) / b
    }
}

/// CDF of the F distribution with `d1`, `d2` degrees of freedom.
pub fn f_cdf(x: f64, d1: f64, d2: f64) -> Result<f64, CauseError> {
    if !(x >= 0.0) || !(d1 >= 1.0) || !(d2 >= 1.0) || !d1.is_finite() || !d2.is_finite() {
        return Err(CauseError::Domain(format!("f_cdf({x}, {d1}, {d2})")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let s = d1 * x + d2;
    Ok(inc_beta_split(0.5 * d1, 0.5 * d2, d1 * x / s, d2 / s))
}

/// Upper tail `1 - f_cdf`, computed without cancellation.
pub fn f_sf(x: f64, d1: f64, d2: f64) -> Result<f64, CauseError> {
    f_cdf(x, d1, d2)?;
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let s = d1 * x + d2;
    Ok(inc_beta_split(0.5 * d2, 0.5 * d1, d2 / s, d1 * x / s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, FisherSnedecor};

    #[test]
    fn ln_gamma_integers() {
        let mut fact: f64 = 1.0;
        for n in 1..20 {
            assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-12, "n={n}");
            fact *= n as f64;
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn fixed_points() {
        assert_eq!(f_cdf(0.0, 3.0, 7.0).unwrap(), 0.0);
        for d in [1.0, 2.0, 5.0, 30.0, 497.0] {
            assert!((f_cdf(1.0, d, d).unwrap() - 0.5).abs() < 1e-12, "d={d}");
        }
    }

    #[test]
    fn chi_square_limit() {
        // F(1, large) approaches chi-square(1); P(chi2_1 <= 3.84) = 0.94996
        let p = f_cdf(3.84, 1.0, 1000.0).unwrap();
        assert!((p - 0.9499).abs() < 1e-3, "{p}");
        let p = f_cdf(3.84, 1.0, 1e9).unwrap();
        let chi = statrs::distribution::ChiSquared::new(1.0).unwrap().cdf(3.84);
        assert!((p - chi).abs() < 1e-6, "{p} vs {chi}");
        for d1 in [2.0, 5.0, 12.0] {
            let chi = statrs::distribution::ChiSquared::new(d1).unwrap();
            for x in [0.3, 1.0, 2.2] {
                let p = f_cdf(x, d1, 1e10).unwrap();
                assert!((p - chi.cdf(d1 * x)).abs() < 1e-6, "d1 {d1} x {x}: {p}");
            }
        }
    }

    #[test]
    fn rejects_bad_domain() {
        assert!(f_cdf(-1.0, 1.0, 1.0).is_err());
        assert!(f_cdf(1.0, 0.5, 1.0).is_err());
        assert!(f_cdf(f64::NAN, 2.0, 2.0).is_err());
    }

    #[test]
    fn agrees_with_reference_implementation() {
        for &(d1, d2) in &[(1.0, 1.0), (3.0, 493.0), (3.0, 20.0), (10.0, 4.0), (2.5, 7.5)] {
            let reference = FisherSnedecor::new(d1, d2).unwrap();
            for &x in &[0.01, 0.3, 1.0, 2.2, 5.0, 40.0] {
                let ours = f_cdf(x, d1, d2).unwrap();
                assert!((ours - reference.cdf(x)).abs() < 1e-10, "F({d1},{d2}) at {x}");
            }
        }
    }

    proptest! {
        #[test]
        fn symmetry_identity(x in 1e-3f64..1e3, d1 in 1u32..60, d2 in 1u32..600) {
            let (d1, d2) = (d1 as f64, d2 as f64);
            let lhs = f_cdf(x, d1, d2).unwrap();
            let rhs = 1.0 - f_cdf(1.0 / x, d2, d1).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10);
            prop_assert!((f_sf(x, d1, d2).unwrap() - (1.0 - lhs)).abs() < 1e-10);
        }

        #[test]
        fn monotone_in_x(a in 0.0f64..50.0, b in 0.0f64..50.0, d1 in 1u32..20, d2 in 1u32..200) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let (d1, d2) = (d1 as f64, d2 as f64);
            prop_assert!(f_cdf(lo, d1, d2).unwrap() <= f_cdf(hi, d1, d2).unwrap() + 1e-15);
        }
    }
}
