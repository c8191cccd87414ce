//! Unit directions and their rationality class at finite precision.

use crate::error::{domain, Result};
use serde::{Deserialize, Serialize};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_DENOMINATOR: i64 = 10_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "lowercase")]
pub enum Rationality {
    /// Minimal integer representative (gcd 1), same orientation as `nu`.
    Rational {
        m: Vec<i64>,
    },
    Irrational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub nu: Vec<f64>,
    #[serde(flatten)]
    pub class: Rationality,
    pub tol: f64,
    pub max_denominator: i64,
}

impl Direction {
    pub fn dim(&self) -> usize {
        self.nu.len()
    }

    pub fn is_rational(&self) -> bool {
        matches!(self.class, Rationality::Rational { .. })
    }

    pub fn integer_representative(&self) -> Option<&[i64]> {
        match &self.class {
            Rationality::Rational { m } => Some(m),
            Rationality::Irrational => None,
        }
    }

    /// Index of the component with the largest magnitude (first on ties).
    pub fn pivot(&self) -> usize {
        pivot_index(&self.nu)
    }

    pub fn negated(&self) -> Direction {
        Direction {
            nu: self.nu.iter().map(|x| -x).collect(),
            class: match &self.class {
                Rationality::Rational { m } => Rationality::Rational {
                    m: m.iter().map(|x| -x).collect(),
                },
                Rationality::Irrational => Rationality::Irrational,
            },
            tol: self.tol,
            max_denominator: self.max_denominator,
        }
    }
}

pub(crate) fn pivot_index(v: &[f64]) -> usize {
    let mut p = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[p].abs() {
            p = i;
        }
    }
    p
}

/// Smallest-denominator continued-fraction convergent of `x` within `tol`,
/// subject to `denominator <= max_den`.
fn convergent_within(x: f64, tol: f64, max_den: i64) -> Option<(i64, i64)> {
    let sign = if x < 0.0 { -1 } else { 1 };
    let mut rest = x.abs();
    let (mut h1, mut h2) = (1i64, 0i64);
    let (mut k1, mut k2) = (0i64, 1i64);
    for _ in 0..64 {
        let a = rest.floor();
        if a > i64::MAX as f64 / 4.0 {
            return None;
        }
        let a = a as i64;
        let h = a.checked_mul(h1)?.checked_add(h2)?;
        let k = a.checked_mul(k1)?.checked_add(k2)?;
        if k > max_den {
            return None;
        }
        if (x.abs() - h as f64 / k as f64).abs() <= tol {
            return Some((sign * h, k));
        }
        let frac = rest - a as f64;
        if frac < 1e-300 {
            return None;
        }
        rest = 1.0 / frac;
        h2 = h1;
        h1 = h;
        k2 = k1;
        k1 = k;
    }
    None
}

pub(crate) fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn lcm(a: i64, b: i64) -> Option<i64> {
    if a == 0 || b == 0 {
        return Some(0);
    }
    (a / gcd(a, b)).checked_mul(b)
}

/// Classifies `v` as rational (with minimal integer representative) or
/// irrational relative to `tol` and `max_denominator`.
///
/// Ratios of each component to the dominant one are expanded in continued
/// fractions; the first convergent within `tol` fixes that component, and the
/// assembled integer vector must align with `v` within `tol` (Euclidean).
pub fn classify_direction(v: &[f64], tol: f64, max_denominator: i64) -> Result<Direction> {
    let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if v.is_empty() || len == 0.0 || !len.is_finite() {
        return domain("cannot classify a zero or non-finite vector");
    }
    if max_denominator < 1 {
        return domain("max_denominator must be >= 1");
    }
    if tol <= 0.0 {
        return domain("rationality tolerance must be positive");
    }
    let nu: Vec<f64> = v.iter().map(|x| x / len).collect();
    let p = pivot_index(&nu);
    let class = rational_representative(&nu, p, tol, max_denominator)
        .map(|m| Rationality::Rational { m })
        .unwrap_or(Rationality::Irrational);
    Ok(Direction {
        nu,
        class,
        tol,
        max_denominator,
    })
}

fn rational_representative(nu: &[f64], p: usize, tol: f64, max_den: i64) -> Option<Vec<i64>> {
    let n = nu.len();
    let mut fracs = vec![(0i64, 1i64); n];
    let mut q = 1i64;
    for i in 0..n {
        if i == p {
            continue;
        }
        let r = nu[i] / nu[p];
        let (num, den) = convergent_within(r, tol, max_den)?;
        fracs[i] = (num, den);
        q = lcm(q, den)?;
        if q > max_den {
            return None;
        }
    }
    let s = if nu[p] < 0.0 { -1 } else { 1 };
    let mut m = vec![0i64; n];
    for i in 0..n {
        m[i] = if i == p {
            s * q
        } else {
            s * fracs[i].0 * (q / fracs[i].1)
        };
    }
    let g = m.iter().fold(0i64, |acc, &x| gcd(acc, x));
    for x in m.iter_mut() {
        *x /= g;
    }
    if m.iter().any(|x| x.abs() > max_den) {
        return None;
    }
    let ml = m.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    let err = m
        .iter()
        .zip(nu)
        .map(|(&a, b)| (a as f64 / ml - b).powi(2))
        .sum::<f64>()
        .sqrt();
    (err <= tol).then_some(m)
}

/// Result of the `D_delta` membership test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaMembership {
    pub member: bool,
    /// Set for irrational input, which is admitted without a test.
    pub vacuous: bool,
}

/// Membership of a rational direction in `D_delta`: the minimal integer
/// representative has `max_i |m_i| > 1/delta`. Irrational directions are
/// admitted vacuously.
///
/// The sign convention is not fixed by the definition it encodes, so the
/// absolute value of the reduced representative is used.
pub fn in_d_delta(d: &Direction, delta: f64) -> Result<DeltaMembership> {
    if !(delta > 0.0) {
        return domain(format!("delta must be positive, got {delta}"));
    }
    Ok(match &d.class {
        Rationality::Irrational => DeltaMembership {
            member: true,
            vacuous: true,
        },
        Rationality::Rational { m } => {
            let mx = m.iter().map(|x| x.abs()).max().unwrap_or(0) as f64;
            DeltaMembership {
                member: mx > 1.0 / delta,
                vacuous: false,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m_of(d: &Direction) -> Vec<i64> {
        d.integer_representative().expect("rational").to_vec()
    }

    #[test]
    fn three_four_five() {
        let d = classify_direction(&[0.6, 0.8], 1e-9, DEFAULT_MAX_DENOMINATOR).unwrap();
        assert_eq!(m_of(&d), vec![3, 4]);
    }

    #[test]
    fn diagonal_is_one_one() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let d = classify_direction(&[s, s], 1e-9, DEFAULT_MAX_DENOMINATOR).unwrap();
        assert_eq!(m_of(&d), vec![1, 1]);
        let d = classify_direction(&[-s, s], 1e-9, DEFAULT_MAX_DENOMINATOR).unwrap();
        assert_eq!(m_of(&d), vec![-1, 1]);
    }

    #[test]
    fn root_two_slope() {
        let v = [1.0, 2f64.sqrt()];
        let d = classify_direction(&v, 1e-9, 10_000).unwrap();
        assert_eq!(d.class, Rationality::Irrational);
        // At a cap of 10^6 the convergent 13860/19601 already aligns within 1e-9.
        let d = classify_direction(&v, 1e-9, 1_000_000).unwrap();
        assert_eq!(m_of(&d), vec![13860, 19601]);
    }

    #[test]
    fn axes_and_three_dimensions() {
        let d = classify_direction(&[0.0, -2.0], 1e-9, 100).unwrap();
        assert_eq!(m_of(&d), vec![0, -1]);
        let d = classify_direction(&[1.0, 2.0, 2.0], 1e-9, 100).unwrap();
        assert_eq!(m_of(&d), vec![1, 2, 2]);
        let d = classify_direction(&[1.0, 2f64.sqrt(), 3f64.sqrt()], 1e-9, 10_000).unwrap();
        assert!(!d.is_rational());
    }

    #[test]
    fn zero_vector_is_an_error() {
        assert!(classify_direction(&[0.0, 0.0], 1e-9, 10).is_err());
        assert!(classify_direction(&[1.0, 0.0], 1e-9, 0).is_err());
    }

    #[test]
    fn d_delta_examples() {
        let d34 = classify_direction(&[3.0, 4.0], 1e-9, 100).unwrap();
        assert!(in_d_delta(&d34, 0.5).unwrap().member);
        let d11 = classify_direction(&[1.0, 1.0], 1e-9, 100).unwrap();
        assert!(!in_d_delta(&d11, 0.5).unwrap().member);
        let d10 = classify_direction(&[1.0, 0.0], 1e-9, 100).unwrap();
        assert!(!in_d_delta(&d10, 0.9).unwrap().member);
        let irr = classify_direction(&[1.0, 2f64.sqrt()], 1e-9, 100).unwrap();
        let r = in_d_delta(&irr, 0.1).unwrap();
        assert!(r.member && r.vacuous);
        assert!(in_d_delta(&d34, 0.0).is_err());
    }

    #[test]
    fn json_field_names() {
        let d = classify_direction(&[3.0, 4.0], 1e-9, 100).unwrap();
        let v = serde_json::to_value(&d).unwrap();
        assert_eq!(v["class"], "rational");
        assert_eq!(v["m"], serde_json::json!([3, 4]));
        assert!(v["nu"].is_array());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn scale_invariance(a in -50i64..50, b in -50i64..50, c in 0.01f64..100.0) {
                prop_assume!(a != 0 || b != 0);
                let v = [a as f64, b as f64];
                let w = [c * a as f64, c * b as f64];
                let d1 = classify_direction(&v, 1e-9, 1000).unwrap();
                let d2 = classify_direction(&w, 1e-9, 1000).unwrap();
                prop_assert_eq!(d1.class, d2.class);
            }

            #[test]
            fn integer_vectors_recover_reduced_form(a in -40i64..40, b in -40i64..40, k in 1i64..5) {
                prop_assume!(a != 0 || b != 0);
                let d = classify_direction(&[(k * a) as f64, (k * b) as f64], 1e-9, 1000).unwrap();
                let g = gcd(a, b);
                prop_assert_eq!(d.integer_representative().unwrap().to_vec(), vec![a / g, b / g]);
            }
        }
    }
}
