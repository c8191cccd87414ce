//! Sampling audit of the irrational direction dense condition.
//!
//! The audit classifies outward normals at equally spaced boundary points.
//! It can refute the condition (a run of rational normals is a flat facet)
//! but never prove it.

use super::direction::{classify_direction, Rationality, DEFAULT_TOL};
use super::domain::DomainSpec;
use crate::error::{domain, Result};
use serde::{Deserialize, Serialize};

/// Runs of this many consecutive rational samples with the same normal
/// are reported as flat facets.
pub const MIN_FACET_SAMPLES: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalPoint {
    pub index: usize,
    pub s: f64,
    pub x: Vec<f64>,
    pub m: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalInterval {
    pub s_start: f64,
    pub s_end: f64,
    pub samples: usize,
    pub m: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegeneratePoint {
    pub index: usize,
    pub s: f64,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IddcVerdict {
    IddcPlausible,
    NotIddc,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IddcAudit {
    pub samples: usize,
    pub max_denominator: i64,
    pub rational_fraction: f64,
    pub rational_points: Vec<RationalPoint>,
    pub rational_intervals: Vec<RationalInterval>,
    pub degenerate: Vec<DegeneratePoint>,
    pub verdict: IddcVerdict,
    pub note: String,
}

pub fn iddc_audit(dom: &DomainSpec, samples: usize, max_denominator: i64) -> Result<IddcAudit> {
    if samples == 0 {
        return domain("iddc_audit needs at least one sample");
    }
    dom.validate()?;
    let per = dom.perimeter()?;
    let mut rational_points = Vec::new();
    let mut degenerate = Vec::new();
    // per-sample integer normal, None when irrational or degenerate
    let mut class: Vec<Option<Vec<i64>>> = Vec::with_capacity(samples);
    for k in 0..samples {
        let s = per * k as f64 / samples as f64;
        let bp = match dom.boundary_point_at(s) {
            Ok(bp) => bp,
            Err(e) => {
                degenerate.push(DegeneratePoint {
                    index: k,
                    s,
                    detail: e.to_string(),
                });
                class.push(None);
                continue;
            }
        };
        let d = classify_direction(&bp.normal, DEFAULT_TOL, max_denominator)?;
        match d.class {
            Rationality::Rational { m } => {
                rational_points.push(RationalPoint {
                    index: k,
                    s,
                    x: bp.x.clone(),
                    m: m.clone(),
                });
                class.push(Some(m));
            }
            Rationality::Irrational => class.push(None),
        }
    }
    let rational_intervals = runs(&class, per);
    let verdict = if rational_intervals.is_empty() {
        IddcVerdict::IddcPlausible
    } else {
        IddcVerdict::NotIddc
    };
    Ok(IddcAudit {
        samples,
        max_denominator,
        rational_fraction: rational_points.len() as f64 / samples as f64,
        rational_points,
        rational_intervals,
        degenerate,
        verdict,
        note: "sampling heuristic: can refute the condition via flat facets, cannot prove it".into(),
    })
}

/// Maximal cyclic runs of equal rational normals of length at least
/// [`MIN_FACET_SAMPLES`].
fn runs(class: &[Option<Vec<i64>>], per: f64) -> Vec<RationalInterval> {
    let n = class.len();
    if n == 0 {
        return vec![];
    }
    let same = |a: usize, b: usize| class[a].is_some() && class[a] == class[b];
    if (0..n).all(|k| same(k, 0)) {
        return vec![RationalInterval {
            s_start: 0.0,
            s_end: per,
            samples: n,
            m: class[0].clone().unwrap(),
        }];
    }
    // start at a run boundary so runs do not straddle the wrap
    let start = (0..n).find(|&k| !same(k, (k + n - 1) % n)).unwrap();
    let step = per / n as f64;
    let mut out = Vec::new();
    let mut k = 0;
    while k < n {
        let i = (start + k) % n;
        let mut len = 1;
        while len < n && same((start + k + len) % n, i) {
            len += 1;
        }
        if let Some(m) = &class[i] {
            if len >= MIN_FACET_SAMPLES {
                out.push(RationalInterval {
                    s_start: i as f64 * step,
                    s_end: ((i + len - 1) % n) as f64 * step,
                    samples: len,
                    m: m.clone(),
                });
            }
        }
        k += len;
    }
    out.sort_by(|a, b| a.s_start.partial_cmp(&b.s_start).unwrap());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_is_plausible() {
        let d = DomainSpec::Disk {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        let a = iddc_audit(&d, 360, 100).unwrap();
        assert!(a.rational_fraction <= 0.2);
        assert!(a.rational_intervals.is_empty());
        assert_eq!(a.verdict, IddcVerdict::IddcPlausible);
        // axes and diagonals at least
        assert!(a.rational_points.len() >= 8);
    }

    #[test]
    fn half_disk_has_flat_bottom_facet() {
        let d = DomainSpec::HalfDiskFlatBottom {
            center: [0.0, 1.0],
            radius: 1.0,
        };
        let a = iddc_audit(&d, 200, 100).unwrap();
        assert_eq!(a.verdict, IddcVerdict::NotIddc);
        assert!(a.rational_intervals.iter().any(|iv| iv.m == vec![0, -1]));
    }

    #[test]
    fn square_has_four_facets() {
        let d = DomainSpec::Rectangle {
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 1.0],
        };
        let a = iddc_audit(&d, 100, 100).unwrap();
        assert_eq!(a.rational_intervals.len(), 4);
        let mut ms: Vec<_> = a.rational_intervals.iter().map(|iv| iv.m.clone()).collect();
        ms.sort();
        assert_eq!(ms, vec![vec![-1, 0], vec![0, -1], vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn zero_samples_rejected() {
        let d = DomainSpec::Disk {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        assert!(iddc_audit(&d, 0, 100).is_err());
    }
}
