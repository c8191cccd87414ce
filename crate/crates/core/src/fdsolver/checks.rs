//! Discrete comparison principle and oscillation decay diagnostics.

use super::grid::{GridField, NodeKind};
use super::scheme::{DiscreteProblem, MonotoneScheme};
use crate::error::{domain, Result};
use crate::linalg::dist;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `max residual(u)`: must be ≤ tol for `u` to be a supersolution.
    pub super_violation: f64,
    /// `max −residual(v)`: must be ≤ tol for `v` to be a subsolution.
    pub sub_violation: f64,
    /// `min (u − v)` over boundary nodes.
    pub boundary_margin: f64,
    /// `min (u − v)` over interior nodes.
    pub interior_margin: f64,
    pub hypotheses_hold: bool,
    /// Conclusion `u ≥ v − tol` on the interior.
    pub conclusion_holds: bool,
    /// False only when the hypotheses hold and the conclusion fails.
    pub consistent: bool,
}

/// Checks the discrete comparison principle for `u` (super) and `v` (sub).
pub fn comparison_check(p: &DiscreteProblem, u: &GridField, v: &GridField, tol: f64) -> Result<ComparisonReport> {
    if u.len() != p.grid.len() || v.len() != p.grid.len() {
        return domain("fields do not live on the problem grid");
    }
    let n = p.active().len();
    let mut sup_v = f64::NEG_INFINITY;
    let mut sub_v = f64::NEG_INFINITY;
    for k in 0..n {
        sup_v = sup_v.max(p.residual(&u.values, k));
        sub_v = sub_v.max(-p.residual(&v.values, k));
    }
    let mut bm = f64::INFINITY;
    let mut im = f64::INFINITY;
    for k in 0..p.grid.len() {
        let d = u.values[k] - v.values[k];
        match p.grid.mask[k] {
            NodeKind::Boundary => bm = bm.min(d),
            NodeKind::Interior => im = im.min(d),
            NodeKind::Exterior => {}
        }
    }
    let hyp = sup_v <= tol && sub_v <= tol && bm >= -tol;
    let concl = im >= -tol;
    Ok(ComparisonReport {
        super_violation: sup_v,
        sub_violation: sub_v,
        boundary_margin: bm,
        interior_margin: im,
        hypotheses_hold: hyp,
        conclusion_holds: concl,
        consistent: !hyp || concl,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OscillationProbe {
    pub radii: Vec<f64>,
    pub osc: Vec<f64>,
    /// Fitted contraction factor per halving of the radius; 0 when the
    /// field is constant on the largest ball.
    pub gamma: f64,
}

/// Oscillation of `u` over concentric balls and the fitted decay per
/// halving.
pub fn oscillation_decay_probe(u: &GridField, center: &[f64], radii: &[f64]) -> Result<OscillationProbe> {
    if radii.len() < 2 {
        return domain("need at least two radii");
    }
    if center.len() != u.dim() || radii.iter().any(|r| !(*r > 0.0)) {
        return domain("bad probe center or radius");
    }
    let mut osc = Vec::with_capacity(radii.len());
    for &r in radii {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..u.len() {
            if u.mask[k] == NodeKind::Exterior {
                continue;
            }
            if dist(&u.position(k), center) <= r + 1e-12 {
                lo = lo.min(u.values[k]);
                hi = hi.max(u.values[k]);
            }
        }
        if lo > hi {
            return domain(format!("ball of radius {r} contains no grid node"));
        }
        osc.push(hi - lo);
    }
    let gamma = if osc.iter().any(|&o| o <= 1e-300) {
        0.0
    } else {
        // least-squares slope of log2 osc against log2 r
        let xs: Vec<f64> = radii.iter().map(|r| r.log2()).collect();
        let ys: Vec<f64> = osc.iter().map(|o| o.log2()).collect();
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        if sxx == 0.0 {
            return domain("radii must differ");
        }
        2f64.powf(-sxy / sxx)
    };
    Ok(OscillationProbe {
        radii: radii.to_vec(),
        osc,
        gamma,
    })
}

/// `min_∂ g ≤ u ≤ max_∂ g` on the interior, up to `tol`.
pub fn maximum_principle_holds(u: &GridField, tol: f64) -> bool {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..u.len() {
        if u.mask[k] == NodeKind::Boundary {
            lo = lo.min(u.values[k]);
            hi = hi.max(u.values[k]);
        }
    }
    (0..u.len())
        .filter(|&k| u.mask[k] == NodeKind::Interior)
        .all(|k| u.values[k] >= lo - tol && u.values[k] <= hi + tol)
}
