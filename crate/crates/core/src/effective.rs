//! Oscillating Dirichlet problems, boundary-layer matching, sampled `ḡ`,
//! envelopes `h±` and the sandwich `u⁻ ≤ u_ε ≤ u⁺` on a compact set.

use crate::barriers::exponent_exterior;
use crate::corrector::{corrector_record, estimate_gbar, StripParams};
use crate::error::{domain, Error, Result};
use crate::fdsolver::{
    discretize, solve_with, ConvergenceRecord, DiscreteProblem, GridField, NodeKind, SolveOptions, Stencil,
};
use crate::geometry::direction::{DEFAULT_MAX_DENOMINATOR, DEFAULT_TOL};
use crate::geometry::{classify_direction, in_d_delta, BoundaryPoint, CompactSet, DomainSpec};
use crate::linalg::{dist, SymMat};
use crate::operators::{
    effective_operator_estimate, CoefficientField, EllipticOperatorSpec, LocalOperator, OperatorKind, Sign,
    SourceAndBoundaryData,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Oscillation must be resolved by at least this many nodes per `ε`.
pub const NODES_PER_EPSILON: f64 = 8.0;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OscillatingProblem {
    pub domain: DomainSpec,
    pub epsilon: f64,
    pub operator: EllipticOperatorSpec,
    pub data: SourceAndBoundaryData,
}

impl OscillatingProblem {
    pub fn new(
        domain: DomainSpec,
        epsilon: f64,
        operator: EllipticOperatorSpec,
        data: SourceAndBoundaryData,
    ) -> Result<Self> {
        domain.validate()?;
        if domain.dim() != operator.dim {
            return crate::error::domain("operator and domain dimensions differ");
        }
        if !(epsilon > 0.0 && epsilon <= domain.diameter() / 10.0 + 1e-12) {
            return crate::error::domain(format!(
                "epsilon = {epsilon} must lie in (0, diameter/10 = {}]",
                domain.diameter() / 10.0
            ));
        }
        Ok(Self {
            domain,
            epsilon,
            operator,
            data,
        })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.domain.clone(), epsilon, self.operator.clone(), self.data.clone())
    }
}

#[derive(Clone, Debug)]
pub struct OscillatingSolution {
    pub epsilon: f64,
    pub field: GridField,
    pub record: ConvergenceRecord,
    pub sup: f64,
    /// `C ‖f‖ + ‖g‖` with `C = diam²/(2λ)`.
    pub bound: f64,
    pub bound_ok: bool,
}

fn options(tol: f64) -> SolveOptions {
    SolveOptions {
        tol,
        ..Default::default()
    }
}

/// Solves `(P_ε)` at spacing `h ≤ ε/8`.
pub fn solve_oscillating(p: &OscillatingProblem, h: f64, stencil_order: u8, tol: f64) -> Result<OscillatingSolution> {
    if !(h > 0.0) || h > p.epsilon / NODES_PER_EPSILON * (1.0 + 1e-12) {
        return Err(Error::Refused(format!(
            "h = {h} does not resolve epsilon = {} (need h <= epsilon/8)",
            p.epsilon
        )));
    }
    let dp = discretize(&p.operator, &p.domain, &p.data, h, stencil_order, p.epsilon)?;
    let (field, record) = solve_with(&dp, &options(tol))?;
    let mut gsup: f64 = 0.0;
    let mut sup: f64 = 0.0;
    for k in 0..field.len() {
        match field.mask[k] {
            NodeKind::Boundary => gsup = gsup.max(field.values[k].abs()),
            NodeKind::Interior => sup = sup.max(field.values[k].abs()),
            NodeKind::Exterior => {}
        }
    }
    let fsup = dp.source.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let d = p.domain.diameter();
    let bound = d * d / (2.0 * p.operator.lambda) * fsup + gsup;
    Ok(OscillatingSolution {
        epsilon: p.epsilon,
        field,
        record,
        sup,
        bound,
        bound_ok: sup <= bound * (1.0 + 1e-9) + 1e-12,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryLayerReport {
    pub epsilon: f64,
    pub x0: Vec<f64>,
    pub nu: Vec<f64>,
    pub p: f64,
    pub q: f64,
    /// `ε^(q−1)`, radius of the comparison ball in `y` units.
    pub radius_y: f64,
    pub points: usize,
    pub deviation: f64,
    /// `ε^(2p−1)`.
    pub predicted_scale: f64,
    /// `deviation / predicted_scale`.
    pub c_estimate: f64,
    pub flagged: bool,
}

/// Compares `U_ε(y) = u_ε(εy)` with the strip corrector at `x0` on
/// `ε⁻¹D ∩ B_{ε^(q−1)}(y₀)`.
pub fn boundary_layer_compare(
    p: &OscillatingProblem,
    u: &OscillatingSolution,
    x0: &[f64],
    pq: (f64, f64),
    params: &StripParams,
) -> Result<BoundaryLayerReport> {
    let (pp, qq) = pq;
    if !(0.5 < pp && pp < qq && qq < 1.0 && 2.0 * pp - 1.0 <= qq - pp + 1e-12) {
        return domain("need 1/2 < p < q < 1 and 2p - 1 <= q - p");
    }
    let eps = p.epsilon;
    let nout = p.domain.outward_normal(x0)?;
    let nu: Vec<f64> = nout.iter().map(|v| -v).collect();
    let (rec, sol, prob) = corrector_record(x0, &nu, eps, params, &p.operator, &p.data)?;
    let radius_y = eps.powf(qq - 1.0);
    let y0 = &prob.y0_eps;
    let qt = prob.frame.transpose();
    let mut dev: f64 = 0.0;
    let mut points = 0usize;
    let f = &u.field;
    for k in 0..f.len() {
        if f.mask[k] == NodeKind::Exterior {
            continue;
        }
        let x = f.position(k);
        if p.domain.level_set(&x) > 0.0 || dist(&x, x0) > eps * radius_y {
            continue;
        }
        let dy: Vec<f64> = x.iter().zip(y0).map(|(a, b)| a / eps - b).collect();
        let xi = qt.apply(&dy);
        if xi[xi.len() - 1] < -1e-12 {
            continue;
        }
        if let Some(w) = sol.field.interpolate(&xi) {
            dev = dev.max((f.values[k] - w).abs());
            points += 1;
        }
    }
    if points == 0 {
        return domain("no grid node in the comparison ball; refine h");
    }
    let scale = eps.powf(2.0 * pp - 1.0);
    Ok(BoundaryLayerReport {
        epsilon: eps,
        x0: x0.to_vec(),
        nu: prob.nu.nu.clone(),
        p: pp,
        q: qq,
        radius_y,
        points,
        deviation: dev,
        predicted_scale: scale,
        c_estimate: dev / scale,
        flagged: rec.flagged,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleClass {
    Irrational,
    /// Rational normal in `D_δ`.
    RationalInDelta,
    /// Rational normal outside `D_δ`; no estimate is made.
    Excluded,
    Failed,
}

impl SampleClass {
    pub fn label(self) -> &'static str {
        match self {
            SampleClass::Irrational => "irrational",
            SampleClass::RationalInDelta => "rational_in_delta",
            SampleClass::Excluded => "excluded",
            SampleClass::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvelopeSample {
    pub s: f64,
    pub x: Vec<f64>,
    pub inward: Vec<f64>,
    pub class: SampleClass,
    pub m: Option<Vec<i64>>,
    /// Common value when `ḡ* = ḡ_*` at tolerance.
    pub gbar: Option<f64>,
    /// Largest and smallest ray limit over the `ε` list.
    pub upper: f64,
    pub lower: f64,
    pub err: f64,
    pub flagged: bool,
    pub note: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExcludedPoint {
    pub z: Vec<f64>,
    pub s: f64,
    pub m: Vec<i64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExcludedInterval {
    pub s_start: f64,
    pub s_end: f64,
    pub m: Vec<i64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryEnvelope {
    pub samples: Vec<EnvelopeSample>,
    pub excluded_points: Vec<ExcludedPoint>,
    pub excluded_intervals: Vec<ExcludedInterval>,
    pub delta: f64,
    pub perimeter: f64,
    /// `‖g‖_∞` over the boundary and one period cell.
    pub g_sup: f64,
    pub mollifier_radius: Option<f64>,
    pub exclusion_radius: Option<f64>,
    /// Samples within `near_rational_radius / max|m|` of an excluded point
    /// are not used.
    #[serde(default)]
    pub near_rational_radius: f64,
    pub slack_plus: f64,
    pub slack_minus: f64,
    /// `sup_K v` of the bump correction.
    pub v_sup_k: Option<f64>,
    pub v_budget_met: Option<bool>,
    pub completed: bool,
}

/// Primitive integer vectors with `max |m_i| ≤ 1/δ` (planar, one per line
/// orientation pair counted with both signs).
pub fn bad_directions(delta: f64) -> Result<Vec<[i64; 2]>> {
    if !(delta > 0.0) {
        return domain("delta must be positive");
    }
    let k = (1.0 / delta + 1e-12).floor() as i64;
    let mut out = Vec::new();
    for a in -k..=k {
        for b in -k..=k {
            if (a, b) != (0, 0) && gcd(a.abs(), b.abs()) == 1 {
                out.push([a, b]);
            }
        }
    }
    Ok(out)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

const SCAN_SAMPLES: usize = 4096;

/// Boundary points and facets of a planar domain whose inward normal is a
/// rational direction outside `D_δ`.
pub fn excluded_set(dom: &DomainSpec, delta: f64) -> Result<(Vec<ExcludedPoint>, Vec<ExcludedInterval>)> {
    let per = dom.perimeter()?;
    let scan = dom.boundary_samples(SCAN_SAMPLES)?;
    let dirs = bad_directions(delta)?;
    let mut points = Vec::new();
    let mut intervals = Vec::new();
    for m in dirs {
        let l = ((m[0] * m[0] + m[1] * m[1]) as f64).sqrt();
        let mh = [m[0] as f64 / l, m[1] as f64 / l];
        // inward normal is −outward
        let cross = |bp: &BoundaryPoint| -bp.normal[0] * mh[1] + bp.normal[1] * mh[0];
        let dot = |bp: &BoundaryPoint| -bp.normal[0] * mh[0] - bp.normal[1] * mh[1];
        let n = scan.len();
        let on: Vec<bool> = scan.iter().map(|bp| cross(bp).abs() < 1e-12 && dot(bp) > 0.0).collect();
        let mut k = 0;
        let mut seen = vec![false; n];
        while k < n {
            if on[k] && on[(k + 1) % n] && !seen[k] {
                let mut a = k;
                while on[(a + n - 1) % n] && (a + n - 1) % n != k {
                    a = (a + n - 1) % n;
                }
                let mut b = k;
                while on[(b + 1) % n] && (b + 1) % n != a {
                    b = (b + 1) % n;
                }
                let mut j = a;
                loop {
                    seen[j] = true;
                    if j == b {
                        break;
                    }
                    j = (j + 1) % n;
                }
                intervals.push(ExcludedInterval {
                    s_start: scan[a].s,
                    s_end: if scan[b].s >= scan[a].s {
                        scan[b].s
                    } else {
                        scan[b].s + per
                    },
                    m: m.to_vec(),
                });
            }
            k += 1;
        }
        for k in 0..n {
            let (p0, p1) = (&scan[k], &scan[(k + 1) % n]);
            if seen[k] || seen[(k + 1) % n] {
                continue;
            }
            let (c0, c1) = (cross(p0), cross(p1));
            if on[k] {
                points.push(ExcludedPoint {
                    z: p0.x.clone(),
                    s: p0.s,
                    m: m.to_vec(),
                });
                continue;
            }
            if dot(p0) <= 0.0 || dot(p1) <= 0.0 || on[(k + 1) % n] || c0 * c1 >= 0.0 {
                continue;
            }
            let (mut a, mut b) = (p0.s, if p1.s > p0.s { p1.s } else { p1.s + per });
            let ca = c0;
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                let cm = cross(&dom.boundary_point_at(mid)?);
                if cm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if (cm > 0.0) == (ca > 0.0) {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let bp = dom.boundary_point_at(0.5 * (a + b))?;
            points.push(ExcludedPoint {
                z: bp.x,
                s: bp.s,
                m: m.to_vec(),
            });
        }
    }
    points.sort_by(|a, b| a.s.total_cmp(&b.s));
    intervals.sort_by(|a, b| a.s_start.total_cmp(&b.s_start));
    Ok((points, intervals))
}

/// `sup |g(x, y)|` over boundary samples and a cell grid.
pub fn data_sup(dom: &DomainSpec, data: &SourceAndBoundaryData) -> Result<f64> {
    let n = dom.dim();
    let xs: Vec<Vec<f64>> = if n == 2 {
        dom.boundary_samples(64)?.into_iter().map(|b| b.x).collect()
    } else {
        vec![dom.center_point()]
    };
    let q: usize = if n == 2 { 32 } else { 12 };
    let period: Vec<f64> = (0..n).map(|i| data.period.get(i).cloned().unwrap_or(1.0)).collect();
    let mut best: f64 = 0.0;
    let mut y = vec![0.0; n];
    for x in &xs {
        for code in 0..q.pow(n as u32) {
            let mut c = code;
            for i in 0..n {
                y[i] = (c % q) as f64 / q as f64 * period[i];
                c /= q;
            }
            best = best.max(data.g(x, &y).abs());
        }
    }
    Ok(best)
}

/// Estimates `ḡ` at the given boundary points; rational normals outside
/// `D_δ` are marked excluded, per-point failures are recorded.
pub fn sample_gbar_on_boundary(
    p: &OscillatingProblem,
    points: &[BoundaryPoint],
    eps_list: &[f64],
    params: &StripParams,
    delta: f64,
) -> Result<BoundaryEnvelope> {
    if p.domain.dim() != 2 {
        return domain("boundary envelopes are implemented for planar domains");
    }
    let (excluded_points, excluded_intervals) = excluded_set(&p.domain, delta)?;
    let samples: Vec<EnvelopeSample> = points
        .par_iter()
        .map(|bp| {
            let inward: Vec<f64> = bp.normal.iter().map(|v| -v).collect();
            let mut s = EnvelopeSample {
                s: bp.s,
                x: bp.x.clone(),
                inward: inward.clone(),
                class: SampleClass::Failed,
                m: None,
                gbar: None,
                upper: f64::NAN,
                lower: f64::NAN,
                err: f64::NAN,
                flagged: false,
                note: String::new(),
            };
            let d = match classify_direction(&inward, DEFAULT_TOL, DEFAULT_MAX_DENOMINATOR) {
                Ok(d) => d,
                Err(e) => {
                    s.note = e.to_string();
                    return s;
                }
            };
            s.m = d.integer_representative().map(|m| m.to_vec());
            let member = in_d_delta(&d, delta).map(|r| r.member).unwrap_or(false);
            if !member {
                s.class = SampleClass::Excluded;
                s.note = "rational normal outside D_delta".into();
                return s;
            }
            match estimate_gbar(&bp.x, &inward, eps_list, params, &p.operator, &p.data) {
                Ok(g) => {
                    s.class = if d.is_rational() {
                        SampleClass::RationalInDelta
                    } else {
                        SampleClass::Irrational
                    };
                    s.gbar = g.gbar;
                    s.upper = g.records.iter().map(|r| r.alpha).fold(f64::NEG_INFINITY, f64::max);
                    s.lower = g.records.iter().map(|r| r.alpha).fold(f64::INFINITY, f64::min);
                    s.err = g.records.iter().map(|r| r.err).fold(0.0, f64::max);
                    s.flagged = !g.flagged_eps.is_empty();
                    if s.flagged {
                        s.note = format!("flagged at eps {:?}", g.flagged_eps);
                    }
                }
                Err(e) => s.note = e.to_string(),
            }
            s
        })
        .collect();
    Ok(BoundaryEnvelope {
        samples,
        excluded_points,
        excluded_intervals,
        delta,
        perimeter: p.domain.perimeter()?,
        g_sup: data_sup(&p.domain, &p.data)?,
        mollifier_radius: None,
        exclusion_radius: None,
        near_rational_radius: 0.0,
        slack_plus: 0.0,
        slack_minus: 0.0,
        v_sup_k: None,
        v_budget_met: None,
        completed: false,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvelopeConfig {
    pub delta: f64,
    /// Arclength radius of the mollifier.
    pub mollifier_radius: f64,
    /// Arclength scale of the δ-continuity check (mollifier radius when 0).
    pub continuity_radius: f64,
    /// Fixed exclusion radius; chosen adaptively when absent.
    pub exclusion_radius: Option<f64>,
    /// Samples this close (divided by the order `max|m|`) to an excluded
    /// point are dropped: finite strips there still see the rational value.
    pub near_rational_radius: f64,
    /// Grid spacing for `v` and `u±`.
    pub h: f64,
    pub stencil_order: u8,
    pub tol: f64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            mollifier_radius: 0.1,
            continuity_radius: 0.0,
            exclusion_radius: None,
            near_rational_radius: 0.0,
            h: 1.0 / 64.0,
            stencil_order: 2,
            tol: 1e-9,
        }
    }
}

fn mollifier(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

impl BoundaryEnvelope {
    fn arc_dist(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(self.perimeter);
        d.min(self.perimeter - d)
    }

    fn in_interval(&self, s: f64) -> Option<f64> {
        // distance outside the nearest excluded interval (0 inside)
        self.excluded_intervals
            .iter()
            .map(|iv| {
                let len = iv.s_end - iv.s_start;
                let t = (s - iv.s_start).rem_euclid(self.perimeter);
                if t <= len {
                    0.0
                } else {
                    (t - len).min(self.perimeter - t)
                }
            })
            .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.min(d))))
    }

    /// Bump data `b(s)`: 1 within `r` of an excluded point or on an
    /// excluded interval, linear down to 0 at `2r`.
    pub fn bump(&self, s: f64) -> f64 {
        let r = self.exclusion_radius.unwrap_or(0.0);
        let mut d = self
            .excluded_points
            .iter()
            .map(|z| self.arc_dist(s, z.s))
            .fold(f64::INFINITY, f64::min);
        if let Some(di) = self.in_interval(s) {
            d = d.min(di);
        }
        if d == 0.0 {
            return 1.0;
        }
        if r <= 0.0 {
            return 0.0;
        }
        ((2.0 * r - d) / r).clamp(0.0, 1.0)
    }

    /// Mean of `b` over the arc `[s − w/2, s + w/2]`; boundary nodes of a
    /// grid with spacing `w` see this instead of the point value, so bumps
    /// narrower than the grid keep their mass.
    pub fn bump_average(&self, s: f64, w: f64) -> f64 {
        if !(w > 0.0) {
            return self.bump(s);
        }
        let r = self.exclusion_radius.unwrap_or(0.0);
        let (a, b) = (s - w / 2.0, s + w / 2.0);
        let mut knots = vec![a, b];
        let offsets = [-2.0 * r, -r, 0.0, r, 2.0 * r];
        let mut push = |c: f64| {
            for k in [-1.0, 0.0, 1.0] {
                for o in offsets {
                    let t = c + k * self.perimeter + o;
                    if t > a && t < b {
                        knots.push(t);
                    }
                }
            }
        };
        for z in &self.excluded_points {
            push(z.s);
        }
        for iv in &self.excluded_intervals {
            push(iv.s_start);
            push(iv.s_end);
        }
        knots.sort_by(f64::total_cmp);
        let mut acc = 0.0;
        for pair in knots.windows(2) {
            let (l, u) = (pair[0], pair[1]);
            let step = (u - l) / 4.0;
            for j in 0..4 {
                let (p, q) = (l + j as f64 * step, l + (j + 1) as f64 * step);
                acc += 0.5 * (q - p) * (self.bump(p) + self.bump(q));
            }
        }
        acc / w
    }

    fn is_excluded(&self, i: usize) -> bool {
        let s = &self.samples[i];
        if s.class == SampleClass::Excluded || s.class == SampleClass::Failed {
            return true;
        }
        let r = self.exclusion_radius.unwrap_or(0.0);
        let near = self.excluded_points.iter().any(|z| {
            let order = z.m.iter().map(|v| v.abs()).max().unwrap_or(1).max(1) as f64;
            self.arc_dist(s.s, z.s) < r.max(self.near_rational_radius / order)
        });
        near || self.in_interval(s.s) == Some(0.0)
    }

    fn usable(&self) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| !self.is_excluded(i)).collect()
    }

    fn mollified(&self, s: f64, upper: bool) -> f64 {
        let rho = self.mollifier_radius.unwrap_or(0.0);
        let idx = self.usable();
        let (mut num, mut den) = (0.0, 0.0);
        for &i in &idx {
            let w = if rho > 0.0 {
                mollifier(self.arc_dist(s, self.samples[i].s) / rho)
            } else {
                0.0
            };
            let v = if upper {
                self.samples[i].upper
            } else {
                self.samples[i].lower
            };
            num += w * v;
            den += w;
        }
        if den > 0.0 {
            return num / den;
        }
        // extension by the nearest usable sample
        idx.iter()
            .min_by(|&&a, &&b| {
                self.arc_dist(s, self.samples[a].s)
                    .total_cmp(&self.arc_dist(s, self.samples[b].s))
            })
            .map(|&i| {
                if upper {
                    self.samples[i].upper
                } else {
                    self.samples[i].lower
                }
            })
            .unwrap_or(0.0)
    }

    pub fn h_plus(&self, s: f64) -> f64 {
        self.h_plus_node(s, 0.0)
    }

    pub fn h_minus(&self, s: f64) -> f64 {
        self.h_minus_node(s, 0.0)
    }

    /// `h⁺` with the bump averaged over a node window of width `w`.
    pub fn h_plus_node(&self, s: f64, w: f64) -> f64 {
        self.mollified(s, true) + self.delta + self.slack_plus + 2.0 * self.g_sup * self.bump_average(s, w)
    }

    pub fn h_minus_node(&self, s: f64, w: f64) -> f64 {
        self.mollified(s, false) - self.delta - self.slack_minus - 2.0 * self.g_sup * self.bump_average(s, w)
    }

    /// `s, gbar, h_minus, h_plus` at every sample.
    pub fn csv(&self) -> String {
        let mut out = String::from("s,gbar,lower,upper,h_minus,h_plus,class\n");
        for smp in &self.samples {
            let g = smp.gbar.map(|v| format!("{v:.12e}")).unwrap_or_default();
            out.push_str(&format!(
                "{:.12e},{g},{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
                smp.s,
                smp.lower,
                smp.upper,
                self.h_minus(smp.s),
                self.h_plus(smp.s),
                smp.class.label()
            ));
        }
        out
    }
}

/// Dirichlet solve of a `y`-independent operator with boundary data given
/// as a function of the boundary node position.
pub fn solve_boundary_function(
    dom: &DomainSpec,
    local: &LocalOperator,
    h: f64,
    stencil_order: u8,
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
    tol: f64,
) -> Result<(GridField, ConvergenceRecord)> {
    let stencil = Stencil::new(dom.dim(), stencil_order)?;
    let mut grid = GridField::for_domain(dom, h, &stencil.directions)?;
    grid.set_boundary(|x| g(x));
    let (mut sum, mut cnt) = (0.0, 0usize);
    for k in 0..grid.len() {
        if grid.mask[k] == NodeKind::Boundary {
            sum += grid.values[k];
            cnt += 1;
        }
    }
    grid.fill_interior(sum / cnt.max(1) as f64);
    let dp = DiscreteProblem::assemble(grid, stencil, &|_| local.clone(), &|_| 0.0, 0.0, None, 1.0)?;
    solve_with(&dp, &options(tol))
}

fn sup_on(field: &GridField, k: &CompactSet) -> f64 {
    (0..field.len())
        .filter(|&i| field.mask[i] != NodeKind::Exterior && k.contains(&field.position(i)))
        .map(|i| field.values[i])
        .fold(f64::NEG_INFINITY, f64::max)
}

const MAX_RADIUS_HALVINGS: usize = 24;

/// Completes the envelope: checks δ-continuity away from the excluded set,
/// fixes the exclusion radius so that `sup_K v ≤ δ/(4‖g‖)` (`v_budget_met`
/// records failure, e.g. on flat facets), mollifies the
/// samples and sets the slacks so that `h⁻ ≤ ḡ ≤ h⁺` at every usable sample.
pub fn build_envelopes(
    p: &OscillatingProblem,
    mut env: BoundaryEnvelope,
    cfg: &EnvelopeConfig,
    k: &CompactSet,
) -> Result<BoundaryEnvelope> {
    if !(cfg.mollifier_radius > 0.0 && cfg.delta > 0.0) {
        return domain("delta and mollifier radius must be positive");
    }
    env.delta = cfg.delta;
    env.mollifier_radius = Some(cfg.mollifier_radius);
    env.near_rational_radius = cfg.near_rational_radius;
    let pucci = LocalOperator::Pucci {
        sign: Sign::Plus,
        lambda: p.operator.lambda,
        big_lambda: p.operator.big_lambda,
    };
    let target = cfg.delta / (4.0 * env.g_sup.max(1e-300));
    let solve_v = |env: &BoundaryEnvelope| -> Result<f64> {
        let dom = &p.domain;
        let g = |x: &[f64]| dom.boundary_param(x).map(|s| env.bump_average(s, cfg.h)).unwrap_or(0.0);
        let (v, _) = solve_boundary_function(dom, &pucci, cfg.h, cfg.stencil_order, &g, cfg.tol)?;
        Ok(sup_on(&v, k).max(0.0))
    };
    let has_excluded = !env.excluded_points.is_empty() || !env.excluded_intervals.is_empty();
    match cfg.exclusion_radius {
        Some(r) => {
            env.exclusion_radius = Some(r);
            env.v_sup_k = Some(if has_excluded { solve_v(&env)? } else { 0.0 });
        }
        None => {
            let mut r = cfg.mollifier_radius;
            let mut v = 0.0;
            if has_excluded {
                let mut prev = f64::INFINITY;
                for _ in 0..MAX_RADIUS_HALVINGS {
                    env.exclusion_radius = Some(r);
                    v = solve_v(&env)?;
                    // a facet keeps v bounded below whatever r is
                    if v <= target || (!env.excluded_intervals.is_empty() && v > 0.99 * prev) {
                        break;
                    }
                    prev = v;
                    r *= 0.5;
                }
            }
            env.exclusion_radius = Some(r);
            env.v_sup_k = Some(v);
        }
    }
    env.v_budget_met = env.v_sup_k.map(|v| v <= target);
    // δ-continuity of the samples away from the excluded set
    let usable = env.usable();
    let cr = if cfg.continuity_radius > 0.0 {
        cfg.continuity_radius
    } else {
        cfg.mollifier_radius
    };
    for (a, &i) in usable.iter().enumerate() {
        for &j in &usable[a + 1..] {
            let (si, sj) = (&env.samples[i], &env.samples[j]);
            if env.arc_dist(si.s, sj.s) > cr {
                continue;
            }
            let (vi, vj) = (si.gbar.unwrap_or(si.upper), sj.gbar.unwrap_or(sj.upper));
            if (vi - vj).abs() > cfg.delta {
                return Err(Error::DeltaContinuity {
                    i,
                    j,
                    a: vi,
                    b: vj,
                    bound: cfg.delta,
                });
            }
        }
    }
    let (mut sp, mut sm) = (0.0f64, 0.0f64);
    for &i in &usable {
        let s = env.samples[i].s;
        sp = sp.max(env.samples[i].upper - env.mollified(s, true) - cfg.delta);
        sm = sm.max(env.mollified(s, false) - env.samples[i].lower - cfg.delta);
    }
    env.slack_plus = sp.max(0.0);
    env.slack_minus = sm.max(0.0);
    env.completed = true;
    Ok(env)
}

/// Source of the effective interior operator.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FbarSource {
    /// The operator itself when it does not depend on `y`; the estimated
    /// constant coefficient for linear `a(y)`.
    #[default]
    Auto,
    Operator {
        operator: EllipticOperatorSpec,
    },
}

/// Effective operator `F̄`, which must not depend on `y`.
pub fn effective_operator(
    op: &EllipticOperatorSpec,
    src: &FbarSource,
    cell_grid: usize,
) -> Result<EllipticOperatorSpec> {
    match src {
        FbarSource::Operator { operator } => {
            if operator.depends_on_y() {
                return domain("supplied effective operator depends on y");
            }
            Ok(operator.clone())
        }
        FbarSource::Auto if !op.depends_on_y() => Ok(op.clone()),
        FbarSource::Auto => {
            if !matches!(op.kind, OperatorKind::Linear { .. }) {
                return Err(Error::Refused(
                    "effective operator for y-dependent nonlinear F must be supplied".into(),
                ));
            }
            let n = op.dim;
            let delta = 1e-3;
            let est = |m: &SymMat| effective_operator_estimate(op, m, delta, cell_grid).map(|e| e.value);
            let mut a = SymMat::zeros(n);
            let mut diag = vec![0.0; n];
            for (i, d) in diag.iter_mut().enumerate() {
                let mut e = SymMat::zeros(n);
                e.set(i, i, 1.0);
                *d = est(&e)?;
                a.set(i, i, *d);
            }
            for i in 0..n {
                for j in i + 1..n {
                    let mut e = SymMat::zeros(n);
                    e.set(i, i, 1.0);
                    e.set(j, j, 1.0);
                    e.set(i, j, 1.0);
                    a.set(i, j, (est(&e)? - diag[i] - diag[j]) / 2.0);
                }
            }
            EllipticOperatorSpec::linear(CoefficientField::constant(&a), op.lambda, op.big_lambda, vec![])
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SandwichEps {
    pub epsilon: f64,
    pub gap_plus: f64,
    pub gap_minus: f64,
    /// `max (u⁻ − u_ε)` and `max (u_ε − u⁺)` on K.
    pub lower_violation: f64,
    pub upper_violation: f64,
    pub ordered: bool,
    pub worst_point: Vec<f64>,
    pub u_min_k: f64,
    pub u_max_k: f64,
    pub probe: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SandwichVerdict {
    pub k: CompactSet,
    pub delta: f64,
    pub per_eps: Vec<SandwichEps>,
    /// `sup_K (u⁺ − u⁻)`.
    pub envelope_gap: f64,
    pub gap_budget: f64,
    pub ordered: bool,
    pub converged: bool,
    pub stability: String,
    pub probe_point: Option<Vec<f64>>,
    pub tol: f64,
}

impl SandwichVerdict {
    pub fn csv(&self) -> String {
        let mut s = String::from("epsilon,gap_plus,gap_minus,lower_violation,upper_violation,u_min_k,u_max_k,probe\n");
        for r in &self.per_eps {
            let pr = r.probe.map(|v| format!("{v:.12e}")).unwrap_or_default();
            s.push_str(&format!(
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{pr}\n",
                r.epsilon, r.gap_plus, r.gap_minus, r.lower_violation, r.upper_violation, r.u_min_k, r.u_max_k
            ));
        }
        s
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SandwichConfig {
    /// Tolerance in `u⁻ − tol ≤ u_ε ≤ u⁺ + tol`.
    pub tol: f64,
    /// Converged requires `sup_K (u⁺ − u⁻) ≤ gap_factor · δ`.
    pub gap_factor: f64,
    pub probe: Option<Vec<f64>>,
    pub cell_grid: usize,
}

impl Default for SandwichConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            gap_factor: 4.0,
            probe: None,
            cell_grid: 64,
        }
    }
}

/// Envelope solutions `u±` of `F̄(D²u) = 0` with data `h±`.
pub fn envelope_solutions(
    p: &OscillatingProblem,
    env: &BoundaryEnvelope,
    fbar: &EllipticOperatorSpec,
    ecfg: &EnvelopeConfig,
) -> Result<(GridField, GridField)> {
    if !env.completed {
        return domain("envelope is not completed");
    }
    let local = fbar.local_at(&vec![0.0; fbar.dim]);
    let dom = &p.domain;
    let gp = |x: &[f64]| {
        dom.boundary_param(x)
            .map(|s| env.h_plus_node(s, ecfg.h))
            .unwrap_or(f64::NAN)
    };
    let gm = |x: &[f64]| {
        dom.boundary_param(x)
            .map(|s| env.h_minus_node(s, ecfg.h))
            .unwrap_or(f64::NAN)
    };
    let (up, _) = solve_boundary_function(dom, &local, ecfg.h, ecfg.stencil_order, &gp, ecfg.tol)?;
    let (um, _) = solve_boundary_function(dom, &local, ecfg.h, ecfg.stencil_order, &gm, ecfg.tol)?;
    Ok((up, um))
}

/// Checks `u⁻ − tol ≤ u_ε ≤ u⁺ + tol` on `K` for every run.
pub fn effective_sandwich(
    p: &OscillatingProblem,
    env: &BoundaryEnvelope,
    envelopes: &(GridField, GridField),
    runs: &[&OscillatingSolution],
    k: &CompactSet,
    cfg: &SandwichConfig,
) -> Result<SandwichVerdict> {
    let (up, um) = envelopes;
    let mut gap: f64 = 0.0;
    for i in 0..up.len() {
        if up.mask[i] == NodeKind::Interior && k.contains(&up.position(i)) {
            gap = gap.max(up.values[i] - um.values[i]);
        }
    }
    let mut per_eps = Vec::with_capacity(runs.len());
    for run in runs {
        let f = &run.field;
        let mut r = SandwichEps {
            epsilon: run.epsilon,
            gap_plus: 0.0,
            gap_minus: 0.0,
            lower_violation: f64::NEG_INFINITY,
            upper_violation: f64::NEG_INFINITY,
            ordered: true,
            worst_point: vec![],
            u_min_k: f64::INFINITY,
            u_max_k: f64::NEG_INFINITY,
            probe: cfg.probe.as_ref().and_then(|x| f.interpolate(x)),
        };
        let mut worst = f64::NEG_INFINITY;
        for i in 0..f.len() {
            if f.mask[i] != NodeKind::Interior {
                continue;
            }
            let x = f.position(i);
            if !k.contains(&x) {
                continue;
            }
            let (Some(a), Some(b)) = (up.interpolate(&x), um.interpolate(&x)) else {
                continue;
            };
            let u = f.values[i];
            r.u_min_k = r.u_min_k.min(u);
            r.u_max_k = r.u_max_k.max(u);
            r.gap_plus = r.gap_plus.max((u - a).abs());
            r.gap_minus = r.gap_minus.max((u - b).abs());
            r.lower_violation = r.lower_violation.max(b - u);
            r.upper_violation = r.upper_violation.max(u - a);
            let v = (b - u).max(u - a);
            if v > worst {
                worst = v;
                r.worst_point = x;
            }
        }
        r.ordered = r.lower_violation <= cfg.tol && r.upper_violation <= cfg.tol;
        per_eps.push(r);
    }
    per_eps.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let ordered = per_eps.iter().all(|r| r.ordered);
    let budget = cfg.gap_factor * env.delta;
    let op = &p.operator;
    let stability = if (op.dim as f64 - 1.0) * op.lambda > op.big_lambda {
        "stable class: (n-1) lambda > Lambda".to_string()
    } else {
        "unverified stability hypothesis".to_string()
    };
    Ok(SandwichVerdict {
        k: k.clone(),
        delta: env.delta,
        per_eps,
        envelope_gap: gap,
        gap_budget: budget,
        ordered,
        converged: ordered && gap <= budget,
        stability,
        probe_point: cfg.probe.clone(),
        tol: cfg.tol,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShrunkenReport {
    pub epsilon: f64,
    pub q: f64,
    /// `ε^q`.
    pub offset: f64,
    pub deviation: f64,
    pub alpha: Option<f64>,
    pub r0: f64,
    /// `r₀^(−α) − (r₀ + ε^q)^(−α)`.
    pub predicted_scale: Option<f64>,
    pub note: String,
}

/// Re-solves on `D` with the data `u_ε(x + ε^q ν_in(x))` and compares with
/// `u_ε` on `D_ε = {dist(x, ∂D) > ε^q}`.
pub fn shrunken_domain_compare(
    p: &OscillatingProblem,
    u: &OscillatingSolution,
    q: f64,
    stencil_order: u8,
    tol: f64,
) -> Result<ShrunkenReport> {
    if !(q > 0.5 && q < 1.0) {
        return domain("q must lie in (1/2, 1)");
    }
    let eps = p.epsilon;
    let off = eps.powf(q);
    let mut dp = discretize(&p.operator, &p.domain, &p.data, u.field.h, stencil_order, eps)?;
    if dp.grid.extents != u.field.extents {
        return domain("solution grid does not match the problem");
    }
    let f = &u.field;
    for k in 0..dp.grid.len() {
        if dp.grid.mask[k] != NodeKind::Boundary {
            continue;
        }
        let x = p.domain.project(&dp.grid.position(k));
        let n = p.domain.outward_normal(&x)?;
        let z: Vec<f64> = x.iter().zip(&n).map(|(a, b)| a - off * b).collect();
        dp.grid.values[k] = f
            .interpolate(&z)
            .ok_or_else(|| Error::Domain(format!("offset point {z:?} is off the grid")))?;
    }
    for k in 0..dp.grid.len() {
        if dp.grid.mask[k] == NodeKind::Interior {
            dp.grid.values[k] = f.values[k];
        }
    }
    let (ut, _) = solve_with(&dp, &options(tol))?;
    let mut dev: f64 = 0.0;
    for k in 0..ut.len() {
        if ut.mask[k] == NodeKind::Interior && p.domain.level_set(&ut.position(k)) < -off {
            dev = dev.max((ut.values[k] - f.values[k]).abs());
        }
    }
    let r0 = p.domain.diameter() / 2.0;
    let (alpha, scale, note) = match exponent_exterior(p.operator.dim, p.operator.lambda, p.operator.big_lambda) {
        Ok(a) => (Some(a), Some(r0.powf(-a) - (r0 + off).powf(-a)), String::new()),
        Err(e) => (None, None, format!("bound unavailable: {e}")),
    };
    Ok(ShrunkenReport {
        epsilon: eps,
        q,
        offset: off,
        deviation: dev,
        alpha,
        r0,
        predicted_scale: scale,
        note,
    })
}

/// End-to-end configuration of the sandwich experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HomogenizeConfig {
    pub domain: DomainSpec,
    pub operator: EllipticOperatorSpec,
    pub data: SourceAndBoundaryData,
    /// `ε` values of the oscillating solves.
    pub eps_list: Vec<f64>,
    /// Nodes per `ε` of the oscillating solves.
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    #[serde(default = "default_order")]
    pub stencil_order: u8,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// `ε` values of the corrector strips.
    pub corrector_eps: Vec<f64>,
    #[serde(default)]
    pub strip: StripParams,
    pub boundary_samples: usize,
    #[serde(default)]
    pub envelope: EnvelopeConfig,
    #[serde(default)]
    pub sandwich: SandwichConfig,
    pub k: Option<CompactSet>,
    #[serde(default)]
    pub fbar: FbarSource,
}

fn default_resolution() -> f64 {
    NODES_PER_EPSILON
}
fn default_order() -> u8 {
    2
}
fn default_tol() -> f64 {
    1e-8
}

#[derive(Clone, Debug)]
pub struct HomogenizeOutput {
    pub solutions: Vec<OscillatingSolution>,
    pub envelope: BoundaryEnvelope,
    pub envelopes: (GridField, GridField),
    pub verdict: SandwichVerdict,
}

/// Oscillating solves, boundary sampling, envelopes and the verdict.
pub fn homogenize(cfg: &HomogenizeConfig) -> Result<HomogenizeOutput> {
    if cfg.eps_list.is_empty() {
        return domain("eps_list is empty");
    }
    if cfg.resolution < NODES_PER_EPSILON {
        return Err(Error::Refused(format!(
            "resolution must be at least {NODES_PER_EPSILON} nodes per epsilon"
        )));
    }
    let base = OscillatingProblem::new(
        cfg.domain.clone(),
        cfg.eps_list[0],
        cfg.operator.clone(),
        cfg.data.clone(),
    )?;
    let k = cfg.k.clone().unwrap_or_else(|| CompactSet::default_for(&cfg.domain));
    k.validate()?;
    let solutions = cfg
        .eps_list
        .par_iter()
        .map(|&e| {
            let p = base.with_epsilon(e)?;
            solve_oscillating(&p, e / cfg.resolution, cfg.stencil_order, cfg.tol)
        })
        .collect::<Result<Vec<_>>>()?;
    let points = cfg.domain.boundary_samples(cfg.boundary_samples)?;
    let env = sample_gbar_on_boundary(&base, &points, &cfg.corrector_eps, &cfg.strip, cfg.envelope.delta)?;
    let env = build_envelopes(&base, env, &cfg.envelope, &k)?;
    let fbar = effective_operator(&cfg.operator, &cfg.fbar, cfg.sandwich.cell_grid)?;
    let envelopes = envelope_solutions(&base, &env, &fbar, &cfg.envelope)?;
    let runs: Vec<&OscillatingSolution> = solutions.iter().collect();
    let verdict = effective_sandwich(&base, &env, &envelopes, &runs, &k, &cfg.sandwich)?;
    Ok(HomogenizeOutput {
        solutions,
        envelope: env,
        envelopes,
        verdict,
    })
}
