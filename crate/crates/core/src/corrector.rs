//! Half-space correctors on truncated strips, ray limits and the effective
//! boundary value `ḡ`.
//!
//! Strip coordinates `ξ = (ξ′, ξ_n)` map to the fast variable by
//! `y = y₀ + Q ξ` with `Q e_n = ν` (inward normal) and `y₀ = x₀/ε`. Strip
//! lengths are given in units of the data period.

use crate::barriers::BarrierSpec;
use crate::error::{domain, Error, Result};
use crate::fdsolver::{solve_with, DiscreteProblem, GridField, Method, NodeKind, SolveOptions, SweepOrder};
use crate::fdsolver::{ConvergenceRecord, Stencil};
use crate::geometry::{classify_direction, Direction};
use crate::linalg::{norm, Frame};
use crate::operators::{EllipticOperatorSpec, SourceAndBoundaryData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Readout height as a fraction of the strip height.
pub const READOUT_FRACTION: f64 = 0.75;
/// Number of profile intervals; heights are `T k / PROFILE_LEVELS`.
pub const PROFILE_LEVELS: usize = 8;
const EQUALITY_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct StripParams {
    /// Strip height `T` in periods.
    pub height: f64,
    /// Strip width `L` in periods.
    pub width: f64,
    /// Grid spacing in periods.
    pub h: f64,
    pub stencil_order: u8,
    pub tol: f64,
    pub max_iter: usize,
    /// `ḡ* = ḡ_*` is declared when the spread is within this multiple of
    /// the largest error bar.
    pub equality_factor: f64,
    /// Random rays used for the independence cross-check.
    pub rays: usize,
    pub seed: u64,
    /// Re-solve once with the top value set to the first ray limit.
    pub refine_top: bool,
}

impl Default for StripParams {
    fn default() -> Self {
        Self {
            height: 4.0,
            width: 16.0,
            h: 1.0 / 32.0,
            stencil_order: 2,
            tol: 1e-9,
            max_iter: 200_000,
            equality_factor: 3.0,
            rays: 3,
            seed: 0,
            refine_top: true,
        }
    }
}

/// Length of one period cell of the data (largest declared period, else 1).
pub fn period_scale(data: &SourceAndBoundaryData) -> f64 {
    if data.period.is_empty() {
        1.0
    } else {
        data.period.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Debug)]
pub struct HalfspaceCorrectorProblem {
    pub x0: Vec<f64>,
    /// Inward normal.
    pub nu: Direction,
    pub epsilon: f64,
    pub y0_eps: Vec<f64>,
    pub frame: Frame,
    /// Strip height, width and spacing in `y` units.
    pub height: f64,
    pub width: f64,
    pub h: f64,
    pub period: f64,
    pub params: StripParams,
    pub op: EllipticOperatorSpec,
    pub data: SourceAndBoundaryData,
    pub discrete: DiscreteProblem,
    /// Range of the bottom data over the strip.
    pub bottom_range: (f64, f64),
}

impl HalfspaceCorrectorProblem {
    /// `y(ξ) = y₀ + Q ξ`.
    pub fn y_of(&self, xi: &[f64]) -> Vec<f64> {
        let q = self.frame.apply(xi);
        self.y0_eps.iter().zip(q).map(|(a, b)| a + b).collect()
    }

    fn bottom_value(&self, xi: &[f64]) -> f64 {
        let n = xi.len();
        let mut foot: Vec<f64> = xi[..n - 1]
            .iter()
            .map(|v| v.clamp(-self.width / 2.0, self.width / 2.0))
            .collect();
        foot.push(0.0);
        self.data.g(&self.x0, &self.y_of(&foot))
    }

    fn is_top(&self, xi: &[f64]) -> bool {
        let n = xi.len();
        xi[n - 1] >= self.height - 1e-9 * self.h
            && xi[..n - 1].iter().all(|v| v.abs() < self.width / 2.0 - 1e-9 * self.h)
    }

    fn is_bottom(&self, xi: &[f64]) -> bool {
        xi[xi.len() - 1] <= 1e-9 * self.h
    }

    /// Sets the top face to `top(ξ′)`.
    fn set_top(&mut self, top: &dyn Fn(&[f64]) -> f64) {
        let g = &self.discrete.grid;
        let vals: Vec<(usize, f64)> = (0..g.len())
            .filter(|&k| g.mask[k] == NodeKind::Boundary)
            .filter_map(|k| {
                let xi = g.position(k);
                self.is_top(&xi).then(|| (k, top(&xi[..xi.len() - 1])))
            })
            .collect();
        for (k, v) in vals {
            self.discrete.grid.values[k] = v;
        }
    }

    /// `sup |data − w|` over the lateral and top faces for any `w` with
    /// values in the bottom range.
    pub fn face_discrepancy(&self) -> f64 {
        let g = &self.discrete.grid;
        let (lo, hi) = self.bottom_range;
        let mut d: f64 = 0.0;
        for k in 0..g.len() {
            if g.mask[k] != NodeKind::Boundary || self.is_bottom(&g.position(k)) {
                continue;
            }
            let v = g.values[k];
            d = d.max(v - lo).max(hi - v);
        }
        d
    }

    /// Barrier bound for the effect of the lateral and top data on the
    /// central window at height `t`.
    pub fn truncation_bound(&self, t: f64) -> Result<f64> {
        let d = self.face_discrepancy();
        if d == 0.0 {
            return Ok(0.0);
        }
        let n = self.x0.len();
        let b = BarrierSpec::quad_box(n, self.op.lambda, self.op.big_lambda, self.width, self.height)?;
        let mut corner = vec![self.width / 4.0; n];
        corner[n - 1] = t;
        Ok(d * b.value(&corner)?)
    }

    /// Sampled points of the central window `|ξ′_i| ≤ L/4` at height `t`.
    fn window(&self, t: f64) -> Vec<Vec<f64>> {
        let n = self.x0.len();
        let m = (self.width / 2.0 / self.h).round() as usize;
        let count = (m + 1).pow(n as u32 - 1);
        let mut out = Vec::with_capacity(count);
        for code in 0..count {
            let mut c = code;
            let mut xi = Vec::with_capacity(n);
            for _ in 0..n - 1 {
                xi.push(-self.width / 4.0 + (c % (m + 1)) as f64 * self.h);
                c /= m + 1;
            }
            xi.push(t);
            out.push(xi);
        }
        out
    }
}

/// Builds the truncated strip corrector at `x0` with inward normal `nu`.
pub fn build_strip(
    x0: &[f64],
    nu: &[f64],
    epsilon: f64,
    params: &StripParams,
    op: &EllipticOperatorSpec,
    data: &SourceAndBoundaryData,
) -> Result<HalfspaceCorrectorProblem> {
    let n = x0.len();
    if n < 2 || nu.len() != n || op.dim != n {
        return domain("x0, nu and operator dimensions differ");
    }
    if !(epsilon > 0.0) {
        return domain("epsilon must be positive");
    }
    let p = params;
    if !(p.h > 0.0 && p.height > 0.0 && p.width > 0.0) {
        return domain("strip lengths must be positive");
    }
    if p.width < 2.0 * p.height {
        return Err(Error::Refused(format!(
            "strip width {} < 2 x height {}: truncation bound meaningless",
            p.width, p.height
        )));
    }
    for (name, v) in [("height", p.height), ("width", p.width)] {
        let r = v / p.h;
        if (r - r.round()).abs() > 1e-9 * r.max(1.0) {
            return domain(format!("strip {name} must be a multiple of h"));
        }
    }
    let quarter = p.width / 4.0 / p.h;
    if (quarter - quarter.round()).abs() > 1e-9 * quarter.max(1.0) {
        return domain("strip width must be a multiple of 4h");
    }
    let period = period_scale(data);
    let (height, width, h) = (p.height * period, p.width * period, p.h * period);
    let direction = classify_direction(
        nu,
        crate::geometry::direction::DEFAULT_TOL,
        crate::geometry::direction::DEFAULT_MAX_DENOMINATOR,
    )?;
    let frame = Frame::with_last_column(&direction.nu);
    let y0: Vec<f64> = x0.iter().map(|v| v / epsilon).collect();
    let mut lo = vec![-width / 2.0; n];
    let mut hi = vec![width / 2.0; n];
    lo[n - 1] = 0.0;
    hi[n - 1] = height;
    let dom = crate::geometry::DomainSpec::Rectangle { lo, hi };
    let stencil = Stencil::new(n, p.stencil_order)?;
    let grid = GridField::for_domain(&dom, h, &stencil.directions)?;
    let local = {
        let frame = frame.clone();
        let y0 = y0.clone();
        let op = op.clone();
        move |xi: &[f64]| {
            let q = frame.apply(xi);
            let y: Vec<f64> = y0.iter().zip(q).map(|(a, b)| a + b).collect();
            op.local_at(&y).rotated(&frame)
        }
    };
    let discrete = DiscreteProblem::assemble(grid, stencil, &local, &|_| 0.0, 0.0, None, epsilon)?;
    let mut prob = HalfspaceCorrectorProblem {
        x0: x0.to_vec(),
        nu: direction,
        epsilon,
        y0_eps: y0,
        frame,
        height,
        width,
        h,
        period,
        params: params.clone(),
        op: op.clone(),
        data: data.clone(),
        discrete,
        bottom_range: (0.0, 0.0),
    };
    // bottom and lateral data; the top gets the running mean below
    let g = &prob.discrete.grid;
    let mut vals = Vec::new();
    let (mut blo, mut bhi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..g.len() {
        if g.mask[k] != NodeKind::Boundary {
            continue;
        }
        let xi = g.position(k);
        let v = prob.bottom_value(&xi);
        if prob.is_bottom(&xi) {
            blo = blo.min(v);
            bhi = bhi.max(v);
        }
        vals.push((k, v));
    }
    for (k, v) in vals {
        prob.discrete.grid.values[k] = v;
    }
    prob.bottom_range = (blo, bhi);
    let means = running_mean(&prob);
    prob.set_top(&|xp| means(xp));
    let fill = {
        let g = &prob.discrete.grid;
        let top: Vec<f64> = (0..g.len())
            .filter(|&k| g.mask[k] == NodeKind::Boundary && prob.is_top(&g.position(k)))
            .map(|k| g.values[k])
            .collect();
        top.iter().sum::<f64>() / top.len().max(1) as f64
    };
    prob.discrete.grid.fill_interior(fill);
    Ok(prob)
}

/// Mean of the bottom data over a lateral window of half-width `L/8`
/// (two dimensions); the mean over the whole bottom otherwise.
fn running_mean(p: &HalfspaceCorrectorProblem) -> impl Fn(&[f64]) -> f64 {
    let n = p.x0.len();
    let m = (p.width / p.h).round() as usize;
    let bottom: Vec<f64> = if n == 2 {
        (0..=m)
            .map(|i| p.bottom_value(&[-p.width / 2.0 + i as f64 * p.h, 0.0]))
            .collect()
    } else {
        Vec::new()
    };
    let global = if n == 2 {
        bottom.iter().sum::<f64>() / bottom.len() as f64
    } else {
        let g = &p.discrete.grid;
        let v: Vec<f64> = (0..g.len())
            .filter(|&k| g.mask[k] == NodeKind::Boundary && p.is_bottom(&g.position(k)))
            .map(|k| g.values[k])
            .collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    let half = p.width / 2.0;
    let win = ((p.width / 8.0) / p.h).round() as i64;
    let h = p.h;
    move |xp: &[f64]| {
        if n != 2 {
            return global;
        }
        let c = ((xp[0] + half) / h).round() as i64;
        let a = (c - win).max(0) as usize;
        let b = ((c + win) as usize).min(bottom.len() - 1);
        bottom[a..=b].iter().sum::<f64>() / (b - a + 1) as f64
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OscillationProfile {
    /// `t_k = T k / 8`, `k = 0..=8`, in `y` units.
    pub heights: Vec<f64>,
    pub w: Vec<f64>,
    /// Least-squares power `W ~ t^(−β)` over the interior heights.
    pub fitted_exponent: f64,
    /// Contraction per doubling of `t`, `2^(−β)`.
    pub gamma_est: f64,
}

impl OscillationProfile {
    pub fn csv(&self) -> String {
        let mut s = String::from("t,W\n");
        for (t, w) in self.heights.iter().zip(&self.w) {
            s.push_str(&format!("{t:.12e},{w:.12e}\n"));
        }
        s
    }

    /// Largest increase of `W` between consecutive heights.
    pub fn max_increase(&self) -> f64 {
        self.w.windows(2).map(|p| p[1] - p[0]).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RayLimit {
    pub alpha: f64,
    pub err: f64,
    pub osc: f64,
    pub truncation: f64,
    pub solver: f64,
    pub rays: Vec<f64>,
    pub spread: f64,
    /// Ray readings disagree beyond `err`: the strip is too short.
    pub flagged: bool,
}

#[derive(Clone, Debug)]
pub struct CorrectorSolution {
    pub field: GridField,
    pub profile: OscillationProfile,
    pub record: ConvergenceRecord,
    /// Top value of the final solve (after refinement).
    pub top_value: Option<f64>,
}

fn osc_at(p: &HalfspaceCorrectorProblem, field: &GridField, t: f64) -> Result<(f64, f64)> {
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    let pts = p.window(t);
    for xi in &pts {
        let v = field
            .interpolate(xi)
            .ok_or_else(|| Error::Domain(format!("window point {xi:?} is off the strip")))?;
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v;
    }
    Ok((hi - lo, sum / pts.len() as f64))
}

fn profile_of(p: &HalfspaceCorrectorProblem, field: &GridField) -> Result<OscillationProfile> {
    let mut heights = Vec::with_capacity(PROFILE_LEVELS + 1);
    let mut w = Vec::with_capacity(PROFILE_LEVELS + 1);
    for k in 0..=PROFILE_LEVELS {
        let t = p.height * k as f64 / PROFILE_LEVELS as f64;
        heights.push(t);
        w.push(osc_at(p, field, t)?.0);
    }
    let pts: Vec<(f64, f64)> = (1..PROFILE_LEVELS)
        .filter(|&k| w[k] > 1e-300)
        .map(|k| (heights[k].ln(), w[k].ln()))
        .collect();
    let beta = if pts.len() >= 2 {
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        -sxy / sxx
    } else {
        f64::INFINITY
    };
    Ok(OscillationProfile {
        heights,
        w,
        fitted_exponent: beta,
        gamma_est: if beta.is_finite() { 2f64.powf(-beta) } else { 0.0 },
    })
}

fn solver_options(p: &HalfspaceCorrectorProblem, tol: f64) -> SolveOptions {
    SolveOptions {
        tol,
        max_iter: p.params.max_iter,
        order: SweepOrder::Lexicographic,
        method: Method::Auto,
        omega: None,
        check_every: 10,
    }
}

/// Error in `w` implied by a residual bound `tol` on the strip.
fn solver_error(p: &HalfspaceCorrectorProblem, rec: &ConvergenceRecord) -> f64 {
    rec.tol_effective.max(rec.residual) * p.height * p.height / (2.0 * p.op.lambda)
}

/// Solves the strip problem; when `refine_top` is set the top value is
/// replaced by the first ray-limit estimate and the strip re-solved.
pub fn solve_corrector(p: &mut HalfspaceCorrectorProblem, tol: f64) -> Result<CorrectorSolution> {
    let opts = solver_options(p, tol);
    let (mut field, mut record) = solve_with(&p.discrete, &opts)?;
    let mut profile = profile_of(p, &field)?;
    let mut top_value = None;
    if p.params.refine_top {
        let first = ray_limit(p, &field, &profile, &record)?;
        p.set_top(&|_| first.alpha);
        for k in 0..field.len() {
            if field.mask[k] == NodeKind::Interior {
                p.discrete.grid.values[k] = field.values[k];
            }
        }
        let (f2, r2) = solve_with(&p.discrete, &opts)?;
        field = f2;
        record = r2;
        profile = profile_of(p, &field)?;
        top_value = Some(first.alpha);
    }
    Ok(CorrectorSolution {
        field,
        profile,
        record,
        top_value,
    })
}

/// Ray limit read at `t* = 3T/4`: window mean, error bar and the
/// cross-check along random rays entering the window.
pub fn ray_limit(
    p: &HalfspaceCorrectorProblem,
    field: &GridField,
    profile: &OscillationProfile,
    record: &ConvergenceRecord,
) -> Result<RayLimit> {
    let t = READOUT_FRACTION * p.height;
    let (osc_t, alpha) = osc_at(p, field, t)?;
    let osc = profile
        .heights
        .iter()
        .zip(&profile.w)
        .find(|(ht, _)| (**ht - t).abs() < 1e-9 * p.height)
        .map(|(_, w)| *w)
        .unwrap_or(osc_t);
    let truncation = p.truncation_bound(t)?;
    let solver = solver_error(p, record);
    let err = osc + truncation + solver;
    let n = p.x0.len();
    let mut rng = ChaCha8Rng::seed_from_u64(p.params.seed ^ p.epsilon.to_bits());
    let mut rays = Vec::with_capacity(p.params.rays);
    for _ in 0..p.params.rays {
        let start: Vec<f64> = (0..n - 1).map(|_| (rng.gen::<f64>() - 0.5) * p.width / 4.0).collect();
        let tilt: Vec<f64> = (0..n - 1)
            .map(|_| (rng.gen::<f64>() - 0.5) * p.width / 4.0 / t)
            .collect();
        let mut xi: Vec<f64> = start.iter().zip(&tilt).map(|(s, a)| s + a * t).collect();
        xi.push(t);
        rays.push(
            field
                .interpolate(&xi)
                .ok_or_else(|| Error::Domain("ray left the strip".into()))?,
        );
    }
    let lo = rays.iter().cloned().fold(alpha, f64::min);
    let hi = rays.iter().cloned().fold(alpha, f64::max);
    let spread = hi - lo;
    Ok(RayLimit {
        alpha,
        err,
        osc,
        truncation,
        solver,
        rays,
        spread,
        flagged: spread > err,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpsRecord {
    pub epsilon: f64,
    pub alpha: f64,
    pub err: f64,
    pub osc: f64,
    pub truncation: f64,
    pub flagged: bool,
    pub sweeps: usize,
    /// Oscillation at the bottom and at the readout height.
    pub w_bottom: f64,
    pub w_readout: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GbarEstimate {
    pub x0: Vec<f64>,
    pub nu: Direction,
    pub records: Vec<EpsRecord>,
    pub gbar_star: f64,
    pub gbar_lower: f64,
    pub spread: f64,
    pub equal: bool,
    pub gbar: Option<f64>,
    pub flagged_eps: Vec<f64>,
}

/// One strip solve and its ray-limit record.
pub fn corrector_record(
    x0: &[f64],
    nu: &[f64],
    epsilon: f64,
    params: &StripParams,
    op: &EllipticOperatorSpec,
    data: &SourceAndBoundaryData,
) -> Result<(EpsRecord, CorrectorSolution, HalfspaceCorrectorProblem)> {
    let mut p = build_strip(x0, nu, epsilon, params, op, data)?;
    let sol = solve_corrector(&mut p, params.tol)?;
    let rl = ray_limit(&p, &sol.field, &sol.profile, &sol.record)?;
    let k6 = (READOUT_FRACTION * PROFILE_LEVELS as f64).round() as usize;
    Ok((
        EpsRecord {
            epsilon,
            alpha: rl.alpha,
            err: rl.err,
            osc: rl.osc,
            truncation: rl.truncation,
            flagged: rl.flagged,
            sweeps: sol.record.sweeps,
            w_bottom: sol.profile.w[0],
            w_readout: sol.profile.w[k6],
        },
        sol,
        p,
    ))
}

/// Ray limits over `eps_list` (solved concurrently, merged by `ε`) and the
/// one-sided effective values.
pub fn estimate_gbar(
    x0: &[f64],
    nu: &[f64],
    eps_list: &[f64],
    params: &StripParams,
    op: &EllipticOperatorSpec,
    data: &SourceAndBoundaryData,
) -> Result<GbarEstimate> {
    if eps_list.len() < 2 {
        return domain("estimate_gbar needs at least two values of epsilon");
    }
    let mut records = eps_list
        .par_iter()
        .map(|&e| corrector_record(x0, nu, e, params, op, data).map(|r| r.0))
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
    let gbar_star = records
        .iter()
        .map(|r| r.alpha + r.err)
        .fold(f64::NEG_INFINITY, f64::max);
    let gbar_lower = records.iter().map(|r| r.alpha - r.err).fold(f64::INFINITY, f64::min);
    let amax = records.iter().map(|r| r.alpha).fold(f64::NEG_INFINITY, f64::max);
    let amin = records.iter().map(|r| r.alpha).fold(f64::INFINITY, f64::min);
    let emax = records.iter().map(|r| r.err).fold(0.0, f64::max);
    let spread = amax - amin;
    let equal = spread <= params.equality_factor * emax + EQUALITY_FLOOR;
    let gbar = equal.then(|| records.iter().map(|r| r.alpha).sum::<f64>() / records.len() as f64);
    let direction = classify_direction(
        nu,
        crate::geometry::direction::DEFAULT_TOL,
        crate::geometry::direction::DEFAULT_MAX_DENOMINATOR,
    )?;
    Ok(GbarEstimate {
        x0: x0.to_vec(),
        nu: direction,
        flagged_eps: records.iter().filter(|r| r.flagged).map(|r| r.epsilon).collect(),
        records,
        gbar_star,
        gbar_lower,
        spread,
        equal,
        gbar,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContinuityRow {
    pub nu: Vec<f64>,
    /// Angle to the reference direction, radians.
    pub angle: f64,
    pub gbar: Option<f64>,
    pub err: f64,
    pub note: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContinuityTable {
    pub rows: Vec<ContinuityRow>,
    pub max_deviation: f64,
    pub max_angle: f64,
}

impl ContinuityTable {
    pub fn csv(&self) -> String {
        let mut s = String::from("angle,gbar,err,note\n");
        for r in &self.rows {
            let g = r.gbar.map(|v| format!("{v:.12e}")).unwrap_or_default();
            s.push_str(&format!("{:.12e},{g},{:.12e},{}\n", r.angle, r.err, r.note));
        }
        s
    }
}

/// `ḡ(x₀, ν)` read at one `ε` for every irrational `ν` in `directions`.
pub fn gbar_continuity_probe(
    x0: &[f64],
    nu0: &[f64],
    directions: &[Vec<f64>],
    epsilon: f64,
    params: &StripParams,
    op: &EllipticOperatorSpec,
    data: &SourceAndBoundaryData,
) -> Result<ContinuityTable> {
    let n0 = norm(nu0);
    if n0 == 0.0 {
        return domain("reference direction is zero");
    }
    let rows = directions
        .par_iter()
        .map(|nu| -> Result<ContinuityRow> {
            let d = classify_direction(
                nu,
                crate::geometry::direction::DEFAULT_TOL,
                crate::geometry::direction::DEFAULT_MAX_DENOMINATOR,
            )?;
            let cos =
                d.nu.iter()
                    .zip(nu0)
                    .map(|(a, b)| a * b / n0)
                    .sum::<f64>()
                    .clamp(-1.0, 1.0);
            let angle = cos.acos();
            if d.is_rational() {
                return Ok(ContinuityRow {
                    nu: d.nu,
                    angle,
                    gbar: None,
                    err: 0.0,
                    note: "rational direction skipped".into(),
                });
            }
            let (r, _, _) = corrector_record(x0, nu, epsilon, params, op, data)?;
            Ok(ContinuityRow {
                nu: d.nu,
                angle,
                gbar: Some(r.alpha),
                err: r.err,
                note: if r.flagged { "flagged".into() } else { String::new() },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let vals: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.gbar.map(|g| (g, r.angle))).collect();
    let mut max_dev: f64 = 0.0;
    for i in 0..vals.len() {
        for j in i + 1..vals.len() {
            max_dev = max_dev.max((vals[i].0 - vals[j].0).abs());
        }
    }
    let max_angle = vals.iter().map(|v| v.1).fold(0.0, f64::max);
    Ok(ContinuityTable {
        rows,
        max_deviation: max_dev,
        max_angle,
    })
}

/// Midpoint rule for `⟨g⟩(x₀)` over one period cell, `quadrature_n` nodes
/// per axis.
pub fn cell_average(data: &SourceAndBoundaryData, x0: &[f64], quadrature_n: usize) -> Result<f64> {
    let n = x0.len();
    if quadrature_n == 0 {
        return domain("quadrature_n must be positive");
    }
    let period: Vec<f64> = (0..n).map(|i| data.period.get(i).cloned().unwrap_or(1.0)).collect();
    let total = quadrature_n.pow(n as u32);
    let mut sum = 0.0;
    let mut y = vec![0.0; n];
    for code in 0..total {
        let mut c = code;
        for i in 0..n {
            y[i] = ((c % quadrature_n) as f64 + 0.5) / quadrature_n as f64 * period[i];
            c /= quadrature_n;
        }
        sum += data.g(x0, &y);
    }
    Ok(sum / total as f64)
}

/// Cell average at `quadrature_n` and `2 quadrature_n` nodes; returns the
/// finer value and the difference.
pub fn cell_average_checked(data: &SourceAndBoundaryData, x0: &[f64], quadrature_n: usize) -> Result<(f64, f64)> {
    let a = cell_average(data, x0, quadrature_n)?;
    let b = cell_average(data, x0, 2 * quadrature_n)?;
    Ok((b, (b - a).abs()))
}
