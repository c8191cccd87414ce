//! Nonlinear Gauss–Seidel/SOR with exact local solves, and Howard policy
//! iteration.

use super::grid::GridField;
use super::scheme::{DiscreteProblem, MonotoneScheme};
use crate::error::{domain, Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrder {
    Lexicographic,
    RedBlack,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Howard iteration for Bellman families, nonlinear SOR otherwise.
    Auto,
    NonlinearSor,
    Howard,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Target for the max-norm residual, in operator units.
    pub tol: f64,
    /// Sweep budget.
    pub max_iter: usize,
    pub order: SweepOrder,
    pub method: Method,
    /// Relaxation factor; chosen from the grid size when absent.
    pub omega: Option<f64>,
    pub check_every: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200_000,
            order: SweepOrder::Lexicographic,
            method: Method::Auto,
            omega: None,
            check_every: 10,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualSample {
    pub sweep: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub converged: bool,
    pub sweeps: usize,
    pub residual: f64,
    pub history: Vec<ResidualSample>,
    pub method: Method,
    pub order: SweepOrder,
    pub omega_initial: f64,
    pub omega_final: f64,
    /// Outer policy updates (Howard only).
    pub policies: usize,
    /// Tolerance actually enforced: the requested one, raised to the
    /// rounding floor of the node equations when that is larger.
    pub tol_effective: f64,
}

impl ConvergenceRecord {
    pub fn history_csv(&self) -> String {
        let mut s = String::from("sweep,residual\n");
        for r in &self.history {
            s.push_str(&format!("{},{}\n", r.sweep, r.residual));
        }
        s
    }
}

pub const MAX_POLICIES: usize = 50;

/// Multiple of machine epsilon below which node residuals are rounding
/// noise.
const ROUNDOFF: f64 = 16.0 * f64::EPSILON;

/// SOR factor from the Jacobi spectral radius of the Laplacian on a box
/// with the given node counts.
pub fn auto_omega(extents: &[usize]) -> f64 {
    let rho = extents.iter().map(|&n| (PI / n.max(3) as f64).cos()).sum::<f64>() / extents.len() as f64;
    2.0 / (1.0 + (1.0 - rho * rho).sqrt())
}

fn sweep_order<S: MonotoneScheme + ?Sized>(s: &S, order: SweepOrder) -> Vec<usize> {
    let n = s.active().len();
    match order {
        SweepOrder::Lexicographic => (0..n).collect(),
        SweepOrder::RedBlack => {
            let mut v: Vec<usize> = (0..n).filter(|&k| s.colour(k) == 0).collect();
            v.extend((0..n).filter(|&k| s.colour(k) != 0));
            v
        }
    }
}

fn max_residual<S: MonotoneScheme + ?Sized>(s: &S, u: &[f64], policy: Option<&[usize]>) -> f64 {
    (0..s.active().len())
        .map(|k| match policy {
            Some(p) => s.residual_policy(u, k, p[k]),
            None => s.residual(u, k),
        })
        .map(f64::abs)
        .fold(0.0, |a, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) })
}

/// Removes the mean residual on a torus. Shifting by `c` changes every
/// residual by exactly `−δc`.
fn shift_mean<S: MonotoneScheme + ?Sized>(s: &S, u: &mut [f64]) {
    let delta = s.zeroth_order();
    if !s.periodic() || delta <= 0.0 {
        return;
    }
    let n = s.active().len();
    let mean = (0..n).map(|k| s.residual(u, k)).sum::<f64>() / n as f64;
    for &i in s.active() {
        u[i] += mean / delta;
    }
}

struct Relaxer {
    omega: f64,
    best: f64,
    rising: usize,
    stalled: usize,
    prev: f64,
}

impl Relaxer {
    fn new(omega: f64, res: f64) -> Self {
        Self {
            omega,
            best: res,
            rising: 0,
            stalled: 0,
            prev: res,
        }
    }

    /// Pulls `omega` toward 1 when the residual grows or stops improving
    /// (over-relaxed nonlinear sweeps can lock into a cycle). Early
    /// transients of over-relaxation are tolerated.
    fn observe(&mut self, res: f64) {
        if res > self.prev {
            self.rising += 1;
        } else {
            self.rising = 0;
        }
        if res < 0.99 * self.best {
            self.stalled = 0;
        } else {
            self.stalled += 1;
        }
        let blown = res > 1e3 * self.best;
        if (self.rising >= 8 || self.stalled >= 8 || blown) && self.omega > 1.0 {
            self.omega = 1.0 + 0.5 * (self.omega - 1.0);
            if self.omega < 1.01 {
                self.omega = 1.0;
            }
            self.rising = 0;
            self.stalled = 0;
        }
        self.best = self.best.min(res);
        self.prev = res;
    }
}

/// Solves the scheme in place, starting from `u`.
pub fn solve_scheme<S: MonotoneScheme + ?Sized>(
    s: &S,
    u: &mut [f64],
    opts: &SolveOptions,
) -> Result<ConvergenceRecord> {
    if u.len() != s.storage_len() {
        return domain("value vector does not match the scheme");
    }
    if !(opts.tol > 0.0) || opts.check_every == 0 {
        return domain("solver needs tol > 0 and check_every >= 1");
    }
    let method = match opts.method {
        Method::Auto if s.prefers_howard() => Method::Howard,
        Method::Auto => Method::NonlinearSor,
        m => m,
    };
    let omega0 = opts.omega.unwrap_or_else(|| auto_omega(&s.relaxation_extents()));
    if !(0.0 < omega0 && omega0 < 2.0) {
        return domain("relaxation factor must lie in (0, 2)");
    }
    let order = sweep_order(s, opts.order);
    let mut rec = ConvergenceRecord {
        converged: false,
        sweeps: 0,
        residual: f64::NAN,
        history: Vec::new(),
        method,
        order: opts.order,
        omega_initial: omega0,
        omega_final: omega0,
        policies: 0,
        tol_effective: opts.tol,
    };
    shift_mean(s, u);
    let mut opts = opts.clone();
    opts.tol = opts.tol.max(ROUNDOFF * s.equation_scale(u));
    rec.tol_effective = opts.tol;
    let opts = &opts;
    let res = max_residual(s, u, None);
    rec.history.push(ResidualSample {
        sweep: 0,
        residual: res,
    });
    rec.residual = res;
    if res <= opts.tol {
        rec.converged = true;
        return Ok(rec);
    }
    match method {
        Method::Howard if s.max_pieces() > 1 => howard(s, u, opts, &order, &mut rec)?,
        _ => {
            let mut relax = Relaxer::new(omega0, res);
            sor_loop(s, u, opts, &order, None, &mut relax, &mut rec, opts.max_iter)?;
            rec.omega_final = relax.omega;
        }
    }
    if !rec.converged {
        return Err(Error::NotConverged {
            iterations: rec.sweeps,
            residual: rec.residual,
            history: rec.history.iter().map(|h| h.residual).collect(),
        });
    }
    Ok(rec)
}

#[allow(clippy::too_many_arguments)]
fn sor_loop<S: MonotoneScheme + ?Sized>(
    s: &S,
    u: &mut [f64],
    opts: &SolveOptions,
    order: &[usize],
    policy: Option<&[usize]>,
    relax: &mut Relaxer,
    rec: &mut ConvergenceRecord,
    budget: usize,
) -> Result<()> {
    let active = s.active();
    let tol = if policy.is_some() { 0.1 * opts.tol } else { opts.tol };
    let start = rec.sweeps;
    loop {
        for _ in 0..opts.check_every {
            let w = relax.omega;
            for &k in order {
                let i = active[k];
                let (v, _) = s.local_solve(u, k, policy.map(|p| p[k]));
                u[i] += w * (v - u[i]);
            }
        }
        rec.sweeps += opts.check_every;
        shift_mean(s, u);
        let res = max_residual(s, u, policy);
        rec.history.push(ResidualSample {
            sweep: rec.sweeps,
            residual: res,
        });
        rec.residual = res;
        if !res.is_finite() {
            return Err(Error::NotConverged {
                iterations: rec.sweeps,
                residual: res,
                history: rec.history.iter().map(|h| h.residual).collect(),
            });
        }
        if res <= tol {
            rec.converged = policy.is_none();
            return Ok(());
        }
        if rec.sweeps - start >= budget || rec.sweeps >= opts.max_iter {
            return Ok(());
        }
        relax.observe(res);
    }
}

fn howard<S: MonotoneScheme + ?Sized>(
    s: &S,
    u: &mut [f64],
    opts: &SolveOptions,
    order: &[usize],
    rec: &mut ConvergenceRecord,
) -> Result<()> {
    let n = s.active().len();
    let mut policy: Vec<usize> = (0..n).map(|k| s.local_solve(u, k, None).1).collect();
    let mut relax = Relaxer::new(rec.omega_initial, f64::INFINITY);
    for _ in 0..MAX_POLICIES {
        rec.policies += 1;
        relax.prev = f64::INFINITY;
        relax.best = f64::INFINITY;
        let budget = opts.max_iter.saturating_sub(rec.sweeps);
        sor_loop(s, u, opts, order, Some(&policy), &mut relax, rec, budget)?;
        let res = max_residual(s, u, None);
        rec.residual = res;
        if res <= opts.tol {
            rec.converged = true;
            break;
        }
        let next: Vec<usize> = (0..n).map(|k| s.local_solve(u, k, None).1).collect();
        if next == policy || rec.sweeps >= opts.max_iter {
            break;
        }
        policy = next;
    }
    rec.omega_final = relax.omega;
    if !rec.converged && rec.policies >= MAX_POLICIES {
        // finish with plain nonlinear sweeps from the Howard iterate
        let budget = opts.max_iter.saturating_sub(rec.sweeps);
        let mut relax = Relaxer::new(1.0, rec.residual);
        sor_loop(s, u, opts, order, None, &mut relax, rec, budget)?;
    }
    Ok(())
}

/// Solves a Dirichlet (or torus) problem; returns the solution grid.
pub fn solve_dirichlet(p: &DiscreteProblem, tol: f64, max_iter: usize) -> Result<(GridField, ConvergenceRecord)> {
    solve_with(
        p,
        &SolveOptions {
            tol,
            max_iter,
            ..Default::default()
        },
    )
}

pub fn solve_with(p: &DiscreteProblem, opts: &SolveOptions) -> Result<(GridField, ConvergenceRecord)> {
    let mut g = p.grid.clone();
    let rec = solve_scheme(p, &mut g.values, opts)?;
    Ok((g, rec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdsolver::scheme::{cell_problem, discretize};
    use crate::geometry::DomainSpec;
    use crate::linalg::SymMat;
    use crate::operators::{
        CoefficientField, EllipticOperatorSpec, Extremum, OperatorKind, Sign, SourceAndBoundaryData,
    };

    fn square() -> DomainSpec {
        DomainSpec::Rectangle {
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 1.0],
        }
    }

    #[test]
    fn harmonic_quadratic_is_reproduced() {
        let op = EllipticOperatorSpec::laplacian(2);
        let data = SourceAndBoundaryData::new("0", "x1*x1 - x2*x2", vec![]).unwrap();
        let p = discretize(&op, &square(), &data, 1.0 / 64.0, 1, 1.0).unwrap();
        let (g, rec) = solve_dirichlet(&p, 1e-10, 100_000).unwrap();
        assert!(rec.converged);
        for k in 0..g.len() {
            let x = g.position(k);
            if g.mask[k] != crate::fdsolver::NodeKind::Exterior {
                assert!((g.values[k] - (x[0] * x[0] - x[1] * x[1])).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn constants_are_solutions_for_every_kind() {
        let bell = EllipticOperatorSpec::new(
            OperatorKind::Bellman {
                members: vec![
                    CoefficientField::constant(&SymMat::identity(2)),
                    CoefficientField::constant(&SymMat::diag(&[2.0, 1.0])),
                ],
                extremum: Extremum::Sup,
            },
            2,
            1.0,
            2.0,
            vec![],
        )
        .unwrap();
        let ops = [
            EllipticOperatorSpec::laplacian(2),
            EllipticOperatorSpec::pucci(2, 1.0, 2.0, Sign::Plus).unwrap(),
            EllipticOperatorSpec::pucci(2, 1.0, 2.0, Sign::Minus).unwrap(),
            bell,
        ];
        let data = SourceAndBoundaryData::new("0", "0.7", vec![]).unwrap();
        for op in &ops {
            let mut p = discretize(op, &square(), &data, 1.0 / 16.0, 2, 1.0).unwrap();
            p.grid.fill_interior(-1.0);
            let (g, _) = solve_dirichlet(&p, 1e-9, 100_000).unwrap();
            let m = g
                .values
                .iter()
                .zip(&g.mask)
                .filter(|(_, m)| **m != crate::fdsolver::NodeKind::Exterior)
                .map(|(v, _)| (v - 0.7).abs())
                .fold(0.0, f64::max);
            assert!(m < 1e-9, "{op:?}: {m}");
        }
    }

    #[test]
    fn howard_and_sor_agree_on_bellman() {
        let bell = EllipticOperatorSpec::new(
            OperatorKind::Bellman {
                members: vec![
                    CoefficientField::constant(&SymMat::diag(&[1.0, 3.0])),
                    CoefficientField::constant(&SymMat::diag(&[3.0, 1.0])),
                ],
                extremum: Extremum::Inf,
            },
            2,
            1.0,
            3.0,
            vec![],
        )
        .unwrap();
        let data = SourceAndBoundaryData::new("1", "sin(3*x1)*x2", vec![]).unwrap();
        let p = discretize(&bell, &square(), &data, 1.0 / 24.0, 1, 1.0).unwrap();
        let mut opts = SolveOptions {
            tol: 1e-9,
            method: Method::Howard,
            ..Default::default()
        };
        let (a, ra) = solve_with(&p, &opts).unwrap();
        assert!(ra.policies >= 1);
        opts.method = Method::NonlinearSor;
        let (b, _) = solve_with(&p, &opts).unwrap();
        let d = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(d < 1e-8, "{d}");
    }

    #[test]
    fn red_black_meets_the_same_tolerance() {
        let op = EllipticOperatorSpec::pucci(2, 1.0, 2.0, Sign::Plus).unwrap();
        let data = SourceAndBoundaryData::new("0", "cos(3*x1)*x2", vec![]).unwrap();
        let p = discretize(&op, &square(), &data, 1.0 / 32.0, 2, 1.0).unwrap();
        let (a, _) = solve_dirichlet(&p, 1e-8, 100_000).unwrap();
        let (b, rb) = solve_with(
            &p,
            &SolveOptions {
                tol: 1e-8,
                order: SweepOrder::RedBlack,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(rb.residual <= 1e-8);
        let d = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(d < 1e-8);
    }

    #[test]
    fn iteration_cap_reports_history() {
        let op = EllipticOperatorSpec::laplacian(2);
        let data = SourceAndBoundaryData::new("0", "x1", vec![]).unwrap();
        let p = discretize(&op, &square(), &data, 1.0 / 64.0, 1, 1.0).unwrap();
        match solve_dirichlet(&p, 1e-14, 20) {
            Err(Error::NotConverged { history, .. }) => assert!(history.len() >= 2),
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn torus_cell_problem_for_constant_operator() {
        let op = EllipticOperatorSpec::pucci(2, 1.0, 2.0, Sign::Plus).unwrap();
        let m = SymMat::diag(&[1.0, -0.5]);
        let p = cell_problem(&op, &m, 0.1, 16, 2).unwrap();
        let (g, _) = solve_dirichlet(&p, 1e-10, 10_000).unwrap();
        // v = F(M)/δ exactly
        for v in &g.values {
            assert!((0.1 * v - 1.5).abs() < 1e-9);
        }
    }
}
