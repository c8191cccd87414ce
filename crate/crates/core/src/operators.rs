//! Uniformly elliptic operators `F(M, y)`, periodic in `y`, plus boundary and
//! source data.

use crate::error::{domain, Result};
use crate::expr::Expr;
use crate::linalg::{Frame, SymMat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extremum {
    Sup,
    Inf,
}

/// Pucci extremal operator. `M⁺ = Λ Σ e⁺ + λ Σ e⁻`, and `M⁻` swaps the roles.
pub fn pucci_eval(m: &SymMat, lambda: f64, big_lambda: f64, sign: Sign) -> f64 {
    let (pos, neg) = match sign {
        Sign::Plus => (big_lambda, lambda),
        Sign::Minus => (lambda, big_lambda),
    };
    m.eigenvalues()
        .into_iter()
        .map(|e| if e > 0.0 { pos * e } else { neg * e })
        .sum()
}

/// Checked variant for raw rows.
pub fn pucci_eval_rows(rows: &[Vec<f64>], lambda: f64, big_lambda: f64, sign: Sign) -> Result<f64> {
    check_constants(lambda, big_lambda)?;
    Ok(pucci_eval(&SymMat::from_rows(rows)?, lambda, big_lambda, sign))
}

fn check_constants(lambda: f64, big_lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && big_lambda >= lambda && big_lambda.is_finite()) {
        return domain(format!("need 0 < lambda <= Lambda, got {lambda}, {big_lambda}"));
    }
    Ok(())
}

/// Symmetric matrix field `a(y)` given by expressions. Only the upper
/// triangle is read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoefficientField {
    pub entries: Vec<Vec<Expr>>,
}

impl CoefficientField {
    pub fn parse(rows: &[Vec<&str>]) -> Result<Self> {
        let entries = rows
            .iter()
            .map(|r| r.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let f = Self { entries };
        f.check_shape()?;
        Ok(f)
    }

    pub fn constant(m: &SymMat) -> Self {
        let n = m.dim();
        Self {
            entries: (0..n)
                .map(|i| (0..n).map(|j| Expr::Const(m.get(i, j))).collect())
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    fn check_shape(&self) -> Result<()> {
        let n = self.entries.len();
        if !(1..=3).contains(&n) || self.entries.iter().any(|r| r.len() != n) {
            return domain("coefficient field must be a square n x n table with n <= 3");
        }
        Ok(())
    }

    pub fn eval(&self, y: &[f64]) -> SymMat {
        let n = self.dim();
        let mut m = SymMat::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, self.entries[i][j].eval(&[], y));
            }
        }
        m
    }

    pub fn depends_on_y(&self) -> bool {
        self.entries.iter().flatten().any(|e| e.depends_on_y())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorKind {
    PucciPlus,
    PucciMinus,
    Linear {
        a: CoefficientField,
    },
    Bellman {
        members: Vec<CoefficientField>,
        extremum: Extremum,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticOperatorSpec {
    #[serde(flatten)]
    pub kind: OperatorKind,
    pub dim: usize,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    #[serde(default)]
    pub period: Vec<f64>,
}

pub const MAX_BELLMAN_MEMBERS: usize = 64;

impl EllipticOperatorSpec {
    pub fn pucci(dim: usize, lambda: f64, big_lambda: f64, sign: Sign) -> Result<Self> {
        let kind = match sign {
            Sign::Plus => OperatorKind::PucciPlus,
            Sign::Minus => OperatorKind::PucciMinus,
        };
        Self::new(kind, dim, lambda, big_lambda, vec![1.0; dim])
    }

    pub fn laplacian(dim: usize) -> Self {
        Self::new(
            OperatorKind::Linear {
                a: CoefficientField::constant(&SymMat::identity(dim)),
            },
            dim,
            1.0,
            1.0,
            vec![1.0; dim],
        )
        .expect("identity coefficients are valid")
    }

    pub fn linear(a: CoefficientField, lambda: f64, big_lambda: f64, period: Vec<f64>) -> Result<Self> {
        let dim = a.dim();
        Self::new(OperatorKind::Linear { a }, dim, lambda, big_lambda, period)
    }

    pub fn new(kind: OperatorKind, dim: usize, lambda: f64, big_lambda: f64, period: Vec<f64>) -> Result<Self> {
        let mut op = Self {
            kind,
            dim,
            lambda,
            big_lambda,
            period,
        };
        op.normalize()?;
        Ok(op)
    }

    /// Fills a default unit period and checks structural constraints.
    pub fn normalize(&mut self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return domain(format!("dimension {} unsupported (1..=3)", self.dim));
        }
        check_constants(self.lambda, self.big_lambda)?;
        if self.period.is_empty() {
            self.period = vec![1.0; self.dim];
        }
        if self.period.len() != self.dim || self.period.iter().any(|p| !(*p > 0.0)) {
            return domain("period must list one positive length per axis");
        }
        match &self.kind {
            OperatorKind::Linear { a } => {
                a.check_shape()?;
                if a.dim() != self.dim {
                    return domain("coefficient field dimension mismatch");
                }
            }
            OperatorKind::Bellman { members, .. } => {
                if members.is_empty() || members.len() > MAX_BELLMAN_MEMBERS {
                    return domain(format!("Bellman family needs 1..={MAX_BELLMAN_MEMBERS} members"));
                }
                for a in members {
                    a.check_shape()?;
                    if a.dim() != self.dim {
                        return domain("coefficient field dimension mismatch");
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.kind, OperatorKind::Linear { .. })
    }

    pub fn depends_on_y(&self) -> bool {
        match &self.kind {
            OperatorKind::Linear { a } => a.depends_on_y(),
            OperatorKind::Bellman { members, .. } => members.iter().any(|a| a.depends_on_y()),
            _ => false,
        }
    }

    /// The operator frozen at the fast variable `y`.
    pub fn local_at(&self, y: &[f64]) -> LocalOperator {
        match &self.kind {
            OperatorKind::PucciPlus => LocalOperator::Pucci {
                sign: Sign::Plus,
                lambda: self.lambda,
                big_lambda: self.big_lambda,
            },
            OperatorKind::PucciMinus => LocalOperator::Pucci {
                sign: Sign::Minus,
                lambda: self.lambda,
                big_lambda: self.big_lambda,
            },
            OperatorKind::Linear { a } => LocalOperator::Linear(a.eval(y)),
            OperatorKind::Bellman { members, extremum } => LocalOperator::Bellman {
                members: members.iter().map(|a| a.eval(y)).collect(),
                extremum: *extremum,
            },
        }
    }

    pub fn eval(&self, m: &SymMat, y: &[f64]) -> f64 {
        self.local_at(y).eval(m)
    }
}

/// `F(·, y)` at a fixed `y`.
#[derive(Clone, Debug, PartialEq)]
pub enum LocalOperator {
    Pucci { sign: Sign, lambda: f64, big_lambda: f64 },
    Linear(SymMat),
    Bellman { members: Vec<SymMat>, extremum: Extremum },
}

impl LocalOperator {
    pub fn eval(&self, m: &SymMat) -> f64 {
        match self {
            LocalOperator::Pucci {
                sign,
                lambda,
                big_lambda,
            } => pucci_eval(m, *lambda, *big_lambda, *sign),
            LocalOperator::Linear(a) => a.dot(m),
            LocalOperator::Bellman { members, extremum } => {
                let vals = members.iter().map(|a| a.dot(m));
                match extremum {
                    Extremum::Sup => vals.fold(f64::NEG_INFINITY, f64::max),
                    Extremum::Inf => vals.fold(f64::INFINITY, f64::min),
                }
            }
        }
    }

    /// Operator in rotated coordinates `y = Q ξ`: `G(N) = F(Q N Qᵀ)`.
    pub fn rotated(&self, q: &Frame) -> LocalOperator {
        match self {
            LocalOperator::Pucci { .. } => self.clone(),
            LocalOperator::Linear(a) => LocalOperator::Linear(a.congruence(q)),
            LocalOperator::Bellman { members, extremum } => LocalOperator::Bellman {
                members: members.iter().map(|a| a.congruence(q)).collect(),
                extremum: *extremum,
            },
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub samples: usize,
    /// Worst excess over `λ tr N ≤ F(M+N) − F(M) ≤ Λ tr N`.
    pub ellipticity_violation: f64,
    /// Worst `|F(tM) − tF(M)|` relative to `max(1, |tF(M)|)`.
    pub homogeneity_error: f64,
    pub periodicity_error: f64,
    /// Worst distance of a coefficient eigenvalue outside `[λ, Λ]`.
    pub coefficient_violation: f64,
    pub failures: Vec<String>,
    pub passed: bool,
}

const VALIDATION_TOL: f64 = 1e-9;

pub fn validate_operator(op: &EllipticOperatorSpec, samples: usize, seed: u64) -> Result<ValidationReport> {
    if samples == 0 {
        return domain("validate_operator needs at least one sample");
    }
    let mut op = op.clone();
    op.normalize()?;
    let n = op.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = ValidationReport {
        samples,
        ..Default::default()
    };
    let rand_sym = |rng: &mut ChaCha8Rng| {
        let mut m = SymMat::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        m
    };
    for _ in 0..samples {
        let y: Vec<f64> = op.period.iter().map(|p| rng.gen_range(0.0..*p)).collect();
        let m = rand_sym(&mut rng);
        // N = B Bᵀ is positive semidefinite
        let b = rand_sym(&mut rng);
        let mut nn = SymMat::zeros(n);
        for i in 0..n {
            for j in i..n {
                nn.set(i, j, (0..n).map(|k| b.get(i, k) * b.get(j, k)).sum());
            }
        }
        let t = rng.gen_range(0.01..10.0);
        let local = op.local_at(&y);
        let f_m = local.eval(&m);
        let diff = local.eval(&m.add(&nn)) - f_m;
        let tr = nn.trace();
        let scale = 1.0 + f_m.abs() + tr;
        let lo = op.lambda * tr - diff;
        let hi = diff - op.big_lambda * tr;
        rep.ellipticity_violation = rep.ellipticity_violation.max(lo.max(hi) / scale);
        let hom = (local.eval(&m.scale(t)) - t * f_m).abs() / (t * f_m).abs().max(1.0);
        rep.homogeneity_error = rep.homogeneity_error.max(hom);
        let shift: Vec<f64> = op.period.iter().map(|p| p * rng.gen_range(-3i64..=3) as f64).collect();
        let ys: Vec<f64> = y.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let per = (op.eval(&m, &ys) - f_m).abs() / f_m.abs().max(1.0);
        rep.periodicity_error = rep.periodicity_error.max(per);
        let coeffs: Vec<SymMat> = match &local {
            LocalOperator::Linear(a) => vec![*a],
            LocalOperator::Bellman { members, .. } => members.clone(),
            LocalOperator::Pucci { .. } => vec![],
        };
        for a in coeffs {
            for e in a.eigenvalues() {
                let v = (op.lambda - e).max(e - op.big_lambda);
                rep.coefficient_violation = rep.coefficient_violation.max(v);
            }
        }
    }
    if rep.ellipticity_violation > VALIDATION_TOL {
        rep.failures.push(format!(
            "ellipticity bounds violated by {:.3e}",
            rep.ellipticity_violation
        ));
    }
    if rep.homogeneity_error > VALIDATION_TOL {
        rep.failures
            .push(format!("positive homogeneity error {:.3e}", rep.homogeneity_error));
    }
    if rep.periodicity_error > VALIDATION_TOL {
        rep.failures
            .push(format!("periodicity error {:.3e}", rep.periodicity_error));
    }
    if rep.coefficient_violation > VALIDATION_TOL {
        rep.failures.push(format!(
            "coefficient eigenvalue outside [lambda, Lambda] by {:.3e}",
            rep.coefficient_violation
        ));
    }
    rep.passed = rep.failures.is_empty();
    Ok(rep)
}

/// Source `f(x, y)` and boundary datum `g(x, y)`, periodic in `y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceAndBoundaryData {
    #[serde(default = "zero_expr")]
    pub f: Expr,
    pub g: Expr,
    #[serde(default)]
    pub period: Vec<f64>,
}

fn zero_expr() -> Expr {
    Expr::Const(0.0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DataReport {
    pub g_sup: f64,
    pub grad_sup: f64,
    pub hessian_sup: f64,
    pub f_sup: f64,
    pub periodicity_error: f64,
    pub passed: bool,
}

impl SourceAndBoundaryData {
    pub fn new(f: &str, g: &str, period: Vec<f64>) -> Result<Self> {
        Ok(Self {
            f: Expr::parse(f)?,
            g: Expr::parse(g)?,
            period,
        })
    }

    fn period_for(&self, dim: usize) -> Vec<f64> {
        if self.period.is_empty() {
            vec![1.0; dim]
        } else {
            self.period.clone()
        }
    }

    pub fn g(&self, x: &[f64], y: &[f64]) -> f64 {
        self.g.eval(x, y)
    }

    pub fn f(&self, x: &[f64], y: &[f64]) -> f64 {
        self.f.eval(x, y)
    }

    /// Estimates `‖g‖`, `‖∇_y g‖`, `‖D²_y g‖` on one period cell at the slow
    /// point `x` by dense sampling and finite differences.
    pub fn check(&self, x: &[f64], dim: usize, per_axis: usize, seed: u64) -> Result<DataReport> {
        let period = self.period_for(dim);
        if period.len() != dim {
            return domain("data period length does not match the dimension");
        }
        let total = per_axis.pow(dim as u32);
        if total == 0 || total > 4_000_000 {
            return domain("sample count per axis out of range");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hstep = 1e-4 * period.iter().cloned().fold(f64::INFINITY, f64::min);
        let (mut gs, mut gr, mut hs, mut fs, mut pe) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let mut y = vec![0.0; dim];
        for k in 0..total {
            let mut r = k;
            for d in 0..dim {
                y[d] = period[d] * (r % per_axis) as f64 / per_axis as f64;
                r /= per_axis;
            }
            let g0 = self.g(x, &y);
            gs = gs.max(g0.abs());
            fs = fs.max(self.f(x, &y).abs());
            let mut yp = y.clone();
            let mut grad2 = 0.0;
            for i in 0..dim {
                yp[i] = y[i] + hstep;
                let gp = self.g(x, &yp);
                yp[i] = y[i] - hstep;
                let gm = self.g(x, &yp);
                yp[i] = y[i];
                grad2 += ((gp - gm) / (2.0 * hstep)).powi(2);
                hs = hs.max(((gp - 2.0 * g0 + gm) / (hstep * hstep)).abs());
            }
            gr = gr.max(grad2.sqrt());
            let shifted: Vec<f64> = y
                .iter()
                .zip(&period)
                .map(|(a, p)| a + p * rng.gen_range(-2i64..=2) as f64)
                .collect();
            pe = pe.max(
                (self.g(x, &shifted) - g0)
                    .abs()
                    .max((self.f(x, &shifted) - self.f(x, &y)).abs()),
            );
        }
        let finite = gs.is_finite() && gr.is_finite() && hs.is_finite() && fs.is_finite();
        Ok(DataReport {
            g_sup: gs,
            grad_sup: gr,
            hessian_sup: hs,
            f_sup: fs,
            periodicity_error: pe,
            passed: finite && pe <= 1e-9 * (1.0 + gs),
        })
    }
}

/// `F̄(M)` from the approximate cell problem `F(M + D²v, y) − δv = 0` on
/// the periodic cell; `F̄ ≈ δ v` up to the reported spread.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EffectiveEstimate {
    /// `δ · mean(v)`.
    pub value: f64,
    /// `δ · (max v − min v)`.
    pub spread: f64,
    pub sweeps: usize,
    pub residual: f64,
}

pub fn effective_operator_estimate(
    op: &EllipticOperatorSpec,
    m: &SymMat,
    delta_ergodic: f64,
    cell_grid: usize,
) -> Result<EffectiveEstimate> {
    use crate::fdsolver::{cell_problem, solve_dirichlet};
    if !(delta_ergodic > 0.0) {
        return domain("delta_ergodic must be positive");
    }
    let p = cell_problem(op, m, delta_ergodic, cell_grid, 2)?;
    let scale = 1.0 + m.max_abs() * op.big_lambda * op.dim as f64;
    let (g, rec) = solve_dirichlet(&p, 1e-10 * scale, 2_000_000)?;
    let n = g.values.len() as f64;
    let mean = g.values.iter().sum::<f64>() / n;
    let lo = g.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = g.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(EffectiveEstimate {
        value: delta_ergodic * mean,
        spread: delta_ergodic * (hi - lo),
        sweeps: rec.sweeps,
        residual: rec.residual,
    })
}
