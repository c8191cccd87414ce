//! Assembled monotone schemes. Every node equation has the form
//! `opt_p (B_p(u) − C_p u_x) − δ u_x = f_x`, with `B_p` nondecreasing in
//! the neighbour values and `C_p > 0`.

use super::grid::{GridField, NodeKind};
use super::stencil::{local_pieces, PieceSet, Stencil};
use crate::error::{domain, Error, Result};
use crate::geometry::DomainSpec;
use crate::linalg::SymMat;
use crate::operators::{EllipticOperatorSpec, Extremum, LocalOperator, SourceAndBoundaryData};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// What the solver needs from a discretization.
pub trait MonotoneScheme: Sync {
    /// Length of the value vector.
    fn storage_len(&self) -> usize;
    /// Storage indices of the unknowns, in sweep order.
    fn active(&self) -> &[usize];
    /// Exact solution of the node equation at active position `k` with the
    /// neighbours frozen, and the index of the optimal piece. With a policy
    /// only that piece is used.
    fn local_solve(&self, u: &[f64], k: usize, policy: Option<usize>) -> (f64, usize);
    /// `opt_p(B_p − C_p u) − δu − f` at active position `k`.
    fn residual(&self, u: &[f64], k: usize) -> f64;
    /// Residual of the single piece `p`.
    fn residual_policy(&self, u: &[f64], k: usize, p: usize) -> f64;
    /// Node counts per axis, used to pick the relaxation factor.
    fn relaxation_extents(&self) -> Vec<usize>;
    /// Colour for red-black ordering.
    fn colour(&self, k: usize) -> usize;
    fn zeroth_order(&self) -> f64 {
        0.0
    }
    fn periodic(&self) -> bool {
        false
    }
    fn max_pieces(&self) -> usize;
    /// Typical size of the terms of a node equation at `u`, used to bound
    /// the attainable residual.
    fn equation_scale(&self, u: &[f64]) -> f64;
    /// Whether `Method::Auto` should use policy iteration.
    fn prefers_howard(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub passed: bool,
    pub nodes: usize,
    /// Smallest stencil weight over all pieces (after scaling by `h²`).
    pub min_weight: f64,
    pub min_pieces: usize,
    pub max_pieces: usize,
}

#[derive(Debug)]
struct Compiled {
    constants: Vec<f64>,
    /// `(direction, w / h²)`.
    weights: Vec<Vec<(usize, f64)>>,
    /// `2 Σ w / h²`.
    diag: Vec<f64>,
    sup: bool,
}

impl Compiled {
    fn new(set: &PieceSet, h: f64) -> Self {
        let h2 = h * h;
        let weights: Vec<Vec<(usize, f64)>> = set
            .pieces
            .iter()
            .map(|p| p.weights.iter().map(|&(d, w)| (d, w / h2)).collect())
            .collect();
        let diag = weights
            .iter()
            .map(|w| 2.0 * w.iter().map(|x| x.1).sum::<f64>())
            .collect();
        Self {
            constants: set.pieces.iter().map(|p| p.constant).collect(),
            weights,
            diag,
            sup: set.extremum == Extremum::Sup,
        }
    }
}

const MAX_DIRS: usize = 32;

/// A monotone discretization on a masked Cartesian grid (or a torus).
#[derive(Debug)]
pub struct DiscreteProblem {
    /// Initial guess on interior nodes and Dirichlet data on boundary nodes.
    pub grid: GridField,
    pub stencil: Stencil,
    pub epsilon: f64,
    /// Zeroth-order coefficient (`δ` in `F_h[u] − δu = f`).
    pub delta: f64,
    /// Source per active position.
    pub source: Vec<f64>,
    pub certificate: Certificate,
    active: Vec<usize>,
    nbr: Vec<usize>,
    sets: Vec<Arc<Compiled>>,
    bellman: bool,
}

impl DiscreteProblem {
    /// Assembles the scheme on the interior nodes of `grid`. `local` gives the
    /// frozen operator at a node position, `source` the right-hand side.
    pub fn assemble(
        grid: GridField,
        stencil: Stencil,
        local: &dyn Fn(&[f64]) -> LocalOperator,
        source: &dyn Fn(&[f64]) -> f64,
        delta: f64,
        offset: Option<&SymMat>,
        epsilon: f64,
    ) -> Result<Self> {
        if stencil.dim != grid.dim() {
            return domain("stencil and grid dimensions differ");
        }
        if stencil.directions.len() > MAX_DIRS {
            return domain("too many stencil directions");
        }
        if delta < 0.0 || (grid.periodic && delta <= 0.0) {
            return domain("zeroth-order coefficient must be >= 0 (> 0 on a torus)");
        }
        let nd = stencil.directions.len();
        let active: Vec<usize> = (0..grid.len())
            .filter(|&k| grid.mask[k] == NodeKind::Interior)
            .collect();
        if active.is_empty() {
            return domain("grid has no interior nodes; refine h");
        }
        let mut nbr = Vec::with_capacity(active.len() * 2 * nd);
        let mut sets = Vec::with_capacity(active.len());
        let mut src = Vec::with_capacity(active.len());
        let mut last: Option<(LocalOperator, Arc<Compiled>)> = None;
        let mut bellman = false;
        let mut cert = Certificate {
            passed: true,
            nodes: active.len(),
            min_weight: f64::INFINITY,
            min_pieces: usize::MAX,
            max_pieces: 0,
        };
        for &k in &active {
            for e in &stencil.directions {
                for s in [1, -1] {
                    let step: Vec<i64> = e.iter().map(|c| s * c).collect();
                    let j = grid.offset(k, &step).filter(|&j| grid.mask[j] != NodeKind::Exterior);
                    let j = j.ok_or_else(|| Error::Certificate {
                        node: k,
                        detail: format!("stencil direction {step:?} reaches an exterior node"),
                    })?;
                    nbr.push(j);
                }
            }
            let x = grid.position(k);
            let op = local(&x);
            bellman |= matches!(op, LocalOperator::Bellman { .. });
            let compiled = match &last {
                Some((prev, c)) if *prev == op => c.clone(),
                _ => {
                    let set = local_pieces(&op, &stencil, offset).map_err(|f| Error::Certificate {
                        node: k,
                        detail: format!("at x = {x:?}: {}", f.detail),
                    })?;
                    if set.pieces.is_empty() {
                        return Err(Error::Certificate {
                            node: k,
                            detail: "no monotone piece available on this stencil".into(),
                        });
                    }
                    for p in &set.pieces {
                        for &(_, w) in &p.weights {
                            cert.min_weight = cert.min_weight.min(w);
                        }
                    }
                    let c = Arc::new(Compiled::new(&set, grid.h));
                    last = Some((op, c.clone()));
                    c
                }
            };
            cert.min_pieces = cert.min_pieces.min(compiled.diag.len());
            cert.max_pieces = cert.max_pieces.max(compiled.diag.len());
            sets.push(compiled);
            src.push(source(&x));
        }
        Ok(Self {
            grid,
            stencil,
            epsilon,
            delta,
            source: src,
            certificate: cert,
            active,
            nbr,
            sets,
            bellman,
        })
    }

    fn sums(&self, u: &[f64], k: usize, out: &mut [f64; MAX_DIRS]) {
        let nd = self.stencil.directions.len();
        let base = k * 2 * nd;
        for d in 0..nd {
            out[d] = u[self.nbr[base + 2 * d]] + u[self.nbr[base + 2 * d + 1]];
        }
    }

    /// Residual at every grid node (zero off the interior).
    pub fn residual_field(&self, u: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; u.len()];
        for (k, &i) in self.active.iter().enumerate() {
            r[i] = self.residual(u, k);
        }
        r
    }

    pub fn max_residual(&self, u: &[f64]) -> f64 {
        (0..self.active.len())
            .map(|k| self.residual(u, k).abs())
            .fold(0.0, f64::max)
    }
}

impl MonotoneScheme for DiscreteProblem {
    fn storage_len(&self) -> usize {
        self.grid.len()
    }

    fn active(&self) -> &[usize] {
        &self.active
    }

    fn local_solve(&self, u: &[f64], k: usize, policy: Option<usize>) -> (f64, usize) {
        let mut s = [0.0; MAX_DIRS];
        self.sums(u, k, &mut s);
        let c = &self.sets[k];
        let f = self.source[k];
        let solve_piece = |p: usize| {
            let b = c.constants[p] + c.weights[p].iter().map(|&(d, w)| w * s[d]).sum::<f64>();
            (b - f) / (c.diag[p] + self.delta)
        };
        if let Some(p) = policy {
            return (solve_piece(p), p);
        }
        let mut best = (solve_piece(0), 0);
        for p in 1..c.diag.len() {
            let v = solve_piece(p);
            if (c.sup && v > best.0) || (!c.sup && v < best.0) {
                best = (v, p);
            }
        }
        best
    }

    fn residual(&self, u: &[f64], k: usize) -> f64 {
        let mut s = [0.0; MAX_DIRS];
        self.sums(u, k, &mut s);
        let c = &self.sets[k];
        let x = u[self.active[k]];
        let mut best = if c.sup { f64::NEG_INFINITY } else { f64::INFINITY };
        for p in 0..c.diag.len() {
            let v = c.constants[p] + c.weights[p].iter().map(|&(d, w)| w * s[d]).sum::<f64>() - c.diag[p] * x;
            best = if c.sup { best.max(v) } else { best.min(v) };
        }
        best - self.delta * x - self.source[k]
    }

    fn residual_policy(&self, u: &[f64], k: usize, p: usize) -> f64 {
        let mut s = [0.0; MAX_DIRS];
        self.sums(u, k, &mut s);
        let c = &self.sets[k];
        let x = u[self.active[k]];
        c.constants[p] + c.weights[p].iter().map(|&(d, w)| w * s[d]).sum::<f64>()
            - (c.diag[p] + self.delta) * x
            - self.source[k]
    }

    fn relaxation_extents(&self) -> Vec<usize> {
        if self.grid.periodic {
            // slowest torus mode has wavelength N
            return self.grid.extents.iter().map(|n| n / 2).collect();
        }
        // interior span per axis
        let n = self.grid.dim();
        let mut lo = vec![usize::MAX; n];
        let mut hi = vec![0; n];
        for &i in &self.active {
            let idx = self.grid.multi_index(i);
            for d in 0..n {
                lo[d] = lo[d].min(idx[d]);
                hi[d] = hi[d].max(idx[d]);
            }
        }
        (0..n).map(|d| hi[d] - lo[d] + 2).collect()
    }

    fn colour(&self, k: usize) -> usize {
        self.grid.multi_index(self.active[k]).iter().sum::<usize>() % 2
    }

    fn zeroth_order(&self) -> f64 {
        self.delta
    }

    fn periodic(&self) -> bool {
        self.grid.periodic
    }

    fn max_pieces(&self) -> usize {
        self.certificate.max_pieces
    }

    fn prefers_howard(&self) -> bool {
        self.bellman
    }

    fn equation_scale(&self, u: &[f64]) -> f64 {
        let umax = u.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let dmax = self
            .sets
            .iter()
            .flat_map(|c| c.diag.iter())
            .fold(0.0f64, |a, &b| a.max(b));
        let cmax = self
            .sets
            .iter()
            .flat_map(|c| c.constants.iter())
            .fold(0.0f64, |a, &b| a.max(b.abs()));
        let fmax = self.source.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        umax * (dmax + self.delta) + cmax + fmax
    }
}

/// Dirichlet problem `F(D²u, x/ε) = f(x, x/ε)` in `dom`, `u = g(x, x/ε)` on
/// the boundary (values read at the boundary projection of each node).
pub fn discretize(
    op: &EllipticOperatorSpec,
    dom: &DomainSpec,
    data: &SourceAndBoundaryData,
    h: f64,
    stencil_order: u8,
    epsilon: f64,
) -> Result<DiscreteProblem> {
    if !(epsilon > 0.0) {
        return domain("epsilon must be positive");
    }
    if dom.dim() != op.dim {
        return domain("operator and domain dimensions differ");
    }
    let stencil = Stencil::new(op.dim, stencil_order)?;
    let mut grid = GridField::for_domain(dom, h, &stencil.directions)?;
    let fast = |x: &[f64]| -> Vec<f64> { x.iter().map(|v| v / epsilon).collect() };
    grid.set_boundary(|x| {
        let p = dom.project(x);
        data.g(&p, &fast(&p))
    });
    let (mut sum, mut cnt) = (0.0, 0usize);
    for k in 0..grid.len() {
        if grid.mask[k] == NodeKind::Boundary {
            sum += grid.values[k];
            cnt += 1;
        }
    }
    grid.fill_interior(if cnt > 0 { sum / cnt as f64 } else { 0.0 });
    DiscreteProblem::assemble(
        grid,
        stencil,
        &|x| op.local_at(&fast(x)),
        &|x| data.f(x, &fast(x)),
        0.0,
        None,
        epsilon,
    )
}

/// Approximate cell problem `F(M + D²v, y) − δ v = 0` on the periodic cell,
/// `cell_grid` nodes along the first period.
pub fn cell_problem(
    op: &EllipticOperatorSpec,
    m: &SymMat,
    delta: f64,
    cell_grid: usize,
    stencil_order: u8,
) -> Result<DiscreteProblem> {
    let mut op = op.clone();
    op.normalize()?;
    if m.dim() != op.dim {
        return domain("matrix and operator dimensions differ");
    }
    if cell_grid < 4 {
        return domain("cell grid needs at least 4 nodes per period");
    }
    let h = op.period[0] / cell_grid as f64;
    let mut extents = Vec::with_capacity(op.dim);
    for p in &op.period {
        let n = p / h;
        if (n - n.round()).abs() > 1e-9 || n.round() < 4.0 {
            return domain("periods must be commensurate with the cell grid spacing");
        }
        extents.push(n.round() as usize);
    }
    let grid = GridField::torus(h, extents)?;
    let stencil = Stencil::new(op.dim, stencil_order)?;
    DiscreteProblem::assemble(grid, stencil, &|y| op.local_at(y), &|_| 0.0, delta, Some(m), 1.0)
}
