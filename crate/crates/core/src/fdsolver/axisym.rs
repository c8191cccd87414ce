//! Pucci operators in three dimensions restricted to functions of
//! `(ρ, z)`, `ρ = |(x₁, x₂)|`, on the cylinder `{ρ < R, 0 < z < H}`.
//!
//! For `u(ρ, z)` the Hessian has the eigenvalues of the `(ρ, z)` block and
//! the tangential value `u_ρ / ρ`, so `M±(D²u) = P±(block) + P±(u_ρ/ρ)` with
//! `P±` the scalar Pucci map. On the axis the Hessian is
//! `diag(u_ρρ, u_ρρ, u_zz)`, `u_ρρ ≈ 2 (u(h) − u(0)) / h²`.

use super::scheme::MonotoneScheme;
use super::solve::{ConvergenceRecord, Method, ResidualSample, SweepOrder};
use super::stencil::{pucci_family, Stencil};
use crate::error::{domain, Error, Result};
use crate::operators::Sign;
use faer::prelude::*;
use faer::sparse::SparseColMat;

/// Coefficients on the 3×3 patch `(di, dj) ∈ {−1,0,1}²` (centre slot unused)
/// and the centre weight.
#[derive(Clone, Copy, Debug)]
struct AxPiece {
    coef: [f64; 9],
    diag: f64,
}

fn slot(di: i64, dj: i64) -> usize {
    ((di + 1) * 3 + (dj + 1)) as usize
}

#[derive(Clone, Debug)]
pub struct AxisymmetricPucci {
    pub h: f64,
    pub radius: f64,
    pub height: f64,
    /// Nodes `i = 0..=nr` in `ρ`, `j = 0..=nz` in `z`.
    pub nr: usize,
    pub nz: usize,
    pub sign: Sign,
    pub lambda: f64,
    pub big_lambda: f64,
    /// Piece table per radial index.
    pieces: Vec<Vec<AxPiece>>,
    active: Vec<usize>,
}

impl AxisymmetricPucci {
    pub fn new(radius: f64, height: f64, h: f64, lambda: f64, big_lambda: f64, sign: Sign) -> Result<Self> {
        if !(lambda > 0.0 && big_lambda >= lambda) {
            return domain("need 0 < lambda <= Lambda");
        }
        let nr = (radius / h).round();
        let nz = (height / h).round();
        if !(h > 0.0) || (nr * h - radius).abs() > 1e-9 * radius || (nz * h - height).abs() > 1e-9 * height {
            return domain("radius and height must be integer multiples of h");
        }
        if nr < 2.0 || nz < 2.0 {
            return domain("cylinder needs at least two cells per axis");
        }
        let (nr, nz) = (nr as usize, nz as usize);
        let st = Stencil::new(2, 2)?;
        let fam = pucci_family(&st, lambda, big_lambda);
        let cs = [lambda, big_lambda];
        let h2 = h * h;
        let mut pieces = Vec::with_capacity(nr);
        // axis: 2 P(u_ρρ) + P(u_zz)
        let mut axis = Vec::new();
        for &c1 in &cs {
            for &c2 in &cs {
                let mut coef = [0.0; 9];
                coef[slot(1, 0)] = 4.0 * c1 / h2;
                coef[slot(0, 1)] = c2 / h2;
                coef[slot(0, -1)] = c2 / h2;
                axis.push(AxPiece {
                    coef,
                    diag: (4.0 * c1 + 2.0 * c2) / h2,
                });
            }
        }
        pieces.push(axis);
        for i in 1..nr {
            let rho = i as f64 * h;
            let mut row = Vec::with_capacity(2 * fam.len());
            for (_, w) in &fam {
                let mut base = [0.0; 9];
                let mut diag = 0.0;
                let mut w_rho = 0.0;
                for &(d, x) in w {
                    let e = &st.directions[d];
                    let x = x / h2;
                    base[slot(e[0], e[1])] += x;
                    base[slot(-e[0], -e[1])] += x;
                    diag += 2.0 * x;
                    if e[0] != 0 && e[1] == 0 {
                        w_rho += x;
                    }
                }
                for &c in &cs {
                    let mut coef = base;
                    let mut dg = diag;
                    let t = c / (2.0 * h * rho);
                    if w_rho >= t {
                        coef[slot(1, 0)] += t;
                        coef[slot(-1, 0)] -= t;
                    } else {
                        // one-sided difference keeps the scheme monotone
                        coef[slot(1, 0)] += 2.0 * t;
                        dg += 2.0 * t;
                    }
                    row.push(AxPiece { coef, diag: dg });
                }
            }
            pieces.push(row);
        }
        let mut active = Vec::with_capacity(nr * (nz - 1));
        for i in 0..nr {
            for j in 1..nz {
                active.push(i * (nz + 1) + j);
            }
        }
        Ok(Self {
            h,
            radius,
            height,
            nr,
            nz,
            sign,
            lambda,
            big_lambda,
            pieces,
            active,
        })
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * (self.nz + 1) + j
    }

    pub fn len(&self) -> usize {
        (self.nr + 1) * (self.nz + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Value vector with `g(ρ, z)` on the boundary and `fill` inside.
    pub fn initial(&self, g: impl Fn(f64, f64) -> f64, fill: f64) -> Vec<f64> {
        let mut u = vec![fill; self.len()];
        for i in 0..=self.nr {
            for j in 0..=self.nz {
                if i == self.nr || j == 0 || j == self.nz {
                    u[self.index(i, j)] = g(i as f64 * self.h, j as f64 * self.h);
                }
            }
        }
        u
    }

    /// Bilinear interpolation at `(ρ, z)`.
    pub fn value_at(&self, u: &[f64], rho: f64, z: f64) -> Option<f64> {
        let fr = rho / self.h;
        let fz = z / self.h;
        if !(fr >= 0.0 && fz >= 0.0 && fr <= self.nr as f64 && fz <= self.nz as f64) {
            return None;
        }
        let i = (fr.floor() as usize).min(self.nr - 1);
        let j = (fz.floor() as usize).min(self.nz - 1);
        let (a, b) = (fr - i as f64, fz - j as f64);
        Some(
            (1.0 - a) * (1.0 - b) * u[self.index(i, j)]
                + a * (1.0 - b) * u[self.index(i + 1, j)]
                + (1.0 - a) * b * u[self.index(i, j + 1)]
                + a * b * u[self.index(i + 1, j + 1)],
        )
    }

    /// Interpolates a solution of `coarse` onto this grid as a starting
    /// guess; boundary values come from `g`.
    pub fn prolong(&self, coarse: &AxisymmetricPucci, uc: &[f64], g: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut u = self.initial(g, 0.0);
        for &k in &self.active {
            let (i, j) = (k / (self.nz + 1), k % (self.nz + 1));
            u[k] = coarse.value_at(uc, i as f64 * self.h, j as f64 * self.h).unwrap_or(0.0);
        }
        u
    }

    fn patch(&self, u: &[f64], k: usize) -> [f64; 9] {
        let node = self.active[k];
        let (i, j) = (node / (self.nz + 1), node % (self.nz + 1));
        let mut p = [0.0; 9];
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                let ii = (i as i64 + di).unsigned_abs() as usize;
                let jj = (j as i64 + dj) as usize;
                p[slot(di, dj)] = u[self.index(ii, jj)];
            }
        }
        p
    }

    /// Howard iteration with a sparse LU solve per policy. Robust where
    /// over-relaxed sweeps are not: the `1/(hρ)` terms make the policy
    /// matrices strongly non-symmetric near the axis.
    pub fn solve_direct(&self, u: &mut [f64], tol: f64, max_policies: usize) -> Result<ConvergenceRecord> {
        if u.len() != self.len() {
            return domain("value vector does not match the scheme");
        }
        let n = self.active.len();
        let mut slot_of = vec![usize::MAX; self.len()];
        for (k, &node) in self.active.iter().enumerate() {
            slot_of[node] = k;
        }
        let tol = tol.max(16.0 * f64::EPSILON * self.equation_scale(u));
        let mut rec = ConvergenceRecord {
            converged: false,
            sweeps: 0,
            residual: f64::NAN,
            history: Vec::new(),
            method: Method::Howard,
            order: SweepOrder::Lexicographic,
            omega_initial: 1.0,
            omega_final: 1.0,
            policies: 0,
            tol_effective: tol,
        };
        let mut policy: Vec<usize> = (0..n).map(|k| self.local_solve(u, k, None).1).collect();
        let fail = |rec: &ConvergenceRecord| Error::NotConverged {
            iterations: rec.policies,
            residual: rec.residual,
            history: rec.history.iter().map(|h| h.residual).collect(),
        };
        for _ in 0..max_policies {
            rec.policies += 1;
            let mut trip = Vec::with_capacity(10 * n);
            let mut rhs = Col::<f64>::zeros(n);
            for (k, &node) in self.active.iter().enumerate() {
                let (i, j) = (node / (self.nz + 1), node % (self.nz + 1));
                let pc = &self.row(k)[policy[k]];
                let mut row: Vec<(usize, f64)> = vec![(k, pc.diag)];
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        let c = pc.coef[slot(di, dj)];
                        if (di, dj) == (0, 0) || c == 0.0 {
                            continue;
                        }
                        let nb = self.index((i as i64 + di).unsigned_abs() as usize, (j as i64 + dj) as usize);
                        match slot_of[nb] {
                            usize::MAX => rhs[k] += c * u[nb],
                            m => match row.iter_mut().find(|e| e.0 == m) {
                                Some(e) => e.1 -= c,
                                None => row.push((m, -c)),
                            },
                        }
                    }
                }
                trip.extend(row.into_iter().map(|(m, v)| (k, m, v)));
            }
            let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip)
                .map_err(|e| Error::Domain(format!("policy matrix: {e:?}")))?;
            let lu = a.sp_lu().map_err(|_| fail(&rec))?;
            let x = lu.solve(&rhs);
            for (k, &node) in self.active.iter().enumerate() {
                u[node] = x[k];
            }
            let res = (0..n).map(|k| self.residual(u, k).abs()).fold(0.0, f64::max);
            rec.residual = res;
            rec.history.push(ResidualSample {
                sweep: rec.policies,
                residual: res,
            });
            if !res.is_finite() {
                return Err(fail(&rec));
            }
            if res <= tol {
                rec.converged = true;
                return Ok(rec);
            }
            // switch only on a strict improvement so ties cannot cycle
            let mut changed = false;
            for (k, p) in policy.iter_mut().enumerate() {
                let patch = self.patch(u, k);
                let row = self.row(k);
                let cur = piece_b(&row[*p], &patch) / row[*p].diag;
                let (v, q) = self.local_solve(u, k, None);
                let better = if self.sup() { v > cur } else { v < cur };
                if better && (v - cur).abs() > 1e-14 * (1.0 + cur.abs()) {
                    *p = q;
                    changed = true;
                }
            }
            if !changed {
                rec.converged = true;
                rec.tol_effective = rec.tol_effective.max(res);
                return Ok(rec);
            }
        }
        Err(fail(&rec))
    }

    fn row(&self, k: usize) -> &[AxPiece] {
        &self.pieces[self.active[k] / (self.nz + 1)]
    }

    fn sup(&self) -> bool {
        self.sign == Sign::Plus
    }
}

fn piece_b(p: &AxPiece, patch: &[f64; 9]) -> f64 {
    p.coef.iter().zip(patch).map(|(c, v)| c * v).sum()
}

impl MonotoneScheme for AxisymmetricPucci {
    fn storage_len(&self) -> usize {
        self.len()
    }

    fn active(&self) -> &[usize] {
        &self.active
    }

    fn local_solve(&self, u: &[f64], k: usize, policy: Option<usize>) -> (f64, usize) {
        let patch = self.patch(u, k);
        let row = self.row(k);
        if let Some(p) = policy {
            return (piece_b(&row[p], &patch) / row[p].diag, p);
        }
        let sup = self.sup();
        let mut best = (piece_b(&row[0], &patch) / row[0].diag, 0);
        for (p, pc) in row.iter().enumerate().skip(1) {
            let v = piece_b(pc, &patch) / pc.diag;
            if (sup && v > best.0) || (!sup && v < best.0) {
                best = (v, p);
            }
        }
        best
    }

    fn residual(&self, u: &[f64], k: usize) -> f64 {
        let patch = self.patch(u, k);
        let x = u[self.active[k]];
        let vals = self.row(k).iter().map(|p| piece_b(p, &patch) - p.diag * x);
        if self.sup() {
            vals.fold(f64::NEG_INFINITY, f64::max)
        } else {
            vals.fold(f64::INFINITY, f64::min)
        }
    }

    fn residual_policy(&self, u: &[f64], k: usize, p: usize) -> f64 {
        let patch = self.patch(u, k);
        let pc = &self.row(k)[p];
        piece_b(pc, &patch) - pc.diag * u[self.active[k]]
    }

    fn relaxation_extents(&self) -> Vec<usize> {
        // the axis is a symmetry line, so the radial span counts twice
        vec![2 * self.nr, self.nz]
    }

    fn colour(&self, k: usize) -> usize {
        let node = self.active[k];
        (node / (self.nz + 1) + node % (self.nz + 1)) % 2
    }

    fn max_pieces(&self) -> usize {
        self.pieces.iter().map(|r| r.len()).max().unwrap_or(0)
    }

    fn equation_scale(&self, u: &[f64]) -> f64 {
        let umax = u.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let dmax = self
            .pieces
            .iter()
            .flat_map(|r| r.iter().map(|p| p.diag))
            .fold(0.0, f64::max);
        umax * dmax
    }
}
