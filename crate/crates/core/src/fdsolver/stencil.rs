//! Stencil directions and monotone decompositions `A = Σ_e w_e e eᵀ`,
//! `w_e ≥ 0`, so that `Σ_e w_e D_e u` with
//! `D_e u = (u(x+he) − 2u(x) + u(x−he)) / h²` approximates `tr(A D²u)`.

use crate::error::{domain, Result};
use crate::linalg::SymMat;
use crate::operators::{Extremum, LocalOperator, Sign};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stencil {
    pub dim: usize,
    pub order: u8,
    /// One representative per ± pair.
    pub directions: Vec<Vec<i64>>,
}

impl Stencil {
    /// Order 1: axes. Order 2: adds diagonals. Order 3: adds knight moves.
    pub fn new(dim: usize, order: u8) -> Result<Self> {
        if !(1..=3).contains(&dim) || !(1..=3).contains(&order) {
            return domain(format!("unsupported stencil: dim {dim}, order {order}"));
        }
        let mut dirs: Vec<Vec<i64>> = (0..dim)
            .map(|i| (0..dim).map(|j| i64::from(i == j)).collect())
            .collect();
        if order >= 2 {
            for i in 0..dim {
                for j in i + 1..dim {
                    for s in [1, -1] {
                        let mut e = vec![0; dim];
                        e[i] = 1;
                        e[j] = s;
                        dirs.push(e);
                    }
                }
            }
        }
        if order >= 3 {
            for i in 0..dim {
                for j in i + 1..dim {
                    for (a, b) in [(1, 2), (2, 1), (1, -2), (2, -1)] {
                        let mut e = vec![0; dim];
                        e[i] = a;
                        e[j] = b;
                        dirs.push(e);
                    }
                }
            }
        }
        Ok(Self {
            dim,
            order,
            directions: dirs,
        })
    }

    pub fn reach(&self) -> usize {
        self.directions
            .iter()
            .flat_map(|e| e.iter().map(|c| c.unsigned_abs() as usize))
            .max()
            .unwrap_or(1)
    }

    /// Index of the direction parallel to `v` (either sign).
    pub fn find_parallel(&self, v: &[f64]) -> Option<usize> {
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.directions.iter().position(|e| {
            let ne = e.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt();
            let dot: f64 = e.iter().zip(v).map(|(&a, b)| a as f64 * b).sum();
            (dot.abs() / (ne * nv) - 1.0).abs() < 1e-12
        })
    }

    fn find(&self, e: &[i64]) -> Option<usize> {
        self.directions
            .iter()
            .position(|d| d.as_slice() == e || d.iter().zip(e).all(|(a, b)| *a == -b))
    }
}

/// `Σ_e w_e D_e u + constant`; weights are per direction index.
#[derive(Clone, Debug, PartialEq)]
pub struct Piece {
    pub constant: f64,
    pub weights: Vec<(usize, f64)>,
}

/// Why a matrix has no monotone decomposition on the stencil.
#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionFailure {
    pub detail: String,
    /// Most negative weight encountered.
    pub weight: f64,
}

const WEIGHT_TOL: f64 = 1e-12;

/// Monotone decomposition of `a` on the stencil. Tries the eigenframe
/// (exact when the eigenvectors are stencil directions), then diagonal
/// dominance on axes plus diagonals.
pub fn decompose(a: &SymMat, st: &Stencil) -> std::result::Result<Vec<(usize, f64)>, DecompositionFailure> {
    let n = a.dim();
    let scale = a.max_abs().max(1e-300);
    let mut off_max: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            off_max = off_max.max(a.get(i, j).abs());
        }
    }
    if off_max <= WEIGHT_TOL * scale {
        let mut w = Vec::with_capacity(n);
        for i in 0..n {
            let v = a.get(i, i);
            if v < -WEIGHT_TOL * scale {
                return Err(DecompositionFailure {
                    detail: format!("negative diagonal coefficient a{}{} = {v}", i + 1, i + 1),
                    weight: v,
                });
            }
            w.push((i, v.max(0.0)));
        }
        return Ok(w);
    }
    if let Some(w) = eigenframe(a, st) {
        return Ok(w);
    }
    let mut w = Vec::new();
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for i in 0..n {
        let mut diag = a.get(i, i);
        for j in 0..n {
            if j == i {
                continue;
            }
            let aij = a.get(i, j);
            diag -= aij.abs();
            if j > i && aij.abs() > WEIGHT_TOL * scale {
                let mut e = vec![0i64; n];
                e[i] = 1;
                e[j] = if aij > 0.0 { 1 } else { -1 };
                match st.find(&e) {
                    Some(d) => w.push((d, aij.abs())),
                    None => {
                        return Err(DecompositionFailure {
                            detail: format!(
                                "cross coefficient a{}{} = {aij} needs diagonal directions (raise the stencil order)",
                                i + 1,
                                j + 1
                            ),
                            weight: -aij.abs(),
                        })
                    }
                }
            }
        }
        if diag < -WEIGHT_TOL * scale {
            if diag < worst {
                worst = diag;
                detail = format!(
                    "cross-term dominance fails in row {}: a{}{} - sum |a{}j| = {diag}",
                    i + 1,
                    i + 1,
                    i + 1,
                    i + 1
                );
            }
        } else {
            w.push((i, diag.max(0.0)));
        }
    }
    if worst < 0.0 {
        return Err(DecompositionFailure { detail, weight: worst });
    }
    Ok(w)
}

fn eigenframe(a: &SymMat, st: &Stencil) -> Option<Vec<(usize, f64)>> {
    let (vals, vecs) = a.eigen();
    let mut w = Vec::with_capacity(vals.len());
    for (val, v) in vals.iter().zip(&vecs) {
        if *val < -WEIGHT_TOL * a.max_abs() {
            return None;
        }
        let d = st.find_parallel(v)?;
        let len2: f64 = st.directions[d].iter().map(|&c| (c * c) as f64).sum();
        w.push((d, val.max(0.0) / len2));
    }
    Some(w)
}

/// A finite family of pieces whose extremum approximates the local
/// operator, with the optional constant `tr(A M0)` folded in.
#[derive(Clone, Debug, PartialEq)]
pub struct PieceSet {
    pub pieces: Vec<Piece>,
    pub extremum: Extremum,
}

/// Number of sampled angles for the planar Pucci family.
pub const PUCCI_ANGLES: usize = 32;

/// Extreme points `λI + (Λ−λ)P` of `{λ ≤ A ≤ Λ}` that decompose monotonely
/// on the stencil: projections `P` of every rank, with rank-1 and rank-(n−1)
/// axes sampled on a direction grid plus the stencil directions themselves.
pub fn pucci_family(st: &Stencil, lambda: f64, big_lambda: f64) -> Vec<(SymMat, Vec<(usize, f64)>)> {
    let n = st.dim;
    let mut axes: Vec<Vec<f64>> = Vec::new();
    for e in &st.directions {
        let l = e.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt();
        axes.push(e.iter().map(|&c| c as f64 / l).collect());
    }
    match n {
        1 => {}
        2 => {
            for k in 0..PUCCI_ANGLES {
                let th = PI * k as f64 / PUCCI_ANGLES as f64;
                axes.push(vec![th.cos(), th.sin()]);
            }
        }
        _ => {
            // Fibonacci points on the upper hemisphere
            let m = 2 * PUCCI_ANGLES;
            let golden = PI * (3.0 - 5f64.sqrt());
            for k in 0..m {
                let z = 1.0 - (k as f64 + 0.5) / m as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = golden * k as f64;
                axes.push(vec![r * phi.cos(), r * phi.sin(), z]);
            }
        }
    }
    let mut cands = vec![SymMat::identity(n).scale(lambda), SymMat::identity(n).scale(big_lambda)];
    let gap = big_lambda - lambda;
    if gap > 0.0 && n > 1 {
        for v in &axes {
            let p = SymMat::outer(v);
            cands.push(SymMat::identity(n).scale(lambda).add(&p.scale(gap)));
            if n == 3 {
                cands.push(SymMat::identity(n).scale(big_lambda).sub(&p.scale(gap)));
            }
        }
    }
    let mut out: Vec<(SymMat, Vec<(usize, f64)>)> = Vec::new();
    for a in cands {
        if out.iter().any(|(b, _)| b.sub(&a).max_abs() < 1e-12) {
            continue;
        }
        if let Ok(w) = decompose(&a, st) {
            out.push((a, w));
        }
    }
    out
}

/// Pieces for a frozen operator; `offset` adds `tr(A M0)` to each piece.
pub fn local_pieces(
    op: &LocalOperator,
    st: &Stencil,
    offset: Option<&SymMat>,
) -> std::result::Result<PieceSet, DecompositionFailure> {
    let constant = |a: &SymMat| offset.map_or(0.0, |m| a.dot(m));
    match op {
        LocalOperator::Pucci {
            sign,
            lambda,
            big_lambda,
        } => {
            let fam = pucci_family(st, *lambda, *big_lambda);
            Ok(PieceSet {
                pieces: fam
                    .iter()
                    .map(|(a, w)| Piece {
                        constant: constant(a),
                        weights: w.clone(),
                    })
                    .collect(),
                extremum: match sign {
                    Sign::Plus => Extremum::Sup,
                    Sign::Minus => Extremum::Inf,
                },
            })
        }
        LocalOperator::Linear(a) => Ok(PieceSet {
            pieces: vec![Piece {
                constant: constant(a),
                weights: decompose(a, st)?,
            }],
            extremum: Extremum::Sup,
        }),
        LocalOperator::Bellman { members, extremum } => Ok(PieceSet {
            pieces: members
                .iter()
                .map(|a| {
                    Ok(Piece {
                        constant: constant(a),
                        weights: decompose(a, st)?,
                    })
                })
                .collect::<std::result::Result<_, _>>()?,
            extremum: *extremum,
        }),
    }
}
