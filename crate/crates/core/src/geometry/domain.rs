//! Bounded domains described by a level set (negative inside), with
//! boundary projection, outward normals and an arclength parameterization
//! of the boundary for planar domains.

use crate::error::{domain, Result};
use crate::linalg::{dist, norm};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    /// Ball of any dimension.
    Disk {
        center: Vec<f64>,
        radius: f64,
    },
    /// `{|x - c| < r, x_2 > c_2}`: upper half disk with a flat bottom.
    HalfDiskFlatBottom {
        center: [f64; 2],
        radius: f64,
    },
    /// Axis-aligned box of any dimension.
    Rectangle {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Annulus {
        center: Vec<f64>,
        inner: f64,
        outer: f64,
    },
    /// Sampled level set, star-shaped about `center`.
    Implicit(ImplicitDomain),
}

/// Level-set samples on a uniform planar grid; index `i0 * extents[1] + i1`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelSetGrid {
    pub origin: [f64; 2],
    pub h: f64,
    pub extents: [usize; 2],
    pub values: Vec<f64>,
}

impl LevelSetGrid {
    pub fn from_fn(origin: [f64; 2], h: f64, extents: [usize; 2], f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(extents[0] * extents[1]);
        for i in 0..extents[0] {
            for j in 0..extents[1] {
                values.push(f(origin[0] + i as f64 * h, origin[1] + j as f64 * h));
            }
        }
        Self {
            origin,
            h,
            extents,
            values,
        }
    }

    /// Bilinear interpolation; points outside the sampled box read as
    /// outside the domain.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let fx = (x[0] - self.origin[0]) / self.h;
        let fy = (x[1] - self.origin[1]) / self.h;
        let (nx, ny) = (self.extents[0], self.extents[1]);
        if !(fx >= 0.0 && fy >= 0.0 && fx <= (nx - 1) as f64 && fy <= (ny - 1) as f64) {
            let cx = fx.clamp(0.0, (nx - 1) as f64);
            let cy = fy.clamp(0.0, (ny - 1) as f64);
            let inside = self.eval(&[self.origin[0] + cx * self.h, self.origin[1] + cy * self.h]);
            return inside.max(0.0) + self.h * ((fx - cx).abs() + (fy - cy).abs()) + 1e-12;
        }
        let i = (fx.floor() as usize).min(nx - 2);
        let j = (fy.floor() as usize).min(ny - 2);
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let v = |a: usize, b: usize| self.values[a * ny + b];
        (1.0 - tx) * (1.0 - ty) * v(i, j)
            + tx * (1.0 - ty) * v(i + 1, j)
            + (1.0 - tx) * ty * v(i, j + 1)
            + tx * ty * v(i + 1, j + 1)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ImplicitDomain {
    pub grid: LevelSetGrid,
    pub center: [f64; 2],
    #[serde(skip)]
    polyline: OnceLock<Vec<([f64; 2], f64)>>,
}

impl ImplicitDomain {
    pub fn new(grid: LevelSetGrid, center: [f64; 2]) -> Self {
        Self {
            grid,
            center,
            polyline: OnceLock::new(),
        }
    }

    /// Boundary polyline by bisection along rays from `center`, with
    /// cumulative arclength.
    fn polyline(&self) -> &[([f64; 2], f64)] {
        self.polyline.get_or_init(|| {
            const RAYS: usize = 2048;
            let reach = self.grid.h * (self.grid.extents[0] + self.grid.extents[1]) as f64;
            let mut pts: Vec<[f64; 2]> = Vec::with_capacity(RAYS);
            for k in 0..RAYS {
                let th = 2.0 * PI * k as f64 / RAYS as f64;
                let (s, c) = th.sin_cos();
                let at = |r: f64| self.grid.eval(&[self.center[0] + r * c, self.center[1] + r * s]);
                let (mut lo, mut hi) = (0.0, reach);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if at(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let r = 0.5 * (lo + hi);
                pts.push([self.center[0] + r * c, self.center[1] + r * s]);
            }
            let mut out = Vec::with_capacity(RAYS + 1);
            let mut s = 0.0;
            for k in 0..=RAYS {
                let p = pts[k % RAYS];
                if k > 0 {
                    s += dist(&p, &pts[k - 1]);
                }
                out.push((p, s));
            }
            out
        })
    }
}

/// A sampled boundary point: position, outward unit normal and arclength.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub x: Vec<f64>,
    pub normal: Vec<f64>,
    pub s: f64,
}

impl DomainSpec {
    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Disk { center, .. } | DomainSpec::Annulus { center, .. } => center.len(),
            DomainSpec::Rectangle { lo, .. } => lo.len(),
            DomainSpec::HalfDiskFlatBottom { .. } | DomainSpec::Implicit(_) => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DomainSpec::Disk { center, radius } => {
                if center.is_empty() || !(*radius > 0.0) {
                    return domain("disk needs a center and a positive radius");
                }
            }
            DomainSpec::HalfDiskFlatBottom { radius, .. } => {
                if !(*radius > 0.0) {
                    return domain("half disk needs a positive radius");
                }
            }
            DomainSpec::Rectangle { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return domain("rectangle needs lo < hi componentwise");
                }
            }
            DomainSpec::Annulus { inner, outer, center } => {
                if center.is_empty() || !(0.0 < *inner && inner < outer) {
                    return domain("annulus needs 0 < inner < outer");
                }
            }
            DomainSpec::Implicit(imp) => {
                let g = &imp.grid;
                if g.extents[0] < 2 || g.extents[1] < 2 || g.values.len() != g.extents[0] * g.extents[1] {
                    return domain("level-set grid has inconsistent extents");
                }
                if g.eval(&imp.center) >= 0.0 {
                    return domain("implicit domain center must lie inside");
                }
            }
        }
        Ok(())
    }

    /// Signed level set, negative inside.
    pub fn level_set(&self, x: &[f64]) -> f64 {
        match self {
            DomainSpec::Disk { center, radius } => dist(x, center) - radius,
            DomainSpec::HalfDiskFlatBottom { center, radius } => (dist(x, center) - radius).max(center[1] - x[1]),
            DomainSpec::Rectangle { lo, hi } => lo
                .iter()
                .zip(hi)
                .zip(x)
                .map(|((a, b), v)| (a - v).max(v - b))
                .fold(f64::NEG_INFINITY, f64::max),
            DomainSpec::Annulus { center, inner, outer } => {
                let r = dist(x, center);
                (r - outer).max(inner - r)
            }
            DomainSpec::Implicit(imp) => imp.grid.eval(x),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.level_set(x) < 0.0
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            DomainSpec::Disk { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            DomainSpec::Annulus { center, outer, .. } => (
                center.iter().map(|c| c - outer).collect(),
                center.iter().map(|c| c + outer).collect(),
            ),
            DomainSpec::HalfDiskFlatBottom { center, radius } => (
                vec![center[0] - radius, center[1]],
                vec![center[0] + radius, center[1] + radius],
            ),
            DomainSpec::Rectangle { lo, hi } => (lo.clone(), hi.clone()),
            DomainSpec::Implicit(imp) => {
                let pl = imp.polyline();
                let mut lo = vec![f64::INFINITY; 2];
                let mut hi = vec![f64::NEG_INFINITY; 2];
                for (p, _) in pl {
                    for k in 0..2 {
                        lo[k] = lo[k].min(p[k]);
                        hi[k] = hi[k].max(p[k]);
                    }
                }
                (lo, hi)
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        match self {
            DomainSpec::Disk { radius, .. } => 2.0 * radius,
            DomainSpec::Annulus { outer, .. } => 2.0 * outer,
            _ => dist(&lo, &hi),
        }
    }

    /// Reference interior point used for scaled copies.
    pub fn center_point(&self) -> Vec<f64> {
        match self {
            DomainSpec::Disk { center, .. } | DomainSpec::Annulus { center, .. } => center.clone(),
            DomainSpec::HalfDiskFlatBottom { center, radius } => {
                vec![center[0], center[1] + 4.0 * radius / (3.0 * PI)]
            }
            DomainSpec::Rectangle { lo, hi } => lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(),
            DomainSpec::Implicit(imp) => imp.center.to_vec(),
        }
    }

    /// Copy scaled by `factor` about [`DomainSpec::center_point`].
    pub fn scaled(&self, factor: f64) -> DomainSpec {
        let c = self.center_point();
        let map = |p: &[f64]| -> Vec<f64> { p.iter().zip(&c).map(|(x, o)| o + factor * (x - o)).collect() };
        match self {
            DomainSpec::Disk { center, radius } => DomainSpec::Disk {
                center: center.clone(),
                radius: radius * factor,
            },
            DomainSpec::Annulus { center, inner, outer } => DomainSpec::Annulus {
                center: center.clone(),
                inner: inner * factor,
                outer: outer * factor,
            },
            DomainSpec::HalfDiskFlatBottom { center, radius } => {
                let nc = map(center);
                DomainSpec::HalfDiskFlatBottom {
                    center: [nc[0], nc[1]],
                    radius: radius * factor,
                }
            }
            DomainSpec::Rectangle { lo, hi } => DomainSpec::Rectangle {
                lo: map(lo),
                hi: map(hi),
            },
            DomainSpec::Implicit(imp) => {
                let g = &imp.grid;
                let o = map(&g.origin);
                DomainSpec::Implicit(ImplicitDomain::new(
                    LevelSetGrid {
                        origin: [o[0], o[1]],
                        h: g.h * factor,
                        extents: g.extents,
                        values: g.values.iter().map(|v| v * factor).collect(),
                    },
                    imp.center,
                ))
            }
        }
    }

    /// Nearest boundary point.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            DomainSpec::Disk { center, radius } => project_sphere(x, center, *radius),
            DomainSpec::Annulus { center, inner, outer } => {
                let r = dist(x, center);
                if (r - inner).abs() < (r - outer).abs() {
                    project_sphere(x, center, *inner)
                } else {
                    project_sphere(x, center, *outer)
                }
            }
            DomainSpec::HalfDiskFlatBottom { center, radius } => {
                let flat = vec![x[0].clamp(center[0] - radius, center[0] + radius), center[1]];
                let (dx, dy) = (x[0] - center[0], x[1] - center[1]);
                let arc = if dy >= 0.0 && (dx != 0.0 || dy != 0.0) {
                    let r = (dx * dx + dy * dy).sqrt();
                    vec![center[0] + radius * dx / r, center[1] + radius * dy / r]
                } else if dx >= 0.0 {
                    vec![center[0] + radius, center[1]]
                } else {
                    vec![center[0] - radius, center[1]]
                };
                if dist(x, &flat) <= dist(x, &arc) {
                    flat
                } else {
                    arc
                }
            }
            DomainSpec::Rectangle { lo, hi } => {
                let mut p: Vec<f64> = x
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(v, (a, b))| v.clamp(*a, *b))
                    .collect();
                if self.level_set(x) < 0.0 {
                    // inside: move to the nearest face
                    let mut best = (f64::INFINITY, 0, 0.0);
                    for k in 0..lo.len() {
                        for face in [lo[k], hi[k]] {
                            let d = (x[k] - face).abs();
                            if d < best.0 {
                                best = (d, k, face);
                            }
                        }
                    }
                    p[best.1] = best.2;
                }
                p
            }
            DomainSpec::Implicit(imp) => {
                let mut p = x.to_vec();
                for _ in 0..30 {
                    let phi = imp.grid.eval(&p);
                    let g = implicit_gradient(imp, &p);
                    let g2 = g[0] * g[0] + g[1] * g[1];
                    if g2 < 1e-24 {
                        break;
                    }
                    p[0] -= phi * g[0] / g2;
                    p[1] -= phi * g[1] / g2;
                    if phi.abs() < 1e-13 {
                        break;
                    }
                }
                p
            }
        }
    }

    /// Outward unit normal at (the projection of) `x`.
    pub fn outward_normal(&self, x: &[f64]) -> Result<Vec<f64>> {
        let p = self.project(x);
        match self {
            DomainSpec::Disk { center, .. } => Ok(unit(&p, center)),
            DomainSpec::Annulus { center, inner, .. } => {
                let u = unit(&p, center);
                if (dist(&p, center) - inner).abs() < 1e-9 {
                    Ok(u.iter().map(|v| -v).collect())
                } else {
                    Ok(u)
                }
            }
            DomainSpec::HalfDiskFlatBottom { center, radius } => {
                if (p[1] - center[1]).abs() <= 1e-12 * radius && (p[0] - center[0]).abs() < *radius {
                    Ok(vec![0.0, -1.0])
                } else {
                    Ok(unit(&p, center))
                }
            }
            DomainSpec::Rectangle { lo, hi } => {
                let mut best = (f64::INFINITY, 0, 1.0);
                for k in 0..lo.len() {
                    let dl = (p[k] - lo[k]).abs();
                    let dh = (p[k] - hi[k]).abs();
                    if dl < best.0 {
                        best = (dl, k, -1.0);
                    }
                    if dh < best.0 {
                        best = (dh, k, 1.0);
                    }
                }
                let mut nrm = vec![0.0; lo.len()];
                nrm[best.1] = best.2;
                Ok(nrm)
            }
            DomainSpec::Implicit(imp) => {
                let g = implicit_gradient(imp, &p);
                let l = norm(&g);
                if l < 1e-10 {
                    return domain(format!("degenerate level-set gradient at {p:?}"));
                }
                Ok(vec![g[0] / l, g[1] / l])
            }
        }
    }

    pub fn perimeter(&self) -> Result<f64> {
        self.require_planar()?;
        Ok(match self {
            DomainSpec::Disk { radius, .. } => 2.0 * PI * radius,
            DomainSpec::HalfDiskFlatBottom { radius, .. } => (2.0 + PI) * radius,
            DomainSpec::Rectangle { lo, hi } => 2.0 * ((hi[0] - lo[0]) + (hi[1] - lo[1])),
            DomainSpec::Implicit(imp) => imp.polyline().last().map(|p| p.1).unwrap_or(0.0),
            DomainSpec::Annulus { .. } => {
                return domain("the annulus boundary has two components; no single arclength parameter")
            }
        })
    }

    fn require_planar(&self) -> Result<()> {
        if self.dim() != 2 {
            return domain("boundary parameterization is only available in the plane");
        }
        Ok(())
    }

    /// Point at arclength `s` (taken modulo the perimeter).
    pub fn boundary_point_at(&self, s: f64) -> Result<BoundaryPoint> {
        let per = self.perimeter()?;
        let s = s.rem_euclid(per);
        let x: Vec<f64> = match self {
            DomainSpec::Disk { center, radius } => {
                let th = s / radius;
                vec![center[0] + radius * th.cos(), center[1] + radius * th.sin()]
            }
            DomainSpec::HalfDiskFlatBottom { center, radius } => {
                if s < 2.0 * radius {
                    vec![center[0] - radius + s, center[1]]
                } else {
                    let th = (s - 2.0 * radius) / radius;
                    vec![center[0] + radius * th.cos(), center[1] + radius * th.sin()]
                }
            }
            DomainSpec::Rectangle { lo, hi } => {
                let (w, h) = (hi[0] - lo[0], hi[1] - lo[1]);
                if s < w {
                    vec![lo[0] + s, lo[1]]
                } else if s < w + h {
                    vec![hi[0], lo[1] + (s - w)]
                } else if s < 2.0 * w + h {
                    vec![hi[0] - (s - w - h), hi[1]]
                } else {
                    vec![lo[0], hi[1] - (s - 2.0 * w - h)]
                }
            }
            DomainSpec::Implicit(imp) => {
                let pl = imp.polyline();
                let k = pl.partition_point(|p| p.1 <= s).clamp(1, pl.len() - 1);
                let (a, b) = (&pl[k - 1], &pl[k]);
                let t = if b.1 > a.1 { (s - a.1) / (b.1 - a.1) } else { 0.0 };
                vec![a.0[0] + t * (b.0[0] - a.0[0]), a.0[1] + t * (b.0[1] - a.0[1])]
            }
            DomainSpec::Annulus { .. } => unreachable!(),
        };
        let normal = match self {
            DomainSpec::Rectangle { lo, hi } => {
                let (w, h) = (hi[0] - lo[0], hi[1] - lo[1]);
                if s < w {
                    vec![0.0, -1.0]
                } else if s < w + h {
                    vec![1.0, 0.0]
                } else if s < 2.0 * w + h {
                    vec![0.0, 1.0]
                } else {
                    vec![-1.0, 0.0]
                }
            }
            DomainSpec::HalfDiskFlatBottom { radius, .. } if s < 2.0 * radius => vec![0.0, -1.0],
            _ => self.outward_normal(&x)?,
        };
        Ok(BoundaryPoint { x, normal, s })
    }

    /// `count` points equally spaced in arclength, starting at `s = 0`.
    pub fn boundary_samples(&self, count: usize) -> Result<Vec<BoundaryPoint>> {
        if count == 0 {
            return domain("need at least one boundary sample");
        }
        let per = self.perimeter()?;
        (0..count)
            .map(|k| self.boundary_point_at(per * k as f64 / count as f64))
            .collect()
    }

    /// Arclength coordinate of the projection of `x`.
    pub fn boundary_param(&self, x: &[f64]) -> Result<f64> {
        self.require_planar()?;
        let p = self.project(x);
        let per = self.perimeter()?;
        Ok(match self {
            DomainSpec::Disk { center, radius } => {
                (p[1] - center[1]).atan2(p[0] - center[0]).rem_euclid(2.0 * PI) * radius
            }
            DomainSpec::HalfDiskFlatBottom { center, radius } => {
                if (p[1] - center[1]).abs() <= 1e-12 * radius {
                    let s = p[0] - (center[0] - radius);
                    // the right corner belongs to both pieces
                    if s >= 2.0 * radius {
                        2.0 * radius
                    } else {
                        s
                    }
                } else {
                    let th = (p[1] - center[1]).atan2(p[0] - center[0]).clamp(0.0, PI);
                    2.0 * radius + th * radius
                }
            }
            DomainSpec::Rectangle { lo, hi } => {
                let (w, h) = (hi[0] - lo[0], hi[1] - lo[1]);
                let d = [
                    (p[1] - lo[1]).abs(),
                    (p[0] - hi[0]).abs(),
                    (p[1] - hi[1]).abs(),
                    (p[0] - lo[0]).abs(),
                ];
                let k = (0..4).min_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap()).unwrap();
                match k {
                    0 => p[0] - lo[0],
                    1 => w + (p[1] - lo[1]),
                    2 => w + h + (hi[0] - p[0]),
                    _ => (2.0 * w + h + (hi[1] - p[1])).rem_euclid(per),
                }
            }
            DomainSpec::Implicit(imp) => {
                let pl = imp.polyline();
                let mut best = (f64::INFINITY, 0.0);
                for w in pl.windows(2) {
                    let (a, b) = (&w[0], &w[1]);
                    let ab = [b.0[0] - a.0[0], b.0[1] - a.0[1]];
                    let l2 = ab[0] * ab[0] + ab[1] * ab[1];
                    let t = if l2 > 0.0 {
                        (((p[0] - a.0[0]) * ab[0] + (p[1] - a.0[1]) * ab[1]) / l2).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                    let q = [a.0[0] + t * ab[0], a.0[1] + t * ab[1]];
                    let d = dist(&p, &q);
                    if d < best.0 {
                        best = (d, a.1 + t * (b.1 - a.1));
                    }
                }
                best.1.rem_euclid(per)
            }
            DomainSpec::Annulus { .. } => unreachable!(),
        })
    }

    /// Boundary points (among `samples` equally spaced ones) whose level-set
    /// gradient, estimated by central differences at scale `step`, is below
    /// `min_grad`.
    pub fn degenerate_gradient_points(&self, samples: usize, step: f64, min_grad: f64) -> Result<Vec<BoundaryPoint>> {
        let pts = self.boundary_samples(samples)?;
        Ok(pts
            .into_iter()
            .filter(|bp| {
                let g = numeric_gradient(|x| self.level_set(x), &bp.x, step);
                norm(&g) < min_grad
            })
            .collect())
    }
}

fn project_sphere(x: &[f64], center: &[f64], r: f64) -> Vec<f64> {
    let d = dist(x, center);
    if d == 0.0 {
        let mut p = center.to_vec();
        p[0] += r;
        return p;
    }
    x.iter().zip(center).map(|(v, c)| c + r * (v - c) / d).collect()
}

fn unit(p: &[f64], c: &[f64]) -> Vec<f64> {
    let d = dist(p, c);
    p.iter().zip(c).map(|(a, b)| (a - b) / d).collect()
}

fn implicit_gradient(imp: &ImplicitDomain, p: &[f64]) -> Vec<f64> {
    numeric_gradient(|x| imp.grid.eval(x), p, 0.25 * imp.grid.h)
}

fn numeric_gradient(f: impl Fn(&[f64]) -> f64, p: &[f64], step: f64) -> Vec<f64> {
    let mut g = vec![0.0; p.len()];
    let mut q = p.to_vec();
    for k in 0..p.len() {
        q[k] = p[k] + step;
        let a = f(&q);
        q[k] = p[k] - step;
        let b = f(&q);
        q[k] = p[k];
        g[k] = (a - b) / (2.0 * step);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_disk() -> DomainSpec {
        DomainSpec::Disk {
            center: vec![0.0, 0.0],
            radius: 1.0,
        }
    }

    #[test]
    fn disk_projection_normal_and_param() {
        let d = unit_disk();
        let p = d.project(&[0.0, 2.0]);
        assert!((p[1] - 1.0).abs() < 1e-15);
        let n = d.outward_normal(&[0.3, 0.4]).unwrap();
        assert!((n[0] - 0.6).abs() < 1e-12 && (n[1] - 0.8).abs() < 1e-12);
        let s = d.boundary_param(&[0.0, 1.0]).unwrap();
        assert!((s - PI / 2.0).abs() < 1e-12);
        let bp = d.boundary_point_at(s).unwrap();
        assert!(dist(&bp.x, &[0.0, 1.0]) < 1e-12);
    }

    #[test]
    fn half_disk_pieces() {
        let d = DomainSpec::HalfDiskFlatBottom {
            center: [0.0, 1.0],
            radius: 1.0,
        };
        assert!(d.contains(&[0.0, 1.5]));
        assert!(!d.contains(&[0.0, 0.9]));
        assert_eq!(d.outward_normal(&[0.2, 0.95]).unwrap(), vec![0.0, -1.0]);
        let s = d.boundary_param(&[0.5, 1.0]).unwrap();
        assert!((s - 1.5).abs() < 1e-12);
        let s = d.boundary_param(&[0.0, 2.1]).unwrap();
        assert!((s - (2.0 + PI / 2.0)).abs() < 1e-12);
        let per = d.perimeter().unwrap();
        for k in 0..40 {
            let s = per * k as f64 / 40.0;
            let bp = d.boundary_point_at(s).unwrap();
            let back = d.boundary_param(&bp.x).unwrap();
            assert!((back - s).abs() < 1e-9, "s={s} back={back}");
        }
    }

    #[test]
    fn rectangle_normals_cover_four_axes() {
        let d = DomainSpec::Rectangle {
            lo: vec![0.0, 0.0],
            hi: vec![2.0, 1.0],
        };
        let pts = d.boundary_samples(12).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for p in &pts {
            seen.insert(format!("{:?}", p.normal));
            let back = d.boundary_param(&p.x).unwrap();
            assert!((back - p.s).abs() < 1e-9);
        }
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn implicit_disk_matches_analytic_disk() {
        let grid = LevelSetGrid::from_fn([-1.5, -1.5], 0.05, [61, 61], |x, y| (x * x + y * y).sqrt() - 1.0);
        let d = DomainSpec::Implicit(ImplicitDomain::new(grid, [0.0, 0.0]));
        d.validate().unwrap();
        assert!((d.perimeter().unwrap() - 2.0 * PI).abs() < 1e-2);
        let n = d.outward_normal(&[0.6, 0.8]).unwrap();
        assert!((n[0] - 0.6).abs() < 1e-2 && (n[1] - 0.8).abs() < 1e-2);
        assert!(d.degenerate_gradient_points(64, 1e-3, 0.1).unwrap().is_empty());
    }

    #[test]
    fn scaled_copies_stay_inside() {
        let d = DomainSpec::HalfDiskFlatBottom {
            center: [0.0, 1.0],
            radius: 1.0,
        };
        let k = d.scaled(2.0 / 3.0);
        for bp in k.boundary_samples(50).unwrap() {
            assert!(d.contains(&bp.x));
        }
    }
}
