//! Uniform grids with an interior/boundary/exterior mask.

use crate::error::{domain, Error, Result};
use crate::geometry::DomainSpec;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Interior,
    Boundary,
    Exterior,
}

impl NodeKind {
    fn code(self) -> char {
        match self {
            NodeKind::Interior => 'I',
            NodeKind::Boundary => 'B',
            NodeKind::Exterior => 'E',
        }
    }
}

/// Node values on a uniform grid. Flat indices are in C order (last axis
/// fastest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub h: f64,
    pub origin: Vec<f64>,
    pub extents: Vec<usize>,
    pub mask: Vec<NodeKind>,
    pub values: Vec<f64>,
    /// Periodic in every axis (a discrete torus).
    pub periodic: bool,
}

impl GridField {
    pub fn new(origin: Vec<f64>, h: f64, extents: Vec<usize>, fill: NodeKind) -> Result<Self> {
        if origin.len() != extents.len() || extents.is_empty() || extents.len() > 3 {
            return domain("grid needs matching origin/extents of dimension 1..=3");
        }
        if !(h > 0.0) || extents.iter().any(|&e| e < 2) {
            return domain("grid needs h > 0 and at least two nodes per axis");
        }
        let len = extents.iter().product();
        if len > 50_000_000 {
            return domain(format!("grid of {len} nodes is too large"));
        }
        Ok(Self {
            h,
            origin,
            extents,
            mask: vec![fill; len],
            values: vec![0.0; len],
            periodic: false,
        })
    }

    /// All-interior periodic grid with `extents[d]` nodes per axis.
    pub fn torus(h: f64, extents: Vec<usize>) -> Result<Self> {
        let n = extents.len();
        let mut g = Self::new(vec![0.0; n], h, extents, NodeKind::Interior)?;
        g.periodic = true;
        Ok(g)
    }

    /// Masked grid covering `dom`, padded by `reach + 1` nodes. Interior
    /// nodes lie strictly inside; boundary nodes are the non-interior nodes
    /// reached from an interior node along one of `directions`.
    pub fn for_domain(dom: &DomainSpec, h: f64, directions: &[Vec<i64>]) -> Result<Self> {
        dom.validate()?;
        let n = dom.dim();
        let reach = directions
            .iter()
            .flat_map(|e| e.iter().map(|c| c.unsigned_abs() as usize))
            .max()
            .unwrap_or(1);
        let pad = reach + 1;
        let (lo, hi) = dom.bounding_box();
        let origin: Vec<f64> = lo.iter().map(|l| l - pad as f64 * h).collect();
        let extents: Vec<usize> = lo
            .iter()
            .zip(&hi)
            .map(|(l, u)| ((u - l) / h - 1e-9).ceil() as usize + 1 + 2 * pad)
            .collect();
        let mut g = Self::new(origin, h, extents, NodeKind::Exterior)?;
        debug_assert_eq!(g.dim(), n);
        for k in 0..g.len() {
            if dom.level_set(&g.position(k)) < -1e-12 * h {
                g.mask[k] = NodeKind::Interior;
            }
        }
        for k in 0..g.len() {
            if g.mask[k] != NodeKind::Interior {
                continue;
            }
            for e in directions {
                for s in [1, -1] {
                    let step: Vec<i64> = e.iter().map(|c| s * c).collect();
                    let j = g
                        .offset(k, &step)
                        .ok_or_else(|| Error::Domain("stencil leaves the padded grid".into()))?;
                    if g.mask[j] == NodeKind::Exterior {
                        g.mask[j] = NodeKind::Boundary;
                    }
                }
            }
        }
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.extents).fold(0, |acc, (i, e)| acc * e + i)
    }

    pub fn multi_index(&self, mut k: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for d in (0..self.dim()).rev() {
            out[d] = k % self.extents[d];
            k /= self.extents[d];
        }
        out
    }

    pub fn position(&self, k: usize) -> Vec<f64> {
        self.multi_index(k)
            .iter()
            .zip(&self.origin)
            .map(|(&i, o)| o + i as f64 * self.h)
            .collect()
    }

    /// Node reached from `k` by the integer step `e`, wrapping if periodic.
    pub fn offset(&self, k: usize, e: &[i64]) -> Option<usize> {
        let mut idx = self.multi_index(k);
        for d in 0..self.dim() {
            let n = self.extents[d] as i64;
            let mut v = idx[d] as i64 + e[d];
            if self.periodic {
                v = v.rem_euclid(n);
            } else if v < 0 || v >= n {
                return None;
            }
            idx[d] = v as usize;
        }
        Some(self.index(&idx))
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.mask.iter().filter(|&&m| m == kind).count()
    }

    /// Sets every boundary node to `g(x)`.
    pub fn set_boundary(&mut self, g: impl Fn(&[f64]) -> f64) {
        for k in 0..self.len() {
            if self.mask[k] == NodeKind::Boundary {
                self.values[k] = g(&self.position(k));
            }
        }
    }

    pub fn fill_interior(&mut self, v: f64) {
        for k in 0..self.len() {
            if self.mask[k] == NodeKind::Interior {
                self.values[k] = v;
            }
        }
    }

    /// Multilinear interpolation over the enclosing cell; `None` when any
    /// corner is exterior or the point is off the grid.
    pub fn interpolate(&self, x: &[f64]) -> Option<f64> {
        let n = self.dim();
        let mut base = vec![0usize; n];
        let mut frac = vec![0.0; n];
        for d in 0..n {
            let t = (x[d] - self.origin[d]) / self.h;
            if !(t >= 0.0 && t <= (self.extents[d] - 1) as f64) {
                return None;
            }
            let i = (t.floor() as usize).min(self.extents[d] - 2);
            base[d] = i;
            frac[d] = t - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut idx = base.clone();
            for d in 0..n {
                if corner >> d & 1 == 1 {
                    idx[d] += 1;
                    w *= frac[d];
                } else {
                    w *= 1.0 - frac[d];
                }
            }
            let k = self.index(&idx);
            if w > 0.0 {
                if self.mask[k] == NodeKind::Exterior {
                    return None;
                }
                acc += w * self.values[k];
            }
        }
        Some(acc)
    }

    /// Plain-text dump: header, then one line per row of the last axis.
    /// Exterior nodes are written as `nan`.
    pub fn write_text(&self, w: &mut impl Write) -> Result<()> {
        let mut s = String::new();
        let join = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(" ");
        writeln!(s, "# homog grid v1").unwrap();
        writeln!(s, "dims {}", self.dim()).unwrap();
        writeln!(s, "extents {}", join(&mut self.extents.iter().map(|e| e.to_string()))).unwrap();
        writeln!(s, "h {}", self.h).unwrap();
        writeln!(s, "origin {}", join(&mut self.origin.iter().map(|e| e.to_string()))).unwrap();
        writeln!(s, "periodic {}", u8::from(self.periodic)).unwrap();
        writeln!(s, "values").unwrap();
        let row = *self.extents.last().unwrap();
        for chunk in (0..self.len()).collect::<Vec<_>>().chunks(row) {
            let line = join(&mut chunk.iter().map(|&k| {
                if self.mask[k] == NodeKind::Exterior {
                    "nan".to_string()
                } else {
                    self.values[k].to_string()
                }
            }));
            writeln!(s, "{line}").unwrap();
        }
        writeln!(s, "mask").unwrap();
        for chunk in self.mask.chunks(row) {
            writeln!(s, "{}", chunk.iter().map(|m| m.code()).collect::<String>()).unwrap();
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_text(r: impl BufRead) -> Result<Self> {
        let bad = |m: &str| Error::Domain(format!("grid file: {m}"));
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| bad("unexpected end of file"))?
                .map_err(Error::from)
        };
        if next()?.trim() != "# homog grid v1" {
            return Err(bad("missing header"));
        }
        let field = |line: String, key: &str| -> Result<Vec<String>> {
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(bad(&format!("expected '{key}'")));
            }
            Ok(it.map(String::from).collect())
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        let dims: usize = field(next()?, "dims")?[0].parse().map_err(|_| bad("bad dims"))?;
        let extents: Vec<usize> = field(next()?, "extents")?
            .iter()
            .map(|s| s.parse().map_err(|_| bad("bad extent")))
            .collect::<Result<_>>()?;
        let h = num(&field(next()?, "h")?[0])?;
        let origin: Vec<f64> = field(next()?, "origin")?
            .iter()
            .map(|s| num(s))
            .collect::<Result<_>>()?;
        let periodic = field(next()?, "periodic")?[0] == "1";
        if extents.len() != dims {
            return Err(bad("extents do not match dims"));
        }
        let mut g = Self::new(origin, h, extents, NodeKind::Interior)?;
        g.periodic = periodic;
        field(next()?, "values")?;
        let row = *g.extents.last().unwrap();
        let rows = g.len() / row;
        for r in 0..rows {
            let line = next()?;
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.len() != row {
                return Err(bad("short value row"));
            }
            for (c, v) in vals.iter().enumerate() {
                g.values[r * row + c] = if *v == "nan" { 0.0 } else { num(v)? };
            }
        }
        field(next()?, "mask")?;
        for r in 0..rows {
            let line = next()?;
            let codes: Vec<char> = line.trim().chars().collect();
            if codes.len() != row {
                return Err(bad("short mask row"));
            }
            for (c, ch) in codes.iter().enumerate() {
                g.mask[r * row + c] = match ch {
                    'I' => NodeKind::Interior,
                    'B' => NodeKind::Boundary,
                    'E' => NodeKind::Exterior,
                    _ => return Err(bad("bad mask code")),
                };
            }
        }
        Ok(g)
    }

    /// CSV of the nodes on the line through `at` parallel to `axis`:
    /// `coordinate,value`, skipping exterior nodes.
    pub fn cross_section_csv(&self, axis: usize, at: &[f64]) -> Result<String> {
        if axis >= self.dim() || at.len() != self.dim() {
            return domain("cross-section axis or point has the wrong dimension");
        }
        let mut idx: Vec<usize> = Vec::with_capacity(self.dim());
        for d in 0..self.dim() {
            let t = ((at[d] - self.origin[d]) / self.h).round();
            if !(0.0..self.extents[d] as f64).contains(&t) {
                return domain("cross-section point lies off the grid");
            }
            idx.push(t as usize);
        }
        let mut s = String::from("coordinate,value\n");
        for i in 0..self.extents[axis] {
            idx[axis] = i;
            let k = self.index(&idx);
            if self.mask[k] != NodeKind::Exterior {
                writeln!(s, "{},{}", self.origin[axis] + i as f64 * self.h, self.values[k]).unwrap();
            }
        }
        Ok(s)
    }
}
