//! Explicit supersolutions of the Pucci maximal operator: the quadratic strip
//! barrier, radial power barriers and the stability bound built on them.

use crate::error::{domain, Error, Result};
use crate::geometry::CompactSet;
use crate::linalg::{dist, SymMat};
use crate::operators::{pucci_eval, EllipticOperatorSpec, Sign};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const SUPERSOLUTION_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BarrierKind {
    /// `A (|x′/s|² + c (1 − (x_n/s − 1)²))` on the box `|x′_i| ≤ s/2`,
    /// `0 ≤ x_n ≤ height` (`height = s` when absent).
    QuadStrip {
        scale: f64,
        coefficient: f64,
        amplitude: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        height: Option<f64>,
    },
    /// `|x − c|^(−α)`.
    RadialInterior { alpha: f64, center: Vec<f64> },
    /// `r₀^(−α) − |x − c|^(−α)`, nonnegative outside `B_{r₀}(c)`.
    RadialExterior { alpha: f64, center: Vec<f64>, r0: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    #[serde(flatten)]
    pub kind: BarrierKind,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    pub n: usize,
}

/// `(n−1) λ/Λ − 1`, the exponent making `|x|^(−α)` a solution of `M⁺ = 0`.
pub fn exponent_interior(n: usize, lambda: f64, big_lambda: f64) -> Result<f64> {
    check_constants(n, lambda, big_lambda)?;
    let a = (n as f64 - 1.0) * lambda / big_lambda - 1.0;
    if a <= 0.0 {
        return Err(Error::Stability(format!(
            "(n-1) lambda = {} is not > Lambda = {big_lambda}",
            (n as f64 - 1.0) * lambda
        )));
    }
    Ok(a)
}

/// `(n−1) Λ/λ − 1`, the exponent making `r₀^(−α) − |x|^(−α)` a solution of
/// `M⁺ = 0` outside the ball.
pub fn exponent_exterior(n: usize, lambda: f64, big_lambda: f64) -> Result<f64> {
    check_constants(n, lambda, big_lambda)?;
    let a = (n as f64 - 1.0) * big_lambda / lambda - 1.0;
    if a <= 0.0 {
        return Err(Error::DegenerateBarrier(format!(
            "exterior exponent {a} <= 0 (logarithmic case)"
        )));
    }
    Ok(a)
}

fn check_constants(n: usize, lambda: f64, big_lambda: f64) -> Result<()> {
    if n < 2 {
        return domain("dimension must be >= 2");
    }
    if !(lambda > 0.0 && big_lambda >= lambda) {
        return domain("need 0 < lambda <= Lambda");
    }
    Ok(())
}

/// Smallest quadratic coefficient for which `M⁺` of the strip barrier is `≤ 0`.
pub fn quad_coefficient(n: usize, lambda: f64, big_lambda: f64) -> f64 {
    (n as f64 - 1.0) * big_lambda / lambda
}

/// Amplitude making the strip barrier `≥ 1` on the lateral faces and the
/// top of the box of width `s` and the given height.
pub fn quad_amplitude(coefficient: f64, scale: f64, height: f64) -> f64 {
    let t = height / scale;
    let top = coefficient * (2.0 * t - t * t);
    4f64.max(1.0 / top)
}

impl BarrierSpec {
    /// Normalized strip barrier on the cube of side `scale`.
    pub fn quad_strip(n: usize, lambda: f64, big_lambda: f64, scale: f64) -> Result<Self> {
        Self::quad_box(n, lambda, big_lambda, scale, scale)
    }

    /// Normalized strip barrier on the box of width `scale` and `height ≤ scale`.
    pub fn quad_box(n: usize, lambda: f64, big_lambda: f64, scale: f64, height: f64) -> Result<Self> {
        check_constants(n, lambda, big_lambda)?;
        if !(scale > 0.0 && height > 0.0 && height <= scale) {
            return domain("quad_strip needs 0 < height <= scale");
        }
        let c = quad_coefficient(n, lambda, big_lambda);
        let s = Self {
            kind: BarrierKind::QuadStrip {
                scale,
                coefficient: c,
                amplitude: quad_amplitude(c, scale, height),
                height: Some(height),
            },
            lambda,
            big_lambda,
            n,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn radial_interior(n: usize, lambda: f64, big_lambda: f64, center: Vec<f64>) -> Result<Self> {
        let alpha = exponent_interior(n, lambda, big_lambda)?;
        let s = Self {
            kind: BarrierKind::RadialInterior { alpha, center },
            lambda,
            big_lambda,
            n,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn radial_exterior(n: usize, lambda: f64, big_lambda: f64, center: Vec<f64>, r0: f64) -> Result<Self> {
        let alpha = exponent_exterior(n, lambda, big_lambda)?;
        let s = Self {
            kind: BarrierKind::RadialExterior { alpha, center, r0 },
            lambda,
            big_lambda,
            n,
        };
        s.validate()?;
        Ok(s)
    }

    /// Structural checks. Exponents are not pinned to the extremal values
    /// here, so perturbed barriers can be verified (and fail) explicitly.
    pub fn validate(&self) -> Result<()> {
        check_constants(self.n, self.lambda, self.big_lambda)?;
        match &self.kind {
            BarrierKind::QuadStrip {
                scale,
                coefficient,
                amplitude,
                height,
            } => {
                if !(*scale > 0.0 && *amplitude > 0.0) {
                    return domain("quad_strip scale and amplitude must be positive");
                }
                if height.is_some_and(|t| !(t > 0.0 && t <= *scale)) {
                    return domain("quad_strip height must lie in (0, scale]");
                }
                if !(*coefficient > 0.0) {
                    return domain("quad_strip coefficient must be positive");
                }
            }
            BarrierKind::RadialInterior { alpha, center } | BarrierKind::RadialExterior { alpha, center, .. } => {
                if center.len() != self.n {
                    return domain("barrier center has the wrong dimension");
                }
                if *alpha <= 0.0 {
                    return Err(Error::DegenerateBarrier(format!("alpha = {alpha} <= 0")));
                }
                if let BarrierKind::RadialExterior { r0, .. } = &self.kind {
                    if !(*r0 > 0.0) {
                        return domain("exterior barrier radius must be positive");
                    }
                }
            }
        }
        Ok(())
    }

    fn radial(&self, x: &[f64]) -> Result<(f64, &[f64], f64)> {
        let (alpha, center) = match &self.kind {
            BarrierKind::RadialInterior { alpha, center } | BarrierKind::RadialExterior { alpha, center, .. } => {
                (*alpha, center.as_slice())
            }
            BarrierKind::QuadStrip { .. } => unreachable!(),
        };
        let r = dist(x, center);
        if r == 0.0 {
            return domain("radial barrier is singular at its center");
        }
        Ok((alpha, center, r))
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n {
            return domain("point has the wrong dimension");
        }
        match &self.kind {
            BarrierKind::QuadStrip {
                scale,
                coefficient,
                amplitude,
                ..
            } => {
                let n = self.n;
                let lat: f64 = x[..n - 1].iter().map(|v| (v / scale).powi(2)).sum();
                let t = x[n - 1] / scale - 1.0;
                Ok(amplitude * (lat + coefficient * (1.0 - t * t)))
            }
            BarrierKind::RadialInterior { .. } => {
                let (a, _, r) = self.radial(x)?;
                Ok(r.powf(-a))
            }
            BarrierKind::RadialExterior { r0, .. } => {
                let (a, _, r) = self.radial(x)?;
                Ok(r0.powf(-a) - r.powf(-a))
            }
        }
    }

    pub fn hessian(&self, x: &[f64]) -> Result<SymMat> {
        if x.len() != self.n {
            return domain("point has the wrong dimension");
        }
        let n = self.n;
        match &self.kind {
            BarrierKind::QuadStrip {
                scale,
                coefficient,
                amplitude,
                ..
            } => {
                let mut d = vec![2.0 * amplitude / (scale * scale); n];
                d[n - 1] = -2.0 * amplitude * coefficient / (scale * scale);
                Ok(SymMat::diag(&d))
            }
            BarrierKind::RadialInterior { .. } | BarrierKind::RadialExterior { .. } => {
                let (a, c, r) = self.radial(x)?;
                // D²(r^-a) = r^(-a-2) (−a I + a (a+2) x̂x̂ᵀ)
                let e: Vec<f64> = x.iter().zip(c).map(|(p, q)| (p - q) / r).collect();
                let mut hm = SymMat::outer(&e)
                    .scale(a * (a + 2.0))
                    .sub(&SymMat::identity(n).scale(a));
                hm = hm.scale(r.powf(-a - 2.0));
                if matches!(self.kind, BarrierKind::RadialExterior { .. }) {
                    hm = hm.scale(-1.0);
                }
                Ok(hm)
            }
        }
    }

    /// Points of the barrier's natural region: the box for the strip
    /// barrier, the shell `r₁ ≤ |x − c| ≤ 2 r₁` for radial kinds
    /// (`r₁ = r₀` for the exterior kind, 1/2 otherwise).
    pub fn sample_region(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.n;
        (0..count)
            .map(|_| match &self.kind {
                BarrierKind::QuadStrip { scale, height, .. } => {
                    let mut x: Vec<f64> = (0..n).map(|_| (rng.gen::<f64>() - 0.5) * scale).collect();
                    x[n - 1] = rng.gen::<f64>() * height.unwrap_or(*scale);
                    x
                }
                BarrierKind::RadialInterior { center, .. } | BarrierKind::RadialExterior { center, .. } => {
                    let r1 = match &self.kind {
                        BarrierKind::RadialExterior { r0, .. } => *r0,
                        _ => 0.5,
                    };
                    let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
                    let l = v.iter().map(|t| t * t).sum::<f64>().sqrt().max(1e-12);
                    let r = r1 * (1.0 + rng.gen::<f64>());
                    for (t, c) in v.iter_mut().zip(center) {
                        *t = c + *t / l * r;
                    }
                    v
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SupersolutionReport {
    pub samples: usize,
    /// Largest `F(D²h, x)` over the samples.
    pub max_operator: f64,
    /// Largest `|F(D²h, x)|`.
    pub max_abs_operator: f64,
    pub worst_point: Vec<f64>,
    /// Smallest barrier value on the top and lateral faces (strip barrier).
    pub boundary_min: Option<f64>,
    pub boundary_ok: Option<bool>,
    pub passed: bool,
}

/// Evaluates `op(D²h, x)` at `points` and checks the supersolution sign.
/// For the strip barrier the domination `h ≥ 1` on the top and lateral faces
/// of its box is checked too.
pub fn verify_supersolution(
    spec: &BarrierSpec,
    op: &EllipticOperatorSpec,
    points: &[Vec<f64>],
) -> Result<SupersolutionReport> {
    spec.validate()?;
    if op.dim != spec.n {
        return domain("operator and barrier dimensions differ");
    }
    if points.is_empty() {
        return domain("no sample points");
    }
    let mut mx = f64::NEG_INFINITY;
    let mut mabs: f64 = 0.0;
    let mut worst = points[0].clone();
    for x in points {
        let hs = spec.hessian(x)?;
        let v = op.eval(&hs, x);
        mabs = mabs.max(v.abs());
        if v > mx {
            mx = v;
            worst = x.clone();
        }
    }
    let (boundary_min, boundary_ok) = match &spec.kind {
        BarrierKind::QuadStrip { scale, height, .. } => {
            let m = quad_face_min(spec, *scale, height.unwrap_or(*scale))?;
            (Some(m), Some(m >= 1.0 - 1e-12))
        }
        _ => (None, None),
    };
    Ok(SupersolutionReport {
        samples: points.len(),
        max_operator: mx,
        max_abs_operator: mabs,
        worst_point: worst,
        boundary_min,
        passed: mx <= SUPERSOLUTION_TOL && boundary_ok.unwrap_or(true),
        boundary_ok,
    })
}

/// Minimum of the strip barrier over a grid on its top and lateral faces.
fn quad_face_min(spec: &BarrierSpec, s: f64, height: f64) -> Result<f64> {
    let n = spec.n;
    const K: usize = 17;
    let mut best = f64::INFINITY;
    let total = K.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let mut x = vec![0.0; n];
        for xi in x.iter_mut() {
            *xi = (c % K) as f64 / (K - 1) as f64;
            c /= K;
        }
        for i in 0..n - 1 {
            x[i] = (x[i] - 0.5) * s;
        }
        x[n - 1] *= height;
        let on_top = (x[n - 1] - height).abs() < 1e-12;
        let on_side = x[..n - 1].iter().any(|v| (v.abs() - s / 2.0).abs() < 1e-12);
        if on_top || on_side {
            best = best.min(spec.value(&x)?);
        }
    }
    Ok(best)
}

/// `Σ_i r_m^α / dist(z_i, K)^α` with the interior exponent.
pub fn finite_boundary_stability_bound(
    points: &[Vec<f64>],
    r_m: f64,
    k: &CompactSet,
    n: usize,
    lambda: f64,
    big_lambda: f64,
) -> Result<f64> {
    let alpha = exponent_interior(n, lambda, big_lambda)?;
    if !(r_m > 0.0) {
        return domain("r_m must be positive");
    }
    let mut total = 0.0;
    for z in points {
        let d = k.distance(z)?;
        if !(d > 0.0) {
            return domain(format!("point {z:?} touches the compact set"));
        }
        total += (r_m / d).powf(alpha);
    }
    Ok(total)
}

/// `M⁺` of the strip barrier, for reporting.
pub fn quad_strip_pucci(spec: &BarrierSpec) -> Result<f64> {
    let x = vec![0.0; spec.n];
    Ok(pucci_eval(&spec.hessian(&x)?, spec.lambda, spec.big_lambda, Sign::Plus))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_hessian(s: &BarrierSpec, x: &[f64], step: f64) -> SymMat {
        let n = x.len();
        let mut m = SymMat::zeros(n);
        let f = |p: &[f64]| s.value(p).unwrap();
        for i in 0..n {
            for j in i..n {
                let mut pp = x.to_vec();
                let mut pm = x.to_vec();
                let mut mp = x.to_vec();
                let mut mm = x.to_vec();
                pp[i] += step;
                pp[j] += step;
                pm[i] += step;
                pm[j] -= step;
                mp[i] -= step;
                mp[j] += step;
                mm[i] -= step;
                mm[j] -= step;
                m.set(i, j, (f(&pp) - f(&pm) - f(&mp) + f(&mm)) / (4.0 * step * step));
            }
        }
        m
    }

    #[test]
    fn exponents() {
        assert!((exponent_interior(3, 1.0, 1.5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(exponent_interior(2, 1.0, 1.0), Err(Error::Stability(_))));
        assert_eq!(exponent_interior(3, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(exponent_exterior(3, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(exponent_exterior(2, 1.0, 2.0).unwrap(), 1.0);
        assert!(matches!(
            exponent_exterior(2, 1.0, 1.0),
            Err(Error::DegenerateBarrier(_))
        ));
    }

    #[test]
    fn plug_in_values() {
        let s = BarrierSpec {
            kind: BarrierKind::QuadStrip {
                scale: 1.0,
                coefficient: 2.0,
                amplitude: 1.0,
                height: None,
            },
            lambda: 1.0,
            big_lambda: 2.0,
            n: 2,
        };
        assert_eq!(s.value(&[0.0, 1.0]).unwrap(), 2.0);
        let r = BarrierSpec {
            kind: BarrierKind::RadialInterior {
                alpha: 1.0,
                center: vec![0.0; 3],
            },
            lambda: 1.0,
            big_lambda: 1.0,
            n: 3,
        };
        assert_eq!(r.value(&[0.0, 0.0, 2.0]).unwrap(), 0.5);
        assert!(r.value(&[0.0; 3]).is_err());
        let e = BarrierSpec::radial_exterior(2, 1.0, 2.0, vec![0.0, 0.0], 0.3).unwrap();
        assert!(e.value(&[0.3, 0.0]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn hessians_match_finite_differences() {
        let specs = [
            BarrierSpec::quad_strip(3, 1.0, 1.5, 2.0).unwrap(),
            BarrierSpec::radial_interior(3, 1.0, 1.5, vec![0.1, -0.2, 0.0]).unwrap(),
            BarrierSpec::radial_exterior(2, 1.0, 2.0, vec![0.0, 0.0], 0.5).unwrap(),
        ];
        for s in &specs {
            for x in s.sample_region(20, 7) {
                let a = s.hessian(&x).unwrap();
                let b = fd_hessian(s, &x, 1e-4);
                let scale = a.max_abs().max(1.0);
                assert!(a.sub(&b).max_abs() / scale < 1e-6, "{s:?} at {x:?}");
            }
        }
    }

    #[test]
    fn radial_interior_is_harmonic_for_pucci() {
        let s = BarrierSpec::radial_interior(3, 1.0, 1.5, vec![0.0; 3]).unwrap();
        let op = EllipticOperatorSpec::pucci(3, 1.0, 1.5, Sign::Plus).unwrap();
        let pts = s.sample_region(1000, 1);
        let r = verify_supersolution(&s, &op, &pts).unwrap();
        assert!(r.max_abs_operator <= 1e-9 && r.passed);
        // the radial eigenvalues give the same value independently
        let a: f64 = 1.0 / 3.0;
        for x in pts.iter().take(50) {
            let rr = dist(x, &[0.0; 3]);
            let rad = a * (a + 1.0) * rr.powf(-a - 2.0);
            let tan = -a * rr.powf(-a - 2.0);
            assert!((1.5 * rad + 2.0 * tan).abs() < 1e-12);
        }
        let mut p = s.clone();
        if let BarrierKind::RadialInterior { alpha, .. } = &mut p.kind {
            *alpha += 0.01;
        }
        assert!(!verify_supersolution(&p, &op, &pts).unwrap().passed);
    }

    #[test]
    fn quad_strip_is_pucci_harmonic_and_dominates() {
        for (n, l, big) in [(2, 1.0, 2.0), (3, 1.0, 1.5), (2, 1.0, 1.0)] {
            let s = BarrierSpec::quad_strip(n, l, big, 3.0).unwrap();
            assert!(quad_strip_pucci(&s).unwrap().abs() <= 1e-9);
            let op = EllipticOperatorSpec::pucci(n, l, big, Sign::Plus).unwrap();
            let r = verify_supersolution(&s, &op, &s.sample_region(200, 3)).unwrap();
            assert!(r.passed && r.boundary_ok == Some(true), "{r:?}");
        }
        // the printed (n−2)Λ/λ coefficient gives M⁺ = 2Λ/s² > 0 in 3D
        let s = BarrierSpec {
            kind: BarrierKind::QuadStrip {
                scale: 1.0,
                coefficient: 1.5,
                amplitude: 1.0,
                height: None,
            },
            lambda: 1.0,
            big_lambda: 1.5,
            n: 3,
        };
        let hs = s.hessian(&[0.0; 3]).unwrap();
        assert!((pucci_eval(&hs, 1.0, 1.5, Sign::Plus) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn exterior_barrier_is_supersolution() {
        let s = BarrierSpec::radial_exterior(2, 1.0, 2.0, vec![0.0, 0.0], 0.25).unwrap();
        let op = EllipticOperatorSpec::pucci(2, 1.0, 2.0, Sign::Plus).unwrap();
        let r = verify_supersolution(&s, &op, &s.sample_region(500, 5)).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn stability_bound_arithmetic() {
        let k = CompactSet::Ball {
            center: vec![0.0, 0.0, 0.75],
            radius: 0.25,
        };
        let z = vec![0.0, 0.0, 0.0];
        let b = finite_boundary_stability_bound(&[z.clone()], 0.01, &k, 3, 1.0, 1.5).unwrap();
        assert!((b - 0.02f64.powf(1.0 / 3.0)).abs() < 1e-12);
        assert!((b - 0.271).abs() < 1e-3);
        let b2 = finite_boundary_stability_bound(&[z.clone(), z.clone()], 0.01, &k, 3, 1.0, 1.5).unwrap();
        assert!((b2 - 2.0 * b).abs() < 1e-12);
        let tiny = finite_boundary_stability_bound(&[z], 1e-12, &k, 3, 1.0, 1.5).unwrap();
        assert!(tiny < 1e-3);
    }
}
