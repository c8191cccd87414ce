//! Acceptance suite: one PASS/FAIL line per criterion. Criterion 11 reruns
//! 1–9 on a different thread count and compares the numeric digests.

use homog_core::barriers::{
    exponent_exterior, finite_boundary_stability_bound, verify_supersolution, BarrierKind, BarrierSpec,
};
use homog_core::corrector::{build_strip, estimate_gbar, ray_limit, solve_corrector, StripParams, PROFILE_LEVELS};
use homog_core::effective::{
    boundary_layer_compare, build_envelopes, effective_sandwich, envelope_solutions, sample_gbar_on_boundary,
    solve_oscillating, EnvelopeConfig, HomogenizeConfig, OscillatingProblem, SandwichConfig,
};
use homog_core::fdsolver::{comparison_check, discretize, solve_with, AxisymmetricPucci, NodeKind, SolveOptions};
use homog_core::geometry::direction::{DEFAULT_MAX_DENOMINATOR, DEFAULT_TOL};
use homog_core::geometry::{classify_direction, equidist_ratio, CompactSet, DomainSpec};
use homog_core::linalg::SymMat;
use homog_core::operators::{
    CoefficientField, EllipticOperatorSpec, Extremum, OperatorKind, Sign, SourceAndBoundaryData,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
    /// Numeric content compared by the determinism criterion.
    digest: String,
}

fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn load_homogenize(name: &str) -> HomogenizeConfig {
    let text = std::fs::read_to_string(repo().join("configs").join(name)).unwrap();
    toml::from_str(&text).unwrap()
}

fn laplacian() -> EllipticOperatorSpec {
    EllipticOperatorSpec::laplacian(2)
}

fn disk(r: f64) -> DomainSpec {
    DomainSpec::Disk {
        center: vec![0.0, 0.0],
        radius: r,
    }
}

fn half_disk() -> DomainSpec {
    DomainSpec::HalfDiskFlatBottom {
        center: [0.0, 1.0],
        radius: 1.0,
    }
}

fn c1_rational_counterexample() -> Outcome {
    let data = SourceAndBoundaryData::new("0", "cos(pi*y2)", vec![1.0, 2.0]).unwrap();
    let params = StripParams::default();
    let cases = [(0.25, 1.0), (1.0 / 6.0, 1.0), (1.0 / 3.0, -1.0), (0.2, -1.0)];
    let eps: Vec<f64> = cases.iter().map(|c| c.0).collect();
    let est = estimate_gbar(&[0.0, 1.0], &[0.0, 1.0], &eps, &params, &laplacian(), &data).unwrap();
    let mut pass = !est.equal;
    let mut detail = String::new();
    let mut digest = String::new();
    for &(e, target) in &cases {
        let r = est.records.iter().find(|r| (r.epsilon - e).abs() < 1e-12).unwrap();
        pass &= (r.alpha - target).abs() <= 0.02;
        write!(detail, "eps {e:.4} alpha {:+.5}; ", r.alpha).unwrap();
        write!(digest, "{:.17e},{:.17e};", r.alpha, r.err).unwrap();
    }
    write!(detail, "equal = {}", est.equal).unwrap();
    Outcome { pass, detail, digest }
}

fn c2_data() -> SourceAndBoundaryData {
    SourceAndBoundaryData::new("0", "cos(2*pi*y1)*cos(2*pi*y2) + 0.25", vec![1.0, 1.0]).unwrap()
}

fn c2_nu() -> Vec<f64> {
    let l = 3f64.sqrt();
    vec![1.0 / l, 2f64.sqrt() / l]
}

fn c2_linear_averaging() -> Outcome {
    let est = estimate_gbar(
        &[0.33, 0.71],
        &c2_nu(),
        &[0.1, 0.05],
        &StripParams::default(),
        &laplacian(),
        &c2_data(),
    )
    .unwrap();
    let (a, b) = (&est.records[0], &est.records[1]);
    let close = (a.alpha - 0.25).abs() <= 0.05 && (b.alpha - 0.25).abs() <= 0.05;
    let agree = (a.alpha - b.alpha).abs() <= a.err + b.err;
    Outcome {
        pass: close && agree,
        detail: format!(
            "alpha {:.5} (eps {}) and {:.5} (eps {}), |diff| {:.2e} vs err sum {:.3}",
            a.alpha,
            a.epsilon,
            b.alpha,
            b.epsilon,
            (a.alpha - b.alpha).abs(),
            a.err + b.err
        ),
        digest: format!("{:.17e},{:.17e},{:.17e},{:.17e}", a.alpha, a.err, b.alpha, b.err),
    }
}

fn c3_oscillation_decay() -> Outcome {
    let params = StripParams::default();
    let mut p = build_strip(&[0.33, 0.71], &c2_nu(), 0.1, &params, &laplacian(), &c2_data()).unwrap();
    let sol = solve_corrector(&mut p, params.tol).unwrap();
    let _ = ray_limit(&p, &sol.field, &sol.profile, &sol.record).unwrap();
    let w = &sol.profile.w;
    let monotone = w.windows(2).all(|x| x[1] <= x[0]);
    let first = w[1];
    let readout = w[PROFILE_LEVELS * 3 / 4];
    let pass = monotone && readout <= first / 4.0;
    Outcome {
        pass,
        detail: format!(
            "W = [{}], W(3T/4) {:.4} vs W(T/8)/4 {:.4}",
            w.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(", "),
            readout,
            first / 4.0
        ),
        digest: sol.profile.csv(),
    }
}

fn c4_equidistribution() -> Outcome {
    let golden = classify_direction(&[1.0, (1.0 + 5f64.sqrt()) / 2.0], DEFAULT_TOL, DEFAULT_MAX_DENOMINATOR).unwrap();
    let g = equidist_ratio(&golden, 0.1, 0.0, 1000.0).unwrap();
    let rational = classify_direction(&[1.0, 2.0], DEFAULT_TOL, DEFAULT_MAX_DENOMINATOR).unwrap();
    let r = equidist_ratio(&rational, 0.1, 0.2, 1000.0).unwrap();
    Outcome {
        pass: (g.ratio - 0.1).abs() <= 0.02 && r.hits == 0,
        detail: format!(
            "golden A/N = {}/{} = {:.4}; slope (1,2) window [0.2,0.3): A = {}",
            g.hits, g.total, g.ratio, r.hits
        ),
        digest: format!("{},{},{},{}", g.hits, g.total, r.hits, r.total),
    }
}

fn c5_barrier_identities() -> Outcome {
    let (n, l, bl) = (3, 1.0, 1.5);
    let op = EllipticOperatorSpec::pucci(n, l, bl, Sign::Plus).unwrap();
    let radial = BarrierSpec::radial_interior(n, l, bl, vec![0.0; n]).unwrap();
    let quad = BarrierSpec::quad_strip(n, l, bl, 1.0).unwrap();
    let rr = verify_supersolution(&radial, &op, &radial.sample_region(2000, 7)).unwrap();
    let qr = verify_supersolution(&quad, &op, &quad.sample_region(2000, 7)).unwrap();
    let mut radial_t = radial.clone();
    if let BarrierKind::RadialInterior { alpha, center } = &radial.kind {
        radial_t.kind = BarrierKind::RadialInterior {
            alpha: alpha + 0.01,
            center: center.clone(),
        };
    }
    let mut quad_t = quad.clone();
    if let BarrierKind::QuadStrip {
        scale,
        coefficient,
        amplitude,
        height,
    } = quad.kind
    {
        quad_t.kind = BarrierKind::QuadStrip {
            scale,
            coefficient: coefficient - 0.01,
            amplitude,
            height,
        };
    }
    let rt = verify_supersolution(&radial_t, &op, &radial_t.sample_region(2000, 7)).unwrap();
    let qt = verify_supersolution(&quad_t, &op, &quad_t.sample_region(2000, 7)).unwrap();
    let pass =
        rr.max_abs_operator <= 1e-9 && qr.max_abs_operator <= 1e-9 && rt.max_operator > 0.0 && qt.max_operator > 0.0;
    Outcome {
        pass,
        detail: format!(
            "|M+| radial {:.1e}, quad {:.1e}; perturbed max M+ radial {:.2e}, quad {:.2e}",
            rr.max_abs_operator, qr.max_abs_operator, rt.max_operator, qt.max_operator
        ),
        digest: format!(
            "{:.17e},{:.17e},{:.17e},{:.17e}",
            rr.max_abs_operator, qr.max_abs_operator, rt.max_operator, qt.max_operator
        ),
    }
}

/// `sup_K` of the `M⁺` solution in the cylinder `ρ < 1/2, 0 < z < 1.05`
/// with data 1 on the bottom disk `ρ ≤ r_m`, 0 elsewhere.
fn bump_sup(r_m: f64, h: f64) -> f64 {
    let (radius, height) = (0.5, 1.05);
    let g = |rho: f64, z: f64| {
        if z.abs() < 1e-12 && rho <= r_m + 1e-12 {
            1.0
        } else {
            0.0
        }
    };
    let s = AxisymmetricPucci::new(radius, height, h, 1.0, 1.5, Sign::Plus).unwrap();
    let mut u = s.initial(g, 0.0);
    s.solve_direct(&mut u, 1e-6, 100).unwrap();
    let mut best = f64::NEG_INFINITY;
    for i in 0..=s.nr {
        for j in 0..=s.nz {
            let (rho, z) = (i as f64 * s.h, j as f64 * s.h);
            if rho * rho + (z - 0.75) * (z - 0.75) <= 0.0625 + 1e-12 {
                best = best.max(u[s.index(i, j)]);
            }
        }
    }
    best
}

fn c6_stability_bound() -> Outcome {
    let h = 0.0025;
    let k = CompactSet::Ball {
        center: vec![0.0, 0.0, 0.75],
        radius: 0.25,
    };
    let z = vec![vec![0.0, 0.0, 0.0]];
    let bound = finite_boundary_stability_bound(&z, 0.01, &k, 3, 1.0, 1.5).unwrap();
    let s1 = bump_sup(0.01, h);
    let s2 = bump_sup(0.005, h);
    let factor = 2f64.powf(1.0 / 3.0) * 0.9;
    let pass = s1 <= bound + 2.0 * h && s1 / s2 >= factor;
    Outcome {
        pass,
        detail: format!(
            "sup_K b(0.01) = {s1:.4e} vs bound {:.4}; sup_K b(0.005) = {s2:.4e}, ratio {:.3} vs {factor:.3}",
            bound + 2.0 * h,
            s1 / s2
        ),
        digest: format!("{s1:.17e},{s2:.17e}"),
    }
}

fn c7_boundary_layer() -> Outcome {
    let x0 = [0.5 * 1f64.cos(), 0.5 * 1f64.sin()];
    let params = StripParams {
        h: 1.0 / 16.0,
        ..Default::default()
    };
    let mut cs = Vec::new();
    let mut detail = String::new();
    let mut digest = String::new();
    for eps in [1.0 / 16.0, 1.0 / 32.0] {
        let p = OscillatingProblem::new(disk(0.5), eps, laplacian(), c2_data()).unwrap();
        let u = solve_oscillating(&p, eps / 16.0, 2, 1e-10).unwrap();
        let r = boundary_layer_compare(&p, &u, &x0, (0.6, 0.85), &params).unwrap();
        write!(detail, "eps {eps:.4}: dev {:.3e}, C {:.3}; ", r.deviation, r.c_estimate).unwrap();
        write!(digest, "{:.17e};", r.deviation).unwrap();
        cs.push(r.c_estimate);
    }
    let ratio = cs[1] / cs[0];
    write!(detail, "C ratio {ratio:.3}").unwrap();
    Outcome {
        pass: (0.5..=2.0).contains(&ratio),
        detail,
        digest,
    }
}

fn c8_sandwich() -> Outcome {
    let cfg = load_homogenize("disk_homogenize.toml");
    let base = OscillatingProblem::new(
        cfg.domain.clone(),
        cfg.eps_list[0],
        cfg.operator.clone(),
        cfg.data.clone(),
    )
    .unwrap();
    let k = cfg.k.clone().unwrap_or_else(|| CompactSet::default_for(&cfg.domain));
    let points = cfg.domain.boundary_samples(cfg.boundary_samples).unwrap();
    let sols: Vec<_> = cfg
        .eps_list
        .iter()
        .map(|&e| {
            solve_oscillating(
                &base.with_epsilon(e).unwrap(),
                e / cfg.resolution,
                cfg.stencil_order,
                cfg.tol,
            )
            .unwrap()
        })
        .collect();
    let runs: Vec<_> = sols.iter().collect();
    let sandwich = |delta: f64| {
        let env = sample_gbar_on_boundary(&base, &points, &cfg.corrector_eps, &cfg.strip, delta).unwrap();
        let ecfg = EnvelopeConfig {
            delta,
            ..cfg.envelope.clone()
        };
        let env = build_envelopes(&base, env, &ecfg, &k).unwrap();
        let envs = envelope_solutions(&base, &env, &cfg.operator, &ecfg).unwrap();
        effective_sandwich(
            &base,
            &env,
            &envs,
            &runs,
            &k,
            &SandwichConfig { ..cfg.sandwich.clone() },
        )
        .unwrap()
    };
    let v = sandwich(cfg.envelope.delta);
    let mut detail = String::new();
    let mut digest = String::new();
    let norms: Vec<f64> = v.per_eps.iter().map(|r| r.u_max_k.abs().max(r.u_min_k.abs())).collect();
    for (r, n) in v.per_eps.iter().zip(&norms) {
        write!(
            detail,
            "eps {:.3}: ordered {} (excess over u+ {:+.3}, under u- {:+.3}), |u|_K {:.4}; ",
            r.epsilon, r.ordered, r.upper_violation, r.lower_violation, n
        )
        .unwrap();
        write!(
            digest,
            "{:.17e},{:.17e},{:.17e};",
            r.upper_violation, r.lower_violation, n
        )
        .unwrap();
    }
    let decreasing = norms.windows(2).all(|w| w[1] < w[0]);
    let small = *norms.last().unwrap() <= 0.1;
    let mut gaps = Vec::new();
    for i in [2.0, 4.0, 8.0] {
        gaps.push(sandwich(1.0 / i).envelope_gap);
    }
    let c = gaps[0] * 2.0;
    let gap_ok = gaps[1] <= c / 4.0 && gaps[2] <= c / 8.0;
    write!(
        detail,
        "gaps (1/2, 1/4, 1/8) = {:.3}, {:.3}, {:.3} with C = {c:.3}: {}",
        gaps[0],
        gaps[1],
        gaps[2],
        if gap_ok { "ok" } else { "exceeds C/i" }
    )
    .unwrap();
    write!(digest, "{:.17e},{:.17e},{:.17e}", gaps[0], gaps[1], gaps[2]).unwrap();
    Outcome {
        pass: v.ordered && decreasing && small && gap_ok,
        detail,
        digest,
    }
}

fn c9_non_iddc() -> Outcome {
    let data = SourceAndBoundaryData::new("0", "cos(pi*y2)", vec![1.0, 2.0]).unwrap();
    let probe = [0.0, 1.0 + 1.0 / 16.0];
    let mut pass = true;
    let mut detail = String::new();
    let mut digest = String::new();
    for (eps, high) in [(0.25, true), (1.0 / 6.0, true), (1.0 / 3.0, false), (0.2, false)] {
        let dp = discretize(&laplacian(), &half_disk(), &data, 1.0 / 64.0, 2, eps).unwrap();
        let (u, _) = solve_with(
            &dp,
            &SolveOptions {
                tol: 1e-10,
                ..Default::default()
            },
        )
        .unwrap();
        let v = u.interpolate(&probe).unwrap();
        pass &= if high { v >= 0.6 } else { v <= 0.4 };
        write!(detail, "eps {eps:.4}: u {v:+.4}; ").unwrap();
        write!(digest, "{v:.17e};").unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_homog"))
        .arg("homogenize")
        .arg(repo().join("configs/half_disk_homogenize.toml"))
        .env("HOMOG_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    let code = status.status.code();
    pass &= code == Some(4);
    write!(detail, "homogenize exit code {code:?}").unwrap();
    for f in ["convergence.csv", "envelope.csv"] {
        digest.push_str(&std::fs::read_to_string(dir.path().join(f)).unwrap_or_default());
    }
    Outcome { pass, detail, digest }
}

fn random_operator(rng: &mut ChaCha8Rng) -> EllipticOperatorSpec {
    let l = rng.gen_range(0.5..1.5);
    let bl = l * rng.gen_range(1.0..3.0);
    match rng.gen_range(0..4) {
        0 => EllipticOperatorSpec::pucci(2, l, bl, Sign::Plus).unwrap(),
        1 => EllipticOperatorSpec::pucci(2, l, bl, Sign::Minus).unwrap(),
        2 => {
            let (a, c) = (rng.gen_range(1.0..2.0), rng.gen_range(1.0..2.0));
            let b = rng.gen_range(-0.4..0.4);
            let m = SymMat::from_rows(&[vec![a, b], vec![b, c]]).unwrap();
            EllipticOperatorSpec::linear(CoefficientField::constant(&m), 0.5, 2.5, vec![]).unwrap()
        }
        _ => {
            let members = (0..3)
                .map(|_| {
                    let (a, c) = (rng.gen_range(1.0..2.0), rng.gen_range(1.0..2.0));
                    let b = rng.gen_range(-0.3..0.3);
                    CoefficientField::constant(&SymMat::from_rows(&[vec![a, b], vec![b, c]]).unwrap())
                })
                .collect();
            let ext = if rng.gen_bool(0.5) {
                Extremum::Sup
            } else {
                Extremum::Inf
            };
            EllipticOperatorSpec::new(OperatorKind::Bellman { members, extremum: ext }, 2, 0.5, 2.5, vec![]).unwrap()
        }
    }
}

fn radial_oracle(a: f64, b: f64, ua: f64, ub: f64, lambda: f64, big_lambda: f64, r: f64) -> f64 {
    let p = |s: f64| if s > 0.0 { big_lambda * s } else { lambda * s };
    let second = |t: f64| if t > 0.0 { t / big_lambda } else { t / lambda };
    let shoot = |slope: f64, stop: f64| {
        let n = 20_000;
        let hs = (stop - a) / n as f64;
        let (mut x, mut u, mut v) = (a, ua, slope);
        let f = |x: f64, v: f64| second(-p(v / x));
        for _ in 0..n {
            let (k1u, k1v) = (v, f(x, v));
            let (k2u, k2v) = (v + 0.5 * hs * k1v, f(x + 0.5 * hs, v + 0.5 * hs * k1v));
            let (k3u, k3v) = (v + 0.5 * hs * k2v, f(x + 0.5 * hs, v + 0.5 * hs * k2v));
            let (k4u, k4v) = (v + hs * k3v, f(x + hs, v + hs * k3v));
            u += hs / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
            v += hs / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            x += hs;
        }
        u
    };
    let (mut lo, mut hi) = (-100.0, 100.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if shoot(mid, b) < ub {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    shoot(0.5 * (lo + hi), r)
}

fn c10_solver_substrate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut violations = 0;
    let mut vacuous = 0;
    let opts = SolveOptions {
        tol: 1e-10,
        ..Default::default()
    };
    for _ in 0..100 {
        let op = random_operator(&mut rng);
        let dom = if rng.gen_bool(0.5) {
            disk(1.0)
        } else {
            DomainSpec::Rectangle {
                lo: vec![0.0, 0.0],
                hi: vec![1.0, 1.0],
            }
        };
        let (c1, c2, c3) = (
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let g = format!("{c1}*x1*x1 + {c2}*x1*x2 + {c3}*sin(3*x2)");
        let (a, b) = (rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.3));
        let (a2, b2) = (rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.3));
        let base = SourceAndBoundaryData::new("sin(2*x1)", &g, vec![]).unwrap();
        let sup =
            SourceAndBoundaryData::new(&format!("sin(2*x1) - {a}*(1 + x2*x2)"), &format!("{g} + {b}"), vec![]).unwrap();
        let sub = SourceAndBoundaryData::new(&format!("sin(2*x1) + {a2}"), &format!("{g} - {b2}*(1 + x1*x1)"), vec![])
            .unwrap();
        let order = if rng.gen_bool(0.5) { 2 } else { 3 };
        let h = 1.0 / 16.0;
        let p = discretize(&op, &dom, &base, h, order, 1.0).unwrap();
        let (u, _) = solve_with(&discretize(&op, &dom, &sup, h, order, 1.0).unwrap(), &opts).unwrap();
        let (v, _) = solve_with(&discretize(&op, &dom, &sub, h, order, 1.0).unwrap(), &opts).unwrap();
        let r = comparison_check(&p, &u, &v, 1e-8).unwrap();
        if !r.consistent {
            violations += 1;
        }
        if !r.hypotheses_hold {
            vacuous += 1;
        }
    }
    // harmonic quadratic on the unit square (boundary nodes lie on the boundary)
    let sq = DomainSpec::Rectangle {
        lo: vec![0.0, 0.0],
        hi: vec![1.0, 1.0],
    };
    let quad = SourceAndBoundaryData::new("0", "x1*x1 - x2*x2 + 0.5*x1*x2 + x1", vec![]).unwrap();
    let dp = discretize(&laplacian(), &sq, &quad, 1.0 / 32.0, 2, 1.0).unwrap();
    let (u, _) = solve_with(
        &dp,
        &SolveOptions {
            tol: 1e-13,
            ..Default::default()
        },
    )
    .unwrap();
    let mut qerr: f64 = 0.0;
    for k in 0..u.len() {
        if u.mask[k] == NodeKind::Interior {
            let x = u.position(k);
            qerr = qerr.max((u.values[k] - (x[0] * x[0] - x[1] * x[1] + 0.5 * x[0] * x[1] + x[0])).abs());
        }
    }
    // radial Pucci profile on the annulus 1/2 < r < 1; in the plane the interior
    // exponent does not exist for (1, 1.5), and u = -r^(-a) with the exterior
    // exponent a = 1/2 solves M+ = 0
    let (ri, ro, h) = (0.5, 1.0, 1.0 / 64.0);
    let alpha = exponent_exterior(2, 1.0, 1.5).unwrap();
    let ann = DomainSpec::Annulus {
        center: vec![0.0, 0.0],
        inner: ri,
        outer: ro,
    };
    let op = EllipticOperatorSpec::pucci(2, 1.0, 1.5, Sign::Plus).unwrap();
    let (ua, ub) = (-(ri as f64).powf(-alpha), -(ro as f64).powf(-alpha));
    let g = format!("{ua} + ({ub} - {ua})*step(x1*x1 + x2*x2 - 0.5625)");
    let data = SourceAndBoundaryData::new("0", &g, vec![]).unwrap();
    let dp = discretize(&op, &ann, &data, h, 2, 1.0).unwrap();
    let (u, _) = solve_with(&dp, &opts).unwrap();
    let radii: Vec<f64> = (1..16).map(|i| ri + (ro - ri) * i as f64 / 16.0).collect();
    let oracle: Vec<f64> = radii
        .iter()
        .map(|&r| radial_oracle(ri, ro, ua, ub, 1.0, 1.5, r))
        .collect();
    let mut aerr: f64 = 0.0;
    for k in 0..u.len() {
        if u.mask[k] != NodeKind::Interior {
            continue;
        }
        let x = u.position(k);
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let j = radii
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - r).abs().total_cmp(&(b.1 - r).abs()))
            .unwrap()
            .0;
        if (radii[j] - r).abs() < 1e-3 {
            aerr = aerr.max((u.values[k] - oracle[j]).abs());
        }
    }
    let exact_dev = radii
        .iter()
        .zip(&oracle)
        .map(|(r, o)| (o + r.powf(-alpha)).abs())
        .fold(0.0, f64::max);
    let pass = violations == 0 && vacuous == 0 && qerr <= 1e-10 && aerr <= 2.0 * h;
    Outcome {
        pass,
        detail: format!(
            "comparison violations {violations}/100 (vacuous {vacuous}); quadratic err {qerr:.1e}; annulus err {aerr:.2e} vs 2h {:.3} (oracle vs closed form {exact_dev:.1e})",
            2.0 * h
        ),
        digest: format!("{qerr:.17e},{aerr:.17e}"),
    }
}

type Criterion = (u32, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 10] = [
    (1, "rational counterexample", c1_rational_counterexample),
    (2, "linear averaging", c2_linear_averaging),
    (3, "oscillation decay", c3_oscillation_decay),
    (4, "equidistribution", c4_equidistribution),
    (5, "barrier identities", c5_barrier_identities),
    (6, "stability bound", c6_stability_bound),
    (7, "boundary-layer matching", c7_boundary_layer),
    (8, "envelope sandwich", c8_sandwich),
    (9, "non-IDDC failure", c9_non_iddc),
    (10, "solver substrate", c10_solver_substrate),
];

fn main() {
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = Vec::new();
    let mut digests = Vec::new();
    for (id, name, f) in CRITERIA {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let t = Instant::now();
        let o = f();
        println!(
            "criterion {id:>2} {name}: {} ({:.1}s) {}",
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.pass {
            failed.push(id);
        }
        if id <= 9 {
            digests.push((id, o.digest));
        }
    }
    if only.is_none() || only == Some(11) {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
        let t = Instant::now();
        let mut differ = Vec::new();
        for (id, _, f) in CRITERIA.iter().filter(|c| c.0 <= 9) {
            let again = pool.install(f).digest;
            let first = match digests.iter().find(|d| d.0 == *id) {
                Some((_, d)) => d.clone(),
                None => f().digest,
            };
            if first != again {
                differ.push(*id);
            }
        }
        let pass = differ.is_empty();
        println!(
            "criterion 11 determinism: {} ({:.1}s) reruns of 1-9 on 2 threads; differing: {differ:?}",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
        if !pass {
            failed.push(11);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
