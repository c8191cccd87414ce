//! Subcommand configs and runners. Every config is TOML; unknown sections
//! are ignored, missing required fields are reported with their location.

use homog_core::barriers::{verify_supersolution, BarrierKind, BarrierSpec};
use homog_core::corrector::{build_strip, cell_average, estimate_gbar, ray_limit, solve_corrector, StripParams};
use homog_core::effective::{homogenize, solve_oscillating, HomogenizeConfig, OscillatingProblem};
use homog_core::fdsolver::{discretize, solve_with, GridField, SolveOptions};
use homog_core::geometry::direction::{DEFAULT_MAX_DENOMINATOR, DEFAULT_TOL};
use homog_core::geometry::{classify_direction, equidist_ratio, iddc_audit, DomainSpec};
use homog_core::operators::{validate_operator, EllipticOperatorSpec, Sign, SourceAndBoundaryData};
use homog_core::Error;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Keys shared by every config.
#[derive(Debug, Default, Deserialize)]
pub struct Common {
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

pub struct RunContext {
    pub out: PathBuf,
    pub seed: u64,
}

pub struct Outcome {
    pub verdict: bool,
    pub config: Value,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(Error),
    Io(std::io::Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => crate::EXIT_CONFIG,
            CliError::Core(Error::Parse { .. } | Error::Domain(_) | Error::Refused(_)) => crate::EXIT_CONFIG,
            _ => crate::EXIT_NUMERICAL,
        }
    }

    pub fn payload(&self) -> Value {
        match self {
            CliError::Config(m) => json!({"kind": "config", "message": m}),
            CliError::Io(e) => json!({"kind": "io", "message": e.to_string()}),
            CliError::Core(e) => {
                let kind = match e {
                    Error::Domain(_) => "domain",
                    Error::NoNearIntegerPoint { .. } => "no_near_integer_point",
                    Error::Certificate { .. } => "certificate",
                    Error::NotConverged { .. } => "not_converged",
                    Error::Stability(_) => "stability",
                    Error::DegenerateBarrier(_) => "degenerate_barrier",
                    Error::Refused(_) => "refused",
                    Error::DeltaContinuity { .. } => "delta_continuity",
                    Error::Parse { .. } => "parse",
                    Error::Io(_) => "io",
                    Error::Json(_) => "json",
                };
                let mut v = json!({"kind": kind, "message": e.to_string()});
                match e {
                    Error::NotConverged {
                        iterations,
                        residual,
                        history,
                    } => {
                        v["iterations"] = json!(iterations);
                        v["residual"] = json!(residual);
                        v["history"] = json!(history);
                    }
                    Error::DeltaContinuity { i, j, a, b, bound } => {
                        v["pair"] = json!([i, j]);
                        v["values"] = json!([a, b]);
                        v["bound"] = json!(bound);
                    }
                    Error::NoNearIntegerPoint { m, delta } => {
                        v["m"] = json!(m);
                        v["delta"] = json!(delta);
                    }
                    Error::Certificate { node, detail } => {
                        v["node"] = json!(node);
                        v["detail"] = json!(detail);
                    }
                    _ => {}
                }
                v
            }
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn parse<T: DeserializeOwned>(text: &str) -> CliResult<T> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

fn echo<T: Serialize>(cfg: &T) -> Value {
    serde_json::to_value(cfg).unwrap_or(Value::Null)
}

fn write(dir: &Path, name: &str, body: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(dir.join(name), body)?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, v: &T) -> CliResult<()> {
    let s = serde_json::to_string_pretty(v).map_err(Error::from)?;
    write(dir, name, s + "\n")
}

fn write_grid(dir: &Path, name: &str, g: &GridField) -> CliResult<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(name))?);
    g.write_text(&mut f)?;
    Ok(())
}

fn normalized(mut op: EllipticOperatorSpec) -> CliResult<EllipticOperatorSpec> {
    op.normalize()?;
    Ok(op)
}

pub fn run(name: &str, text: &str, ctx: &RunContext) -> CliResult<Outcome> {
    match name {
        "solve" => solve(parse(text)?, ctx),
        "corrector" => corrector(parse(text)?, ctx),
        "gbar" => gbar(parse(text)?, ctx),
        "equidist" => equidist(parse(text)?, ctx),
        "audit" => audit(parse(text)?, ctx),
        "barriers" => barriers(parse(text)?, ctx),
        "homogenize" => homogenize_cmd(parse(text)?, ctx),
        "validate" => validate(parse(text)?, ctx),
        other => Err(CliError::Config(format!("unknown command {other}"))),
    }
}

fn default_order() -> u8 {
    2
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    200_000
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SolveConfig {
    pub domain: DomainSpec,
    pub operator: EllipticOperatorSpec,
    pub data: SourceAndBoundaryData,
    pub h: f64,
    /// Oscillation scale; the plain problem with `ε = 1` when absent.
    pub epsilon: Option<f64>,
    #[serde(default = "default_order")]
    pub stencil_order: u8,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn solve(cfg: SolveConfig, ctx: &RunContext) -> CliResult<Outcome> {
    let op = normalized(cfg.operator.clone())?;
    let (field, record, bound) = match cfg.epsilon {
        Some(eps) => {
            let p = OscillatingProblem::new(cfg.domain.clone(), eps, op, cfg.data.clone())?;
            let s = solve_oscillating(&p, cfg.h, cfg.stencil_order, cfg.tol)?;
            (
                s.field,
                s.record,
                Some(json!({"sup": s.sup, "bound": s.bound, "ok": s.bound_ok})),
            )
        }
        None => {
            let dp = discretize(&op, &cfg.domain, &cfg.data, cfg.h, cfg.stencil_order, 1.0)?;
            let opts = SolveOptions {
                tol: cfg.tol,
                max_iter: cfg.max_iter,
                ..Default::default()
            };
            let (f, r) = solve_with(&dp, &opts)?;
            (f, r, None)
        }
    };
    write_grid(&ctx.out, "solution.grid", &field)?;
    write(&ctx.out, "convergence.csv", record.history_csv())?;
    write_json(
        &ctx.out,
        "summary.json",
        &json!({"record": record, "uniform_bound": bound}),
    )?;
    Ok(Outcome {
        verdict: true,
        config: echo(&cfg),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CorrectorConfig {
    pub operator: EllipticOperatorSpec,
    pub data: SourceAndBoundaryData,
    pub x0: Vec<f64>,
    /// Inward normal of the half-space.
    pub nu: Vec<f64>,
    pub epsilon: f64,
    #[serde(default)]
    pub strip: StripParams,
}

fn corrector(mut cfg: CorrectorConfig, ctx: &RunContext) -> CliResult<Outcome> {
    cfg.strip.seed = ctx.seed;
    let op = normalized(cfg.operator.clone())?;
    let mut p = build_strip(&cfg.x0, &cfg.nu, cfg.epsilon, &cfg.strip, &op, &cfg.data)?;
    let sol = solve_corrector(&mut p, cfg.strip.tol)?;
    let limit = ray_limit(&p, &sol.field, &sol.profile, &sol.record)?;
    write(&ctx.out, "profile.csv", sol.profile.csv())?;
    write_grid(&ctx.out, "strip.grid", &sol.field)?;
    write(&ctx.out, "convergence.csv", sol.record.history_csv())?;
    write_json(
        &ctx.out,
        "corrector.json",
        &json!({
            "epsilon": cfg.epsilon,
            "nu": p.nu,
            "y0": p.y0_eps,
            "ray_limit": limit,
            "top_value": sol.top_value,
            "profile": sol.profile,
            "record": sol.record,
        }),
    )?;
    Ok(Outcome {
        verdict: !limit.flagged,
        config: echo(&cfg),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GbarPoint {
    pub x0: Vec<f64>,
    pub nu: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GbarConfig {
    pub operator: EllipticOperatorSpec,
    pub data: SourceAndBoundaryData,
    /// Explicit points with inward normals.
    #[serde(default)]
    pub points: Vec<GbarPoint>,
    /// Uniform arclength samples of this planar domain.
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub boundary_samples: usize,
    pub eps_list: Vec<f64>,
    #[serde(default)]
    pub strip: StripParams,
}

fn gbar(mut cfg: GbarConfig, ctx: &RunContext) -> CliResult<Outcome> {
    cfg.strip.seed = ctx.seed;
    let op = normalized(cfg.operator.clone())?;
    let mut pts: Vec<(Option<f64>, Vec<f64>, Vec<f64>)> =
        cfg.points.iter().map(|p| (None, p.x0.clone(), p.nu.clone())).collect();
    if let Some(dom) = &cfg.domain {
        for bp in dom.boundary_samples(cfg.boundary_samples)? {
            let nu = bp.normal.iter().map(|v| -v).collect();
            pts.push((Some(bp.s), bp.x, nu));
        }
    }
    if pts.is_empty() {
        return Err(CliError::Config(
            "no points: give [[points]] or domain + boundary_samples".into(),
        ));
    }
    let mut csv = String::from("index,s,x0,nu,class,gbar_star,gbar_lower,spread,equal,gbar,cell_average,flagged\n");
    let mut all = Vec::new();
    let mut flagged_any = false;
    for (i, (s, x0, nu)) in pts.iter().enumerate() {
        let est = estimate_gbar(x0, nu, &cfg.eps_list, &cfg.strip, &op, &cfg.data)?;
        let avg = cell_average(&cfg.data, x0, 64)?;
        let class = if est.nu.is_rational() { "rational" } else { "irrational" };
        let join = |v: &[f64]| v.iter().map(|a| format!("{a:.12e}")).collect::<Vec<_>>().join(" ");
        flagged_any |= !est.flagged_eps.is_empty();
        writeln!(
            csv,
            "{i},{},{},{},{class},{:.12e},{:.12e},{:.12e},{},{},{avg:.12e},{}",
            s.map(|v| format!("{v:.12e}")).unwrap_or_default(),
            join(x0),
            join(&est.nu.nu),
            est.gbar_star,
            est.gbar_lower,
            est.spread,
            est.equal,
            est.gbar.map(|v| format!("{v:.12e}")).unwrap_or_default(),
            !est.flagged_eps.is_empty(),
        )
        .unwrap();
        all.push(json!({"index": i, "estimate": est, "cell_average": avg}));
    }
    write(&ctx.out, "gbar.csv", csv)?;
    write_json(&ctx.out, "gbar.json", &all)?;
    Ok(Outcome {
        verdict: !flagged_any,
        config: echo(&cfg),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EquidistConfig {
    pub direction: Vec<f64>,
    pub delta: f64,
    #[serde(default)]
    pub t0: f64,
    pub cube_sides: Vec<f64>,
    #[serde(default = "default_dir_tol")]
    pub tol: f64,
    #[serde(default = "default_max_den")]
    pub max_denominator: i64,
}

fn default_dir_tol() -> f64 {
    DEFAULT_TOL
}
fn default_max_den() -> i64 {
    DEFAULT_MAX_DENOMINATOR
}

fn equidist(cfg: EquidistConfig, ctx: &RunContext) -> CliResult<Outcome> {
    let d = classify_direction(&cfg.direction, cfg.tol, cfg.max_denominator)?;
    let mut csv = String::from("R,A,N,ratio,deviation\n");
    let mut rows = Vec::new();
    for &r in &cfg.cube_sides {
        let e = equidist_ratio(&d, cfg.delta, cfg.t0, r)?;
        writeln!(
            csv,
            "{r},{},{},{:.12e},{:.12e}",
            e.hits,
            e.total,
            e.ratio,
            e.ratio - cfg.delta
        )
        .unwrap();
        rows.push(json!({"R": r, "ratio": e}));
    }
    write(&ctx.out, "equidist.csv", csv)?;
    write_json(&ctx.out, "equidist.json", &json!({"direction": d, "rows": rows}))?;
    Ok(Outcome {
        verdict: true,
        config: echo(&cfg),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AuditConfig {
    pub domain: DomainSpec,
    pub samples: usize,
    #[serde(default = "default_max_den")]
    pub max_denominator: i64,
}

fn audit(cfg: AuditConfig, ctx: &RunContext) -> CliResult<Outcome> {
    let a = iddc_audit(&cfg.domain, cfg.samples, cfg.max_denominator)?;
    write_json(&ctx.out, "audit.json", &a)?;
    let mut csv = String::from("kind,s_start,s_end,m\n");
    for p in &a.rational_points {
        writeln!(csv, "point,{:.12e},{:.12e},{:?}", p.s, p.s, p.m).unwrap();
    }
    for iv in &a.rational_intervals {
        writeln!(csv, "interval,{:.12e},{:.12e},{:?}", iv.s_start, iv.s_end, iv.m).unwrap();
    }
    write(&ctx.out, "audit.csv", csv.replace(", ", " "))?;
    Ok(Outcome {
        verdict: true,
        config: echo(&cfg),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BarriersConfig {
    pub n: usize,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Extra barriers; the standard suite is always run.
    #[serde(default)]
    pub barriers: Vec<BarrierSpec>,
    /// Exponent perturbation of the tightness rows.
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
}

fn default_samples() -> usize {
    2000
}
fn default_perturbation() -> f64 {
    0.01
}

fn barriers(cfg: BarriersConfig, ctx: &RunContext) -> CliResult<Outcome> {
    let (n, l, bl) = (cfg.n, cfg.lambda, cfg.big_lambda);
    let op = EllipticOperatorSpec::pucci(n, l, bl, Sign::Plus)?;
    let origin = vec![0.0; n];
    // (label, spec, supersolution expected)
    let mut suite: Vec<(String, BarrierSpec, bool)> = Vec::new();
    let quad = BarrierSpec::quad_strip(n, l, bl, 1.0)?;
    suite.push(("quad_strip".into(), quad.clone(), true));
    if let BarrierKind::QuadStrip {
        scale,
        coefficient,
        amplitude,
        height,
    } = quad.kind
    {
        let mut loose = quad.clone();
        loose.kind = BarrierKind::QuadStrip {
            scale,
            coefficient: coefficient - cfg.perturbation,
            amplitude,
            height,
        };
        suite.push(("quad_strip_perturbed".into(), loose, false));
    }
    match BarrierSpec::radial_interior(n, l, bl, origin.clone()) {
        Ok(b) => {
            if let BarrierKind::RadialInterior { alpha, ref center } = b.kind {
                let mut t = b.clone();
                t.kind = BarrierKind::RadialInterior {
                    alpha: alpha + cfg.perturbation,
                    center: center.clone(),
                };
                suite.push(("radial_interior".into(), b.clone(), true));
                suite.push(("radial_interior_perturbed".into(), t, false));
            }
        }
        Err(e) => eprintln!("note: radial_interior skipped: {e}"),
    }
    match BarrierSpec::radial_exterior(n, l, bl, origin.clone(), 0.5) {
        Ok(b) => suite.push(("radial_exterior".into(), b, true)),
        Err(e) => eprintln!("note: radial_exterior skipped: {e}"),
    }
    for (i, b) in cfg.barriers.iter().enumerate() {
        suite.push((format!("custom_{i}"), b.clone(), true));
    }
    let mut csv = String::from(
        "label,expected_supersolution,samples,max_operator,max_abs_operator,boundary_ok,passed,as_expected\n",
    );
    let mut reports = Vec::new();
    let mut all_ok = true;
    for (label, spec, expected) in &suite {
        let pts = spec.sample_region(cfg.samples, ctx.seed);
        let r = verify_supersolution(spec, &op, &pts)?;
        let ok = r.passed == *expected;
        all_ok &= ok;
        writeln!(
            csv,
            "{label},{expected},{},{:.12e},{:.12e},{},{},{ok}",
            r.samples,
            r.max_operator,
            r.max_abs_operator,
            r.boundary_ok.map(|b| b.to_string()).unwrap_or_default(),
            r.passed
        )
        .unwrap();
        reports.push(json!({"label": label, "spec": spec, "expected": expected, "report": r}));
    }
    write(&ctx.out, "barriers.csv", csv)?;
    write_json(&ctx.out, "barriers.json", &reports)?;
    Ok(Outcome {
        verdict: all_ok,
        config: echo(&cfg),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HomogenizeCmdConfig {
    #[serde(flatten)]
    pub run: HomogenizeConfig,
    #[serde(default = "yes")]
    pub write_grids: bool,
}

fn yes() -> bool {
    true
}

fn homogenize_cmd(mut cfg: HomogenizeCmdConfig, ctx: &RunContext) -> CliResult<Outcome> {
    cfg.run.operator = normalized(cfg.run.operator.clone())?;
    cfg.run.strip.seed = ctx.seed;
    let out = homogenize(&cfg.run)?;
    let v = &out.verdict;
    write_json(&ctx.out, "verdict.json", v)?;
    write(&ctx.out, "convergence.csv", v.csv())?;
    write(&ctx.out, "envelope.csv", out.envelope.csv())?;
    write_json(&ctx.out, "envelope.json", &out.envelope)?;
    let mut sol = String::from("epsilon,h,sweeps,residual,sup,bound,bound_ok\n");
    for s in &out.solutions {
        writeln!(
            sol,
            "{:.12e},{:.12e},{},{:.12e},{:.12e},{:.12e},{}",
            s.epsilon, s.field.h, s.record.sweeps, s.record.residual, s.sup, s.bound, s.bound_ok
        )
        .unwrap();
    }
    write(&ctx.out, "solutions.csv", sol)?;
    if cfg.write_grids {
        write_grid(&ctx.out, "u_plus.grid", &out.envelopes.0)?;
        write_grid(&ctx.out, "u_minus.grid", &out.envelopes.1)?;
        for (i, s) in out.solutions.iter().enumerate() {
            write_grid(&ctx.out, &format!("u_eps_{i}.grid"), &s.field)?;
        }
    }
    for r in &v.per_eps {
        if let Some(p) = r.probe {
            println!("epsilon {:.6} probe {:.6}", r.epsilon, p);
        }
    }
    println!(
        "envelope gap {:.6} (budget {:.6}), ordered {}, converged {}",
        v.envelope_gap, v.gap_budget, v.ordered, v.converged
    );
    Ok(Outcome {
        verdict: v.converged,
        config: echo(&cfg),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ValidateConfig {
    pub operator: EllipticOperatorSpec,
    pub data: Option<SourceAndBoundaryData>,
    #[serde(default = "default_validate_samples")]
    pub samples: usize,
    /// Slow-variable point for the data check.
    pub x: Option<Vec<f64>>,
}

fn default_validate_samples() -> usize {
    1000
}

fn validate(cfg: ValidateConfig, ctx: &RunContext) -> CliResult<Outcome> {
    let op = normalized(cfg.operator.clone())?;
    let rep = validate_operator(&op, cfg.samples, ctx.seed)?;
    let data = match &cfg.data {
        Some(d) => {
            let x = cfg.x.clone().unwrap_or_else(|| vec![0.0; op.dim]);
            Some(d.check(&x, op.dim, 16, ctx.seed)?)
        }
        None => None,
    };
    let ok = rep.passed && data.as_ref().map_or(true, |d| d.passed);
    write_json(
        &ctx.out,
        "validation.json",
        &json!({"operator": rep, "data": data, "passed": ok}),
    )?;
    Ok(Outcome {
        verdict: ok,
        config: echo(&cfg),
    })
}
