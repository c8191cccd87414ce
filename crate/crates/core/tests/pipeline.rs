use homog_core::corrector::StripParams;
use homog_core::effective::{
    effective_operator, homogenize, solve_oscillating, EnvelopeConfig, FbarSource, HomogenizeConfig,
    OscillatingProblem, SampleClass, SandwichConfig,
};
use homog_core::fdsolver::{GridField, NodeKind};
use homog_core::geometry::DomainSpec;
use homog_core::operators::{EllipticOperatorSpec, Sign, SourceAndBoundaryData};

fn disk() -> DomainSpec {
    DomainSpec::Disk {
        center: vec![0.0, 0.0],
        radius: 0.5,
    }
}

fn constant_config(c: f64) -> HomogenizeConfig {
    HomogenizeConfig {
        domain: disk(),
        operator: EllipticOperatorSpec::pucci(2, 1.0, 2.0, Sign::Plus).unwrap(),
        data: SourceAndBoundaryData::new("0", &c.to_string(), vec![1.0, 1.0]).unwrap(),
        eps_list: vec![0.1, 0.05],
        resolution: 8.0,
        stencil_order: 2,
        tol: 1e-10,
        corrector_eps: vec![0.1, 0.05],
        strip: StripParams {
            height: 1.0,
            width: 4.0,
            h: 1.0 / 8.0,
            ..Default::default()
        },
        boundary_samples: 16,
        envelope: EnvelopeConfig {
            delta: 0.5,
            mollifier_radius: 0.3,
            h: 1.0 / 32.0,
            ..Default::default()
        },
        sandwich: SandwichConfig {
            probe: Some(vec![0.0, 0.0]),
            ..Default::default()
        },
        k: None,
        fbar: FbarSource::Auto,
    }
}

#[test]
fn constant_data_pipeline_is_ordered() {
    let out = homogenize(&constant_config(0.3)).unwrap();
    assert_eq!(out.solutions.len(), 2);
    for s in &out.solutions {
        assert!((s.sup - 0.3).abs() < 1e-8);
        assert!(s.bound_ok);
    }
    for s in &out.envelope.samples {
        if s.class != SampleClass::Excluded {
            assert!((s.gbar.unwrap() - 0.3).abs() < 1e-8);
        }
    }
    let v = &out.verdict;
    assert!(v.ordered, "{v:?}");
    assert!(v.converged, "{v:?}");
    assert_eq!(v.per_eps.len(), 2);
    assert_eq!(v.stability, "unverified stability hypothesis");
}

#[test]
fn pipeline_is_deterministic() {
    let a = serde_json::to_string(&homogenize(&constant_config(-0.2)).unwrap().verdict).unwrap();
    let b = serde_json::to_string(&homogenize(&constant_config(-0.2)).unwrap().verdict).unwrap();
    assert_eq!(a, b);
}

#[test]
fn config_survives_json() {
    let cfg = constant_config(1.0);
    let text = serde_json::to_string(&cfg).unwrap();
    let back: HomogenizeConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string(&back).unwrap(), text);
}

#[test]
fn solution_grid_round_trips_through_text() {
    let data = SourceAndBoundaryData::new("0", "cos(2*pi*y1)", vec![1.0, 1.0]).unwrap();
    let p = OscillatingProblem::new(disk(), 0.1, EllipticOperatorSpec::laplacian(2), data).unwrap();
    let u = solve_oscillating(&p, 0.1 / 8.0, 2, 1e-10).unwrap();
    assert!(u.sup <= u.bound);
    let mut buf = Vec::new();
    u.field.write_text(&mut buf).unwrap();
    let g = GridField::read_text(buf.as_slice()).unwrap();
    assert_eq!(g.extents, u.field.extents);
    assert_eq!(g.mask, u.field.mask);
    for k in 0..g.len() {
        if g.mask[k] != NodeKind::Exterior {
            assert_eq!(g.values[k], u.field.values[k]);
        }
    }
}

#[test]
fn y_independent_operators_are_their_own_effective_operator() {
    for op in [
        EllipticOperatorSpec::laplacian(2),
        EllipticOperatorSpec::pucci(2, 1.0, 3.0, Sign::Minus).unwrap(),
    ] {
        let fbar = effective_operator(&op, &FbarSource::Auto, 16).unwrap();
        assert_eq!(serde_json::to_value(&fbar).unwrap(), serde_json::to_value(&op).unwrap());
    }
}
