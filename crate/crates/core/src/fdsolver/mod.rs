//! Monotone finite differences for `F(D²u, y) = f` on masked grids, the
//! nonlinear solver, and discrete comparison diagnostics.

pub mod axisym;
pub mod checks;
pub mod grid;
pub mod scheme;
pub mod solve;
pub mod stencil;

pub use axisym::AxisymmetricPucci;
pub use checks::{
    comparison_check, maximum_principle_holds, oscillation_decay_probe, ComparisonReport, OscillationProbe,
};
pub use grid::{GridField, NodeKind};
pub use scheme::{cell_problem, discretize, Certificate, DiscreteProblem, MonotoneScheme};
pub use solve::{solve_dirichlet, solve_scheme, solve_with, ConvergenceRecord, Method, SolveOptions, SweepOrder};
pub use stencil::Stencil;
