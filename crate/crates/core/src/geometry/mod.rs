//! Directions, hyperplane lattices, domains and the boundary audit.

pub mod audit;
pub mod compact;
pub mod direction;
pub mod domain;
pub mod lattice;

pub use audit::{iddc_audit, IddcAudit, IddcVerdict, RationalInterval};
pub use compact::CompactSet;
pub use direction::{classify_direction, in_d_delta, DeltaMembership, Direction, Rationality};
pub use domain::{BoundaryPoint, DomainSpec, ImplicitDomain, LevelSetGrid};
pub use lattice::{equidist_ratio, near_integer_point, EquidistRatio, HyperplaneLattice};
