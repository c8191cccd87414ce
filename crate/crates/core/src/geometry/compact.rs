//! Compact interior sets used as readout regions.

use super::domain::DomainSpec;
use crate::error::{domain, Result};
use crate::linalg::dist;
use serde::{Deserialize, Serialize};

const OUTLINE_SAMPLES: usize = 2048;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompactSet {
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    /// Copy of `domain` scaled by `factor` about its centre point.
    Scaled {
        domain: DomainSpec,
        factor: f64,
    },
}

impl CompactSet {
    /// The concentric `2/3`-scale copy of `dom`.
    pub fn default_for(dom: &DomainSpec) -> Self {
        CompactSet::Scaled {
            domain: dom.clone(),
            factor: 2.0 / 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CompactSet::Ball { radius, .. } if !(*radius > 0.0) => domain("compact ball radius must be positive"),
            CompactSet::Scaled { factor, .. } if !(*factor > 0.0 && *factor < 1.0) => {
                domain("compact scale factor must lie in (0, 1)")
            }
            CompactSet::Scaled { domain: d, .. } => d.validate(),
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            CompactSet::Ball { center, .. } => center.len(),
            CompactSet::Scaled { domain, .. } => domain.dim(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            CompactSet::Ball { center, radius } => dist(x, center) <= *radius + 1e-12,
            CompactSet::Scaled { domain, factor } => domain.scaled(*factor).level_set(x) <= 0.0,
        }
    }

    /// Distance from `x` to the set (zero inside).
    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        if self.contains(x) {
            return Ok(0.0);
        }
        match self {
            CompactSet::Ball { center, radius } => Ok(dist(x, center) - radius),
            CompactSet::Scaled { domain, factor } => {
                let d = domain.scaled(*factor);
                if let DomainSpec::Disk { center, radius } = &d {
                    return Ok(dist(x, center) - radius);
                }
                if d.dim() != 2 {
                    return domain_err();
                }
                let pts = d.boundary_samples(OUTLINE_SAMPLES)?;
                Ok(pts.iter().map(|p| dist(x, &p.x)).fold(f64::INFINITY, f64::min))
            }
        }
    }
}

fn domain_err() -> Result<f64> {
    domain("distance to a scaled non-disk domain is only available in two dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_and_scaled_disk() {
        let k = CompactSet::Ball {
            center: vec![0.0, 0.0, 0.75],
            radius: 0.25,
        };
        assert!((k.distance(&[0.0, 0.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        let d = DomainSpec::Disk {
            center: vec![0.0, 0.0],
            radius: 0.6,
        };
        let k = CompactSet::default_for(&d);
        assert!(k.contains(&[0.39, 0.0]));
        assert!(!k.contains(&[0.41, 0.0]));
        assert!((k.distance(&[0.6, 0.0]).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn scaled_rectangle_distance() {
        let d = DomainSpec::Rectangle {
            lo: vec![0.0, 0.0],
            hi: vec![3.0, 3.0],
        };
        let k = CompactSet::Scaled {
            domain: d,
            factor: 1.0 / 3.0,
        };
        assert!((k.distance(&[0.0, 1.5]).unwrap() - 1.0).abs() < 1e-3);
    }
}
