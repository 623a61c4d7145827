//! Cones in coordinate space restricting where representations are counted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConeSpec {
    /// The whole fundamental domain, optionally cut to the sector
    /// 0 ≤ arg v < 2π/k of the first complex place (or v > 0 at the first real place when k = 2).
    FullDomain {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sector: Option<u32>,
    },
    /// Points whose norm-normalized direction is within `radius` of the normalized center.
    DirectionBall { center: Vec<f64>, radius: f64 },
}

impl Default for ConeSpec {
    fn default() -> Self {
        ConeSpec::FullDomain { sector: None }
    }
}

impl ConeSpec {
    pub fn full() -> Self {
        ConeSpec::FullDomain { sector: None }
    }

    pub fn sector(k: u32) -> Self {
        ConeSpec::FullDomain { sector: Some(k) }
    }

    pub fn validate(&self, n: usize, r1: usize, r2: usize, mu_plus_order: u32) -> Result<()> {
        match self {
            ConeSpec::FullDomain { sector: Some(k) } => {
                if *k == 0 || mu_plus_order % k != 0 {
                    return Err(Error::InvalidConfig(format!("sector count {k} must divide |μ⁺| = {mu_plus_order}")));
                }
                if r2 == 0 && *k > 2 {
                    return Err(Error::InvalidConfig("sectors beyond 2 need a complex place".into()));
                }
                let _ = r1;
                Ok(())
            }
            ConeSpec::FullDomain { sector: None } => Ok(()),
            ConeSpec::DirectionBall { center, radius } => {
                if center.len() != n || *radius <= 0.0 {
                    return Err(Error::InvalidConfig("direction ball needs an n-vector center and positive radius".into()));
                }
                Ok(())
            }
        }
    }

    /// Sector count for closed-form volumes (1 when no sector is imposed); None for direction balls.
    pub fn closed_form_fraction(&self) -> Option<u32> {
        match self {
            ConeSpec::FullDomain { sector } => Some(sector.unwrap_or(1)),
            ConeSpec::DirectionBall { .. } => None,
        }
    }
}
