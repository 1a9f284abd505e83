use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Options shared by the coordinate-descent fitters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Maximum number of full sweeps / rounds.
    pub max_sweeps: usize,
    /// Stop once a sweep improves the objective by less than this.
    pub tol: f64,
    /// Seed driving any randomized restart initialization.
    pub seed: u64,
    /// Number of restarts; the first is the deterministic default
    /// initialization, later ones use seeded k-means++-style seeding.
    pub restarts: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_sweeps: 200,
            tol: 1e-9,
            seed: 0,
            restarts: 1,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 {
            return Err(Error::invalid("max_sweeps must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be at least 1"));
        }
        Ok(())
    }
}
