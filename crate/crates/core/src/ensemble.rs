use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

/// Particle positions (one row per particle) and the iteration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub positions: Array2<f64>,
    pub iteration: usize,
}

impl Ensemble {
    pub fn new(positions: Array2<f64>) -> Result<Self> {
        let (n, d) = positions.dim();
        if n == 0 || d == 0 {
            return Err(Error::Usage(format!(
                "ensemble must be non-empty, got {n}x{d}"
            )));
        }
        if let Some((idx, _)) = positions.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite coordinate at particle {}, dim {}",
                idx.0, idx.1
            )));
        }
        Ok(Ensemble {
            positions,
            iteration: 0,
        })
    }

    pub fn n_particles(&self) -> usize {
        self.positions.nrows()
    }

    pub fn dim(&self) -> usize {
        self.positions.ncols()
    }

    pub fn particle(&self, i: usize) -> ArrayView1<'_, f64> {
        self.positions.row(i)
    }

    /// Sample mean over particles.
    pub fn mean(&self) -> ndarray::Array1<f64> {
        self.positions
            .mean_axis(ndarray::Axis(0))
            .expect("ensemble is non-empty")
    }
}
