use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponents and tolerances shared by the Poisson and eigenvalue solvers.
/// The space dimension is fixed to 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    pub p: f64,
    pub q: f64,
    /// `ε` in `(|∇u|² + ε²)^{p/2}`.
    pub grad_reg: f64,
    pub tol_energy: f64,
    pub tol_residual: f64,
    pub max_iter: usize,
}

pub const DIM: f64 = 2.0;

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams { p: 2.0, q: 3.0, grad_reg: 1e-8, tol_energy: 1e-12, tol_residual: 1e-9, max_iter: 500 }
    }
}

impl SolverParams {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        let params = SolverParams { p, q, ..Default::default() };
        params.validate()?;
        Ok(params)
    }

    pub fn with_tolerances(mut self, tol_energy: f64, tol_residual: f64) -> Self {
        self.tol_energy = tol_energy;
        self.tol_residual = tol_residual;
        self
    }

    /// Upper end of the admissible `q` range, `2p/(2-p)`; infinite at `p = 2`.
    pub fn critical_q(p: f64) -> f64 {
        if p >= DIM {
            f64::INFINITY
        } else {
            DIM * p / (DIM - p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let SolverParams { p, q, grad_reg, tol_energy, tol_residual, max_iter } = *self;
        if !(p > 1.0 && p <= DIM) {
            return Err(Error::InvalidParams(format!("p must satisfy 1 < p <= 2, got {p}")));
        }
        if !q.is_finite() || q <= p {
            return Err(Error::InvalidParams(format!("q must be finite and exceed p = {p}, got {q}")));
        }
        let qc = Self::critical_q(p);
        if q > qc * (1.0 + 1e-12) {
            return Err(Error::InvalidParams(format!("q = {q} exceeds the critical exponent 2p/(2-p) = {qc}")));
        }
        if !(grad_reg >= 0.0 && grad_reg.is_finite()) {
            return Err(Error::InvalidParams(format!("grad_reg must be >= 0, got {grad_reg}")));
        }
        if !(tol_energy > 0.0 && tol_residual > 0.0) {
            return Err(Error::InvalidParams("tolerances must be positive".into()));
        }
        if max_iter == 0 {
            return Err(Error::InvalidParams("max_iter must be positive".into()));
        }
        Ok(())
    }

    /// At `p = 2` any finite `q > 2` is accepted without a sharp bound.
    pub fn is_borderline(&self) -> bool {
        self.p >= DIM
    }

    pub fn diagnostics(&self) -> Vec<String> {
        let mut notes = Vec::new();
        if self.is_borderline() {
            notes.push(format!("p = n = 2: q = {} accepted without a sharp embedding bound", self.q));
        }
        notes
    }
}
