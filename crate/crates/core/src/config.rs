use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every tolerance and discretization knob used by the numerical routines.
///
/// Nothing downstream hides its own constants; pass a modified copy to sweep
/// a setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NumericConfig {
    /// Relative rank threshold: singular values at or below
    /// `rank_rtol * sigma_max * max(rows, cols)` count as zero.
    pub rank_rtol: f64,
    /// Gauss-Legendre nodes per panel.
    pub quad_nodes: usize,
    /// Panels per sampling interval.
    pub quad_panels: usize,
    /// Panel-doubling difference above which a filtered entry is flagged.
    pub quad_error_bound: f64,
    /// RK4 steps per sampling period for the simulation oracle.
    pub rk4_steps_per_period: usize,
    /// RK4 steps per sampling period for the low-pass ODE realization.
    pub lowpass_steps_per_period: usize,
    /// Largest aliasing multiple checked by the non-pathological sampling test.
    pub pathological_q_max: u32,
    /// Neighbourhood, in units of `2*pi/T`, treated as an exact aliasing hit.
    pub pathological_rel_tol: f64,
}

impl Default for NumericConfig {
    fn default() -> Self {
        Self {
            rank_rtol: 1e-8,
            quad_nodes: 16,
            quad_panels: 8,
            quad_error_bound: 1e-9,
            rk4_steps_per_period: 4096,
            lowpass_steps_per_period: 1024,
            pathological_q_max: 32,
            pathological_rel_tol: 1e-9,
        }
    }
}

impl NumericConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rank_rtol", self.rank_rtol),
            ("quad_error_bound", self.quad_error_bound),
            ("pathological_rel_tol", self.pathological_rel_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let counts = [
            ("quad_nodes", self.quad_nodes),
            ("quad_panels", self.quad_panels),
            ("rk4_steps_per_period", self.rk4_steps_per_period),
            ("lowpass_steps_per_period", self.lowpass_steps_per_period),
            ("pathological_q_max", self.pathological_q_max as usize),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}
