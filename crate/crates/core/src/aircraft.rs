//! Linearized aircraft longitudinal dynamics, `n = 4`, `m = 2`, sampled at
//! `T = 0.1`, with the reference values of the demo experiment.
//!
//! The matrices are stored exactly as tabulated, at four decimals. The
//! `REF_*` tables are the published four-decimal results of the demo and serve
//! as the targets of the diff table.

use crate::error::Result;
use crate::filters::FilterFamily;
use crate::lti::{LtiSystem, PiecewiseConstantInput};
use crate::numlin::{Matrix, Vector};

pub const PERIOD: f64 = 0.1;
pub const N_STATES: usize = 4;
pub const N_INPUTS: usize = 2;

pub const A: [[f64; 4]; 4] = [
    [-0.0190, 0.0825, -0.1005, -0.3206],
    [-0.2154, -2.7859, 1.2031, -0.0271],
    [3.2527, -30.7871, -3.5418, 0.0],
    [0.0, 0.0, 1.0, 0.0],
];

pub const B: [[f64; 2]; 4] = [
    [0.0065, 0.0534],
    [-0.6103, 0.0020],
    [-74.6355, 0.5431],
    [0.0, 0.0],
];

pub const X0: [f64; 4] = [2.0, -1.0, 1.0, 0.5];

/// Demo input levels, one column per interval.
pub const MU: [[f64; 6]; 2] = [[1.0, -1.0, 1.0, -1.0, 0.0, 0.0], [1.0, -1.0, 0.0, 0.0, 1.0, -1.0]];

/// Sampled states `chi_0..chi_6`.
pub const REF_CHI: [[f64; 7]; 4] = [
    [2.0, 1.9877, 1.9308, 1.8672, 1.7965, 1.7030, 1.6170],
    [-1.0, -0.9492, -0.4078, -0.0961, 0.2965, 0.6994, 0.7164],
    [1.0, -2.5648, 6.9073, -0.5012, 6.2982, 3.5254, 0.9785],
    [0.5, 0.4124, 0.6720, 0.9783, 1.2988, 1.7922, 2.0105],
];

pub const REF_POLY_XF: [[f64; 6]; 4] = [
    [0.6632, 0.6566, 0.6306, 0.6133, 0.5827, 0.5527],
    [-0.3090, -0.2614, -0.0489, 0.0081, 0.1820, 0.2471],
    [-0.3009, 0.9059, 1.0074, 1.0977, 1.6470, 0.7208],
    [0.1649, 0.1468, 0.3017, 0.3552, 0.5252, 0.6429],
];

pub const REF_POLY_UF: [[f64; 6]; 2] = [
    [0.3333, -0.3333, 0.3333, -0.3333, 0.0, 0.0],
    [0.3333, -0.3333, 0.0, 0.0, 0.3333, -0.3333],
];

pub const REF_POLY_XDF: [[f64; 6]; 4] = [
    [-0.0407, -0.1921, -0.2118, -0.2373, -0.3122, -0.2865],
    [0.1488, 1.8755, 1.0010, 1.3597, 1.3355, 0.0418],
    [-11.9604, 31.6734, -24.8886, 22.7354, -9.3601, -8.5424],
    [-0.3009, 0.9058, 1.0074, 1.0977, 1.6470, 0.7208],
];

pub const REF_LOWPASS_XF: [[f64; 6]; 4] = [
    [0.1894, 0.3586, 0.5046, 0.6314, 0.7377, 0.8252],
    [-0.0892, -0.1527, -0.1541, -0.1352, -0.0711, 0.0055],
    [-0.0862, 0.1766, 0.4453, 0.7133, 1.1128, 1.2126],
    [0.0462, 0.0861, 0.1625, 0.2503, 0.3761, 0.5235],
];

pub const REF_LOWPASS_UF: [[f64; 6]; 2] = [
    [0.0952, -0.0091, 0.0870, -0.0165, -0.0149, -0.0135],
    [0.0952, -0.0091, -0.0082, -0.0074, 0.0885, -0.0151],
];

pub const REF_LOWPASS_XDF: [[f64; 6]; 4] = [
    [-0.0114, -0.0653, -0.1190, -0.1756, -0.2477, -0.3058],
    [0.0449, 0.5636, 0.7988, 1.1021, 1.3770, 1.2597],
    [-3.3835, 5.9120, -1.6873, 4.9145, 1.8061, -0.7829],
    [-0.0862, 0.1765, 0.4453, 0.7133, 1.1128, 1.2126],
];

/// Published identification errors `‖[A B] - [Â B̂]‖_F`.
pub const REF_ERROR_POLY: f64 = 6.2340e-7;
pub const REF_ERROR_LOWPASS: f64 = 1.4599e-6;

/// Filter rate used for the low-pass reproduction.
pub const RHO_LOWPASS: f64 = 1.0;

/// Filter rate used for the polynomial reproduction.
///
/// The tabulated `u_f` entries equal `rho T^5 / 30 = 1/3`, which at
/// `T = 0.1` requires `rho = 1e6`, not the nominal `rho = 1`.
pub const RHO_POLY: f64 = 1.0e6;

/// The reference four-decimal tables for one filter family.
pub struct ReferenceFiltered {
    pub rho: f64,
    pub x_f: Matrix,
    pub u_f: Matrix,
    pub x_df: Matrix,
    pub error: f64,
}

pub fn reference_filtered(family: FilterFamily) -> Option<ReferenceFiltered> {
    match family {
        FilterFamily::PolyTest => Some(ReferenceFiltered {
            rho: RHO_POLY,
            x_f: table(&REF_POLY_XF),
            u_f: table(&REF_POLY_UF),
            x_df: table(&REF_POLY_XDF),
            error: REF_ERROR_POLY,
        }),
        FilterFamily::Lowpass => Some(ReferenceFiltered {
            rho: RHO_LOWPASS,
            x_f: table(&REF_LOWPASS_XF),
            u_f: table(&REF_LOWPASS_UF),
            x_df: table(&REF_LOWPASS_XDF),
            error: REF_ERROR_LOWPASS,
        }),
        _ => None,
    }
}

pub fn table<const R: usize, const C: usize>(rows: &[[f64; C]; R]) -> Matrix {
    Matrix::from_fn(R, C, |r, c| rows[r][c])
}

pub fn system() -> LtiSystem {
    LtiSystem::new(table(&A), table(&B), Vector::from_row_slice(&X0)).expect("aircraft preset is valid")
}

pub fn input() -> Result<PiecewiseConstantInput> {
    PiecewiseConstantInput::new(PERIOD, table(&MU))
}

pub fn reference_chi() -> Matrix {
    table(&REF_CHI)
}
