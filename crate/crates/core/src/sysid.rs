//! Identification of `(A, B)` from filtered data by least squares.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtered::FilteredDataset;
use crate::lti::{LtiSystem, SampledDataset};
use crate::numlin::{self, Matrix, RankReport};
use crate::serde_rows;

/// Rank of `[x_f; u_f]`. The data are informative iff it equals `n + m`.
pub fn informativity_check(fd: &FilteredDataset, rtol: f64) -> Result<RankReport> {
    if fd.count == 0 || fd.x_f.ncols() == 0 {
        return Err(Error::invalid("filtered data has no columns"));
    }
    numlin::svd_rank(&fd.stacked(), rtol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationResult {
    #[serde(rename = "A_hat", with = "serde_rows::matrix")]
    pub a_hat: Matrix,
    #[serde(rename = "B_hat", with = "serde_rows::matrix")]
    pub b_hat: Matrix,
    #[serde(rename = "rank")]
    pub stacked_rank: RankReport,
    /// `‖x_df - Â x_f - B̂ u_f‖_F`.
    pub residual: f64,
    /// `‖[A B] - [Â B̂]‖_F` when the true system was supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frobenius_error: Option<f64>,
    /// Whether `[x_f; u_f]` has rank `n + m`, i.e. the estimate is unique.
    pub informative: bool,
}

/// `[Â B̂] = x_df [x_f; u_f]^+`. Rank-deficient data give the minimum-norm
/// solution with `informative = false`.
pub fn identify(fd: &FilteredDataset, rtol: f64, truth: Option<&LtiSystem>) -> Result<IdentificationResult> {
    let (n, m) = (fd.n(), fd.m());
    let stacked = fd.stacked();
    let stacked_rank = informativity_check(fd, rtol)?;
    let ab = &fd.x_df * numlin::pinv(&stacked, rtol)?;
    let a_hat = ab.columns(0, n).into_owned();
    let b_hat = ab.columns(n, m).into_owned();
    let residual = (&fd.x_df - &ab * &stacked).norm();
    let frobenius_error = match truth {
        Some(sys) => {
            if sys.n() != n || sys.m() != m {
                return Err(Error::dims("true system dimensions differ from the data"));
            }
            Some(numlin::frobenius_distance(&sys.ab(), &ab)?)
        }
        None => None,
    };
    Ok(IdentificationResult {
        informative: stacked_rank.rank == n + m,
        a_hat,
        b_hat,
        stacked_rank,
        residual,
        frobenius_error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteIdentification {
    #[serde(rename = "A_T_hat", with = "serde_rows::matrix")]
    pub a_t_hat: Matrix,
    #[serde(rename = "B_T_hat", with = "serde_rows::matrix")]
    pub b_t_hat: Matrix,
    pub rank: RankReport,
    pub unique: bool,
}

/// Least-squares fit of `chi_{k+1} = A_T chi_k + B_T mu_k`.
///
/// Uses every recorded transition: all `N` when the terminal state is known,
/// otherwise the first `N - 1`.
pub fn identify_discrete(sd: &SampledDataset, rtol: f64) -> Result<DiscreteIdentification> {
    let (n, m) = (sd.n(), sd.m());
    let (next, count) = match sd.chi_with_terminal() {
        Some(all) => (all.columns(1, sd.len()).into_owned(), sd.len()),
        None if sd.len() >= 2 => (sd.chi.columns(1, sd.len() - 1).into_owned(), sd.len() - 1),
        None => return Err(Error::invalid("need at least one state transition")),
    };
    let regressor = sd.stacked_prefix(count);
    let rank = numlin::svd_rank(&regressor, rtol)?;
    let ab = next * numlin::pinv(&regressor, rtol)?;
    Ok(DiscreteIdentification {
        a_t_hat: ab.columns(0, n).into_owned(),
        b_t_hat: ab.columns(n, m).into_owned(),
        unique: rank.rank == n + m,
        rank,
    })
}
