//! Filter-function families and their per-interval decompositions.
//!
//! Filters are indexed `l = 1..=M`. Every family is closed-form and smooth on
//! each sampling interval `[jT, (j+1)T)`; all breakpoints are sampling
//! instants, so integration and integration by parts proceed interval by
//! interval.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::check_period;
use crate::numlin::Matrix;

/// Exponents below this flush the bump function to exactly zero.
const BUMP_EXPONENT_FLOOR: f64 = -700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterFamily {
    /// `rho (t - (l-1)T)^2 (lT - t)^2` on `[(l-1)T, lT)`.
    PolyTest,
    /// `exp(-rho T^2 / (T^2 - (t - (l-1)T)^2))` on `[(l-1)T, lT)`.
    BumpTest,
    /// `sqrt(2 rho) exp(rho((l-1)T - t))` on `[(l-1)T, NT)`.
    Laguerre,
    /// `exp(rho (t - lT))` on `[0, lT)`.
    Lowpass,
}

impl FilterFamily {
    pub const ALL: [FilterFamily; 4] = [
        FilterFamily::PolyTest,
        FilterFamily::BumpTest,
        FilterFamily::Laguerre,
        FilterFamily::Lowpass,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FilterFamily::PolyTest => "poly_test",
            FilterFamily::BumpTest => "bump_test",
            FilterFamily::Laguerre => "laguerre",
            FilterFamily::Lowpass => "lowpass",
        }
    }
}

impl fmt::Display for FilterFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FilterFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown filter family '{s}'")))
    }
}

/// `M` filters of one family over the horizon `N T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    pub family: FilterFamily,
    pub rho: f64,
    pub period: f64,
    /// `M`.
    pub count: usize,
    /// `N`; the horizon is `N T`.
    pub intervals: usize,
}

pub fn make_filter_bank(
    family: FilterFamily,
    rho: f64,
    period: f64,
    count: usize,
    intervals: usize,
) -> Result<FilterBank> {
    FilterBank::new(family, rho, period, count, intervals)
}

impl FilterBank {
    pub fn new(family: FilterFamily, rho: f64, period: f64, count: usize, intervals: usize) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::invalid(format!("rho must be positive, got {rho}")));
        }
        check_period(period)?;
        if count == 0 || intervals == 0 {
            return Err(Error::invalid("filter bank needs M >= 1 and N >= 1"));
        }
        Ok(Self {
            family,
            rho,
            period,
            count,
            intervals,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.period * self.intervals as f64
    }

    fn check_index(&self, l: usize) -> Result<()> {
        if l == 0 || l > self.count {
            Err(Error::OutOfDomain {
                what: "filter index",
                value: l as f64,
                domain: format!("1..={}", self.count),
            })
        } else {
            Ok(())
        }
    }

    /// Interval indices `j` on which `g_l` is not identically zero.
    pub fn support_intervals(&self, l: usize) -> std::ops::Range<usize> {
        let n = self.intervals;
        let (lo, hi) = match self.family {
            FilterFamily::PolyTest | FilterFamily::BumpTest => (l - 1, l),
            FilterFamily::Laguerre => (l - 1, n),
            FilterFamily::Lowpass => (0, l),
        };
        lo.min(n)..hi.min(n)
    }

    /// Support of `g_l`, clipped to the horizon.
    pub fn support(&self, l: usize) -> (f64, f64) {
        let r = self.support_intervals(l);
        (r.start as f64 * self.period, r.end as f64 * self.period)
    }

    /// `0 = t_0 < ... < t_q = NT`: sampling instants in the closure of the
    /// support, plus both ends of the horizon.
    pub fn breakpoints(&self, l: usize) -> Vec<f64> {
        let r = self.support_intervals(l);
        let mut idx: Vec<usize> = vec![0, self.intervals];
        idx.extend(r.start..=r.end);
        idx.sort_unstable();
        idx.dedup();
        idx.into_iter().map(|j| j as f64 * self.period).collect()
    }

    /// Closed form of `g_l` on interval `j` at local time `tau` in `[0, T]`.
    /// `tau = T` gives the left limit at `(j+1)T`.
    pub fn piece_value(&self, l: usize, j: usize, tau: f64) -> f64 {
        if !self.support_intervals(l).contains(&j) {
            return 0.0;
        }
        let (rho, t) = (self.rho, self.period);
        match self.family {
            FilterFamily::PolyTest => rho * tau * tau * (t - tau) * (t - tau),
            FilterFamily::BumpTest => bump(rho, t, tau),
            FilterFamily::Laguerre => {
                let offset = (j + 1 - l) as f64 * t + tau;
                (2.0 * rho).sqrt() * (-rho * offset).exp()
            }
            FilterFamily::Lowpass => {
                let offset = tau - (l - j) as f64 * t;
                (rho * offset).exp()
            }
        }
    }

    /// Derivative of [`piece_value`](Self::piece_value) in `tau`.
    pub fn piece_deriv(&self, l: usize, j: usize, tau: f64) -> f64 {
        if !self.support_intervals(l).contains(&j) {
            return 0.0;
        }
        let (rho, t) = (self.rho, self.period);
        match self.family {
            FilterFamily::PolyTest => 2.0 * rho * tau * (t - tau) * (t - 2.0 * tau),
            FilterFamily::BumpTest => {
                let g = bump(rho, t, tau);
                if g == 0.0 {
                    0.0
                } else {
                    let d = t * t - tau * tau;
                    -2.0 * rho * t * t * tau / (d * d) * g
                }
            }
            FilterFamily::Laguerre => -rho * self.piece_value(l, j, tau),
            FilterFamily::Lowpass => rho * self.piece_value(l, j, tau),
        }
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let horizon = self.horizon();
        if !(t.is_finite() && t >= 0.0 && t < horizon) {
            return Err(Error::OutOfDomain {
                what: "t",
                value: t,
                domain: format!("[0, {horizon})"),
            });
        }
        let ratio = t / self.period;
        let nearest = ratio.round();
        if (ratio - nearest).abs() <= 1e-12 && (nearest as usize) < self.intervals {
            return Ok((nearest as usize, 0.0));
        }
        let j = (ratio.floor() as usize).min(self.intervals - 1);
        Ok((j, (t - j as f64 * self.period).max(0.0)))
    }

    pub fn eval_g(&self, l: usize, t: f64) -> Result<f64> {
        self.check_index(l)?;
        let (j, tau) = self.locate(t)?;
        Ok(self.piece_value(l, j, tau))
    }

    /// Right-sided derivative of `g_l` at `t`.
    pub fn eval_g_deriv(&self, l: usize, t: f64) -> Result<f64> {
        self.check_index(l)?;
        let (j, tau) = self.locate(t)?;
        Ok(self.piece_deriv(l, j, tau))
    }

    /// `g_l(t_j^-)` at a breakpoint `t_j > 0`.
    pub fn left_limit_g(&self, l: usize, tj: f64) -> Result<f64> {
        self.check_index(l)?;
        let ratio = tj / self.period;
        let k = ratio.round();
        let on_grid = tj.is_finite() && (ratio - k).abs() <= 1e-12 && k >= 1.0 && k as usize <= self.intervals;
        let is_break = on_grid
            && self
                .breakpoints(l)
                .iter()
                .any(|&b| (b - tj).abs() <= 1e-12 * self.period);
        if !is_break {
            return Err(Error::OutOfDomain {
                what: "breakpoint",
                value: tj,
                domain: format!("breakpoints of g_{l}"),
            });
        }
        Ok(self.piece_value(l, k as usize - 1, self.period))
    }

    /// `(t, [g_1(t), ..., g_M(t)])` on a uniform grid over `[0, NT)`.
    pub fn plot_data(&self, points_per_interval: usize) -> Vec<(f64, Vec<f64>)> {
        let per = points_per_interval.max(1);
        let mut out = Vec::with_capacity(per * self.intervals);
        for j in 0..self.intervals {
            for i in 0..per {
                let tau = self.period * i as f64 / per as f64;
                let vals = (1..=self.count).map(|l| self.piece_value(l, j, tau)).collect();
                out.push((j as f64 * self.period + tau, vals));
            }
        }
        out
    }
}

fn bump(rho: f64, t: f64, tau: f64) -> f64 {
    let d = t * t - tau * tau;
    if d <= 0.0 {
        return 0.0;
    }
    let exponent = -rho * t * t / d;
    if exponent < BUMP_EXPONENT_FLOOR {
        0.0
    } else {
        exponent.exp()
    }
}

/// `g_l(tau + jT) = g(tau) f_l(jT)` for `tau` in `[0, T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub bank: FilterBank,
}

pub fn decompose(bank: &FilterBank) -> Result<Decomposition> {
    if bank.intervals < bank.count {
        return Err(Error::PreconditionViolated(format!(
            "decomposition needs N >= M, got N = {}, M = {}",
            bank.intervals, bank.count
        )));
    }
    Ok(Decomposition { bank: *bank })
}

impl Decomposition {
    pub fn family(&self) -> FilterFamily {
        self.bank.family
    }

    pub fn period(&self) -> f64 {
        self.bank.period
    }

    /// The common shape `g` on `[0, T)`.
    pub fn g(&self, tau: f64) -> f64 {
        let (rho, t) = (self.bank.rho, self.bank.period);
        match self.bank.family {
            FilterFamily::PolyTest => rho * tau * tau * (t - tau) * (t - tau),
            FilterFamily::BumpTest => bump(rho, t, tau),
            FilterFamily::Laguerre => (2.0 * rho).sqrt() * (-rho * tau).exp(),
            FilterFamily::Lowpass => (rho * tau).exp(),
        }
    }

    /// `f_l(t)`.
    pub fn f(&self, l: usize, t: f64) -> f64 {
        let (rho, p) = (self.bank.rho, self.bank.period);
        let lf = l as f64;
        match self.bank.family {
            FilterFamily::PolyTest | FilterFamily::BumpTest => {
                if t >= (lf - 1.0) * p && t < lf * p {
                    1.0
                } else {
                    0.0
                }
            }
            FilterFamily::Laguerre => {
                if t >= (lf - 1.0) * p && t < self.bank.horizon() {
                    (rho * ((lf - 1.0) * p - t)).exp()
                } else {
                    0.0
                }
            }
            FilterFamily::Lowpass => {
                if t >= 0.0 && t < lf * p {
                    (rho * (t - lf * p)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// `f_l(jT)`, evaluated by index so grid points never fall on the wrong
    /// side of a support edge.
    pub fn f_at(&self, l: usize, j: usize) -> f64 {
        let (rho, p) = (self.bank.rho, self.bank.period);
        match self.bank.family {
            FilterFamily::PolyTest | FilterFamily::BumpTest => {
                if j + 1 == l {
                    1.0
                } else {
                    0.0
                }
            }
            FilterFamily::Laguerre => {
                if j + 1 >= l && j < self.bank.intervals {
                    (-rho * (j + 1 - l) as f64 * p).exp()
                } else {
                    0.0
                }
            }
            FilterFamily::Lowpass => {
                if j < l {
                    (-rho * (l - j) as f64 * p).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// Whether `f_l((l-1)T) != 0` and `f_l(kT) = 0` for all `k >= l`, for every
    /// `l <= min(N, M)`. This makes the leading blocks of `F̄` upper
    /// triangular and nonsingular, so rank is preserved prefix by prefix.
    pub fn has_upper_triangular_weights(&self) -> bool {
        let top = self.bank.intervals.min(self.bank.count);
        (1..=top).all(|l| {
            self.f_at(l, l - 1) != 0.0 && (l..self.bank.intervals).all(|k| self.f_at(l, k) == 0.0)
        })
    }
}

/// `F̄[j, l-1] = f_l(jT)`, `N x M`.
pub fn build_f_bar(decomp: &Decomposition) -> Matrix {
    let b = &decomp.bank;
    Matrix::from_fn(b.intervals, b.count, |j, c| decomp.f_at(c + 1, j))
}
