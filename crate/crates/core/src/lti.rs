//! Continuous-time LTI plants driven by piecewise-constant inputs: exact
//! zero-order-hold discretization, exact evaluation between samples, the
//! non-pathological sampling check and an RK4 reference integrator.

use std::f64::consts::PI;

use nalgebra::{Complex, Schur};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numlin::{self, ensure_finite, ensure_finite_vec, expm, Matrix, Vector};
use crate::serde_rows;

/// `x' = A x + B u`, `x(0) = x0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtiSystem {
    #[serde(with = "serde_rows::matrix")]
    pub a: Matrix,
    #[serde(with = "serde_rows::matrix")]
    pub b: Matrix,
    #[serde(with = "serde_rows::vector")]
    pub x0: Vector,
}

impl LtiSystem {
    pub fn new(a: Matrix, b: Matrix, x0: Vector) -> Result<Self> {
        let sys = Self { a, b, x0 };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if n == 0 || !self.a.is_square() {
            return Err(Error::dims(format!("A must be square and nonempty, got {:?}", self.a.shape())));
        }
        if self.b.nrows() != n || self.b.ncols() == 0 {
            return Err(Error::dims(format!("B must be {n} x m with m >= 1, got {:?}", self.b.shape())));
        }
        if self.x0.len() != n {
            return Err(Error::dims(format!("x0 has length {}, expected {n}", self.x0.len())));
        }
        ensure_finite(&self.a, "A")?;
        ensure_finite(&self.b, "B")?;
        ensure_finite_vec(&self.x0, "x0")
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn with_x0(&self, x0: Vector) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), x0)
    }

    /// `[A B]`.
    pub fn ab(&self) -> Matrix {
        numlin::hstack(&self.a, &self.b).expect("validated shapes")
    }
}

/// `u(t + kT) = levels[:, k]` for `t` in `[0, T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstantInput {
    pub period: f64,
    /// `m x N`, one column per sampling interval.
    #[serde(with = "serde_rows::matrix")]
    pub levels: Matrix,
}

impl PiecewiseConstantInput {
    pub fn new(period: f64, levels: Matrix) -> Result<Self> {
        check_period(period)?;
        if levels.ncols() == 0 || levels.nrows() == 0 {
            return Err(Error::invalid("input needs at least one level of dimension >= 1"));
        }
        ensure_finite(&levels, "input levels")?;
        Ok(Self { period, levels })
    }

    pub fn len(&self) -> usize {
        self.levels.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.levels.nrows()
    }

    pub fn level(&self, k: usize) -> Vector {
        self.levels.column(k).into_owned()
    }

    pub fn horizon(&self) -> f64 {
        self.period * self.len() as f64
    }

    /// `u(t)` for `t` in `[0, N T)`.
    pub fn value_at(&self, t: f64) -> Result<Vector> {
        let (k, _) = locate(t, self.period, self.len())?;
        Ok(self.level(k))
    }
}

pub(crate) fn check_period(period: f64) -> Result<()> {
    if period.is_finite() && period > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("sampling period must be positive, got {period}")))
    }
}

/// Splits `t` into interval index and offset. Times within `1e-12 T` of a
/// sampling instant snap onto it.
fn locate(t: f64, period: f64, intervals: usize) -> Result<(usize, f64)> {
    let horizon = period * intervals as f64;
    if !(t.is_finite() && t >= 0.0 && t < horizon) {
        return Err(Error::OutOfDomain {
            what: "t",
            value: t,
            domain: format!("[0, {horizon})"),
        });
    }
    let ratio = t / period;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-12 && (nearest as usize) < intervals {
        return Ok((nearest as usize, 0.0));
    }
    let k = (ratio.floor() as usize).min(intervals - 1);
    Ok((k, (t - k as f64 * period).max(0.0)))
}

/// `A_T = e^{AT}`, `B_T = ∫_0^T e^{At} B dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSystem {
    #[serde(with = "serde_rows::matrix")]
    pub a_t: Matrix,
    #[serde(with = "serde_rows::matrix")]
    pub b_t: Matrix,
    pub period: f64,
}

/// `(e^{At}, ∫_0^t e^{As} ds B)` from one exponential of `[[A, B], [0, 0]] t`.
pub fn zoh_propagators(a: &Matrix, b: &Matrix, t: f64) -> Result<(Matrix, Matrix)> {
    let n = a.nrows();
    let m = b.ncols();
    if t == 0.0 {
        return Ok((Matrix::identity(n, n), Matrix::zeros(n, m)));
    }
    let mut aug = Matrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * t));
    aug.view_mut((0, n), (n, m)).copy_from(&(b * t));
    let e = expm(&aug)?;
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    ))
}

pub fn discretize(sys: &LtiSystem, period: f64) -> Result<DiscreteSystem> {
    check_period(period)?;
    let (a_t, b_t) = zoh_propagators(&sys.a, &sys.b, period)?;
    Ok(DiscreteSystem { a_t, b_t, period })
}

/// `chi_{k+1} = A_T chi_k + B_T mu_k`.
pub fn step(dsys: &DiscreteSystem, chi: &Vector, mu: &Vector) -> Result<Vector> {
    if chi.len() != dsys.a_t.nrows() || mu.len() != dsys.b_t.ncols() {
        return Err(Error::dims(format!(
            "step: state {} / input {} for a system with n = {}, m = {}",
            chi.len(),
            mu.len(),
            dsys.a_t.nrows(),
            dsys.b_t.ncols()
        )));
    }
    Ok(&dsys.a_t * chi + &dsys.b_t * mu)
}

/// States and inputs at the sampling instants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledDataset {
    /// `n x N`: `chi_0 .. chi_{N-1}`.
    #[serde(with = "serde_rows::matrix")]
    pub chi: Matrix,
    /// `m x N`: `mu_0 .. mu_{N-1}`.
    #[serde(with = "serde_rows::matrix")]
    pub mu: Matrix,
    pub period: f64,
    /// `chi_N`, the state reached after the last input, when it was observed.
    #[serde(default, with = "serde_rows::option_vector", skip_serializing_if = "Option::is_none")]
    pub terminal: Option<Vector>,
}

impl SampledDataset {
    pub fn new(chi: Matrix, mu: Matrix, period: f64, terminal: Option<Vector>) -> Result<Self> {
        check_period(period)?;
        if chi.ncols() != mu.ncols() {
            return Err(Error::dims(format!(
                "chi has {} samples but mu has {}",
                chi.ncols(),
                mu.ncols()
            )));
        }
        if let Some(t) = &terminal {
            if t.len() != chi.nrows() {
                return Err(Error::dims("terminal state length differs from n"));
            }
        }
        ensure_finite(&chi, "chi")?;
        ensure_finite(&mu, "mu")?;
        Ok(Self { chi, mu, period, terminal })
    }

    pub fn len(&self) -> usize {
        self.chi.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.chi.ncols() == 0
    }

    pub fn n(&self) -> usize {
        self.chi.nrows()
    }

    pub fn m(&self) -> usize {
        self.mu.nrows()
    }

    /// `[chi; mu]`.
    pub fn stacked(&self) -> Matrix {
        numlin::vstack(&self.chi, &self.mu).expect("same column count")
    }

    /// `[chi_{[0,k-1]}; mu_{[0,k-1]}]`.
    pub fn stacked_prefix(&self, k: usize) -> Matrix {
        self.stacked().columns(0, k).into_owned()
    }

    pub fn input(&self) -> Result<PiecewiseConstantInput> {
        PiecewiseConstantInput::new(self.period, self.mu.clone())
    }

    /// `chi_0 .. chi_N` when the terminal state is known.
    pub fn chi_with_terminal(&self) -> Option<Matrix> {
        self.terminal.as_ref().map(|t| {
            let mut out = self.chi.clone().insert_column(self.len(), 0.0);
            out.column_mut(self.len()).copy_from(t);
            out
        })
    }
}

pub fn simulate_sampled(sys: &LtiSystem, input: &PiecewiseConstantInput) -> Result<SampledDataset> {
    if input.dim() != sys.m() {
        return Err(Error::dims(format!("input dimension {} vs m = {}", input.dim(), sys.m())));
    }
    let dsys = discretize(sys, input.period)?;
    let n = sys.n();
    let len = input.len();
    let mut chi = Matrix::zeros(n, len);
    let mut x = sys.x0.clone();
    for k in 0..len {
        chi.column_mut(k).copy_from(&x);
        x = step(&dsys, &x, &input.level(k))?;
    }
    SampledDataset::new(chi, input.levels.clone(), input.period, Some(x))
}

/// Exact continuous-time solution of one experiment, evaluable anywhere on
/// `[0, N T]`.
#[derive(Debug, Clone)]
pub struct ExactTrajectory {
    sys: LtiSystem,
    input: PiecewiseConstantInput,
    /// `chi_0 .. chi_N`.
    samples: Vec<Vector>,
}

impl ExactTrajectory {
    pub fn new(sys: &LtiSystem, input: &PiecewiseConstantInput) -> Result<Self> {
        let data = simulate_sampled(sys, input)?;
        let mut samples: Vec<Vector> = data.chi.column_iter().map(|c| c.into_owned()).collect();
        samples.push(data.terminal.expect("simulate_sampled records chi_N"));
        Ok(Self {
            sys: sys.clone(),
            input: input.clone(),
            samples,
        })
    }

    pub fn system(&self) -> &LtiSystem {
        &self.sys
    }

    pub fn input(&self) -> &PiecewiseConstantInput {
        &self.input
    }

    pub fn period(&self) -> f64 {
        self.input.period
    }

    pub fn intervals(&self) -> usize {
        self.input.len()
    }

    /// `chi_k` for `k` in `0..=N`.
    pub fn sample(&self, k: usize) -> &Vector {
        &self.samples[k]
    }

    pub fn sampled(&self) -> SampledDataset {
        let len = self.intervals();
        let chi = Matrix::from_columns(&self.samples[..len]);
        SampledDataset {
            chi,
            mu: self.input.levels.clone(),
            period: self.period(),
            terminal: Some(self.samples[len].clone()),
        }
    }

    /// `x(jT + tau)` for `tau` in `[0, T]`; `tau = T` is the left limit at the
    /// next sampling instant.
    pub fn eval_local(&self, j: usize, tau: f64) -> Result<Vector> {
        if j >= self.intervals() || !(0.0..=self.period()).contains(&tau) {
            return Err(Error::OutOfDomain {
                what: "tau",
                value: tau,
                domain: format!("interval {j} of {}, [0, {}]", self.intervals(), self.period()),
            });
        }
        let (phi, gamma) = zoh_propagators(&self.sys.a, &self.sys.b, tau)?;
        Ok(&phi * &self.samples[j] + &gamma * self.input.level(j))
    }

    /// States at local times `taus` on every interval: entry `j` is `n x taus.len()`.
    /// The propagators are shared across intervals.
    pub fn eval_on_nodes(&self, taus: &[f64]) -> Result<Vec<Matrix>> {
        let props = taus
            .iter()
            .map(|&tau| zoh_propagators(&self.sys.a, &self.sys.b, tau))
            .collect::<Result<Vec<_>>>()?;
        let n = self.sys.n();
        Ok((0..self.intervals())
            .map(|j| {
                let mu = self.input.level(j);
                let mut out = Matrix::zeros(n, taus.len());
                for (i, (phi, gamma)) in props.iter().enumerate() {
                    out.column_mut(i)
                        .copy_from(&(phi * &self.samples[j] + gamma * &mu));
                }
                out
            })
            .collect())
    }

    pub fn state_at(&self, t: f64) -> Result<Vector> {
        let (k, r) = locate(t, self.period(), self.intervals())?;
        if r == 0.0 {
            return Ok(self.samples[k].clone());
        }
        self.eval_local(k, r)
    }
}

/// Exact state at time `t` in `[0, N T)`.
pub fn state_at(sys: &LtiSystem, input: &PiecewiseConstantInput, t: f64) -> Result<Vector> {
    locate(t, input.period, input.len())?;
    ExactTrajectory::new(sys, input)?.state_at(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `n x times.len()`.
    #[serde(with = "serde_rows::matrix")]
    pub states: Matrix,
    pub input: PiecewiseConstantInput,
}

impl Trajectory {
    pub fn state(&self, i: usize) -> Vector {
        self.states.column(i).into_owned()
    }
}

pub fn dense_trajectory(
    sys: &LtiSystem,
    input: &PiecewiseConstantInput,
    grid: &[f64],
) -> Result<Trajectory> {
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("time grid must be strictly increasing"));
    }
    let exact = ExactTrajectory::new(sys, input)?;
    let mut states = Matrix::zeros(sys.n(), grid.len());
    for (i, &t) in grid.iter().enumerate() {
        states.column_mut(i).copy_from(&exact.state_at(t)?);
    }
    Ok(Trajectory {
        times: grid.to_vec(),
        states,
        input: input.clone(),
    })
}

/// A pair of eigenvalues whose difference hits `2 q pi i / T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AliasingPair {
    pub j: usize,
    pub l: usize,
    pub q: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathologyReport {
    pub nonpathological: bool,
    pub eigenvalues: Vec<Complex<f64>>,
    pub offending: Vec<AliasingPair>,
}

pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex<f64>>> {
    if !a.is_square() {
        return Err(Error::dims("eigenvalues of a non-square matrix"));
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::numerical("Schur iteration did not converge"))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Flags eigenvalue pairs `j != l` with `|lambda_j - lambda_l ∓ 2 q pi i / T| < tol`
/// for `1 <= q <= q_max`.
pub fn check_nonpathological(a: &Matrix, period: f64, q_max: u32, tol: f64) -> Result<PathologyReport> {
    check_period(period)?;
    if q_max == 0 {
        return Err(Error::invalid("q_max must be at least 1"));
    }
    let eig = eigenvalues(a)?;
    let mut offending = Vec::new();
    for j in 0..eig.len() {
        for l in 0..eig.len() {
            if j == l {
                continue;
            }
            let diff = eig[j] - eig[l];
            for q in 1..=q_max as i64 {
                for signed in [q, -q] {
                    let alias = Complex::new(0.0, 2.0 * PI * signed as f64 / period);
                    if (diff - alias).norm() < tol {
                        offending.push(AliasingPair { j, l, q: signed });
                    }
                }
            }
        }
    }
    Ok(PathologyReport {
        nonpathological: offending.is_empty(),
        eigenvalues: eig,
        offending,
    })
}

/// Default neighbourhood for [`check_nonpathological`]: `rel_tol * 2 pi / T`.
pub fn pathological_tolerance(period: f64, rel_tol: f64) -> f64 {
    rel_tol * 2.0 * PI / period
}

/// Classical RK4 with step `h`, which must divide `T`. Steps never straddle an
/// input switch. Returns every step point, including `N T`.
pub fn rk4_oracle(sys: &LtiSystem, input: &PiecewiseConstantInput, h: f64) -> Result<Trajectory> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid(format!("step must be positive, got {h}")));
    }
    if input.dim() != sys.m() {
        return Err(Error::dims("input dimension differs from m"));
    }
    let period = input.period;
    let steps = (period / h).round();
    if steps < 1.0 || (steps * h - period).abs() > 1e-12 * period.max(1.0) {
        return Err(Error::invalid(format!("step {h} does not divide period {period}")));
    }
    let steps = steps as usize;
    let n = sys.n();
    let total = input.len() * steps + 1;
    let mut times = Vec::with_capacity(total);
    let mut states = Matrix::zeros(n, total);
    let mut x = sys.x0.clone();
    let mut idx = 0;
    for k in 0..input.len() {
        let drive = &sys.b * input.level(k);
        let f = |x: &Vector| &sys.a * x + &drive;
        for i in 0..steps {
            times.push(k as f64 * period + i as f64 * h);
            states.column_mut(idx).copy_from(&x);
            idx += 1;
            let k1 = f(&x);
            let k2 = f(&(&x + &k1 * (h / 2.0)));
            let k3 = f(&(&x + &k2 * (h / 2.0)));
            let k4 = f(&(&x + &k3 * h));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
    }
    times.push(input.horizon());
    states.column_mut(idx).copy_from(&x);
    Ok(Trajectory {
        times,
        states,
        input: input.clone(),
    })
}

/// `[B, AB, ..., A^{n-1} B]`.
pub fn controllability_matrix(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.nrows();
    let m = b.ncols();
    let mut out = Matrix::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        out.columns_mut(k * m, m).copy_from(&block);
        block = a * block;
    }
    out
}
