//! Filtered data `(x_f, u_f, x_df)` from exact trajectories.
//!
//! Integrals are taken interval by interval over `[jT, (j+1)T)`, where both
//! the input and every filter are smooth, with composite Gauss-Legendre
//! quadrature. Because every interval shares the same local nodes, a signal is
//! sampled once and reused for all `M` filters. Each entry carries an error
//! estimate from comparing `p` against `2p` panels.
//!
//! `x_df` is computed by integration by parts on each piece and never touches
//! the state derivative.

use serde::{Deserialize, Serialize};

use crate::config::NumericConfig;
use crate::error::{Error, Result};
use crate::filters::{build_f_bar, Decomposition, FilterBank, FilterFamily};
use crate::lti::{zoh_propagators, ExactTrajectory, LtiSystem, PiecewiseConstantInput, SampledDataset};
use crate::numlin::{self, Matrix, Vector};
use crate::serde_rows;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("Gauss-Legendre order must be at least 1"));
        }
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order as f64;
        for i in 0..order.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(order, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        Ok(Self { nodes, weights })
    }

    /// Nodes and weights of the composite rule with `panels` equal panels on `[a, b]`.
    pub fn composite(&self, a: f64, b: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
        let h = (b - a) / panels as f64;
        let mut xs = Vec::with_capacity(panels * self.nodes.len());
        let mut ws = Vec::with_capacity(panels * self.nodes.len());
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * h;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                xs.push(mid + 0.5 * h * x);
                ws.push(0.5 * h * w);
            }
        }
        (xs, ws)
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A quadrature value with its panel-doubling error estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadEstimate<V> {
    pub value: V,
    pub error_estimate: f64,
}

/// `∫_a^b f` for a matrix-valued `f` smooth on `[a, b)`, with `nodes`-point
/// Gauss-Legendre on `panels` and `2 * panels` panels. Returns the finer value.
pub fn quad_piece<F>(mut f: F, a: f64, b: f64, nodes: usize, panels: usize) -> Result<QuadEstimate<Matrix>>
where
    F: FnMut(f64) -> Matrix,
{
    if !(a < b) || panels == 0 {
        return Err(Error::invalid(format!("quad_piece on [{a}, {b}) with {panels} panels")));
    }
    let rule = GaussLegendre::new(nodes)?;
    let mut run = |panels: usize| -> Result<Matrix> {
        let (xs, ws) = rule.composite(a, b, panels);
        let mut acc: Option<Matrix> = None;
        for (x, w) in xs.into_iter().zip(ws) {
            let v = f(x);
            if v.iter().any(|e| !e.is_finite()) {
                return Err(Error::numerical(format!("non-finite integrand at t = {x}")));
            }
            match acc.as_mut() {
                Some(m) => *m += v * w,
                None => acc = Some(v * w),
            }
        }
        Ok(acc.expect("at least one node"))
    };
    let coarse = run(panels)?;
    let fine = run(2 * panels)?;
    let error_estimate = (&fine - &coarse).amax();
    Ok(QuadEstimate {
        value: fine,
        error_estimate,
    })
}

pub fn quad_scalar<F>(mut f: F, a: f64, b: f64, nodes: usize, panels: usize) -> Result<QuadEstimate<f64>>
where
    F: FnMut(f64) -> f64,
{
    let q = quad_piece(|t| Matrix::from_element(1, 1, f(t)), a, b, nodes, panels)?;
    Ok(QuadEstimate {
        value: q.value[(0, 0)],
        error_estimate: q.error_estimate,
    })
}

/// A vector signal on `[0, N T)` that is smooth on each interval
/// `[jT, (j+1)T)` and has a left limit at `(j+1)T`.
pub trait PiecewiseSignal {
    fn dim(&self) -> usize;
    fn period(&self) -> f64;
    fn intervals(&self) -> usize;

    /// Value at `jT + tau`; `tau = T` is the left limit at `(j+1)T`.
    fn eval(&self, j: usize, tau: f64) -> Result<Vector>;

    /// Values at the same local times on every interval, `dim x taus.len()` each.
    fn eval_on_nodes(&self, taus: &[f64]) -> Result<Vec<Matrix>> {
        (0..self.intervals())
            .map(|j| {
                let mut out = Matrix::zeros(self.dim(), taus.len());
                for (i, &tau) in taus.iter().enumerate() {
                    out.column_mut(i).copy_from(&self.eval(j, tau)?);
                }
                Ok(out)
            })
            .collect()
    }
}

impl PiecewiseSignal for ExactTrajectory {
    fn dim(&self) -> usize {
        self.system().n()
    }

    fn period(&self) -> f64 {
        ExactTrajectory::period(self)
    }

    fn intervals(&self) -> usize {
        ExactTrajectory::intervals(self)
    }

    fn eval(&self, j: usize, tau: f64) -> Result<Vector> {
        self.eval_local(j, tau)
    }

    fn eval_on_nodes(&self, taus: &[f64]) -> Result<Vec<Matrix>> {
        ExactTrajectory::eval_on_nodes(self, taus)
    }
}

impl PiecewiseSignal for PiecewiseConstantInput {
    fn dim(&self) -> usize {
        PiecewiseConstantInput::dim(self)
    }

    fn period(&self) -> f64 {
        self.period
    }

    fn intervals(&self) -> usize {
        self.len()
    }

    fn eval(&self, j: usize, _tau: f64) -> Result<Vector> {
        if j >= self.len() {
            return Err(Error::dims(format!("interval {j} of {}", self.len())));
        }
        Ok(self.level(j))
    }

    fn eval_on_nodes(&self, taus: &[f64]) -> Result<Vec<Matrix>> {
        Ok((0..self.len())
            .map(|j| {
                let mu = self.level(j);
                Matrix::from_fn(mu.len(), taus.len(), |r, _| mu[r])
            })
            .collect())
    }
}

/// `x'(t) = A x(t) + B u(t)` along an exact trajectory. Only meaningful when
/// the true system is known; used to cross-check derivative-free results.
pub struct StateDerivative<'a>(pub &'a ExactTrajectory);

impl PiecewiseSignal for StateDerivative<'_> {
    fn dim(&self) -> usize {
        self.0.system().n()
    }

    fn period(&self) -> f64 {
        self.0.period()
    }

    fn intervals(&self) -> usize {
        self.0.intervals()
    }

    fn eval(&self, j: usize, tau: f64) -> Result<Vector> {
        let sys = self.0.system();
        Ok(&sys.a * self.0.eval_local(j, tau)? + &sys.b * self.0.input().level(j))
    }

    fn eval_on_nodes(&self, taus: &[f64]) -> Result<Vec<Matrix>> {
        let sys = self.0.system();
        let states = self.0.eval_on_nodes(taus)?;
        Ok(states
            .into_iter()
            .enumerate()
            .map(|(j, x)| {
                let drive = &sys.b * self.0.input().level(j);
                let mut d = &sys.a * x;
                for mut c in d.column_iter_mut() {
                    c += &drive;
                }
                d
            })
            .collect())
    }
}

/// Wraps a closure `(j, tau) -> value` as a [`PiecewiseSignal`].
pub struct LocalFn<F> {
    pub dim: usize,
    pub period: f64,
    pub intervals: usize,
    pub f: F,
}

impl<F: Fn(usize, f64) -> Vector> PiecewiseSignal for LocalFn<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn period(&self) -> f64 {
        self.period
    }

    fn intervals(&self) -> usize {
        self.intervals
    }

    fn eval(&self, j: usize, tau: f64) -> Result<Vector> {
        let v = (self.f)(j, tau);
        if v.len() != self.dim {
            return Err(Error::dims(format!("signal returned {} entries, expected {}", v.len(), self.dim)));
        }
        Ok(v)
    }
}

/// A signal sampled on the shared quadrature nodes of every interval.
#[derive(Debug, Clone)]
pub struct NodeSamples {
    pub period: f64,
    coarse_taus: Vec<f64>,
    coarse_weights: Vec<f64>,
    fine_taus: Vec<f64>,
    fine_weights: Vec<f64>,
    coarse: Vec<Matrix>,
    fine: Vec<Matrix>,
    /// `w(jT)` per interval.
    starts: Vec<Vector>,
    /// `w((j+1)T^-)` per interval.
    ends: Vec<Vector>,
}

impl NodeSamples {
    pub fn dim(&self) -> usize {
        self.starts.first().map_or(0, |v| v.len())
    }

    pub fn intervals(&self) -> usize {
        self.starts.len()
    }

    pub fn start(&self, j: usize) -> &Vector {
        &self.starts[j]
    }

    pub fn end(&self, j: usize) -> &Vector {
        &self.ends[j]
    }
}

pub fn sample_signal<S: PiecewiseSignal + ?Sized>(signal: &S, cfg: &NumericConfig) -> Result<NodeSamples> {
    let period = signal.period();
    let rule = GaussLegendre::new(cfg.quad_nodes)?;
    let (coarse_taus, coarse_weights) = rule.composite(0.0, period, cfg.quad_panels);
    let (fine_taus, fine_weights) = rule.composite(0.0, period, 2 * cfg.quad_panels);
    let mut all = coarse_taus.clone();
    all.extend_from_slice(&fine_taus);
    all.push(0.0);
    all.push(period);
    let values = signal.eval_on_nodes(&all)?;
    let (nc, nf) = (coarse_taus.len(), fine_taus.len());
    let mut coarse = Vec::with_capacity(values.len());
    let mut fine = Vec::with_capacity(values.len());
    let mut starts = Vec::with_capacity(values.len());
    let mut ends = Vec::with_capacity(values.len());
    for v in values {
        if v.iter().any(|e| !e.is_finite()) {
            return Err(Error::numerical("non-finite signal sample"));
        }
        coarse.push(v.columns(0, nc).into_owned());
        fine.push(v.columns(nc, nf).into_owned());
        starts.push(v.column(nc + nf).into_owned());
        ends.push(v.column(nc + nf + 1).into_owned());
    }
    Ok(NodeSamples {
        period,
        coarse_taus,
        coarse_weights,
        fine_taus,
        fine_weights,
        coarse,
        fine,
        starts,
        ends,
    })
}

/// Filtered values with per-entry quadrature error estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub value: Matrix,
    pub error: Matrix,
}

fn check_bank(bank: &FilterBank, samples: &NodeSamples) -> Result<()> {
    if samples.intervals() != bank.intervals {
        return Err(Error::dims(format!(
            "signal has {} intervals, filter bank expects {}",
            samples.intervals(),
            bank.intervals
        )));
    }
    if (samples.period - bank.period).abs() > 1e-12 * bank.period {
        return Err(Error::dims("signal and filter bank periods differ"));
    }
    Ok(())
}

/// `sum_i w_i k(j, tau_i) values[:, i]` over the support of filter `l`.
fn weighted_sum(
    bank: &FilterBank,
    l: usize,
    taus: &[f64],
    weights: &[f64],
    values: &[Matrix],
    kernel: impl Fn(usize, usize, f64) -> f64,
) -> Vector {
    let dim = values.first().map_or(0, |v| v.nrows());
    let mut acc = Vector::zeros(dim);
    for j in bank.support_intervals(l) {
        let w: Vector = Vector::from_iterator(
            taus.len(),
            taus.iter().zip(weights).map(|(&tau, &wt)| wt * kernel(l, j, tau)),
        );
        acc += &values[j] * w;
    }
    acc
}

/// `w_f[:, l-1] = ∫_0^{NT} g_l(t) w(t) dt`.
pub fn filter_samples(bank: &FilterBank, samples: &NodeSamples) -> Result<Filtered> {
    check_bank(bank, samples)?;
    let dim = samples.dim();
    let mut value = Matrix::zeros(dim, bank.count);
    let mut error = Matrix::zeros(dim, bank.count);
    let kernel = |l: usize, j: usize, tau: f64| bank.piece_value(l, j, tau);
    for l in 1..=bank.count {
        let fine = weighted_sum(bank, l, &samples.fine_taus, &samples.fine_weights, &samples.fine, kernel);
        let coarse = weighted_sum(
            bank,
            l,
            &samples.coarse_taus,
            &samples.coarse_weights,
            &samples.coarse,
            kernel,
        );
        error.column_mut(l - 1).copy_from(&(&fine - &coarse).abs());
        value.column_mut(l - 1).copy_from(&fine);
    }
    Ok(Filtered { value, error })
}

pub fn filter_signal<S: PiecewiseSignal + ?Sized>(
    bank: &FilterBank,
    signal: &S,
    cfg: &NumericConfig,
) -> Result<Filtered> {
    filter_samples(bank, &sample_signal(signal, cfg)?)
}

/// `u_f` for a piecewise-constant input.
pub fn filtered_input_data(bank: &FilterBank, input: &PiecewiseConstantInput, cfg: &NumericConfig) -> Result<Filtered> {
    filter_signal(bank, input, cfg)
}

/// `x_df` by integration by parts on every piece `[jT, (j+1)T)`:
/// `g(t_j^-) x(t_j^-) - g(t_{j-1}) x(t_{j-1}) - ∫ g' x`.
pub fn derivative_from_samples(bank: &FilterBank, samples: &NodeSamples) -> Result<Filtered> {
    check_bank(bank, samples)?;
    let dim = samples.dim();
    let period = bank.period;
    let mut value = Matrix::zeros(dim, bank.count);
    let mut error = Matrix::zeros(dim, bank.count);
    let deriv = |l: usize, j: usize, tau: f64| bank.piece_deriv(l, j, tau);
    for l in 1..=bank.count {
        let mut boundary = Vector::zeros(dim);
        for j in bank.support_intervals(l) {
            boundary += samples.end(j) * bank.piece_value(l, j, period);
            boundary -= samples.start(j) * bank.piece_value(l, j, 0.0);
        }
        let fine = weighted_sum(bank, l, &samples.fine_taus, &samples.fine_weights, &samples.fine, deriv);
        let coarse = weighted_sum(
            bank,
            l,
            &samples.coarse_taus,
            &samples.coarse_weights,
            &samples.coarse,
            deriv,
        );
        error.column_mut(l - 1).copy_from(&(&fine - &coarse).abs());
        value.column_mut(l - 1).copy_from(&(boundary - fine));
    }
    Ok(Filtered { value, error })
}

pub fn filtered_derivative_data<S: PiecewiseSignal + ?Sized>(
    bank: &FilterBank,
    signal: &S,
    cfg: &NumericConfig,
) -> Result<Filtered> {
    derivative_from_samples(bank, &sample_signal(signal, cfg)?)
}

/// Per-entry quadrature error estimates of a [`FilteredDataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureReport {
    #[serde(with = "serde_rows::matrix")]
    pub x_f: Matrix,
    #[serde(with = "serde_rows::matrix")]
    pub u_f: Matrix,
    #[serde(with = "serde_rows::matrix")]
    pub x_df: Matrix,
}

impl QuadratureReport {
    pub fn max_error(&self) -> f64 {
        [&self.x_f, &self.u_f, &self.x_df]
            .iter()
            .map(|m| if m.is_empty() { 0.0 } else { m.amax() })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredDataset {
    #[serde(with = "serde_rows::matrix")]
    pub x_f: Matrix,
    #[serde(with = "serde_rows::matrix")]
    pub u_f: Matrix,
    #[serde(with = "serde_rows::matrix")]
    pub x_df: Matrix,
    pub family: FilterFamily,
    pub rho: f64,
    #[serde(rename = "T")]
    pub period: f64,
    #[serde(rename = "M")]
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature_report: Option<QuadratureReport>,
}

impl FilteredDataset {
    /// Wraps externally supplied matrices, e.g. values read from a report.
    pub fn from_matrices(
        x_f: Matrix,
        u_f: Matrix,
        x_df: Matrix,
        family: FilterFamily,
        rho: f64,
        period: f64,
    ) -> Result<Self> {
        let count = x_f.ncols();
        if u_f.ncols() != count || x_df.ncols() != count {
            return Err(Error::dims("x_f, u_f and x_df need the same number of columns"));
        }
        if x_df.nrows() != x_f.nrows() {
            return Err(Error::dims("x_df and x_f need the same number of rows"));
        }
        numlin::ensure_finite(&x_f, "x_f")?;
        numlin::ensure_finite(&u_f, "u_f")?;
        numlin::ensure_finite(&x_df, "x_df")?;
        Ok(Self {
            x_f,
            u_f,
            x_df,
            family,
            rho,
            period,
            count,
            quadrature_report: None,
        })
    }

    pub fn n(&self) -> usize {
        self.x_f.nrows()
    }

    pub fn m(&self) -> usize {
        self.u_f.nrows()
    }

    /// `[x_f; u_f]`.
    pub fn stacked(&self) -> Matrix {
        numlin::vstack(&self.x_f, &self.u_f).expect("same column count")
    }

    /// `[x_f[1..k]; u_f[1..k]]`.
    pub fn stacked_prefix(&self, k: usize) -> Matrix {
        self.stacked().columns(0, k).into_owned()
    }

    /// Multiplies every matrix by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.x_f *= alpha;
        out.u_f *= alpha;
        out.x_df *= alpha;
        out
    }
}

/// `(x_f, u_f, x_df)` for one experiment.
pub fn filtered_dataset(bank: &FilterBank, traj: &ExactTrajectory, cfg: &NumericConfig) -> Result<FilteredDataset> {
    let states = sample_signal(traj, cfg)?;
    filtered_dataset_from_samples(bank, traj.input(), &states, cfg)
}

/// As [`filtered_dataset`], reusing state samples across filter banks.
pub fn filtered_dataset_from_samples(
    bank: &FilterBank,
    input: &PiecewiseConstantInput,
    states: &NodeSamples,
    cfg: &NumericConfig,
) -> Result<FilteredDataset> {
    let x_f = filter_samples(bank, states)?;
    let x_df = derivative_from_samples(bank, states)?;
    let u_f = filtered_input_data(bank, input, cfg)?;
    Ok(FilteredDataset {
        x_f: x_f.value,
        u_f: u_f.value,
        x_df: x_df.value,
        family: bank.family,
        rho: bank.rho,
        period: bank.period,
        count: bank.count,
        quadrature_report: Some(QuadratureReport {
            x_f: x_f.error,
            u_f: u_f.error,
            x_df: x_df.error,
        }),
    })
}

/// Low-pass filter state `w_f(lT)`, `l = 1..=count`, from RK4 on
/// `w_f' = -rho w_f + w`, `w_f(0) = 0`, with `steps_per_period` steps per
/// interval. Steps never straddle an interval boundary.
pub fn lowpass_realization<S: PiecewiseSignal + ?Sized>(
    rho: f64,
    signal: &S,
    count: usize,
    steps_per_period: usize,
) -> Result<Matrix> {
    if count > signal.intervals() {
        return Err(Error::invalid(format!(
            "{count} filter samples requested from {} intervals",
            signal.intervals()
        )));
    }
    if steps_per_period == 0 {
        return Err(Error::invalid("steps_per_period must be at least 1"));
    }
    let period = signal.period();
    let h = period / steps_per_period as f64;
    let taus: Vec<f64> = (0..=2 * steps_per_period)
        .map(|i| if i == 2 * steps_per_period { period } else { i as f64 * h / 2.0 })
        .collect();
    let values = signal.eval_on_nodes(&taus)?;
    let mut wf = Vector::zeros(signal.dim());
    let mut out = Matrix::zeros(signal.dim(), count);
    for (j, w) in values.iter().enumerate().take(count) {
        for s in 0..steps_per_period {
            let (w0, wm, w1) = (w.column(2 * s), w.column(2 * s + 1), w.column(2 * s + 2));
            let k1 = -&wf * rho + w0;
            let k2 = -(&wf + &k1 * (h / 2.0)) * rho + wm;
            let k3 = -(&wf + &k2 * (h / 2.0)) * rho + wm;
            let k4 = -(&wf + &k3 * h) * rho + w1;
            wf += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        out.column_mut(j).copy_from(&wf);
    }
    Ok(out)
}

/// `w(lT) - e^{-rho l T} w(0) - rho w_f[:, l-1]` for every column of `w_f`.
pub fn lowpass_derivative_identity<S: PiecewiseSignal + ?Sized>(rho: f64, signal: &S, w_f: &Matrix) -> Result<Matrix> {
    if w_f.ncols() > signal.intervals() || w_f.nrows() != signal.dim() {
        return Err(Error::dims("filtered data does not fit the signal"));
    }
    let period = signal.period();
    let w0 = signal.eval(0, 0.0)?;
    let mut out = Matrix::zeros(w_f.nrows(), w_f.ncols());
    for c in 0..w_f.ncols() {
        let l = (c + 1) as f64;
        let end = signal.eval(c, period)?;
        let col = end - &w0 * (-rho * l * period).exp() - w_f.column(c) * rho;
        out.column_mut(c).copy_from(&col);
    }
    Ok(out)
}

/// The matrices linking filtered to sampled data:
/// `[x_f; u_f] = C̄ [chi; mu] F̄` with `C̄ = [[Ā, B̄], [0, Ḡ]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationMatrices {
    #[serde(with = "serde_rows::matrix")]
    pub a_bar: Matrix,
    #[serde(with = "serde_rows::matrix")]
    pub b_bar: Matrix,
    #[serde(with = "serde_rows::matrix")]
    pub g_bar: Matrix,
    #[serde(with = "serde_rows::matrix")]
    pub f_bar: Matrix,
    #[serde(with = "serde_rows::matrix")]
    pub c_bar: Matrix,
}

/// `Ā = ∫ g e^{Aτ}`, `B̄ = ∫ g(τ) ∫_0^τ e^{A(τ-s)} B ds dτ`, `Ḡ = ∫ g · I`.
/// The inner integral is exact at each node.
pub fn build_relation_matrices(sys: &LtiSystem, decomp: &Decomposition, cfg: &NumericConfig) -> Result<RelationMatrices> {
    let (n, m) = (sys.n(), sys.m());
    let period = decomp.period();
    let rule = GaussLegendre::new(cfg.quad_nodes)?;
    let (taus, weights) = rule.composite(0.0, period, 2 * cfg.quad_panels);
    let mut a_bar = Matrix::zeros(n, n);
    let mut b_bar = Matrix::zeros(n, m);
    let mut g_int = 0.0;
    for (&tau, &w) in taus.iter().zip(&weights) {
        let g = decomp.g(tau);
        let (phi, gamma) = zoh_propagators(&sys.a, &sys.b, tau)?;
        a_bar += phi * (w * g);
        b_bar += gamma * (w * g);
        g_int += w * g;
    }
    let g_bar = Matrix::identity(m, m) * g_int;
    let mut c_bar = Matrix::zeros(n + m, n + m);
    c_bar.view_mut((0, 0), (n, n)).copy_from(&a_bar);
    c_bar.view_mut((0, n), (n, m)).copy_from(&b_bar);
    c_bar.view_mut((n, n), (m, m)).copy_from(&g_bar);
    Ok(RelationMatrices {
        a_bar,
        b_bar,
        g_bar,
        f_bar: build_f_bar(decomp),
        c_bar,
    })
}

/// `‖[x_f; u_f] - C̄ [chi; mu] F̄‖_F`.
pub fn factorization_residual(rel: &RelationMatrices, sampled: &SampledDataset, fd: &FilteredDataset) -> Result<f64> {
    let d_bar = sampled.stacked();
    if d_bar.nrows() != rel.c_bar.ncols() || d_bar.ncols() != rel.f_bar.nrows() {
        return Err(Error::dims("sampled data does not match the relation matrices"));
    }
    let predicted = &rel.c_bar * d_bar * &rel.f_bar;
    numlin::frobenius_distance(&fd.stacked(), &predicted)
}

/// `‖x_df - A x_f - B u_f‖_F` against a known system.
pub fn verify_algebraic(fd: &FilteredDataset, sys: &LtiSystem) -> Result<f64> {
    if fd.n() != sys.n() || fd.m() != sys.m() {
        return Err(Error::dims("filtered data and system dimensions differ"));
    }
    Ok((&fd.x_df - &sys.a * &fd.x_f - &sys.b * &fd.u_f).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::{decompose, make_filter_bank};
    use crate::numlin::from_rows;
    use approx::assert_relative_eq;

    fn cfg() -> NumericConfig {
        NumericConfig::default()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(16).unwrap();
        let total: f64 = rule.weights.iter().sum();
        assert_relative_eq!(total, 2.0, epsilon = 1e-14);
        for deg in 0..32 {
            let q: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "degree {deg}");
        }
        assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
        let odd = GaussLegendre::new(5).unwrap();
        assert_eq!(odd.nodes[2], 0.0);
    }

    #[test]
    fn quad_piece_examples() {
        let q = quad_scalar(|t| t, 0.0, 1.0, 16, 8).unwrap();
        assert_relative_eq!(q.value, 0.5, epsilon = 1e-15);
        let q = quad_scalar(|t| t * t * (1.0 - t) * (1.0 - t), 0.0, 1.0, 16, 8).unwrap();
        assert_relative_eq!(q.value, 1.0 / 30.0, epsilon = 1e-15);
        let q = quad_scalar(f64::exp, 0.0, 1.0, 16, 8).unwrap();
        assert!((q.value - (1f64.exp() - 1.0)).abs() < 1e-13);
        assert!(q.error_estimate < 1e-13);
        assert!(quad_scalar(|t| if t > 0.5 { f64::NAN } else { t }, 0.0, 1.0, 16, 8).is_err());
        assert!(quad_scalar(|t| t, 1.0, 1.0, 16, 8).is_err());
    }

    fn ones(dim: usize, period: f64, intervals: usize) -> LocalFn<impl Fn(usize, f64) -> Vector> {
        LocalFn {
            dim,
            period,
            intervals,
            f: move |_, _| Vector::from_element(dim, 1.0),
        }
    }

    #[test]
    fn filter_constant_signal() {
        let bank = make_filter_bank(FilterFamily::PolyTest, 1.0, 1.0, 4, 4).unwrap();
        let f = filter_signal(&bank, &ones(2, 1.0, 4), &cfg()).unwrap();
        for v in f.value.iter() {
            assert_relative_eq!(*v, 1.0 / 30.0, epsilon = 1e-15);
        }
        let zero = LocalFn {
            dim: 3,
            period: 1.0,
            intervals: 4,
            f: |_, _| Vector::zeros(3),
        };
        assert!(filter_signal(&bank, &zero, &cfg()).unwrap().value.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn filter_rejects_mismatched_bank() {
        let bank = make_filter_bank(FilterFamily::PolyTest, 1.0, 1.0, 3, 3).unwrap();
        assert!(filter_signal(&bank, &ones(1, 1.0, 4), &cfg()).is_err());
        assert!(filter_signal(&bank, &ones(1, 0.5, 3), &cfg()).is_err());
    }

    #[test]
    fn constant_state_has_zero_filtered_derivative() {
        for family in [FilterFamily::PolyTest, FilterFamily::BumpTest] {
            let bank = make_filter_bank(family, 1.0, 0.5, 4, 4).unwrap();
            let d = filtered_derivative_data(&bank, &ones(2, 0.5, 4), &cfg()).unwrap();
            assert!(d.value.amax() < 1e-13, "{family}: {}", d.value.amax());
        }
    }

    #[test]
    fn filtered_input_zero_and_integrator_toy() {
        let bank = make_filter_bank(FilterFamily::Lowpass, 1.0, 0.1, 3, 3).unwrap();
        let u = PiecewiseConstantInput::new(0.1, Matrix::zeros(2, 3)).unwrap();
        assert_eq!(filtered_input_data(&bank, &u, &cfg()).unwrap().value, Matrix::zeros(2, 3));

        // Lowpass first column: (1 - e^{-rho T}) mu_0.
        let u = PiecewiseConstantInput::new(0.1, from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap()).unwrap();
        let uf = filtered_input_data(&bank, &u, &cfg()).unwrap().value;
        assert_relative_eq!(uf[(0, 0)], 1.0 - (-0.1f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn lowpass_realization_of_step() {
        let rho = 1.0;
        let sig = ones(1, 0.5, 4);
        let wf = lowpass_realization(rho, &sig, 4, 1024).unwrap();
        for l in 1..=4 {
            let t = 0.5 * l as f64;
            assert!((wf[(0, l - 1)] - (1.0 - (-t).exp())).abs() < 1e-12);
        }
        let zero = LocalFn {
            dim: 2,
            period: 0.5,
            intervals: 2,
            f: |_, _| Vector::zeros(2),
        };
        assert_eq!(lowpass_realization(rho, &zero, 2, 64).unwrap(), Matrix::zeros(2, 2));
        assert!(lowpass_realization(rho, &zero, 3, 64).is_err());
    }

    #[test]
    fn lowpass_identity_vanishes_for_constants() {
        let rho = 0.7;
        let period = 0.3;
        let sig = LocalFn {
            dim: 1,
            period,
            intervals: 3,
            f: |_, _| Vector::from_element(1, 2.5),
        };
        let bank = make_filter_bank(FilterFamily::Lowpass, rho, period, 3, 3).unwrap();
        let wf = filter_signal(&bank, &sig, &cfg()).unwrap().value;
        let d = lowpass_derivative_identity(rho, &sig, &wf).unwrap();
        assert!(d.amax() < 1e-14);
    }

    #[test]
    fn relation_matrices_for_integrator() {
        let sys = LtiSystem::new(Matrix::zeros(2, 2), Matrix::identity(2, 2), Vector::zeros(2)).unwrap();
        let bank = make_filter_bank(FilterFamily::PolyTest, 1.0, 1.0, 3, 3).unwrap();
        let rel = build_relation_matrices(&sys, &decompose(&bank).unwrap(), &cfg()).unwrap();
        assert_relative_eq!(rel.a_bar, Matrix::identity(2, 2) / 30.0, epsilon = 1e-15);
        assert_relative_eq!(rel.g_bar, Matrix::identity(2, 2) / 30.0, epsilon = 1e-15);
        assert_relative_eq!(rel.b_bar, Matrix::identity(2, 2) / 60.0, epsilon = 1e-15);
        assert_eq!(rel.f_bar, Matrix::identity(3, 3));
    }

    #[test]
    fn algebraic_residual_detects_corruption() {
        let sys = LtiSystem::new(
            from_rows(&[vec![-1.0, 0.5], vec![0.0, -2.0]]).unwrap(),
            from_rows(&[vec![0.0], vec![1.0]]).unwrap(),
            Vector::from_vec(vec![1.0, -1.0]),
        )
        .unwrap();
        let u = PiecewiseConstantInput::new(0.2, from_rows(&[vec![1.0, -1.0, 0.5]]).unwrap()).unwrap();
        let traj = ExactTrajectory::new(&sys, &u).unwrap();
        let bank = make_filter_bank(FilterFamily::Laguerre, 1.0, 0.2, 3, 3).unwrap();
        let mut fd = filtered_dataset(&bank, &traj, &cfg()).unwrap();
        assert!(verify_algebraic(&fd, &sys).unwrap() < 1e-12);
        fd.x_df[(1, 2)] += 0.1;
        assert!(verify_algebraic(&fd, &sys).unwrap() >= 0.1 - 1e-12);
    }

    #[test]
    fn from_matrices_validates_shapes() {
        let ok = FilteredDataset::from_matrices(
            Matrix::zeros(2, 3),
            Matrix::zeros(1, 3),
            Matrix::zeros(2, 3),
            FilterFamily::Lowpass,
            1.0,
            0.1,
        );
        assert_eq!(ok.unwrap().count, 3);
        assert!(FilteredDataset::from_matrices(
            Matrix::zeros(2, 3),
            Matrix::zeros(1, 2),
            Matrix::zeros(2, 3),
            FilterFamily::Lowpass,
            1.0,
            0.1
        )
        .is_err());
    }
}
