//! Online experiment design: choose each input after observing the current
//! state so that the stacked data `[chi; mu]` gains one rank per sample and
//! reaches `n + m` after exactly `n + m` samples.
//!
//! Also hosts the offline Hankel excitation check and the rank verdicts on
//! sampled and intersample data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{discretize, zoh_propagators, DiscreteSystem, LtiSystem, PiecewiseConstantInput, SampledDataset};
use crate::numlin::{self, Matrix, RankReport, Vector};
use crate::serde_rows;

/// A system that can be driven one sampling period at a time.
pub trait Plant {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn period(&self) -> f64;

    /// Restarts the experiment, optionally from a new initial state, and
    /// returns `chi_0`.
    fn reset(&mut self, x0: Option<&Vector>) -> Result<Vector>;

    /// Holds `mu` for one period and returns the next sampled state.
    fn apply(&mut self, mu: &Vector) -> Result<Vector>;

    /// `x(t + kT)` on the most recently completed interval, `t` in `[0, T]`.
    fn probe(&self, t: f64) -> Result<Vector>;
}

/// Exact zero-order-hold simulation of a known system.
#[derive(Debug, Clone)]
pub struct SimulatedPlant {
    sys: LtiSystem,
    dsys: DiscreteSystem,
    state: Vector,
    last: Option<(Vector, Vector)>,
}

impl SimulatedPlant {
    pub fn new(sys: LtiSystem, period: f64) -> Result<Self> {
        let dsys = discretize(&sys, period)?;
        let state = sys.x0.clone();
        Ok(Self {
            sys,
            dsys,
            state,
            last: None,
        })
    }

    pub fn system(&self) -> &LtiSystem {
        &self.sys
    }
}

impl Plant for SimulatedPlant {
    fn n(&self) -> usize {
        self.sys.n()
    }

    fn m(&self) -> usize {
        self.sys.m()
    }

    fn period(&self) -> f64 {
        self.dsys.period
    }

    fn reset(&mut self, x0: Option<&Vector>) -> Result<Vector> {
        if let Some(x0) = x0 {
            self.sys = self.sys.with_x0(x0.clone())?;
        }
        self.state = self.sys.x0.clone();
        self.last = None;
        Ok(self.state.clone())
    }

    fn apply(&mut self, mu: &Vector) -> Result<Vector> {
        let next = crate::lti::step(&self.dsys, &self.state, mu)?;
        self.last = Some((std::mem::replace(&mut self.state, next.clone()), mu.clone()));
        Ok(next)
    }

    fn probe(&self, t: f64) -> Result<Vector> {
        let (chi, mu) = self
            .last
            .as_ref()
            .ok_or_else(|| Error::PreconditionViolated("probe before the first completed interval".into()))?;
        if !(0.0..=self.dsys.period).contains(&t) {
            return Err(Error::OutOfDomain {
                what: "t",
                value: t,
                domain: format!("[0, {}]", self.dsys.period),
            });
        }
        let (phi, gamma) = zoh_propagators(&self.sys.a, &self.sys.b, t)?;
        Ok(phi * chi + gamma * mu)
    }
}

/// Plays back a recorded experiment. Inputs must match the recording.
#[derive(Debug, Clone)]
pub struct ReplayPlant {
    chi: Matrix,
    mu: Matrix,
    period: f64,
    k: usize,
}

impl ReplayPlant {
    /// Needs the terminal state so that every recorded input has a successor.
    pub fn new(dataset: &SampledDataset) -> Result<Self> {
        let chi = dataset
            .chi_with_terminal()
            .ok_or_else(|| Error::invalid("replay needs a recording with its terminal state"))?;
        Ok(Self {
            chi,
            mu: dataset.mu.clone(),
            period: dataset.period,
            k: 0,
        })
    }
}

impl Plant for ReplayPlant {
    fn n(&self) -> usize {
        self.chi.nrows()
    }

    fn m(&self) -> usize {
        self.mu.nrows()
    }

    fn period(&self) -> f64 {
        self.period
    }

    fn reset(&mut self, x0: Option<&Vector>) -> Result<Vector> {
        let chi0: Vector = self.chi.column(0).into_owned();
        if let Some(x0) = x0 {
            if (x0 - &chi0).amax() > 1e-12 * (1.0 + chi0.amax()) {
                return Err(Error::invalid("replay cannot start from a different initial state"));
            }
        }
        self.k = 0;
        Ok(chi0)
    }

    fn apply(&mut self, mu: &Vector) -> Result<Vector> {
        if self.k >= self.mu.ncols() {
            return Err(Error::invalid("recording exhausted"));
        }
        if mu.len() != self.m() {
            return Err(Error::dims(format!("input of length {} for m = {}", mu.len(), self.m())));
        }
        let recorded = self.mu.column(self.k);
        if (mu - recorded).amax() > 1e-12 * (1.0 + recorded.amax()) {
            return Err(Error::invalid(format!("input at step {} differs from the recording", self.k)));
        }
        self.k += 1;
        Ok(self.chi.column(self.k).into_owned())
    }

    fn probe(&self, _t: f64) -> Result<Vector> {
        Err(Error::PreconditionViolated("a replayed recording has no intersample states".into()))
    }
}

/// Depth-`depth` block Hankel matrix of the columns of `mu`.
pub fn hankel(mu: &Matrix, depth: usize) -> Result<Matrix> {
    let (m, len) = mu.shape();
    if depth == 0 || depth > len {
        return Err(Error::invalid(format!("Hankel depth {depth} for {len} samples")));
    }
    let cols = len - depth + 1;
    let mut h = Matrix::zeros(depth * m, cols);
    for i in 0..depth {
        for j in 0..cols {
            h.view_mut((i * m, j), (m, 1)).copy_from(&mu.column(i + j));
        }
    }
    Ok(h)
}

/// Whether `mu` is persistently exciting of order `n + 1`.
pub fn pe_check(mu: &Matrix, n: usize, rtol: f64) -> Result<bool> {
    if mu.ncols() < n + 1 || mu.nrows() == 0 {
        return Ok(false);
    }
    let h = hankel(mu, n + 1)?;
    Ok(numlin::svd_rank(&h, rtol)?.rank == (n + 1) * mu.nrows())
}

/// Whether `chi_k` lies in the column space of `prefix`, by rank comparison.
pub fn image_membership(prefix: &Matrix, chi_k: &Vector, rtol: f64) -> Result<bool> {
    if prefix.ncols() == 0 {
        return Err(Error::invalid("image membership needs at least one column"));
    }
    if prefix.nrows() != chi_k.len() {
        return Err(Error::dims("chi_k length differs from the prefix rows"));
    }
    let mut ext = prefix.clone().insert_column(prefix.ncols(), 0.0);
    ext.column_mut(prefix.ncols()).copy_from(chi_k);
    Ok(numlin::svd_rank(&ext, rtol)?.rank == numlin::svd_rank(prefix, rtol)?.rank)
}

/// A left-kernel vector `[xi; eta]` of the stacked prefix with `eta != 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelCertificate {
    #[serde(with = "serde_rows::vector")]
    pub xi: Vector,
    #[serde(with = "serde_rows::vector")]
    pub eta: Vector,
    pub step: usize,
}

impl KernelCertificate {
    /// `‖[xi^T eta^T] prefix‖`.
    pub fn residual(&self, prefix: &Matrix) -> f64 {
        let v = Vector::from_iterator(
            self.xi.len() + self.eta.len(),
            self.xi.iter().chain(self.eta.iter()).copied(),
        );
        (v.transpose() * prefix).norm()
    }
}

/// Picks the left-kernel vector of the `(n + m) x k` prefix whose `eta`
/// block has the largest norm.
pub fn kernel_certificate(prefix: &Matrix, n: usize, rtol: f64) -> Result<KernelCertificate> {
    let rows = prefix.nrows();
    if n >= rows {
        return Err(Error::dims(format!("n = {n} leaves no input rows in a {rows}-row prefix")));
    }
    let basis = numlin::left_kernel_basis(prefix, rtol)?;
    if basis.nrows() == 0 {
        return Err(Error::PreconditionViolated("the stacked prefix has no left kernel".into()));
    }
    // Columns of `eta_block` are the eta parts of the basis vectors.
    let eta_block = basis.columns(n, rows - n).transpose();
    let svd = numlin::svd(&eta_block.into_owned(), true)?;
    let sigma = svd.sigma.first().copied().unwrap_or(0.0);
    if !(sigma > rtol) {
        return Err(Error::PreconditionViolated(format!(
            "every left-kernel vector has a numerically zero input part (largest {sigma:e})"
        )));
    }
    let weights = svd.v_t.row(0).transpose();
    let v = basis.transpose() * weights;
    Ok(KernelCertificate {
        xi: v.rows(0, n).into_owned(),
        eta: v.rows(n, rows - n).into_owned(),
        step: prefix.ncols(),
    })
}

/// How inputs are chosen when the rank can grow regardless of the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputPolicy {
    /// `mu_0 = 1`, then `mu_k = (-1)^{floor(k/m)} e_{(k mod m) + 1}`.
    Cycle,
    /// `+1, -1, +e_1, -e_1, ..., +e_m, -e_m`, repeated.
    Alternating,
    /// Uniform entries in `[-1, 1]`.
    Seeded { seed: u64 },
}

impl InputPolicy {
    /// The policy's input for step `k`.
    pub fn candidate(&self, k: usize, m: usize, rng: &mut ChaCha8Rng) -> Vector {
        match *self {
            InputPolicy::Cycle => {
                if k == 0 {
                    Vector::from_element(m, 1.0)
                } else {
                    let sign = if (k / m) % 2 == 0 { 1.0 } else { -1.0 };
                    let mut e = Vector::zeros(m);
                    e[k % m] = sign;
                    e
                }
            }
            InputPolicy::Alternating => {
                let i = k % (2 * (m + 1));
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let mut v = if i < 2 {
                    Vector::from_element(m, 1.0)
                } else {
                    let mut e = Vector::zeros(m);
                    e[i / 2 - 1] = 1.0;
                    e
                };
                v *= sign;
                v
            }
            InputPolicy::Seeded { .. } => Vector::from_fn(m, |_, _| rng.random_range(-1.0..=1.0)),
        }
    }

    fn rng(&self) -> ChaCha8Rng {
        match *self {
            InputPolicy::Seeded { seed } => ChaCha8Rng::seed_from_u64(seed),
            _ => ChaCha8Rng::seed_from_u64(0),
        }
    }
}

/// How the input is chosen when `chi_k` is already in the image of the prefix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchBRule {
    /// `mu_k = ±eta / ‖eta‖`.
    #[default]
    Eta,
    /// The policy candidate if it passes the guard, otherwise [`BranchBRule::Eta`].
    PolicyFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `chi_k` is outside the image of the prefix; any input works.
    Free,
    /// `chi_k` is inside; the input must satisfy the certificate.
    Certified,
}

/// `1e-6 (1 + |xi^T chi_k|)`.
pub fn branch_guard(cert: &KernelCertificate, chi_k: &Vector) -> f64 {
    1e-6 * (1.0 + cert.xi.dot(chi_k).abs())
}

/// Input for step `k`. `certificate` is required for [`Branch::Certified`].
pub fn choose_input(
    branch: Branch,
    certificate: Option<&KernelCertificate>,
    chi_k: &Vector,
    candidate: Vector,
    rule: BranchBRule,
) -> Result<Vector> {
    match branch {
        Branch::Free => Ok(candidate),
        Branch::Certified => {
            let cert = certificate.ok_or_else(|| Error::invalid("certified branch without a certificate"))?;
            if cert.xi.len() != chi_k.len() || cert.eta.len() != candidate.len() {
                return Err(Error::dims("certificate does not match the state or input"));
            }
            let base = cert.xi.dot(chi_k);
            let guard = branch_guard(cert, chi_k);
            if rule == BranchBRule::PolicyFirst && (base + cert.eta.dot(&candidate)).abs() > guard {
                return Ok(candidate);
            }
            let unit = &cert.eta / cert.eta.norm();
            for c in [1.0, -1.0] {
                let mu = &unit * c;
                if (base + cert.eta.dot(&mu)).abs() > guard {
                    return Ok(mu);
                }
            }
            Err(Error::Internal("both signs of eta failed the branch guard".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignOptions {
    pub policy: InputPolicy,
    #[serde(default)]
    pub branch_b: BranchBRule,
    pub rtol: f64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            policy: InputPolicy::Cycle,
            branch_b: BranchBRule::Eta,
            rtol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub branch: Branch,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<KernelCertificate>,
    #[serde(with = "serde_rows::vector")]
    pub mu: Vector,
    /// Rank of the stacked prefix including this step.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub dataset: SampledDataset,
    pub steps: Vec<StepRecord>,
    pub rank: RankReport,
}

impl DesignResult {
    pub fn ranks(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.rank).collect()
    }
}

/// Runs the `n + m` step online design against `plant`.
pub fn run_online_design(
    plant: &mut dyn Plant,
    n: usize,
    m: usize,
    period: f64,
    opts: &DesignOptions,
) -> Result<DesignResult> {
    if plant.n() != n || plant.m() != m {
        return Err(Error::dims(format!(
            "plant is {}x{}, design asked for n = {n}, m = {m}",
            plant.n(),
            plant.m()
        )));
    }
    if m == 0 {
        return Err(Error::invalid("design needs at least one input"));
    }
    if (plant.period() - period).abs() > 1e-12 * period {
        return Err(Error::invalid("plant period differs from the design period"));
    }
    let len = n + m;
    let mut rng = opts.policy.rng();
    let mut chi = Matrix::zeros(n, len);
    let mut mu = Matrix::zeros(m, len);
    let mut steps: Vec<StepRecord> = Vec::with_capacity(len);
    let ranks = |steps: &[StepRecord]| steps.iter().map(|s| s.rank).collect::<Vec<_>>();
    let mut x = plant.reset(None)?;
    for k in 0..len {
        chi.column_mut(k).copy_from(&x);
        let candidate = opts.policy.candidate(k, m, &mut rng);
        let in_image = k > 0 && image_membership(&chi.columns(0, k).into_owned(), &x, opts.rtol)?;
        let (branch, certificate) = if in_image {
            let prefix = numlin::vstack(&chi.columns(0, k).into_owned(), &mu.columns(0, k).into_owned())?;
            let cert = kernel_certificate(&prefix, n, opts.rtol).map_err(|e| Error::DesignFailure {
                step: k,
                reason: format!("no usable kernel certificate: {e}"),
                ranks: ranks(&steps),
            })?;
            (Branch::Certified, Some(cert))
        } else {
            (Branch::Free, None)
        };
        let mu_k = choose_input(branch, certificate.as_ref(), &x, candidate, opts.branch_b)?;
        mu.column_mut(k).copy_from(&mu_k);
        let prefix = numlin::vstack(&chi.columns(0, k + 1).into_owned(), &mu.columns(0, k + 1).into_owned())?;
        let rank = numlin::svd_rank(&prefix, opts.rtol)?.rank;
        x = plant.apply(&mu_k)?;
        steps.push(StepRecord {
            k,
            branch,
            certificate,
            mu: mu_k,
            rank,
        });
    }
    let dataset = SampledDataset::new(chi, mu, period, Some(x))?;
    let report = rank_condition(&dataset, opts.rtol)?;
    if report.rank < len {
        let first = steps.iter().position(|s| s.rank < s.k + 1).unwrap_or(len - 1);
        return Err(Error::DesignFailure {
            step: first,
            reason: format!(
                "final rank {} < n + m = {len}; the sampling period may be pathological",
                report.rank
            ),
            ranks: ranks(&steps),
        });
    }
    Ok(DesignResult {
        dataset,
        steps,
        rank: report,
    })
}

/// Rank of `[chi; mu]`.
pub fn rank_condition(dataset: &SampledDataset, rtol: f64) -> Result<RankReport> {
    numlin::svd_rank(&dataset.stacked(), rtol)
}

/// Rank of `[chi(t); mu]` for every `t` in `t_list`, where
/// `chi(t) = [x(t), x(t + T), ...]`.
pub fn verify_intersample(
    sys: &LtiSystem,
    input: &PiecewiseConstantInput,
    t_list: &[f64],
    rtol: f64,
) -> Result<Vec<(f64, RankReport)>> {
    if input.dim() != sys.m() {
        return Err(Error::dims("input dimension differs from m"));
    }
    let sampled = crate::lti::simulate_sampled(sys, input)?;
    let mut out = Vec::with_capacity(t_list.len());
    for &t in t_list {
        if !(0.0..input.period).contains(&t) {
            return Err(Error::OutOfDomain {
                what: "t",
                value: t,
                domain: format!("[0, {})", input.period),
            });
        }
        let (phi, gamma) = zoh_propagators(&sys.a, &sys.b, t)?;
        let chi_t = phi * &sampled.chi + gamma * &sampled.mu;
        let stacked = numlin::vstack(&chi_t, &sampled.mu)?;
        out.push((t, numlin::svd_rank(&stacked, rtol)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::simulate_sampled;
    use crate::numlin::from_rows;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn integrator() -> LtiSystem {
        LtiSystem::new(Matrix::zeros(1, 1), Matrix::identity(1, 1), Vector::zeros(1)).unwrap()
    }

    #[test]
    fn hankel_examples() {
        let mu = from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(hankel(&mu, 1).unwrap(), mu);
        assert_eq!(hankel(&mu, 2).unwrap(), from_rows(&[vec![1.0, 2.0], vec![2.0, 3.0]]).unwrap());
        assert!(hankel(&mu, 4).is_err());
        let h = hankel(&crate::aircraft::table(&crate::aircraft::MU), 2).unwrap();
        assert_eq!(h.shape(), (4, 5));
        assert_eq!(h.column(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0, -1.0, -1.0]);
    }

    #[test]
    fn pe_examples() {
        assert!(!pe_check(&Matrix::zeros(1, 5), 1, 1e-8).unwrap());
        let mu = from_rows(&[vec![1.0, 0.0, -1.0, 0.0, 1.0]]).unwrap();
        assert!(pe_check(&mu, 1, 1e-8).unwrap());
        assert!(!pe_check(&crate::aircraft::table(&crate::aircraft::MU), 4, 1e-8).unwrap());
        assert!(!pe_check(&mu, 10, 1e-8).unwrap());
    }

    #[test]
    fn image_membership_examples() {
        let prefix = from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        assert!(image_membership(&prefix, &Vector::from_vec(vec![1.0, 0.0]), 1e-8).unwrap());
        assert!(!image_membership(&prefix, &Vector::from_vec(vec![0.0, 1.0]), 1e-8).unwrap());
        assert!(image_membership(&Matrix::zeros(2, 0), &Vector::zeros(2), 1e-8).is_err());
    }

    #[test]
    fn certificate_examples() {
        // chi_0 = 0, mu_0 = e1 with m = 2: eta must be orthogonal to e1.
        let prefix = from_rows(&[vec![0.0], vec![1.0], vec![0.0]]).unwrap();
        let c = kernel_certificate(&prefix, 1, 1e-8).unwrap();
        assert!(c.residual(&prefix) < 1e-12);
        assert!(c.eta[0].abs() < 1e-12);
        assert_relative_eq!(c.eta[1].abs(), 1.0, epsilon = 1e-12);

        let prefix = from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let c = kernel_certificate(&prefix, 1, 1e-8).unwrap();
        assert_relative_eq!(c.xi[0], -c.eta[0], epsilon = 1e-12);
        assert_relative_eq!(c.eta.norm(), 1.0 / 2f64.sqrt(), epsilon = 1e-12);

        // Kernel exists but has no input part.
        let prefix = from_rows(&[vec![1.0], vec![0.0], vec![1.0]]).unwrap();
        let c = kernel_certificate(&prefix, 2, 1e-8).unwrap();
        assert!(c.residual(&prefix) < 1e-12);
        let full = Matrix::identity(2, 2);
        assert!(matches!(kernel_certificate(&full, 1, 1e-8), Err(Error::PreconditionViolated(_))));
        let no_eta = from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(matches!(kernel_certificate(&no_eta, 1, 1e-8), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn choose_input_examples() {
        let cert = KernelCertificate {
            xi: Vector::zeros(1),
            eta: Vector::from_vec(vec![1.0, 0.0]),
            step: 1,
        };
        let chi = Vector::from_vec(vec![3.0]);
        let mu = choose_input(Branch::Certified, Some(&cert), &chi, Vector::zeros(2), BranchBRule::Eta).unwrap();
        assert_eq!(mu, Vector::from_vec(vec![1.0, 0.0]));

        let cert = KernelCertificate {
            xi: Vector::from_vec(vec![-1.0]),
            ..cert
        };
        let chi = Vector::from_vec(vec![1.0]);
        let mu = choose_input(Branch::Certified, Some(&cert), &chi, Vector::zeros(2), BranchBRule::Eta).unwrap();
        assert_eq!(mu, Vector::from_vec(vec![-1.0, 0.0]));

        // PolicyFirst keeps a passing candidate and rejects a failing one.
        let cand = Vector::from_vec(vec![1.0, 0.0]);
        let mu = choose_input(Branch::Certified, Some(&cert), &chi, cand, BranchBRule::PolicyFirst).unwrap();
        assert_eq!(mu, Vector::from_vec(vec![-1.0, 0.0]));
        let cand = Vector::from_vec(vec![2.0, 1.0]);
        let mu = choose_input(Branch::Certified, Some(&cert), &chi, cand.clone(), BranchBRule::PolicyFirst).unwrap();
        assert_eq!(mu, cand);

        assert!(choose_input(Branch::Certified, None, &chi, Vector::zeros(2), BranchBRule::Eta).is_err());
        let free = choose_input(Branch::Free, None, &chi, Vector::from_vec(vec![1.0, 1.0]), BranchBRule::Eta).unwrap();
        assert_eq!(free, Vector::from_vec(vec![1.0, 1.0]));
    }

    #[test]
    fn policies() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cyc: Vec<Vec<f64>> = (0..5)
            .map(|k| InputPolicy::Cycle.candidate(k, 2, &mut rng).iter().copied().collect())
            .collect();
        assert_eq!(
            cyc,
            vec![vec![1.0, 1.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 0.0]]
        );
        let alt = crate::aircraft::table(&crate::aircraft::MU);
        for k in 0..6 {
            assert_eq!(InputPolicy::Alternating.candidate(k, 2, &mut rng), alt.column(k));
        }
        let p = InputPolicy::Seeded { seed: 7 };
        let (mut r1, mut r2) = (p.rng(), p.rng());
        assert_eq!(p.candidate(0, 3, &mut r1), p.candidate(0, 3, &mut r2));
    }

    #[test]
    fn integrator_design_by_hand() {
        // chi_0 = 0 is free; mu_0 = 1 gives chi_1 = 1. At k = 1, chi_1 is not
        // in im{0}, so mu_1 comes from the policy (sign flipped for m = 1).
        let mut plant = SimulatedPlant::new(integrator(), 1.0).unwrap();
        let res = run_online_design(&mut plant, 1, 1, 1.0, &DesignOptions::default()).unwrap();
        assert_eq!(res.dataset.chi, from_rows(&[vec![0.0, 1.0]]).unwrap());
        assert_eq!(res.dataset.mu, from_rows(&[vec![1.0, -1.0]]).unwrap());
        assert_eq!(res.ranks(), vec![1, 2]);
        assert_eq!(res.steps[1].branch, Branch::Free);
        assert_eq!(res.dataset.terminal, Some(Vector::from_vec(vec![0.0])));
    }

    #[test]
    fn simulated_plant_probe_and_replay() {
        let sys = LtiSystem::new(
            from_rows(&[vec![-1.0]]).unwrap(),
            from_rows(&[vec![1.0]]).unwrap(),
            Vector::from_vec(vec![1.0]),
        )
        .unwrap();
        let mut plant = SimulatedPlant::new(sys.clone(), 0.5).unwrap();
        assert!(plant.probe(0.0).is_err());
        plant.reset(None).unwrap();
        let x1 = plant.apply(&Vector::from_vec(vec![2.0])).unwrap();
        assert_relative_eq!(plant.probe(0.5).unwrap(), x1, epsilon = 1e-14);
        assert_relative_eq!(plant.probe(0.0).unwrap()[0], 1.0, epsilon = 1e-14);

        let input = PiecewiseConstantInput::new(0.5, from_rows(&[vec![2.0, -1.0]]).unwrap()).unwrap();
        let data = simulate_sampled(&sys, &input).unwrap();
        let mut replay = ReplayPlant::new(&data).unwrap();
        assert_eq!(replay.reset(None).unwrap(), data.chi.column(0));
        assert_eq!(replay.apply(&Vector::from_vec(vec![2.0])).unwrap(), data.chi.column(1));
        assert!(replay.apply(&Vector::from_vec(vec![0.0])).is_err());
        assert!(replay.probe(0.1).is_err());
        let no_terminal = SampledDataset::new(data.chi.clone(), data.mu.clone(), 0.5, None).unwrap();
        assert!(ReplayPlant::new(&no_terminal).is_err());
    }

    #[test]
    fn rank_condition_examples() {
        let zero = SampledDataset::new(Matrix::zeros(2, 3), Matrix::zeros(1, 3), 0.1, None).unwrap();
        assert_eq!(rank_condition(&zero, 1e-8).unwrap().rank, 0);
        let rep = SampledDataset::new(Matrix::from_element(2, 3, 1.0), Matrix::from_element(1, 3, 2.0), 0.1, None)
            .unwrap();
        assert!(rank_condition(&rep, 1e-8).unwrap().rank <= 1);
    }

    #[test]
    fn intersample_at_zero_matches_sampled() {
        let sys = crate::aircraft::system();
        let input = crate::aircraft::input().unwrap();
        let r = verify_intersample(&sys, &input, &[0.0], 1e-8).unwrap();
        let sampled = simulate_sampled(&sys, &input).unwrap();
        assert_eq!(r[0].1.rank, rank_condition(&sampled, 1e-8).unwrap().rank);
        assert!(verify_intersample(&sys, &input, &[0.1], 1e-8).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn certificate_annihilates_prefix(seed in any::<u64>(), n in 1usize..4, m in 1usize..3, k_raw: usize) {
            // Random prefix with fewer columns than rows always has a kernel.
            let rows = n + m;
            let k = 1 + k_raw % (rows - 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let prefix = Matrix::from_fn(rows, k, |_, _| rng.random_range(-1.0..1.0));
            match kernel_certificate(&prefix, n, 1e-8) {
                Ok(c) => {
                    prop_assert!(c.residual(&prefix) <= 1e-10 * (1.0 + prefix.norm()));
                    prop_assert!(c.eta.norm() >= 1e-6);
                }
                Err(Error::PreconditionViolated(_)) => {
                    // Only possible when every kernel vector lives in the xi block.
                    let basis = numlin::left_kernel_basis(&prefix, 1e-8).unwrap();
                    prop_assert!(basis.columns(n, m).norm() < 1e-6);
                }
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn design_rank_grows_by_one(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (n, m) = (3, 2);
            let a = Matrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
            let b = Matrix::from_fn(n, m, |_, _| rng.random_range(-2.0..2.0));
            let x0 = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let sys = LtiSystem::new(a.clone(), b.clone(), x0).unwrap();
            prop_assume!(numlin::svd_rank(&crate::lti::controllability_matrix(&a, &b), 1e-8).unwrap().rank == n);
            let mut plant = SimulatedPlant::new(sys, 0.1).unwrap();
            let res = run_online_design(&mut plant, n, m, 0.1, &DesignOptions::default()).unwrap();
            prop_assert_eq!(res.ranks(), (1..=n + m).collect::<Vec<_>>());
            for s in &res.steps {
                if let Some(c) = &s.certificate {
                    let prefix = res.dataset.stacked_prefix(s.k);
                    prop_assert!(c.residual(&prefix) <= 1e-8 * prefix.norm());
                }
            }
        }
    }
}
