//! Entropic optimal-transport solvers: Sinkhorn scaling, Wasserstein cost,
//! Gromov-Wasserstein matching, the fused graph-transport distance, and a
//! permutation brute-force oracle for testing.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Marginal feasibility tolerance used by [`TransportPlan::checked`].
pub const PLAN_FEASIBILITY_TOL: f64 = 1e-6;

/// Entropy weight at or below which scaling runs in the log domain.
pub const LOG_DOMAIN_THRESHOLD: f64 = 0.01;

/// Largest exponent magnitude the kernel form is allowed before the solver
/// switches to the log domain to avoid underflow.
const KERNEL_EXP_LIMIT: f64 = 500.0;

/// A probability vector over the nodes of one side of a transport problem.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalDistribution {
    weights: Array1<f64>,
}

impl MarginalDistribution {
    /// Validates simplex membership: nonnegative entries summing to 1
    /// within 1e-9.
    pub fn new(weights: impl Into<Array1<f64>>) -> Result<Self> {
        let weights = weights.into();
        if weights.is_empty() {
            return Err(Error::EmptyInput {
                context: "marginal distribution",
            });
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidValue {
                    context: "marginal distribution",
                    message: format!("entry {i} is {w}, expected a nonnegative real"),
                });
            }
        }
        let sum: f64 = weights.sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidValue {
                context: "marginal distribution",
                message: format!("weights sum to {sum}, expected 1 within 1e-9"),
            });
        }
        Ok(Self { weights })
    }

    /// Uniform distribution over `n` nodes.
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform marginal needs at least one node");
        Self {
            weights: Array1::from_elem(n, 1.0 / n as f64),
        }
    }

    /// Normalizes arbitrary nonnegative weights onto the simplex.
    pub fn from_unnormalized(raw: &[f64]) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyInput {
                context: "marginal weights",
            });
        }
        for (i, &w) in raw.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidValue {
                    context: "marginal weights",
                    message: format!("entry {i} is {w}, expected a nonnegative real"),
                });
            }
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidValue {
                context: "marginal weights",
                message: "total mass must be positive".into(),
            });
        }
        let weights = Array1::from_iter(raw.iter().map(|&w| w / sum));
        // Renormalize once more so the simplex invariant holds to 1e-9 even
        // after an ill-conditioned division.
        let s = weights.sum();
        Self::new(weights.mapv(|w| w / s))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }
}

/// A nonnegative, finite cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    values: Array2<f64>,
}

impl CostMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        for ((i, j), &c) in values.indexed_iter() {
            if !c.is_finite() || c < 0.0 {
                return Err(Error::InvalidValue {
                    context: "cost matrix",
                    message: format!("entry ({i}, {j}) is {c}, expected a nonnegative real"),
                });
            }
        }
        Ok(Self { values })
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// A coupling of two marginals: nonnegative entries whose row sums match the
/// source marginal and whose column sums match the target marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    values: Array2<f64>,
    source: MarginalDistribution,
    target: MarginalDistribution,
}

impl TransportPlan {
    /// Validates the coupling at an explicit marginal tolerance (max-norm).
    pub fn new(
        values: Array2<f64>,
        source: MarginalDistribution,
        target: MarginalDistribution,
        feasibility_tol: f64,
    ) -> Result<Self> {
        if values.nrows() != source.len() || values.ncols() != target.len() {
            return Err(Error::DimensionMismatch {
                context: "transport plan",
                expected: format!("{}x{}", source.len(), target.len()),
                got: format!("{}x{}", values.nrows(), values.ncols()),
            });
        }
        for ((i, j), &t) in values.indexed_iter() {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::InvalidValue {
                    context: "transport plan",
                    message: format!("entry ({i}, {j}) is {t}, expected a nonnegative real"),
                });
            }
        }
        let violation = marginal_violation(&values, source.weights(), target.weights());
        if violation > feasibility_tol {
            return Err(Error::InvalidValue {
                context: "transport plan",
                message: format!(
                    "marginal violation {violation:.3e} exceeds tolerance {feasibility_tol:.3e}"
                ),
            });
        }
        Ok(Self {
            values,
            source,
            target,
        })
    }

    /// Validates at the conventional `1e-6` feasibility tolerance.
    pub fn checked(
        values: Array2<f64>,
        source: MarginalDistribution,
        target: MarginalDistribution,
    ) -> Result<Self> {
        Self::new(values, source, target, PLAN_FEASIBILITY_TOL)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn source_marginal(&self) -> &MarginalDistribution {
        &self.source
    }

    pub fn target_marginal(&self) -> &MarginalDistribution {
        &self.target
    }

    /// Max-norm violation of both marginal constraints.
    pub fn marginal_violation(&self) -> f64 {
        marginal_violation(&self.values, self.source.weights(), self.target.weights())
    }
}

fn marginal_violation(values: &Array2<f64>, u: &Array1<f64>, v: &Array1<f64>) -> f64 {
    let mut worst = 0.0f64;
    for (i, row) in values.outer_iter().enumerate() {
        worst = worst.max((row.sum() - u[i]).abs());
    }
    for (j, col) in values.t().outer_iter().enumerate() {
        worst = worst.max((col.sum() - v[j]).abs());
    }
    worst
}

/// Parameters of the entropic Sinkhorn solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    /// Entropy weight; larger values give smoother plans.
    pub entropy_weight: f64,
    pub max_iterations: usize,
    /// Max-norm marginal violation at which scaling stops.
    pub tolerance: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            entropy_weight: 0.1,
            max_iterations: 1000,
            tolerance: 1e-9,
        }
    }
}

impl SinkhornConfig {
    fn validate(&self) -> Result<()> {
        if !(self.entropy_weight.is_finite() && self.entropy_weight > 0.0) {
            return Err(Error::InvalidValue {
                context: "sinkhorn config",
                message: format!("entropy_weight must be positive, got {}", self.entropy_weight),
            });
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::InvalidValue {
                context: "sinkhorn config",
                message: format!("tolerance must be positive, got {}", self.tolerance),
            });
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidValue {
                context: "sinkhorn config",
                message: "max_iterations must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Parameters of the fused (Wasserstein + Gromov-Wasserstein) solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GotConfig {
    /// Mixing weight: 1 is pure node-cost transport, 0 is pure structural
    /// matching.
    pub lambda_mix: f64,
    pub sinkhorn: SinkhornConfig,
    /// Number of linearization rounds of the alternating scheme.
    pub outer_iterations: usize,
}

impl Default for GotConfig {
    fn default() -> Self {
        Self {
            lambda_mix: 0.5,
            sinkhorn: SinkhornConfig::default(),
            outer_iterations: 20,
        }
    }
}

impl GotConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        self.sinkhorn.validate()?;
        if !(self.lambda_mix.is_finite() && (0.0..=1.0).contains(&self.lambda_mix)) {
            return Err(Error::InvalidValue {
                context: "got config",
                message: format!("lambda_mix must lie in [0, 1], got {}", self.lambda_mix),
            });
        }
        if self.outer_iterations == 0 {
            return Err(Error::InvalidValue {
                context: "got config",
                message: "outer_iterations must be at least 1".into(),
            });
        }
        Ok(())
    }
}

fn check_dims(cost: &CostMatrix, u: &MarginalDistribution, v: &MarginalDistribution) -> Result<()> {
    if cost.nrows() != u.len() || cost.ncols() != v.len() {
        return Err(Error::DimensionMismatch {
            context: "cost vs marginals",
            expected: format!("{}x{}", u.len(), v.len()),
            got: format!("{}x{}", cost.nrows(), cost.ncols()),
        });
    }
    Ok(())
}

fn check_positive_marginal(m: &MarginalDistribution) -> Result<()> {
    for (i, &w) in m.weights().iter().enumerate() {
        if w <= 0.0 {
            return Err(Error::ZeroMarginalEntry { index: i });
        }
    }
    Ok(())
}

/// Whether the scaling must run in the log domain: either the entropy weight
/// is at the stabilization threshold or the kernel would underflow.
fn needs_log_domain(max_cost: f64, min_log_mask: f64, beta: f64) -> bool {
    beta <= LOG_DOMAIN_THRESHOLD || (max_cost / beta - min_log_mask) > KERNEL_EXP_LIMIT
}

/// Alternating row/column scaling of a strictly positive kernel.
/// Returns the plan values and the number of iterations performed.
fn scale_kernel(
    kernel: &Array2<f64>,
    u: &Array1<f64>,
    v: &Array1<f64>,
    cfg: &SinkhornConfig,
) -> std::result::Result<(Array2<f64>, usize), (usize, f64)> {
    let n = kernel.nrows();
    let m = kernel.ncols();
    let mut a = Array1::<f64>::ones(n);
    let mut b = Array1::<f64>::ones(m);
    let mut violation = f64::INFINITY;
    for iter in 1..=cfg.max_iterations {
        let kb = kernel.dot(&b);
        for i in 0..n {
            a[i] = u[i] / kb[i];
        }
        let kta = kernel.t().dot(&a);
        for j in 0..m {
            b[j] = v[j] / kta[j];
        }
        // Column sums are exact right after the b-update; the row residual
        // measures convergence.
        let kb_next = kernel.dot(&b);
        let mut row_dev = 0.0f64;
        for i in 0..n {
            row_dev = row_dev.max((a[i] * kb_next[i] - u[i]).abs());
        }
        let mut col_dev = 0.0f64;
        for j in 0..m {
            col_dev = col_dev.max((b[j] * kta[j] - v[j]).abs());
        }
        violation = row_dev.max(col_dev);
        if !violation.is_finite() {
            return Err((iter, violation));
        }
        if violation <= cfg.tolerance {
            let mut plan = kernel.clone();
            for ((i, j), t) in plan.indexed_iter_mut() {
                *t *= a[i] * b[j];
            }
            return Ok((plan, iter));
        }
    }
    Err((cfg.max_iterations, violation))
}

fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Log-domain scaling on `log_kernel` (entries may be very negative).
///
/// After each column update the column sums are exact to rounding, so the
/// row residual measured from the next row pass is the true max-norm
/// violation of the current iterate.
fn scale_log(
    log_kernel: &Array2<f64>,
    u: &Array1<f64>,
    v: &Array1<f64>,
    cfg: &SinkhornConfig,
) -> std::result::Result<(Array2<f64>, usize), (usize, f64)> {
    let n = log_kernel.nrows();
    let m = log_kernel.ncols();
    let log_u = u.mapv(f64::ln);
    let log_v = v.mapv(f64::ln);
    let mut alpha = Array1::<f64>::zeros(n);
    let mut gamma = Array1::<f64>::zeros(m);
    let mut row_lse = Array1::<f64>::zeros(n);
    let mut scratch = vec![0.0f64; n.max(m)];
    let mut violation = f64::INFINITY;
    let materialize = |alpha: &Array1<f64>, gamma: &Array1<f64>| {
        let mut plan = Array2::<f64>::zeros((n, m));
        for ((i, j), t) in plan.indexed_iter_mut() {
            *t = (alpha[i] + log_kernel[(i, j)] + gamma[j]).exp();
        }
        plan
    };
    for iter in 1..=cfg.max_iterations {
        for i in 0..n {
            for j in 0..m {
                scratch[j] = log_kernel[(i, j)] + gamma[j];
            }
            row_lse[i] = logsumexp(&scratch[..m]);
        }
        if iter > 1 {
            let mut row_dev = 0.0f64;
            for i in 0..n {
                row_dev = row_dev.max(((alpha[i] + row_lse[i]).exp() - u[i]).abs());
            }
            violation = row_dev;
            if !violation.is_finite() {
                return Err((iter - 1, violation));
            }
            if violation <= cfg.tolerance {
                return Ok((materialize(&alpha, &gamma), iter - 1));
            }
        }
        for i in 0..n {
            alpha[i] = log_u[i] - row_lse[i];
        }
        for j in 0..m {
            for i in 0..n {
                scratch[i] = log_kernel[(i, j)] + alpha[i];
            }
            gamma[j] = log_v[j] - logsumexp(&scratch[..n]);
        }
    }
    // The last completed iterate has not been checked yet.
    for i in 0..n {
        for j in 0..m {
            scratch[j] = log_kernel[(i, j)] + gamma[j];
        }
        row_lse[i] = logsumexp(&scratch[..m]);
    }
    let mut row_dev = 0.0f64;
    for i in 0..n {
        row_dev = row_dev.max(((alpha[i] + row_lse[i]).exp() - u[i]).abs());
    }
    if row_dev.is_finite() {
        violation = row_dev;
        if violation <= cfg.tolerance {
            return Ok((materialize(&alpha, &gamma), cfg.max_iterations));
        }
    }
    Err((cfg.max_iterations, violation))
}

/// Entropic optimal transport by Sinkhorn scaling.
///
/// Minimizes `<T, C> + beta * sum T_ij ln T_ij` over couplings of `u` and
/// `v`. The returned plan satisfies both marginals within `cfg.tolerance`.
pub fn sinkhorn(
    cost: &CostMatrix,
    u: &MarginalDistribution,
    v: &MarginalDistribution,
    cfg: &SinkhornConfig,
) -> Result<TransportPlan> {
    sinkhorn_with_iterations(cost, u, v, cfg).map(|(plan, _)| plan)
}

pub(crate) fn sinkhorn_with_iterations(
    cost: &CostMatrix,
    u: &MarginalDistribution,
    v: &MarginalDistribution,
    cfg: &SinkhornConfig,
) -> Result<(TransportPlan, usize)> {
    cfg.validate()?;
    check_dims(cost, u, v)?;
    check_positive_marginal(u)?;
    check_positive_marginal(v)?;
    let beta = cfg.entropy_weight;
    let max_cost = cost.values().iter().copied().fold(0.0f64, f64::max);
    let scaled = if needs_log_domain(max_cost, 0.0, beta) {
        let log_kernel = cost.values().mapv(|c| -c / beta);
        scale_log(&log_kernel, u.weights(), v.weights(), cfg)
    } else {
        let kernel = cost.values().mapv(|c| (-c / beta).exp());
        scale_kernel(&kernel, u.weights(), v.weights(), cfg)
    };
    match scaled {
        Ok((values, iterations)) => {
            // Construction re-measures the sums with a different summation
            // order; the small pad absorbs that rounding difference.
            let plan =
                TransportPlan::new(values, u.clone(), v.clone(), cfg.tolerance * 1.001)?;
            Ok((plan, iterations))
        }
        Err((iterations, violation)) => Err(Error::NonConvergence {
            iterations,
            violation,
        }),
    }
}

/// Total transported cost `sum_ij T_ij * C_ij`.
pub fn transport_cost(plan: &TransportPlan, cost: &CostMatrix) -> Result<f64> {
    if plan.values().dim() != cost.values().dim() {
        return Err(Error::DimensionMismatch {
            context: "plan vs cost",
            expected: format!("{}x{}", plan.values().nrows(), plan.values().ncols()),
            got: format!("{}x{}", cost.nrows(), cost.ncols()),
        });
    }
    Ok(plan
        .values()
        .iter()
        .zip(cost.values().iter())
        .map(|(&t, &c)| t * c)
        .sum())
}

/// Structural cost linearized at `plan`:
/// `L_ij = sum_{i',j'} plan_{i'j'} * |intra_a_{ii'} - intra_b_{jj'}|`.
pub fn gw_linearized_cost(
    intra_a: &CostMatrix,
    intra_b: &CostMatrix,
    plan: &TransportPlan,
) -> Result<CostMatrix> {
    check_square(intra_a)?;
    check_square(intra_b)?;
    let n = intra_a.nrows();
    let m = intra_b.nrows();
    if plan.values().nrows() != n || plan.values().ncols() != m {
        return Err(Error::DimensionMismatch {
            context: "plan vs intra-cost matrices",
            expected: format!("{n}x{m}"),
            got: format!("{}x{}", plan.values().nrows(), plan.values().ncols()),
        });
    }
    Ok(CostMatrix {
        values: gw_linearized_raw(intra_a.values(), intra_b.values(), plan.values()),
    })
}

/// Naive four-index summation; quadratic in the number of plan entries.
pub(crate) fn gw_linearized_raw(
    intra_a: &Array2<f64>,
    intra_b: &Array2<f64>,
    plan: &Array2<f64>,
) -> Array2<f64> {
    let n = intra_a.nrows();
    let m = intra_b.nrows();
    let mut lin = Array2::<f64>::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let mut acc = 0.0;
            for ip in 0..n {
                let a = intra_a[(i, ip)];
                for jp in 0..m {
                    acc += plan[(ip, jp)] * (a - intra_b[(j, jp)]).abs();
                }
            }
            lin[(i, j)] = acc;
        }
    }
    lin
}

fn check_square(cost: &CostMatrix) -> Result<()> {
    if cost.nrows() != cost.ncols() {
        return Err(Error::NotSquare {
            rows: cost.nrows(),
            cols: cost.ncols(),
        });
    }
    Ok(())
}

pub(crate) fn check_intra(cost: &CostMatrix) -> Result<()> {
    check_square(cost)?;
    let v = cost.values();
    let mut max_dev = 0.0f64;
    for i in 0..v.nrows() {
        if v[(i, i)].abs() > 1e-12 {
            return Err(Error::NonzeroDiagonal { index: i });
        }
        for j in (i + 1)..v.ncols() {
            max_dev = max_dev.max((v[(i, j)] - v[(j, i)]).abs());
        }
    }
    if max_dev > 1e-9 {
        return Err(Error::NotSymmetric { max_deviation: max_dev });
    }
    Ok(())
}

/// Inner solver used by the alternating scheme; returns plan and the number
/// of scaling iterations spent.
pub(crate) type InnerSolver<'a> = dyn Fn(
        &CostMatrix,
        &MarginalDistribution,
        &MarginalDistribution,
        &SinkhornConfig,
    ) -> Result<(TransportPlan, usize)>
    + 'a;

#[derive(Debug, Clone)]
pub(crate) struct FusedOutcome {
    pub plan: TransportPlan,
    pub objective: f64,
    pub wd_term: f64,
    pub gw_term: f64,
    pub inner_iterations: usize,
}

/// Alternating linearization for the fused transport objective.
///
/// Starts from the product coupling, repeatedly solves the entropic problem
/// on `lambda * cross + (1 - lambda) * lin(T)`, and evaluates the fused
/// objective at the final plan.
pub(crate) fn fused_alternation(
    cross: Option<&CostMatrix>,
    intra: Option<(&CostMatrix, &CostMatrix)>,
    u: &MarginalDistribution,
    v: &MarginalDistribution,
    cfg: &GotConfig,
    solve: &InnerSolver<'_>,
) -> Result<FusedOutcome> {
    cfg.validate()?;
    let lambda = cfg.lambda_mix;
    let mut inner_iterations = 0usize;

    let plan = match intra {
        // With lambda = 1 every linearization equals the cross cost, so a
        // single solve gives the same plan bitwise.
        Some((intra_a, intra_b)) if lambda < 1.0 => {
            let mut t_values = Array2::<f64>::zeros((u.len(), v.len()));
            for ((i, j), t) in t_values.indexed_iter_mut() {
                *t = u.weights()[i] * v.weights()[j];
            }
            let mut plan_opt = None;
            for _ in 0..cfg.outer_iterations {
                let lin = gw_linearized_raw(intra_a.values(), intra_b.values(), &t_values);
                let mut total = lin;
                if lambda > 0.0 {
                    let cross = cross.ok_or(Error::EmptyInput {
                        context: "fused alternation with lambda > 0 but no cross cost",
                    })?;
                    for ((i, j), c) in total.indexed_iter_mut() {
                        *c = lambda * cross.values()[(i, j)] + (1.0 - lambda) * *c;
                    }
                }
                let linearized = CostMatrix { values: total };
                let (plan, iters) = solve(&linearized, u, v, &cfg.sinkhorn)?;
                inner_iterations += iters;
                t_values = plan.values().clone();
                plan_opt = Some(plan);
            }
            plan_opt.expect("outer_iterations >= 1")
        }
        _ => {
            let cross = cross.ok_or(Error::EmptyInput {
                context: "fused alternation without any cost term",
            })?;
            let (plan, iters) = solve(cross, u, v, &cfg.sinkhorn)?;
            inner_iterations += iters;
            plan
        }
    };

    let wd_term = match cross {
        Some(c) => transport_cost(&plan, c)?,
        None => 0.0,
    };
    let gw_term = match intra {
        Some((a, b)) => {
            let lin = gw_linearized_raw(a.values(), b.values(), plan.values());
            plan.values()
                .iter()
                .zip(lin.iter())
                .map(|(&t, &l)| t * l)
                .sum()
        }
        None => 0.0,
    };
    let objective = lambda * wd_term + (1.0 - lambda) * gw_term;
    Ok(FusedOutcome {
        plan,
        objective,
        wd_term,
        gw_term,
        inner_iterations,
    })
}

fn plain_solver(
    cost: &CostMatrix,
    u: &MarginalDistribution,
    v: &MarginalDistribution,
    cfg: &SinkhornConfig,
) -> Result<(TransportPlan, usize)> {
    sinkhorn_with_iterations(cost, u, v, cfg)
}

/// Entropic Gromov-Wasserstein distance between two weighted graphs given by
/// symmetric zero-diagonal intra-cost matrices.
///
/// Returns the coupling and the structural objective
/// `sum_{iji'j'} T_ij T_i'j' |A_ii' - B_jj'|` evaluated at it.
pub fn gromov_wasserstein(
    intra_a: &CostMatrix,
    intra_b: &CostMatrix,
    u: &MarginalDistribution,
    v: &MarginalDistribution,
    cfg: &GotConfig,
) -> Result<(TransportPlan, f64)> {
    check_intra(intra_a)?;
    check_intra(intra_b)?;
    if intra_a.nrows() != u.len() || intra_b.nrows() != v.len() {
        return Err(Error::DimensionMismatch {
            context: "intra-cost matrices vs marginals",
            expected: format!("{}x{} and {}x{}", u.len(), u.len(), v.len(), v.len()),
            got: format!(
                "{}x{} and {}x{}",
                intra_a.nrows(),
                intra_a.ncols(),
                intra_b.nrows(),
                intra_b.ncols()
            ),
        });
    }
    let mut cfg = *cfg;
    cfg.lambda_mix = 0.0;
    let out = fused_alternation(None, Some((intra_a, intra_b)), u, v, &cfg, &plain_solver)?;
    Ok((out.plan, out.objective))
}

/// Fused transport distance mixing node costs and structural costs with
/// weight `cfg.lambda_mix`.
///
/// Returns the coupling and the fused objective evaluated at it.
pub fn got_distance(
    cross_cost: &CostMatrix,
    intra_a: &CostMatrix,
    intra_b: &CostMatrix,
    u: &MarginalDistribution,
    v: &MarginalDistribution,
    cfg: &GotConfig,
) -> Result<(TransportPlan, f64)> {
    check_intra(intra_a)?;
    check_intra(intra_b)?;
    check_dims(cross_cost, u, v)?;
    if intra_a.nrows() != u.len() || intra_b.nrows() != v.len() {
        return Err(Error::DimensionMismatch {
            context: "intra-cost matrices vs marginals",
            expected: format!("{}x{} and {}x{}", u.len(), u.len(), v.len(), v.len()),
            got: format!(
                "{}x{} and {}x{}",
                intra_a.nrows(),
                intra_a.ncols(),
                intra_b.nrows(),
                intra_b.ncols()
            ),
        });
    }
    let out = fused_alternation(
        Some(cross_cost),
        Some((intra_a, intra_b)),
        u,
        v,
        cfg,
        &plain_solver,
    )?;
    Ok((out.plan, out.objective))
}

/// Lexicographic next-permutation; returns false once `p` is the last one.
fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Exact optimal transport for square costs with uniform marginals by
/// enumerating all permutation plans. Intended as a test oracle; `n <= 8`.
///
/// Ties break toward the lexicographically first permutation.
pub fn exact_ot_oracle(cost: &CostMatrix) -> Result<(TransportPlan, f64)> {
    check_square(cost)?;
    let n = cost.nrows();
    if n == 0 {
        return Err(Error::EmptyInput {
            context: "oracle cost matrix",
        });
    }
    if n > 8 {
        return Err(Error::OracleTooLarge { n });
    }
    let c = cost.values();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best_perm = perm.clone();
    let mut best_cost = f64::INFINITY;
    loop {
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| c[(i, j)]).sum();
        if total < best_cost {
            best_cost = total;
            best_perm.copy_from_slice(&perm);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let mass = 1.0 / n as f64;
    let mut values = Array2::<f64>::zeros((n, n));
    for (i, &j) in best_perm.iter().enumerate() {
        values[(i, j)] = mass;
    }
    let u = MarginalDistribution::uniform(n);
    let plan = TransportPlan::new(values, u.clone(), u, 1e-12)?;
    Ok((plan, best_cost * mass))
}

/// Log-domain scaling entry point shared with the masked solver.
pub(crate) fn scale_with_log_kernel(
    log_kernel: &Array2<f64>,
    u: &MarginalDistribution,
    v: &MarginalDistribution,
    cfg: &SinkhornConfig,
) -> std::result::Result<(Array2<f64>, usize), (usize, f64)> {
    scale_log(log_kernel, u.weights(), v.weights(), cfg)
}

/// Kernel-domain scaling entry point shared with the masked solver.
pub(crate) fn scale_with_kernel(
    kernel: &Array2<f64>,
    u: &MarginalDistribution,
    v: &MarginalDistribution,
    cfg: &SinkhornConfig,
) -> std::result::Result<(Array2<f64>, usize), (usize, f64)> {
    scale_kernel(kernel, u.weights(), v.weights(), cfg)
}

pub(crate) fn log_domain_needed(max_cost: f64, min_log_mask: f64, beta: f64) -> bool {
    needs_log_domain(max_cost, min_log_mask, beta)
}
