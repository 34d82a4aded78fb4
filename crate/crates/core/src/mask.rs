//! Learnable masked transport: a sigmoid generator scores each source patch,
//! the scores enter Sinkhorn as a reference measure on the plan, and the
//! alignment objective is evaluated at the mass-normalized masked coupling
//! so relevant patches gain weight and noisy ones lose it. Gradient descent
//! on the generator parameters minimizes that objective, with an unrolled
//! backward pass through the scaling iterations and a central-difference
//! fallback for verification.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{build_graph, cross_cost_matrix, EmbeddingSet};
use crate::ot::{
    fused_alternation, gw_linearized_raw, log_domain_needed, scale_with_kernel,
    scale_with_log_kernel, CostMatrix, GotConfig, MarginalDistribution, SinkhornConfig,
    TransportPlan,
};

/// Number of scaling iterations the unrolled gradient differentiates
/// through (capped by the configured iteration budget).
pub const UNROLL_DEPTH_CAP: usize = 50;

/// Central-difference step used by the finite-difference gradient mode.
pub const FINITE_DIFF_STEP: f64 = 1e-5;

/// Clamp bounds keeping generated mask weights strictly inside (0, 1).
const MASK_FLOOR: f64 = 1e-12;

/// Per-source-patch plan weights, strictly positive and at most 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskVector {
    weights: Vec<f64>,
}

impl MaskVector {
    /// Validates `0 < w <= 1` for every weight. The sigmoid generator never
    /// reaches the endpoints; explicit masks may use exactly 1 to mean
    /// "keep".
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyInput {
                context: "mask vector",
            });
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w <= 0.0 || w > 1.0 {
                return Err(Error::InvalidValue {
                    context: "mask vector",
                    message: format!("weight {i} is {w}, expected a value in (0, 1]"),
                });
            }
        }
        Ok(Self { weights })
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn min_index(&self) -> usize {
        let mut idx = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w < self.weights[idx] {
                idx = i;
            }
        }
        idx
    }
}

/// A single affine map plus sigmoid producing one weight per patch.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskGenerator {
    weight: Array1<f64>,
    bias: f64,
}

impl MaskGenerator {
    pub fn new(weight: Array1<f64>, bias: f64) -> Result<Self> {
        if weight.is_empty() {
            return Err(Error::EmptyInput {
                context: "mask generator weight",
            });
        }
        if !bias.is_finite() || weight.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidValue {
                context: "mask generator",
                message: "parameters must be finite".into(),
            });
        }
        Ok(Self { weight, bias })
    }

    /// Seeded initialization: weights uniform in (-0.1, 0.1), bias zero, so
    /// initial masks sit near 0.5 where the sigmoid gradient is largest.
    pub fn random(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weight = Array1::from_shape_fn(dim, |_| rng.random::<f64>() * 0.2 - 0.1);
        Self { weight, bias: 0.0 }
    }

    /// Zero weights and a fixed bias: every patch gets the same mask.
    pub fn constant(dim: usize, bias: f64) -> Self {
        Self {
            weight: Array1::zeros(dim),
            bias,
        }
    }

    pub fn weight(&self) -> &Array1<f64> {
        &self.weight
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn dim(&self) -> usize {
        self.weight.len()
    }
}

/// How the training gradient is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    /// Reverse pass through the final linearization round and its scaling
    /// iterations.
    Unrolled,
    /// Central differences over every generator parameter.
    FiniteDifference,
}

/// Gradient-descent settings for the mask generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub gradient_mode: GradientMode,
}

impl Default for MaskTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 50,
            seed: 0,
            gradient_mode: GradientMode::Unrolled,
        }
    }
}

/// Gradient of the masked objective with respect to the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskGradient {
    pub weight: Array1<f64>,
    pub bias: f64,
}

impl MaskGradient {
    pub fn norm(&self) -> f64 {
        (self.weight.iter().map(|g| g * g).sum::<f64>() + self.bias * self.bias).sqrt()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln sigmoid(z)`, stable for large negative `z`.
fn ln_sigmoid(z: f64) -> f64 {
    -softplus(-z)
}

/// Evaluates the generator on every patch: `sigmoid(w . x_i + b)`, clamped
/// strictly inside (0, 1).
pub fn compute_mask(gen: &MaskGenerator, patches: &EmbeddingSet) -> Result<MaskVector> {
    if gen.dim() != patches.dim() {
        return Err(Error::DimensionMismatch {
            context: "mask generator vs patches",
            expected: format!("{}", patches.dim()),
            got: format!("{}", gen.dim()),
        });
    }
    let z = patches.vectors().dot(&gen.weight) + gen.bias;
    let weights: Vec<f64> = z
        .iter()
        .map(|&zi| sigmoid(zi).clamp(MASK_FLOOR, 1.0 - MASK_FLOOR))
        .collect();
    MaskVector::new(weights)
}

/// Sinkhorn scaling on the mask-weighted kernel
/// `K_ij = mask_i * exp(-cost_ij / beta)`.
///
/// The mask acts as a reference measure on the plan: the output still
/// satisfies both marginals within tolerance, and any constant mask yields
/// exactly the unmasked plan.
pub fn masked_sinkhorn(
    cost: &CostMatrix,
    u: &MarginalDistribution,
    v: &MarginalDistribution,
    mask: &MaskVector,
    cfg: &SinkhornConfig,
) -> Result<TransportPlan> {
    masked_sinkhorn_with_iterations(cost, u, v, mask, cfg).map(|(plan, _)| plan)
}

pub(crate) fn masked_sinkhorn_with_iterations(
    cost: &CostMatrix,
    u: &MarginalDistribution,
    v: &MarginalDistribution,
    mask: &MaskVector,
    cfg: &SinkhornConfig,
) -> Result<(TransportPlan, usize)> {
    if cost.nrows() != u.len() || cost.ncols() != v.len() {
        return Err(Error::DimensionMismatch {
            context: "cost vs marginals",
            expected: format!("{}x{}", u.len(), v.len()),
            got: format!("{}x{}", cost.nrows(), cost.ncols()),
        });
    }
    if mask.len() != cost.nrows() {
        return Err(Error::DimensionMismatch {
            context: "mask vs cost rows",
            expected: format!("{}", cost.nrows()),
            got: format!("{}", mask.len()),
        });
    }
    for (i, &w) in mask.weights().iter().enumerate() {
        if w <= 0.0 {
            return Err(Error::ZeroMarginalEntry { index: i });
        }
    }
    let beta = cfg.entropy_weight;
    let max_cost = cost.values().iter().copied().fold(0.0f64, f64::max);
    let min_log_mask = mask
        .weights()
        .iter()
        .map(|&w| w.ln())
        .fold(f64::INFINITY, f64::min);
    let scaled = if log_domain_needed(max_cost, min_log_mask, beta) {
        let mut log_kernel = cost.values().mapv(|c| -c / beta);
        for (i, mut row) in log_kernel.outer_iter_mut().enumerate() {
            let lm = mask.weights()[i].ln();
            row.mapv_inplace(|x| x + lm);
        }
        scale_with_log_kernel(&log_kernel, u, v, cfg)
    } else {
        let mut kernel = cost.values().mapv(|c| (-c / beta).exp());
        for (i, mut row) in kernel.outer_iter_mut().enumerate() {
            let w = mask.weights()[i];
            row.mapv_inplace(|x| w * x);
        }
        scale_with_kernel(&kernel, u, v, cfg)
    };
    match scaled {
        Ok((values, iterations)) => {
            let plan =
                TransportPlan::new(values, u.clone(), v.clone(), cfg.tolerance * 1.001)?;
            Ok((plan, iterations))
        }
        Err((iterations, violation)) => Err(Error::MaskedNonConvergence {
            iterations,
            violation,
            min_mask_index: mask.min_index(),
        }),
    }
}

/// The masked coupling `S = (m o T) / <m o T, 1>` and the fused objective
/// terms evaluated at it. Constant masks cancel, recovering the plain
/// objective at `T`.
pub(crate) fn masked_coupling_objective(
    t_values: &Array2<f64>,
    mask: &[f64],
    cross: &Array2<f64>,
    intra_a: &Array2<f64>,
    intra_b: &Array2<f64>,
    lambda: f64,
) -> (f64, f64, f64) {
    let n = t_values.nrows();
    let m = t_values.ncols();
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..m {
            z += mask[i] * t_values[(i, j)];
        }
    }
    let mut s = Array2::<f64>::zeros((n, m));
    for ((i, j), out) in s.indexed_iter_mut() {
        *out = mask[i] * t_values[(i, j)] / z;
    }
    let wd: f64 = s.iter().zip(cross.iter()).map(|(&a, &b)| a * b).sum();
    let lin_s = gw_linearized_raw(intra_a, intra_b, &s);
    let gw: f64 = s.iter().zip(lin_s.iter()).map(|(&a, &b)| a * b).sum();
    (lambda * wd + (1.0 - lambda) * gw, wd, gw)
}

#[derive(Debug, Clone)]
pub(crate) struct MgotOutcome {
    pub plan: TransportPlan,
    pub mask: MaskVector,
    pub objective: f64,
    pub wd_term: f64,
    pub gw_term: f64,
    pub inner_iterations: usize,
}

pub(crate) fn mgot_outcome(
    patches: &EmbeddingSet,
    labels: &EmbeddingSet,
    gen: &MaskGenerator,
    cfg: &GotConfig,
    tau: f64,
) -> Result<MgotOutcome> {
    let mask = compute_mask(gen, patches)?;
    let u = MarginalDistribution::uniform(patches.len());
    let v = MarginalDistribution::uniform(labels.len());
    mgot_outcome_with_mask(patches, labels, mask, &u, &v, cfg, tau)
}

pub(crate) fn mgot_outcome_with_mask(
    patches: &EmbeddingSet,
    labels: &EmbeddingSet,
    mask: MaskVector,
    u: &MarginalDistribution,
    v: &MarginalDistribution,
    cfg: &GotConfig,
    tau: f64,
) -> Result<MgotOutcome> {
    if mask.len() != patches.len() {
        return Err(Error::DimensionMismatch {
            context: "mask vs patches",
            expected: format!("{}", patches.len()),
            got: format!("{}", mask.len()),
        });
    }
    let cross = cross_cost_matrix(patches, labels)?;
    let intra_a = build_graph(patches, tau)?.intra_cost();
    let intra_b = build_graph(labels, tau)?.intra_cost();
    let mask_for_solver = mask.clone();
    let solver = move |cost: &CostMatrix,
                       u: &MarginalDistribution,
                       v: &MarginalDistribution,
                       scfg: &SinkhornConfig|
          -> Result<(TransportPlan, usize)> {
        masked_sinkhorn_with_iterations(cost, u, v, &mask_for_solver, scfg)
    };
    let out = fused_alternation(
        Some(&cross),
        Some((&intra_a, &intra_b)),
        u,
        v,
        cfg,
        &solver,
    )?;
    let (objective, wd_term, gw_term) = masked_coupling_objective(
        out.plan.values(),
        mask.weights(),
        cross.values(),
        intra_a.values(),
        intra_b.values(),
        cfg.lambda_mix,
    );
    Ok(MgotOutcome {
        plan: out.plan,
        mask,
        objective,
        wd_term,
        gw_term,
        inner_iterations: out.inner_iterations,
    })
}

/// Masked graph transport end to end: generate the mask, build the graphs,
/// run the alternating scheme with the masked solver, and evaluate the fused
/// objective at the masked coupling.
///
/// Returns the (marginal-feasible) plan, the mask, and the objective.
pub fn mgot_distance(
    patches: &EmbeddingSet,
    labels: &EmbeddingSet,
    gen: &MaskGenerator,
    cfg: &GotConfig,
    tau: f64,
) -> Result<(TransportPlan, MaskVector, f64)> {
    let out = mgot_outcome(patches, labels, gen, cfg, tau)?;
    Ok((out.plan, out.mask, out.objective))
}

/// Fixed-structure forward pass used for training: the same alternation as
/// [`mgot_distance`] but with a fixed number of scaling iterations per round
/// so the computation is differentiable and finite differences see a smooth
/// function.
struct MaskPipeline {
    x: Array2<f64>,
    cross: Array2<f64>,
    intra_a: Array2<f64>,
    intra_b: Array2<f64>,
    log_u: Array1<f64>,
    log_v: Array1<f64>,
    u: Array1<f64>,
    v: Array1<f64>,
    lambda: f64,
    beta: f64,
    outer: usize,
    depth: usize,
}

struct ScalingTape {
    /// Row potentials per iteration, `alphas[t-1]` holds step `t`.
    alphas: Vec<Array1<f64>>,
    /// Column potentials, `gammas[t]` holds step `t`; `gammas[0]` is zero.
    gammas: Vec<Array1<f64>>,
    phi: Array2<f64>,
    t_final: Array2<f64>,
}

struct ForwardState {
    m: Array1<f64>,
    tape: ScalingTape,
    s: Array2<f64>,
    lin_s: Option<Array2<f64>>,
    z_mass: f64,
    objective: f64,
}

impl MaskPipeline {
    fn new(
        patches: &EmbeddingSet,
        labels: &EmbeddingSet,
        marginals: Option<(&MarginalDistribution, &MarginalDistribution)>,
        cfg: &GotConfig,
        tau: f64,
    ) -> Result<Self> {
        cfg.validate()?;
        let cross = cross_cost_matrix(patches, labels)?;
        let intra_a = build_graph(patches, tau)?.intra_cost();
        let intra_b = build_graph(labels, tau)?.intra_cost();
        let n = patches.len();
        let m = labels.len();
        let (u, v) = match marginals {
            Some((u, v)) => {
                if u.len() != n || v.len() != m {
                    return Err(Error::DimensionMismatch {
                        context: "marginals vs embeddings",
                        expected: format!("{n} and {m}"),
                        got: format!("{} and {}", u.len(), v.len()),
                    });
                }
                for (i, &w) in u.weights().iter().enumerate() {
                    if w <= 0.0 {
                        return Err(Error::ZeroMarginalEntry { index: i });
                    }
                }
                for (j, &w) in v.weights().iter().enumerate() {
                    if w <= 0.0 {
                        return Err(Error::ZeroMarginalEntry { index: j });
                    }
                }
                (u.weights().clone(), v.weights().clone())
            }
            None => (
                Array1::from_elem(n, 1.0 / n as f64),
                Array1::from_elem(m, 1.0 / m as f64),
            ),
        };
        Ok(Self {
            x: patches.vectors().clone(),
            cross: cross.values().clone(),
            intra_a: intra_a.values().clone(),
            intra_b: intra_b.values().clone(),
            log_u: u.mapv(f64::ln),
            log_v: v.mapv(f64::ln),
            u,
            v,
            lambda: cfg.lambda_mix,
            beta: cfg.sinkhorn.entropy_weight,
            outer: cfg.outer_iterations,
            depth: cfg.sinkhorn.max_iterations.min(UNROLL_DEPTH_CAP),
        })
    }

    fn n(&self) -> usize {
        self.u.len()
    }

    fn m(&self) -> usize {
        self.v.len()
    }

    fn linearized_total(&self, t_prev: &Array2<f64>) -> Array2<f64> {
        if self.lambda == 1.0 {
            return self.cross.clone();
        }
        let mut lin = gw_linearized_raw(&self.intra_a, &self.intra_b, t_prev);
        if self.lambda > 0.0 {
            for ((i, j), c) in lin.indexed_iter_mut() {
                *c = self.lambda * self.cross[(i, j)] + (1.0 - self.lambda) * *c;
            }
        }
        lin
    }

    /// Fixed-depth masked scaling in the log domain, recording every
    /// potential for the reverse pass.
    fn masked_scaling(&self, log_m: &Array1<f64>, lin_cost: &Array2<f64>) -> ScalingTape {
        let n = self.n();
        let m = self.m();
        let mut phi = Array2::<f64>::zeros((n, m));
        for ((i, j), p) in phi.indexed_iter_mut() {
            *p = log_m[i] - lin_cost[(i, j)] / self.beta;
        }
        let mut alphas = Vec::with_capacity(self.depth);
        let mut gammas = Vec::with_capacity(self.depth + 1);
        gammas.push(Array1::<f64>::zeros(m));
        let mut scratch = vec![0.0f64; n.max(m)];
        for t in 0..self.depth {
            let gamma_prev = &gammas[t];
            let mut alpha = Array1::<f64>::zeros(n);
            for i in 0..n {
                for j in 0..m {
                    scratch[j] = phi[(i, j)] + gamma_prev[j];
                }
                alpha[i] = self.log_u[i] - logsumexp(&scratch[..m]);
            }
            let mut gamma = Array1::<f64>::zeros(m);
            for j in 0..m {
                for i in 0..n {
                    scratch[i] = phi[(i, j)] + alpha[i];
                }
                gamma[j] = self.log_v[j] - logsumexp(&scratch[..n]);
            }
            alphas.push(alpha);
            gammas.push(gamma);
        }
        let alpha_last = &alphas[self.depth - 1];
        let gamma_last = &gammas[self.depth];
        let mut t_final = Array2::<f64>::zeros((n, m));
        for ((i, j), t) in t_final.indexed_iter_mut() {
            *t = (alpha_last[i] + phi[(i, j)] + gamma_last[j]).exp();
        }
        ScalingTape {
            alphas,
            gammas,
            phi,
            t_final,
        }
    }

    fn forward(&self, gen: &MaskGenerator) -> Result<ForwardState> {
        if gen.dim() != self.x.ncols() {
            return Err(Error::DimensionMismatch {
                context: "mask generator vs patches",
                expected: format!("{}", self.x.ncols()),
                got: format!("{}", gen.dim()),
            });
        }
        let z = self.x.dot(&gen.weight) + gen.bias;
        let log_m = z.mapv(ln_sigmoid);
        let m = log_m.mapv(f64::exp);

        let n = self.n();
        let mc = self.m();
        let mut t_prev = Array2::<f64>::zeros((n, mc));
        for ((i, j), t) in t_prev.indexed_iter_mut() {
            *t = self.u[i] * self.v[j];
        }
        let mut tape = None;
        for _ in 0..self.outer {
            let lin = self.linearized_total(&t_prev);
            let round = self.masked_scaling(&log_m, &lin);
            t_prev = round.t_final.clone();
            tape = Some(round);
        }
        let tape = tape.expect("outer_iterations >= 1");

        let t = &tape.t_final;
        let mut z_mass = 0.0;
        for i in 0..n {
            for j in 0..mc {
                z_mass += m[i] * t[(i, j)];
            }
        }
        let mut s = Array2::<f64>::zeros((n, mc));
        for ((i, j), out) in s.indexed_iter_mut() {
            *out = m[i] * t[(i, j)] / z_mass;
        }
        let wd: f64 = s.iter().zip(self.cross.iter()).map(|(&a, &b)| a * b).sum();
        let (lin_s, gw) = if self.lambda < 1.0 {
            let lin_s = gw_linearized_raw(&self.intra_a, &self.intra_b, &s);
            let gw: f64 = s.iter().zip(lin_s.iter()).map(|(&a, &b)| a * b).sum();
            (Some(lin_s), gw)
        } else {
            (None, 0.0)
        };
        let objective = self.lambda * wd + (1.0 - self.lambda) * gw;
        Ok(ForwardState {
            m,
            tape,
            s,
            lin_s,
            z_mass,
            objective,
        })
    }

    fn objective(&self, gen: &MaskGenerator) -> Result<f64> {
        self.forward(gen).map(|st| st.objective)
    }

    /// Reverse pass: explicit masked-coupling path plus the final scaling
    /// round, chained through the sigmoid into (weight, bias).
    fn gradient_unrolled(&self, gen: &MaskGenerator) -> Result<(f64, MaskGradient)> {
        let st = self.forward(gen)?;
        let n = self.n();
        let mc = self.m();
        let t = &st.tape.t_final;

        // dF/dS.
        let mut g = self.cross.mapv(|c| self.lambda * c);
        if let Some(lin_s) = &st.lin_s {
            for ((i, j), gv) in g.indexed_iter_mut() {
                *gv += 2.0 * (1.0 - self.lambda) * lin_s[(i, j)];
            }
        }
        let g_dot_s: f64 = g.iter().zip(st.s.iter()).map(|(&a, &b)| a * b).sum();

        // Explicit path through S = (m o T) / Z, holding T fixed.
        let mut grad_m_explicit = Array1::<f64>::zeros(n);
        for i in 0..n {
            let mut row_term = 0.0;
            let mut row_sum = 0.0;
            for j in 0..mc {
                row_term += g[(i, j)] * t[(i, j)];
                row_sum += t[(i, j)];
            }
            grad_m_explicit[i] = (row_term - g_dot_s * row_sum) / st.z_mass;
        }

        // Path through T: adjoint of the plan entries.
        let mut gt = Array2::<f64>::zeros((n, mc));
        for ((i, j), out) in gt.indexed_iter_mut() {
            *out = st.m[i] / st.z_mass * (g[(i, j)] - g_dot_s);
        }
        let phi_bar = self.scaling_backward(&st.tape, &gt);
        let mut grad_log_m = Array1::<f64>::zeros(n);
        for i in 0..n {
            for j in 0..mc {
                grad_log_m[i] += phi_bar[(i, j)];
            }
        }

        // Chain both paths through the sigmoid into parameter space.
        let mut dz = Array1::<f64>::zeros(n);
        for i in 0..n {
            let sigma = st.m[i];
            dz[i] = grad_m_explicit[i] * sigma * (1.0 - sigma) + grad_log_m[i] * (1.0 - sigma);
        }
        let grad_weight = self.x.t().dot(&dz);
        let grad_bias = dz.sum();
        if !grad_bias.is_finite() || grad_weight.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient {
                context: "unrolled mask gradient",
            });
        }
        Ok((
            st.objective,
            MaskGradient {
                weight: grad_weight,
                bias: grad_bias,
            },
        ))
    }

    /// Reverse pass through the recorded scaling iterations of the final
    /// round; returns the adjoint of the log-kernel.
    fn scaling_backward(&self, tape: &ScalingTape, gt: &Array2<f64>) -> Array2<f64> {
        let n = self.n();
        let m = self.m();
        let phi = &tape.phi;
        let mut phi_bar = Array2::<f64>::zeros((n, m));
        let mut alpha_direct = Array1::<f64>::zeros(n);
        let mut gamma_bar = Array1::<f64>::zeros(m);
        for i in 0..n {
            for j in 0..m {
                let w = gt[(i, j)] * tape.t_final[(i, j)];
                phi_bar[(i, j)] += w;
                alpha_direct[i] += w;
                gamma_bar[j] += w;
            }
        }
        for step in (0..self.depth).rev() {
            let alpha_t = &tape.alphas[step];
            let gamma_t = &tape.gammas[step + 1];
            let gamma_prev = &tape.gammas[step];

            // gamma_t = log_v - LSE_i(phi + alpha_t); softmax weights
            // reconstructed from the stored potentials.
            let mut alpha_accum = Array1::<f64>::zeros(n);
            for j in 0..m {
                let cbar = -gamma_bar[j];
                if cbar == 0.0 {
                    continue;
                }
                let c_t = self.log_v[j] - gamma_t[j];
                for i in 0..n {
                    let w = (phi[(i, j)] + alpha_t[i] - c_t).exp();
                    phi_bar[(i, j)] += cbar * w;
                    alpha_accum[i] += cbar * w;
                }
            }
            let mut alpha_total = alpha_accum;
            if step == self.depth - 1 {
                alpha_total += &alpha_direct;
            }

            // alpha_t = log_u - LSE_j(phi + gamma_prev).
            let mut gamma_accum = Array1::<f64>::zeros(m);
            for i in 0..n {
                let rbar = -alpha_total[i];
                if rbar == 0.0 {
                    continue;
                }
                let r_t = self.log_u[i] - alpha_t[i];
                for j in 0..m {
                    let w = (phi[(i, j)] + gamma_prev[j] - r_t).exp();
                    phi_bar[(i, j)] += rbar * w;
                    gamma_accum[j] += rbar * w;
                }
            }
            gamma_bar = gamma_accum;
        }
        phi_bar
    }

    fn gradient_finite_difference(&self, gen: &MaskGenerator) -> Result<(f64, MaskGradient)> {
        let objective = self.objective(gen)?;
        let h = FINITE_DIFF_STEP;
        let dim = gen.dim();
        let mut grad_weight = Array1::<f64>::zeros(dim);
        for k in 0..dim {
            let mut plus = gen.clone();
            plus.weight[k] += h;
            let mut minus = gen.clone();
            minus.weight[k] -= h;
            grad_weight[k] = (self.objective(&plus)? - self.objective(&minus)?) / (2.0 * h);
        }
        let mut plus = gen.clone();
        plus.bias += h;
        let mut minus = gen.clone();
        minus.bias -= h;
        let grad_bias = (self.objective(&plus)? - self.objective(&minus)?) / (2.0 * h);
        if !grad_bias.is_finite() || grad_weight.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient {
                context: "finite-difference mask gradient",
            });
        }
        Ok((
            objective,
            MaskGradient {
                weight: grad_weight,
                bias: grad_bias,
            },
        ))
    }

    fn gradient(&self, gen: &MaskGenerator, mode: GradientMode) -> Result<(f64, MaskGradient)> {
        match mode {
            GradientMode::Unrolled => self.gradient_unrolled(gen),
            GradientMode::FiniteDifference => self.gradient_finite_difference(gen),
        }
    }
}

fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// The fixed-depth training objective at the current generator. This is the
/// quantity [`train_mask`] descends and records in its trace.
pub fn mask_training_objective(
    gen: &MaskGenerator,
    patches: &EmbeddingSet,
    labels: &EmbeddingSet,
    cfg: &GotConfig,
    tau: f64,
) -> Result<f64> {
    MaskPipeline::new(patches, labels, None, cfg, tau)?.objective(gen)
}

/// Gradient of the masked objective with respect to the generator
/// parameters, by the requested mode.
pub fn mask_loss_gradient(
    gen: &MaskGenerator,
    patches: &EmbeddingSet,
    labels: &EmbeddingSet,
    cfg: &GotConfig,
    tau: f64,
    mode: GradientMode,
) -> Result<MaskGradient> {
    let pipeline = MaskPipeline::new(patches, labels, None, cfg, tau)?;
    pipeline.gradient(gen, mode).map(|(_, grad)| grad)
}

/// Plain gradient descent on the generator parameters.
///
/// Returns the trained generator and the per-epoch objective trace (the
/// value before each step). Deterministic for fixed inputs.
pub fn train_mask(
    gen: &MaskGenerator,
    patches: &EmbeddingSet,
    labels: &EmbeddingSet,
    cfg: &GotConfig,
    tau: f64,
    tcfg: &MaskTrainConfig,
) -> Result<(MaskGenerator, Vec<f64>)> {
    train_mask_with_marginals(gen, patches, labels, None, cfg, tau, tcfg)
}

pub(crate) fn train_mask_with_marginals(
    gen: &MaskGenerator,
    patches: &EmbeddingSet,
    labels: &EmbeddingSet,
    marginals: Option<(&MarginalDistribution, &MarginalDistribution)>,
    cfg: &GotConfig,
    tau: f64,
    tcfg: &MaskTrainConfig,
) -> Result<(MaskGenerator, Vec<f64>)> {
    if !(tcfg.learning_rate.is_finite() && tcfg.learning_rate >= 0.0) {
        return Err(Error::InvalidValue {
            context: "mask training config",
            message: format!("learning_rate must be nonnegative, got {}", tcfg.learning_rate),
        });
    }
    let pipeline = MaskPipeline::new(patches, labels, marginals, cfg, tau)?;
    let mut current = gen.clone();
    let mut trace = Vec::with_capacity(tcfg.epochs);
    for epoch in 0..tcfg.epochs {
        let (objective, grad) = pipeline.gradient(&current, tcfg.gradient_mode)?;
        if !objective.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        trace.push(objective);
        current.weight = &current.weight - &(grad.weight.mapv(|g| tcfg.learning_rate * g));
        current.bias -= tcfg.learning_rate * grad.bias;
        if !current.bias.is_finite() || current.weight.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
    }
    Ok((current, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::embedding_set_from_rows;
    use crate::ot::{got_distance, sinkhorn};
    use ndarray::array;
    use rand_chacha::ChaCha8Rng;

    fn set(prefix: &str, rows: Vec<Vec<f64>>) -> EmbeddingSet {
        let ids = (0..rows.len()).map(|i| format!("{prefix}{i}")).collect();
        embedding_set_from_rows(ids, rows).unwrap()
    }

    fn random_set(prefix: &str, rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmbeddingSet {
        let rows = (0..n)
            .map(|_| (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0 + 0.05).collect())
            .collect();
        set(prefix, rows)
    }

    #[test]
    fn zero_generator_gives_half_masks() {
        let patches = set("p", vec![vec![1.0, 2.0], vec![-3.0, 0.5]]);
        let gen = MaskGenerator::constant(2, 0.0);
        let mask = compute_mask(&gen, &patches).unwrap();
        for &w in mask.weights() {
            assert_eq!(w, 0.5);
        }
    }

    #[test]
    fn saturated_bias_gives_masks_near_one() {
        let patches = set("p", vec![vec![1.0, 2.0], vec![-3.0, 0.5]]);
        let gen = MaskGenerator::constant(2, 20.0);
        let mask = compute_mask(&gen, &patches).unwrap();
        for &w in mask.weights() {
            assert!((1.0 - w).abs() <= 1e-8);
            assert!(w < 1.0);
        }
    }

    #[test]
    fn mask_evaluates_sigmoid_of_projection() {
        let patches = set("p", vec![vec![2.0, 5.0]]);
        let gen = MaskGenerator::new(array![1.0, 0.0], 0.0).unwrap();
        let mask = compute_mask(&gen, &patches).unwrap();
        assert!((mask.weights()[0] - 0.8807970779778823).abs() <= 1e-12);
    }

    #[test]
    fn mask_vector_rejects_out_of_range() {
        assert!(MaskVector::new(vec![0.0, 0.5]).is_err());
        assert!(MaskVector::new(vec![1.5]).is_err());
        assert!(MaskVector::new(vec![0.5, 1.0]).is_ok());
    }

    fn random_cost(rng: &mut ChaCha8Rng, n: usize, m: usize) -> CostMatrix {
        CostMatrix::new(Array2::from_shape_fn((n, m), |_| rng.random::<f64>())).unwrap()
    }

    #[test]
    fn unit_mask_reproduces_sinkhorn_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let c = random_cost(&mut rng, 4, 5);
        let u = MarginalDistribution::uniform(4);
        let v = MarginalDistribution::uniform(5);
        let cfg = SinkhornConfig::default();
        let plain = sinkhorn(&c, &u, &v, &cfg).unwrap();
        let masked = masked_sinkhorn(&c, &u, &v, &MaskVector::constant(4, 1.0).unwrap(), &cfg)
            .unwrap();
        assert_eq!(plain.values(), masked.values());
    }

    #[test]
    fn constant_masks_reproduce_sinkhorn() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let c = random_cost(&mut rng, 3, 3);
        let u = MarginalDistribution::uniform(3);
        let cfg = SinkhornConfig::default();
        let plain = sinkhorn(&c, &u, &u, &cfg).unwrap();
        for value in [0.5, 0.1] {
            let masked =
                masked_sinkhorn(&c, &u, &u, &MaskVector::constant(3, value).unwrap(), &cfg)
                    .unwrap();
            for (a, b) in plain.values().iter().zip(masked.values().iter()) {
                assert!((a - b).abs() <= 1e-9, "mask {value}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn masked_plan_agrees_with_grid_search_oracle() {
        // 2x2 zero cost, uniform marginals: couplings form the one-parameter
        // family [[t, .5-t], [.5-t, t]]. Minimize the masked entropic
        // objective <T,C> - beta sum T log m_i + beta sum T log T by dense
        // grid search and compare.
        let c = CostMatrix::new(Array2::zeros((2, 2))).unwrap();
        let u = MarginalDistribution::uniform(2);
        let mask = MaskVector::new(vec![0.9, 0.1]).unwrap();
        let cfg = SinkhornConfig {
            entropy_weight: 0.1,
            max_iterations: 10_000,
            tolerance: 1e-12,
        };
        let plan = masked_sinkhorn(&c, &u, &u, &mask, &cfg).unwrap();
        assert!((plan.values().row(0).sum() - 0.5).abs() <= 1e-9);
        assert!((plan.values().row(1).sum() - 0.5).abs() <= 1e-9);

        let objective = |t: f64| -> f64 {
            let entries = [(t, 0usize), (0.5 - t, 0), (0.5 - t, 1), (t, 1)];
            let mut total = 0.0;
            for &(mass, row) in &entries {
                if mass > 0.0 {
                    total += -0.1 * mass * mask.weights()[row].ln() + 0.1 * mass * mass.ln();
                }
            }
            total
        };
        let mut best_t = 0.0;
        let mut best = f64::INFINITY;
        let steps = 50_000;
        for k in 0..=steps {
            let t = 0.5 * k as f64 / steps as f64;
            let value = objective(t);
            if value < best {
                best = value;
                best_t = t;
            }
        }
        assert!((plan.values()[(0, 0)] - best_t).abs() <= 1e-4);
    }

    #[test]
    fn masked_sinkhorn_signals_offending_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let c = random_cost(&mut rng, 3, 3);
        let u = MarginalDistribution::uniform(3);
        let mask = MaskVector::new(vec![0.9, 1e-9, 0.8]).unwrap();
        let cfg = SinkhornConfig {
            entropy_weight: 0.1,
            max_iterations: 1,
            tolerance: 1e-14,
        };
        match masked_sinkhorn(&c, &u, &u, &mask, &cfg) {
            Err(Error::MaskedNonConvergence { min_mask_index, .. }) => {
                assert_eq!(min_mask_index, 1);
            }
            other => panic!("expected MaskedNonConvergence, got {other:?}"),
        }
    }

    fn default_got() -> GotConfig {
        GotConfig {
            sinkhorn: SinkhornConfig {
                max_iterations: 200_000,
                ..SinkhornConfig::default()
            },
            ..GotConfig::default()
        }
    }

    #[test]
    fn near_unit_mask_matches_unmasked_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let patches = random_set("p", &mut rng, 5, 3);
        let labels = random_set("l", &mut rng, 3, 3);
        let gen = MaskGenerator::constant(3, 20.0);
        let cfg = default_got();
        let tau = 0.1;
        let (_, _, masked_value) = mgot_distance(&patches, &labels, &gen, &cfg, tau).unwrap();
        let cross = cross_cost_matrix(&patches, &labels).unwrap();
        let a = build_graph(&patches, tau).unwrap().intra_cost();
        let b = build_graph(&labels, tau).unwrap().intra_cost();
        let u = MarginalDistribution::uniform(5);
        let v = MarginalDistribution::uniform(3);
        let (_, plain_value) = got_distance(&cross, &a, &b, &u, &v, &cfg).unwrap();
        assert!(
            (masked_value - plain_value).abs() <= 1e-6,
            "{masked_value} vs {plain_value}"
        );
    }

    #[test]
    fn single_pair_value_is_lambda_times_cost() {
        let patches = set("p", vec![vec![1.0, 0.2]]);
        let labels = set("l", vec![vec![0.4, 1.0]]);
        let gen = MaskGenerator::random(2, 5);
        let cfg = default_got();
        let (plan, _, value) = mgot_distance(&patches, &labels, &gen, &cfg, 0.1).unwrap();
        assert!((plan.values()[(0, 0)] - 1.0).abs() <= 1e-9);
        let cross = cross_cost_matrix(&patches, &labels).unwrap();
        let expected = cfg.lambda_mix * cross.values()[(0, 0)];
        assert!((value - expected).abs() <= 1e-12, "{value} vs {expected}");
    }

    /// Patches 0..3 copy the labels (signal); patches 4..7 live in an
    /// orthogonal coordinate block (noise).
    fn orthogonal_noise_instance() -> (EmbeddingSet, EmbeddingSet) {
        let labels = set(
            "l",
            vec![
                vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            ],
        );
        let patches = set(
            "p",
            vec![
                vec![1.0, 0.1, 0.0, 0.0, 0.0, 0.0],
                vec![0.9, 0.0, 0.1, 0.0, 0.0, 0.0],
                vec![0.1, 1.0, 0.0, 0.0, 0.0, 0.0],
                vec![0.0, 0.9, 0.1, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0, 0.3, 0.0],
                vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.2],
                vec![0.0, 0.0, 0.0, 0.3, 0.0, 1.0],
                vec![0.0, 0.0, 0.0, 0.5, 0.5, 0.5],
            ],
        );
        (patches, labels)
    }

    #[test]
    fn training_beats_the_unmasked_objective_on_noisy_data() {
        let (patches, labels) = orthogonal_noise_instance();
        let cfg = default_got();
        let tau = 0.1;
        let init = MaskGenerator::random(6, 11);
        let tcfg = MaskTrainConfig {
            learning_rate: 0.5,
            epochs: 40,
            seed: 11,
            gradient_mode: GradientMode::Unrolled,
        };
        let (trained, trace) = train_mask(&init, &patches, &labels, &cfg, tau, &tcfg).unwrap();
        assert_eq!(trace.len(), 40);
        assert!(trace.iter().all(|v| v.is_finite()));

        let ones = MaskGenerator::constant(6, 20.0);
        let (_, _, baseline) = mgot_distance(&patches, &labels, &ones, &cfg, tau).unwrap();
        let (_, trained_mask, trained_value) =
            mgot_distance(&patches, &labels, &trained, &cfg, tau).unwrap();
        assert!(
            trained_value < baseline,
            "trained {trained_value} vs unmasked {baseline}"
        );

        let weights = trained_mask.weights();
        let signal_mean: f64 = weights[..4].iter().sum::<f64>() / 4.0;
        let noise_mean: f64 = weights[4..].iter().sum::<f64>() / 4.0;
        assert!(
            noise_mean < signal_mean,
            "noise {noise_mean} vs signal {signal_mean}"
        );
    }

    #[test]
    fn gradient_is_flat_on_fully_symmetric_instance() {
        // Identical patch and label directions: zero cross cost and a
        // structurally homogeneous graph pair.
        let rows: Vec<Vec<f64>> = (0..3).map(|_| vec![1.0, 1.0]).collect();
        let patches = set("p", rows.clone());
        let labels = set("l", rows);
        let gen = MaskGenerator::random(2, 3);
        let grad = mask_loss_gradient(
            &gen,
            &patches,
            &labels,
            &default_got(),
            0.1,
            GradientMode::Unrolled,
        )
        .unwrap();
        assert!(grad.norm() <= 1e-6, "norm {}", grad.norm());
    }

    #[test]
    fn unrolled_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for case in 0..3 {
            let d = 2 + case;
            let patches = random_set("p", &mut rng, 5, d);
            let labels = random_set("l", &mut rng, 3, d);
            let gen = MaskGenerator::random(d, 100 + case as u64);
            let cfg = default_got();
            let unrolled =
                mask_loss_gradient(&gen, &patches, &labels, &cfg, 0.1, GradientMode::Unrolled)
                    .unwrap();
            let fd = mask_loss_gradient(
                &gen,
                &patches,
                &labels,
                &cfg,
                0.1,
                GradientMode::FiniteDifference,
            )
            .unwrap();
            let mut diff_sq = (unrolled.bias - fd.bias).powi(2);
            for (a, b) in unrolled.weight.iter().zip(fd.weight.iter()) {
                diff_sq += (a - b).powi(2);
            }
            let rel = diff_sq.sqrt() / unrolled.norm().max(fd.norm()).max(1e-12);
            assert!(rel <= 1e-3, "case {case}: relative error {rel}");
        }
    }

    #[test]
    fn saturated_generator_has_vanishing_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let patches = random_set("p", &mut rng, 4, 3);
        let labels = random_set("l", &mut rng, 2, 3);
        let gen = MaskGenerator::constant(3, 20.0);
        let grad = mask_loss_gradient(
            &gen,
            &patches,
            &labels,
            &default_got(),
            0.1,
            GradientMode::Unrolled,
        )
        .unwrap();
        assert!(grad.norm() <= 1e-6, "norm {}", grad.norm());
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let patches = random_set("p", &mut rng, 4, 3);
        let labels = random_set("l", &mut rng, 2, 3);
        let gen = MaskGenerator::random(3, 1);
        let tcfg = MaskTrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            seed: 1,
            gradient_mode: GradientMode::Unrolled,
        };
        let (trained, trace) =
            train_mask(&gen, &patches, &labels, &default_got(), 0.1, &tcfg).unwrap();
        assert_eq!(trained.weight(), gen.weight());
        assert_eq!(trained.bias(), gen.bias());
        assert_eq!(trace.len(), 3);
        assert_eq!(trace[0], trace[1]);
        assert_eq!(trace[1], trace[2]);
    }

    #[test]
    fn one_epoch_equals_one_explicit_gradient_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let patches = random_set("p", &mut rng, 4, 3);
        let labels = random_set("l", &mut rng, 2, 3);
        let gen = MaskGenerator::random(3, 2);
        let cfg = default_got();
        let tcfg = MaskTrainConfig {
            learning_rate: 0.3,
            epochs: 1,
            seed: 2,
            gradient_mode: GradientMode::Unrolled,
        };
        let (trained, _) = train_mask(&gen, &patches, &labels, &cfg, 0.1, &tcfg).unwrap();
        let grad =
            mask_loss_gradient(&gen, &patches, &labels, &cfg, 0.1, GradientMode::Unrolled)
                .unwrap();
        let expected_bias = gen.bias() - 0.3 * grad.bias;
        assert_eq!(trained.bias(), expected_bias);
        for ((t, g), d) in trained
            .weight()
            .iter()
            .zip(gen.weight().iter())
            .zip(grad.weight.iter())
        {
            assert_eq!(*t, g - 0.3 * d);
        }
    }

    #[test]
    fn masked_plans_remain_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        for _ in 0..5 {
            let n = rng.random_range(2..6);
            let m = rng.random_range(2..6);
            let c = random_cost(&mut rng, n, m);
            let u = MarginalDistribution::uniform(n);
            let v = MarginalDistribution::uniform(m);
            let mask = MaskVector::new(
                (0..n).map(|_| rng.random::<f64>() * 0.98 + 0.01).collect(),
            )
            .unwrap();
            let cfg = SinkhornConfig {
                entropy_weight: 0.1,
                max_iterations: 50_000,
                tolerance: 1e-9,
            };
            let plan = masked_sinkhorn(&c, &u, &v, &mask, &cfg).unwrap();
            assert!(plan.marginal_violation() <= 1e-9);
        }
    }

    #[test]
    fn trained_masks_stay_in_open_interval() {
        let (patches, labels) = orthogonal_noise_instance();
        let init = MaskGenerator::random(6, 5);
        let tcfg = MaskTrainConfig {
            learning_rate: 1.0,
            epochs: 10,
            seed: 5,
            gradient_mode: GradientMode::Unrolled,
        };
        let (trained, _) =
            train_mask(&init, &patches, &labels, &default_got(), 0.1, &tcfg).unwrap();
        let mask = compute_mask(&trained, &patches).unwrap();
        for &w in mask.weights() {
            assert!(w > 0.0 && w < 1.0);
        }
    }
}
