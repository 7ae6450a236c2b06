//! Graph-regularised self-reconstruction: learns `W` with `F W ≈ Ẽ` and `F ≈ Ẽ Wᵀ`
//! by alternating two Sylvester solves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_similarity, normalized_laplacian, Laplacian};
use crate::linalg::{
    schur_decompose, solve_sylvester, solve_sylvester_factored, solve_sylvester_zero_left, Matrix, OperatorSide,
    SchurForm,
};

pub const DEFAULT_GAMMA: f64 = 0.01;
pub const DEFAULT_MAX_ITERS: usize = 50;
pub const DEFAULT_REL_TOL: f64 = 1e-5;

/// Hyperparameters of one projection problem.
///
/// `epsilon` is the graph weight as it appears in the normalised E-step equation;
/// [`LayerParams::raw_epsilon`] gives the corresponding weight in the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayerParams {
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for LayerParams {
    fn default() -> Self {
        LayerParams {
            alpha: 0.5,
            beta: 0.5,
            epsilon: 1e-2,
            gamma: DEFAULT_GAMMA,
            max_iters: DEFAULT_MAX_ITERS,
            rel_tol: DEFAULT_REL_TOL,
        }
    }
}

impl LayerParams {
    pub fn new(alpha: f64, beta: f64, epsilon: f64) -> Self {
        LayerParams { alpha, beta, epsilon, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.alpha) {
            return Err(Error::param("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        if !open_unit(self.beta) {
            return Err(Error::param("beta", format!("must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param("epsilon", format!("must be finite and >= 0, got {}", self.epsilon)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::param("gamma", format!("must be finite and > 0, got {}", self.gamma)));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be at least 1"));
        }
        if !(self.rel_tol >= 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::param("rel_tol", format!("must be finite and >= 0, got {}", self.rel_tol)));
        }
        Ok(())
    }

    /// Weight of `‖F − Ẽ Wᵀ‖²`.
    pub fn mu(&self) -> f64 {
        self.alpha / (1.0 - self.alpha)
    }

    /// Weight of `‖Ẽ − E0‖²`.
    pub fn nu(&self) -> f64 {
        (1.0 - self.beta) / self.beta
    }

    /// Weight of `‖W‖²`.
    pub fn eta(&self) -> f64 {
        self.gamma * (1.0 + self.mu())
    }

    /// Weight of `tr(Ẽᵀ L Ẽ)` in the objective.
    pub fn raw_epsilon(&self) -> f64 {
        self.epsilon * (1.0 + self.mu()) * (1.0 + self.nu())
    }
}

/// Normalised Laplacian of the sample graph together with its Schur form,
/// factored once and shared by every E-step.
#[derive(Debug, Clone)]
pub struct GraphRegulariser {
    laplacian: Laplacian,
    schur: SchurForm,
}

impl GraphRegulariser {
    pub fn new(laplacian: Laplacian) -> Result<Self> {
        let schur = schur_decompose(laplacian.matrix())?;
        Ok(GraphRegulariser { laplacian, schur })
    }

    /// kNN cosine graph over the rows of `features`.
    pub fn from_features(features: &Matrix, k: usize) -> Result<Self> {
        GraphRegulariser::new(normalized_laplacian(&build_similarity(features, k)?)?)
    }

    pub fn n(&self) -> usize {
        self.laplacian.n()
    }

    pub fn laplacian(&self) -> &Laplacian {
        &self.laplacian
    }

    fn side(&self, scale: f64) -> OperatorSide<'_> {
        OperatorSide::new(self.laplacian.matrix(), &self.schur).scaled(scale)
    }
}

fn sq_norm(m: &Matrix) -> f64 {
    m.as_slice().iter().map(|v| v * v).sum()
}

fn check_problem(f: &Matrix, e: &Matrix, context: &'static str) -> Result<()> {
    if f.rows() != e.rows() || f.rows() == 0 {
        return Err(Error::shape(context, format!("F {:?}, E {:?}", f.shape(), e.shape())));
    }
    if !f.is_finite() || !e.is_finite() {
        return Err(Error::NonFinite(context));
    }
    Ok(())
}

/// `‖FW−Ẽ‖² + μ‖F−ẼWᵀ‖² + ε′ tr(ẼᵀLẼ) + ν‖Ẽ−E0‖² + η‖W‖²`.
///
/// The graph term is skipped when `laplacian` is `None`.
pub fn objective(
    f: &Matrix,
    w: &Matrix,
    e_tilde: &Matrix,
    e0: &Matrix,
    laplacian: Option<&Laplacian>,
    params: &LayerParams,
) -> Result<f64> {
    let (n, d_f) = f.shape();
    let d_z = e0.cols();
    if w.shape() != (d_f, d_z) || e_tilde.shape() != (n, d_z) || e0.rows() != n {
        return Err(Error::shape(
            "objective",
            format!("F {:?}, W {:?}, Ẽ {:?}, E0 {:?}", f.shape(), w.shape(), e_tilde.shape(), e0.shape()),
        ));
    }
    let mut value = sq_norm(&f.matmul(w)?.sub(e_tilde)?);
    value += params.mu() * sq_norm(&f.sub(&e_tilde.matmul_t(w)?)?);
    value += params.nu() * sq_norm(&e_tilde.sub(e0)?);
    value += params.eta() * sq_norm(w);
    if let Some(l) = laplacian {
        if l.n() != n {
            return Err(Error::shape("objective", format!("Laplacian is {0}x{0}, F has {n} rows", l.n())));
        }
        let le = l.matrix().matmul(e_tilde)?;
        let quad: f64 = le.as_slice().iter().zip(e_tilde.as_slice()).map(|(a, b)| a * b).sum();
        value += params.raw_epsilon() * quad;
    }
    Ok(value)
}

/// Minimiser in `W` for fixed `Ẽ`:
/// `[(1−α)FᵀF + γI] W + W (α ẼᵀẼ) = Fᵀ Ẽ`.
pub fn solve_w_step(f: &Matrix, e_tilde: &Matrix, alpha: f64, gamma: f64) -> Result<Matrix> {
    check_problem(f, e_tilde, "solve_w_step")?;
    let mut a = f.gram().scale(1.0 - alpha);
    a.add_diag(gamma);
    let b = e_tilde.gram().scale(alpha);
    let c = f.t_matmul(e_tilde)?;
    solve_sylvester(&a, &b, &c)
}

/// Minimiser in `Ẽ` for fixed `W`:
/// `ε L Ẽ + Ẽ [αβ WᵀW + (1−α)I] = β F W + (1−α)(1−β) E0`.
///
/// With `epsilon = 0` the graph is not needed and the left operator is dropped.
pub fn solve_e_step(
    f: &Matrix,
    w: &Matrix,
    e0: &Matrix,
    graph: Option<&GraphRegulariser>,
    alpha: f64,
    beta: f64,
    epsilon: f64,
) -> Result<Matrix> {
    check_problem(f, e0, "solve_e_step")?;
    if w.shape() != (f.cols(), e0.cols()) {
        return Err(Error::shape("solve_e_step", format!("W {:?}, F {:?}, E0 {:?}", w.shape(), f.shape(), e0.shape())));
    }
    let mut b = w.gram().scale(alpha * beta);
    b.add_diag(1.0 - alpha);
    let mut c = f.matmul(w)?.scale(beta);
    c.add_scaled((1.0 - alpha) * (1.0 - beta), e0)?;
    let sb = schur_decompose(&b)?;
    let b_side = OperatorSide::new(&b, &sb);
    if epsilon == 0.0 {
        return solve_sylvester_zero_left(b_side, &c);
    }
    let graph = graph.ok_or_else(|| Error::param("epsilon", "positive epsilon requires a sample graph"))?;
    if graph.n() != f.rows() {
        return Err(Error::shape("solve_e_step", format!("graph has {} vertices, F has {} rows", graph.n(), f.rows())));
    }
    solve_sylvester_factored(graph.side(epsilon), b_side, &c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionFit {
    pub w: Matrix,
    pub e_tilde: Matrix,
    /// Objective after each full W/E alternation.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Alternates W- and E-steps from `Ẽ = E0` until the relative objective
/// decrease drops below `rel_tol` or `max_iters` is reached.
pub fn learn_projection(
    f: &Matrix,
    e0: &Matrix,
    graph: Option<&GraphRegulariser>,
    params: &LayerParams,
) -> Result<ProjectionFit> {
    params.validate()?;
    check_problem(f, e0, "learn_projection")?;
    let graph = if params.epsilon > 0.0 {
        let g = graph.ok_or_else(|| Error::param("epsilon", "positive epsilon requires a sample graph"))?;
        if g.n() != f.rows() {
            return Err(Error::shape("learn_projection", format!("graph has {} vertices, F has {} rows", g.n(), f.rows())));
        }
        Some(g)
    } else {
        None
    };
    let laplacian = graph.map(|g| g.laplacian());

    let mut e = e0.clone();
    let mut w = Matrix::zeros(f.cols(), e0.cols());
    let mut trace = Vec::with_capacity(params.max_iters);
    let mut converged = false;
    for _ in 0..params.max_iters {
        w = solve_w_step(f, &e, params.alpha, params.gamma)?;
        e = solve_e_step(f, &w, e0, graph, params.alpha, params.beta, params.epsilon)?;
        let value = objective(f, &w, &e, e0, laplacian, params)?;
        if !value.is_finite() {
            return Err(Error::NonFinite("projection objective"));
        }
        let prev = trace.last().copied();
        trace.push(value);
        if let Some(prev) = prev {
            if prev - value <= params.rel_tol * prev.abs() {
                converged = true;
                break;
            }
        }
    }
    Ok(ProjectionFit { w, iterations: trace.len(), e_tilde: e, trace, converged })
}

/// Class-level projection: the same problem with the per-sample class semantic
/// matrix `Z_s` as the target.
pub fn learn_class_projection(
    f: &Matrix,
    z_s: &Matrix,
    graph: Option<&GraphRegulariser>,
    params: &LayerParams,
) -> Result<ProjectionFit> {
    learn_projection(f, z_s, graph, params)
}
