//! Energy minimization for the Dirichlet problem
//! `-div(|∇w|^{p-2}∇w + Σ μ_j|∇w|^{q_j-2}∇w) = f`, `w = φ` on the boundary.
//!
//! The unknown is the zero-trace correction `u` with `w = φ − u`, and the
//! discrete energy is
//!
//! ```text
//! I(u) = ϱ(φ − u) + ⟨f, u⟩
//! ```
//!
//! with `ϱ` the gradient modular. Its stationarity condition in direction of
//! the nodal basis function `h_i` is exactly the weak form
//! `∫ flux(∇w)·∇h_i = ⟨f, h_i⟩`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::convexity::{self, monotonicity_terms, ConvexityReport};
use crate::linalg::BandMatrix;
use crate::mesh::{
    cell_gradient, cell_means, gradient_of_values, pairwise_sum, random_zero_trace, Grid, MeshError, ScalarField,
};
use crate::modular::{self, ModularError, ModularKind};
use crate::phase::PhaseStructure;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Modular(#[from] ModularError),
    #[error("field must vanish on the boundary (node {node} has value {value})")]
    TraceViolation { node: usize, value: f64 },
    #[error("field must equal φ on the boundary (node {node}: {value} vs {expected})")]
    TraceMismatch { node: usize, value: f64, expected: f64 },
    #[error("phase structure and data live on different grids")]
    GridMismatch,
    #[error("dual bound must be finite and nonnegative, got {0}")]
    DualBound(f64),
    #[error("exponent lower bound m = {0} must exceed 1")]
    ExponentTooSmall(f64),
    #[error("invalid solver option: {0}")]
    Options(String),
    #[error("energy became non-finite at iteration {iteration}")]
    NonFiniteEnergy { iteration: usize },
}

#[derive(Debug, Clone)]
pub struct Problem {
    phase: Arc<PhaseStructure>,
    phi: ScalarField,
    f: ScalarField,
    dual_bound: Option<f64>,
    interior: Vec<usize>,
    // node -> interior index
    slot: Vec<Option<usize>>,
    bandwidth: usize,
}

impl Problem {
    pub fn new(
        phase: Arc<PhaseStructure>,
        phi: ScalarField,
        f: ScalarField,
        dual_bound: Option<f64>,
    ) -> Result<Self, SolverError> {
        let grid = phase.grid();
        if phi.grid().as_ref() != grid.as_ref() || f.grid().as_ref() != grid.as_ref() {
            return Err(SolverError::GridMismatch);
        }
        if !(phase.summary().m > 1.0) {
            return Err(SolverError::ExponentTooSmall(phase.summary().m));
        }
        if let Some(a) = dual_bound {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(SolverError::DualBound(a));
            }
        }
        let interior = grid.boundary_mask().interior();
        let mut slot = vec![None; grid.node_count()];
        for (k, &n) in interior.iter().enumerate() {
            slot[n] = Some(k);
        }
        let mut bandwidth = 0;
        for c in 0..grid.cell_count() {
            let ks: Vec<usize> = grid.cell_nodes(c).iter().filter_map(|&n| slot[n]).collect();
            if let (Some(lo), Some(hi)) = (ks.iter().min(), ks.iter().max()) {
                bandwidth = bandwidth.max(hi - lo);
            }
        }
        Ok(Problem { phase, phi, f, dual_bound, interior, slot, bandwidth })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.phase.grid()
    }

    pub fn phase(&self) -> &PhaseStructure {
        &self.phase
    }

    pub fn phi(&self) -> &ScalarField {
        &self.phi
    }

    pub fn f(&self) -> &ScalarField {
        &self.f
    }

    pub fn dual_bound(&self) -> Option<f64> {
        self.dual_bound
    }

    pub fn with_dual_bound(mut self, a: Option<f64>) -> Result<Self, SolverError> {
        if let Some(a) = a {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(SolverError::DualBound(a));
            }
        }
        self.dual_bound = a;
        Ok(self)
    }

    fn check_zero_trace(&self, u: &ScalarField) -> Result<(), SolverError> {
        self.check_grid(u)?;
        for (n, s) in self.slot.iter().enumerate() {
            if s.is_none() && u.values()[n] != 0.0 {
                return Err(SolverError::TraceViolation { node: n, value: u.values()[n] });
            }
        }
        Ok(())
    }

    fn check_phi_trace(&self, w: &ScalarField) -> Result<(), SolverError> {
        self.check_grid(w)?;
        for (n, s) in self.slot.iter().enumerate() {
            let (value, expected) = (w.values()[n], self.phi.values()[n]);
            if s.is_none() && value != expected {
                return Err(SolverError::TraceMismatch { node: n, value, expected });
            }
        }
        Ok(())
    }

    fn check_grid(&self, u: &ScalarField) -> Result<(), SolverError> {
        if u.grid().as_ref() == self.grid().as_ref() {
            Ok(())
        } else {
            Err(SolverError::GridMismatch)
        }
    }

    fn w_of(&self, u: &[f64]) -> Vec<f64> {
        self.phi.values().iter().zip(u).map(|(p, u)| p - u).collect()
    }

    fn energy_values(&self, u: &[f64]) -> f64 {
        let grid = self.grid();
        let w = self.w_of(u);
        let vol = grid.cell_volume();
        let fbar = cell_means(grid, self.f.values());
        let ubar = cell_means(grid, u);
        let terms: Vec<f64> = (0..grid.cell_count())
            .map(|c| {
                let g = cell_gradient(grid, &w, c);
                vol * (self.phase.h(c, g[0].hypot(g[1])) + fbar[c] * ubar[c])
            })
            .collect();
        pairwise_sum(&terms)
    }

    /// `R_i = ∫ flux(∇w)·∇h_i − ⟨f, h_i⟩` for every node; boundary entries 0.
    fn residual_of_w(&self, w: &[f64]) -> Vec<f64> {
        let grid = self.grid();
        let vol = grid.cell_volume();
        let weights = grid.gradient_weights();
        let fbar = cell_means(grid, self.f.values());
        let share = 1.0 / grid.corners_per_cell() as f64;
        let mut r = vec![0.0; grid.node_count()];
        for c in 0..grid.cell_count() {
            let g = cell_gradient(grid, w, c);
            let coef = self.phase.flux_coefficient(c, g[0].hypot(g[1]));
            let flux = [coef * g[0], coef * g[1]];
            for (k, &n) in grid.cell_nodes(c).iter().enumerate() {
                r[n] += vol * (flux[0] * weights[k][0] + flux[1] * weights[k][1]) - vol * fbar[c] * share;
            }
        }
        for (n, s) in self.slot.iter().enumerate() {
            if s.is_none() {
                r[n] = 0.0;
            }
        }
        r
    }

    /// Curvature of the energy in the interior unknowns, with `|∇w|` floored
    /// at `floor` so degenerate cells stay positive definite.
    fn curvature(&self, w: &[f64], floor: f64) -> BandMatrix {
        let grid = self.grid();
        let vol = grid.cell_volume();
        let weights = grid.gradient_weights();
        let mut m = BandMatrix::zeros(self.interior.len(), self.bandwidth);
        for c in 0..grid.cell_count() {
            let g = cell_gradient(grid, w, c);
            let t = g[0].hypot(g[1]);
            let te = t.max(floor);
            let dir = if t > 0.0 { [g[0] / t, g[1] / t] } else { [0.0, 0.0] };
            // K = Σ c·te^{r−2}(I + (r−2)₊ ĝĝᵀ): the exact Hessian for r ≥ 2; for
            // r < 2 the radial curvature is raised to the tangential one, which
            // stops the overshoot across ∇w = 0.
            let (mut iso, mut aniso) = (0.0, 0.0);
            for (w8, r) in self.phase.terms(c) {
                let s = w8 * te.powf(r - 2.0);
                iso += s;
                aniso += s * (r - 2.0).max(0.0);
            }
            let k = [
                [iso + aniso * dir[0] * dir[0], aniso * dir[0] * dir[1]],
                [aniso * dir[0] * dir[1], iso + aniso * dir[1] * dir[1]],
            ];
            let nodes = grid.cell_nodes(c);
            for (a, &na) in nodes.iter().enumerate() {
                let Some(ia) = self.slot[na] else { continue };
                let kw = [
                    k[0][0] * weights[a][0] + k[0][1] * weights[a][1],
                    k[1][0] * weights[a][0] + k[1][1] * weights[a][1],
                ];
                for (b, &nb) in nodes.iter().enumerate() {
                    let Some(ib) = self.slot[nb] else { continue };
                    if ib > ia {
                        continue;
                    }
                    m.add(ia, ib, vol * (weights[b][0] * kw[0] + weights[b][1] * kw[1]));
                }
            }
        }
        m
    }
}

/// `I(u) = ϱ(φ − u) + ⟨f, u⟩` for zero-trace `u`.
pub fn energy(u: &ScalarField, prob: &Problem) -> Result<f64, SolverError> {
    prob.check_zero_trace(u)?;
    Ok(prob.energy_values(u.values()))
}

/// Exact gradient of the discrete energy with respect to the nodal values,
/// zero on boundary nodes.
pub fn energy_gradient(u: &ScalarField, prob: &Problem) -> Result<Vec<f64>, SolverError> {
    prob.check_zero_trace(u)?;
    Ok(neg(prob.residual_of_w(&prob.w_of(u.values()))))
}

fn neg(mut v: Vec<f64>) -> Vec<f64> {
    for x in &mut v {
        *x = -*x;
    }
    v
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `max_i |∫ flux(∇w)·∇h_i − ⟨f, h_i⟩|` over interior nodal basis functions.
pub fn weak_residual(w: &ScalarField, prob: &Problem) -> Result<f64, SolverError> {
    prob.check_phi_trace(w)?;
    Ok(max_abs(&prob.residual_of_w(w.values())))
}

/// `−a(a/m)^{1/(m−1)} − a(1 + ‖|∇φ|‖_H)`, a lower bound for the energy when
/// `a` bounds the dual norm of `f`.
pub fn lower_bound(a: f64, m: f64, grad_phi_norm: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    convexity::scalar_lower_bound(a, m) - a * (1.0 + grad_phi_norm)
}

/// [`lower_bound`] with `‖|∇φ|‖_H` taken from the problem.
pub fn energy_lower_bound(prob: &Problem, a: f64) -> Result<f64, SolverError> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(SolverError::DualBound(a));
    }
    let grad_phi = modular::luxemburg_norm(prob.phi(), prob.phase(), ModularKind::Gradient)?;
    Ok(lower_bound(a, prob.phase().summary().m, grad_phi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Descent along the curvature-preconditioned gradient.
    Preconditioned,
    /// Plain steepest descent.
    Steepest,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    Zero,
    Field(ScalarField),
    /// Uniform interior noise of the given amplitude, drawn from the options seed.
    Random {
        amplitude: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// `None` picks `1e-8·(1 + |I(u₀)|)/|Ω|`.
    pub gradient_tolerance: Option<f64>,
    pub energy_tolerance: f64,
    pub armijo: f64,
    pub shrink: f64,
    pub initial_step: f64,
    pub step_floor: f64,
    pub method: Method,
    pub initial_guess: InitialGuess,
    pub seed: u64,
    /// Re-solve from a seeded random start and certify agreement.
    pub two_start: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 50_000,
            gradient_tolerance: None,
            energy_tolerance: 1e-14,
            armijo: 1e-4,
            shrink: 0.5,
            initial_step: 1.0,
            step_floor: 1e-16,
            method: Method::Preconditioned,
            initial_guess: InitialGuess::Zero,
            seed: 0,
            two_start: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::Options(m.into()));
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        if let Some(t) = self.gradient_tolerance {
            if !(t > 0.0 && t.is_finite()) {
                return bad("gradient_tolerance must be positive");
            }
        }
        if !(self.energy_tolerance > 0.0 && self.energy_tolerance.is_finite()) {
            return bad("energy_tolerance must be positive");
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad("armijo constant must lie in (0, 1)");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink factor must lie in (0, 1)");
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return bad("initial_step must be positive");
        }
        if !(self.step_floor > 0.0 && self.step_floor <= self.initial_step) {
            return bad("step_floor must lie in (0, initial_step]");
        }
        if let InitialGuess::Random { amplitude } = self.initial_guess {
            if !(amplitude >= 0.0 && amplitude.is_finite()) {
                return bad("random initial amplitude must be finite and nonnegative");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    EnergyStagnation,
    MaxIterations,
    /// The step shrank below the floor without satisfying the Armijo condition.
    LineSearchFailure,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(self, Termination::GradientTolerance | Termination::EnergyStagnation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessCertificate {
    /// Sum over cells and phases of the monotonicity lower bounds.
    pub certificate: f64,
    /// `Σ ∫ (flux(∇v) − flux(∇w))·∇(v − w)`
    pub pairing: f64,
    pub pairing_dominates: bool,
    pub gradients_equal: bool,
    pub max_gradient_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoStartReport {
    pub iterations: usize,
    pub termination: Termination,
    /// `ϱ((u₁ − u₂)/2)`, gradient modular.
    pub modular_distance: f64,
    pub certificate: UniquenessCertificate,
    pub convexity: ConvexityReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub u_star: ScalarField,
    pub w_star: ScalarField,
    pub energy_history: Vec<f64>,
    pub gradient_norm: f64,
    pub gradient_tolerance: f64,
    pub weak_residual: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub lower_bound: Option<f64>,
    pub two_start: Option<TwoStartReport>,
}

impl Solution {
    pub fn converged(&self) -> bool {
        self.termination.converged()
    }
}

fn initial_field(prob: &Problem, opts: &SolverOptions) -> Result<ScalarField, SolverError> {
    let grid = prob.grid();
    match &opts.initial_guess {
        InitialGuess::Zero => Ok(ScalarField::zeros(grid.clone())),
        InitialGuess::Field(u) => {
            prob.check_zero_trace(u)?;
            Ok(u.clone())
        }
        InitialGuess::Random { amplitude } => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            Ok(random_zero_trace(grid, &mut rng, *amplitude))
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    pairwise_sum(&a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<_>>())
}

/// Search direction on the interior unknowns (full-length, zero on the
/// boundary) for gradient `grad` at `u`.
fn direction(prob: &Problem, u: &[f64], grad: &[f64], method: Method) -> Vec<f64> {
    let steepest = || neg(grad.to_vec());
    if method == Method::Steepest {
        return steepest();
    }
    let w = prob.w_of(u);
    let grid = prob.grid();
    let gmax = gradient_of_values(grid, &w).iter().fold(0.0f64, |m, g| m.max(g[0].hypot(g[1])));
    let floor = if gmax > 0.0 { 1e-6 * gmax } else { 1.0 };
    let Some(chol) = prob.curvature(&w, floor).cholesky() else {
        return steepest();
    };
    let rhs: Vec<f64> = prob.interior.iter().map(|&n| -grad[n]).collect();
    let sol = chol.solve(&rhs);
    let mut d = vec![0.0; u.len()];
    for (k, &n) in prob.interior.iter().enumerate() {
        d[n] = sol[k];
    }
    if sol.iter().all(|x| x.is_finite()) && dot(&d, grad) < 0.0 {
        d
    } else {
        steepest()
    }
}

/// Armijo backtracking descent on the discrete energy.
pub fn minimize(prob: &Problem, opts: &SolverOptions) -> Result<Solution, SolverError> {
    opts.validate()?;
    let mut u = initial_field(prob, opts)?.into_values();
    let mut e = prob.energy_values(&u);
    if !e.is_finite() {
        return Err(SolverError::NonFiniteEnergy { iteration: 0 });
    }
    let tol = opts.gradient_tolerance.unwrap_or(1e-8 * (1.0 + e.abs()) / prob.grid().volume());
    let mut history = vec![e];
    let mut grad = neg(prob.residual_of_w(&prob.w_of(&u)));
    let mut gnorm = max_abs(&grad);
    let mut iterations = 0;
    let termination = loop {
        if gnorm <= tol {
            break Termination::GradientTolerance;
        }
        if iterations >= opts.max_iterations {
            break Termination::MaxIterations;
        }
        let mut accepted = None;
        for method in [opts.method, Method::Steepest] {
            let d = direction(prob, &u, &grad, method);
            let slope = dot(&grad, &d);
            let mut step = opts.initial_step;
            while step >= opts.step_floor {
                let trial: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + step * b).collect();
                let et = prob.energy_values(&trial);
                if et.is_finite() && et < e && et <= e + opts.armijo * step * slope {
                    accepted = Some((trial, et));
                    break;
                }
                step *= opts.shrink;
            }
            if accepted.is_some() || method == Method::Steepest {
                break;
            }
        }
        let Some((trial, et)) = accepted else {
            break Termination::LineSearchFailure;
        };
        iterations += 1;
        let decrease = (e - et) / e.abs().max(et.abs()).max(f64::MIN_POSITIVE);
        u = trial;
        e = et;
        history.push(e);
        grad = neg(prob.residual_of_w(&prob.w_of(&u)));
        gnorm = max_abs(&grad);
        if gnorm <= tol {
            break Termination::GradientTolerance;
        }
        if decrease < opts.energy_tolerance {
            break Termination::EnergyStagnation;
        }
    };
    let grid = prob.grid().clone();
    let w = prob.w_of(&u);
    Ok(Solution {
        u_star: ScalarField::new(grid.clone(), u)?,
        w_star: ScalarField::new(grid, w)?,
        energy_history: history,
        gradient_norm: gnorm,
        gradient_tolerance: tol,
        weak_residual: gnorm,
        iterations,
        termination,
        lower_bound: None,
        two_start: None,
    })
}

/// Monotonicity certificate for two fields with the same boundary values.
pub fn uniqueness_certificate(
    v: &ScalarField,
    w: &ScalarField,
    prob: &Problem,
) -> Result<UniquenessCertificate, SolverError> {
    prob.check_phi_trace(v)?;
    prob.check_phi_trace(w)?;
    let grid = prob.grid();
    let vol = grid.cell_volume();
    let gv = gradient_of_values(grid, v.values());
    let gw = gradient_of_values(grid, w.values());
    let mut bounds = Vec::with_capacity(gv.len());
    let mut pairs = Vec::with_capacity(gv.len());
    let mut scale: f64 = 0.0;
    let mut gap: f64 = 0.0;
    for c in 0..gv.len() {
        let (a, b) = (gv[c], gw[c]);
        scale = scale.max(a[0].hypot(a[1])).max(b[0].hypot(b[1]));
        gap = gap.max((a[0] - b[0]).hypot(a[1] - b[1]));
        let (mut lo, mut pair, mut mag) = (0.0, 0.0, 0.0);
        for (weight, r) in prob.phase().terms(c) {
            let (l, bound) = monotonicity_terms(r, a, b);
            pair += weight * l;
            lo += weight * bound;
            let (na, nb) = (a[0].hypot(a[1]), b[0].hypot(b[1]));
            mag += weight * (na.powf(r - 1.0) + nb.powf(r - 1.0)) * (na + nb);
        }
        bounds.push(vol * lo);
        pairs.push((vol * pair, vol * mag));
    }
    let certificate = pairwise_sum(&bounds);
    let pairing = pairwise_sum(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let slack = 1e-12 * pairwise_sum(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    Ok(UniquenessCertificate {
        certificate,
        pairing,
        pairing_dominates: pairing >= certificate - slack,
        gradients_equal: gap <= 1e-10 * scale,
        max_gradient_gap: gap,
    })
}

/// Minimizes, records the weak residual and the energy lower bound (when a
/// dual bound is known), and optionally certifies uniqueness against a second
/// run from a random start.
pub fn solve_weak(prob: &Problem, opts: &SolverOptions) -> Result<Solution, SolverError> {
    let mut sol = minimize(prob, opts)?;
    sol.weak_residual = weak_residual(&sol.w_star, prob)?;
    if let Some(a) = prob.dual_bound() {
        sol.lower_bound = Some(energy_lower_bound(prob, a)?);
    }
    if opts.two_start {
        let second_opts =
            SolverOptions { initial_guess: InitialGuess::Random { amplitude: 0.1 }, two_start: false, ..opts.clone() };
        let other = minimize(prob, &second_opts)?;
        let half = sol.u_star.combine(0.5, &other.u_star, -0.5)?;
        let modular_distance = modular::modular(&half, prob.phase(), ModularKind::Gradient)?;
        let certificate = uniqueness_certificate(&sol.w_star, &other.w_star, prob)?;
        let eps = 0.5
            * convexity::epsilon_bound(prob.phase().summary().m)
                .map_err(|_| SolverError::ExponentTooSmall(prob.phase().summary().m))?;
        let convexity = convexity::verify_uc_pair(&sol.u_star, &other.u_star, eps, prob.phase(), ModularKind::Gradient)
            .map_err(|e| SolverError::Options(e.to_string()))?;
        sol.two_start = Some(TwoStartReport {
            iterations: other.iterations,
            termination: other.termination,
            modular_distance,
            certificate,
            convexity,
        });
    }
    Ok(sol)
}
