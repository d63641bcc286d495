//! Sampled Musielak–Orlicz integrands
//!
//! ```text
//! H(x, t) = t^{p(x)} / p(x) + Σ_j μ_j(x) t^{q_j(x)} / q_j(x)
//! ```
//!
//! with one `(q_j, μ_j)` pair for the double-phase case and several for the
//! multi-phase case. All data are sampled at cell centers.

use std::sync::Arc;

use thiserror::Error;

use crate::mesh::Grid;

/// Sampled exponents must satisfy `m ≥ 1 + EXPONENT_FLOOR`.
pub const EXPONENT_FLOOR: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhaseError {
    #[error("{name}: expected {expected} cell samples, got {got}")]
    Shape { name: String, expected: usize, got: usize },
    #[error("{name}: non-finite sample at cell {cell}")]
    NonFinite { name: String, cell: usize },
    #[error("{name} ≤ 1 at sampled cell {cell} (value {value}); minimum exponent must exceed 1")]
    ExponentTooSmall { name: String, cell: usize, value: f64 },
    #[error("{name} < 0 at sampled cell {cell} (value {value})")]
    NegativeWeight { name: String, cell: usize, value: f64 },
    #[error("at least one (q, mu) phase is required")]
    NoPhases,
    #[error("negative argument t = {0}")]
    NegativeArgument(f64),
    #[error("operation defined for the double-phase case only (found {0} phases)")]
    NotDoublePhase(usize),
}

/// One weighted phase `(q_j, μ_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub q: Vec<f64>,
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentSummary {
    pub p_minus: f64,
    pub p_plus: f64,
    /// Per-phase extremes of `q_j`.
    pub q_minus: Vec<f64>,
    pub q_plus: Vec<f64>,
    /// Extremes of every `q_j` taken together.
    pub q_minus_global: f64,
    pub q_plus_global: f64,
    /// `min{p_-, (q_j)_-}`.
    pub m: f64,
    /// `max{p_+, (q_j)_+}`.
    pub big_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseStructure {
    grid: Arc<Grid>,
    p: Vec<f64>,
    phases: Vec<Phase>,
    summary: ExponentSummary,
}

fn check_samples(name: &str, v: &[f64], expected: usize) -> Result<(), PhaseError> {
    if v.len() != expected {
        return Err(PhaseError::Shape { name: name.into(), expected, got: v.len() });
    }
    if let Some(cell) = v.iter().position(|x| !x.is_finite()) {
        return Err(PhaseError::NonFinite { name: name.into(), cell });
    }
    Ok(())
}

/// Reports the cell holding the sampled minimum.
fn check_exponent(name: &str, v: &[f64]) -> Result<(), PhaseError> {
    let argmin = (0..v.len()).reduce(|a, b| if v[b] < v[a] { b } else { a });
    match argmin {
        Some(cell) if v[cell] < 1.0 + EXPONENT_FLOOR => {
            Err(PhaseError::ExponentTooSmall { name: name.into(), cell, value: v[cell] })
        }
        _ => Ok(()),
    }
}

fn extremes(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

impl PhaseStructure {
    pub fn new(grid: Arc<Grid>, p: Vec<f64>, phases: Vec<Phase>) -> Result<Self, PhaseError> {
        let n = grid.cell_count();
        if phases.is_empty() {
            return Err(PhaseError::NoPhases);
        }
        check_samples("p", &p, n)?;
        check_exponent("p", &p)?;
        for (j, ph) in phases.iter().enumerate() {
            let (qn, mn) = if phases.len() == 1 {
                ("q".to_string(), "mu".to_string())
            } else {
                (format!("q{}", j + 1), format!("mu{}", j + 1))
            };
            check_samples(&qn, &ph.q, n)?;
            check_samples(&mn, &ph.mu, n)?;
            check_exponent(&qn, &ph.q)?;
            if let Some(cell) = ph.mu.iter().position(|&x| x < 0.0) {
                return Err(PhaseError::NegativeWeight { name: mn, cell, value: ph.mu[cell] });
            }
        }

        let (p_minus, p_plus) = extremes(&p);
        let (q_minus, q_plus): (Vec<f64>, Vec<f64>) = phases.iter().map(|ph| extremes(&ph.q)).unzip();
        let q_minus_global = q_minus.iter().copied().fold(f64::INFINITY, f64::min);
        let q_plus_global = q_plus.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let summary = ExponentSummary {
            p_minus,
            p_plus,
            m: p_minus.min(q_minus_global),
            big_m: p_plus.max(q_plus_global),
            q_minus,
            q_plus,
            q_minus_global,
            q_plus_global,
        };
        Ok(PhaseStructure { grid, p, phases, summary })
    }

    /// Double-phase structure from per-cell samples.
    pub fn double_phase(grid: Arc<Grid>, p: Vec<f64>, q: Vec<f64>, mu: Vec<f64>) -> Result<Self, PhaseError> {
        PhaseStructure::new(grid, p, vec![Phase { q, mu }])
    }

    /// Spatially constant exponents and weights.
    pub fn constant(grid: Arc<Grid>, p: f64, phases: &[(f64, f64)]) -> Result<Self, PhaseError> {
        let n = grid.cell_count();
        let phases = phases.iter().map(|&(q, mu)| Phase { q: vec![q; n], mu: vec![mu; n] }).collect();
        PhaseStructure::new(grid, vec![p; n], phases)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn phase_count(&self) -> usize {
        self.phases.len()
    }

    pub fn summary(&self) -> &ExponentSummary {
        &self.summary
    }

    pub fn is_double_phase(&self) -> bool {
        self.phases.len() == 1
    }

    /// `H(x_cell, t)`.
    pub fn eval_h(&self, cell: usize, t: f64) -> Result<f64, PhaseError> {
        if t < 0.0 {
            return Err(PhaseError::NegativeArgument(t));
        }
        Ok(self.h(cell, t))
    }

    /// Unchecked `H(x_cell, t)` for `t ≥ 0`.
    #[inline]
    pub(crate) fn h(&self, cell: usize, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let p = self.p[cell];
        let mut v = t.powf(p) / p;
        for ph in &self.phases {
            let mu = ph.mu[cell];
            if mu != 0.0 {
                let q = ph.q[cell];
                v += mu * t.powf(q) / q;
            }
        }
        v
    }

    /// `H̄(x_cell, t) = t^p + Σ μ_j t^{q_j}`.
    #[inline]
    pub(crate) fn h_bar(&self, cell: usize, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let mut v = t.powf(self.p[cell]);
        for ph in &self.phases {
            let mu = ph.mu[cell];
            if mu != 0.0 {
                v += mu * t.powf(ph.q[cell]);
            }
        }
        v
    }

    /// Flux coefficient `∂_t H(x, t) / t = t^{p-2} + Σ μ_j t^{q_j-2}`, extended by
    /// zero at `t = 0` (the flux `coef·g` is continuous there since all exponents exceed 1).
    #[inline]
    pub(crate) fn flux_coefficient(&self, cell: usize, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let mut v = t.powf(self.p[cell] - 2.0);
        for ph in &self.phases {
            let mu = ph.mu[cell];
            if mu != 0.0 {
                v += mu * t.powf(ph.q[cell] - 2.0);
            }
        }
        v
    }

    /// The terms `(c, r)` of the integrand `Σ c·t^r/r` at a cell, zero weights skipped.
    pub(crate) fn terms(&self, cell: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
        std::iter::once((1.0, self.p[cell]))
            .chain(self.phases.iter().filter(move |ph| ph.mu[cell] != 0.0).map(move |ph| (ph.mu[cell], ph.q[cell])))
    }

    /// Checks `α·min{t^p, t^q} ≤ H(x, t) ≤ β·max{t^p, t^q}` with
    /// `α = 1/p_+ + μ/q_+` and `β = 1/p_- + μ/q_-` (global extremes).
    pub fn growth_envelope_check(&self, cell: usize, t: f64) -> Result<bool, PhaseError> {
        if !self.is_double_phase() {
            return Err(PhaseError::NotDoublePhase(self.phases.len()));
        }
        let h = self.eval_h(cell, t)?;
        let s = &self.summary;
        let (p, q, mu) = (self.p[cell], self.phases[0].q[cell], self.phases[0].mu[cell]);
        let alpha = 1.0 / s.p_plus + mu / s.q_plus_global;
        let beta = 1.0 / s.p_minus + mu / s.q_minus_global;
        let (tp, tq) = (t.powf(p), t.powf(q));
        let lower = alpha * tp.min(tq);
        let upper = beta * tp.max(tq);
        let slack = 1e-12 * h.abs();
        Ok(lower <= h + slack && h <= upper + slack)
    }

    /// Matuszewska index of `H(x_cell, ·)`: the largest exponent whose weight
    /// is active at the cell (`p` where every `μ_j` vanishes).
    pub fn matuszewska_index(&self, cell: usize) -> f64 {
        self.terms(cell).map(|(_, r)| r).fold(f64::NEG_INFINITY, f64::max)
    }
}
