//! Modulars and Luxemburg norms.
//!
//! * zero order: `ϱ_H(u) = ∫ H(x, |u|)`, with `u` averaged to cell centers;
//! * gradient: `ϱ(u) = ϱ_H(|∇u|)`, a semimodular vanishing on constants;
//! * Sobolev: `ϱ_{1,H}(u) = ϱ_H(u) + ϱ_H(|∇u|)`.
//!
//! The Luxemburg norm `inf{λ > 0 : ϱ(u/λ) ≤ 1}` is found by bisection on the
//! strictly decreasing map `λ ↦ ϱ(u/λ)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{
    self, cell_means, gradient_of_values, pairwise_sum, random_smooth_zero_trace, random_zero_trace, MeshError,
    ScalarField,
};
use crate::phase::PhaseStructure;

/// Tolerance on `|ϱ(u/‖u‖) − 1|` accepted from the bisection.
pub const UNIT_BALL_TOLERANCE: f64 = 1e-10;
const MAX_BISECTION_STEPS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModularError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("field and phase structure live on different grids")]
    GridMismatch,
    #[error("mask has {got} entries, expected {expected}")]
    MaskShape { expected: usize, got: usize },
    #[error("could not bracket the Luxemburg norm (λ range [{lo}, {hi}])")]
    NonBracketing { lo: f64, hi: f64 },
    #[error("bisection stopped with |ϱ(u/λ) − 1| = {residual}")]
    NotConverged { residual: f64 },
    #[error("field must vanish on the boundary (node {node} has value {value})")]
    TraceViolation { node: usize, value: f64 },
    #[error("gradient vanishes identically")]
    ZeroGradient,
    #[error("hypothesis ‖|∇u|‖ ≥ 1 violated (norm {norm})")]
    HypothesisViolated { norm: f64 },
    #[error("invalid dual bound {0}")]
    InvalidBound(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModularKind {
    ZeroOrder,
    Gradient,
    Sobolev,
}

impl ModularKind {
    pub const ALL: [ModularKind; 3] = [ModularKind::ZeroOrder, ModularKind::Gradient, ModularKind::Sobolev];

    pub fn name(self) -> &'static str {
        match self {
            ModularKind::ZeroOrder => "zero_order",
            ModularKind::Gradient => "gradient",
            ModularKind::Sobolev => "sobolev",
        }
    }
}

impl std::str::FromStr for ModularKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero_order" | "zero-order" => Ok(ModularKind::ZeroOrder),
            "gradient" => Ok(ModularKind::Gradient),
            "sobolev" => Ok(ModularKind::Sobolev),
            _ => Err(format!("unknown modular kind '{s}' (zero_order, gradient, sobolev)")),
        }
    }
}

/// Which Musielak–Orlicz function is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrand {
    /// `H(x,t) = t^p/p + Σ μ_j t^{q_j}/q_j`
    Standard,
    /// `H̄(x,t) = t^p + Σ μ_j t^{q_j}`
    Bar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModularReport {
    pub kind: ModularKind,
    pub value: f64,
    /// Per-cell contributions including the cell volume; zero outside the mask.
    pub contributions: Vec<f64>,
    pub masked_cells: usize,
}

/// Per-cell arguments of the integrand, `|ū|` and/or `|∇u|`.
#[derive(Debug, Clone)]
pub(crate) struct Magnitudes {
    zero: Option<Vec<f64>>,
    grad: Option<Vec<f64>>,
}

impl Magnitudes {
    pub(crate) fn of(u: &ScalarField, kind: ModularKind) -> Self {
        let grid = u.grid();
        let zero = matches!(kind, ModularKind::ZeroOrder | ModularKind::Sobolev)
            .then(|| cell_means(grid, u.values()).into_iter().map(f64::abs).collect());
        let grad = matches!(kind, ModularKind::Gradient | ModularKind::Sobolev)
            .then(|| gradient_of_values(grid, u.values()).into_iter().map(|g| g[0].hypot(g[1])).collect());
        Magnitudes { zero, grad }
    }

    fn is_zero(&self) -> bool {
        let all_zero = |v: &Option<Vec<f64>>| v.as_ref().is_none_or(|v| v.iter().all(|&t| t == 0.0));
        all_zero(&self.zero) && all_zero(&self.grad)
    }

    /// Per-cell `vol · Σ H(x, t/λ)` restricted to `mask`.
    fn contributions(
        &self,
        phase: &PhaseStructure,
        inv_lambda: f64,
        integrand: Integrand,
        mask: Option<&[bool]>,
    ) -> Vec<f64> {
        let vol = phase.grid().cell_volume();
        let f = |c: usize, t: f64| match integrand {
            Integrand::Standard => phase.h(c, t * inv_lambda),
            Integrand::Bar => phase.h_bar(c, t * inv_lambda),
        };
        (0..phase.grid().cell_count())
            .map(|c| {
                if mask.is_some_and(|m| !m[c]) {
                    return 0.0;
                }
                let mut v = 0.0;
                if let Some(z) = &self.zero {
                    v += f(c, z[c]);
                }
                if let Some(g) = &self.grad {
                    v += f(c, g[c]);
                }
                v * vol
            })
            .collect()
    }

    fn value(&self, phase: &PhaseStructure, inv_lambda: f64, integrand: Integrand) -> f64 {
        pairwise_sum(&self.contributions(phase, inv_lambda, integrand, None))
    }
}

fn check_grid(u: &ScalarField, phase: &PhaseStructure) -> Result<(), ModularError> {
    if u.grid().as_ref() == phase.grid().as_ref() {
        Ok(())
    } else {
        Err(ModularError::GridMismatch)
    }
}

pub(crate) fn check_zero_trace(u: &ScalarField) -> Result<(), ModularError> {
    let mask = u.grid().boundary_mask();
    match (0..u.values().len()).find(|&n| mask.is_boundary(n) && u.values()[n] != 0.0) {
        Some(node) => Err(ModularError::TraceViolation { node, value: u.values()[node] }),
        None => Ok(()),
    }
}

/// Midpoint quadrature of the chosen modular, optionally restricted to the
/// cells where `mask` is true.
pub fn rho(
    u: &ScalarField,
    phase: &PhaseStructure,
    kind: ModularKind,
    mask: Option<&[bool]>,
) -> Result<ModularReport, ModularError> {
    rho_with(u, phase, kind, Integrand::Standard, mask)
}

pub fn rho_with(
    u: &ScalarField,
    phase: &PhaseStructure,
    kind: ModularKind,
    integrand: Integrand,
    mask: Option<&[bool]>,
) -> Result<ModularReport, ModularError> {
    check_grid(u, phase)?;
    let cells = phase.grid().cell_count();
    if let Some(m) = mask {
        if m.len() != cells {
            return Err(ModularError::MaskShape { expected: cells, got: m.len() });
        }
    }
    let contributions = Magnitudes::of(u, kind).contributions(phase, 1.0, integrand, mask);
    Ok(ModularReport {
        kind,
        value: pairwise_sum(&contributions),
        masked_cells: mask.map_or(cells, |m| m.iter().filter(|&&b| b).count()),
        contributions,
    })
}

/// Shorthand for the unrestricted modular value.
pub fn modular(u: &ScalarField, phase: &PhaseStructure, kind: ModularKind) -> Result<f64, ModularError> {
    Ok(rho(u, phase, kind, None)?.value)
}

pub fn luxemburg_norm(u: &ScalarField, phase: &PhaseStructure, kind: ModularKind) -> Result<f64, ModularError> {
    luxemburg_norm_with(u, phase, kind, Integrand::Standard)
}

pub fn luxemburg_norm_with(
    u: &ScalarField,
    phase: &PhaseStructure,
    kind: ModularKind,
    integrand: Integrand,
) -> Result<f64, ModularError> {
    check_grid(u, phase)?;
    luxemburg_of(&Magnitudes::of(u, kind), phase, integrand)
}

pub(crate) fn luxemburg_of(
    mags: &Magnitudes,
    phase: &PhaseStructure,
    integrand: Integrand,
) -> Result<f64, ModularError> {
    if mags.is_zero() {
        return Ok(0.0);
    }
    let g = |lambda: f64| mags.value(phase, 1.0 / lambda, integrand);
    let rho = g(1.0);
    let (m, big_m) = (phase.summary().m, phase.summary().big_m);
    let (a, b) = (rho.powf(1.0 / m), rho.powf(1.0 / big_m));

    let mut lo = 0.5 * a.min(b);
    let mut hi = 2.0 * a.max(b).max(1.0);
    let mut steps = 0;
    while g(lo) <= 1.0 {
        lo *= 0.5;
        steps += 1;
        if steps > MAX_BISECTION_STEPS || lo == 0.0 {
            return Err(ModularError::NonBracketing { lo, hi });
        }
    }
    while g(hi) > 1.0 {
        hi *= 2.0;
        steps += 1;
        if steps > MAX_BISECTION_STEPS || !hi.is_finite() {
            return Err(ModularError::NonBracketing { lo, hi });
        }
    }
    // invariant: g(lo) > 1 ≥ g(hi)
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let residual = (g(hi) - 1.0).abs();
    if residual > UNIT_BALL_TOLERANCE {
        return Err(ModularError::NotConverged { residual });
    }
    Ok(hi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub modular: f64,
    pub norm: f64,
    pub lower: f64,
    pub upper: f64,
    pub holds: bool,
}

/// `min{ϱ^{1/m}, ϱ^{1/M}} ≤ ‖u‖ ≤ max{ϱ^{1/m}, ϱ^{1/M}}`, checked with
/// `1e-9` relative slack.
pub fn norm_modular_sandwich(
    u: &ScalarField,
    phase: &PhaseStructure,
    kind: ModularKind,
) -> Result<SandwichReport, ModularError> {
    check_grid(u, phase)?;
    let mags = Magnitudes::of(u, kind);
    let modular = mags.value(phase, 1.0, Integrand::Standard);
    let norm = luxemburg_of(&mags, phase, Integrand::Standard)?;
    let (a, b) = (modular.powf(1.0 / phase.summary().m), modular.powf(1.0 / phase.summary().big_m));
    let (lower, upper) = (a.min(b), a.max(b));
    let slack = 1e-9 * norm.max(upper);
    Ok(SandwichReport { modular, norm, lower, upper, holds: lower <= norm + slack && norm <= upper + slack })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub norm: f64,
    pub norm_bar: f64,
    pub holds: bool,
}

/// `‖u‖_H ≤ ‖u‖_H̄ ≤ e^{1/e}·‖u‖_H`, with `1e-9` relative slack.
pub fn overline_equivalence_check(
    u: &ScalarField,
    phase: &PhaseStructure,
    kind: ModularKind,
) -> Result<EquivalenceReport, ModularError> {
    check_grid(u, phase)?;
    let mags = Magnitudes::of(u, kind);
    let norm = luxemburg_of(&mags, phase, Integrand::Standard)?;
    let norm_bar = luxemburg_of(&mags, phase, Integrand::Bar)?;
    let band = std::f64::consts::E.powf(1.0 / std::f64::consts::E);
    let slack = 1e-9 * norm_bar.max(norm);
    Ok(EquivalenceReport { norm, norm_bar, holds: norm <= norm_bar + slack && norm_bar <= band * norm + slack })
}

/// `‖u‖_H / ‖|∇u|‖_H` for a zero-trace field.
pub fn poincare_ratio(u: &ScalarField, phase: &PhaseStructure) -> Result<f64, ModularError> {
    check_grid(u, phase)?;
    check_zero_trace(u)?;
    let grad = luxemburg_norm(u, phase, ModularKind::Gradient)?;
    if grad == 0.0 {
        return Err(ModularError::ZeroGradient);
    }
    Ok(luxemburg_norm(u, phase, ModularKind::ZeroOrder)? / grad)
}

/// Largest Poincaré ratio over `samples` random zero-trace fields (half
/// smooth, half rough).
pub fn empirical_poincare_constant(phase: &PhaseStructure, samples: usize, seed: u64) -> Result<f64, ModularError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = phase.grid();
    let mut best: f64 = 0.0;
    for k in 0..samples {
        let amplitude = 10f64.powf(rand::Rng::gen_range(&mut rng, -1.0..1.0));
        let u = if k % 2 == 0 {
            random_smooth_zero_trace(grid, &mut rng, amplitude)
        } else {
            random_zero_trace(grid, &mut rng, amplitude)
        };
        match poincare_ratio(&u, phase) {
            Ok(r) => best = best.max(r),
            Err(ModularError::ZeroGradient) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(best)
}

/// `⟨f, u⟩ = ∫ f u`, both averaged to cell centers.
pub fn pairing(f: &ScalarField, u: &ScalarField) -> Result<f64, ModularError> {
    if !f.same_grid(u) {
        return Err(ModularError::Mesh(MeshError::GridMismatch));
    }
    let grid = f.grid();
    let fc = cell_means(grid, f.values());
    let uc = cell_means(grid, u.values());
    let prod: Vec<f64> = fc.iter().zip(&uc).map(|(a, b)| a * b).collect();
    Ok(mesh::integrate_cells(grid, &prod)?)
}

/// `|⟨f, u⟩| ≤ a·ϱ(u)^{1/m}` for zero-trace `u` with `‖|∇u|‖_H ≥ 1`, `ϱ` the
/// gradient modular.
pub fn dual_pairing_bound_check(
    f: &ScalarField,
    u: &ScalarField,
    a: f64,
    phase: &PhaseStructure,
) -> Result<bool, ModularError> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(ModularError::InvalidBound(a));
    }
    check_grid(u, phase)?;
    check_zero_trace(u)?;
    let norm = luxemburg_norm(u, phase, ModularKind::Gradient)?;
    if norm < 1.0 {
        return Err(ModularError::HypothesisViolated { norm });
    }
    let lhs = pairing(f, u)?.abs();
    let rhs = a * modular(u, phase, ModularKind::Gradient)?.powf(1.0 / phase.summary().m);
    Ok(lhs <= rhs * (1.0 + 1e-12))
}

/// Empirical estimate of `sup_h |⟨f, h⟩| / ‖|∇h|‖_H` over zero-trace probes:
/// `probes` random fields (smooth and rough alternately) plus `extra`,
/// inflated by 1%.
pub fn estimate_dual_bound(
    f: &ScalarField,
    phase: &PhaseStructure,
    probes: usize,
    seed: u64,
    extra: &[ScalarField],
) -> Result<f64, ModularError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = phase.grid();
    let mut best: f64 = 0.0;
    let mut consider = |h: &ScalarField| -> Result<(), ModularError> {
        let norm = luxemburg_norm(h, phase, ModularKind::Gradient)?;
        if norm > 0.0 {
            best = best.max(pairing(f, h)?.abs() / norm);
        }
        Ok(())
    };
    for h in extra {
        consider(h)?;
    }
    for k in 0..probes {
        let amplitude = 10f64.powf(rand::Rng::gen_range(&mut rng, -1.0..1.0));
        let h = if k % 2 == 0 {
            random_smooth_zero_trace(grid, &mut rng, amplitude)
        } else {
            random_zero_trace(grid, &mut rng, amplitude)
        };
        consider(&h)?;
    }
    Ok(1.01 * best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Grid;
    use rand::Rng;

    fn unit_interval(n: usize) -> std::sync::Arc<Grid> {
        Grid::interval(0.0, 1.0, n).unwrap()
    }

    #[test]
    fn zero_field_has_zero_modular_and_norm() {
        let g = unit_interval(8);
        let phase = PhaseStructure::constant(g.clone(), 1.7, &[(3.0, 2.0)]).unwrap();
        let z = ScalarField::zeros(g);
        for kind in ModularKind::ALL {
            assert_eq!(modular(&z, &phase, kind).unwrap(), 0.0);
            assert_eq!(luxemburg_norm(&z, &phase, kind).unwrap(), 0.0);
        }
    }

    #[test]
    fn constants_have_zero_gradient_modular() {
        let g = unit_interval(8);
        let phase = PhaseStructure::constant(g.clone(), 1.7, &[(3.0, 2.0)]).unwrap();
        let c = ScalarField::from_fn(g, |_| 3.0).unwrap();
        assert_eq!(modular(&c, &phase, ModularKind::Gradient).unwrap(), 0.0);
        assert_eq!(luxemburg_norm(&c, &phase, ModularKind::Gradient).unwrap(), 0.0);
    }

    #[test]
    fn hilbert_case_closed_forms() {
        let g = unit_interval(10);
        let phase = PhaseStructure::constant(g.clone(), 2.0, &[(2.0, 0.0)]).unwrap();
        for c in [0.3, 1.0, 2.5] {
            let u = ScalarField::from_fn(g.clone(), |_| c).unwrap();
            let rho = modular(&u, &phase, ModularKind::ZeroOrder).unwrap();
            assert!((rho - c * c / 2.0).abs() < 1e-14);
            let norm = luxemburg_norm(&u, &phase, ModularKind::ZeroOrder).unwrap();
            assert!((norm - c / 2f64.sqrt()).abs() < 1e-12, "{norm}");
            let s = norm_modular_sandwich(&u, &phase, ModularKind::ZeroOrder).unwrap();
            assert!((s.lower - s.upper).abs() < 1e-15 && (s.norm - s.lower).abs() < 1e-12 && s.holds);
        }
    }

    #[test]
    fn unit_modular_is_a_fixed_point() {
        let g = unit_interval(10);
        let phase = PhaseStructure::constant(g.clone(), 1.5, &[(4.0, 1.0)]).unwrap();
        let u = ScalarField::from_fn(g, |p| (3.0 * p[0]).sin()).unwrap();
        let norm = luxemburg_norm(&u, &phase, ModularKind::Sobolev).unwrap();
        let v = u.scaled(1.0 / norm);
        let s = norm_modular_sandwich(&v, &phase, ModularKind::Sobolev).unwrap();
        assert!((s.modular - 1.0).abs() < 1e-9);
        assert!((s.norm - 1.0).abs() < 1e-9 && (s.lower - 1.0).abs() < 1e-9 && (s.upper - 1.0).abs() < 1e-9);
    }

    #[test]
    fn norm_is_homogeneous() {
        let g = Grid::new(2, &[(0.0, 1.0), (0.0, 1.0)], &[6, 5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = g.cell_count();
        let phase = PhaseStructure::double_phase(
            g.clone(),
            (0..n).map(|_| rng.gen_range(1.1..5.0)).collect(),
            (0..n).map(|_| rng.gen_range(1.1..5.0)).collect(),
            (0..n).map(|_| rng.gen_range(0.0..10.0)).collect(),
        )
        .unwrap();
        let u = random_zero_trace(&g, &mut rng, 1.0);
        for kind in ModularKind::ALL {
            let base = luxemburg_norm(&u, &phase, kind).unwrap();
            for c in [2.0, -0.37, 15.0] {
                let scaled = luxemburg_norm(&u.scaled(c), &phase, kind).unwrap();
                assert!((scaled - c.abs() * base).abs() <= 1e-12 * scaled, "{kind:?} {c}");
            }
        }
    }

    #[test]
    fn equivalence_band_when_exponents_coincide() {
        let g = unit_interval(16);
        let phase = PhaseStructure::constant(g.clone(), 3.0, &[(3.0, 0.5)]).unwrap();
        let u = ScalarField::from_fn(g, |p| p[0] * (1.0 - p[0])).unwrap();
        let r = overline_equivalence_check(&u, &phase, ModularKind::ZeroOrder).unwrap();
        // H̄ = 3·H here, so ‖u‖_H̄ = 3^{1/3}‖u‖_H exactly
        assert!((r.norm_bar / r.norm - 3f64.powf(1.0 / 3.0)).abs() < 1e-9);
        assert!(r.holds);
        let z = ScalarField::zeros(phase.grid().clone());
        assert!(overline_equivalence_check(&z, &phase, ModularKind::Gradient).unwrap().holds);
    }

    #[test]
    fn restricted_modular_splits_additively() {
        let g = unit_interval(9);
        let phase = PhaseStructure::constant(g.clone(), 2.5, &[(1.5, 3.0)]).unwrap();
        let u = ScalarField::from_fn(g, |p| (5.0 * p[0]).cos()).unwrap();
        let mask: Vec<bool> = (0..9).map(|c| c % 3 == 0).collect();
        let inv: Vec<bool> = mask.iter().map(|b| !b).collect();
        for kind in ModularKind::ALL {
            let a = rho(&u, &phase, kind, Some(&mask)).unwrap();
            let b = rho(&u, &phase, kind, Some(&inv)).unwrap();
            let all = rho(&u, &phase, kind, None).unwrap();
            assert_eq!(a.masked_cells, 3);
            assert!((a.value + b.value - all.value).abs() < 1e-14 * all.value);
        }
        assert!(matches!(rho(&u, &phase, ModularKind::Gradient, Some(&[true])), Err(ModularError::MaskShape { .. })));
    }

    #[test]
    fn sobolev_is_sum_of_parts() {
        let g = Grid::new(2, &[(0.0, 1.0), (0.0, 1.0)], &[5, 5]).unwrap();
        let phase = PhaseStructure::constant(g.clone(), 1.3, &[(2.7, 0.4)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random_zero_trace(&g, &mut rng, 2.0);
        let z = modular(&u, &phase, ModularKind::ZeroOrder).unwrap();
        let d = modular(&u, &phase, ModularKind::Gradient).unwrap();
        let s = modular(&u, &phase, ModularKind::Sobolev).unwrap();
        assert!((s - (z + d)).abs() <= 1e-14 * s);
    }

    #[test]
    fn poincare_ratio_behaviour() {
        let g = unit_interval(20);
        let phase = PhaseStructure::constant(g.clone(), 1.8, &[(3.0, 1.0)]).unwrap();
        let hat = ScalarField::from_fn(g.clone(), |p| 0.5 - (p[0] - 0.5).abs()).unwrap();
        let r = poincare_ratio(&hat, &phase).unwrap();
        assert!(r.is_finite() && r > 0.0);
        let r2 = poincare_ratio(&hat.scaled(2.0), &phase).unwrap();
        assert!((r - r2).abs() < 1e-12 * r);
        let bad = ScalarField::from_fn(g.clone(), |p| p[0]).unwrap();
        assert!(matches!(poincare_ratio(&bad, &phase), Err(ModularError::TraceViolation { .. })));
        assert!(matches!(poincare_ratio(&ScalarField::zeros(g), &phase), Err(ModularError::ZeroGradient)));
    }

    #[test]
    fn poincare_constant_is_stable_across_seeds() {
        let g = unit_interval(24);
        let phase = PhaseStructure::constant(g, 2.2, &[(3.5, 1.0)]).unwrap();
        let c: Vec<f64> = (0..3).map(|s| empirical_poincare_constant(&phase, 500, s).unwrap()).collect();
        let (lo, hi) = c.iter().fold((f64::MAX, 0f64), |(a, b), &x| (a.min(x), b.max(x)));
        assert!(hi <= 1.2 * lo, "{c:?}");
    }

    #[test]
    fn dual_pairing_bound() {
        let g = unit_interval(16);
        let phase = PhaseStructure::constant(g.clone(), 1.6, &[(3.0, 1.0)]).unwrap();
        let zero_f = ScalarField::zeros(g.clone());
        let f = ScalarField::from_fn(g.clone(), |p| 1.0 + p[0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = random_smooth_zero_trace(&g, &mut rng, 1.0);
        let unit = u.scaled((1.0 + 1e-12) / luxemburg_norm(&u, &phase, ModularKind::Gradient).unwrap());
        assert!(dual_pairing_bound_check(&zero_f, &unit, 0.0, &phase).unwrap());
        // at unit norm the check reduces to |⟨f,u⟩| ≤ a
        let pair = pairing(&f, &unit).unwrap().abs();
        assert!(dual_pairing_bound_check(&f, &unit, pair * (1.0 + 1e-9), &phase).unwrap());
        assert!(!dual_pairing_bound_check(&f, &unit, pair * 0.99, &phase).unwrap());
        assert!(matches!(
            dual_pairing_bound_check(&f, &unit.scaled(0.5), 1.0, &phase),
            Err(ModularError::HypothesisViolated { .. })
        ));

        let a = estimate_dual_bound(&f, &phase, 1000, 3, &[]).unwrap();
        for k in 0..50 {
            let h = if k % 2 == 0 {
                random_smooth_zero_trace(&g, &mut rng, 1.0)
            } else {
                random_zero_trace(&g, &mut rng, 1.0)
            };
            let norm = luxemburg_norm(&h, &phase, ModularKind::Gradient).unwrap();
            let h = h.scaled(1.0 + 3.0 / norm);
            assert!(dual_pairing_bound_check(&f, &h, a, &phase).unwrap());
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn modulars_are_convex_and_even(
                seed in 0u64..1_000_000,
                alpha in prop::sample::select(vec![0.0, 0.25, 0.5, 0.75, 1.0]),
            ) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let g = Grid::new(2, &[(0.0, 1.0), (0.0, 1.0)], &[4, 4]).unwrap();
                let n = g.cell_count();
                let phase = PhaseStructure::double_phase(
                    g.clone(),
                    (0..n).map(|_| rng.gen_range(1.1..5.0)).collect(),
                    (0..n).map(|_| rng.gen_range(1.1..5.0)).collect(),
                    (0..n).map(|_| rng.gen_range(0.0..10.0)).collect(),
                ).unwrap();
                let u = random_zero_trace(&g, &mut rng, 2.0);
                let v = ScalarField::from_fn(g.clone(), |p| p[0] - p[1]).unwrap().combine(1.0, &random_zero_trace(&g, &mut rng, 1.0), 1.0).unwrap();
                for kind in ModularKind::ALL {
                    let mix = modular(&u.combine(alpha, &v, 1.0 - alpha).unwrap(), &phase, kind).unwrap();
                    let bound = alpha * modular(&u, &phase, kind).unwrap() + (1.0 - alpha) * modular(&v, &phase, kind).unwrap();
                    prop_assert!(mix <= bound * (1.0 + 1e-12) + 1e-300);
                    let neg = modular(&u.scaled(-1.0), &phase, kind).unwrap();
                    prop_assert_eq!(neg, modular(&u, &phase, kind).unwrap());
                }
            }
        }
    }
}
