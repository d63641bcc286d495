//! Seeded randomized verification sweeps.
//!
//! Sample `i` of a sweep with seed `s` draws from its own ChaCha stream
//! `(s, i)`, so results do not depend on evaluation order.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::convexity::{
    self, epsilon_bound, monotonicity_lower_bound_check, scalar_lower_bound_check, two_point_inequality_check,
    two_point_terms, ConvexityError, TwoPointCase, Verdict,
};
use crate::mesh::{random_smooth_zero_trace, random_zero_trace, Grid, ScalarField};
use crate::modular::{self, Integrand, ModularError, ModularKind};
use crate::phase::{Phase, PhaseStructure};

pub fn sample_rng(seed: u64, sample: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample);
    rng
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Tally {
    pub samples: usize,
    pub pass: usize,
    pub vacuous: usize,
    pub fail: usize,
    /// Index of the first failing sample, if any.
    pub first_failure: Option<usize>,
}

impl Tally {
    fn record(&mut self, index: usize, verdict: Verdict) {
        self.samples += 1;
        match verdict {
            Verdict::Pass => self.pass += 1,
            Verdict::Vacuous => self.vacuous += 1,
            Verdict::Fail => {
                self.fail += 1;
                self.first_failure.get_or_insert(index);
            }
        }
    }

    fn record_bool(&mut self, index: usize, ok: bool) {
        self.record(index, if ok { Verdict::Pass } else { Verdict::Fail });
    }
}

/// Ranges for randomly generated phase structures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseRanges {
    pub exponent: (f64, f64),
    pub weight: (f64, f64),
    /// Largest cell count per axis.
    pub max_cells: usize,
}

impl Default for PhaseRanges {
    fn default() -> Self {
        PhaseRanges { exponent: (1.1, 5.0), weight: (0.0, 10.0), max_cells: 32 }
    }
}

fn random_grid(rng: &mut ChaCha8Rng, max_cells: usize) -> Arc<Grid> {
    let hi = max_cells.max(2);
    if rng.gen_bool(0.5) {
        Grid::interval(0.0, rng.gen_range(0.5..2.0), rng.gen_range(2..=hi)).expect("valid interval")
    } else {
        let ext = [(0.0, rng.gen_range(0.5..2.0)), (0.0, rng.gen_range(0.5..2.0))];
        Grid::new(2, &ext, &[rng.gen_range(2..=hi), rng.gen_range(2..=hi)]).expect("valid rectangle")
    }
}

/// A random structure with `k` phases on a random grid.
pub fn random_phase(rng: &mut ChaCha8Rng, ranges: &PhaseRanges, k: usize) -> PhaseStructure {
    let grid = random_grid(rng, ranges.max_cells);
    let n = grid.cell_count();
    let (lo, hi) = ranges.exponent;
    let (wlo, whi) = ranges.weight;
    let mut draw = |lo: f64, hi: f64| -> Vec<f64> { (0..n).map(|_| rng.gen_range(lo..=hi)).collect() };
    let p = draw(lo, hi);
    let phases = (0..k).map(|_| Phase { q: draw(lo, hi), mu: draw(wlo, whi) }).collect();
    PhaseStructure::new(grid, p, phases).expect("sampled exponents exceed 1")
}

/// A random field with a log-uniform amplitude in `[0.1, 10]`, smooth or
/// rough with equal odds, plus a random affine part when `trace` is false.
pub fn random_field(rng: &mut ChaCha8Rng, grid: &Arc<Grid>, trace: bool) -> ScalarField {
    let amplitude = 10f64.powf(rng.gen_range(-1.0..1.0));
    let base = if rng.gen_bool(0.5) {
        random_smooth_zero_trace(grid, rng, amplitude)
    } else {
        random_zero_trace(grid, rng, amplitude)
    };
    if trace {
        return base;
    }
    let (a, b, c): (f64, f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let affine = ScalarField::from_fn(grid.clone(), |p| a + b * p[0] + c * p[1]).expect("finite");
    base.combine(1.0, &affine, amplitude).expect("same grid")
}

/// A partner for `u`: independent, a small perturbation, a scaled copy or a
/// perturbed reflection.
fn partner(rng: &mut ChaCha8Rng, u: &ScalarField) -> ScalarField {
    let grid = u.grid().clone();
    match rng.gen_range(0..4) {
        3 => {
            let noise = random_field(rng, &grid, false);
            u.combine(-rng.gen_range(0.2..1.5), &noise, rng.gen_range(0.0..0.5)).expect("same grid")
        }
        0 => random_field(rng, &grid, false),
        1 => {
            let eps = 10f64.powf(rng.gen_range(-3.0..0.0));
            u.combine(1.0, &random_field(rng, &grid, false), eps).expect("same grid")
        }
        _ => u.scaled(rng.gen_range(-3.0..3.0)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UcFamily {
    /// Double-phase structure with the given modular.
    DoublePhase(ModularKind),
    /// Three-phase structure, gradient modular.
    ThreePhase,
}

/// Uniform-convexity sweep with `ε` drawn log-uniformly from
/// `[0.01, 0.99]` times the admissible bound.
pub fn uc_sweep(family: UcFamily, samples: usize, seed: u64, ranges: &PhaseRanges) -> Result<Tally, ConvexityError> {
    uc_sweep_with(family, samples, seed, ranges, None)
}

/// As [`uc_sweep`], cycling through the given `ε` values when supplied.
pub fn uc_sweep_with(
    family: UcFamily,
    samples: usize,
    seed: u64,
    ranges: &PhaseRanges,
    epsilons: Option<&[f64]>,
) -> Result<Tally, ConvexityError> {
    let mut tally = Tally::default();
    for i in 0..samples {
        let mut rng = sample_rng(seed, i as u64);
        let k = if family == UcFamily::ThreePhase { 3 } else { 1 };
        let phase = random_phase(&mut rng, ranges, k);
        let u = random_field(&mut rng, phase.grid(), false);
        let v = partner(&mut rng, &u);
        let bound = epsilon_bound(phase.summary().m)?;
        let eps = match epsilons {
            Some(list) if !list.is_empty() => list[i % list.len()],
            _ => bound * log_uniform(&mut rng, 0.01, 0.99),
        };
        let report = match family {
            UcFamily::DoublePhase(kind) => convexity::verify_uc_pair(&u, &v, eps, &phase, kind)?,
            UcFamily::ThreePhase => convexity::verify_multiphase_uc(&u, &v, eps, &phase)?,
        };
        tally.record(i, report.verdict);
    }
    Ok(tally)
}

/// Uniform-convexity sweep over random pairs on a fixed structure. A
/// single-phase structure uses the gradient modular; more phases use the
/// multi-phase check.
pub fn uc_sweep_fixed(
    phase: &PhaseStructure,
    samples: usize,
    seed: u64,
    epsilons: Option<&[f64]>,
) -> Result<Tally, ConvexityError> {
    let mut tally = Tally::default();
    let bound = epsilon_bound(phase.summary().m)?;
    for i in 0..samples {
        let mut rng = sample_rng(seed, i as u64);
        let u = random_field(&mut rng, phase.grid(), false);
        let v = partner(&mut rng, &u);
        let eps = match epsilons {
            Some(list) if !list.is_empty() => list[i % list.len()],
            _ => bound * log_uniform(&mut rng, 0.01, 0.99),
        };
        let report = if phase.phase_count() == 1 {
            convexity::verify_uc_pair(&u, &v, eps, phase, ModularKind::Gradient)?
        } else {
            convexity::verify_multiphase_uc(&u, &v, eps, phase)?
        };
        tally.record(i, report.verdict);
    }
    Ok(tally)
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn vec2(rng: &mut ChaCha8Rng, r: f64) -> [f64; 2] {
    [rng.gen_range(-r..=r), rng.gen_range(-r..=r)]
}

fn exponent(rng: &mut ChaCha8Rng) -> f64 {
    // (1, 8]
    8.0 - rng.gen_range(0.0..7.0)
}

/// Two-point inequality for random `h ∈ (1, 8]`, `a, b ∈ [−10, 10]²`.
pub fn two_point_sweep(samples: usize, seed: u64) -> Result<Tally, ConvexityError> {
    let mut tally = Tally::default();
    for i in 0..samples {
        let mut rng = sample_rng(seed, i as u64);
        let h = exponent(&mut rng);
        let (a, b) = (vec2(&mut rng, 10.0), vec2(&mut rng, 10.0));
        tally.record_bool(i, two_point_inequality_check(h, a, b)?);
    }
    Ok(tally)
}

/// Largest relative deviation from equality of both two-point inequalities at
/// `h = 2`.
pub fn parallelogram_deviation(samples: usize, seed: u64) -> Result<f64, ConvexityError> {
    let mut worst: f64 = 0.0;
    for i in 0..samples {
        let mut rng = sample_rng(seed, i as u64);
        let (a, b) = (vec2(&mut rng, 10.0), vec2(&mut rng, 10.0));
        for case in [TwoPointCase::Sub, TwoPointCase::Super] {
            let (l, r) = two_point_terms(2.0, a, b, case)?;
            worst = worst.max((l - r).abs() / r);
        }
    }
    Ok(worst)
}

/// Monotonicity bounds for random `r ∈ (1, 8]`, `A, B ∈ [−10, 10]²`.
pub fn monotone_sweep(samples: usize, seed: u64) -> Tally {
    let mut tally = Tally::default();
    for i in 0..samples {
        let mut rng = sample_rng(seed, i as u64);
        let r = exponent(&mut rng);
        let (a, b) = (vec2(&mut rng, 10.0), vec2(&mut rng, 10.0));
        tally.record_bool(i, monotonicity_lower_bound_check(r, a, b));
    }
    tally
}

/// `x − a x^{1/m} ≥ −a(a/m)^{1/(m−1)}` for `x ∈ [0, 100]`, `a ∈ [0, 10]`,
/// `m ∈ (1, 5]`.
pub fn scalar_sweep(samples: usize, seed: u64) -> Tally {
    let mut tally = Tally::default();
    for i in 0..samples {
        let mut rng = sample_rng(seed, i as u64);
        let x = rng.gen_range(0.0..=100.0);
        let a = rng.gen_range(0.0..=10.0);
        let m = 5.0 - rng.gen_range(0.0..3.99);
        tally.record_bool(i, scalar_lower_bound_check(x, a, m));
    }
    tally
}

/// Norm diagnostics over random fields, one tally per property; each sample
/// covers all three modular kinds.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct NormSweep {
    /// `|ϱ(u/‖u‖) − 1| ≤ 1e-9`
    pub unit_modular: Tally,
    /// `‖cu‖ = |c|·‖u‖` to `1e-12` relative
    pub homogeneity: Tally,
    pub sandwich: Tally,
    /// `‖u‖_H ≤ ‖u‖_H̄ ≤ e^{1/e}‖u‖_H`
    pub equivalence: Tally,
    pub worst_unit_error: f64,
    pub worst_homogeneity_error: f64,
}

pub fn norm_sweep(samples: usize, seed: u64, ranges: &PhaseRanges) -> Result<NormSweep, ModularError> {
    let mut out = NormSweep::default();
    for i in 0..samples {
        let mut rng = sample_rng(seed, i as u64);
        let k = rng.gen_range(1..=3);
        let phase = random_phase(&mut rng, ranges, k);
        let u = random_field(&mut rng, phase.grid(), false);
        let c = {
            let mag = 10f64.powf(rng.gen_range(-2.0..2.0));
            if rng.gen_bool(0.5) {
                -mag
            } else {
                mag
            }
        };
        let (mut unit_ok, mut hom_ok, mut sand_ok, mut eq_ok) = (true, true, true, true);
        for kind in ModularKind::ALL {
            let norm = modular::luxemburg_norm(&u, &phase, kind)?;
            if norm == 0.0 {
                continue;
            }
            let unit = (modular::modular(&u.scaled(1.0 / norm), &phase, kind)? - 1.0).abs();
            out.worst_unit_error = out.worst_unit_error.max(unit);
            unit_ok &= unit <= 1e-9;
            let scaled = modular::luxemburg_norm(&u.scaled(c), &phase, kind)?;
            let hom = (scaled - c.abs() * norm).abs() / scaled;
            out.worst_homogeneity_error = out.worst_homogeneity_error.max(hom);
            hom_ok &= hom <= 1e-12;
            sand_ok &= modular::norm_modular_sandwich(&u, &phase, kind)?.holds;
            eq_ok &= modular::overline_equivalence_check(&u, &phase, kind)?.holds;
            // the bar integrand never undercuts the plain one
            eq_ok &= modular::luxemburg_norm_with(&u, &phase, kind, Integrand::Bar)? >= norm * (1.0 - 1e-12);
        }
        out.unit_modular.record_bool(i, unit_ok);
        out.homogeneity.record_bool(i, hom_ok);
        out.sandwich.record_bool(i, sand_ok);
        out.equivalence.record_bool(i, eq_ok);
    }
    Ok(out)
}

/// Set identity and component estimates over random double-phase pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ComponentSweep {
    pub components: Tally,
    /// Samples where the hypothesis on `Ω∖Ω22` held.
    pub hypothesis_samples: usize,
    pub remainder: Tally,
    pub set_identity: Tally,
}

pub fn component_sweep(samples: usize, seed: u64, ranges: &PhaseRanges) -> Result<ComponentSweep, ConvexityError> {
    let mut out = ComponentSweep::default();
    for i in 0..samples {
        let mut rng = sample_rng(seed, i as u64);
        let phase = random_phase(&mut rng, ranges, 1);
        let u = random_field(&mut rng, phase.grid(), false);
        let v = partner(&mut rng, &u);
        let eps = epsilon_bound(phase.summary().m)? * rng.gen_range(0.01..0.99);
        let r = convexity::component_estimates(&u, &v, eps, &phase)?;
        out.components.record_bool(i, r.omega22.holds && r.a.holds && r.b.holds && r.c.holds);
        out.set_identity
            .record_bool(i, r.sets_match && r.set_identity_gap <= 1e-13 * r.remainder.rhs.max(f64::MIN_POSITIVE));
        if r.hypothesis {
            out.hypothesis_samples += 1;
            out.remainder.record_bool(i, r.remainder.holds);
        }
    }
    Ok(out)
}
