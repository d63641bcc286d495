//! Uniform convexity of the double-phase modular and the pointwise
//! inequalities used for uniqueness.
//!
//! All set logic is evaluated per cell on the cell-center gradients (or the
//! cell means, for the zero-order modular).

use serde::Serialize;
use thiserror::Error;

use crate::mesh::{gradient_of_values, pairwise_sum, MeshError, ScalarField};
use crate::modular::{self, ModularError, ModularKind};
use crate::phase::PhaseStructure;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConvexityError {
    #[error("exponent lower bound m = {0} must exceed 1")]
    ExponentTooSmall(f64),
    #[error("ε = {epsilon} is not admissible: need 0 < ε < min{{1, √(32/(m−1))}} = {bound} (m = {m})")]
    Epsilon { epsilon: f64, m: f64, bound: f64 },
    #[error("α = {0} must be positive")]
    Alpha(f64),
    #[error("exponent h = {0} must exceed 1")]
    Exponent(f64),
    #[error("case (i) needs |a| + |b| > 0")]
    DegeneratePair,
    #[error("operation needs a double-phase structure (k = 1), got k = {0}")]
    NotDoublePhase(usize),
    #[error("operation needs at least two phases, got k = {0}")]
    TooFewPhases(usize),
    #[error(transparent)]
    Modular(#[from] ModularError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Vacuous,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub kind: ModularKind,
    pub epsilon: f64,
    pub delta: f64,
    pub rho_u: f64,
    pub rho_v: f64,
    /// `ϱ((u+v)/2)`
    pub lhs: f64,
    /// `(1−δ)(ϱ(u)+ϱ(v))/2`
    pub rhs: f64,
    /// `ϱ((u−v)/2)`
    pub gap: f64,
    /// `ε(ϱ(u)+ϱ(v))/2`
    pub gap_threshold: f64,
    pub verdict: Verdict,
}

/// Exponent regimes: first index `p < 2` (1) or `p ≥ 2` (2), second the same
/// for `q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegimePartition {
    pub omega11: Vec<bool>,
    pub omega12: Vec<bool>,
    pub omega21: Vec<bool>,
    pub omega22: Vec<bool>,
}

impl RegimePartition {
    pub fn counts(&self) -> [usize; 4] {
        let n = |m: &[bool]| m.iter().filter(|&&b| b).count();
        [n(&self.omega11), n(&self.omega12), n(&self.omega21), n(&self.omega22)]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSplit {
    pub g: Vec<bool>,
    pub e: Vec<bool>,
    /// `E ∩ Ω21`
    pub a: Vec<bool>,
    /// `E ∩ Ω12`
    pub b: Vec<bool>,
    /// `E ∩ Ω11`
    pub c: Vec<bool>,
}

pub fn partition(phase: &PhaseStructure) -> Result<RegimePartition, ConvexityError> {
    if !phase.is_double_phase() {
        return Err(ConvexityError::NotDoublePhase(phase.phase_count()));
    }
    let q = &phase.phases()[0].q;
    let n = phase.grid().cell_count();
    let mut out = RegimePartition {
        omega11: vec![false; n],
        omega12: vec![false; n],
        omega21: vec![false; n],
        omega22: vec![false; n],
    };
    for c in 0..n {
        let mask = match (phase.p()[c] >= 2.0, q[c] >= 2.0) {
            (false, false) => &mut out.omega11,
            (false, true) => &mut out.omega12,
            (true, false) => &mut out.omega21,
            (true, true) => &mut out.omega22,
        };
        mask[c] = true;
    }
    Ok(out)
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// `G_α = {|∇(u−v)| ≤ (α/4)(|∇u|+|∇v|)}` and its complement, refined by the
/// regime partition.
pub fn pair_split(
    u: &ScalarField,
    v: &ScalarField,
    alpha: f64,
    partition: &RegimePartition,
) -> Result<PairSplit, ConvexityError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(ConvexityError::Alpha(alpha));
    }
    if !u.same_grid(v) {
        return Err(MeshError::GridMismatch.into());
    }
    let gu = gradient_of_values(u.grid(), u.values());
    let gv = gradient_of_values(v.grid(), v.values());
    if gu.len() != partition.omega11.len() {
        return Err(ModularError::MaskShape { expected: gu.len(), got: partition.omega11.len() }.into());
    }
    let g: Vec<bool> = gu
        .iter()
        .zip(&gv)
        .map(|(a, b)| norm([a[0] - b[0], a[1] - b[1]]) <= 0.25 * alpha * (norm(*a) + norm(*b)))
        .collect();
    let e: Vec<bool> = g.iter().map(|b| !b).collect();
    let and = |m: &[bool]| e.iter().zip(m).map(|(x, y)| *x && *y).collect::<Vec<_>>();
    Ok(PairSplit { a: and(&partition.omega21), b: and(&partition.omega12), c: and(&partition.omega11), g, e })
}

/// Which inequality of the two-point lemma to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwoPointCase {
    /// `1 < h ≤ 2`
    Sub,
    /// `h ≥ 2`
    Super,
}

/// Returns `(lhs, rhs)` of the selected two-point inequality.
pub fn two_point_terms(h: f64, a: [f64; 2], b: [f64; 2], case: TwoPointCase) -> Result<(f64, f64), ConvexityError> {
    if !(h > 1.0 && h.is_finite()) {
        return Err(ConvexityError::Exponent(h));
    }
    let (na, nb) = (norm(a), norm(b));
    let mid = norm([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
    let half_diff = norm([0.5 * (a[0] - b[0]), 0.5 * (a[1] - b[1])]);
    let rhs = (na.powf(h) + nb.powf(h)) / (2.0 * h);
    let lhs = match case {
        TwoPointCase::Sub => {
            if na + nb == 0.0 {
                return Err(ConvexityError::DegeneratePair);
            }
            let diff = 2.0 * half_diff;
            mid.powf(h) / h + (h - 1.0) / 2f64.powf(h + 1.0) * diff * diff / (na + nb).powf(2.0 - h)
        }
        TwoPointCase::Super => (mid.powf(h) + half_diff.powf(h)) / h,
    };
    Ok((lhs, rhs))
}

/// Checks the two-point inequality for `h` (case (i) for `h ≤ 2`, case (ii)
/// for `h ≥ 2`, both at `h = 2`) with slack `1e-12·(|a|^h+|b|^h)`.
pub fn two_point_inequality_check(h: f64, a: [f64; 2], b: [f64; 2]) -> Result<bool, ConvexityError> {
    let slack = 1e-12 * (norm(a).powf(h) + norm(b).powf(h));
    let mut cases = Vec::with_capacity(2);
    if h <= 2.0 {
        cases.push(TwoPointCase::Sub);
    }
    if h >= 2.0 {
        cases.push(TwoPointCase::Super);
    }
    for case in cases {
        let (lhs, rhs) = two_point_terms(h, a, b, case)?;
        if lhs > rhs + slack {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Upper end of the admissible ε range for the modulus, `min{1, √(32/(m−1))}`.
pub fn epsilon_bound(m: f64) -> Result<f64, ConvexityError> {
    if !(m > 1.0) {
        return Err(ConvexityError::ExponentTooSmall(m));
    }
    Ok((32.0 / (m - 1.0)).sqrt().min(1.0))
}

/// `δ(ε) = min{ε/2, (m−1)ε²/32}`.
pub fn delta_of_epsilon(epsilon: f64, m: f64) -> Result<f64, ConvexityError> {
    let bound = epsilon_bound(m)?;
    if !(epsilon > 0.0 && epsilon < bound) {
        return Err(ConvexityError::Epsilon { epsilon, m, bound });
    }
    Ok((0.5 * epsilon).min((m - 1.0) * epsilon * epsilon / 32.0))
}

fn classify(rho_u: f64, rho_v: f64, gap: f64, mid: f64, epsilon: f64, delta: f64) -> (f64, f64, Verdict) {
    let avg = 0.5 * (rho_u + rho_v);
    let threshold = epsilon * avg;
    let rhs = (1.0 - delta) * avg;
    let verdict = if gap <= threshold {
        Verdict::Vacuous
    } else if mid <= rhs + 1e-12 * avg {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    (threshold, rhs, verdict)
}

/// One instance of the uniform-convexity implication for the chosen modular.
pub fn verify_uc_pair(
    u: &ScalarField,
    v: &ScalarField,
    epsilon: f64,
    phase: &PhaseStructure,
    kind: ModularKind,
) -> Result<ConvexityReport, ConvexityError> {
    let delta = delta_of_epsilon(epsilon, phase.summary().m)?;
    let rho_u = modular::modular(u, phase, kind)?;
    let rho_v = modular::modular(v, phase, kind)?;
    let gap = modular::modular(&u.combine(0.5, v, -0.5)?, phase, kind)?;
    let lhs = modular::modular(&u.combine(0.5, v, 0.5)?, phase, kind)?;
    let (gap_threshold, rhs, verdict) = classify(rho_u, rho_v, gap, lhs, epsilon, delta);
    Ok(ConvexityReport { kind, epsilon, delta, rho_u, rho_v, lhs, rhs, gap, gap_threshold, verdict })
}

/// The gradient-modular implication for a structure with `k ≥ 2` phases.
pub fn verify_multiphase_uc(
    u: &ScalarField,
    v: &ScalarField,
    epsilon: f64,
    phase: &PhaseStructure,
) -> Result<ConvexityReport, ConvexityError> {
    if phase.phase_count() < 2 {
        return Err(ConvexityError::TooFewPhases(phase.phase_count()));
    }
    verify_uc_pair(u, v, epsilon, phase, ModularKind::Gradient)
}

/// `lhs ≤ rhs` for one of the component estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Estimate {
    fn new(lhs: f64, rhs: f64) -> Self {
        Estimate { lhs, rhs, holds: lhs <= rhs + 1e-12 * rhs.abs() }
    }
}

/// Set-restricted pieces of the convexity argument for the gradient modular.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentReport {
    /// Hypothesis on `Ω∖Ω22`: `ϱ^{Ω∖Ω22}((u−v)/2) > (ε/2)·avg`.
    pub hypothesis: bool,
    /// `ϱ^{Ω22}((u+v)/2) + ϱ^{Ω22}((u−v)/2) ≤ (ϱ^{Ω22}(u)+ϱ^{Ω22}(v))/2`
    pub omega22: Estimate,
    /// The `A`, `B`, `C` estimates with constants `(q_−−1)ε/8`, `(p_−−1)ε/8`,
    /// `(m−1)ε/8`.
    pub a: Estimate,
    pub b: Estimate,
    pub c: Estimate,
    /// `ϱ^{Ω∖(Ω22∪G)}((u−v)/2) ≥ (ε/4)·avg`, meaningful when the hypothesis
    /// holds.
    pub remainder: Estimate,
    /// `|ϱ^{Ω∖(Ω22∪G)} − (ϱ^A + ϱ^B + ϱ^C)|` on `(u−v)/2`.
    pub set_identity_gap: f64,
    /// Whether `A ∪ B ∪ C = Ω∖(Ω22 ∪ G)` as cell sets.
    pub sets_match: bool,
}

pub fn component_estimates(
    u: &ScalarField,
    v: &ScalarField,
    epsilon: f64,
    phase: &PhaseStructure,
) -> Result<ComponentReport, ConvexityError> {
    delta_of_epsilon(epsilon, phase.summary().m)?;
    let part = partition(phase)?;
    let split = pair_split(u, v, epsilon, &part)?;
    let s = phase.summary();
    let (p_minus, q_minus, m) = (s.p_minus, s.q_minus[0], s.m);

    let sum = u.combine(0.5, v, 0.5)?;
    let diff = u.combine(0.5, v, -0.5)?;
    let kind = ModularKind::Gradient;
    let contrib = |w: &ScalarField| modular::rho(w, phase, kind, None).map(|r| r.contributions);
    let (cu, cv, cs, cd) = (contrib(u)?, contrib(v)?, contrib(&sum)?, contrib(&diff)?);
    let on = |c: &[f64], mask: &[bool]| {
        pairwise_sum(&c.iter().zip(mask).map(|(x, &b)| if b { *x } else { 0.0 }).collect::<Vec<_>>())
    };
    let avg = 0.5 * (pairwise_sum(&cu) + pairwise_sum(&cv));

    let not22: Vec<bool> = part.omega22.iter().map(|b| !b).collect();
    let rest: Vec<bool> = not22.iter().zip(&split.e).map(|(a, b)| *a && *b).collect();
    let union: Vec<bool> = (0..rest.len()).map(|c| split.a[c] || split.b[c] || split.c[c]).collect();

    let estimate =
        |mask: &[bool], k: f64| Estimate::new(on(&cs, mask) + k * on(&cd, mask), 0.5 * (on(&cu, mask) + on(&cv, mask)));
    let rest_diff = on(&cd, &rest);
    Ok(ComponentReport {
        hypothesis: on(&cd, &not22) > 0.5 * epsilon * avg,
        omega22: estimate(&part.omega22, 1.0),
        a: estimate(&split.a, (q_minus - 1.0) * epsilon / 8.0),
        b: estimate(&split.b, (p_minus - 1.0) * epsilon / 8.0),
        c: estimate(&split.c, (m - 1.0) * epsilon / 8.0),
        remainder: Estimate::new(0.25 * epsilon * avg, rest_diff),
        set_identity_gap: (rest_diff - (on(&cd, &split.a) + on(&cd, &split.b) + on(&cd, &split.c))).abs(),
        sets_match: rest == union,
    })
}

/// `⟨|A|^{r−2}A − |B|^{r−2}B, A−B⟩` together with the lower bound
/// `2^{2−r}|A−B|^r` (`r ≥ 2`) or `(r−1)|A−B|²(1+|A|²+|B|²)^{(r−2)/2}`
/// (`1 < r < 2`).
pub fn monotonicity_terms(r: f64, a: [f64; 2], b: [f64; 2]) -> (f64, f64) {
    let flux = |x: [f64; 2]| {
        let n = norm(x);
        if n == 0.0 {
            [0.0, 0.0]
        } else {
            let s = n.powf(r - 2.0);
            [s * x[0], s * x[1]]
        }
    };
    let (fa, fb) = (flux(a), flux(b));
    let d = [a[0] - b[0], a[1] - b[1]];
    let pairing = (fa[0] - fb[0]) * d[0] + (fa[1] - fb[1]) * d[1];
    let nd = norm(d);
    let bound = if r >= 2.0 {
        2f64.powf(2.0 - r) * nd.powf(r)
    } else {
        let (na, nb) = (norm(a), norm(b));
        (r - 1.0) * nd * nd * (1.0 + na * na + nb * nb).powf(0.5 * (r - 2.0))
    };
    (pairing, bound)
}

/// The monotonicity lower bound with slack `1e-12·(|A|^{r−1}+|B|^{r−1})(|A|+|B|)`.
pub fn monotonicity_lower_bound_check(r: f64, a: [f64; 2], b: [f64; 2]) -> bool {
    let (lhs, rhs) = monotonicity_terms(r, a, b);
    let (na, nb) = (norm(a), norm(b));
    let scale = (na.powf(r - 1.0) + nb.powf(r - 1.0)) * (na + nb);
    lhs >= rhs - 1e-12 * scale
}

/// `x − a·x^{1/m} ≥ −a(a/m)^{1/(m−1)}` with `1e-12` absolute slack.
pub fn scalar_lower_bound_check(x: f64, a: f64, m: f64) -> bool {
    x - a * x.powf(1.0 / m) >= scalar_lower_bound(a, m) - 1e-12
}

pub fn scalar_lower_bound(a: f64, m: f64) -> f64 {
    -a * (a / m).powf(1.0 / (m - 1.0))
}
