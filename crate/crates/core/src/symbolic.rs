//! Symbolic multifractal Minkowski volumes built from cut sets.
//!
//! With `a_l = l − d q` and `σ_l = Σ_i p_i^q r_i^{a_l}`, the symbolic volume
//! is `V^{sym}(r) = Σ_l κ_l C_l(r) r^{−a_l}`, where `C_l` sums
//! `p_i^q r_i^{a_l}` over the cut set at scale r (boundary words weighted
//! by `(1 + 1/σ_l)/2`) and κ satisfies `Σ_l κ_l (σ_l − 1) = 0`.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exponents::{arithmetic_structure, beta};
use crate::ifs::{self, cut_set, visit_words, CutSet, SelfSimilarSystem, Visit};
use crate::numeric::CompensatedSum;

pub const KAPPA_TOL: f64 = 1e-12;
pub const SIGMA_UNIT_TOL: f64 = 1e-12;
pub const EXCLUDED_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaVector {
    pub q: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaVector {
    pub q: f64,
    values: Vec<f64>,
}

impl KappaVector {
    /// Validates the consistency condition against `sigma`.
    pub fn new(sigma: &SigmaVector, values: Vec<f64>) -> Result<Self> {
        if values.len() != sigma.values.len() {
            return Err(Error::DimensionMismatch { expected: sigma.values.len(), found: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("kappa entries must be finite".into()));
        }
        let residual = consistency_residual(sigma, &values);
        if residual.abs() > KAPPA_TOL * consistency_scale(sigma, &values) {
            return Err(Error::InconsistentKappa { residual });
        }
        Ok(KappaVector { q: sigma.q, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `s κ`, which still satisfies the consistency condition.
    pub fn scaled(&self, s: f64) -> KappaVector {
        KappaVector { q: self.q, values: self.values.iter().map(|k| s * k).collect() }
    }
}

pub fn consistency_residual(sigma: &SigmaVector, kappa: &[f64]) -> f64 {
    kappa.iter().zip(&sigma.values).map(|(k, s)| k * (s - 1.0)).collect::<CompensatedSum>().value()
}

/// `Σ_l |κ_l| (|σ_l| + 1)`, the magnitude cancelled in the residual.
pub fn consistency_scale(sigma: &SigmaVector, kappa: &[f64]) -> f64 {
    kappa.iter().zip(&sigma.values).map(|(k, s)| k.abs() * (s.abs() + 1.0)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymbolicTerm {
    pub l: usize,
    pub c: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymbolicVolume {
    pub r: f64,
    pub q: f64,
    pub value: f64,
    pub per_l: Vec<SymbolicTerm>,
}

/// The exponents `a_l = l − d q`, `l = 0..=d`.
pub fn exponents_a(system: &SelfSimilarSystem, q: f64) -> Vec<f64> {
    let d = system.dimension();
    (0..=d).map(|l| l as f64 - d as f64 * q).collect()
}

pub fn sigma(system: &SelfSimilarSystem, q: f64) -> SigmaVector {
    let values = exponents_a(system, q)
        .into_iter()
        .map(|a| (0..system.len()).map(|i| system.weight(i, q, a)).collect::<CompensatedSum>().value())
        .collect();
    SigmaVector { q, values }
}

/// A κ satisfying the consistency condition.
///
/// With an anchor, the anchor is projected onto the constraint hyperplane.
/// Otherwise κ_l = 1 wherever σ_l = 1, the lowest remaining index is pinned
/// to 1 and the rest is the least-norm completion; a single remaining index
/// gets 0. When every σ_l = 1 the constraint is vacuous and the anchor (or
/// all-ones) is returned with a warning.
pub fn default_kappa(system: &SelfSimilarSystem, q: f64, anchor: Option<&[f64]>) -> Result<KappaVector> {
    let s = sigma(system, q);
    let n = s.values.len();
    let v: Vec<f64> = s.values.iter().map(|x| x - 1.0).collect();
    let free: Vec<usize> = (0..n).filter(|&l| v[l].abs() > SIGMA_UNIT_TOL).collect();

    if let Some(a) = anchor {
        if a.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: a.len() });
        }
        if free.is_empty() {
            log::warn!("DegenerateConstraint: every sigma equals 1, anchor returned unchanged");
            return KappaVector::new(&s, a.to_vec());
        }
        let vv: f64 = free.iter().map(|&l| v[l] * v[l]).sum();
        let av: f64 = free.iter().map(|&l| a[l] * v[l]).sum();
        let mut k = a.to_vec();
        for &l in &free {
            k[l] -= av / vv * v[l];
        }
        // a nearly parallel anchor leaves an error of order ε|a|; one
        // refinement pass brings it down to order ε|κ|
        let residual = consistency_residual(&s, &k);
        for &l in &free {
            k[l] -= residual / vv * v[l];
        }
        return KappaVector::new(&s, k);
    }

    let mut k = vec![1.0; n];
    match free.len() {
        0 => log::warn!("DegenerateConstraint: every sigma equals 1, kappa set to all ones"),
        1 => k[free[0]] = 0.0,
        _ => {
            let pin = free[0];
            let rest = &free[1..];
            let vv: f64 = rest.iter().map(|&l| v[l] * v[l]).sum();
            for &l in rest {
                k[l] = -v[pin] * v[l] / vv;
            }
        }
    }
    KappaVector::new(&s, k)
}

/// `C_l(r)` from a precomputed cut set.
pub fn symbolic_c(system: &SelfSimilarSystem, q: f64, l: usize, cut: &CutSet) -> f64 {
    let a = exponents_a(system, q)[l];
    let s = sigma(system, q).values[l];
    let term = |w: &ifs::Word| (q * w.prob_product().ln() + a * w.ratio_product().ln()).exp();
    let interior = cut.interior.iter().map(term).collect::<CompensatedSum>().value();
    let boundary = cut.boundary.iter().map(term).collect::<CompensatedSum>().value();
    interior + 0.5 * (1.0 + 1.0 / s) * boundary
}

/// `V^{sym}(r)`; below `r_min` a cut set over the node budget is replaced by
/// the identity `C_l r^{−a_l} = σ_l r^{−a_l} + (σ_l − 1) B_l(r)` with `B_l`
/// from the memoized renewal recursion.
pub fn symbolic_volume(system: &SelfSimilarSystem, q: f64, r: f64, kappa: &KappaVector) -> Result<SymbolicVolume> {
    symbolic_volume_with(system, q, r, kappa, ifs::DEFAULT_EQ_TOL, ifs::DEFAULT_NODE_BUDGET)
}

pub fn symbolic_volume_with(
    system: &SelfSimilarSystem,
    q: f64,
    r: f64,
    kappa: &KappaVector,
    eq_tol: f64,
    node_budget: u64,
) -> Result<SymbolicVolume> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidArgument(format!("radius {r} must lie in (0, 1)")));
    }
    let s = sigma(system, q);
    if kappa.values.len() != s.values.len() {
        return Err(Error::DimensionMismatch { expected: s.values.len(), found: kappa.values.len() });
    }
    let a = exponents_a(system, q);
    let per_l: Vec<SymbolicTerm> = match cut_set(system, r, eq_tol, node_budget) {
        Ok(cut) => (0..a.len())
            .map(|l| {
                let c = symbolic_c(system, q, l, &cut);
                SymbolicTerm { l, c, contribution: kappa.values[l] * c * r.powf(-a[l]) }
            })
            .collect(),
        Err(Error::BudgetExceeded { .. }) if r < system.r_min() => {
            log::info!("cut set at r = {r} exceeds the node budget, using the renewal recursion");
            (0..a.len())
                .map(|l| {
                    let b = rescaled_b_recursive(system, q, l, r, eq_tol);
                    let scaled = s.values[l] * r.powf(-a[l]) + (s.values[l] - 1.0) * b;
                    SymbolicTerm { l, c: scaled * r.powf(a[l]), contribution: kappa.values[l] * scaled }
                })
                .collect()
        }
        Err(e) => return Err(e),
    };
    let value = per_l.iter().map(|t| t.contribution).collect::<CompensatedSum>().value();
    Ok(SymbolicVolume { r, q, value, per_l })
}

/// Half-valued step: 1 for x > 0, 1/2 at 0 (relative tolerance), 0 below.
fn half_step(ratio: f64, r: f64, eq_tol: f64) -> f64 {
    if (ratio - r).abs() <= eq_tol * r {
        0.5
    } else if ratio > r {
        1.0
    } else {
        0.0
    }
}

/// `B_l(r) = Σ_{i ≠ ∅} p_i^q (r_i/r)^{a_l} E(r_i − r)` by depth-first
/// enumeration of the words with `r_i ≥ r`.
pub fn rescaled_b(system: &SelfSimilarSystem, q: f64, l: usize, r: f64, word_budget: u64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidArgument(format!("radius {r} must lie in (0, 1)")));
    }
    let a = exponents_a(system, q)[l];
    let tol = ifs::DEFAULT_EQ_TOL;
    let mut sum = CompensatedSum::new();
    visit_words(system, word_budget, |_, ratio, prob, _| {
        let e = half_step(ratio, r, tol);
        if e == 0.0 {
            return Visit::Skip;
        }
        sum.add(e * (q * prob.ln() + a * (ratio / r).ln()).exp());
        Visit::Descend
    })?;
    Ok(sum.value())
}

/// `B_l` through `B(r) = Σ_i p_i^q [(r_i/r)^{a} E(r_i − r) + B(r/r_i)]`,
/// memoized on the letter-count vector that determines `r/r_i`.
pub fn rescaled_b_recursive(system: &SelfSimilarSystem, q: f64, l: usize, r: f64, eq_tol: f64) -> f64 {
    let a = exponents_a(system, q)[l];
    let logs = system.log_ratios().to_vec();
    let w: Vec<f64> = system.log_probs().iter().map(|lp| (q * lp).exp()).collect();
    let r_max = system.r_max();
    let mut memo: HashMap<Vec<u32>, f64> = HashMap::new();

    #[allow(clippy::too_many_arguments)]
    fn go(
        counts: &mut Vec<u32>,
        log_r: f64,
        logs: &[f64],
        w: &[f64],
        a: f64,
        r_max: f64,
        eq_tol: f64,
        memo: &mut HashMap<Vec<u32>, f64>,
    ) -> f64 {
        // s = r / r_counts
        let log_s = log_r - counts.iter().zip(logs).map(|(&c, lr)| c as f64 * lr).sum::<f64>();
        let s = log_s.exp();
        if s > r_max * (1.0 + eq_tol) {
            return 0.0;
        }
        if let Some(&v) = memo.get(counts.as_slice()) {
            return v;
        }
        let mut total = CompensatedSum::new();
        for i in 0..logs.len() {
            let ri = logs[i].exp();
            let e = half_step(ri, s, eq_tol);
            if e > 0.0 {
                total.add(w[i] * e * (a * (logs[i] - log_s)).exp());
            }
            counts[i] += 1;
            let sub = go(counts, log_r, logs, w, a, r_max, eq_tol, memo);
            counts[i] -= 1;
            total.add(w[i] * sub);
        }
        let v = total.value();
        memo.insert(counts.clone(), v);
        v
    }

    let mut counts = vec![0u32; logs.len()];
    go(&mut counts, r.ln(), &logs, &w, a, r_max, eq_tol, &mut memo)
}

/// `μ̄ = −Σ_i p_i^q r_i^{β} log r_i`.
pub fn mean_log_weight(system: &SelfSimilarSystem, q: f64, b: f64) -> f64 {
    -(0..system.len()).map(|i| system.weight(i, q, b) * system.log_ratios()[i]).collect::<CompensatedSum>().value()
}

fn check_excluded(system: &SelfSimilarSystem, q: f64, b: f64) -> Result<()> {
    for a in exponents_a(system, q) {
        if (b - a).abs() <= EXCLUDED_TOL {
            return Err(Error::ExcludedExponent { beta: b, exponent: a });
        }
    }
    Ok(())
}

/// Constant asymptotic value of `r^{β} V^{sym}(r)` for non-arithmetic
/// systems, and the log-average of the periodic limit for arithmetic ones:
/// `(1/μ̄) Σ_l κ_l (σ_l − 1)/(β − a_l)`.
pub fn closed_form_constant(system: &SelfSimilarSystem, q: f64, kappa: &KappaVector) -> Result<f64> {
    let b = beta(system, q)?;
    check_excluded(system, q, b)?;
    let s = sigma(system, q);
    let a = exponents_a(system, q);
    let sum = (0..a.len())
        .map(|l| kappa.values[l] * (s.values[l] - 1.0) / (b - a[l]))
        .collect::<CompensatedSum>()
        .value();
    Ok(sum / mean_log_weight(system, q, b))
}

/// Multiplicatively periodic limit of `r^{β} V^{sym}(r)` for an arithmetic
/// system with generator u:
/// `(u/μ̄) Σ_l κ_l (σ_l − 1)/(1 − e^{−u(β−a_l)}) · e^{−u(β−a_l) {−log r/u}}`,
/// with the weight replaced by `(e^{−u(β−a_l)} + 1)/2` on the lattice
/// `e^{−uZ}`. This sign convention reproduces direct enumeration exactly on
/// the middle-third Cantor measure; the variant with `e^{+u(·)}` weights
/// does not.
pub fn closed_form_periodic(system: &SelfSimilarSystem, q: f64, kappa: &KappaVector, r: f64) -> Result<f64> {
    closed_form_periodic_with(system, q, kappa, r, ifs::DEFAULT_EQ_TOL)
}

pub fn closed_form_periodic_with(
    system: &SelfSimilarSystem,
    q: f64,
    kappa: &KappaVector,
    r: f64,
    eq_tol: f64,
) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("radius {r} must be positive")));
    }
    let u = arithmetic_structure(system).u.ok_or(Error::NotArithmetic)?;
    let b = beta(system, q)?;
    check_excluded(system, q, b)?;
    let s = sigma(system, q);
    let a = exponents_a(system, q);
    let x = -r.ln() / u;
    let n = x.round();
    let on_lattice = ((x - n) * u).abs() <= eq_tol;
    let frac = x - x.floor();
    let sum = (0..a.len())
        .map(|l| {
            let g = (-u * (b - a[l])).exp();
            let w = if on_lattice { 0.5 * (g + 1.0) } else { (-u * (b - a[l]) * frac).exp() };
            kappa.values[l] * (s.values[l] - 1.0) / (1.0 - g) * w
        })
        .collect::<CompensatedSum>()
        .value();
    Ok(u * sum / mean_log_weight(system, q, b))
}
