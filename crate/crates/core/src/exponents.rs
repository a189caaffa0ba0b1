//! Exponent functions β(q), α(q), γ(q), lattice detection of the log
//! ratios, and discrete Legendre transforms.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ifs::{SelfSimilarSystem, Word};
use crate::numeric::{compensated_sum, golden_section_min};

pub const MAX_ITERATIONS: usize = 200;
/// Relative tolerance used to group maps sharing the minimal ratio.
pub const RATIO_GROUP_TOL: f64 = 1e-12;
pub const ALPHA_SCAN_STEP: f64 = 0.25;
pub const ALPHA_BISECTION_TOL: f64 = 1e-12;
/// Largest denominator tried when testing log-ratio rationality.
pub const RATIONAL_Q_MAX: u64 = 10_000;
/// Relative tolerance for accepting a convergent as exact.
pub const RATIONAL_TOL: f64 = 1e-12;
/// Convergents matching only at this looser level are reported as ambiguous.
pub const RATIONAL_WARN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentProfile {
    pub q: f64,
    pub beta: f64,
    pub alpha: f64,
    pub gamma: Option<f64>,
    pub beta_residual: f64,
    pub alpha_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArithmeticStructure {
    pub is_arithmetic: bool,
    /// Lattice generator: every `-log r_i` equals `k_i * u`.
    pub u: Option<f64>,
    pub k: Option<Vec<u64>>,
}

/// Solves `Σ exp(c_j + t ℓ_j) = 1` for t, with all `ℓ_j < 0`.
///
/// The left side is strictly decreasing in t. Works on the log of the
/// sum so extreme exponents do not overflow; Newton steps that leave the
/// current bracket fall back to bisection.
fn solve_moment_equation(terms: &[(f64, f64)]) -> Result<f64> {
    let log_phi = |t: f64| -> (f64, f64) {
        let m = terms.iter().map(|(c, l)| c + t * l).fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        let mut ds = 0.0;
        for (c, l) in terms {
            let w = (c + t * l - m).exp();
            s += w;
            ds += w * l;
        }
        (m + s.ln(), ds / s)
    };
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let mut guard = 0;
    while log_phi(lo).0 <= 0.0 {
        lo *= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(Error::NoConvergence { what: "moment equation bracketing", iterations: guard });
        }
    }
    while log_phi(hi).0 >= 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(Error::NoConvergence { what: "moment equation bracketing", iterations: guard });
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..MAX_ITERATIONS {
        let (g, dg) = log_phi(t);
        // log Φ carries a few ulps of rounding, so a smaller target can cycle
        if g.abs() <= 4.0 * f64::EPSILON {
            return Ok(t);
        }
        if g > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - g / dg;
        let next = if newton >= lo && newton <= hi { newton } else { 0.5 * (lo + hi) };
        if (next - t).abs() <= 4.0 * f64::EPSILON * t.abs().max(1e-300) || hi - lo <= 4.0 * f64::EPSILON * t.abs() {
            return Ok(next);
        }
        t = next;
    }
    Err(Error::NoConvergence { what: "moment equation", iterations: MAX_ITERATIONS })
}

/// `Σ_i p_i^q r_i^t`, compensated.
pub fn moment_sum(system: &SelfSimilarSystem, q: f64, t: f64) -> f64 {
    compensated_sum((0..system.len()).map(|i| system.weight(i, q, t)))
}

/// The unique β with `Σ p_i^q r_i^β = 1`.
pub fn beta(system: &SelfSimilarSystem, q: f64) -> Result<f64> {
    if q == 1.0 {
        return Ok(0.0);
    }
    let terms: Vec<(f64, f64)> = system
        .log_probs()
        .iter()
        .zip(system.log_ratios())
        .map(|(lp, lr)| (q * lp, *lr))
        .collect();
    solve_moment_equation(&terms)
}

pub fn beta_residual(system: &SelfSimilarSystem, q: f64, beta: f64) -> f64 {
    (moment_sum(system, q, beta) - 1.0).abs()
}

/// `Φ_q(t) = 1 + Σ_{r_i > r_min} p_i^q r_i^t − Σ_{r_i = r_min} p_i^q r_min^t`.
pub fn alpha_criterion(system: &SelfSimilarSystem, q: f64, t: f64) -> f64 {
    let r_min = system.r_min();
    let mut s = crate::numeric::CompensatedSum::new();
    s.add(1.0);
    for i in 0..system.len() {
        let w = system.weight(i, q, t);
        if is_min_ratio(system.ratio(i), r_min) {
            s.add(-w);
        } else {
            s.add(w);
        }
    }
    s.value()
}

fn is_min_ratio(r: f64, r_min: f64) -> bool {
    (r - r_min).abs() <= RATIO_GROUP_TOL * r_min
}

/// Left edge of the pole strip: the infimum of `{t : Φ_q(t) ≥ 0}`.
pub fn alpha(system: &SelfSimilarSystem, q: f64) -> Result<f64> {
    let b = beta(system, q)?;
    let r_min = system.r_min();
    if system.ratios().iter().all(|&r| is_min_ratio(r, r_min)) {
        return Ok(b);
    }
    let mut hi = b;
    let mut lo = b - ALPHA_SCAN_STEP;
    let mut steps = 0usize;
    while alpha_criterion(system, q, lo) >= 0.0 {
        hi = lo;
        lo -= ALPHA_SCAN_STEP;
        steps += 1;
        if steps > 1_000_000 {
            return Err(Error::NoConvergence { what: "alpha scan", iterations: steps });
        }
    }
    let mut it = 0;
    while hi - lo > ALPHA_BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if alpha_criterion(system, q, mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        it += 1;
        if it > 10_000 {
            return Err(Error::NoConvergence { what: "alpha bisection", iterations: it });
        }
    }
    Ok(hi)
}

/// The unique γ with `Σ_{|i| = m, i ≠ excluded} p_i^q r_i^γ = 1`,
/// where `m` is the length of the excluded word.
pub fn gamma(system: &SelfSimilarSystem, q: f64, excluded: &Word) -> Result<f64> {
    let m = excluded.len();
    if m == 0 {
        return Err(Error::InvalidArgument("excluded word must be nonempty".into()));
    }
    let n = system.len();
    let total = (n as f64).powi(m as i32);
    if total > 1e7 {
        return Err(Error::InvalidArgument(format!("{n}^{m} words is too many to enumerate")));
    }
    let mut terms = Vec::with_capacity(total as usize);
    let mut letters = vec![0usize; m];
    loop {
        if letters.iter().zip(excluded.letters()).any(|(a, &b)| *a != b as usize) {
            let lp: f64 = letters.iter().map(|&l| system.log_probs()[l]).sum();
            let lr: f64 = letters.iter().map(|&l| system.log_ratios()[l]).sum();
            terms.push((q * lp, lr));
        }
        // odometer increment, last letter fastest
        let mut pos = m;
        loop {
            if pos == 0 {
                return solve_moment_equation(&terms);
            }
            pos -= 1;
            letters[pos] += 1;
            if letters[pos] < n {
                break;
            }
            letters[pos] = 0;
        }
    }
}

pub fn profile(system: &SelfSimilarSystem, q: f64, excluded: Option<&Word>) -> Result<ExponentProfile> {
    let b = beta(system, q)?;
    let a = alpha(system, q)?;
    let gamma = excluded.map(|w| gamma(system, q, w)).transpose()?;
    Ok(ExponentProfile {
        q,
        beta: b,
        alpha: a,
        gamma,
        beta_residual: beta_residual(system, q, b),
        alpha_residual: alpha_criterion(system, q, a).abs(),
    })
}

/// Best rational approximation `h/k` with `k ≤ q_max` and relative error
/// at most `tol`, walking the continued-fraction convergents of `x > 0`.
fn rational_approximation(x: f64, q_max: u64, tol: f64) -> Option<(u64, u64)> {
    let (mut h0, mut h1) = (1u64, x.floor() as u64);
    let (mut k0, mut k1) = (0u64, 1u64);
    let mut frac = x - x.floor();
    loop {
        if ((h1 as f64) / (k1 as f64) - x).abs() <= tol * x {
            return Some((h1, k1));
        }
        if frac <= 0.0 {
            return None;
        }
        let inv = 1.0 / frac;
        let a = inv.floor();
        frac = inv - a;
        let a = a as u64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > q_max {
            return None;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Decides whether `{log r_i^{-1}}` lies in a lattice `uZ`.
pub fn arithmetic_structure(system: &SelfSimilarSystem) -> ArithmeticStructure {
    arithmetic_structure_with(system, RATIONAL_Q_MAX, RATIONAL_TOL)
}

pub fn arithmetic_structure_with(system: &SelfSimilarSystem, q_max: u64, tol: f64) -> ArithmeticStructure {
    let non = ArithmeticStructure { is_arithmetic: false, u: None, k: None };
    let ells: Vec<f64> = system.log_ratios().iter().map(|l| -l).collect();
    // Anchor on the largest log so every ratio lies in (0, 1].
    let base = ells.iter().cloned().fold(0.0, f64::max);
    let mut fracs = Vec::with_capacity(ells.len());
    for &l in &ells {
        match rational_approximation(l / base, q_max, tol) {
            Some(hk) => fracs.push(hk),
            None => {
                if rational_approximation(l / base, q_max, RATIONAL_WARN_TOL).is_some() {
                    log::warn!(
                        "log-ratio quotient {} is rational only at tolerance {RATIONAL_WARN_TOL:e}; treating system as non-arithmetic",
                        l / base
                    );
                }
                return non;
            }
        }
    }
    // l_i = (h_i / k_i) * base; bring to a common denominator.
    let mut lcm: u64 = 1;
    for &(_, k) in &fracs {
        let g = gcd(lcm, k);
        lcm = match (lcm / g).checked_mul(k) {
            Some(v) if v <= q_max.saturating_mul(q_max) => v,
            _ => return non,
        };
    }
    let mut ks: Vec<u64> = fracs.iter().map(|&(h, k)| h * (lcm / k)).collect();
    let g = ks.iter().cloned().fold(0, gcd);
    if g == 0 {
        return non;
    }
    ks.iter_mut().for_each(|k| *k /= g);
    let num: f64 = ks.iter().zip(&ells).map(|(&k, l)| k as f64 * l).sum();
    let den: f64 = ks.iter().map(|&k| (k as f64) * (k as f64)).sum();
    let u = num / den;
    let ok = ks.iter().zip(&ells).all(|(&k, l)| (l - k as f64 * u).abs() <= 1e-9 * l);
    if !ok {
        return non;
    }
    ArithmeticStructure { is_arithmetic: true, u: Some(u), k: Some(ks) }
}

/// Discrete Legendre transform `inf_y (x y + φ(y))` over sampled
/// `(y, φ(y))` pairs. The discrete minimiser is refined by golden-section
/// search on the quadratic through its neighbours; a minimum that keeps
/// decreasing into the edge of the grid is reported as `-inf`.
pub fn legendre(samples: &[(f64, f64)], x: f64) -> Result<f64> {
    legendre_impl(samples, x, None::<fn(f64) -> f64>)
}

/// As [`legendre`], refining against the exact function `phi` instead of
/// a local interpolant.
pub fn legendre_with<F: Fn(f64) -> f64>(samples: &[(f64, f64)], x: f64, phi: F) -> Result<f64> {
    legendre_impl(samples, x, Some(phi))
}

fn legendre_impl<F: Fn(f64) -> f64>(samples: &[(f64, f64)], x: f64, phi: Option<F>) -> Result<f64> {
    if samples.len() < 3 {
        return Err(Error::InsufficientSamples { needed: 3, got: samples.len() });
    }
    if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::InvalidArgument("legendre samples must have increasing y".into()));
    }
    let vals: Vec<f64> = samples.iter().map(|(y, p)| x * y + p).collect();
    let k = (0..vals.len()).fold(0, |best, i| if vals[i] < vals[best] { i } else { best });
    let n = vals.len();
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let edge_tol = 1e-12 * scale;
    if (k == 0 && vals[0] < vals[1] - edge_tol) || (k == n - 1 && vals[n - 1] < vals[n - 2] - edge_tol) {
        return Ok(f64::NEG_INFINITY);
    }
    if k == 0 || k == n - 1 {
        return Ok(vals[k]);
    }
    let (y0, y1, y2) = (samples[k - 1].0, samples[k].0, samples[k + 1].0);
    let (p0, p1, p2) = (samples[k - 1].1, samples[k].1, samples[k + 1].1);
    let interp = |y: f64| {
        // Lagrange quadratic through the three neighbouring samples
        p0 * (y - y1) * (y - y2) / ((y0 - y1) * (y0 - y2))
            + p1 * (y - y0) * (y - y2) / ((y1 - y0) * (y1 - y2))
            + p2 * (y - y0) * (y - y1) / ((y2 - y0) * (y2 - y1))
    };
    let tol = 1e-10 * (y2 - y0);
    let (_, refined) = match &phi {
        Some(f) => golden_section_min(|y| x * y + f(y), y0, y2, tol),
        None => golden_section_min(|y| x * y + interp(y), y0, y2, tol),
    };
    Ok(refined.min(vals[k]))
}

/// Multifractal spectrum `f(a) = inf_q (a q + β(q))` sampled on `q_grid`.
pub fn spectrum(system: &SelfSimilarSystem, q_grid: &[f64], a: f64) -> Result<f64> {
    let samples = q_grid
        .iter()
        .map(|&q| beta(system, q).map(|b| (q, b)))
        .collect::<Result<Vec<_>>>()?;
    legendre_with(&samples, a, |q| beta(system, q).unwrap_or(f64::NAN))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cantor() -> SelfSimilarSystem {
        SelfSimilarSystem::line(&[1.0 / 3.0, 1.0 / 3.0], &[0.0, 2.0 / 3.0], &[0.5, 0.5]).unwrap()
    }

    fn half_third() -> SelfSimilarSystem {
        SelfSimilarSystem::line(&[0.5, 1.0 / 3.0], &[0.0, 2.0 / 3.0], &[0.5, 0.5]).unwrap()
    }

    #[test]
    fn beta_cantor_closed_forms() {
        let s = cantor();
        let d = 2f64.ln() / 3f64.ln();
        assert!((beta(&s, 0.0).unwrap() - d).abs() < 1e-12);
        assert_eq!(beta(&s, 1.0).unwrap(), 0.0);
        assert!((beta(&s, 2.0).unwrap() + d).abs() < 1e-12);
    }

    #[test]
    fn beta_residual_small_at_extreme_q() {
        let s = SelfSimilarSystem::line(&[0.2, 0.45, 0.1], &[0.0, 0.3, 0.85], &[0.1, 0.7, 0.2]).unwrap();
        for q in [-20.0, -5.0, -0.3, 0.0, 0.5, 3.0, 25.0] {
            let b = beta(&s, q).unwrap();
            assert!(beta_residual(&s, q, b) <= 1e-13, "q={q}: residual {}", beta_residual(&s, q, b));
        }
    }

    #[test]
    fn alpha_equals_beta_for_equal_ratios() {
        let s = cantor();
        for q in [-3.0, 0.0, 0.5, 2.0] {
            assert_eq!(alpha(&s, q).unwrap(), beta(&s, q).unwrap());
        }
    }

    #[test]
    fn beta_converges_near_zero() {
        let s = SelfSimilarSystem::line(
            &[0.25344572859464404, 0.09946594427791652],
            &[0.0, 0.9005340557220836],
            &[0.5139091485607774, 0.4860908514392226],
        )
        .unwrap();
        for q in [0.9203535993894374, 0.9303535993894374, 0.99, 1.0, 1.01] {
            let b = beta(&s, q).unwrap();
            assert!(beta_residual(&s, q, b) <= 1e-14, "q {q}");
        }
    }

    #[test]
    fn alpha_half_third_q0() {
        // Φ_0(t) = 1 + 2^{-t} − 3^{-t} vanishes at t = −1 (3 = 1 + 2).
        let a = alpha(&half_third(), 0.0).unwrap();
        assert!((a + 1.0).abs() < 1e-11, "{a}");
        assert!(a <= beta(&half_third(), 0.0).unwrap());
    }

    #[test]
    fn gamma_examples() {
        let s = cantor();
        let g = gamma(&s, 0.0, &Word::parse(&s, "1").unwrap()).unwrap();
        assert!(g.abs() < 1e-13);
        let g = gamma(&s, 0.0, &Word::parse(&s, "11").unwrap()).unwrap();
        assert!((g - 0.5).abs() < 1e-13);
        assert!(gamma(&s, 0.0, &Word::empty()).is_err());
    }

    #[test]
    fn arithmetic_examples() {
        let a = arithmetic_structure(&cantor());
        assert!(a.is_arithmetic);
        assert!((a.u.unwrap() - 3f64.ln()).abs() < 1e-14);
        assert_eq!(a.k.unwrap(), vec![1, 1]);

        let s = SelfSimilarSystem::line(&[0.25, 0.125], &[0.0, 0.5], &[0.5, 0.5]).unwrap();
        let a = arithmetic_structure(&s);
        assert!(a.is_arithmetic);
        assert!((a.u.unwrap() - 2f64.ln()).abs() < 1e-14);
        assert_eq!(a.k.unwrap(), vec![2, 3]);

        assert!(!arithmetic_structure(&half_third()).is_arithmetic);
    }

    #[test]
    fn legendre_of_parabola_and_line() {
        let ys = crate::numeric::linspace(-2.0, 2.0, 41);
        let par: Vec<(f64, f64)> = ys.iter().map(|&y| (y, y * y)).collect();
        assert!(legendre(&par, 0.0).unwrap().abs() < 1e-12);
        // inf_y (x y + y^2) = -x^2/4 inside the grid
        assert!((legendre(&par, 1.0).unwrap() + 0.25).abs() < 1e-9);

        let a = 1.5;
        let line: Vec<(f64, f64)> = ys.iter().map(|&y| (y, -a * y)).collect();
        assert!(legendre(&line, a).unwrap().abs() < 1e-12);
        assert_eq!(legendre(&line, a + 0.5).unwrap(), f64::NEG_INFINITY);
        assert_eq!(legendre(&line, a - 0.5).unwrap(), f64::NEG_INFINITY);

        assert!(matches!(legendre(&par[..2], 0.0), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn cantor_spectrum_at_dimension() {
        let d = 2f64.ln() / 3f64.ln();
        let qs = crate::numeric::linspace(-5.0, 5.0, 101);
        let f = spectrum(&cantor(), &qs, d).unwrap();
        assert!((f - d).abs() < 1e-12, "{f}");
    }
}
