//! Multifractal zeta functions, their poles and residues, and the
//! reconstructions of the symbolic volume from them.
//!
//! `ζ(s) = g(s)/(1 − g(s))` with `g(s) = Σ_i p_i^q r_i^s`; the poles of ζ
//! are the zeros of `f(s) = 1 − g(s)`. The modified zeta function is
//! `Z(s) = [Σ_l κ_l (σ_l − 1)/(s − a_l)] ζ(s)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exponents::{alpha, arithmetic_structure, beta};
use crate::ifs::{rng_for, SelfSimilarSystem};
use crate::numeric::{adaptive_gk, gauss_kronrod_15};
use crate::symbolic::{exponents_a, sigma, KappaVector};

pub const NEAR_POLE_TOL: f64 = 1e-12;
pub const POLE_RESIDUAL_TOL: f64 = 1e-10;
pub const MULTIPLE_ROOT_TOL: f64 = 1e-10;
pub const DEDUP_TOL: f64 = 1e-8;
pub const MAX_QUADRISECTION_DEPTH: usize = 8;
const WINDING_INTEGER_TOL: f64 = 1e-3;
const EDGE_SHIFT: f64 = 1e-5;
const DK_MAX_ITER: usize = 1000;
const DK_RESTARTS: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZetaPole {
    #[serde(serialize_with = "ser_complex")]
    pub location: Complex64,
    /// `res(ζ; ω)`; absent for non-simple poles.
    #[serde(serialize_with = "ser_opt_complex")]
    pub residue_zeta: Option<Complex64>,
    pub winding: i32,
    pub simple: bool,
}

fn ser_complex<S: serde::Serializer>(z: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
    [z.re, z.im].serialize(s)
}

fn ser_opt_complex<S: serde::Serializer>(z: &Option<Complex64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    z.map(|z| [z.re, z.im]).serialize(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeLine {
    #[serde(serialize_with = "ser_complex")]
    pub base: Complex64,
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoleLattice {
    pub u: f64,
    pub lines: Vec<LatticeLine>,
}

/// `g(s) = Σ_i p_i^q r_i^s`.
pub fn dirichlet_sum(system: &SelfSimilarSystem, q: f64, s: Complex64) -> Complex64 {
    (0..system.len())
        .map(|i| (q * system.log_probs()[i] + s * system.log_ratios()[i]).exp())
        .sum()
}

/// `g'(s) = Σ_i p_i^q r_i^s log r_i`.
pub fn dirichlet_derivative(system: &SelfSimilarSystem, q: f64, s: Complex64) -> Complex64 {
    (0..system.len())
        .map(|i| {
            let lr = system.log_ratios()[i];
            (q * system.log_probs()[i] + s * lr).exp() * lr
        })
        .sum()
}

/// `f(s) = 1 − g(s)`, whose zeros are the poles of ζ.
pub fn pole_function(system: &SelfSimilarSystem, q: f64, s: Complex64) -> Complex64 {
    Complex64::new(1.0, 0.0) - dirichlet_sum(system, q, s)
}

/// `res(ζ; ω) = 1/(−Σ p_i^q r_i^ω log r_i)` at a simple pole.
pub fn residue_zeta(system: &SelfSimilarSystem, q: f64, omega: Complex64) -> Complex64 {
    -dirichlet_derivative(system, q, omega).inv()
}

pub fn zeta_value(system: &SelfSimilarSystem, q: f64, s: Complex64) -> Result<Complex64> {
    let g = dirichlet_sum(system, q, s);
    let den = Complex64::new(1.0, 0.0) - g;
    if den.norm() < NEAR_POLE_TOL {
        return Err(Error::NearPole { re: s.re, im: s.im, tol: NEAR_POLE_TOL });
    }
    Ok(g / den)
}

/// `Σ_l κ_l (σ_l − 1)/(s − a_l)`.
pub fn zeta_prefactor(system: &SelfSimilarSystem, q: f64, kappa: &KappaVector, s: Complex64) -> Result<Complex64> {
    let sig = sigma(system, q);
    let mut total = Complex64::new(0.0, 0.0);
    for (l, a) in exponents_a(system, q).into_iter().enumerate() {
        let d = s - a;
        if d.norm() < NEAR_POLE_TOL {
            return Err(Error::NearPole { re: s.re, im: s.im, tol: NEAR_POLE_TOL });
        }
        total += kappa.values()[l] * (sig.values[l] - 1.0) / d;
    }
    Ok(total)
}

pub fn modified_zeta_value(system: &SelfSimilarSystem, q: f64, kappa: &KappaVector, s: Complex64) -> Result<Complex64> {
    Ok(zeta_prefactor(system, q, kappa, s)? * zeta_value(system, q, s)?)
}

fn horner(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// All roots of `Σ_j coeffs[j] z^j` by Durand–Kerner simultaneous
/// iteration with randomised restarts, followed by Newton polishing.
pub fn polynomial_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = coeffs.iter().rposition(|c| c.norm() > 0.0).unwrap_or(0);
    if n == 0 {
        return Ok(Vec::new());
    }
    let lead = coeffs[n];
    let monic: Vec<Complex64> = coeffs[..=n].iter().map(|c| c / lead).collect();
    let bound = 1.0 + monic[..n].iter().map(|c| c.norm()).fold(0.0, f64::max);
    for attempt in 0..=DK_RESTARTS {
        let mut rng = rng_for(attempt, 0x646b);
        let phase: f64 = if attempt == 0 { 0.4 } else { rng.random::<f64>() * 2.0 * PI };
        let mut z: Vec<Complex64> = (0..n)
            .map(|j| {
                let radius = if attempt == 0 { 0.9 * bound } else { bound * (0.5 + 0.5 * rng.random::<f64>()) };
                Complex64::from_polar(radius, phase + 2.0 * PI * j as f64 / n as f64)
            })
            .collect();
        let mut converged = false;
        for _ in 0..DK_MAX_ITER {
            let mut max_step: f64 = 0.0;
            for j in 0..n {
                let (p, _) = horner(&monic, z[j]);
                let mut den = Complex64::new(1.0, 0.0);
                for k in 0..n {
                    if k != j {
                        den *= z[j] - z[k];
                    }
                }
                if den.norm() == 0.0 {
                    den = Complex64::new(1e-300, 0.0);
                }
                let step = p / den;
                z[j] -= step;
                max_step = max_step.max(step.norm() / z[j].norm().max(1e-300));
            }
            if !max_step.is_finite() {
                break;
            }
            if max_step < 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            log::debug!("Durand-Kerner attempt {attempt} did not converge, restarting");
            continue;
        }
        for root in z.iter_mut() {
            for _ in 0..5 {
                let (p, dp) = horner(&monic, *root);
                if dp.norm() == 0.0 {
                    break;
                }
                *root -= p / dp;
            }
        }
        let ok = z.iter().all(|&root| {
            let scale: f64 = monic.iter().enumerate().map(|(j, c)| c.norm() * root.norm().powi(j as i32)).sum();
            horner(&monic, root).0.norm() <= 1e-13 * scale
        });
        if ok {
            return Ok(z);
        }
    }
    Err(Error::RootFindingFailure(format!("no convergence for degree {n} after {DK_RESTARTS} restarts")))
}

/// Pole lines of ζ for an arithmetic system: each root w of
/// `P(z) = 1 − Σ_i p_i^q z^{k_i}` gives the line
/// `−log|w|/u − i Arg(w)/u + (2π i/u) Z`.
pub fn pole_lattice(system: &SelfSimilarSystem, q: f64) -> Result<PoleLattice> {
    let st = arithmetic_structure(system);
    let (u, ks) = match (st.u, st.k) {
        (Some(u), Some(k)) => (u, k),
        _ => return Err(Error::NotArithmetic),
    };
    let k_max = *ks.iter().max().expect("nonempty system") as usize;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); k_max + 1];
    coeffs[0] = Complex64::new(1.0, 0.0);
    for (i, &k) in ks.iter().enumerate() {
        coeffs[k as usize] -= (q * system.log_probs()[i]).exp();
    }
    let roots = polynomial_roots(&coeffs)?;
    let mut lines: Vec<LatticeLine> = roots
        .into_iter()
        .map(|w| LatticeLine {
            base: Complex64::new(-w.norm().ln() / u, -w.arg() / u),
            spacing: 2.0 * PI / u,
        })
        .collect();
    lines.sort_by(|a, b| b.base.re.total_cmp(&a.base.re).then(a.base.im.total_cmp(&b.base.im)));
    Ok(PoleLattice { u, lines })
}

/// Winding number of `f` around the rectangle, `(1/2πi) ∮ f'/f ds`.
pub fn winding_number(system: &SelfSimilarSystem, q: f64, re: (f64, f64), im: (f64, f64)) -> f64 {
    let mut total = Complex64::new(0.0, 0.0);
    for (a, b) in rectangle_edges(re, im) {
        total += edge_integral(system, q, a, b, |_| Complex64::new(1.0, 0.0));
    }
    (total / Complex64::new(0.0, 2.0 * PI)).re
}

fn rectangle_edges(re: (f64, f64), im: (f64, f64)) -> [(Complex64, Complex64); 4] {
    let c = |x: f64, y: f64| Complex64::new(x, y);
    [
        (c(re.0, im.0), c(re.1, im.0)),
        (c(re.1, im.0), c(re.1, im.1)),
        (c(re.1, im.1), c(re.0, im.1)),
        (c(re.0, im.1), c(re.0, im.0)),
    ]
}

/// `∫_a^b h(s) f'(s)/f(s) ds` along a straight segment.
fn edge_integral<H: Fn(Complex64) -> Complex64>(
    system: &SelfSimilarSystem,
    q: f64,
    a: Complex64,
    b: Complex64,
    h: H,
) -> Complex64 {
    let d = b - a;
    let mut integrand = |t: f64| {
        let s = a + d * t;
        let f = pole_function(system, q, s);
        let df = -dirichlet_derivative(system, q, s);
        h(s) * df / f * d
    };
    adaptive_gk(&mut integrand, 0.0, 1.0, 1e-9, 40).0
}

fn rect_integral<H: Fn(Complex64) -> Complex64 + Copy>(
    system: &SelfSimilarSystem,
    q: f64,
    re: (f64, f64),
    im: (f64, f64),
    h: H,
) -> Complex64 {
    rectangle_edges(re, im).iter().map(|&(a, b)| edge_integral(system, q, a, b, h)).sum()
}

fn newton_polish(system: &SelfSimilarSystem, q: f64, mut s: Complex64) -> Option<Complex64> {
    for _ in 0..60 {
        let f = pole_function(system, q, s);
        let df = -dirichlet_derivative(system, q, s);
        if df.norm() == 0.0 || !f.is_finite() {
            return None;
        }
        let step = f / df;
        s -= step;
        if step.norm() <= 1e-15 * s.norm().max(1.0) {
            break;
        }
    }
    s.is_finite().then_some(s)
}

fn make_pole(system: &SelfSimilarSystem, q: f64, omega: Complex64, winding: i32) -> ZetaPole {
    let simple = dirichlet_derivative(system, q, omega).norm() >= MULTIPLE_ROOT_TOL && winding == 1;
    ZetaPole { location: omega, residue_zeta: simple.then(|| residue_zeta(system, q, omega)), winding, simple }
}

/// Poles of ζ with `|Im ω| ≤ imag_max` from the pole lattice, each
/// certified by a winding count on a small box around it.
pub fn poles_arithmetic(system: &SelfSimilarSystem, q: f64, imag_max: f64) -> Result<Vec<ZetaPole>> {
    let lattice = pole_lattice(system, q)?;
    let u = lattice.u;
    let half = (PI / u).min(1e-3) / 2.0;
    let mut poles = Vec::new();
    for line in &lattice.lines {
        let sp = line.spacing;
        let m_lo = ((-imag_max - line.base.im) / sp).ceil() as i64;
        let m_hi = ((imag_max - line.base.im) / sp).floor() as i64;
        for m in m_lo..=m_hi {
            let guess = line.base + Complex64::new(0.0, sp * m as f64);
            // lower half-plane poles are added as exact conjugates below
            if guess.im < -DEDUP_TOL {
                continue;
            }
            let mut omega = newton_polish(system, q, guess).unwrap_or(guess);
            if omega.im.abs() <= DEDUP_TOL {
                omega.im = 0.0;
            }
            let w = winding_number(system, q, (omega.re - half, omega.re + half), (omega.im - half, omega.im + half));
            let winding = w.round() as i32;
            let pole = make_pole(system, q, omega, winding);
            if !pole.simple {
                log::warn!("{}", Error::MultipleRoot { re: omega.re, im: omega.im });
            }
            if omega.im > 0.0 {
                poles.push(ZetaPole {
                    location: omega.conj(),
                    residue_zeta: pole.residue_zeta.map(|r| r.conj()),
                    ..pole.clone()
                });
            }
            poles.push(pole);
        }
    }
    Ok(finish_pole_list(poles))
}

fn finish_pole_list(mut poles: Vec<ZetaPole>) -> Vec<ZetaPole> {
    poles.sort_by(|a, b| {
        a.location.im.abs().total_cmp(&b.location.im.abs())
            .then(b.location.re.total_cmp(&a.location.re))
            .then(a.location.im.total_cmp(&b.location.im))
    });
    let mut out: Vec<ZetaPole> = Vec::with_capacity(poles.len());
    for p in poles {
        if !out.iter().any(|o| (o.location - p.location).norm() < DEDUP_TOL) {
            out.push(p);
        }
    }
    out
}

/// Poles of ζ in `[α − m, β + m] × [−imag_max, imag_max]` by an
/// argument-principle scan over cells of height `π/(−log r_min)`.
pub fn poles_general(system: &SelfSimilarSystem, q: f64, imag_max: f64, re_margin: f64) -> Result<Vec<ZetaPole>> {
    if !(imag_max > 0.0) || !(re_margin >= 0.0) {
        return Err(Error::InvalidArgument("imag_max must be positive and re_margin non-negative".into()));
    }
    let margin = re_margin.max(EDGE_SHIFT);
    let re = (alpha(system, q)? - margin, beta(system, q)? + margin);
    let h = PI / (-system.r_min().ln());
    let mut found = Vec::new();
    let mut y0 = -0.3 * h;
    while y0 < imag_max {
        let mut y1 = (y0 + h).min(imag_max + 0.3 * h);
        let mut w = winding_number(system, q, re, (y0, y1));
        let mut shifts = 0;
        while (w - w.round()).abs() > WINDING_INTEGER_TOL {
            if shifts == 5 {
                return Err(Error::UnresolvedCluster { re_lo: re.0, re_hi: re.1, im_lo: y0, im_hi: y1 });
            }
            log::debug!("winding {w} not integral on [{y0}, {y1}], shifting top edge");
            y1 += EDGE_SHIFT;
            shifts += 1;
            w = winding_number(system, q, re, (y0, y1));
        }
        resolve_cell(system, q, re, (y0, y1), w.round() as i32, 0, &mut found)?;
        y0 = y1;
    }
    let mut poles = Vec::new();
    for mut p in found {
        if p.location.im.abs() <= imag_max && p.location.im >= -DEDUP_TOL {
            if p.location.im.abs() > DEDUP_TOL {
                poles.push(ZetaPole {
                    location: p.location.conj(),
                    residue_zeta: p.residue_zeta.map(|r| r.conj()),
                    ..p.clone()
                });
            } else {
                p.location.im = 0.0;
                p.residue_zeta = p.residue_zeta.map(|r| Complex64::new(r.re, 0.0));
            }
            poles.push(p);
        }
    }
    Ok(finish_pole_list(poles))
}

fn resolve_cell(
    system: &SelfSimilarSystem,
    q: f64,
    re: (f64, f64),
    im: (f64, f64),
    winding: i32,
    depth: usize,
    out: &mut Vec<ZetaPole>,
) -> Result<()> {
    if winding <= 0 {
        return Ok(());
    }
    let inside = |s: Complex64, slack: f64| {
        s.re >= re.0 - slack && s.re <= re.1 + slack && s.im >= im.0 - slack && s.im <= im.1 + slack
    };
    if winding == 1 {
        let first_moment = rect_integral(system, q, re, im, |s| s) / Complex64::new(0.0, 2.0 * PI);
        if let Some(s) = newton_polish(system, q, first_moment) {
            if inside(s, 1e-6) && pole_function(system, q, s).norm() <= POLE_RESIDUAL_TOL {
                out.push(make_pole(system, q, s, 1));
                return Ok(());
            }
        }
    }
    if depth >= MAX_QUADRISECTION_DEPTH {
        return Err(Error::UnresolvedCluster { re_lo: re.0, re_hi: re.1, im_lo: im.0, im_hi: im.1 });
    }
    let xm = 0.5 * (re.0 + re.1) + 1e-7 * (re.1 - re.0);
    let ym = 0.5 * (im.0 + im.1) + 1e-7 * (im.1 - im.0);
    for (rx, iy) in [((re.0, xm), (im.0, ym)), ((xm, re.1), (im.0, ym)), ((re.0, xm), (ym, im.1)), ((xm, re.1), (ym, im.1))] {
        let w = winding_number(system, q, rx, iy);
        if (w - w.round()).abs() > WINDING_INTEGER_TOL {
            return Err(Error::UnresolvedCluster { re_lo: rx.0, re_hi: rx.1, im_lo: iy.0, im_hi: iy.1 });
        }
        resolve_cell(system, q, rx, iy, w.round() as i32, depth + 1, out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityRow {
    pub t: f64,
    pub count: usize,
    pub expected: f64,
    pub deviation: f64,
}

/// Pole counts `#{|Im ω| ≤ t}` against `γ t` with `γ = −log r_min / π`.
pub fn pole_density_check(system: &SelfSimilarSystem, poles: &[ZetaPole], t_grid: &[f64]) -> Vec<DensityRow> {
    let gamma = -system.r_min().ln() / PI;
    t_grid
        .iter()
        .map(|&t| {
            let count = poles.iter().filter(|p| p.location.im.abs() <= t).count();
            DensityRow { t, count, expected: gamma * t, deviation: count as f64 - gamma * t }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidueReconstruction {
    pub value: f64,
    pub terms: usize,
}

/// Poles up to `imag_max` from the lattice when the system is arithmetic,
/// from the argument-principle scan otherwise.
pub fn poles_auto(system: &SelfSimilarSystem, q: f64, imag_max: f64) -> Result<Vec<ZetaPole>> {
    if arithmetic_structure(system).is_arithmetic {
        poles_arithmetic(system, q, imag_max)
    } else {
        poles_general(system, q, imag_max, 0.5)
    }
}

/// `Σ_ω res(Z r^{−s}; ω)` over the poles of ζ with `|Im ω| ≤ imag_max`,
/// accumulated in conjugate pairs by increasing `|Im ω|`. The poles of the
/// prefactor at `s = a_l` cancel the `Σ_l κ_l σ_l r^{−a_l}` term exactly.
pub fn residue_sum_reconstruction(
    system: &SelfSimilarSystem,
    q: f64,
    kappa: &KappaVector,
    r: f64,
    imag_max: f64,
) -> Result<ResidueReconstruction> {
    let poles = poles_auto(system, q, imag_max)?;
    residue_sum_from_poles(system, q, kappa, r, &poles)
}

pub fn residue_sum_from_poles(
    system: &SelfSimilarSystem,
    q: f64,
    kappa: &KappaVector,
    r: f64,
    poles: &[ZetaPole],
) -> Result<ResidueReconstruction> {
    if !(r > 0.0 && r < system.r_min()) {
        return Err(Error::InvalidArgument(format!("radius {r} must lie in (0, r_min)")));
    }
    let b = beta(system, q)?;
    for a in exponents_a(system, q) {
        if (b - a).abs() <= crate::symbolic::EXCLUDED_TOL {
            return Err(Error::ExcludedExponent { beta: b, exponent: a });
        }
    }
    let log_r = r.ln();
    let mut total = Complex64::new(0.0, 0.0);
    let mut comp = Complex64::new(0.0, 0.0);
    let mut magnitude = 0.0;
    for p in poles {
        let res = match (p.simple, p.residue_zeta) {
            (true, Some(res)) => res,
            _ => return Err(Error::NonSimplePole { re: p.location.re, im: p.location.im }),
        };
        let term = zeta_prefactor(system, q, kappa, p.location)? * res * (-p.location * log_r).exp();
        magnitude += term.norm();
        // Kahan step on both components
        let y = term - comp;
        let t = total + y;
        comp = (t - total) - y;
        total = t;
    }
    if total.im.abs() > 1e-9 * total.norm().max(1e-16 * magnitude) {
        return Err(Error::ImaginaryResidual { imag: total.im, total: total.re });
    }
    Ok(ResidueReconstruction { value: total.re, terms: poles.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContourReconstruction {
    pub value: f64,
    /// Quadrature error + truncation tail (increment over the upper half
    /// of the range) + rounding of the oscillatory sum.
    pub error_estimate: f64,
}

/// `Σ_l κ_l σ_l r^{−a_l} + (1/π) ∫_0^T Re[Z(c + it) r^{−c−it}] dt`.
pub fn contour_reconstruction(
    system: &SelfSimilarSystem,
    q: f64,
    kappa: &KappaVector,
    r: f64,
    c: f64,
    imag_max: f64,
) -> Result<ContourReconstruction> {
    if !(r > 0.0 && r < system.r_min()) {
        return Err(Error::InvalidArgument(format!("radius {r} must lie in (0, r_min)")));
    }
    if !(imag_max > 0.0) {
        return Err(Error::InvalidArgument("imag_max must be positive".into()));
    }
    let a = exponents_a(system, q);
    let bound = a.iter().cloned().fold(beta(system, q)?, f64::max);
    if !(c > bound) {
        return Err(Error::BadContour { c, bound });
    }
    let sig = sigma(system, q);
    let base: f64 = (0..a.len()).map(|l| kappa.values()[l] * sig.values[l] * r.powf(-a[l])).sum();
    let log_r = r.ln();
    let mut integrand = |t: f64| -> Complex64 {
        let s = Complex64::new(c, t);
        let z = modified_zeta_value(system, q, kappa, s).unwrap_or(Complex64::new(f64::NAN, 0.0));
        Complex64::new((z * (-s * log_r).exp()).re, 0.0)
    };
    // panels resolve the r^{-it} oscillation
    let width = (PI / log_r.abs()).min(1.0);
    let panels = (imag_max / width).ceil() as usize;
    let width = imag_max / panels as f64;
    let panel_tol = 1e-12 * base.abs().max(1.0);
    let mut total = 0.0;
    let mut comp = 0.0;
    let mut half_total = 0.0;
    let mut quad_err = 0.0;
    let mut abs_mass = 0.0;
    for k in 0..panels {
        if k == panels / 2 {
            half_total = total;
        }
        let (t0, t1) = (k as f64 * width, (k + 1) as f64 * width);
        let mass = integrand(0.5 * (t0 + t1)).re.abs() * (t1 - t0);
        // below this the panel sum is dominated by rounding
        let tol = panel_tol.max(1e3 * f64::EPSILON * mass);
        let (v, e) = gauss_kronrod_15(&mut integrand, t0, t1);
        let (v, e) = if e > tol { adaptive_gk(&mut integrand, t0, t1, tol, 8) } else { (v, e) };
        if !v.re.is_finite() {
            return Err(Error::NearPole { re: c, im: t0, tol: NEAR_POLE_TOL });
        }
        quad_err += e;
        abs_mass += mass;
        let y = v.re - comp;
        let t = total + y;
        comp = (t - total) - y;
        total = t;
    }
    // the integrand decays like 1/t², so the tail beyond T is about the
    // increment over [T/2, T]
    let tail = (total - half_total).abs();
    let value = base + total / PI;
    let rounding = f64::EPSILON * (abs_mass / PI + base.abs()) * (panels as f64).sqrt();
    Ok(ContourReconstruction { value, error_estimate: (quad_err + tail) / PI + rounding })
}

/// `Re Σ_{|k| ≤ K} (e^a − 1)/(a − 2πik) e^{2πikx}`, the Fourier series of
/// `e^{a {x}}` (equal to `(e^a + 1)/2` at integers).
pub fn fourier_exp_partial_sum(a: f64, x: f64, k_max: u64) -> f64 {
    let ea = a.exp() - 1.0;
    let mut total = ea / a;
    for k in 1..=k_max {
        let w = 2.0 * PI * k as f64;
        let term = Complex64::new(ea, 0.0) / Complex64::new(a, -w) * Complex64::from_polar(1.0, w * x);
        total += 2.0 * term.re;
    }
    total
}
