//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Run with `cargo test --test acceptance -- --nocapture --test-threads 1`
//! to see the verdict lines in order.

#![allow(clippy::needless_range_loop)]

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{all_words, brute_interior, cantor, half_third, quarter_eighth, rel_err, report};
use mftube::exponents::beta;
use mftube::ifs::{cut_set, SelfSimilarSystem, Word, DEFAULT_EQ_TOL, DEFAULT_NODE_BUDGET};
use mftube::numeric::{geomspace, least_squares_slope};
use mftube::symbolic::{
    closed_form_constant, closed_form_periodic, default_kappa, exponents_a, rescaled_b, sigma, symbolic_c,
    symbolic_volume,
};
use mftube::tube::{self, ExactEvaluator, MonteCarloEvaluator, TubeEvaluator};
use mftube::zeta::{
    contour_reconstruction, pole_density_check, pole_function, poles_arithmetic, poles_general,
    residue_sum_from_poles, zeta_value,
};

const SECOND: Duration = Duration::from_secs(1);

// Tolerances
const C1_BETA_TOL: f64 = 1e-10;
const C1_BETA_AT_ONE_TOL: f64 = 1e-13;
const C2_MASS_TOL: f64 = 1e-10;
const C3_IDENTITY_TOL: f64 = 1e-12;
const C4_FINAL_TOL: f64 = 1e-3;
const C4_ROUNDOFF_FLOOR: f64 = 1e-12;
const C4_AVERAGE_TOL: f64 = 1e-6;
const C5_SHRINK_FACTOR: f64 = 5.0;
const C5_MEAN_TOL: f64 = 1e-2;
const C6_TOL: f64 = 1e-2;
const C7_TOL: f64 = 1e-3;
const C8_MATCH_TOL: f64 = 1e-9;
const C8_F_TOL: f64 = 1e-10;
const C8_RESIDUE_TOL: f64 = 1e-9;
const C9_HAND_TOL: f64 = 1e-12;
const C9_SLOPE_TOL: f64 = 0.02;
const C9_CONTENT_TOL: f64 = 1e-3;
const C10_TOL: f64 = 0.03;

/// Mean of `f` over `x ∈ (n, n + 1)` by composite Simpson on `m` panels,
/// staying off the lattice endpoints.
fn period_average<F: Fn(f64) -> f64>(f: F, n: f64, m: usize) -> f64 {
    let eps = 1e-9;
    let (a, b) = (n + eps, n + 1.0 - eps);
    let h = (b - a) / m as f64;
    let mut total = f(a) + f(b);
    for j in 1..m {
        total += if j % 2 == 1 { 4.0 } else { 2.0 } * f(a + h * j as f64);
    }
    total * h / 3.0 / (b - a)
}

fn random_system(rng: &mut ChaCha8Rng) -> SelfSimilarSystem {
    let n = rng.random_range(2..6);
    let ratios: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.6)).collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
    let head: f64 = probs[..n - 1].iter().sum();
    probs[n - 1] = 1.0 - head;
    let translations: Vec<f64> = (0..n).map(|i| i as f64).collect();
    SelfSimilarSystem::line(&ratios, &translations, &probs).unwrap()
}

#[test]
fn criterion_01_exponents() {
    let t0 = Instant::now();
    let s = cantor();
    let mut worst: f64 = 0.0;
    for k in -10..=10 {
        let q = 0.5 * k as f64;
        let exact = (1.0 - q) * 2f64.ln() / 3f64.ln();
        worst = worst.max((beta(&s, q).unwrap() - exact).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_one: f64 = 0.0;
    for _ in 0..10 {
        worst_one = worst_one.max(beta(&random_system(&mut rng), 1.0).unwrap().abs());
    }
    let ok = worst <= C1_BETA_TOL && worst_one <= C1_BETA_AT_ONE_TOL;
    let detail = format!("max |beta - (1-q)log2/log3| = {worst:.2e}, max |beta(1)| = {worst_one:.2e}");
    assert!(report(1, "exponents", ok, &detail, t0, SECOND));
}

#[test]
fn criterion_02_cut_set_partition() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut mismatched = 0;
    for s in [cantor(), half_third()] {
        let lo = s.r_min().powi(3).ln();
        let mut done = 0;
        while done < 1000 {
            let r = (lo * rng.random::<f64>()).exp();
            let cut = cut_set(&s, r, DEFAULT_EQ_TOL, DEFAULT_NODE_BUDGET).unwrap();
            if !cut.boundary.is_empty() {
                continue;
            }
            worst = worst.max((cut.interior_mass() - 1.0).abs());
            let oracle = brute_interior(&s.ratios(), s.probabilities(), r);
            let oracle_mass: f64 = oracle.iter().map(|w| w.prob).sum();
            if oracle.len() != cut.interior.len() || (oracle_mass - cut.interior_mass()).abs() > 1e-12 {
                mismatched += 1;
            }
            done += 1;
        }
    }
    let ok = worst <= C2_MASS_TOL && mismatched == 0;
    let detail = format!("max |interior mass - 1| = {worst:.2e}, oracle mismatches = {mismatched}");
    assert!(report(2, "cut-set partition", ok, &detail, t0, 10 * SECOND));
}

#[test]
fn criterion_03_rescaled_identity() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for s in [cantor(), half_third()] {
        let lo = (s.r_min().powi(6)).ln();
        let hi = s.r_min().ln();
        for q in [0.0, 0.7, 2.0] {
            let sig = sigma(&s, q);
            let a = exponents_a(&s, q);
            for _ in 0..200 {
                let r = (lo + (hi - lo) * rng.random::<f64>()).exp();
                let cut = cut_set(&s, r, DEFAULT_EQ_TOL, DEFAULT_NODE_BUDGET).unwrap();
                for l in 0..a.len() {
                    let lhs = symbolic_c(&s, q, l, &cut) * r.powf(-a[l]);
                    let b = rescaled_b(&s, q, l, r, DEFAULT_NODE_BUDGET).unwrap();
                    let rhs = sig.values[l] * r.powf(-a[l]) + (sig.values[l] - 1.0) * b;
                    worst = worst.max(rel_err(rhs, lhs));
                }
            }
        }
    }
    let ok = worst <= C3_IDENTITY_TOL;
    let detail = format!("max relative residual = {worst:.2e}");
    assert!(report(3, "rescaled identity", ok, &detail, t0, 30 * SECOND));
}

#[test]
fn criterion_04_arithmetic_asymptotics() {
    let t0 = Instant::now();
    let s = cantor();
    let u = 3f64.ln();
    let mut ok = true;
    let mut details = Vec::new();
    for q in [0.0, 2.0] {
        let k = default_kappa(&s, q, None).unwrap();
        let b = beta(&s, q).unwrap();
        let mut errs = Vec::new();
        let mut last_rel = 0.0;
        let mut decreasing = true;
        for n in 4..=14 {
            let r = 2.0 * 3f64.powi(-n);
            let direct = symbolic_volume(&s, q, r, &k).unwrap().value * r.powf(b);
            let closed = closed_form_periodic(&s, q, &k, r).unwrap();
            let e = (direct - closed).abs();
            if let Some(&prev) = errs.last() {
                if e > f64::max(prev, C4_ROUNDOFF_FLOOR * closed.abs()) {
                    decreasing = false;
                }
            }
            errs.push(e);
            last_rel = e / closed.abs();
        }
        let mean = period_average(|x| closed_form_periodic(&s, q, &k, (-u * x).exp()).unwrap(), 7.0, 4000);
        let average = closed_form_constant(&s, q, &k).unwrap();
        let avg_err = rel_err(mean, average);
        ok &= decreasing && last_rel <= C4_FINAL_TOL && avg_err <= C4_AVERAGE_TOL;
        details.push(format!(
            "q={q}: errors {:.1e}..{:.1e} non-increasing={decreasing}, final rel {last_rel:.1e}, period-average rel {avg_err:.1e}",
            errs[0],
            errs[errs.len() - 1]
        ));
    }
    assert!(report(4, "arithmetic asymptotics", ok, &details.join("; "), t0, 60 * SECOND));
}

#[test]
fn criterion_05_non_arithmetic_asymptotics() {
    let t0 = Instant::now();
    let s = half_third();
    let k = default_kappa(&s, 0.0, None).unwrap();
    let b = beta(&s, 0.0).unwrap();
    let c = closed_form_constant(&s, 0.0, &k).unwrap();
    let top = s.r_min();
    let rs = geomspace(top * 1e-4, top, 50);
    let ys: Vec<(f64, f64)> = rs.iter().map(|&r| (r, symbolic_volume(&s, 0.0, r, &k).unwrap().value * r.powf(b))).collect();
    let spread = |lo: f64, hi: f64| {
        let dev: Vec<f64> = ys.iter().filter(|(r, _)| *r >= lo * (1.0 - 1e-12) && *r <= hi * (1.0 + 1e-12)).map(|(_, y)| *y).collect();
        let n = dev.len() as f64;
        let rms = (dev.iter().map(|y| (y - c) * (y - c)).sum::<f64>() / (n - 1.0)).sqrt();
        (rms, dev.iter().sum::<f64>() / n)
    };
    let (first, _) = spread(top / 10.0, top);
    let (last, last_mean) = spread(top * 1e-4, top * 1e-3);
    let shrink = first / last;
    let mean_err = rel_err(last_mean, c);
    let ok = shrink >= C5_SHRINK_FACTOR && mean_err <= C5_MEAN_TOL;
    let detail = format!(
        "c_sym = {c:.6}, spread first decade {first:.3e}, last decade {last:.3e}, shrink {shrink:.2}x (need {C5_SHRINK_FACTOR}x), last-decade mean rel {mean_err:.1e}"
    );
    assert!(report(5, "non-arithmetic asymptotics", ok, &detail, t0, 60 * SECOND));
}

fn cm_direct_at_level_8() -> f64 {
    // 2^8 interior words of length 8 give C_0 = 2^8, C_1 = (2/3)^8
    2.5 * 2f64.powi(8)
}

#[test]
fn criterion_06_residue_reconstruction() {
    let t0 = Instant::now();
    let s = cantor();
    let k = default_kappa(&s, 0.0, None).unwrap();
    let r = 2.0 * 3f64.powi(-8);
    let direct = symbolic_volume(&s, 0.0, r, &k).unwrap().value;
    let oracle_ok = rel_err(direct, cm_direct_at_level_8()) <= 1e-13;
    let spacing = 2.0 * PI / 3f64.ln();
    let poles = poles_arithmetic(&s, 0.0, 200.5 * spacing).unwrap();
    let err_at = |m: f64| {
        let subset: Vec<_> = poles.iter().filter(|p| p.location.im.abs() <= m * spacing).cloned().collect();
        rel_err(residue_sum_from_poles(&s, 0.0, &k, r, &subset).unwrap().value, direct)
    };
    let final_err = err_at(200.5);
    let window = |lo: usize, hi: usize| (lo..hi).map(|m| err_at(m as f64 + 0.5)).fold(0.0, f64::max);
    let envelope = [window(25, 50), window(50, 100), window(100, 200)];
    let decays = envelope[0] > envelope[1] && envelope[1] > envelope[2];
    let ok = oracle_ok && final_err <= C6_TOL && decays;
    let detail = format!(
        "direct {direct} (oracle ok {oracle_ok}), rel error at 200 spacings {final_err:.2e}, envelope {:.1e} > {:.1e} > {:.1e}",
        envelope[0], envelope[1], envelope[2]
    );
    assert!(report(6, "residue reconstruction", ok, &detail, t0, 30 * SECOND));
}

#[test]
fn criterion_07_contour_reconstruction() {
    let t0 = Instant::now();
    let s = cantor();
    let k = default_kappa(&s, 0.0, None).unwrap();
    let r = 2.0 * 3f64.powi(-8);
    let direct = cm_direct_at_level_8();
    let runs: Vec<_> = [2.0, 3.0, 5.0].iter().map(|&c| (c, contour_reconstruction(&s, 0.0, &k, r, c, 1e4).unwrap())).collect();
    let main_err = rel_err(runs[0].1.value, direct);
    let mut independent = true;
    let mut parts = Vec::new();
    for (c, rec) in &runs[1..] {
        let gap = (rec.value - runs[0].1.value).abs();
        let allowed = rec.error_estimate + runs[0].1.error_estimate;
        independent &= gap <= allowed;
        parts.push(format!("c={c}: |diff| {gap:.2e} vs tol {allowed:.2e}"));
    }
    let ok = main_err <= C7_TOL && independent;
    let detail = format!("c=2 rel error {main_err:.2e} (est {:.1e}); {}", runs[0].1.error_estimate / direct, parts.join(", "));
    assert!(report(7, "contour reconstruction", ok, &detail, t0, 60 * SECOND));
}

#[test]
fn criterion_08_pole_machinery() {
    let t0 = Instant::now();
    let mut ok = true;
    let mut details = Vec::new();
    for (name, s, k_max) in [("CM", cantor(), 1.0), ("(1/4,1/8)", quarter_eighth(), 3.0)] {
        let arith = poles_arithmetic(&s, 0.0, 100.0).unwrap();
        let general = poles_general(&s, 0.0, 100.0, 0.5).unwrap();
        let agree = arith.len() == general.len()
            && arith.iter().all(|p| general.iter().any(|g| (g.location - p.location).norm() <= C8_MATCH_TOL));
        let mut worst_f: f64 = 0.0;
        let mut worst_res: f64 = 0.0;
        for p in arith.iter().chain(&general) {
            worst_f = worst_f.max(pole_function(&s, 0.0, p.location).norm());
            // residue oracle: trapezoid rule for (1/2πi)∮ ζ on a small circle
            let rho = 1e-3;
            let n = 64;
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n {
                let e = Complex64::from_polar(1.0, 2.0 * PI * j as f64 / n as f64);
                acc += zeta_value(&s, 0.0, p.location + rho * e).unwrap() * rho * e;
            }
            let numeric = acc / n as f64;
            let lib = p.residue_zeta.expect("simple pole");
            worst_res = worst_res.max((numeric - lib).norm() / lib.norm());
        }
        let symmetric = [&arith, &general].iter().all(|set| {
            set.iter().all(|p| set.iter().any(|x| x.location == p.location.conj() && x.residue_zeta == p.residue_zeta.map(|r| r.conj())))
        });
        let lattice = poles_arithmetic(&s, 0.0, 1000.0).unwrap();
        let t_grid: Vec<f64> = (1..=1000).map(|t| t as f64).collect();
        let worst_dev = pole_density_check(&s, &lattice, &t_grid).iter().map(|r| r.deviation.abs()).fold(0.0, f64::max);
        let this_ok = agree && worst_f <= C8_F_TOL && worst_res <= C8_RESIDUE_TOL && symmetric && worst_dev <= k_max + 2.0;
        ok &= this_ok;
        details.push(format!(
            "{name}: {} poles, methods agree {agree}, max|f| {worst_f:.1e}, residue rel {worst_res:.1e}, conjugate-closed {symmetric}, max density deviation {worst_dev:.2}",
            arith.len()
        ));
    }
    assert!(report(8, "pole machinery", ok, &details.join("; "), t0, 120 * SECOND));
}

#[test]
fn criterion_09_renewal_and_tube() {
    let t0 = Instant::now();
    let s = cantor();
    let v_half = tube::tube_volume_exact_1d(&s, 0.5).unwrap().value;
    let v_sixth = tube::tube_volume_exact_1d(&s, 1.0 / 6.0).unwrap().value;
    let hand_ok = (v_half - 4.0).abs() <= C9_HAND_TOL && (v_sixth - 8.0).abs() <= C9_HAND_TOL;

    let mc = MonteCarloEvaluator { samples: 200_000, seed: 9, depth_cap: tube::DEFAULT_DEPTH_CAP };
    let mut slopes = Vec::new();
    for (q, eval, points) in [(0.0, &ExactEvaluator as &dyn TubeEvaluator, 31), (2.0, &mc as &dyn TubeEvaluator, 10)] {
        let rs = geomspace(1e-4, 1e-1, points);
        let xs: Vec<f64> = rs.iter().map(|r| -r.ln()).collect();
        let ys: Vec<f64> = rs.iter().map(|&r| eval.volume(&s, q, r).unwrap().value.ln()).collect();
        slopes.push((q, least_squares_slope(&xs, &ys), beta(&s, q).unwrap()));
    }
    let slope_ok = slopes.iter().all(|(_, m, b)| (m - b).abs() <= C9_SLOPE_TOL);

    let grid = geomspace(3f64.powi(-12), 3f64.powi(-5), 101);
    let content = tube::minkowski_content(&s, 0.0, &ExactEvaluator, &grid).unwrap();
    let content_err = rel_err(content.averaged, content.renewal_constant);
    let ok = hand_ok && slope_ok && content_err <= C9_CONTENT_TOL;
    let detail = format!(
        "V_1/2 = {v_half}, V_1/6 = {v_sixth}; slopes {}; averaged {:.10} vs c_0 {:.10} (rel {content_err:.1e})",
        slopes.iter().map(|(q, m, b)| format!("q={q}: {m:.4} vs beta {b:.4}")).collect::<Vec<_>>().join(", "),
        content.averaged,
        content.renewal_constant
    );
    assert!(report(9, "renewal and tube numerics", ok, &detail, t0, 120 * SECOND));
}

#[test]
fn criterion_10_tube_measure_ratios() {
    let t0 = Instant::now();
    let s = cantor();
    let r = 3f64.powi(-8);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for q in [0.0, 2.0] {
        for w in ["1", "2"] {
            let word = Word::parse(&s, w).unwrap();
            let limit = tube::tube_measure_limit(&s, q, &word).unwrap();
            let ratio = tube::tube_measure_ratio(&s, q, &word, r, 400_000, 10).unwrap();
            let e = rel_err(ratio, limit);
            worst = worst.max(e);
            parts.push(format!("q={q} w={w}: {ratio:.4}"));
        }
    }
    let ok = worst <= C10_TOL;
    let detail = format!("{} vs limit 0.5, max rel error {worst:.2e}", parts.join(", "));
    assert!(report(10, "tube-measure ratios", ok, &detail, t0, 60 * SECOND));
}

#[test]
fn oracle_words_cover_cut_sets() {
    // sanity of the brute-force oracle itself: 2 + 4 + 8 words
    assert_eq!(all_words(&[0.5, 0.5], &[0.5, 0.5], 3).len(), 14);
}
