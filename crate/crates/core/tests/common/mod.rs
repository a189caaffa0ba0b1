//! Independent brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::time::{Duration, Instant};

use mftube::SelfSimilarSystem;

pub const CM_RATIO: f64 = 1.0 / 3.0;

pub fn cantor() -> SelfSimilarSystem {
    SelfSimilarSystem::line(&[CM_RATIO, CM_RATIO], &[0.0, 2.0 / 3.0], &[0.5, 0.5]).unwrap()
}

pub fn half_third() -> SelfSimilarSystem {
    SelfSimilarSystem::line(&[0.5, 1.0 / 3.0], &[0.0, 2.0 / 3.0], &[0.5, 0.5]).unwrap()
}

pub fn quarter_eighth() -> SelfSimilarSystem {
    SelfSimilarSystem::line(&[0.25, 0.125], &[0.0, 0.75], &[0.5, 0.5]).unwrap()
}

/// A word as (ratio product, probability product, parent ratio product).
#[derive(Debug, Clone, Copy)]
pub struct BruteWord {
    pub ratio: f64,
    pub prob: f64,
    pub parent: f64,
}

/// Every nonempty word of length at most `max_len`, by plain iteration.
pub fn all_words(ratios: &[f64], probs: &[f64], max_len: usize) -> Vec<BruteWord> {
    let mut out = Vec::new();
    let mut level = vec![BruteWord { ratio: 1.0, prob: 1.0, parent: f64::NAN }];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &level {
            for i in 0..ratios.len() {
                next.push(BruteWord { ratio: w.ratio * ratios[i], prob: w.prob * probs[i], parent: w.ratio });
            }
        }
        out.extend(next.iter().copied());
        level = next;
    }
    out
}

/// Interior cut-set words `r_i < r < r_parent` by exhaustive search.
pub fn brute_interior(ratios: &[f64], probs: &[f64], r: f64) -> Vec<BruteWord> {
    let r_max = ratios.iter().cloned().fold(0.0, f64::max);
    let max_len = (r.ln() / r_max.ln()).ceil() as usize + 1;
    all_words(ratios, probs, max_len).into_iter().filter(|w| w.ratio < r && r < w.parent).collect()
}

/// Prints a one-line verdict and returns whether the criterion passed
/// (including its runtime budget).
pub fn report(id: u32, name: &str, ok: bool, detail: &str, started: Instant, budget: Duration) -> bool {
    let elapsed = started.elapsed();
    let within = elapsed <= budget;
    let pass = ok && within;
    println!(
        "criterion {id:>2} [{}] {name}: {detail}; runtime {:.2}s (budget {}s)",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

pub fn rel_err(x: f64, reference: f64) -> f64 {
    (x - reference).abs() / reference.abs()
}
