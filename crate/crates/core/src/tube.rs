//! Multifractal Minkowski volumes `V^q_{μ,r}(K)`, the renewal kernel
//! `λ_q`, Minkowski contents and tube-measure ratios.
//!
//! One-dimensional systems get an exact evaluator for `q = 0` (Lebesgue
//! measure of the r-neighbourhood from the gap structure) and an exact
//! interval measure `μ([a, b])`. Everything else is Monte Carlo.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exponents::{arithmetic_structure, beta, moment_sum};
use crate::ifs::{self, rng_for, sample_cloud, visit_words, SelfSimilarSystem, Visit, Word};
use crate::numeric::{adaptive_simpson, trapezoid};

pub const DEFAULT_DEPTH_CAP: usize = 60;
pub const MIN_SAMPLES: usize = 1_000;
pub const CLOUD_SIZE: usize = 10_000;
pub const CLOUD_DEPTH: usize = 40;
const BATCH: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TubeMethod {
    Exact1d,
    MonteCarlo,
}

impl TubeMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            TubeMethod::Exact1d => "exact1d",
            TubeMethod::MonteCarlo => "montecarlo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TubeEstimate {
    pub r: f64,
    pub q: f64,
    pub value: f64,
    pub method: TubeMethod,
    pub stderr: Option<f64>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalMeasureQuery {
    pub interval: (f64, f64),
    pub depth_cap: usize,
    pub value: f64,
    /// Half the total mass of cylinders left unresolved at the depth cap.
    pub error: f64,
}

/// Cached geometry of a one-dimensional system: signed affine maps and
/// the convex hull of the attractor.
#[derive(Debug, Clone)]
pub struct Line1d {
    scale: Vec<f64>,
    shift: Vec<f64>,
    probs: Vec<f64>,
    hull: (f64, f64),
}

/// `x -> a x + b`, the composition along a word applied to the hull.
#[derive(Debug, Clone, Copy)]
struct Affine {
    a: f64,
    b: f64,
}

impl Affine {
    fn then(self, scale: f64, shift: f64) -> Affine {
        // self ∘ (x -> scale x + shift)
        Affine { a: self.a * scale, b: self.a * shift + self.b }
    }

    fn image(self, (lo, hi): (f64, f64)) -> (f64, f64) {
        let (u, v) = (self.a * lo + self.b, self.a * hi + self.b);
        (u.min(v), u.max(v))
    }
}

impl Line1d {
    pub fn new(system: &SelfSimilarSystem) -> Result<Self> {
        system.require_dimension(1)?;
        let hull = system.hull_1d()?;
        Ok(Line1d {
            scale: system.maps().iter().map(|m| m.ratio() * m.orthogonal()[0][0]).collect(),
            shift: system.maps().iter().map(|m| m.translation()[0]).collect(),
            probs: system.probabilities().to_vec(),
            hull,
        })
    }

    pub fn hull(&self) -> (f64, f64) {
        self.hull
    }

    fn word_map(&self, letters: &[u32]) -> Affine {
        letters
            .iter()
            .fold(Affine { a: 1.0, b: 0.0 }, |f, &l| f.then(self.scale[l as usize], self.shift[l as usize]))
    }

    /// Hull of the cylinder `S_w(K)`.
    pub fn cylinder_hull(&self, word: &Word) -> (f64, f64) {
        self.word_map(word.letters()).image(self.hull)
    }

    /// `μ([a, b])` by recursion over cylinders, bracketed at `depth_cap`.
    pub fn measure_interval(&self, a: f64, b: f64, depth_cap: usize) -> IntervalMeasureQuery {
        let mut lower = 0.0;
        let mut unresolved = 0.0;
        let mut stack = vec![(Affine { a: 1.0, b: 0.0 }, 1.0f64, 0usize)];
        while let Some((f, mass, depth)) = stack.pop() {
            let (lo, hi) = f.image(self.hull);
            if a <= lo && hi <= b {
                lower += mass;
            } else if hi < a || lo > b {
                continue;
            } else if depth >= depth_cap {
                unresolved += mass;
            } else {
                for i in 0..self.probs.len() {
                    stack.push((f.then(self.scale[i], self.shift[i]), mass * self.probs[i], depth + 1));
                }
            }
        }
        IntervalMeasureQuery {
            interval: (a, b),
            depth_cap,
            value: lower + 0.5 * unresolved,
            error: 0.5 * unresolved,
        }
    }

    /// Whether `dist(x, K) < r`. Hull endpoints of every cylinder lie in K.
    pub fn in_neighborhood(&self, x: f64, r: f64) -> bool {
        let mut stack = vec![Affine { a: 1.0, b: 0.0 }];
        while let Some(f) = stack.pop() {
            let (lo, hi) = f.image(self.hull);
            if x <= lo - r || x >= hi + r {
                continue;
            }
            if (x - lo).abs() < r || (x - hi).abs() < r {
                return true;
            }
            if hi - lo < 2.0 * r {
                // x sits strictly between lo + r and hi - r: impossible here
                continue;
            }
            for i in 0..self.scale.len() {
                stack.push(f.then(self.scale[i], self.shift[i]));
            }
        }
        false
    }

    /// Lengths of the complementary intervals between first-level hulls.
    pub fn first_level_gaps(&self) -> Result<Vec<f64>> {
        let mut images: Vec<(f64, f64)> = (0..self.scale.len())
            .map(|i| Affine { a: self.scale[i], b: self.shift[i] }.image(self.hull))
            .collect();
        images.sort_by(|x, y| x.0.total_cmp(&y.0));
        let len = self.hull.1 - self.hull.0;
        let mut gaps = Vec::new();
        for w in images.windows(2) {
            let g = w[1].0 - w[0].1;
            if g < -1e-12 * len {
                return Err(Error::OverlappingImages);
            }
            if g > 0.0 {
                gaps.push(g);
            }
        }
        Ok(gaps)
    }

    /// Lebesgue measure of the open r-neighbourhood of K.
    pub fn neighborhood_length(&self, system: &SelfSimilarSystem, r: f64) -> Result<f64> {
        let gaps = self.first_level_gaps()?;
        let g_max = gaps.iter().cloned().fold(0.0, f64::max);
        let mut removed = crate::numeric::CompensatedSum::new();
        let mut add_word = |scale: f64| {
            for &g in &gaps {
                let len = scale * g;
                if len > 2.0 * r {
                    removed.add(len - 2.0 * r);
                }
            }
        };
        if g_max > 2.0 * r {
            add_word(1.0);
            visit_words(system, ifs::DEFAULT_NODE_BUDGET, |_, ratio, _, _| {
                if ratio * g_max > 2.0 * r {
                    add_word(ratio);
                    Visit::Descend
                } else {
                    Visit::Skip
                }
            })?;
        }
        Ok(self.hull.1 - self.hull.0 + 2.0 * r - removed.value())
    }
}

pub fn measure_interval(system: &SelfSimilarSystem, interval: (f64, f64), depth_cap: usize) -> Result<IntervalMeasureQuery> {
    Ok(Line1d::new(system)?.measure_interval(interval.0, interval.1, depth_cap))
}

/// Exact `V_r(K) = L(B(K, r)) / r` for a one-dimensional system whose
/// first-level images do not overlap.
pub fn tube_volume_exact_1d(system: &SelfSimilarSystem, r: f64) -> Result<TubeEstimate> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("radius {r} must be positive")));
    }
    let line = Line1d::new(system)?;
    let len = line.neighborhood_length(system, r)?;
    Ok(TubeEstimate { r, q: 0.0, value: len / r, method: TubeMethod::Exact1d, stderr: None, samples: None })
}

/// Uniform grid of points bucketed by cells of side `cell`.
struct SpatialHash {
    cell: f64,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
    points: Vec<Vec<f64>>,
}

impl SpatialHash {
    fn new(points: Vec<Vec<f64>>, cell: f64) -> Self {
        let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(p, cell)).or_default().push(i);
        }
        SpatialHash { cell, buckets, points }
    }

    fn key(p: &[f64], cell: f64) -> Vec<i64> {
        p.iter().map(|x| (x / cell).floor() as i64).collect()
    }

    /// Number of points with `|p - x| <= r` (requires `r <= cell`).
    fn count_within(&self, x: &[f64], r: f64, stop_at_first: bool) -> usize {
        let base = Self::key(x, self.cell);
        let d = base.len();
        let mut count = 0;
        let mut offset = vec![-1i64; d];
        loop {
            let key: Vec<i64> = base.iter().zip(&offset).map(|(b, o)| b + o).collect();
            if let Some(ids) = self.buckets.get(&key) {
                for &i in ids {
                    let d2: f64 = self.points[i].iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d2 <= r * r {
                        count += 1;
                        if stop_at_first {
                            return count;
                        }
                    }
                }
            }
            let mut k = 0;
            loop {
                if k == d {
                    return count;
                }
                offset[k] += 1;
                if offset[k] <= 1 {
                    break;
                }
                offset[k] = -1;
                k += 1;
            }
        }
    }
}

/// Sampler state for the Monte Carlo estimator.
enum Sampler {
    Line(Line1d),
    Cloud { support: SpatialHash, mass: SpatialHash, mass_count: usize },
}

struct MonteCarloSetup {
    lo: Vec<f64>,
    hi: Vec<f64>,
    sampler: Sampler,
    depth_cap: usize,
}

impl MonteCarloSetup {
    fn new(system: &SelfSimilarSystem, r: f64, samples: usize, seed: u64, depth_cap: usize) -> Result<Self> {
        if system.dimension() == 1 {
            let line = Line1d::new(system)?;
            let (a, b) = line.hull();
            return Ok(MonteCarloSetup { lo: vec![a - r], hi: vec![b + r], sampler: Sampler::Line(line), depth_cap });
        }
        let d = system.dimension();
        let size = samples.max(CLOUD_SIZE);
        let mut rng = rng_for(seed, 0);
        let box_cloud = sample_cloud(system, CLOUD_DEPTH, CLOUD_SIZE, &mut rng);
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for p in &box_cloud {
            for k in 0..d {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let diam = lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
        let pad = r + system.r_max().powi(CLOUD_DEPTH as i32) * diam;
        lo.iter_mut().for_each(|v| *v -= pad);
        hi.iter_mut().for_each(|v| *v += pad);
        let support = SpatialHash::new(sample_cloud(system, CLOUD_DEPTH, size, &mut rng), r);
        let mass = SpatialHash::new(sample_cloud(system, CLOUD_DEPTH, size, &mut rng), r);
        Ok(MonteCarloSetup { lo, hi, sampler: Sampler::Cloud { support, mass, mass_count: size }, depth_cap })
    }

    fn box_volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    /// Kernel value `μ(B(x, r))^q` (0 outside the neighbourhood), or
    /// `None` when x falls outside B(K, r).
    fn kernel(&self, x: &[f64], q: f64, r: f64) -> Result<Option<f64>> {
        let mu = match &self.sampler {
            Sampler::Line(line) => {
                if !line.in_neighborhood(x[0], r) {
                    return Ok(None);
                }
                if q == 0.0 {
                    return Ok(Some(1.0));
                }
                line.measure_interval(x[0] - r, x[0] + r, self.depth_cap).value
            }
            Sampler::Cloud { support, mass, mass_count } => {
                if support.count_within(x, r, true) == 0 {
                    return Ok(None);
                }
                if q == 0.0 {
                    return Ok(Some(1.0));
                }
                mass.count_within(x, r, false) as f64 / *mass_count as f64
            }
        };
        if mu <= 0.0 && q < 0.0 {
            return Err(Error::DegenerateBall { x: x.to_vec(), q });
        }
        Ok(Some(mu.powf(q)))
    }
}

/// Per-batch accumulators, merged in batch order.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    sum: f64,
    sumsq: f64,
    in_region: f64,
}

fn run_batches<F>(samples: usize, seed: u64, setup: &MonteCarloSetup, draw: F) -> Result<Moments>
where
    F: Fn(&[f64]) -> Result<(f64, f64)> + Sync,
{
    let batches = samples.div_ceil(BATCH);
    let parts: Vec<Result<Moments>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_for(seed, b as u64 + 1);
            let n = BATCH.min(samples - b * BATCH);
            let mut m = Moments { n, ..Default::default() };
            let mut x = vec![0.0; setup.lo.len()];
            for _ in 0..n {
                for (k, xk) in x.iter_mut().enumerate() {
                    *xk = setup.lo[k] + (setup.hi[k] - setup.lo[k]) * rng.random::<f64>();
                }
                let (v, region) = draw(&x)?;
                m.sum += v;
                m.sumsq += v * v;
                m.in_region += region;
            }
            Ok(m)
        })
        .collect();
    let mut total = Moments::default();
    for p in parts {
        let p = p?;
        total.n += p.n;
        total.sum += p.sum;
        total.sumsq += p.sumsq;
        total.in_region += p.in_region;
    }
    Ok(total)
}

/// Monte Carlo estimate of `(1/r^d) ∫_{B(K,r)} μ(B(x,r))^q dx`.
pub fn tube_volume(
    system: &SelfSimilarSystem,
    q: f64,
    r: f64,
    samples: usize,
    seed: u64,
    depth_cap: usize,
) -> Result<TubeEstimate> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("radius {r} must be positive")));
    }
    if samples < MIN_SAMPLES {
        return Err(Error::InsufficientSamples { needed: MIN_SAMPLES, got: samples });
    }
    let setup = MonteCarloSetup::new(system, r, samples, seed, depth_cap)?;
    let m = run_batches(samples, seed, &setup, |x| Ok((setup.kernel(x, q, r)?.unwrap_or(0.0), 0.0)))?;
    let n = m.n as f64;
    let mean = m.sum / n;
    let var = ((m.sumsq / n - mean * mean) * n / (n - 1.0)).max(0.0);
    let norm = setup.box_volume() / r.powi(system.dimension() as i32);
    Ok(TubeEstimate {
        r,
        q,
        value: norm * mean,
        method: TubeMethod::MonteCarlo,
        stderr: Some(norm * (var / n).sqrt()),
        samples: Some(samples),
    })
}

/// Something that can produce `V^q_{μ,r}(K)` for any r.
pub trait TubeEvaluator: Sync {
    fn volume(&self, system: &SelfSimilarSystem, q: f64, r: f64) -> Result<TubeEstimate>;

    /// Deterministic and exact up to rounding (enables adaptive quadrature).
    fn is_exact(&self) -> bool {
        false
    }
}

/// Gap-structure evaluator; `q = 0`, `d = 1` only.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactEvaluator;

impl TubeEvaluator for ExactEvaluator {
    fn volume(&self, system: &SelfSimilarSystem, q: f64, r: f64) -> Result<TubeEstimate> {
        if q != 0.0 {
            return Err(Error::InvalidArgument("the exact evaluator only handles q = 0".into()));
        }
        tube_volume_exact_1d(system, r)
    }

    fn is_exact(&self) -> bool {
        true
    }
}

/// Monte Carlo evaluator with common random numbers across radii.
#[derive(Debug, Clone, Copy)]
pub struct MonteCarloEvaluator {
    pub samples: usize,
    pub seed: u64,
    pub depth_cap: usize,
}

impl TubeEvaluator for MonteCarloEvaluator {
    fn volume(&self, system: &SelfSimilarSystem, q: f64, r: f64) -> Result<TubeEstimate> {
        tube_volume(system, q, r, self.samples, self.seed, self.depth_cap)
    }
}

/// `λ_q(r) = V^q_r − Σ_i p_i^q 1_{(0, r_i]}(r) V^q_{r/r_i}`.
pub fn lambda_q(system: &SelfSimilarSystem, q: f64, r: f64, eval: &dyn TubeEvaluator) -> Result<f64> {
    let mut v = eval.volume(system, q, r)?.value;
    for i in 0..system.len() {
        let ri = system.ratio(i);
        if r <= ri {
            v -= system.probabilities()[i].powf(q) * eval.volume(system, q, r / ri)?.value;
        }
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinkowskiContent {
    /// Log-average of `s^β V_s` over the grid.
    pub averaged: f64,
    /// `(1/μ̄) ∫_0^1 r^β λ_q(r) dr/r`.
    pub renewal_constant: f64,
    /// Mean of `s^β V_s` over the smallest decade; only for non-arithmetic systems.
    pub plain: Option<f64>,
}

pub const MIN_GRID_POINTS: usize = 30;
pub const MIN_GRID_DECADES: f64 = 3.0;

fn check_log_grid(r_grid: &[f64]) -> Result<(f64, f64)> {
    if r_grid.len() < MIN_GRID_POINTS {
        return Err(Error::InsufficientSamples { needed: MIN_GRID_POINTS, got: r_grid.len() });
    }
    if r_grid.windows(2).any(|w| !(w[1] > w[0])) || r_grid[0] <= 0.0 {
        return Err(Error::InvalidArgument("r grid must be positive and increasing".into()));
    }
    let (lo, hi) = (r_grid[0], r_grid[r_grid.len() - 1]);
    if (hi / lo).log10() < MIN_GRID_DECADES - 1e-9 {
        return Err(Error::InvalidArgument(format!("r grid spans fewer than {MIN_GRID_DECADES} decades")));
    }
    let step = (hi / lo).ln() / (r_grid.len() - 1) as f64;
    if r_grid.windows(2).any(|w| ((w[1] / w[0]).ln() - step).abs() > 1e-6 * step) {
        return Err(Error::InvalidArgument("r grid must be logarithmically spaced".into()));
    }
    Ok((lo, hi))
}

/// Averaged content and renewal constant for an increasing log-spaced grid.
///
/// The renewal integral runs over `[r_grid[0], 1]`, split at the ratios
/// `r_i` where `λ_q` jumps.
pub fn minkowski_content(
    system: &SelfSimilarSystem,
    q: f64,
    eval: &dyn TubeEvaluator,
    r_grid: &[f64],
) -> Result<MinkowskiContent> {
    let (lo, hi) = check_log_grid(r_grid)?;
    let b = beta(system, q)?;
    let xs: Vec<f64> = r_grid.iter().map(|r| r.ln()).collect();
    let ys = r_grid
        .par_iter()
        .map(|&r| eval.volume(system, q, r).map(|v| r.powf(b) * v.value))
        .collect::<Result<Vec<f64>>>()?;
    let averaged = trapezoid(&xs, &ys) / (hi / lo).ln();

    let renewal_constant = renewal_constant(system, q, b, eval, lo, r_grid.len() as f64 / (hi / lo).log10())?;

    let plain = if arithmetic_structure(system).is_arithmetic {
        None
    } else {
        let cut = lo * 10.0;
        let tail: Vec<f64> = r_grid.iter().zip(&ys).filter(|(r, _)| **r <= cut).map(|(_, y)| *y).collect();
        Some(tail.iter().sum::<f64>() / tail.len() as f64)
    };
    Ok(MinkowskiContent { averaged, renewal_constant, plain })
}

/// `(1/μ̄) ∫_{lo}^{1} r^β λ_q(r) dr/r` in the variable `x = ln r`.
pub fn renewal_constant(
    system: &SelfSimilarSystem,
    q: f64,
    b: f64,
    eval: &dyn TubeEvaluator,
    lo: f64,
    points_per_decade: f64,
) -> Result<f64> {
    let mu_bar = -(0..system.len()).map(|i| system.weight(i, q, b) * system.log_ratios()[i]).sum::<f64>();
    let mut breaks: Vec<f64> = vec![lo.ln(), 0.0];
    breaks.extend(system.log_ratios().iter().cloned().filter(|&x| x > lo.ln() && x < 0.0));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let depth = if eval.is_exact() { 30 } else { 0 };
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, c) = (w[0], w[1]);
        // stay off the jump points of λ
        let eps = 1e-12 * (c - a);
        let panels = ((c - a) / std::f64::consts::LN_10 * points_per_decade).ceil().max(2.0) as usize;
        let h = (c - a - 2.0 * eps) / panels as f64;
        for k in 0..panels {
            let x0 = a + eps + h * k as f64;
            let mut f = |x: f64| lambda_q(system, q, x.exp(), eval).map(|l| (b * x).exp() * l);
            let (v, _) = adaptive_simpson(&mut f, x0, x0 + h, 1e-11, depth)?;
            total += v;
        }
    }
    Ok(total / mu_bar)
}

/// `I^q_{μ,r}(B(S_w K, r)) / I^q_{μ,r}(R)` for a one-dimensional system,
/// estimated from one Monte Carlo sample of the tube.
pub fn tube_measure_ratio(
    system: &SelfSimilarSystem,
    q: f64,
    word: &Word,
    r: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    system.require_dimension(1)?;
    if samples < MIN_SAMPLES {
        return Err(Error::InsufficientSamples { needed: MIN_SAMPLES, got: samples });
    }
    let setup = MonteCarloSetup::new(system, r, samples, seed, DEFAULT_DEPTH_CAP)?;
    let line = match &setup.sampler {
        Sampler::Line(l) => l.clone(),
        Sampler::Cloud { .. } => unreachable!("dimension checked"),
    };
    let (wlo, whi) = line.cylinder_hull(word);
    let (a, b) = (wlo - r, whi + r);
    let m = run_batches(samples, seed, &setup, |x| {
        let k = setup.kernel(x, q, r)?.unwrap_or(0.0);
        let inside = if x[0] > a && x[0] < b { k } else { 0.0 };
        Ok((k, inside))
    })?;
    if m.sum <= 0.0 {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    Ok(m.in_region / m.sum)
}

/// `Σ p_i^q r_i^{β(q)}` over the given words: the limit of
/// [`tube_measure_ratio`] as `r → 0`.
pub fn tube_measure_limit(system: &SelfSimilarSystem, q: f64, word: &Word) -> Result<f64> {
    let b = beta(system, q)?;
    Ok(word.prob_product().powf(q) * word.ratio_product().powf(b))
}

/// Sanity helper: `Σ p_i^q r_i^β` equals 1 at β(q).
pub fn renewal_weight_total(system: &SelfSimilarSystem, q: f64) -> Result<f64> {
    Ok(moment_sum(system, q, beta(system, q)?))
}
