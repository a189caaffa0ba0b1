//! Self-similar systems, words over the code space and cut sets.

use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the orthogonality and probability-sum checks.
pub const SYSTEM_TOL: f64 = 1e-12;
/// Default relative tolerance for the boundary test `r = r_parent`.
pub const DEFAULT_EQ_TOL: f64 = 1e-12;
/// Default cap on DFS node expansions.
pub const DEFAULT_NODE_BUDGET: u64 = 1 << 24;

/// A contracting similarity `x -> ratio * orthogonal * x + translation`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMap {
    ratio: f64,
    orthogonal: Vec<Vec<f64>>,
    translation: Vec<f64>,
}

impl SimilarityMap {
    pub fn new(ratio: f64, orthogonal: Vec<Vec<f64>>, translation: Vec<f64>) -> Result<Self> {
        let d = translation.len();
        if d == 0 {
            return Err(Error::InvalidSystem("translation must be non-empty".into()));
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidSystem(format!("ratio {ratio} not in (0,1)")));
        }
        if orthogonal.len() != d || orthogonal.iter().any(|row| row.len() != d) {
            return Err(Error::InvalidSystem(format!("orthogonal part must be {d}x{d}")));
        }
        if orthogonal.iter().flatten().chain(&translation).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSystem("non-finite map coefficient".into()));
        }
        for i in 0..d {
            for j in 0..d {
                let dot: f64 = (0..d).map(|k| orthogonal[i][k] * orthogonal[j][k]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                if (dot - target).abs() > SYSTEM_TOL {
                    return Err(Error::InvalidSystem(format!(
                        "matrix is not orthogonal: (O O^T)[{i}][{j}] = {dot}"
                    )));
                }
            }
        }
        Ok(Self { ratio, orthogonal, translation })
    }

    /// A pure scaling plus translation (identity orthogonal part).
    pub fn scaling(ratio: f64, translation: Vec<f64>) -> Result<Self> {
        let d = translation.len();
        Self::new(ratio, identity(d), translation)
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn orthogonal(&self) -> &[Vec<f64>] {
        &self.orthogonal
    }

    pub fn translation(&self) -> &[f64] {
        &self.translation
    }

    pub fn dimension(&self) -> usize {
        self.translation.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.orthogonal
            .iter()
            .zip(&self.translation)
            .map(|(row, t)| self.ratio * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + t)
            .collect()
    }

    /// Image of a closed interval under a one-dimensional map.
    pub fn apply_interval(&self, lo: f64, hi: f64) -> (f64, f64) {
        let a = self.apply(&[lo])[0];
        let b = self.apply(&[hi])[0];
        (a.min(b), a.max(b))
    }

    /// Fixed point `(I - ratio O)^{-1} t`.
    pub fn fixed_point(&self) -> Vec<f64> {
        let d = self.dimension();
        let mut a: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| (if i == j { 1.0 } else { 0.0 }) - self.ratio * self.orthogonal[i][j])
                    .collect()
            })
            .collect();
        let mut b = self.translation.clone();
        // Gaussian elimination with partial pivoting; I - rO is well conditioned.
        for col in 0..d {
            let piv = (col..d)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in col + 1..d {
                let f = a[row][col] / a[col][col];
                for k in col..d {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; d];
        for i in (0..d).rev() {
            let s: f64 = (i + 1..d).map(|k| a[i][k] * x[k]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }
}

fn identity(d: usize) -> Vec<Vec<f64>> {
    (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// N contracting similarities on R^d with a probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfSimilarSystem {
    dimension: usize,
    maps: Vec<SimilarityMap>,
    probabilities: Vec<f64>,
    log_ratios: Vec<f64>,
    log_probs: Vec<f64>,
}

impl SelfSimilarSystem {
    pub fn new(dimension: usize, maps: Vec<SimilarityMap>, probabilities: Vec<f64>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidSystem("dimension must be positive".into()));
        }
        if maps.len() < 2 {
            return Err(Error::InvalidSystem(format!("need at least 2 maps, got {}", maps.len())));
        }
        if maps.len() != probabilities.len() {
            return Err(Error::InvalidSystem(format!(
                "{} maps but {} probabilities",
                maps.len(),
                probabilities.len()
            )));
        }
        if let Some(m) = maps.iter().find(|m| m.dimension() != dimension) {
            return Err(Error::InvalidSystem(format!(
                "map of dimension {} in a system of dimension {dimension}",
                m.dimension()
            )));
        }
        if probabilities.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidSystem("probabilities must be strictly positive".into()));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > SYSTEM_TOL {
            return Err(Error::InvalidSystem(format!("probabilities sum to {total}, not 1")));
        }
        let log_ratios = maps.iter().map(|m| m.ratio.ln()).collect();
        let log_probs = probabilities.iter().map(|p| p.ln()).collect();
        Ok(Self { dimension, maps, probabilities, log_ratios, log_probs })
    }

    /// One-dimensional system of scalings `x -> r_i x + t_i`.
    pub fn line(ratios: &[f64], translations: &[f64], probabilities: &[f64]) -> Result<Self> {
        if ratios.len() != translations.len() {
            return Err(Error::InvalidSystem("ratios and translations differ in length".into()));
        }
        let maps = ratios
            .iter()
            .zip(translations)
            .map(|(&r, &t)| SimilarityMap::scaling(r, vec![t]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(1, maps, probabilities.to_vec())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn maps(&self) -> &[SimilarityMap] {
        &self.maps
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn ratio(&self, i: usize) -> f64 {
        self.maps[i].ratio
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.maps.iter().map(|m| m.ratio).collect()
    }

    pub fn log_ratios(&self) -> &[f64] {
        &self.log_ratios
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn r_min(&self) -> f64 {
        self.maps.iter().map(|m| m.ratio).fold(f64::INFINITY, f64::min)
    }

    pub fn r_max(&self) -> f64 {
        self.maps.iter().map(|m| m.ratio).fold(0.0, f64::max)
    }

    /// `p_i^q r_i^t` for a single map, evaluated in log space.
    pub fn weight(&self, i: usize, q: f64, t: f64) -> f64 {
        (q * self.log_probs[i] + t * self.log_ratios[i]).exp()
    }

    /// Fixed point of the first map; a point of the attractor.
    pub fn anchor(&self) -> Vec<f64> {
        self.maps[0].fixed_point()
    }

    /// Convex hull `[a, b]` of the attractor of a one-dimensional system.
    pub fn hull_1d(&self) -> Result<(f64, f64)> {
        self.require_dimension(1)?;
        let x0 = self.anchor()[0];
        let (mut a, mut b) = (x0, x0);
        for _ in 0..100_000 {
            let (mut na, mut nb) = (f64::INFINITY, f64::NEG_INFINITY);
            for m in &self.maps {
                let (lo, hi) = m.apply_interval(a, b);
                na = na.min(lo);
                nb = nb.max(hi);
            }
            let done = (na - a).abs() <= 0.0 && (nb - b).abs() <= 0.0;
            a = na;
            b = nb;
            if done {
                break;
            }
        }
        Ok((a, b))
    }

    pub fn require_dimension(&self, d: usize) -> Result<()> {
        if self.dimension != d {
            return Err(Error::DimensionMismatch { expected: d, found: self.dimension });
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: SystemFile = serde_json::from_str(s)?;
        file.try_into()
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_json_str(&s)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&SystemFile::from(self)).expect("system serializes")
    }
}

/// On-disk system description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub dimension: usize,
    pub maps: Vec<MapFile>,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapFile {
    pub ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orthogonal: Option<Vec<Vec<f64>>>,
    pub translation: Vec<f64>,
}

impl TryFrom<SystemFile> for SelfSimilarSystem {
    type Error = Error;

    fn try_from(file: SystemFile) -> Result<Self> {
        let maps = file
            .maps
            .into_iter()
            .map(|m| {
                let o = m.orthogonal.unwrap_or_else(|| identity(m.translation.len()));
                SimilarityMap::new(m.ratio, o, m.translation)
            })
            .collect::<Result<Vec<_>>>()?;
        SelfSimilarSystem::new(file.dimension, maps, file.probabilities)
    }
}

impl From<&SelfSimilarSystem> for SystemFile {
    fn from(s: &SelfSimilarSystem) -> Self {
        SystemFile {
            dimension: s.dimension,
            maps: s
                .maps
                .iter()
                .map(|m| MapFile {
                    ratio: m.ratio,
                    orthogonal: Some(m.orthogonal.clone()),
                    translation: m.translation.clone(),
                })
                .collect(),
            probabilities: s.probabilities.clone(),
        }
    }
}

/// A finite word over the alphabet, with cached products.
///
/// Letters are stored zero-based; `Display` prints them one-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Word {
    letters: Vec<u32>,
    ratio_product: f64,
    prob_product: f64,
}

impl Word {
    pub fn empty() -> Self {
        Word { letters: Vec::new(), ratio_product: 1.0, prob_product: 1.0 }
    }

    /// Builds a word from zero-based letters.
    pub fn new(system: &SelfSimilarSystem, letters: Vec<u32>) -> Result<Self> {
        let n = system.len() as u32;
        if let Some(&bad) = letters.iter().find(|&&l| l >= n) {
            return Err(Error::InvalidArgument(format!("letter {} out of range 1..={n}", bad + 1)));
        }
        let ratio_product = letters.iter().map(|&l| system.ratio(l as usize)).product();
        let prob_product = letters.iter().map(|&l| system.probabilities()[l as usize]).product();
        Ok(Word { letters, ratio_product, prob_product })
    }

    /// Parses one-based letters, either packed ("112") or dot separated ("1.12.3").
    pub fn parse(system: &SelfSimilarSystem, s: &str) -> Result<Self> {
        let s = s.trim();
        let letters: Vec<u32> = if s.is_empty() {
            Vec::new()
        } else if s.contains('.') {
            s.split('.')
                .map(|t| t.parse::<u32>().map_err(|e| Error::Parse(format!("word {s:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?
        } else {
            s.chars()
                .map(|c| c.to_digit(10).ok_or_else(|| Error::Parse(format!("word {s:?}"))))
                .collect::<Result<Vec<_>>>()?
        };
        if letters.contains(&0) {
            return Err(Error::Parse(format!("word {s:?}: letters are 1-based")));
        }
        Self::new(system, letters.into_iter().map(|l| l - 1).collect())
    }

    pub(crate) fn from_parts(letters: Vec<u32>, ratio_product: f64, prob_product: f64) -> Self {
        Word { letters, ratio_product, prob_product }
    }

    pub fn letters(&self) -> &[u32] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn ratio_product(&self) -> f64 {
        self.ratio_product
    }

    pub fn prob_product(&self) -> f64 {
        self.prob_product
    }

    /// `r` of the word with its last letter removed (1 for length <= 1).
    pub fn parent_ratio(&self, system: &SelfSimilarSystem) -> f64 {
        match self.letters.split_last() {
            None => 1.0,
            Some((_, head)) => head.iter().map(|&l| system.ratio(l as usize)).product(),
        }
    }

    /// Image of a point under `S_{i_1} ∘ … ∘ S_{i_m}`.
    pub fn apply(&self, system: &SelfSimilarSystem, x: &[f64]) -> Vec<f64> {
        apply_letters(system, &self.letters, x)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.iter().all(|&l| l < 9) {
            for l in &self.letters {
                write!(f, "{}", l + 1)?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.letters.iter().map(|l| (l + 1).to_string()).collect();
            write!(f, "{}", parts.join("."))
        }
    }
}

pub(crate) fn apply_letters(system: &SelfSimilarSystem, letters: &[u32], x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    for &l in letters.iter().rev() {
        y = system.maps()[l as usize].apply(&y);
    }
    y
}

/// Result of the DFS callback: expand the node's children or stop here.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Visit {
    Descend,
    Skip,
}

/// Lexicographic preorder DFS over the nonempty words. The callback gets
/// `(letters, ratio_product, prob_product, parent_ratio)` and decides
/// whether to expand; each expansion counts against `budget`.
pub(crate) fn visit_words<F>(system: &SelfSimilarSystem, budget: u64, mut visit: F) -> Result<()>
where
    F: FnMut(&[u32], f64, f64, f64) -> Visit,
{
    let n = system.len();
    let ratios = system.ratios();
    let probs = system.probabilities();
    let mut letters: Vec<u32> = Vec::new();
    // (depth of parent, letter, ratio, prob, parent ratio)
    let mut stack: Vec<(usize, u32, f64, f64, f64)> = Vec::new();
    let mut expansions: u64 = 1;
    for j in (0..n).rev() {
        stack.push((0, j as u32, ratios[j], probs[j], 1.0));
    }
    while let Some((depth, letter, ratio, prob, parent)) = stack.pop() {
        letters.truncate(depth);
        letters.push(letter);
        if visit(&letters, ratio, prob, parent) == Visit::Descend {
            expansions += 1;
            if expansions > budget {
                return Err(Error::BudgetExceeded { budget });
            }
            for j in (0..n).rev() {
                stack.push((depth + 1, j as u32, ratio * ratios[j], prob * probs[j], ratio));
            }
        }
    }
    Ok(())
}

/// Words crossed by scale `r`: `r_i < r < r_parent` (interior) and
/// `r = r_parent` (boundary).
#[derive(Debug, Clone, PartialEq)]
pub struct CutSet {
    pub r: f64,
    pub interior: Vec<Word>,
    pub boundary: Vec<Word>,
}

impl CutSet {
    pub fn interior_mass(&self) -> f64 {
        crate::numeric::compensated_sum(self.interior.iter().map(|w| w.prob_product))
    }
}

/// Enumerates the cut set at scale `r` by depth-first search from the
/// empty word. Words come out in lexicographic order.
pub fn cut_set(system: &SelfSimilarSystem, r: f64, eq_tol: f64, node_budget: u64) -> Result<CutSet> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidArgument(format!("cut set scale {r} not in (0,1)")));
    }
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    let tol = eq_tol * r;
    visit_words(system, node_budget, |letters, ratio, prob, parent| {
        if (parent - r).abs() <= tol {
            boundary.push(Word::from_parts(letters.to_vec(), ratio, prob));
            Visit::Skip
        } else if ratio < r - tol {
            interior.push(Word::from_parts(letters.to_vec(), ratio, prob));
            Visit::Skip
        } else {
            Visit::Descend
        }
    })?;
    Ok(CutSet { r, interior, boundary })
}

/// Deterministic RNG for a seed and stream index.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `depth` letters independently with the system's probabilities.
pub fn sample_address<R: Rng + ?Sized>(system: &SelfSimilarSystem, depth: usize, rng: &mut R) -> Vec<u32> {
    let dist = WeightedIndex::new(system.probabilities()).expect("validated probabilities");
    (0..depth).map(|_| dist.sample(rng) as u32).collect()
}

/// Approximate sample from the self-similar measure: the image of the
/// anchor point under a random address of length `depth`.
pub fn sample_point<R: Rng + ?Sized>(system: &SelfSimilarSystem, depth: usize, rng: &mut R) -> Vec<f64> {
    let letters = sample_address(system, depth.max(1), rng);
    apply_letters(system, &letters, &system.anchor())
}

/// `count` sample points, reusing one sampler (faster than repeated
/// [`sample_point`] calls).
pub fn sample_cloud<R: Rng + ?Sized>(
    system: &SelfSimilarSystem,
    depth: usize,
    count: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let dist = WeightedIndex::new(system.probabilities()).expect("validated probabilities");
    let anchor = system.anchor();
    let mut letters = vec![0u32; depth.max(1)];
    (0..count)
        .map(|_| {
            for l in letters.iter_mut() {
                *l = dist.sample(rng) as u32;
            }
            apply_letters(system, &letters, &anchor)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    /// Heuristic strong separation verdict (sampled, not a proof).
    pub ssc: bool,
    /// Minimum distance between sampled points of distinct first-level images.
    pub min_separation: f64,
    pub samples_per_image: usize,
}

pub const SSC_MARGIN: f64 = 1e-6;
pub const SSC_SAMPLE_DEPTH: usize = 40;

/// Reports the heuristic separation of the first-level images `S_i(K)`.
/// The type invariants are enforced on construction, so `valid` is always
/// true for a constructed system.
pub fn validate_system(system: &SelfSimilarSystem, samples_per_image: usize, seed: u64) -> ValidationReport {
    let mut rng = rng_for(seed, 0);
    let cloud = sample_cloud(system, SSC_SAMPLE_DEPTH, samples_per_image, &mut rng);
    let images: Vec<Vec<Vec<f64>>> = system
        .maps()
        .iter()
        .map(|m| cloud.iter().map(|x| m.apply(x)).collect())
        .collect();
    let mut min_sep = f64::INFINITY;
    for i in 0..images.len() {
        for j in i + 1..images.len() {
            min_sep = min_sep.min(set_distance(&images[i], &images[j]));
        }
    }
    ValidationReport { valid: true, ssc: min_sep > SSC_MARGIN, min_separation: min_sep, samples_per_image }
}

fn set_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    if a.first().map(|x| x.len()) == Some(1) {
        let mut xs: Vec<f64> = a.iter().map(|x| x[0]).collect();
        xs.sort_by(f64::total_cmp);
        return b
            .iter()
            .map(|y| {
                let y = y[0];
                let k = xs.partition_point(|&x| x < y);
                let mut best = f64::INFINITY;
                if k < xs.len() {
                    best = best.min((xs[k] - y).abs());
                }
                if k > 0 {
                    best = best.min((xs[k - 1] - y).abs());
                }
                best
            })
            .fold(f64::INFINITY, f64::min);
    }
    let mut best = f64::INFINITY;
    for x in a {
        for y in b {
            let d2: f64 = x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum();
            best = best.min(d2);
        }
    }
    best.sqrt()
}
