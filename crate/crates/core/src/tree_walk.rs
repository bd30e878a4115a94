//! Reduced-word arithmetic on `(Z/2)^{*d}`, step distributions, and the
//! nearest-neighbour walk `Y_n = X_1 ... X_n` on the d-regular tree.
//!
//! Every generator is an involution, so multiplying a reduced word on the
//! right by a letter either cancels its last letter or appends it. The
//! length process `l(Y_n)` therefore moves by exactly one at every step.

use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::TimeGrid;
use crate::{Error, Result};

/// Default bound on `d^n` for brute-force enumeration.
pub const DEFAULT_ENUMERATION_CAP: u64 = 2_000_000;

/// A generator `a_i`, stored by its 1-based index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Letter(u8);

impl Letter {
    pub fn new(index: usize) -> Result<Self> {
        if index == 0 || index > u8::MAX as usize {
            return Err(Error::domain(format!("letter index {index} out of range")));
        }
        Ok(Letter(index as u8))
    }

    /// 1-based index.
    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// 0-based index into probability vectors.
    pub(crate) fn slot(self) -> usize {
        self.0 as usize - 1
    }

    pub(crate) fn from_slot(slot: usize) -> Self {
        Letter(slot as u8 + 1)
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

/// A group element, written as a reduced word (no letter adjacent to itself).
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReducedWord {
    letters: Vec<Letter>,
}

#[allow(clippy::len_without_is_empty)]
impl ReducedWord {
    /// The identity `e`.
    pub fn identity() -> Self {
        ReducedWord::default()
    }

    /// Accepts an already reduced letter sequence.
    pub fn from_letters(letters: Vec<Letter>) -> Result<Self> {
        if letters.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::domain("word is not reduced"));
        }
        Ok(ReducedWord { letters })
    }

    /// Product of an arbitrary letter sequence, reduced.
    pub fn product<I: IntoIterator<Item = Letter>>(letters: I) -> Self {
        let mut w = ReducedWord::identity();
        for s in letters {
            w.mul_letter(s);
        }
        w
    }

    /// In-place right multiplication by `s`; returns the length change (+1 or -1).
    pub fn mul_letter(&mut self, s: Letter) -> i32 {
        if self.letters.last() == Some(&s) {
            self.letters.pop();
            -1
        } else {
            self.letters.push(s);
            1
        }
    }

    /// `w s`, reduced.
    pub fn reduce_concat(&self, s: Letter) -> ReducedWord {
        let mut out = self.clone();
        out.mul_letter(s);
        out
    }

    /// Word length `l(g)`.
    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_identity(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn first(&self) -> Option<Letter> {
        self.letters.first().copied()
    }

    pub fn last(&self) -> Option<Letter> {
        self.letters.last().copied()
    }

    pub fn inverse(&self) -> ReducedWord {
        ReducedWord { letters: self.letters.iter().rev().copied().collect() }
    }

    /// The meet `u ∧ v`: longest common prefix, i.e. the most recent common
    /// ancestor of two vertices.
    pub fn meet(&self, other: &ReducedWord) -> ReducedWord {
        let k = self.letters.iter().zip(&other.letters).take_while(|(a, b)| a == b).count();
        ReducedWord { letters: self.letters[..k].to_vec() }
    }

    /// `prefix^{-1} self` when `prefix` is a prefix of `self`.
    pub fn strip_prefix(&self, prefix: &ReducedWord) -> Option<ReducedWord> {
        self.letters.strip_prefix(prefix.letters.as_slice()).map(|rest| ReducedWord { letters: rest.to_vec() })
    }
}

impl fmt::Display for ReducedWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return f.write_str("e");
        }
        for s in &self.letters {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// The step law `mu = (p_1, ..., p_d)` on the generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StepDistribution {
    probs: Vec<f64>,
}

impl StepDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 3 {
            return Err(Error::domain(format!("need d >= 3 generators, got {}", probs.len())));
        }
        if probs.len() > u8::MAX as usize {
            return Err(Error::domain("too many generators"));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::domain(format!("step probabilities must be positive: {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("step probabilities sum to {total}, not 1")));
        }
        Ok(StepDistribution { probs })
    }

    pub fn uniform(d: usize) -> Result<Self> {
        if d < 3 {
            return Err(Error::domain(format!("need d >= 3, got {d}")));
        }
        StepDistribution::new(vec![1.0 / d as f64; d])
    }

    pub fn d(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, s: Letter) -> f64 {
        self.probs[s.slot()]
    }

    pub fn letters(&self) -> impl Iterator<Item = Letter> {
        (0..self.d()).map(Letter::from_slot)
    }

    /// True when every `p_i` equals `1/d` exactly.
    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.d() as f64;
        self.probs.iter().all(|&p| p == u)
    }

    pub(crate) fn sampler(&self) -> LetterSampler {
        LetterSampler { index: WeightedIndex::new(&self.probs).expect("validated probabilities") }
    }
}

impl TryFrom<Vec<f64>> for StepDistribution {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        StepDistribution::new(probs)
    }
}

impl From<StepDistribution> for Vec<f64> {
    fn from(mu: StepDistribution) -> Self {
        mu.probs
    }
}

pub(crate) struct LetterSampler {
    index: WeightedIndex<f64>,
}

impl LetterSampler {
    pub(crate) fn sample(&self, rng: &mut ChaCha8Rng) -> Letter {
        Letter::from_slot(self.index.sample(rng))
    }
}

/// The generator behind every simulation: ChaCha8 keyed by `seed`, with an
/// independent stream per work block.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// An n-step path `(s_1, ..., s_n)` with its cached length profile
/// `l(g(0)), ..., l(g(n))`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticePath {
    steps: Vec<Letter>,
    prefix_lengths: Vec<usize>,
}

impl LatticePath {
    pub fn from_steps(steps: Vec<Letter>) -> Self {
        let mut word = ReducedWord::identity();
        let mut prefix_lengths = Vec::with_capacity(steps.len() + 1);
        prefix_lengths.push(0);
        for &s in &steps {
            word.mul_letter(s);
            prefix_lengths.push(word.len());
        }
        LatticePath { steps, prefix_lengths }
    }

    /// Parses 1-based letter indices.
    pub fn from_indices(indices: &[usize]) -> Result<Self> {
        let steps = indices.iter().map(|&i| Letter::new(i)).collect::<Result<Vec<_>>>()?;
        Ok(LatticePath::from_steps(steps))
    }

    pub fn n(&self) -> usize {
        self.steps.len()
    }

    pub fn steps(&self) -> &[Letter] {
        &self.steps
    }

    pub fn prefix_lengths(&self) -> &[usize] {
        &self.prefix_lengths
    }

    /// `l(g(i))`.
    pub fn length_at(&self, i: usize) -> usize {
        self.prefix_lengths[i]
    }

    /// The reduced word `g(i) = s_1 ... s_i`.
    pub fn word_at(&self, i: usize) -> ReducedWord {
        ReducedWord::product(self.steps[..i].iter().copied())
    }

    pub fn endpoint(&self) -> ReducedWord {
        self.word_at(self.n())
    }

    /// `prod_i p_{s_i}`.
    pub fn weight(&self, mu: &StepDistribution) -> f64 {
        self.steps.iter().map(|&s| mu.prob(s)).product()
    }

    pub fn max_letter(&self) -> Option<Letter> {
        self.steps.iter().copied().max()
    }
}

/// Draws `n` i.i.d. steps from `mu`; deterministic in `seed`.
pub fn simulate_walk(mu: &StepDistribution, n: usize, seed: u64) -> Result<LatticePath> {
    if n == 0 {
        return Err(Error::domain("simulate_walk needs n >= 1"));
    }
    let mut rng = seeded_rng(seed, 0);
    Ok(simulate_with(mu, n, &mut rng))
}

/// `count` independent walks; walk `i` uses stream `i` of `seed`.
pub fn simulate_walks(mu: &StepDistribution, n: usize, count: usize, seed: u64) -> Result<Vec<LatticePath>> {
    if n == 0 {
        return Err(Error::domain("simulate_walk needs n >= 1"));
    }
    Ok((0..count).map(|i| simulate_with(mu, n, &mut seeded_rng(seed, i as u64))).collect())
}

pub(crate) fn simulate_with(mu: &StepDistribution, n: usize, rng: &mut ChaCha8Rng) -> LatticePath {
    let sampler = mu.sampler();
    let steps = (0..n).map(|_| sampler.sample(rng)).collect();
    LatticePath::from_steps(steps)
}

/// `(l(g([n t_1])), ..., l(g([n t_j])))`.
pub fn length_profile_at(path: &LatticePath, grid: &TimeGrid, n: usize) -> Vec<usize> {
    grid.indices(n).into_iter().map(|i| path.length_at(i)).collect()
}

pub(crate) fn check_cap(d: usize, n: usize, cap: u64) -> Result<()> {
    let count = (d as u128).checked_pow(n as u32);
    match count {
        Some(c) if c <= cap as u128 => Ok(()),
        _ => Err(Error::CapExceeded { d, n, cap }),
    }
}

/// Lazily yields every path in `S^n` with weight `prod p_{s_i}`, in
/// lexicographic order of the step sequence.
pub fn enumerate_paths(mu: &StepDistribution, n: usize, cap: u64) -> Result<PathEnumerator> {
    check_cap(mu.d(), n, cap)?;
    Ok(PathEnumerator::new(mu.clone(), n))
}

pub struct PathEnumerator {
    mu: StepDistribution,
    steps: Vec<Letter>,
    word: ReducedWord,
    lengths: Vec<usize>,
    // weights[i] = product of the first i step probabilities
    weights: Vec<f64>,
    started: bool,
    done: bool,
}

impl PathEnumerator {
    fn new(mu: StepDistribution, n: usize) -> Self {
        let first = Letter::from_slot(0);
        let mut e = PathEnumerator {
            steps: vec![first; n],
            word: ReducedWord::identity(),
            lengths: vec![0; n + 1],
            weights: vec![1.0; n + 1],
            started: false,
            done: false,
            mu,
        };
        e.replay_from(0);
        e
    }

    fn replay_from(&mut self, from: usize) {
        for i in from..self.steps.len() {
            let s = self.steps[i];
            self.word.mul_letter(s);
            self.lengths[i + 1] = self.word.len();
            self.weights[i + 1] = self.weights[i] * self.mu.prob(s);
        }
    }

    fn advance(&mut self) -> bool {
        let d = self.mu.d();
        let n = self.steps.len();
        let Some(pos) = (0..n).rev().find(|&i| self.steps[i].index() < d) else {
            return false;
        };
        // Generators are involutions: multiplying by the same letter undoes a step.
        for i in (pos..n).rev() {
            self.word.mul_letter(self.steps[i]);
        }
        self.steps[pos] = Letter::from_slot(self.steps[pos].slot() + 1);
        for s in &mut self.steps[pos + 1..] {
            *s = Letter::from_slot(0);
        }
        self.replay_from(pos);
        true
    }
}

impl Iterator for PathEnumerator {
    type Item = (LatticePath, f64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        if self.started && !self.advance() {
            self.done = true;
            return None;
        }
        self.started = true;
        let path = LatticePath { steps: self.steps.clone(), prefix_lengths: self.lengths.clone() };
        Some((path, self.weights[self.steps.len()]))
    }
}

/// Depth-first visit of `S^n` without allocating a path per leaf.
/// The callback receives the steps, the length profile, and the weight.
pub fn visit_paths<F>(mu: &StepDistribution, n: usize, cap: u64, mut visit: F) -> Result<()>
where
    F: FnMut(&[Letter], &[usize], f64),
{
    check_cap(mu.d(), n, cap)?;
    let mut steps = Vec::with_capacity(n);
    let mut lengths = vec![0usize; n + 1];
    let mut word = ReducedWord::identity();
    descend(mu, n, &mut steps, &mut lengths, &mut word, 1.0, &mut visit);
    Ok(())
}

fn descend<F>(
    mu: &StepDistribution,
    n: usize,
    steps: &mut Vec<Letter>,
    lengths: &mut [usize],
    word: &mut ReducedWord,
    weight: f64,
    visit: &mut F,
) where
    F: FnMut(&[Letter], &[usize], f64),
{
    let depth = steps.len();
    if depth == n {
        visit(steps, lengths, weight);
        return;
    }
    for s in mu.letters() {
        word.mul_letter(s);
        lengths[depth + 1] = word.len();
        steps.push(s);
        descend(mu, n, steps, lengths, word, weight * mu.prob(s), visit);
        steps.pop();
        word.mul_letter(s);
    }
}

/// Length-only simulator used by the Monte Carlo estimators: keeps the
/// reduced word as a byte stack.
pub(crate) struct WalkState {
    stack: Vec<u8>,
}

impl WalkState {
    pub(crate) fn new(capacity: usize) -> Self {
        WalkState { stack: Vec::with_capacity(capacity) }
    }

    pub(crate) fn reset(&mut self) {
        self.stack.clear();
    }

    pub(crate) fn step(&mut self, s: Letter) {
        if self.stack.last() == Some(&s.0) {
            self.stack.pop();
        } else {
            self.stack.push(s.0);
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.stack.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(i: usize) -> Letter {
        Letter::new(i).unwrap()
    }

    fn word(ix: &[usize]) -> ReducedWord {
        ReducedWord::from_letters(ix.iter().map(|&i| l(i)).collect()).unwrap()
    }

    #[test]
    fn reduce_concat_examples() {
        let w = ReducedWord::identity().reduce_concat(l(1));
        assert_eq!(w, word(&[1]));
        assert_eq!(w.len(), 1);

        let w = word(&[1, 2]).reduce_concat(l(2));
        assert_eq!(w, word(&[1]));
        assert_eq!(w.len(), 1);

        let w = word(&[1, 2]).reduce_concat(l(3));
        assert_eq!(w, word(&[1, 2, 3]));
        assert_eq!(w.len(), 3);
    }

    #[test]
    fn unreduced_words_rejected() {
        assert!(ReducedWord::from_letters(vec![l(1), l(1)]).is_err());
        assert_eq!(ReducedWord::product([l(1), l(2), l(2), l(3)]), word(&[1, 3]));
    }

    #[test]
    fn meet_and_strip() {
        let y1 = word(&[1, 2, 3]);
        let y2 = word(&[1, 2, 1]);
        let m = y1.meet(&y2);
        assert_eq!(m, word(&[1, 2]));
        assert_eq!(y1.strip_prefix(&m).unwrap(), word(&[3]));
        assert_eq!(word(&[2]).meet(&word(&[3])), ReducedWord::identity());
        assert_eq!(word(&[1, 2, 3]).inverse(), word(&[3, 2, 1]));
        assert_eq!(format!("{}", word(&[1, 3])), "a1a3");
        assert_eq!(format!("{}", ReducedWord::identity()), "e");
    }

    #[test]
    fn step_distribution_validation() {
        assert!(StepDistribution::new(vec![0.5, 0.5]).is_err());
        assert!(StepDistribution::new(vec![0.5, 0.5, 0.0]).is_err());
        assert!(StepDistribution::new(vec![0.5, 0.3, 0.3]).is_err());
        assert!(StepDistribution::new(vec![0.5, 0.3, 0.2]).is_ok());
        let u = StepDistribution::uniform(4).unwrap();
        assert!(u.is_uniform());
        assert_eq!(u.probs(), &[0.25; 4]);
    }

    #[test]
    fn simulate_rejects_zero_steps() {
        let mu = StepDistribution::uniform(3).unwrap();
        assert!(matches!(simulate_walk(&mu, 0, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn first_step_always_increases_length() {
        let mu = StepDistribution::uniform(3).unwrap();
        for seed in 0..20 {
            let p = simulate_walk(&mu, 1, seed).unwrap();
            assert_eq!(p.prefix_lengths(), &[0, 1]);
        }
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        let mu = StepDistribution::new(vec![0.5, 0.3, 0.2]).unwrap();
        let a = simulate_walk(&mu, 50, 7).unwrap();
        let b = simulate_walk(&mu, 50, 7).unwrap();
        let c = simulate_walk(&mu, 50, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn enumerate_uniform_two_steps() {
        let mu = StepDistribution::uniform(3).unwrap();
        let all: Vec<_> = enumerate_paths(&mu, 2, DEFAULT_ENUMERATION_CAP).unwrap().collect();
        assert_eq!(all.len(), 9);
        for (_, w) in &all {
            assert!((w - 1.0 / 9.0).abs() < 1e-15);
        }
        let back_to_root = all.iter().filter(|(p, _)| p.length_at(2) == 0).count();
        assert_eq!(back_to_root, 3);
    }

    #[test]
    fn enumerate_eight_steps_sums_to_one() {
        let mu = StepDistribution::uniform(3).unwrap();
        let mut count = 0;
        let mut total = 0.0;
        for (p, w) in enumerate_paths(&mu, 8, DEFAULT_ENUMERATION_CAP).unwrap() {
            count += 1;
            total += w;
            assert_eq!(p, LatticePath::from_steps(p.steps().to_vec()));
        }
        assert_eq!(count, 6561);
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn enumeration_cap_exceeded() {
        let mu = StepDistribution::uniform(3).unwrap();
        match enumerate_paths(&mu, 40, DEFAULT_ENUMERATION_CAP) {
            Err(Error::CapExceeded { d: 3, n: 40, .. }) => {}
            other => panic!("expected cap error, got {:?}", other.err()),
        }
    }

    #[test]
    fn enumerator_and_visitor_agree() {
        let mu = StepDistribution::new(vec![0.5, 0.3, 0.2]).unwrap();
        let listed: Vec<_> = enumerate_paths(&mu, 5, DEFAULT_ENUMERATION_CAP).unwrap().collect();
        let mut visited = Vec::new();
        visit_paths(&mu, 5, DEFAULT_ENUMERATION_CAP, |s, lens, w| {
            visited.push((s.to_vec(), lens.to_vec(), w));
        })
        .unwrap();
        assert_eq!(listed.len(), visited.len());
        for ((p, w), (s, lens, w2)) in listed.iter().zip(&visited) {
            assert_eq!(p.steps(), s.as_slice());
            assert_eq!(p.prefix_lengths(), lens.as_slice());
            assert_eq!(w, w2);
            assert!((p.weight(&mu) - w).abs() < 1e-15);
        }
    }

    #[test]
    fn profile_reads_floor_indices() {
        let p = LatticePath::from_indices(&[1, 2, 2]).unwrap();
        assert_eq!(p.prefix_lengths(), &[0, 1, 2, 1]);
        assert_eq!(length_profile_at(&p, &TimeGrid::endpoint(), 3), vec![1]);
        let j = TimeGrid::new(vec![0.5, 1.0]).unwrap();
        assert_eq!(length_profile_at(&p, &j, 3), vec![1, 1]);
        let j = TimeGrid::new(vec![1.0 / 3.0]).unwrap();
        assert_eq!(length_profile_at(&p, &j, 3), vec![p.length_at(1)]);
    }

    #[test]
    fn walk_state_tracks_lengths() {
        let mu = StepDistribution::uniform(4).unwrap();
        let p = simulate_walk(&mu, 200, 3).unwrap();
        let mut w = WalkState::new(200);
        for (i, &s) in p.steps().iter().enumerate() {
            w.step(s);
            assert_eq!(w.len(), p.length_at(i + 1));
        }
    }
}
