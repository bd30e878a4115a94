//! Box path sets for two checkpoints and the concatenation that glues `k`
//! box paths into one longer path staying in a slightly larger box.
//!
//! For a path `g` with `y₁ = g([nt₁])`, `y₂ = g([nt₂])` and meet
//! `y₁ ∧ y₂`, the tree forces the visiting order
//! `e → meet → y₁ → meet → y₂`. Paths are classified by the lengths
//! `(L₀, L₁, L₂)`, the return times `(m₁, m₂)` and the first/last letters of
//! the three reduced segments. Within one class the separators `a, b, c`
//! can be chosen so that no junction cancels, and the concatenation
//!
//! ```text
//! h = g₁(m₁) a g₂(m₁) a … g_k(m₁)
//!     g₁(m₁+1, [nt₁]) b … b g_k(m₁+1, [nt₁])
//!     g_k([nt₁]+1, m₂) b … b g₁([nt₁]+1, m₂)
//!     g₁(m₂+1, [nt₂]) c … c g_k(m₂+1, [nt₂])
//!     g₁([nt₂]+1, n) … g_k([nt₂]+1, n)
//! ```
//!
//! has `kn + 4(k-1)` steps.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{BoxSpec, TimeGrid};
use crate::tree_walk::{seeded_rng, simulate_with, visit_paths, LatticePath, Letter, ReducedWord, StepDistribution};
use crate::{Error, Result};

/// Decomposition of one path around the meet of its two checkpoint
/// positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathAnatomy {
    pub y1: ReducedWord,
    pub y2: ReducedWord,
    pub meet: ReducedWord,
    pub l0: usize,
    pub l1: usize,
    pub l2: usize,
    /// Last visit to the meet at or before `[nt₁]`.
    pub m1: usize,
    /// First visit to the meet at or after `[nt₁]`.
    pub m2: usize,
    /// `[nt₁]`, `[nt₂]`.
    pub i1: usize,
    pub i2: usize,
    /// First and last steps of the excursion `g(m₂+1, [nt₂])` when it is a
    /// loop at the meet (`L₀ = L₂`, `m₂ < [nt₂]`).
    pub loop_letters: Option<(Letter, Letter)>,
}

fn two_point(grid: &TimeGrid) -> Result<()> {
    if grid.len() != 2 {
        return Err(Error::domain(format!("concatenation needs two checkpoints, got {}", grid.len())));
    }
    Ok(())
}

pub fn anatomy(path: &LatticePath, grid: &TimeGrid, n: usize) -> Result<PathAnatomy> {
    two_point(grid)?;
    if path.n() != n {
        return Err(Error::domain(format!("path has {} steps, expected {n}", path.n())));
    }
    let idx = grid.indices(n);
    let (i1, i2) = (idx[0], idx[1]);
    let y1 = path.word_at(i1);
    let y2 = path.word_at(i2);
    let meet = y1.meet(&y2);
    let steps = path.steps();

    let mut word = ReducedWord::identity();
    let mut m1 = 0;
    let mut m2 = None;
    #[allow(clippy::needless_range_loop)]
    for i in 0..=i2 {
        if word == meet {
            if i <= i1 {
                m1 = i;
            }
            if i >= i1 && m2.is_none() {
                m2 = Some(i);
            }
        }
        if i < i2 {
            word.mul_letter(steps[i]);
        }
    }
    let m2 = m2.expect("the path from y1 to y2 passes through their meet");
    let (l0, l1, l2) = (meet.len(), y1.len(), y2.len());
    let loop_letters = (l0 == l2 && m2 < i2).then(|| (steps[m2], steps[i2 - 1]));
    Ok(PathAnatomy { y1, y2, meet, l0, l1, l2, m1, m2, i1, i2, loop_letters })
}

/// Class of a path: lengths, return times, and the boundary letters of
/// `meet`, `meet⁻¹y₁` and `meet⁻¹y₂` (the loop's first/last steps in the
/// loop case). Empty segments contribute `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassKey {
    pub l0: usize,
    pub l1: usize,
    pub l2: usize,
    pub m1: usize,
    pub m2: usize,
    pub meet_first: Option<Letter>,
    pub meet_last: Option<Letter>,
    pub branch1_first: Option<Letter>,
    pub branch1_last: Option<Letter>,
    pub branch2_first: Option<Letter>,
    pub branch2_last: Option<Letter>,
}

impl PathAnatomy {
    pub fn key(&self) -> ClassKey {
        let b1 = self.y1.strip_prefix(&self.meet).expect("meet is a prefix of y1");
        let (b2_first, b2_last) = match self.loop_letters {
            Some((f, l)) => (Some(f), Some(l)),
            None => {
                let b2 = self.y2.strip_prefix(&self.meet).expect("meet is a prefix of y2");
                (b2.first(), b2.last())
            }
        };
        ClassKey {
            l0: self.l0,
            l1: self.l1,
            l2: self.l2,
            m1: self.m1,
            m2: self.m2,
            meet_first: self.meet.first(),
            meet_last: self.meet.last(),
            branch1_first: b1.first(),
            branch1_last: b1.last(),
            branch2_first: b2_first,
            branch2_last: b2_last,
        }
    }
}

impl ClassKey {
    /// The excursion after `m₂` is a loop at the meet.
    pub fn loop_case(&self, i2: usize) -> bool {
        self.l0 == self.l2 && self.m2 < i2
    }
}

/// Smallest letter outside `required ∪ preferred`, or outside `required`
/// alone when that is impossible.
fn choose(d: usize, required: &[Option<Letter>], preferred: &[Option<Letter>]) -> Letter {
    let letters = || (0..d).map(Letter::from_slot);
    let free = |s: Letter, avoid: &[Option<Letter>]| avoid.iter().all(|&x| x != Some(s));
    letters()
        .find(|&s| free(s, required) && free(s, preferred))
        .or_else(|| letters().find(|&s| free(s, required)))
        .expect("d >= 3 leaves a letter outside any two")
}

/// Separators for one class plus its members.
#[derive(Debug, Clone, Serialize)]
pub struct ConcatPlan {
    pub d: usize,
    pub grid: TimeGrid,
    pub n: usize,
    pub key: ClassKey,
    pub a: Letter,
    pub b: Letter,
    pub c: Letter,
    #[serde(skip)]
    pub members: Vec<LatticePath>,
    pub member_count: usize,
    /// Members came from rejection sampling; no measure bound applies.
    pub sampled: bool,
    pub notes: Vec<String>,
}

impl ConcatPlan {
    fn new(d: usize, grid: TimeGrid, n: usize, key: ClassKey, members: Vec<LatticePath>, sampled: bool) -> Self {
        let mut notes = Vec::new();
        let k = &key;
        let a = if k.l0 > 0 {
            choose(d, &[k.meet_first, k.meet_last], &[])
        } else {
            choose(d, &[], &[k.branch1_first, k.branch2_first])
        };
        let b = if k.l1 == k.l0 { Letter::from_slot(0) } else { choose(d, &[k.branch1_first, k.branch1_last], &[]) };
        let c = if k.l2 > k.l0 {
            choose(d, &[k.branch2_first, k.branch2_last], &[])
        } else {
            if k.meet_last.is_none() {
                notes.push("c: meet is the identity, so only the first letter of meet^-1 y1 is avoided".to_string());
            }
            choose(d, &[k.meet_last, k.branch1_first], &[k.branch2_first, k.branch2_last])
        };
        let member_count = members.len();
        ConcatPlan { d, grid, n, key, a, b, c, members, member_count, sampled, notes }
    }

    pub fn checkpoint_indices(&self) -> (usize, usize) {
        let idx = self.grid.indices(self.n);
        (idx[0], idx[1])
    }
}

/// All paths of a box with their weights.
#[derive(Debug, Clone)]
pub struct BoxSet {
    pub spec: BoxSpec,
    pub n: usize,
    pub d: usize,
    pub members: Vec<(LatticePath, f64)>,
    pub measure: f64,
}

/// Enumerates `S^n` and keeps the paths whose rescaled checkpoint lengths
/// lie in the open box.
pub fn box_set(mu: &StepDistribution, spec: &BoxSpec, n: usize, cap: u64) -> Result<BoxSet> {
    if n == 0 {
        return Err(Error::domain("need n >= 1"));
    }
    let idx = spec.grid.indices(n);
    let mut members = Vec::new();
    let mut profile = vec![0usize; idx.len()];
    visit_paths(mu, n, cap, |steps, lengths, w| {
        for (p, &i) in profile.iter_mut().zip(&idx) {
            *p = lengths[i];
        }
        if spec.contains_profile(&profile, n) {
            members.push((LatticePath::from_steps(steps.to_vec()), w));
        }
    })?;
    let measure = crate::numeric::kahan_sum(members.iter().map(|(_, w)| *w));
    Ok(BoxSet { spec: spec.clone(), n, d: mu.d(), members, measure })
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassMeasure {
    pub key: ClassKey,
    pub measure: f64,
    pub paths: usize,
}

/// Result of the pigeonhole step.
#[derive(Debug, Clone, Serialize)]
pub struct ClassSelection {
    pub plan: ConcatPlan,
    pub total_measure: f64,
    pub selected_measure: f64,
    /// `ν(F) / ((n+1)^5 d^6)`.
    pub bound: f64,
    pub bound_ok: bool,
    pub classes: Vec<ClassMeasure>,
}

/// Groups the box by [`ClassKey`] and keeps a class of largest measure
/// (smallest key on ties).
pub fn select_class(set: &BoxSet) -> Result<ClassSelection> {
    two_point(&set.spec.grid)?;
    if set.members.is_empty() {
        return Err(Error::EmptyInput);
    }
    let keys: Vec<ClassKey> = set
        .members
        .par_iter()
        .map(|(p, _)| anatomy(p, &set.spec.grid, set.n).map(|a| a.key()))
        .collect::<Result<_>>()?;
    let mut classes: BTreeMap<ClassKey, (f64, Vec<usize>)> = BTreeMap::new();
    for (i, (key, (_, w))) in keys.iter().zip(&set.members).enumerate() {
        let entry = classes.entry(*key).or_default();
        entry.0 += w;
        entry.1.push(i);
    }
    let (best_key, (best_measure, best_members)) = classes
        .iter()
        .fold(None::<(&ClassKey, &(f64, Vec<usize>))>, |acc, (k, v)| match acc {
            Some((_, bv)) if bv.0 >= v.0 => acc,
            _ => Some((k, v)),
        })
        .expect("nonempty");
    let members = best_members.iter().map(|&i| set.members[i].0.clone()).collect();
    let plan = ConcatPlan::new(set.d, set.spec.grid.clone(), set.n, *best_key, members, false);
    let scale = (set.n as f64 + 1.0).powi(5) * (set.d as f64).powi(6);
    let bound = set.measure / scale;
    let bound_ok = *best_measure * scale >= set.measure * (1.0 - 1e-12);
    Ok(ClassSelection {
        total_measure: set.measure,
        selected_measure: *best_measure,
        bound,
        bound_ok,
        classes: classes.iter().map(|(k, (m, v))| ClassMeasure { key: *k, measure: *m, paths: v.len() }).collect(),
        plan,
    })
}

const HARVEST_BLOCK: usize = 4096;

/// For `n` beyond enumeration: simulates `samples` walks, keeps those in the
/// box, and returns a plan for the most populated class. The measure bound
/// is not checked for such plans.
pub fn harvest_class(mu: &StepDistribution, spec: &BoxSpec, n: usize, samples: usize, seed: u64) -> Result<ConcatPlan> {
    two_point(&spec.grid)?;
    if n == 0 || samples == 0 {
        return Err(Error::domain("need n >= 1 and samples >= 1"));
    }
    let blocks = samples.div_ceil(HARVEST_BLOCK);
    let found: Vec<Vec<(ClassKey, LatticePath)>> = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = seeded_rng(seed, block as u64);
            let count = HARVEST_BLOCK.min(samples - block * HARVEST_BLOCK);
            let mut out = Vec::new();
            for _ in 0..count {
                let path = simulate_with(mu, n, &mut rng);
                let profile = crate::tree_walk::length_profile_at(&path, &spec.grid, n);
                if spec.contains_profile(&profile, n) {
                    let key = anatomy(&path, &spec.grid, n)?.key();
                    out.push((key, path));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut classes: BTreeMap<ClassKey, Vec<LatticePath>> = BTreeMap::new();
    for (key, path) in found.into_iter().flatten() {
        classes.entry(key).or_default().push(path);
    }
    let (key, members) = classes
        .into_iter()
        .fold(None::<(ClassKey, Vec<LatticePath>)>, |acc, (k, v)| match acc {
            Some((_, ref bv)) if bv.len() >= v.len() => acc,
            _ => Some((k, v)),
        })
        .ok_or(Error::EmptyInput)?;
    let mut plan = ConcatPlan::new(mu.d(), spec.grid.clone(), n, key, members, true);
    plan.notes.push(format!("members harvested from {samples} simulated walks; measure bound not checked"));
    Ok(plan)
}

/// One no-cancellation check at a block boundary of `h`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Junction {
    pub name: &'static str,
    pub expected: usize,
    pub actual: usize,
    /// False where the class makes separators cancel by construction
    /// (empty segments); such junctions are reported but not asserted.
    pub applicable: bool,
}

impl Junction {
    pub fn ok(&self) -> bool {
        !self.applicable || self.expected == self.actual
    }
}

#[derive(Debug, Clone)]
pub struct Concatenation {
    pub path: LatticePath,
    pub junctions: Vec<Junction>,
}

impl Concatenation {
    pub fn separator_safe(&self) -> bool {
        self.junctions.iter().all(Junction::ok)
    }
}

/// Builds `h(g₁, …, g_k)`.
pub fn concatenate(plan: &ConcatPlan, members: &[&LatticePath]) -> Result<Concatenation> {
    let k = members.len();
    if k < 2 {
        return Err(Error::domain("concatenation needs k >= 2 paths"));
    }
    for (index, g) in members.iter().enumerate() {
        if anatomy(g, &plan.grid, plan.n)?.key() != plan.key {
            return Err(Error::MixedClass { index });
        }
    }
    let (i1, i2) = plan.checkpoint_indices();
    let (m1, m2) = (plan.key.m1, plan.key.m2);
    let mut steps = Vec::with_capacity(k * plan.n + 4 * (k - 1));
    let block = |steps: &mut Vec<Letter>,
                 order: &mut dyn Iterator<Item = &&LatticePath>,
                 sep: Option<Letter>,
                 lo: usize,
                 hi: usize| {
        for (j, g) in order.enumerate() {
            if j > 0 {
                if let Some(s) = sep {
                    steps.push(s);
                }
            }
            steps.extend_from_slice(&g.steps()[lo..hi]);
        }
        steps.len()
    };
    let e1 = block(&mut steps, &mut members.iter(), Some(plan.a), 0, m1);
    let e2 = block(&mut steps, &mut members.iter(), Some(plan.b), m1, i1);
    let e3 = block(&mut steps, &mut members.iter().rev(), Some(plan.b), i1, m2);
    let e4 = block(&mut steps, &mut members.iter(), Some(plan.c), m2, i2);
    block(&mut steps, &mut members.iter(), None, i2, plan.n);
    let path = LatticePath::from_steps(steps);

    let key = &plan.key;
    let w1 = path.length_at(e1);
    let junctions = vec![
        Junction {
            name: "meet segments joined by a",
            expected: k * key.l0 + (k - 1),
            actual: w1,
            applicable: key.l0 > 0 || k == 2,
        },
        Junction {
            name: "rising segments joined by b",
            expected: w1 + k * (key.l1 - key.l0) + (k - 1),
            actual: path.length_at(e2),
            applicable: key.l1 > key.l0,
        },
        Junction {
            name: "descending segments return to the end of the meet block",
            expected: w1,
            actual: if path.word_at(e3) == path.word_at(e1) { w1 } else { path.length_at(e3) },
            applicable: true,
        },
        Junction {
            name: "second-branch segments joined by c",
            expected: w1 + k * (key.l2 - key.l0) + (k - 1),
            actual: path.length_at(e4),
            applicable: key.l2 > key.l0,
        },
    ];
    Ok(Concatenation { path, junctions })
}

/// `kn + 4(k-1)`.
pub fn concatenated_length(k: usize, n: usize) -> usize {
    k * n + 4 * (k.saturating_sub(1))
}

/// `4(x₁ + x₂ + 4) / (ρ' - ρ)`.
pub fn hypothesis_threshold(spec: &BoxSpec, rho_prime: f64) -> f64 {
    4.0 * (spec.x.iter().sum::<f64>() + 4.0) / (rho_prime - spec.rho)
}

#[derive(Debug, Clone, Serialize)]
pub struct TupleResult {
    pub members: Vec<usize>,
    pub step_length: usize,
    pub rescaled_profile: Vec<f64>,
    pub contained: bool,
    pub separator_safe: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContainmentReport {
    pub k: usize,
    pub n: usize,
    pub n_tilde: usize,
    pub rho: f64,
    pub rho_prime: f64,
    pub threshold: f64,
    pub hypothesis_met: bool,
    pub sampled_members: bool,
    pub tuples: Vec<TupleResult>,
    pub contained: usize,
    pub step_length_ok: usize,
    pub separator_safe: usize,
}

impl ContainmentReport {
    pub fn all_pass(&self) -> bool {
        self.contained == self.tuples.len() && self.step_length_ok == self.tuples.len()
    }
}

/// Samples `trials` k-tuples of plan members (with replacement), builds
/// each concatenation and checks that its rescaled checkpoint lengths lie
/// within `ρ'` of `x`.
pub fn verify_containment(
    plan: &ConcatPlan,
    k: usize,
    spec: &BoxSpec,
    rho_prime: f64,
    trials: usize,
    seed: u64,
) -> Result<ContainmentReport> {
    if k < 2 {
        return Err(Error::domain("concatenation needs k >= 2 paths"));
    }
    two_point(&spec.grid)?;
    if rho_prime.is_nan() || rho_prime <= spec.rho {
        return Err(Error::domain(format!("need rho' > rho, got {rho_prime} <= {}", spec.rho)));
    }
    if plan.members.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut rng = seeded_rng(seed, 0);
    let tuples: Vec<Vec<usize>> =
        (0..trials).map(|_| (0..k).map(|_| rng.random_range(0..plan.members.len())).collect()).collect();
    let n_tilde = concatenated_length(k, plan.n);
    let wide = spec.with_rho(rho_prime)?;
    let results: Vec<TupleResult> = tuples
        .into_par_iter()
        .map(|members| {
            let refs: Vec<&LatticePath> = members.iter().map(|&i| &plan.members[i]).collect();
            let h = concatenate(plan, &refs)?;
            let profile = crate::tree_walk::length_profile_at(&h.path, &spec.grid, h.path.n());
            Ok(TupleResult {
                step_length: h.path.n(),
                rescaled_profile: profile.iter().map(|&l| l as f64 / n_tilde as f64).collect(),
                contained: wide.contains_profile(&profile, n_tilde),
                separator_safe: h.separator_safe(),
                members,
            })
        })
        .collect::<Result<_>>()?;
    let threshold = hypothesis_threshold(spec, rho_prime);
    Ok(ContainmentReport {
        k,
        n: plan.n,
        n_tilde,
        rho: spec.rho,
        rho_prime,
        threshold,
        hypothesis_met: plan.n as f64 >= threshold,
        sampled_members: plan.sampled,
        contained: results.iter().filter(|r| r.contained).count(),
        step_length_ok: results.iter().filter(|r| r.step_length == n_tilde).count(),
        separator_safe: results.iter().filter(|r| r.separator_safe).count(),
        tuples: results,
    })
}
