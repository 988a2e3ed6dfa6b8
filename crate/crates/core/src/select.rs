//! Selection policies: turn a score vector and a budget into a coreset.
//!
//! Every policy is class-balanced: the budget is first split across classes
//! by [`allocate_balanced`], then each policy picks within each class. The
//! group-balanced oracle policies split each class budget across its
//! (class, attribute) groups as well.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::characterize::{ScoreMethod, ScoreVector};
use crate::data::{GroupKey, GroupTable, LabeledDataset};
use crate::error::{Error, Result};
use crate::seed;

/// Per-key budgets. Keys are class labels or [`GroupKey`]s.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation<K: Ord> {
    pub budgets: BTreeMap<K, usize>,
}

impl<K: Ord> Allocation<K> {
    pub fn total(&self) -> usize {
        self.budgets.values().sum()
    }

    pub fn get(&self, key: &K) -> usize {
        self.budgets.get(key).copied().unwrap_or(0)
    }
}

/// Split `budget` as evenly as possible across keys without exceeding any
/// key's availability.
///
/// Water-filling: every key targets `budget / K`; keys whose availability
/// falls short are capped and their shortfall is spread evenly over the
/// rest, until no further key caps. The common level of the uncapped keys is
/// integerized by largest remainder, remaining ties going to lower keys.
pub fn allocate_balanced<K: Ord + Clone>(
    availability: &BTreeMap<K, usize>,
    budget: usize,
) -> Result<Allocation<K>> {
    let available: usize = availability.values().sum();
    if budget > available {
        return Err(Error::BudgetExceedsAvailability { budget, available });
    }
    let mut capped: BTreeMap<&K, bool> = availability.keys().map(|k| (k, false)).collect();
    let (remaining, free) = loop {
        let capped_total: usize = availability
            .iter()
            .filter(|(k, _)| capped[k])
            .map(|(_, &a)| a)
            .sum();
        let remaining = budget - capped_total.min(budget);
        let free = capped.values().filter(|&&c| !c).count();
        if free == 0 {
            break (remaining, free);
        }
        // availability < remaining / free, in integers
        let newly: Vec<&K> = availability
            .iter()
            .filter(|(k, &a)| !capped[k] && a * free < remaining)
            .map(|(k, _)| k)
            .collect();
        if newly.is_empty() {
            break (remaining, free);
        }
        for k in newly {
            capped.insert(k, true);
        }
    };
    let mut budgets = BTreeMap::new();
    let base = remaining.checked_div(free).unwrap_or(0);
    let mut extra = remaining.checked_rem(free).unwrap_or(0);
    for (k, &a) in availability {
        let b = if capped[k] {
            a
        } else if extra > 0 {
            extra -= 1;
            base + 1
        } else {
            base
        };
        budgets.insert(k.clone(), b);
    }
    Ok(Allocation { budgets })
}

/// Class-balanced split of `budget` over a dataset's classes.
pub fn allocate_classes(ds: &LabeledDataset, budget: usize) -> Result<Allocation<u32>> {
    let availability = ds
        .class_indices()
        .iter()
        .enumerate()
        .map(|(y, v)| (y as u32, v.len()))
        .collect();
    allocate_balanced(&availability, budget)
}

/// Class-balanced split first, then within each class a balanced split
/// across that class's groups.
pub fn allocate_group_balanced(table: &GroupTable, budget: usize) -> Result<Allocation<GroupKey>> {
    let class_avail: BTreeMap<u32, usize> = (0..table.num_classes())
        .map(|y| (y, table.class_count(y) as usize))
        .collect();
    let per_class = allocate_balanced(&class_avail, budget)?;
    let mut budgets = BTreeMap::new();
    for (&y, &class_budget) in &per_class.budgets {
        let groups: BTreeMap<GroupKey, usize> = (0..table.num_attrs())
            .map(|a| {
                let k = GroupKey::new(y, a);
                (k, table.count(k) as usize)
            })
            .collect();
        budgets.extend(allocate_balanced(&groups, class_budget)?.budgets);
    }
    Ok(Allocation { budgets })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Diff,
    DiffStar,
    Eas,
    Med,
    Strat,
    Rand,
    RGbal,
    DiffGbal,
    EasGbal,
}

impl Policy {
    pub const ALL: [Policy; 9] = [
        Policy::Diff,
        Policy::DiffStar,
        Policy::Eas,
        Policy::Med,
        Policy::Strat,
        Policy::Rand,
        Policy::RGbal,
        Policy::DiffGbal,
        Policy::EasGbal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Diff => "diff",
            Policy::DiffStar => "diffstar",
            Policy::Eas => "eas",
            Policy::Med => "med",
            Policy::Strat => "strat",
            Policy::Rand => "rand",
            Policy::RGbal => "rgbal",
            Policy::DiffGbal => "diffgbal",
            Policy::EasGbal => "easgbal",
        }
    }

    pub fn needs_scores(self) -> bool {
        !matches!(self, Policy::Rand | Policy::RGbal)
    }

    /// Oracle policies that use attribute labels.
    pub fn is_group_balanced(self) -> bool {
        matches!(self, Policy::RGbal | Policy::DiffGbal | Policy::EasGbal)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        let s = match s.as_str() {
            "diff*" | "difficult*" => "diffstar",
            "difficult" => "diff",
            "easy" => "eas",
            "median" => "med",
            "stratified" => "strat",
            "random" | "r" => "rand",
            other => other,
        };
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown selection policy {s:?}")))
    }
}

/// Selected sample ids (ascending) with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coreset {
    pub indices: Vec<usize>,
    pub rate: f64,
    pub policy: Policy,
    pub score_method: Option<ScoreMethod>,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    policy: Policy,
    method: Option<ScoreMethod>,
    rate: f64,
    seed: u64,
    n_selected: usize,
    toolkit_version: String,
}

impl Coreset {
    fn new(
        mut indices: Vec<usize>,
        policy: Policy,
        method: Option<ScoreMethod>,
        seed: u64,
    ) -> Self {
        indices.sort_unstable();
        Self {
            indices,
            rate: 0.0,
            policy,
            score_method: method,
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn group_table(&self, ds: &LabeledDataset) -> GroupTable {
        GroupTable::of_indices(ds, &self.indices)
    }

    /// Sidecar path for a manifest: same stem, `.json` extension.
    pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
        path.with_extension("json")
    }

    /// Single-column `sample_id` CSV plus a JSON provenance sidecar.
    pub fn write_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut body = String::from("sample_id\n");
        for i in &self.indices {
            body.push_str(&i.to_string());
            body.push('\n');
        }
        std::fs::write(path, body).map_err(|e| Error::file(path, e))?;
        let sidecar = Sidecar {
            policy: self.policy,
            method: self.score_method,
            rate: self.rate,
            seed: self.seed,
            n_selected: self.indices.len(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        };
        let side = Self::sidecar_path(path);
        let json = serde_json::to_string_pretty(&sidecar)?;
        std::fs::write(&side, json + "\n").map_err(|e| Error::file(side, e))?;
        Ok(())
    }

    pub fn read_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        let mut r = csv::Reader::from_reader(file);
        if r.headers()?.iter().collect::<Vec<_>>() != ["sample_id"] {
            return Err(Error::Format(
                "coreset manifest must have header sample_id".into(),
            ));
        }
        let mut indices = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            indices.push(
                rec[0]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("manifest row {row}: bad sample_id")))?,
            );
        }
        let side = Self::sidecar_path(path);
        let text = std::fs::read_to_string(&side).map_err(|e| Error::file(&side, e))?;
        let meta: Sidecar = serde_json::from_str(&text)?;
        if meta.n_selected != indices.len() {
            return Err(Error::LengthMismatch {
                declared: meta.n_selected,
                found: indices.len(),
            });
        }
        Ok(Self {
            indices,
            rate: meta.rate,
            policy: meta.policy,
            score_method: meta.method,
            seed: meta.seed,
        })
    }
}

/// Pool sorted by descending score, ties by lower index.
fn rank_desc(pool: &[usize], scores: &[f64]) -> Vec<usize> {
    let mut v = pool.to_vec();
    v.sort_by(|&a, &b| score_cmp(scores[b], scores[a]).then(a.cmp(&b)));
    v
}

/// Pool sorted by ascending score, ties by lower index.
fn rank_asc(pool: &[usize], scores: &[f64]) -> Vec<usize> {
    let mut v = pool.to_vec();
    v.sort_by(|&a, &b| score_cmp(scores[a], scores[b]).then(a.cmp(&b)));
    v
}

fn median(sorted: &[f64]) -> f64 {
    let m = sorted.len();
    if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    }
}

/// Pool ranked by distance to the pool's median score; ties by lower score,
/// then lower index.
/// Order on finite scores; unlike `total_cmp`, `-0.0 == 0.0`.
pub(crate) fn score_cmp(a: f64, b: f64) -> std::cmp::Ordering {
    a.partial_cmp(&b).expect("scores are finite")
}

fn rank_median(pool: &[usize], scores: &[f64]) -> Vec<usize> {
    if pool.is_empty() {
        return Vec::new();
    }
    let mut vals: Vec<f64> = pool.iter().map(|&i| scores[i]).collect();
    vals.sort_by(|a, b| score_cmp(*a, *b));
    let med = median(&vals);
    let mut v = pool.to_vec();
    v.sort_by(|&a, &b| {
        score_cmp((scores[a] - med).abs(), (scores[b] - med).abs())
            .then(score_cmp(scores[a], scores[b]))
            .then(a.cmp(&b))
    });
    v
}

fn sample_without_replacement(
    pool: &[usize],
    m: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<usize> {
    index::sample(rng, pool.len(), m)
        .into_iter()
        .map(|j| pool[j])
        .collect()
}

/// Rank-based stratified sampling within one pool.
fn stratified_pool(
    pool: &[usize],
    scores: &[f64],
    m: usize,
    bins: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Vec<usize>> {
    let ranked = rank_asc(pool, scores);
    let len = ranked.len();
    let bins = bins.max(1);
    let edges: Vec<usize> = (0..=bins).map(|b| b * len / bins).collect();
    let availability: BTreeMap<usize, usize> =
        (0..bins).map(|b| (b, edges[b + 1] - edges[b])).collect();
    let per_bin = allocate_balanced(&availability, m)?;
    let mut out = Vec::with_capacity(m);
    for (b, &take) in &per_bin.budgets {
        out.extend(sample_without_replacement(
            &ranked[edges[*b]..edges[b + 1]],
            take,
            rng,
        ));
    }
    Ok(out)
}

fn check_scores(ds: &LabeledDataset, scores: &ScoreVector) -> Result<()> {
    scores.expect_len(ds.len())
}

fn check_alloc(pools: &[Vec<usize>], alloc: &Allocation<u32>) -> Result<()> {
    for (&y, &b) in &alloc.budgets {
        let available = pools.get(y as usize).map_or(0, Vec::len);
        if b > available {
            return Err(Error::BudgetExceedsAvailability {
                budget: b,
                available,
            });
        }
    }
    Ok(())
}

fn per_class<F>(ds: &LabeledDataset, alloc: &Allocation<u32>, mut pick: F) -> Result<Vec<usize>>
where
    F: FnMut(u32, &[usize], usize) -> Result<Vec<usize>>,
{
    let pools = ds.class_indices();
    check_alloc(&pools, alloc)?;
    let mut out = Vec::with_capacity(alloc.total());
    for (&y, &b) in &alloc.budgets {
        out.extend(pick(y, &pools[y as usize], b)?);
    }
    Ok(out)
}

fn class_rng(seed: u64, tag: &str, key: impl fmt::Display) -> rand_chacha::ChaCha8Rng {
    seed::stage_rng(seed::derive(seed, tag), &key.to_string())
}

/// Highest-scoring `alloc[class]` samples of each class.
pub fn select_difficult(
    ds: &LabeledDataset,
    scores: &ScoreVector,
    alloc: &Allocation<u32>,
) -> Result<Coreset> {
    check_scores(ds, scores)?;
    let idx = per_class(ds, alloc, |_, pool, b| {
        Ok(rank_desc(pool, scores.values())[..b].to_vec())
    })?;
    Ok(Coreset::new(idx, Policy::Diff, Some(scores.method()), 0))
}

/// Lowest-scoring `alloc[class]` samples of each class.
pub fn select_easy(
    ds: &LabeledDataset,
    scores: &ScoreVector,
    alloc: &Allocation<u32>,
) -> Result<Coreset> {
    check_scores(ds, scores)?;
    let idx = per_class(ds, alloc, |_, pool, b| {
        Ok(rank_asc(pool, scores.values())[..b].to_vec())
    })?;
    Ok(Coreset::new(idx, Policy::Eas, Some(scores.method()), 0))
}

/// Number of top scorers dropped from a class of `class_size` samples.
pub fn trim_count(class_size: usize, trim: f64) -> usize {
    (trim * class_size as f64).ceil() as usize
}

/// Difficult after dropping the top `ceil(trim * class_size)` scorers of
/// each class.
pub fn select_difficult_star(
    ds: &LabeledDataset,
    scores: &ScoreVector,
    alloc: &Allocation<u32>,
    trim: f64,
) -> Result<Coreset> {
    check_scores(ds, scores)?;
    if !(0.0..0.5).contains(&trim) {
        return Err(Error::InvalidConfig(format!(
            "trim = {trim} must lie in [0, 0.5)"
        )));
    }
    let idx = per_class(ds, alloc, |y, pool, b| {
        let ranked = rank_desc(pool, scores.values());
        let kept = &ranked[trim_count(pool.len(), trim)..];
        if kept.len() < b {
            return Err(Error::InsufficientAfterTrim {
                class: y,
                available: kept.len(),
                requested: b,
            });
        }
        Ok(kept[..b].to_vec())
    })?;
    Ok(Coreset::new(
        idx,
        Policy::DiffStar,
        Some(scores.method()),
        0,
    ))
}

/// Samples closest to their class's median score.
pub fn select_median(
    ds: &LabeledDataset,
    scores: &ScoreVector,
    alloc: &Allocation<u32>,
) -> Result<Coreset> {
    check_scores(ds, scores)?;
    let idx = per_class(ds, alloc, |_, pool, b| {
        Ok(rank_median(pool, scores.values())[..b].to_vec())
    })?;
    Ok(Coreset::new(idx, Policy::Med, Some(scores.method()), 0))
}

/// Per class, split the score ranking into `bins` near-equal-count bins and
/// sample uniformly within each bin. Bin budgets come from
/// [`allocate_balanced`] over bin sizes, so short bins donate their shortfall.
pub fn select_stratified(
    ds: &LabeledDataset,
    scores: &ScoreVector,
    alloc: &Allocation<u32>,
    bins: usize,
    seed: u64,
) -> Result<Coreset> {
    check_scores(ds, scores)?;
    if bins == 0 {
        return Err(Error::InvalidConfig("bins must be at least 1".into()));
    }
    let idx = per_class(ds, alloc, |y, pool, b| {
        stratified_pool(
            pool,
            scores.values(),
            b,
            bins,
            &mut class_rng(seed, "strat", y),
        )
    })?;
    Ok(Coreset::new(
        idx,
        Policy::Strat,
        Some(scores.method()),
        seed,
    ))
}

/// Uniform sampling without replacement within each class.
pub fn select_random(ds: &LabeledDataset, alloc: &Allocation<u32>, seed: u64) -> Result<Coreset> {
    let idx = per_class(ds, alloc, |y, pool, b| {
        Ok(sample_without_replacement(
            pool,
            b,
            &mut class_rng(seed, "rand", y),
        ))
    })?;
    Ok(Coreset::new(idx, Policy::Rand, None, seed))
}

/// Group-balanced oracle selection: `group_alloc[g]` samples from each group,
/// chosen at random (RGbal), highest-scoring (DiffGbal) or lowest-scoring
/// (EasGbal).
pub fn select_group_policy(
    ds: &LabeledDataset,
    scores: Option<&ScoreVector>,
    group_alloc: &Allocation<GroupKey>,
    variant: Policy,
    seed: u64,
) -> Result<Coreset> {
    if !variant.is_group_balanced() {
        return Err(Error::InvalidConfig(format!(
            "{variant} is not a group-balanced policy"
        )));
    }
    let scores = match (variant, scores) {
        (Policy::RGbal, s) => s,
        (_, Some(s)) => Some(s),
        (_, None) => return Err(Error::MissingScores(variant.name())),
    };
    if let Some(s) = scores {
        check_scores(ds, s)?;
    }
    let groups = ds.group_indices();
    let empty = Vec::new();
    let mut out = Vec::with_capacity(group_alloc.total());
    for (g, &b) in &group_alloc.budgets {
        let pool = groups.get(g).unwrap_or(&empty);
        if b > pool.len() {
            return Err(Error::BudgetExceedsAvailability {
                budget: b,
                available: pool.len(),
            });
        }
        let picked = match variant {
            Policy::RGbal => sample_without_replacement(pool, b, &mut class_rng(seed, "rgbal", g)),
            Policy::DiffGbal => rank_desc(pool, scores.expect("checked").values())[..b].to_vec(),
            _ => rank_asc(pool, scores.expect("checked").values())[..b].to_vec(),
        };
        out.extend(picked);
    }
    let method = if variant == Policy::RGbal {
        None
    } else {
        scores.map(ScoreVector::method)
    };
    Ok(Coreset::new(out, variant, method, seed))
}

/// Knobs shared by the score-based policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectOptions {
    pub bins: usize,
    pub trim: f64,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self {
            bins: 50,
            trim: 0.03,
        }
    }
}

/// Coreset size for a selection rate: `round(rate * n)`.
pub fn budget_for_rate(n: usize, rate: f64) -> Result<usize> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "rate {rate} must lie in (0, 1]"
        )));
    }
    Ok(((rate * n as f64).round() as usize).clamp(1, n))
}

/// Budget from `rate`, allocation for `policy`, then selection.
///
/// Difficult* allocates over the per-class counts left after trimming, so the
/// class split stays feasible.
pub fn select(
    ds: &LabeledDataset,
    policy: Policy,
    scores: Option<&ScoreVector>,
    rate: f64,
    seed: u64,
    opts: &SelectOptions,
) -> Result<Coreset> {
    let budget = budget_for_rate(ds.len(), rate)?;
    let need = || scores.ok_or(Error::MissingScores(policy.name()));
    let mut coreset = match policy {
        Policy::RGbal | Policy::DiffGbal | Policy::EasGbal => {
            let alloc = allocate_group_balanced(&crate::data::group_table(ds), budget)?;
            select_group_policy(ds, scores, &alloc, policy, seed)?
        }
        Policy::Rand => select_random(ds, &allocate_classes(ds, budget)?, seed)?,
        Policy::DiffStar => {
            let availability = ds
                .class_indices()
                .iter()
                .enumerate()
                .map(|(y, v)| {
                    (
                        y as u32,
                        v.len() - trim_count(v.len(), opts.trim).min(v.len()),
                    )
                })
                .collect();
            let alloc = allocate_balanced(&availability, budget)?;
            select_difficult_star(ds, need()?, &alloc, opts.trim)?
        }
        _ => {
            let alloc = allocate_classes(ds, budget)?;
            let s = need()?;
            match policy {
                Policy::Diff => select_difficult(ds, s, &alloc)?,
                Policy::Eas => select_easy(ds, s, &alloc)?,
                Policy::Med => select_median(ds, s, &alloc)?,
                Policy::Strat => select_stratified(ds, s, &alloc, opts.bins, seed)?,
                _ => unreachable!("handled above"),
            }
        }
    };
    coreset.rate = rate;
    coreset.seed = seed;
    Ok(coreset)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn avail(pairs: &[(char, usize)]) -> BTreeMap<char, usize> {
        pairs.iter().copied().collect()
    }

    fn one_class(scores: &[f64]) -> (LabeledDataset, ScoreVector) {
        let n = scores.len();
        let ds = LabeledDataset::new("c", 1, vec![0.0; n], vec![0; n], vec![0; n], 1, 1).unwrap();
        (
            ds,
            ScoreVector::new(ScoreMethod::El2n, scores.to_vec()).unwrap(),
        )
    }

    fn class_alloc(b: usize) -> Allocation<u32> {
        Allocation {
            budgets: [(0u32, b)].into_iter().collect(),
        }
    }

    #[test]
    fn allocate_examples() {
        let a = allocate_balanced(&avail(&[('A', 3), ('B', 100)]), 10).unwrap();
        assert_eq!(a.budgets, avail(&[('A', 3), ('B', 7)]));
        let a = allocate_balanced(&avail(&[('A', 50), ('B', 50), ('C', 50)]), 9).unwrap();
        assert_eq!(a.budgets, avail(&[('A', 3), ('B', 3), ('C', 3)]));
        let a = allocate_balanced(&avail(&[('A', 2), ('B', 3), ('C', 100)]), 10).unwrap();
        assert_eq!(a.budgets, avail(&[('A', 2), ('B', 3), ('C', 5)]));
    }

    #[test]
    fn allocate_remainder_goes_to_lower_keys() {
        let a = allocate_balanced(&avail(&[('A', 50), ('B', 50), ('C', 50)]), 10).unwrap();
        assert_eq!(a.budgets, avail(&[('A', 4), ('B', 3), ('C', 3)]));
    }

    #[test]
    fn allocate_rejects_over_budget() {
        assert!(matches!(
            allocate_balanced(&avail(&[('A', 2)]), 3),
            Err(Error::BudgetExceedsAvailability {
                budget: 3,
                available: 2
            })
        ));
    }

    fn fixture_table() -> GroupTable {
        GroupTable::from_counts(
            2,
            2,
            [
                (GroupKey::new(0, 0), 95),
                (GroupKey::new(0, 1), 5),
                (GroupKey::new(1, 0), 5),
                (GroupKey::new(1, 1), 95),
            ],
        )
        .unwrap()
    }

    #[test]
    fn group_allocation_examples() {
        let t = fixture_table();
        let g = |b| {
            allocate_group_balanced(&t, b)
                .unwrap()
                .budgets
                .into_values()
                .collect::<Vec<_>>()
        };
        assert_eq!(g(20), vec![5, 5, 5, 5]);
        assert_eq!(g(40), vec![15, 5, 5, 15]);
        assert_eq!(g(4), vec![1, 1, 1, 1]);
    }

    #[test]
    fn diff_eas_and_ties() {
        let (ds, s) = one_class(&[0.1, 0.9, 0.5]);
        assert_eq!(
            select_difficult(&ds, &s, &class_alloc(1)).unwrap().indices,
            vec![1]
        );
        assert_eq!(
            select_easy(&ds, &s, &class_alloc(1)).unwrap().indices,
            vec![0]
        );
        let (ds, s) = one_class(&[0.5, 0.5]);
        assert_eq!(
            select_difficult(&ds, &s, &class_alloc(1)).unwrap().indices,
            vec![0]
        );
    }

    #[test]
    fn difficult_star_trims_top_three_percent() {
        let scores: Vec<f64> = (0..100).map(|i| f64::from(i) * 0.5).collect();
        let (ds, s) = one_class(&scores);
        let c = select_difficult_star(&ds, &s, &class_alloc(10), 0.03).unwrap();
        // descending ranks 4..=13 are scores 96..=87
        assert_eq!(c.indices, (87..97).collect::<Vec<_>>());
        let plain = select_difficult(&ds, &s, &class_alloc(10)).unwrap();
        let zero = select_difficult_star(&ds, &s, &class_alloc(10), 0.0).unwrap();
        assert_eq!(plain.indices, zero.indices);
        assert_eq!(trim_count(10, 0.03), 1);
        let (ds, s) = one_class(&scores[..10]);
        assert!(matches!(
            select_difficult_star(&ds, &s, &class_alloc(10), 0.03),
            Err(Error::InsufficientAfterTrim {
                available: 9,
                requested: 10,
                ..
            })
        ));
    }

    #[test]
    fn median_examples() {
        let (ds, s) = one_class(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(
            select_median(&ds, &s, &class_alloc(3)).unwrap().indices,
            vec![1, 2, 3]
        );
        assert_eq!(
            select_median(&ds, &s, &class_alloc(5)).unwrap().indices,
            vec![0, 1, 2, 3, 4]
        );
        let (ds, s) = one_class(&[7.0]);
        assert_eq!(
            select_median(&ds, &s, &class_alloc(1)).unwrap().indices,
            vec![0]
        );
    }

    #[test]
    fn stratified_examples() {
        let scores: Vec<f64> = (0..100).map(|i| f64::from((i * 37) % 100)).collect();
        let (ds, s) = one_class(&scores);
        let c = select_stratified(&ds, &s, &class_alloc(50), 50, 3).unwrap();
        let mut bins = [0; 50];
        for &i in &c.indices {
            bins[scores[i] as usize / 2] += 1;
        }
        assert!(bins.iter().all(|&b| b == 1));

        for seed in 0..5 {
            let all = select_stratified(&ds, &s, &class_alloc(100), 50, seed).unwrap();
            assert_eq!(all.indices, (0..100).collect::<Vec<_>>());
        }

        let (ds, s) = one_class(&scores[..10]);
        let c = select_stratified(&ds, &s, &class_alloc(5), 50, 1).unwrap();
        assert_eq!(c.len(), 5);
    }

    #[test]
    fn random_examples() {
        let n = 1000;
        let ds = LabeledDataset::new("r", 1, vec![0.0; n], vec![0; n], vec![0; n], 1, 1).unwrap();
        let full = select_random(&ds, &class_alloc(n), 0).unwrap();
        assert_eq!(full.indices, (0..n).collect::<Vec<_>>());
        let a = select_random(&ds, &class_alloc(100), 1).unwrap();
        let b = select_random(&ds, &class_alloc(100), 1).unwrap();
        let c = select_random(&ds, &class_alloc(100), 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.indices, c.indices);
    }

    #[test]
    fn group_policies() {
        let ds = LabeledDataset::new(
            "g",
            1,
            vec![0.0; 4],
            vec![0, 0, 1, 1],
            vec![0, 1, 0, 1],
            2,
            2,
        )
        .unwrap();
        let s = ScoreVector::new(ScoreMethod::El2n, vec![0.1, 0.9, 0.4, 0.2]).unwrap();
        let alloc = Allocation {
            budgets: [
                (GroupKey::new(0, 0), 0),
                (GroupKey::new(0, 1), 1),
                (GroupKey::new(1, 0), 1),
                (GroupKey::new(1, 1), 0),
            ]
            .into_iter()
            .collect(),
        };
        let d = select_group_policy(&ds, Some(&s), &alloc, Policy::DiffGbal, 0).unwrap();
        assert_eq!(d.indices, vec![1, 2]);
        assert!(matches!(
            select_group_policy(&ds, None, &alloc, Policy::EasGbal, 0),
            Err(Error::MissingScores(_))
        ));
        let r = select_group_policy(&ds, None, &alloc, Policy::RGbal, 0).unwrap();
        assert_eq!(r.group_table(&ds), d.group_table(&ds));
    }

    #[test]
    fn policy_names_round_trip() {
        for p in Policy::ALL {
            assert_eq!(p.name().parse::<Policy>().unwrap(), p);
        }
        assert_eq!("Diff*".parse::<Policy>().unwrap(), Policy::DiffStar);
        assert_eq!("R-Gbal".parse::<Policy>().unwrap(), Policy::RGbal);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coreset.csv");
        let c = Coreset {
            indices: vec![0, 4, 9],
            rate: 0.3,
            policy: Policy::Strat,
            score_method: Some(ScoreMethod::Uncertainty),
            seed: 5,
        };
        c.write_manifest(&path).unwrap();
        assert_eq!(Coreset::read_manifest(&path).unwrap(), c);
        let side = std::fs::read_to_string(dir.path().join("coreset.json")).unwrap();
        assert!(side.contains("\"toolkit_version\""));
    }
}
