//! Leave-one-out protocol, candidate ranking and HR@K / NDCG@K.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::nn::{dot, DenseMatrix};

pub const DEFAULT_CUTOFFS: [usize; 4] = [5, 10, 15, 20];
pub const DEFAULT_TEST_NEGATIVES: usize = 99;

/// An implicit interaction with its (latest) timestamp.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub timestamp: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub user: usize,
    pub held_out: usize,
    pub candidates: Vec<usize>,
}

impl TestCase {
    /// Held-out item followed by the sampled negatives.
    pub fn items(&self) -> Vec<usize> {
        std::iter::once(self.held_out)
            .chain(self.candidates.iter().copied())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LooSplit {
    pub n_users: usize,
    pub n_items: usize,
    pub train: Vec<Interaction>,
    pub test: Vec<TestCase>,
    /// Users with fewer than two interactions: kept in training, not tested.
    pub untested_users: Vec<usize>,
}

/// Holds out each user's latest interaction (ties broken by the larger item
/// index) and samples `n_negatives` distinct unrated items as candidates.
///
/// Users whose unrated pool is smaller than `n_negatives` get the whole pool.
pub fn leave_one_out_split<R: Rng + ?Sized>(
    interactions: &[Interaction],
    n_users: usize,
    n_items: usize,
    n_negatives: usize,
    rng: &mut R,
) -> LooSplit {
    let mut by_user: Vec<Vec<Interaction>> = vec![Vec::new(); n_users];
    for it in interactions {
        by_user[it.user].push(*it);
    }
    let mut train = Vec::with_capacity(interactions.len());
    let mut test = Vec::new();
    let mut untested_users = Vec::new();
    for (user, mut list) in by_user.into_iter().enumerate() {
        list.sort_by_key(|it| (it.timestamp, it.item));
        if list.len() < 2 {
            if !list.is_empty() {
                untested_users.push(user);
            }
            train.extend(list);
            continue;
        }
        let held = list.pop().expect("at least two interactions");
        let rated: HashSet<usize> = list.iter().map(|it| it.item).chain([held.item]).collect();
        let pool: Vec<usize> = (0..n_items).filter(|i| !rated.contains(i)).collect();
        let take = n_negatives.min(pool.len());
        if take < n_negatives {
            log::warn!(
                "user {user}: only {} unrated items for {n_negatives} test candidates",
                pool.len()
            );
        }
        let mut candidates: Vec<usize> = sample(rng, pool.len(), take)
            .into_iter()
            .map(|k| pool[k])
            .collect();
        candidates.sort_unstable();
        test.push(TestCase {
            user,
            held_out: held.item,
            candidates,
        });
        train.extend(list);
    }
    if !untested_users.is_empty() {
        log::info!(
            "{} users with fewer than two interactions are excluded from testing",
            untested_users.len()
        );
    }
    train.sort();
    LooSplit {
        n_users,
        n_items,
        train,
        test,
        untested_users,
    }
}

/// Sorts `items` by descending score; equal scores keep ascending item order.
pub fn rank_candidates(items: &[usize], scores: &[f64]) -> Vec<usize> {
    debug_assert_eq!(items.len(), scores.len());
    let mut order: Vec<(usize, f64)> = items.iter().copied().zip(scores.iter().copied()).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    order.into_iter().map(|(i, _)| i).collect()
}

/// 1-based position of `target` in `ranked`.
pub fn hit_position(ranked: &[usize], target: usize) -> Option<usize> {
    ranked.iter().position(|&i| i == target).map(|p| p + 1)
}

/// Hit ratio and NDCG at `k`, averaged over users.
pub fn hr_ndcg_at_k(ranked: &[Vec<usize>], held_out: &[usize], k: usize) -> (f64, f64) {
    assert!(k >= 1, "cutoff must be positive");
    assert_eq!(ranked.len(), held_out.len());
    if ranked.is_empty() {
        return (0.0, 0.0);
    }
    let (mut hits, mut gain) = (0.0, 0.0);
    for (list, &target) in ranked.iter().zip(held_out) {
        if let Some(p) = hit_position(list, target).filter(|&p| p <= k) {
            hits += 1.0;
            gain += 1.0 / ((p + 1) as f64).log2();
        }
    }
    let n = ranked.len() as f64;
    (hits / n, gain / n)
}

/// Scores candidate items for a user with a frozen model.
pub trait Scorer: Sync {
    fn score(&self, user: usize, items: &[usize]) -> Vec<f64>;
}

/// Ranks by global training interaction count.
pub struct ItemPop {
    counts: Vec<f64>,
}

impl ItemPop {
    pub fn fit(train: &[Interaction], n_items: usize) -> Self {
        let mut counts = vec![0.0; n_items];
        for it in train {
            counts[it.item] += 1.0;
        }
        ItemPop { counts }
    }
}

impl Scorer for ItemPop {
    fn score(&self, _user: usize, items: &[usize]) -> Vec<f64> {
        items.iter().map(|&i| self.counts[i]).collect()
    }
}

/// Dot products between precomputed fused user and item factors. The
/// sigmoid is monotone, so ranking by logits equals ranking by probability.
pub struct FactorScorer {
    pub users: DenseMatrix,
    pub items: DenseMatrix,
}

impl Scorer for FactorScorer {
    fn score(&self, user: usize, items: &[usize]) -> Vec<f64> {
        let u = self.users.row(user);
        items.iter().map(|&i| dot(u, self.items.row(i))).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub hr: f64,
    pub ndcg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub metrics: BTreeMap<usize, Metric>,
    pub n_users: usize,
    pub epoch: Option<usize>,
    pub seed: u64,
    pub config_hash: String,
}

/// One machine-readable row per `(run, K)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub run_id: String,
    pub model: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub hr: f64,
    pub ndcg: f64,
    pub epoch: Option<usize>,
    pub seed: u64,
}

impl EvalReport {
    pub fn records(&self, run_id: &str) -> Vec<MetricRecord> {
        self.metrics
            .iter()
            .map(|(&k, m)| MetricRecord {
                run_id: run_id.to_string(),
                model: self.model.clone(),
                k,
                hr: m.hr,
                ndcg: m.ndcg,
                epoch: self.epoch,
                seed: self.seed,
            })
            .collect()
    }

    pub fn get(&self, k: usize) -> Option<Metric> {
        self.metrics.get(&k).copied()
    }
}

/// Ranks every test case's 100 items and reports the metrics at each cutoff.
pub fn evaluate(
    scorer: &dyn Scorer,
    test: &[TestCase],
    cutoffs: &[usize],
) -> BTreeMap<usize, Metric> {
    let ranked: Vec<Vec<usize>> = test
        .par_iter()
        .map(|case| {
            let items = case.items();
            let scores = scorer.score(case.user, &items);
            rank_candidates(&items, &scores)
        })
        .collect();
    let held: Vec<usize> = test.iter().map(|c| c.held_out).collect();
    cutoffs
        .iter()
        .map(|&k| {
            let (hr, ndcg) = hr_ndcg_at_k(&ranked, &held, k);
            (k, Metric { hr, ndcg })
        })
        .collect()
}

/// Plain-text table of several reports side by side.
pub fn format_table(reports: &[EvalReport]) -> String {
    let cutoffs: Vec<usize> = reports
        .iter()
        .flat_map(|r| r.metrics.keys().copied())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let width = reports
        .iter()
        .map(|r| r.model.len())
        .max()
        .unwrap_or(5)
        .max(5);
    let mut out = String::new();
    let _ = write!(out, "{:width$}", "model");
    for k in &cutoffs {
        let _ = write!(
            out,
            "  {:>8}  {:>8}",
            format!("HR@{k}"),
            format!("NDCG@{k}")
        );
    }
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{:width$}", r.model);
        for k in &cutoffs {
            match r.metrics.get(k) {
                Some(m) => {
                    let _ = write!(out, "  {:>8.4}  {:>8.4}", m.hr, m.ndcg);
                }
                None => {
                    let _ = write!(out, "  {:>8}  {:>8}", "-", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn it(user: usize, item: usize, timestamp: u64) -> Interaction {
        Interaction {
            user,
            item,
            timestamp,
        }
    }

    #[test]
    fn latest_interaction_is_held_out() {
        let data = [it(0, 4, 1), it(0, 2, 3), it(0, 7, 2), it(1, 1, 5)];
        let split = leave_one_out_split(&data, 2, 200, 99, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(split.test.len(), 1);
        assert_eq!(split.test[0].held_out, 2);
        assert_eq!(split.test[0].candidates.len(), 99);
        assert_eq!(split.untested_users, vec![1]);
        assert!(split.train.contains(&it(1, 1, 5)));
        assert!(!split.train.iter().any(|x| x.user == 0 && x.item == 2));
    }

    #[test]
    fn timestamp_ties_use_item_index() {
        let data = [it(0, 9, 4), it(0, 3, 4), it(0, 5, 1)];
        let split = leave_one_out_split(&data, 1, 20, 5, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(split.test[0].held_out, 9);
    }

    #[test]
    fn candidates_avoid_rated_items_and_repeat_under_seed() {
        let data: Vec<Interaction> = (0..30).map(|i| it(0, i * 3, i as u64)).collect();
        let a = leave_one_out_split(&data, 1, 200, 99, &mut ChaCha8Rng::seed_from_u64(7));
        let b = leave_one_out_split(&data, 1, 200, 99, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
        let cands = &a.test[0].candidates;
        let unique: HashSet<_> = cands.iter().collect();
        assert_eq!(unique.len(), 99);
        assert!(cands.iter().all(|c| c % 3 != 0 || *c >= 90));
    }

    #[test]
    fn ranking_and_ties() {
        assert_eq!(rank_candidates(&[4, 8, 1], &[0.9, 0.5, 0.1]), vec![4, 8, 1]);
        assert_eq!(rank_candidates(&[4, 8, 1], &[0.2, 0.2, 0.2]), vec![1, 4, 8]);
        let items: Vec<usize> = (0..100).collect();
        assert_eq!(rank_candidates(&items, &[0.0; 100]).len(), 100);
    }

    #[test]
    fn metric_examples() {
        let (hr, ndcg) = hr_ndcg_at_k(&[vec![3, 1, 2]], &[3], 10);
        assert_eq!((hr, ndcg), (1.0, 1.0));
        let (_, ndcg) = hr_ndcg_at_k(&[vec![1, 2, 3]], &[3], 10);
        assert_eq!(ndcg, 0.5);
        let list: Vec<usize> = (0..11).collect();
        assert_eq!(hr_ndcg_at_k(&[list], &[10], 10), (0.0, 0.0));
    }

    #[test]
    fn item_popularity() {
        let train = [it(0, 1, 0), it(1, 1, 0), it(2, 0, 0)];
        let pop = ItemPop::fit(&train, 3);
        assert_eq!(pop.score(0, &[0, 1, 2]), vec![1.0, 2.0, 0.0]);
    }
}
