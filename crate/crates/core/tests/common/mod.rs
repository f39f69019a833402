//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use neuacf::model::Example;
use neuacf::nn::Activation;
use neuacf::{
    build_graph, Aspect, AspectSet, FeatureSet, FusionMode, HinGraph, ModelDims, NeuAcfModel,
    Schema, Side, SimilarityMatrix, SparseMatrix,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random graph over node types `A..`, at most one relation per type pair.
pub struct RandomHin {
    pub schema: Schema,
    pub graph: HinGraph,
    pub counts: HashMap<char, usize>,
    /// label -> (source type, target type, edges)
    pub edges: BTreeMap<String, (char, char, Vec<(usize, usize)>)>,
}

pub fn random_hin<R: Rng>(rng: &mut R, max_nodes: usize, max_relations: usize) -> RandomHin {
    let n_types = rng.gen_range(2..=4);
    let types: Vec<char> = (0..n_types).map(|k| (b'A' + k as u8) as char).collect();
    let mut pairs: Vec<(char, char)> = Vec::new();
    for (i, &a) in types.iter().enumerate() {
        for &b in &types[i + 1..] {
            pairs.push(if rng.gen_bool(0.5) { (a, b) } else { (b, a) });
        }
    }
    pairs.shuffle(rng);
    pairs.truncate(rng.gen_range(1..=max_relations.min(pairs.len())));
    let counts: HashMap<char, usize> = types
        .iter()
        .map(|&t| (t, rng.gen_range(1..=max_nodes)))
        .collect();
    let mut edges = BTreeMap::new();
    for &(s, t) in &pairs {
        let density = rng.gen_range(0.05..0.5);
        let mut list = Vec::new();
        for a in 0..counts[&s] {
            for b in 0..counts[&t] {
                if rng.gen_bool(density) {
                    list.push((a, b));
                    if rng.gen_bool(0.1) {
                        list.push((a, b));
                    }
                }
            }
        }
        list.shuffle(rng);
        edges.insert(format!("{s}{t}"), (s, t, list));
    }
    let schema = Schema::new(
        types.iter().copied(),
        edges.iter().map(|(l, (s, t, _))| (l.clone(), *s, *t)),
    )
    .unwrap();
    let lists: BTreeMap<String, Vec<(usize, usize)>> = edges
        .iter()
        .map(|(l, (_, _, e))| (l.clone(), e.clone()))
        .collect();
    let graph = build_graph(schema.clone(), &counts, &lists).unwrap();
    RandomHin {
        schema,
        graph,
        counts,
        edges,
    }
}

impl RandomHin {
    /// Neighbours of `node` (of type `from`) among nodes of type `to`.
    fn neighbours(&self, from: char, to: char, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for (s, t, list) in self.edges.values() {
            if (*s, *t) == (from, to) {
                out.extend(list.iter().filter(|e| e.0 == node).map(|e| e.1));
            } else if (*s, *t) == (to, from) {
                out.extend(list.iter().filter(|e| e.1 == node).map(|e| e.0));
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Random palindromic type sequence of odd length along existing relations.
    pub fn random_metapath<R: Rng>(&self, rng: &mut R, max_half: usize) -> Option<String> {
        let adjacent = |t: char| -> Vec<char> {
            self.edges
                .values()
                .filter_map(|(s, u, _)| {
                    if *s == t {
                        Some(*u)
                    } else if *u == t {
                        Some(*s)
                    } else {
                        None
                    }
                })
                .collect()
        };
        let starts: Vec<char> = self
            .counts
            .keys()
            .copied()
            .filter(|&t| !adjacent(t).is_empty())
            .collect();
        let mut walk = vec![*starts.choose(rng)?];
        for _ in 0..rng.gen_range(1..=max_half) {
            let next = adjacent(*walk.last().unwrap());
            walk.push(*next.choose(rng).unwrap());
        }
        let back: Vec<char> = walk.iter().rev().skip(1).copied().collect();
        walk.extend(back);
        Some(walk.into_iter().collect())
    }

    /// Counts path instances by explicit depth-first enumeration.
    pub fn brute_force_commuting(&self, path: &str) -> Vec<Vec<f64>> {
        let types: Vec<char> = path.chars().collect();
        let n = self.counts[&types[0]];
        let mut out = vec![vec![0.0; n]; n];
        fn walk(h: &RandomHin, types: &[char], node: usize, start: usize, out: &mut [Vec<f64>]) {
            if types.len() == 1 {
                out[start][node] += 1.0;
                return;
            }
            for next in h.neighbours(types[0], types[1], node) {
                walk(h, &types[1..], next, start, out);
            }
        }
        for start in 0..n {
            walk(self, &types, start, start, &mut out);
        }
        out
    }
}

pub fn pathsim_formula(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut s = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in 0..n {
            let den = m[a][a] + m[b][b];
            s[a][b] = if den > 0.0 { 2.0 * m[a][b] / den } else { 0.0 };
        }
    }
    s
}

/// Largest per-tensor relative error `|g - fd| / (|g| + |fd|)` (norms over
/// each tensor) between analytic gradients and central differences of the
/// mean batch loss.
pub fn gradient_check(
    model: &mut NeuAcfModel,
    features: &FeatureSet,
    batch: &[Example],
    h: f64,
) -> f64 {
    let (_, grads) = model.loss_and_grads(features, batch).unwrap();
    let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();
    let mut worst: f64 = 0.0;
    for (k, g) in analytic.iter().enumerate() {
        let mut diff2 = 0.0;
        let mut norm_a = 0.0;
        let mut norm_n = 0.0;
        for (j, &gj) in g.iter().enumerate() {
            let orig = model.params()[k][j];
            model.params_mut()[k][j] = orig + h;
            let up = model.loss_and_grads(features, batch).unwrap().0;
            model.params_mut()[k][j] = orig - h;
            let down = model.loss_and_grads(features, batch).unwrap().0;
            model.params_mut()[k][j] = orig;
            let numeric = (up - down) / (2.0 * h);
            diff2 += (gj - numeric) * (gj - numeric);
            norm_a += gj * gj;
            norm_n += numeric * numeric;
        }
        let (na, nn, diff) = (norm_a.sqrt(), norm_n.sqrt(), diff2.sqrt());
        // A tensor whose true gradient is identically zero (the attention
        // output bias, by softmax shift invariance) only carries rounding
        // noise; it is held to an absolute bound instead.
        let rel = if na < 1e-9 && nn < 1e-9 {
            if diff < 1e-9 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff / (na + nn)
        };
        worst = worst.max(rel);
    }
    worst
}

const LABELS: [&str; 3] = ["A", "B", "C"];

fn random_sim(rng: &mut ChaCha8Rng, aspect: &str, side: Side, n: usize) -> SimilarityMatrix {
    let dense: Vec<f64> = (0..n * n)
        .map(|_| {
            if rng.gen_bool(0.3) {
                0.0
            } else {
                rng.gen_range(0.05..1.0)
            }
        })
        .collect();
    SimilarityMatrix {
        aspect: aspect.into(),
        side,
        matrix: SparseMatrix::from_dense(n, n, &dense).unwrap(),
    }
}

/// A small model with jittered parameters, random similarity inputs and a
/// mixed-label batch.
pub fn gradient_fixture(
    l: usize,
    fusion: FusionMode,
    output: Activation,
    seed: u64,
) -> (NeuAcfModel, FeatureSet, Vec<Example>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_users, n_items) = (6, 7);
    let aspects = AspectSet::new(
        LABELS[..l]
            .iter()
            .map(|a| Aspect::new(a, "UMU", "MUM"))
            .collect(),
    )
    .unwrap();
    let dims = ModelDims {
        latent_dim: 4,
        hidden: 5,
        layers: 2,
        attention_hidden: 3,
        tower_output: output,
    };
    let mut model = NeuAcfModel::new(&aspects, fusion, dims, n_users, n_items, &mut rng).unwrap();
    // Zero biases put exactly-zero pre-activations on the ReLU kink.
    for p in model.params_mut() {
        p.iter_mut().for_each(|v| *v += rng.gen_range(-0.2..0.2));
    }
    let labels: Vec<String> = model.aspects.clone();
    let features = FeatureSet {
        user: labels
            .iter()
            .map(|a| random_sim(&mut rng, a, Side::User, n_users))
            .collect(),
        item: labels
            .iter()
            .map(|a| random_sim(&mut rng, a, Side::Item, n_items))
            .collect(),
    };
    let batch = (0..14)
        .map(|k| Example {
            user: rng.gen_range(0..n_users),
            item: rng.gen_range(0..n_items),
            label: (k % 3 == 0) as u8 as f64,
        })
        .collect();
    (model, features, batch)
}

/// Reference HR and NDCG for 1-based hit positions (`None` = not ranked).
pub fn hr_ndcg_reference(positions: &[usize], k: usize) -> (f64, f64) {
    let n = positions.len() as f64;
    let hits = positions.iter().filter(|&&p| p <= k).count() as f64;
    let gain: f64 = positions
        .iter()
        .filter(|&&p| p <= k)
        .map(|&p| std::f64::consts::LN_2 / ((p + 1) as f64).ln())
        .sum();
    (hits / n, gain / n)
}

pub fn dense_rows(m: &neuacf::SparseMatrix) -> Vec<Vec<f64>> {
    m.to_dense()
        .chunks(m.n_cols().max(1))
        .map(<[f64]>::to_vec)
        .take(m.n_rows())
        .collect()
}
