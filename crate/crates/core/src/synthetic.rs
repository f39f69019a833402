//! A 4-user, 4-item dataset with two disjoint preference blocks.
//!
//! Users 0 and 1 rate items 0 and 1; users 2 and 3 rate items 2 and 3.
//! Every user's later rating is on the block's odd item, so the
//! leave-one-out split holds out items 1 and 3, which then have no training
//! interactions. A genre attribute (`MG`) tags each block's items with one
//! genre, the only link from a held-out item to its block.
//!
//! [`planted_blocks`] generates larger datasets of the same shape.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::{Flavor, IdMap, Rating, RawDataset};
use crate::model::{Aspect, AspectSet};

pub fn separable_4x4() -> RawDataset {
    let mut ratings = Vec::new();
    for user in 0..4 {
        let block = user / 2;
        ratings.push(Rating {
            user,
            item: 2 * block,
            rating: 5.0,
            timestamp: 10 + user as u64,
        });
        ratings.push(Rating {
            user,
            item: 2 * block + 1,
            rating: 5.0,
            timestamp: 20 + user as u64,
        });
    }
    let ids = |prefix: &str, n: usize| IdMap::from_raw((0..n).map(|k| format!("{prefix}{k}")));
    RawDataset {
        flavor: Flavor::Movielens,
        ratings,
        attribute_edges: BTreeMap::from([("MG".to_string(), vec![(0, 0), (1, 0), (2, 1), (3, 1)])]),
        id_maps: BTreeMap::from([('U', ids("u", 4)), ('M', ids("m", 4)), ('G', ids("g", 2))]),
    }
}

/// History and genre aspects for [`separable_4x4`].
pub fn separable_aspects() -> AspectSet {
    AspectSet::new(vec![
        Aspect::new("History", "UMU", "MUM"),
        Aspect::new("Genre", "UMGMU", "MGM"),
    ])
    .expect("valid aspects")
}

/// `n_blocks` user and item communities; each user rates `per_user` items
/// of its own community (plus the occasional outsider) at random times.
/// Item genres follow the communities.
pub fn planted_blocks(
    n_users: usize,
    n_items: usize,
    n_blocks: usize,
    per_user: usize,
    seed: u64,
) -> RawDataset {
    assert!(n_blocks >= 1 && n_items >= n_blocks * per_user.max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block_of_item = |i: usize| i * n_blocks / n_items;
    let mut ratings = Vec::new();
    for user in 0..n_users {
        let block = user * n_blocks / n_users;
        let items: Vec<usize> = (0..n_items)
            .filter(|&i| block_of_item(i) == block)
            .collect();
        for k in sample(&mut rng, items.len(), per_user.min(items.len())) {
            ratings.push(Rating {
                user,
                item: items[k],
                rating: rng.gen_range(1..=5) as f64,
                timestamp: rng.gen_range(0..1_000_000),
            });
        }
        if rng.gen_bool(0.2) {
            ratings.push(Rating {
                user,
                item: rng.gen_range(0..n_items),
                rating: 3.0,
                timestamp: rng.gen_range(0..1_000_000),
            });
        }
    }
    let genres = (0..n_items).map(|i| (i, block_of_item(i))).collect();
    let ids = |prefix: &str, n: usize| IdMap::from_raw((0..n).map(|k| format!("{prefix}{k:04}")));
    RawDataset {
        flavor: Flavor::Movielens,
        ratings,
        attribute_edges: BTreeMap::from([("MG".to_string(), genres)]),
        id_maps: BTreeMap::from([
            ('U', ids("u", n_users)),
            ('M', ids("m", n_items)),
            ('G', ids("g", n_blocks)),
        ]),
    }
}

/// Writes a MovieLens-flavored dataset as `ratings.tsv` and `genres.tsv`
/// (raw ids, the ingest file contract); returns both paths.
pub fn write_files(raw: &RawDataset, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let users = &raw.id_maps[&'U'];
    let items = &raw.id_maps[&raw.flavor.item_type()];
    let mut body = String::new();
    for r in &raw.ratings {
        let _ = writeln!(
            body,
            "{}\t{}\t{}\t{}",
            users.raw(r.user),
            items.raw(r.item),
            r.rating,
            r.timestamp
        );
    }
    let ratings = dir.join("ratings.tsv");
    std::fs::write(&ratings, body).map_err(|e| Error::io("writing ratings.tsv", e))?;
    let mut body = String::new();
    if let Some(edges) = raw.attribute_edges.get("MG") {
        let genres = &raw.id_maps[&'G'];
        for &(i, g) in edges {
            let _ = writeln!(body, "{}\t{}", items.raw(i), genres.raw(g));
        }
    }
    let genres = dir.join("genres.tsv");
    std::fs::write(&genres, body).map_err(|e| Error::io("writing genres.tsv", e))?;
    Ok((ratings, genres))
}
