use rand::Rng;

/// Training positives with a per-user lookup of observed items.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub n_users: usize,
    pub n_items: usize,
    positives: Vec<(usize, usize)>,
    by_user: Vec<Vec<usize>>,
}

impl TrainingSet {
    pub fn new(
        n_users: usize,
        n_items: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Self {
        let mut positives: Vec<(usize, usize)> = pairs.into_iter().collect();
        positives.sort_unstable();
        positives.dedup();
        let mut by_user = vec![Vec::new(); n_users];
        for &(u, i) in &positives {
            assert!(u < n_users && i < n_items, "pair ({u}, {i}) out of range");
            by_user[u].push(i);
        }
        TrainingSet {
            n_users,
            n_items,
            positives,
            by_user,
        }
    }

    pub fn positives(&self) -> &[(usize, usize)] {
        &self.positives
    }

    /// Sorted training items of `user`.
    pub fn items_of(&self, user: usize) -> &[usize] {
        &self.by_user[user]
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.by_user[user].binary_search(&item).is_ok()
    }

    pub fn len(&self) -> usize {
        self.positives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty()
    }
}

/// Draws `count` items uniformly, with replacement, from the items `user`
/// has not interacted with in training. Returns nothing when the user has
/// seen every item.
pub fn sample_negatives<R: Rng + ?Sized>(
    train: &TrainingSet,
    user: usize,
    count: usize,
    rng: &mut R,
) -> Vec<usize> {
    let seen = train.items_of(user);
    let n_free = train.n_items - seen.len();
    if n_free == 0 {
        log::warn!("user {user} interacted with every item; no negatives available");
        return Vec::new();
    }
    if seen.len() * 2 <= train.n_items {
        (0..count)
            .map(|_| loop {
                let item = rng.gen_range(0..train.n_items);
                if seen.binary_search(&item).is_err() {
                    break item;
                }
            })
            .collect()
    } else {
        // Dense users: sample an index into the complement directly.
        let free: Vec<usize> = (0..train.n_items)
            .filter(|i| seen.binary_search(i).is_err())
            .collect();
        (0..count)
            .map(|_| free[rng.gen_range(0..free.len())])
            .collect()
    }
}
