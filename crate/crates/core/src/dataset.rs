//! Sparse interaction data in compressed adjacency form.
//!
//! Interactions are stored user-major; that order is the canonical interaction
//! index used by [`crate::model::PredictionCache`]. A mirrored item-major view
//! keeps copies of labels and weights so item passes also stream contiguously,
//! plus the canonical index of each slot for cache lookups.

use crate::error::{Error, Result};

/// One observed `(user, item, label, weight)` tuple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub label: f64,
    pub weight: f64,
}

impl Interaction {
    /// An implicit observation with label 1 and weight 1.
    pub fn implicit(user: usize, item: usize) -> Self {
        Self {
            user,
            item,
            label: 1.0,
            weight: 1.0,
        }
    }
}

/// Which factor matrix a pass updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Users,
    Items,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Users => Side::Items,
            Side::Items => Side::Users,
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Users => "user",
            Side::Items => "item",
        })
    }
}

/// Per-row adjacency for one side of the interaction matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    others: Vec<u32>,
    labels: Vec<f64>,
    weights: Vec<f64>,
    // canonical (user-major) interaction index of every slot
    entries: Vec<usize>,
}

/// The slots of a single row.
#[derive(Debug, Clone, Copy)]
pub struct RowSlots<'a> {
    pub others: &'a [u32],
    pub labels: &'a [f64],
    pub weights: &'a [f64],
    pub entries: &'a [usize],
}

impl RowSlots<'_> {
    pub fn len(&self) -> usize {
        self.others.len()
    }

    pub fn is_empty(&self) -> bool {
        self.others.is_empty()
    }
}

impl Adjacency {
    pub fn num_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub fn range(&self, row: usize) -> std::ops::Range<usize> {
        self.offsets[row]..self.offsets[row + 1]
    }

    #[inline]
    pub fn row(&self, row: usize) -> RowSlots<'_> {
        let r = self.range(row);
        RowSlots {
            others: &self.others[r.clone()],
            labels: &self.labels[r.clone()],
            weights: &self.weights[r.clone()],
            entries: &self.entries[r],
        }
    }

    pub fn degree(&self, row: usize) -> usize {
        self.offsets[row + 1] - self.offsets[row]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn others(&self) -> &[u32] {
        &self.others
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }
}

/// The training set `S` with both adjacency views.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    num_users: usize,
    num_items: usize,
    by_user: Adjacency,
    by_item: Adjacency,
}

impl InteractionDataset {
    /// Builds both views from an arbitrary list of interactions. Within a user,
    /// interactions keep their input order; duplicates are kept as separate
    /// observations.
    pub fn new(num_users: usize, num_items: usize, interactions: &[Interaction]) -> Result<Self> {
        if num_users == 0 || num_items == 0 {
            return Err(Error::structure(format!(
                "dataset needs at least one user and one item (got {num_users} users, {num_items} items)"
            )));
        }
        if num_items > u32::MAX as usize || num_users > u32::MAX as usize {
            return Err(Error::structure("more than 2^32 users or items"));
        }
        for (n, x) in interactions.iter().enumerate() {
            if x.user >= num_users || x.item >= num_items {
                return Err(Error::structure(format!(
                    "interaction {n} ({}, {}) out of range for {num_users} users x {num_items} items",
                    x.user, x.item
                )));
            }
            if !(x.weight > 0.0) || !x.weight.is_finite() {
                return Err(Error::structure(format!(
                    "interaction {n} has non-positive weight {}",
                    x.weight
                )));
            }
            if !x.label.is_finite() {
                return Err(Error::structure(format!("interaction {n} has non-finite label")));
            }
        }

        let user_order = counting_sort(interactions.len(), num_users, |k| interactions[k].user);
        let by_user = build_adjacency(
            num_users,
            &user_order,
            interactions,
            |x| (x.user, x.item),
            |slot, _| slot,
        );

        // Item view over canonical indices.
        let canonical: Vec<Interaction> = user_order.iter().map(|&k| interactions[k]).collect();
        let item_order = counting_sort(canonical.len(), num_items, |k| canonical[k].item);
        let by_item = build_adjacency(
            num_items,
            &item_order,
            &canonical,
            |x| (x.item, x.user),
            |_, k| k,
        );

        Ok(Self {
            num_users,
            num_items,
            by_user,
            by_item,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn len(&self) -> usize {
        self.by_user.others.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn by_user(&self) -> &Adjacency {
        &self.by_user
    }

    pub fn by_item(&self) -> &Adjacency {
        &self.by_item
    }

    pub fn adjacency(&self, side: Side) -> &Adjacency {
        match side {
            Side::Users => &self.by_user,
            Side::Items => &self.by_item,
        }
    }

    pub fn num_rows(&self, side: Side) -> usize {
        match side {
            Side::Users => self.num_users,
            Side::Items => self.num_items,
        }
    }

    /// Interaction `k` in canonical (user-major) order.
    pub fn interaction(&self, k: usize) -> Interaction {
        let user = self.by_user.offsets.partition_point(|&o| o <= k) - 1;
        Interaction {
            user,
            item: self.by_user.others[k] as usize,
            label: self.by_user.labels[k],
            weight: self.by_user.weights[k],
        }
    }

    /// All interactions in canonical order.
    pub fn interactions(&self) -> Vec<Interaction> {
        let mut out = Vec::with_capacity(self.len());
        for u in 0..self.num_users {
            let row = self.by_user.row(u);
            for n in 0..row.len() {
                out.push(Interaction {
                    user: u,
                    item: row.others[n] as usize,
                    label: row.labels[n],
                    weight: row.weights[n],
                });
            }
        }
        out
    }
}

/// Stable counting sort of `0..n` by key.
fn counting_sort(n: usize, buckets: usize, key: impl Fn(usize) -> usize) -> Vec<usize> {
    let mut counts = vec![0usize; buckets + 1];
    for k in 0..n {
        counts[key(k) + 1] += 1;
    }
    for b in 0..buckets {
        counts[b + 1] += counts[b];
    }
    let mut order = vec![0; n];
    for k in 0..n {
        let slot = &mut counts[key(k)];
        order[*slot] = k;
        *slot += 1;
    }
    order
}

fn build_adjacency(
    rows: usize,
    order: &[usize],
    source: &[Interaction],
    row_and_other: impl Fn(&Interaction) -> (usize, usize),
    entry: impl Fn(usize, usize) -> usize,
) -> Adjacency {
    let mut offsets = vec![0usize; rows + 1];
    let mut others = Vec::with_capacity(order.len());
    let mut labels = Vec::with_capacity(order.len());
    let mut weights = Vec::with_capacity(order.len());
    let mut entries = Vec::with_capacity(order.len());
    for (slot, &k) in order.iter().enumerate() {
        let (row, other) = row_and_other(&source[k]);
        offsets[row + 1] += 1;
        others.push(other as u32);
        labels.push(source[k].label);
        weights.push(source[k].weight);
        entries.push(entry(slot, k));
    }
    for r in 0..rows {
        offsets[r + 1] += offsets[r];
    }
    Adjacency {
        offsets,
        others,
        labels,
        weights,
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> InteractionDataset {
        let xs = vec![
            Interaction::implicit(1, 0),
            Interaction::implicit(0, 2),
            Interaction {
                user: 1,
                item: 2,
                label: 0.5,
                weight: 3.0,
            },
            Interaction::implicit(0, 0),
        ];
        InteractionDataset::new(3, 3, &xs).unwrap()
    }

    #[test]
    fn user_view_is_user_major_and_stable() {
        let ds = sample();
        assert_eq!(ds.by_user().offsets(), &[0, 2, 4, 4]);
        assert_eq!(ds.by_user().others(), &[2, 0, 0, 2]);
        assert_eq!(ds.by_user().entries(), &[0, 1, 2, 3]);
        assert_eq!(ds.by_user().weights()[3], 3.0);
    }

    #[test]
    fn item_view_points_at_canonical_entries() {
        let ds = sample();
        let items = ds.by_item();
        assert_eq!(items.offsets(), &[0, 2, 2, 4]);
        for i in 0..3 {
            let row = items.row(i);
            for n in 0..row.len() {
                let x = ds.interaction(row.entries[n]);
                assert_eq!(x.item, i);
                assert_eq!(x.user, row.others[n] as usize);
                assert_eq!(x.label, row.labels[n]);
                assert_eq!(x.weight, row.weights[n]);
            }
        }
    }

    #[test]
    fn views_hold_the_same_multiset() {
        let ds = sample();
        let mut from_users: Vec<(usize, usize)> =
            ds.interactions().iter().map(|x| (x.user, x.item)).collect();
        let mut from_items = Vec::new();
        for i in 0..ds.num_items() {
            for &u in ds.by_item().row(i).others {
                from_items.push((u as usize, i));
            }
        }
        from_users.sort_unstable();
        from_items.sort_unstable();
        assert_eq!(from_users, from_items);
    }

    #[test]
    fn rejects_invalid_input() {
        assert!(InteractionDataset::new(0, 3, &[]).is_err());
        assert!(InteractionDataset::new(2, 2, &[Interaction::implicit(2, 0)]).is_err());
        let bad_weight = Interaction {
            weight: 0.0,
            ..Interaction::implicit(0, 0)
        };
        assert!(InteractionDataset::new(2, 2, &[bad_weight]).is_err());
    }

    #[test]
    fn duplicates_are_kept() {
        let xs = vec![Interaction::implicit(0, 0), Interaction::implicit(0, 0)];
        let ds = InteractionDataset::new(1, 1, &xs).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.by_item().degree(0), 2);
    }
}
