use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest shard a client may own unless configured otherwise.
pub const DEFAULT_MIN_CLIENT_SIZE: usize = 10;

/// Disjoint assignment of training rows to `m` clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub client_sizes: Vec<usize>,
    pub assignments: Vec<Vec<usize>>,
    pub total: usize,
    /// Achieved `n_max / n_min`.
    pub non_average_u: f64,
}

impl Partition {
    /// Deals a seeded shuffle of `0..total` out in consecutive chunks of the
    /// given sizes.
    pub fn from_sizes(client_sizes: Vec<usize>, seed: u64) -> Result<Self> {
        if client_sizes.is_empty() {
            return Err(Error::domain("client_sizes", "need at least one client"));
        }
        if client_sizes.contains(&0) {
            return Err(Error::domain(
                "client_sizes",
                "every client needs at least one row",
            ));
        }
        let total: usize = client_sizes.iter().sum();
        let mut order: Vec<usize> = (0..total).collect();
        order.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
        let mut rest = order.as_slice();
        let assignments = client_sizes
            .iter()
            .map(|&size| {
                let (head, tail) = rest.split_at(size);
                rest = tail;
                head.to_vec()
            })
            .collect();
        let max = *client_sizes.iter().max().unwrap();
        let min = *client_sizes.iter().min().unwrap();
        Ok(Self {
            non_average_u: max as f64 / min as f64,
            client_sizes,
            assignments,
            total,
        })
    }

    /// One shard per client, equal sizes (± 1).
    pub fn even(total: usize, m: usize, seed: u64) -> Result<Self> {
        if m == 0 || total < m {
            return Err(Error::domain(
                "m",
                format!("cannot split {total} rows over {m} clients"),
            ));
        }
        let sizes = (0..m)
            .map(|j| total / m + usize::from(j < total % m))
            .collect();
        Self::from_sizes(sizes, seed)
    }

    pub fn num_clients(&self) -> usize {
        self.client_sizes.len()
    }

    pub fn min_size(&self) -> usize {
        self.client_sizes.iter().copied().min().unwrap_or(0)
    }

    /// Aggregation weights `n_j / n`.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.total as f64;
        self.client_sizes.iter().map(|&s| s as f64 / n).collect()
    }

    /// Checks that the assignments are disjoint, cover `0..total` and agree
    /// with the recorded sizes.
    pub fn check(&self) -> Result<()> {
        if self.client_sizes.len() != self.assignments.len() {
            return Err(Error::Data(
                "sizes and assignments disagree on client count".into(),
            ));
        }
        let mut seen = vec![false; self.total];
        for (j, (size, rows)) in self.client_sizes.iter().zip(&self.assignments).enumerate() {
            if *size != rows.len() {
                return Err(Error::Data(format!(
                    "client {j} size {size} != {} assigned rows",
                    rows.len()
                )));
            }
            for &i in rows {
                if i >= self.total || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Data(format!(
                        "row {i} out of range or assigned twice"
                    )));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Data("some rows are unassigned".into()));
        }
        Ok(())
    }
}

/// Two size groups: the first `group_a_count` clients hold `u` times as many
/// rows as the rest. Real-valued sizes are floored and the leftover rows go
/// one each to the lowest-index clients.
pub fn partition_two_group(
    train_size: usize,
    m: usize,
    u: f64,
    group_a_count: usize,
    min_size: usize,
    seed: u64,
) -> Result<Partition> {
    if m < 2 || group_a_count == 0 || group_a_count >= m {
        return Err(Error::domain(
            "group_a_count",
            format!("need 1 <= group_a_count < m, got {group_a_count} of {m}"),
        ));
    }
    if !(u.is_finite() && u >= 1.0) {
        return Err(Error::domain(
            "u",
            format!("non-average level must be >= 1, got {u}"),
        ));
    }
    if train_size < m {
        return Err(Error::domain(
            "train_size",
            format!("{train_size} rows cannot serve {m} clients"),
        ));
    }
    let a = group_a_count as f64;
    let unit = train_size as f64 / (a * u + (m - group_a_count) as f64);
    let small = unit.floor() as usize;
    let large = (unit * u).floor() as usize;
    if small < min_size.max(1) {
        return Err(Error::Infeasible(format!(
            "smallest client would hold {small} rows, below the minimum of {}",
            min_size.max(1)
        )));
    }
    let mut sizes: Vec<usize> = (0..m)
        .map(|j| if j < group_a_count { large } else { small })
        .collect();
    let assigned: usize = sizes.iter().sum();
    for size in sizes.iter_mut().take(train_size - assigned) {
        *size += 1;
    }
    Partition::from_sizes(sizes, seed)
}

/// Sizes drawn uniformly over all compositions of `train_size` into `m`
/// parts of at least `min_size` rows.
pub fn partition_random(
    train_size: usize,
    m: usize,
    min_size: usize,
    seed: u64,
) -> Result<Partition> {
    if m == 0 {
        return Err(Error::domain("m", "need at least one client"));
    }
    let floor = min_size.max(1);
    let reserved = m * floor;
    if train_size < reserved {
        return Err(Error::Infeasible(format!(
            "{train_size} rows cannot give {m} clients at least {floor} rows each"
        )));
    }
    let spare = train_size - reserved;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    // stars and bars: m - 1 bars among spare + m - 1 slots
    let mut bars = index::sample(&mut rng, spare + m - 1, m - 1).into_vec();
    bars.sort_unstable();
    let mut sizes = Vec::with_capacity(m);
    let mut prev: isize = -1;
    for &bar in &bars {
        sizes.push(floor + (bar as isize - prev - 1) as usize);
        prev = bar as isize;
    }
    sizes.push(floor + (spare + m - 1 - (prev + 1) as usize));
    Partition::from_sizes(sizes, rand::Rng::random(&mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_clients_ratio_four() {
        let p = partition_two_group(100, 2, 4.0, 1, 10, 0).unwrap();
        assert_eq!(p.client_sizes, vec![80, 20]);
        assert_eq!(p.non_average_u, 4.0);
        p.check().unwrap();
    }

    #[test]
    fn average_setting_is_even() {
        for m in [2, 3, 7, 16] {
            let p = partition_two_group(1003, m, 1.0, m / 2, 1, 5).unwrap();
            let (lo, hi) = (
                p.client_sizes.iter().min().unwrap(),
                p.client_sizes.iter().max().unwrap(),
            );
            assert!(hi - lo <= 1, "{:?}", p.client_sizes);
            p.check().unwrap();
        }
    }

    #[test]
    fn four_clients_ratio_nine() {
        let p = partition_two_group(100, 4, 9.0, 1, 1, 0).unwrap();
        assert_eq!(p.client_sizes.iter().sum::<usize>(), 100);
        assert_eq!(p.client_sizes[1..].iter().min(), Some(&8));
        assert!((75..=76).contains(&p.client_sizes[0]));
        assert!(
            (p.non_average_u - 9.0).abs() / 9.0 < 0.15,
            "{}",
            p.non_average_u
        );
    }

    #[test]
    fn two_group_respects_min_size() {
        let err = partition_two_group(100, 4, 9.0, 1, 10, 0).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn two_group_validates() {
        assert!(partition_two_group(100, 4, 0.5, 1, 1, 0).is_err());
        assert!(partition_two_group(100, 4, 2.0, 0, 1, 0).is_err());
        assert!(partition_two_group(100, 4, 2.0, 4, 1, 0).is_err());
    }

    #[test]
    fn random_single_client_owns_everything() {
        let p = partition_random(57, 1, 10, 3).unwrap();
        assert_eq!(p.client_sizes, vec![57]);
        p.check().unwrap();
    }

    #[test]
    fn random_respects_floor_across_seeds() {
        for seed in 0..10_000u64 {
            let m = 1 + (seed % 8) as usize;
            let p = partition_random(200, m, 10, seed).unwrap();
            assert!(p.client_sizes.iter().all(|&s| s >= 10));
            assert_eq!(p.client_sizes.iter().sum::<usize>(), 200);
        }
    }

    #[test]
    fn random_infeasible() {
        assert!(matches!(
            partition_random(30, 4, 10, 0),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn random_is_deterministic() {
        assert_eq!(
            partition_random(500, 6, 10, 9).unwrap(),
            partition_random(500, 6, 10, 9).unwrap()
        );
    }

    #[test]
    fn serializes_to_json() {
        let p = partition_two_group(40, 2, 3.0, 1, 1, 0).unwrap();
        let back: Partition = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(p, back);
    }

    proptest! {
        #[test]
        fn partitions_are_disjoint_and_covering(
            n in 40usize..2000,
            m in 2usize..9,
            u in 1.0f64..6.0,
            seed in any::<u64>(),
        ) {
            let a = 1 + (seed as usize % (m - 1));
            if let Ok(p) = partition_two_group(n, m, u, a, 1, seed) {
                p.check().unwrap();
                prop_assert_eq!(p.total, n);
            }
            let p = partition_random(n, m, 2, seed).unwrap();
            p.check().unwrap();
            let w: f64 = p.weights().iter().sum();
            prop_assert!((w - 1.0).abs() < 1e-15);
        }
    }
}
