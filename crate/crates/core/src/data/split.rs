use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::LabeledDataset;
use crate::error::{Error, Result};

/// Seeded shuffle, then the first `round(n·fraction)` rows become the
/// training part.
pub fn train_test_split(
    data: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::domain(
            "fraction",
            format!("must lie in (0, 1), got {fraction}"),
        ));
    }
    let n = data.len();
    let train_len = (n as f64 * fraction).round() as usize;
    if train_len == 0 || train_len >= n {
        return Err(Error::Data(format!(
            "degenerate split: {n} rows at fraction {fraction} leaves an empty part"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let (train, test) = order.split_at(train_len);
    Ok((data.select(train), data.select(test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};

    fn indexed(n: usize) -> LabeledDataset {
        // feature = index / n, so rows identify themselves
        let features = Array2::from_shape_fn((n, 1), |(i, _)| i as f64 / n as f64);
        let labels = Array1::from_shape_fn(n, |i| (i % 2) as f64);
        LabeledDataset::new(features, labels).unwrap()
    }

    fn ids(d: &LabeledDataset, n: usize) -> Vec<usize> {
        d.features()
            .column(0)
            .iter()
            .map(|v| (v * n as f64).round() as usize)
            .collect()
    }

    #[test]
    fn sizes_follow_fraction() {
        let (train, test) = train_test_split(&indexed(10), 0.8, 1).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
    }

    #[test]
    fn deterministic_per_seed() {
        let data = indexed(50);
        let a = train_test_split(&data, 0.7, 3).unwrap();
        let b = train_test_split(&data, 0.7, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parts_cover_the_original() {
        let data = indexed(37);
        let (train, test) = train_test_split(&data, 0.6, 11).unwrap();
        let mut all = ids(&train, 37);
        all.extend(ids(&test, 37));
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn degenerate_split_rejected() {
        assert!(train_test_split(&indexed(2), 0.1, 0).is_err());
        assert!(train_test_split(&indexed(2), 0.9, 0).is_err());
        assert!(train_test_split(&indexed(10), 1.0, 0).is_err());
    }
}
