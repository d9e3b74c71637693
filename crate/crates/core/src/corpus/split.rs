use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Seeded shuffle-and-cut into train and validation parts, with
/// `|train| = round(ratio * N)`.
pub fn split_train_val<T: Clone>(items: &[T], ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if items.is_empty() {
        return Err(Error::invalid("cannot split an empty list"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio {ratio} outside (0, 1)")));
    }
    let n = items.len();
    let n_train = ((ratio * n as f64).round() as usize).min(n);
    if n_train == 0 || n_train == n {
        tracing::warn!(n, n_train, "degenerate train/validation split");
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train = order[..n_train].iter().map(|&i| items[i].clone()).collect();
    let val = order[n_train..].iter().map(|&i| items[i].clone()).collect();
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nine_to_one() {
        let items: Vec<u32> = (0..10).collect();
        let (train, val) = split_train_val(&items, 0.9, 22).unwrap();
        assert_eq!((train.len(), val.len()), (9, 1));
    }

    #[test]
    fn single_item_goes_to_train() {
        let (train, val) = split_train_val(&[7u8], 0.9, 22).unwrap();
        assert_eq!(train, vec![7]);
        assert!(val.is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let items: Vec<u32> = (0..50).collect();
        assert_eq!(
            split_train_val(&items, 0.9, 22).unwrap(),
            split_train_val(&items, 0.9, 22).unwrap()
        );
        assert_ne!(
            split_train_val(&items, 0.9, 22).unwrap(),
            split_train_val(&items, 0.9, 2222).unwrap()
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(split_train_val::<u8>(&[], 0.9, 1).is_err());
        assert!(split_train_val(&[1], 1.0, 1).is_err());
        assert!(split_train_val(&[1], 0.0, 1).is_err());
    }

    proptest! {
        #[test]
        fn partition_is_exhaustive(n in 1usize..=1000, ratio in 0.01f64..0.99, seed: u64) {
            let items: Vec<usize> = (0..n).collect();
            let (train, val) = split_train_val(&items, ratio, seed).unwrap();
            prop_assert_eq!(train.len(), (ratio * n as f64).round() as usize);
            let mut all: Vec<usize> = train.into_iter().chain(val).collect();
            all.sort_unstable();
            prop_assert_eq!(all, items);
        }
    }
}
