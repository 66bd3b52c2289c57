use crate::error::{Error, Result};
use crate::rng::Rng;

/// Seeded shuffle of `0..n` cut into `k` folds whose sizes differ by at most
/// one; the first `n % k` folds get the extra element.
pub fn kfold_indices(n: usize, k: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid(format!("k-fold needs k > 1, got {k}")));
    }
    if k > n {
        return Err(Error::invalid(format!("cannot split {n} samples into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest, prop_assume};

    #[test]
    fn ck_plus_fold_sizes() {
        let folds = kfold_indices(309, 10, &mut Rng::new(0)).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        sizes.sort();
        assert_eq!(sizes, [30, 31, 31, 31, 31, 31, 31, 31, 31, 31]);
    }

    #[test]
    fn singletons() {
        let folds = kfold_indices(10, 10, &mut Rng::new(1)).unwrap();
        assert!(folds.iter().all(|f| f.len() == 1));
    }

    #[test]
    fn too_many_folds() {
        assert!(kfold_indices(3, 4, &mut Rng::new(0)).is_err());
        assert!(kfold_indices(3, 1, &mut Rng::new(0)).is_err());
    }

    proptest! {
        #[test]
        fn exact_partition(n in 2usize..400, k in 2usize..20, seed in 0u64..100) {
            prop_assume!(k <= n);
            let folds = kfold_indices(n, k, &mut Rng::new(seed)).unwrap();
            prop_assert_eq!(folds.len(), k);
            let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
            all.sort();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let max = folds.iter().map(Vec::len).max().unwrap();
            let min = folds.iter().map(Vec::len).min().unwrap();
            prop_assert!(max - min <= 1);
        }
    }
}
