use proptest::prelude::*;
use updown::perm::{occ, Direction, Permutation};

fn permutation(max: usize) -> impl Strategy<Value = Permutation> {
    (1..=max).prop_flat_map(|n| Just((1..=n as u32).collect::<Vec<_>>()).prop_shuffle())
        .prop_map(|v| Permutation::new(v).unwrap())
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect()
}

proptest! {
    #[test]
    fn occurrences_match_subset_enumeration(sigma in permutation(9), k in 1usize..=4) {
        let n = sigma.len();
        let mut counts = std::collections::BTreeMap::new();
        for s in subsets(n, k) {
            *counts.entry(sigma.pattern(&s)).or_insert(0u64) += 1;
        }
        for pi in Permutation::all(k) {
            prop_assert_eq!(occ(&pi, &sigma), counts.get(&pi).copied().unwrap_or(0));
        }
    }

    #[test]
    fn inflation_then_deletion_restores(sigma in permutation(10), i in 0usize..10, up in any::<bool>()) {
        let i = i % sigma.len() + 1;
        let dir = if up { Direction::Increasing } else { Direction::Decreasing };
        let big = sigma.inflate(i, dir).unwrap();
        prop_assert_eq!(big.len(), sigma.len() + 1);
        prop_assert_eq!(&big.delete(i).unwrap(), &sigma);
        prop_assert_eq!(&big.delete(i + 1).unwrap(), &sigma);
        prop_assert_eq!(big.is_separable(), sigma.is_separable());
    }

    #[test]
    fn separable_iff_cograph(sigma in permutation(9)) {
        prop_assert_eq!(sigma.is_separable(), !sigma.inversion_graph().has_induced_p4());
    }
}
