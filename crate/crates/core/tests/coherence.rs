mod common;
mod oracles;

use common::{apply_all, bytes_of, random_history, CAPACITY};
use edgefabric::ModuleId;
use oracles::{lww_reference, Write};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for at in 0..=p.len() {
            let mut q = p.clone();
            q.insert(at, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn reference_examples() {
    let a = Write {
        offset: 0,
        data: vec![1, 2, 3],
        ts: 5,
        writer: 1,
    };
    assert_eq!(
        lww_reference(4, std::slice::from_ref(&a)),
        vec![(1, 5, 1), (2, 5, 1), (3, 5, 1), (0, 0, 0)]
    );
    let b = Write {
        offset: 1,
        data: vec![9, 9, 9],
        ts: 7,
        writer: 1,
    };
    assert_eq!(
        lww_reference(4, &[a, b]),
        vec![(1, 5, 1), (9, 7, 1), (9, 7, 1), (9, 7, 1)]
    );
}

#[test]
fn every_order_of_four_overlapping_writes_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let orders = permutations(4);
    assert_eq!(orders.len(), 24);
    for _ in 0..200 {
        // small ts and writer ranges force ties on ts
        let writes = random_history(&mut rng, 4, 3, 3);
        let expected = lww_reference(CAPACITY, &writes);
        let first = apply_all(&writes);
        for order in &orders {
            let store = apply_all(order.iter().map(|i| &writes[*i]));
            assert_eq!(bytes_of(&store), expected);
            assert_eq!(store, first, "record layout depends on arrival order");
        }
    }
}

#[test]
fn shuffled_fifty_writes_match_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let mut writes = random_history(&mut rng, 50, 40, 5);
        let expected = lww_reference(CAPACITY, &writes);
        let first = apply_all(&writes);
        assert_eq!(bytes_of(&first), expected);
        for _ in 0..10 {
            writes.shuffle(&mut rng);
            assert_eq!(apply_all(&writes), first);
        }
    }
}

proptest! {
    #[test]
    fn read_range_agrees_with_reference(seed in any::<u64>(), n in 1usize..12, off in 0usize..CAPACITY, len in 0usize..CAPACITY) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let writes = random_history(&mut rng, n, 6, 4);
        let len = len.min(CAPACITY - off);
        let reference = lww_reference(CAPACITY, &writes);
        let (data, ts) = apply_all(&writes).read_range(off as u64, len as u64).unwrap();
        let want: Vec<u8> = reference[off..off + len].iter().map(|b| b.0).collect();
        prop_assert_eq!(data, want);
        prop_assert_eq!(ts, reference[off..off + len].iter().map(|b| b.1).max().unwrap_or(0));
    }

    /// Re-applying any write already in the history changes nothing.
    #[test]
    fn idempotent(seed in any::<u64>(), n in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let writes = random_history(&mut rng, n, 6, 4);
        let once = apply_all(&writes);
        let mut twice = once.clone();
        for w in &writes {
            let changed = twice.apply_store(w.offset as u64, &w.data, w.ts, ModuleId::new(w.writer).unwrap()).unwrap();
            prop_assert!(!changed);
        }
        prop_assert_eq!(twice, once);
    }
}
