use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Shuffles `0..n` with a generator keyed on `(seed, epoch)` and cuts it into
/// batches of `batch_size`. The last batch may be short.
pub fn batchify(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    order.shuffle(&mut rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        let sizes: Vec<usize> = batchify(61, 30, 7, 0).iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![30, 30, 1]);
        assert_eq!(batchify(61, 1, 7, 0).len(), 61);
        assert!(batchify(0, 30, 7, 0).is_empty());
    }

    #[test]
    fn deterministic_per_seed_and_epoch() {
        assert_eq!(batchify(61, 30, 7, 3), batchify(61, 30, 7, 3));
        assert_ne!(batchify(61, 30, 7, 3), batchify(61, 30, 7, 4));
        assert_ne!(batchify(61, 30, 7, 3), batchify(61, 30, 8, 3));
    }

    #[test]
    fn every_index_once() {
        let mut all: Vec<usize> = batchify(61, 8, 1, 0).concat();
        all.sort_unstable();
        assert_eq!(all, (0..61).collect::<Vec<_>>());
    }
}
