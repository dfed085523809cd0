//! Seeded random streams. Every randomized operation takes an explicit
//! generator; replicas get independent streams of the same ChaCha20 key.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Name recorded in output metadata.
pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha 0.9), seed_from_u64 + set_stream";

pub type StreamRng = ChaCha20Rng;

/// Generator for replica `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Run `f(i)` for `i in 0..count` on up to `jobs` threads and return the
/// results in index order, so the output never depends on `jobs`.
pub fn par_replicas<T, F>(count: usize, jobs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let jobs = jobs.max(1).min(count.max(1));
    if jobs == 1 {
        return (0..count).map(&f).collect();
    }
    let mut slots: Vec<Option<T>> = (0..count).map(|_| None).collect();
    std::thread::scope(|scope| {
        let f = &f;
        let mut rest: &mut [Option<T>] = &mut slots;
        let chunk = count.div_ceil(jobs);
        let mut start = 0;
        while !rest.is_empty() {
            let take = chunk.min(rest.len());
            let (head, tail) = rest.split_at_mut(take);
            rest = tail;
            let base = start;
            scope.spawn(move || {
                for (off, slot) in head.iter_mut().enumerate() {
                    *slot = Some(f(base + off));
                }
            });
            start += take;
        }
    });
    slots.into_iter().map(|s| s.expect("replica filled")).collect()
}
