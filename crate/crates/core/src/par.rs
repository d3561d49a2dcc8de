//! Deterministic data parallelism over grid points.

use std::sync::OnceLock;
use std::thread;

/// Worker count: `WILD_EULER_THREADS` if set, otherwise the available parallelism.
pub fn threads() -> usize {
    static N: OnceLock<usize> = OnceLock::new();
    *N.get_or_init(|| {
        std::env::var("WILD_EULER_THREADS")
            .ok()
            .and_then(|s| s.parse().ok())
            .filter(|&n: &usize| n > 0)
            .unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get()))
    })
}

/// `(0..len).map(f)` evaluated in contiguous chunks; the result order (and
/// hence every value) does not depend on the number of workers.
pub fn map_indices<T: Send>(len: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let workers = threads().min(len.max(1));
    if workers <= 1 || len < 1024 {
        return (0..len).map(f).collect();
    }
    let chunk = len.div_ceil(workers);
    let f = &f;
    thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let lo = (w * chunk).min(len);
                let hi = ((w + 1) * chunk).min(len);
                s.spawn(move || (lo..hi).map(f).collect::<Vec<T>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    #[test]
    fn order_preserved() {
        let v = super::map_indices(10_000, |i| i * i);
        assert!(v.iter().enumerate().all(|(i, &x)| x == i * i));
    }
}
