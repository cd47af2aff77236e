//! Deterministic random streams.
//!
//! A stream is identified by a root seed and a path of integers. The state of
//! the child generator is the SHA-256 digest of the little-endian encodings of
//! the root followed by every path element, used as a ChaCha8 key. Derivation
//! is pure, so trials can be farmed out to any number of threads and still
//! produce identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

/// Generator type used throughout the crate.
pub type LabRng = ChaCha8Rng;

/// A named position in the stream tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub root: u64,
    pub path: Vec<u64>,
}

impl RngStream {
    pub fn new(root: u64) -> Self {
        RngStream { root, path: Vec::new() }
    }

    pub fn child(&self, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        RngStream { root: self.root, path }
    }

    pub fn rng(&self) -> LabRng {
        derive_stream(self.root, &self.path)
    }
}

/// Generator for `(root, path)`.
pub fn derive_stream(root: u64, path: &[u64]) -> LabRng {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    for p in path {
        h.update(p.to_le_bytes());
    }
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// Runs `n` independent trials, trial `i` drawing from `stream.child(i)`.
/// Results come back in trial order regardless of scheduling.
pub fn par_trials<T, F>(stream: &RngStream, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut LabRng) -> T + Sync + Send,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.child(i as u64).rng();
            f(i, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_path_same_outputs() {
        let mut a = derive_stream(7, &[1, 2]);
        let mut b = derive_stream(7, &[1, 2]);
        for _ in 0..100 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }

    #[test]
    fn empty_path_is_root() {
        let mut a = RngStream::new(99).rng();
        let mut b = derive_stream(99, &[]);
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn sibling_streams_look_independent() {
        let n = 10_000;
        let mut a = derive_stream(5, &[1]);
        let mut b = derive_stream(5, &[2]);
        let xs: Vec<f64> = (0..n).map(|_| a.random::<f64>() - 0.5).collect();
        let ys: Vec<f64> = (0..n).map(|_| b.random::<f64>() - 0.5).collect();
        let var = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
        let cross: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        let cross = cross / (var(&xs) * var(&ys)).sqrt();
        assert!(cross.abs() < 0.02, "cross-correlation {cross}");
        for lag in 1..4 {
            let ac: f64 = xs.windows(lag + 1).map(|w| w[0] * w[lag]).sum::<f64>()
                / (n - lag) as f64
                / var(&xs);
            assert!(ac.abs() < 0.02, "lag {lag} autocorrelation {ac}");
        }
    }
}
