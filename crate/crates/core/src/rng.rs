//! Counter-based standard normals.
//!
//! A [`KeyedNormals`] generator is keyed by `(seed, tag)`; each `stream`
//! index selects an independent ChaCha8 stream, so a block of draws is a pure
//! function of `(seed, tag, stream)` and can be regenerated in any order on
//! any thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Key domains. Distinct tags never share draws under the same seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamTag {
    /// Spatial Wiener increments of the SPDE.
    Wiener = 1,
    /// Coefficients of the scalar driver `f`.
    Driver = 2,
    /// Driving noise of the finite-dimensional Itô integrals.
    Ito = 3,
    /// Time-zero random variables of the Itô integrands.
    Integrand = 4,
    /// Scalar Brownian control paths.
    Brownian = 5,
    /// Per-path seed derivation.
    PathSeed = 6,
}

#[derive(Clone, Debug)]
pub struct KeyedNormals {
    key: [u8; 32],
}

impl KeyedNormals {
    pub fn new(seed: u64, tag: StreamTag) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&(tag as u64).to_le_bytes());
        key[16..24].copy_from_slice(b"spdelab\0");
        Self { key }
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(stream);
        rng
    }

    /// Fills `out` with the leading draws of `stream`.
    pub fn fill(&self, stream: u64, out: &mut [f64]) {
        let mut rng = self.rng(stream);
        for v in out.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
    }

    /// Adds the leading draws of `stream` to `acc`.
    pub fn accumulate(&self, stream: u64, acc: &mut [f64]) {
        let mut rng = self.rng(stream);
        for v in acc.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += z;
        }
    }

    pub fn draws(&self, stream: u64, count: usize) -> Vec<f64> {
        let mut out = vec![0.0; count];
        self.fill(stream, &mut out);
        out
    }

    /// First draw of `stream`.
    pub fn single(&self, stream: u64) -> f64 {
        StandardNormal.sample(&mut self.rng(stream))
    }
}

/// Seed of Monte Carlo path `index` under `master`.
pub fn path_seed(master: u64, index: u64) -> u64 {
    use rand::RngCore;
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master.to_le_bytes());
    key[8..16].copy_from_slice(&(StreamTag::PathSeed as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng.next_u64()
}
