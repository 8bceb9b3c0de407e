//! Scrambled Halton points for space-filling designs, optimizer probes and
//! quasi-Monte-Carlo normal draws.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; derives independent child seeds from a parent seed.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, stream))
}

fn nth_prime(n: usize) -> u64 {
    let mut found = 0;
    let mut candidate = 1u64;
    loop {
        candidate += 1;
        if (2..)
            .take_while(|p: &u64| p * p <= candidate)
            .all(|p| candidate % p != 0)
        {
            if found == n {
                return candidate;
            }
            found += 1;
        }
    }
}

/// One coordinate of a digit-scrambled Halton sequence.
///
/// Each digit position carries its own random permutation, so the sequence
/// keeps its stratification while losing the correlated artefacts of plain
/// Halton in high bases. The stream for coordinate `j` depends only on
/// `(seed, j)`, never on how many coordinates are requested.
#[derive(Debug, Clone)]
struct HaltonAxis {
    base: u64,
    perms: Vec<Vec<u64>>,
}

impl HaltonAxis {
    fn new(axis: usize, seed: u64) -> Self {
        let base = nth_prime(axis);
        let digits = (53.0 / (base as f64).log2()).ceil() as usize + 1;
        let mut rng = rng_from(seed, axis as u64 + 1);
        let perms = (0..digits)
            .map(|_| {
                let mut p: Vec<u64> = (0..base).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        HaltonAxis { base, perms }
    }

    fn value(&self, index: u64) -> f64 {
        let inv = 1.0 / self.base as f64;
        let mut scale = inv;
        let mut i = index;
        let mut acc = 0.0;
        for perm in &self.perms {
            let digit = i % self.base;
            i /= self.base;
            acc += perm[digit as usize] as f64 * scale;
            scale *= inv;
        }
        acc.min(1.0 - f64::EPSILON)
    }
}

#[derive(Debug, Clone)]
pub struct ScrambledHalton {
    axes: Vec<HaltonAxis>,
}

impl ScrambledHalton {
    pub fn new(dim: usize, seed: u64) -> Self {
        ScrambledHalton {
            axes: (0..dim).map(|j| HaltonAxis::new(j, seed)).collect(),
        }
    }

    pub fn point(&self, index: u64) -> Vec<f64> {
        self.axes.iter().map(|a| a.value(index)).collect()
    }

    pub fn points(&self, n: usize) -> Vec<Vec<f64>> {
        (0..n as u64).map(|i| self.point(i)).collect()
    }
}
