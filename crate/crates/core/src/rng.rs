//! Counter-based Gaussian noise.
//!
//! Every normal variate is addressed by `(master, stream, step, mode)`, so a
//! path can be regenerated independently of how an ensemble is scheduled.
//! Variates come in Box-Muller pairs, each pair consuming exactly two 64-bit
//! words of a ChaCha8 keystream, which makes sequential reading and keyed
//! access agree.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const WORDS_PER_PAIR: u128 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub master: u64,
    pub stream: u64,
}

impl RngSeed {
    pub fn new(master: u64) -> Self {
        RngSeed { master, stream: 0 }
    }

    /// Seed of the `index`-th child stream (one per path of an ensemble).
    pub fn child(self, index: u64) -> Self {
        RngSeed {
            master: self.master,
            stream: splitmix64(self.stream ^ splitmix64(index.wrapping_add(1))),
        }
    }

    pub fn to_hex(self) -> String {
        format!("{:#018x}", self.master)
    }
}

pub fn parse_hex_seed(text: &str) -> Option<u64> {
    let t = text.trim();
    let digits = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")).unwrap_or(t);
    if digits.is_empty() {
        return None;
    }
    u64::from_str_radix(digits, 16).ok()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Standard normal variates for one stream, laid out step-major then mode.
pub struct NoiseStream {
    rng: ChaCha8Rng,
    modes: usize,
    /// Second variate of the current Box-Muller pair.
    spare: Option<f64>,
}

impl NoiseStream {
    pub fn new(seed: RngSeed, modes: usize) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.master.to_le_bytes());
        key[8..16].copy_from_slice(&splitmix64(seed.master).to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(seed.stream);
        NoiseStream {
            rng,
            modes: modes.max(1),
            spare: None,
        }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Keyed access; repositions the stream so that sequential reads continue
    /// from `(step, mode + 1)`.
    pub fn normal_at(&mut self, step: u64, mode: usize) -> f64 {
        let index = step as u128 * self.modes as u128 + mode as u128;
        self.seek_index(index);
        self.next_normal()
    }

    pub fn seek_step(&mut self, step: u64) {
        self.seek_index(step as u128 * self.modes as u128);
    }

    fn seek_index(&mut self, index: u128) {
        self.rng.set_word_pos(index / 2 * WORDS_PER_PAIR);
        self.spare = None;
        if index % 2 == 1 {
            let _ = self.next_normal();
        }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        // (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - (a >> 11) as f64 * f64::EPSILON / 2.0;
        let u2 = (b >> 11) as f64 * f64::EPSILON / 2.0;
        let r = (-2.0 * u1.ln()).sqrt();
        let (sin, cos) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * sin);
        r * cos
    }

    pub fn fill_step(&mut self, out: &mut [f64]) {
        for z in out.iter_mut() {
            *z = self.next_normal();
        }
    }

    /// Uniform on `[0, 1)`; drops a pending second variate and uses a fresh pair of words.
    pub fn next_uniform(&mut self) -> f64 {
        self.spare = None;
        let a = self.rng.next_u64();
        let _ = self.rng.next_u64();
        (a >> 11) as f64 * f64::EPSILON / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyed_access_matches_sequential_reads() {
        let seed = RngSeed::new(0x2a).child(7);
        let mut seq = NoiseStream::new(seed, 3);
        let mut all = Vec::new();
        for _ in 0..40 {
            all.push(seq.next_normal());
        }
        let mut keyed = NoiseStream::new(seed, 3);
        for step in (0..13u64).rev() {
            for mode in 0..3 {
                let z = keyed.normal_at(step, mode);
                assert_eq!(z, all[step as usize * 3 + mode]);
            }
        }
        keyed.seek_step(5);
        for i in 15..40 {
            assert_eq!(keyed.next_normal(), all[i]);
        }
    }

    #[test]
    fn children_are_distinct() {
        let base = RngSeed::new(1);
        let mut a = NoiseStream::new(base.child(0), 1);
        let mut b = NoiseStream::new(base.child(1), 1);
        assert_ne!(a.next_normal(), b.next_normal());
    }

    #[test]
    fn moments_are_standard() {
        let mut s = NoiseStream::new(RngSeed::new(99), 1);
        let n = 200_000;
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            let z = s.next_normal();
            m1 += z;
            m2 += z * z;
        }
        m1 /= n as f64;
        m2 /= n as f64;
        assert!(m1.abs() < 0.01, "mean {m1}");
        assert!((m2 - 1.0).abs() < 0.015, "second moment {m2}");
    }

    #[test]
    fn hex_seeds() {
        assert_eq!(parse_hex_seed("0x2A"), Some(42));
        assert_eq!(parse_hex_seed("ff"), Some(255));
        assert_eq!(parse_hex_seed("zz"), None);
        assert_eq!(RngSeed::new(42).to_hex(), "0x000000000000002a");
    }
}
