//! Hashed bag-of-words text encoder.
//!
//! Words are lowercased, split on non-alphanumerics, and hashed into a
//! fixed number of buckets. Each bucket owns a seeded Gaussian vector, so
//! the encoder is deterministic and carries no stored table; the denoiser
//! learns a projection from the pooled vector.

use rand_distr::{Distribution, StandardNormal};

use crate::rng::SeedStream;

#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbedding {
    pub tokens: Vec<Vec<f32>>,
    pub source_text: String,
}

impl TextEmbedding {
    /// Mean over tokens; zero vector for empty text.
    pub fn pooled(&self, dim: usize) -> Vec<f32> {
        let mut out = vec![0.0f32; dim];
        if self.tokens.is_empty() {
            return out;
        }
        for t in &self.tokens {
            for (o, v) in out.iter_mut().zip(t) {
                *o += v;
            }
        }
        let k = 1.0 / self.tokens.len() as f32;
        out.iter_mut().for_each(|v| *v *= k);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TextEncoder {
    pub buckets: usize,
    pub dim: usize,
    pub seed: u64,
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn fnv(word: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in word.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl TextEncoder {
    pub fn new(buckets: usize, dim: usize, seed: u64) -> Self {
        TextEncoder { buckets, dim, seed }
    }

    pub fn bucket(&self, word: &str) -> usize {
        (fnv(word) % self.buckets as u64) as usize
    }

    fn bucket_vector(&self, bucket: usize) -> Vec<f32> {
        let mut rng = SeedStream::new(self.seed).derive("text-bucket").index(bucket as u64).rng();
        let k = 1.0 / (self.dim as f32).sqrt();
        (0..self.dim)
            .map(|_| {
                let z: f32 = StandardNormal.sample(&mut rng);
                z * k
            })
            .collect()
    }

    pub fn encode(&self, text: &str) -> TextEmbedding {
        TextEmbedding {
            tokens: tokenize(text).iter().map(|w| self.bucket_vector(self.bucket(w))).collect(),
            source_text: text.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_is_deterministic() {
        let e = TextEncoder::new(64, 8, 5);
        assert_eq!(e.encode("A red circle moves right"), e.encode("A red circle moves right"));
        assert_eq!(e.encode("Red, CIRCLE").tokens, e.encode("red circle").tokens);
        assert_ne!(e.encode("red").tokens, TextEncoder::new(64, 8, 6).encode("red").tokens);
    }

    #[test]
    fn empty_text_pools_to_zero() {
        let e = TextEncoder::new(64, 8, 5);
        assert_eq!(e.encode("").pooled(8), vec![0.0; 8]);
        assert_eq!(e.encode("a b").tokens.len(), 2);
    }
}
