//! SOSD-style key files and synthetic key generators.
//!
//! A dataset file is an 8-byte little-endian count followed by that many
//! 8-byte little-endian keys.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, LogNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("short read at offset {offset}: expected {expected} bytes, found {found}")]
    ShortRead { offset: usize, expected: usize, found: usize },
    #[error("empty dataset")]
    Empty,
    #[error("invalid distribution parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Scale applied to continuous lognormal samples before rounding.
pub const LOGNORMAL_SCALE: f64 = 1e9;

/// Reads a key file, returning its keys sorted and deduplicated.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<u64>, DatasetError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    parse_dataset(&bytes)
}

pub fn parse_dataset(bytes: &[u8]) -> Result<Vec<u64>, DatasetError> {
    let word = |offset: usize| -> Result<u64, DatasetError> {
        let chunk = bytes.get(offset..offset + 8).ok_or(DatasetError::ShortRead {
            offset,
            expected: 8,
            found: bytes.len().saturating_sub(offset),
        })?;
        Ok(u64::from_le_bytes(chunk.try_into().expect("8 bytes")))
    };
    let count = word(0)? as usize;
    if count == 0 {
        return Err(DatasetError::Empty);
    }
    let needed = count.checked_mul(8).and_then(|n| n.checked_add(8));
    if needed.is_none_or(|n| n > bytes.len()) {
        // Report the first key that cannot be read in full.
        let offset = 8 + (bytes.len().saturating_sub(8) / 8) * 8;
        return Err(DatasetError::ShortRead {
            offset,
            expected: 8,
            found: bytes.len() - offset,
        });
    }
    let mut keys: Vec<u64> = (0..count).map(|i| word(8 + 8 * i)).collect::<Result<_, _>>()?;
    keys.sort_unstable();
    keys.dedup();
    Ok(keys)
}

/// Writes keys in file order, without sorting.
pub fn write_dataset(path: impl AsRef<Path>, keys: &[u64]) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(keys.len() as u64).to_le_bytes())?;
    for k in keys {
        w.write_all(&k.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Raw lognormal draws, before scaling.
pub fn lognormal_samples(n: usize, mu: f64, sigma: f64, seed: u64) -> Result<Vec<f64>, DatasetError> {
    if !(mu.is_finite() && sigma.is_finite() && sigma > 0.0) {
        return Err(DatasetError::InvalidParams(format!("need finite mu and sigma > 0, got {mu}, {sigma}")));
    }
    let dist = LogNormal::new(mu, sigma).map_err(|e| DatasetError::InvalidParams(e.to_string()))?;
    let mut rng = StdRng::seed_from_u64(seed);
    Ok((0..n).map(|_| dist.sample(&mut rng)).collect())
}

/// `n` distinct keys drawn from a lognormal law, scaled by 1e9 and rounded.
///
/// Collisions are resolved by drawing again from the same stream, so the
/// output depends only on the arguments. The result is sorted.
pub fn gen_lognormal(n: usize, mu: f64, sigma: f64, seed: u64) -> Result<Vec<u64>, DatasetError> {
    if n == 0 {
        return Err(DatasetError::Empty);
    }
    if !(mu.is_finite() && sigma.is_finite() && sigma > 0.0) {
        return Err(DatasetError::InvalidParams(format!("need finite mu and sigma > 0, got {mu}, {sigma}")));
    }
    let dist = LogNormal::new(mu, sigma).map_err(|e| DatasetError::InvalidParams(e.to_string()))?;
    let mut rng = StdRng::seed_from_u64(seed);
    unique_keys(n, || {
        let x = (dist.sample(&mut rng) * LOGNORMAL_SCALE).round();
        // Float-to-int casts saturate at u64::MAX.
        x as u64
    })
}

/// `n` distinct keys uniform over the full u64 domain, sorted.
pub fn gen_uniform(n: usize, seed: u64) -> Result<Vec<u64>, DatasetError> {
    if n == 0 {
        return Err(DatasetError::Empty);
    }
    let mut rng = StdRng::seed_from_u64(seed);
    unique_keys(n, || rng.gen())
}

fn unique_keys(n: usize, mut draw: impl FnMut() -> u64) -> Result<Vec<u64>, DatasetError> {
    let mut seen = HashSet::with_capacity(n);
    let mut keys = Vec::with_capacity(n);
    let mut misses = 0usize;
    while keys.len() < n {
        let k = draw();
        if seen.insert(k) {
            keys.push(k);
        } else {
            misses += 1;
            if misses > 64 * n + 1024 {
                return Err(DatasetError::InvalidParams(
                    "distribution too narrow to produce enough distinct keys".into(),
                ));
            }
        }
    }
    keys.sort_unstable();
    Ok(keys)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encode(words: &[u64]) -> Vec<u8> {
        words.iter().flat_map(|w| w.to_le_bytes()).collect()
    }

    #[test]
    fn dedup_and_sort() {
        assert_eq!(parse_dataset(&encode(&[3, 5, 1, 5])).unwrap(), vec![1, 5]);
    }

    #[test]
    fn empty_and_truncated() {
        assert!(matches!(parse_dataset(&encode(&[0])), Err(DatasetError::Empty)));
        let mut b = encode(&[3, 5, 1]);
        b.extend_from_slice(&[7, 0, 0]);
        let err = parse_dataset(&b).unwrap_err();
        assert!(err.to_string().starts_with("short read at offset 24"), "{err}");
        let err = parse_dataset(&[1, 2]).unwrap_err();
        assert!(err.to_string().starts_with("short read at offset 0"), "{err}");
    }

    #[test]
    fn single_key() {
        for seed in 0..10 {
            assert_eq!(gen_lognormal(1, 0.0, 1.0, seed).unwrap().len(), 1);
        }
        assert!(gen_lognormal(0, 0.0, 1.0, 0).is_err());
        assert!(gen_lognormal(10, 0.0, -1.0, 0).is_err());
    }
}
