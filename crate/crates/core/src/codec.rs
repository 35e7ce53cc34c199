//! Balanced (constant-weight) package coding.
//!
//! Every package carries equal numbers of 0s and 1s, so the density matrix
//! averaged over a package sent on one axis is `I/2` whatever the payload.
//! Codewords are enumerated in lexicographic order; the first
//! `2^payload_bits` carry data and the rest are overhead words.
//! `Overhead(0)` is the error signal, `Overhead(1)` acknowledges a basis
//! change, and the remaining overhead words are reserved for session control.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qubit::Bit;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("unsupported package length {0} (expected 2, 4 or 6)")]
    UnsupportedLength(usize),
    #[error("payload has {got} bits, scheme expects {expected}")]
    PayloadSize { expected: usize, got: usize },
    #[error("package has {got} bits, scheme expects {expected}")]
    PackageSize { expected: usize, got: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("window must be at least 1")]
    InvalidWindow,
}

pub const ERROR_SIGNAL: usize = 0;
pub const BASIS_CHANGE_ACK: usize = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PackageRole {
    Data,
    Overhead(usize),
    ErrorSignal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Package {
    pub bits: Vec<Bit>,
    pub role: PackageRole,
}

/// Result of decoding a received bit string.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decoded {
    Data(Vec<Bit>),
    Overhead(usize),
    Unbalanced,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackageScheme {
    length: usize,
    payload_bits: usize,
    data_codebook: Vec<Vec<Bit>>,
    overhead_codebook: Vec<Vec<Bit>>,
}

impl PackageScheme {
    pub fn new(length: usize) -> Result<Self, CodecError> {
        let payload_bits = match length {
            2 => 1,
            4 => 2,
            6 => 4,
            other => return Err(CodecError::UnsupportedLength(other)),
        };
        let mut balanced = balanced_words(length);
        let overhead_codebook = balanced.split_off(1 << payload_bits);
        Ok(Self {
            length,
            payload_bits,
            data_codebook: balanced,
            overhead_codebook,
        })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn payload_bits(&self) -> usize {
        self.payload_bits
    }

    pub fn data_codebook(&self) -> &[Vec<Bit>] {
        &self.data_codebook
    }

    pub fn overhead_codebook(&self) -> &[Vec<Bit>] {
        &self.overhead_codebook
    }

    pub fn has_error_signal(&self) -> bool {
        !self.overhead_codebook.is_empty()
    }

    /// The error-signal package (first overhead word), if the scheme has one.
    pub fn error_signal(&self) -> Option<Package> {
        self.overhead_codebook.first().map(|bits| Package {
            bits: bits.clone(),
            role: PackageRole::ErrorSignal,
        })
    }

    pub fn overhead(&self, index: usize) -> Option<Package> {
        self.overhead_codebook.get(index).map(|bits| Package {
            bits: bits.clone(),
            role: if index == ERROR_SIGNAL {
                PackageRole::ErrorSignal
            } else {
                PackageRole::Overhead(index)
            },
        })
    }

    pub fn encode(&self, payload: &[Bit]) -> Result<Package, CodecError> {
        if payload.len() != self.payload_bits {
            return Err(CodecError::PayloadSize {
                expected: self.payload_bits,
                got: payload.len(),
            });
        }
        let rank = payload.iter().fold(0usize, |acc, b| (acc << 1) | b.as_u8() as usize);
        Ok(Package {
            bits: self.data_codebook[rank].clone(),
            role: PackageRole::Data,
        })
    }

    pub fn decode(&self, bits: &[Bit]) -> Result<Decoded, CodecError> {
        if bits.len() != self.length {
            return Err(CodecError::PackageSize {
                expected: self.length,
                got: bits.len(),
            });
        }
        if let Some(rank) = self.data_codebook.iter().position(|w| w == bits) {
            let payload = (0..self.payload_bits)
                .rev()
                .map(|shift| Bit::from_bool((rank >> shift) & 1 == 1))
                .collect();
            return Ok(Decoded::Data(payload));
        }
        match self.overhead_codebook.iter().position(|w| w == bits) {
            Some(index) => Ok(Decoded::Overhead(index)),
            None => Ok(Decoded::Unbalanced),
        }
    }
}

pub fn make_scheme(length: usize) -> Result<PackageScheme, CodecError> {
    PackageScheme::new(length)
}

/// All strings of `length` bits with exactly `length/2` ones, ascending.
fn balanced_words(length: usize) -> Vec<Vec<Bit>> {
    (0u32..1 << length)
        .filter(|w| w.count_ones() as usize * 2 == length)
        .map(|w| {
            (0..length)
                .rev()
                .map(|i| Bit::from_bool((w >> i) & 1 == 1))
                .collect()
        })
        .collect()
}

pub fn is_balanced(bits: &[Bit]) -> bool {
    2 * bits.iter().filter(|b| **b == Bit::One).count() == bits.len()
}

/// Largest `2 |mean(bit) - 1/2|` over every run of `window` consecutive
/// packages (package-aligned windows).
pub fn stream_balance_deviation(packages: &[Package], window: usize) -> Result<f64, CodecError> {
    if window == 0 {
        return Err(CodecError::InvalidWindow);
    }
    if packages.is_empty() {
        return Err(CodecError::EmptyInput);
    }
    let counts: Vec<(usize, usize)> = packages
        .iter()
        .map(|p| (p.bits.iter().filter(|b| **b == Bit::One).count(), p.bits.len()))
        .collect();
    let window = window.min(counts.len());
    let worst = counts
        .windows(window)
        .map(|w| {
            let (ones, total) = w.iter().fold((0, 0), |(o, t), (a, b)| (o + a, t + b));
            (2.0 * ones as f64 / total as f64 - 1.0).abs()
        })
        .fold(0.0, f64::max);
    Ok(worst)
}

/// Parses a string of `0`/`1` characters.
pub fn parse_bits(s: &str) -> Option<Vec<Bit>> {
    s.chars()
        .map(|c| match c {
            '0' => Some(Bit::Zero),
            '1' => Some(Bit::One),
            _ => None,
        })
        .collect()
}

pub fn format_bits(bits: &[Bit]) -> String {
    bits.iter().map(|b| if *b == Bit::One { '1' } else { '0' }).collect()
}
