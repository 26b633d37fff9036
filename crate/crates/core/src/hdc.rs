//! Hypervector algebra.
//!
//! Bipolar hypervectors are stored bit-packed, one bit per lane, with bit 1
//! standing for +1 and bit 0 for -1. Bundling sums are kept in exact `i64`
//! lanes ([`AccumulatorHV`]).

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

const WORD_BITS: usize = 64;

#[inline]
fn words_for(dim: usize) -> usize {
    dim.div_ceil(WORD_BITS)
}

#[inline]
fn tail_mask(dim: usize) -> u64 {
    match dim % WORD_BITS {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::InvalidDimension { expected, found })
    }
}

/// A bipolar `{+1, -1}^D` hypervector.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Hypervector {
    dim: usize,
    words: Vec<u64>,
}

impl Hypervector {
    /// Draws each lane independently as +1 or -1 with probability 1/2.
    pub fn random<R: RngCore + ?Sized>(dim: usize, rng: &mut R) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension {
                expected: 1,
                found: 0,
            });
        }
        let mut words: Vec<u64> = (0..words_for(dim)).map(|_| rng.next_u64()).collect();
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(dim);
        }
        Ok(Self { dim, words })
    }

    /// The all-(+1) hypervector, identity element of binding.
    pub fn ones(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension {
                expected: 1,
                found: 0,
            });
        }
        let mut words = vec![u64::MAX; words_for(dim)];
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(dim);
        }
        Ok(Self { dim, words })
    }

    pub fn from_bipolar(values: &[i8]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDimension {
                expected: 1,
                found: 0,
            });
        }
        let mut words = vec![0u64; words_for(values.len())];
        for (i, &v) in values.iter().enumerate() {
            match v {
                1 => words[i / WORD_BITS] |= 1 << (i % WORD_BITS),
                -1 => {}
                other => {
                    return Err(Error::Spec(format!(
                        "lane {i} holds {other}, expected +1 or -1"
                    )))
                }
            }
        }
        Ok(Self {
            dim: values.len(),
            words,
        })
    }

    /// Rebuilds a hypervector from packed words; bits past `dim` must be clear.
    pub fn from_words(dim: usize, words: Vec<u64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension {
                expected: 1,
                found: 0,
            });
        }
        check_dim(words_for(dim), words.len())?;
        if words.last().copied().unwrap_or(0) & !tail_mask(dim) != 0 {
            return Err(Error::Spec("packed hypervector has bits set past dim".into()));
        }
        Ok(Self { dim, words })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Lane `i` as +1 or -1.
    #[inline]
    pub fn get(&self, i: usize) -> i8 {
        if (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = i8> + '_ {
        (0..self.dim).map(move |i| self.get(i))
    }

    pub fn to_bipolar(&self) -> Vec<i8> {
        self.iter().collect()
    }

    /// Rotates toward higher index: output lane `(j + k) mod D` is input lane `j`.
    pub fn cyclic_shift(&self, k: usize) -> Self {
        let k = k % self.dim;
        if k == 0 {
            return self.clone();
        }
        let mut words = vec![0u64; self.words.len()];
        for j in 0..self.dim {
            if (self.words[j / WORD_BITS] >> (j % WORD_BITS)) & 1 == 1 {
                let t = (j + k) % self.dim;
                words[t / WORD_BITS] |= 1 << (t % WORD_BITS);
            }
        }
        Self {
            dim: self.dim,
            words,
        }
    }

    /// Bipolar dot product, computed from the Hamming distance.
    pub fn dot(&self, other: &Hypervector) -> Result<i64> {
        check_dim(self.dim, other.dim)?;
        let hamming: u32 = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum();
        Ok(self.dim as i64 - 2 * hamming as i64)
    }

    /// `<self, lanes>` with `self` read as ±1.
    pub fn dot_lanes(&self, lanes: &[i64]) -> Result<i64> {
        check_dim(self.dim, lanes.len())?;
        let mut pos = 0i64;
        let mut total = 0i64;
        for (w, chunk) in self.words.iter().zip(lanes.chunks(WORD_BITS)) {
            for (b, &v) in chunk.iter().enumerate() {
                total += v;
                if (w >> b) & 1 == 1 {
                    pos += v;
                }
            }
        }
        Ok(2 * pos - total)
    }

    /// Adds this hypervector (as ±1 lanes) into `lanes`.
    pub(crate) fn add_into(&self, lanes: &mut [i64]) {
        debug_assert_eq!(lanes.len(), self.dim);
        for (w, chunk) in self.words.iter().zip(lanes.chunks_mut(WORD_BITS)) {
            for (b, v) in chunk.iter_mut().enumerate() {
                *v += (((w >> b) & 1) as i64) * 2 - 1;
            }
        }
    }

    pub fn to_accumulator(&self) -> AccumulatorHV {
        let mut lanes = vec![0i64; self.dim];
        self.add_into(&mut lanes);
        AccumulatorHV { lanes }
    }
}

/// Draws a random bipolar hypervector from a `u64` seed.
pub fn random_hypervector(dim: usize, seed: u64) -> Result<Hypervector> {
    Hypervector::random(dim, &mut seed::rng(seed))
}

/// Integer-valued bundling sum.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AccumulatorHV {
    lanes: Vec<i64>,
}

impl AccumulatorHV {
    pub fn zeros(dim: usize) -> Self {
        Self {
            lanes: vec![0; dim],
        }
    }

    pub fn from_lanes(lanes: Vec<i64>) -> Self {
        Self { lanes }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lanes.len()
    }

    #[inline]
    pub fn lanes(&self) -> &[i64] {
        &self.lanes
    }

    pub fn into_lanes(self) -> Vec<i64> {
        self.lanes
    }

    pub fn is_zero(&self) -> bool {
        self.lanes.iter().all(|&v| v == 0)
    }

    pub fn add_assign(&mut self, other: &AccumulatorHV) -> Result<()> {
        check_dim(self.dim(), other.dim())?;
        for (a, b) in self.lanes.iter_mut().zip(&other.lanes) {
            *a += b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &AccumulatorHV) -> Result<i128> {
        check_dim(self.dim(), other.dim())?;
        Ok(self
            .lanes
            .iter()
            .zip(&other.lanes)
            .map(|(&a, &b)| a as i128 * b as i128)
            .sum())
    }
}

impl From<&Hypervector> for AccumulatorHV {
    fn from(hv: &Hypervector) -> Self {
        hv.to_accumulator()
    }
}

/// Anything that can be summed into an [`AccumulatorHV`].
pub trait BundleTerm {
    fn term_dim(&self) -> usize;
    fn add_to(&self, lanes: &mut [i64]);
}

impl BundleTerm for AccumulatorHV {
    fn term_dim(&self) -> usize {
        self.dim()
    }

    fn add_to(&self, lanes: &mut [i64]) {
        for (a, b) in lanes.iter_mut().zip(&self.lanes) {
            *a += b;
        }
    }
}

impl BundleTerm for Hypervector {
    fn term_dim(&self) -> usize {
        self.dim
    }

    fn add_to(&self, lanes: &mut [i64]) {
        self.add_into(lanes);
    }
}

impl<T: BundleTerm + ?Sized> BundleTerm for &T {
    fn term_dim(&self) -> usize {
        (**self).term_dim()
    }

    fn add_to(&self, lanes: &mut [i64]) {
        (**self).add_to(lanes)
    }
}

/// Lane-wise integer sum of `terms`. An empty sequence yields zeros.
pub fn bundle<I>(dim: usize, terms: I) -> Result<AccumulatorHV>
where
    I: IntoIterator,
    I::Item: BundleTerm,
{
    let mut lanes = vec![0i64; dim];
    for term in terms {
        check_dim(dim, term.term_dim())?;
        term.add_to(&mut lanes);
    }
    Ok(AccumulatorHV { lanes })
}

/// Lane-wise product with a bipolar hypervector.
pub fn bind(a: &AccumulatorHV, b: &Hypervector) -> Result<AccumulatorHV> {
    let mut out = a.clone();
    bind_in_place(&mut out.lanes, b)?;
    Ok(out)
}

pub(crate) fn bind_in_place(lanes: &mut [i64], b: &Hypervector) -> Result<()> {
    check_dim(b.dim(), lanes.len())?;
    for (w, chunk) in b.words.iter().zip(lanes.chunks_mut(WORD_BITS)) {
        for (bit, v) in chunk.iter_mut().enumerate() {
            if (w >> bit) & 1 == 0 {
                *v = -*v;
            }
        }
    }
    Ok(())
}

/// `<a, b> / (|a| |b|)` on exact integer lanes.
pub fn cosine_similarity(a: &AccumulatorHV, b: &AccumulatorHV) -> Result<f64> {
    let dot = a.dot(b)?;
    let na = a.dot(a)?;
    let nb = b.dot(b)?;
    if na == 0 {
        return Err(Error::DegenerateSimilarity("left operand"));
    }
    if nb == 0 {
        return Err(Error::DegenerateSimilarity("right operand"));
    }
    let c = dot as f64 / ((na as f64).sqrt() * (nb as f64).sqrt());
    Ok(c.clamp(-1.0, 1.0))
}

/// Cosine similarity on real lanes.
pub fn cosine_similarity_real<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    check_dim(a.len(), b.len())?;
    let (mut dot, mut na, mut nb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        dot = dot + x * y;
        na = na + x * x;
        nb = nb + y * y;
    }
    if na == T::zero() {
        return Err(Error::DegenerateSimilarity("left operand"));
    }
    if nb == T::zero() {
        return Err(Error::DegenerateSimilarity("right operand"));
    }
    let c = dot / (na.sqrt() * nb.sqrt());
    Ok(c.max(-T::one()).min(T::one()))
}

/// Sign quantization with the tie rule `0 -> +1`.
pub fn sign_quantize(a: &AccumulatorHV) -> Hypervector {
    sign_quantize_by(a.dim(), |i| a.lanes[i] >= 0)
}

/// Sign quantization of real lanes (`0 -> +1`).
pub fn sign_quantize_real<T: Scalar>(lanes: &[T]) -> Hypervector {
    sign_quantize_by(lanes.len(), |i| lanes[i] >= T::zero())
}

fn sign_quantize_by(dim: usize, positive: impl Fn(usize) -> bool) -> Hypervector {
    let mut words = vec![0u64; words_for(dim)];
    for i in 0..dim {
        if positive(i) {
            words[i / WORD_BITS] |= 1 << (i % WORD_BITS);
        }
    }
    Hypervector { dim, words }
}

/// Position hypervectors `p_i = rho^i(p_base)` for `i < M`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PositionTable {
    base: Hypervector,
    rows: Vec<Hypervector>,
}

impl PositionTable {
    pub fn new(base: Hypervector, num_features: usize) -> Self {
        let mut rows = Vec::with_capacity(num_features);
        let mut current = base.clone();
        for _ in 0..num_features {
            let next = current.cyclic_shift(1);
            rows.push(current);
            current = next;
        }
        Self { base, rows }
    }

    pub fn base(&self) -> &Hypervector {
        &self.base
    }

    pub fn num_features(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn row(&self, i: usize) -> &Hypervector {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Hypervector] {
        &self.rows
    }
}
