//! Mixed-radix codecs for joint (multi-agent) states and actions.
//!
//! A joint configuration `(x_0, …, x_{n−1})` with per-agent cardinalities
//! `(c_0, …, c_{n−1})` is encoded as
//!
//! ```text
//! idx = ((x_0·c_1 + x_1)·c_2 + x_2)·… ,
//! ```
//!
//! i.e. ascending agent order with the **last agent varying fastest**
//! (row-major). All dense joint tables in this crate use this layout.

use thiserror::Error;

/// Error raised when a joint enumeration would exceed a size guard.
#[derive(Debug, Error)]
#[error("joint enumeration of size {size} exceeds the guard {limit}")]
pub struct EnumerationGuard {
    /// Requested number of joint configurations.
    pub size: usize,
    /// Permitted maximum.
    pub limit: usize,
}

/// A mixed-radix codec over fixed per-position cardinalities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixedRadix {
    sizes: Vec<usize>,
    /// `strides[k] = ∏_{k' > k} sizes[k']`.
    strides: Vec<usize>,
    len: usize,
}

impl MixedRadix {
    /// Builds a codec for the given per-position cardinalities (all ≥ 1).
    ///
    /// # Panics
    ///
    /// Panics on a zero cardinality or on overflow of the total size; use
    /// [`MixedRadix::checked_new`] to guard against large products.
    pub fn new(sizes: &[usize]) -> Self {
        Self::checked_new(sizes, usize::MAX).expect("mixed radix size overflow")
    }

    /// Builds a codec, failing if the total number of configurations
    /// exceeds `limit`.
    pub fn checked_new(sizes: &[usize], limit: usize) -> Result<Self, EnumerationGuard> {
        assert!(sizes.iter().all(|&c| c >= 1), "cardinalities must be positive");
        let mut len: usize = 1;
        for &c in sizes {
            len = len
                .checked_mul(c)
                .filter(|&l| l <= limit)
                .ok_or(EnumerationGuard { size: usize::MAX, limit })?;
        }
        let mut strides = vec![1usize; sizes.len()];
        for k in (0..sizes.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * sizes[k + 1];
        }
        Ok(Self { sizes: sizes.to_vec(), strides, len })
    }

    /// Total number of joint configurations.
    pub fn len(&self) -> usize {
        self.len
    }

    /// True when there are no positions (the empty product has length 1, so
    /// this is only true for a zero-length size list — never, in practice).
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Per-position cardinalities.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Encodes digits into a flat index.
    pub fn index(&self, digits: &[usize]) -> usize {
        debug_assert_eq!(digits.len(), self.sizes.len());
        let mut idx = 0;
        for (k, &d) in digits.iter().enumerate() {
            debug_assert!(d < self.sizes[k], "digit {d} out of range at position {k}");
            idx += d * self.strides[k];
        }
        idx
    }

    /// Extracts the digit at `pos` from a flat index.
    pub fn digit(&self, idx: usize, pos: usize) -> usize {
        (idx / self.strides[pos]) % self.sizes[pos]
    }

    /// Decodes a flat index into a fresh digit vector.
    pub fn decode(&self, idx: usize) -> Vec<usize> {
        let mut digits = vec![0; self.sizes.len()];
        self.decode_into(idx, &mut digits);
        digits
    }

    /// Decodes a flat index into a caller-provided buffer.
    pub fn decode_into(&self, idx: usize, digits: &mut [usize]) {
        debug_assert!(idx < self.len);
        for (k, d) in digits.iter_mut().enumerate() {
            *d = self.digit(idx, k);
        }
    }

    /// Iterates all joint configurations in index order, yielding
    /// `(flat_index, digits)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, Vec<usize>)> + '_ {
        (0..self.len).map(|idx| (idx, self.decode(idx)))
    }
}

/// Gathers the coordinates of `digits` at `positions` into `out`.
///
/// Used to restrict a global state or action to a neighborhood's
/// coordinates (positions must be sorted for the canonical layout).
pub fn gather(digits: &[usize], positions: &[usize], out: &mut Vec<usize>) {
    out.clear();
    out.extend(positions.iter().map(|&p| digits[p]));
}
