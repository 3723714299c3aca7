//! Implicit seeded Bernoulli sampling matrix.
//!
//! Entry `(i, k)` of `Φ` is `σ(i, k) / √M` with `σ ∈ {+1, −1}` drawn from a
//! SplitMix64 finalizer of the counter `i·N + k`, so any entry can be
//! regenerated from the seed alone and `Φ` is never stored in situ.

use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX2: u64 = 0x94D0_49BB_1331_11EB;

/// Default constant in `M = C·K·log2(N/K)`.
pub const DEFAULT_SAMPLE_CONSTANT: f64 = 4.0;

#[inline]
fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MIX1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX2);
    z ^ (z >> 31)
}

/// Seed of rank `rank_id` derived from a run seed; ranks never coordinate.
pub fn partition_seed(seed: u64, rank_id: u32) -> u64 {
    if rank_id == 0 {
        return seed;
    }
    finalize(seed ^ (rank_id as u64).wrapping_mul(GOLDEN_GAMMA))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BernoulliSpec {
    pub seed: u64,
    pub samples: usize,
    pub points: usize,
}

impl BernoulliSpec {
    pub fn new(seed: u64, samples: usize, points: usize) -> Result<Self> {
        if samples == 0 || points == 0 {
            return Err(Error::InvalidArgument(
                "sample and point counts must be positive".into(),
            ));
        }
        if samples > points {
            return Err(Error::NotCompressive { samples, points });
        }
        Ok(Self {
            seed,
            samples,
            points,
        })
    }

    /// Compression ratio `N / M`.
    pub fn ratio(&self) -> f64 {
        self.points as f64 / self.samples as f64
    }

    pub fn scale(&self) -> f64 {
        1.0 / (self.samples as f64).sqrt()
    }

    /// `σ(i, k)` as `true` for `+1`.
    #[inline]
    pub fn is_positive(&self, row: usize, col: usize) -> bool {
        let counter = (row as u64)
            .wrapping_mul(self.points as u64)
            .wrapping_add(col as u64);
        let z = self.seed.wrapping_add(counter.wrapping_mul(GOLDEN_GAMMA));
        finalize(z) >> 63 == 0
    }

    #[inline]
    pub fn sign(&self, row: usize, col: usize) -> f64 {
        if self.is_positive(row, col) {
            1.0
        } else {
            -1.0
        }
    }

    /// Calls `f(k, positive)` for every column of `row`, generating the
    /// counter incrementally.
    #[inline]
    fn for_each_in_row(&self, row: usize, mut f: impl FnMut(usize, bool)) {
        let mut z = self.seed.wrapping_add(
            ((row as u64).wrapping_mul(self.points as u64)).wrapping_mul(GOLDEN_GAMMA),
        );
        for k in 0..self.points {
            f(k, finalize(z) >> 63 == 0);
            z = z.wrapping_add(GOLDEN_GAMMA);
        }
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch { expected, actual });
    }
    Ok(())
}

/// `y = Φ f` without storing `Φ`.
pub fn sample_field(field: &[f64], spec: &BernoulliSpec) -> Result<Vec<f64>> {
    check_len(spec.points, field.len())?;
    if spec.samples > spec.points {
        return Err(Error::NotCompressive {
            samples: spec.samples,
            points: spec.points,
        });
    }
    let scale = spec.scale();
    Ok((0..spec.samples)
        .map(|i| {
            let mut acc = 0.0;
            spec.for_each_in_row(i, |k, positive| {
                if positive {
                    acc += field[k];
                } else {
                    acc -= field[k];
                }
            });
            acc * scale
        })
        .collect())
}

/// `Φᵀ v` without storing `Φ`.
pub fn apply_sampler_transpose(v: &[f64], spec: &BernoulliSpec) -> Result<Vec<f64>> {
    check_len(spec.samples, v.len())?;
    let scale = spec.scale();
    let mut out = vec![0.0; spec.points];
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        let w = vi * scale;
        spec.for_each_in_row(i, |k, positive| {
            if positive {
                out[k] += w;
            } else {
                out[k] -= w;
            }
        });
    }
    Ok(out)
}

/// `M = min(N, ceil(C·K·log2(N/K)))`.
pub fn choose_sample_count(points: usize, sparsity: usize, constant: f64) -> Result<usize> {
    if sparsity == 0 || sparsity >= points {
        return Err(Error::InvalidArgument(format!(
            "sparsity estimate {sparsity} must lie in 1..{points}"
        )));
    }
    if !(constant > 0.0 && constant.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sample constant {constant} must be positive"
        )));
    }
    let k = sparsity as f64;
    let m = (constant * k * (points as f64 / k).log2()).ceil() as usize;
    Ok(m.clamp(1, points))
}

/// `Φ` regenerated from its seed and bit-packed (one bit per entry), for
/// repeated application during reconstruction.
#[derive(Debug, Clone)]
pub struct SignMatrix {
    spec: BernoulliSpec,
    words_per_row: usize,
    bits: Vec<u64>,
}

impl SignMatrix {
    pub fn new(spec: BernoulliSpec) -> Self {
        let words_per_row = spec.points.div_ceil(64);
        let mut bits = vec![0u64; words_per_row * spec.samples];
        for (i, row) in bits.chunks_exact_mut(words_per_row).enumerate() {
            spec.for_each_in_row(i, |k, positive| {
                if positive {
                    row[k / 64] |= 1 << (k % 64);
                }
            });
        }
        Self {
            spec,
            words_per_row,
            bits,
        }
    }

    pub fn spec(&self) -> &BernoulliSpec {
        &self.spec
    }

    #[inline]
    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words_per_row..(i + 1) * self.words_per_row]
    }

    /// `Φ x` for dense `x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.spec.points);
        let scale = self.spec.scale();
        let total: f64 = x.iter().sum();
        for (i, o) in out.iter_mut().enumerate() {
            // Σ σ x = 2 Σ_{σ=+1} x − Σ x
            let mut pos = 0.0;
            for (w, &word) in self.row(i).iter().enumerate() {
                let mut word = word;
                while word != 0 {
                    let b = word.trailing_zeros() as usize;
                    pos += x[w * 64 + b];
                    word &= word - 1;
                }
            }
            *o = (2.0 * pos - total) * scale;
        }
    }

    /// `Φ x` for sparse `x`.
    pub fn apply_sparse(&self, indices: &[usize], values: &[f64], out: &mut [f64]) {
        let scale = self.spec.scale();
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = 0.0;
            for (&k, &v) in indices.iter().zip(values) {
                if row[k / 64] >> (k % 64) & 1 == 1 {
                    acc += v;
                } else {
                    acc -= v;
                }
            }
            *o = acc * scale;
        }
    }

    /// `Φᵀ v`.
    pub fn apply_transpose(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.spec.samples);
        let scale = self.spec.scale();
        let total: f64 = v.iter().sum::<f64>() * scale;
        out.fill(-total);
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let w = 2.0 * vi * scale;
            for (wi, &word) in self.row(i).iter().enumerate() {
                let mut word = word;
                while word != 0 {
                    let b = word.trailing_zeros() as usize;
                    out[wi * 64 + b] += w;
                    word &= word - 1;
                }
            }
        }
    }
}

/// `Φ` alone, for problems that are sparse in the point basis.
impl crate::stomp::LinearOperator for SignMatrix {
    fn nrows(&self) -> usize {
        self.spec.samples
    }

    fn ncols(&self) -> usize {
        self.spec.points
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        SignMatrix::apply(self, x, out)
    }

    fn apply_transpose(&self, r: &[f64], out: &mut [f64]) {
        SignMatrix::apply_transpose(self, r, out)
    }

    fn columns(&self, cols: &[usize], out: &mut [Vec<f64>]) {
        for (&j, col) in cols.iter().zip(out.iter_mut()) {
            col.resize(self.spec.samples, 0.0);
            self.apply_sparse(&[j], &[1.0], col);
        }
    }
}
