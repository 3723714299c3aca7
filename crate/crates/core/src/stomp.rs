//! Stagewise Orthogonal Matching Pursuit over implicit operators.

use faer::prelude::*;
use faer::Mat;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2};

/// A linear map `A: R^N → R^M` known only through its action.
pub trait LinearOperator {
    /// `M`.
    fn nrows(&self) -> usize;
    /// `N`.
    fn ncols(&self) -> usize;
    /// `out = A x`.
    fn apply(&self, x: &[f64], out: &mut [f64]);
    /// `out = Aᵀ r`.
    fn apply_transpose(&self, r: &[f64], out: &mut [f64]);

    /// Writes column `cols[c]` of `A` into `out[c]` (each of length `M`).
    fn columns(&self, cols: &[usize], out: &mut [Vec<f64>]) {
        let mut e = vec![0.0; self.ncols()];
        for (&j, col) in cols.iter().zip(out.iter_mut()) {
            e[j] = 1.0;
            col.resize(self.nrows(), 0.0);
            self.apply(&e, col);
            e[j] = 0.0;
        }
    }
}

/// Adapts a pair of closures into a [`LinearOperator`].
pub struct FnOperator<F, G> {
    pub rows: usize,
    pub cols: usize,
    pub forward: F,
    pub adjoint: G,
}

impl<F, G> LinearOperator for FnOperator<F, G>
where
    F: Fn(&[f64], &mut [f64]),
    G: Fn(&[f64], &mut [f64]),
{
    fn nrows(&self) -> usize {
        self.rows
    }
    fn ncols(&self) -> usize {
        self.cols
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        (self.forward)(x, out)
    }
    fn apply_transpose(&self, r: &[f64], out: &mut [f64]) {
        (self.adjoint)(r, out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StompConfig {
    /// Threshold multiplier `t` on the formal noise level.
    pub threshold: f64,
    pub max_stages: usize,
    /// Stop once `‖r‖ ≤ residual_tol · ‖y‖`.
    pub residual_tol: f64,
    /// Tikhonov weight used only when the support block is rank deficient.
    pub ridge: f64,
    pub initial_guess: Option<Vec<f64>>,
}

/// Default `t`. Pure-noise correlations exceed it with probability about
/// 4.7e-4, so a 10-stage solve over 33k unknowns admits roughly 150 false
/// detections instead of exhausting an `M = N/10` support budget.
pub const DEFAULT_THRESHOLD: f64 = 3.5;

impl Default for StompConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            max_stages: 10,
            residual_tol: 1e-6,
            ridge: 1e-12,
            initial_guess: None,
        }
    }
}

impl StompConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "threshold {} must be positive",
                self.threshold
            )));
        }
        if self.max_stages == 0 {
            return Err(Error::InvalidArgument(
                "max_stages must be at least 1".into(),
            ));
        }
        if !(self.residual_tol >= 0.0) || !(self.ridge >= 0.0) {
            return Err(Error::InvalidArgument(
                "tolerances must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The initial residual already met the tolerance.
    InitialResidual,
    /// No correlation exceeded the threshold.
    EmptySelection,
    ResidualTolerance,
    MaxStages,
    /// The next support would exceed the number of samples.
    SupportLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StompResult {
    pub coefficients: Vec<f64>,
    /// Sorted active set.
    pub active_set: Vec<usize>,
    /// `‖r_n‖₂` for `n = 0..=stages_used`.
    pub residual_history: Vec<f64>,
    pub stages_used: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
}

/// Relative tolerance of the adjoint spot check.
const ADJOINT_TOLERANCE: f64 = 1e-10;
/// `|R_kk| / max |R_ii|` below which the support block counts as rank deficient.
const RANK_DEFICIENCY: f64 = 1e-10;

/// Runs StOMP on `y = A s`.
///
/// Each stage correlates the residual with every column, keeps the columns
/// whose correlation exceeds `t · ‖r‖ / √M`, and refits by least squares on
/// the accumulated support. A nonzero initial guess seeds the support.
pub fn stomp_solve<A: LinearOperator + ?Sized>(
    op: &A,
    y: &[f64],
    config: &StompConfig,
) -> Result<StompResult> {
    config.validate()?;
    let m = op.nrows();
    let n = op.ncols();
    if y.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            actual: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("samples"));
    }
    check_adjoint(op)?;

    let mut s = match &config.initial_guess {
        Some(g) if g.len() != n => {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: g.len(),
            })
        }
        Some(g) if g.iter().any(|v| !v.is_finite()) => {
            return Err(Error::NonFinite("initial guess"))
        }
        Some(g) => g.clone(),
        None => vec![0.0; n],
    };
    // columns of the support block, in insertion order
    let mut support: Vec<usize> = (0..n).filter(|&j| s[j] != 0.0).collect();
    if support.len() > m {
        return Err(Error::SupportExceedsSamples {
            support: support.len(),
            samples: m,
        });
    }
    let mut in_support = vec![false; n];
    support.iter().for_each(|&j| in_support[j] = true);
    let mut block: Vec<Vec<f64>> = vec![Vec::new(); support.len()];
    op.columns(&support, &mut block);

    let mut residual = vec![0.0; m];
    op.apply(&s, &mut residual);
    residual.iter_mut().zip(y).for_each(|(r, &yi)| *r = yi - *r);

    let y_norm = norm2(y);
    let mut history = vec![norm2(&residual)];
    let mut stages_used = 0;
    let mut corr = vec![0.0; n];

    let stop = loop {
        let r_norm = *history.last().unwrap();
        if r_norm <= config.residual_tol * y_norm {
            break if stages_used == 0 {
                StopReason::InitialResidual
            } else {
                StopReason::ResidualTolerance
            };
        }
        if stages_used == config.max_stages {
            break StopReason::MaxStages;
        }

        op.apply_transpose(&residual, &mut corr);
        let cutoff = config.threshold * r_norm / (m as f64).sqrt();
        let fresh: Vec<usize> = (0..n)
            .filter(|&j| !in_support[j] && corr[j].abs() > cutoff)
            .collect();
        if fresh.is_empty() {
            break StopReason::EmptySelection;
        }
        if support.len() + fresh.len() > m {
            break StopReason::SupportLimit;
        }

        let mut cols = vec![Vec::new(); fresh.len()];
        op.columns(&fresh, &mut cols);
        for &j in &fresh {
            in_support[j] = true;
        }
        support.extend_from_slice(&fresh);
        block.extend(cols);

        let x = solve_support_block(&block, y, config.ridge)?;
        s.iter_mut().for_each(|v| *v = 0.0);
        residual.copy_from_slice(y);
        for ((&j, &xj), col) in support.iter().zip(&x).zip(&block) {
            s[j] = xj;
            for (r, c) in residual.iter_mut().zip(col) {
                *r -= xj * c;
            }
        }
        history.push(norm2(&residual));
        stages_used += 1;
    };

    let mut active_set = support;
    active_set.sort_unstable();
    Ok(StompResult {
        coefficients: s,
        active_set,
        residual_history: history,
        stages_used,
        converged: matches!(
            stop,
            StopReason::InitialResidual
                | StopReason::EmptySelection
                | StopReason::ResidualTolerance
        ),
        stop_reason: stop,
    })
}

fn check_adjoint<A: LinearOperator + ?Sized>(op: &A) -> Result<()> {
    let (m, n) = (op.nrows(), op.ncols());
    let mut state = 0x5EED_u64;
    let mut next = || {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let v: Vec<f64> = (0..n).map(|_| next()).collect();
    let u: Vec<f64> = (0..m).map(|_| next()).collect();
    let mut av = vec![0.0; m];
    let mut atu = vec![0.0; n];
    op.apply(&v, &mut av);
    op.apply_transpose(&u, &mut atu);
    let lhs = dot(&av, &u);
    let rhs = dot(&v, &atu);
    let scale = (norm2(&av) * norm2(&u)).max(norm2(&v) * norm2(&atu));
    if scale == 0.0 {
        return Ok(());
    }
    let mismatch = (lhs - rhs).abs() / scale;
    if !(mismatch <= ADJOINT_TOLERANCE) {
        return Err(Error::InconsistentOperators(mismatch));
    }
    Ok(())
}

/// Least squares `min ‖A_I x − y‖₂` for an explicit column block.
///
/// Uses a Householder QR of the `M × |I|` block; when its triangular factor
/// reveals rank deficiency the system is augmented with `√ridge · scale · I`.
pub fn least_squares_on_support(columns: &[Vec<f64>], y: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let m = y.len();
    if columns.len() > m {
        return Err(Error::SupportExceedsSamples {
            support: columns.len(),
            samples: m,
        });
    }
    if let Some(bad) = columns.iter().find(|c| c.len() != m) {
        return Err(Error::LengthMismatch {
            expected: m,
            actual: bad.len(),
        });
    }
    solve_support_block(columns, y, ridge)
}

fn solve_support_block(columns: &[Vec<f64>], y: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let k = columns.len();
    let m = y.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    if k > m {
        return Err(Error::SupportExceedsSamples {
            support: k,
            samples: m,
        });
    }
    let a = Mat::<f64>::from_fn(m, k, |i, j| columns[j][i]);
    let rhs = Mat::<f64>::from_fn(m, 1, |i, _| y[i]);
    let qr = a.qr();
    let r = qr.thin_R();
    let diag: Vec<f64> = (0..k).map(|i| r[(i, i)].abs()).collect();
    let peak = diag.iter().copied().fold(0.0, f64::max);
    let deficient = peak == 0.0 || diag.iter().any(|&d| d <= RANK_DEFICIENCY * peak);

    let x = if !deficient {
        qr.solve_lstsq(&rhs)
    } else {
        let scale = columns
            .iter()
            .map(|c| norm2(c))
            .fold(0.0, f64::max)
            .max(1.0);
        let damp = ridge.sqrt() * scale;
        let aug = Mat::<f64>::from_fn(m + k, k, |i, j| {
            if i < m {
                columns[j][i]
            } else if i - m == j {
                damp
            } else {
                0.0
            }
        });
        let aug_rhs = Mat::<f64>::from_fn(m + k, 1, |i, _| if i < m { y[i] } else { 0.0 });
        aug.qr().solve_lstsq(&aug_rhs)
    };
    let out: Vec<f64> = (0..k).map(|i| x[(i, 0)]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("least-squares solution"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Dense {
        m: usize,
        n: usize,
        a: Vec<f64>, // row-major
    }

    impl LinearOperator for Dense {
        fn nrows(&self) -> usize {
            self.m
        }
        fn ncols(&self) -> usize {
            self.n
        }
        fn apply(&self, x: &[f64], out: &mut [f64]) {
            for i in 0..self.m {
                out[i] = dot(&self.a[i * self.n..(i + 1) * self.n], x);
            }
        }
        fn apply_transpose(&self, r: &[f64], out: &mut [f64]) {
            out.fill(0.0);
            for i in 0..self.m {
                for j in 0..self.n {
                    out[j] += self.a[i * self.n + j] * r[i];
                }
            }
        }
    }

    fn identity(n: usize) -> Dense {
        let mut a = vec![0.0; n * n];
        (0..n).for_each(|i| a[i * n + i] = 1.0);
        Dense { m: n, n, a }
    }

    #[test]
    fn zero_samples_give_zero_solution() {
        let r = stomp_solve(&identity(8), &[0.0; 8], &StompConfig::default()).unwrap();
        assert_eq!(r.coefficients, vec![0.0; 8]);
        assert_eq!(r.stages_used, 0);
        assert!(r.converged);
        assert!(r.active_set.is_empty());
    }

    #[test]
    fn one_sparse_identity_recovers_in_one_stage() {
        let mut y = vec![0.0; 16];
        y[5] = -3.0;
        let r = stomp_solve(&identity(16), &y, &StompConfig::default()).unwrap();
        assert_eq!(r.stages_used, 1);
        assert_eq!(r.active_set, vec![5]);
        assert!(r.residual_history.last().unwrap() < &1e-10);
        assert!(r.converged);
    }

    #[test]
    fn exact_warm_start_converges_immediately() {
        let mut s = vec![0.0; 10];
        s[2] = 1.5;
        let cfg = StompConfig {
            initial_guess: Some(s.clone()),
            ..Default::default()
        };
        let r = stomp_solve(&identity(10), &s, &cfg).unwrap();
        assert_eq!(r.stages_used, 0);
        assert!(r.converged);
        assert_eq!(r.coefficients, s);
    }

    #[test]
    fn rejects_bad_input() {
        let op = identity(4);
        assert!(stomp_solve(&op, &[0.0; 3], &StompConfig::default()).is_err());
        assert!(matches!(
            stomp_solve(&op, &[f64::NAN, 0.0, 0.0, 0.0], &StompConfig::default()),
            Err(Error::NonFinite(_))
        ));
        let bad = StompConfig {
            threshold: 0.0,
            ..Default::default()
        };
        assert!(stomp_solve(&op, &[1.0; 4], &bad).is_err());
    }

    #[test]
    fn inconsistent_adjoint_is_detected() {
        let op = FnOperator {
            rows: 3,
            cols: 3,
            forward: |x: &[f64], out: &mut [f64]| out.copy_from_slice(x),
            adjoint: |r: &[f64], out: &mut [f64]| {
                out.copy_from_slice(r);
                out[0] *= 2.0;
            },
        };
        assert!(matches!(
            stomp_solve(&op, &[1.0, 0.0, 0.0], &StompConfig::default()),
            Err(Error::InconsistentOperators(_))
        ));
    }

    #[test]
    fn empty_support_and_orthonormal_block() {
        assert!(least_squares_on_support(&[], &[1.0, 2.0], 1e-12)
            .unwrap()
            .is_empty());
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let cols = vec![vec![h, h, 0.0], vec![h, -h, 0.0]];
        let y = [1.0, 2.0, 3.0];
        let x = least_squares_on_support(&cols, &y, 1e-12).unwrap();
        assert!((x[0] - dot(&cols[0], &y)).abs() < 1e-14);
        assert!((x[1] - dot(&cols[1], &y)).abs() < 1e-14);
        assert!(matches!(
            least_squares_on_support(&[vec![1.0], vec![2.0]], &[1.0], 0.0),
            Err(Error::SupportExceedsSamples { .. })
        ));
    }

    #[test]
    fn rank_deficient_block_uses_ridge() {
        let cols = vec![vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0]];
        let x = least_squares_on_support(&cols, &[1.0, 1.0, 0.0], 1e-12).unwrap();
        // minimum-norm direction: x ∝ (1, 2)
        assert!((x[0] + 2.0 * x[1] - 1.0).abs() < 1e-8);
        assert!((x[1] - 2.0 * x[0]).abs() < 1e-6);
    }
}
