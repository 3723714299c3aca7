//! Offline reconstruction: `A = Φ Ψ^(j)`, StOMP per detail level, CLOD warm
//! starts, partition assembly and error metrics.

use std::fmt::Write as _;
use std::time::Instant;

use crate::basis::{build_basis, AlpertBasis, PolynomialSpace, SparseScratch};
use crate::bundle::SampleBundle;
use crate::error::{Error, Result};
use crate::hierarchy::{build_hierarchy, GroupHierarchy};
use crate::linalg::norm2;
use crate::mesh::{Partition, PointCloud};
use crate::sampler::SignMatrix;
use crate::stomp::{stomp_solve, LinearOperator, StompConfig, StompResult};

/// A sampling matrix usable during reconstruction.
pub trait SamplingMatrix: Send + Sync {
    fn samples(&self) -> usize;
    fn points(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn apply_sparse(&self, indices: &[usize], values: &[f64], out: &mut [f64]);
    fn apply_transpose(&self, v: &[f64], out: &mut [f64]);
}

impl SamplingMatrix for SignMatrix {
    fn samples(&self) -> usize {
        self.spec().samples
    }
    fn points(&self) -> usize {
        self.spec().points
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        SignMatrix::apply(self, x, out)
    }
    fn apply_sparse(&self, indices: &[usize], values: &[f64], out: &mut [f64]) {
        SignMatrix::apply_sparse(self, indices, values, out)
    }
    fn apply_transpose(&self, v: &[f64], out: &mut [f64]) {
        SignMatrix::apply_transpose(self, v, out)
    }
}

/// `M = N` identity sampling, for exercising the pipeline on fully
/// determined systems.
#[derive(Debug, Clone, Copy)]
pub struct IdentitySampler(pub usize);

impl SamplingMatrix for IdentitySampler {
    fn samples(&self) -> usize {
        self.0
    }
    fn points(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x)
    }
    fn apply_sparse(&self, indices: &[usize], values: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (&i, &v) in indices.iter().zip(values) {
            out[i] += v;
        }
    }
    fn apply_transpose(&self, v: &[f64], out: &mut [f64]) {
        out.copy_from_slice(v)
    }
}

/// `A = Φ Ψ^(level)` as an implicit operator.
pub struct SampledWavelets<'a> {
    pub sampler: &'a dyn SamplingMatrix,
    pub basis: &'a AlpertBasis,
    pub level: usize,
}

impl LinearOperator for SampledWavelets<'_> {
    fn nrows(&self) -> usize {
        self.sampler.samples()
    }

    fn ncols(&self) -> usize {
        self.basis.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let mut f = x.to_vec();
        self.basis
            .apply_in_place(&mut f, self.level)
            .expect("level validated at construction");
        self.sampler.apply(&f, out);
    }

    fn apply_transpose(&self, r: &[f64], out: &mut [f64]) {
        self.sampler.apply_transpose(r, out);
        self.basis
            .apply_transpose_in_place(out, self.level)
            .expect("level validated at construction");
    }

    fn columns(&self, cols: &[usize], out: &mut [Vec<f64>]) {
        let n = self.basis.len();
        let m = self.sampler.samples();
        let mut scratch = SparseScratch::new(n);
        let mut dense = vec![0.0; n];
        for (&c, col) in cols.iter().zip(out.iter_mut()) {
            col.resize(m, 0.0);
            let (idx, val) = self
                .basis
                .column(c, self.level, &mut scratch)
                .expect("level validated at construction");
            // a dense pass is cheaper than bit lookups once the support is wide
            if idx.len() * 8 > n {
                for (&i, &v) in idx.iter().zip(&val) {
                    dense[i] = v;
                }
                self.sampler.apply(&dense, col);
                idx.iter().for_each(|&i| dense[i] = 0.0);
            } else {
                self.sampler.apply_sparse(&idx, &val, col);
            }
        }
    }
}

/// Which truncation of the wavelet operator to reconstruct with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetailLevel {
    Full,
    At(usize),
}

impl std::str::FromStr for DetailLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(DetailLevel::Full),
            _ => s.parse::<usize>().map(DetailLevel::At).map_err(|_| {
                Error::InvalidArgument(format!("level must be an integer or `full`, got `{s}`"))
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LevelSolution {
    pub level: usize,
    pub field: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub stomp: StompResult,
    pub seconds: f64,
}

/// Everything rebuilt offline from the mesh, the wavelet order and the seed.
pub struct Reconstructor {
    hierarchy: GroupHierarchy,
    basis: AlpertBasis,
    sampler: Box<dyn SamplingMatrix>,
    samples: Vec<f64>,
}

impl Reconstructor {
    pub fn new(bundle: &SampleBundle, cloud: &PointCloud, order: usize) -> Result<Self> {
        bundle.validate()?;
        if bundle.points != cloud.len() {
            return Err(Error::LengthMismatch {
                expected: cloud.len(),
                actual: bundle.points,
            });
        }
        let sampler = SignMatrix::new(bundle.spec()?);
        Self::with_sampler(Box::new(sampler), bundle.samples.clone(), cloud, order)
    }

    /// Uses an arbitrary sampling matrix in place of the bundle's seed.
    pub fn with_sampler(
        sampler: Box<dyn SamplingMatrix>,
        samples: Vec<f64>,
        cloud: &PointCloud,
        order: usize,
    ) -> Result<Self> {
        if sampler.points() != cloud.len() {
            return Err(Error::LengthMismatch {
                expected: cloud.len(),
                actual: sampler.points(),
            });
        }
        if sampler.samples() != samples.len() {
            return Err(Error::LengthMismatch {
                expected: sampler.samples(),
                actual: samples.len(),
            });
        }
        let space = PolynomialSpace::new(order, cloud.dim())?;
        let hierarchy = build_hierarchy(cloud, space.leaf_capacity())?;
        let basis = build_basis(cloud, &hierarchy, order)?;
        Ok(Self {
            hierarchy,
            basis,
            sampler,
            samples,
        })
    }

    pub fn hierarchy(&self) -> &GroupHierarchy {
        &self.hierarchy
    }

    pub fn basis(&self) -> &AlpertBasis {
        &self.basis
    }

    pub fn num_levels(&self) -> usize {
        self.basis.num_levels()
    }

    pub fn resolve(&self, level: DetailLevel) -> Result<usize> {
        let j = match level {
            DetailLevel::Full => self.num_levels(),
            DetailLevel::At(j) => j,
        };
        self.basis.check_level(j)?;
        Ok(j)
    }

    pub fn operator(&self, level: usize) -> Result<SampledWavelets<'_>> {
        self.basis.check_level(level)?;
        Ok(SampledWavelets {
            sampler: self.sampler.as_ref(),
            basis: &self.basis,
            level,
        })
    }

    /// Solves `y = Φ Ψ^(level) s`; `config.initial_guess` warm-starts StOMP.
    pub fn solve_level(&self, level: usize, config: &StompConfig) -> Result<LevelSolution> {
        let start = Instant::now();
        let op = self.operator(level)?;
        let stomp = stomp_solve(&op, &self.samples, config)?;
        let field = self.basis.apply(&stomp.coefficients, level)?;
        Ok(LevelSolution {
            level,
            field,
            coefficients: stomp.coefficients.clone(),
            stomp,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Re-expresses a level-`from` solution in the level-`to` operator. Only
    /// the largest entries are kept so the seeded support stays below half
    /// the sample count.
    pub fn warm_start(&self, coefficients: &[f64], from: usize, to: usize) -> Result<Vec<f64>> {
        let mut lifted = self.basis.lift_coefficients(coefficients, from, to)?;
        let budget = self.samples.len() / 2;
        let mut nonzero: Vec<usize> = (0..lifted.len()).filter(|&i| lifted[i] != 0.0).collect();
        if nonzero.len() > budget {
            nonzero.sort_by(|&a, &b| lifted[b].abs().total_cmp(&lifted[a].abs()).then(a.cmp(&b)));
            for &i in &nonzero[budget..] {
                lifted[i] = 0.0;
            }
        }
        Ok(lifted)
    }
}

pub fn reconstruct_at_level(
    bundle: &SampleBundle,
    cloud: &PointCloud,
    order: usize,
    level: DetailLevel,
    warm_start: Option<&[f64]>,
    config: &StompConfig,
) -> Result<LevelSolution> {
    let rec = Reconstructor::new(bundle, cloud, order)?;
    let j = rec.resolve(level)?;
    let config = StompConfig {
        initial_guess: warm_start.map(<[f64]>::to_vec),
        ..config.clone()
    };
    rec.solve_level(j, &config)
}

pub fn reconstruct_full(
    bundle: &SampleBundle,
    cloud: &PointCloud,
    order: usize,
    config: &StompConfig,
) -> Result<LevelSolution> {
    reconstruct_at_level(bundle, cloud, order, DetailLevel::Full, None, config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelRecord {
    pub level: usize,
    pub error: Option<f64>,
    pub seconds: f64,
    pub stages: usize,
    pub support: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct ReconstructionReport {
    pub field: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub levels: Vec<LevelRecord>,
    /// Residual norms of the last solve, starting with `‖r_0‖`.
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

impl ReconstructionReport {
    /// CSV with columns `level,error,seconds,stages`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,error,seconds,stages\n");
        for r in &self.levels {
            let err = r.error.map(format_f64).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{}",
                r.level,
                err,
                format_f64(r.seconds),
                r.stages
            )
            .unwrap();
        }
        out
    }
}

/// Float formatting used by every CSV report: 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Levels visited by a CLOD pass: `1, 1 + stride, …`, always ending at `top`.
pub fn clod_levels(top: usize, stride: usize) -> Result<Vec<usize>> {
    if stride == 0 {
        return Err(Error::InvalidArgument(
            "CLOD stride must be at least 1".into(),
        ));
    }
    let mut levels: Vec<usize> = (1..=top).step_by(stride).collect();
    if levels.last() != Some(&top) {
        levels.push(top);
    }
    Ok(levels)
}

/// Level-by-level reconstruction. With `clod`, each level warm-starts from
/// the previous level's solution; otherwise every level starts from zero.
pub fn reconstruct_levels(
    rec: &Reconstructor,
    levels: &[usize],
    clod: bool,
    config: &StompConfig,
    reference: Option<&[f64]>,
) -> Result<ReconstructionReport> {
    let mut records = Vec::with_capacity(levels.len());
    let mut previous: Option<(usize, Vec<f64>)> = None;
    let mut last = None;
    for &level in levels {
        let start = Instant::now();
        let initial_guess = match (&previous, clod) {
            (Some((from, coeffs)), true) => Some(rec.warm_start(coeffs, *from, level)?),
            _ => None,
        };
        let cfg = StompConfig {
            initial_guess,
            ..config.clone()
        };
        let sol = rec.solve_level(level, &cfg)?;
        let error = match reference {
            Some(f) => Some(error_norm(f, &sol.field)?.value),
            None => None,
        };
        records.push(LevelRecord {
            level,
            error,
            seconds: start.elapsed().as_secs_f64(),
            stages: sol.stomp.stages_used,
            support: sol.stomp.active_set.len(),
            converged: sol.stomp.converged,
        });
        previous = Some((level, sol.coefficients.clone()));
        last = Some(sol);
    }
    let last = last.ok_or_else(|| Error::InvalidArgument("no levels requested".into()))?;
    Ok(ReconstructionReport {
        converged: last.stomp.converged,
        residual_history: last.stomp.residual_history,
        field: last.field,
        coefficients: last.coefficients,
        levels: records,
    })
}

pub fn reconstruct_clod(
    bundle: &SampleBundle,
    cloud: &PointCloud,
    order: usize,
    stride: usize,
    config: &StompConfig,
    reference: Option<&[f64]>,
) -> Result<ReconstructionReport> {
    let rec = Reconstructor::new(bundle, cloud, order)?;
    let levels = clod_levels(rec.num_levels(), stride)?;
    reconstruct_levels(&rec, &levels, true, config, reference)
}

#[derive(Debug, Clone)]
pub struct PartitionSolution {
    pub rank_id: u32,
    pub indices: std::ops::Range<usize>,
    pub solution: LevelSolution,
}

#[derive(Debug, Clone)]
pub struct PartitionedReconstruction {
    pub field: Vec<f64>,
    pub partitions: Vec<PartitionSolution>,
}

/// Reconstructs each partition from its own bundle on its own sub-cloud and
/// writes the results into the global vector.
pub fn reconstruct_partitioned(
    bundles: &[SampleBundle],
    cloud: &PointCloud,
    partitions: &[Partition],
    order: usize,
    level: DetailLevel,
    config: &StompConfig,
) -> Result<PartitionedReconstruction> {
    let jobs = match_bundles(bundles, partitions)?;
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(jobs.len())
        .max(1);
    let chunk = jobs.len().div_ceil(workers);

    let results: Vec<Result<PartitionSolution>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|batch| {
                scope.spawn(move || {
                    batch
                        .iter()
                        .map(|&(bundle, part)| {
                            solve_partition(bundle, part, cloud, order, level, config)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("partition worker panicked"))
            .collect()
    });

    let mut field = vec![0.0; cloud.len()];
    let mut solved = Vec::with_capacity(results.len());
    for r in results {
        let p = r?;
        field[p.indices.clone()].copy_from_slice(&p.solution.field);
        solved.push(p);
    }
    solved.sort_by_key(|p| p.rank_id);
    Ok(PartitionedReconstruction {
        field,
        partitions: solved,
    })
}

fn solve_partition(
    bundle: &SampleBundle,
    part: &Partition,
    cloud: &PointCloud,
    order: usize,
    level: DetailLevel,
    config: &StompConfig,
) -> Result<PartitionSolution> {
    let sub = cloud.slice(part.indices.clone())?;
    let rec = Reconstructor::new(bundle, &sub, order)?;
    let j = rec.resolve(level)?;
    Ok(PartitionSolution {
        rank_id: part.rank_id,
        indices: part.indices.clone(),
        solution: rec.solve_level(j, config)?,
    })
}

fn match_bundles<'a>(
    bundles: &'a [SampleBundle],
    partitions: &'a [Partition],
) -> Result<Vec<(&'a SampleBundle, &'a Partition)>> {
    if bundles.len() != partitions.len() {
        return Err(Error::PartitionMismatch(format!(
            "{} bundles for {} partitions",
            bundles.len(),
            partitions.len()
        )));
    }
    let mut jobs = Vec::with_capacity(partitions.len());
    for part in partitions {
        let mut matching = bundles.iter().filter(|b| b.rank_id == part.rank_id);
        let bundle = matching
            .next()
            .ok_or_else(|| Error::PartitionMismatch(format!("missing rank {}", part.rank_id)))?;
        if matching.next().is_some() {
            return Err(Error::PartitionMismatch(format!(
                "duplicate rank {}",
                part.rank_id
            )));
        }
        if bundle.points != part.len() {
            return Err(Error::PartitionMismatch(format!(
                "rank {} bundle has {} points, partition has {}",
                part.rank_id,
                bundle.points,
                part.len()
            )));
        }
        jobs.push((bundle, part));
    }
    Ok(jobs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorm {
    pub value: f64,
    /// False when the reference is identically zero and `value` is the
    /// absolute norm of the difference.
    pub relative: bool,
}

/// `‖f − f_r‖₂ / ‖f‖₂`.
pub fn error_norm(reference: &[f64], reconstructed: &[f64]) -> Result<ErrorNorm> {
    if reference.len() != reconstructed.len() {
        return Err(Error::LengthMismatch {
            expected: reference.len(),
            actual: reconstructed.len(),
        });
    }
    let diff = reference
        .iter()
        .zip(reconstructed)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = norm2(reference);
    Ok(if scale > 0.0 {
        ErrorNorm {
            value: diff / scale,
            relative: true,
        }
    } else {
        ErrorNorm {
            value: diff,
            relative: false,
        }
    })
}
