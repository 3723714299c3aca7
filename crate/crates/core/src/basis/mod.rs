//! Discrete orthonormal Alpert multiwavelets on a group hierarchy.
//!
//! The synthesis operator is stored as a product `Ψ = Ψ_1 · Ψ_2 · … · Ψ_L` of
//! sparse orthogonal factors, `L = max(j_max, 1)`. Factor `Ψ_j` is block
//! diagonal with one dense orthogonal block per group processed at level `j`,
//! where level 1 is the finest: it carries the leaf transforms together with
//! the merges of the deepest internal groups. Each higher level merges the
//! scaling coefficients of sibling groups one step closer to the root.
//!
//! Coefficients live in slots indexed like the points. A block reads the slots
//! of its inputs and writes its outputs back into the same slots: scaling
//! outputs first, then details. Details never move again, so a detail slot
//! keeps its meaning at every truncation level.

mod poly;

pub use poly::{PolynomialSpace, RANK_TOLERANCE};

use crate::error::{Error, Result};
use crate::hierarchy::GroupHierarchy;
use crate::linalg::{axpy, DenseMatrix};
use crate::mesh::PointCloud;

const NO_BLOCK: u32 = u32::MAX;

/// Dense orthogonal block acting on a set of slots.
///
/// Synthesis reads coefficients at `slots[i]` as input coordinate `i` and
/// writes `matrix * input` back to the same slots.
#[derive(Debug, Clone)]
pub struct WaveletBlock {
    pub node: usize,
    pub slots: Vec<usize>,
    /// Number of leading columns that are scaling functions.
    pub scaling: usize,
    pub matrix: DenseMatrix,
}

impl WaveletBlock {
    pub fn scaling_slots(&self) -> &[usize] {
        &self.slots[..self.scaling]
    }

    pub fn detail_slots(&self) -> &[usize] {
        &self.slots[self.scaling..]
    }

    fn synthesize(&self, x: &mut [f64], buf: &mut Vec<f64>, out: &mut Vec<f64>) {
        let k = self.slots.len();
        buf.clear();
        buf.extend(self.slots.iter().map(|&s| x[s]));
        out.resize(k, 0.0);
        self.matrix.mul_vec(buf, out);
        for (&s, &v) in self.slots.iter().zip(out.iter()) {
            x[s] = v;
        }
    }

    fn analyze(&self, x: &mut [f64], buf: &mut Vec<f64>, out: &mut Vec<f64>) {
        let k = self.slots.len();
        buf.clear();
        buf.extend(self.slots.iter().map(|&s| x[s]));
        out.resize(k, 0.0);
        self.matrix.mul_t_vec(buf, out);
        for (&s, &v) in self.slots.iter().zip(out.iter()) {
            x[s] = v;
        }
    }
}

/// One sparse orthogonal factor `Ψ_j`.
#[derive(Debug, Clone)]
pub struct WaveletFactor {
    pub level: usize,
    pub blocks: Vec<WaveletBlock>,
    block_of: Vec<u32>,
}

impl WaveletFactor {
    /// Structural nonzeros.
    pub fn nnz(&self) -> usize {
        let covered: usize = self.blocks.iter().map(|b| b.slots.len()).sum();
        let identity = self.block_of.len() - covered;
        self.blocks
            .iter()
            .map(|b| b.slots.len().pow(2))
            .sum::<usize>()
            + identity
    }

    pub fn block_containing(&self, slot: usize) -> Option<&WaveletBlock> {
        match self.block_of[slot] {
            NO_BLOCK => None,
            b => Some(&self.blocks[b as usize]),
        }
    }

    /// Explicit `N × N` matrix, for testing on small clouds.
    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.block_of.len();
        let mut m = DenseMatrix::identity(n);
        for b in &self.blocks {
            for &s in &b.slots {
                m.set(s, s, 0.0);
            }
            for (c, &sc) in b.slots.iter().enumerate() {
                for (r, &sr) in b.slots.iter().enumerate() {
                    m.set(sr, sc, b.matrix.get(r, c));
                }
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientKind {
    Scaling,
    Detail,
}

/// Meaning of one coefficient slot of the full operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoefficientInfo {
    pub level: usize,
    pub node: usize,
    /// Column of the producing block.
    pub local: usize,
    pub kind: CoefficientKind,
}

#[derive(Debug, Clone)]
pub struct AlpertBasis {
    space: PolynomialSpace,
    factors: Vec<WaveletFactor>,
    coefficients: Vec<CoefficientInfo>,
}

/// Scaling functions of a processed group, in point space.
struct GroupScaling {
    rows: Vec<usize>,
    u: DenseMatrix,
    slots: Vec<usize>,
    /// Leaf block waiting to be folded into its parent's level-1 block.
    pending: Option<WaveletBlock>,
}

/// Builds the Alpert operator over `hierarchy` for wavelet order `order`.
///
/// The hierarchy should use `PolynomialSpace::leaf_capacity` so every leaf
/// can hold a full scaling space.
pub fn build_basis(
    cloud: &PointCloud,
    hierarchy: &GroupHierarchy,
    order: usize,
) -> Result<AlpertBasis> {
    let space = PolynomialSpace::new(order, cloud.dim())?;
    if hierarchy.num_points() != cloud.len() {
        return Err(Error::LengthMismatch {
            expected: cloud.len(),
            actual: hierarchy.num_points(),
        });
    }
    let n = cloud.len();
    let j_max = hierarchy.j_max();
    let num_levels = j_max.max(1);
    let level_of = |depth: usize| j_max.saturating_sub(depth).max(1);

    let mut blocks: Vec<Vec<WaveletBlock>> = vec![Vec::new(); num_levels];
    let mut coefficients = vec![
        CoefficientInfo {
            level: 0,
            node: usize::MAX,
            local: 0,
            kind: CoefficientKind::Detail,
        };
        n
    ];
    let mut state: Vec<Option<GroupScaling>> = (0..hierarchy.nodes().len()).map(|_| None).collect();

    for depth in (0..=j_max).rev() {
        let level = level_of(depth);
        let ids: Vec<usize> = hierarchy.nodes_at_depth(depth).collect();
        for id in ids {
            let node = hierarchy.node(id);
            let group = match node.children {
                None => {
                    let (q, r) = space.local_scaling_block(cloud, &node.point_indices, &node.bbox);
                    let block = WaveletBlock {
                        node: id,
                        slots: node.point_indices.clone(),
                        scaling: r,
                        matrix: q,
                    };
                    record_details(&mut coefficients, &block, level);
                    let folded = depth > 0 && level == 1 && level_of(depth - 1) == 1;
                    let scaling = GroupScaling {
                        rows: block.slots.clone(),
                        u: block.matrix.leading_cols(r),
                        slots: block.scaling_slots().to_vec(),
                        pending: None,
                    };
                    if folded {
                        GroupScaling {
                            pending: Some(block),
                            ..scaling
                        }
                    } else {
                        blocks[level - 1].push(block);
                        scaling
                    }
                }
                Some([l, r]) => {
                    let left = state[l].take().expect("children processed first");
                    let right = state[r].take().expect("children processed first");
                    let (merge, scaling) = merge_children(&space, cloud, id, node, left, right);
                    record_details(&mut coefficients, &merge.0, level);
                    let block = match merge.1 {
                        Some((lb, rb)) => fold_leaf_blocks(merge.0, lb, rb),
                        None => merge.0,
                    };
                    blocks[level - 1].push(block);
                    scaling
                }
            };
            state[id] = Some(group);
        }
    }

    let root = state[0].take().expect("root processed");
    for (local, &slot) in root.slots.iter().enumerate() {
        coefficients[slot] = CoefficientInfo {
            level: num_levels,
            node: 0,
            local,
            kind: CoefficientKind::Scaling,
        };
    }

    let factors = blocks
        .into_iter()
        .enumerate()
        .map(|(i, blocks)| {
            let mut block_of = vec![NO_BLOCK; n];
            for (b, block) in blocks.iter().enumerate() {
                for &s in &block.slots {
                    block_of[s] = b as u32;
                }
            }
            WaveletFactor {
                level: i + 1,
                blocks,
                block_of,
            }
        })
        .collect();

    Ok(AlpertBasis {
        space,
        factors,
        coefficients,
    })
}

fn record_details(coefficients: &mut [CoefficientInfo], block: &WaveletBlock, level: usize) {
    for (local, &slot) in block.slots.iter().enumerate().skip(block.scaling) {
        coefficients[slot] = CoefficientInfo {
            level,
            node: block.node,
            local,
            kind: CoefficientKind::Detail,
        };
    }
}

type MergeOutput = (
    (WaveletBlock, Option<(WaveletBlock, WaveletBlock)>),
    GroupScaling,
);

/// Re-expresses the parent's polynomials in the children's scaling bases and
/// splits that space into parent scaling functions and details.
fn merge_children(
    space: &PolynomialSpace,
    cloud: &PointCloud,
    id: usize,
    node: &crate::hierarchy::GroupNode,
    left: GroupScaling,
    right: GroupScaling,
) -> MergeOutput {
    let rl = left.u.cols;
    let rr = right.u.cols;
    let vl = space.vandermonde(cloud, &left.rows, &node.bbox);
    let vr = space.vandermonde(cloud, &right.rows, &node.bbox);
    let ml = left.u.transpose().matmul(&vl);
    let mr = right.u.transpose().matmul(&vr);
    let moments = DenseMatrix::from_fn(rl + rr, space.q(), |r, c| {
        if r < rl {
            ml.get(r, c)
        } else {
            mr.get(r - rl, c)
        }
    });
    let (qm, rank) = crate::linalg::pivoted_orthonormal_completion(&moments, RANK_TOLERANCE);

    let ml_rows = left.rows.len();
    let mut rows = left.rows;
    rows.extend_from_slice(&right.rows);
    let u = DenseMatrix::from_fn(rows.len(), rank, |r, c| {
        if r < ml_rows {
            dot_row(&left.u, r, qm.col(c), 0, rl)
        } else {
            dot_row(&right.u, r - ml_rows, qm.col(c), rl, rr)
        }
    });

    let mut slots = left.slots;
    slots.extend_from_slice(&right.slots);
    let merge = WaveletBlock {
        node: id,
        slots,
        scaling: rank,
        matrix: qm,
    };
    let scaling = GroupScaling {
        rows,
        u,
        slots: merge.scaling_slots().to_vec(),
        pending: None,
    };
    let pending = match (left.pending, right.pending) {
        (Some(l), Some(r)) => Some((l, r)),
        (None, None) => None,
        _ => unreachable!("siblings share a depth"),
    };
    ((merge, pending), scaling)
}

fn dot_row(u: &DenseMatrix, row: usize, coeffs: &[f64], offset: usize, len: usize) -> f64 {
    (0..len).map(|k| u.get(row, k) * coeffs[offset + k]).sum()
}

/// Composes two leaf blocks with their parent's merge into one block over
/// the parent's points: `C = blockdiag(Q_L, Q_R) · E(merge)`. Slots are
/// reordered so the merge's scaling outputs lead.
fn fold_leaf_blocks(merge: WaveletBlock, left: WaveletBlock, right: WaveletBlock) -> WaveletBlock {
    let mut natural = left.slots.clone();
    natural.extend_from_slice(&right.slots);
    let k = natural.len();
    let ml = left.slots.len();
    let position = |slot: usize| {
        natural
            .iter()
            .position(|&s| s == slot)
            .expect("merge slot in leaf")
    };

    let mut leaves = DenseMatrix::zeros(k, k);
    for c in 0..ml {
        leaves.col_mut(c)[..ml].copy_from_slice(left.matrix.col(c));
    }
    for c in 0..k - ml {
        leaves.col_mut(ml + c)[ml..].copy_from_slice(right.matrix.col(c));
    }
    let merge_pos: Vec<usize> = merge.slots.iter().map(|&s| position(s)).collect();
    let mut composite = leaves.clone();
    for (a, &pa) in merge_pos.iter().enumerate() {
        let col = composite.col_mut(pa);
        col.fill(0.0);
        for (b, &pb) in merge_pos.iter().enumerate() {
            let w = merge.matrix.get(b, a);
            if w != 0.0 {
                axpy(w, leaves.col(pb), col);
            }
        }
    }

    let lead = &merge_pos[..merge.scaling];
    let order: Vec<usize> = lead
        .iter()
        .copied()
        .chain((0..k).filter(|i| !lead.contains(i)))
        .collect();
    WaveletBlock {
        node: merge.node,
        slots: order.iter().map(|&i| natural[i]).collect(),
        scaling: merge.scaling,
        matrix: DenseMatrix::from_fn(k, k, |r, c| composite.get(order[r], order[c])),
    }
}

/// Scratch buffers for sparse operator application.
#[derive(Debug, Default)]
pub struct SparseScratch {
    values: Vec<f64>,
    marked: Vec<bool>,
    blocks: Vec<u32>,
    buf: Vec<f64>,
    out: Vec<f64>,
}

impl SparseScratch {
    pub fn new(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
            marked: vec![false; n],
            ..Default::default()
        }
    }
}

impl AlpertBasis {
    pub fn space(&self) -> &PolynomialSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Number of factors; valid levels are `1..=num_levels()`.
    pub fn num_levels(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[WaveletFactor] {
        &self.factors
    }

    pub fn factor(&self, level: usize) -> &WaveletFactor {
        &self.factors[level - 1]
    }

    /// Meaning of every slot of the full (`level = num_levels`) operator.
    pub fn coefficient_info(&self) -> &[CoefficientInfo] {
        &self.coefficients
    }

    /// Slots holding scaling coefficients of the operator truncated at `level`.
    pub fn scaling_slots(&self, level: usize) -> Result<Vec<usize>> {
        self.check_level(level)?;
        let mut slots: Vec<usize> = self.factors[level - 1]
            .blocks
            .iter()
            .flat_map(|b| b.scaling_slots().iter().copied())
            .collect();
        slots.sort_unstable();
        Ok(slots)
    }

    /// Slot order with the coarsest scaling coefficients first, then details
    /// from the coarsest level down to level 1, groups in tree order.
    pub fn coarse_to_fine_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&s| {
            let c = &self.coefficients[s];
            (
                c.kind == CoefficientKind::Detail,
                std::cmp::Reverse(c.level),
                c.node,
                c.local,
            )
        });
        order
    }

    pub fn check_level(&self, level: usize) -> Result<()> {
        if level == 0 || level > self.num_levels() {
            return Err(Error::LevelOutOfRange {
                level,
                levels: self.num_levels(),
            });
        }
        Ok(())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: len,
            });
        }
        Ok(())
    }

    /// `(Ψ_1 ⋯ Ψ_level) · s`, applying factors right to left.
    pub fn apply(&self, s: &[f64], level: usize) -> Result<Vec<f64>> {
        let mut x = s.to_vec();
        self.apply_in_place(&mut x, level)?;
        Ok(x)
    }

    pub fn apply_in_place(&self, x: &mut [f64], level: usize) -> Result<()> {
        self.check_level(level)?;
        self.check_len(x.len())?;
        let (mut buf, mut out) = (Vec::new(), Vec::new());
        for factor in self.factors[..level].iter().rev() {
            for block in &factor.blocks {
                block.synthesize(x, &mut buf, &mut out);
            }
        }
        Ok(())
    }

    /// `(Ψ_1 ⋯ Ψ_level)ᵀ · f`, applying transposed factors left to right.
    pub fn apply_transpose(&self, f: &[f64], level: usize) -> Result<Vec<f64>> {
        let mut x = f.to_vec();
        self.apply_transpose_in_place(&mut x, level)?;
        Ok(x)
    }

    pub fn apply_transpose_in_place(&self, x: &mut [f64], level: usize) -> Result<()> {
        self.check_level(level)?;
        self.check_len(x.len())?;
        let (mut buf, mut out) = (Vec::new(), Vec::new());
        for factor in &self.factors[..level] {
            for block in &factor.blocks {
                block.analyze(x, &mut buf, &mut out);
            }
        }
        Ok(())
    }

    /// Applies `Ψ_from+1 ... Ψ_to` transposed, i.e. re-expresses coefficients of
    /// the level-`from` operator in the level-`to` operator.
    pub fn lift_coefficients(&self, s: &[f64], from: usize, to: usize) -> Result<Vec<f64>> {
        self.check_level(from)?;
        self.check_level(to)?;
        self.check_len(s.len())?;
        if to < from {
            return Err(Error::InvalidArgument(format!(
                "cannot lift coefficients from level {from} down to {to}"
            )));
        }
        let mut x = s.to_vec();
        let (mut buf, mut out) = (Vec::new(), Vec::new());
        for factor in &self.factors[from..to] {
            for block in &factor.blocks {
                block.analyze(&mut x, &mut buf, &mut out);
            }
        }
        Ok(x)
    }

    /// Applies the truncated operator (or its transpose) to a sparse vector,
    /// touching only blocks reachable from its support. Returns the support
    /// (ascending) and the values on it.
    pub fn apply_sparse(
        &self,
        indices: &[usize],
        values: &[f64],
        level: usize,
        transpose: bool,
        scratch: &mut SparseScratch,
    ) -> Result<(Vec<usize>, Vec<f64>)> {
        self.check_level(level)?;
        if scratch.values.len() != self.len() {
            *scratch = SparseScratch::new(self.len());
        }
        let mut support: Vec<usize> = Vec::with_capacity(indices.len());
        for (&i, &v) in indices.iter().zip(values) {
            if !scratch.marked[i] {
                scratch.marked[i] = true;
                support.push(i);
            }
            scratch.values[i] += v;
        }
        let order: Vec<&WaveletFactor> = if transpose {
            self.factors[..level].iter().collect()
        } else {
            self.factors[..level].iter().rev().collect()
        };
        for factor in order {
            scratch.blocks.clear();
            scratch.blocks.extend(
                support
                    .iter()
                    .map(|&s| factor.block_of[s])
                    .filter(|&b| b != NO_BLOCK),
            );
            scratch.blocks.sort_unstable();
            scratch.blocks.dedup();
            for bi in 0..scratch.blocks.len() {
                let block = &factor.blocks[scratch.blocks[bi] as usize];
                for &s in &block.slots {
                    if !scratch.marked[s] {
                        scratch.marked[s] = true;
                        support.push(s);
                    }
                }
                if transpose {
                    block.analyze(&mut scratch.values, &mut scratch.buf, &mut scratch.out);
                } else {
                    block.synthesize(&mut scratch.values, &mut scratch.buf, &mut scratch.out);
                }
            }
        }
        support.sort_unstable();
        let vals = support
            .iter()
            .map(|&s| {
                scratch.marked[s] = false;
                std::mem::take(&mut scratch.values[s])
            })
            .collect();
        Ok((support, vals))
    }

    /// Column `slot` of the truncated synthesis operator.
    pub fn column(
        &self,
        slot: usize,
        level: usize,
        scratch: &mut SparseScratch,
    ) -> Result<(Vec<usize>, Vec<f64>)> {
        self.apply_sparse(&[slot], &[1.0], level, false, scratch)
    }

    /// Explicit truncated operator, for testing on small clouds.
    pub fn to_dense(&self, level: usize) -> Result<DenseMatrix> {
        self.check_level(level)?;
        let n = self.len();
        let mut m = DenseMatrix::identity(n);
        for c in 0..n {
            self.apply_in_place(m.col_mut(c), level)?;
        }
        Ok(m)
    }

    /// Largest `|(ΨᵀΨ − I)_{ab}|` of the truncated operator, computed column by
    /// column with sparse application.
    pub fn orthonormality_defect(&self, level: usize) -> Result<f64> {
        let mut scratch = SparseScratch::new(self.len());
        let mut worst: f64 = 0.0;
        for slot in 0..self.len() {
            let (idx, val) = self.column(slot, level, &mut scratch)?;
            let (back_idx, back) = self.apply_sparse(&idx, &val, level, true, &mut scratch)?;
            for (&i, &v) in back_idx.iter().zip(&back) {
                let target = if i == slot { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
        Ok(worst)
    }
}

/// Convenience: hierarchy with the order's leaf capacity, then the basis.
pub fn build_for_cloud(cloud: &PointCloud, order: usize) -> Result<(GroupHierarchy, AlpertBasis)> {
    let space = PolynomialSpace::new(order, cloud.dim())?;
    let hierarchy = crate::hierarchy::build_hierarchy(cloud, space.leaf_capacity())?;
    let basis = build_basis(cloud, &hierarchy, order)?;
    Ok((hierarchy, basis))
}
