//! Binary spatial group hierarchy built by recursive median splits.

use std::cmp::Ordering;
use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::mesh::PointCloud;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupNode {
    /// Depth in the tree; the root is at depth 0.
    pub depth: usize,
    /// Point indices owned by the group, ascending.
    pub point_indices: Vec<usize>,
    pub bbox: Vec<(f64, f64)>,
    pub children: Option<[usize; 2]>,
    pub parent: Option<usize>,
}

impl GroupNode {
    pub fn len(&self) -> usize {
        self.point_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_indices.is_empty()
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Nodes are stored breadth first, so every depth occupies a contiguous
/// run of `nodes` and node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupHierarchy {
    nodes: Vec<GroupNode>,
    j_max: usize,
    leaf_capacity: usize,
    num_points: usize,
}

impl GroupHierarchy {
    pub fn nodes(&self) -> &[GroupNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &GroupNode {
        &self.nodes[id]
    }

    pub fn root(&self) -> &GroupNode {
        &self.nodes[0]
    }

    /// Depth of the deepest node.
    pub fn j_max(&self) -> usize {
        self.j_max
    }

    pub fn leaf_capacity(&self) -> usize {
        self.leaf_capacity
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    /// Node ids at a given depth, in tree order.
    pub fn nodes_at_depth(&self, depth: usize) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.depth == depth)
            .map(|(i, _)| i)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &GroupNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }
}

/// Splits every group with more than `leaf_capacity` points at the median of
/// its longest bounding-box axis. The lower `ceil(m / 2)` points, ordered by
/// (coordinate, index), go to the left child.
pub fn build_hierarchy(cloud: &PointCloud, leaf_capacity: usize) -> Result<GroupHierarchy> {
    if cloud.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if leaf_capacity == 0 {
        return Err(Error::InvalidArgument(
            "leaf capacity must be at least 1".into(),
        ));
    }
    let all: Vec<usize> = (0..cloud.len()).collect();
    let mut nodes = vec![GroupNode {
        depth: 0,
        bbox: cloud.bounding_box(&all),
        point_indices: all,
        children: None,
        parent: None,
    }];
    let mut queue = VecDeque::from([0usize]);
    let mut j_max = 0;

    while let Some(id) = queue.pop_front() {
        let node = &nodes[id];
        j_max = j_max.max(node.depth);
        if node.len() <= leaf_capacity {
            continue;
        }
        let axis = longest_axis(&node.bbox);
        let mut order = node.point_indices.clone();
        order.sort_by(|&a, &b| {
            cloud.point(a)[axis]
                .partial_cmp(&cloud.point(b)[axis])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        let half = order.len().div_ceil(2);
        let depth = node.depth + 1;
        let mut right = order.split_off(half);
        let mut left = order;
        left.sort_unstable();
        right.sort_unstable();

        let first = nodes.len();
        for indices in [left, right] {
            nodes.push(GroupNode {
                depth,
                bbox: cloud.bounding_box(&indices),
                point_indices: indices,
                children: None,
                parent: Some(id),
            });
        }
        nodes[id].children = Some([first, first + 1]);
        queue.extend([first, first + 1]);
    }

    Ok(GroupHierarchy {
        nodes,
        j_max,
        leaf_capacity,
        num_points: cloud.len(),
    })
}

fn longest_axis(bbox: &[(f64, f64)]) -> usize {
    let mut best = 0;
    for (axis, &(lo, hi)) in bbox.iter().enumerate() {
        let (blo, bhi) = bbox[best];
        if hi - lo > bhi - blo {
            best = axis;
        }
    }
    best
}
