use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node of a [`ClusterTree`]; covers the half-open index range `start..end`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterNode {
    pub start: usize,
    pub end: usize,
    pub children: Option<(usize, usize)>,
    pub parent: Option<usize>,
    pub level: usize,
}

impl ClusterNode {
    #[inline]
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Binary tree of contiguous index clusters, numbered in postorder so that
/// children always precede their parent and the root is the last node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterTree {
    n: usize,
    leaf_size: usize,
    nodes: Vec<ClusterNode>,
}

impl ClusterTree {
    /// Recursive bisection; the left half of a span gets `ceil(span / 2)`
    /// indices. Spans no wider than `leaf_size` become leaves.
    pub fn new(n: usize, leaf_size: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension("cluster tree needs n >= 1".into()));
        }
        if leaf_size == 0 {
            return Err(Error::InvalidParameter(
                "leaf_size must be at least 1".into(),
            ));
        }
        let mut nodes = Vec::new();
        build(&mut nodes, 0, n, 0, leaf_size);
        let root = nodes.len() - 1;
        for i in 0..nodes.len() {
            if let Some((a, b)) = nodes[i].children {
                nodes[a].parent = Some(i);
                nodes[b].parent = Some(i);
            }
        }
        debug_assert!(nodes[root].parent.is_none());
        Ok(Self {
            n,
            leaf_size,
            nodes,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    #[inline]
    pub fn nodes(&self) -> &[ClusterNode] {
        &self.nodes
    }

    #[inline]
    pub fn node(&self, i: usize) -> &ClusterNode {
        &self.nodes[i]
    }

    #[inline]
    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf())
    }

    /// Node ids at `level`, in postorder.
    pub fn level_nodes(&self, level: usize) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].level == level)
            .collect()
    }
}

fn build(
    nodes: &mut Vec<ClusterNode>,
    start: usize,
    end: usize,
    level: usize,
    leaf_size: usize,
) -> usize {
    let span = end - start;
    let children = if span > leaf_size {
        let mid = start + span.div_ceil(2);
        let a = build(nodes, start, mid, level + 1, leaf_size);
        let b = build(nodes, mid, end, level + 1, leaf_size);
        Some((a, b))
    } else {
        None
    };
    nodes.push(ClusterNode {
        start,
        end,
        children,
        parent: None,
        level,
    });
    nodes.len() - 1
}
