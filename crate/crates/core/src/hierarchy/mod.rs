//! Binary agent hierarchy built by Ward agglomeration of feature states.

mod complexity;

pub use complexity::{expected_active, simulate_active, SimulationResult};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentNode {
    pub id: NodeId,
    /// `[left, right]` for internal nodes, left being the older cluster.
    pub children: Option<[NodeId; 2]>,
    pub feature: Option<usize>,
    /// Sorted feature indices covered by this node.
    pub members: Vec<usize>,
    pub merge_height: f64,
}

impl AgentNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Leaves are ids `0..n` (leaf `i` owns feature `i`); internal nodes are
/// numbered `n..2n−1` in merge order, so the root is `2n − 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentTree {
    pub nodes: Vec<AgentNode>,
    pub root: NodeId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Merge {
    pub a: NodeId,
    pub b: NodeId,
    pub new: NodeId,
}

impl AgentTree {
    pub fn n_features(&self) -> usize {
        self.nodes.len().div_ceil(2)
    }

    pub fn node(&self, id: NodeId) -> &AgentNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Merge sequence in creation order.
    pub fn merges(&self) -> Vec<Merge> {
        self.nodes
            .iter()
            .filter_map(|n| n.children.map(|[a, b]| Merge { a, b, new: n.id }))
            .collect()
    }

    /// Parent of every node (`None` for the root).
    pub fn parents(&self) -> Vec<Option<NodeId>> {
        let mut p = vec![None; self.nodes.len()];
        for n in &self.nodes {
            if let Some([a, b]) = n.children {
                p[a] = Some(n.id);
                p[b] = Some(n.id);
            }
        }
        p
    }

    /// Depth of every node, root at depth 1.
    pub fn depths(&self) -> Vec<usize> {
        let mut d = vec![0; self.nodes.len()];
        let mut stack = vec![(self.root, 1)];
        while let Some((id, depth)) = stack.pop() {
            d[id] = depth;
            if let Some([a, b]) = self.nodes[id].children {
                stack.push((a, depth + 1));
                stack.push((b, depth + 1));
            }
        }
        d
    }

    /// Subtree height of every node, counting levels (leaf = 1).
    pub fn heights(&self) -> Vec<usize> {
        // children always have smaller ids than their parent
        let mut h = vec![1; self.nodes.len()];
        for n in &self.nodes {
            if let Some([a, b]) = n.children {
                h[n.id] = 1 + h[a].max(h[b]);
            }
        }
        h
    }

    /// Perfect binary tree with `height` levels (`2^height − 1` nodes).
    pub fn perfect(height: usize) -> Result<Self> {
        if height == 0 || height > 30 {
            return Err(Error::InvalidArgument(format!("unsupported perfect-tree height {height}")));
        }
        let n = 1usize << (height - 1);
        let mut nodes: Vec<AgentNode> = (0..n)
            .map(|i| AgentNode {
                id: i,
                children: None,
                feature: Some(i),
                members: vec![i],
                merge_height: 0.0,
            })
            .collect();
        let mut level: Vec<NodeId> = (0..n).collect();
        let mut next = n;
        let mut height_value = 0.0;
        while level.len() > 1 {
            height_value += 1.0;
            let mut upper = Vec::with_capacity(level.len() / 2);
            for pair in level.chunks(2) {
                let (a, b) = (pair[0], pair[1]);
                let mut members = nodes[a].members.clone();
                members.extend_from_slice(&nodes[b].members);
                nodes.push(AgentNode {
                    id: next,
                    children: Some([a, b]),
                    feature: None,
                    members,
                    merge_height: height_value,
                });
                upper.push(next);
                next += 1;
            }
            level = upper;
        }
        Ok(Self {
            root: nodes.len() - 1,
            nodes,
        })
    }

    /// Checks the structural invariants; returns a description of the
    /// first violation.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let total = self.nodes.len();
        if total == 0 || total.is_multiple_of(2) {
            return Err(format!("{total} nodes is not 2n − 1"));
        }
        let n = self.n_features();
        let leaves = self.nodes.iter().filter(|x| x.is_leaf()).count();
        if leaves != n {
            return Err(format!("{leaves} leaves for {total} nodes"));
        }
        for node in &self.nodes {
            match node.children {
                None => {
                    if node.feature.is_none() || node.members != vec![node.feature.unwrap()] {
                        return Err(format!("leaf {} has members {:?}", node.id, node.members));
                    }
                }
                Some([a, b]) => {
                    let mut union = self.nodes[a].members.clone();
                    union.extend_from_slice(&self.nodes[b].members);
                    union.sort_unstable();
                    if union != node.members || union.windows(2).any(|w| w[0] == w[1]) {
                        return Err(format!("node {} is not the disjoint union of its children", node.id));
                    }
                    for c in [a, b] {
                        if self.nodes[c].members.len() >= node.members.len() {
                            return Err(format!("child {c} not strictly nested in {}", node.id));
                        }
                        if self.nodes[c].merge_height > node.merge_height {
                            return Err(format!("merge height decreases from {c} to {}", node.id));
                        }
                    }
                }
            }
        }
        if self.nodes[self.root].members != (0..n).collect::<Vec<_>>() {
            return Err("root does not cover every feature".into());
        }
        Ok(())
    }
}

/// Ward merge cost between two clusters given their sizes and centroids.
pub fn ward_distance(size_a: usize, mean_a: &[f64], size_b: usize, mean_b: &[f64]) -> Result<f64> {
    if mean_a.len() != mean_b.len() {
        return Err(Error::DimensionMismatch {
            expected: mean_a.len(),
            actual: mean_b.len(),
            context: "cluster centroids".into(),
        });
    }
    if size_a == 0 || size_b == 0 {
        return Err(Error::InvalidArgument("cluster sizes must be at least 1".into()));
    }
    let (na, nb) = (size_a as f64, size_b as f64);
    let sq: f64 = mean_a.iter().zip(mean_b).map(|(x, y)| (x - y).powi(2)).sum();
    Ok(na * nb / (na + nb) * sq)
}

/// Agglomerates `states` with Ward linkage into a binary agent tree.
///
/// Pairwise costs are kept in a dense matrix and updated with the
/// Lance–Williams recurrence. Equal costs resolve to the lexicographically
/// smallest `(older id, newer id)` pair.
pub fn build_hierarchy(states: &[Vec<f64>]) -> Result<AgentTree> {
    let n = states.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 features to cluster, got {n}")));
    }
    let dim = states[0].len();
    if let Some(bad) = states.iter().find(|s| s.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.len(),
            context: "hybrid states must share one length".into(),
        });
    }

    let total = 2 * n - 1;
    let mut nodes: Vec<AgentNode> = (0..n)
        .map(|i| AgentNode {
            id: i,
            children: None,
            feature: Some(i),
            members: vec![i],
            merge_height: 0.0,
        })
        .collect();
    // dist[i][j] for active ids i < j; ids up to 2n − 2.
    let mut dist = vec![vec![f64::INFINITY; total]; total];
    for i in 0..n {
        for j in i + 1..n {
            dist[i][j] = ward_distance(1, &states[i], 1, &states[j])?;
        }
    }
    let mut active: Vec<NodeId> = (0..n).collect();
    let mut size = vec![0usize; total];
    size[..n].fill(1);

    for new in n..total {
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                let d = dist[a][b];
                if d < best.0 || (d == best.0 && (a, b) < (best.1, best.2)) {
                    best = (d, a, b);
                }
            }
        }
        let (d_ab, a, b) = best;
        active.retain(|&x| x != a && x != b);
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for &c in &active {
            let nc = size[c] as f64;
            let d_ac = dist[a.min(c)][a.max(c)];
            let d_bc = dist[b.min(c)][b.max(c)];
            dist[c][new] = ((na + nc) * d_ac + (nb + nc) * d_bc - nc * d_ab) / (na + nb + nc);
        }
        size[new] = size[a] + size[b];
        let mut members = nodes[a].members.clone();
        members.extend_from_slice(&nodes[b].members);
        members.sort_unstable();
        nodes.push(AgentNode {
            id: new,
            children: Some([a, b]),
            feature: None,
            members,
            merge_height: d_ab,
        });
        active.push(new);
    }
    Ok(AgentTree {
        root: total - 1,
        nodes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeDiagnostics {
    /// Mean over all nodes of (left height − right height); leaves add 0.
    pub balance_factor: f64,
    /// Levels from root to deepest leaf (single node = 1).
    pub height: usize,
    pub node_count: usize,
}

pub fn diagnostics(tree: &AgentTree) -> TreeDiagnostics {
    let h = tree.heights();
    let diff_sum: i64 = tree
        .nodes
        .iter()
        .filter_map(|n| n.children)
        .map(|[l, r]| h[l] as i64 - h[r] as i64)
        .sum();
    TreeDiagnostics {
        balance_factor: diff_sum as f64 / tree.nodes.len() as f64,
        height: h[tree.root],
        node_count: tree.nodes.len(),
    }
}

/// JSON form of a tree: nodes plus balance factor and height.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeExport {
    pub nodes: Vec<ExportNode>,
    pub root: NodeId,
    pub balance_factor: f64,
    pub height: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportNode {
    pub id: NodeId,
    pub members: Vec<usize>,
    pub children: Option<[NodeId; 2]>,
    pub feature: Option<usize>,
    pub merge_height: f64,
}

impl From<&AgentTree> for TreeExport {
    fn from(tree: &AgentTree) -> Self {
        let d = diagnostics(tree);
        Self {
            nodes: tree
                .nodes
                .iter()
                .map(|n| ExportNode {
                    id: n.id,
                    members: n.members.clone(),
                    children: n.children,
                    feature: n.feature,
                    merge_height: n.merge_height,
                })
                .collect(),
            root: tree.root,
            balance_factor: d.balance_factor,
            height: d.height,
        }
    }
}

impl TreeExport {
    pub fn to_tree(&self) -> AgentTree {
        AgentTree {
            nodes: self
                .nodes
                .iter()
                .map(|n| AgentNode {
                    id: n.id,
                    children: n.children,
                    feature: n.feature,
                    members: n.members.clone(),
                    merge_height: n.merge_height,
                })
                .collect(),
            root: self.root,
        }
    }
}
