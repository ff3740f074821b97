//! Bipartite user-item graph and the seeded uniform random-walk sampler.

use rand::Rng;

use crate::data::Interaction;
use crate::embedding::EmbeddingStore;
use crate::error::{GnpError, Result};
use crate::gwarmer::LayerReps;
use crate::rng::GnpRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    User,
    Item,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::User => Side::Item,
            Side::Item => Side::User,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef {
    pub side: Side,
    pub id: u32,
}

impl NodeRef {
    pub fn user(id: u32) -> Self {
        NodeRef {
            side: Side::User,
            id,
        }
    }

    pub fn item(id: u32) -> Self {
        NodeRef {
            side: Side::Item,
            id,
        }
    }
}

/// Compressed adjacency for one side of the graph.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Csr {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Csr {
    fn build(n: usize, edges: impl Iterator<Item = (u32, u32)> + Clone) -> Self {
        let mut offsets = vec![0usize; n + 1];
        for (s, _) in edges.clone() {
            offsets[s as usize + 1] += 1;
        }
        for k in 0..n {
            offsets[k + 1] += offsets[k];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0u32; offsets[n]];
        for (s, t) in edges {
            targets[fill[s as usize]] = t;
            fill[s as usize] += 1;
        }
        for k in 0..n {
            targets[offsets[k]..offsets[k + 1]].sort_unstable();
        }
        Csr { offsets, targets }
    }

    fn row(&self, k: u32) -> &[u32] {
        &self.targets[self.offsets[k as usize]..self.offsets[k as usize + 1]]
    }
}

/// Symmetric bipartite adjacency. Neighbor lists are sorted and
/// duplicate-free; isolated nodes are allowed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionGraph {
    users: Csr,
    items: Csr,
}

impl InteractionGraph {
    pub fn n_users(&self) -> usize {
        self.users.offsets.len() - 1
    }

    pub fn n_items(&self) -> usize {
        self.items.offsets.len() - 1
    }

    pub fn user_neighbors(&self, u: u32) -> &[u32] {
        self.users.row(u)
    }

    pub fn item_neighbors(&self, i: u32) -> &[u32] {
        self.items.row(i)
    }

    pub fn neighbors(&self, n: NodeRef) -> &[u32] {
        match n.side {
            Side::User => self.user_neighbors(n.id),
            Side::Item => self.item_neighbors(n.id),
        }
    }

    pub fn degree(&self, n: NodeRef) -> usize {
        self.neighbors(n).len()
    }

    pub fn n_edges(&self) -> usize {
        self.users.targets.len()
    }

    pub fn contains(&self, n: NodeRef) -> bool {
        match n.side {
            Side::User => (n.id as usize) < self.n_users(),
            Side::Item => (n.id as usize) < self.n_items(),
        }
    }
}

pub fn build_graph(
    interactions: &[Interaction],
    n_users: usize,
    n_items: usize,
) -> Result<InteractionGraph> {
    let mut edges: Vec<(u32, u32)> = Vec::with_capacity(interactions.len());
    for x in interactions {
        if x.user as usize >= n_users || x.item as usize >= n_items {
            return Err(GnpError::Invalid(format!(
                "edge ({}, {}) outside {n_users}x{n_items}",
                x.user, x.item
            )));
        }
        edges.push((x.user, x.item));
    }
    edges.sort_unstable();
    edges.dedup();
    Ok(InteractionGraph {
        users: Csr::build(n_users, edges.iter().copied()),
        items: Csr::build(n_items, edges.iter().map(|&(u, i)| (i, u))),
    })
}

/// `S` walks of `K` steps (so `K + 1` nodes each) from one origin.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalkSet {
    origin: NodeRef,
    samples: usize,
    steps: usize,
    nodes: Vec<NodeRef>,
}

impl WalkSet {
    /// Assembles a walk set from explicit walks; each must have the same
    /// length and start at `origin`.
    pub fn from_walks(origin: NodeRef, walks: Vec<Vec<NodeRef>>) -> Result<Self> {
        let len = walks.first().map_or(0, Vec::len);
        if len == 0 || walks.iter().any(|w| w.len() != len || w[0] != origin) {
            return Err(GnpError::Invalid(
                "walks must be non-empty, equal length, and start at the origin".into(),
            ));
        }
        Ok(WalkSet {
            origin,
            samples: walks.len(),
            steps: len - 1,
            nodes: walks.into_iter().flatten().collect(),
        })
    }

    pub fn origin(&self) -> NodeRef {
        self.origin
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn walk(&self, s: usize) -> &[NodeRef] {
        let len = self.steps + 1;
        &self.nodes[s * len..(s + 1) * len]
    }

    pub fn walks(&self) -> impl Iterator<Item = &[NodeRef]> {
        self.nodes.chunks_exact(self.steps + 1)
    }
}

/// Uniform random walks with revisits allowed. A node with no neighbors
/// holds the walk in place for the remaining steps.
pub fn sample_walks(
    graph: &InteractionGraph,
    origin: NodeRef,
    samples: usize,
    steps: usize,
    rng: &mut GnpRng,
) -> Result<WalkSet> {
    if !graph.contains(origin) {
        return Err(GnpError::Invalid(format!("origin {origin:?} not in graph")));
    }
    if samples == 0 || steps == 0 {
        return Err(GnpError::Invalid(
            "walk count and length must be >= 1".into(),
        ));
    }
    let mut nodes = Vec::with_capacity(samples * (steps + 1));
    for _ in 0..samples {
        let mut cur = origin;
        nodes.push(cur);
        for _ in 0..steps {
            let nbrs = graph.neighbors(cur);
            if !nbrs.is_empty() {
                cur = NodeRef {
                    side: cur.side.other(),
                    id: nbrs[rng.random_range(0..nbrs.len())],
                };
            }
            nodes.push(cur);
        }
    }
    Ok(WalkSet {
        origin,
        samples,
        steps,
        nodes,
    })
}

/// The infinite-sample limit of walk pooling: layer `k` is the expected
/// embedding of the walk's step-`k` node, by propagating the walk
/// distribution (with the same degree-0 hold rule).
pub fn exact_layer_means(
    graph: &InteractionGraph,
    origin: NodeRef,
    steps: usize,
    embeddings: &EmbeddingStore,
) -> Result<LayerReps> {
    if !graph.contains(origin) {
        return Err(GnpError::Invalid(format!("origin {origin:?} not in graph")));
    }
    let d = embeddings.dim();
    let mut pu = vec![0.0f64; graph.n_users()];
    let mut pi = vec![0.0f64; graph.n_items()];
    match origin.side {
        Side::User => pu[origin.id as usize] = 1.0,
        Side::Item => pi[origin.id as usize] = 1.0,
    }
    let mut layers = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        if k > 0 {
            let mut nu = vec![0.0f64; pu.len()];
            let mut ni = vec![0.0f64; pi.len()];
            for (u, &p) in pu.iter().enumerate().filter(|(_, p)| **p != 0.0) {
                let nb = graph.user_neighbors(u as u32);
                if nb.is_empty() {
                    nu[u] += p;
                } else {
                    let share = p / nb.len() as f64;
                    nb.iter().for_each(|&i| ni[i as usize] += share);
                }
            }
            for (i, &p) in pi.iter().enumerate().filter(|(_, p)| **p != 0.0) {
                let nb = graph.item_neighbors(i as u32);
                if nb.is_empty() {
                    ni[i] += p;
                } else {
                    let share = p / nb.len() as f64;
                    nb.iter().for_each(|&u| nu[u as usize] += share);
                }
            }
            pu = nu;
            pi = ni;
        }
        let mut v = vec![0.0f64; d];
        let sides = [(Side::User, &pu), (Side::Item, &pi)];
        for (side, probs) in sides {
            for (id, &p) in probs.iter().enumerate().filter(|(_, p)| **p != 0.0) {
                let e = embeddings.node(NodeRef {
                    side,
                    id: id as u32,
                });
                v.iter_mut().zip(e).for_each(|(a, &x)| *a += p * x as f64);
            }
        }
        layers.push(v);
    }
    Ok(LayerReps::new(origin, layers))
}
