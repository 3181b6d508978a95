//! Undirected communication graph with ordered neighbor sequences.
//!
//! Neighbor lists never contain the node itself; the self-reception is
//! added explicitly by the observation model.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum number of resamples before giving up on a connected draw.
pub const MAX_RESAMPLES: usize = 1000;

/// Random graph family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphModel {
    /// Nodes uniform in the unit square, linked when closer than `radius`.
    Geometric { radius: f64 },
    /// Erdős–Rényi: every pair linked independently with probability `p`.
    Gnp { p: f64 },
}

impl GraphModel {
    fn validate(&self) -> Result<()> {
        match *self {
            GraphModel::Geometric { radius } => {
                if !(radius > 0.0 && radius <= std::f64::consts::SQRT_2) {
                    return Err(Error::InvalidParameter(format!(
                        "radius {radius} outside (0, sqrt(2)]"
                    )));
                }
            }
            GraphModel::Gnp { p } => {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::InvalidParameter(format!("p {p} outside (0, 1]")));
                }
            }
        }
        Ok(())
    }
}

/// Connected undirected graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    origin: Option<(u64, GraphModel)>,
}

/// On-disk form of a [`Graph`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    pub seed: Option<u64>,
    pub model: Option<GraphModel>,
}

impl Graph {
    /// Validates `edge_list` and builds the graph. Pairs may be given in
    /// either orientation; `{i, j}` and `{j, i}` count as the same edge.
    pub fn new(n: usize, edge_list: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edge_list {
            for id in [a, b] {
                if id >= n {
                    return Err(Error::OutOfRange { id, n });
                }
            }
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            let key = (a.min(b), a.max(b));
            if !set.insert(key) {
                return Err(Error::DuplicateEdge(key.0, key.1));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j) in &edges {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        let g = Graph {
            n,
            edges,
            adjacency,
            origin: None,
        };
        let components = g.component_count();
        if components != 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(g)
    }

    /// Complete graph on `n` nodes.
    pub fn complete(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        Graph::new(n, &edges)
    }

    /// Path `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::new(n, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighbor sequence of node `i`, ascending, excluding `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> Result<usize> {
        self.adjacency
            .get(i)
            .map(Vec::len)
            .ok_or(Error::OutOfRange { id: i, n: self.n })
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && self.adjacency[i].binary_search(&j).is_ok()
    }

    /// Seed and model this graph was generated from, if any.
    pub fn origin(&self) -> Option<(u64, GraphModel)> {
        self.origin
    }

    /// Nodes reachable from node 0 in BFS order.
    pub fn bfs_from_zero(&self) -> Vec<usize> {
        let mut seen = vec![false; self.n];
        let mut order = Vec::with_capacity(self.n);
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        order
    }

    fn component_count(&self) -> usize {
        let mut seen = vec![false; self.n];
        let mut count = 0;
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(u) = stack.pop() {
                for &v in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        count
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            n: self.n,
            edges: self.edges.iter().map(|&(i, j)| [i, j]).collect(),
            seed: self.origin.map(|o| o.0),
            model: self.origin.map(|o| o.1),
        }
    }

    pub fn from_file(file: &GraphFile) -> Result<Self> {
        let edges: Vec<_> = file.edges.iter().map(|e| (e[0], e[1])).collect();
        let mut g = Graph::new(file.n, &edges)?;
        if let (Some(seed), Some(model)) = (file.seed, file.model) {
            g.origin = Some((seed, model));
        }
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("graph serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Graph::from_file(&serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Graph::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Draws a connected graph. Attempt `k` uses ChaCha stream `k` under `seed`,
/// so the result is a pure function of `(n, model, seed)`.
pub fn random_connected_graph(n: usize, model: GraphModel, seed: u64) -> Result<Graph> {
    if n == 0 {
        return Err(Error::InvalidParameter("graph needs at least one node".into()));
    }
    model.validate()?;
    for attempt in 0..MAX_RESAMPLES {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(attempt as u64);
        let edges = sample_edges(n, model, &mut rng);
        match Graph::new(n, &edges) {
            Ok(mut g) => {
                g.origin = Some((seed, model));
                return Ok(g);
            }
            Err(Error::Disconnected { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::RetriesExhausted(MAX_RESAMPLES))
}

fn sample_edges<R: Rng>(n: usize, model: GraphModel, rng: &mut R) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    match model {
        GraphModel::Geometric { radius } => {
            let pts: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
                .collect();
            let r2 = radius * radius;
            for i in 0..n {
                for j in i + 1..n {
                    let dx = pts[i].0 - pts[j].0;
                    let dy = pts[i].1 - pts[j].1;
                    if dx * dx + dy * dy <= r2 {
                        edges.push((i, j));
                    }
                }
            }
        }
        GraphModel::Gnp { p } => {
            for i in 0..n {
                for j in i + 1..n {
                    if p >= 1.0 || rng.random::<f64>() < p {
                        edges.push((i, j));
                    }
                }
            }
        }
    }
    edges
}
