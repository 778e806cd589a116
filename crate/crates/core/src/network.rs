//! Directed acyclic multigraphs with designated sources and a sink, plus the
//! flow and cut machinery built on top of them.
//!
//! All capacities are unit capacities. Parallel edges are distinct edges
//! with distinct ids, and the order of edges in a [`NetworkSpec`] fixes the
//! edge indexing used by every matrix in the crate.

use std::collections::{HashMap, HashSet, VecDeque};

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::NetworkError;
use crate::matrix::FieldMatrix;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub id: String,
    pub tail: String,
    pub head: String,
}

/// On-disk network description.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub vertices: Vec<String>,
    pub edges: Vec<EdgeSpec>,
    pub sources: Vec<String>,
    pub sink: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub id: String,
    pub tail: usize,
    pub head: usize,
}

/// A plain directed multigraph with named vertices and no further
/// constraints. Used directly for auxiliary graphs (reversed networks,
/// pattern augmentations, flow gadgets).
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Digraph {
    names: Vec<String>,
    edges: Vec<Edge>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
}

/// Result of a unit-capacity max-flow computation.
#[derive(Clone, Debug)]
pub struct Flow {
    pub value: usize,
    /// Whether each edge carries a unit of flow.
    pub used: Vec<bool>,
    /// Vertices reachable from the sources in the final residual graph.
    pub source_side: Vec<bool>,
}

impl Flow {
    /// Edges leaving the source side of the residual partition: a minimum
    /// cut whenever the flow is maximum.
    pub fn cut_edges(&self, g: &Digraph) -> Vec<usize> {
        (0..g.edge_count())
            .filter(|&e| {
                let ed = &g.edges[e];
                self.source_side[ed.tail] && !self.source_side[ed.head]
            })
            .collect()
    }
}

impl Digraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex(&mut self, name: impl Into<String>) -> usize {
        self.names.push(name.into());
        self.out_adj.push(Vec::new());
        self.in_adj.push(Vec::new());
        self.names.len() - 1
    }

    pub fn add_edge(&mut self, id: impl Into<String>, tail: usize, head: usize) -> usize {
        let idx = self.edges.len();
        self.edges.push(Edge {
            id: id.into(),
            tail,
            head,
        });
        self.out_adj[tail].push(idx);
        self.in_adj[head].push(idx);
        idx
    }

    pub fn vertex_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.out_adj[v]
    }

    pub fn in_edges(&self, v: usize) -> &[usize] {
        &self.in_adj[v]
    }

    /// Kahn's algorithm; ties resolved by vertex index. `None` on a cycle.
    pub fn topo_order(&self) -> Option<Vec<usize>> {
        let n = self.vertex_count();
        let mut indeg: Vec<usize> = (0..n).map(|v| self.in_adj[v].len()).collect();
        let mut ready: std::collections::BTreeSet<usize> =
            (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &e in &self.out_adj[v] {
                let h = self.edges[e].head;
                indeg[h] -= 1;
                if indeg[h] == 0 {
                    ready.insert(h);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Vertices reachable from `from` while skipping the edges in `removed`.
    pub fn reachable(&self, from: &[usize], removed: &HashSet<usize>) -> Vec<bool> {
        let mut seen = vec![false; self.vertex_count()];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for &v in from {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
        while let Some(v) = queue.pop_front() {
            for &e in &self.out_adj[v] {
                if removed.contains(&e) {
                    continue;
                }
                let h = self.edges[e].head;
                if !seen[h] {
                    seen[h] = true;
                    queue.push_back(h);
                }
            }
        }
        seen
    }

    /// Unit-capacity max flow from the vertex set `from` to `to` by BFS
    /// augmenting paths. Stops early once `limit` units are routed.
    pub fn max_flow(&self, from: &[usize], to: usize, limit: Option<usize>) -> Flow {
        let n = self.vertex_count();
        let mut used = vec![false; self.edge_count()];
        let mut value = 0;
        let is_source: Vec<bool> = {
            let mut s = vec![false; n];
            for &v in from {
                s[v] = true;
            }
            s
        };
        if is_source[to] {
            // Degenerate request; nothing separates a vertex from itself.
            return Flow {
                value: 0,
                used,
                source_side: is_source,
            };
        }
        loop {
            if limit.is_some_and(|l| value >= l) {
                break;
            }
            // pred[v] = (edge, forward?)
            let mut pred: Vec<Option<(usize, bool)>> = vec![None; n];
            let mut seen = is_source.clone();
            let mut queue: VecDeque<usize> = from.iter().copied().collect();
            'bfs: while let Some(v) = queue.pop_front() {
                for &e in &self.out_adj[v] {
                    let h = self.edges[e].head;
                    if !used[e] && !seen[h] {
                        seen[h] = true;
                        pred[h] = Some((e, true));
                        if h == to {
                            break 'bfs;
                        }
                        queue.push_back(h);
                    }
                }
                for &e in &self.in_adj[v] {
                    let t = self.edges[e].tail;
                    if used[e] && !seen[t] {
                        seen[t] = true;
                        pred[t] = Some((e, false));
                        queue.push_back(t);
                    }
                }
            }
            if !seen[to] {
                return Flow {
                    value,
                    used,
                    source_side: seen,
                };
            }
            let mut v = to;
            while let Some((e, forward)) = pred[v] {
                used[e] = forward;
                v = if forward {
                    self.edges[e].tail
                } else {
                    self.edges[e].head
                };
                if is_source[v] {
                    break;
                }
            }
            value += 1;
        }
        let source_side = self.residual_reach(from, &used);
        Flow {
            value,
            used,
            source_side,
        }
    }

    fn residual_reach(&self, from: &[usize], used: &[bool]) -> Vec<bool> {
        let mut seen = vec![false; self.vertex_count()];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for &v in from {
            seen[v] = true;
            queue.push_back(v);
        }
        while let Some(v) = queue.pop_front() {
            for &e in &self.out_adj[v] {
                let h = self.edges[e].head;
                if !used[e] && !seen[h] {
                    seen[h] = true;
                    queue.push_back(h);
                }
            }
            for &e in &self.in_adj[v] {
                let t = self.edges[e].tail;
                if used[e] && !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        seen
    }
}

/// A validated network: acyclic, sources without in-edges, a sink without
/// out-edges, and a path to the sink from every other vertex.
#[derive(Clone, Debug)]
pub struct Network {
    graph: Digraph,
    sources: Vec<usize>,
    sink: usize,
    vertex_topo: Vec<usize>,
    edge_topo: Vec<usize>,
    vertex_index: HashMap<String, usize>,
    edge_index: HashMap<String, usize>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.graph == other.graph && self.sources == other.sources && self.sink == other.sink
    }
}

impl Eq for Network {}

/// A cut between a vertex set and a target vertex.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CutReport {
    /// Cut edges (edge indices, ascending).
    pub edges: Vec<usize>,
    /// Sources with no remaining path to the target once the cut is removed.
    pub separated_sources: Vec<usize>,
    pub size: usize,
}

/// Cut-derived bounds minimized over nonempty source subsets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CutQuantities {
    /// min over I of mincut(I)/Rank(T_I), over subsets with nonzero rank.
    /// `None` when T is zero.
    pub cutset_rate_bound: Option<Rational64>,
    /// min over I of mincut(I) − k·Rank(T_I) + 1.
    pub singleton_bound: i64,
    /// min over I of mincut(I) − k·|I|.
    pub delta: i64,
}

/// Where a path in a [`PathFamily`] starts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathOrigin {
    /// Message path from source index `i`.
    Source(usize),
    /// Error path beginning at this edge of the pattern.
    Pattern(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Path {
    pub origin: PathOrigin,
    /// Edge indices of the original network, tail to sink.
    pub edges: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PathFamily {
    pub paths: Vec<Path>,
}

impl PathFamily {
    /// Union of all edges on the paths.
    pub fn edge_set(&self) -> HashSet<usize> {
        self.paths.iter().flat_map(|p| p.edges.iter().copied()).collect()
    }

    /// For every edge on some path, the previous edge on that path (`None`
    /// for the first edge).
    pub fn predecessors(&self) -> HashMap<usize, (PathOrigin, Option<usize>)> {
        let mut map = HashMap::new();
        for p in &self.paths {
            for (i, &e) in p.edges.iter().enumerate() {
                let prev = if i == 0 { None } else { Some(p.edges[i - 1]) };
                map.insert(e, (p.origin, prev));
            }
        }
        map
    }
}

/// Network with a virtual source σ_ρ injecting into every edge of an error
/// pattern. Each pattern edge `e = (u, v)` is split as `u → m_e → v` with an
/// extra arc `σ_ρ → m_e`; the arc `m_e → v` stands for `e` itself, so an
/// injected error travels on `e` exactly like a symbol carried by `e`.
#[derive(Clone, Debug)]
pub struct AugmentedNetwork {
    pub graph: Digraph,
    pub sigma_rho: usize,
    pub sink: usize,
    pub pattern: Vec<usize>,
    /// The original edge each arc stands for, if any.
    pub arc_origin: Vec<Option<usize>>,
    /// Set when the pattern is empty and σ_ρ is isolated.
    pub degenerate: bool,
}

/// The reverse of a network: the old sink is the unique source and the old
/// sources are the sinks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MulticastNetwork {
    pub graph: Digraph,
    pub source: usize,
    pub sinks: Vec<usize>,
}

impl MulticastNetwork {
    /// Reverses back into the original single-sink network.
    pub fn reverse(&self) -> Result<Network, NetworkError> {
        Network::from_spec(&reversed_spec(&self.graph, &self.sinks, self.source))
    }

    pub fn mincut_to(&self, sink: usize) -> usize {
        self.graph.max_flow(&[self.source], sink, None).value
    }
}

fn reversed_spec(g: &Digraph, sources: &[usize], sink: usize) -> NetworkSpec {
    NetworkSpec {
        vertices: g.names().to_vec(),
        edges: g
            .edges()
            .iter()
            .map(|e| EdgeSpec {
                id: e.id.clone(),
                tail: g.name(e.head).to_string(),
                head: g.name(e.tail).to_string(),
            })
            .collect(),
        sources: sources.iter().map(|&v| g.name(v).to_string()).collect(),
        sink: g.name(sink).to_string(),
    }
}

impl Network {
    /// Validates a description and caches its topological orders.
    pub fn from_spec(spec: &NetworkSpec) -> Result<Self, NetworkError> {
        let mut graph = Digraph::new();
        let mut vertex_index = HashMap::new();
        for v in &spec.vertices {
            if vertex_index.insert(v.clone(), graph.vertex_count()).is_some() {
                return Err(NetworkError::DuplicateVertex(v.clone()));
            }
            graph.add_vertex(v.clone());
        }
        let lookup = |name: &str| {
            vertex_index
                .get(name)
                .copied()
                .ok_or_else(|| NetworkError::UnknownVertex(name.to_string()))
        };
        let mut edge_index = HashMap::new();
        for e in &spec.edges {
            let (t, h) = (lookup(&e.tail)?, lookup(&e.head)?);
            if edge_index.insert(e.id.clone(), graph.edge_count()).is_some() {
                return Err(NetworkError::DuplicateEdge(e.id.clone()));
            }
            graph.add_edge(e.id.clone(), t, h);
        }
        if spec.sources.is_empty() {
            return Err(NetworkError::NoSources);
        }
        let sources = spec
            .sources
            .iter()
            .map(|s| lookup(s))
            .collect::<Result<Vec<_>, _>>()?;
        let mut seen = HashSet::new();
        for &s in &sources {
            if !seen.insert(s) {
                return Err(NetworkError::DuplicateVertex(graph.name(s).to_string()));
            }
        }
        let sink = lookup(&spec.sink)?;
        if sources.contains(&sink) {
            return Err(NetworkError::SinkIsSource(spec.sink.clone()));
        }
        let vertex_topo = graph.topo_order().ok_or(NetworkError::Cycle)?;
        for &s in &sources {
            if !graph.in_edges(s).is_empty() {
                return Err(NetworkError::SourceWithInEdge(graph.name(s).to_string()));
            }
        }
        if let Some(&e) = graph.out_edges(sink).first() {
            return Err(NetworkError::InvalidRequest(format!(
                "sink has outgoing edge {}",
                graph.edge(e).id
            )));
        }
        // Every vertex must reach the sink: search backwards from it.
        let mut reaches = vec![false; graph.vertex_count()];
        reaches[sink] = true;
        for &v in vertex_topo.iter().rev() {
            if graph.out_edges(v).iter().any(|&e| reaches[graph.edge(e).head]) {
                reaches[v] = true;
            }
        }
        if let Some(v) = (0..graph.vertex_count()).find(|&v| !reaches[v]) {
            return Err(NetworkError::UnreachableSink(graph.name(v).to_string()));
        }
        let mut pos = vec![0; graph.vertex_count()];
        for (i, &v) in vertex_topo.iter().enumerate() {
            pos[v] = i;
        }
        let mut edge_topo: Vec<usize> = (0..graph.edge_count()).collect();
        edge_topo.sort_by_key(|&e| (pos[graph.edge(e).tail], e));
        Ok(Network {
            graph,
            sources,
            sink,
            vertex_topo,
            edge_topo,
            vertex_index,
            edge_index,
        })
    }

    pub fn to_spec(&self) -> NetworkSpec {
        let g = &self.graph;
        NetworkSpec {
            vertices: g.names().to_vec(),
            edges: g
                .edges()
                .iter()
                .map(|e| EdgeSpec {
                    id: e.id.clone(),
                    tail: g.name(e.tail).to_string(),
                    head: g.name(e.head).to_string(),
                })
                .collect(),
            sources: self.sources.iter().map(|&v| g.name(v).to_string()).collect(),
            sink: g.name(self.sink).to_string(),
        }
    }

    /// Convenience constructor from `(id, tail, head)` triples; vertices are
    /// collected in order of first appearance (sources first).
    pub fn from_edges(
        sources: &[&str],
        sink: &str,
        edges: &[(&str, &str, &str)],
    ) -> Result<Self, NetworkError> {
        let mut vertices: Vec<String> = Vec::new();
        let mut push = |v: &str| {
            if !vertices.iter().any(|x| x == v) {
                vertices.push(v.to_string());
            }
        };
        for s in sources {
            push(s);
        }
        for (_, t, h) in edges {
            push(t);
            push(h);
        }
        push(sink);
        Self::from_spec(&NetworkSpec {
            vertices,
            edges: edges
                .iter()
                .map(|(id, t, h)| EdgeSpec {
                    id: id.to_string(),
                    tail: t.to_string(),
                    head: h.to_string(),
                })
                .collect(),
            sources: sources.iter().map(|s| s.to_string()).collect(),
            sink: sink.to_string(),
        })
    }

    pub fn graph(&self) -> &Digraph {
        &self.graph
    }

    pub fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }

    pub fn vertex_count(&self) -> usize {
        self.graph.vertex_count()
    }

    pub fn edge(&self, e: usize) -> &Edge {
        self.graph.edge(e)
    }

    pub fn edge_id(&self, e: usize) -> &str {
        &self.graph.edge(e).id
    }

    pub fn vertex_name(&self, v: usize) -> &str {
        self.graph.name(v)
    }

    pub fn edge_index(&self, id: &str) -> Result<usize, NetworkError> {
        self.edge_index
            .get(id)
            .copied()
            .ok_or_else(|| NetworkError::UnknownEdge(id.to_string()))
    }

    pub fn vertex_index(&self, name: &str) -> Result<usize, NetworkError> {
        self.vertex_index
            .get(name)
            .copied()
            .ok_or_else(|| NetworkError::UnknownVertex(name.to_string()))
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn source_count(&self) -> usize {
        self.sources.len()
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    /// Index of `v` among the sources.
    pub fn source_position(&self, v: usize) -> Option<usize> {
        self.sources.iter().position(|&s| s == v)
    }

    pub fn in_edges(&self, v: usize) -> &[usize] {
        self.graph.in_edges(v)
    }

    pub fn out_edges(&self, v: usize) -> &[usize] {
        self.graph.out_edges(v)
    }

    /// In(γ) in edge-index order; columns of F and G follow this order.
    pub fn sink_edges(&self) -> &[usize] {
        self.graph.in_edges(self.sink)
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.vertex_topo
    }

    /// Edges sorted by the topological position of their tails, ties by
    /// edge index.
    pub fn edge_topo_order(&self) -> &[usize] {
        &self.edge_topo
    }

    /// Max-flow value from a vertex set to `to`.
    pub fn mincut_value(&self, from: &[usize], to: usize) -> usize {
        self.graph.max_flow(from, to, None).value
    }

    /// A minimum cut between `from` and `to`, with the set of sources it
    /// separates from `to`.
    pub fn min_cut(&self, from: &[usize], to: usize) -> Result<CutReport, NetworkError> {
        if from.is_empty() {
            return Err(NetworkError::InvalidRequest("empty source set".into()));
        }
        let none = HashSet::new();
        for &v in from {
            if !self.graph.reachable(&[v], &none)[to] {
                return Err(NetworkError::Unreachable {
                    from: self.graph.name(v).to_string(),
                    to: self.graph.name(to).to_string(),
                });
            }
        }
        let flow = self.graph.max_flow(from, to, None);
        let edges = flow.cut_edges(&self.graph);
        let removed: HashSet<usize> = edges.iter().copied().collect();
        let separated_sources = self
            .sources
            .iter()
            .copied()
            .filter(|&s| !self.graph.reachable(&[s], &removed)[to])
            .collect();
        debug_assert_eq!(edges.len(), flow.value);
        Ok(CutReport {
            size: edges.len(),
            edges,
            separated_sources,
        })
    }

    /// mincut(I, γ) for every nonempty subset I of sources, indexed by the
    /// bitmask of source positions.
    pub fn subset_mincuts(&self) -> Vec<usize> {
        let s = self.sources.len();
        assert!(s < 20, "too many sources for subset enumeration");
        let mut out = vec![0; 1 << s];
        for mask in 1usize..(1 << s) {
            let set: Vec<usize> = (0..s)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| self.sources[i])
                .collect();
            out[mask] = self.mincut_value(&set, self.sink);
        }
        out
    }

    /// Smallest mincut(σ_i, γ) over single sources.
    pub fn min_source_mincut(&self) -> usize {
        self.sources
            .iter()
            .map(|&s| self.mincut_value(&[s], self.sink))
            .min()
            .unwrap_or(0)
    }

    /// Cut bounds for target matrix `t` (s rows) and rate `k`.
    pub fn cut_quantities(&self, t: &FieldMatrix, k: usize) -> Result<CutQuantities, NetworkError> {
        let s = self.sources.len();
        if t.rows() != s {
            return Err(NetworkError::InvalidRequest(format!(
                "target matrix has {} rows for {} sources",
                t.rows(),
                s
            )));
        }
        let cuts = self.subset_mincuts();
        let mut rate: Option<Rational64> = None;
        let mut singleton = i64::MAX;
        let mut delta = i64::MAX;
        for (mask, &cut) in cuts.iter().enumerate().skip(1) {
            let idx: Vec<usize> = (0..s).filter(|i| mask >> i & 1 == 1).collect();
            let rank = t.select_rows(&idx).rank() as i64;
            let cut = cut as i64;
            if rank > 0 {
                let r = Rational64::new(cut, rank);
                rate = Some(rate.map_or(r, |x| x.min(r)));
            }
            singleton = singleton.min(cut - k as i64 * rank + 1);
            delta = delta.min(cut - k as i64 * idx.len() as i64);
        }
        Ok(CutQuantities {
            cutset_rate_bound: rate,
            singleton_bound: singleton,
            delta,
        })
    }

    /// Reverses every edge: the sink becomes the unique source and the
    /// sources become sinks. Vertex names and edge ids are kept.
    pub fn reverse(&self) -> MulticastNetwork {
        let mut graph = Digraph::new();
        for v in self.graph.names() {
            graph.add_vertex(v.clone());
        }
        for e in self.graph.edges() {
            graph.add_edge(e.id.clone(), e.head, e.tail);
        }
        MulticastNetwork {
            graph,
            source: self.sink,
            sinks: self.sources.clone(),
        }
    }

    /// Builds 𝒩_ρ: a virtual source σ_ρ feeding every edge of `rho`.
    pub fn augment_with_pattern(&self, rho: &[usize]) -> Result<AugmentedNetwork, NetworkError> {
        for &e in rho {
            if e >= self.edge_count() {
                return Err(NetworkError::UnknownEdge(format!("#{e}")));
            }
        }
        let in_rho: HashSet<usize> = rho.iter().copied().collect();
        let mut graph = Digraph::new();
        for v in self.graph.names() {
            graph.add_vertex(v.clone());
        }
        let sigma_rho = graph.add_vertex("σ_ρ");
        let mut arc_origin = Vec::new();
        for (i, e) in self.graph.edges().iter().enumerate() {
            if in_rho.contains(&i) {
                let mid = graph.add_vertex(format!("m:{}", e.id));
                graph.add_edge(format!("{}:in", e.id), e.tail, mid);
                arc_origin.push(None);
                graph.add_edge(e.id.clone(), mid, e.head);
                arc_origin.push(Some(i));
                graph.add_edge(format!("{}:err", e.id), sigma_rho, mid);
                arc_origin.push(None);
            } else {
                graph.add_edge(e.id.clone(), e.tail, e.head);
                arc_origin.push(Some(i));
            }
        }
        let mut pattern: Vec<usize> = in_rho.into_iter().collect();
        pattern.sort_unstable();
        Ok(AugmentedNetwork {
            graph,
            sigma_rho,
            sink: self.sink,
            degenerate: pattern.is_empty(),
            pattern,
            arc_origin,
        })
    }

    /// `s·k + δ` edge-disjoint paths: `k` from each source and one starting
    /// at each edge of `rho`, where `δ = |rho|`.
    pub fn disjoint_path_family(
        &self,
        rho: &[usize],
        k: usize,
        delta: usize,
    ) -> Result<PathFamily, NetworkError> {
        if k == 0 {
            return Err(NetworkError::InvalidRequest("k must be positive".into()));
        }
        let aug = self.augment_with_pattern(rho)?;
        if aug.pattern.len() != delta {
            return Err(NetworkError::InvalidRequest(format!(
                "pattern has {} distinct edges, expected {delta}",
                aug.pattern.len()
            )));
        }
        let mut g = aug.graph.clone();
        let mut arc_origin = aug.arc_origin.clone();
        let super_source = g.add_vertex("σ′");
        for _ in 0..delta {
            g.add_edge("σ′:ρ", super_source, aug.sigma_rho);
            arc_origin.push(None);
        }
        for &s in &self.sources {
            for _ in 0..k {
                g.add_edge("σ′:s", super_source, s);
                arc_origin.push(None);
            }
        }
        let required = self.sources.len() * k + delta;
        let flow = g.max_flow(&[super_source], self.sink, Some(required));
        if flow.value < required {
            return Err(NetworkError::InsufficientFlow {
                found: flow.value,
                required,
            });
        }
        let mut remaining = flow.used.clone();
        let mut paths = Vec::with_capacity(required);
        for _ in 0..required {
            let mut v = super_source;
            let mut origin = None;
            let mut edges = Vec::new();
            while v != self.sink {
                let e = *g
                    .out_edges(v)
                    .iter()
                    .find(|&&e| remaining[e])
                    .expect("flow conservation");
                remaining[e] = false;
                let head = g.edge(e).head;
                if v == super_source {
                    origin = self.source_position(head).map(PathOrigin::Source);
                } else if v == aug.sigma_rho {
                    // σ_ρ → m_e; the next arc out of m_e is the pattern edge.
                    let next = *g
                        .out_edges(head)
                        .iter()
                        .find(|&&a| arc_origin[a].is_some())
                        .expect("split arc");
                    origin = Some(PathOrigin::Pattern(arc_origin[next].unwrap()));
                }
                if let Some(orig) = arc_origin[e] {
                    edges.push(orig);
                }
                v = head;
            }
            paths.push(Path {
                origin: origin.expect("path leaves the super source"),
                edges,
            });
        }
        Ok(PathFamily { paths })
    }
}

impl AugmentedNetwork {
    /// mincut(σ_ρ, γ) in the augmented graph.
    pub fn pattern_mincut(&self) -> (usize, Vec<usize>) {
        let flow = self.graph.max_flow(&[self.sigma_rho], self.sink, None);
        let cut = flow
            .cut_edges(&self.graph)
            .into_iter()
            .filter_map(|a| self.arc_origin[a])
            .collect();
        (flow.value, cut)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Field;

    pub(crate) fn two_source() -> Network {
        Network::from_edges(
            &["s1", "s2"],
            "g",
            &[
                ("s1a", "s1", "a"),
                ("s1w", "s1", "w"),
                ("s1b", "s1", "b"),
                ("s2w", "s2", "w"),
                ("s2b", "s2", "b"),
                ("s2c", "s2", "c"),
                ("wx", "w", "x"),
                ("xa", "x", "a"),
                ("xc", "x", "c"),
                ("e1", "a", "g"),
                ("e2", "b", "g"),
                ("e3", "c", "g"),
            ],
        )
        .unwrap()
    }

    /// Brute force over every edge subset: the smallest set whose removal
    /// disconnects every vertex of `from` from `to`.
    fn brute_mincut(net: &Network, from: &[usize], to: usize) -> usize {
        let m = net.edge_count();
        (0u32..1 << m)
            .filter(|mask| {
                let removed: HashSet<usize> = (0..m).filter(|e| mask >> e & 1 == 1).collect();
                !net.graph().reachable(from, &removed)[to]
            })
            .map(|mask| mask.count_ones() as usize)
            .min()
            .unwrap()
    }

    #[test]
    fn single_edge_valid() {
        let net = Network::from_edges(&["s"], "g", &[("e", "s", "g")]).unwrap();
        let order: Vec<&str> = net.topo_order().iter().map(|&v| net.vertex_name(v)).collect();
        assert_eq!(order, ["s", "g"]);
        assert_eq!(net.mincut_value(&[0], 1), 1);
    }

    #[test]
    fn cycle_rejected() {
        let err = Network::from_edges(
            &["s"],
            "g",
            &[("a", "s", "u"), ("b", "u", "v"), ("c", "v", "u"), ("d", "v", "g")],
        )
        .unwrap_err();
        assert_eq!(err, NetworkError::Cycle);
    }

    #[test]
    fn structural_errors() {
        let dup = Network::from_edges(&["s"], "g", &[("e", "s", "g"), ("e", "s", "g")]);
        assert!(matches!(dup, Err(NetworkError::DuplicateEdge(_))));
        let inbound = Network::from_edges(&["s", "t"], "g", &[("a", "t", "s"), ("b", "s", "g")]);
        assert!(matches!(inbound, Err(NetworkError::SourceWithInEdge(_))));
        let dead = Network::from_edges(&["s"], "g", &[("a", "s", "g"), ("b", "s", "d")]);
        assert!(matches!(dead, Err(NetworkError::UnreachableSink(_))));
    }

    #[test]
    fn example_network_cuts() {
        let net = two_source();
        assert_eq!(net.edge_count(), 12);
        assert_eq!(net.sink_edges().len(), 3);
        for &s in net.sources() {
            let cut = net.min_cut(&[s], net.sink()).unwrap();
            assert_eq!(cut.size, 3);
            assert!(cut.separated_sources.contains(&s));
        }
        assert_eq!(net.mincut_value(net.sources(), net.sink()), 3);
    }

    #[test]
    fn bottleneck_relay_against_brute_force() {
        let net = Network::from_edges(
            &["s"],
            "g",
            &[
                ("a1", "s", "r"),
                ("a2", "s", "r"),
                ("a3", "s", "r"),
                ("a4", "s", "r"),
                ("b1", "r", "g"),
                ("b2", "r", "g"),
            ],
        )
        .unwrap();
        let s = net.sources()[0];
        assert_eq!(brute_mincut(&net, &[s], net.sink()), 2);
        assert_eq!(net.min_cut(&[s], net.sink()).unwrap().size, 2);
    }

    #[test]
    fn cut_quantities_parallel_sources() {
        let net = Network::from_edges(
            &["s1", "s2"],
            "g",
            &[
                ("a1", "s1", "g"),
                ("a2", "s1", "g"),
                ("a3", "s1", "g"),
                ("b1", "s2", "g"),
                ("b2", "s2", "g"),
                ("b3", "s2", "g"),
            ],
        )
        .unwrap();
        let f = Field::prime(5).unwrap();
        let q = net.cut_quantities(&FieldMatrix::identity(&f, 2), 1).unwrap();
        // Oracle: subsets {1},{2} give 3−1, {1,2} gives 6−2.
        let brute: i64 = [(3, 1), (3, 1), (6, 2)].iter().map(|&(c, n)| c - n).min().unwrap();
        assert_eq!(q.delta, brute);
        assert_eq!(q.delta, 2);
        assert_eq!(q.singleton_bound, 3);
    }

    #[test]
    fn cut_quantities_sum_target() {
        let net = two_source();
        let f = Field::prime(5).unwrap();
        let ones = FieldMatrix::from_i64_rows(&f, &[&[1], &[1]]).unwrap();
        assert_eq!(net.cut_quantities(&ones, 1).unwrap().singleton_bound, 3);
        assert_eq!(net.cut_quantities(&ones, 3).unwrap().singleton_bound, 1);
        assert_eq!(
            net.cut_quantities(&ones, 1).unwrap().cutset_rate_bound,
            Some(Rational64::from_integer(3))
        );
    }

    #[test]
    fn reverse_is_an_involution() {
        let net = Network::from_edges(&["s"], "g", &[("e", "s", "g")]).unwrap();
        let r = net.reverse();
        assert_eq!(r.graph.edge(0).tail, net.sink());
        assert_eq!(r.graph.edge(0).head, net.sources()[0]);
        assert_eq!(r.reverse().unwrap(), net);
        let ex = two_source();
        let rex = ex.reverse();
        assert_eq!(rex.source, ex.sink());
        for &s in &rex.sinks {
            assert_eq!(rex.mincut_to(s), 3);
        }
        assert_eq!(rex.reverse().unwrap(), ex);
    }

    #[test]
    fn augmentation_cases() {
        let net = two_source();
        let empty = net.augment_with_pattern(&[]).unwrap();
        assert!(empty.degenerate);
        assert_eq!(empty.pattern_mincut().0, 0);
        let e1 = net.edge_index("e1").unwrap();
        let e2 = net.edge_index("e2").unwrap();
        let one = net.augment_with_pattern(&[e1]).unwrap();
        assert_eq!(one.graph.out_edges(one.sigma_rho).len(), 1);
        let two = net.augment_with_pattern(&[e1, e2]).unwrap();
        assert_eq!(two.pattern_mincut().0, 2);
        assert!(matches!(
            net.augment_with_pattern(&[99]),
            Err(NetworkError::UnknownEdge(_))
        ));
    }

    fn check_family(net: &Network, fam: &PathFamily, k: usize, rho: &[usize]) {
        let mut seen = HashSet::new();
        for p in &fam.paths {
            for w in p.edges.windows(2) {
                assert_eq!(net.edge(w[0]).head, net.edge(w[1]).tail);
            }
            assert_eq!(net.edge(*p.edges.last().unwrap()).head, net.sink());
            for &e in &p.edges {
                assert!(seen.insert(e), "edge reused");
            }
            match p.origin {
                PathOrigin::Source(i) => assert_eq!(net.edge(p.edges[0]).tail, net.sources()[i]),
                PathOrigin::Pattern(e) => assert_eq!(p.edges[0], e),
            }
        }
        for i in 0..net.source_count() {
            let n = fam.paths.iter().filter(|p| p.origin == PathOrigin::Source(i)).count();
            assert_eq!(n, k);
        }
        for &e in rho {
            assert!(fam.paths.iter().any(|p| p.origin == PathOrigin::Pattern(e)));
        }
    }

    #[test]
    fn path_family_parallel_edges() {
        let net =
            Network::from_edges(&["s"], "g", &[("a", "s", "g"), ("b", "s", "g"), ("c", "s", "g")])
                .unwrap();
        let fam = net.disjoint_path_family(&[1], 1, 1).unwrap();
        assert_eq!(fam.paths.len(), 2);
        check_family(&net, &fam, 1, &[1]);
        assert!(net.disjoint_path_family(&[1], 0, 1).is_err());
    }

    #[test]
    fn path_family_example_network() {
        let net = two_source();
        let e1 = net.edge_index("e1").unwrap();
        let fam = net.disjoint_path_family(&[e1], 1, 1).unwrap();
        assert_eq!(fam.paths.len(), 3);
        check_family(&net, &fam, 1, &[e1]);
    }

    #[test]
    fn cut_quantities_match_all_edge_cuts() {
        // Oracle: enumerate every edge subset, compute I_C by reachability,
        // and minimize |C| − k|I_C| over cuts with I_C nonempty.
        let net = Network::from_edges(
            &["s1", "s2"],
            "g",
            &[
                ("a", "s1", "u"),
                ("b", "s2", "u"),
                ("c", "s2", "v"),
                ("d", "u", "g"),
                ("e", "u", "v"),
                ("f", "v", "g"),
                ("h", "s1", "g"),
            ],
        )
        .unwrap();
        let f = Field::prime(3).unwrap();
        let m = net.edge_count();
        for k in 1..=2 {
            let mut best_delta = i64::MAX;
            let mut best_singleton = i64::MAX;
            for mask in 0u32..1 << m {
                let removed: HashSet<usize> = (0..m).filter(|e| mask >> e & 1 == 1).collect();
                let ic: Vec<usize> = (0..net.source_count())
                    .filter(|&i| !net.graph().reachable(&[net.sources()[i]], &removed)[net.sink()])
                    .collect();
                if ic.is_empty() {
                    continue;
                }
                let c = removed.len() as i64;
                best_delta = best_delta.min(c - k * ic.len() as i64);
                best_singleton = best_singleton.min(c - k * ic.len() as i64 + 1);
            }
            let q = net.cut_quantities(&FieldMatrix::identity(&f, 2), k as usize).unwrap();
            assert_eq!(q.delta, best_delta);
            assert_eq!(q.singleton_bound, best_singleton);
        }
    }
}
