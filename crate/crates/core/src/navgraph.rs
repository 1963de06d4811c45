//! Sampled waypoint graph for the baseline agent, the dense grid graph used
//! for metric geodesics, and the shortest-path / snapping queries on both.

use crate::geom::{Point, Vec2};
use crate::world::WorldMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use thiserror::Error;

const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("map has no passable area")]
    DegenerateMap,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("node {0} is not in the graph")]
    UnknownNode(usize),
    #[error("no path between nodes {0} and {1}")]
    Unreachable(usize, usize),
}

/// Read access shared by both graph kinds.
pub trait Graph {
    fn node_count(&self) -> usize;
    fn point(&self, id: usize) -> Point;
    fn neighbors(&self, id: usize) -> &[(usize, f64)];
}

fn build_adjacency(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<(usize, f64)>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b, w) in edges {
        adj[a].push((b, w));
        adj[b].push((a, w));
    }
    for list in &mut adj {
        list.sort_by_key(|&(v, _)| v);
    }
    adj
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Sampled,
    Corner,
    Anchor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NavGraph {
    pub nodes: Vec<Point>,
    pub kinds: Vec<NodeKind>,
    /// Undirected, `a < b`, sorted.
    pub edges: Vec<(usize, usize, f64)>,
    adj: Vec<Vec<(usize, f64)>>,
}

impl Graph for NavGraph {
    fn node_count(&self) -> usize {
        self.nodes.len()
    }
    fn point(&self, id: usize) -> Point {
        self.nodes[id]
    }
    fn neighbors(&self, id: usize) -> &[(usize, f64)] {
        &self.adj[id]
    }
}

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    nodes: Vec<NodeDoc>,
    edges: Vec<(usize, usize, f64)>,
}

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    id: usize,
    x: f64,
    y: f64,
}

impl NavGraph {
    /// Graph over explicit points; edge lengths are the Euclidean distances.
    pub fn from_parts(nodes: Vec<Point>, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let set: BTreeSet<(usize, usize)> =
            pairs.into_iter().filter(|(a, b)| a != b).map(|(a, b)| (a.min(b), a.max(b))).collect();
        let edges: Vec<_> = set.into_iter().map(|(a, b)| (a, b, nodes[a].dist(nodes[b]))).collect();
        let adj = build_adjacency(nodes.len(), &edges);
        let kinds = vec![NodeKind::Sampled; nodes.len()];
        Self { nodes, kinds, edges, adj }
    }

    /// Graph with explicit edge weights (used for oracle comparisons on abstract graphs).
    pub fn with_weights(nodes: Vec<Point>, edges: Vec<(usize, usize, f64)>) -> Self {
        let mut edges: Vec<_> = edges.into_iter().map(|(a, b, w)| (a.min(b), a.max(b), w)).collect();
        edges.sort_by_key(|x| (x.0, x.1));
        edges.dedup_by(|x, y| x.0 == y.0 && x.1 == y.1);
        let adj = build_adjacency(nodes.len(), &edges);
        let kinds = vec![NodeKind::Sampled; nodes.len()];
        Self { nodes, kinds, edges, adj }
    }

    pub fn to_json(&self) -> String {
        let doc = GraphDoc {
            nodes: self.nodes.iter().enumerate().map(|(id, p)| NodeDoc { id, x: p.x, y: p.y }).collect(),
            edges: self.edges.clone(),
        };
        serde_json::to_string(&doc).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let doc: GraphDoc = serde_json::from_str(text)?;
        let nodes = doc.nodes.iter().map(|n| Point::new(n.x, n.y)).collect();
        Ok(Self::with_weights(nodes, doc.edges))
    }

    pub fn degree(&self, id: usize) -> usize {
        self.adj[id].len()
    }

    pub fn connected_components(&self) -> Vec<usize> {
        let mut comp = vec![usize::MAX; self.nodes.len()];
        let mut next = 0;
        for s in 0..self.nodes.len() {
            if comp[s] != usize::MAX {
                continue;
            }
            let mut q = VecDeque::from([s]);
            comp[s] = next;
            while let Some(u) = q.pop_front() {
                for &(v, _) in &self.adj[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = next;
                        q.push_back(v);
                    }
                }
            }
            next += 1;
        }
        comp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NavGraphParams {
    pub n_candidates: usize,
    pub min_dist: f64,
    pub seed: u64,
    /// Edges passing closer than this to a third node are dropped.
    pub node_clearance: f64,
    /// Extra fixed nodes (start and goal for the baseline agent).
    pub anchors: Vec<Point>,
}

impl Default for NavGraphParams {
    fn default() -> Self {
        Self { n_candidates: 1000, min_dist: 2.5, seed: 42, node_clearance: 0.5, anchors: Vec::new() }
    }
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a.lerp(b, t))
}

/// Sector of `v` around a node: 0 = E, 1 = N, 2 = W, 3 = S, each a 90 degree wedge
/// centred on its cardinal, half-open counter-clockwise.
fn sector(v: Vec2) -> usize {
    let a = v.angle().to_degrees();
    let shifted = (a + 45.0).rem_euclid(360.0);
    ((shifted / 90.0).floor() as usize).min(3)
}

/// Uniform sample over passable space by rejection from the bounding box.
fn sample_passable(map: &WorldMap, rng: &mut ChaCha8Rng) -> Option<Point> {
    let b = map.bounds();
    for _ in 0..100_000 {
        let p = Point::new(rng.gen_range(b.min.x..=b.max.x), rng.gen_range(b.min.y..=b.max.y));
        if map.is_passable(p) {
            return Some(p);
        }
    }
    None
}

pub fn build_nav_graph(map: &WorldMap, params: &NavGraphParams) -> Result<NavGraph, GraphError> {
    if params.n_candidates == 0 {
        return Err(GraphError::InvalidParameter("n_candidates must be at least 1".into()));
    }
    if !(params.min_dist > 0.0) {
        return Err(GraphError::InvalidParameter("min_dist must be positive".into()));
    }
    if map.corridors.iter().all(|c| c.rect.area() <= 0.0) {
        return Err(GraphError::DegenerateMap);
    }

    let mut nodes: Vec<Point> = Vec::new();
    let mut kinds: Vec<NodeKind> = Vec::new();
    let push_fixed = |p: Point, kind: NodeKind, nodes: &mut Vec<Point>, kinds: &mut Vec<NodeKind>| {
        if !nodes.iter().any(|q| q.dist(p) < 1e-9) {
            nodes.push(p);
            kinds.push(kind);
        }
    };
    for a in &params.anchors {
        if map.is_passable(*a) {
            push_fixed(*a, NodeKind::Anchor, &mut nodes, &mut kinds);
        }
    }
    for c in map.interior_corners() {
        push_fixed(c, NodeKind::Corner, &mut nodes, &mut kinds);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    for _ in 0..params.n_candidates {
        let p = sample_passable(map, &mut rng).ok_or(GraphError::DegenerateMap)?;
        if nodes.iter().all(|q| q.dist(p) >= params.min_dist) {
            nodes.push(p);
            kinds.push(NodeKind::Sampled);
        }
    }

    let n = nodes.len();
    let mut pairs = BTreeSet::new();
    for u in 0..n {
        let mut by_sector: [Vec<(f64, usize)>; 4] = Default::default();
        for v in 0..n {
            if v != u {
                let d = nodes[u].dist(nodes[v]);
                by_sector[sector(nodes[v].sub(nodes[u]))].push((d, v));
            }
        }
        for cands in &mut by_sector {
            cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let chosen = cands.iter().find(|&&(_, v)| {
                map.segment_passable(nodes[u], nodes[v])
                    && (0..n).all(|w| {
                        w == u
                            || w == v
                            || point_segment_distance(nodes[w], nodes[u], nodes[v]) >= params.node_clearance
                    })
            });
            if let Some(&(_, v)) = chosen {
                pairs.insert((u.min(v), u.max(v)));
            }
        }
    }
    let mut g = NavGraph::from_parts(nodes, pairs);
    g.kinds = kinds;
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub mean_edge_length: f64,
    pub mean_degree: f64,
}

/// Mean edge length is 0 for an edgeless graph; mean degree is 2E/N.
pub fn graph_stats(g: &NavGraph) -> GraphStats {
    let nodes = g.nodes.len();
    let edges = g.edges.len();
    let mean_edge_length = if edges == 0 { 0.0 } else { g.edges.iter().map(|e| e.2).sum::<f64>() / edges as f64 };
    let mean_degree = if nodes == 0 { 0.0 } else { 2.0 * edges as f64 / nodes as f64 };
    GraphStats { nodes, edges, mean_edge_length, mean_degree }
}

/// Lattice over passable cell centres with 4-neighbour edges.
#[derive(Debug, Clone, PartialEq)]
pub struct GridGraph {
    pub cell: f64,
    pub origin: Point,
    pub cols: usize,
    pub rows: usize,
    /// Node id per lattice cell, row-major (`row * cols + col`).
    cell_node: Vec<Option<usize>>,
    /// (col, row) per node.
    pub cells: Vec<(usize, usize)>,
    pub nodes: Vec<Point>,
    adj: Vec<Vec<(usize, f64)>>,
}

impl Graph for GridGraph {
    fn node_count(&self) -> usize {
        self.nodes.len()
    }
    fn point(&self, id: usize) -> Point {
        self.nodes[id]
    }
    fn neighbors(&self, id: usize) -> &[(usize, f64)] {
        &self.adj[id]
    }
}

impl GridGraph {
    pub fn node_at(&self, col: usize, row: usize) -> Option<usize> {
        if col < self.cols && row < self.rows {
            self.cell_node[row * self.cols + col]
        } else {
            None
        }
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    fn center(&self, col: usize, row: usize) -> Point {
        Point::new(self.origin.x + (col as f64 + 0.5) * self.cell, self.origin.y + (row as f64 + 0.5) * self.cell)
    }

    /// Nearest node by Euclidean distance, ties to the smaller id, searched in
    /// rings of cells around the point.
    pub fn snap(&self, p: Point) -> usize {
        let fc = ((p.x - self.origin.x) / self.cell).floor();
        let fr = ((p.y - self.origin.y) / self.cell).floor();
        let inside = fc >= 0.0 && fr >= 0.0 && (fc as usize) < self.cols && (fr as usize) < self.rows;
        if !inside {
            return snap(self, p);
        }
        let (c0, r0) = (fc as i64, fr as i64);
        let mut best: Option<(f64, usize)> = None;
        let max_r = self.cols.max(self.rows) as i64;
        for r in 0..=max_r {
            if let Some((d, _)) = best {
                if (r as f64 - 0.5) * self.cell > d + TIE_EPS {
                    break;
                }
            }
            for dr in -r..=r {
                for dc in -r..=r {
                    if dr.abs() != r && dc.abs() != r {
                        continue;
                    }
                    let (c, rr) = (c0 + dc, r0 + dr);
                    if c < 0 || rr < 0 {
                        continue;
                    }
                    if let Some(id) = self.node_at(c as usize, rr as usize) {
                        let d = self.nodes[id].dist(p);
                        best = match best {
                            Some((bd, bid)) if bd < d - TIE_EPS || ((bd - d).abs() <= TIE_EPS && bid < id) => {
                                Some((bd, bid))
                            }
                            _ => Some((d, id)),
                        };
                    }
                }
            }
        }
        best.map_or_else(|| snap(self, p), |(_, id)| id)
    }

    /// Hop-count BFS from a set of sources, scaled to meters.
    pub fn bfs_distances(&self, sources: &[usize]) -> Vec<f64> {
        let mut hops = vec![usize::MAX; self.nodes.len()];
        let mut q = VecDeque::new();
        for &s in sources {
            if hops[s] == usize::MAX {
                hops[s] = 0;
                q.push_back(s);
            }
        }
        while let Some(u) = q.pop_front() {
            for &(v, _) in &self.adj[u] {
                if hops[v] == usize::MAX {
                    hops[v] = hops[u] + 1;
                    q.push_back(v);
                }
            }
        }
        hops.into_iter().map(|h| if h == usize::MAX { f64::INFINITY } else { h as f64 * self.cell }).collect()
    }
}

pub fn build_grid_graph(map: &WorldMap, cell: f64) -> Result<GridGraph, GraphError> {
    if !(cell > 0.0) || !cell.is_finite() {
        return Err(GraphError::InvalidParameter(format!("cell size must be positive, got {cell}")));
    }
    let b = map.bounds();
    if b.area() <= 0.0 {
        return Err(GraphError::DegenerateMap);
    }
    let cols = ((b.width() / cell) - 1e-9).ceil().max(1.0) as usize;
    let rows = ((b.height() / cell) - 1e-9).ceil().max(1.0) as usize;
    let mut g = GridGraph {
        cell,
        origin: b.min,
        cols,
        rows,
        cell_node: vec![None; cols * rows],
        cells: Vec::new(),
        nodes: Vec::new(),
        adj: Vec::new(),
    };
    for row in 0..rows {
        for col in 0..cols {
            let c = g.center(col, row);
            if map.is_passable(c) {
                g.cell_node[row * cols + col] = Some(g.nodes.len());
                g.cells.push((col, row));
                g.nodes.push(c);
            }
        }
    }
    if g.nodes.is_empty() {
        return Err(GraphError::DegenerateMap);
    }
    let mut edges = Vec::new();
    for (id, &(col, row)) in g.cells.iter().enumerate() {
        for (nc, nr) in [(col + 1, row), (col, row + 1)] {
            if let Some(other) = g.node_at(nc, nr) {
                if map.segment_passable(g.nodes[id], g.nodes[other]) {
                    edges.push((id, other, cell));
                }
            }
        }
    }
    g.adj = build_adjacency(g.nodes.len(), &edges);
    Ok(g)
}

/// Nearest node by Euclidean distance; ties go to the smaller id.
pub fn snap<G: Graph + ?Sized>(g: &G, p: Point) -> usize {
    let mut best = (f64::INFINITY, 0usize);
    for id in 0..g.node_count() {
        let d = g.point(id).dist(p);
        if d < best.0 - TIE_EPS {
            best = (d, id);
        }
    }
    best.1
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (dist, node)
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra from a set of sources. Returns distances and predecessors; at
/// equal distance the smaller predecessor id wins.
pub fn dijkstra<G: Graph + ?Sized>(g: &G, sources: &[usize]) -> (Vec<f64>, Vec<Option<usize>>) {
    let n = g.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![None; n];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        dist[s] = 0.0;
        heap.push(HeapItem { dist: 0.0, node: s });
    }
    let mut done = vec![false; n];
    while let Some(HeapItem { dist: d, node: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for &(v, w) in g.neighbors(u) {
            let nd = d + w;
            if nd < dist[v] - TIE_EPS {
                dist[v] = nd;
                pred[v] = Some(u);
                heap.push(HeapItem { dist: nd, node: v });
            } else if !done[v] && (nd - dist[v]).abs() <= TIE_EPS && pred[v].is_some_and(|p| u < p) {
                pred[v] = Some(u);
            }
        }
    }
    (dist, pred)
}

/// Minimal-weight path `a -> b` as a node list plus its length.
pub fn shortest_path<G: Graph + ?Sized>(g: &G, a: usize, b: usize) -> Result<(Vec<usize>, f64), GraphError> {
    let n = g.node_count();
    for id in [a, b] {
        if id >= n {
            return Err(GraphError::UnknownNode(id));
        }
    }
    if a == b {
        return Ok((vec![a], 0.0));
    }
    let (dist, pred) = dijkstra(g, &[a]);
    if !dist[b].is_finite() {
        return Err(GraphError::Unreachable(a, b));
    }
    let mut path = vec![b];
    let mut cur = b;
    while let Some(p) = pred[cur] {
        path.push(p);
        cur = p;
    }
    path.reverse();
    Ok((path, dist[b]))
}
