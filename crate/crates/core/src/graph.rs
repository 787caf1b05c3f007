//! Finite multigraphs with a geometric embedding: boxes, subdivided and
//! parallel lattices, ghost augmentation, shift-invariant graphs and the
//! monotone surgeries.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use crate::{Error, Result};

/// Upper bound on the number of vertices any builder will allocate.
pub const MAX_VERTICES: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Lattice,
    Subdivision,
    Ghost,
    /// Frozen exterior vertex carrying the Dirichlet condition.
    Exterior,
}

impl Role {
    fn as_str(self) -> &'static str {
        match self {
            Role::Lattice => "lattice",
            Role::Subdivision => "subdivision",
            Role::Ghost => "ghost",
            Role::Exterior => "exterior",
        }
    }

    fn parse(s: &str) -> Result<Role> {
        Ok(match s {
            "lattice" => Role::Lattice,
            "subdivision" => Role::Subdivision,
            "ghost" => Role::Ghost,
            "exterior" => Role::Exterior,
            other => return Err(Error::Parse(format!("unknown vertex role `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub id: usize,
    pub coord: Vec<f64>,
    pub role: Role,
}

/// Position of an edge inside the subdivided or parallel image of a parent edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Origin {
    pub parent: usize,
    /// 1-based segment (subdivision, counted from the smaller parent endpoint)
    /// or parallel index.
    pub index: usize,
    pub of: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: usize,
    /// Endpoints with `u < v`.
    pub u: usize,
    pub v: usize,
    /// 1-based parallel index, unique per unordered endpoint pair.
    pub k: usize,
    pub slot: usize,
    pub origin: Option<Origin>,
}

impl Edge {
    pub fn other(&self, x: usize) -> usize {
        if x == self.u {
            self.v
        } else {
            self.u
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeGraph {
    pub dimension: usize,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    /// Sorted inner-boundary vertex ids.
    pub boundary: Vec<usize>,
    /// Half-width of the underlying box, if the graph was built from one.
    pub box_l: Option<usize>,
    pub ghost: Option<usize>,
    pub lambda_edge: Option<usize>,
    /// Subdivision order applied so far.
    pub n_sub: usize,
}

fn pair_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl LatticeGraph {
    /// Empty graph in dimension `d`.
    pub fn empty(dimension: usize) -> Self {
        LatticeGraph {
            dimension,
            vertices: Vec::new(),
            edges: Vec::new(),
            boundary: Vec::new(),
            box_l: None,
            ghost: None,
            lambda_edge: None,
            n_sub: 1,
        }
    }

    /// Abstract graph on `n` vertices with the listed edges; vertices are
    /// placed on the first axis.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = LatticeGraph::empty(1);
        for i in 0..n {
            g.push_vertex(vec![i as f64], Role::Lattice);
        }
        for &(a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn push_vertex(&mut self, coord: Vec<f64>, role: Role) -> usize {
        let id = self.vertices.len();
        self.vertices.push(Vertex { id, coord, role });
        id
    }

    /// Appends an edge; the parallel index and slot are assigned automatically.
    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<usize> {
        let slot = self.edges.iter().map(|e| e.slot + 1).max().unwrap_or(0);
        self.add_edge_with(a, b, slot, None)
    }

    fn add_edge_with(&mut self, a: usize, b: usize, slot: usize, origin: Option<Origin>) -> Result<usize> {
        let n = self.vertices.len();
        if a >= n || b >= n {
            return Err(Error::arg(format!("edge ({a}, {b}) references a missing vertex")));
        }
        if a == b {
            return Err(Error::Structure(format!("self-loop at vertex {a}")));
        }
        let (u, v) = pair_key(a, b);
        let k = 1 + self.edges.iter().filter(|e| e.u == u && e.v == v).count();
        let id = self.edges.len();
        self.edges.push(Edge {
            id,
            u,
            v,
            k,
            slot,
            origin,
        });
        Ok(id)
    }

    /// Vertex-to-incident-edge lists, each sorted by edge id.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for e in &self.edges {
            adj[e.u].push(e.id);
            adj[e.v].push(e.id);
        }
        adj
    }

    pub fn degree(&self, x: usize) -> usize {
        self.edges.iter().filter(|e| e.u == x || e.v == x).count()
    }

    /// Vertex at exactly the given coordinate.
    pub fn find_vertex(&self, coord: &[f64]) -> Option<usize> {
        self.vertices.iter().position(|v| {
            v.coord.len() == coord.len() && v.coord.iter().zip(coord).all(|(a, b)| (a - b).abs() < 1e-9)
        })
    }

    /// The lattice vertex at the origin, or vertex 0 when there is none.
    pub fn origin(&self) -> usize {
        let zero = vec![0.0; self.dimension];
        self.find_vertex(&zero)
            .filter(|&i| self.vertices[i].role == Role::Lattice)
            .unwrap_or(0)
    }

    /// Id of the box vertex with integer coordinates `x`, for graphs whose
    /// lattice vertices come first in row-major order.
    pub fn box_index(&self, x: &[i64]) -> Option<usize> {
        let l = self.box_l? as i64;
        if x.len() != self.dimension {
            return None;
        }
        let side = 2 * l + 1;
        let mut idx = 0i64;
        for &c in x {
            if c < -l || c > l {
                return None;
            }
            idx = idx * side + (c + l);
        }
        Some(idx as usize)
    }

    /// Ids with role [`Role::Exterior`].
    pub fn exterior(&self) -> Vec<usize> {
        self.vertices.iter().filter(|v| v.role == Role::Exterior).map(|v| v.id).collect()
    }

    /// Connected components as a label per vertex plus the component count.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let mut uf = UnionFind::new(self.vertices.len());
        for e in &self.edges {
            uf.union(e.u, e.v);
        }
        uf.labels()
    }

    pub fn is_connected(&self) -> bool {
        self.vertices.is_empty() || self.components().1 == 1
    }

    /// Edges between distinct vertices grouped by unordered endpoint pair.
    pub fn edge_multiset(&self) -> BTreeMap<(usize, usize), usize> {
        let mut m = BTreeMap::new();
        for e in &self.edges {
            *m.entry((e.u, e.v)).or_insert(0) += 1;
        }
        m
    }

    /// Serializes in the line format `d L n` / `V id x y [z] role` / `E id u v k slot`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {}", self.dimension, self.box_l.map_or(-1, |l| l as i64), self.n_sub);
        for v in &self.vertices {
            let _ = write!(s, "V {}", v.id);
            for c in &v.coord {
                let _ = write!(s, " {c}");
            }
            let _ = writeln!(s, " {}", v.role.as_str());
        }
        for e in &self.edges {
            let _ = writeln!(s, "E {} {} {} {} {}", e.id, e.u, e.v, e.k, e.slot);
        }
        s
    }

    /// Parses the output of [`Self::to_text`]; boundary and ghost markers are
    /// recomputed from roles and the box size.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty graph file".into()))?;
        let h: Vec<i64> = header
            .split_whitespace()
            .map(|t| t.parse::<i64>().map_err(|e| Error::Parse(format!("header: {e}"))))
            .collect::<Result<_>>()?;
        if h.len() != 3 || h[0] < 1 {
            return Err(Error::Parse("header must be `d L n`".into()));
        }
        let d = h[0] as usize;
        let mut g = LatticeGraph::empty(d);
        g.box_l = (h[1] >= 0).then_some(h[1] as usize);
        g.n_sub = h[2].max(1) as usize;
        let num = |t: &str| t.parse::<f64>().map_err(|e| Error::Parse(e.to_string()));
        let int = |t: &str| t.parse::<usize>().map_err(|e| Error::Parse(e.to_string()));
        for line in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.first().copied() {
                Some("V") => {
                    if toks.len() < 3 {
                        return Err(Error::Parse(format!("bad vertex line `{line}`")));
                    }
                    let id = int(toks[1])?;
                    if id != g.vertices.len() {
                        return Err(Error::Parse(format!("vertex ids must be dense, got {id}")));
                    }
                    let coord = toks[2..toks.len() - 1].iter().map(|t| num(t)).collect::<Result<Vec<_>>>()?;
                    let role = Role::parse(toks[toks.len() - 1])?;
                    let id = g.push_vertex(coord, role);
                    if role == Role::Ghost {
                        g.ghost = Some(id);
                    }
                }
                Some("E") => {
                    if toks.len() != 6 {
                        return Err(Error::Parse(format!("bad edge line `{line}`")));
                    }
                    let id = int(toks[1])?;
                    if id != g.edges.len() {
                        return Err(Error::Parse(format!("edge ids must be dense, got {id}")));
                    }
                    let (u, v, k, slot) = (int(toks[2])?, int(toks[3])?, int(toks[4])?, int(toks[5])?);
                    let e = g.add_edge_with(u, v, slot, None)?;
                    if g.edges[e].k != k {
                        return Err(Error::Parse(format!("edge {id}: parallel index {k} out of order")));
                    }
                }
                _ => return Err(Error::Parse(format!("unrecognised line `{line}`"))),
            }
        }
        if let Some(l) = g.box_l {
            g.boundary = g
                .vertices
                .iter()
                .filter(|v| v.role == Role::Lattice && v.coord.iter().any(|c| c.abs() == l as f64))
                .map(|v| v.id)
                .collect();
        }
        if let Some(gh) = g.ghost {
            let o = g.origin();
            g.lambda_edge = g.edges.iter().rev().find(|e| pair_key(e.u, e.v) == pair_key(o, gh)).map(|e| e.id);
        }
        Ok(g)
    }
}

/// Box `Λ_L = {-L..L}^d` with nearest-neighbour edges.
pub fn build_lattice_box(d: usize, l: usize) -> Result<LatticeGraph> {
    if d == 0 {
        return Err(Error::arg("dimension must be at least 1"));
    }
    let side = 2 * l + 1;
    let count = (side as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
    if count > MAX_VERTICES as u128 {
        return Err(Error::Size(format!("box of {count} vertices exceeds {MAX_VERTICES}")));
    }
    let count = count as usize;
    let li = l as i64;
    let mut g = LatticeGraph::empty(d);
    g.box_l = Some(l);
    let mut coords = Vec::with_capacity(count);
    for idx in 0..count {
        let mut rem = idx;
        let mut c = vec![0i64; d];
        for slot in c.iter_mut().rev() {
            *slot = (rem % side) as i64 - li;
            rem /= side;
        }
        coords.push(c);
    }
    for c in &coords {
        let id = g.push_vertex(c.iter().map(|&x| x as f64).collect(), Role::Lattice);
        if c.iter().any(|&x| x.abs() == li) {
            g.boundary.push(id);
        }
    }
    let mut slot = 0;
    for (idx, c) in coords.iter().enumerate() {
        let mut stride = 1usize;
        for axis in (0..d).rev() {
            if c[axis] < li {
                g.edges.push(Edge {
                    id: slot,
                    u: idx,
                    v: idx + stride,
                    k: 1,
                    slot,
                    origin: None,
                });
                slot += 1;
            }
            stride *= side;
        }
    }
    g.edges.sort_by_key(|e| (e.u, e.v));
    for (i, e) in g.edges.iter_mut().enumerate() {
        e.id = i;
        e.slot = i;
    }
    Ok(g)
}

/// Replaces every non-ghost edge by a path of `n` segments.
pub fn subdivide_edges(g: &LatticeGraph, n: usize) -> Result<LatticeGraph> {
    subdivide_edges_where(g, n, |e| g.ghost.map_or(true, |gh| e.u != gh && e.v != gh))
}

/// Replaces each selected edge by a path of `n` segments through `n - 1` new
/// subdivision vertices; segment `i` sits next to the smaller endpoint for
/// `i = 1` and inherits the parent's slot.
pub fn subdivide_edges_where(g: &LatticeGraph, n: usize, select: impl Fn(&Edge) -> bool) -> Result<LatticeGraph> {
    if n == 0 {
        return Err(Error::arg("subdivision order must be at least 1"));
    }
    if n == 1 {
        return Ok(g.clone());
    }
    let selected: Vec<bool> = g.edges.iter().map(&select).collect();
    let extra = selected.iter().filter(|&&s| s).count() * (n - 1);
    if g.n_vertices() + extra > MAX_VERTICES {
        return Err(Error::Size(format!("subdivision needs {} vertices", g.n_vertices() + extra)));
    }
    let mut out = LatticeGraph {
        edges: Vec::new(),
        n_sub: g.n_sub * n,
        lambda_edge: None,
        ..g.clone()
    };
    for e in &g.edges {
        if !selected[e.id] {
            let id = out.add_edge_with(e.u, e.v, e.slot, e.origin)?;
            if g.lambda_edge == Some(e.id) {
                out.lambda_edge = Some(id);
            }
            continue;
        }
        let (a, b) = (&g.vertices[e.u].coord, &g.vertices[e.v].coord);
        let mut prev = e.u;
        for i in 1..n {
            let t = i as f64 / n as f64;
            let c = a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect();
            let w = out.push_vertex(c, Role::Subdivision);
            out.add_edge_with(prev, w, e.slot, Some(Origin { parent: e.id, index: i, of: n }))?;
            prev = w;
        }
        out.add_edge_with(prev, e.v, e.slot, Some(Origin { parent: e.id, index: n, of: n }))?;
    }
    Ok(out)
}

/// Replaces every non-ghost edge by `n` parallel edges with their own slots.
pub fn parallelize_edges(g: &LatticeGraph, n: usize) -> Result<LatticeGraph> {
    if n == 0 {
        return Err(Error::arg("parallel multiplicity must be at least 1"));
    }
    if n == 1 {
        return Ok(g.clone());
    }
    let mut out = LatticeGraph {
        edges: Vec::new(),
        lambda_edge: None,
        ..g.clone()
    };
    let mut slot = 0;
    for e in &g.edges {
        let ghost_edge = g.ghost.is_some_and(|gh| e.u == gh || e.v == gh);
        if ghost_edge {
            let id = out.add_edge_with(e.u, e.v, slot, e.origin)?;
            slot += 1;
            if g.lambda_edge == Some(e.id) {
                out.lambda_edge = Some(id);
            }
            continue;
        }
        for k in 1..=n {
            out.add_edge_with(e.u, e.v, slot, Some(Origin { parent: e.id, index: k, of: n }))?;
            slot += 1;
        }
    }
    Ok(out)
}

/// Adds the ghost vertex, one edge to each boundary vertex and the extra
/// λ-edge to the origin.
pub fn ghost_augment(g: &LatticeGraph) -> Result<LatticeGraph> {
    if g.ghost.is_some() || g.vertices.iter().any(|v| v.role == Role::Ghost) {
        return Err(Error::State("graph already has a ghost vertex".into()));
    }
    let o = g.origin();
    if g.vertices.is_empty() {
        return Err(Error::arg("cannot augment an empty graph"));
    }
    let mut out = g.clone();
    let gh = out.push_vertex(vec![f64::NAN; g.dimension], Role::Ghost);
    out.ghost = Some(gh);
    let mut slot = g.edges.iter().map(|e| e.slot + 1).max().unwrap_or(0);
    for &b in &g.boundary {
        out.add_edge_with(b, gh, slot, None)?;
        slot += 1;
    }
    out.lambda_edge = Some(out.add_edge_with(o, gh, slot, None)?);
    Ok(out)
}

/// Adds one frozen exterior vertex joined to each lattice vertex once per
/// missing nearest neighbour (degree deficit below `2d`), realising the zero
/// boundary condition outside the graph.
pub fn dirichlet_closure(g: &LatticeGraph) -> Result<LatticeGraph> {
    if !g.exterior().is_empty() {
        return Err(Error::State("graph already has an exterior vertex".into()));
    }
    let full = 2 * g.dimension;
    let mut neighbours = vec![0usize; g.n_vertices()];
    let mut seen = std::collections::HashSet::new();
    for e in &g.edges {
        if seen.insert((e.u, e.v)) {
            neighbours[e.u] += 1;
            neighbours[e.v] += 1;
        }
    }
    let mut out = g.clone();
    let ext = out.push_vertex(vec![f64::INFINITY; g.dimension], Role::Exterior);
    let mut slot = g.edges.iter().map(|e| e.slot + 1).max().unwrap_or(0);
    for v in &g.vertices {
        if v.role != Role::Lattice {
            continue;
        }
        if neighbours[v.id] > full {
            return Err(Error::Structure(format!("vertex {} has more than {full} neighbours", v.id)));
        }
        for _ in neighbours[v.id]..full {
            out.add_edge_with(v.id, ext, slot, None)?;
            slot += 1;
        }
    }
    Ok(out)
}

/// Rectangle `{0..w-1} × {0..h-1}` with nearest-neighbour edges, row-major
/// with the first coordinate slowest.
pub fn build_rect(w: usize, h: usize) -> Result<LatticeGraph> {
    if w == 0 || h == 0 {
        return Err(Error::arg("rectangle sides must be positive"));
    }
    if w.saturating_mul(h) > MAX_VERTICES {
        return Err(Error::Size(format!("rectangle of {} vertices", w * h)));
    }
    let mut g = LatticeGraph::empty(2);
    for i in 0..w {
        for j in 0..h {
            let id = g.push_vertex(vec![i as f64, j as f64], Role::Lattice);
            if i == 0 || j == 0 || i + 1 == w || j + 1 == h {
                g.boundary.push(id);
            }
        }
    }
    for i in 0..w {
        for j in 0..h {
            let id = i * h + j;
            if j + 1 < h {
                g.add_edge_with(id, id + 1, g.edges.len(), None)?;
            }
            if i + 1 < w {
                g.add_edge_with(id, id + h, g.edges.len(), None)?;
            }
        }
    }
    Ok(g)
}

/// Merges `v` into `u`; self-loops are dropped and ids are re-densified.
pub fn identify_vertices(g: &LatticeGraph, u: usize, v: usize) -> Result<LatticeGraph> {
    let n = g.n_vertices();
    if u >= n || v >= n {
        return Err(Error::arg(format!("unknown vertex in identify({u}, {v})")));
    }
    if u == v {
        return Err(Error::arg("cannot identify a vertex with itself"));
    }
    let (keep, drop) = pair_key(u, v);
    let relabel = |x: usize| {
        let x = if x == drop { keep } else { x };
        if x > drop {
            x - 1
        } else {
            x
        }
    };
    let mut out = LatticeGraph {
        vertices: Vec::with_capacity(n - 1),
        edges: Vec::new(),
        boundary: Vec::new(),
        ghost: g.ghost.map(relabel),
        lambda_edge: None,
        ..g.clone()
    };
    for vx in &g.vertices {
        if vx.id != drop {
            let role = if vx.id == keep && g.vertices[drop].role == Role::Exterior {
                Role::Exterior
            } else {
                vx.role
            };
            out.push_vertex(vx.coord.clone(), role);
        }
    }
    let mut b: Vec<usize> = g.boundary.iter().map(|&x| relabel(x)).collect();
    b.sort_unstable();
    b.dedup();
    out.boundary = b;
    for e in &g.edges {
        let (a, c) = (relabel(e.u), relabel(e.v));
        if a == c {
            continue;
        }
        let id = out.add_edge_with(a, c, e.slot, e.origin)?;
        if g.lambda_edge == Some(e.id) {
            out.lambda_edge = Some(id);
        }
    }
    Ok(out)
}

/// Undoes subdivision: every subdivision vertex is merged into its path.
pub fn contract_subdivisions(g: &LatticeGraph) -> Result<LatticeGraph> {
    let mut out = g.clone();
    while let Some(s) = out.vertices.iter().rposition(|v| v.role == Role::Subdivision) {
        let nb = out.edges.iter().find(|e| e.u == s || e.v == s).map(|e| e.other(s));
        let nb = nb.ok_or_else(|| Error::Structure(format!("isolated subdivision vertex {s}")))?;
        out = identify_vertices(&out, nb, s)?;
    }
    out.n_sub = 1;
    Ok(out)
}

/// Breadth-first spanning tree from the ghost (else the origin), scanning
/// incident edges by increasing id; returns sorted edge ids.
pub fn spanning_tree(g: &LatticeGraph) -> Result<Vec<usize>> {
    let root = g.ghost.unwrap_or_else(|| g.origin());
    let adj = g.adjacency();
    let mut seen = vec![false; g.n_vertices()];
    let mut tree = Vec::with_capacity(g.n_vertices().saturating_sub(1));
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(x) = queue.pop_front() {
        for &e in &adj[x] {
            let y = g.edges[e].other(x);
            if !seen[y] {
                seen[y] = true;
                tree.push(e);
                queue.push_back(y);
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Structure("graph is disconnected".into()));
    }
    tree.sort_unstable();
    Ok(tree)
}

/// Depth-first spanning tree from the highest vertex id, scanning incident
/// edges by decreasing id; an alternative tree for independence checks.
pub fn spanning_tree_dfs(g: &LatticeGraph) -> Result<Vec<usize>> {
    let n = g.n_vertices();
    if n == 0 {
        return Ok(Vec::new());
    }
    let adj = g.adjacency();
    let mut seen = vec![false; n];
    let mut tree = Vec::new();
    let mut stack = vec![n - 1];
    seen[n - 1] = true;
    let mut cursor = vec![0usize; n];
    while let Some(&x) = stack.last() {
        let list = &adj[x];
        if cursor[x] < list.len() {
            let e = list[list.len() - 1 - cursor[x]];
            cursor[x] += 1;
            let y = g.edges[e].other(x);
            if !seen[y] {
                seen[y] = true;
                tree.push(e);
                stack.push(y);
            }
        } else {
            stack.pop();
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Structure("graph is disconnected".into()));
    }
    tree.sort_unstable();
    Ok(tree)
}

/// Breadth-first spanning forest, rooting each component at its smallest id.
pub fn spanning_forest(g: &LatticeGraph) -> Vec<usize> {
    let adj = g.adjacency();
    let mut seen = vec![false; g.n_vertices()];
    let mut tree = Vec::new();
    for root in 0..g.n_vertices() {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(x) = queue.pop_front() {
            for &e in &adj[x] {
                let y = g.edges[e].other(x);
                if !seen[y] {
                    seen[y] = true;
                    tree.push(e);
                    queue.push_back(y);
                }
            }
        }
    }
    tree.sort_unstable();
    tree
}

/// Expresses each tree-edge flow through the cotree flows and vertex sources.
///
/// Edges are oriented from `u` to `v`; the divergence at `x` is the outgoing
/// minus the incoming flow. Given cotree flows `k_c` and sources `s`, the
/// unique tree flows with divergence `s` are
/// `k_t = Σ_c coeffs[t][c] k_c + Σ_{x ∈ subtree[t]} sign[t] s_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeExtension {
    pub tree: Vec<usize>,
    pub cotree: Vec<usize>,
    pub coeffs: Vec<Vec<i64>>,
    /// Vertices below each tree edge (on the child side).
    pub subtree: Vec<Vec<usize>>,
    /// `+1` when the child is the edge's `u` endpoint, `-1` otherwise.
    pub sign: Vec<i64>,
    /// Component label of every vertex.
    pub component: Vec<usize>,
}

impl TreeExtension {
    /// Tree flows for the given cotree flows and sources.
    pub fn extend(&self, cotree_flows: &[i64], sources: &[i64]) -> Vec<i64> {
        (0..self.tree.len())
            .map(|t| {
                let mut k: i64 = self.coeffs[t].iter().zip(cotree_flows).map(|(a, b)| a * b).sum();
                if !sources.is_empty() {
                    k += self.sign[t] * self.subtree[t].iter().map(|&x| sources[x]).sum::<i64>();
                }
                k
            })
            .collect()
    }
}

/// Builds the extension for a spanning forest `tree` of `g`.
pub fn tree_extension(g: &LatticeGraph, tree: &[usize]) -> Result<TreeExtension> {
    let n = g.n_vertices();
    let mut in_tree = vec![false; g.n_edges()];
    for &t in tree {
        if t >= g.n_edges() {
            return Err(Error::arg(format!("tree edge {t} out of range")));
        }
        in_tree[t] = true;
    }
    let cotree: Vec<usize> = (0..g.n_edges()).filter(|&e| !in_tree[e]).collect();
    let mut tadj = vec![Vec::new(); n];
    for &t in tree {
        tadj[g.edges[t].u].push(t);
        tadj[g.edges[t].v].push(t);
    }
    let mut parent_edge = vec![usize::MAX; n];
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut component = vec![0; n];
    let mut comp = 0;
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut stack = vec![root];
        while let Some(x) = stack.pop() {
            order.push(x);
            component[x] = comp;
            for &t in &tadj[x] {
                let y = g.edges[t].other(x);
                if !seen[y] {
                    seen[y] = true;
                    parent_edge[y] = t;
                    stack.push(y);
                } else if parent_edge[x] != t {
                    return Err(Error::Structure("tree edges contain a cycle".into()));
                }
            }
        }
        comp += 1;
    }
    let (_, n_comp) = g.components();
    if comp != n_comp || tree.len() != n - n_comp {
        return Err(Error::Structure("edge set is not a spanning forest".into()));
    }
    let mut below: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &x in order.iter().rev() {
        below[x].push(x);
        let t = parent_edge[x];
        if t != usize::MAX {
            let p = g.edges[t].other(x);
            let mine = std::mem::take(&mut below[x]);
            below[p].extend(mine.iter().copied());
            below[x] = mine;
        }
    }
    let mut coeffs = Vec::with_capacity(tree.len());
    let mut subtree = Vec::with_capacity(tree.len());
    let mut sign = Vec::with_capacity(tree.len());
    for &t in tree {
        let e = &g.edges[t];
        let child = if parent_edge[e.u] == t { e.u } else { e.v };
        let mut inside = vec![false; n];
        for &x in &below[child] {
            inside[x] = true;
        }
        let sg = if child == e.u { 1 } else { -1 };
        // Flow leaving the subtree through t equals the sources inside minus the
        // net cotree outflow from inside.
        let row = cotree
            .iter()
            .map(|&c| {
                let ce = &g.edges[c];
                sg * (inside[ce.v] as i64 - inside[ce.u] as i64)
            })
            .collect();
        coeffs.push(row);
        let mut sub = below[child].clone();
        sub.sort_unstable();
        subtree.push(sub);
        sign.push(sg);
    }
    Ok(TreeExtension {
        tree: tree.to_vec(),
        cotree,
        coeffs,
        subtree,
        sign,
        component,
    })
}

/// Periodic planar graph given by one fundamental cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftInvariantSpec {
    pub cell_vertices: Vec<[f64; 2]>,
    /// `(i, j, offset)`: vertex `i` of a cell joins vertex `j` of the cell
    /// shifted by `offset` lattice vectors.
    pub cell_edges: Vec<(usize, usize, [i64; 2])>,
    pub lattice_vectors: [[f64; 2]; 2],
    pub coarse_radius: usize,
}

impl ShiftInvariantSpec {
    /// The square lattice `Z²`.
    pub fn square() -> Self {
        ShiftInvariantSpec {
            cell_vertices: vec![[0.0, 0.0]],
            cell_edges: vec![(0, 0, [1, 0]), (0, 0, [0, 1])],
            lattice_vectors: [[1.0, 0.0], [0.0, 1.0]],
            coarse_radius: 1,
        }
    }

    /// The triangular lattice with a unit horizontal vector.
    pub fn triangular() -> Self {
        let h = 3f64.sqrt() / 2.0;
        ShiftInvariantSpec {
            cell_vertices: vec![[0.0, 0.0]],
            cell_edges: vec![(0, 0, [1, 0]), (0, 0, [0, 1]), (0, 0, [-1, 1])],
            lattice_vectors: [[1.0, 0.0], [0.5, h]],
            coarse_radius: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [a, b] = self.lattice_vectors;
        let det = a[0] * b[1] - a[1] * b[0];
        if det.abs() < 1e-12 {
            return Err(Error::arg("lattice vectors are not independent"));
        }
        if !self.cell_vertices.iter().any(|p| p[0].abs() < 1e-12 && p[1].abs() < 1e-12) {
            return Err(Error::arg("cell must contain the origin"));
        }
        for &(i, j, _) in &self.cell_edges {
            if i >= self.cell_vertices.len() || j >= self.cell_vertices.len() {
                return Err(Error::arg("cell edge references a missing vertex"));
            }
        }
        Ok(())
    }
}

/// Clips the periodic graph to `[-L, L]²`; all outside vertices collapse to a
/// single frozen exterior vertex.
pub fn build_shift_invariant(spec: &ShiftInvariantSpec, l: usize) -> Result<LatticeGraph> {
    spec.validate()?;
    let lf = l as f64;
    let [a, b] = spec.lattice_vectors;
    let det = a[0] * b[1] - a[1] * b[0];
    let inv = [[b[1] / det, -b[0] / det], [-a[1] / det, a[0] / det]];
    let reach = spec.cell_vertices.iter().map(|p| p[0].abs().max(p[1].abs())).fold(0.0, f64::max);
    let span = lf + reach + 2.0;
    let mut range = 0i64;
    for corner in [[span, span], [span, -span], [-span, span], [-span, -span]] {
        for row in inv {
            range = range.max((row[0] * corner[0] + row[1] * corner[1]).abs().ceil() as i64);
        }
    }
    let inside = |p: [f64; 2]| p[0].abs() <= lf + 1e-9 && p[1].abs() <= lf + 1e-9;
    let pos = |n: [i64; 2], i: usize| {
        let c = spec.cell_vertices[i];
        [
            c[0] + n[0] as f64 * a[0] + n[1] as f64 * b[0],
            c[1] + n[0] as f64 * a[1] + n[1] as f64 * b[1],
        ]
    };
    let mut pts: Vec<([f64; 2], [i64; 2], usize)> = Vec::new();
    for n0 in -range..=range {
        for n1 in -range..=range {
            for i in 0..spec.cell_vertices.len() {
                let p = pos([n0, n1], i);
                if inside(p) {
                    pts.push((p, [n0, n1], i));
                }
            }
        }
    }
    let round = |x: f64| (x * 1e9).round() as i64;
    pts.sort_by_key(|(p, _, _)| (round(p[0]), round(p[1])));
    let mut g = LatticeGraph::empty(2);
    let mut index = std::collections::HashMap::new();
    for (p, n, i) in &pts {
        let id = g.push_vertex(vec![p[0], p[1]], Role::Lattice);
        index.insert((n[0], n[1], *i), id);
    }
    let ext = g.push_vertex(vec![f64::INFINITY, f64::INFINITY], Role::Exterior);
    let mut slot = 0;
    for n0 in -range - 2..=range + 2 {
        for n1 in -range - 2..=range + 2 {
            for &(i, j, off) in &spec.cell_edges {
                let s = index.get(&(n0, n1, i)).copied();
                let t = index.get(&(n0 + off[0], n1 + off[1], j)).copied();
                let (s, t) = match (s, t) {
                    (Some(s), Some(t)) => (s, t),
                    (Some(s), None) | (None, Some(s)) => (s, ext),
                    (None, None) => continue,
                };
                if s != t {
                    g.add_edge_with(s, t, slot, None)?;
                    slot += 1;
                }
            }
        }
    }
    g.boundary = g.edges.iter().filter(|e| e.v == ext).map(|e| e.u).collect();
    g.boundary.sort_unstable();
    g.boundary.dedup();
    let mut sorted = g.edges.clone();
    sorted.sort_by_key(|e| (e.u, e.v, e.slot));
    g.edges.clear();
    for e in sorted {
        g.add_edge_with(e.u, e.v, e.slot, None)?;
    }
    for (i, e) in g.edges.iter_mut().enumerate() {
        e.slot = i;
    }
    if !g.is_connected() {
        return Err(Error::Structure("clipped shift-invariant graph is disconnected".into()));
    }
    Ok(g)
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns true when the two sets were distinct.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }

    /// Dense labels in order of first appearance, and the number of classes.
    pub fn labels(&mut self) -> (Vec<usize>, usize) {
        let n = self.parent.len();
        let mut label = vec![usize::MAX; n];
        let mut out = vec![0; n];
        let mut next = 0;
        for x in 0..n {
            let r = self.find(x);
            if label[r] == usize::MAX {
                label[r] = next;
                next += 1;
            }
            out[x] = label[r];
        }
        (out, next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_nn_pairs(d: usize, l: i64) -> usize {
        let side = 2 * l + 1;
        let total = side.pow(d as u32);
        let pts: Vec<Vec<i64>> = (0..total)
            .map(|mut i| {
                (0..d)
                    .map(|_| {
                        let c = i % side - l;
                        i /= side;
                        c
                    })
                    .collect()
            })
            .collect();
        let mut count = 0;
        for a in 0..pts.len() {
            for b in a + 1..pts.len() {
                let dist: i64 = pts[a].iter().zip(&pts[b]).map(|(x, y)| (x - y).abs()).sum();
                if dist == 1 {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn box_counts() {
        let g = build_lattice_box(2, 1).unwrap();
        assert_eq!((g.n_vertices(), g.n_edges()), (9, 12));
        let g = build_lattice_box(1, 0).unwrap();
        assert_eq!((g.n_vertices(), g.n_edges()), (1, 0));
        let g = build_lattice_box(3, 1).unwrap();
        assert_eq!((g.n_vertices(), g.n_edges()), (27, brute_nn_pairs(3, 1)));
        assert_eq!(g.n_edges(), 54);
        assert!(matches!(build_lattice_box(3, 1000), Err(Error::Size(_))));
    }

    #[test]
    fn box_index_is_row_major() {
        let g = build_lattice_box(2, 2).unwrap();
        for v in &g.vertices {
            let x: Vec<i64> = v.coord.iter().map(|&c| c as i64).collect();
            assert_eq!(g.box_index(&x), Some(v.id));
        }
        assert_eq!(g.origin(), 12);
        assert_eq!(g.boundary.len(), 16);
    }

    #[test]
    fn subdivision_counts() {
        let g = build_lattice_box(2, 1).unwrap();
        assert_eq!(subdivide_edges(&g, 4).unwrap().n_vertices(), 45);
        assert_eq!(subdivide_edges(&g, 1).unwrap(), g);
        assert!(subdivide_edges(&g, 0).is_err());
        let e = LatticeGraph::from_edges(2, &[(0, 1)]).unwrap();
        let s = subdivide_edges(&e, 3).unwrap();
        assert_eq!((s.n_vertices(), s.n_edges()), (4, 3));
        assert_eq!(s.edges[0].origin.unwrap().index, 1);
        assert_eq!(s.edges[0].u, 0);
    }

    #[test]
    fn parallel_counts() {
        let g = build_lattice_box(2, 1).unwrap();
        assert_eq!(parallelize_edges(&g, 3).unwrap().n_edges(), 36);
        let e = LatticeGraph::from_edges(2, &[(0, 1)]).unwrap();
        let p = parallelize_edges(&e, 2).unwrap();
        assert_eq!(p.edges.iter().map(|e| e.k).collect::<Vec<_>>(), vec![1, 2]);
        assert_ne!(p.edges[0].slot, p.edges[1].slot);
    }

    #[test]
    fn ghost_degrees() {
        let g = ghost_augment(&build_lattice_box(2, 1).unwrap()).unwrap();
        let gh = g.ghost.unwrap();
        assert_eq!(g.degree(gh), 9);
        let e = &g.edges[g.lambda_edge.unwrap()];
        assert_eq!((e.u, e.v), (4, gh));
        let g0 = ghost_augment(&build_lattice_box(2, 0).unwrap()).unwrap();
        assert_eq!(g0.degree(g0.ghost.unwrap()), 2);
        assert!(matches!(ghost_augment(&g0), Err(Error::State(_))));
        assert_eq!(spanning_tree(&g0).unwrap().len(), 1);
    }

    #[test]
    fn identification() {
        let p = LatticeGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let q = identify_vertices(&p, 0, 2).unwrap();
        assert_eq!((q.n_vertices(), q.n_edges()), (2, 2));
        assert_eq!(q.edges[1].k, 2);
        let e = LatticeGraph::from_edges(2, &[(0, 1)]).unwrap();
        let r = identify_vertices(&e, 0, 1).unwrap();
        assert_eq!((r.n_vertices(), r.n_edges()), (1, 0));
        let b = build_lattice_box(2, 1).unwrap();
        let c = identify_vertices(&b, 0, 8).unwrap();
        assert_eq!((c.n_vertices(), c.n_edges()), (8, 12));
        assert!(identify_vertices(&b, 0, 99).is_err());
    }

    #[test]
    fn trees() {
        let p = LatticeGraph::from_edges(2, &[(0, 1), (0, 1)]).unwrap();
        assert_eq!(spanning_tree(&p).unwrap(), vec![0]);
        let b = build_lattice_box(2, 1).unwrap();
        assert_eq!(spanning_tree(&b).unwrap().len(), 8);
        assert_eq!(spanning_tree_dfs(&b).unwrap().len(), 8);
        let d = LatticeGraph::from_edges(3, &[(0, 1)]).unwrap();
        assert!(matches!(spanning_tree(&d), Err(Error::Structure(_))));
    }

    #[test]
    fn extension_has_zero_divergence() {
        let g = ghost_augment(&parallelize_edges(&build_lattice_box(2, 1).unwrap(), 2).unwrap()).unwrap();
        for tree in [spanning_tree(&g).unwrap(), spanning_tree_dfs(&g).unwrap()] {
            let ext = tree_extension(&g, &tree).unwrap();
            let flows: Vec<i64> = (0..ext.cotree.len() as i64).map(|i| (i * 7) % 5 - 2).collect();
            let mut src = vec![0i64; g.n_vertices()];
            src[0] = 3;
            src[5] = -3;
            let t = ext.extend(&flows, &src);
            let mut k = vec![0i64; g.n_edges()];
            for (i, &e) in ext.tree.iter().enumerate() {
                k[e] = t[i];
            }
            for (i, &e) in ext.cotree.iter().enumerate() {
                k[e] = flows[i];
            }
            let mut div = vec![0i64; g.n_vertices()];
            for e in &g.edges {
                div[e.u] += k[e.id];
                div[e.v] -= k[e.id];
            }
            assert_eq!(div, src);
        }
    }

    #[test]
    fn rect_and_closure() {
        let r = build_rect(2, 3).unwrap();
        assert_eq!((r.n_vertices(), r.n_edges()), (6, 7));
        let c = dirichlet_closure(&r).unwrap();
        assert_eq!(c.n_edges(), 7 + 6 * 4 - 14);
        for v in 0..6 {
            assert_eq!(c.degree(v), 4);
        }
    }

    #[test]
    fn text_round_trip() {
        let g = ghost_augment(&build_lattice_box(2, 1).unwrap()).unwrap();
        let back = LatticeGraph::from_text(&g.to_text()).unwrap();
        assert_eq!(back.edge_multiset(), g.edge_multiset());
        assert_eq!(back.boundary, g.boundary);
        assert_eq!(back.lambda_edge, g.lambda_edge);
    }

    #[test]
    fn shift_invariant_square_matches_box() {
        let s = build_shift_invariant(&ShiftInvariantSpec::square(), 1).unwrap();
        let b = dirichlet_closure(&build_lattice_box(2, 1).unwrap()).unwrap();
        assert_eq!(s.n_vertices(), b.n_vertices());
        assert_eq!(s.edge_multiset(), b.edge_multiset());
    }

    #[test]
    fn shift_invariant_triangular_degrees() {
        let g = build_shift_invariant(&ShiftInvariantSpec::triangular(), 2).unwrap();
        let ext = g.exterior()[0];
        for v in &g.vertices {
            if v.id == ext {
                continue;
            }
            let p = [v.coord[0], v.coord[1]];
            let h = 3f64.sqrt() / 2.0;
            let nbrs = [[1.0, 0.0], [-1.0, 0.0], [0.5, h], [-0.5, h], [0.5, -h], [-0.5, -h]];
            let deep = nbrs.iter().all(|d| (p[0] + d[0]).abs() <= 2.0 && (p[1] + d[1]).abs() <= 2.0);
            if deep {
                let inner = g.edges.iter().filter(|e| (e.u == v.id || e.v == v.id) && e.v != ext).count();
                assert_eq!(inner, 6);
            }
            assert_eq!(g.degree(v.id), 6);
        }
    }

    #[test]
    fn shift_invariant_long_edges() {
        let mut spec = ShiftInvariantSpec::square();
        spec.cell_edges.push((0, 0, [2, 0]));
        let g = build_shift_invariant(&spec, 2).unwrap();
        let o = g.origin();
        let far = g.find_vertex(&[2.0, 0.0]).unwrap();
        assert!(g.edges.iter().any(|e| pair_key(e.u, e.v) == pair_key(o, far)));
    }
}
