//! Coarse-graining of a supercritical edge configuration on `Z²` into an
//! integer-valued Gaussian free field on the coarse lattice with diagonal
//! edges, and the exact chain of variance bounds it produces.
//!
//! Closed dual crossings between adjacent good coarse boxes form walls. Keeping
//! only the primal edges dual to the walls (the set `C`) and making every other
//! edge rigid merges each wall cell into one height; the cell heights then form
//! a field on the coarse lattice whose conductances count the wall edges.

use std::collections::BTreeMap;

use crate::exact::{exact_height, GibbsSpec};
use crate::graph::{dirichlet_closure, LatticeGraph, Role, UnionFind};
use crate::percolation::{
    dual_config, extract_crossing_paths_shaped, renorm_window_shaped, renormalized_sites_shaped, sample_bernoulli,
    BoxShape, CrossingPaths, DisorderConfig, Kind, PlanarBox,
};
use crate::potentials::EdgePotential;
use crate::{Error, Result};

/// Slack allowed between consecutive exact values of the bound chain.
pub const CHAIN_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// Rectangle constants at their stated values.
    Verbatim,
    /// `1 × (2L₀+2)` rectangles, for exact small instances.
    Micro,
}

impl Scale {
    pub fn shape(self, l0: usize) -> BoxShape {
        match self {
            Scale::Verbatim => BoxShape::verbatim(l0),
            Scale::Micro => BoxShape::micro(l0),
        }
    }

    /// Upper bound on the wall edges joining two adjacent cells.
    pub fn cap(self, l0: usize) -> usize {
        match self {
            Scale::Verbatim => l0 * l0,
            Scale::Micro => {
                let s = self.shape(l0);
                (s.short * (s.long + 1) + s.long * (s.short + 1)) as usize
            }
        }
    }
}

/// Geometry of a coarse-graining run: coarse sites `[-kx, kx] × [-ky, ky]`,
/// height domain `[-x, x] × [-y, y]` of primal vertices with zero boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub l0: usize,
    pub kx: usize,
    pub ky: usize,
    pub x: i64,
    pub y: i64,
    pub scale: Scale,
}

impl Layout {
    /// Height domain spanning exactly the coarse cells.
    pub fn cells(l0: usize, kx: usize, ky: usize, scale: Scale) -> Self {
        let s = 2 * l0 as i64 + 1;
        Layout {
            l0,
            kx,
            ky,
            x: s * kx as i64 + l0 as i64,
            y: s * ky as i64 + l0 as i64,
            scale,
        }
    }

    /// Three coarse sites in a row at `L₀ = 2`; the height domain is 15 × 5.
    pub fn micro_strip() -> Self {
        Layout::cells(2, 1, 0, Scale::Micro)
    }

    pub fn window(&self) -> usize {
        let r = renorm_window_shaped(self.l0, self.kx.max(self.ky), self.scale.shape(self.l0));
        r.max(self.x.max(self.y) as usize + 1)
    }

    pub fn n_sites(&self) -> usize {
        (2 * self.kx + 1) * (2 * self.ky + 1)
    }

    pub fn site_index(&self, u: i64, v: i64) -> Option<usize> {
        let (kx, ky) = (self.kx as i64, self.ky as i64);
        if u.abs() > kx || v.abs() > ky {
            return None;
        }
        Some(((u + kx) * (2 * ky + 1) + (v + ky)) as usize)
    }

    pub fn site_coords(&self, i: usize) -> (i64, i64) {
        let h = 2 * self.ky + 1;
        ((i / h) as i64 - self.kx as i64, (i % h) as i64 - self.ky as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Nearest,
    Diagonal,
    /// Coarse sites further apart than diagonal neighbours.
    Long,
    Boundary,
    /// Two sites whose centres lie in the same cell.
    Identify,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseEdge {
    /// Node ids: coarse sites, then the exterior at `n_sites`.
    pub a: usize,
    pub b: usize,
    pub kind: EdgeKind,
    /// Edges of the height domain joining the two cells.
    pub count: usize,
    /// Zero means rigid.
    pub conductance: f64,
}

/// Height domain with zero boundary, edges tagged by their window edge.
#[derive(Debug, Clone)]
pub struct Domain {
    pub graph: LatticeGraph,
    /// Window edge of each domain edge; `None` for edges to the exterior.
    pub window_edge: Vec<Option<usize>>,
    /// Domain vertex of each window vertex.
    pub vertex_of: Vec<Option<usize>>,
    pub exterior: usize,
}

impl Domain {
    pub fn new(pb: &PlanarBox, x: i64, y: i64) -> Result<Self> {
        if x > pb.radius || y > pb.radius {
            return Err(Error::Geometry("height domain exceeds the window".into()));
        }
        let mut g = LatticeGraph::empty(2);
        let mut vertex_of = vec![None; pb.graph.n_vertices()];
        for a in -x..=x {
            for b in -y..=y {
                let w = pb.vertex(a, b).expect("inside the window");
                vertex_of[w] = Some(g.push_vertex(vec![a as f64, b as f64], Role::Lattice));
                if a.abs() == x || b.abs() == y {
                    g.boundary.push(vertex_of[w].unwrap());
                }
            }
        }
        let mut window_edge = Vec::new();
        for e in &pb.graph.edges {
            if let (Some(u), Some(v)) = (vertex_of[e.u], vertex_of[e.v]) {
                g.add_edge(u, v)?;
                window_edge.push(Some(e.id));
            }
        }
        let inner = g.n_edges();
        let graph = dirichlet_closure(&g)?;
        window_edge.resize(inner, None);
        window_edge.resize(graph.n_edges(), None);
        let exterior = graph.exterior()[0];
        Ok(Domain {
            graph,
            window_edge,
            vertex_of,
            exterior,
        })
    }

    /// Gaussian heights with inverse temperature `β` on edges where `open`
    /// holds and rigid edges elsewhere.
    pub fn spec(&self, beta: f64, open: impl Fn(usize) -> bool) -> GibbsSpec {
        let pots = (0..self.graph.n_edges())
            .map(|e| EdgePotential::GaussianHeight(if open(e) { beta } else { 0.0 }))
            .collect();
        GibbsSpec::new(self.graph.clone(), pots).expect("one potential per edge")
    }
}

#[derive(Debug, Clone)]
pub struct CoarseSpec {
    pub layout: Layout,
    pub beta: f64,
    /// Coarse site field `r₁*`.
    pub sites: DisorderConfig,
    /// Window edges in `C` open, all others closed.
    pub omega_c: DisorderConfig,
    pub paths: CrossingPaths,
    pub domain: Domain,
    /// Cell of each domain vertex (the exterior included).
    pub component: Vec<usize>,
    pub n_components: usize,
    /// Coarse node of each cell: the first site whose centre it contains, or
    /// the exterior for cells without a centre.
    pub node_of_component: Vec<usize>,
    pub edges: Vec<CoarseEdge>,
    /// Largest wall count between two coarse sites.
    pub max_count: usize,
    pub cap: usize,
}

impl CoarseSpec {
    pub fn exterior_node(&self) -> usize {
        self.layout.n_sites()
    }

    fn node_graph(&self) -> LatticeGraph {
        let n = self.layout.n_sites();
        let mut g = LatticeGraph::empty(2);
        for i in 0..n {
            let (u, v) = self.layout.site_coords(i);
            g.push_vertex(vec![u as f64, v as f64], Role::Lattice);
        }
        g.push_vertex(vec![f64::INFINITY; 2], Role::Exterior);
        g
    }

    /// Coarse field with the conductance rule: `β/count` across walls, rigid
    /// nearest-neighbour edges at closed sites and between sites sharing a
    /// cell, `β` on diagonals without walls.
    pub fn count_spec(&self) -> Result<GibbsSpec> {
        let mut g = self.node_graph();
        let mut pots = Vec::new();
        for e in &self.edges {
            g.add_edge(e.a, e.b)?;
            pots.push(EdgePotential::GaussianHeight(e.conductance));
        }
        GibbsSpec::new(g, pots)
    }

    /// Coarse field with uniform conductance `β / cap` on every open
    /// nearest-neighbour and diagonal edge, keeping rigid edges rigid and
    /// every wall or boundary coupling at most its counted value.
    pub fn uniform_spec(&self) -> Result<GibbsSpec> {
        let cap = self.cap.max(self.max_count) as f64;
        let low = self.beta / cap;
        let mut g = self.node_graph();
        let mut pots = Vec::new();
        let mut covered = std::collections::HashSet::new();
        for e in &self.edges {
            let c = match e.kind {
                EdgeKind::Identify => 0.0,
                EdgeKind::Nearest | EdgeKind::Diagonal | EdgeKind::Long if e.conductance == 0.0 => 0.0,
                EdgeKind::Boundary => self.beta / cap.max(e.count as f64),
                _ => low,
            };
            covered.insert((e.a.min(e.b), e.a.max(e.b)));
            g.add_edge(e.a, e.b)?;
            pots.push(EdgePotential::GaussianHeight(c));
        }
        let lay = &self.layout;
        for i in 0..lay.n_sites() {
            let (u, v) = lay.site_coords(i);
            for (du, dv) in [(1, 0), (0, 1), (1, 1), (1, -1)] {
                let Some(j) = lay.site_index(u + du, v + dv) else { continue };
                if covered.contains(&(i.min(j), i.max(j))) {
                    continue;
                }
                g.add_edge(i, j)?;
                pots.push(EdgePotential::GaussianHeight(low));
            }
        }
        GibbsSpec::new(g, pots)
    }
}

/// Runs the dual, renormalisation and crossing-extraction stages on `omega`
/// and builds the coarse field.
pub fn coarse_grain(pb: &PlanarBox, omega: &DisorderConfig, layout: Layout, beta: f64) -> Result<CoarseSpec> {
    if omega.kind != Kind::Edge || omega.bits.len() != pb.graph.n_edges() {
        return Err(Error::arg("coarse graining needs an edge configuration of the window"));
    }
    let shape = layout.scale.shape(layout.l0);
    let k = (layout.kx, layout.ky);
    let sites = renormalized_sites_shaped(pb, omega, layout.l0, k, shape)?;
    let dual = dual_config(&pb.graph, omega)?;
    let paths = extract_crossing_paths_shaped(pb, &dual, &sites, layout.l0, k, shape)?;
    let mut in_c = vec![false; pb.graph.n_edges()];
    for &e in &paths.primal {
        in_c[e] = true;
    }
    let omega_c = DisorderConfig {
        kind: Kind::Edge,
        bits: in_c.clone(),
        seed: omega.seed,
        p: omega.p,
    };
    let domain = Domain::new(pb, layout.x, layout.y)?;
    let dg = &domain.graph;
    let is_wall = |e: usize| domain.window_edge[e].is_some_and(|w| in_c[w]);
    let is_outer = |e: usize| domain.window_edge[e].is_none();

    let mut uf = UnionFind::new(dg.n_vertices());
    for e in &dg.edges {
        if !is_wall(e.id) && !is_outer(e.id) {
            uf.union(e.u, e.v);
        }
    }
    let (component, n_components) = uf.labels();

    let n_sites = layout.n_sites();
    let ext_node = n_sites;
    let scale = 2 * layout.l0 as i64 + 1;
    let mut node_of_component = vec![usize::MAX; n_components];
    node_of_component[component[domain.exterior]] = ext_node;
    let mut edges = Vec::new();
    for i in 0..n_sites {
        let (u, v) = layout.site_coords(i);
        let w = pb.vertex(scale * u, scale * v).and_then(|w| domain.vertex_of[w]);
        let w = w.ok_or_else(|| Error::Geometry(format!("centre of coarse site ({u},{v}) is outside the domain")))?;
        let c = component[w];
        if node_of_component[c] == usize::MAX {
            node_of_component[c] = i;
        } else {
            edges.push(CoarseEdge {
                a: node_of_component[c],
                b: i,
                kind: EdgeKind::Identify,
                count: 0,
                conductance: 0.0,
            });
        }
    }
    for n in node_of_component.iter_mut() {
        if *n == usize::MAX {
            *n = ext_node;
        }
    }

    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for e in &dg.edges {
        if !(is_wall(e.id) || is_outer(e.id)) {
            continue;
        }
        let (a, b) = (node_of_component[component[e.u]], node_of_component[component[e.v]]);
        if a != b {
            *counts.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let open_site = |i: usize| sites.bits[i];
    let mut max_count = 0;
    let mut closed_pairs = Vec::new();
    for i in 0..n_sites {
        let (u, v) = layout.site_coords(i);
        for (du, dv) in [(1, 0), (0, 1)] {
            if let Some(j) = layout.site_index(u + du, v + dv) {
                if !open_site(i) || !open_site(j) {
                    closed_pairs.push((i, j));
                }
            }
        }
    }
    let mut seen = std::collections::HashSet::new();
    for &(i, j) in &closed_pairs {
        seen.insert((i, j));
        edges.push(CoarseEdge {
            a: i,
            b: j,
            kind: EdgeKind::Nearest,
            count: counts.get(&(i, j)).copied().unwrap_or(0),
            conductance: 0.0,
        });
    }
    for (&(a, b), &n) in &counts {
        if seen.contains(&(a, b)) {
            continue;
        }
        seen.insert((a, b));
        let kind = if b == ext_node {
            EdgeKind::Boundary
        } else {
            let (ua, va) = layout.site_coords(a);
            let (ub, vb) = layout.site_coords(b);
            match ((ua - ub).abs(), (va - vb).abs()) {
                (1, 0) | (0, 1) => EdgeKind::Nearest,
                (1, 1) => EdgeKind::Diagonal,
                _ => EdgeKind::Long,
            }
        };
        if kind != EdgeKind::Boundary {
            max_count = max_count.max(n);
        }
        edges.push(CoarseEdge {
            a,
            b,
            kind,
            count: n,
            conductance: beta / n as f64,
        });
    }
    for i in 0..n_sites {
        let (u, v) = layout.site_coords(i);
        for (du, dv) in [(1, 1), (1, -1)] {
            if let Some(j) = layout.site_index(u + du, v + dv) {
                if seen.insert((i.min(j), i.max(j))) {
                    edges.push(CoarseEdge {
                        a: i,
                        b: j,
                        kind: EdgeKind::Diagonal,
                        count: 0,
                        conductance: beta,
                    });
                }
            }
        }
    }
    Ok(CoarseSpec {
        layout,
        beta,
        sites,
        omega_c,
        paths,
        domain,
        component,
        n_components,
        node_of_component,
        edges,
        max_count,
        cap: layout.scale.cap(layout.l0),
    })
}

#[derive(Debug, Clone)]
pub struct BoundChain {
    /// `(label, value, error bound)` in chain order.
    pub values: Vec<(&'static str, f64, f64)>,
    pub spec: CoarseSpec,
}

impl BoundChain {
    /// Smallest `value[i] − value[i+1]` along the chain.
    pub fn min_step(&self) -> f64 {
        self.values.windows(2).map(|w| w[0].1 - w[1].1).fold(f64::INFINITY, f64::min)
    }

    pub fn non_increasing(&self) -> bool {
        self.values
            .windows(2)
            .all(|w| w[0].1 - w[1].1 >= -(CHAIN_SLACK + w[0].2 + w[1].2))
    }
}

/// Exact `Var[φ(0)]` on the fine field with `ω`, the fine field with `ω_C`,
/// the counted coarse field and the uniform coarse field.
pub fn bound_chain(pb: &PlanarBox, omega: &DisorderConfig, layout: Layout, beta: f64) -> Result<BoundChain> {
    let spec = coarse_grain(pb, omega, layout, beta)?;
    let d = &spec.domain;
    let o = d.vertex_of[pb.vertex(0, 0).expect("origin")].ok_or_else(|| Error::Geometry("origin outside".into()))?;
    let fine = d.spec(beta, |e| d.window_edge[e].is_none_or(|w| omega.bits[w]));
    let walls = d.spec(beta, |e| d.window_edge[e].is_none_or(|w| spec.omega_c.bits[w]));
    let centre = layout.site_index(0, 0).expect("origin site");
    let mut values = Vec::new();
    for (label, s, site) in [
        ("omega", fine, o),
        ("omega_c", walls, o),
        ("coarse", spec.count_spec()?, centre),
        ("coarse_uniform", spec.uniform_spec()?, centre),
    ] {
        let h = exact_height(&s, site)?;
        values.push((label, h.var.value, h.var.error_bound));
    }
    Ok(BoundChain { values, spec })
}

/// Window and Bernoulli edge configuration for a layout.
pub fn sample_instance(layout: Layout, p: f64, seed: u64) -> Result<(PlanarBox, DisorderConfig)> {
    let pb = PlanarBox::new(layout.window())?;
    let omega = sample_bernoulli(&pb.graph, Kind::Edge, p, seed)?;
    Ok((pb, omega))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_closed_micro_chain_is_pinned() {
        let lay = Layout::micro_strip();
        let pb = PlanarBox::new(lay.window()).unwrap();
        let omega = DisorderConfig::constant(Kind::Edge, pb.graph.n_edges(), false);
        let c = bound_chain(&pb, &omega, lay, 2.0).unwrap();
        assert!(c.non_increasing(), "{:?}", c.values);
        assert!(c.spec.sites.bits.iter().all(|b| !b));
    }

    #[test]
    fn all_closed_sites_give_no_walls() {
        let lay = Layout::micro_strip();
        let pb = PlanarBox::new(lay.window()).unwrap();
        let omega = DisorderConfig::constant(Kind::Edge, pb.graph.n_edges(), false);
        let c = coarse_grain(&pb, &omega, lay, 1.0).unwrap();
        assert!(c.paths.primal.is_empty());
        for e in c.edges.iter().filter(|e| e.kind == EdgeKind::Nearest) {
            assert_eq!(e.conductance, 0.0);
        }
    }

    #[test]
    fn walls_separate_cells() {
        let lay = Layout::micro_strip();
        let pb = PlanarBox::new(lay.window()).unwrap();
        // Every primal edge open: every dual edge closed, every box good.
        let omega = DisorderConfig::constant(Kind::Edge, pb.graph.n_edges(), true);
        let c = coarse_grain(&pb, &omega, lay, 1.0).unwrap();
        assert!(c.sites.bits.iter().all(|b| *b));
        let ids: Vec<usize> = (0..3).map(|i| c.node_of_component[c.component[c.domain.vertex_of[pb.vertex(5 * (i as i64 - 1), 0).unwrap()].unwrap()]]).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        let chain = bound_chain(&pb, &omega, lay, 1.0).unwrap();
        assert!(chain.non_increasing(), "{:?}", chain.values);
        // Walls only cut edges and keep the origin cell: the counted coarse field is
        // the wall field with cells merged, so the two agree.
        assert!((chain.values[1].1 - chain.values[2].1).abs() < 1e-9, "{:?}", chain.values);
        for e in c.edges.iter().filter(|e| e.kind == EdgeKind::Nearest && e.conductance > 0.0) {
            assert!(e.count <= c.cap && e.conductance >= 1.0 / c.cap as f64);
        }
    }

    #[test]
    fn random_micro_chains() {
        let lay = Layout::micro_strip();
        for seed in 0..5 {
            let (pb, omega) = sample_instance(lay, 0.85, seed).unwrap();
            let c = bound_chain(&pb, &omega, lay, 2.0).unwrap();
            assert!(c.non_increasing(), "seed {seed}: {:?}", c.values);
            assert!(omega.bits.iter().zip(&c.spec.omega_c.bits).all(|(w, wc)| w >= wc));
        }
    }
}
