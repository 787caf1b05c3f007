//! Quenched Bernoulli disorder, planar duality, good-box events, the
//! renormalised site field and crossing-path extraction.
//!
//! Planar routines work on the box `Λ_R ⊂ Z²` produced by
//! [`build_lattice_box`]. A dual vertex `(a + ½, b + ½)` is stored by its
//! lower-left corner `(a, b)`, and a dual edge is identified with the primal
//! edge it crosses, so a [`DualConfig`] is indexed by primal edge id.

use std::fmt::Write as _;

use rand::Rng;

use crate::exact::MeasureTable;
use crate::graph::{build_lattice_box, LatticeGraph, Role, UnionFind};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Site,
    Edge,
}

impl Kind {
    fn as_str(self) -> &'static str {
        match self {
            Kind::Site => "site",
            Kind::Edge => "edge",
        }
    }
}

/// Bits indexed by vertex id (site kind) or edge id (edge kind).
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderConfig {
    pub kind: Kind,
    pub bits: Vec<bool>,
    pub seed: u64,
    pub p: f64,
}

impl DisorderConfig {
    pub fn constant(kind: Kind, len: usize, open: bool) -> Self {
        DisorderConfig {
            kind,
            bits: vec![open; len],
            seed: 0,
            p: if open { 1.0 } else { 0.0 },
        }
    }

    pub fn open_fraction(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.bits.iter().filter(|&&b| b).count() as f64 / self.bits.len() as f64
    }

    /// `kind |bits| seed p` followed by run lengths `b:n`.
    pub fn to_rle(&self) -> String {
        let mut s = format!("{} {} {} {}\n", self.kind.as_str(), self.bits.len(), self.seed, self.p);
        let mut i = 0;
        let mut first = true;
        while i < self.bits.len() {
            let b = self.bits[i];
            let mut j = i;
            while j < self.bits.len() && self.bits[j] == b {
                j += 1;
            }
            if !first {
                s.push(' ');
            }
            let _ = write!(s, "{}:{}", b as u8, j - i);
            first = false;
            i = j;
        }
        s.push('\n');
        s
    }

    pub fn from_rle(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::Parse("empty configuration".into()))?
            .split_whitespace()
            .collect();
        if header.len() != 4 {
            return Err(Error::Parse("header must be `kind |bits| seed p`".into()));
        }
        let kind = match header[0] {
            "site" => Kind::Site,
            "edge" => Kind::Edge,
            k => return Err(Error::Parse(format!("unknown kind `{k}`"))),
        };
        let len: usize = header[1].parse().map_err(|e| Error::Parse(format!("length: {e}")))?;
        let seed: u64 = header[2].parse().map_err(|e| Error::Parse(format!("seed: {e}")))?;
        let p: f64 = header[3].parse().map_err(|e| Error::Parse(format!("p: {e}")))?;
        let mut bits = Vec::with_capacity(len);
        for tok in lines.flat_map(|l| l.split_whitespace()) {
            let (b, n) = tok.split_once(':').ok_or_else(|| Error::Parse(format!("bad run `{tok}`")))?;
            let b = match b {
                "0" => false,
                "1" => true,
                _ => return Err(Error::Parse(format!("bad bit in `{tok}`"))),
            };
            let n: usize = n.parse().map_err(|e| Error::Parse(format!("run `{tok}`: {e}")))?;
            bits.extend(std::iter::repeat(b).take(n));
        }
        if bits.len() != len {
            return Err(Error::Parse(format!("header says {len} bits, runs give {}", bits.len())));
        }
        Ok(DisorderConfig { kind, bits, seed, p })
    }
}

/// I.i.d. Bernoulli(`p`) bits; for site disorder every non-lattice vertex is open.
pub fn sample_bernoulli(g: &LatticeGraph, kind: Kind, p: f64, seed: u64) -> Result<DisorderConfig> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::arg(format!("p = {p} is not a probability")));
    }
    let mut rng = rng::stream(seed, 0x5045_5243, kind as u64);
    let bits = match kind {
        Kind::Site => g
            .vertices
            .iter()
            .map(|v| {
                let u: f64 = rng.random();
                v.role != Role::Lattice || u < p
            })
            .collect(),
        Kind::Edge => (0..g.n_edges()).map(|_| rng.random::<f64>() < p).collect(),
    };
    Ok(DisorderConfig { kind, bits, seed, p })
}

/// Dual edge states `ω*_{e*} = 1 − ω_e`, indexed by the crossed primal edge.
#[derive(Debug, Clone, PartialEq)]
pub struct DualConfig {
    pub bits: Vec<bool>,
}

impl DualConfig {
    /// The primal configuration this is dual to.
    pub fn dual(&self) -> DisorderConfig {
        DisorderConfig {
            kind: Kind::Edge,
            bits: self.bits.iter().map(|b| !b).collect(),
            seed: 0,
            p: f64::NAN,
        }
    }
}

pub fn dual_config(g: &LatticeGraph, omega: &DisorderConfig) -> Result<DualConfig> {
    if g.dimension != 2 {
        return Err(Error::arg("duality needs a planar square lattice"));
    }
    if omega.kind != Kind::Edge || omega.bits.len() != g.n_edges() {
        return Err(Error::arg("duality needs an edge configuration of the graph"));
    }
    Ok(DualConfig {
        bits: omega.bits.iter().map(|b| !b).collect(),
    })
}

/// Primal square box with constant-time edge lookup.
#[derive(Debug, Clone)]
pub struct PlanarBox {
    pub graph: LatticeGraph,
    pub radius: i64,
    /// `step[axis][v]`: edge from `v` in the positive `axis` direction.
    step: [Vec<Option<usize>>; 2],
}

impl PlanarBox {
    pub fn new(radius: usize) -> Result<Self> {
        let graph = build_lattice_box(2, radius)?;
        let n = graph.n_vertices();
        let side = 2 * radius + 1;
        let mut step = [vec![None; n], vec![None; n]];
        for e in &graph.edges {
            let axis = if e.v == e.u + side { 0 } else { 1 };
            step[axis][e.u] = Some(e.id);
        }
        Ok(PlanarBox {
            graph,
            radius: radius as i64,
            step,
        })
    }

    pub fn vertex(&self, x: i64, y: i64) -> Option<usize> {
        self.graph.box_index(&[x, y])
    }

    pub fn coords(&self, v: usize) -> (i64, i64) {
        let c = &self.graph.vertices[v].coord;
        (c[0] as i64, c[1] as i64)
    }

    /// Primal edge crossed by the dual edge from `(a, b)` one step along `axis`.
    pub fn dual_edge(&self, a: i64, b: i64, axis: usize) -> Option<usize> {
        // Dual step along the first axis crosses the primal edge from (a+1, b)
        // to (a+1, b+1); along the second it crosses (a, b+1) to (a+1, b+1).
        let (px, py, primal_axis) = if axis == 0 { (a + 1, b, 1) } else { (a, b + 1, 0) };
        let v = self.vertex(px, py)?;
        self.step[primal_axis][v]
    }
}

/// Axis-aligned rectangle of dual vertices `[x0, x0+w] × [y0, y0+h]`, crossed
/// along `long_axis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: i64,
    pub y0: i64,
    pub w: i64,
    pub h: i64,
    pub long_axis: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoodBoxReport {
    pub center: (i64, i64),
    pub scale: usize,
    pub verdict: bool,
    pub rectangles: usize,
    /// First rectangle found without a closed crossing.
    pub witness: Option<Rect>,
}

/// `(short, long, half-width)` of the good-box geometry at scale `l`.
pub fn good_box_dims(l: usize) -> (i64, i64, i64) {
    let s = BoxShape::verbatim(l);
    (s.short, s.long, s.half)
}

/// Rectangle shape used by the good-box event and the bridging rectangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoxShape {
    pub short: i64,
    pub long: i64,
    /// Half-width of the region `x + Λ_half` searched for rectangles.
    pub half: i64,
}

impl BoxShape {
    /// `⌈l/100⌉ × ⌈22l/10⌉` rectangles in `x + Λ_{⌈11l/10⌉}`.
    pub fn verbatim(l: usize) -> Self {
        BoxShape {
            short: l.div_ceil(100) as i64,
            long: (22 * l).div_ceil(10) as i64,
            half: (11 * l).div_ceil(10) as i64,
        }
    }

    /// `1 × (2l+2)` rectangles in `x + Λ_{l+1}`, for exact small-scale runs.
    /// The extra unit makes bridging rectangles of adjacent coarse pairs
    /// overlap, so their crossings meet.
    pub fn micro(l: usize) -> Self {
        BoxShape {
            short: 1,
            long: 2 * l as i64 + 2,
            half: l as i64 + 1,
        }
    }
}

/// Whether `rect` is crossed along its long axis by closed dual edges.
pub fn rect_crossed(pb: &PlanarBox, dual: &DualConfig, rect: &Rect) -> Result<bool> {
    let (nx, ny) = (rect.w + 1, rect.h + 1);
    let id = |i: i64, j: i64| (i * ny + j) as usize;
    let mut uf = UnionFind::new((nx * ny) as usize);
    for i in 0..nx {
        for j in 0..ny {
            for axis in 0..2 {
                let (di, dj) = if axis == 0 { (1, 0) } else { (0, 1) };
                if i + di >= nx || j + dj >= ny {
                    continue;
                }
                let e = pb
                    .dual_edge(rect.x0 + i, rect.y0 + j, axis)
                    .ok_or_else(|| Error::Geometry(format!("rectangle {rect:?} leaves the window")))?;
                if !dual.bits[e] {
                    uf.union(id(i, j), id(i + di, j + dj));
                }
            }
        }
    }
    let (start, end): (Vec<usize>, Vec<usize>) = if rect.long_axis == 0 {
        ((0..ny).map(|j| id(0, j)).collect(), (0..ny).map(|j| id(nx - 1, j)).collect())
    } else {
        ((0..nx).map(|i| id(i, 0)).collect(), (0..nx).map(|i| id(i, ny - 1)).collect())
    };
    let ends: std::collections::HashSet<usize> = end.into_iter().map(|v| uf.find(v)).collect();
    Ok(start.into_iter().any(|v| ends.contains(&uf.find(v))))
}

/// The good-box event at dual vertex `x` and scale `l`: every rectangle of the
/// prescribed shape inside `x + Λ_{⌈11l/10⌉}` has a closed dual crossing in
/// its long direction.
pub fn good_box(pb: &PlanarBox, dual: &DualConfig, x: (i64, i64), l: usize) -> Result<GoodBoxReport> {
    if l < 10 {
        return Err(Error::arg("good boxes need L ≥ 10"));
    }
    good_box_shaped(pb, dual, x, l, BoxShape::verbatim(l))
}

/// Good-box event for an arbitrary rectangle shape.
pub fn good_box_shaped(pb: &PlanarBox, dual: &DualConfig, x: (i64, i64), l: usize, shape: BoxShape) -> Result<GoodBoxReport> {
    if dual.bits.len() != pb.graph.n_edges() {
        return Err(Error::arg("dual configuration does not match the window"));
    }
    let BoxShape { short, long, half } = shape;
    let mut report = GoodBoxReport {
        center: x,
        scale: l,
        verdict: true,
        rectangles: 0,
        witness: None,
    };
    for long_axis in 0..2 {
        for a in -half..=half - long {
            for b in -half..=half - short {
                let rect = if long_axis == 0 {
                    Rect { x0: x.0 + a, y0: x.1 + b, w: long, h: short, long_axis }
                } else {
                    Rect { x0: x.0 + b, y0: x.1 + a, w: short, h: long, long_axis }
                };
                report.rectangles += 1;
                if !rect_crossed(pb, dual, &rect)? {
                    report.verdict = false;
                    report.witness = Some(rect);
                    return Ok(report);
                }
            }
        }
    }
    Ok(report)
}

/// Primal radius needed to evaluate good boxes at scale `l0` on the coarse
/// window `[-k, k]²`.
pub fn renorm_window(l0: usize, k: usize) -> usize {
    renorm_window_shaped(l0, k, BoxShape::verbatim(l0))
}

pub fn renorm_window_shaped(l0: usize, k: usize, shape: BoxShape) -> usize {
    (2 * l0 + 1) * k + shape.half.max(shape.long - shape.long / 2).max(l0 as i64 + shape.short) as usize + 2
}

/// Coarse site field on `[-k, k]²` (row-major, first coordinate slowest):
/// the box centred at `(2l0+1)z + (½, ½)` is open iff its good event holds.
pub fn renormalized_sites(pb: &PlanarBox, omega: &DisorderConfig, l0: usize, k: usize) -> Result<DisorderConfig> {
    if l0 < 10 {
        return Err(Error::arg("good boxes need L ≥ 10"));
    }
    renormalized_sites_shaped(pb, omega, l0, (k, k), BoxShape::verbatim(l0))
}

/// Coarse site field on `[-kx, kx] × [-ky, ky]`, row-major.
pub fn renormalized_sites_shaped(
    pb: &PlanarBox,
    omega: &DisorderConfig,
    l0: usize,
    (kx, ky): (usize, usize),
    shape: BoxShape,
) -> Result<DisorderConfig> {
    let dual = dual_config(&pb.graph, omega)?;
    let scale = 2 * l0 as i64 + 1;
    let mut bits = Vec::with_capacity((2 * kx + 1) * (2 * ky + 1));
    for u in -(kx as i64)..=kx as i64 {
        for v in -(ky as i64)..=ky as i64 {
            bits.push(good_box_shaped(pb, &dual, (scale * u, scale * v), l0, shape)?.verdict);
        }
    }
    Ok(DisorderConfig {
        kind: Kind::Site,
        bits,
        seed: omega.seed,
        p: omega.p,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossingPaths {
    /// Primal edges dual to the selected closed dual paths.
    pub primal: Vec<usize>,
    /// The dual paths as vertex sequences, one per coarse edge.
    pub paths: Vec<Vec<(i64, i64)>>,
}

/// Lexicographically smallest shortest closed dual path crossing `rect` along
/// its long axis, if any.
pub fn crossing_path(pb: &PlanarBox, dual: &DualConfig, rect: &Rect) -> Result<Option<Vec<(i64, i64)>>> {
    let (nx, ny) = (rect.w + 1, rect.h + 1);
    let inside = |i: i64, j: i64| i >= 0 && j >= 0 && i < nx && j < ny;
    let idx = |i: i64, j: i64| (i * ny + j) as usize;
    let open_step = |i: i64, j: i64, di: i64, dj: i64| -> Result<bool> {
        let (ai, aj) = (i.min(i + di), j.min(j + dj));
        let axis = if di != 0 { 0 } else { 1 };
        let e = pb
            .dual_edge(rect.x0 + ai, rect.y0 + aj, axis)
            .ok_or_else(|| Error::Geometry(format!("rectangle {rect:?} leaves the window")))?;
        Ok(!dual.bits[e])
    };
    let is_target = |i: i64, j: i64| if rect.long_axis == 0 { i == nx - 1 } else { j == ny - 1 };
    let mut dist = vec![usize::MAX; (nx * ny) as usize];
    let mut queue = std::collections::VecDeque::new();
    for i in 0..nx {
        for j in 0..ny {
            if is_target(i, j) {
                dist[idx(i, j)] = 0;
                queue.push_back((i, j));
            }
        }
    }
    const STEPS: [(i64, i64); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
    while let Some((i, j)) = queue.pop_front() {
        let d = dist[idx(i, j)];
        for (di, dj) in STEPS {
            let (a, b) = (i + di, j + dj);
            if inside(a, b) && dist[idx(a, b)] == usize::MAX && open_step(i, j, di, dj)? {
                dist[idx(a, b)] = d + 1;
                queue.push_back((a, b));
            }
        }
    }
    let sources: Vec<(i64, i64)> = if rect.long_axis == 0 {
        (0..ny).map(|j| (0, j)).collect()
    } else {
        (0..nx).map(|i| (i, 0)).collect()
    };
    let Some(&start) = sources
        .iter()
        .filter(|&&(i, j)| dist[idx(i, j)] != usize::MAX)
        .min_by_key(|&&(i, j)| (dist[idx(i, j)], i, j))
    else {
        return Ok(None);
    };
    let mut path = vec![start];
    let mut cur = start;
    while dist[idx(cur.0, cur.1)] > 0 {
        let d = dist[idx(cur.0, cur.1)];
        let mut next = None;
        for (di, dj) in STEPS {
            let (a, b) = (cur.0 + di, cur.1 + dj);
            if inside(a, b) && dist[idx(a, b)] == d - 1 && open_step(cur.0, cur.1, di, dj)? {
                next = Some((a, b));
                break;
            }
        }
        cur = next.expect("a neighbour one step closer exists on a shortest path");
        path.push(cur);
    }
    Ok(Some(path.into_iter().map(|(i, j)| (rect.x0 + i, rect.y0 + j)).collect()))
}

/// Rectangle bridging the coarse neighbours `z` and `z + e_axis`: long side
/// parallel to their common side, straddling it, inside the good region of `z`.
pub fn bridge_rect(z: (i64, i64), axis: usize, l0: usize) -> Rect {
    bridge_rect_shaped(z, axis, l0, BoxShape::verbatim(l0))
}

pub fn bridge_rect_shaped(z: (i64, i64), axis: usize, l0: usize, shape: BoxShape) -> Rect {
    let BoxShape { short, long, .. } = shape;
    let scale = 2 * l0 as i64 + 1;
    let (cx, cy) = (scale * z.0, scale * z.1);
    let l = l0 as i64;
    if axis == 0 {
        Rect { x0: cx + l, y0: cy - long / 2, w: short, h: long, long_axis: 1 }
    } else {
        Rect { x0: cx - long / 2, y0: cy + l, w: long, h: short, long_axis: 0 }
    }
}

/// Selects one closed dual crossing per pair of adjacent open coarse sites
/// and checks that every component of the primal window without those edges
/// reaches the window boundary or contains a vertex of `(2l0+1)Z²`.
pub fn extract_crossing_paths(
    pb: &PlanarBox,
    dual: &DualConfig,
    coarse: &DisorderConfig,
    l0: usize,
    k: usize,
) -> Result<CrossingPaths> {
    extract_crossing_paths_shaped(pb, dual, coarse, l0, (k, k), BoxShape::verbatim(l0))
}

/// Crossing extraction on the coarse window `[-kx, kx] × [-ky, ky]`.
pub fn extract_crossing_paths_shaped(
    pb: &PlanarBox,
    dual: &DualConfig,
    coarse: &DisorderConfig,
    l0: usize,
    (kx, ky): (usize, usize),
    shape: BoxShape,
) -> Result<CrossingPaths> {
    let side_y = 2 * ky as i64 + 1;
    if coarse.bits.len() != (2 * kx + 1) * (2 * ky + 1) {
        return Err(Error::arg("coarse field does not match the coarse window"));
    }
    let open = |u: i64, v: i64| coarse.bits[((u + kx as i64) * side_y + (v + ky as i64)) as usize];
    let mut out = CrossingPaths {
        primal: Vec::new(),
        paths: Vec::new(),
    };
    let mut used = vec![false; pb.graph.n_edges()];
    for u in -(kx as i64)..=kx as i64 {
        for v in -(ky as i64)..=ky as i64 {
            for axis in 0..2 {
                let (u2, v2) = if axis == 0 { (u + 1, v) } else { (u, v + 1) };
                if u2 > kx as i64 || v2 > ky as i64 || !open(u, v) || !open(u2, v2) {
                    continue;
                }
                let rect = bridge_rect_shaped((u, v), axis, l0, shape);
                let path = crossing_path(pb, dual, &rect)?.ok_or_else(|| {
                    Error::Validation(format!("open coarse pair ({u},{v})-({u2},{v2}) has no crossing in {rect:?}"))
                })?;
                for w in path.windows(2) {
                    let (a, b) = (w[0].0.min(w[1].0), w[0].1.min(w[1].1));
                    let ax = if w[0].0 != w[1].0 { 0 } else { 1 };
                    let e = pb.dual_edge(a, b, ax).expect("path lies in the window");
                    if dual.bits[e] {
                        return Err(Error::State("selected path uses an open dual edge".into()));
                    }
                    if !used[e] {
                        used[e] = true;
                        out.primal.push(e);
                    }
                }
                out.paths.push(path);
            }
        }
    }
    out.primal.sort_unstable();
    validate_components(pb, &used, l0)?;
    Ok(out)
}

fn validate_components(pb: &PlanarBox, removed: &[bool], l0: usize) -> Result<()> {
    let g = &pb.graph;
    let mut uf = UnionFind::new(g.n_vertices());
    for e in &g.edges {
        if !removed[e.id] {
            uf.union(e.u, e.v);
        }
    }
    let scale = 2 * l0 as i64 + 1;
    let mut good = vec![false; g.n_vertices()];
    for v in 0..g.n_vertices() {
        let (x, y) = pb.coords(v);
        if x.rem_euclid(scale) == 0 && y.rem_euclid(scale) == 0 || x.abs() == pb.radius || y.abs() == pb.radius {
            let r = uf.find(v);
            good[r] = true;
        }
    }
    for v in 0..g.n_vertices() {
        let r = uf.find(v);
        if !good[r] {
            let members: Vec<(i64, i64)> = (0..g.n_vertices())
                .filter(|&w| uf.find(w) == r)
                .map(|w| pb.coords(w))
                .collect();
            return Err(Error::Validation(format!(
                "component of {} vertices misses (2L0+1)Z²: {:?}",
                members.len(),
                members
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominationReport {
    /// Largest conditional probability of a site being open.
    pub max: f64,
    pub site: usize,
    /// Configuration index attaining the maximum.
    pub config: usize,
    pub pass: bool,
}

/// `max_{x, r} ν(r_x = 1 | r off x)` compared with `p`.
pub fn check_conditional_domination(nu: &MeasureTable, p: f64) -> Result<DominationReport> {
    if nu.probs.iter().any(|&q| !(q > 0.0)) {
        return Err(Error::arg("measure must be strictly positive"));
    }
    let mut best = DominationReport {
        max: f64::NEG_INFINITY,
        site: 0,
        config: 0,
        pass: true,
    };
    for c in 0..nu.probs.len() {
        for i in 0..nu.n_sites() {
            if c >> i & 1 == 1 {
                continue;
            }
            let q = nu.conditional_open(i, c);
            if q > best.max {
                best.max = q;
                best.site = i;
                best.config = c;
            }
        }
    }
    best.pass = best.max <= p;
    Ok(best)
}

/// The domination threshold `1/(1 + e^{−2dβ₁})`.
pub fn domination_threshold(d: usize, beta1: f64) -> f64 {
    1.0 / (1.0 + (-2.0 * d as f64 * beta1).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extremes() {
        let g = build_lattice_box(2, 3).unwrap();
        assert!(sample_bernoulli(&g, Kind::Edge, 1.0, 1).unwrap().bits.iter().all(|&b| b));
        assert!(sample_bernoulli(&g, Kind::Edge, 0.0, 1).unwrap().bits.iter().all(|&b| !b));
        assert!(sample_bernoulli(&g, Kind::Edge, 1.5, 1).is_err());
    }

    #[test]
    fn subdivision_sites_forced_open() {
        let g = crate::graph::subdivide_edges(&build_lattice_box(2, 1).unwrap(), 3).unwrap();
        let c = sample_bernoulli(&g, Kind::Site, 0.0, 9).unwrap();
        for v in &g.vertices {
            assert_eq!(c.bits[v.id], v.role != Role::Lattice);
        }
    }

    #[test]
    fn rle_round_trip() {
        let g = build_lattice_box(2, 4).unwrap();
        let c = sample_bernoulli(&g, Kind::Edge, 0.3, 77).unwrap();
        assert_eq!(DisorderConfig::from_rle(&c.to_rle()).unwrap(), c);
    }

    #[test]
    fn dual_edges_cross_their_primal() {
        let pb = PlanarBox::new(3).unwrap();
        let e = pb.dual_edge(0, 0, 0).unwrap();
        let ed = &pb.graph.edges[e];
        assert_eq!((pb.coords(ed.u), pb.coords(ed.v)), ((1, 0), (1, 1)));
        let e = pb.dual_edge(0, 0, 1).unwrap();
        let ed = &pb.graph.edges[e];
        assert_eq!((pb.coords(ed.u), pb.coords(ed.v)), ((0, 1), (1, 1)));
    }

    #[test]
    fn good_box_extremes() {
        let pb = PlanarBox::new(renorm_window(10, 0)).unwrap();
        let m = pb.graph.n_edges();
        let all_closed = DualConfig { bits: vec![false; m] };
        let all_open = DualConfig { bits: vec![true; m] };
        assert!(good_box(&pb, &all_closed, (0, 0), 10).unwrap().verdict);
        assert!(!good_box(&pb, &all_open, (0, 0), 10).unwrap().verdict);
    }

    #[test]
    fn renormalised_extremes_and_paths() {
        let (l0, k) = (10, 1);
        let pb = PlanarBox::new(renorm_window(l0, k)).unwrap();
        let m = pb.graph.n_edges();
        let full = DisorderConfig::constant(Kind::Edge, m, true);
        let r = renormalized_sites(&pb, &full, l0, k).unwrap();
        assert!(r.bits.iter().all(|&b| b));
        let dual = dual_config(&pb.graph, &full).unwrap();
        let c = extract_crossing_paths(&pb, &dual, &r, l0, k).unwrap();
        assert_eq!(c.paths.len(), 12);
        assert!(!c.primal.is_empty());
        let empty = DisorderConfig::constant(Kind::Edge, m, false);
        assert!(renormalized_sites(&pb, &empty, l0, k).unwrap().bits.iter().all(|&b| !b));
        let none = DisorderConfig::constant(Kind::Site, 9, false);
        assert!(extract_crossing_paths(&pb, &dual, &none, l0, k).unwrap().primal.is_empty());
    }

    #[test]
    fn product_measure_domination() {
        let t = MeasureTable::product(3, 0.4).unwrap();
        let r = check_conditional_domination(&t, 0.4 + 1e-12).unwrap();
        assert!(r.pass && (r.max - 0.4).abs() < 1e-12);
        assert!(!check_conditional_domination(&t, 0.39).unwrap().pass);
    }
}
