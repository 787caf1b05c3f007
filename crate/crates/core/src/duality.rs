//! Divergence-free angle configurations on ghost graphs, the generalised XY
//! model and its duality with XY height functions.
//!
//! A configuration assigns an angle to every edge (oriented from `u` to `v`)
//! such that the net outflow at every vertex, the ghost included, vanishes
//! mod 2π. Fixing a spanning tree, the cotree angles are free and the tree
//! angles are integer combinations of them; Haar measure is the pushforward of
//! the uniform law on the cotree angles.

use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;

use crate::exact::{exact_height, GibbsSpec, MeasureTable};
use crate::graph::{
    build_lattice_box, ghost_augment, parallelize_edges, spanning_tree, spanning_tree_dfs, tree_extension,
    LatticeGraph, Role, TreeExtension,
};
use crate::potentials::{ln_bessel_i, EdgePotential};
use crate::rng;
use crate::{Error, Result};

/// Largest number of free angles integrated by quadrature.
pub const MAX_FREE: usize = 6;
/// Largest quadrature grid, in points.
pub const MAX_POINTS: u64 = 300_000_000;
/// Agreement required between consecutive quadrature orders.
pub const QUAD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DivS1Space {
    pub graph: LatticeGraph,
    pub ext: TreeExtension,
    /// For every edge, its angle as `Σ c_j θ_{cotree[j]}`.
    pub rows: Vec<Vec<(usize, i64)>>,
}

impl DivS1Space {
    pub fn n_free(&self) -> usize {
        self.ext.cotree.len()
    }

    /// Angles of every edge, reduced to `[0, 2π)`.
    pub fn extend(&self, free: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, c)| c as f64 * free[j]).sum::<f64>().rem_euclid(TAU))
            .collect()
    }

    /// Largest distance from `0 mod 2π` of the net outflow at any vertex.
    pub fn divergence_residual(&self, theta: &[f64]) -> f64 {
        let mut div = vec![0.0; self.graph.n_vertices()];
        for e in &self.graph.edges {
            div[e.u] += theta[e.id];
            div[e.v] -= theta[e.id];
        }
        div.iter()
            .map(|d| {
                let r = d.rem_euclid(TAU);
                r.min(TAU - r)
            })
            .fold(0.0, f64::max)
    }
}

/// Space built on the breadth-first spanning tree rooted at the ghost.
pub fn build_div_s1(g: &LatticeGraph) -> Result<DivS1Space> {
    build_div_s1_with_tree(g, &spanning_tree(g)?)
}

/// Space built on the depth-first spanning tree, for tree-independence checks.
pub fn build_div_s1_dfs(g: &LatticeGraph) -> Result<DivS1Space> {
    build_div_s1_with_tree(g, &spanning_tree_dfs(g)?)
}

pub fn build_div_s1_with_tree(g: &LatticeGraph, tree: &[usize]) -> Result<DivS1Space> {
    if !g.is_connected() {
        return Err(Error::Structure("divergence-free space needs a connected graph".into()));
    }
    let ext = tree_extension(g, tree)?;
    let mut rows = vec![Vec::new(); g.n_edges()];
    for (j, &c) in ext.cotree.iter().enumerate() {
        rows[c] = vec![(j, 1)];
    }
    for (t, &e) in ext.tree.iter().enumerate() {
        rows[e] = ext.coeffs[t].iter().enumerate().filter(|(_, &c)| c != 0).map(|(j, &c)| (j, c)).collect();
    }
    let space = DivS1Space {
        graph: g.clone(),
        ext,
        rows,
    };
    for s in 0..100 {
        let theta = haar_sample(&space, s);
        let r = space.divergence_residual(&theta);
        if r > 1e-12 * (1.0 + space.n_free() as f64) {
            return Err(Error::State(format!("extension violates the divergence constraint by {r:e}")));
        }
    }
    Ok(space)
}

/// One Haar-distributed configuration.
pub fn haar_sample(space: &DivS1Space, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, 0x4841_4152, space.n_free() as u64);
    let free: Vec<f64> = (0..space.n_free()).map(|_| r.random::<f64>() * TAU).collect();
    space.extend(&free)
}

/// Generalised XY model: density `Π_e e^{J_e cos θ_e}` against Haar measure,
/// the λ-edge carrying `J = λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedXy {
    pub space: DivS1Space,
    pub couplings: Vec<f64>,
    pub lambda_edge: usize,
    pub origin: usize,
}

/// Coupling layout on the ghost graph of `Λ_L(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GhostLayout {
    pub graph: LatticeGraph,
    /// Disorder rule per edge: `(β, sites whose r multiplies it)`.
    pub rules: Vec<(f64, Vec<usize>)>,
    pub lambda_edge: usize,
    pub sites: Vec<usize>,
}

/// Ghost graph of the `n`-fold multigraph on `Λ_L`. Lattice pairs carry
/// `r_x β₁` on index 1, `r_y β₁` on index `n` and `nβ₂` in between (for
/// `n = 1` a single edge with `r_x r_y β₁`); ghost edges carry `r_x β₁`.
pub fn ghost_layout(d: usize, l: usize, n: usize, beta1: f64, beta2: f64, lambda: f64) -> Result<GhostLayout> {
    if n == 0 {
        return Err(Error::arg("multiplicity must be at least 1"));
    }
    let g = ghost_augment(&parallelize_edges(&build_lattice_box(d, l)?, n)?)?;
    let ghost = g.ghost.expect("augmented graph has a ghost");
    let lambda_edge = g.lambda_edge.expect("augmented graph has a λ-edge");
    let mut rules = Vec::with_capacity(g.n_edges());
    for e in &g.edges {
        let rule = if e.id == lambda_edge {
            (lambda, vec![])
        } else if e.v == ghost || e.u == ghost {
            (beta1, vec![e.other(ghost)])
        } else if n == 1 {
            (beta1, vec![e.u, e.v])
        } else {
            match e.origin.map_or(1, |o| o.index) {
                1 => (beta1, vec![e.u]),
                k if k == n => (beta1, vec![e.v]),
                _ => (n as f64 * beta2, vec![]),
            }
        };
        rules.push(rule);
    }
    let sites = g.vertices.iter().filter(|v| v.role == Role::Lattice).map(|v| v.id).collect();
    Ok(GhostLayout {
        graph: g,
        rules,
        lambda_edge,
        sites,
    })
}

impl GhostLayout {
    /// Couplings at site configuration `index` (bit `i` is `r` at `sites[i]`),
    /// with the disorder-sensitive `β₁` multiplied by `factor`.
    pub fn couplings(&self, index: usize, factor: f64) -> Vec<f64> {
        let mut r = vec![1.0; self.graph.n_vertices()];
        for (i, &s) in self.sites.iter().enumerate() {
            r[s] = (index >> i & 1) as f64;
        }
        self.rules
            .iter()
            .map(|(b, deps)| {
                if deps.is_empty() {
                    *b
                } else {
                    factor * b * deps.iter().map(|&x| r[x]).product::<f64>()
                }
            })
            .collect()
    }

    pub fn all_open(&self) -> usize {
        (1usize << self.sites.len()) - 1
    }

    pub fn model(&self, space: &DivS1Space, couplings: Vec<f64>) -> GeneralizedXy {
        GeneralizedXy {
            space: space.clone(),
            couplings,
            lambda_edge: self.lambda_edge,
            origin: self.graph.origin(),
        }
    }
}

impl GeneralizedXy {
    /// Dual height model: ghost pinned at zero, Bessel weight `I_Δ(J_e)` on
    /// every edge, so the λ-edge contributes `I_{φ(0)}(λ)`.
    pub fn height_spec(&self) -> GibbsSpec {
        let pots = self.couplings.iter().map(|&j| EdgePotential::BesselHeight(j)).collect();
        let ghost = self.space.graph.ghost.expect("ghost graph");
        GibbsSpec::new(self.space.graph.clone(), pots)
            .expect("one coupling per edge")
            .with_frozen(vec![ghost])
    }
}

/// Spin-side expectations of the generalised model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinSide {
    /// `ln Z` with Haar measure normalised to one.
    pub log_z: f64,
    pub cos1: f64,
    pub cos2: f64,
    /// `⟨cos² θ_{0g}⟩`, accumulated directly.
    pub cos_sq: f64,
    pub error: f64,
    /// Points per free angle, or zero for the character route.
    pub grid: usize,
}

fn quadrature(model: &GeneralizedXy, n: usize) -> Result<[f64; 5]> {
    let f = model.space.n_free();
    let total = (n as u64).checked_pow(f as u32).unwrap_or(u64::MAX);
    if total > MAX_POINTS {
        return Err(Error::Resource(format!("{total} quadrature points exceed {MAX_POINTS}")));
    }
    let cos_table: Vec<f64> = (0..n).map(|j| (TAU * j as f64 / n as f64).cos()).collect();
    let edges: Vec<(f64, &Vec<(usize, i64)>)> = model
        .couplings
        .iter()
        .zip(&model.space.rows)
        .filter(|(j, _)| **j != 0.0)
        .map(|(j, r)| (*j, r))
        .collect();
    let lam_row = &model.space.rows[model.lambda_edge];
    let ni = n as i64;
    let phase = |idx: &[usize], row: &[(usize, i64)]| -> usize {
        row.iter().map(|&(j, c)| c * idx[j] as i64).sum::<i64>().rem_euclid(ni) as usize
    };
    let outer = if f == 0 { 1 } else { n };
    let inner_total = if f == 0 { 1 } else { total / n as u64 };
    let sums: Vec<[f64; 4]> = (0..outer)
        .into_par_iter()
        .map(|first| {
            let mut idx = vec![0usize; f];
            if f > 0 {
                idx[0] = first;
            }
            let mut acc = [0.0; 4];
            for _ in 0..inner_total {
                let mut s = 0.0;
                for (j, row) in &edges {
                    s += j * (cos_table[phase(&idx, row)] - 1.0);
                }
                let w = s.exp();
                let a = phase(&idx, lam_row);
                let c1 = cos_table[a];
                acc[0] += w;
                acc[1] += w * c1;
                acc[2] += w * cos_table[(2 * a) % n];
                acc[3] += w * c1 * c1;
                for p in (1..f).rev() {
                    idx[p] += 1;
                    if idx[p] < n {
                        break;
                    }
                    idx[p] = 0;
                }
            }
            acc
        })
        .collect();
    let mut tot = [0.0; 4];
    for s in sums {
        for i in 0..4 {
            tot[i] += s[i];
        }
    }
    let shift: f64 = edges.iter().map(|(j, _)| j).sum();
    let log_z = (tot[0] / total as f64).ln() + shift;
    Ok([log_z, tot[1] / tot[0], tot[2] / tot[0], tot[3] / tot[0], total as f64])
}

/// Tensor trapezoid quadrature over the free angles, doubling the order until
/// consecutive answers agree.
pub fn exact_generalized_xy(model: &GeneralizedXy) -> Result<SpinSide> {
    if model.space.n_free() > MAX_FREE {
        return Err(Error::Resource(format!(
            "{} free angles exceed the quadrature limit {MAX_FREE}",
            model.space.n_free()
        )));
    }
    let mut n = 8;
    let mut prev = quadrature(model, n)?;
    loop {
        let next_n = 2 * n;
        let cur = match quadrature(model, next_n) {
            Ok(c) => c,
            Err(Error::Resource(_)) => {
                return Ok(spin_from(prev, f64::INFINITY, n));
            }
            Err(e) => return Err(e),
        };
        let diff = (0..4).map(|i| (cur[i] - prev[i]).abs()).fold(0.0, f64::max);
        n = next_n;
        if diff <= QUAD_TOL * cur[0].abs().max(1.0) {
            return Ok(spin_from(cur, diff, n));
        }
        prev = cur;
    }
}

fn spin_from(v: [f64; 5], err: f64, n: usize) -> SpinSide {
    SpinSide {
        log_z: v[0],
        cos1: v[1],
        cos2: v[2],
        cos_sq: v[3],
        error: err,
        grid: n,
    }
}

/// Spin-side expectations through the character expansion: Haar measure only
/// sees flows that are integer gradients, so every expectation becomes a sum
/// over heights with the λ-edge index shifted.
pub fn character_generalized_xy(model: &GeneralizedXy) -> Result<SpinSide> {
    let spec = model.height_spec();
    let lambda = model.couplings[model.lambda_edge];
    let mut no_lambda = spec.clone();
    no_lambda.set(model.lambda_edge, EdgePotential::Free);
    // The marginal of φ(0) without the λ weight, reweighted by the shifted
    // Bessel factors.
    let s = exact_height(&no_lambda, model.origin)?;
    let m = s.window() as i64;
    let ln_i = |k: i64| ln_bessel_i(k, lambda);
    let mut terms = Vec::with_capacity(s.marginal.len());
    for (i, &p) in s.marginal.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let h = i as i64 - m;
        terms.push((p.ln(), h));
    }
    let top = terms.iter().map(|t| t.0 + ln_i(t.1)).fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut c1, mut c2) = (0.0, 0.0, 0.0);
    for &(lp, h) in &terms {
        let w = |k: i64| (lp + ln_i(k) - top).exp();
        z += w(h);
        c1 += 0.5 * (w(h - 1) + w(h + 1));
        c2 += 0.5 * (w(h - 2) + w(h + 2));
    }
    let log_z = z.ln() + top + s.log_z.value;
    Ok(SpinSide {
        log_z,
        cos1: c1 / z,
        cos2: c2 / z,
        cos_sq: 0.5 + 0.5 * c2 / z,
        error: s.var.error_bound + s.log_z.error_bound,
        grid: 0,
    })
}

/// Quadrature when the free dimension allows it, otherwise the character route.
pub fn spin_side(model: &GeneralizedXy) -> Result<SpinSide> {
    if model.space.n_free() <= MAX_FREE {
        exact_generalized_xy(model)
    } else {
        character_generalized_xy(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityReport {
    pub var_height: f64,
    /// `⟨λ cos θ + (λ²/2) cos 2θ − λ²/2⟩`.
    pub spin_cos2: f64,
    /// `⟨λ cos θ + λ² cos² θ − λ²⟩`.
    pub spin_sq: f64,
    pub diff: f64,
    pub log_z_height: f64,
    pub log_z_spin: f64,
    /// `|Z_height / Z_spin − 1|`.
    pub z_rel_err: f64,
    pub error: f64,
    pub quadrature: bool,
}

/// Both sides of the variance and partition-function identities.
pub fn duality_check(model: &GeneralizedXy) -> Result<DualityReport> {
    let lambda = model.couplings[model.lambda_edge];
    let h = exact_height(&model.height_spec(), model.origin)?;
    let s = spin_side(model)?;
    let spin_cos2 = lambda * s.cos1 + 0.5 * lambda * lambda * s.cos2 - 0.5 * lambda * lambda;
    let spin_sq = lambda * s.cos1 + lambda * lambda * s.cos_sq - lambda * lambda;
    let diff = (h.var.value - spin_cos2).abs().max((h.var.value - spin_sq).abs());
    Ok(DualityReport {
        var_height: h.var.value,
        spin_cos2,
        spin_sq,
        diff,
        log_z_height: h.log_z.value,
        log_z_spin: s.log_z,
        z_rel_err: (h.log_z.value - s.log_z).exp_m1().abs(),
        error: h.var.error_bound + s.error * (1.0 + lambda * lambda),
        quadrature: s.grid > 0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedWellsReport {
    /// `⟨cos mθ_{0g}⟩` of the open system at `β₁/2`.
    pub lhs: f64,
    /// `E_ν[⟨cos mθ_{0g}⟩_r]` at `β₁`.
    pub rhs: f64,
    pub margin: f64,
    pub table: MeasureTable,
}

/// Wells inequality for the generalised model on the ghost graph of `Λ_L(n)`.
pub fn wells_generalized_check(
    d: usize,
    l: usize,
    n: usize,
    beta1: f64,
    beta2: f64,
    lambda: f64,
    m: u32,
) -> Result<GeneralizedWellsReport> {
    if !(m == 1 || m == 2) {
        return Err(Error::arg("only cos θ and cos 2θ are supported"));
    }
    let layout = ghost_layout(d, l, n, beta1, beta2, lambda)?;
    let space = build_div_s1(&layout.graph)?;
    let pick = |s: &SpinSide| if m == 1 { s.cos1 } else { s.cos2 };
    let rows: Vec<(f64, f64)> = (0..=layout.all_open())
        .into_par_iter()
        .map(|c| {
            let s = spin_side(&layout.model(&space, layout.couplings(c, 1.0)))
                .map_err(|e| Error::State(format!("configuration {c}: {e}")))?;
            Ok((s.log_z, pick(&s)))
        })
        .collect::<Result<_>>()?;
    let table = MeasureTable::from_log_weights(layout.sites.clone(), rows.iter().map(|r| r.0).collect())?;
    let rhs = table.expect(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    let clean = spin_side(&layout.model(&space, layout.couplings(layout.all_open(), 0.5)))?;
    let lhs = pick(&clean);
    Ok(GeneralizedWellsReport {
        lhs,
        rhs,
        margin: rhs - lhs,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::bessel_i;

    fn single_site(lambda: f64, beta: f64) -> GeneralizedXy {
        let layout = ghost_layout(2, 0, 1, beta, 0.0, lambda).unwrap();
        let space = build_div_s1(&layout.graph).unwrap();
        layout.model(&space, layout.couplings(layout.all_open(), 1.0))
    }

    #[test]
    fn two_vertex_ghost_graph() {
        let m = single_site(2.0, 1.0);
        assert_eq!(m.space.n_free(), 1);
        // The two parallel edges carry opposite angles.
        let theta = m.space.extend(&[1.0]);
        assert!((theta[0] + theta[1] - TAU).abs() < 1e-12 || (theta[0] + theta[1]).abs() < 1e-12 || (theta[0] - theta[1]).abs() < 1e-12);
        assert!(m.space.divergence_residual(&theta) < 1e-12);
        let s = exact_generalized_xy(&m).unwrap();
        // Oracle: ∫ e^{2 cos t + cos t} dt / 2π or with the opposite sign.
        let z: f64 = (0..4096).map(|j| (3.0 * (TAU * j as f64 / 4096.0).cos()).exp()).sum::<f64>() / 4096.0;
        assert!((s.log_z - z.ln()).abs() < 1e-12);
        assert!((s.log_z - bessel_i(0, 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_couplings_are_haar() {
        let s = exact_generalized_xy(&single_site(0.0, 0.0)).unwrap();
        assert!(s.cos1.abs() < 1e-14 && s.log_z.abs() < 1e-14);
    }

    #[test]
    fn tree_only_graph_is_trivial() {
        let g = LatticeGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let space = build_div_s1(&g).unwrap();
        assert_eq!(space.n_free(), 0);
        assert!(haar_sample(&space, 3).iter().all(|&t| t == 0.0));
    }

    #[test]
    fn duality_on_single_site() {
        let r = duality_check(&single_site(3.0, 1.0)).unwrap();
        assert!(r.diff < 1e-9, "{r:?}");
        assert!(r.z_rel_err < 1e-10, "{r:?}");
    }

    #[test]
    fn character_route_matches_quadrature() {
        let layout = ghost_layout(1, 1, 2, 1.0, 0.7, 2.0).unwrap();
        let space = build_div_s1(&layout.graph).unwrap();
        let m = layout.model(&space, layout.couplings(0b101, 1.0));
        let q = exact_generalized_xy(&m).unwrap();
        let c = character_generalized_xy(&m).unwrap();
        assert!((q.cos1 - c.cos1).abs() < 1e-10);
        assert!((q.cos2 - c.cos2).abs() < 1e-10);
        assert!((q.log_z - c.log_z).abs() < 1e-10);
    }

    #[test]
    fn tree_choice_is_irrelevant() {
        let layout = ghost_layout(1, 1, 1, 0.8, 0.0, 2.0).unwrap();
        let a = build_div_s1(&layout.graph).unwrap();
        let b = build_div_s1_dfs(&layout.graph).unwrap();
        assert_ne!(a.ext.tree, b.ext.tree);
        let ca = layout.couplings(layout.all_open(), 1.0);
        let sa = exact_generalized_xy(&layout.model(&a, ca.clone())).unwrap();
        let sb = exact_generalized_xy(&layout.model(&b, ca)).unwrap();
        assert!((sa.cos1 - sb.cos1).abs() < 1e-11 && (sa.log_z - sb.log_z).abs() < 1e-11);
    }

    #[test]
    fn generalized_wells_small() {
        for m in [1, 2] {
            let r = wells_generalized_check(2, 0, 2, 2.0, 1.0, 2.0, m).unwrap();
            assert!(r.margin >= -1e-10, "{r:?}");
        }
        let r = wells_generalized_check(2, 0, 2, 0.0, 1.0, 2.0, 1).unwrap();
        assert!(r.margin.abs() < 1e-12);
    }
}
