//! Windowed summation of integer height models.

use super::elim::{Factor, Model};
use super::{contract_by, group_couplings, ExactResult, GibbsSpec};
use crate::{Error, Result};

/// Agreement required between consecutive windows, relative to `max(1, |x|)`.
pub const WINDOW_TOL: f64 = 1e-12;
/// Largest window half-width tried.
pub const MAX_WINDOW: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct HeightSolution {
    pub var: ExactResult,
    /// `ln Z` with respect to counting measure.
    pub log_z: ExactResult,
    /// `P(φ(site) = h)` for `h = -m..=m`.
    pub marginal: Vec<f64>,
}

impl HeightSolution {
    pub fn window(&self) -> usize {
        (self.marginal.len() - 1) / 2
    }
}

struct Reduced {
    node: Vec<usize>,
    /// Variable of each node; `None` marks pinned nodes.
    var: Vec<Option<usize>>,
    n_vars: usize,
    pairs: Vec<((usize, usize), Vec<usize>)>,
    constant: f64,
    scale: f64,
}

fn reduce(spec: &GibbsSpec) -> Result<Reduced> {
    let g = &spec.graph;
    let pots = &spec.potentials;
    let (node, n_nodes) = contract_by(g, |e| pots[e].height_is_rigid());
    let mut pinned = vec![false; n_nodes];
    for &f in &spec.frozen {
        if f >= g.n_vertices() {
            return Err(Error::arg(format!("frozen vertex {f} out of range")));
        }
        pinned[node[f]] = true;
    }
    let (pairs, internal) = group_couplings(g, &node, |e| !matches!(pots[e], crate::potentials::EdgePotential::Free));
    let mut constant: f64 = internal.iter().map(|&e| pots[e].ln_height_weight0()).sum();
    let mut scale = 0.0f64;
    for (_, es) in &pairs {
        for &e in es {
            constant += pots[e].ln_height_weight0();
            scale = scale.max(pots[e].height_scale());
        }
    }
    // Every free node must reach a pinned node, otherwise heights are not tight.
    let mut uf = crate::graph::UnionFind::new(n_nodes);
    for ((a, b), _) in &pairs {
        uf.union(*a, *b);
    }
    let mut anchored = vec![false; n_nodes];
    for x in 0..n_nodes {
        if pinned[x] {
            let r = uf.find(x);
            anchored[r] = true;
        }
    }
    let mut var = vec![None; n_nodes];
    let mut n_vars = 0;
    for x in 0..n_nodes {
        if pinned[x] {
            continue;
        }
        if !anchored[uf.find(x)] {
            return Err(Error::Structure(format!(
                "height node containing vertex {} is not connected to a frozen vertex",
                node.iter().position(|&n| n == x).unwrap_or(x)
            )));
        }
        var[x] = Some(n_vars);
        n_vars += 1;
    }
    Ok(Reduced {
        node,
        var,
        n_vars,
        pairs,
        constant,
        scale,
    })
}

fn build_model(spec: &GibbsSpec, r: &Reduced, m: usize) -> Model {
    let width = 2 * m + 1;
    let mut model = Model::new(vec![width; r.n_vars]);
    let mi = m as i64;
    for ((a, b), es) in &r.pairs {
        let table: Vec<f64> = (-2 * mi..=2 * mi)
            .map(|d| es.iter().map(|&e| spec.potentials[e].ln_height_weight_rel(d)).sum::<f64>().exp())
            .collect();
        let w = |d: i64| table[(d + 2 * mi) as usize];
        match (r.var[*a], r.var[*b]) {
            (Some(va), Some(vb)) => model.push(Factor::from_fn(&[va, vb], &model.domains, |x| {
                w(x[0] as i64 - x[1] as i64)
            })),
            (Some(v), None) | (None, Some(v)) => {
                model.push(Factor::from_fn(&[v], &model.domains, |x| w(x[0] as i64 - mi)))
            }
            (None, None) => {}
        }
    }
    model
}

fn solve_window(spec: &GibbsSpec, r: &Reduced, site: usize, m: usize) -> Result<(f64, f64, Vec<f64>, u64)> {
    let model = build_model(spec, r, m);
    let width = 2 * m + 1;
    match r.var[r.node[site]] {
        None => {
            let c = model.contract(&[])?;
            let mut marg = vec![0.0; width];
            marg[m] = 1.0;
            Ok((0.0, c.ln_total() + r.constant, marg, c.work))
        }
        Some(v) => {
            let c = model.contract(&[v])?;
            let marg = c.normalized();
            let (mut m1, mut m2) = (0.0, 0.0);
            for (i, p) in marg.iter().enumerate() {
                let h = i as f64 - m as f64;
                m1 += p * h;
                m2 += p * h * h;
            }
            Ok((m2 - m1 * m1, c.ln_total() + r.constant, marg, c.work))
        }
    }
}

/// `Var[φ(site)]`, `ln Z` and the marginal of `φ(site)`.
pub fn exact_height(spec: &GibbsSpec, site: usize) -> Result<HeightSolution> {
    exact_height_from(spec, site, None)
}

/// As [`exact_height`], starting the window search at `m0`.
pub fn exact_height_from(spec: &GibbsSpec, site: usize, m0: Option<usize>) -> Result<HeightSolution> {
    if site >= spec.graph.n_vertices() {
        return Err(Error::arg(format!("site {site} out of range")));
    }
    let r = reduce(spec)?;
    let mut m = m0.unwrap_or_else(|| {
        let s = if r.scale.is_finite() { r.scale } else { 1e4 };
        (2.0 * s.sqrt()).ceil().max(2.0) as usize
    });
    let mut work = 0;
    let mut prev: Option<(f64, f64)> = None;
    let mut best = None;
    while m <= MAX_WINDOW {
        let (var, lz, marg, w) = match solve_window(spec, &r, site, m) {
            Ok(x) => x,
            Err(Error::Resource(msg)) => {
                if best.is_none() {
                    return Err(Error::Resource(msg));
                }
                break;
            }
            Err(e) => return Err(e),
        };
        work += w;
        let done = match prev {
            Some((pv, plz)) => {
                let dv = (var - pv).abs();
                let dz = (lz - plz).abs();
                best = Some((var, lz, marg, dv, dz, m));
                dv <= WINDOW_TOL * var.abs().max(1.0) && dz <= WINDOW_TOL * lz.abs().max(1.0)
            }
            None => {
                if r.n_vars == 0 {
                    best = Some((var, lz, marg, 0.0, 0.0, m));
                    true
                } else {
                    false
                }
            }
        };
        if done {
            break;
        }
        prev = Some((var, lz));
        m += (m / 2).max(2);
    }
    let (var, lz, marginal, dv, dz, m) = best.ok_or_else(|| Error::Resource("no window evaluated".into()))?;
    let converged = dv <= WINDOW_TOL * var.abs().max(1.0) && dz <= WINDOW_TOL * lz.abs().max(1.0);
    let mk = |value: f64, err: f64| ExactResult {
        value,
        error_bound: err + 8.0 * f64::EPSILON * value.abs().max(1.0),
        k: None,
        m: Some(m),
        grid: None,
        work,
        converged,
    };
    Ok(HeightSolution {
        var: mk(var, dv),
        log_z: mk(lz, dz),
        marginal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_lattice_box, dirichlet_closure, LatticeGraph};
    use crate::potentials::EdgePotential;

    fn pinned_edge(p: EdgePotential) -> GibbsSpec {
        GibbsSpec::uniform(LatticeGraph::from_edges(2, &[(0, 1)]).unwrap(), p).with_frozen(vec![1])
    }

    #[test]
    fn single_site_gaussian_series() {
        let beta = 2.5;
        let s = exact_height(&pinned_edge(EdgePotential::GaussianHeight(beta)), 0).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for k in -200i64..=200 {
            let w = (-((k * k) as f64) / (2.0 * beta)).exp();
            num += (k * k) as f64 * w;
            den += w;
        }
        assert!((s.var.value - num / den).abs() < 1e-12);
        assert!((s.log_z.value - den.ln()).abs() < 1e-12);
        assert!(s.var.converged);
    }

    #[test]
    fn tiny_beta_localises() {
        let s = exact_height(&pinned_edge(EdgePotential::GaussianHeight(1e-3)), 0).unwrap();
        assert!(s.var.value <= 1e-6);
    }

    #[test]
    fn closed_site_has_zero_variance() {
        let s = exact_height(&pinned_edge(EdgePotential::BesselHeight(0.0)), 0).unwrap();
        assert_eq!(s.var.value, 0.0);
    }

    #[test]
    fn bessel_single_site() {
        let beta = 1.7;
        let s = exact_height(&pinned_edge(EdgePotential::BesselHeight(beta)), 0).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for k in -60i64..=60 {
            let w = crate::potentials::bessel_i(k, beta);
            num += (k * k) as f64 * w;
            den += w;
        }
        assert!((s.var.value - num / den).abs() < 1e-12);
        assert!((s.log_z.value - den.ln()).abs() < 1e-12);
    }

    #[test]
    fn unpinned_is_an_error() {
        let g = LatticeGraph::from_edges(2, &[(0, 1)]).unwrap();
        let spec = GibbsSpec::uniform(g, EdgePotential::GaussianHeight(1.0));
        assert!(matches!(exact_height(&spec, 0), Err(Error::Structure(_))));
    }

    #[test]
    fn box_matches_brute_force() {
        let g = dirichlet_closure(&build_lattice_box(1, 1).unwrap()).unwrap();
        let spec = GibbsSpec::uniform(g, EdgePotential::GaussianHeight(1.3));
        let s = exact_height(&spec, 1).unwrap();
        let w = |d: i64| (-((d * d) as f64) / 2.6).exp();
        let (mut num, mut den) = (0.0, 0.0);
        let r = 25;
        for a in -r..=r {
            for b in -r..=r {
                for c in -r..=r {
                    let p = w(a) * w(a - b) * w(b - c) * w(c);
                    num += (b * b) as f64 * p;
                    den += p;
                }
            }
        }
        assert!((s.var.value - num / den).abs() < 1e-12);
    }
}
