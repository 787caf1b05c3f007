//! Exact verification of the monotonicity, limit and annealing statements on
//! small instances.

use rayon::prelude::*;

use super::{angle_log_z, exact_angle, exact_height, AngleObservable, GibbsSpec};
use crate::graph::{
    build_lattice_box, dirichlet_closure, identify_vertices, parallelize_edges, subdivide_edges_where,
    LatticeGraph,
};
use crate::potentials::{bessel_ratio, EdgePotential, MixingMeasure};
use crate::{Error, Result};

/// Quantity compared before and after a surgery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// `⟨cos(θ_a − θ_b)⟩`.
    TwoPoint(usize, usize),
    /// `Var[φ(x)]`.
    Variance(usize),
}

impl Quantity {
    pub fn eval(&self, spec: &GibbsSpec) -> Result<(f64, f64)> {
        match *self {
            Quantity::TwoPoint(a, b) => {
                let s = exact_angle(spec, &AngleObservable::two_point(a, b))?;
                Ok((s.value.value, s.value.error_bound))
            }
            Quantity::Variance(x) => {
                let s = exact_height(spec, x)?;
                Ok((s.var.value, s.var.error_bound))
            }
        }
    }

    fn relabel(&self, f: impl Fn(usize) -> usize) -> Quantity {
        match *self {
            Quantity::TwoPoint(a, b) => Quantity::TwoPoint(f(a), f(b)),
            Quantity::Variance(x) => Quantity::Variance(f(x)),
        }
    }
}

/// A graph operation with a known effect on the quantity.
#[derive(Debug, Clone, PartialEq)]
pub enum Surgery {
    /// Replace a Villain edge of coupling `J` by `k` parallel edges of `J/k`;
    /// two-point functions do not increase.
    SplitVillain { edge: usize, k: usize },
    /// Merge two vertices; variances do not increase.
    Identify { u: usize, v: usize },
    /// Put `k` new vertices on an edge, each new edge carrying `J/(k+1)`;
    /// variances do not increase.
    AddVertices { edge: usize, k: usize },
    /// Multiply one coupling by `factor > 1`; the quantity does not decrease.
    RaiseConductance { edge: usize, factor: f64 },
    /// Close a vertex by zeroing every incident coupling; the quantity does
    /// not increase.
    CloseSite { vertex: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurgeryReport {
    pub before: f64,
    pub after: f64,
    /// Positive in the predicted direction.
    pub margin: f64,
    pub error: f64,
}

fn require_edge(spec: &GibbsSpec, edge: usize) -> Result<()> {
    if edge >= spec.graph.n_edges() {
        return Err(Error::arg(format!("edge {edge} out of range")));
    }
    Ok(())
}

/// The Gibbs specification after `surgery` and the vertex relabelling it induces.
pub fn apply_surgery(spec: &GibbsSpec, surgery: &Surgery) -> Result<(GibbsSpec, Vec<usize>)> {
    let n = spec.graph.n_vertices();
    let same: Vec<usize> = (0..n).collect();
    match *surgery {
        Surgery::SplitVillain { edge, k } => {
            require_edge(spec, edge)?;
            let EdgePotential::Villain(j) = spec.potentials[edge] else {
                return Err(Error::arg("split requires a Villain edge"));
            };
            if k == 0 {
                return Err(Error::arg("split multiplicity must be positive"));
            }
            let e = &spec.graph.edges[edge];
            let mut out = spec.clone();
            out.set(edge, EdgePotential::Villain(j / k as f64));
            for _ in 1..k {
                out.graph.add_edge(e.u, e.v)?;
                out.potentials.push(EdgePotential::Villain(j / k as f64));
            }
            Ok((out, same))
        }
        Surgery::Identify { u, v } => {
            if u >= n || v >= n || u == v {
                return Err(Error::arg(format!("cannot identify {u} and {v}")));
            }
            let g = identify_vertices(&spec.graph, u, v)?;
            let (keep, drop) = (u.min(v), u.max(v));
            let map: Vec<usize> = (0..n)
                .map(|x| {
                    let x = if x == drop { keep } else { x };
                    if x > drop {
                        x - 1
                    } else {
                        x
                    }
                })
                .collect();
            let pots = spec
                .graph
                .edges
                .iter()
                .filter(|e| map[e.u] != map[e.v])
                .map(|e| spec.potentials[e.id].clone())
                .collect();
            let mut frozen: Vec<usize> = spec.frozen.iter().map(|&f| map[f]).collect();
            frozen.sort_unstable();
            frozen.dedup();
            Ok((GibbsSpec::new(g, pots)?.with_frozen(frozen), map))
        }
        Surgery::AddVertices { edge, k } => {
            require_edge(spec, edge)?;
            let g = subdivide_edges_where(&spec.graph, k + 1, |e| e.id == edge)?;
            let p = &spec.potentials[edge];
            let b = p.beta().ok_or_else(|| Error::arg("edge has no conductance"))?;
            let mut pots = Vec::with_capacity(g.n_edges());
            for e in &spec.graph.edges {
                if e.id == edge {
                    pots.extend(std::iter::repeat(p.with_beta(b / (k + 1) as f64)).take(k + 1));
                } else {
                    pots.push(spec.potentials[e.id].clone());
                }
            }
            Ok((GibbsSpec::new(g, pots)?.with_frozen(spec.frozen.clone()), same))
        }
        Surgery::RaiseConductance { edge, factor } => {
            require_edge(spec, edge)?;
            if !(factor >= 1.0) {
                return Err(Error::arg("raise factor must be at least 1"));
            }
            let mut out = spec.clone();
            let p = &spec.potentials[edge];
            let b = p.beta().ok_or_else(|| Error::arg("edge has no conductance"))?;
            out.set(edge, p.with_beta(b * factor));
            Ok((out, same))
        }
        Surgery::CloseSite { vertex } => {
            if vertex >= n {
                return Err(Error::arg(format!("vertex {vertex} out of range")));
            }
            let mut out = spec.clone();
            for e in &spec.graph.edges {
                if e.u == vertex || e.v == vertex {
                    out.set(e.id, spec.potentials[e.id].with_beta(0.0));
                }
            }
            Ok((out, same))
        }
    }
}

/// Evaluates the quantity before and after `surgery`.
pub fn surgery_monotonicity_check(spec: &GibbsSpec, surgery: &Surgery, q: Quantity) -> Result<SurgeryReport> {
    let (after_spec, map) = apply_surgery(spec, surgery)?;
    let (before, e1) = q.eval(spec)?;
    let (after, e2) = q.relabel(|x| map[x]).eval(&after_spec)?;
    let margin = match surgery {
        Surgery::RaiseConductance { .. } => after - before,
        _ => before - after,
    };
    Ok(SurgeryReport {
        before,
        after,
        margin,
        error: e1 + e2,
    })
}

/// `Var[φ(0)]` on `Λ_L` and `Λ_{L+1}` with zero exterior; the second is not smaller.
pub fn domain_growth_check(d: usize, l: usize, p: &EdgePotential) -> Result<SurgeryReport> {
    let eval = |l: usize| -> Result<(f64, f64)> {
        let g = dirichlet_closure(&build_lattice_box(d, l)?)?;
        let o = g.origin();
        let s = exact_height(&GibbsSpec::uniform(g, p.clone()), o)?;
        Ok((s.var.value, s.var.error_bound))
    };
    let (before, e1) = eval(l)?;
    let (after, e2) = eval(l + 1)?;
    Ok(SurgeryReport {
        before,
        after,
        margin: after - before,
        error: e1 + e2,
    })
}

/// `|⟨cos(θ_a − θ_b)⟩` of the `n`-subdivided XY chain at `nβ` minus the
/// Villain(β) value`|` for each `n`, on a graph whose edges are all subdivided.
pub fn metric_limit_check(base: &LatticeGraph, a: usize, b: usize, beta: f64, ns: &[usize]) -> Result<Vec<f64>> {
    let villain = exact_angle(
        &GibbsSpec::uniform(base.clone(), EdgePotential::Villain(beta)),
        &AngleObservable::two_point(a, b),
    )?
    .value
    .value;
    ns.par_iter()
        .map(|&n| {
            let g = subdivide_edges_where(base, n, |_| true)?;
            let spec = GibbsSpec::uniform(g, EdgePotential::Xy(n as f64 * beta));
            let xy = exact_angle(&spec, &AngleObservable::two_point(a, b))?.value.value;
            Ok((xy - villain).abs())
        })
        .collect()
}

/// `|(I_k(nβ)/I_0(nβ))^n − e^{−k²/(2β)}|`.
pub fn bessel_power_error(k: i64, beta: f64, n: usize) -> f64 {
    let chain = bessel_ratio(k, n as f64 * beta).powi(n as i32);
    (chain - (-((k * k) as f64) / (2.0 * beta)).exp()).abs()
}

/// Minimum over `n₁, n₂ ≤ n_max` of `Σ_{r∈{0,1}} (r − ½)^{n₁} (r + ½)^{n₂}`.
pub fn discrete_wells_min(n_max: u32) -> f64 {
    let mut worst = f64::INFINITY;
    for n1 in 0..=n_max as i32 {
        for n2 in 0..=n_max as i32 {
            let s: f64 = [0.0f64, 1.0].iter().map(|r| (r - 0.5).powi(n1) * (r + 0.5).powi(n2)).sum();
            worst = worst.min(s);
        }
    }
    worst
}

/// Connected simple graphs on `k ≤ 4` labelled vertices, one per
/// isomorphism class.
pub fn small_connected_graphs(max_vertices: usize) -> Vec<LatticeGraph> {
    let mut out = Vec::new();
    for k in 2..=max_vertices.min(4) {
        let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect();
        let mut seen: Vec<Vec<usize>> = Vec::new();
        for mask in 1u32..(1 << pairs.len()) {
            let edges: Vec<(usize, usize)> = (0..pairs.len()).filter(|i| mask >> i & 1 == 1).map(|i| pairs[i]).collect();
            let Ok(g) = LatticeGraph::from_edges(k, &edges) else { continue };
            if !g.is_connected() {
                continue;
            }
            let key = canonical_form(k, &edges);
            if !seen.contains(&key) {
                seen.push(key);
                out.push(g);
            }
        }
    }
    out
}

fn canonical_form(k: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best: Option<Vec<usize>> = None;
    loop {
        let mut code: Vec<usize> = edges
            .iter()
            .map(|&(a, b)| {
                let (x, y) = (perm[a].min(perm[b]), perm[a].max(perm[b]));
                x * k + y
            })
            .collect();
        code.sort_unstable();
        if best.as_ref().map_or(true, |b| code < *b) {
            best = Some(code);
        }
        // Next lexicographic permutation.
        let Some(i) = (0..k.saturating_sub(1)).rev().find(|&i| perm[i] < perm[i + 1]) else { break };
        let j = (i + 1..k).rev().find(|&j| perm[j] > perm[i]).unwrap();
        perm.swap(i, j);
        perm[i + 1..].reverse();
    }
    best.unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GinibreReport {
    /// Smallest finite difference seen (non-negative when the inequality holds).
    pub min_difference: f64,
    pub cases: usize,
    /// Graph edges, potentials, raised edge and pair at the minimum.
    pub worst: String,
}

/// Finite-difference test that every two-point function is non-decreasing in
/// every coupling, over all XY/Villain assignments on small connected graphs.
pub fn ginibre_scan(max_vertices: usize, couplings: &[f64], step: f64) -> Result<GinibreReport> {
    let mut jobs = Vec::new();
    for g in small_connected_graphs(max_vertices) {
        let m = g.n_edges();
        for types in 0u32..(1 << m) {
            for &j in couplings {
                let pots: Vec<EdgePotential> = (0..m)
                    .map(|e| {
                        if types >> e & 1 == 1 {
                            EdgePotential::Villain(j)
                        } else {
                            EdgePotential::Xy(j)
                        }
                    })
                    .collect();
                for e in 0..m {
                    jobs.push((g.clone(), pots.clone(), e));
                }
            }
        }
    }
    let results: Vec<Result<(f64, usize, String)>> = jobs
        .par_iter()
        .map(|(g, pots, e)| {
            let base = GibbsSpec::new(g.clone(), pots.clone())?;
            let mut raised = base.clone();
            let b = pots[*e].beta().unwrap_or(0.0);
            raised.set(*e, pots[*e].with_beta(b + step));
            let n = g.n_vertices();
            let mut worst = (f64::INFINITY, String::new());
            let mut count = 0;
            for a in 0..n {
                for c in a + 1..n {
                    let q = Quantity::TwoPoint(a, c);
                    let (lo, _) = q.eval(&base)?;
                    let (hi, _) = q.eval(&raised)?;
                    count += 1;
                    if hi - lo < worst.0 {
                        let pot_list: Vec<String> = pots.iter().map(|p| p.to_string()).collect();
                        worst = (
                            hi - lo,
                            format!(
                                "edges {:?} potentials [{}] raised {e} pair ({a},{c})",
                                g.edges.iter().map(|x| (x.u, x.v)).collect::<Vec<_>>(),
                                pot_list.join(", ")
                            ),
                        );
                    }
                }
            }
            Ok((worst.0, count, worst.1))
        })
        .collect();
    let mut report = GinibreReport {
        min_difference: f64::INFINITY,
        cases: 0,
        worst: String::new(),
    };
    for r in results {
        let (d, c, w) = r?;
        report.cases += c;
        if d < report.min_difference {
            report.min_difference = d;
            report.worst = w;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealedReport {
    /// `⟨cos⟩` under the annealed mixture potential.
    pub annealed: f64,
    /// Partition-weighted average of quenched values.
    pub reweighted: f64,
    /// Plain average of quenched values over the atom draws.
    pub quenched_mean: f64,
}

/// Annealed Villain on two parallel edges between vertices `0` and `1` with
/// point-mass mixing, compared with the exact average over independent atom
/// draws per edge.
pub fn annealed_pair_check(atoms: &[(f64, f64)], beta: f64) -> Result<AnnealedReport> {
    let mixing = MixingMeasure::point_masses(atoms.to_vec())?;
    let g = LatticeGraph::from_edges(2, &[(0, 1), (0, 1)])?;
    let obs = AngleObservable::two_point(0, 1);
    let annealed = exact_angle(
        &GibbsSpec::uniform(g.clone(), EdgePotential::AnnealedMixture { mixing, beta }),
        &obs,
    )?
    .value
    .value;
    let (mut num, mut den, mut plain) = (0.0, 0.0, 0.0);
    let mut terms = Vec::new();
    for &(j1, w1) in atoms {
        for &(j2, w2) in atoms {
            let spec = GibbsSpec::new(
                g.clone(),
                vec![EdgePotential::Villain(beta * j1), EdgePotential::Villain(beta * j2)],
            )?;
            let s = exact_angle(&spec, &obs)?;
            terms.push((w1 * w2, s.log_z.value, s.value.value));
        }
    }
    let top = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    for (w, lz, v) in terms {
        let z = (lz - top).exp();
        num += w * z * v;
        den += w * z;
        plain += w * v;
    }
    Ok(AnnealedReport {
        annealed,
        reweighted: num / den,
        quenched_mean: plain,
    })
}

/// Smallest increment of `ln Z` of the Villain model on `graph` when each
/// coupling in turn is raised by `step`.
pub fn villain_partition_monotonicity(graph: &LatticeGraph, j: f64, step: f64) -> Result<f64> {
    let base = GibbsSpec::uniform(graph.clone(), EdgePotential::Villain(j));
    let z0 = angle_log_z(&base)?.value;
    (0..graph.n_edges())
        .into_par_iter()
        .map(|e| {
            let mut s = base.clone();
            s.set(e, EdgePotential::Villain(j + step));
            Ok(angle_log_z(&s)?.value - z0)
        })
        .try_reduce(|| f64::INFINITY, |a, b| Ok(a.min(b)))
}

/// Parallel copies of every edge, each with `J/n`, as used when comparing
/// multigraph and simple-graph models.
pub fn split_all(spec: &GibbsSpec, n: usize) -> Result<GibbsSpec> {
    let g = parallelize_edges(&spec.graph, n)?;
    let pots = g
        .edges
        .iter()
        .map(|e| {
            let parent = e.origin.map_or(e.id, |o| o.parent);
            let p = &spec.potentials[parent];
            p.with_beta(p.beta().unwrap_or(0.0) / n as f64)
        })
        .collect();
    Ok(GibbsSpec::new(g, pots)?.with_frozen(spec.frozen.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_census() {
        let gs = small_connected_graphs(4);
        let by_size = |k| gs.iter().filter(|g| g.n_vertices() == k).count();
        assert_eq!((by_size(2), by_size(3), by_size(4)), (1, 2, 6));
    }

    #[test]
    fn split_villain_lowers_two_point() {
        let g = LatticeGraph::from_edges(2, &[(0, 1)]).unwrap();
        let spec = GibbsSpec::uniform(g, EdgePotential::Villain(2.0));
        let r = surgery_monotonicity_check(&spec, &Surgery::SplitVillain { edge: 0, k: 2 }, Quantity::TwoPoint(0, 1)).unwrap();
        assert!((r.before - (-0.25f64).exp()).abs() < 1e-12);
        assert!(r.margin > 0.0);
    }

    #[test]
    fn split_xy_is_neutral() {
        let g = LatticeGraph::from_edges(2, &[(0, 1)]).unwrap();
        let spec = GibbsSpec::uniform(g, EdgePotential::Xy(2.0));
        let s = split_all(&spec, 2).unwrap();
        let a = Quantity::TwoPoint(0, 1).eval(&spec).unwrap().0;
        let b = Quantity::TwoPoint(0, 1).eval(&s).unwrap().0;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn identify_frozen_pair_is_neutral() {
        let g = LatticeGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let spec = GibbsSpec::uniform(g, EdgePotential::GaussianHeight(1.0)).with_frozen(vec![0, 2]);
        let r = surgery_monotonicity_check(&spec, &Surgery::Identify { u: 0, v: 2 }, Quantity::Variance(1)).unwrap();
        assert!(r.margin.abs() < 1e-12);
    }

    #[test]
    fn add_vertices_keeps_other_edges() {
        let g = LatticeGraph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let mut spec = GibbsSpec::uniform(g, EdgePotential::GaussianHeight(1.0)).with_frozen(vec![0]);
        spec.set(2, EdgePotential::GaussianHeight(3.0));
        let (out, _) = apply_surgery(&spec, &Surgery::AddVertices { edge: 1, k: 2 }).unwrap();
        assert_eq!(out.graph.n_edges(), 5);
        let threes = out.potentials.iter().filter(|p| **p == EdgePotential::GaussianHeight(3.0)).count();
        let thirds = out.potentials.iter().filter(|p| **p == EdgePotential::GaussianHeight(1.0 / 3.0)).count();
        assert_eq!((threes, thirds), (1, 3));
        let r = surgery_monotonicity_check(&spec, &Surgery::AddVertices { edge: 1, k: 2 }, Quantity::Variance(2)).unwrap();
        assert!(r.margin >= -1e-12);
    }

    #[test]
    fn metric_limit_single_edge() {
        let g = LatticeGraph::from_edges(2, &[(0, 1)]).unwrap();
        let errs = metric_limit_check(&g, 0, 1, 1.0, &[1, 2, 4, 8]).unwrap();
        for (n, e) in [1usize, 2, 4, 8].iter().zip(&errs) {
            assert!((e - bessel_power_error(1, 1.0, *n)).abs() < 1e-12);
        }
        assert!(errs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn discrete_wells_nonnegative() {
        assert!(discrete_wells_min(12) >= 0.0);
    }

    #[test]
    fn annealed_identity_and_direction() {
        let r = annealed_pair_check(&[(0.5, 0.5), (2.0, 0.5)], 1.0).unwrap();
        assert!((r.annealed - r.reweighted).abs() < 1e-10);
        assert!(r.annealed > r.quenched_mean);
    }
}
