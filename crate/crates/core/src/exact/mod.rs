//! Exact finite-volume oracles.
//!
//! Angle models are integrated on a uniform grid after gauge fixing one vertex
//! per component; the integrand is a trigonometric series with rapidly
//! decaying coefficients, so the grid rule converges geometrically and the
//! grid is doubled until two consecutive answers agree. Height models are
//! summed over a window `|φ| ≤ M` that is widened the same way. Both reduce to
//! a sum-product contraction handled by [`elim`].

pub mod angle;
pub mod checks;
pub mod elim;
pub mod flows;
pub mod height;
pub mod wells;

pub use angle::{angle_log_z, exact_angle, pair_difference_law, AngleObservable, AngleSolution};
pub use flows::flow_expansion;
pub use height::{exact_height, HeightSolution};
pub use wells::{wells_disorder, wells_inequality_check, DisorderFamily, Engine, MeasureTable, Scaling, WellsObservable, WellsReport};

use crate::graph::{LatticeGraph, Role, UnionFind};
use crate::potentials::EdgePotential;
use crate::{Error, Result};

/// A finite Gibbs specification: a graph, one potential per edge id, and the
/// vertices pinned to height zero (ignored by angle engines).
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsSpec {
    pub graph: LatticeGraph,
    pub potentials: Vec<EdgePotential>,
    pub frozen: Vec<usize>,
}

impl GibbsSpec {
    /// Pins the exterior and ghost vertices by default.
    pub fn new(graph: LatticeGraph, potentials: Vec<EdgePotential>) -> Result<Self> {
        if potentials.len() != graph.n_edges() {
            return Err(Error::arg(format!(
                "{} potentials for {} edges",
                potentials.len(),
                graph.n_edges()
            )));
        }
        let frozen = graph
            .vertices
            .iter()
            .filter(|v| matches!(v.role, Role::Exterior | Role::Ghost))
            .map(|v| v.id)
            .collect();
        Ok(GibbsSpec {
            graph,
            potentials,
            frozen,
        })
    }

    pub fn uniform(graph: LatticeGraph, p: EdgePotential) -> Self {
        let potentials = vec![p; graph.n_edges()];
        GibbsSpec::new(graph, potentials).expect("lengths agree by construction")
    }

    pub fn with_frozen(mut self, frozen: Vec<usize>) -> Self {
        self.frozen = frozen;
        self
    }

    pub fn set(&mut self, edge: usize, p: EdgePotential) {
        self.potentials[edge] = p;
    }

    /// Same spec with every inverse temperature multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for p in out.potentials.iter_mut() {
            if let Some(b) = p.beta() {
                *p = p.with_beta(b * factor);
            }
        }
        out
    }
}

/// A numerical value with an error estimate and the truncation actually used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactResult {
    pub value: f64,
    /// Estimated bound on `|value - exact|`.
    pub error_bound: f64,
    /// Flow truncation (flow engine).
    pub k: Option<usize>,
    /// Height window (height engine).
    pub m: Option<usize>,
    /// Points per angle (grid engine).
    pub grid: Option<usize>,
    pub work: u64,
    /// False when the requested tolerance was not reached within budget.
    pub converged: bool,
}

/// Merges vertices joined by edges satisfying `rigid`; returns the node of each
/// vertex and the node count.
pub(crate) fn contract_by(g: &LatticeGraph, rigid: impl Fn(usize) -> bool) -> (Vec<usize>, usize) {
    let mut uf = UnionFind::new(g.n_vertices());
    for e in &g.edges {
        if rigid(e.id) {
            uf.union(e.u, e.v);
        }
    }
    uf.labels()
}

/// Couplings between distinct nodes, grouped by unordered node pair.
pub(crate) fn group_couplings(
    g: &LatticeGraph,
    node: &[usize],
    keep: impl Fn(usize) -> bool,
) -> (Vec<((usize, usize), Vec<usize>)>, Vec<usize>) {
    let mut groups: std::collections::BTreeMap<(usize, usize), Vec<usize>> = Default::default();
    let mut internal = Vec::new();
    for e in &g.edges {
        if !keep(e.id) {
            continue;
        }
        let (a, b) = (node[e.u], node[e.v]);
        if a == b {
            internal.push(e.id);
        } else {
            groups.entry((a.min(b), a.max(b))).or_default().push(e.id);
        }
    }
    (groups.into_iter().collect(), internal)
}
