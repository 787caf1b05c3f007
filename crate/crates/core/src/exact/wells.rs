//! Site-disorder families and their exact disorder measure `ν(r) ∝ Z_r`.

use rayon::prelude::*;

use super::{exact_angle, exact_height, AngleObservable, GibbsSpec};
use crate::graph::{build_lattice_box, dirichlet_closure, parallelize_edges, subdivide_edges, Role};
use crate::potentials::EdgePotential;
use crate::{Error, Result};

/// Largest number of disorder sites tabulated exactly.
pub const MAX_SITES: usize = 20;

/// How the disorder enters the inverse temperature of one edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scaling {
    /// Unaffected by the disorder.
    Fixed,
    /// Multiplied by `r_a r_b`.
    Pair(usize, usize),
    /// Multiplied by `r_a`.
    Site(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Angle,
    Height,
}

/// A Gibbs specification whose couplings depend on a site configuration `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderFamily {
    pub base: GibbsSpec,
    /// Disorder sites; bit `i` of a configuration index is `r` at `sites[i]`.
    pub sites: Vec<usize>,
    pub scaling: Vec<Scaling>,
    pub engine: Engine,
}

/// Normalised table of `ν(r) = Z_r / Σ Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureTable {
    pub sites: Vec<usize>,
    pub log_z: Vec<f64>,
    pub probs: Vec<f64>,
}

impl MeasureTable {
    /// Table from unnormalised log weights indexed by configuration.
    pub fn from_log_weights(sites: Vec<usize>, log_z: Vec<f64>) -> Result<Self> {
        if sites.len() > MAX_SITES {
            return Err(Error::Size(format!("{} disorder sites exceed {MAX_SITES}", sites.len())));
        }
        if log_z.len() != 1usize << sites.len() {
            return Err(Error::arg(format!("{} weights for {} sites", log_z.len(), sites.len())));
        }
        if log_z.iter().any(|w| !w.is_finite()) {
            return Err(Error::arg("disorder weights must be positive and finite"));
        }
        let top = log_z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = log_z.iter().map(|w| (w - top).exp()).collect();
        let total: f64 = raw.iter().sum();
        let probs = raw.iter().map(|w| w / total).collect();
        Ok(MeasureTable { sites, log_z, probs })
    }

    /// Independent Bernoulli(`q`) sites.
    pub fn product(n_sites: usize, q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::arg(format!("product measure needs 0 < q < 1, got {q}")));
        }
        let weights = (0..1usize << n_sites)
            .map(|c| {
                let ones = (c as u64).count_ones() as f64;
                ones * q.ln() + (n_sites as f64 - ones) * (1.0 - q).ln()
            })
            .collect();
        MeasureTable::from_log_weights((0..n_sites).collect(), weights)
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn config(&self, index: usize) -> Vec<bool> {
        (0..self.n_sites()).map(|i| index >> i & 1 == 1).collect()
    }

    /// `ν(r_i = 1 | r = config off i)`.
    pub fn conditional_open(&self, i: usize, index: usize) -> f64 {
        let on = index | 1 << i;
        let off = index & !(1 << i);
        1.0 / (1.0 + (self.log_z[off] - self.log_z[on]).exp())
    }

    /// `ν(r_i = 1)`.
    pub fn marginal_open(&self, i: usize) -> f64 {
        self.probs.iter().enumerate().filter(|(c, _)| c >> i & 1 == 1).map(|(_, p)| p).sum()
    }

    pub fn expect(&self, values: &[f64]) -> f64 {
        self.probs.iter().zip(values).map(|(p, v)| p * v).sum()
    }
}

impl DisorderFamily {
    pub fn new(base: GibbsSpec, sites: Vec<usize>, scaling: Vec<Scaling>, engine: Engine) -> Result<Self> {
        if scaling.len() != base.graph.n_edges() {
            return Err(Error::arg("one scaling rule per edge is required"));
        }
        if sites.len() > MAX_SITES {
            return Err(Error::Size(format!("{} disorder sites exceed {MAX_SITES}", sites.len())));
        }
        Ok(DisorderFamily {
            base,
            sites,
            scaling,
            engine,
        })
    }

    fn site_values(&self, index: usize) -> Vec<f64> {
        let mut r = vec![1.0; self.base.graph.n_vertices()];
        for (i, &s) in self.sites.iter().enumerate() {
            r[s] = (index >> i & 1) as f64;
        }
        r
    }

    /// The Gibbs specification at configuration `index`.
    pub fn spec(&self, index: usize) -> GibbsSpec {
        let r = self.site_values(index);
        let mut out = self.base.clone();
        for (e, rule) in self.scaling.iter().enumerate() {
            let f = match *rule {
                Scaling::Fixed => continue,
                Scaling::Pair(a, b) => r[a] * r[b],
                Scaling::Site(a) => r[a],
            };
            if let Some(b) = out.potentials[e].beta() {
                out.potentials[e] = out.potentials[e].with_beta(b * f);
            }
        }
        out
    }

    /// Fully open spec with the disorder-sensitive couplings multiplied by `factor`.
    pub fn scaled_disordered(&self, factor: f64) -> GibbsSpec {
        let mut out = self.base.clone();
        for (e, rule) in self.scaling.iter().enumerate() {
            if *rule != Scaling::Fixed {
                if let Some(b) = out.potentials[e].beta() {
                    out.potentials[e] = out.potentials[e].with_beta(b * factor);
                }
            }
        }
        out
    }

    /// Each edge of `spec` scaled by `r_u r_v`, disorder on every lattice vertex.
    pub fn on_lattice_sites(spec: GibbsSpec, engine: Engine) -> Result<Self> {
        let sites: Vec<usize> = spec
            .graph
            .vertices
            .iter()
            .filter(|v| v.role == Role::Lattice)
            .map(|v| v.id)
            .collect();
        let scaling = spec.graph.edges.iter().map(|e| Scaling::Pair(e.u, e.v)).collect();
        DisorderFamily::new(spec, sites, scaling, engine)
    }

    /// XY model on the `n`-subdivided box `Λ_L^n`: edges touching a lattice
    /// vertex carry `β₁ r_x`, interior edges `nβ₂`.
    pub fn xy_subdivided(d: usize, l: usize, n: usize, beta1: f64, beta2: f64) -> Result<Self> {
        let g = subdivide_edges(&build_lattice_box(d, l)?, n)?;
        let mut pots = Vec::with_capacity(g.n_edges());
        let mut scaling = Vec::with_capacity(g.n_edges());
        for e in &g.edges {
            let lu = g.vertices[e.u].role == Role::Lattice;
            let lv = g.vertices[e.v].role == Role::Lattice;
            let (p, s) = match (lu, lv) {
                (true, true) => (EdgePotential::Xy(beta1), Scaling::Pair(e.u, e.v)),
                (true, false) => (EdgePotential::Xy(beta1), Scaling::Site(e.u)),
                (false, true) => (EdgePotential::Xy(beta1), Scaling::Site(e.v)),
                (false, false) => (EdgePotential::Xy(n as f64 * beta2), Scaling::Fixed),
            };
            pots.push(p);
            scaling.push(s);
        }
        let spec = GibbsSpec::new(g, pots)?;
        let sites = lattice_ids(&spec);
        DisorderFamily::new(spec, sites, scaling, Engine::Angle)
    }

    /// XY height function on `Λ_L` with zero exterior: edge `xy` has weight
    /// `I_{Δ}(r_x r_y β)`, exterior vertices being always open.
    pub fn height_sites(d: usize, l: usize, beta: f64) -> Result<Self> {
        let g = dirichlet_closure(&build_lattice_box(d, l)?)?;
        let spec = GibbsSpec::uniform(g, EdgePotential::BesselHeight(beta));
        DisorderFamily::on_lattice_sites(spec, Engine::Height)
    }

    /// Multigraph height model: each nearest-neighbour pair `x < y` (including
    /// pairs with the exterior) carries `n` parallel Bessel weights with
    /// arguments `r_x β₁`, `nβ₂` (`n − 2` times) and `r_y β₁`.
    pub fn height_multigraph(d: usize, l: usize, n: usize, beta1: f64, beta2: f64) -> Result<Self> {
        if n < 2 {
            return DisorderFamily::height_sites(d, l, beta1);
        }
        let g = parallelize_edges(&dirichlet_closure(&build_lattice_box(d, l)?)?, n)?;
        let mut pots = Vec::with_capacity(g.n_edges());
        let mut scaling = Vec::with_capacity(g.n_edges());
        for e in &g.edges {
            let index = e.origin.map_or(1, |o| o.index);
            let (p, s) = if index == 1 {
                (EdgePotential::BesselHeight(beta1), Scaling::Site(e.u))
            } else if index == n {
                (EdgePotential::BesselHeight(beta1), Scaling::Site(e.v))
            } else {
                (EdgePotential::BesselHeight(n as f64 * beta2), Scaling::Fixed)
            };
            pots.push(p);
            scaling.push(s);
        }
        let spec = GibbsSpec::new(g, pots)?;
        let sites = lattice_ids(&spec);
        DisorderFamily::new(spec, sites, scaling, Engine::Height)
    }
}

fn lattice_ids(spec: &GibbsSpec) -> Vec<usize> {
    spec.graph
        .vertices
        .iter()
        .filter(|v| v.role == Role::Lattice)
        .map(|v| v.id)
        .collect()
}

/// The observable compared by a Wells inequality.
#[derive(Debug, Clone, PartialEq)]
pub enum WellsObservable {
    Angle(AngleObservable),
    /// `Var[φ(site)]`.
    Variance(usize),
}

/// `(ln Z, value, error)` of one spec.
fn evaluate(spec: &GibbsSpec, obs: &WellsObservable) -> Result<(f64, f64, f64)> {
    match obs {
        WellsObservable::Angle(o) => {
            let s = exact_angle(spec, o)?;
            Ok((s.log_z.value, s.value.value, s.value.error_bound))
        }
        WellsObservable::Variance(x) => {
            let s = exact_height(spec, *x)?;
            Ok((s.log_z.value, s.var.value, s.var.error_bound))
        }
    }
}

fn default_observable(family: &DisorderFamily) -> WellsObservable {
    let first = family.sites.first().copied().unwrap_or(0);
    match family.engine {
        Engine::Angle => WellsObservable::Angle(AngleObservable::two_point(first, first)),
        Engine::Height => WellsObservable::Variance(first),
    }
}

fn sweep(family: &DisorderFamily, obs: &WellsObservable) -> Result<Vec<(f64, f64, f64)>> {
    let total = 1usize << family.sites.len();
    (0..total)
        .into_par_iter()
        .map(|c| {
            evaluate(&family.spec(c), obs).map_err(|e| Error::State(format!("configuration {c}: {e}")))
        })
        .collect()
}

/// Exact disorder measure of a family.
pub fn wells_disorder(family: &DisorderFamily) -> Result<MeasureTable> {
    let rows = sweep(family, &default_observable(family))?;
    MeasureTable::from_log_weights(family.sites.clone(), rows.iter().map(|r| r.0).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WellsReport {
    /// Clean-system value at the reduced coupling.
    pub lhs: f64,
    /// `E_ν[value_r]`.
    pub rhs: f64,
    pub margin: f64,
    /// Combined truncation error of both sides.
    pub error: f64,
    pub table: MeasureTable,
}

/// Compares `E_ν[Q_r]` with `Q` of the fully open system whose
/// disorder-sensitive couplings (or all couplings, if `all_edges`) are
/// multiplied by `factor`.
pub fn wells_inequality_check(
    family: &DisorderFamily,
    obs: &WellsObservable,
    factor: f64,
    all_edges: bool,
) -> Result<WellsReport> {
    let rows = sweep(family, obs)?;
    let table = MeasureTable::from_log_weights(family.sites.clone(), rows.iter().map(|r| r.0).collect())?;
    let values: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let rhs = table.expect(&values);
    let rhs_err = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let clean = if all_edges {
        family.base.scaled(factor)
    } else {
        family.scaled_disordered(factor)
    };
    let (_, lhs, lhs_err) = evaluate(&clean, obs)?;
    Ok(WellsReport {
        lhs,
        rhs,
        margin: rhs - lhs,
        error: lhs_err + rhs_err,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LatticeGraph;
    use crate::potentials::bessel_i;

    #[test]
    fn single_site_toggle() {
        let g = LatticeGraph::from_edges(2, &[(0, 1)]).unwrap();
        let spec = GibbsSpec::uniform(g, EdgePotential::Xy(1.5));
        let fam = DisorderFamily::new(spec, vec![0], vec![Scaling::Site(0)], Engine::Angle).unwrap();
        let t = wells_disorder(&fam).unwrap();
        let z1 = bessel_i(0, 1.5);
        assert!((t.probs[1] - z1 / (1.0 + z1)).abs() < 1e-13);
        assert!((t.conditional_open(0, 0) - t.probs[1]).abs() < 1e-13);
    }

    #[test]
    fn zero_beta_is_uniform() {
        let small = crate::graph::build_rect(2, 2).unwrap();
        let fam = DisorderFamily::on_lattice_sites(GibbsSpec::uniform(small, EdgePotential::Xy(0.0)), Engine::Angle).unwrap();
        let t = wells_disorder(&fam).unwrap();
        assert_eq!(t.probs.len(), 16);
        for p in &t.probs {
            assert!((p - 1.0 / 16.0).abs() < 1e-14);
        }
    }

    #[test]
    fn table_normalised_and_positive() {
        let small = crate::graph::build_rect(2, 2).unwrap();
        let fam = DisorderFamily::on_lattice_sites(GibbsSpec::uniform(small, EdgePotential::Xy(1.0)), Engine::Angle).unwrap();
        let t = wells_disorder(&fam).unwrap();
        assert!((t.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(t.probs.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn multigraph_edges_follow_placement() {
        let fam = DisorderFamily::height_multigraph(1, 1, 3, 1.0, 2.0).unwrap();
        let g = &fam.base.graph;
        for e in &g.edges {
            let o = e.origin.unwrap();
            match o.index {
                1 => assert_eq!(fam.scaling[e.id], Scaling::Site(e.u)),
                3 => assert_eq!(fam.scaling[e.id], Scaling::Site(e.v)),
                _ => assert_eq!(fam.base.potentials[e.id], EdgePotential::BesselHeight(6.0)),
            }
        }
    }

    #[test]
    fn chain_height_wells() {
        let fam = DisorderFamily::height_sites(1, 1, 3.0).unwrap();
        let r = wells_inequality_check(&fam, &WellsObservable::Variance(1), 0.25, true).unwrap();
        assert!(r.margin > 0.0, "{r:?}");
    }

    #[test]
    fn no_sensitive_edge_is_tight() {
        let g = LatticeGraph::from_edges(2, &[(0, 1)]).unwrap();
        let spec = GibbsSpec::uniform(g, EdgePotential::Xy(1.0));
        let fam = DisorderFamily::new(spec, vec![0], vec![Scaling::Fixed], Engine::Angle).unwrap();
        let r = wells_inequality_check(&fam, &WellsObservable::Angle(AngleObservable::two_point(0, 1)), 0.25, false).unwrap();
        assert!(r.margin.abs() < 1e-13);
    }
}
