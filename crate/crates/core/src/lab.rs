//! Experiment configuration, CSV output and the acceptance registry.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::duality::{duality_check, ghost_layout, build_div_s1};
use crate::exact::checks::{
    annealed_pair_check, bessel_power_error, domain_growth_check, ginibre_scan, metric_limit_check,
    surgery_monotonicity_check, villain_partition_monotonicity, Quantity, Surgery,
};
use crate::exact::{
    exact_angle, exact_height, wells_disorder, wells_inequality_check, AngleObservable, DisorderFamily, Engine,
    GibbsSpec, WellsObservable,
};
use crate::graph::{build_lattice_box, build_rect, dirichlet_closure, LatticeGraph, Role};
use crate::mcmc::{
    angle_stationarity, height_box, height_stationarity, power_law_exponent, run_angle_chain, run_height_chain,
    variance_scan, villain_two_point_scan, ChainConfig, HeightModel,
};
use crate::percolation::{
    check_conditional_domination, domination_threshold, dual_config, good_box, renorm_window, sample_bernoulli,
    Kind, PlanarBox,
};
use crate::potentials::{bessel_i, mixture_identity_check, EdgePotential};
use crate::renorm::{bound_chain, sample_instance, Layout};
use crate::{rng, Error, Result};

/// Environment variable holding the worker count.
pub const THREADS_ENV: &str = "QUENCH_THREADS";

pub const SCENARIOS: [&str; 8] = [
    "bkt-villain",
    "deloc-gff",
    "deloc-zxy",
    "annealed-villain",
    "annealed-potential",
    "wells-suite",
    "duality-suite",
    "renorm-suite",
];

fn default_seed() -> u64 {
    1
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_sweeps() -> usize {
    20_000
}
fn default_burn_in() -> usize {
    2_000
}
fn default_dsamples() -> usize {
    8
}
fn default_budget() -> f64 {
    3600.0
}

/// Declarative experiment description, read from TOML.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub beta1: Vec<f64>,
    #[serde(default)]
    pub beta2: Vec<f64>,
    #[serde(default)]
    pub p: Vec<f64>,
    #[serde(default, rename = "L")]
    pub l: Vec<usize>,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default, rename = "L0")]
    pub l0: Vec<usize>,
    #[serde(default)]
    pub lambda: Vec<f64>,
    /// Distances for two-point scans.
    #[serde(default)]
    pub x: Vec<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_dsamples")]
    pub dsamples: usize,
    /// Wall-clock budget in seconds.
    #[serde(default = "default_budget")]
    pub budget: f64,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        ExperimentConfig::from_toml(&fs::read_to_string(path)?)
    }

    fn required(&self) -> &'static [&'static str] {
        match self.scenario.as_str() {
            "bkt-villain" => &["beta", "p", "L", "x"],
            "deloc-gff" | "deloc-zxy" => &["beta", "p", "L"],
            "annealed-villain" => &["beta"],
            "annealed-potential" => &["x"],
            "wells-suite" => &["beta"],
            "duality-suite" => &["L", "n", "lambda", "beta1", "beta2"],
            "renorm-suite" => &["p", "beta"],
            _ => &[],
        }
    }

    fn grid_len(&self, name: &str) -> usize {
        match name {
            "beta" => self.beta.len(),
            "beta1" => self.beta1.len(),
            "beta2" => self.beta2.len(),
            "p" => self.p.len(),
            "L" => self.l.len(),
            "n" => self.n.len(),
            "L0" => self.l0.len(),
            "lambda" => self.lambda.len(),
            "x" => self.x.len(),
            _ => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !SCENARIOS.contains(&self.scenario.as_str()) {
            return Err(Error::arg(format!("unknown scenario `{}`", self.scenario)));
        }
        for g in self.required() {
            if self.grid_len(g) == 0 {
                return Err(Error::arg(format!("grid `{g}` must be nonempty for {}", self.scenario)));
            }
        }
        if !(self.budget > 0.0) || self.sweeps == 0 || self.dsamples == 0 {
            return Err(Error::arg("budgets must be positive"));
        }
        if self.burn_in >= self.sweeps {
            return Err(Error::arg("burn-in must be shorter than the run"));
        }
        if self.p.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::arg("p must lie in [0, 1]"));
        }
        Ok(())
    }

    fn chain(&self) -> ChainConfig {
        ChainConfig::new(self.sweeps, self.burn_in, self.seed).with_proposal(0.8)
    }
}

/// Rows of one scenario as CSV text with a header.
struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn f(x: f64) -> String {
    format!("{x}")
}

/// Tracks the wall-clock budget of a run.
struct Budget {
    start: Instant,
    limit: f64,
}

impl Budget {
    fn exceeded(&self) -> bool {
        self.start.elapsed().as_secs_f64() > self.limit
    }
}

/// Runs a scenario and writes its CSV files into the output directory. When
/// the budget runs out the rows computed so far are written together with a
/// `<scenario>.FAILED` marker and a resource error is returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output)?;
    let budget = Budget {
        start: Instant::now(),
        limit: cfg.budget,
    };
    let mut tables: Vec<(String, Table)> = Vec::new();
    let outcome = dispatch(cfg, &budget, &mut tables);
    let mut paths = Vec::new();
    for (name, t) in &tables {
        let p = cfg.output.join(format!("{name}.csv"));
        t.write(&p)?;
        paths.push(p);
    }
    let marker = cfg.output.join(format!("{}.FAILED", cfg.scenario));
    match outcome {
        Ok(()) => {
            if marker.exists() {
                fs::remove_file(&marker)?;
            }
            Ok(paths)
        }
        Err(e) => {
            fs::write(&marker, format!("{e}\n"))?;
            Err(e)
        }
    }
}

fn check_budget(b: &Budget) -> Result<()> {
    if b.exceeded() {
        Err(Error::Resource("experiment budget exhausted".into()))
    } else {
        Ok(())
    }
}

fn dispatch(cfg: &ExperimentConfig, budget: &Budget, tables: &mut Vec<(String, Table)>) -> Result<()> {
    let chain = cfg.chain();
    match cfg.scenario.as_str() {
        "deloc-gff" | "deloc-zxy" => {
            let model = if cfg.scenario == "deloc-gff" { HeightModel::Gff } else { HeightModel::Zxy };
            tables.push((
                cfg.scenario.clone(),
                Table::new(&["model", "beta", "p", "L", "mean", "stderr", "neff", "replicas", "dsamples"]),
            ));
            tables.push((
                format!("{}_fit", cfg.scenario),
                Table::new(&["model", "beta", "p", "slope", "slope_se", "t"]),
            ));
            for &beta in &cfg.beta {
                for &p in &cfg.p {
                    check_budget(budget)?;
                    let (rows, fits) = variance_scan(model, &[beta], &[p], &cfg.l, &chain, cfg.dsamples)?;
                    for r in rows {
                        let e = r.estimate;
                        tables[0].1.push(vec![
                            model.name().into(),
                            f(r.beta),
                            f(r.p),
                            r.l.to_string(),
                            f(e.mean),
                            f(e.stderr),
                            f(e.n_eff),
                            e.replicas.to_string(),
                            e.dsamples.to_string(),
                        ]);
                    }
                    for ft in fits {
                        tables[1].1.push(vec![model.name().into(), f(ft.beta), f(ft.p), f(ft.slope), f(ft.slope_se), f(ft.t)]);
                    }
                }
            }
        }
        "bkt-villain" => {
            tables.push((
                cfg.scenario.clone(),
                Table::new(&["model", "beta", "p", "L", "x", "mean", "stderr", "neff", "replicas", "dsamples"]),
            ));
            for &beta in &cfg.beta {
                for &p in &cfg.p {
                    for &l in &cfg.l {
                        check_budget(budget)?;
                        let ests = villain_two_point_scan(beta, p, l, &cfg.x, &chain, cfg.dsamples)?;
                        for (x, e) in cfg.x.iter().zip(ests) {
                            tables[0].1.push(vec![
                                "villain".into(),
                                f(beta),
                                f(p),
                                l.to_string(),
                                x.to_string(),
                                f(e.mean),
                                f(e.stderr),
                                f(e.n_eff),
                                e.replicas.to_string(),
                                e.dsamples.to_string(),
                            ]);
                        }
                    }
                }
            }
        }
        "annealed-villain" => {
            tables.push((
                cfg.scenario.clone(),
                Table::new(&["beta", "annealed", "reweighted", "quenched_mean"]),
            ));
            for &beta in &cfg.beta {
                check_budget(budget)?;
                let r = annealed_pair_check(&[(0.5, 0.5), (2.0, 0.5)], beta)?;
                tables[0].1.push(vec![f(beta), f(r.annealed), f(r.reweighted), f(r.quenched_mean)]);
            }
        }
        "annealed-potential" => {
            tables.push((cfg.scenario.clone(), Table::new(&["potential", "x", "error"])));
            for name in ["abs", "quadratic"] {
                for &x in &cfg.x {
                    let err = mixture_identity_check(name, &[x as f64])?;
                    tables[0].1.push(vec![name.into(), x.to_string(), f(err)]);
                }
            }
        }
        "wells-suite" => {
            tables.push((cfg.scenario.clone(), Table::new(&["family", "beta", "lhs", "rhs", "margin", "error"])));
            for &beta in &cfg.beta {
                check_budget(budget)?;
                for (name, family, obs, factor, all) in wells_families(beta)? {
                    let r = wells_inequality_check(&family, &obs, factor, all)?;
                    tables[0].1.push(vec![name, f(beta), f(r.lhs), f(r.rhs), f(r.margin), f(r.error)]);
                }
            }
        }
        "duality-suite" => {
            tables.push((
                cfg.scenario.clone(),
                Table::new(&[
                    "d", "L", "n", "beta1", "beta2", "lambda", "var_height", "spin_cos2", "spin_sq", "log_z_height", "log_z_spin",
                    "z_rel_err",
                ]),
            ));
            for &l in &cfg.l {
                for &n in &cfg.n {
                    for &b1 in &cfg.beta1 {
                        for &b2 in &cfg.beta2 {
                            for &lam in &cfg.lambda {
                                check_budget(budget)?;
                                let d = if l == 0 { 2 } else { 1 };
                                let lay = ghost_layout(d, l, n, b1, b2, lam)?;
                                let space = build_div_s1(&lay.graph)?;
                                let r = duality_check(&lay.model(&space, lay.couplings(lay.all_open(), 1.0)))?;
                                tables[0].1.push(vec![
                                    d.to_string(),
                                    l.to_string(),
                                    n.to_string(),
                                    f(b1),
                                    f(b2),
                                    f(lam),
                                    f(r.var_height),
                                    f(r.spin_cos2),
                                    f(r.spin_sq),
                                    f(r.log_z_height),
                                    f(r.log_z_spin),
                                    f(r.z_rel_err),
                                ]);
                            }
                        }
                    }
                }
            }
        }
        "renorm-suite" => {
            tables.push((
                cfg.scenario.clone(),
                Table::new(&["p", "beta", "seed", "open_sites", "var_omega", "var_omega_c", "var_coarse", "var_coarse_uniform"]),
            ));
            let lay = Layout::micro_strip();
            for &p in &cfg.p {
                for &beta in &cfg.beta {
                    for s in 0..cfg.dsamples as u64 {
                        check_budget(budget)?;
                        let seed = rng::mix(cfg.seed, s);
                        let (pb, omega) = sample_instance(lay, p, seed)?;
                        let c = bound_chain(&pb, &omega, lay, beta)?;
                        let mut row = vec![
                            f(p),
                            f(beta),
                            seed.to_string(),
                            c.spec.sites.bits.iter().filter(|b| **b).count().to_string(),
                        ];
                        row.extend(c.values.iter().map(|v| f(v.1)));
                        tables[0].1.push(row);
                    }
                }
            }
        }
        other => return Err(Error::arg(format!("unknown scenario `{other}`"))),
    }
    Ok(())
}

type WellsCase = (String, DisorderFamily, WellsObservable, f64, bool);

/// XY and height Wells families at one inverse temperature.
fn wells_families(beta: f64) -> Result<Vec<WellsCase>> {
    let mut out = Vec::new();
    for (name, g) in [("xy-box", build_lattice_box(2, 1)?), ("xy-strip", build_rect(2, 3)?)] {
        let o = g.origin();
        let far = g.n_vertices() - 1;
        let spec = GibbsSpec::uniform(g, EdgePotential::Xy(beta));
        let fam = DisorderFamily::on_lattice_sites(spec, Engine::Angle)?;
        out.push((name.to_string(), fam, WellsObservable::Angle(AngleObservable::two_point(o, far)), 0.25, true));
    }
    let three = DisorderFamily::height_sites(1, 1, beta)?;
    let o = three.base.graph.origin();
    out.push(("height-3".into(), three, WellsObservable::Variance(o), 0.25, true));
    let square = GibbsSpec::uniform(dirichlet_closure(&build_rect(2, 2)?)?, EdgePotential::BesselHeight(beta));
    out.push((
        "height-2x2".into(),
        DisorderFamily::on_lattice_sites(square, Engine::Height)?,
        WellsObservable::Variance(0),
        0.25,
        true,
    ));
    Ok(out)
}

/// One line of the acceptance report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub id: String,
    pub anchor: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub tolerance: f64,
    pub verdict: bool,
    pub runtime: f64,
}

impl ReportRow {
    /// Row asserting `lhs ≥ rhs − tolerance`.
    pub fn at_least(id: impl Into<String>, anchor: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        ReportRow::with_margin(id, anchor, lhs, rhs, lhs - rhs, tolerance)
    }

    /// Row asserting `|lhs − rhs| ≤ tolerance`.
    pub fn close(id: impl Into<String>, anchor: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        ReportRow::with_margin(id, anchor, lhs, rhs, -(lhs - rhs).abs(), tolerance)
    }

    pub fn with_margin(id: impl Into<String>, anchor: &str, lhs: f64, rhs: f64, margin: f64, tolerance: f64) -> Self {
        ReportRow {
            id: id.into(),
            anchor: anchor.to_string(),
            lhs,
            rhs,
            margin,
            tolerance,
            verdict: margin >= -tolerance,
            runtime: 0.0,
        }
    }
}

/// Switches that alter the acceptance run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AcceptanceOptions {
    /// Runs the first criterion with the clean coupling left unreduced, which
    /// must make it fail.
    pub tamper: bool,
}

pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    pub anchor: &'static str,
    /// Wall-clock limit in seconds.
    pub budget: f64,
    pub run: fn(&AcceptanceOptions, &'static str) -> Result<Vec<ReportRow>>,
}

#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub id: u32,
    pub name: &'static str,
    pub rows: Vec<ReportRow>,
    pub runtime: f64,
    pub error: Option<String>,
}

impl CriterionOutcome {
    pub fn pass(&self) -> bool {
        self.error.is_none() && !self.rows.is_empty() && self.rows.iter().all(|r| r.verdict)
    }

    /// The row with the smallest `margin + tolerance`.
    pub fn worst(&self) -> Option<&ReportRow> {
        self.rows
            .iter()
            .min_by(|a, b| (a.margin + a.tolerance).total_cmp(&(b.margin + b.tolerance)))
    }

    pub fn summary(&self) -> String {
        let verdict = if self.pass() { "PASS" } else { "FAIL" };
        let failing = self.rows.iter().filter(|r| !r.verdict).count();
        let detail = match (&self.error, self.worst()) {
            (Some(e), _) => format!("error: {e}"),
            (None, Some(w)) => format!(
                "{} rows, {failing} failing; worst {} margin {:.3e} (tol {:.1e})",
                self.rows.len(),
                w.id,
                w.margin,
                w.tolerance
            ),
            (None, None) => "no rows".into(),
        };
        format!("[{verdict}] criterion {:>2} {:<28} {:>8.1}s  {detail}", self.id, self.name, self.runtime)
    }
}

/// Every registered acceptance criterion.
pub fn registry() -> Vec<Criterion> {
    vec![
        Criterion { id: 1, name: "wells-xy", anchor: "wells inequality, circle spins", budget: 120.0, run: c01_wells_xy },
        Criterion { id: 2, name: "wells-heights", anchor: "wells inequality, height functions", budget: 600.0, run: c02_wells_heights },
        Criterion { id: 3, name: "wells-domination", anchor: "disorder measure domination", budget: 120.0, run: c03_domination },
        Criterion { id: 4, name: "duality", anchor: "spin-height duality on ghost graphs", budget: 300.0, run: c04_duality },
        Criterion { id: 5, name: "ginibre-monotonicity", anchor: "monotonicity in couplings and domain", budget: 600.0, run: c05_monotonicity },
        Criterion { id: 6, name: "surgery", anchor: "graph surgery monotonicity", budget: 300.0, run: c06_surgery },
        Criterion { id: 7, name: "metric-limit", anchor: "subdivided chain limit", budget: 120.0, run: c07_metric },
        Criterion { id: 8, name: "annealed", anchor: "annealed mixtures", budget: 180.0, run: c08_annealed },
        Criterion { id: 9, name: "mcmc-validation", anchor: "chain validation against exact oracles", budget: 900.0, run: c09_mcmc },
        Criterion { id: 10, name: "trend-scans", anchor: "delocalisation and decay trends", budget: 2700.0, run: c10_trends },
        Criterion { id: 11, name: "renormalisation", anchor: "coarse-graining pipeline", budget: 600.0, run: c11_renorm },
    ]
}

/// Runs the selected criteria (all when `only` is empty), appending a runtime
/// row to each.
pub fn run_acceptance(opts: &AcceptanceOptions, only: &[u32]) -> Vec<CriterionOutcome> {
    registry()
        .into_iter()
        .filter(|c| only.is_empty() || only.contains(&c.id))
        .map(|c| {
            let start = Instant::now();
            let res = (c.run)(opts, c.anchor);
            let runtime = start.elapsed().as_secs_f64();
            let (mut rows, error) = match res {
                Ok(r) => (r, None),
                Err(e) => (Vec::new(), Some(e.to_string())),
            };
            for r in rows.iter_mut() {
                r.runtime = runtime;
            }
            let mut t = ReportRow::at_least(format!("{}.runtime", c.id), c.anchor, c.budget, runtime, 0.0);
            t.runtime = runtime;
            rows.push(t);
            CriterionOutcome {
                id: c.id,
                name: c.name,
                rows,
                runtime,
                error,
            }
        })
        .collect()
}

pub fn write_report(path: &Path, outcomes: &[CriterionOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for o in outcomes {
        for r in &o.rows {
            w.serialize(r)?;
        }
        if let Some(e) = &o.error {
            w.serialize(ReportRow {
                id: format!("{}.error", o.id),
                anchor: e.clone(),
                lhs: f64::NAN,
                rhs: f64::NAN,
                margin: f64::NEG_INFINITY,
                tolerance: 0.0,
                verdict: false,
                runtime: o.runtime,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

fn c01_wells_xy(opts: &AcceptanceOptions, anchor: &'static str) -> Result<Vec<ReportRow>> {
    let factor = if opts.tamper { 1.0 } else { 0.25 };
    let mut rows = Vec::new();
    for beta in [0.5, 1.0, 2.0] {
        for (name, g) in [("box", build_lattice_box(2, 1)?), ("strip", build_rect(2, 3)?)] {
            let o = g.origin();
            let targets: Vec<usize> = if name == "box" {
                vec![g.box_index(&[1, 0]).unwrap(), g.box_index(&[1, 1]).unwrap()]
            } else {
                vec![1, g.n_vertices() - 1]
            };
            let spec = GibbsSpec::uniform(g, EdgePotential::Xy(beta));
            let fam = DisorderFamily::on_lattice_sites(spec, Engine::Angle)?;
            for x in targets {
                let r = wells_inequality_check(&fam, &WellsObservable::Angle(AngleObservable::two_point(o, x)), factor, true)?;
                rows.push(ReportRow::at_least(format!("1.{name}.b{beta}.x{x}"), anchor, r.rhs, r.lhs, 1e-8));
            }
        }
    }
    Ok(rows)
}

fn height_cases(beta: f64) -> Result<Vec<(String, DisorderFamily, usize)>> {
    let three = DisorderFamily::height_sites(1, 1, beta)?;
    let o = three.base.graph.origin();
    let square = GibbsSpec::uniform(dirichlet_closure(&build_rect(2, 2)?)?, EdgePotential::BesselHeight(beta));
    Ok(vec![
        ("three".into(), three, o),
        ("square".into(), DisorderFamily::on_lattice_sites(square, Engine::Height)?, 0),
    ])
}

fn c02_wells_heights(_: &AcceptanceOptions, anchor: &'static str) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for beta in [1.0, 3.0] {
        for (name, fam, o) in height_cases(beta)? {
            let r = wells_inequality_check(&fam, &WellsObservable::Variance(o), 0.25, true)?;
            rows.push(ReportRow::at_least(format!("2.{name}.b{beta}"), anchor, r.rhs, r.lhs, 1e-7));
        }
    }
    for n in [2, 3] {
        for b1 in [1.0, 3.0] {
            for b2 in [0.5, 2.0] {
                let fam = DisorderFamily::height_multigraph(1, 1, n, b1, b2)?;
                let o = fam.base.graph.origin();
                let r = wells_inequality_check(&fam, &WellsObservable::Variance(o), 0.5, false)?;
                rows.push(ReportRow::at_least(format!("2.multi.n{n}.b{b1}.c{b2}"), anchor, r.rhs, r.lhs, 1e-7));
            }
        }
    }
    Ok(rows)
}

fn c03_domination(_: &AcceptanceOptions, anchor: &'static str) -> Result<Vec<ReportRow>> {
    let mut fams: Vec<(String, DisorderFamily, f64)> = Vec::new();
    for beta in [0.5, 1.0, 2.0] {
        for (name, g) in [("box", build_lattice_box(2, 1)?), ("strip", build_rect(2, 3)?)] {
            let spec = GibbsSpec::uniform(g, EdgePotential::Xy(beta));
            fams.push((format!("xy-{name}.b{beta}"), DisorderFamily::on_lattice_sites(spec, Engine::Angle)?, beta));
        }
    }
    for beta in [1.0, 3.0] {
        for (name, fam, _) in height_cases(beta)? {
            fams.push((format!("height-{name}.b{beta}"), fam, beta));
        }
    }
    for n in [2, 3] {
        for b1 in [1.0, 3.0] {
            for b2 in [0.5, 2.0] {
                fams.push((format!("multi.n{n}.b{b1}.c{b2}"), DisorderFamily::height_multigraph(1, 1, n, b1, b2)?, b1));
            }
        }
    }
    let mut rows = Vec::new();
    for (name, fam, b1) in fams {
        let nu = wells_disorder(&fam)?;
        let d = fam.base.graph.dimension;
        let p0 = domination_threshold(d, b1);
        let r = check_conditional_domination(&nu, p0)?;
        rows.push(ReportRow::at_least(format!("3.{name}"), anchor, p0, r.max, 1e-10));
    }
    Ok(rows)
}

fn c04_duality(_: &AcceptanceOptions, anchor: &'static str) -> Result<Vec<ReportRow>> {
    let (b1, b2) = (1.0, 0.7);
    let mut cases = Vec::new();
    for (d, l) in [(2, 0), (1, 1)] {
        for n in [1, 2] {
            if l == 0 && n == 2 {
                continue;
            }
            cases.push((d, l, n));
        }
    }
    cases.push((2, 1, 1));
    let mut rows = Vec::new();
    for (d, l, n) in cases {
        for lam in [2.0, 4.0] {
            let lay = ghost_layout(d, l, n, b1, b2, lam)?;
            let space = build_div_s1(&lay.graph)?;
            let closed_vertex = if l == 0 {
                lay.graph.origin()
            } else {
                lay.graph.box_index(&vec![1; d]).expect("corner site")
            };
            let bit = lay.sites.iter().position(|&s| s == closed_vertex).expect("closed site is a disorder site");
            for (tag, index) in [("open", lay.all_open()), ("closed", lay.all_open() & !(1 << bit))] {
                let r = duality_check(&lay.model(&space, lay.couplings(index, 1.0)))?;
                let id = format!("4.d{d}.L{l}.n{n}.lam{lam}.{tag}");
                rows.push(ReportRow::close(format!("{id}.var"), anchor, r.spin_cos2, r.var_height, 1e-5));
                rows.push(ReportRow::close(format!("{id}.var_sq"), anchor, r.spin_sq, r.var_height, 1e-5));
                rows.push(ReportRow::with_margin(format!("{id}.z"), anchor, r.log_z_spin, r.log_z_height, -r.z_rel_err, 1e-8));
            }
        }
    }
    Ok(rows)
}

fn c05_monotonicity(_: &AcceptanceOptions, anchor: &'static str) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    let g = ginibre_scan(4, &[0.5, 1.0, 2.0], 0.25)?;
    rows.push(ReportRow::with_margin("5.ginibre", anchor, g.min_difference, 0.0, g.min_difference, 1e-9));
    for (name, pot) in [("gff", EdgePotential::GaussianHeight(1.0)), ("zxy", EdgePotential::BesselHeight(1.0))] {
        let spec = GibbsSpec::uniform(dirichlet_closure(&build_lattice_box(2, 1)?)?, pot.clone());
        let o = spec.graph.origin();
        let mut worst = f64::INFINITY;
        for e in 0..spec.graph.n_edges() {
            let r = surgery_monotonicity_check(&spec, &Surgery::RaiseConductance { edge: e, factor: 1.5 }, Quantity::Variance(o))?;
            worst = worst.min(r.margin);
        }
        rows.push(ReportRow::with_margin(format!("5.{name}.conductance"), anchor, worst, 0.0, worst, 1e-9));
        let r = domain_growth_check(2, 1, &pot)?;
        rows.push(ReportRow::at_least(format!("5.{name}.domain"), anchor, r.after, r.before, 1e-9));
        let mut worst = f64::INFINITY;
        for v in spec.graph.vertices.iter().filter(|v| v.role == Role::Lattice) {
            let r = surgery_monotonicity_check(&spec, &Surgery::CloseSite { vertex: v.id }, Quantity::Variance(o))?;
            worst = worst.min(r.margin);
        }
        rows.push(ReportRow::with_margin(format!("5.{name}.sites"), anchor, worst, 0.0, worst, 1e-9));
    }
    Ok(rows)
}

fn c06_surgery(_: &AcceptanceOptions, anchor: &'static str) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    let g = build_lattice_box(2, 1)?;
    let (o, corner) = (g.origin(), g.box_index(&[1, 1]).unwrap());
    let villain = GibbsSpec::uniform(g, EdgePotential::Villain(1.0));
    for k in [2, 3] {
        let mut worst = f64::INFINITY;
        for e in 0..villain.graph.n_edges() {
            let r = surgery_monotonicity_check(&villain, &Surgery::SplitVillain { edge: e, k }, Quantity::TwoPoint(o, corner))?;
            worst = worst.min(r.margin);
        }
        rows.push(ReportRow::with_margin(format!("6.split.k{k}"), anchor, worst, 0.0, worst, 1e-9));
    }
    let gff = GibbsSpec::uniform(dirichlet_closure(&build_lattice_box(2, 1)?)?, EdgePotential::GaussianHeight(1.0));
    let o = gff.graph.origin();
    let lattice: Vec<usize> = gff.graph.vertices.iter().filter(|v| v.role == Role::Lattice).map(|v| v.id).collect();
    let mut worst = f64::INFINITY;
    for (i, &u) in lattice.iter().enumerate() {
        for &v in &lattice[i + 1..] {
            let r = surgery_monotonicity_check(&gff, &Surgery::Identify { u, v }, Quantity::Variance(o))?;
            worst = worst.min(r.margin);
        }
    }
    rows.push(ReportRow::with_margin("6.identify", anchor, worst, 0.0, worst, 1e-9));
    for k in [1, 2] {
        let mut worst = f64::INFINITY;
        for e in 0..gff.graph.n_edges() {
            let r = surgery_monotonicity_check(&gff, &Surgery::AddVertices { edge: e, k }, Quantity::Variance(o))?;
            worst = worst.min(r.margin);
        }
        rows.push(ReportRow::with_margin(format!("6.add.k{k}"), anchor, worst, 0.0, worst, 1e-9));
    }
    Ok(rows)
}

fn c07_metric(_: &AcceptanceOptions, anchor: &'static str) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    let ns: Vec<usize> = (1..=8).collect();
    let edge = LatticeGraph::from_edges(2, &[(0, 1)])?;
    let chain = dirichlet_closure(&build_lattice_box(1, 0)?)?;
    let (co, ce) = (chain.origin(), chain.exterior()[0]);
    for beta in [0.5, 2.0] {
        for (name, g, a, b) in [("edge", &edge, 0, 1), ("chain", &chain, co, ce)] {
            let err = metric_limit_check(g, a, b, beta, &ns)?;
            let step = err.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
            rows.push(ReportRow::with_margin(format!("7.{name}.b{beta}.decreasing"), anchor, err[0], err[7], step, 0.0));
            rows.push(ReportRow::at_least(format!("7.{name}.b{beta}.halved"), anchor, err[1] / 2.0, err[7], 0.0));
        }
        for k in [0, 1, 2] {
            let worst = ns
                .iter()
                .map(|&n| 3.0 / n as f64 - bessel_power_error(k, beta, n))
                .fold(f64::INFINITY, f64::min);
            rows.push(ReportRow::with_margin(format!("7.bessel.k{k}.b{beta}"), anchor, worst, 0.0, worst, 0.0));
        }
    }
    Ok(rows)
}

fn c08_annealed(_: &AcceptanceOptions, anchor: &'static str) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    let err = mixture_identity_check("abs", &[0.0, 0.5, 1.0, 2.0, 4.0])?;
    rows.push(ReportRow::with_margin("8.mixture", anchor, err, 0.0, -err, 1e-10));
    for beta in [0.5, 1.0, 2.0] {
        let r = annealed_pair_check(&[(0.5, 0.5), (2.0, 0.5)], beta)?;
        rows.push(ReportRow::at_least(format!("8.fkg.b{beta}"), anchor, r.annealed, r.quenched_mean, 1e-9));
    }
    for (name, g) in [("box", build_lattice_box(2, 1)?), ("strip", build_rect(2, 3)?)] {
        let inc = villain_partition_monotonicity(&g, 1.0, 0.1)?;
        rows.push(ReportRow::with_margin(format!("8.partition.{name}"), anchor, inc, 0.0, inc, 0.0));
    }
    Ok(rows)
}

fn z_row(id: &str, anchor: &str, mean: f64, stderr: f64, exact: f64) -> ReportRow {
    // Rao-Blackwell estimates can have zero variance; floor at rounding level.
    let stderr = stderr.max(1e-10 * exact.abs().max(1.0));
    let z = (mean - exact).abs() / stderr;
    ReportRow::with_margin(id, anchor, mean, exact, 3.0 - z, 0.0)
}

fn c09_mcmc(_: &AcceptanceOptions, anchor: &'static str) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    let edge = LatticeGraph::from_edges(2, &[(0, 1)])?;
    let cfg = ChainConfig::new(200_000, 2_000, 11).with_proposal(1.5);
    let xy = GibbsSpec::uniform(edge.clone(), EdgePotential::Xy(2.0));
    let e = run_angle_chain(&xy, &cfg, &[(0, 1)])?[0];
    rows.push(z_row("9.xy-edge", anchor, e.mean, e.stderr, bessel_i(1, 2.0) / bessel_i(0, 2.0)));
    let free = GibbsSpec::uniform(edge, EdgePotential::Xy(0.0));
    let e = run_angle_chain(&free, &cfg, &[(0, 1)])?[0];
    rows.push(z_row("9.xy-free", anchor, e.mean, e.stderr, 0.0));
    let sq = GibbsSpec::uniform(build_rect(2, 2)?, EdgePotential::Villain(1.0));
    let exact = exact_angle(&sq, &AngleObservable::two_point(0, 3))?.value.value;
    let e = run_angle_chain(&sq, &cfg.clone().with_proposal(2.0), &[(0, 3)])?[0];
    rows.push(z_row("9.villain-2x2", anchor, e.mean, e.stderr, exact));

    let hcfg = ChainConfig::new(200_000, 2_000, 12);
    for (name, spec) in [
        ("gff-site", height_box(HeightModel::Gff, 1.0, 0)?),
        ("zxy-3x3", height_box(HeightModel::Zxy, 2.0, 1)?),
        ("gff-3x3", height_box(HeightModel::Gff, 3.0, 1)?),
    ] {
        let o = spec.graph.origin();
        let exact = exact_height(&spec, o)?.var.value;
        let e = run_height_chain(&spec, &hcfg, o)?;
        rows.push(z_row(&format!("9.{name}"), anchor, e.mean, e.stderr, exact));
    }
    let pinned = height_box(HeightModel::Gff, 0.0, 1)?;
    let e = run_height_chain(&pinned, &ChainConfig::new(100, 10, 1), pinned.graph.origin())?;
    rows.push(ReportRow::close("9.pinned", anchor, e.mean, 0.0, 0.0));

    let samples = 1_000_000;
    let three_h = GibbsSpec::uniform(dirichlet_closure(&build_lattice_box(1, 1)?)?, EdgePotential::BesselHeight(2.0));
    let o = three_h.graph.origin();
    let thin = 4;
    let c = ChainConfig::new(samples * thin + 1_000, 1_000, 13).with_thinning(thin);
    let r = height_stationarity(&three_h, &c, o)?;
    rows.push(ReportRow::with_margin("9.chi2.zxy-3", anchor, r.p_value, 0.01, r.p_value - 0.01, 0.0));
    let three_a = GibbsSpec::uniform(LatticeGraph::from_edges(3, &[(0, 1), (1, 2)])?, EdgePotential::Xy(1.0));
    let thin = 8;
    let c = ChainConfig::new(samples * thin + 1_000, 1_000, 14).with_thinning(thin).with_proposal(2.5);
    let r = angle_stationarity(&three_a, &c, 0, 2, 24)?;
    rows.push(ReportRow::with_margin("9.chi2.xy-3", anchor, r.p_value, 0.01, r.p_value - 0.01, 0.0));
    Ok(rows)
}

fn c10_trends(_: &AcceptanceOptions, anchor: &'static str) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    let cfg = ChainConfig::new(12_000, 1_000, 21);
    let ls = [2, 4, 8, 16];
    for p in [1.0, 0.9, 0.75] {
        let dsamples = if p == 1.0 { 1 } else { 32 };
        let (_, fits) = variance_scan(HeightModel::Gff, &[10.0], &[p], &ls, &cfg, dsamples)?;
        let ft = fits[0];
        rows.push(ReportRow::with_margin(format!("10.gff.p{p}.slope"), anchor, ft.slope, 0.0, ft.slope, 0.0));
        rows.push(ReportRow::with_margin(format!("10.gff.p{p}.t"), anchor, ft.t, 3.0, ft.t - 3.0, 0.0));
    }
    let (scan, _) = variance_scan(HeightModel::Gff, &[0.1], &[1.0], &[32, 64], &ChainConfig::new(3_000, 300, 22), 1)?;
    let (a, b) = (scan[0].estimate, scan[1].estimate);
    let sigma = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    let diff = b.mean - a.mean;
    rows.push(ReportRow::with_margin("10.gff.localised", anchor, diff, 0.0, 2.0 * sigma - diff.abs(), 0.0));

    let xs = [2usize, 4, 8];
    let vcfg = ChainConfig::new(6_000, 1_000, 23).with_proposal(0.8);
    let ests = villain_two_point_scan(5.0, 0.9, 12, &xs, &vcfg, 8)?;
    let ys: Vec<f64> = ests.iter().map(|e| e.mean).collect();
    let min = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    rows.push(ReportRow::with_margin("10.villain.positive", anchor, min, 0.0, min, 0.0));
    let eta = power_law_exponent(&xs.map(|x| x as f64), &ys)?;
    rows.push(ReportRow::with_margin("10.villain.exponent", anchor, eta, 0.0, eta.min(3.0 - eta), 0.0));
    Ok(rows)
}

fn c11_renorm(_: &AcceptanceOptions, anchor: &'static str) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    let lay = Layout::micro_strip();
    let mut worst = f64::INFINITY;
    let mut open = 0;
    for seed in 0..50 {
        let (pb, omega) = sample_instance(lay, 0.85, seed)?;
        let c = bound_chain(&pb, &omega, lay, 1.0)?;
        open += c.spec.sites.bits.iter().filter(|b| **b).count();
        let slack: f64 = crate::renorm::CHAIN_SLACK + c.values.iter().map(|v| v.2).sum::<f64>();
        worst = worst.min(c.min_step() + slack);
    }
    let mut r = ReportRow::with_margin("11.chain", anchor, worst, 0.0, worst, 0.0);
    r.rhs = open as f64;
    rows.push(r);

    let trials = 400;
    let mut probs = Vec::new();
    for l in [10usize, 20, 40] {
        let pb = PlanarBox::new(renorm_window(l, 0))?;
        let mut hits = 0;
        for s in 0..trials {
            let omega = sample_bernoulli(&pb.graph, Kind::Edge, 0.6, rng::mix(31, (l as u64) << 32 | s))?;
            if good_box(&pb, &dual_config(&pb.graph, &omega)?, (0, 0), l)?.verdict {
                hits += 1;
            }
        }
        probs.push(hits as f64 / trials as f64);
    }
    for (i, w) in probs.windows(2).enumerate() {
        let resolution = 1.0 / trials as f64;
        rows.push(ReportRow::with_margin(
            format!("11.good-box.{}", i),
            anchor,
            w[1],
            w[0],
            w[1] - w[0] - resolution,
            0.0,
        ));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let cfg = ExperimentConfig::from_toml("scenario = \"deloc-gff\"\nbeta = [10.0]\np = [1.0, 0.9]\nL = [2, 4]\n").unwrap();
        assert_eq!(cfg.l, vec![2, 4]);
        assert!(ExperimentConfig::from_toml("scenario = \"deloc-gff\"\nbeta = []\np = [1.0]\nL = [2]\n").is_err());
        assert!(ExperimentConfig::from_toml("scenario = \"nope\"\n").is_err());
    }

    #[test]
    fn rows_follow_the_verdict_rule() {
        assert!(ReportRow::at_least("a", "x", 1.0, 1.0 + 1e-10, 1e-9).verdict);
        assert!(!ReportRow::at_least("a", "x", 1.0, 1.1, 1e-9).verdict);
        assert!(registry().iter().all(|c| !c.anchor.is_empty()));
    }
}
