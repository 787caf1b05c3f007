//! Markov chain Monte Carlo for angle and integer-height models.
//!
//! Angle models use single-block Metropolis with wrapped-Gaussian proposals;
//! height models use single-block heat-bath on a window around the local mean.
//! Vertices joined by rigid edges (`Frozen`, or zero inverse temperature in the
//! height view) move together as one block. Every replica and disorder sample
//! draws from its own counter-indexed stream.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::exact::{exact_height, pair_difference_law, GibbsSpec};
use crate::graph::{build_lattice_box, dirichlet_closure, UnionFind};
use crate::percolation::{sample_bernoulli, Kind};
use crate::potentials::EdgePotential;
use crate::rng;
use crate::{Error, Result};

/// Batches used for batch-means error bars.
pub const BATCHES: usize = 32;
/// Largest heat-bath half-window.
pub const MAX_HALF_WINDOW: i64 = 4096;
/// Log-weight drop required at the window edges.
const WINDOW_DROP: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub sweeps: usize,
    pub burn_in: usize,
    pub thinning: usize,
    /// Wrapped-Gaussian width for angle proposals (unused by heat-bath).
    pub proposal: f64,
    pub seed: u64,
    pub replicas: usize,
}

impl ChainConfig {
    pub fn new(sweeps: usize, burn_in: usize, seed: u64) -> Self {
        ChainConfig {
            sweeps,
            burn_in,
            thinning: 1,
            proposal: 1.0,
            seed,
            replicas: 1,
        }
    }

    pub fn with_replicas(mut self, replicas: usize) -> Self {
        self.replicas = replicas;
        self
    }

    pub fn with_thinning(mut self, thinning: usize) -> Self {
        self.thinning = thinning;
        self
    }

    pub fn with_proposal(mut self, proposal: f64) -> Self {
        self.proposal = proposal;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.sweeps {
            return Err(Error::arg("burn-in must be shorter than the run"));
        }
        if self.replicas == 0 || self.thinning == 0 {
            return Err(Error::arg("replicas and thinning must be positive"));
        }
        if !(self.proposal > 0.0 && self.proposal.is_finite()) {
            return Err(Error::arg("proposal scale must be positive"));
        }
        Ok(())
    }

    /// Measurements recorded per replica.
    pub fn samples(&self) -> usize {
        (self.sweeps - self.burn_in) / self.thinning
    }

    fn stream(&self, replica: usize) -> rng::Stream {
        rng::stream(self.seed, 0x4D43_4D43, replica as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    /// Batch-means standard error.
    pub stderr: f64,
    pub n_eff: f64,
    pub samples: usize,
    pub replicas: usize,
    pub dsamples: usize,
}

impl Estimate {
    pub fn exact(value: f64, samples: usize, replicas: usize) -> Self {
        Estimate {
            mean: value,
            stderr: 0.0,
            n_eff: samples as f64,
            samples,
            replicas,
            dsamples: 1,
        }
    }

    /// Pools per-replica series through batch means.
    pub fn from_series(series: &[Vec<f64>]) -> Result<Self> {
        let samples: usize = series.iter().map(Vec::len).sum();
        if samples == 0 {
            return Err(Error::arg("no samples recorded"));
        }
        let mut means = Vec::new();
        let (mut s1, mut s2) = (0.0, 0.0);
        for s in series {
            let b = BATCHES.min(s.len());
            let size = s.len() / b;
            for chunk in s.chunks_exact(size).take(b) {
                means.push(chunk.iter().sum::<f64>() / size as f64);
            }
            for &x in s {
                s1 += x;
                s2 += x * x;
            }
        }
        let n = samples as f64;
        let mean = s1 / n;
        let raw_var = (s2 / n - mean * mean).max(0.0);
        let bm = means.iter().sum::<f64>() / means.len() as f64;
        let stderr = if means.len() > 1 {
            let v = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
            (v / means.len() as f64).sqrt()
        } else {
            (raw_var / n).sqrt()
        };
        let n_eff = if stderr > 0.0 { (raw_var / (stderr * stderr)).min(n) } else { n };
        Ok(Estimate {
            mean,
            stderr,
            n_eff,
            samples,
            replicas: series.len(),
            dsamples: 1,
        })
    }

    /// Number of standard errors separating the estimate from `value`.
    pub fn z_score(&self, value: f64) -> f64 {
        if self.stderr == 0.0 {
            if (self.mean - value).abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - value).abs() / self.stderr
        }
    }
}

/// Rigid blocks of a spec and the couplings between them.
struct Blocks {
    of: Vec<usize>,
    n: usize,
    /// Per block: `(potential slot, neighbouring block)`.
    nbrs: Vec<Vec<(usize, usize)>>,
}

fn blocks(spec: &GibbsSpec, rigid: impl Fn(&EdgePotential) -> bool, skip: impl Fn(&EdgePotential) -> bool) -> Blocks {
    let g = &spec.graph;
    let mut uf = UnionFind::new(g.n_vertices());
    for e in &g.edges {
        if rigid(&spec.potentials[e.id]) {
            uf.union(e.u, e.v);
        }
    }
    let (of, n) = uf.labels();
    let mut nbrs = vec![Vec::new(); n];
    for e in &g.edges {
        let p = &spec.potentials[e.id];
        let (a, b) = (of[e.u], of[e.v]);
        if a == b || rigid(p) || skip(p) {
            continue;
        }
        nbrs[a].push((e.id, b));
        nbrs[b].push((e.id, a));
    }
    Blocks { of, n, nbrs }
}

/// Metropolis chain for the angle view of a spec.
pub struct AngleChain<'a> {
    spec: &'a GibbsSpec,
    blocks: Blocks,
    theta: Vec<f64>,
    proposal: Normal<f64>,
    pub accepted: u64,
    pub proposed: u64,
}

impl<'a> AngleChain<'a> {
    pub fn new(spec: &'a GibbsSpec, proposal: f64) -> Result<Self> {
        let blocks = blocks(spec, |p| matches!(p, EdgePotential::Frozen), |p| p.angle_is_free());
        for e in &spec.graph.edges {
            let p = &spec.potentials[e.id];
            if !matches!(p, EdgePotential::Frozen) && !p.ln_angle_weight_rel(0.0).is_finite() {
                return Err(Error::Init(format!("edge {} has non-finite energy at the initial state", e.id)));
            }
        }
        let n = blocks.n;
        Ok(AngleChain {
            spec,
            blocks,
            theta: vec![0.0; n],
            proposal: Normal::new(0.0, proposal).map_err(|e| Error::arg(e.to_string()))?,
            accepted: 0,
            proposed: 0,
        })
    }

    pub fn theta(&self, v: usize) -> f64 {
        self.theta[self.blocks.of[v]]
    }

    fn local(&self, b: usize, t: f64) -> f64 {
        self.blocks.nbrs[b]
            .iter()
            .map(|&(e, c)| self.spec.potentials[e].ln_angle_weight_rel(t - self.theta[c]))
            .sum()
    }

    pub fn sweep(&mut self, rng: &mut rng::Stream) {
        for b in 0..self.blocks.n {
            if self.blocks.nbrs[b].is_empty() {
                self.theta[b] = rng.random::<f64>() * TAU;
                continue;
            }
            let old = self.theta[b];
            let new = (old + self.proposal.sample(rng)).rem_euclid(TAU);
            let d = self.local(b, new) - self.local(b, old);
            self.proposed += 1;
            if d >= 0.0 || rng.random::<f64>() < d.exp() {
                self.theta[b] = new;
                self.accepted += 1;
            }
        }
    }
}

fn run_replicas<T: Send>(cfg: &ChainConfig, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    cfg.validate()?;
    (0..cfg.replicas).into_par_iter().map(f).collect()
}

/// Estimates of `⟨cos(θ_a − θ_b)⟩` for each pair.
pub fn run_angle_chain(spec: &GibbsSpec, cfg: &ChainConfig, pairs: &[(usize, usize)]) -> Result<Vec<Estimate>> {
    let series = run_replicas(cfg, |r| {
        let mut chain = AngleChain::new(spec, cfg.proposal)?;
        let mut rng = cfg.stream(r);
        let mut out = vec![Vec::with_capacity(cfg.samples()); pairs.len()];
        for s in 0..cfg.sweeps {
            chain.sweep(&mut rng);
            if s >= cfg.burn_in && (s - cfg.burn_in + 1) % cfg.thinning == 0 {
                for (k, &(a, b)) in pairs.iter().enumerate() {
                    out[k].push((chain.theta(a) - chain.theta(b)).cos());
                }
            }
        }
        Ok(out)
    })?;
    (0..pairs.len())
        .map(|k| Estimate::from_series(&series.iter().map(|s| s[k].clone()).collect::<Vec<_>>()))
        .collect()
}

/// Cached `ln(w(Δ)/w(0))` for one potential.
struct LogWeights {
    pot: EdgePotential,
    table: Vec<f64>,
}

impl LogWeights {
    const SPAN: usize = 512;

    fn new(pot: &EdgePotential) -> Self {
        LogWeights {
            pot: pot.clone(),
            table: (0..=Self::SPAN as i64).map(|d| pot.ln_height_weight_rel(d)).collect(),
        }
    }

    fn get(&self, d: i64) -> f64 {
        self.table
            .get(d.unsigned_abs() as usize)
            .copied()
            .unwrap_or_else(|| self.pot.ln_height_weight_rel(d))
    }
}

/// Heat-bath chain for the height view of a spec.
pub struct HeightChain {
    blocks: Blocks,
    pinned: Vec<bool>,
    /// Per potential slot: index into `weights`.
    slot: Vec<usize>,
    weights: Vec<LogWeights>,
    scale: Vec<f64>,
    phi: Vec<i64>,
    buf: Vec<f64>,
}

impl HeightChain {
    pub fn new(spec: &GibbsSpec) -> Result<Self> {
        let blocks = blocks(spec, |p| p.height_is_rigid(), |p| matches!(p, EdgePotential::Free));
        let mut pinned = vec![false; blocks.n];
        for &f in &spec.frozen {
            pinned[blocks.of[f]] = true;
        }
        let mut uf = UnionFind::new(blocks.n);
        for (b, nb) in blocks.nbrs.iter().enumerate() {
            for &(_, c) in nb {
                uf.union(b, c);
            }
        }
        let mut anchored = vec![false; blocks.n];
        for b in 0..blocks.n {
            if pinned[b] {
                let r = uf.find(b);
                anchored[r] = true;
            }
        }
        for b in 0..blocks.n {
            if !anchored[uf.find(b)] {
                return Err(Error::Init("a component has no pinned vertex".into()));
            }
        }
        let mut weights: Vec<LogWeights> = Vec::new();
        let mut slot = vec![usize::MAX; spec.potentials.len()];
        for (e, p) in spec.potentials.iter().enumerate() {
            if p.height_is_rigid() || matches!(p, EdgePotential::Free) {
                continue;
            }
            slot[e] = match weights.iter().position(|w| &w.pot == p) {
                Some(i) => i,
                None => {
                    weights.push(LogWeights::new(p));
                    weights.len() - 1
                }
            };
        }
        let scale = spec.potentials.iter().map(|p| p.height_scale()).collect();
        let n = blocks.n;
        Ok(HeightChain {
            blocks,
            pinned,
            slot,
            weights,
            scale,
            phi: vec![0; n],
            buf: Vec::new(),
        })
    }

    pub fn height(&self, v: usize) -> i64 {
        self.phi[self.blocks.of[v]]
    }

    pub fn is_pinned(&self, v: usize) -> bool {
        self.pinned[self.blocks.of[v]]
    }

    /// Conditional law of block `b` given the rest, as `(lowest height, weights)`.
    fn conditional(&mut self, b: usize) -> Result<(i64, f64)> {
        let nb = &self.blocks.nbrs[b];
        let (mut prec, mut acc) = (0.0, 0.0);
        for &(e, c) in nb {
            let w = 1.0 / self.scale[e].max(1e-12);
            prec += w;
            acc += w * self.phi[c] as f64;
        }
        let centre = (acc / prec).round() as i64;
        let mut half = (6.0 * (1.0 / prec.sqrt() + 1.0)).ceil() as i64;
        loop {
            self.buf.clear();
            let mut top = f64::NEG_INFINITY;
            for h in centre - half..=centre + half {
                let lw: f64 = nb
                    .iter()
                    .map(|&(e, c)| self.weights[self.slot[e]].get(h - self.phi[c]))
                    .sum();
                top = top.max(lw);
                self.buf.push(lw);
            }
            let edge = self.buf[0].max(*self.buf.last().unwrap());
            if edge < top - WINDOW_DROP {
                return Ok((centre - half, top));
            }
            if half >= MAX_HALF_WINDOW {
                return Err(Error::Resource(format!("heat-bath window {half} does not capture the conditional law")));
            }
            half *= 2;
        }
    }

    fn resample(&mut self, b: usize, rng: &mut rng::Stream) -> Result<()> {
        let (lo, top) = self.conditional(b)?;
        let mut total = 0.0;
        for w in self.buf.iter_mut() {
            *w = (*w - top).exp();
            total += *w;
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = self.buf.len() - 1;
        for (i, w) in self.buf.iter().enumerate() {
            if u < *w {
                pick = i;
                break;
            }
            u -= w;
        }
        self.phi[b] = lo + pick as i64;
        Ok(())
    }

    pub fn sweep(&mut self, rng: &mut rng::Stream) -> Result<()> {
        for b in 0..self.blocks.n {
            if !self.pinned[b] {
                self.resample(b, rng)?;
            }
        }
        Ok(())
    }

    /// `E[φ(v)² | rest]` under the current state.
    pub fn conditional_square(&mut self, v: usize) -> Result<f64> {
        let b = self.blocks.of[v];
        if self.pinned[b] {
            return Ok(0.0);
        }
        let (lo, top) = self.conditional(b)?;
        let (mut z, mut m2) = (0.0, 0.0);
        for (i, w) in self.buf.iter().enumerate() {
            let p = (w - top).exp();
            let h = (lo + i as i64) as f64;
            z += p;
            m2 += p * h * h;
        }
        Ok(m2 / z)
    }
}

/// Estimate of `Var[φ(site)]`. The boundary is pinned at zero and every
/// potential is even, so the variance is the second moment, recorded through
/// its conditional expectation at each measurement.
pub fn run_height_chain(spec: &GibbsSpec, cfg: &ChainConfig, site: usize) -> Result<Estimate> {
    if HeightChain::new(spec)?.is_pinned(site) {
        cfg.validate()?;
        return Ok(Estimate::exact(0.0, cfg.samples() * cfg.replicas, cfg.replicas));
    }
    let series = run_replicas(cfg, |r| {
        let mut chain = HeightChain::new(spec)?;
        let mut rng = cfg.stream(r);
        let mut out = Vec::with_capacity(cfg.samples());
        for s in 0..cfg.sweeps {
            chain.sweep(&mut rng)?;
            if s >= cfg.burn_in && (s - cfg.burn_in + 1) % cfg.thinning == 0 {
                out.push(chain.conditional_square(site)?);
            }
        }
        Ok(out)
    })?;
    Estimate::from_series(&series)
}

/// Raw heights at `site`, one per measurement, replicas concatenated.
pub fn height_samples(spec: &GibbsSpec, cfg: &ChainConfig, site: usize) -> Result<Vec<i64>> {
    let series = run_replicas(cfg, |r| {
        let mut chain = HeightChain::new(spec)?;
        let mut rng = cfg.stream(r);
        let mut out = Vec::with_capacity(cfg.samples());
        for s in 0..cfg.sweeps {
            chain.sweep(&mut rng)?;
            if s >= cfg.burn_in && (s - cfg.burn_in + 1) % cfg.thinning == 0 {
                out.push(chain.height(site));
            }
        }
        Ok(out)
    })?;
    Ok(series.concat())
}

/// Raw differences `θ_a − θ_b mod 2π`, one per measurement.
pub fn angle_samples(spec: &GibbsSpec, cfg: &ChainConfig, a: usize, b: usize) -> Result<Vec<f64>> {
    let series = run_replicas(cfg, |r| {
        let mut chain = AngleChain::new(spec, cfg.proposal)?;
        let mut rng = cfg.stream(r);
        let mut out = Vec::with_capacity(cfg.samples());
        for s in 0..cfg.sweeps {
            chain.sweep(&mut rng);
            if s >= cfg.burn_in && (s - cfg.burn_in + 1) % cfg.thinning == 0 {
                out.push((chain.theta(a) - chain.theta(b)).rem_euclid(TAU));
            }
        }
        Ok(out)
    })?;
    Ok(series.concat())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson test of counts against probabilities, pooling cells whose expected
/// count falls below five into their neighbours.
pub fn chi_square(counts: &[u64], probs: &[f64]) -> Result<ChiSquare> {
    if counts.len() != probs.len() {
        return Err(Error::arg("counts and probabilities differ in length"));
    }
    let n: u64 = counts.iter().sum();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        o += c as f64;
        e += p * n as f64;
        if e >= 5.0 {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if let Some(last) = cells.last_mut() {
        last.0 += o;
        last.1 += e;
    }
    if cells.len() < 2 {
        return Err(Error::arg("too few cells for a chi-square test"));
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = cells.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::arg(e.to_string()))?;
    Ok(ChiSquare {
        statistic,
        dof,
        p_value: 1.0 - dist.cdf(statistic),
    })
}

/// Chain histogram of `φ(site)` against the exact marginal.
pub fn height_stationarity(spec: &GibbsSpec, cfg: &ChainConfig, site: usize) -> Result<ChiSquare> {
    let exact = exact_height(spec, site)?;
    let m = exact.window() as i64;
    let mut counts = vec![0u64; exact.marginal.len()];
    let mut outside = 0u64;
    for h in height_samples(spec, cfg, site)? {
        if h.abs() <= m {
            counts[(h + m) as usize] += 1;
        } else {
            outside += 1;
        }
    }
    let mut probs = exact.marginal.clone();
    let mass: f64 = probs.iter().sum();
    counts.push(outside);
    probs.push((1.0 - mass).max(0.0));
    chi_square(&counts, &probs)
}

/// Chain histogram of `θ_a − θ_b` on `bins` cells against the exact law.
pub fn angle_stationarity(spec: &GibbsSpec, cfg: &ChainConfig, a: usize, b: usize, bins: usize) -> Result<ChiSquare> {
    let fine = 64 * bins;
    let law = pair_difference_law(spec, a, b, fine)?;
    // Fine cell j is centred at 2πj/fine; coarse cell i spans [2πi/bins, 2π(i+1)/bins).
    let mut probs = vec![0.0; bins];
    for (j, p) in law.iter().enumerate() {
        let lo = (j as f64 - 0.5) / fine as f64;
        for (k, part) in [(lo, 0.5), (lo + 0.5 / fine as f64, 0.5)] {
            let i = (k.rem_euclid(1.0) * bins as f64) as usize % bins;
            probs[i] += p * part;
        }
    }
    let mut counts = vec![0u64; bins];
    for t in angle_samples(spec, cfg, a, b)? {
        counts[((t / TAU) * bins as f64) as usize % bins] += 1;
    }
    chi_square(&counts, &probs)
}

/// Bernoulli disorder law applied to a clean spec.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisorderLaw {
    pub kind: Kind,
    pub p: f64,
}

/// Clean spec with closed edges (or every edge at a closed site) set to zero
/// inverse temperature.
pub fn disordered_spec(spec: &GibbsSpec, law: DisorderLaw, seed: u64) -> Result<GibbsSpec> {
    let g = &spec.graph;
    let cfg = sample_bernoulli(g, law.kind, law.p, seed)?;
    let mut out = spec.clone();
    for e in &g.edges {
        let open = match law.kind {
            Kind::Edge => cfg.bits[e.id],
            Kind::Site => cfg.bits[e.u] && cfg.bits[e.v],
        };
        if !open {
            out.potentials[e.id] = spec.potentials[e.id].with_beta(0.0);
        }
    }
    Ok(out)
}

/// Outer average over disorder samples of inner chain estimates.
pub fn disorder_average(samples: usize, inner: impl Fn(usize) -> Result<Estimate> + Sync + Send) -> Result<Estimate> {
    if samples == 0 {
        return Err(Error::arg("at least one disorder sample is required"));
    }
    let ests: Vec<Estimate> = (0..samples).into_par_iter().map(inner).collect::<Result<_>>()?;
    let s = samples as f64;
    let mean = ests.iter().map(|e| e.mean).sum::<f64>() / s;
    let within = ests.iter().map(|e| e.stderr * e.stderr).sum::<f64>() / (s * s);
    let between = if samples > 1 {
        ests.iter().map(|e| (e.mean - mean).powi(2)).sum::<f64>() / ((s - 1.0) * s)
    } else {
        0.0
    };
    Ok(Estimate {
        mean,
        stderr: within.max(between).sqrt(),
        n_eff: ests.iter().map(|e| e.n_eff).sum(),
        samples: ests.iter().map(|e| e.samples).sum(),
        replicas: ests[0].replicas,
        dsamples: samples,
    })
}

/// Height models available to scans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeightModel {
    /// Weight `e^{−Δ²/(2β)}`.
    Gff,
    /// Weight `I_Δ(β)`.
    Zxy,
}

impl HeightModel {
    pub fn potential(self, beta: f64) -> EdgePotential {
        match self {
            HeightModel::Gff => EdgePotential::GaussianHeight(beta),
            HeightModel::Zxy => EdgePotential::BesselHeight(beta),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HeightModel::Gff => "gff",
            HeightModel::Zxy => "zxy",
        }
    }
}

/// `Λ_L` in `d = 2` with zero boundary outside, for a height model.
pub fn height_box(model: HeightModel, beta: f64, l: usize) -> Result<GibbsSpec> {
    let g = dirichlet_closure(&build_lattice_box(2, l)?)?;
    Ok(GibbsSpec::uniform(g, model.potential(beta)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub model: HeightModel,
    pub beta: f64,
    pub p: f64,
    pub l: usize,
    pub estimate: Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanFit {
    pub beta: f64,
    pub p: f64,
    /// Slope of `E_p[Var φ(0)]` against `ln L`.
    pub slope: f64,
    pub slope_se: f64,
    pub t: f64,
}

/// Weighted least squares `y = a + b x`; returns `(a, b, se(b))`.
pub fn weighted_fit(xs: &[f64], ys: &[f64], ses: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() < 2 || xs.len() != ys.len() || ys.len() != ses.len() {
        return Err(Error::arg("fit needs at least two matching points"));
    }
    let floor = ses.iter().cloned().filter(|s| *s > 0.0).fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 1.0 };
    let w: Vec<f64> = ses.iter().map(|s| 1.0 / s.max(floor).powi(2)).collect();
    let sw: f64 = w.iter().sum();
    let mx = xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ys.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(&w).map(|(x, w)| w * (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::arg("fit abscissae are all equal"));
    }
    let sxy: f64 = xs.iter().zip(ys).zip(&w).map(|((x, y), w)| w * (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    Ok((my - b * mx, b, (1.0 / sxx).sqrt()))
}

/// `E_p[Var φ(0)]` over a grid, with the ln-L slope for each `(β, p)`.
pub fn variance_scan(
    model: HeightModel,
    betas: &[f64],
    ps: &[f64],
    ls: &[usize],
    cfg: &ChainConfig,
    dsamples: usize,
) -> Result<(Vec<ScanRow>, Vec<ScanFit>)> {
    if betas.is_empty() || ps.is_empty() || ls.is_empty() {
        return Err(Error::arg("scan lists must be nonempty"));
    }
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for (bi, &beta) in betas.iter().enumerate() {
        for (pi, &p) in ps.iter().enumerate() {
            let mut ests = Vec::new();
            for (li, &l) in ls.iter().enumerate() {
                let clean = height_box(model, beta, l)?;
                let origin = clean.graph.origin();
                let tag = ((bi * 64 + pi) * 64 + li) as u64;
                let n_dis = if p < 1.0 { dsamples } else { 1 };
                let est = disorder_average(n_dis, |s| {
                    let seed = rng::mix(cfg.seed, tag << 20 | s as u64);
                    let spec = if p < 1.0 {
                        disordered_spec(&clean, DisorderLaw { kind: Kind::Edge, p }, seed)?
                    } else {
                        clean.clone()
                    };
                    run_height_chain(&spec, &cfg.clone().with_seed(seed), origin)
                })?;
                ests.push(est);
                rows.push(ScanRow {
                    model,
                    beta,
                    p,
                    l,
                    estimate: est,
                });
            }
            if ls.len() >= 2 {
                let xs: Vec<f64> = ls.iter().map(|&l| (l as f64).ln()).collect();
                let ys: Vec<f64> = ests.iter().map(|e| e.mean).collect();
                let ses: Vec<f64> = ests.iter().map(|e| e.stderr).collect();
                let (_, slope, slope_se) = weighted_fit(&xs, &ys, &ses)?;
                fits.push(ScanFit {
                    beta,
                    p,
                    slope,
                    slope_se,
                    t: slope / slope_se,
                });
            }
        }
    }
    Ok((rows, fits))
}

/// `E_p[⟨cos(θ_0 − θ_x)⟩]` for `x = (k, 0)`, `k` in `distances`, on a free
/// Villain box `Λ_L` with Bernoulli edge disorder.
pub fn villain_two_point_scan(
    beta: f64,
    p: f64,
    l: usize,
    distances: &[usize],
    cfg: &ChainConfig,
    dsamples: usize,
) -> Result<Vec<Estimate>> {
    let g = build_lattice_box(2, l)?;
    let clean = GibbsSpec::uniform(g, EdgePotential::Villain(beta));
    let o = clean.graph.origin();
    let mut pairs = Vec::new();
    for &k in distances {
        let x = clean
            .graph
            .box_index(&[k as i64, 0])
            .ok_or_else(|| Error::arg(format!("distance {k} leaves the box")))?;
        pairs.push((o, x));
    }
    let n_dis = if p < 1.0 { dsamples } else { 1 };
    let per: Vec<Vec<Estimate>> = (0..n_dis)
        .into_par_iter()
        .map(|s| {
            let seed = rng::mix(cfg.seed, 0x5649_4C00 | s as u64);
            let spec = if p < 1.0 {
                disordered_spec(&clean, DisorderLaw { kind: Kind::Edge, p }, seed)?
            } else {
                clean.clone()
            };
            run_angle_chain(&spec, &cfg.clone().with_seed(seed), &pairs)
        })
        .collect::<Result<_>>()?;
    (0..pairs.len())
        .map(|k| disorder_average(n_dis, |s| Ok(per[s][k])))
        .collect()
}

/// Exponent `η` of the least-squares fit `y ≈ C |x|^{−η}`.
pub fn power_law_exponent(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if ys.iter().any(|y| *y <= 0.0) {
        return Err(Error::arg("power-law fit needs positive values"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (_, b, _) = weighted_fit(&lx, &ly, &vec![1.0; xs.len()])?;
    Ok(-b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{exact_angle, AngleObservable};
    use crate::graph::LatticeGraph;
    use crate::potentials::bessel_i;

    #[test]
    fn single_xy_edge() {
        let spec = GibbsSpec::uniform(LatticeGraph::from_edges(2, &[(0, 1)]).unwrap(), EdgePotential::Xy(2.0));
        let cfg = ChainConfig::new(40_000, 1_000, 3).with_proposal(1.5);
        let e = run_angle_chain(&spec, &cfg, &[(0, 1)]).unwrap()[0];
        assert!(e.z_score(bessel_i(1, 2.0) / bessel_i(0, 2.0)) < 3.0, "{e:?}");
    }

    #[test]
    fn zero_beta_decorrelates() {
        let spec = GibbsSpec::uniform(LatticeGraph::from_edges(2, &[(0, 1)]).unwrap(), EdgePotential::Xy(0.0));
        let e = run_angle_chain(&spec, &ChainConfig::new(20_000, 100, 4), &[(0, 1)]).unwrap()[0];
        assert!(e.z_score(0.0) < 3.0, "{e:?}");
    }

    #[test]
    fn villain_square() {
        let g = LatticeGraph::from_edges(4, &[(0, 1), (1, 3), (3, 2), (2, 0)]).unwrap();
        let spec = GibbsSpec::uniform(g, EdgePotential::Villain(1.0));
        let exact = exact_angle(&spec, &AngleObservable::two_point(0, 3)).unwrap().value.value;
        let cfg = ChainConfig::new(60_000, 1_000, 5).with_proposal(2.0).with_replicas(2);
        let e = run_angle_chain(&spec, &cfg, &[(0, 3)]).unwrap()[0];
        assert!(e.z_score(exact) < 3.0, "{e:?} vs {exact}");
    }

    #[test]
    fn height_chain_matches_exact() {
        let spec = height_box(HeightModel::Zxy, 2.0, 1).unwrap();
        let o = spec.graph.origin();
        let exact = exact_height(&spec, o).unwrap().var.value;
        let e = run_height_chain(&spec, &ChainConfig::new(40_000, 500, 6), o).unwrap();
        assert!(e.z_score(exact) < 3.0, "{e:?} vs {exact}");
    }

    #[test]
    fn closed_sites_have_zero_variance() {
        let spec = height_box(HeightModel::Gff, 0.0, 1).unwrap();
        let e = run_height_chain(&spec, &ChainConfig::new(10, 1, 1), spec.graph.origin()).unwrap();
        assert_eq!((e.mean, e.stderr), (0.0, 0.0));
    }

    #[test]
    fn seeds_are_reproducible() {
        let spec = height_box(HeightModel::Gff, 3.0, 1).unwrap();
        let o = spec.graph.origin();
        let cfg = ChainConfig::new(2_000, 100, 9);
        assert_eq!(run_height_chain(&spec, &cfg, o).unwrap(), run_height_chain(&spec, &cfg, o).unwrap());
    }

    #[test]
    fn unpinned_heights_are_rejected() {
        let spec = GibbsSpec::uniform(LatticeGraph::from_edges(2, &[(0, 1)]).unwrap(), EdgePotential::GaussianHeight(1.0));
        assert!(matches!(HeightChain::new(&spec), Err(Error::Init(_))));
    }

    #[test]
    fn chi_square_accepts_exact_counts() {
        let r = chi_square(&[250, 500, 250], &[0.25, 0.5, 0.25]).unwrap();
        assert!(r.statistic < 1e-12 && (r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_line() {
        let (a, b, _) = weighted_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0], &[0.1, 0.1, 0.1]).unwrap();
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
        assert!((power_law_exponent(&[1.0, 2.0, 4.0], &[1.0, 0.5, 0.25]).unwrap() - 1.0).abs() < 1e-12);
    }
}
