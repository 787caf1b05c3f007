//! Sum-product variable elimination over finite domains.
//!
//! Factors are dense row-major tables (last variable fastest). Intermediate
//! tables are rescaled by their largest magnitude and the scale is carried in
//! log space, so products of thousands of small weights neither underflow nor
//! overflow. Entries may be negative, which lets observables enter as factors.

use crate::{Error, Result};

/// Largest intermediate table the engine will allocate.
pub const MAX_TABLE: usize = 60_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    /// Strictly increasing variable ids.
    pub vars: Vec<usize>,
    pub values: Vec<f64>,
}

impl Factor {
    pub fn scalar(v: f64) -> Self {
        Factor {
            vars: Vec::new(),
            values: vec![v],
        }
    }

    /// Tabulates `f` over the listed variables (any order; stored sorted).
    pub fn from_fn(vars: &[usize], domains: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut order: Vec<usize> = (0..vars.len()).collect();
        order.sort_by_key(|&i| vars[i]);
        let sorted: Vec<usize> = order.iter().map(|&i| vars[i]).collect();
        let dims: Vec<usize> = sorted.iter().map(|&v| domains[v]).collect();
        let size: usize = dims.iter().product();
        let mut values = Vec::with_capacity(size);
        let mut idx = vec![0usize; dims.len()];
        let mut args = vec![0usize; vars.len()];
        for _ in 0..size {
            for (pos, &orig) in order.iter().enumerate() {
                args[orig] = idx[pos];
            }
            values.push(f(&args));
            for p in (0..dims.len()).rev() {
                idx[p] += 1;
                if idx[p] < dims[p] {
                    break;
                }
                idx[p] = 0;
            }
        }
        Factor { vars: sorted, values }
    }
}

/// Result of a contraction: `exp(log_scale) * table`.
#[derive(Debug, Clone)]
pub struct Contraction {
    pub table: Factor,
    pub log_scale: f64,
    /// Number of multiply-add operations performed.
    pub work: u64,
}

impl Contraction {
    /// Natural log of the total sum of the contracted table.
    pub fn ln_total(&self) -> f64 {
        let s: f64 = self.table.values.iter().sum();
        s.ln() + self.log_scale
    }

    /// The table normalised to sum to one.
    pub fn normalized(&self) -> Vec<f64> {
        let s: f64 = self.table.values.iter().sum();
        self.table.values.iter().map(|v| v / s).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub domains: Vec<usize>,
    pub factors: Vec<Factor>,
}

impl Model {
    pub fn new(domains: Vec<usize>) -> Self {
        Model {
            domains,
            factors: Vec::new(),
        }
    }

    pub fn add_var(&mut self, domain: usize) -> usize {
        self.domains.push(domain);
        self.domains.len() - 1
    }

    pub fn push(&mut self, f: Factor) {
        self.factors.push(f);
    }

    /// Sums the product of all factors over every variable not in `keep`.
    pub fn contract(&self, keep: &[usize]) -> Result<Contraction> {
        let nv = self.domains.len();
        let mut keep_mask = vec![false; nv];
        for &k in keep {
            if k >= nv {
                return Err(Error::arg(format!("unknown variable {k}")));
            }
            keep_mask[k] = true;
        }
        let mut factors: Vec<Factor> = self.factors.clone();
        let mut log_scale = 0.0;
        let mut work = 0u64;
        for f in factors.iter_mut() {
            log_scale += rescale(f);
        }
        let mut alive: Vec<bool> = (0..nv).map(|v| !keep_mask[v]).collect();
        loop {
            let mut best: Option<(usize, f64)> = None;
            for v in 0..nv {
                if !alive[v] {
                    continue;
                }
                let mut scope: Vec<usize> = Vec::new();
                for f in factors.iter().filter(|f| f.vars.binary_search(&v).is_ok()) {
                    scope.extend(&f.vars);
                }
                scope.sort_unstable();
                scope.dedup();
                let size: f64 = scope.iter().map(|&u| self.domains[u] as f64).product();
                if best.map_or(true, |(_, s)| size < s) {
                    best = Some((v, size));
                }
            }
            let Some((v, size)) = best else { break };
            if size > MAX_TABLE as f64 {
                return Err(Error::Resource(format!(
                    "elimination needs a table of {size:.3e} entries (limit {MAX_TABLE})"
                )));
            }
            alive[v] = false;
            let (touch, rest): (Vec<Factor>, Vec<Factor>) =
                factors.into_iter().partition(|f| f.vars.binary_search(&v).is_ok());
            factors = rest;
            if touch.is_empty() {
                log_scale += (self.domains[v] as f64).ln();
                continue;
            }
            let (mut out, w) = product_sum(&touch, &self.domains, Some(v));
            work += w;
            log_scale += rescale(&mut out);
            factors.push(out);
        }
        let (mut table, w) = product_sum(&factors, &self.domains, None);
        work += w;
        log_scale += rescale(&mut table);
        // Kept variables that no factor mentions are uniform.
        let missing: Vec<usize> = keep
            .iter()
            .copied()
            .filter(|k| table.vars.binary_search(k).is_err())
            .collect();
        if !missing.is_empty() {
            let ones = Factor::from_fn(&missing, &self.domains, |_| 1.0);
            let (t, w) = product_sum(&[table, ones], &self.domains, None);
            table = t;
            work += w;
        }
        let mut kept_sorted: Vec<usize> = keep.to_vec();
        kept_sorted.sort_unstable();
        kept_sorted.dedup();
        debug_assert_eq!(table.vars, kept_sorted);
        Ok(Contraction {
            table,
            log_scale,
            work,
        })
    }

    /// Natural log of the full sum of the product of factors.
    pub fn ln_partition(&self) -> Result<(f64, u64)> {
        let c = self.contract(&[])?;
        Ok((c.ln_total(), c.work))
    }
}

fn rescale(f: &mut Factor) -> f64 {
    let m = f.values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if m == 0.0 || !m.is_finite() {
        return 0.0;
    }
    for v in f.values.iter_mut() {
        *v /= m;
    }
    m.ln()
}

/// Multiplies `factors` and optionally sums out `elim`.
fn product_sum(factors: &[Factor], domains: &[usize], elim: Option<usize>) -> (Factor, u64) {
    let mut scope: Vec<usize> = factors.iter().flat_map(|f| f.vars.iter().copied()).collect();
    scope.sort_unstable();
    scope.dedup();
    let dims: Vec<usize> = scope.iter().map(|&v| domains[v]).collect();
    let out_vars: Vec<usize> = scope.iter().copied().filter(|&v| Some(v) != elim).collect();
    let out_size: usize = out_vars.iter().map(|&v| domains[v]).product();
    let strides_for = |vars: &[usize]| -> Vec<usize> {
        let mut s = vec![0usize; scope.len()];
        let mut acc = 1;
        for &v in vars.iter().rev() {
            let p = scope.binary_search(&v).unwrap();
            s[p] = acc;
            acc *= domains[v];
        }
        s
    };
    let fstrides: Vec<Vec<usize>> = factors.iter().map(|f| strides_for(&f.vars)).collect();
    let ostrides = strides_for(&out_vars);
    let mut out = vec![0.0; out_size];
    let total: usize = dims.iter().product();
    let nf = factors.len();
    let mut fidx = vec![0usize; nf];
    let mut oidx = 0usize;
    let mut counter = vec![0usize; scope.len()];
    for _ in 0..total {
        let mut prod = 1.0;
        for (f, &i) in factors.iter().zip(&fidx) {
            prod *= f.values[i];
        }
        out[oidx] += prod;
        for p in (0..scope.len()).rev() {
            counter[p] += 1;
            if counter[p] < dims[p] {
                for (i, s) in fidx.iter_mut().zip(&fstrides) {
                    *i += s[p];
                }
                oidx += ostrides[p];
                break;
            }
            counter[p] = 0;
            let back = dims[p] - 1;
            for (i, s) in fidx.iter_mut().zip(&fstrides) {
                *i -= s[p] * back;
            }
            oidx -= ostrides[p] * back;
        }
    }
    (
        Factor {
            vars: out_vars,
            values: out,
        },
        (total * nf.max(1)) as u64,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(model: &Model) -> f64 {
        let n = model.domains.len();
        let total: usize = model.domains.iter().product();
        let mut s = 0.0;
        for idx in 0..total {
            let mut rem = idx;
            let mut a = vec![0; n];
            for v in (0..n).rev() {
                a[v] = rem % model.domains[v];
                rem /= model.domains[v];
            }
            let mut p = 1.0;
            for f in &model.factors {
                let mut i = 0;
                for &v in &f.vars {
                    i = i * model.domains[v] + a[v];
                }
                p *= f.values[i];
            }
            s += p;
        }
        s
    }

    fn toy() -> Model {
        let mut m = Model::new(vec![2, 3, 2, 4]);
        m.push(Factor::from_fn(&[1, 0], &m.domains, |a| 1.0 + a[0] as f64 + 0.5 * a[1] as f64));
        m.push(Factor::from_fn(&[1, 2], &m.domains, |a| (a[0] * a[1]) as f64 + 0.25));
        m.push(Factor::from_fn(&[2, 3, 0], &m.domains, |a| 0.1 + (a[0] + 2 * a[1] + a[2]) as f64));
        m
    }

    #[test]
    fn partition_matches_brute_force() {
        let m = toy();
        let (lz, _) = m.ln_partition().unwrap();
        assert!((lz - brute(&m).ln()).abs() < 1e-12);
    }

    #[test]
    fn marginal_matches_brute_force() {
        let m = toy();
        let c = m.contract(&[2]).unwrap();
        let mut clamp = m.clone();
        clamp.push(Factor::from_fn(&[2], &m.domains, |a| (a[0] == 1) as u8 as f64));
        let want = brute(&clamp) / brute(&m);
        assert!((c.normalized()[1] - want).abs() < 1e-12);
    }

    #[test]
    fn unmentioned_variables_count() {
        let mut m = Model::new(vec![3, 5]);
        m.push(Factor::from_fn(&[0], &m.domains, |a| a[0] as f64 + 1.0));
        let (lz, _) = m.ln_partition().unwrap();
        assert!((lz - (6.0f64 * 5.0).ln()).abs() < 1e-12);
        let c = m.contract(&[1]).unwrap();
        assert_eq!(c.table.values.len(), 5);
    }

    #[test]
    fn signed_entries() {
        let mut m = Model::new(vec![2]);
        m.push(Factor::from_fn(&[0], &m.domains, |a| if a[0] == 0 { -3.0 } else { 1.0 }));
        let c = m.contract(&[]).unwrap();
        assert!((c.table.values[0] * c.log_scale.exp() + 2.0).abs() < 1e-12);
    }
}
