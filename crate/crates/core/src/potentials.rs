//! Special functions and the edge-potential algebra.
//!
//! Angle-side weights are functions of an edge angle θ; height-side weights
//! are functions of an integer gradient Δ. The two are linked by the Fourier
//! series `w(θ) = Σ_k ĉ(k) e^{ikθ}`: an XY angle weight corresponds to a
//! Bessel height weight, a Villain weight to a Gaussian height weight.

use std::f64::consts::{PI, TAU};
use std::fmt;

use statrs::function::gamma::ln_gamma;

use crate::{Error, Result};

/// Crossover between the power series and the large-argument expansion.
pub const BESSEL_CROSSOVER: f64 = 15.0;

/// `e^{-x} I_k(x)` for `x ≥ 0`.
pub fn bessel_i_scaled(k: i64, x: f64) -> f64 {
    let k = k.unsigned_abs();
    if x < 0.0 || x.is_nan() {
        return f64::NAN;
    }
    if x == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if x > BESSEL_CROSSOVER {
        if let Some(v) = bessel_asymptotic_scaled(k, x) {
            return v;
        }
    }
    bessel_series_scaled(k, x)
}

/// `I_k(x)`; overflows to infinity past `x ≈ 709`.
pub fn bessel_i(k: i64, x: f64) -> f64 {
    bessel_i_scaled(k, x) * x.exp()
}

/// `ln I_k(x)`, finite for all `x > 0` (and `x = 0, k = 0`).
pub fn ln_bessel_i(k: i64, x: f64) -> f64 {
    bessel_i_scaled(k, x).ln() + x
}

/// `I_k(x) / I_0(x)`.
pub fn bessel_ratio(k: i64, x: f64) -> f64 {
    if x == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    bessel_i_scaled(k, x) / bessel_i_scaled(0, x)
}

fn bessel_series_scaled(k: u64, x: f64) -> f64 {
    let kf = k as f64;
    let lh = (0.5 * x).ln();
    let mut lt = kf * lh - ln_gamma(kf + 1.0) - x;
    let peak = 0.5 * x;
    let mut sum = 0.0;
    let mut j = 0.0f64;
    loop {
        let t = lt.exp();
        sum += t;
        if j > peak && t <= 1e-17 * sum {
            break;
        }
        if j > 4.0 * x + 200.0 {
            break;
        }
        lt += 2.0 * lh - (j + 1.0).ln() - (j + kf + 1.0).ln();
        j += 1.0;
    }
    sum
}

fn bessel_asymptotic_scaled(k: u64, x: f64) -> Option<f64> {
    let mu = 4.0 * (k as f64).powi(2);
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for m in 1..200u32 {
        let odd = (2 * m - 1) as f64;
        let next = -term * (mu - odd * odd) / (m as f64 * 8.0 * x);
        if next.abs() > term.abs() {
            return None;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            return Some(sum / (TAU * x).sqrt());
        }
    }
    None
}

fn wrap(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t > PI {
        t - TAU
    } else {
        t
    }
}

/// Heat kernel `v_β(θ) = √(2πβ) Σ_k e^{-β(θ-2πk)²/2} = Σ_k e^{-k²/(2β)} e^{ikθ}`,
/// with `v_0 ≡ 1`.
pub fn heat_kernel(beta: f64, theta: f64) -> f64 {
    if beta == 0.0 {
        return 1.0;
    }
    if beta >= 1.0 / TAU {
        heat_kernel_gaussian(beta, theta)
    } else {
        heat_kernel_fourier(beta, theta)
    }
}

/// `ln v_β(θ)`, stable when `v_β` underflows.
pub fn ln_heat_kernel(beta: f64, theta: f64) -> f64 {
    if beta == 0.0 {
        return 0.0;
    }
    if beta < 1.0 / TAU {
        return heat_kernel_fourier(beta, theta).ln();
    }
    let t = wrap(theta);
    let lead = -0.5 * beta * t * t;
    let mut acc = 1.0;
    for k in 1..64 {
        let shift = TAU * k as f64;
        let a = (-0.5 * beta * ((t - shift).powi(2) - t * t)).exp();
        let b = (-0.5 * beta * ((t + shift).powi(2) - t * t)).exp();
        acc += a + b;
        if a + b < 1e-18 * acc {
            break;
        }
    }
    0.5 * (TAU * beta).ln() + lead + acc.ln()
}

/// Gaussian-sum representation of the heat kernel.
pub fn heat_kernel_gaussian(beta: f64, theta: f64) -> f64 {
    if beta == 0.0 {
        return 1.0;
    }
    let t = wrap(theta);
    let mut sum = (-0.5 * beta * t * t).exp();
    for k in 1..64 {
        let shift = TAU * k as f64;
        let a = (-0.5 * beta * (t - shift).powi(2)).exp();
        let b = (-0.5 * beta * (t + shift).powi(2)).exp();
        sum += a + b;
        if a + b < 1e-18 * sum {
            break;
        }
    }
    (TAU * beta).sqrt() * sum
}

/// Fourier-sum representation of the heat kernel.
pub fn heat_kernel_fourier(beta: f64, theta: f64) -> f64 {
    if beta == 0.0 {
        return 1.0;
    }
    let mut sum = 1.0;
    for k in 1..100_000 {
        let c = (-((k * k) as f64) / (2.0 * beta)).exp();
        sum += 2.0 * c * (k as f64 * theta).cos();
        if c < 1e-18 {
            break;
        }
    }
    sum
}

/// Probability measure on `(0, ∞)` mixing Gaussian (or heat-kernel) widths.
#[derive(Debug, Clone, PartialEq)]
pub enum MixingMeasure {
    /// Atoms `(J_i, w_i)`.
    PointMasses(Vec<(f64, f64)>),
    /// The measure with `e^{-|x|} = ∫ e^{-x²/(2J)} μ(dJ)`.
    ExponentialSubordinator,
}

impl MixingMeasure {
    pub fn point_masses(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let m = MixingMeasure::PointMasses(atoms);
        m.validate()?;
        Ok(m)
    }

    /// Registered named measures: `abs` (V(x) = |x|) and `quadratic` (V(x) = x²/2).
    pub fn named(name: &str) -> Result<Self> {
        match name {
            "abs" => Ok(MixingMeasure::ExponentialSubordinator),
            "quadratic" => Ok(MixingMeasure::PointMasses(vec![(1.0, 1.0)])),
            other => Err(Error::arg(format!("unknown mixing measure `{other}`"))),
        }
    }

    /// Parses a table with one `J w` pair per line; `#` starts a comment.
    pub fn from_table(text: &str) -> Result<Self> {
        let mut atoms = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |s: Option<&str>| -> Result<f64> {
                s.ok_or_else(|| Error::Parse(format!("line {}: expected `J w`", lineno + 1)))?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            let j = parse(it.next())?;
            let w = parse(it.next())?;
            atoms.push((j, w));
        }
        Self::point_masses(atoms)
    }

    pub fn validate(&self) -> Result<()> {
        if let MixingMeasure::PointMasses(atoms) = self {
            if atoms.is_empty() {
                return Err(Error::arg("mixing measure has no atoms"));
            }
            let mut total = 0.0;
            for &(j, w) in atoms {
                if !(j > 0.0 && j.is_finite()) {
                    return Err(Error::arg(format!("atom location {j} outside (0, ∞)")));
                }
                if !(w >= 0.0) {
                    return Err(Error::arg(format!("negative atom weight {w}")));
                }
                total += w;
            }
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::arg(format!("atom weights sum to {total}, not 1")));
            }
        }
        Ok(())
    }

    /// `∫ e^{-k²/(2βJ)} μ(dJ)`.
    pub fn gaussian_transform(&self, beta: f64, k: f64) -> f64 {
        if k == 0.0 {
            return 1.0;
        }
        if beta == 0.0 {
            return 0.0;
        }
        match self {
            MixingMeasure::PointMasses(atoms) => atoms
                .iter()
                .map(|&(j, w)| w * (-k * k / (2.0 * beta * j)).exp())
                .sum(),
            MixingMeasure::ExponentialSubordinator => (-k.abs() / beta.sqrt()).exp(),
        }
    }
}

/// Edge potential shared by the angle and height views.
#[derive(Debug, Clone, PartialEq)]
pub enum EdgePotential {
    Xy(f64),
    Villain(f64),
    GaussianHeight(f64),
    BesselHeight(f64),
    Frozen,
    Free,
    AnnealedMixture { mixing: MixingMeasure, beta: f64 },
}

impl fmt::Display for EdgePotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgePotential::Xy(b) => write!(f, "xy({b})"),
            EdgePotential::Villain(b) => write!(f, "villain({b})"),
            EdgePotential::GaussianHeight(b) => write!(f, "gauss({b})"),
            EdgePotential::BesselHeight(b) => write!(f, "bessel({b})"),
            EdgePotential::Frozen => write!(f, "frozen"),
            EdgePotential::Free => write!(f, "free"),
            EdgePotential::AnnealedMixture { beta, .. } => write!(f, "mixture({beta})"),
        }
    }
}

/// Truncated Fourier coefficients with a bound on the omitted mass.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierSeries {
    /// `ĉ(k)` for `k = 0..=K`; negative indices follow by evenness.
    pub coeffs: Vec<f64>,
    pub k_max: usize,
    /// Upper bound on `Σ_{|k|>K} ĉ(k)`.
    pub tail_bound: f64,
}

impl FourierSeries {
    pub fn get(&self, k: i64) -> f64 {
        self.coeffs.get(k.unsigned_abs() as usize).copied().unwrap_or(0.0)
    }
}

fn gaussian_tail(beta: f64, k: usize) -> f64 {
    if beta == 0.0 {
        return 0.0;
    }
    let k1 = (k + 1) as f64;
    2.0 * (-k1 * k1 / (2.0 * beta)).exp() / (1.0 - (-k1 / beta).exp())
}

fn bessel_tail(beta: f64, k: usize) -> f64 {
    if beta == 0.0 {
        return 0.0;
    }
    let rho = beta / (2.0 * (k as f64 + 2.0));
    if rho >= 1.0 {
        return f64::INFINITY;
    }
    2.0 * bessel_i(k as i64 + 1, beta) / (1.0 - rho)
}

impl EdgePotential {
    /// Inverse temperature carried by the variant, if any.
    pub fn beta(&self) -> Option<f64> {
        match *self {
            EdgePotential::Xy(b)
            | EdgePotential::Villain(b)
            | EdgePotential::GaussianHeight(b)
            | EdgePotential::BesselHeight(b) => Some(b),
            EdgePotential::AnnealedMixture { beta, .. } => Some(beta),
            _ => None,
        }
    }

    /// Same variant with the inverse temperature replaced.
    pub fn with_beta(&self, beta: f64) -> EdgePotential {
        match self {
            EdgePotential::Xy(_) => EdgePotential::Xy(beta),
            EdgePotential::Villain(_) => EdgePotential::Villain(beta),
            EdgePotential::GaussianHeight(_) => EdgePotential::GaussianHeight(beta),
            EdgePotential::BesselHeight(_) => EdgePotential::BesselHeight(beta),
            EdgePotential::AnnealedMixture { mixing, .. } => EdgePotential::AnnealedMixture {
                mixing: mixing.clone(),
                beta,
            },
            other => other.clone(),
        }
    }

    fn is_bessel_like(&self) -> bool {
        matches!(self, EdgePotential::Xy(_) | EdgePotential::BesselHeight(_))
    }

    /// True when the angle view couples nothing (weight identically 1).
    pub fn angle_is_free(&self) -> bool {
        match self {
            EdgePotential::Free => true,
            EdgePotential::Frozen => false,
            p => p.beta() == Some(0.0),
        }
    }

    /// True when the height view forces `Δ = 0`.
    pub fn height_is_rigid(&self) -> bool {
        match self {
            EdgePotential::Frozen => true,
            EdgePotential::Free => false,
            p => p.beta() == Some(0.0),
        }
    }

    /// Fourier coefficient `ĉ(k)` of the angle weight.
    pub fn coeff(&self, k: i64) -> f64 {
        match self {
            EdgePotential::Xy(b) | EdgePotential::BesselHeight(b) => bessel_i(k, *b),
            EdgePotential::Villain(b) | EdgePotential::GaussianHeight(b) => {
                if *b == 0.0 {
                    if k == 0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    (-((k * k) as f64) / (2.0 * b)).exp()
                }
            }
            EdgePotential::Frozen => 1.0,
            EdgePotential::Free => {
                if k == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            EdgePotential::AnnealedMixture { mixing, beta } => {
                mixing.gaussian_transform(*beta, k as f64)
            }
        }
    }

    /// `ln(ĉ(k)/ĉ(0))`, `-∞` where the coefficient vanishes.
    pub fn ln_coeff_ratio(&self, k: i64) -> f64 {
        if k == 0 {
            return 0.0;
        }
        if self.is_bessel_like() {
            let b = self.beta().unwrap_or(0.0);
            return (bessel_i_scaled(k, b) / bessel_i_scaled(0, b)).ln();
        }
        self.coeff(k).ln()
    }

    /// `ln ĉ(0)`.
    pub fn ln_coeff0(&self) -> f64 {
        if self.is_bessel_like() {
            ln_bessel_i(0, self.beta().unwrap_or(0.0))
        } else {
            0.0
        }
    }

    /// Truncated Fourier view with a rigorous tail bound.
    pub fn fourier_coeffs(&self, k_max: usize) -> Result<FourierSeries> {
        let coeffs = (0..=k_max as i64).map(|k| self.coeff(k)).collect();
        let tail_bound = match self {
            EdgePotential::Xy(b) | EdgePotential::BesselHeight(b) => bessel_tail(*b, k_max),
            EdgePotential::Villain(b) | EdgePotential::GaussianHeight(b) => gaussian_tail(*b, k_max),
            EdgePotential::Frozen => f64::INFINITY,
            EdgePotential::Free => 0.0,
            EdgePotential::AnnealedMixture { mixing, beta } => match mixing {
                MixingMeasure::PointMasses(atoms) => {
                    mixing.validate()?;
                    atoms.iter().map(|&(j, w)| w * gaussian_tail(beta * j, k_max)).sum()
                }
                MixingMeasure::ExponentialSubordinator => {
                    if *beta == 0.0 {
                        0.0
                    } else {
                        let q = (-1.0 / beta.sqrt()).exp();
                        2.0 * q.powi(k_max as i32 + 1) / (1.0 - q)
                    }
                }
            },
        };
        Ok(FourierSeries {
            coeffs,
            k_max,
            tail_bound,
        })
    }

    /// Angle weight `w(θ) = Σ_k ĉ(k) e^{ikθ}`; `Frozen` has no pointwise value.
    pub fn angle_weight(&self, theta: f64) -> f64 {
        match self {
            EdgePotential::Xy(b) | EdgePotential::BesselHeight(b) => (b * theta.cos()).exp(),
            EdgePotential::Villain(b) | EdgePotential::GaussianHeight(b) => heat_kernel(*b, theta),
            EdgePotential::Free => 1.0,
            EdgePotential::Frozen => f64::NAN,
            EdgePotential::AnnealedMixture { mixing, beta } => {
                annealed_villain_eval(mixing, *beta, theta).unwrap_or(f64::NAN)
            }
        }
    }

    /// `ln w(θ) - ln w(0)`, the normalized log weight used by samplers and
    /// quadrature (its maximum is 0 at θ = 0).
    pub fn ln_angle_weight_rel(&self, theta: f64) -> f64 {
        match self {
            EdgePotential::Xy(b) | EdgePotential::BesselHeight(b) => b * (theta.cos() - 1.0),
            EdgePotential::Villain(b) | EdgePotential::GaussianHeight(b) => {
                ln_heat_kernel(*b, theta) - ln_heat_kernel(*b, 0.0)
            }
            EdgePotential::Free => 0.0,
            EdgePotential::Frozen => f64::NAN,
            p @ EdgePotential::AnnealedMixture { .. } => {
                (p.angle_weight(theta) / p.angle_weight(0.0)).ln()
            }
        }
    }

    /// `ln w(0)`, the offset removed by [`Self::ln_angle_weight_rel`].
    pub fn ln_angle_weight0(&self) -> f64 {
        match self {
            EdgePotential::Xy(b) | EdgePotential::BesselHeight(b) => *b,
            EdgePotential::Villain(b) | EdgePotential::GaussianHeight(b) => ln_heat_kernel(*b, 0.0),
            EdgePotential::Free | EdgePotential::Frozen => 0.0,
            p @ EdgePotential::AnnealedMixture { .. } => p.angle_weight(0.0).ln(),
        }
    }

    /// Height weight at gradient `Δ`: `ĉ(Δ)` for the coupled variants,
    /// `1{Δ=0}` for `Frozen` and `1` for `Free`.
    pub fn height_weight(&self, delta: i64) -> f64 {
        match self {
            EdgePotential::Frozen => {
                if delta == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            EdgePotential::Free => 1.0,
            p => p.coeff(delta),
        }
    }

    /// `ln(height_weight(Δ)/height_weight(0))`.
    pub fn ln_height_weight_rel(&self, delta: i64) -> f64 {
        match self {
            EdgePotential::Frozen => {
                if delta == 0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            EdgePotential::Free => 0.0,
            p => p.ln_coeff_ratio(delta),
        }
    }

    /// `ln height_weight(0)`.
    pub fn ln_height_weight0(&self) -> f64 {
        match self {
            EdgePotential::Frozen | EdgePotential::Free => 0.0,
            p => p.ln_coeff0(),
        }
    }

    /// Effective Gaussian width of the height weight, used to size windows.
    pub fn height_scale(&self) -> f64 {
        match self {
            EdgePotential::Frozen => 0.0,
            EdgePotential::Free => f64::INFINITY,
            EdgePotential::AnnealedMixture { mixing, beta } => match mixing {
                MixingMeasure::PointMasses(atoms) => {
                    beta * atoms.iter().map(|a| a.0).fold(0.0, f64::max)
                }
                MixingMeasure::ExponentialSubordinator => 2.0 * beta + 1.0,
            },
            p => p.beta().unwrap_or(0.0),
        }
    }
}

/// Annealed Villain interaction `F_{κ,β}(θ) = ∫ v_{βJ}(θ) κ(dJ)`.
pub fn annealed_villain_eval(kappa: &MixingMeasure, beta: f64, theta: f64) -> Result<f64> {
    kappa.validate()?;
    if beta == 0.0 {
        return Ok(1.0);
    }
    match kappa {
        MixingMeasure::PointMasses(atoms) => Ok(atoms
            .iter()
            .map(|&(j, w)| w * heat_kernel(beta * j, theta))
            .sum()),
        MixingMeasure::ExponentialSubordinator => {
            let q = (-1.0 / beta.sqrt()).exp();
            Ok((1.0 - q * q) / (1.0 - 2.0 * q * theta.cos() + q * q))
        }
    }
}

/// Maximum discrepancy between `e^{-V(x)}` and its Gaussian-mixture
/// representation over `grid`.
pub fn mixture_identity_check(name: &str, grid: &[f64]) -> Result<f64> {
    let mut worst = 0.0f64;
    match name {
        "quadratic" => {
            let mu = MixingMeasure::named("quadratic")?;
            for &x in grid {
                let lhs = (-0.5 * x * x).exp();
                let rhs = mu.gaussian_transform(1.0, x);
                worst = worst.max((lhs - rhs).abs());
            }
        }
        "abs" => {
            for &x in grid {
                let lhs = (-x.abs()).exp();
                let rhs = subordinator_integral(x);
                worst = worst.max((lhs - rhs).abs());
            }
        }
        other => return Err(Error::arg(format!("unknown potential `{other}`"))),
    }
    Ok(worst)
}

/// `∫_0^∞ (πs)^{-1/2} e^{-s} e^{-x²/(4s)} ds`, integrated in `s = t²` so the
/// integrand is smooth at the origin.
pub fn subordinator_integral(x: f64) -> f64 {
    let f = |t: f64| {
        if t == 0.0 {
            return if x == 0.0 { 2.0 / PI.sqrt() } else { 0.0 };
        }
        2.0 / PI.sqrt() * (-t * t - x * x / (4.0 * t * t)).exp()
    };
    let upper = 8.0 + x.abs().sqrt();
    let peak = (0.5 * x.abs()).sqrt();
    let mut knots = vec![0.0, upper];
    knots.extend((1..upper as usize).map(|i| i as f64));
    if peak > 0.0 {
        knots.push(peak);
    }
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    knots
        .windows(2)
        .map(|w| quadrature::double_exponential::integrate(f, w[0], w[1], 1e-15).integral)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn series_oracle(k: i64, x: f64, terms: usize) -> f64 {
        let k = k.unsigned_abs() as f64;
        let mut s = 0.0;
        for j in 0..terms {
            let j = j as f64;
            s += (0.5 * x).powf(2.0 * j + k) / (ln_gamma(j + 1.0).exp() * ln_gamma(j + k + 1.0).exp());
        }
        s
    }

    #[test]
    fn bessel_at_zero() {
        assert_eq!(bessel_i(0, 0.0), 1.0);
        assert_eq!(bessel_i(3, 0.0), 0.0);
        assert_eq!(bessel_i(-2, 0.0), 0.0);
    }

    #[test]
    fn bessel_matches_series() {
        let v = bessel_i(1, 2.0);
        assert_relative_eq!(v, series_oracle(1, 2.0, 40), max_relative = 1e-12);
        for &(k, x) in &[(0, 0.5), (2, 3.0), (5, 7.5), (-3, 1.0), (0, 14.9)] {
            assert_relative_eq!(bessel_i(k, x), series_oracle(k, x, 80), max_relative = 1e-12);
        }
    }

    #[test]
    fn bessel_asymptotic_branch_agrees_with_series() {
        for &(k, x) in &[(0, 20.0), (1, 30.0), (2, 50.0), (3, 16.0)] {
            let a = bessel_i_scaled(k, x);
            let s = bessel_series_scaled(k.unsigned_abs(), x);
            assert_relative_eq!(a, s, max_relative = 1e-12);
        }
    }

    #[test]
    fn bessel_large_argument_expansion() {
        for k in 0..3i64 {
            for &j in &[50.0, 100.0, 200.0] {
                let lhs = bessel_i_scaled(k, j) * (TAU * j).sqrt();
                let rhs = 1.0 - (4.0 * (k * k) as f64 - 1.0) / (8.0 * j);
                assert!((lhs - rhs).abs() < 2.0 / (j * j), "k={k} J={j}");
            }
        }
    }

    #[test]
    fn heat_kernel_representations_agree() {
        let g = heat_kernel_gaussian(0.5, 0.0);
        let f = heat_kernel_fourier(0.5, 0.0);
        assert_relative_eq!(g, f, max_relative = 1e-12);
        let direct: f64 = (-20i64..=20).map(|k| (-((k * k) as f64)).exp()).sum();
        assert_relative_eq!(f, direct, max_relative = 1e-12);
        assert_eq!(heat_kernel(0.0, 1.3), 1.0);
    }

    #[test]
    fn ln_heat_kernel_matches_direct() {
        for &b in &[0.05, 0.3, 2.0, 40.0] {
            for &t in &[0.0, 1.0, 3.0, -2.5] {
                assert_relative_eq!(ln_heat_kernel(b, t), heat_kernel(b, t).ln(), max_relative = 1e-11, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn fourier_views() {
        let v = EdgePotential::Villain(1.0).fourier_coeffs(3).unwrap();
        assert_relative_eq!(v.get(1), (-0.5f64).exp(), max_relative = 1e-15);
        let x = EdgePotential::Xy(2.0).fourier_coeffs(2).unwrap();
        for k in 0..=2 {
            assert_relative_eq!(x.get(k), series_oracle(k, 2.0, 40), max_relative = 1e-12);
        }
        let m = EdgePotential::AnnealedMixture {
            mixing: MixingMeasure::point_masses(vec![(1.0, 1.0)]).unwrap(),
            beta: 1.0,
        }
        .fourier_coeffs(4)
        .unwrap();
        assert_eq!(m.coeffs, v.coeffs[..].iter().copied().chain((4..=4).map(|k| (-(k * k) as f64 / 2.0).exp())).collect::<Vec<_>>());
    }

    #[test]
    fn tail_bounds_dominate_truncated_mass() {
        let pots = [
            EdgePotential::Villain(0.7),
            EdgePotential::Xy(3.0),
            EdgePotential::AnnealedMixture {
                mixing: MixingMeasure::ExponentialSubordinator,
                beta: 2.0,
            },
        ];
        for p in &pots {
            for kmax in [2usize, 5, 9] {
                let fs = p.fourier_coeffs(kmax).unwrap();
                let mass: f64 = (kmax as i64 + 1..400).map(|k| 2.0 * p.coeff(k)).sum();
                assert!(fs.tail_bound >= mass * (1.0 - 1e-12), "{p} K={kmax}");
            }
        }
    }

    #[test]
    fn annealed_villain_atoms() {
        let k = MixingMeasure::point_masses(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap();
        let v = annealed_villain_eval(&k, 1.0, 0.0).unwrap();
        assert_relative_eq!(v, 0.5 * heat_kernel(1.0, 0.0) + 0.5 * heat_kernel(2.0, 0.0), max_relative = 1e-14);
        assert_eq!(annealed_villain_eval(&k, 0.0, 2.0).unwrap(), 1.0);
        let d = MixingMeasure::point_masses(vec![(1.0, 1.0)]).unwrap();
        assert_relative_eq!(annealed_villain_eval(&d, 1.3, 0.4).unwrap(), heat_kernel(1.3, 0.4), max_relative = 1e-14);
    }

    #[test]
    fn subordinator_closed_form_matches_series() {
        let p = EdgePotential::AnnealedMixture {
            mixing: MixingMeasure::ExponentialSubordinator,
            beta: 1.5,
        };
        let direct: f64 = (-200i64..=200)
            .map(|k| p.coeff(k) * (k as f64 * 0.7).cos())
            .sum();
        assert_relative_eq!(p.angle_weight(0.7), direct, max_relative = 1e-12);
    }

    #[test]
    fn mixture_identities() {
        assert_eq!(mixture_identity_check("quadratic", &[0.0, 1.0, 2.5]).unwrap(), 0.0);
        assert!(mixture_identity_check("abs", &[0.0]).unwrap() < 1e-13);
        assert!(mixture_identity_check("abs", &[0.5, 1.0, 2.0, 4.0]).unwrap() <= 1e-10);
        assert!(mixture_identity_check("cubic", &[1.0]).is_err());
    }

    #[test]
    fn table_parsing() {
        let m = MixingMeasure::from_table("# J w\n1.0 0.25\n2.0 0.75\n").unwrap();
        assert_eq!(m, MixingMeasure::PointMasses(vec![(1.0, 0.25), (2.0, 0.75)]));
        assert!(MixingMeasure::from_table("1.0 0.3\n").is_err());
    }
}
