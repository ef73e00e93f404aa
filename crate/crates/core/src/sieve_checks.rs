//! Ratio tests for the classical large sieve inequalities.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arith::{self, gcd};
use crate::bilinear::{format_float, BilinearConfig};
use crate::characters::{root_of_unity, CharacterError, CharacterGroup};
use crate::numerics::{
    compensated_sum, gauss_legendre, integrate_pieces, ComplexNeumaierSum, NeumaierSum, QuadratureError,
    Tolerance, REDUCTION_CHUNK,
};
use crate::weights::{sampled_derivative_bound, TestFunction};

/// Fraction of the right-hand side allowed as quadrature error in [`hlsi`].
pub const HYBRID_ERROR_BUDGET: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SieveError {
    #[error(transparent)]
    Character(#[from] CharacterError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("vector has length {got}, expected {expected}")]
    Length { got: usize, expected: usize },
    #[error("invalid parameter {name} = {value}")]
    BadParameter { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Multiplicative,
    Shifted,
    Additive,
    AdditiveDual,
    Hybrid,
    Bilinear,
}

impl CheckKind {
    pub const SUITES: [CheckKind; 5] = [
        CheckKind::Multiplicative,
        CheckKind::Shifted,
        CheckKind::Additive,
        CheckKind::AdditiveDual,
        CheckKind::Hybrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Multiplicative => "multiplicative",
            CheckKind::Shifted => "shifted",
            CheckKind::Additive => "additive",
            CheckKind::AdditiveDual => "additive_dual",
            CheckKind::Hybrid => "hybrid",
            CheckKind::Bilinear => "bilinear",
        }
    }
}

/// How a random test vector is drawn.
///
/// For vectors indexed by integers `M < n ≤ M + N`:
/// * `Gaussian`: independent standard complex normals;
/// * `Spike`: a single 1 at a random position;
/// * `Mobius`: `μ(n) e(nθ)` with random `θ`;
/// * `Character`: `χ̄(n)` for a random primitive `χ` of conductor `≤ Q`.
///
/// For vectors indexed by Farey fractions `a/q`, `Mobius` is `μ(q)` and
/// `Character` is `e(−a n₀/q)` for a random `n₀ ≤ N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorSource {
    Gaussian,
    Spike,
    Mobius,
    Character,
}

impl VectorSource {
    pub const ALL: [VectorSource; 4] = [
        VectorSource::Gaussian,
        VectorSource::Spike,
        VectorSource::Mobius,
        VectorSource::Character,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VectorSource::Gaussian => "gaussian",
            VectorSource::Spike => "spike",
            VectorSource::Mobius => "mobius",
            VectorSource::Character => "character",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SieveEcho {
    pub kind: CheckKind,
    pub q: u64,
    pub n: usize,
    /// Offset `M` of the index interval.
    pub m: u64,
    pub t: Option<f64>,
    pub source: Option<VectorSource>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SieveCheckResult {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, or 0 when both vanish.
    pub ratio: f64,
    /// Quadrature error estimate on `lhs`; zero for finite sums.
    pub lhs_error: f64,
    pub echo: SieveEcho,
}

impl SieveCheckResult {
    fn new(lhs: f64, rhs: f64, lhs_error: f64, echo: SieveEcho) -> Self {
        let ratio = if rhs == 0.0 && lhs == 0.0 { 0.0 } else { lhs / rhs };
        Self {
            lhs,
            rhs,
            ratio,
            lhs_error,
            echo,
        }
    }

    fn with_source(mut self, source: VectorSource, seed: u64) -> Self {
        self.echo.source = Some(source);
        self.echo.seed = Some(seed);
        self
    }
}

fn norm_sq(a: &[Complex64]) -> f64 {
    compensated_sum(a.iter().map(|z| z.norm_sqr()))
}

/// Values `χ(n)`, `M < n ≤ M + N`, of every primitive character of
/// conductor `q ≤ Q`.
#[derive(Debug, Clone)]
pub struct PrimitiveFamily {
    q_max: u64,
    offset: u64,
    len: usize,
    rows: Vec<(u64, Vec<Complex64>)>,
}

impl PrimitiveFamily {
    pub fn new(q_max: u64, offset: u64, len: usize) -> Result<Self, SieveError> {
        let per_q: Vec<Result<Vec<(u64, Vec<Complex64>)>, CharacterError>> = (1..=q_max)
            .into_par_iter()
            .map(|q| {
                let group = CharacterGroup::new(q)?;
                Ok(group
                    .primitive_characters()
                    .iter()
                    .map(|chi| (q, (1..=len as u64).map(|k| chi.evaluate(offset + k)).collect()))
                    .collect())
            })
            .collect();
        let mut rows = Vec::new();
        for r in per_q {
            rows.extend(r?);
        }
        Ok(Self {
            q_max,
            offset,
            len,
            rows,
        })
    }

    pub fn q_max(&self) -> u64 {
        self.q_max
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of primitive characters.
    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[(u64, Vec<Complex64>)] {
        &self.rows
    }

    fn check_len(&self, a: &[Complex64]) -> Result<(), SieveError> {
        if a.len() != self.len {
            return Err(SieveError::Length {
                got: a.len(),
                expected: self.len,
            });
        }
        Ok(())
    }

    /// `Σ_{q ≤ Q} (q/φ(q)) Σ*_χ |Σ a_n χ(n)|²` against `(Q² + N) Σ|a_n|²`.
    pub fn multiplicative(&self, a: &[Complex64]) -> Result<SieveCheckResult, SieveError> {
        self.check_len(a)?;
        let lhs = chunked_sum(&self.rows, |(q, chi)| {
            let s: ComplexNeumaierSum = a.iter().zip(chi).map(|(x, c)| x * c).collect();
            *q as f64 / arith::euler_phi(*q) as f64 * s.value().norm_sqr()
        });
        let rhs = ((self.q_max * self.q_max) as f64 + self.len as f64) * norm_sq(a);
        let kind = if self.offset == 0 { CheckKind::Multiplicative } else { CheckKind::Shifted };
        Ok(SieveCheckResult::new(
            lhs,
            rhs,
            0.0,
            SieveEcho {
                kind,
                q: self.q_max,
                n: self.len,
                m: self.offset,
                t: None,
                source: None,
                seed: None,
            },
        ))
    }

    /// `Σ_{q ≤ Q} Σ*_χ ∫_{−T}^{T} |Σ a_n χ(n) n^{it}|² dt` against
    /// `(Q²T + N) Σ|a_n|²`.
    pub fn hybrid(&self, a: &[Complex64], t: f64) -> Result<SieveCheckResult, SieveError> {
        self.check_len(a)?;
        if !(t >= 1.0 && t.is_finite()) {
            return Err(SieveError::BadParameter { name: "T", value: t });
        }
        let rhs = ((self.q_max * self.q_max) as f64 * t + self.len as f64) * norm_sq(a);
        let echo = SieveEcho {
            kind: CheckKind::Hybrid,
            q: self.q_max,
            n: self.len,
            m: self.offset,
            t: Some(t),
            source: None,
            seed: None,
        };
        if rhs == 0.0 {
            return Ok(SieveCheckResult::new(0.0, 0.0, 0.0, echo));
        }
        let logs: Vec<f64> = (1..=self.len as u64).map(|k| ((self.offset + k) as f64).ln()).collect();
        let top = logs.last().copied().unwrap_or(1.0).max(LN_2_FLOOR);
        let period = 2.0 * PI / top;
        let mut breaks = vec![-t];
        let steps = (t / period).floor() as i64;
        breaks.extend((-steps..=steps).map(|k| k as f64 * period).filter(|&x| x > -t && x < t));
        breaks.push(t);
        let budget = HYBRID_ERROR_BUDGET * rhs / (2.0 * self.rows.len().max(1) as f64);
        let tol = Tolerance::new(budget, 1e-12);
        let parts: Vec<Result<(f64, f64), QuadratureError>> = self
            .rows
            .par_iter()
            .map(|(_, chi)| {
                let b: Vec<Complex64> = a.iter().zip(chi).map(|(x, c)| x * c).collect();
                let integral = integrate_pieces(
                    |s| {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (bk, lk) in b.iter().zip(&logs) {
                            if *bk != Complex64::new(0.0, 0.0) {
                                acc += bk * Complex64::from_polar(1.0, s * lk);
                            }
                        }
                        acc.norm_sqr()
                    },
                    &breaks,
                    tol,
                )?;
                Ok((integral.value, integral.error))
            })
            .collect();
        let mut lhs = NeumaierSum::new();
        let mut err = 0.0;
        for p in parts {
            let (v, e) = p?;
            lhs.add(v);
            err += e;
        }
        Ok(SieveCheckResult::new(lhs.value(), rhs, err, echo))
    }
}

/// Lower floor for `log N` when placing breakpoints (`N = 1` has no
/// oscillation).
const LN_2_FLOOR: f64 = std::f64::consts::LN_2;

/// Ordered compensated sum over fixed chunks, chunk sums in parallel.
fn chunked_sum<T: Sync>(items: &[T], f: impl Fn(&T) -> f64 + Sync) -> f64 {
    let partial: Vec<f64> = items
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| compensated_sum(chunk.iter().map(&f)))
        .collect();
    compensated_sum(partial)
}

pub fn lsi_multiplicative(a: &[Complex64], q: u64) -> Result<SieveCheckResult, SieveError> {
    PrimitiveFamily::new(q, 0, a.len())?.multiplicative(a)
}

/// `a[k]` is the coefficient of `n = M + 1 + k`.
pub fn lsi_shifted(a: &[Complex64], m: u64, q: u64) -> Result<SieveCheckResult, SieveError> {
    PrimitiveFamily::new(q, m, a.len())?.multiplicative(a)
}

pub fn hlsi(a: &[Complex64], q: u64, t: f64) -> Result<SieveCheckResult, SieveError> {
    PrimitiveFamily::new(q, 0, a.len())?.hybrid(a, t)
}

/// Reduced fractions `a/q` with `q ≤ Q`, `0 ≤ a < q`, ordered by `(q, a)`.
pub fn farey_fractions(q_max: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    for q in 1..=q_max {
        for a in 0..q {
            if gcd(a, q) == 1 {
                out.push((a, q));
            }
        }
    }
    out
}

/// `e(an/q)` with the numerator reduced exactly.
fn additive(a: u64, q: u64, n: u64) -> Complex64 {
    root_of_unity((a * (n % q)) % q, q)
}

/// `Σ_{q ≤ Q} Σ*_{a mod q} |Σ_{n ≤ N} a_n e(an/q)|²` against
/// `(Q² + N) Σ|a_n|²`.
pub fn lsi_additive(a: &[Complex64], q_max: u64) -> SieveCheckResult {
    let fractions = farey_fractions(q_max);
    let lhs = chunked_sum(&fractions, |&(num, q)| {
        let s: ComplexNeumaierSum = a
            .iter()
            .enumerate()
            .map(|(k, x)| x * additive(num, q, k as u64 + 1))
            .collect();
        s.value().norm_sqr()
    });
    let rhs = ((q_max * q_max) as f64 + a.len() as f64) * norm_sq(a);
    SieveCheckResult::new(
        lhs,
        rhs,
        0.0,
        SieveEcho {
            kind: CheckKind::Additive,
            q: q_max,
            n: a.len(),
            m: 0,
            t: None,
            source: None,
            seed: None,
        },
    )
}

/// `Σ_{n ≤ N} |Σ_{a/q} γ_{a/q} e(an/q)|²` against `(Q² + N) Σ|γ|²`, with
/// `γ` indexed as [`farey_fractions`].
pub fn lsi_additive_dual(gamma: &[Complex64], q_max: u64, n: usize) -> Result<SieveCheckResult, SieveError> {
    let fractions = farey_fractions(q_max);
    if gamma.len() != fractions.len() {
        return Err(SieveError::Length {
            got: gamma.len(),
            expected: fractions.len(),
        });
    }
    let ns: Vec<u64> = (1..=n as u64).collect();
    let lhs = chunked_sum(&ns, |&m| {
        let s: ComplexNeumaierSum = gamma
            .iter()
            .zip(&fractions)
            .map(|(g, &(a, q))| g * additive(a, q, m))
            .collect();
        s.value().norm_sqr()
    });
    let rhs = ((q_max * q_max) as f64 + n as f64) * norm_sq(gamma);
    Ok(SieveCheckResult::new(
        lhs,
        rhs,
        0.0,
        SieveEcho {
            kind: CheckKind::AdditiveDual,
            q: q_max,
            n,
            m: 0,
            t: None,
            source: None,
            seed: None,
        },
    ))
}

/// Upper estimate of `𝓛 = (2π)^{-2} ∬ |F̂(iu, iv)| du dv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MellinL1 {
    /// Quadrature of `|F̂|` over `[−U, U]²`.
    pub body: f64,
    /// Bound for the rest of the plane from the derivative estimate.
    pub tail: f64,
    pub u_max: f64,
    /// `(body + tail) / 4π²`.
    pub script_l: f64,
}

/// Nodes per log-piece for the inner Mellin sums, and per unit panel for
/// the outer `(u, v)` integral.
const MELLIN_NODES: usize = 64;
const PANEL_NODES: usize = 8;

/// `F̂(iu, iv)` on products of the given `u` and `v` lists, from one fixed
/// Gauss–Legendre grid in `(log x, log y)`.
pub fn mellin_grid<F: TestFunction + ?Sized>(f: &F, us: &[f64], vs: &[f64]) -> Vec<Vec<Complex64>> {
    let ln_n = f.size().ln();
    let mut breaks = vec![0.0, ln_n];
    breaks.extend(f.log_breakpoints().into_iter().filter(|&b| b > 0.0 && b < ln_n));
    breaks.sort_by(f64::total_cmp);
    let (gx, gw) = gauss_legendre(MELLIN_NODES);
    let mut pts = Vec::new();
    for w in breaks.windows(2) {
        let (mid, half) = ((w[0] + w[1]) / 2.0, (w[1] - w[0]) / 2.0);
        for (x, wt) in gx.iter().zip(&gw) {
            pts.push((mid + half * x, half * wt));
        }
    }
    let values: Vec<Vec<f64>> = pts
        .iter()
        .map(|&(s, ws)| pts.iter().map(|&(t, wt)| ws * wt * f.eval(s.exp(), t.exp())).collect())
        .collect();
    // h_v(s) = Σ_t W(s, t) e^{ivt}, then F̂ = Σ_s e^{ius} h_v(s)
    let h: Vec<Vec<Complex64>> = vs
        .par_iter()
        .map(|&v| {
            values
                .iter()
                .map(|row| {
                    row.iter()
                        .zip(&pts)
                        .map(|(w, &(t, _))| Complex64::from_polar(*w, v * t))
                        .sum()
                })
                .collect()
        })
        .collect();
    us.par_iter()
        .map(|&u| {
            let phases: Vec<Complex64> = pts.iter().map(|&(s, _)| Complex64::from_polar(1.0, u * s)).collect();
            h.iter()
                .map(|hv| hv.iter().zip(&phases).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect()
}

pub fn mellin_l1_estimate<F: TestFunction + ?Sized>(f: &F, u_max: f64) -> MellinL1 {
    let panels = u_max.ceil().max(1.0) as usize * 2;
    let width = 2.0 * u_max / panels as f64;
    let (gx, gw) = gauss_legendre(PANEL_NODES);
    let mut nodes = Vec::with_capacity(panels * PANEL_NODES);
    let mut weights = Vec::with_capacity(panels * PANEL_NODES);
    for p in 0..panels {
        let mid = -u_max + (p as f64 + 0.5) * width;
        for (x, w) in gx.iter().zip(&gw) {
            nodes.push(mid + width / 2.0 * x);
            weights.push(width / 2.0 * w);
        }
    }
    let grid = mellin_grid(f, &nodes, &nodes);
    let body = compensated_sum(
        grid.iter()
            .zip(&weights)
            .flat_map(|(row, wu)| row.iter().zip(&weights).map(move |(z, wv)| wu * wv * z.norm())),
    );
    let d = sampled_derivative_bound(f, 48).max(1.0);
    let ln_n = f.size().ln();
    let arc = 2.0 * u_max.atan();
    let tail = d * (2.0 * ln_n).powi(2) * (PI * PI - arc * arc);
    MellinL1 {
        body,
        tail,
        u_max,
        script_l: (body + tail) / (4.0 * PI * PI),
    }
}

/// `|Σ_{q ≤ Q} Σ*_χ Σ a_m b_n F(m, n) χ(m)χ̄(n)|` against
/// `𝓛 (Q² + M)^{1/2} (Q² + N)^{1/2} ‖a‖ ‖b‖`, with `M = N` the size of `F`.
pub fn bilinear_bound_check(cfg: &BilinearConfig, script_l: f64) -> Result<SieveCheckResult, SieveError> {
    let q_max = cfg.params.q().floor() as u64;
    let pairs = cfg.weighted_pairs();
    let per_q: Vec<Result<f64, CharacterError>> = (1..=q_max)
        .into_par_iter()
        .map(|q| {
            let group = CharacterGroup::new(q)?;
            Ok(compensated_sum(pairs.iter().map(|&(m, n, w)| w * group.primitive_kernel(m, n) as f64)))
        })
        .collect();
    let mut lhs = NeumaierSum::new();
    for v in per_q {
        lhs.add(v?);
    }
    let top = cfg.n_max();
    let na = compensated_sum((1..=top).map(|m| cfg.a.get(m).powi(2)));
    let nb = compensated_sum((1..=top).map(|m| cfg.b.get(m).powi(2)));
    let size = cfg.f.size();
    let q2 = (q_max * q_max) as f64;
    let rhs = script_l * (q2 + size) * (na * nb).sqrt();
    Ok(SieveCheckResult::new(
        lhs.value().abs(),
        rhs,
        0.0,
        SieveEcho {
            kind: CheckKind::Bilinear,
            q: q_max,
            n: top as usize,
            m: 0,
            t: None,
            source: None,
            seed: None,
        },
    ))
}

fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// A vector indexed by `M < n ≤ M + N`.
pub fn random_vector(source: VectorSource, len: usize, offset: u64, q_max: u64, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = Complex64::new(0.0, 0.0);
    match source {
        VectorSource::Gaussian => (0..len).map(|_| complex_normal(&mut rng)).collect(),
        VectorSource::Spike => {
            let mut v = vec![zero; len];
            if len > 0 {
                v[rng.random_range(0..len)] = Complex64::new(1.0, 0.0);
            }
            v
        }
        VectorSource::Mobius => {
            let theta: f64 = rng.random();
            (1..=len as u64)
                .map(|k| {
                    let n = offset + k;
                    f64::from(arith::mobius(n)) * Complex64::from_polar(1.0, 2.0 * PI * theta * n as f64)
                })
                .collect()
        }
        VectorSource::Character => {
            let prims = loop {
                let q = rng.random_range(1..=q_max.max(1));
                let prims = CharacterGroup::new(q).expect("positive modulus").primitive_characters();
                if !prims.is_empty() {
                    break prims;
                }
            };
            let chi = &prims[rng.random_range(0..prims.len())];
            (1..=len as u64).map(|k| chi.evaluate(offset + k).conj()).collect()
        }
    }
}

/// A vector indexed by [`farey_fractions`]`(q_max)`.
pub fn random_farey_vector(source: VectorSource, q_max: u64, n: usize, seed: u64) -> Vec<Complex64> {
    let fractions = farey_fractions(q_max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match source {
        VectorSource::Gaussian => fractions.iter().map(|_| complex_normal(&mut rng)).collect(),
        VectorSource::Spike => {
            let mut v = vec![Complex64::new(0.0, 0.0); fractions.len()];
            v[rng.random_range(0..fractions.len())] = Complex64::new(1.0, 0.0);
            v
        }
        VectorSource::Mobius => fractions
            .iter()
            .map(|&(_, q)| Complex64::new(f64::from(arith::mobius(q)), 0.0))
            .collect(),
        VectorSource::Character => {
            let n0 = rng.random_range(1..=n.max(1) as u64);
            fractions.iter().map(|&(a, q)| additive(a, q, n0).conj()).collect()
        }
    }
}

/// One randomized inequality suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub kind: CheckKind,
    pub trials: usize,
    pub seed: u64,
    pub q: u64,
    pub n: usize,
    /// Interval offset for [`CheckKind::Shifted`].
    #[serde(default)]
    pub m: u64,
    /// Height for [`CheckKind::Hybrid`].
    #[serde(default = "default_t")]
    pub t: f64,
    /// Cycled through trial by trial.
    #[serde(default = "default_sources")]
    pub sources: Vec<VectorSource>,
}

fn default_t() -> f64 {
    1.0
}

fn default_sources() -> Vec<VectorSource> {
    VectorSource::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteSummary {
    pub kind: CheckKind,
    pub trials: usize,
    pub seed: u64,
    pub min_ratio: Option<f64>,
    pub median_ratio: Option<f64>,
    pub max_ratio: Option<f64>,
    /// Seed of the vector attaining the largest ratio.
    pub argmax_seed: Option<u64>,
    pub results: Vec<SieveCheckResult>,
}

impl SuiteSummary {
    pub const CSV_HEADER: &'static str = "suite,trials,seed,min_ratio,median_ratio,max_ratio,argmax_seed";

    pub fn to_csv_row(&self) -> String {
        let f = |v: Option<f64>| v.map(format_float).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.kind.name(),
            self.trials,
            self.seed,
            f(self.min_ratio),
            f(self.median_ratio),
            f(self.max_ratio),
            self.argmax_seed.map(|s| s.to_string()).unwrap_or_default()
        )
    }

    /// Largest ratio, or 0 for an empty suite.
    pub fn worst(&self) -> f64 {
        self.max_ratio.unwrap_or(0.0)
    }
}

/// Trial `i` uses `sources[i mod len]` and vector seed `seed + i`.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteSummary, SieveError> {
    if cfg.sources.is_empty() && cfg.trials > 0 {
        return Err(SieveError::BadParameter {
            name: "sources",
            value: 0.0,
        });
    }
    let family = match cfg.kind {
        CheckKind::Multiplicative | CheckKind::Hybrid if cfg.trials > 0 => Some(PrimitiveFamily::new(cfg.q, 0, cfg.n)?),
        CheckKind::Shifted if cfg.trials > 0 => Some(PrimitiveFamily::new(cfg.q, cfg.m, cfg.n)?),
        _ => None,
    };
    let mut results = Vec::with_capacity(cfg.trials);
    for i in 0..cfg.trials {
        let source = cfg.sources[i % cfg.sources.len()];
        let seed = cfg.seed.wrapping_add(i as u64);
        let r = match cfg.kind {
            CheckKind::Multiplicative | CheckKind::Shifted => {
                let fam = family.as_ref().expect("built above");
                fam.multiplicative(&random_vector(source, cfg.n, fam.offset(), cfg.q, seed))?
            }
            CheckKind::Hybrid => {
                let fam = family.as_ref().expect("built above");
                fam.hybrid(&random_vector(source, cfg.n, 0, cfg.q, seed), cfg.t)?
            }
            CheckKind::Additive => lsi_additive(&random_vector(source, cfg.n, 0, cfg.q, seed), cfg.q),
            CheckKind::AdditiveDual => {
                lsi_additive_dual(&random_farey_vector(source, cfg.q, cfg.n, seed), cfg.q, cfg.n)?
            }
            CheckKind::Bilinear => {
                return Err(SieveError::BadParameter {
                    name: "kind",
                    value: f64::NAN,
                })
            }
        };
        results.push(r.with_source(source, seed));
    }
    let mut sorted: Vec<f64> = results.iter().map(|r| r.ratio).collect();
    sorted.sort_by(f64::total_cmp);
    let argmax_seed = results
        .iter()
        .max_by(|a, b| a.ratio.total_cmp(&b.ratio))
        .and_then(|r| r.echo.seed);
    Ok(SuiteSummary {
        kind: cfg.kind,
        trials: cfg.trials,
        seed: cfg.seed,
        min_ratio: sorted.first().copied(),
        median_ratio: (!sorted.is_empty()).then(|| {
            let k = sorted.len();
            if k % 2 == 1 {
                sorted[k / 2]
            } else {
                (sorted[k / 2 - 1] + sorted[k / 2]) / 2.0
            }
        }),
        max_ratio: sorted.last().copied(),
        argmax_seed,
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{build_sequence, mollifier_mu_w, LCoefficients, MollifierWeight};
    use crate::delta::DeltaParams;
    use crate::weights::{mellin_transform, RampTestFunction};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
    }

    /// LHS of the multiplicative inequality through the closed-form kernel
    /// `Σ*_χ χ(m)χ̄(n)`.
    fn kernel_lhs(a: &[Complex64], offset: u64, q_max: u64) -> f64 {
        let mut total = 0.0;
        for q in 1..=q_max {
            let g = CharacterGroup::new(q).unwrap();
            let mut s = Complex64::new(0.0, 0.0);
            for (i, x) in a.iter().enumerate() {
                for (j, y) in a.iter().enumerate() {
                    let k = g.primitive_kernel(offset + i as u64 + 1, offset + j as u64 + 1);
                    s += x * y.conj() * k as f64;
                }
            }
            total += q as f64 / arith::euler_phi(q) as f64 * s.re;
        }
        total
    }

    #[test]
    fn multiplicative_matches_kernel() {
        for (offset, source) in [(0, VectorSource::Gaussian), (0, VectorSource::Character), (1_000_000, VectorSource::Mobius)] {
            let a = random_vector(source, 20, offset, 15, 7);
            let r = lsi_shifted(&a, offset, 15).unwrap();
            assert!(close(r.lhs, kernel_lhs(&a, offset, 15), 1e-11), "{offset} {source:?}");
            assert!(r.ratio <= 1.0);
        }
    }

    #[test]
    fn zero_vectors() {
        let z = vec![Complex64::new(0.0, 0.0); 10];
        assert_eq!(lsi_multiplicative(&z, 10).unwrap().ratio, 0.0);
        assert_eq!(lsi_additive(&z, 10).ratio, 0.0);
        assert_eq!(hlsi(&z, 10, 2.0).unwrap().lhs, 0.0);
        let g = vec![Complex64::new(0.0, 0.0); farey_fractions(5).len()];
        assert_eq!(lsi_additive_dual(&g, 5, 10).unwrap().ratio, 0.0);
    }

    #[test]
    fn unit_vector_closed_form() {
        let mut a = vec![Complex64::new(0.0, 0.0); 50];
        a[0] = Complex64::new(1.0, 0.0);
        let r = lsi_multiplicative(&a, 50).unwrap();
        let expect: f64 = (1..=50u64)
            .map(|q| q as f64 / arith::euler_phi(q) as f64 * arith::phi_star(q) as f64)
            .sum();
        assert!(close(r.lhs, expect, 1e-12));
        assert!(r.lhs <= r.rhs);
        assert_eq!(lsi_shifted(&a, 0, 50).unwrap(), r);
    }

    #[test]
    fn shifted_spike_closed_form() {
        // χ(M+1) is a root of unity or 0, so the LHS counts primitive χ
        // with (M+1, q) = 1, weighted by q/φ(q)
        let m = 1_000_000u64;
        let mut a = vec![Complex64::new(0.0, 0.0); 50];
        a[0] = Complex64::new(1.0, 0.0);
        let r = lsi_shifted(&a, m, 50).unwrap();
        let expect: f64 = (1..=50u64)
            .filter(|&q| gcd(q, m + 1) == 1)
            .map(|q| q as f64 / arith::euler_phi(q) as f64 * arith::phi_star(q) as f64)
            .sum();
        assert!(close(r.lhs, expect, 1e-12));
        assert!(r.ratio <= 1.0);
    }

    #[test]
    fn additive_oracles() {
        assert_eq!(farey_fractions(1), vec![(0, 1)]);
        assert_eq!(farey_fractions(5).len(), 1 + (2..=5).map(arith::euler_phi).sum::<u64>() as usize);
        // Q = 1: a single fraction 0/1 gives |Σ a_n|² ≤ (1 + N)Σ|a_n|²
        let a = random_vector(VectorSource::Gaussian, 9, 0, 1, 3);
        let r = lsi_additive(&a, 1);
        let s: Complex64 = a.iter().sum();
        assert!(close(r.lhs, s.norm_sqr(), 1e-13));
        assert!(r.ratio <= 1.0);
        // spike at 1/2: every n contributes |e(n/2)|² = 1
        let fr = farey_fractions(4);
        let mut g = vec![Complex64::new(0.0, 0.0); fr.len()];
        g[fr.iter().position(|&f| f == (1, 2)).unwrap()] = Complex64::new(1.0, 0.0);
        let r = lsi_additive_dual(&g, 4, 30).unwrap();
        assert!(close(r.lhs, 30.0, 1e-13));
        assert_eq!(r.rhs, 46.0);
    }

    #[test]
    fn additive_matches_naive_exponentials() {
        let a = random_vector(VectorSource::Gaussian, 25, 0, 5, 11);
        let r = lsi_additive(&a, 5);
        let mut naive = 0.0;
        for (num, q) in farey_fractions(5) {
            let s: Complex64 = a
                .iter()
                .enumerate()
                .map(|(k, x)| x * Complex64::from_polar(1.0, 2.0 * PI * num as f64 * (k + 1) as f64 / q as f64))
                .sum();
            naive += s.norm_sqr();
        }
        assert!(close(r.lhs, naive, 1e-12));
    }

    #[test]
    fn hybrid_matches_closed_form() {
        let a = random_vector(VectorSource::Gaussian, 30, 0, 30, 5);
        let t = 3.0;
        let fam = PrimitiveFamily::new(30, 0, 30).unwrap();
        let r = fam.hybrid(&a, t).unwrap();
        // ∫_{−T}^{T} |Σ b_n n^{it}|² dt = Σ_{m,n} b_m b̄_n 2 sin(T log(m/n)) / log(m/n)
        let mut exact = 0.0;
        for (_, chi) in fam.rows() {
            let b: Vec<Complex64> = a.iter().zip(chi).map(|(x, c)| x * c).collect();
            for (i, x) in b.iter().enumerate() {
                for (j, y) in b.iter().enumerate() {
                    let l = ((i + 1) as f64 / (j + 1) as f64).ln();
                    let k = if i == j { 2.0 * t } else { 2.0 * (t * l).sin() / l };
                    exact += (x * y.conj()).re * k;
                }
            }
        }
        assert!((r.lhs - exact).abs() <= HYBRID_ERROR_BUDGET * r.rhs, "{} vs {exact}", r.lhs);
        assert!(r.lhs_error <= HYBRID_ERROR_BUDGET * r.rhs);
        assert!(r.ratio <= 1.0);
    }

    #[test]
    fn hybrid_spike_is_constant_in_t() {
        let mut a = vec![Complex64::new(0.0, 0.0); 20];
        a[6] = Complex64::new(0.0, 2.0);
        let fam = PrimitiveFamily::new(20, 0, 20).unwrap();
        let r = fam.hybrid(&a, 2.5).unwrap();
        let count = fam.rows().iter().filter(|(_, chi)| chi[6].norm() > 0.5).count() as f64;
        assert!(close(r.lhs, 2.0 * 2.5 * 4.0 * count, 1e-10));
    }

    #[test]
    fn mellin_grid_matches_adaptive_transform() {
        let f = RampTestFunction::new(40.0).unwrap();
        let pts = [(0.0, 0.0), (1.3, -2.1), (7.5, 4.0)];
        for (u, v) in pts {
            let g = mellin_grid(&f, &[u], &[v])[0][0];
            let h = mellin_transform(&f, u, v, Tolerance::new(1e-11, 1e-10)).unwrap();
            assert!((g - h).norm() < 1e-8, "({u},{v}): {g} vs {h}");
        }
    }

    #[test]
    fn script_l_sanity() {
        for n in [10.0f64, 60.0] {
            let f = RampTestFunction::new(n).unwrap();
            let l = mellin_l1_estimate(&f, 20.0);
            assert!(l.script_l <= (2.0 * PI * n.ln()).powi(2));
            assert!(l.script_l <= n.ln().powi(2));
            assert!(l.body > 0.0 && l.tail > 0.0);
        }
    }

    fn bilinear_cfg(a_scale: f64) -> BilinearConfig {
        let lambda = LCoefficients::zeta_power(1).unwrap();
        let rho = mollifier_mu_w(4.0, MollifierWeight::LogRamp).unwrap();
        let a = build_sequence(&lambda, &rho, 30).unwrap();
        let a = a.combine(a_scale, &a, 0.0).unwrap();
        let params = DeltaParams::standard(20.0, 2.0).unwrap();
        BilinearConfig::new(params, Arc::new(RampTestFunction::new(30.0).unwrap()), a.clone(), a).unwrap()
    }

    #[test]
    fn bilinear_bound_holds() {
        let cfg = bilinear_cfg(1.0);
        let l = mellin_l1_estimate(cfg.f.as_ref(), 20.0);
        let r = bilinear_bound_check(&cfg, l.script_l).unwrap();
        assert!(r.ratio <= 1.0 && r.ratio > 0.0, "{r:?}");
        let zero = bilinear_cfg(0.0);
        assert_eq!(bilinear_bound_check(&zero, l.script_l).unwrap().ratio, 0.0);
    }

    #[test]
    fn suite_summary_and_determinism() {
        let cfg = SuiteConfig {
            kind: CheckKind::Multiplicative,
            trials: 9,
            seed: 42,
            q: 12,
            n: 12,
            m: 0,
            t: 1.0,
            sources: default_sources(),
        };
        let s = run_suite(&cfg).unwrap();
        assert_eq!(s.results.len(), 9);
        assert!(s.worst() <= 1.0 + 1e-9);
        let seeds: Vec<u64> = s.results.iter().map(|r| r.echo.seed.unwrap()).collect();
        assert_eq!(seeds, (42..51).collect::<Vec<_>>());
        assert!(s.argmax_seed.is_some());
        assert_eq!(s.to_csv_row(), run_suite(&cfg).unwrap().to_csv_row());
        let empty = run_suite(&SuiteConfig { trials: 0, ..cfg }).unwrap();
        assert!(empty.max_ratio.is_none() && empty.results.is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn ratios_bounded_and_scale_free(
            seed in any::<u64>(),
            src in 0usize..4,
            q in 1u64..16,
            n in 1usize..24,
            re in -3.0f64..3.0,
            im in -3.0f64..3.0,
        ) {
            prop_assume!(re.abs() + im.abs() > 1e-3);
            let c = Complex64::new(re, im);
            let source = VectorSource::ALL[src];
            let a = random_vector(source, n, 0, q, seed);
            let ca: Vec<Complex64> = a.iter().map(|x| x * c).collect();
            let checks = [
                (lsi_multiplicative(&a, q).unwrap(), lsi_multiplicative(&ca, q).unwrap()),
                (lsi_shifted(&a, 977, q).unwrap(), lsi_shifted(&ca, 977, q).unwrap()),
                (lsi_additive(&a, q), lsi_additive(&ca, q)),
            ];
            for (x, y) in checks {
                prop_assert!(x.ratio <= 1.0 + 1e-9);
                prop_assert!((x.ratio - y.ratio).abs() <= 1e-10 * x.ratio.max(1e-300) + 1e-15);
            }
            let g = random_farey_vector(source, q, n, seed);
            let cg: Vec<Complex64> = g.iter().map(|x| x * c).collect();
            let (x, y) = (lsi_additive_dual(&g, q, n).unwrap(), lsi_additive_dual(&cg, q, n).unwrap());
            prop_assert!(x.ratio <= 1.0 + 1e-9);
            prop_assert!((x.ratio - y.ratio).abs() <= 1e-10 * x.ratio.max(1e-300) + 1e-15);
        }
    }
}
