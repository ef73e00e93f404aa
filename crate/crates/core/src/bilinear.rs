//! The bilinear form `S(A × B) = Σ_{m,n} a_m b_n F(m, n) Δ(m, n)`, its
//! diagonal, its decomposition pieces and the sweep over `Q`.

use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arith::{self, gcd, lcm, ArithError, Sieve};
use crate::characters::{CharacterError, CharacterGroup, DirichletCharacter};
use crate::coeffs::{
    build_sequence, mollifier_mu_w, CoeffError, CoefficientSequence, LCoefficients,
    MollifierCoefficients, MollifierWeight, Provenance,
};
use crate::delta::{DeltaEngine, DeltaError, DeltaParams};
use crate::numerics::{
    integrate, integrate_pieces, ordered_par_sum, ComplexNeumaierSum, NeumaierSum, QuadratureError,
    Tolerance, REDUCTION_CHUNK,
};
use crate::weights::{LocalizedTestFunction, RampTestFunction, SpecialTestFunction, TestFunction, WeightError};

/// Primes `p ≤ SINGULAR_CUTOFF` enter the truncated singular series.
pub const SINGULAR_CUTOFF: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BilinearError {
    #[error(transparent)]
    Delta(#[from] DeltaError),
    #[error(transparent)]
    Character(#[from] CharacterError),
    #[error(transparent)]
    Coeff(#[from] CoeffError),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Arith(#[from] ArithError),
    #[error("sequence of length {len} does not cover m < N = {n}")]
    ShortSequence { len: usize, n: f64 },
    #[error("invalid experiment: {0}")]
    BadExperiment(String),
}

/// `𝔖 = ∏_p (1 − 1/p² − 1/p³)`, truncated at [`SINGULAR_CUTOFF`].
pub fn singular_constant() -> f64 {
    static S: OnceLock<f64> = OnceLock::new();
    *S.get_or_init(|| {
        Sieve::global()
            .singular_series(SINGULAR_CUTOFF)
            .expect("cutoff within the sieve")
            .value
    })
}

/// `Δ(m, m) = Σ_{(q, m) = 1} Ψ(q/Q) φ*(q)/φ(q)`.
pub fn delta_diagonal(params: &DeltaParams, m: u64) -> f64 {
    let q_big = params.q();
    params
        .moduli()
        .filter(|&q| gcd(q, m) == 1)
        .map(|q| params.psi().eval(q as f64 / q_big) * arith::phi_star(q) as f64 / arith::euler_phi(q) as f64)
        .collect::<NeumaierSum>()
        .value()
}

/// Everything that defines one bilinear form.
#[derive(Clone)]
pub struct BilinearConfig {
    pub params: DeltaParams,
    pub f: Arc<dyn TestFunction>,
    pub a: CoefficientSequence,
    pub b: CoefficientSequence,
    /// Whether the trivial character is singular for the sequences.
    pub singular_trivial: bool,
}

impl std::fmt::Debug for BilinearConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BilinearConfig")
            .field("params", &self.params)
            .field("n", &self.f.size())
            .field("a_len", &self.a.len())
            .field("b_len", &self.b.len())
            .field("singular_trivial", &self.singular_trivial)
            .finish()
    }
}

impl BilinearConfig {
    pub fn new(
        params: DeltaParams,
        f: Arc<dyn TestFunction>,
        a: CoefficientSequence,
        b: CoefficientSequence,
    ) -> Result<Self, BilinearError> {
        let n = f.size();
        let need = (n.ceil() as usize).saturating_sub(1);
        for s in [&a, &b] {
            if s.len() < need {
                return Err(BilinearError::ShortSequence { len: s.len(), n });
            }
        }
        let singular_trivial = match (a.provenance(), b.provenance()) {
            (Provenance::Built { lambda, .. }, _) | (_, Provenance::Built { lambda, .. }) => lambda.singular_trivial(),
            _ => false,
        };
        Ok(Self {
            params,
            f,
            a,
            b,
            singular_trivial,
        })
    }

    /// Largest `m` with `F(m, ·)` possibly nonzero.
    pub fn n_max(&self) -> u64 {
        (self.f.size().ceil() as u64).saturating_sub(1).min(self.a.len().max(self.b.len()) as u64)
    }

    /// `(m, n, a_m b_n F(m, n))` for every nonzero term, ordered by `(m, n)`.
    pub fn weighted_pairs(&self) -> Vec<(u64, u64, f64)> {
        let top = self.n_max();
        let mut out = Vec::new();
        for m in 1..=top {
            let am = self.a.get(m);
            if am == 0.0 {
                continue;
            }
            for n in 1..=top {
                let w = am * self.b.get(n);
                if w == 0.0 {
                    continue;
                }
                let w = w * self.f.eval(m as f64, n as f64);
                if w != 0.0 {
                    out.push((m, n, w));
                }
            }
        }
        out
    }
}

/// `S(A × B)` as the direct sum over moduli and primitive characters. The
/// character sum `Σ*_χ χ(m)χ̄(n)` is taken from its closed form.
pub fn s_full(cfg: &BilinearConfig) -> Result<f64, BilinearError> {
    let pairs = cfg.weighted_pairs();
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let moduli: Vec<u64> = cfg.params.moduli().collect();
    let q_big = cfg.params.q();
    ordered_par_sum(&moduli, |&q| {
        let psi = cfg.params.psi().eval(q as f64 / q_big);
        if psi == 0.0 {
            return Ok(0.0);
        }
        let group = CharacterGroup::new(q)?;
        let inner: NeumaierSum = pairs
            .iter()
            .map(|&(m, n, w)| w * group.primitive_kernel(m, n) as f64)
            .collect();
        Ok(psi / arith::euler_phi(q) as f64 * inner.value())
    })
}

/// `Σ_{m,n} a_m b_n F(m, n) Δ(m, n)` with `Δ` summed over enumerated
/// primitive characters.
pub fn s_via_delta(cfg: &BilinearConfig) -> Result<f64, BilinearError> {
    let engine = DeltaEngine::new(cfg.params.clone());
    let pairs = cfg.weighted_pairs();
    ordered_par_sum(&pairs, |&(m, n, w)| Ok(w * engine.delta_direct(m, n)?))
}

/// `S_diag = Σ_m a_m b_m F(m, m) Δ(m, m)`.
pub fn s_diag(cfg: &BilinearConfig) -> f64 {
    let terms: Vec<(u64, f64)> = diagonal_weights(cfg);
    terms
        .iter()
        .map(|&(m, w)| w * delta_diagonal(&cfg.params, m))
        .collect::<NeumaierSum>()
        .value()
}

/// `Ψ̄ 𝔖 Q Σ_m a_m b_m δ(m) F(m, m)`.
pub fn s_diag_main(cfg: &BilinearConfig) -> f64 {
    let lead = cfg.params.psi().mean() * singular_constant() * cfg.params.q();
    lead * diagonal_weights(cfg)
        .iter()
        .map(|&(m, w)| w * arith::delta_factor(m))
        .collect::<NeumaierSum>()
        .value()
}

fn diagonal_weights(cfg: &BilinearConfig) -> Vec<(u64, f64)> {
    (1..=cfg.n_max())
        .map(|m| (m, cfg.a.get(m) * cfg.b.get(m) * cfg.f.eval(m as f64, m as f64)))
        .filter(|&(_, w)| w != 0.0)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagonalReport {
    pub q: f64,
    pub s_diag: f64,
    pub s_diag_main: f64,
    pub gap: f64,
    /// `gap / Q^{1/2}`.
    pub normalized_gap: f64,
}

pub fn diagonal_report(cfg: &BilinearConfig) -> DiagonalReport {
    let s = s_diag(cfg);
    let main = s_diag_main(cfg);
    let gap = (s - main).abs();
    DiagonalReport {
        q: cfg.params.q(),
        s_diag: s,
        s_diag_main: main,
        gap,
        normalized_gap: gap / cfg.params.q().sqrt(),
    }
}

/// The Euler–Maclaurin decomposition of `S − S_diag`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PiecesReport {
    pub s: f64,
    pub s_diag: f64,
    /// `Σ_{m ≠ n} a_m b_n F Δ₁`.
    pub s1: f64,
    /// `Σ_{m, n} a_m b_n F Δ₂`, diagonal included.
    pub s2: f64,
    pub s_plus: f64,
    pub s_star: f64,
    /// `−Σ_m a_m b_m F(m, m) Δ₂(m, m)`: on the diagonal `Δ − Δ′` is `Δ″`,
    /// whose remainder part `Δ₂` sits inside `S₂` but not in `S − S_diag`.
    pub diagonal_correction: f64,
    /// `|S − S_diag − S₁ − S₂ − diagonal_correction|`.
    pub residual: f64,
    /// `|S₁ − S⁺ − S*|`.
    pub split_residual: f64,
}

pub fn s_pieces(cfg: &BilinearConfig) -> Result<PiecesReport, BilinearError> {
    let engine = DeltaEngine::new(cfg.params.clone());
    let pairs = cfg.weighted_pairs();
    let singular = cfg.singular_trivial;
    let s = s_full(cfg)?;
    let sd = s_diag(cfg);
    let s2 = ordered_par_sum(&pairs, |&(m, n, w)| Ok::<_, BilinearError>(w * engine.delta2(m, n)?))?;
    let off: Vec<(u64, u64, f64)> = pairs.iter().copied().filter(|p| p.0 != p.1).collect();
    let s1 = ordered_par_sum(&off, |&(m, n, w)| Ok::<_, BilinearError>(w * engine.delta1(m, n)?))?;
    let s_plus = ordered_par_sum(&off, |&(m, n, w)| {
        Ok::<_, BilinearError>(w * engine.delta_plus(m, n, singular)?)
    })?;
    let s_star = ordered_par_sum(&off, |&(m, n, w)| {
        Ok::<_, BilinearError>(w * engine.delta_star(m, n, singular)?)
    })?;
    let diag: Vec<(u64, u64, f64)> = pairs.iter().copied().filter(|p| p.0 == p.1).collect();
    let correction = -ordered_par_sum(&diag, |&(m, n, w)| Ok::<_, BilinearError>(w * engine.delta2(m, n)?))?;
    Ok(PiecesReport {
        s,
        s_diag: sd,
        s1,
        s2,
        s_plus,
        s_star,
        diagonal_correction: correction,
        residual: (s - sd - s1 - s2 - correction).abs(),
        split_residual: (s1 - s_plus - s_star).abs(),
    })
}

/// `Σ_{m ≡ 0 (d₁), n ≡ 0 (d₂), (mn, b) = 1} a_m b_n F(m, n) Ω(|m − n|/y) χ(m/d₁) χ̄(n/d₂)`.
pub fn s_chi(
    cfg: &BilinearConfig,
    d1: u64,
    d2: u64,
    b: u64,
    y: f64,
    chi: &DirichletCharacter,
) -> Complex64 {
    let psi = cfg.params.psi();
    let top = cfg.n_max();
    let mut acc = ComplexNeumaierSum::new();
    let mut m = d1;
    while m <= top {
        let am = cfg.a.get(m);
        if am != 0.0 && gcd(m, b) == 1 {
            let cm = chi.evaluate(m / d1);
            let mut n = d2;
            while n <= top {
                let bn = cfg.b.get(n);
                if bn != 0.0 && gcd(n, b) == 1 {
                    let w = am * bn * cfg.f.eval(m as f64, n as f64) * psi.omega(m.abs_diff(n) as f64 / y);
                    if w != 0.0 {
                        acc.add(cm * chi.evaluate(n / d2).conj() * w);
                    }
                }
                n += d2;
            }
        }
        m += d1;
    }
    acc.value()
}

/// `V_{d₁d₂}(y) = Σ_{m ≡ 0 (d₁), n ≡ 0 (d₂)} a_m b_n F(m, n) Ω(|m − n|/y)`.
pub fn v_inner(cfg: &BilinearConfig, d1: u64, d2: u64, y: f64) -> f64 {
    let psi = cfg.params.psi();
    let top = cfg.n_max();
    let mut acc = NeumaierSum::new();
    for m in (d1..=top).step_by(d1 as usize) {
        let am = cfg.a.get(m);
        if am == 0.0 {
            continue;
        }
        for n in (d2..=top).step_by(d2 as usize) {
            let w = am * cfg.b.get(n);
            if w != 0.0 {
                acc.add(w * cfg.f.eval(m as f64, n as f64) * psi.omega(m.abs_diff(n) as f64 / y));
            }
        }
    }
    acc.value()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VInnerReport {
    pub d1: u64,
    pub d2: u64,
    pub y: f64,
    pub exact: f64,
    /// `(Σ_r ρ_A(r)/[r, d₁]) (Σ_r ρ_B(r)/[r, d₂]) ∬ F(u, v) (uv)^{-1/2} Ω(|u − v|/y) du dv`.
    pub approximation: f64,
    pub gap: f64,
}

/// [`v_inner`] next to the integral that replaces the `l₁, l₂` sums. Needs
/// both sequences built from `ζ` without shift.
pub fn v_inner_report(
    cfg: &BilinearConfig,
    d1: u64,
    d2: u64,
    y: f64,
    tol: Tolerance,
) -> Result<VInnerReport, BilinearError> {
    let rho_of = |s: &CoefficientSequence| -> Result<MollifierCoefficients, BilinearError> {
        match s.provenance() {
            Provenance::Built { lambda, rho, shift } if lambda.degree() == 1 && *shift == 0.0 => Ok(rho.clone()),
            _ => Err(CoeffError::NotBuilt.into()),
        }
    };
    let (rho_a, rho_b) = (rho_of(&cfg.a)?, rho_of(&cfg.b)?);
    let rho_sum = |rho: &MollifierCoefficients, d: u64| -> f64 {
        rho.nonzero().map(|(r, v)| v / lcm(r, d) as f64).collect::<NeumaierSum>().value()
    };
    let integral = omega_integral(cfg, y, tol)?;
    let exact = v_inner(cfg, d1, d2, y);
    let approximation = rho_sum(&rho_a, d1) * rho_sum(&rho_b, d2) * integral;
    Ok(VInnerReport {
        d1,
        d2,
        y,
        exact,
        approximation,
        gap: (exact - approximation).abs(),
    })
}

/// `∬_{[1,N]²} F(u, v) (uv)^{-1/2} Ω(|u − v|/y) du dv`.
fn omega_integral(cfg: &BilinearConfig, y: f64, tol: Tolerance) -> Result<f64, BilinearError> {
    let psi = cfg.params.psi();
    let (lo, hi) = psi.support();
    let n = cfg.f.size();
    let f_breaks: Vec<f64> = cfg.f.log_breakpoints().into_iter().map(f64::exp).collect();
    let pieces = |a: f64, b: f64, extra: &[f64]| -> Vec<f64> {
        let mut v = vec![a, b];
        v.extend(f_breaks.iter().chain(extra).copied().filter(|&x| x > a && x < b));
        v.sort_by(f64::total_cmp);
        v
    };
    let inner_tol = Tolerance::new(tol.abs / (10.0 * n), tol.rel / 10.0);
    let failure = std::cell::RefCell::new(None);
    let inner = |u: f64| -> f64 {
        let mut total = 0.0;
        for (a, b) in [(u - hi * y, u - lo * y), (u + lo * y, u + hi * y)] {
            let (a, b) = (a.max(1.0), b.min(n));
            if a >= b {
                continue;
            }
            let g = |v: f64| cfg.f.eval(u, v) / (u * v).sqrt() * psi.omega((u - v).abs() / y);
            match integrate_pieces(g, &pieces(a, b, &[]), inner_tol) {
                Ok(i) => total += i.value,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                }
            }
        }
        total
    };
    let kinks = [1.0 + lo * y, 1.0 + hi * y, n - hi * y, n - lo * y];
    let outer = integrate_pieces(inner, &pieces(1.0, n, &kinks), tol)?;
    if let Some(e) = failure.into_inner() {
        return Err(e.into());
    }
    Ok(outer.value)
}

/// `F(x, y)(xy)^α`: paired with sequences built at shift `α` it leaves
/// `a_m b_n F(m, n)` unchanged.
#[derive(Clone)]
pub struct ShiftCompensated {
    pub inner: Arc<dyn TestFunction>,
    pub alpha: f64,
}

impl TestFunction for ShiftCompensated {
    fn eval(&self, x: f64, y: f64) -> f64 {
        self.inner.eval(x, y) * (x * y).powf(self.alpha)
    }

    fn size(&self) -> f64 {
        self.inner.size()
    }

    fn derivative_bound_order(&self) -> u32 {
        self.inner.derivative_bound_order()
    }

    fn log_breakpoints(&self) -> Vec<f64> {
        self.inner.log_breakpoints()
    }
}

pub type ShapeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// The built-in `G(x, y) = exp(−log²x − y)`.
pub fn special_shape() -> ShapeFn {
    let g = SpecialTestFunction::default();
    Arc::new(move |x, y| g.eval(x, y))
}

/// Inputs for the special-shape test function `G(m/n, mn/(r₁r₂q^g))`.
#[derive(Clone)]
pub struct SpecialShapeConfig {
    pub params: DeltaParams,
    pub g_fn: ShapeFn,
    pub lambda: LCoefficients,
    pub rho_a: MollifierCoefficients,
    pub rho_b: MollifierCoefficients,
}

impl SpecialShapeConfig {
    pub fn new(
        params: DeltaParams,
        lambda: LCoefficients,
        rho_a: MollifierCoefficients,
        rho_b: MollifierCoefficients,
    ) -> Self {
        Self {
            params,
            g_fn: special_shape(),
            lambda,
            rho_a,
            rho_b,
        }
    }
}

/// `(m, l₁l₂, ρ_A(r₁)ρ_B(r₂)λ(l₁)λ(l₂)/m)` over `r₁l₁ = r₂l₂ = m`, with `m`
/// large enough that `G(1, l₁l₂ (x_hi Q)^{-g}) < e^{-40}` is dropped.
fn special_diagonal_terms(cfg: &SpecialShapeConfig) -> Vec<(u64, u64, f64)> {
    let g = cfg.lambda.degree() as i32;
    let hi = cfg.params.psi().support().1;
    let y_scale = (hi * cfg.params.q()).powi(g);
    let x = cfg.rho_a.len().max(cfg.rho_b.len()) as f64;
    let m_max = (x * (40.0 * y_scale).sqrt()).ceil() as u64;
    let mut out = Vec::new();
    for m in 1..=m_max {
        let mut by_product: Vec<(u64, f64)> = Vec::new();
        for (r1, ra) in cfg.rho_a.nonzero() {
            if m % r1 != 0 {
                continue;
            }
            let l1 = m / r1;
            for (r2, rb) in cfg.rho_b.nonzero() {
                if m % r2 != 0 {
                    continue;
                }
                let l2 = m / r2;
                let l12 = l1 * l2;
                if l12 as f64 / y_scale > 40.0 {
                    continue;
                }
                let c = ra * rb * (cfg.lambda.value(l1) * cfg.lambda.value(l2)) as f64 / m as f64;
                match by_product.iter_mut().find(|e| e.0 == l12) {
                    Some(e) => e.1 += c,
                    None => by_product.push((l12, c)),
                }
            }
        }
        out.extend(by_product.into_iter().filter(|e| e.1 != 0.0).map(|(l, c)| (m, l, c)));
    }
    out
}

/// `𝔖Q Σ_{r₁l₁ = r₂l₂} ρ_A(r₁)ρ_B(r₂)λ(l₁)λ(l₂) (r₁l₁)^{-1} δ(r₁l₁) ∫Ψ(t) G(1, l₁l₂ (tQ)^{-g}) dt`.
pub fn special_main_term(cfg: &SpecialShapeConfig, tol: Tolerance) -> Result<f64, BilinearError> {
    let g = cfg.lambda.degree() as i32;
    let q = cfg.params.q();
    let psi = cfg.params.psi();
    let (lo, hi) = psi.support();
    let mut memo: std::collections::HashMap<u64, f64> = std::collections::HashMap::new();
    let mut acc = NeumaierSum::new();
    for (m, l12, c) in special_diagonal_terms(cfg) {
        let integral = match memo.get(&l12) {
            Some(v) => *v,
            None => {
                let v = integrate(
                    |t| psi.eval(t) * (cfg.g_fn)(1.0, l12 as f64 / (t * q).powi(g)),
                    lo,
                    hi,
                    tol,
                )?
                .value;
                memo.insert(l12, v);
                v
            }
        };
        acc.add(c * arith::delta_factor(m) * integral);
    }
    Ok(singular_constant() * q * acc.value())
}

/// `S_diag` for the special-shape test function, summed directly over the
/// moduli: `Σ_q Ψ(q/Q) φ*(q)/φ(q) Σ_{(m, q) = 1} … G(1, l₁l₂/q^g)`.
pub fn special_direct_diagonal(cfg: &SpecialShapeConfig) -> Result<f64, BilinearError> {
    let g = cfg.lambda.degree() as i32;
    let terms = special_diagonal_terms(cfg);
    let moduli: Vec<u64> = cfg.params.moduli().collect();
    let q_big = cfg.params.q();
    ordered_par_sum(&moduli, |&q| {
        let psi = cfg.params.psi().eval(q as f64 / q_big);
        if psi == 0.0 {
            return Ok::<_, BilinearError>(0.0);
        }
        let qg = (q as f64).powi(g);
        let inner: NeumaierSum = terms
            .iter()
            .filter(|t| gcd(t.0, q) == 1)
            .map(|&(_, l12, c)| c * (cfg.g_fn)(1.0, l12 as f64 / qg))
            .collect();
        Ok(psi * arith::phi_star(q) as f64 / arith::euler_phi(q) as f64 * inner.value())
    })
}

/// Growth regime of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime {
    /// `N = Q^{1 − ε}`, mollifier on `[1, X]`, plain test function.
    Short { epsilon: f64 },
    /// `N = Q^{2 − δ}`, mollifier on the dyadic segment `[X/2, X]`, and
    /// optionally the test function localized to `|log(m/n)| ≤ δ log Q`,
    /// `mn ≤ X_A X_B Q^{2 − 2δ}`.
    Long { delta: f64, localized: bool },
}

/// Per-`Q` recipe for a row of the experiment table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentTemplate {
    pub regime: Regime,
    /// Degree `g` of `ζ^g`.
    pub degree: u32,
    pub mollifier: MollifierWeight,
    /// `X = Q^θ`.
    pub mollifier_exponent: f64,
    /// `C = max(Q^κ, x_hi/x_lo)`.
    pub c_exponent: f64,
}

impl Default for ExperimentTemplate {
    fn default() -> Self {
        Self {
            regime: Regime::Short { epsilon: 0.25 },
            degree: 1,
            mollifier: MollifierWeight::LogRamp,
            mollifier_exponent: 0.5,
            c_exponent: 0.25,
        }
    }
}

impl ExperimentTemplate {
    pub fn label(&self) -> String {
        match self.regime {
            Regime::Short { epsilon } => format!("short(eps={epsilon})"),
            Regime::Long { delta, localized } => {
                format!("long(delta={delta},{})", if localized { "localized" } else { "plain" })
            }
        }
    }

    pub fn config_for(&self, q: f64) -> Result<BilinearConfig, BilinearError> {
        let psi = crate::weights::SmoothCutoff::standard();
        let (lo, hi) = psi.support();
        let c = q.powf(self.c_exponent).max(hi / lo);
        let params = DeltaParams::standard(q, c)?;
        let x = q.powf(self.mollifier_exponent).max(1.0);
        let lambda = LCoefficients::zeta_power(self.degree)?;
        let rho = mollifier_mu_w(x, self.mollifier)?;
        let (n, rho, f): (f64, MollifierCoefficients, Arc<dyn TestFunction>) = match self.regime {
            Regime::Short { epsilon } => {
                let n = q.powf(1.0 - epsilon);
                (n, rho, Arc::new(RampTestFunction::new(n)?))
            }
            Regime::Long { delta, localized } => {
                let n = q.powf(2.0 - delta);
                let x_a = x / 2.0;
                let piece = rho.dyadic_piece(x_a);
                let f: Arc<dyn TestFunction> = if localized {
                    let ratio = delta * q.ln();
                    let product = (x_a * x_a).ln() + (2.0 - 2.0 * delta) * q.ln();
                    Arc::new(LocalizedTestFunction::new(n, ratio, product)?)
                } else {
                    Arc::new(RampTestFunction::new(n)?)
                };
                (n, piece, f)
            }
        };
        let len = (n.ceil() as usize).saturating_sub(1).max(2);
        let a = build_sequence(&lambda, &rho, len)?;
        BilinearConfig::new(params, f, a.clone(), a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub q: f64,
    pub n: f64,
    pub c: f64,
    pub s: f64,
    pub s_diag: f64,
    pub main_term: f64,
    pub abs_error: f64,
    /// `|S − S_diag| / Q`.
    pub normalized_error: f64,
}

impl ExperimentRow {
    pub const CSV_HEADER: &'static str = "Q,N,C,S,S_diag,main_term,abs_error,normalized_error";

    pub fn to_csv(&self) -> String {
        [self.q, self.n, self.c, self.s, self.s_diag, self.main_term, self.abs_error, self.normalized_error]
            .iter()
            .map(|v| format_float(*v))
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentMetadata {
    pub regime: String,
    pub template: ExperimentTemplate,
    pub config_hash: String,
    pub seed: u64,
    /// Items per partial sum in the ordered reduction.
    pub reduction_chunk: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentTable {
    pub metadata: ExperimentMetadata,
    pub rows: Vec<ExperimentRow>,
    /// Last normalized error over the first; absent for one-row grids.
    pub decay_ratio: Option<f64>,
}

impl ExperimentTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(ExperimentRow::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.to_csv());
            out.push('\n');
        }
        out
    }
}

/// 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn run_experiment(
    grid: &[f64],
    template: &ExperimentTemplate,
    config_hash: &str,
    seed: u64,
) -> Result<ExperimentTable, BilinearError> {
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BilinearError::BadExperiment("grid must be strictly increasing".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &q in grid {
        let cfg = template.config_for(q)?;
        let s = s_full(&cfg)?;
        let sd = s_diag(&cfg);
        let main = s_diag_main(&cfg);
        rows.push(ExperimentRow {
            q,
            n: cfg.f.size(),
            c: cfg.params.c(),
            s,
            s_diag: sd,
            main_term: main,
            abs_error: (s - sd).abs(),
            normalized_error: (s - sd).abs() / q,
        });
    }
    let decay_ratio = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) if rows.len() > 1 => Some(b.normalized_error / a.normalized_error),
        _ => None,
    };
    Ok(ExperimentTable {
        metadata: ExperimentMetadata {
            regime: template.label(),
            template: *template,
            config_hash: config_hash.to_string(),
            seed,
            reduction_chunk: REDUCTION_CHUNK,
        },
        rows,
        decay_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::MollifierCoefficients;
    use crate::weights::SmoothCutoff;

    fn mu_config(q: f64, n: f64, x: f64) -> BilinearConfig {
        let lambda = LCoefficients::zeta_power(1).unwrap();
        let rho = mollifier_mu_w(x, MollifierWeight::Sharp).unwrap();
        let a = build_sequence(&lambda, &rho, n.ceil() as usize).unwrap();
        let params = DeltaParams::standard(q, 2.0).unwrap();
        BilinearConfig::new(params, Arc::new(RampTestFunction::new(n).unwrap()), a.clone(), a).unwrap()
    }

    /// `S` with the character sum expanded as `Σ_{cd=q, d | m−n} μ(c)φ(d)`,
    /// summing over `(m, n)` outside and `q` inside.
    fn s_transposed(cfg: &BilinearConfig) -> f64 {
        let mut total = 0.0;
        let top = cfg.n_max();
        for n in 1..=top {
            for m in 1..=top {
                let w = cfg.a.get(m) * cfg.b.get(n) * cfg.f.eval(m as f64, n as f64);
                if w == 0.0 {
                    continue;
                }
                let mut delta = 0.0;
                for q in cfg.params.moduli() {
                    if gcd(q, m * n) != 1 {
                        continue;
                    }
                    let mut kern = 0i64;
                    for d in 1..=q {
                        if q % d == 0 && (m as i64 - n as i64) % d as i64 == 0 {
                            kern += i64::from(arith::mobius(q / d)) * arith::euler_phi(d) as i64;
                        }
                    }
                    delta += SmoothCutoff::standard().eval(q as f64 / cfg.params.q()) * kern as f64
                        / arith::euler_phi(q) as f64;
                }
                total += w * delta;
            }
        }
        total
    }

    #[test]
    fn s_full_matches_independent_routes() {
        let cfg = mu_config(40.0, 12.0, 3.0);
        let s = s_full(&cfg).unwrap();
        let via = s_via_delta(&cfg).unwrap();
        let transposed = s_transposed(&cfg);
        assert!((s - via).abs() <= 1e-9 * s.abs().max(1.0), "{s} vs {via}");
        assert!((s - transposed).abs() <= 1e-9 * s.abs().max(1.0), "{s} vs {transposed}");
    }

    #[test]
    fn zero_sequences_give_zero() {
        let cfg = mu_config(40.0, 12.0, 3.0);
        let zero = BilinearConfig::new(cfg.params.clone(), cfg.f.clone(), CoefficientSequence::zeros(12), cfg.b.clone()).unwrap();
        assert_eq!(s_full(&zero).unwrap(), 0.0);
        assert_eq!(s_diag(&zero), 0.0);
    }

    #[test]
    fn delta_diagonal_matches_enumeration() {
        let params = DeltaParams::standard(30.0, 2.0).unwrap();
        let engine = DeltaEngine::new(params.clone());
        for m in [1u64, 2, 6, 7, 30] {
            let a = delta_diagonal(&params, m);
            let b = engine.delta_direct(m, m).unwrap();
            assert!((a - b).abs() < 1e-11, "m = {m}: {a} vs {b}");
        }
    }

    #[test]
    fn diagonal_main_term_unit_mollifier() {
        let lambda = LCoefficients::zeta_power(1).unwrap();
        let a = build_sequence(&lambda, &MollifierCoefficients::unit(), 20).unwrap();
        let params = DeltaParams::standard(100.0, 2.0).unwrap();
        let f: Arc<dyn TestFunction> = Arc::new(RampTestFunction::new(20.0).unwrap());
        let cfg = BilinearConfig::new(params, f.clone(), a.clone(), a).unwrap();
        let psi = SmoothCutoff::standard();
        let expect: f64 = psi.mean()
            * singular_constant()
            * 100.0
            * (1..20u64).map(|m| arith::delta_factor(m) * f.eval(m as f64, m as f64) / m as f64).sum::<f64>();
        assert!((s_diag_main(&cfg) - expect).abs() < 1e-10 * expect.abs());
    }

    #[test]
    fn singular_constant_value() {
        // ∏(1 − p⁻² − p⁻³) to 1e-6 from a direct product over p < 10⁶
        assert!((singular_constant() - 0.4791453769080).abs() < 1e-12, "{}", singular_constant());
    }

    #[test]
    fn pieces_reconstruct() {
        let lambda = LCoefficients::zeta_power(1).unwrap();
        let rho = mollifier_mu_w(3.0, MollifierWeight::LogRamp).unwrap();
        let a = build_sequence(&lambda, &rho, 12).unwrap();
        let params = DeltaParams::standard(40.0, 40f64.powf(0.25)).unwrap();
        let cfg = BilinearConfig::new(params, Arc::new(RampTestFunction::new(12.0).unwrap()), a.clone(), a).unwrap();
        let r = s_pieces(&cfg).unwrap();
        assert!(r.residual < 1e-8, "{r:?}");
        assert!(r.split_residual < 1e-10, "{r:?}");
        let mut plain = cfg.clone();
        plain.singular_trivial = false;
        let r = s_pieces(&plain).unwrap();
        assert_eq!(r.s_plus, 0.0);
    }

    #[test]
    fn s_chi_reduces_to_v_inner() {
        let cfg = mu_config(40.0, 30.0, 5.0);
        let chi = CharacterGroup::new(1).unwrap().principal();
        for (d1, d2, y) in [(1, 1, 3.0), (2, 3, 5.5), (1, 2, 1.5)] {
            let a = s_chi(&cfg, d1, d2, 1, y, &chi);
            let b = v_inner(&cfg, d1, d2, y);
            assert!((a.re - b).abs() < 1e-13 && a.im.abs() < 1e-15);
        }
        assert_eq!(v_inner(&cfg, 31, 1, 2.0), 0.0);
        assert_eq!(v_inner(&cfg, 1, 1, 100.0), 0.0);
        let g = CharacterGroup::new(5).unwrap();
        let chi = g.characters().nth(1).unwrap();
        let v = s_chi(&cfg, 2, 1, 3, 4.0, &chi);
        let mut direct = Complex64::new(0.0, 0.0);
        for m in (2..30u64).step_by(2) {
            for n in 1..30u64 {
                if gcd(m * n, 3) != 1 {
                    continue;
                }
                let w = cfg.a.get(m) * cfg.b.get(n) * cfg.f.eval(m as f64, n as f64)
                    * SmoothCutoff::standard().omega(m.abs_diff(n) as f64 / 4.0);
                direct += chi.evaluate(m / 2) * chi.evaluate(n).conj() * w;
            }
        }
        assert!((v - direct).norm() < 1e-13);
    }

    #[test]
    fn v_inner_approximation_runs() {
        let lambda = LCoefficients::zeta_power(1).unwrap();
        let rho = mollifier_mu_w(4.0, MollifierWeight::LogRamp).unwrap();
        let a = build_sequence(&lambda, &rho, 200).unwrap();
        let params = DeltaParams::standard(50.0, 2.0).unwrap();
        let cfg = BilinearConfig::new(params, Arc::new(RampTestFunction::new(200.0).unwrap()), a.clone(), a).unwrap();
        let r = v_inner_report(&cfg, 1, 1, 20.0, Tolerance::new(1e-9, 1e-8)).unwrap();
        assert!(r.exact.is_finite() && r.approximation.is_finite());
        let free = BilinearConfig::new(cfg.params.clone(), cfg.f.clone(), CoefficientSequence::zeros(200), cfg.b.clone()).unwrap();
        assert!(v_inner_report(&free, 1, 1, 20.0, Tolerance::default()).is_err());
    }

    #[test]
    fn v_inner_gap_shrinks_on_grid() {
        let t = ExperimentTemplate {
            regime: Regime::Long { delta: 0.25, localized: false },
            ..Default::default()
        };
        let worst = |q: f64| -> f64 {
            let cfg = t.config_for(q).unwrap();
            let y = cfg.f.size() / 8.0;
            [(1, 1), (1, 2), (2, 3)]
                .iter()
                .map(|&(d1, d2)| {
                    let r = v_inner_report(&cfg, d1, d2, y, Tolerance::new(1e-10, 1e-9)).unwrap();
                    r.gap / r.exact.abs()
                })
                .fold(0.0, f64::max)
        };
        let (small, large) = (worst(50.0), worst(200.0));
        assert!(large < small, "{small} -> {large}");
    }

    #[test]
    fn special_unit_mollifier_collapses() {
        let params = DeltaParams::standard(50.0, 2.0).unwrap();
        let mut cfg = SpecialShapeConfig::new(
            params,
            LCoefficients::zeta_power(1).unwrap(),
            MollifierCoefficients::unit(),
            MollifierCoefficients::unit(),
        );
        let main = special_main_term(&cfg, Tolerance::new(1e-13, 1e-12)).unwrap();
        // 𝔖Q Σ_l l⁻¹ δ(l) ∫Ψ(t) exp(−l²/(tQ)) dt with a Simpson oracle
        let psi = SmoothCutoff::standard();
        let mut expect = 0.0;
        for l in 1..200u64 {
            let steps = 2000;
            let h = 1.0 / steps as f64;
            let mut s = 0.0;
            for i in 0..=steps {
                let t = 1.0 + i as f64 * h;
                let w = if i == 0 || i == steps { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * psi.eval(t) * (-((l * l) as f64) / (t * 50.0)).exp();
            }
            expect += arith::delta_factor(l) / l as f64 * s * h / 3.0;
        }
        expect *= singular_constant() * 50.0;
        assert!((main - expect).abs() < 1e-8 * expect, "{main} vs {expect}");
        let direct = special_direct_diagonal(&cfg).unwrap();
        assert!((main - direct).abs() < 5.0 * 50f64.powf(0.6), "{main} vs {direct}");
        cfg.g_fn = Arc::new(|_, _| 0.0);
        assert_eq!(special_main_term(&cfg, Tolerance::default()).unwrap(), 0.0);
        assert_eq!(special_direct_diagonal(&cfg).unwrap(), 0.0);
    }

    #[test]
    fn single_term_diagonal() {
        // N = 2: only m = n = 1 survives
        let a = CoefficientSequence::free(vec![0.7, 0.0, 0.0]);
        let b = CoefficientSequence::free(vec![-1.3, 0.0, 0.0]);
        let params = DeltaParams::standard(30.0, 2.0).unwrap();
        let f: Arc<dyn TestFunction> = Arc::new(Scaled(Arc::new(Flat(4.0)), 0.5));
        let cfg = BilinearConfig::new(params.clone(), f.clone(), a, b).unwrap();
        let expect = 0.7 * -1.3 * f.eval(1.0, 1.0) * delta_diagonal(&params, 1);
        assert!((s_diag(&cfg) - expect).abs() < 1e-14);
    }

    #[test]
    fn shift_invariance() {
        let lambda = LCoefficients::zeta_power(2).unwrap();
        let rho = mollifier_mu_w(4.0, MollifierWeight::LogRamp).unwrap();
        let params = DeltaParams::standard(40.0, 2.0).unwrap();
        let f: Arc<dyn TestFunction> = Arc::new(RampTestFunction::new(16.0).unwrap());
        let a = build_sequence(&lambda, &rho, 16).unwrap();
        let base = s_full(&BilinearConfig::new(params.clone(), f.clone(), a.clone(), a).unwrap()).unwrap();
        for alpha in [0.1, -0.2, 0.35] {
            let a = crate::coeffs::build_sequence_shifted(&lambda, &rho, 16, alpha).unwrap();
            let fc: Arc<dyn TestFunction> = Arc::new(ShiftCompensated { inner: f.clone(), alpha });
            let s = s_full(&BilinearConfig::new(params.clone(), fc, a.clone(), a).unwrap()).unwrap();
            assert!((s - base).abs() <= 1e-9 * base.abs(), "alpha {alpha}: {s} vs {base}");
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn s_full_is_bilinear(
            a1 in proptest::collection::vec(-1.0f64..1.0, 10),
            a2 in proptest::collection::vec(-1.0f64..1.0, 10),
            b in proptest::collection::vec(-1.0f64..1.0, 10),
            s in -2.0f64..2.0,
            t in -2.0f64..2.0,
        ) {
            let params = DeltaParams::standard(30.0, 2.0).unwrap();
            let f: Arc<dyn TestFunction> = Arc::new(RampTestFunction::new(10.0).unwrap());
            let seq = |v: &Vec<f64>| CoefficientSequence::free(v.clone());
            let run = |x: CoefficientSequence, y: CoefficientSequence, f: Arc<dyn TestFunction>| {
                s_full(&BilinearConfig::new(params.clone(), f, x, y).unwrap()).unwrap()
            };
            let combo = seq(&a1).combine(s, &seq(&a2), t).unwrap();
            let lhs = run(combo, seq(&b), f.clone());
            let rhs = s * run(seq(&a1), seq(&b), f.clone()) + t * run(seq(&a2), seq(&b), f.clone());
            let scale = 1.0 + lhs.abs().max(rhs.abs());
            proptest::prop_assert!((lhs - rhs).abs() <= 1e-10 * scale);
            let transposed = run(seq(&b), seq(&a1), f.clone());
            let swapped: Arc<dyn TestFunction> = Arc::new(Swapped(f.clone()));
            let direct = run(seq(&a1), seq(&b), swapped);
            proptest::prop_assert!((transposed - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
            let lin = s * run(seq(&a1), seq(&b), f.clone());
            let scaled: Arc<dyn TestFunction> = Arc::new(Scaled(f.clone(), s));
            let direct = run(seq(&a1), seq(&b), scaled);
            proptest::prop_assert!((lin - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
        }
    }

    struct Swapped(Arc<dyn TestFunction>);
    impl TestFunction for Swapped {
        fn eval(&self, x: f64, y: f64) -> f64 {
            self.0.eval(y, x)
        }
        fn size(&self) -> f64 {
            self.0.size()
        }
    }

    struct Flat(f64);
    impl TestFunction for Flat {
        fn eval(&self, x: f64, y: f64) -> f64 {
            if x < self.0 && y < self.0 { 1.0 } else { 0.0 }
        }
        fn size(&self) -> f64 {
            self.0
        }
    }

    struct Scaled(Arc<dyn TestFunction>, f64);
    impl TestFunction for Scaled {
        fn eval(&self, x: f64, y: f64) -> f64 {
            self.1 * self.0.eval(x, y)
        }
        fn size(&self) -> f64 {
            self.0.size()
        }
    }

    #[test]
    fn experiment_shape() {
        let t = ExperimentTemplate::default();
        let one = run_experiment(&[40.0], &t, "x", 0).unwrap();
        assert_eq!(one.rows.len(), 1);
        assert!(one.decay_ratio.is_none());
        assert!(run_experiment(&[50.0, 40.0], &t, "x", 0).is_err());
        let two = run_experiment(&[40.0, 60.0], &t, "x", 0).unwrap();
        assert_eq!(two.rows.len(), 2);
        assert_eq!(two.to_csv().lines().count(), 3);
        assert_eq!(two.to_csv(), run_experiment(&[40.0, 60.0], &t, "x", 0).unwrap().to_csv());
    }
}
