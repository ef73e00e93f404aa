//! The averaging operator `Δ(m, n)` over primitive characters and its exact
//! decompositions.
//!
//! Every piece is a finite sum at desk scale. Infinite sums over squarefree
//! `u` are closed with Euler products, and the Euler–Maclaurin remainders
//! `Ψ₁`, `Ψ₂` are replaced by their exact closed forms once the argument
//! leaves the support of `Ψ`.

use std::ops::RangeInclusive;

use dashmap::DashMap;
use num_complex::Complex64;
use num_rational::Ratio;
use serde::Serialize;
use thiserror::Error;

use crate::arith::{self, gcd, lcm, ArithError, Sieve};
use crate::characters::{CharacterError, PrimitiveKernel};
use crate::numerics::{ComplexNeumaierSum, NeumaierSum, Tolerance};
use crate::weights::{SmoothCutoff, WeightError};

/// `Σ_u μ²(u)/(u φ(u)) = ζ(2)ζ(3)/ζ(6)`.
pub const LANDAU_CONSTANT: f64 = 1.943_596_436_820_759_2;

/// Quadrature accuracy used for `Ψ₁`, `Ψ₂` inside the decompositions.
pub const DELTA_QUADRATURE: Tolerance = Tolerance::new(1e-13, 1e-12);

/// Largest accepted imaginary residue of a character sum.
pub const IMAGINARY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeltaError {
    #[error(transparent)]
    Character(#[from] CharacterError),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Arith(#[from] ArithError),
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("no integer modulus q has Ψ(q/Q) ≠ 0 for Q = {0}")]
    EmptyFamily(f64),
    #[error("|m − n| = {diff} is outside the window C²|m − n| ≤ (K + 1) Q x_lo")]
    Window { diff: u64 },
    #[error("character sum left an imaginary part {0:e}")]
    ImaginaryResidue(f64),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

/// `(Q, C, K, Ψ)` for one family of moduli.
#[derive(Debug, Clone)]
pub struct DeltaParams {
    q: f64,
    c: f64,
    k_max: u64,
    psi: SmoothCutoff,
    quadrature: Tolerance,
}

impl DeltaParams {
    /// Requires `C ≥ x_hi / x_lo`: below that the switched form of `Δ″`
    /// picks up a spurious `cl = 1` term.
    pub fn new(q: f64, c: f64, psi: SmoothCutoff) -> Result<Self, DeltaError> {
        let (lo, hi) = psi.support();
        if !(q > 0.0 && q.is_finite()) {
            return Err(DeltaError::BadParams(format!("Q must be positive, got {q}")));
        }
        if !(c >= hi / lo && c.is_finite()) {
            return Err(DeltaError::BadParams(format!(
                "C = {c} must be at least x_hi/x_lo = {}",
                hi / lo
            )));
        }
        let p = Self {
            q,
            c,
            k_max: (hi * q / c).floor() as u64,
            psi,
            quadrature: DELTA_QUADRATURE,
        };
        if p.moduli().is_empty() {
            return Err(DeltaError::EmptyFamily(q));
        }
        Ok(p)
    }

    pub fn standard(q: f64, c: f64) -> Result<Self, DeltaError> {
        Self::new(q, c, SmoothCutoff::standard().clone())
    }

    pub fn with_quadrature(mut self, tol: Tolerance) -> Self {
        self.quadrature = tol;
        self
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// `⌊C⌋`, the largest integer `c ≤ C`.
    pub fn c_int(&self) -> u64 {
        self.c.floor() as u64
    }

    pub fn k_max(&self) -> u64 {
        self.k_max
    }

    pub fn psi(&self) -> &SmoothCutoff {
        &self.psi
    }

    pub fn quadrature(&self) -> Tolerance {
        self.quadrature
    }

    /// Integers `q` with `Ψ(q/Q)` possibly nonzero.
    pub fn moduli(&self) -> RangeInclusive<u64> {
        let (lo, hi) = self.psi.support();
        let first = (lo * self.q).floor() as u64 + 1;
        let last = ((hi * self.q).ceil() as u64).saturating_sub(1);
        first..=last
    }

    #[inline]
    fn weight(&self, x: f64) -> f64 {
        self.psi.eval(x / self.q)
    }
}

/// Which argument of `Ψ` to use in the reduced form of `Δ′`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PsiArgument {
    /// `a²c|m − n| / (klhQ)`, the argument produced by the divisor switch.
    Corrected,
    /// `ac|m − n| / (klhQ)`, kept to measure the discrepancy.
    AsPrinted,
}

/// All decomposition pieces of `Δ(m, n)` with their residuals. Fields that
/// only make sense for `m ≠ n` are `None` on the diagonal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaReport {
    pub m: u64,
    pub n: u64,
    pub delta: f64,
    pub delta_prime: f64,
    pub delta_double_prime: f64,
    pub delta0_prime: Option<f64>,
    pub delta0_double_prime: f64,
    pub delta1: Option<f64>,
    pub delta2: f64,
    pub delta_plus: Option<f64>,
    pub delta_star: Option<f64>,
    /// `|Δ − Δ′ − Δ″|`.
    pub residual_split: f64,
    /// `|Δ₀′ + Δ₀″|`.
    pub residual_cancel: Option<f64>,
    /// `|Δ − Δ₁ − Δ₂|`.
    pub residual_em: Option<f64>,
    /// `|Δ″ − Ψ̂(0)Δ₀″ − Δ₂|`.
    pub residual_em_double_prime: f64,
    /// `|Δ′ − Ψ̂(0)Δ₀′ − Δ₁|`.
    pub residual_em_prime: Option<f64>,
}

/// `(g, h, 𝔪, 𝔫)` with `gh | (m, n)`, `g` squarefree, `m = gh𝔪`, `n = gh𝔫`.
fn gh_splits(m: u64, n: u64) -> Result<Vec<(i8, u64, u64, u64)>, ArithError> {
    let common = arith::factor(gcd(m, n))?;
    let mut out = Vec::new();
    for g in common.squarefree_divisors() {
        let mu_g = if arith::factor(g)?.omega() % 2 == 0 { 1 } else { -1 };
        for h in arith::factor(gcd(m, n) / g)?.divisors() {
            out.push((mu_g, h, m / (g * h), n / (g * h)));
        }
    }
    Ok(out)
}

/// `(μ(a)μ(ac)/(aφ(ac)), a, c)` over squarefree `ac ≤ C`, `(ac, mn) = 1`.
fn ac_pairs(c_int: u64, mn: u64) -> Vec<(f64, u64, u64)> {
    let mut out = Vec::new();
    for a in 1..=c_int {
        let mu_a = arith::mobius(a);
        if mu_a == 0 || gcd(a, mn) != 1 {
            continue;
        }
        for c in 1..=c_int / a {
            let mu_ac = arith::mobius(a * c);
            if mu_ac == 0 || gcd(c, mn) != 1 {
                continue;
            }
            let w = f64::from(mu_a * mu_ac) / (a as f64 * arith::euler_phi(a * c) as f64);
            out.push((w, a, c));
        }
    }
    out
}

/// `μ((u, D)) φ((u, D)) / (u φ(u))` for squarefree `u`.
#[inline]
fn u_weight(u: u64, d: u64) -> f64 {
    let g = gcd(u, d);
    f64::from(arith::mobius(g)) * arith::euler_phi(g) as f64
        / (u as f64 * arith::euler_phi(u) as f64)
}

/// `Σ♭_{(u, excl) = 1} μ((u, D)) φ((u, D)) / (u φ(u))` as an Euler product.
pub fn squarefree_u_sum(excl: u64, d: u64) -> Result<f64, ArithError> {
    let mut v = LANDAU_CONSTANT;
    let local = |p: u64| 1.0 + 1.0 / (p as f64 * (p as f64 - 1.0));
    for p in arith::factor(excl)?.primes() {
        v /= local(p);
    }
    for p in arith::factor(d)?.primes() {
        if excl % p != 0 {
            v *= (1.0 - 1.0 / p as f64) / local(p);
        }
    }
    Ok(v)
}

/// Partial sum of [`squarefree_u_sum`] over `u < bound`.
fn squarefree_u_partial(excl: u64, d: u64, bound: f64) -> f64 {
    let mut s = NeumaierSum::new();
    let mut u = 1u64;
    while (u as f64) < bound {
        if arith::mobius(u) != 0 && gcd(u, excl) == 1 {
            s.add(u_weight(u, d));
        }
        u += 1;
    }
    s.value()
}

/// Memoizing evaluator for `Δ(m, n)` and its pieces at fixed parameters.
#[derive(Debug)]
pub struct DeltaEngine {
    params: DeltaParams,
    kernel: PrimitiveKernel,
    psi1_memo: DashMap<(u64, u64), f64>,
    psi2_memo: DashMap<u64, f64>,
}

impl DeltaEngine {
    pub fn new(params: DeltaParams) -> Self {
        Self {
            params,
            kernel: PrimitiveKernel::new(),
            psi1_memo: DashMap::new(),
            psi2_memo: DashMap::new(),
        }
    }

    pub fn params(&self) -> &DeltaParams {
        &self.params
    }

    pub fn kernel(&self) -> &PrimitiveKernel {
        &self.kernel
    }

    #[inline]
    fn kern(&self, k: u64, m: u64, n: u64) -> Result<f64, DeltaError> {
        Ok(self.kernel.value(k, m, n)? as f64)
    }

    /// `Ψ₂(Q/j)`, memoized on the integer `j`.
    fn psi2_at(&self, j: u64) -> Result<f64, DeltaError> {
        if let Some(v) = self.psi2_memo.get(&j) {
            return Ok(*v);
        }
        let v = self
            .params
            .psi
            .psi2_with(self.params.q / j as f64, self.params.quadrature)?;
        self.psi2_memo.insert(j, v);
        Ok(v)
    }

    /// `Ψ₁(num / (den Q))`, memoized on the reduced fraction.
    fn psi1_at(&self, num: u64, den: u64) -> Result<f64, DeltaError> {
        let g = gcd(num, den);
        let key = (num / g, den / g);
        if let Some(v) = self.psi1_memo.get(&key) {
            return Ok(*v);
        }
        let t = key.0 as f64 / (key.1 as f64 * self.params.q);
        let v = self.params.psi.psi1_with(t, self.params.quadrature)?;
        self.psi1_memo.insert(key, v);
        Ok(v)
    }

    /// `Σ_q Ψ(q/Q)/φ(q) Σ*_{χ mod q} χ(m)χ̄(n)`, summing over enumerated
    /// primitive characters.
    pub fn delta_direct(&self, m: u64, n: u64) -> Result<f64, DeltaError> {
        let mut acc = ComplexNeumaierSum::new();
        for q in self.params.moduli() {
            let w = self.params.weight(q as f64);
            if w == 0.0 {
                continue;
            }
            let group = self.kernel.group(q)?;
            let s = group.primitive_pair_sum(m, n);
            if s != Complex64::new(0.0, 0.0) {
                acc.add(s * (w / arith::euler_phi(q) as f64));
            }
        }
        let z = acc.value();
        if z.im.abs() > IMAGINARY_TOLERANCE {
            return Err(DeltaError::ImaginaryResidue(z.im));
        }
        Ok(z.re)
    }

    /// `Δ′(m, n)`: the `c ≤ C`, `d | m − n` part.
    pub fn delta_prime(&self, m: u64, n: u64) -> Result<f64, DeltaError> {
        let mn = m * n;
        let (lo, hi) = self.params.psi.support();
        let q = self.params.q;
        let mut acc = NeumaierSum::new();
        for c in 1..=self.params.c_int() {
            let mu_c = arith::mobius(c);
            if mu_c == 0 || gcd(c, mn) != 1 {
                continue;
            }
            let ds: Vec<u64> = if m == n {
                let first = (lo * q / c as f64).floor() as u64 + 1;
                let last = (hi * q / c as f64).ceil() as u64;
                (first..=last).collect()
            } else {
                arith::factor(m.abs_diff(n))?.divisors()
            };
            for d in ds {
                if gcd(d, mn) != 1 {
                    continue;
                }
                let w = self.params.weight((c * d) as f64);
                if w == 0.0 {
                    continue;
                }
                acc.add(
                    w * f64::from(mu_c) * arith::euler_phi(d) as f64
                        / arith::euler_phi(c * d) as f64,
                );
            }
        }
        Ok(acc.value())
    }

    /// `Δ″(m, n)` after switching `c > C` to `c ≤ C`.
    pub fn delta_double_prime(&self, m: u64, n: u64) -> Result<f64, DeltaError> {
        let mn = m * n;
        let top = self.params.psi.support().1 * self.params.q;
        let mut acc = NeumaierSum::new();
        for c in 1..=self.params.c_int() {
            let mu_c = arith::mobius(c);
            if mu_c == 0 || gcd(c, mn) != 1 {
                continue;
            }
            for k in 1..=self.params.k_max {
                let kern = self.kern(k, m, n)?;
                if kern == 0.0 {
                    continue;
                }
                let mut l = 1;
                while ((c * k * l) as f64) < top {
                    if gcd(l, mn) == 1 {
                        let ckl = c * k * l;
                        let w = self.params.weight(ckl as f64);
                        if w != 0.0 {
                            acc.add(-f64::from(mu_c) * w / arith::euler_phi(ckl) as f64 * kern);
                        }
                    }
                    l += 1;
                }
            }
        }
        Ok(acc.value())
    }

    /// `Δ′(m, n)` with the divisor of `m − n` switched to its complement and
    /// expressed through primitive characters. Zero when `m = n`.
    pub fn delta_prime_reduced(&self, m: u64, n: u64, arg: PsiArgument) -> Result<f64, DeltaError> {
        if m == n {
            return Ok(0.0);
        }
        let mn = m * n;
        let diff = m.abs_diff(n);
        let (lo, _) = self.params.psi.support();
        let q = self.params.q;
        let mut acc = NeumaierSum::new();
        for (w, a, c) in ac_pairs(self.params.c_int(), mn) {
            for &(mu_g, h, mm, nn) in &gh_splits(m, n)? {
                let num = match arg {
                    PsiArgument::Corrected => a * a * c * diff,
                    PsiArgument::AsPrinted => a * c * diff,
                };
                // Ψ(num/(klhQ)) ≠ 0 needs kl < num/(x_lo h Q)
                let kl_max = (num as f64 / (lo * h as f64 * q)).floor() as u64;
                for k in 1..=kl_max {
                    let kern = self.kern(k, mm, nn)?;
                    if kern == 0.0 {
                        continue;
                    }
                    for l in 1..=kl_max / k {
                        if (k * l) % a != 0 || gcd(l, mm * nn) != 1 {
                            continue;
                        }
                        let psi = self.params.weight(num as f64 / (k * l * h) as f64);
                        if psi == 0.0 {
                            continue;
                        }
                        acc.add(w * f64::from(mu_g) * kern * psi / arith::euler_phi(k * l) as f64);
                    }
                }
            }
        }
        Ok(acc.value())
    }

    /// `Δ″` with the `l`-sum freed by the squarefree `u` expansion.
    pub fn delta_double_prime_expanded(&self, m: u64, n: u64) -> Result<f64, DeltaError> {
        let mn = m * n;
        let (lo, hi) = self.params.psi.support();
        let q = self.params.q;
        let mut acc = NeumaierSum::new();
        for c in 1..=self.params.c_int() {
            let mu_c = arith::mobius(c);
            if mu_c == 0 || gcd(c, mn) != 1 {
                continue;
            }
            for k in 1..=self.params.k_max {
                let kern = self.kern(k, m, n)?;
                if kern == 0.0 {
                    continue;
                }
                let ck = c * k;
                let pre = -f64::from(mu_c) / arith::euler_phi(ck) as f64 * kern;
                let mut u = 1u64;
                while ((ck * u) as f64) < hi * q {
                    if arith::mobius(u) != 0 && gcd(u, ck) == 1 {
                        let first = (lo * q / (ck * u) as f64).floor() as u64 + 1;
                        let last = (hi * q / (ck * u) as f64).ceil() as u64;
                        let inner: NeumaierSum = (first.max(1)..=last)
                            .map(|l| self.params.weight((ck * u * l) as f64) / l as f64)
                            .collect();
                        acc.add(pre * u_weight(u, mn) * inner.value());
                    }
                    u += 1;
                }
            }
        }
        Ok(acc.value())
    }

    /// `Δ′` with the `l`-sum freed by the squarefree `u` expansion (`m ≠ n`).
    pub fn delta_prime_expanded(&self, m: u64, n: u64, arg: PsiArgument) -> Result<f64, DeltaError> {
        if m == n {
            return Err(DeltaError::Precondition("m ≠ n required".into()));
        }
        let mn = m * n;
        let diff = m.abs_diff(n);
        let (lo, hi) = self.params.psi.support();
        let q = self.params.q;
        let mut acc = NeumaierSum::new();
        for (w, a, c) in ac_pairs(self.params.c_int(), mn) {
            for &(mu_g, h, mm, nn) in &gh_splits(m, n)? {
                let d = mm * nn;
                // T = num/(k u h Q) must exceed x_lo for some l
                let scale = match arg {
                    PsiArgument::Corrected => a * c * diff,
                    PsiArgument::AsPrinted => c * diff,
                };
                let k_top = (scale as f64 * a as f64 / (lo * h as f64 * q)).floor() as u64;
                for k in 1..=k_top {
                    let kern = self.kern(k, mm, nn)?;
                    if kern == 0.0 {
                        continue;
                    }
                    let num = scale * gcd(a, k);
                    let pre = w * f64::from(mu_g) * kern / arith::euler_phi(lcm(a, k)) as f64;
                    let mut u = 1u64;
                    loop {
                        let t = num as f64 / ((k * u * h) as f64 * q);
                        if t <= lo {
                            break;
                        }
                        if arith::mobius(u) != 0 && gcd(u, a * k) == 1 {
                            let first = (t / hi).floor() as u64;
                            let last = (t / lo).ceil() as u64;
                            let inner: NeumaierSum = (first.max(1)..=last)
                                .map(|l| self.params.psi.eval(t / l as f64) / l as f64)
                                .collect();
                            acc.add(pre * u_weight(u, d) * inner.value());
                        }
                        u += 1;
                    }
                }
            }
        }
        Ok(acc.value())
    }

    /// `Δ₀″`: the expanded `Δ″` with the `l`-sum dropped.
    pub fn delta0_double_prime(&self, m: u64, n: u64) -> Result<f64, DeltaError> {
        let mn = m * n;
        let mut acc = NeumaierSum::new();
        for c in 1..=self.params.c_int() {
            let mu_c = arith::mobius(c);
            if mu_c == 0 || gcd(c, mn) != 1 {
                continue;
            }
            for k in 1..=self.params.k_max {
                let kern = self.kern(k, m, n)?;
                if kern == 0.0 {
                    continue;
                }
                let ck = c * k;
                acc.add(
                    -f64::from(mu_c) / arith::euler_phi(ck) as f64 * squarefree_u_sum(ck, mn)? * kern,
                );
            }
        }
        Ok(acc.value())
    }

    /// `Δ₀′`: the expanded `Δ′` with the `l`-sum dropped, `k ≤ K` (`m ≠ n`).
    pub fn delta0_prime(&self, m: u64, n: u64) -> Result<f64, DeltaError> {
        if m == n {
            return Err(DeltaError::Precondition("m ≠ n required".into()));
        }
        let mn = m * n;
        let mut acc = NeumaierSum::new();
        for (w, a, _) in ac_pairs(self.params.c_int(), mn) {
            for &(mu_g, _, mm, nn) in &gh_splits(m, n)? {
                for k in 1..=self.params.k_max {
                    let kern = self.kern(k, mm, nn)?;
                    if kern == 0.0 {
                        continue;
                    }
                    acc.add(
                        w * f64::from(mu_g) / arith::euler_phi(lcm(a, k)) as f64
                            * squarefree_u_sum(a * k, mm * nn)?
                            * kern,
                    );
                }
            }
        }
        Ok(acc.value())
    }

    /// `Δ₂`: the fractional-part remainder of `Δ″`.
    pub fn delta2(&self, m: u64, n: u64) -> Result<f64, DeltaError> {
        let mn = m * n;
        let q = self.params.q;
        let (_, hi) = self.params.psi.support();
        let mellin = self.params.psi.mellin_at_zero();
        let mut acc = NeumaierSum::new();
        for c in 1..=self.params.c_int() {
            let mu_c = arith::mobius(c);
            if mu_c == 0 || gcd(c, mn) != 1 {
                continue;
            }
            for k in 1..=self.params.k_max {
                let kern = self.kern(k, m, n)?;
                if kern == 0.0 {
                    continue;
                }
                let ck = c * k;
                // Ψ₂(Q/(cku)) = −Ψ̂(0) Q/(cku) once cku ≥ x_hi Q
                let bound = hi * q / ck as f64;
                let mut finite = NeumaierSum::new();
                let mut u = 1u64;
                while (u as f64) < bound {
                    if arith::mobius(u) != 0 && gcd(u, ck) == 1 {
                        finite.add(u_weight(u, mn) * u as f64 * self.psi2_at(ck * u)?);
                    }
                    u += 1;
                }
                let tail = -mellin * (q / ck as f64)
                    * (squarefree_u_sum(ck, mn)? - squarefree_u_partial(ck, mn, bound));
                let inner = finite.value() + tail;
                acc.add(-f64::from(mu_c) * ck as f64 / (q * arith::euler_phi(ck) as f64) * inner * kern);
            }
        }
        Ok(acc.value())
    }

    fn check_window(&self, m: u64, n: u64) -> Result<(), DeltaError> {
        let diff = m.abs_diff(n);
        let c = self.params.c_int();
        let lo = self.params.psi.support().0;
        if (c * c * diff) as f64 > (self.params.k_max + 1) as f64 * self.params.q * lo {
            return Err(DeltaError::Window { diff });
        }
        Ok(())
    }

    /// `Δ₁` restricted to `k` in `ks`.
    fn delta1_over(&self, m: u64, n: u64, ks: RangeInclusive<u64>) -> Result<f64, DeltaError> {
        if m == n {
            return Err(DeltaError::Precondition("m ≠ n required".into()));
        }
        self.check_window(m, n)?;
        let mn = m * n;
        let diff = m.abs_diff(n);
        let q = self.params.q;
        let (lo, _) = self.params.psi.support();
        let mellin = self.params.psi.mellin_at_zero();
        let mut acc = NeumaierSum::new();
        for (w, a, c) in ac_pairs(self.params.c_int(), mn) {
            for &(mu_g, h, mm, nn) in &gh_splits(m, n)? {
                let d = mm * nn;
                for k in ks.clone() {
                    let kern = self.kern(k, mm, nn)?;
                    if kern == 0.0 {
                        continue;
                    }
                    let num = a * gcd(a, k) * c * diff;
                    // Ψ₁(T) = −Ψ̂(0) once T = num/(kuhQ) ≤ x_lo
                    let bound = num as f64 / ((k * h) as f64 * q * lo);
                    let mut finite = NeumaierSum::new();
                    let mut u = 1u64;
                    while (u as f64) < bound {
                        if arith::mobius(u) != 0 && gcd(u, a * k) == 1 {
                            finite.add(u_weight(u, d) * self.psi1_at(num, k * u * h)?);
                        }
                        u += 1;
                    }
                    let tail = -mellin
                        * (squarefree_u_sum(a * k, d)? - squarefree_u_partial(a * k, d, bound));
                    acc.add(
                        w * f64::from(mu_g) / arith::euler_phi(lcm(a, k)) as f64
                            * (finite.value() + tail)
                            * kern,
                    );
                }
            }
        }
        Ok(acc.value())
    }

    /// `Δ₁`: the fractional-part remainder of `Δ′` (`m ≠ n`).
    pub fn delta1(&self, m: u64, n: u64) -> Result<f64, DeltaError> {
        self.delta1_over(m, n, 1..=self.params.k_max)
    }

    /// `Δ⁺`: the trivial-character (`k = 1`) part of `Δ₁` when the trivial
    /// character is singular, otherwise 0.
    pub fn delta_plus(&self, m: u64, n: u64, singular_trivial: bool) -> Result<f64, DeltaError> {
        if !singular_trivial {
            return Ok(0.0);
        }
        self.delta1_over(m, n, 1..=1)
    }

    /// `Δ* = Δ₁ − Δ⁺`.
    pub fn delta_star(&self, m: u64, n: u64, singular_trivial: bool) -> Result<f64, DeltaError> {
        if !singular_trivial {
            return self.delta1(m, n);
        }
        self.delta1_over(m, n, 2..=self.params.k_max)
    }

    /// Evaluates every piece and its residuals.
    pub fn report(&self, m: u64, n: u64, singular_trivial: bool) -> Result<DeltaReport, DeltaError> {
        let mellin = self.params.psi.mellin_at_zero();
        let delta = self.delta_direct(m, n)?;
        let delta_prime = self.delta_prime(m, n)?;
        let delta_double_prime = self.delta_double_prime(m, n)?;
        let delta0_double_prime = self.delta0_double_prime(m, n)?;
        let delta2 = self.delta2(m, n)?;
        let residual_em_double_prime = (delta_double_prime - mellin * delta0_double_prime - delta2).abs();
        let mut report = DeltaReport {
            m,
            n,
            delta,
            delta_prime,
            delta_double_prime,
            delta0_prime: None,
            delta0_double_prime,
            delta1: None,
            delta2,
            delta_plus: None,
            delta_star: None,
            residual_split: (delta - delta_prime - delta_double_prime).abs(),
            residual_cancel: None,
            residual_em: None,
            residual_em_double_prime,
            residual_em_prime: None,
        };
        if m != n {
            let d0p = self.delta0_prime(m, n)?;
            let d1 = self.delta1(m, n)?;
            let plus = self.delta_plus(m, n, singular_trivial)?;
            report.delta0_prime = Some(d0p);
            report.delta1 = Some(d1);
            report.delta_plus = Some(plus);
            report.delta_star = Some(self.delta_star(m, n, singular_trivial)?);
            report.residual_cancel = Some((d0p + delta0_double_prime).abs());
            report.residual_em = Some((delta - d1 - delta2).abs());
            report.residual_em_prime = Some((delta_prime - mellin * d0p - d1).abs());
        }
        Ok(report)
    }
}

type Rational = Ratio<i128>;

/// Checks `Σ♭_{u | l, (u, a) = 1} μ((u,s)) φ((u,s)) / φ(u) = φ(a) l / φ(al)`
/// when `(l, s) = 1` and `0` otherwise, in exact rationals.
pub fn mobius_switch_check(l: u64, a: u64, s: u64) -> Result<bool, DeltaError> {
    if gcd(a, s) != 1 {
        return Err(DeltaError::Precondition(format!("gcd({a}, {s}) ≠ 1")));
    }
    let sieve = Sieve::global();
    let mut lhs = Rational::from_integer(0);
    for u in sieve.factor(l)?.squarefree_divisors() {
        if gcd(u, a) != 1 {
            continue;
        }
        let g = gcd(u, s);
        lhs += Rational::new(
            i128::from(sieve.mobius(g)?) * i128::from(sieve.euler_phi(g)?),
            i128::from(sieve.euler_phi(u)?),
        );
    }
    let rhs = if gcd(l, s) == 1 {
        Rational::new(
            i128::from(sieve.euler_phi(a)?) * i128::from(l),
            i128::from(sieve.euler_phi(a * l)?),
        )
    } else {
        Rational::from_integer(0)
    };
    Ok(lhs == rhs)
}

/// Checks `μ((u,mn)) φ((u,mn)) = Σ_{αβγ | u, αβ | m, αγ | n} αβγ μ(βγ)` for
/// squarefree `u`, in exact integers.
pub fn gcd_expansion_check(u: u64, m: u64, n: u64) -> Result<bool, DeltaError> {
    let sieve = Sieve::global();
    let fu = sieve.factor(u)?;
    if !fu.is_squarefree() {
        return Err(DeltaError::Precondition(format!("{u} is not squarefree")));
    }
    let g = gcd(u, m * n);
    let lhs = i128::from(sieve.mobius(g)?) * i128::from(sieve.euler_phi(g)?);
    let mut rhs = 0i128;
    for alpha in fu.divisors() {
        let rest = sieve.factor(u / alpha)?;
        for beta in rest.divisors() {
            for gamma in sieve.factor(u / (alpha * beta))?.divisors() {
                if m % (alpha * beta) == 0 && n % (alpha * gamma) == 0 {
                    rhs += i128::from(alpha * beta * gamma)
                        * i128::from(sieve.mobius(beta * gamma)?);
                }
            }
        }
    }
    Ok(lhs == rhs)
}
