//! Coefficient sequences `a_m = m^{-1/2} Σ_{lr=m} λ(l)ρ(r)` and the
//! Dirichlet-series identities they satisfy.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arith::{self, ArithError};
use crate::characters::DirichletCharacter;
use crate::numerics::ComplexNeumaierSum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoeffError {
    #[error(transparent)]
    Arith(#[from] ArithError),
    #[error("degree g = {0} is not supported (need 1, 2 or 3)")]
    Degree(u32),
    #[error("sequence length N = {0} is too small (need N ≥ 2)")]
    ShortSequence(usize),
    #[error("mollifier length must be at least 1, got {0}")]
    BadLength(f64),
    #[error("sequences have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("operation needs a sequence built from ζ^g and a mollifier")]
    NotBuilt,
}

/// Coefficients `λ(l)` of `ζ(s)^g`, i.e. `τ_g(l)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LCoefficients {
    degree: u32,
    singular_trivial: bool,
}

impl LCoefficients {
    pub fn zeta_power(g: u32) -> Result<Self, CoeffError> {
        if !(1..=3).contains(&g) {
            return Err(CoeffError::Degree(g));
        }
        Ok(Self {
            degree: g,
            singular_trivial: true,
        })
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// Whether the trivial character is singular (a pole of `L(s, χ₀)`).
    pub fn singular_trivial(&self) -> bool {
        self.singular_trivial
    }

    pub fn value(&self, l: u64) -> i64 {
        arith::divisor_power(l, self.degree) as i64
    }
}

/// Weight `w` in `ρ(r) = μ(r) w(r)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MollifierWeight {
    /// `w = 1` on `[1, X]`.
    Sharp,
    /// `w(r) = log(X/r) / log X`, so `|w| ≤ 1` and `r|w′(r)| = 1/log X`.
    LogRamp,
}

impl MollifierWeight {
    pub fn eval(self, r: f64, x: f64) -> f64 {
        if r < 1.0 || r > x {
            return 0.0;
        }
        match self {
            Self::Sharp => 1.0,
            Self::LogRamp if x > 1.0 => (x / r).ln() / x.ln(),
            Self::LogRamp => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MollifierSupport {
    /// `1 ≤ r ≤ X`.
    Full { x: f64 },
    /// `X_A ≤ r ≤ 2X_A`.
    Dyadic { x_a: f64 },
}

impl MollifierSupport {
    pub fn contains(&self, r: u64) -> bool {
        let r = r as f64;
        match *self {
            Self::Full { x } => (1.0..=x).contains(&r),
            Self::Dyadic { x_a } => (x_a..=2.0 * x_a).contains(&r),
        }
    }

    pub fn upper(&self) -> u64 {
        match *self {
            Self::Full { x } => x.floor() as u64,
            Self::Dyadic { x_a } => (2.0 * x_a).floor() as u64,
        }
    }
}

/// `ρ(r)` on a finite support, stored densely (`values[r - 1] = ρ(r)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollifierCoefficients {
    values: Vec<f64>,
    support: MollifierSupport,
    bound_exponent: f64,
}

impl MollifierCoefficients {
    /// `ρ(1) = 1` and nothing else.
    pub fn unit() -> Self {
        Self {
            values: vec![1.0],
            support: MollifierSupport::Full { x: 1.0 },
            bound_exponent: 0.0,
        }
    }

    /// Arbitrary `ρ(r)`, `1 ≤ r ≤ values.len()`.
    pub fn from_values(values: Vec<f64>, bound_exponent: f64) -> Self {
        let x = values.len().max(1) as f64;
        Self {
            values,
            support: MollifierSupport::Full { x },
            bound_exponent,
        }
    }

    pub fn support(&self) -> MollifierSupport {
        self.support
    }

    pub fn bound_exponent(&self) -> f64 {
        self.bound_exponent
    }

    /// Largest `r` in the support.
    pub fn len(&self) -> u64 {
        self.values.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn get(&self, r: u64) -> f64 {
        if r == 0 {
            return 0.0;
        }
        self.values.get(r as usize - 1).copied().unwrap_or(0.0)
    }

    /// `(r, ρ(r))` for every `r` with `ρ(r) ≠ 0`.
    pub fn nonzero(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u64 + 1, *v))
    }

    /// The restriction to the dyadic segment `[x_a, 2x_a]`.
    pub fn dyadic_piece(&self, x_a: f64) -> Self {
        let support = MollifierSupport::Dyadic { x_a };
        let values = (1..=self.len())
            .map(|r| if support.contains(r) { self.get(r) } else { 0.0 })
            .collect();
        Self {
            values,
            support,
            bound_exponent: self.bound_exponent,
        }
    }

    /// Whether `|ρ(r)| ≤ τ(r)^A` everywhere.
    pub fn satisfies_bound(&self) -> bool {
        self.nonzero().all(|(r, v)| {
            v.abs() <= (arith::divisor_power(r, 2) as f64).powf(self.bound_exponent) * (1.0 + 1e-12)
        })
    }

    /// `ρ(r)` with `r^{-α}` folded in.
    pub fn shifted(&self, alpha: f64) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| v * ((i + 1) as f64).powf(-alpha))
            .collect();
        Self {
            values,
            support: self.support,
            bound_exponent: self.bound_exponent,
        }
    }
}

/// `ρ(r) = μ(r) w(r)` on `[1, X]`.
pub fn mollifier_mu_w(x: f64, w: MollifierWeight) -> Result<MollifierCoefficients, CoeffError> {
    if !(x >= 1.0 && x.is_finite()) {
        return Err(CoeffError::BadLength(x));
    }
    let values = (1..=x.floor() as u64)
        .map(|r| f64::from(arith::mobius(r)) * w.eval(r as f64, x))
        .collect();
    Ok(MollifierCoefficients {
        values,
        support: MollifierSupport::Full { x },
        bound_exponent: 0.0,
    })
}

/// Where a sequence came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Built {
        lambda: LCoefficients,
        rho: MollifierCoefficients,
        /// Real shift `α` in `λ(l) l^{-α}`, `ρ(r) r^{-α}`.
        shift: f64,
    },
    Free,
}

/// `a_m` for `1 ≤ m ≤ N`, stored densely (`values[m - 1] = a_m`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSequence {
    values: Vec<f64>,
    provenance: Provenance,
}

impl CoefficientSequence {
    pub fn free(values: Vec<f64>) -> Self {
        Self {
            values,
            provenance: Provenance::Free,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::free(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, m: u64) -> f64 {
        if m == 0 {
            return 0.0;
        }
        self.values.get(m as usize - 1).copied().unwrap_or(0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// `(λ, ρ)` when the sequence was built.
    pub fn factors(&self) -> Option<(&LCoefficients, &MollifierCoefficients)> {
        match &self.provenance {
            Provenance::Built { lambda, rho, .. } => Some((lambda, rho)),
            Provenance::Free => None,
        }
    }

    /// `Σ_m |a_m|²`.
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// `s·self + t·other`, as a free sequence.
    pub fn combine(&self, s: f64, other: &Self, t: f64) -> Result<Self, CoeffError> {
        if self.len() != other.len() {
            return Err(CoeffError::LengthMismatch(self.len(), other.len()));
        }
        Ok(Self::free(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| s * a + t * b)
                .collect(),
        ))
    }

    /// Whether `|a_m| √m ≤ τ(m)^A` for every `m`.
    pub fn satisfies_growth(&self, a: f64) -> bool {
        self.values.iter().enumerate().all(|(i, v)| {
            let m = i as u64 + 1;
            v.abs() * (m as f64).sqrt() <= (arith::divisor_power(m, 2) as f64).powf(a) * (1.0 + 1e-12)
        })
    }
}

/// `a_m = m^{-1/2} Σ_{lr=m} λ(l)ρ(r)` for `m ≤ N`.
pub fn build_sequence(
    lambda: &LCoefficients,
    rho: &MollifierCoefficients,
    n: usize,
) -> Result<CoefficientSequence, CoeffError> {
    build_sequence_shifted(lambda, rho, n, 0.0)
}

/// As [`build_sequence`] with `λ(l) l^{-α}` and `ρ(r) r^{-α}`, so that
/// `a_m` picks up `m^{-α}`.
pub fn build_sequence_shifted(
    lambda: &LCoefficients,
    rho: &MollifierCoefficients,
    n: usize,
    alpha: f64,
) -> Result<CoefficientSequence, CoeffError> {
    if n < 2 {
        return Err(CoeffError::ShortSequence(n));
    }
    let mut values = vec![0.0; n];
    for (r, rho_r) in rho.nonzero() {
        let r = r as usize;
        if r > n {
            break;
        }
        for l in 1..=n / r {
            values[l * r - 1] += lambda.value(l as u64) as f64 * rho_r;
        }
    }
    for (i, v) in values.iter_mut().enumerate() {
        *v *= ((i + 1) as f64).powf(-0.5 - alpha);
    }
    Ok(CoefficientSequence {
        values,
        provenance: Provenance::Built {
            lambda: *lambda,
            rho: rho.clone(),
            shift: alpha,
        },
    })
}

/// One point of the cancellation scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CancellationPoint {
    pub y: f64,
    /// `|Σ_{r ≤ y} ρ(dr)|`.
    pub partial_sum: f64,
    /// `τ(d) y (log y)^{-C}`.
    pub reference: f64,
    pub ratio: f64,
}

pub fn cancellation_check(rho: &MollifierCoefficients, d: u64, y: f64, c_exp: f64) -> CancellationPoint {
    let partial: f64 = (1..=y.floor() as u64).map(|r| rho.get(d * r)).sum();
    let reference = arith::divisor_power(d, 2) as f64 * y * y.ln().powf(-c_exp);
    CancellationPoint {
        y,
        partial_sum: partial.abs(),
        reference,
        ratio: partial.abs() / reference,
    }
}

/// Fitted constants for the cancellation condition over a grid of `y`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CancellationReport {
    pub d: u64,
    pub c_exp: f64,
    pub points: Vec<CancellationPoint>,
    /// Largest ratio over the grid.
    pub fitted_constant: f64,
    /// Largest ratio on the upper half of the grid over that on the lower half.
    pub growth: f64,
    /// `growth > 2`: the ratios drift upward instead of staying bounded.
    pub violated: bool,
}

/// Geometric grid `2 ≤ y ≤ y_max`; requires `y_max ≥ 2`.
pub fn cancellation_scan(
    rho: &MollifierCoefficients,
    d: u64,
    y_max: f64,
    points: usize,
    c_exp: f64,
) -> CancellationReport {
    let points = points.max(2);
    let ys: Vec<f64> = (0..points)
        .map(|i| 2.0 * (y_max / 2.0).powf(i as f64 / (points - 1) as f64))
        .collect();
    let pts: Vec<CancellationPoint> = ys.iter().map(|&y| cancellation_check(rho, d, y, c_exp)).collect();
    let half = pts.len() / 2;
    let max = |s: &[CancellationPoint]| s.iter().map(|p| p.ratio).fold(0.0, f64::max);
    let lower = max(&pts[..half]);
    let upper = max(&pts[half..]);
    let growth = if lower > 0.0 {
        upper / lower
    } else if upper > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    CancellationReport {
        d,
        c_exp,
        fitted_constant: lower.max(upper),
        growth,
        violated: growth > 2.0,
        points: pts,
    }
}

/// `A_d(s, χ) = Σ_{m ≡ 0 (d), m ≤ N} a_m χ(m/d) m^{1/2 − s}`.
pub fn dirichlet_polynomial_ad(
    seq: &CoefficientSequence,
    d: u64,
    chi: &DirichletCharacter,
    s: Complex64,
) -> Complex64 {
    let mut acc = ComplexNeumaierSum::new();
    let n = seq.len() as u64;
    let mut m = d;
    while m <= n {
        let a = seq.get(m);
        if a != 0.0 {
            let power = ((m as f64).ln() * (Complex64::new(0.5, 0.0) - s)).exp();
            acc.add(chi.evaluate(m / d) * power * a);
        }
        m += d;
    }
    acc.value()
}

/// Coefficients of `P_δ(s) = Σ_l λ(δl) l^{-s} / Σ_l λ(l) l^{-s}` for
/// `l ≤ len`, by formal Dirichlet-series division.
pub fn euler_factor_quotient(lambda: &LCoefficients, delta: u64, len: usize) -> Vec<i64> {
    let mut quotient = vec![0i64; len + 1];
    for l in 1..=len {
        quotient[l] = lambda.value(delta * l as u64);
    }
    // λ(1) = 1, so subtracting q_d λ(l/d) over proper divisors d solves for q_l
    for d in 1..=len {
        let qd = quotient[d];
        if qd == 0 {
            continue;
        }
        for k in 2..=len / d {
            quotient[d * k] -= qd * lambda.value(k as u64);
        }
    }
    quotient.remove(0);
    quotient
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EulerFactorReport {
    pub degree: u32,
    pub delta: u64,
    pub truncation: usize,
    /// Nonzero quotient coefficients `(l, p_l)`.
    pub support: Vec<(u64, i64)>,
    /// `l` with `p_l ≠ 0` and a prime factor not dividing `δ`.
    pub violations: Vec<u64>,
    /// `max_t |P_δ(it, χ)|` over the sampled `t`.
    pub sup_on_line: f64,
    /// `sup_on_line / τ(δ)^{2g}`.
    pub bound_ratio: f64,
}

/// Checks that `P_δ(s, χ)` is a finite Euler-factor correction at primes
/// dividing `δ` and samples its size on `Re s = 0`. Twisting by `χ`
/// commutes with the division, so `P_δ(s, χ) = Σ p_l χ(l) l^{-s}`.
pub fn euler_factor_check(
    lambda: &LCoefficients,
    delta: u64,
    chi: &DirichletCharacter,
    truncation: usize,
) -> Result<EulerFactorReport, CoeffError> {
    let q = euler_factor_quotient(lambda, delta, truncation);
    let delta_primes: Vec<u64> = arith::factor(delta)?.primes().collect();
    let mut support = Vec::new();
    let mut violations = Vec::new();
    for (i, &p) in q.iter().enumerate() {
        if p == 0 {
            continue;
        }
        let l = i as u64 + 1;
        support.push((l, p));
        let mut rest = l;
        for &pr in &delta_primes {
            while rest % pr == 0 {
                rest /= pr;
            }
        }
        if rest != 1 {
            violations.push(l);
        }
    }
    let mut sup = 0.0f64;
    for i in 0..=256 {
        let t = -50.0 + 100.0 * i as f64 / 256.0;
        let mut acc = ComplexNeumaierSum::new();
        for &(l, p) in &support {
            let phase = Complex64::from_polar(1.0, -t * (l as f64).ln());
            acc.add(chi.evaluate(l) * phase * p as f64);
        }
        sup = sup.max(acc.value().norm());
    }
    let bound = (arith::divisor_power(delta, 2) as f64).powi(2 * lambda.degree() as i32);
    Ok(EulerFactorReport {
        degree: lambda.degree(),
        delta,
        truncation,
        support,
        violations,
        sup_on_line: sup,
        bound_ratio: sup / bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characters::CharacterGroup;
    use proptest::prelude::*;

    fn principal() -> DirichletCharacter {
        CharacterGroup::new(1).unwrap().principal()
    }

    #[test]
    fn unit_mollifier_gives_lambda() {
        let z1 = LCoefficients::zeta_power(1).unwrap();
        let s = build_sequence(&z1, &MollifierCoefficients::unit(), 30).unwrap();
        for m in 1..=30u64 {
            assert!((s.get(m) - 1.0 / (m as f64).sqrt()).abs() < 1e-15);
        }
        let z2 = LCoefficients::zeta_power(2).unwrap();
        let s = build_sequence(&z2, &MollifierCoefficients::unit(), 30).unwrap();
        assert!((s.get(6) - 4.0 / 6f64.sqrt()).abs() < 1e-15);
        assert!(LCoefficients::zeta_power(4).is_err());
        assert!(build_sequence(&z1, &MollifierCoefficients::unit(), 1).is_err());
    }

    #[test]
    fn sharp_mobius_mollifier_kills_small_primes() {
        let z1 = LCoefficients::zeta_power(1).unwrap();
        let rho = mollifier_mu_w(10.0, MollifierWeight::Sharp).unwrap();
        let s = build_sequence(&z1, &rho, 200).unwrap();
        assert_eq!(s.get(1), 1.0);
        for p in [2u64, 3, 5, 7] {
            assert_eq!(s.get(p), 0.0);
        }
        // a_m √m = Σ_{r | m, r ≤ 10} μ(r), computed directly
        for m in 1..=200u64 {
            let direct: i64 = (1..=10u64).filter(|r| m % r == 0).map(|r| i64::from(arith::mobius(r))).sum();
            assert!((s.get(m) * (m as f64).sqrt() - direct as f64).abs() < 1e-12, "m = {m}");
        }
    }

    #[test]
    fn log_ramp_weight() {
        let rho = mollifier_mu_w(100.0, MollifierWeight::LogRamp).unwrap();
        assert_eq!(rho.get(1), 1.0);
        assert_eq!(rho.get(4), 0.0);
        assert!((rho.get(7) + (100f64 / 7.0).ln() / 100f64.ln()).abs() < 1e-15);
        assert_eq!(rho.get(100), 0.0);
        assert_eq!(rho.get(101), 0.0);
        assert!(rho.satisfies_bound());
        let piece = rho.dyadic_piece(8.0);
        assert_eq!(piece.get(7), 0.0);
        assert_eq!(piece.get(11), rho.get(11));
        assert_eq!(piece.get(17), 0.0);
    }

    #[test]
    fn dyadic_pieces_reassemble() {
        let z1 = LCoefficients::zeta_power(1).unwrap();
        let rho = mollifier_mu_w(60.0, MollifierWeight::LogRamp).unwrap();
        let whole = build_sequence(&z1, &rho, 300).unwrap();
        let mut sum = CoefficientSequence::zeros(300);
        // [1,1], [2,3], [4,7], ... as half-open pieces of [x, 2x]
        let mut x = 1.0;
        while x <= 60.0 {
            let mut piece = rho.dyadic_piece(x);
            if 2.0 * x <= 60.0 {
                let top = (2.0 * x) as usize;
                piece.values[top - 1] = 0.0;
            }
            sum = sum.combine(1.0, &build_sequence(&z1, &piece, 300).unwrap(), 1.0).unwrap();
            x *= 2.0;
        }
        for m in 1..=300 {
            assert!((sum.get(m) - whole.get(m)).abs() < 1e-14);
        }
    }

    #[test]
    fn cancellation_scan_flags_constant_rho() {
        let ones = MollifierCoefficients::from_values(vec![1.0; 4000], 0.0);
        let r = cancellation_scan(&ones, 1, 4000.0, 12, 1.0);
        assert!(r.violated, "{r:?}");
        let mu = mollifier_mu_w(4000.0, MollifierWeight::LogRamp).unwrap();
        let r = cancellation_scan(&mu, 1, 2000.0, 12, 1.0);
        assert!(!r.violated, "{r:?}");
        // square factor: every μ(4r) vanishes
        let r = cancellation_check(&mu, 4, 500.0, 1.0);
        assert_eq!(r.partial_sum, 0.0);
    }

    #[test]
    fn dirichlet_polynomial_matches_direct_sum() {
        let z1 = LCoefficients::zeta_power(1).unwrap();
        let rho = mollifier_mu_w(5.0, MollifierWeight::LogRamp).unwrap();
        let s = build_sequence(&z1, &rho, 60).unwrap();
        let g = CharacterGroup::new(7).unwrap();
        let chi = g.characters().nth(2).unwrap();
        let sv = Complex64::new(0.5, 1.0);
        let v = dirichlet_polynomial_ad(&s, 2, &chi, sv);
        let mut direct = Complex64::new(0.0, 0.0);
        for k in 1..=30u64 {
            let m = 2 * k;
            direct += chi.evaluate(k) * s.get(m) * Complex64::new(m as f64, 0.0).powc(Complex64::new(0.0, -1.0));
        }
        assert!((v - direct).norm() < 1e-13);
        assert_eq!(dirichlet_polynomial_ad(&s, 61, &chi, sv), Complex64::new(0.0, 0.0));
        let total = dirichlet_polynomial_ad(&s, 1, &principal(), Complex64::new(0.5, 0.0));
        assert!((total.re - s.values().iter().sum::<f64>()).abs() < 1e-12);
    }

    /// `Σ_j τ_g(p^{a+j}) x^j · (1 − x)^g` as a polynomial in `x`.
    fn local_correction(g: u32, a: u32) -> Vec<i64> {
        let binom = |n: u64, k: u64| -> i64 {
            let mut r = 1i64;
            for i in 0..k {
                r = r * (n - i) as i64 / (i + 1) as i64;
            }
            r
        };
        let terms = 12usize;
        let series: Vec<i64> = (0..terms as u64).map(|j| binom(a as u64 + j + g as u64 - 1, g as u64 - 1)).collect();
        let mut poly = series;
        for _ in 0..g {
            let mut next = poly.clone();
            for j in 1..terms {
                next[j] -= poly[j - 1];
            }
            poly = next;
        }
        poly.truncate(g as usize);
        poly
    }

    #[test]
    fn quotient_matches_local_polynomials() {
        for g in 1..=3u32 {
            let lambda = LCoefficients::zeta_power(g).unwrap();
            for delta in [1u64, 2, 4, 6, 12, 30] {
                let q = euler_factor_quotient(&lambda, delta, 2000);
                // product over p^a || δ of the local polynomials in p^{-s}
                let mut expect = vec![0i64; 2001];
                expect[1] = 1;
                for &(p, a) in arith::factor(delta).unwrap().factors() {
                    let poly = local_correction(g, a);
                    let mut next = vec![0i64; 2001];
                    for (l, &c) in expect.iter().enumerate() {
                        if c == 0 {
                            continue;
                        }
                        let mut pk = 1u64;
                        for &coef in &poly {
                            let idx = l as u64 * pk;
                            if idx <= 2000 {
                                next[idx as usize] += c * coef;
                            }
                            pk *= p;
                        }
                    }
                    expect = next;
                }
                assert_eq!(&q[..], &expect[1..], "g = {g}, δ = {delta}");
            }
        }
    }

    #[test]
    fn euler_factor_examples() {
        let z1 = LCoefficients::zeta_power(1).unwrap();
        let r = euler_factor_check(&z1, 1, &principal(), 1000).unwrap();
        assert_eq!(r.support, vec![(1, 1)]);
        let r = euler_factor_check(&z1, 7, &principal(), 1000).unwrap();
        assert_eq!(r.support, vec![(1, 1)]);
        let z2 = LCoefficients::zeta_power(2).unwrap();
        let r = euler_factor_check(&z2, 2, &principal(), 10_000).unwrap();
        assert!(r.violations.is_empty());
        assert!(r.support.iter().all(|(l, _)| l.is_power_of_two()));
        assert!(r.bound_ratio <= 1.0);
    }

    proptest! {
        #[test]
        fn built_sequences_obey_growth(g in 1u32..=3, x in 1.0f64..40.0, n in 2usize..400) {
            let lambda = LCoefficients::zeta_power(g).unwrap();
            let rho = mollifier_mu_w(x, MollifierWeight::LogRamp).unwrap();
            let s = build_sequence(&lambda, &rho, n).unwrap();
            prop_assert!(s.satisfies_growth(f64::from(g + 1)));
        }

        #[test]
        fn build_is_linear_in_rho(
            x in proptest::collection::vec(-1.0f64..1.0, 1..20),
            y in proptest::collection::vec(-1.0f64..1.0, 1..20),
            s in -2.0f64..2.0,
        ) {
            let len = x.len().max(y.len());
            let mut xv = x.clone(); xv.resize(len, 0.0);
            let mut yv = y.clone(); yv.resize(len, 0.0);
            let zv: Vec<f64> = xv.iter().zip(&yv).map(|(a, b)| s * a + b).collect();
            let lambda = LCoefficients::zeta_power(2).unwrap();
            let build = |v: Vec<f64>| build_sequence(&lambda, &MollifierCoefficients::from_values(v, 1.0), 80).unwrap();
            let lhs = build(zv);
            let rhs = build(xv).combine(s, &build(yv), 1.0).unwrap();
            for m in 1..=80 {
                prop_assert!((lhs.get(m) - rhs.get(m)).abs() < 1e-12);
            }
        }

        #[test]
        fn quotient_support_divides_delta(g in 1u32..=3, delta in 1u64..=30) {
            let lambda = LCoefficients::zeta_power(g).unwrap();
            let r = euler_factor_check(&lambda, delta, &principal(), 500).unwrap();
            prop_assert!(r.violations.is_empty());
        }
    }
}
