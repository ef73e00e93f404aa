//! Smooth cutoffs, test functions and the integral transforms built on them.

use std::f64::consts::LN_2;
use std::sync::OnceLock;

use num_complex::Complex64;
use thiserror::Error;

use crate::numerics::{integrate, integrate_pieces, NeumaierSum, QuadratureError, Tolerance};

/// Default accuracy for the remainder integrals.
pub const DEFAULT_TOLERANCE: Tolerance = Tolerance::new(1e-10, 1e-8);

/// Accuracy used when caching `Ψ̄` and `Ψ̂(0)`.
const MOMENT_TOLERANCE: Tolerance = Tolerance::new(1e-15, 1e-14);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("support [{lo}, {hi}] must satisfy 0 < lo < hi")]
    BadSupport { lo: f64, hi: f64 },
    #[error("test-function size N = {0} is too small (need N ≥ 4)")]
    SmallN(f64),
    #[error("parameter {name} = {value} is out of range")]
    BadParameter { name: &'static str, value: f64 },
}

/// `Ψ(x) = exp(c₀ − 1/h(x))` with `h = (x − lo)(hi − x)`, normalized to peak 1.
#[derive(Debug, Clone)]
pub struct SmoothCutoff {
    lo: f64,
    hi: f64,
    c0: f64,
    mean: f64,
    mellin_at_zero: f64,
}

impl SmoothCutoff {
    pub fn bump(lo: f64, hi: f64) -> Result<Self, WeightError> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(WeightError::BadSupport { lo, hi });
        }
        let half = 0.5 * (hi - lo);
        let mut psi = Self {
            lo,
            hi,
            c0: 1.0 / (half * half),
            mean: 0.0,
            mellin_at_zero: 0.0,
        };
        psi.mean = integrate(|x| psi.eval(x), lo, hi, MOMENT_TOLERANCE)?.value;
        psi.mellin_at_zero = integrate(|x| psi.eval(x) / x, lo, hi, MOMENT_TOLERANCE)?.value;
        Ok(psi)
    }

    /// The bump on `[1, 2]`.
    pub fn standard() -> &'static SmoothCutoff {
        static STANDARD: OnceLock<SmoothCutoff> = OnceLock::new();
        STANDARD.get_or_init(|| SmoothCutoff::bump(1.0, 2.0).expect("valid support"))
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// `Ψ̄ = ∫Ψ`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `Ψ̂(0) = ∫Ψ(t) t⁻¹ dt`.
    pub fn mellin_at_zero(&self) -> f64 {
        self.mellin_at_zero
    }

    #[inline]
    fn h(&self, x: f64) -> f64 {
        (x - self.lo) * (self.hi - x)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.lo || x >= self.hi {
            return 0.0;
        }
        (self.c0 - 1.0 / self.h(x)).exp()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let v = self.eval(x);
        if v == 0.0 {
            return 0.0;
        }
        let h = self.h(x);
        let dh = self.lo + self.hi - 2.0 * x;
        v * dh / (h * h)
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let v = self.eval(x);
        if v == 0.0 {
            return 0.0;
        }
        let h = self.h(x);
        let dh = self.lo + self.hi - 2.0 * x;
        let h2 = h * h;
        v * (dh * dh / (h2 * h2) - 2.0 / h2 - 2.0 * dh * dh / (h2 * h))
    }

    /// `Ω(x) = (xΨ(x))′`.
    pub fn omega(&self, x: f64) -> f64 {
        self.eval(x) + x * self.derivative(x)
    }

    pub fn omega_kernel(&self) -> OmegaKernel<'_> {
        OmegaKernel { base: self }
    }

    /// `Ψ₂(T) = ∫(t⁻¹Ψ(t))′ {tT} dt`.
    pub fn psi2(&self, t: f64) -> Result<f64, WeightError> {
        self.psi2_with(t, DEFAULT_TOLERANCE)
    }

    pub fn psi2_with(&self, t: f64, tol: Tolerance) -> Result<f64, WeightError> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(WeightError::BadParameter { name: "T", value: t });
        }
        let g = |s: f64| -self.eval(s) / (s * s) + self.derivative(s) / s;
        let first = (self.lo * t).floor() as i64 + 1;
        let last = (self.hi * t).ceil() as i64 - 1;
        let mut breaks = vec![self.lo];
        breaks.extend((first..=last).map(|j| j as f64 / t).filter(|&b| b > self.lo && b < self.hi));
        breaks.push(self.hi);
        let mut total = NeumaierSum::new();
        // the result scales like min(1, T)
        let share = tol.abs * t.min(1.0) / (breaks.len() - 1) as f64;
        for w in breaks.windows(2) {
            let j = (0.5 * (w[0] + w[1]) * t).floor();
            let piece = integrate(|s| g(s) * (s * t - j), w[0], w[1], Tolerance::new(share, tol.rel))?;
            total.add(piece.value);
        }
        Ok(total.value())
    }

    /// `|Ψ₂(T)| / min(1, T)`, the constant in `Ψ₂(T) ≪ min(1, T)`.
    pub fn psi2_bound_constant(&self, t: f64) -> Result<f64, WeightError> {
        Ok(self.psi2(t)?.abs() / t.min(1.0))
    }

    /// `Ψ₁(T) = −T⁻¹ ∫ Ω(x) {T/x} dx`, normalized so that
    /// `Σ_{l≥1} l⁻¹Ψ(T/l) = Ψ̂(0) + Ψ₁(T)`.
    pub fn psi1(&self, t: f64) -> Result<f64, WeightError> {
        self.psi1_with(t, DEFAULT_TOLERANCE)
    }

    pub fn psi1_with(&self, t: f64, tol: Tolerance) -> Result<f64, WeightError> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(WeightError::BadParameter { name: "T", value: t });
        }
        // {T/x} jumps where T/x is an integer j, i.e. at x = T/j
        let j_lo = (t / self.hi).floor() as i64 + 1;
        let j_hi = (t / self.lo).ceil() as i64 - 1;
        let mut breaks = vec![self.lo];
        let mut inner: Vec<f64> = (j_lo.max(1)..=j_hi)
            .map(|j| t / j as f64)
            .filter(|&b| b > self.lo && b < self.hi)
            .collect();
        inner.reverse();
        breaks.extend(inner);
        breaks.push(self.hi);
        let mut total = NeumaierSum::new();
        let share = tol.abs * t / (breaks.len() - 1) as f64;
        for w in breaks.windows(2) {
            let j = (t / (0.5 * (w[0] + w[1]))).floor();
            let piece = integrate(
                |x| self.omega(x) * (t / x - j),
                w[0],
                w[1],
                Tolerance::new(share, tol.rel),
            )?;
            total.add(piece.value);
        }
        Ok(-total.value() / t)
    }
}

/// `Ω(x) = (xΨ(x))′` for a given cutoff.
#[derive(Debug, Clone, Copy)]
pub struct OmegaKernel<'a> {
    base: &'a SmoothCutoff,
}

impl OmegaKernel<'_> {
    pub fn base(&self) -> &SmoothCutoff {
        self.base
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.base.omega(x)
    }
}

/// A `C¹` function with compact support in `(0, ∞)`.
pub trait CompactFunction {
    fn support(&self) -> (f64, f64);
    fn value(&self, t: f64) -> f64;
    fn derivative(&self, t: f64) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroFunction;

impl CompactFunction for ZeroFunction {
    fn support(&self) -> (f64, f64) {
        (1.0, 2.0)
    }
    fn value(&self, _: f64) -> f64 {
        0.0
    }
    fn derivative(&self, _: f64) -> f64 {
        0.0
    }
}

/// `t ↦ Ψ(t/L)`.
#[derive(Debug, Clone, Copy)]
pub struct Dilated<'a> {
    pub psi: &'a SmoothCutoff,
    pub scale: f64,
}

impl CompactFunction for Dilated<'_> {
    fn support(&self) -> (f64, f64) {
        let (lo, hi) = self.psi.support();
        (lo * self.scale, hi * self.scale)
    }
    fn value(&self, t: f64) -> f64 {
        self.psi.eval(t / self.scale)
    }
    fn derivative(&self, t: f64) -> f64 {
        self.psi.derivative(t / self.scale) / self.scale
    }
}

/// `t ↦ t⁻¹Ψ(t/L)`.
#[derive(Debug, Clone, Copy)]
pub struct ReciprocalDilated<'a> {
    pub psi: &'a SmoothCutoff,
    pub scale: f64,
}

impl CompactFunction for ReciprocalDilated<'_> {
    fn support(&self) -> (f64, f64) {
        let (lo, hi) = self.psi.support();
        (lo * self.scale, hi * self.scale)
    }
    fn value(&self, t: f64) -> f64 {
        self.psi.eval(t / self.scale) / t
    }
    fn derivative(&self, t: f64) -> f64 {
        let s = t / self.scale;
        -self.psi.eval(s) / (t * t) + self.psi.derivative(s) / (self.scale * t)
    }
}

/// `|Σ_{l≥1} f(l) − ∫[f(t) + {t}f′(t)]dt|`.
pub fn euler_maclaurin_check<F: CompactFunction>(f: &F) -> Result<f64, WeightError> {
    let (lo, hi) = f.support();
    let first = lo.ceil().max(1.0) as u64;
    let last = hi.floor() as u64;
    let sum: NeumaierSum = (first..=last).map(|l| f.value(l as f64)).collect();
    let mut breaks = vec![lo];
    breaks.extend((first..=last).map(|l| l as f64).filter(|&b| b > lo && b < hi));
    breaks.push(hi);
    let mut integral = NeumaierSum::new();
    for w in breaks.windows(2) {
        let j = (0.5 * (w[0] + w[1])).floor();
        let piece = integrate(
            |t| f.value(t) + (t - j) * f.derivative(t),
            w[0],
            w[1],
            Tolerance::new(1e-13, 1e-13),
        )?;
        integral.add(piece.value);
    }
    Ok((sum.value() - integral.value()).abs())
}

/// Smooth step `σ` on `[0, 1]` with its first two derivatives.
#[derive(Debug, Clone, Copy)]
pub struct SmoothStep;

impl SmoothStep {
    fn f(t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            (-1.0 / t).exp()
        }
    }

    pub fn value(t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if t >= 1.0 {
            1.0
        } else {
            let a = Self::f(t);
            a / (a + Self::f(1.0 - t))
        }
    }

    /// `(σ, σ′, σ″)` at `t`.
    pub fn jet(t: f64) -> (f64, f64, f64) {
        if t <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        if t >= 1.0 {
            return (1.0, 0.0, 0.0);
        }
        let s = 1.0 - t;
        let a = Self::f(t);
        let b = Self::f(s);
        let da = a / (t * t);
        let db = -b / (s * s);
        let dda = a * (1.0 / t.powi(4) - 2.0 / t.powi(3));
        let ddb = b * (1.0 / s.powi(4) - 2.0 / s.powi(3));
        let d = a + b;
        let num = da * b - a * db;
        let dnum = dda * b - a * ddb;
        let dd = da + db;
        (a / d, num / (d * d), dnum / (d * d) - 2.0 * num * dd / (d * d * d))
    }
}

/// A test function `F(x, y)` supported in `[1, N]²`.
pub trait TestFunction: Send + Sync {
    fn eval(&self, x: f64, y: f64) -> f64;

    /// Side of the support box.
    fn size(&self) -> f64;

    /// Highest order `r` with `x^i y^j |∂^{ij}F| ≪ 1` for `i, j ≤ r`.
    fn derivative_bound_order(&self) -> u32 {
        2
    }

    /// Points in `log x` (equally `log y`) where the function changes regime.
    fn log_breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// `s(z)` for the default test function: a ramp up on `[1/N, 2/N]`, flat,
/// and a ramp down on `[1/2, 1]`, both smooth steps in `log z`.
#[derive(Debug, Clone, Copy)]
struct Ramp {
    n: f64,
}

impl Ramp {
    /// `(s, x s′, x² s″)` at `x` (in the unscaled variable `x = N z`).
    fn jet(&self, x: f64) -> (f64, f64, f64) {
        if x <= 1.0 || x >= self.n {
            return (0.0, 0.0, 0.0);
        }
        if x < 2.0 {
            let (s, d1, d2) = SmoothStep::jet(x.ln() / LN_2);
            (s, d1 / LN_2, d2 / (LN_2 * LN_2) - d1 / LN_2)
        } else if 2.0 * x > self.n {
            let (s, d1, d2) = SmoothStep::jet((self.n / x).ln() / LN_2);
            (s, -d1 / LN_2, d2 / (LN_2 * LN_2) + d1 / LN_2)
        } else {
            (1.0, 0.0, 0.0)
        }
    }
}

/// `F(x, y) = κ s(x/N) s(y/N)` with `κ` chosen so that every
/// `x^i y^j |∂^{ij}F|`, `i, j ≤ 2`, is at most 1.
#[derive(Debug, Clone, Copy)]
pub struct RampTestFunction {
    ramp: Ramp,
    kappa: f64,
}

impl RampTestFunction {
    pub fn new(n: f64) -> Result<Self, WeightError> {
        if !(n >= 4.0 && n.is_finite()) {
            return Err(WeightError::SmallN(n));
        }
        Ok(Self {
            ramp: Ramp { n },
            kappa: ramp_kappa(),
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `x^i y^j ∂^{ij}F` for `i, j ≤ 2`, analytically.
    pub fn scaled_partial(&self, i: usize, j: usize, x: f64, y: f64) -> f64 {
        let jx = self.ramp.jet(x);
        let jy = self.ramp.jet(y);
        let pick = |jet: (f64, f64, f64), k: usize| match k {
            0 => jet.0,
            1 => jet.1,
            _ => jet.2,
        };
        self.kappa * pick(jx, i) * pick(jy, j)
    }
}

fn ramp_kappa() -> f64 {
    static KAPPA: OnceLock<f64> = OnceLock::new();
    *KAPPA.get_or_init(|| {
        let steps = 200_000;
        let mut m1 = 0.0f64;
        let mut m2 = 0.0f64;
        for i in 1..steps {
            let (_, d1, d2) = SmoothStep::jet(i as f64 / steps as f64);
            m1 = m1.max(d1.abs() / LN_2);
            m2 = m2
                .max((d2 / (LN_2 * LN_2) - d1 / LN_2).abs())
                .max((d2 / (LN_2 * LN_2) + d1 / LN_2).abs());
        }
        // grid maxima of smooth functions are within 1e-9 of the supremum
        let m = 1.0f64.max(m1).max(m2) * (1.0 + 1e-6);
        1.0 / (m * m)
    })
}

impl TestFunction for RampTestFunction {
    fn eval(&self, x: f64, y: f64) -> f64 {
        self.kappa * self.ramp.jet(x).0 * self.ramp.jet(y).0
    }

    fn size(&self) -> f64 {
        self.ramp.n
    }

    fn log_breakpoints(&self) -> Vec<f64> {
        vec![LN_2, (self.ramp.n / 2.0).ln()]
    }
}

/// The default test function times smooth windows restricting
/// `|log(x/y)| ≤ δ log Q` and `xy ≤ P`.
#[derive(Debug, Clone, Copy)]
pub struct LocalizedTestFunction {
    base: RampTestFunction,
    ratio_limit: f64,
    product_limit: f64,
}

impl LocalizedTestFunction {
    /// `ratio_limit = δ log Q`, `product_limit = log P`. Each window is 1
    /// up to `limit − ln 2` and vanishes beyond `limit`.
    pub fn new(n: f64, ratio_limit: f64, product_limit: f64) -> Result<Self, WeightError> {
        if !(ratio_limit > LN_2) {
            return Err(WeightError::BadParameter {
                name: "ratio_limit",
                value: ratio_limit,
            });
        }
        if !(product_limit > LN_2) {
            return Err(WeightError::BadParameter {
                name: "product_limit",
                value: product_limit,
            });
        }
        Ok(Self {
            base: RampTestFunction::new(n)?,
            ratio_limit,
            product_limit,
        })
    }

    fn window(v: f64, limit: f64) -> f64 {
        SmoothStep::value((limit - v) / LN_2)
    }
}

impl TestFunction for LocalizedTestFunction {
    fn eval(&self, x: f64, y: f64) -> f64 {
        let base = self.base.eval(x, y);
        if base == 0.0 {
            return 0.0;
        }
        let r = (x / y).ln().abs();
        let p = (x * y).ln();
        base * Self::window(r, self.ratio_limit) * Self::window(p, self.product_limit)
    }

    fn size(&self) -> f64 {
        self.base.size()
    }

    fn derivative_bound_order(&self) -> u32 {
        // smooth in log coordinates to all orders
        u32::MAX
    }

    fn log_breakpoints(&self) -> Vec<f64> {
        self.base.log_breakpoints()
    }
}

/// Central-difference estimate of `max_{i,j≤2} x^i y^j |∂^{ij}F|` over a
/// logarithmic grid of `points × points` in `[1, N]²`.
pub fn sampled_derivative_bound<F: TestFunction + ?Sized>(f: &F, points: usize) -> f64 {
    let ln_n = f.size().ln();
    let h = 1e-3;
    let mut worst = 0.0f64;
    for a in 0..points {
        for b in 0..points {
            let s = ln_n * (a as f64 + 0.5) / points as f64;
            let t = ln_n * (b as f64 + 0.5) / points as f64;
            let g = |ds: i32, dt: i32| f.eval((s + ds as f64 * h).exp(), (t + dt as f64 * h).exp());
            // log-coordinate derivatives D^k, k ≤ 2, then x²∂² = D² − D
            let mut d = [[0.0; 3]; 3];
            let w1 = [-0.5 / h, 0.0, 0.5 / h];
            let w2 = [1.0 / (h * h), -2.0 / (h * h), 1.0 / (h * h)];
            let w0 = [0.0, 1.0, 0.0];
            let ws = [w0, w1, w2];
            let vals: Vec<Vec<f64>> = (-1..=1).map(|i| (-1..=1).map(|j| g(i, j)).collect()).collect();
            for (i, wi) in ws.iter().enumerate() {
                for (j, wj) in ws.iter().enumerate() {
                    let mut acc = 0.0;
                    for p in 0..3 {
                        for q in 0..3 {
                            acc += wi[p] * wj[q] * vals[p][q];
                        }
                    }
                    d[i][j] = acc;
                }
            }
            let lift = |row: [f64; 3]| [row[0], row[1], row[2] - row[1]];
            let rows: Vec<[f64; 3]> = d.iter().map(|r| lift(*r)).collect();
            for j in 0..3 {
                let col = lift([rows[0][j], rows[1][j], rows[2][j]]);
                for v in col {
                    worst = worst.max(v.abs());
                }
            }
        }
    }
    worst
}

/// `G(x, y) = exp(−(log x)²) exp(−y)`.
#[derive(Debug, Clone, Copy)]
pub struct SpecialTestFunction {
    /// Decay exponent `c` to certify.
    pub decay_c: f64,
    /// Log-power `A` in the derivative bound; unused by this `G`.
    pub decay_a: f64,
}

impl Default for SpecialTestFunction {
    fn default() -> Self {
        Self {
            decay_c: 4.0,
            decay_a: 1.0,
        }
    }
}

impl SpecialTestFunction {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let l = x.ln();
        (-l * l - y).exp()
    }

    /// `x^a y^b ∂^{ab}G` for `a, b ∈ {0, 1}`.
    pub fn scaled_partial(&self, a: usize, b: usize, x: f64, y: f64) -> f64 {
        let mut v = self.eval(x, y);
        if a == 1 {
            v *= -2.0 * x.ln();
        }
        if b == 1 {
            v *= -y;
        }
        v
    }

    /// Sampled constant in
    /// `x^a y^b |∂^{ab}G| ≤ c₀ (1 + |log x|)^{−c} (1 + y)^{−c}`.
    pub fn decay_constant(&self) -> f64 {
        let c = self.decay_c;
        let mut worst = 0.0f64;
        for i in 0..=400 {
            let lx = -20.0 + 40.0 * i as f64 / 400.0;
            for j in 0..=400 {
                let y = 60.0 * j as f64 / 400.0;
                let weight = (1.0 + lx.abs()).powf(c) * (1.0 + y).powf(c);
                for a in 0..2 {
                    for b in 0..2 {
                        worst = worst.max(self.scaled_partial(a, b, lx.exp(), y).abs() * weight);
                    }
                }
            }
        }
        worst
    }
}

/// `F̂(iu, iv) = ∬ F(x, y) x^{iu−1} y^{iv−1} dx dy`.
pub fn mellin_transform<F: TestFunction + ?Sized>(
    f: &F,
    u: f64,
    v: f64,
    tol: Tolerance,
) -> Result<Complex64, WeightError> {
    let ln_n = f.size().ln();
    let mut breaks = vec![0.0];
    breaks.extend(f.log_breakpoints().into_iter().filter(|&b| b > 0.0 && b < ln_n));
    breaks.push(ln_n);
    breaks.sort_by(f64::total_cmp);
    let inner_tol = Tolerance::new(tol.abs / (10.0 * ln_n.max(1.0)), tol.rel / 10.0);
    let part = |phase: fn(f64) -> f64| -> Result<f64, WeightError> {
        let failure = std::cell::RefCell::new(None);
        let outer = integrate_pieces(
            |s| {
                let xs = s.exp();
                match integrate_pieces(
                    |t| f.eval(xs, t.exp()) * phase(u * s + v * t),
                    &breaks,
                    inner_tol,
                ) {
                    Ok(i) => i.value,
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                        0.0
                    }
                }
            },
            &breaks,
            tol,
        )?;
        if let Some(e) = failure.into_inner() {
            return Err(e.into());
        }
        Ok(outer.value)
    };
    Ok(Complex64::new(part(f64::cos)?, part(f64::sin)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn psi() -> &'static SmoothCutoff {
        SmoothCutoff::standard()
    }

    #[test]
    fn cutoff_shape() {
        let p = psi();
        assert_eq!(p.eval(1.5), 1.0);
        assert_eq!(p.eval(1.0), 0.0);
        assert_eq!(p.eval(2.0), 0.0);
        assert_eq!(p.eval(0.3), 0.0);
        assert_eq!(p.eval(2.7), 0.0);
        assert!(SmoothCutoff::bump(2.0, 1.0).is_err());
        assert!(SmoothCutoff::bump(0.0, 1.0).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = psi();
        let h = 1e-5;
        for i in 1..100 {
            let x = 1.0 + i as f64 / 100.0;
            let fd1 = (p.eval(x + h) - p.eval(x - h)) / (2.0 * h);
            let fd2 = (p.derivative(x + h) - p.derivative(x - h)) / (2.0 * h);
            assert!((fd1 - p.derivative(x)).abs() < 1e-6 * (1.0 + fd1.abs()), "x = {x}");
            assert!((fd2 - p.second_derivative(x)).abs() < 1e-5 * (1.0 + fd2.abs()), "x = {x}");
            let fdo = ((x + h) * p.eval(x + h) - (x - h) * p.eval(x - h)) / (2.0 * h);
            assert!((fdo - p.omega_kernel().eval(x)).abs() < 1e-6 * (1.0 + fdo.abs()));
        }
    }

    #[test]
    fn moments_match_independent_quadrature() {
        // composite Simpson with many panels as the oracle
        let p = psi();
        let n = 200_000;
        let h = 1.0 / n as f64;
        let simpson = |f: &dyn Fn(f64) -> f64| {
            let mut s = f(1.0) + f(2.0);
            for i in 1..n {
                let x = 1.0 + i as f64 * h;
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
            }
            s * h / 3.0
        };
        let mean = simpson(&|x| p.eval(x));
        let mellin = simpson(&|x| p.eval(x) / x);
        assert!((p.mean() - mean).abs() < 1e-10 * mean);
        assert!((p.mellin_at_zero() - mellin).abs() < 1e-10 * mellin);
    }

    #[test]
    fn omega_integrates_to_zero() {
        let p = psi();
        let i = integrate(|x| p.omega(x), 1.0, 2.0, Tolerance::new(1e-13, 0.0)).unwrap();
        assert!(i.value.abs() < 1e-10);
    }

    fn direct_sum_psi2(p: &SmoothCutoff, t: f64) -> f64 {
        let (lo, hi) = p.support();
        let first = (lo * t).ceil().max(1.0) as u64;
        let last = (hi * t).floor() as u64;
        (first..=last).map(|l| p.eval(l as f64 / t) / l as f64).collect::<NeumaierSum>().value()
    }

    fn direct_sum_psi1(p: &SmoothCutoff, t: f64) -> f64 {
        let (lo, hi) = p.support();
        let first = (t / hi).floor().max(1.0) as u64;
        let last = (t / lo).ceil() as u64;
        (first..=last).map(|l| p.eval(t / l as f64) / l as f64).collect::<NeumaierSum>().value()
    }

    #[test]
    fn psi2_summation_identity() {
        let p = psi();
        for t in [37.5, 3.3, 1.0, 0.7, 120.25] {
            let lhs = direct_sum_psi2(p, t) - p.mellin_at_zero();
            let rhs = p.psi2(t).unwrap() / t;
            assert!((lhs - rhs).abs() < 1e-9, "T = {t}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn psi2_small_t_is_linear() {
        let p = psi();
        let t = 1e-8;
        let v = p.psi2(t).unwrap();
        assert!((v + t * p.mellin_at_zero()).abs() < 1e-12 * t);
        assert!(p.psi2_bound_constant(t).unwrap() < 1.0);
    }

    #[test]
    fn psi2_at_one_matches_tight_oracle() {
        // oracle: the same integral at a much tighter tolerance
        let p = psi();
        let oracle = p.psi2_with(1.0, Tolerance::new(1e-15, 1e-15)).unwrap();
        assert!((p.psi2(1.0).unwrap() - oracle).abs() < 1e-10);
        // T = 1 has no interior breakpoint: Ψ₂(1) = ∫h′(t)(t − 1) dt = −Ψ̂(0)
        assert!((oracle + p.mellin_at_zero()).abs() < 1e-12);
    }

    #[test]
    fn psi1_summation_identity() {
        let p = psi();
        for t in [10.3, 100.0, 1.7, 2.5, 3.9] {
            let lhs = direct_sum_psi1(p, t) - p.mellin_at_zero();
            let rhs = p.psi1(t).unwrap();
            assert!((lhs - rhs).abs() < 1e-8, "T = {t}: {lhs} vs {rhs}");
        }
        for t in [0.5, 0.99] {
            assert!((p.psi1(t).unwrap() + p.mellin_at_zero()).abs() < 1e-9);
        }
    }

    #[test]
    fn euler_maclaurin_residuals() {
        let p = psi();
        assert_eq!(euler_maclaurin_check(&ZeroFunction).unwrap(), 0.0);
        assert!(euler_maclaurin_check(&Dilated { psi: p, scale: 50.0 }).unwrap() < 1e-8);
        assert!(euler_maclaurin_check(&ReciprocalDilated { psi: p, scale: 50.0 }).unwrap() < 1e-8);
        assert!(euler_maclaurin_check(&ReciprocalDilated { psi: p, scale: 3.7 }).unwrap() < 1e-8);
    }

    #[test]
    fn smooth_step_jet_matches_finite_differences() {
        let h = 1e-6;
        for i in 1..50 {
            let t = i as f64 / 50.0;
            let (_, d1, d2) = SmoothStep::jet(t);
            let fd1 = (SmoothStep::value(t + h) - SmoothStep::value(t - h)) / (2.0 * h);
            let fd2 = (SmoothStep::jet(t + h).1 - SmoothStep::jet(t - h).1) / (2.0 * h);
            assert!((d1 - fd1).abs() < 1e-6);
            assert!((d2 - fd2).abs() < 1e-5);
        }
        assert!((SmoothStep::value(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ramp_test_function_satisfies_derivative_bounds() {
        for n in [4.0, 10.0, 60.0, 1000.0] {
            let f = RampTestFunction::new(n).unwrap();
            assert!(sampled_derivative_bound(&f, 50) <= 1.0 + 1e-6);
            let mut analytic = 0.0f64;
            for a in 0..50 {
                for b in 0..50 {
                    let x = n.powf((a as f64 + 0.5) / 50.0);
                    let y = n.powf((b as f64 + 0.5) / 50.0);
                    for i in 0..3 {
                        for j in 0..3 {
                            analytic = analytic.max(f.scaled_partial(i, j, x, y).abs());
                        }
                    }
                }
            }
            assert!(analytic <= 1.0);
            assert_eq!(f.eval(0.5, 3.0), 0.0);
            assert_eq!(f.eval(3.0, n), 0.0);
        }
        assert!(RampTestFunction::new(3.0).is_err());
    }

    #[test]
    fn localized_test_function_is_windowed() {
        let f = LocalizedTestFunction::new(1000.0, 2.0, 10.0).unwrap();
        assert_eq!(f.eval(3.0, 100.0), 0.0);
        assert!(f.eval(10.0, 10.0) > 0.0);
        assert_eq!(f.eval(200.0, 200.0), 0.0);
        assert!(sampled_derivative_bound(&f, 30).is_finite());
    }

    #[test]
    fn special_test_function_decays() {
        let g = SpecialTestFunction::default();
        assert_eq!(g.eval(1.0, 0.0), 1.0);
        assert!(g.decay_constant().is_finite());
        let h = 1e-6;
        let (x, y) = (1.7, 0.4);
        let fd = x * (g.eval(x + h, y) - g.eval(x - h, y)) / (2.0 * h);
        assert!((fd - g.scaled_partial(1, 0, x, y)).abs() < 1e-8);
    }

    #[test]
    fn mellin_transform_properties() {
        let f = RampTestFunction::new(20.0).unwrap();
        let tol = Tolerance::new(1e-10, 1e-10);
        let at0 = mellin_transform(&f, 0.0, 0.0, tol).unwrap();
        // independent route: the product structure gives (∫ s(x)/x dx)² κ
        let one = integrate_pieces(
            |x| RampTestFunction::new(20.0).unwrap().eval(x, 5.0) / x,
            &[1.0, 2.0, 10.0, 20.0],
            Tolerance::new(1e-13, 1e-13),
        )
        .unwrap()
        .value;
        let expected = one * one / f.kappa();
        assert!((at0.re - expected).abs() < 1e-8, "{} vs {expected}", at0.re);
        assert!(at0.im.abs() < 1e-12);
        let bound = (2.0 * 20f64.ln()).powi(2);
        let z = mellin_transform(&f, 10.0, 0.0, tol).unwrap();
        assert!(z.norm() <= bound / 101.0);
        let w = mellin_transform(&f, -3.0, -1.5, tol).unwrap();
        let wc = mellin_transform(&f, 3.0, 1.5, tol).unwrap();
        assert!((w - wc.conj()).norm() < 1e-9);
    }
}
