//! Compensated summation and adaptive quadrature.

use std::collections::BinaryHeap;
use std::cmp::Ordering;

use num_complex::Complex64;
use thiserror::Error;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl Extend<f64> for NeumaierSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        s.extend(iter);
        s
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ComplexNeumaierSum {
    re: NeumaierSum,
    im: NeumaierSum,
}

impl ComplexNeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

impl Extend<Complex64> for ComplexNeumaierSum {
    fn extend<I: IntoIterator<Item = Complex64>>(&mut self, iter: I) {
        for z in iter {
            self.add(z);
        }
    }
}

impl FromIterator<Complex64> for ComplexNeumaierSum {
    fn from_iter<I: IntoIterator<Item = Complex64>>(iter: I) -> Self {
        let mut s = Self::new();
        s.extend(iter);
        s
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<NeumaierSum>().value()
}

/// Chunk size used by [`ordered_par_sum`].
pub const REDUCTION_CHUNK: usize = 64;

/// `Σ f(item)` computed in parallel over fixed chunks of
/// [`REDUCTION_CHUNK`] items whose partial sums are combined in order, so
/// the result does not depend on the number of workers.
pub fn ordered_par_sum<T, E, F>(items: &[T], f: F) -> Result<f64, E>
where
    T: Sync,
    E: Send,
    F: Fn(&T) -> Result<f64, E> + Sync,
{
    use rayon::prelude::*;
    let partials = items
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| {
            let mut s = NeumaierSum::new();
            for item in chunk {
                s.add(f(item)?);
            }
            Ok(s.value())
        })
        .collect::<Result<Vec<f64>, E>>()?;
    Ok(compensated_sum(partials))
}

/// Requested accuracy: the estimated error must fall below
/// `max(abs, rel · |value|)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::new(1e-12, 1e-10)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature did not reach tolerance {target:e}: value {value}, estimated error {error:e}")]
    NotConverged { value: f64, error: f64, target: f64 },
    #[error("integrand is not finite at {at}")]
    NonFinite { at: f64 },
    #[error("invalid interval [{a}, {b}]")]
    BadInterval { a: f64, b: f64 },
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 4000;

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    /// Rounding floor of the rule on this segment.
    noise: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Segment, QuadratureError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |x: f64| {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(QuadratureError::NonFinite { at: x })
        }
    };
    let fc = eval(center)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_sum = fc.abs() * WGK[7];
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = eval(center - dx)?;
        let f2 = eval(center + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = kronrod * half;
    let res_abs = abs_sum * half.abs();
    let res_asc = asc * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    let noise = 50.0 * f64::EPSILON * res_abs;
    Ok(Segment {
        a,
        b,
        value,
        error,
        noise,
    })
}

/// Globally adaptive Gauss–Kronrod (7/15) quadrature on `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: Tolerance,
) -> Result<Integral, QuadratureError> {
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(QuadratureError::BadInterval { a, b });
    }
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let first = gk15(&f, a, b)?;
    let mut value = NeumaierSum::new();
    value.add(first.value);
    let mut error = first.error;
    let mut noise = first.noise;
    let mut heap = BinaryHeap::new();
    let mut evaluations = 15;
    heap.push(first);
    loop {
        let target = tol.target(value.value()).max(noise);
        if error <= target {
            break;
        }
        let worst = heap.peek().expect("non-empty");
        let unsplittable =
            worst.b - worst.a <= 4.0 * f64::EPSILON * worst.a.abs().max(worst.b.abs());
        if heap.len() >= MAX_INTERVALS || unsplittable {
            // re-sum from scratch before reporting
            let error: f64 = heap.iter().map(|s| s.error).sum();
            let value = compensated_sum(heap.iter().map(|s| s.value));
            if error <= target {
                break;
            }
            return Err(QuadratureError::NotConverged {
                value,
                error,
                target,
            });
        }
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        let left = gk15(&f, worst.a, mid)?;
        let right = gk15(&f, mid, worst.b)?;
        value.add(-worst.value);
        value.add(left.value);
        value.add(right.value);
        error += left.error + right.error - worst.error;
        noise += left.noise + right.noise - worst.noise;
        heap.push(left);
        heap.push(right);
        evaluations += 30;
    }
    let mut segments = heap.into_vec();
    segments.sort_by(|x, y| x.a.total_cmp(&y.a));
    Ok(Integral {
        value: compensated_sum(segments.iter().map(|s| s.value)),
        error: segments.iter().map(|s| s.error + s.noise).sum(),
        evaluations,
    })
}

/// Integrates piecewise over consecutive breakpoints, which must be sorted.
/// The absolute tolerance is shared among pieces in proportion to length.
pub fn integrate_pieces<F: Fn(f64) -> f64>(
    f: F,
    breakpoints: &[f64],
    tol: Tolerance,
) -> Result<Integral, QuadratureError> {
    let (Some(&lo), Some(&hi)) = (breakpoints.first(), breakpoints.last()) else {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    };
    let total = hi - lo;
    let mut value = NeumaierSum::new();
    let mut error = 0.0;
    let mut evaluations = 0;
    for w in breakpoints.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let share = if total > 0.0 { (w[1] - w[0]) / total } else { 1.0 };
        let piece = integrate(&f, w[0], w[1], Tolerance::new(tol.abs * share, tol.rel))?;
        value.add(piece.value);
        error += piece.error;
        evaluations += piece.evaluations;
    }
    Ok(Integral {
        value: value.value(),
        error,
        evaluations,
    })
}

/// Iterated integral `∫_a^b ∫_c^d f(x, y) dy dx`.
pub fn integrate_2d<F: Fn(f64, f64) -> f64>(
    f: F,
    (a, b): (f64, f64),
    (c, d): (f64, f64),
    tol: Tolerance,
) -> Result<Integral, QuadratureError> {
    let failure = std::cell::RefCell::new(None);
    let inner_error = std::cell::Cell::new(0.0f64);
    let inner_tol = Tolerance::new(tol.abs / (b - a).max(1.0) * 0.1, tol.rel * 0.1);
    let outer = integrate(
        |x| match integrate(|y| f(x, y), c, d, inner_tol) {
            Ok(i) => {
                inner_error.set(inner_error.get().max(i.error));
                i.value
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        a,
        b,
        tol,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(Integral {
        value: outer.value,
        error: outer.error + inner_error.get() * (b - a),
        evaluations: outer.evaluations,
    })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n % 2 == 1 && i == m - 1 {
            z = 0.0;
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_recovers_cancelled_terms() {
        let s: f64 = compensated_sum([1.0, 1e100, 1.0, -1e100]);
        assert_eq!(s, 2.0);
        let naive: f64 = [1.0, 1e100, 1.0, -1e100].iter().sum();
        assert_eq!(naive, 0.0);
    }

    #[test]
    fn complex_sum() {
        let z: ComplexNeumaierSum = [Complex64::new(1.0, 1e100), Complex64::new(1e100, -1e100), Complex64::new(-1e100, 1.0)]
            .into_iter()
            .collect();
        assert_eq!(z.value(), Complex64::new(1.0, 1.0));
    }

    #[test]
    fn integrates_polynomials_and_exp() {
        let tol = Tolerance::new(1e-14, 1e-14);
        let i = integrate(|x| x * x, 0.0, 3.0, tol).unwrap();
        assert!((i.value - 9.0).abs() < 1e-13);
        let i = integrate(f64::exp, 0.0, 1.0, tol).unwrap();
        assert!((i.value - (1f64.exp() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn integrates_kinked_function_with_breakpoints() {
        let f = |x: f64| x.fract();
        let bps: Vec<f64> = (0..=10).map(f64::from).collect();
        let i = integrate_pieces(f, &bps, Tolerance::new(1e-13, 1e-13)).unwrap();
        assert!((i.value - 5.0).abs() < 1e-12);
    }

    #[test]
    fn integrates_sqrt_singularity() {
        let i = integrate(f64::sqrt, 0.0, 1.0, Tolerance::new(1e-12, 1e-12)).unwrap();
        assert!((i.value - 2.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn reports_non_finite() {
        let r = integrate(|x| 1.0 / (x - 0.5), 0.0, 1.0, Tolerance::default());
        assert!(matches!(r, Err(QuadratureError::NonFinite { .. })));
    }

    #[test]
    fn double_integral() {
        let i = integrate_2d(|x, y| x * y, (0.0, 1.0), (0.0, 2.0), Tolerance::new(1e-13, 1e-13)).unwrap();
        assert!((i.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_is_exact_for_low_degree() {
        let (x, w) = gauss_legendre(10);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
        let m18: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((m18 - 2.0 / 19.0).abs() < 1e-14);
        let (x, w) = gauss_legendre(7);
        assert_eq!(x[3], 0.0);
        let m6: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(6)).sum();
        assert!((m6 - 2.0 / 7.0).abs() < 1e-14);
    }
}
