//! Exact multiplicative arithmetic.
//!
//! Everything here is driven by a smallest-prime-factor sieve that is built
//! once and shared read-only. Integers up to the sieve bound are factored by
//! table lookup; integers up to the square of the bound by trial division
//! with the sieved primes. Anything larger is rejected.

use std::sync::OnceLock;

use num_integer::Integer;
use thiserror::Error;

/// Sieve bound used by [`Sieve::global`].
pub const DEFAULT_SIEVE_BOUND: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ArithError {
    #[error("zero has no factorization")]
    Zero,
    #[error("{value} exceeds the factorization reach {reach} of a sieve bounded at {bound}")]
    BeyondSieve { value: u64, bound: u64, reach: u64 },
    #[error("prime cutoff must be at least 2, got {0}")]
    CutoffTooSmall(u64),
    #[error("divisor-function order must be positive")]
    ZeroOrder,
}

/// A positive integer together with its prime factorization.
///
/// Primes are strictly increasing and every exponent is at least one.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FactoredInteger {
    value: u64,
    factors: Vec<(u64, u32)>,
}

impl FactoredInteger {
    /// The integer 1 (empty factorization).
    pub fn one() -> Self {
        Self {
            value: 1,
            factors: Vec::new(),
        }
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn factors(&self) -> &[(u64, u32)] {
        &self.factors
    }

    pub fn primes(&self) -> impl Iterator<Item = u64> + '_ {
        self.factors.iter().map(|&(p, _)| p)
    }

    pub fn omega(&self) -> usize {
        self.factors.len()
    }

    pub fn is_squarefree(&self) -> bool {
        self.factors.iter().all(|&(_, e)| e == 1)
    }

    pub fn radical(&self) -> u64 {
        self.primes().product()
    }

    pub fn euler_phi(&self) -> u64 {
        self.factors
            .iter()
            .map(|&(p, e)| (p - 1) * p.pow(e - 1))
            .product()
    }

    pub fn mobius(&self) -> i8 {
        if !self.is_squarefree() {
            0
        } else if self.factors.len() % 2 == 0 {
            1
        } else {
            -1
        }
    }

    /// Number of primitive characters modulo the value, `(μ ∗ φ)(n)`.
    pub fn phi_star(&self) -> u64 {
        self.factors
            .iter()
            .map(|&(p, e)| match e {
                1 => p - 2,
                _ => p.pow(e - 2) * (p - 1) * (p - 1),
            })
            .product()
    }

    /// `τ_g(n)`: ordered `g`-tuples with product `n`.
    pub fn divisor_power(&self, g: u32) -> u64 {
        self.factors
            .iter()
            .map(|&(_, e)| binomial(u64::from(e + g - 1), u64::from(g - 1)))
            .product()
    }

    /// All divisors in increasing order.
    pub fn divisors(&self) -> Vec<u64> {
        let mut divs = vec![1u64];
        for &(p, e) in &self.factors {
            let len = divs.len();
            let mut pk = 1;
            for _ in 0..e {
                pk *= p;
                for i in 0..len {
                    divs.push(divs[i] * pk);
                }
            }
        }
        divs.sort_unstable();
        divs
    }

    /// Squarefree divisors in increasing order.
    pub fn squarefree_divisors(&self) -> Vec<u64> {
        let mut divs = vec![1u64];
        for p in self.primes() {
            let len = divs.len();
            for i in 0..len {
                divs.push(divs[i] * p);
            }
        }
        divs.sort_unstable();
        divs
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Linear sieve holding smallest prime factors, `φ` and `μ` up to a bound.
pub struct Sieve {
    bound: u64,
    spf: Vec<u32>,
    phi: Vec<u32>,
    mu: Vec<i8>,
    primes: Vec<u64>,
}

impl std::fmt::Debug for Sieve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Sieve")
            .field("bound", &self.bound)
            .field("primes", &self.primes.len())
            .finish()
    }
}

impl Sieve {
    pub fn new(bound: u64) -> Self {
        let bound = bound.max(2);
        let n = bound as usize;
        let mut spf = vec![0u32; n + 1];
        let mut phi = vec![0u32; n + 1];
        let mut mu = vec![0i8; n + 1];
        let mut primes: Vec<u64> = Vec::new();
        phi[1] = 1;
        mu[1] = 1;
        for i in 2..=n {
            if spf[i] == 0 {
                spf[i] = i as u32;
                phi[i] = (i - 1) as u32;
                mu[i] = -1;
                primes.push(i as u64);
            }
            for &p in &primes {
                let p = p as usize;
                if p > spf[i] as usize || i * p > n {
                    break;
                }
                spf[i * p] = p as u32;
                if p == spf[i] as usize {
                    phi[i * p] = phi[i] * p as u32;
                    mu[i * p] = 0;
                } else {
                    phi[i * p] = phi[i] * (p as u32 - 1);
                    mu[i * p] = -mu[i];
                }
            }
        }
        Self {
            bound,
            spf,
            phi,
            mu,
            primes,
        }
    }

    /// The process-wide sieve with bound [`DEFAULT_SIEVE_BOUND`].
    pub fn global() -> &'static Sieve {
        static GLOBAL: OnceLock<Sieve> = OnceLock::new();
        GLOBAL.get_or_init(|| Sieve::new(DEFAULT_SIEVE_BOUND))
    }

    pub fn bound(&self) -> u64 {
        self.bound
    }

    /// Largest integer this sieve can factor completely.
    pub fn reach(&self) -> u64 {
        self.bound.saturating_mul(self.bound)
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn primes_up_to(&self, x: u64) -> &[u64] {
        let end = self.primes.partition_point(|&p| p <= x);
        &self.primes[..end]
    }

    pub fn factor(&self, n: u64) -> Result<FactoredInteger, ArithError> {
        if n == 0 {
            return Err(ArithError::Zero);
        }
        if n > self.reach() {
            return Err(ArithError::BeyondSieve {
                value: n,
                bound: self.bound,
                reach: self.reach(),
            });
        }
        let mut factors: Vec<(u64, u32)> = Vec::new();
        let mut rest = n;
        if rest > self.bound {
            for &p in &self.primes {
                if p * p > rest || rest <= self.bound {
                    break;
                }
                if rest % p == 0 {
                    let mut e = 0;
                    while rest % p == 0 {
                        rest /= p;
                        e += 1;
                    }
                    factors.push((p, e));
                }
            }
            if rest > self.bound {
                // no prime up to sqrt(rest) divides it
                factors.push((rest, 1));
                rest = 1;
            }
        }
        while rest > 1 {
            let p = u64::from(self.spf[rest as usize]);
            let mut e = 0;
            while rest % p == 0 {
                rest /= p;
                e += 1;
            }
            factors.push((p, e));
        }
        factors.sort_unstable();
        Ok(FactoredInteger { value: n, factors })
    }

    pub fn euler_phi(&self, n: u64) -> Result<u64, ArithError> {
        if n >= 1 && n <= self.bound {
            return Ok(u64::from(self.phi[n as usize]));
        }
        self.factor(n).map(|f| f.euler_phi())
    }

    pub fn mobius(&self, n: u64) -> Result<i8, ArithError> {
        if n >= 1 && n <= self.bound {
            return Ok(self.mu[n as usize]);
        }
        self.factor(n).map(|f| f.mobius())
    }

    pub fn phi_star(&self, n: u64) -> Result<u64, ArithError> {
        self.factor(n).map(|f| f.phi_star())
    }

    pub fn divisor_power(&self, n: u64, g: u32) -> Result<u64, ArithError> {
        if g == 0 {
            return Err(ArithError::ZeroOrder);
        }
        self.factor(n).map(|f| f.divisor_power(g))
    }

    /// `δ(m) = ∏_{p|m} (1 − 1/p)(1 − 1/p² − 1/p³)⁻¹`.
    pub fn delta_factor(&self, m: u64) -> Result<f64, ArithError> {
        let f = self.factor(m)?;
        Ok(f.primes().map(local_density).product())
    }

    /// Partial Euler product of the singular series over `p ≤ cutoff`.
    pub fn singular_series(&self, cutoff: u64) -> Result<SingularSeries, ArithError> {
        if cutoff < 2 {
            return Err(ArithError::CutoffTooSmall(cutoff));
        }
        if cutoff > self.bound {
            return Err(ArithError::BeyondSieve {
                value: cutoff,
                bound: self.bound,
                reach: self.bound,
            });
        }
        let value = self
            .primes_up_to(cutoff)
            .iter()
            .map(|&p| singular_factor(p))
            .product();
        // ∏(1 − x_p) ≥ 1 − Σ x_p with x_p ≤ 2/p², and Σ_{n>B} 2/n² < 2/B.
        let tail_bound = self.primes[self.primes.partition_point(|&p| p <= cutoff)..]
            .iter()
            .map(|&p| 2.0 / (p as f64 * p as f64))
            .sum::<f64>()
            + 2.0 / self.bound as f64;
        Ok(SingularSeries {
            cutoff,
            value,
            tail_bound,
        })
    }
}

/// Truncated singular series with a certified bound on the distance to the
/// full product.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SingularSeries {
    pub cutoff: u64,
    pub value: f64,
    /// `|value − 𝔖| ≤ tail_bound`.
    pub tail_bound: f64,
}

#[inline]
pub fn singular_factor(p: u64) -> f64 {
    let p = p as f64;
    1.0 - 1.0 / (p * p) - 1.0 / (p * p * p)
}

#[inline]
fn local_density(p: u64) -> f64 {
    (1.0 - 1.0 / p as f64) / singular_factor(p)
}

fn global_or_panic<T>(r: Result<T, ArithError>) -> T {
    match r {
        Ok(v) => v,
        Err(e) => panic!("{e}"),
    }
}

/// Euler's totient. Panics on 0 or beyond the global sieve's reach.
pub fn euler_phi(n: u64) -> u64 {
    global_or_panic(Sieve::global().euler_phi(n))
}

/// Möbius function. Panics on 0 or beyond the global sieve's reach.
pub fn mobius(n: u64) -> i8 {
    global_or_panic(Sieve::global().mobius(n))
}

/// Number of primitive characters modulo `q`.
pub fn phi_star(q: u64) -> u64 {
    global_or_panic(Sieve::global().phi_star(q))
}

/// `τ_g(n)`. Panics when `g == 0`.
pub fn divisor_power(n: u64, g: u32) -> u64 {
    global_or_panic(Sieve::global().divisor_power(n, g))
}

pub fn delta_factor(m: u64) -> f64 {
    global_or_panic(Sieve::global().delta_factor(m))
}

pub fn singular_series(prime_cutoff: u64) -> Result<SingularSeries, ArithError> {
    Sieve::global().singular_series(prime_cutoff)
}

pub fn factor(n: u64) -> Result<FactoredInteger, ArithError> {
    Sieve::global().factor(n)
}

#[inline]
pub fn gcd(a: u64, b: u64) -> u64 {
    a.gcd(&b)
}

#[inline]
pub fn lcm(a: u64, b: u64) -> u64 {
    a.lcm(&b)
}

/// Inverse of `a` modulo `m`, if it exists.
pub fn mod_inverse(a: u64, m: u64) -> Option<u64> {
    if m == 1 {
        return Some(0);
    }
    let ext = (a as i128 % m as i128).extended_gcd(&(m as i128));
    (ext.gcd == 1).then(|| ext.x.rem_euclid(m as i128) as u64)
}

pub fn mod_pow(base: u64, mut exp: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let m128 = u128::from(m);
    let mut b = u128::from(base) % m128;
    let mut acc = 1u128;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % m128;
        }
        b = b * b % m128;
        exp >>= 1;
    }
    acc as u64
}
