//! Dirichlet characters through explicit generators of `(Z/qZ)^×`.
//!
//! A character is stored as a vector of exponents, one per cyclic factor of
//! the unit group, and evaluated exactly as a rational angle. Cyclic factors
//! come from the prime powers of `q`: a primitive root for odd `p^k`, and the
//! pair `(−1, 5)` for `2^k` with `k ≥ 3`.

use std::sync::{Arc, OnceLock};

use dashmap::DashMap;
use num_complex::Complex64;
use thiserror::Error;

use crate::arith::{self, gcd, lcm, ArithError, FactoredInteger};
use crate::numerics::ComplexNeumaierSum;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CharacterError {
    #[error(transparent)]
    Arith(#[from] ArithError),
    #[error("modulus must be positive")]
    ZeroModulus,
    #[error("({m}, {n}) is not coprime to the modulus {q}")]
    NotCoprime { q: u64, m: u64, n: u64 },
    #[error("exponent vector {exponents:?} does not fit the unit group of {q}")]
    BadExponents { q: u64, exponents: Vec<u64> },
}

/// `e(numerator / denominator)`, kept in lowest terms with
/// `0 ≤ numerator < denominator`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RootOfUnity {
    numerator: u64,
    denominator: u64,
}

impl RootOfUnity {
    pub fn new(numerator: u64, denominator: u64) -> Self {
        let numerator = numerator % denominator;
        let g = gcd(numerator, denominator);
        Self {
            numerator: numerator / g,
            denominator: denominator / g,
        }
    }

    pub fn one() -> Self {
        Self::new(0, 1)
    }

    pub fn numerator(&self) -> u64 {
        self.numerator
    }

    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    pub fn is_one(&self) -> bool {
        self.numerator == 0
    }

    pub fn mul(self, other: Self) -> Self {
        let l = lcm(self.denominator, other.denominator);
        Self::new(
            self.numerator * (l / self.denominator) + other.numerator * (l / other.denominator),
            l,
        )
    }

    pub fn conj(self) -> Self {
        Self::new(self.denominator - self.numerator, self.denominator)
    }

    pub fn to_complex(self) -> Complex64 {
        root_of_unity(self.numerator, self.denominator)
    }
}

/// `e(k / n)` with exact values at the quarter turns.
pub fn root_of_unity(k: u64, n: u64) -> Complex64 {
    let k = k % n;
    if 4 * k % n == 0 {
        return match 4 * k / n {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
    }
    let theta = std::f64::consts::TAU * (k as f64 / n as f64);
    Complex64::new(theta.cos(), theta.sin())
}

const NOT_A_UNIT: u32 = u32::MAX;

/// Unit group of a single prime power with its discrete-log table.
#[derive(Debug)]
pub struct LocalGroup {
    prime: u64,
    exponent: u32,
    modulus: u64,
    /// Local generators and their orders. Empty for modulus 2.
    generators: Vec<u64>,
    orders: Vec<u64>,
    /// Flattened discrete log of each residue, `NOT_A_UNIT` for non-units.
    dlog: Vec<u32>,
    primitive_exponents: OnceLock<Vec<Vec<u64>>>,
    /// Lazily filled entries of the enumerated primitive pair-sum table.
    primitive_sums: Vec<OnceLock<Complex64>>,
}

impl LocalGroup {
    fn new(prime: u64, exponent: u32) -> Self {
        let modulus = prime.pow(exponent);
        let (generators, orders) = if prime == 2 {
            match exponent {
                1 => (vec![], vec![]),
                2 => (vec![3], vec![2]),
                _ => (vec![modulus - 1, 5], vec![2, modulus / 4]),
            }
        } else {
            let g = smallest_primitive_root(prime, exponent, modulus);
            (vec![g], vec![modulus / prime * (prime - 1)])
        };
        let mut dlog = vec![NOT_A_UNIT; modulus as usize];
        match generators.len() {
            0 => dlog[1 % modulus as usize] = 0,
            1 => {
                let mut x = 1u64;
                for i in 0..orders[0] {
                    dlog[x as usize] = i as u32;
                    x = x * generators[0] % modulus;
                }
            }
            _ => {
                let mut x = 1u64;
                for j in 0..orders[1] {
                    dlog[x as usize] = j as u32;
                    dlog[(modulus - x) as usize] = (orders[1] + j) as u32;
                    x = x * generators[1] % modulus;
                }
            }
        }
        let size = orders.iter().product::<u64>() as usize;
        Self {
            prime,
            exponent,
            modulus,
            generators,
            orders,
            dlog,
            primitive_exponents: OnceLock::new(),
            primitive_sums: (0..size).map(|_| OnceLock::new()).collect(),
        }
    }

    /// Shared instance for `p^k`; tables are built once per prime power.
    pub fn get(prime: u64, exponent: u32) -> Arc<LocalGroup> {
        static CACHE: OnceLock<DashMap<u64, Arc<LocalGroup>>> = OnceLock::new();
        let cache = CACHE.get_or_init(DashMap::new);
        let key = prime.pow(exponent);
        if let Some(g) = cache.get(&key) {
            return Arc::clone(&g);
        }
        Arc::clone(
            &cache
                .entry(key)
                .or_insert_with(|| Arc::new(LocalGroup::new(prime, exponent))),
        )
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn generators(&self) -> &[u64] {
        &self.generators
    }

    pub fn orders(&self) -> &[u64] {
        &self.orders
    }

    pub fn size(&self) -> u64 {
        self.orders.iter().product()
    }

    /// Flattened discrete log of a unit `n` (mixed radix over `orders`).
    #[inline]
    pub fn flat_log(&self, n: u64) -> Option<u32> {
        let v = self.dlog[(n % self.modulus) as usize];
        (v != NOT_A_UNIT).then_some(v)
    }

    /// Per-factor discrete logs of a unit.
    pub fn log(&self, n: u64) -> Option<Vec<u64>> {
        let flat = u64::from(self.flat_log(n)?);
        Some(match self.orders.len() {
            0 => vec![],
            1 => vec![flat],
            _ => vec![flat / self.orders[1], flat % self.orders[1]],
        })
    }

    fn unflatten(&self, flat: u64) -> Vec<u64> {
        match self.orders.len() {
            0 => vec![],
            1 => vec![flat],
            _ => vec![flat / self.orders[1], flat % self.orders[1]],
        }
    }

    /// Whether a local exponent vector gives a primitive character mod `p^k`.
    pub fn is_primitive(&self, e: &[u64]) -> bool {
        self.conductor_exponent(e) == self.exponent
    }

    /// `j` such that the local character has conductor `p^j`.
    pub fn conductor_exponent(&self, e: &[u64]) -> u32 {
        if self.prime == 2 {
            match self.exponent {
                1 => 0,
                2 => {
                    if e[0] == 0 {
                        0
                    } else {
                        2
                    }
                }
                k => {
                    let (a, b) = (e[0], e[1]);
                    if b == 0 {
                        if a == 0 {
                            0
                        } else {
                            2
                        }
                    } else {
                        // smallest j ≥ 3 with 2^(k−j) | b
                        (3..=k).find(|&j| b % (1u64 << (k - j)) == 0).expect("j = k works")
                    }
                }
            }
        } else {
            let e = e[0];
            if e == 0 {
                0
            } else {
                let k = self.exponent;
                (1..=k)
                    .find(|&j| e % self.prime.pow(k - j) == 0)
                    .expect("j = k works")
            }
        }
    }

    fn exponent_vectors(&self) -> impl Iterator<Item = Vec<u64>> + '_ {
        (0..self.size()).map(|f| self.unflatten(f))
    }

    /// Local primitive exponent vectors in lexicographic order.
    pub fn primitive_exponents(&self) -> &[Vec<u64>] {
        self.primitive_exponents
            .get_or_init(|| self.exponent_vectors().filter(|e| self.is_primitive(e)).collect())
    }

    /// `Σ_{χ primitive mod p^k} χ(m) χ̄(n)` where `m n⁻¹` has flattened
    /// discrete log `flat`, by enumerating the primitive characters.
    /// Entries are computed on first use and cached.
    pub fn primitive_sum(&self, flat: usize) -> Complex64 {
        *self.primitive_sums[flat].get_or_init(|| {
            let big = self.orders.iter().copied().fold(1, lcm);
            let x = self.unflatten(flat as u64);
            self.primitive_exponents()
                .iter()
                .map(|e| {
                    let angle = e
                        .iter()
                        .zip(&x)
                        .zip(&self.orders)
                        .map(|((e, x), d)| e * x % d * (big / d))
                        .sum::<u64>();
                    root_of_unity(angle, big)
                })
                .collect::<ComplexNeumaierSum>()
                .value()
        })
    }

    /// Flattened log of `m n⁻¹` given flattened logs of `m` and `n`.
    #[inline]
    fn flat_difference(&self, fm: u32, fn_: u32) -> usize {
        match self.orders.len() {
            0 => 0,
            1 => {
                let d = self.orders[0] as u32;
                ((fm + d - fn_) % d) as usize
            }
            _ => {
                let d2 = self.orders[1] as u32;
                let (a1, b1) = (fm / d2, fm % d2);
                let (a2, b2) = (fn_ / d2, fn_ % d2);
                (((a1 + 2 - a2) % 2) * d2 + (b1 + d2 - b2) % d2) as usize
            }
        }
    }

    /// Closed form of the local primitive pair sum, exact integer.
    pub fn primitive_kernel(&self, m: u64, n: u64) -> i64 {
        let (Some(fm), Some(fn_)) = (self.flat_log(m), self.flat_log(n)) else {
            return 0;
        };
        let x = self.flat_difference(fm, fn_) as u64;
        if self.prime == 2 {
            match self.exponent {
                1 => 0,
                2 => {
                    if x == 0 {
                        1
                    } else {
                        -1
                    }
                }
                _ => {
                    let big = self.orders[1];
                    let (s, t) = (x / big, x % big);
                    if s != 0 {
                        return 0;
                    }
                    2 * (indicator_sum(big, t) - indicator_sum(big / 2, t))
                }
            }
        } else if self.exponent == 1 {
            if x == 0 {
                self.prime as i64 - 2
            } else {
                -1
            }
        } else {
            let d = self.orders[0];
            indicator_sum(d, x) - indicator_sum(d / self.prime, x)
        }
    }
}

/// `d · [d | x]`, i.e. the full character sum of a cyclic group of order `d`.
#[inline]
fn indicator_sum(d: u64, x: u64) -> i64 {
    if x % d == 0 {
        d as i64
    } else {
        0
    }
}

fn smallest_primitive_root(p: u64, k: u32, modulus: u64) -> u64 {
    let order = modulus / p * (p - 1);
    let mut prime_divisors: Vec<u64> = arith::factor(p - 1)
        .map(|f| f.primes().collect())
        .unwrap_or_default();
    if k >= 2 {
        prime_divisors.push(p);
    }
    (2..modulus)
        .find(|&g| {
            g % p != 0
                && prime_divisors
                    .iter()
                    .all(|&r| arith::mod_pow(g, order / r, modulus) != 1)
        })
        .unwrap_or(1)
}

/// The character group modulo `q`.
#[derive(Debug)]
pub struct CharacterGroup {
    modulus: u64,
    factorization: FactoredInteger,
    locals: Vec<Arc<LocalGroup>>,
    /// `(local index, position within local)` for each global generator.
    slots: Vec<(usize, usize)>,
    generators: Vec<u64>,
    orders: Vec<u64>,
    exponent: u64,
}

impl CharacterGroup {
    pub fn new(q: u64) -> Result<Arc<Self>, CharacterError> {
        if q == 0 {
            return Err(CharacterError::ZeroModulus);
        }
        let factorization = arith::factor(q)?;
        let locals: Vec<Arc<LocalGroup>> = factorization
            .factors()
            .iter()
            .map(|&(p, k)| LocalGroup::get(p, k))
            .collect();
        let mut slots = Vec::new();
        let mut generators = Vec::new();
        let mut orders = Vec::new();
        for (i, local) in locals.iter().enumerate() {
            let pk = local.modulus;
            let rest = q / pk;
            for (j, (&g, &d)) in local.generators.iter().zip(&local.orders).enumerate() {
                slots.push((i, j));
                orders.push(d);
                generators.push(crt_lift(g, pk, 1, rest));
            }
        }
        let exponent = orders.iter().copied().fold(1, lcm);
        Ok(Arc::new(Self {
            modulus: q,
            factorization,
            locals,
            slots,
            generators,
            orders,
            exponent,
        }))
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn factorization(&self) -> &FactoredInteger {
        &self.factorization
    }

    pub fn locals(&self) -> &[Arc<LocalGroup>] {
        &self.locals
    }

    /// Global generators, each `≡ g_p (mod p^k)` and `≡ 1` at the other primes.
    pub fn generators(&self) -> &[u64] {
        &self.generators
    }

    pub fn orders(&self) -> &[u64] {
        &self.orders
    }

    /// Exponent of the group, the lcm of the generator orders.
    pub fn exponent(&self) -> u64 {
        self.exponent
    }

    pub fn size(&self) -> u64 {
        self.orders.iter().product()
    }

    /// Discrete logs of `n` with respect to the generators.
    pub fn log(&self, n: u64) -> Option<Vec<u64>> {
        let mut out = Vec::with_capacity(self.slots.len());
        for local in &self.locals {
            out.extend(local.log(n)?);
        }
        Some(out)
    }

    /// Conductor of the character with the given exponents.
    fn conductor_of(&self, exponents: &[u64]) -> u64 {
        let mut pos = 0;
        let mut f = 1;
        for local in &self.locals {
            let r = local.orders.len();
            let j = local.conductor_exponent(&exponents[pos..pos + r]);
            f *= local.prime.pow(j);
            pos += r;
        }
        f
    }

    pub fn character(self: &Arc<Self>, exponents: Vec<u64>) -> Result<DirichletCharacter, CharacterError> {
        if exponents.len() != self.orders.len()
            || exponents.iter().zip(&self.orders).any(|(e, d)| e >= d)
        {
            return Err(CharacterError::BadExponents {
                q: self.modulus,
                exponents,
            });
        }
        let conductor = self.conductor_of(&exponents);
        Ok(DirichletCharacter {
            group: Arc::clone(self),
            exponents,
            conductor,
        })
    }

    pub fn principal(self: &Arc<Self>) -> DirichletCharacter {
        self.character(vec![0; self.orders.len()])
            .expect("zero vector is valid")
    }

    /// All characters in lexicographic order of exponent vectors.
    pub fn characters(self: &Arc<Self>) -> impl Iterator<Item = DirichletCharacter> + '_ {
        let total = self.size();
        (0..total).map(move |mut idx| {
            let mut e = vec![0; self.orders.len()];
            for (slot, &d) in e.iter_mut().zip(&self.orders).rev() {
                *slot = idx % d;
                idx /= d;
            }
            let conductor = self.conductor_of(&e);
            DirichletCharacter {
                group: Arc::clone(self),
                exponents: e,
                conductor,
            }
        })
    }

    pub fn primitive_characters(self: &Arc<Self>) -> Vec<DirichletCharacter> {
        self.characters().filter(|c| c.is_primitive()).collect()
    }

    /// `Σ_{χ primitive mod q} χ(m) χ̄(n)`, by products of enumerated local
    /// tables. Zero when `(mn, q) > 1`.
    pub fn primitive_pair_sum(&self, m: u64, n: u64) -> Complex64 {
        let mut acc = Complex64::new(1.0, 0.0);
        for local in &self.locals {
            let (Some(fm), Some(fn_)) = (local.flat_log(m), local.flat_log(n)) else {
                return Complex64::new(0.0, 0.0);
            };
            acc *= local.primitive_sum(local.flat_difference(fm, fn_));
        }
        acc
    }

    /// Same sum via the local closed forms; exact.
    pub fn primitive_kernel(&self, m: u64, n: u64) -> i64 {
        self.locals
            .iter()
            .map(|l| l.primitive_kernel(m, n))
            .product()
    }
}

fn crt_lift(a: u64, m: u64, b: u64, n: u64) -> u64 {
    if n == 1 {
        return a % m;
    }
    // x = a + m t with m t ≡ b − a (mod n)
    let inv = arith::mod_inverse(m % n, n).expect("coprime moduli");
    let diff = (b % n + n - a % n) % n;
    let t = (u128::from(diff) * u128::from(inv) % u128::from(n)) as u64;
    a + m * t
}

/// A Dirichlet character modulo `q`.
#[derive(Debug, Clone)]
pub struct DirichletCharacter {
    group: Arc<CharacterGroup>,
    exponents: Vec<u64>,
    conductor: u64,
}

impl PartialEq for DirichletCharacter {
    fn eq(&self, other: &Self) -> bool {
        self.group.modulus == other.group.modulus && self.exponents == other.exponents
    }
}
impl Eq for DirichletCharacter {}

impl DirichletCharacter {
    pub fn group(&self) -> &Arc<CharacterGroup> {
        &self.group
    }

    pub fn modulus(&self) -> u64 {
        self.group.modulus
    }

    pub fn exponents(&self) -> &[u64] {
        &self.exponents
    }

    pub fn conductor(&self) -> u64 {
        self.conductor
    }

    pub fn is_primitive(&self) -> bool {
        self.conductor == self.group.modulus
    }

    pub fn is_principal(&self) -> bool {
        self.exponents.iter().all(|&e| e == 0)
    }

    pub fn order(&self) -> u64 {
        self.exponents
            .iter()
            .zip(&self.group.orders)
            .map(|(&e, &d)| d / gcd(e, d))
            .fold(1, lcm)
    }

    pub fn conjugate(&self) -> Self {
        let exponents = self
            .exponents
            .iter()
            .zip(&self.group.orders)
            .map(|(&e, &d)| (d - e) % d)
            .collect();
        Self {
            group: Arc::clone(&self.group),
            exponents,
            conductor: self.conductor,
        }
    }

    /// Angle numerator over the group exponent `L`, or `None` off the units.
    fn angle(&self, n: u64) -> Option<u64> {
        let big = self.group.exponent;
        let mut total = 0u64;
        let mut i = 0;
        for local in &self.group.locals {
            let logs = local.log(n)?;
            for x in logs {
                let d = self.group.orders[i];
                total = (total + self.exponents[i] * x % d * (big / d)) % big;
                i += 1;
            }
        }
        Some(total)
    }

    /// `χ(n)` exactly; `None` when `(n, q) > 1`.
    pub fn evaluate_exact(&self, n: u64) -> Option<RootOfUnity> {
        self.angle(n)
            .map(|a| RootOfUnity::new(a, self.group.exponent))
    }

    pub fn evaluate(&self, n: u64) -> Complex64 {
        self.angle(n)
            .map_or(Complex64::new(0.0, 0.0), |a| root_of_unity(a, self.group.exponent))
    }
}

/// `φ(q)⁻¹ Σ_{χ mod q} χ(m) χ̄(n)`.
pub fn orthogonality_sum(q: u64, m: u64, n: u64) -> Result<Complex64, CharacterError> {
    let group = CharacterGroup::new(q)?;
    let (Some(lm), Some(ln)) = (group.log(m), group.log(n)) else {
        return Err(CharacterError::NotCoprime { q, m, n });
    };
    let big = group.exponent;
    let diffs: Vec<u64> = lm
        .iter()
        .zip(&ln)
        .zip(&group.orders)
        .map(|((a, b), d)| (a + d - b) % d * (big / d))
        .collect();
    let total: ComplexNeumaierSum = group
        .characters()
        .map(|chi| {
            let angle = chi
                .exponents
                .iter()
                .zip(&diffs)
                .fold(0u64, |acc, (e, x)| (acc + e * x) % big);
            root_of_unity(angle, big)
        })
        .collect();
    Ok(total.value() / group.size() as f64)
}

/// Primitive characters modulo `q` in lexicographic exponent order.
pub fn primitive_characters(q: u64) -> Result<Vec<DirichletCharacter>, CharacterError> {
    Ok(CharacterGroup::new(q)?.primitive_characters())
}

/// Cache of exact primitive kernels keyed by `(k, m mod k, n mod k)`.
#[derive(Debug, Default)]
pub struct PrimitiveKernel {
    groups: DashMap<u64, Arc<CharacterGroup>>,
    memo: DashMap<(u64, u64, u64), i64>,
}

impl PrimitiveKernel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn group(&self, k: u64) -> Result<Arc<CharacterGroup>, CharacterError> {
        if let Some(g) = self.groups.get(&k) {
            return Ok(Arc::clone(&g));
        }
        let g = CharacterGroup::new(k)?;
        self.groups.insert(k, Arc::clone(&g));
        Ok(g)
    }

    /// `Σ_{χ primitive mod k} χ(m) χ̄(n)`.
    pub fn value(&self, k: u64, m: u64, n: u64) -> Result<i64, CharacterError> {
        let key = (k, m % k, n % k);
        if let Some(v) = self.memo.get(&key) {
            return Ok(*v);
        }
        let v = self.group(k)?.primitive_kernel(m, n);
        self.memo.insert(key, v);
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.memo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.memo.is_empty()
    }
}

/// Conductor by the definition: the least divisor `f` of `q` such that `χ`
/// is trivial on units `≡ 1 (mod f)`. Quadratic in `q`, for cross-checks.
pub fn conductor_by_definition(chi: &DirichletCharacter) -> u64 {
    let q = chi.modulus();
    let divisors = chi.group.factorization.divisors();
    for f in divisors {
        let trivial = (1..q)
            .step_by(f as usize)
            .filter(|&n| gcd(n, q) == 1)
            .all(|n| chi.evaluate_exact(n).is_some_and(|r| r.is_one()));
        if trivial {
            return f;
        }
    }
    q
}
