//! The three suites behind the subcommands, independent of files.

use alsieve::arith::{self, gcd};
use alsieve::bilinear::{
    delta_diagonal, format_float, run_experiment, singular_constant, special_direct_diagonal, special_main_term,
};
use alsieve::characters::{orthogonality_sum, primitive_characters};
use alsieve::coeffs::{euler_factor_check, mollifier_mu_w};
use alsieve::delta::{gcd_expansion_check, mobius_switch_check};
use alsieve::sieve_checks::{bilinear_bound_check, mellin_l1_estimate, run_suite, MellinL1};
use alsieve::{
    CharacterGroup, DeltaEngine, DeltaParams, ExperimentTable, ExperimentTemplate, LCoefficients,
    MollifierCoefficients, SieveCheckResult, SpecialShapeConfig, SuiteConfig, SuiteSummary, Tolerance,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{cutoff_by_name, AsymptoticsConfig, IdentitiesConfig, SieveConfig};
use crate::CliError;

/// One checked residual.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCase {
    pub suite: &'static str,
    pub q: Option<f64>,
    /// Case parameters, e.g. `(m, n)` or `(l, a, s)`; unused slots are 0.
    pub params: [u64; 3],
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl IdentityCase {
    fn new(suite: &'static str, q: Option<f64>, params: [u64; 3], residual: f64, tolerance: f64) -> Self {
        Self {
            suite,
            q,
            params,
            residual,
            tolerance,
            pass: residual <= tolerance,
        }
    }

    fn exact(suite: &'static str, q: Option<f64>, params: [u64; 3], ok: bool) -> Self {
        Self::new(suite, q, params, if ok { 0.0 } else { 1.0 }, 0.0)
    }

    pub const CSV_HEADER: &'static str = "suite,q,p1,p2,p3,residual,tolerance,pass";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.suite,
            self.q.map(format_float).unwrap_or_default(),
            self.params[0],
            self.params[1],
            self.params[2],
            format_float(self.residual),
            format_float(self.tolerance),
            self.pass
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub cases: Vec<IdentityCase>,
}

impl IdentityReport {
    pub fn failures(&self) -> impl Iterator<Item = &IdentityCase> {
        self.cases.iter().filter(|c| !c.pass)
    }

    pub fn passed(&self) -> bool {
        self.failures().next().is_none()
    }

    /// Largest residual over tolerance-scaled cases of one suite.
    pub fn worst(&self, suite: &str) -> Option<&IdentityCase> {
        self.cases
            .iter()
            .filter(|c| c.suite == suite)
            .max_by(|a, b| a.residual.total_cmp(&b.residual))
    }

    pub fn count(&self, suite: &str) -> usize {
        self.cases.iter().filter(|c| c.suite == suite).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(IdentityCase::CSV_HEADER);
        out.push('\n');
        for c in &self.cases {
            out.push_str(&c.to_csv());
            out.push('\n');
        }
        out
    }
}

pub fn delta_params(cutoff: &str, q: f64, c_exponent: f64) -> Result<DeltaParams, CliError> {
    let psi = cutoff_by_name(cutoff).ok_or_else(|| CliError::Config(format!("unknown cutoff {cutoff:?}")))?;
    let (lo, hi) = psi.support();
    let c = q.powf(c_exponent).max(hi / lo);
    DeltaParams::new(q, c, psi).map_err(|e| CliError::Domain(format!("Q = {q}: {e}")))
}

fn random_pairs(rng: &mut ChaCha8Rng, count: usize, max: u64) -> Vec<(u64, u64)> {
    (0..count)
        .map(|_| (rng.random_range(1..=max), rng.random_range(1..=max)))
        .collect()
}

fn coprime_pair(rng: &mut ChaCha8Rng, max: u64) -> (u64, u64) {
    loop {
        let (a, s) = (rng.random_range(1..=max), rng.random_range(1..=max));
        if gcd(a, s) == 1 {
            return (a, s);
        }
    }
}

pub fn identity_suite(cfg: &IdentitiesConfig) -> Result<IdentityReport, CliError> {
    let tol = cfg.tolerance;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pairs = random_pairs(&mut rng, cfg.pairs, cfg.max_mn);
    let mut cases = Vec::new();
    for &q in &cfg.q_values {
        let engine = DeltaEngine::new(delta_params(&cfg.cutoff, q, cfg.c_exponent)?);
        let scale = engine.delta_direct(1, 1).map_err(domain)?;
        for &(m, n) in &pairs {
            let r = engine.report(m, n, true).map_err(domain)?;
            cases.push(IdentityCase::new("split", Some(q), [m, n, 0], r.residual_split, tol.split * scale));
            let mut em = r.residual_em_double_prime;
            if let Some(c) = r.residual_cancel {
                cases.push(IdentityCase::new(
                    "cancellation",
                    Some(q),
                    [m, n, 0],
                    c,
                    tol.cancellation * scale,
                ));
                em = em.max(r.residual_em.unwrap_or(0.0)).max(r.residual_em_prime.unwrap_or(0.0));
            }
            cases.push(IdentityCase::new("euler_maclaurin", Some(q), [m, n, 0], em, tol.euler_maclaurin));
        }
    }
    for l in 1..=cfg.lemma_max {
        for _ in 0..cfg.lemma_draws {
            let (a, s) = coprime_pair(&mut rng, cfg.lemma_coefficient_max);
            let ok = mobius_switch_check(l, a, s).map_err(domain)?;
            cases.push(IdentityCase::exact("mobius_switch", None, [l, a, s], ok));
        }
    }
    for u in (1..=cfg.lemma_max).filter(|&u| arith::mobius(u) != 0) {
        for _ in 0..cfg.lemma_draws {
            let (m, n) = (
                rng.random_range(1..=cfg.lemma_coefficient_max),
                rng.random_range(1..=cfg.lemma_coefficient_max),
            );
            let ok = gcd_expansion_check(u, m, n).map_err(domain)?;
            cases.push(IdentityCase::exact("gcd_expansion", None, [u, m, n], ok));
        }
    }
    for q in 1..=cfg.orthogonality_q_max {
        for i in 0..cfg.orthogonality_pairs {
            let draw = |rng: &mut ChaCha8Rng| loop {
                let v = rng.random_range(1..=10 * q + 10);
                if gcd(v, q) == 1 {
                    return v;
                }
            };
            let m = draw(&mut rng);
            // every other pair is congruent
            let n = if i % 2 == 0 { m + q * rng.random_range(0..10u64) } else { draw(&mut rng) };
            let v = orthogonality_sum(q, m, n).map_err(domain)?;
            let expect = if (m % q) == (n % q) { 1.0 } else { 0.0 };
            let residual = (v.re - expect).abs().max(v.im.abs());
            cases.push(IdentityCase::new("orthogonality", None, [q, m, n], residual, tol.orthogonality));
        }
    }
    for q in 1..=cfg.count_q_max {
        let count = primitive_characters(q).map_err(domain)?.len() as u64;
        cases.push(IdentityCase::exact("primitive_count", None, [q, count, 0], count == arith::phi_star(q)));
    }
    let principal = CharacterGroup::new(1).map_err(domain)?.principal();
    for &g in &cfg.euler_degrees {
        let lambda = LCoefficients::zeta_power(g).map_err(domain)?;
        for delta in 1..=cfg.euler_delta_max {
            let r = euler_factor_check(&lambda, delta, &principal, cfg.euler_truncation).map_err(domain)?;
            cases.push(IdentityCase::exact(
                "euler_factor",
                None,
                [u64::from(g), delta, r.support.len() as u64],
                r.violations.is_empty(),
            ));
        }
    }
    Ok(IdentityReport { cases })
}

fn domain(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CardinalityRow {
    pub q: f64,
    pub delta_11: f64,
    pub main: f64,
    /// `|Δ(1,1) − Ψ̄𝔖Q| / Q^{1/2}`.
    pub normalized_gap: f64,
    /// `max_{m ≤ M} |Δ(m,m) − δ(m)Δ(1,1)| / (τ(m) Q^{1/2})`.
    pub diagonal_structure: f64,
    pub diagonal_argmax: u64,
}

impl CardinalityRow {
    pub const CSV_HEADER: &'static str = "Q,delta_11,main,normalized_gap,diagonal_structure,diagonal_argmax";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            format_float(self.q),
            format_float(self.delta_11),
            format_float(self.main),
            format_float(self.normalized_gap),
            format_float(self.diagonal_structure),
            self.diagonal_argmax
        )
    }
}

pub fn cardinality_rows(cutoff: &str, grid: &[f64], m_max: u64) -> Result<Vec<CardinalityRow>, CliError> {
    grid.iter()
        .map(|&q| {
            let p = delta_params(cutoff, q, 0.0)?;
            let d11 = delta_diagonal(&p, 1);
            let main = p.psi().mean() * singular_constant() * q;
            let (mut worst, mut arg) = (0.0f64, 1);
            for m in 1..=m_max {
                let v = (delta_diagonal(&p, m) - arith::delta_factor(m) * d11).abs()
                    / (arith::divisor_power(m, 2) as f64 * q.sqrt());
                if v > worst {
                    (worst, arg) = (v, m);
                }
            }
            Ok(CardinalityRow {
                q,
                delta_11: d11,
                main,
                normalized_gap: (d11 - main).abs() / q.sqrt(),
                diagonal_structure: worst,
                diagonal_argmax: arg,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecialRow {
    pub q: f64,
    pub degree: u32,
    /// `X = Q^θ`; 0 for `ρ = δ_{r=1}`.
    pub theta: f64,
    pub main_term: f64,
    pub direct: f64,
    pub gap: f64,
    /// `gap / Q^{1/2 + 1/10}`.
    pub fitted_c: f64,
}

impl SpecialRow {
    pub const CSV_HEADER: &'static str = "Q,degree,theta,main_term,direct,gap,fitted_c";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            format_float(self.q),
            self.degree,
            format_float(self.theta),
            format_float(self.main_term),
            format_float(self.direct),
            format_float(self.gap),
            format_float(self.fitted_c)
        )
    }
}

pub fn special_rows(cfg: &AsymptoticsConfig, cutoff: &str) -> Result<Vec<SpecialRow>, CliError> {
    let s = &cfg.special;
    let mut rows = Vec::new();
    for &g in &s.degrees {
        for &theta in &s.mollifier_exponents {
            for &q in &s.grid {
                let rho = if theta == 0.0 {
                    MollifierCoefficients::unit()
                } else {
                    mollifier_mu_w(q.powf(theta), s.mollifier).map_err(domain)?
                };
                let shape = SpecialShapeConfig::new(
                    delta_params(cutoff, q, 0.0)?,
                    LCoefficients::zeta_power(g).map_err(domain)?,
                    rho.clone(),
                    rho,
                );
                let main = special_main_term(&shape, Tolerance::new(1e-12, 1e-11)).map_err(domain)?;
                let direct = special_direct_diagonal(&shape).map_err(domain)?;
                let gap = (main - direct).abs();
                rows.push(SpecialRow {
                    q,
                    degree: g,
                    theta,
                    main_term: main,
                    direct,
                    gap,
                    fitted_c: gap / q.powf(0.6),
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticsReport {
    pub table: ExperimentTable,
    pub cardinality: Vec<CardinalityRow>,
    pub special: Vec<SpecialRow>,
}

impl AsymptoticsReport {
    /// Normalized error at the end of the grid is below its start.
    pub fn decays(&self) -> bool {
        self.table.decay_ratio.map_or(true, |r| r < 1.0)
    }
}

pub fn asymptotics_suite(
    cfg: &AsymptoticsConfig,
    cutoff: &str,
    config_hash: &str,
) -> Result<AsymptoticsReport, CliError> {
    let table = run_table(&cfg.grid, &cfg.template, config_hash, cfg.seed)?;
    Ok(AsymptoticsReport {
        table,
        cardinality: cardinality_rows(cutoff, &cfg.cardinality_grid, cfg.diagonal_m_max)?,
        special: special_rows(cfg, cutoff)?,
    })
}

pub fn run_table(
    grid: &[f64],
    template: &ExperimentTemplate,
    config_hash: &str,
    seed: u64,
) -> Result<ExperimentTable, CliError> {
    run_experiment(grid, template, config_hash, seed).map_err(domain)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BilinearCheck {
    pub mellin: MellinL1,
    pub result: SieveCheckResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SieveReport {
    pub summaries: Vec<SuiteSummary>,
    pub bilinear: Option<BilinearCheck>,
}

impl SieveReport {
    pub fn worst(&self) -> f64 {
        self.summaries
            .iter()
            .map(SuiteSummary::worst)
            .chain(self.bilinear.iter().map(|b| b.result.ratio))
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SuiteSummary::CSV_HEADER);
        out.push('\n');
        for s in &self.summaries {
            out.push_str(&s.to_csv_row());
            out.push('\n');
        }
        if let Some(b) = &self.bilinear {
            let r = format_float(b.result.ratio);
            out.push_str(&format!("bilinear,1,,{r},{r},{r},\n"));
        }
        out
    }
}

pub fn sieve_suite(cfg: &SieveConfig) -> Result<SieveReport, CliError> {
    let mut summaries = Vec::new();
    for &kind in &cfg.suites {
        let suite = SuiteConfig {
            kind,
            trials: cfg.trials,
            seed: cfg.seed,
            q: cfg.q,
            n: cfg.n,
            m: cfg.shifted_offset,
            t: cfg.t,
            sources: cfg.sources.clone(),
        };
        summaries.push(run_suite(&suite).map_err(domain)?);
    }
    let bilinear = match cfg.bilinear_q {
        q if q > 0.0 => {
            let bc = ExperimentTemplate::default().config_for(q).map_err(domain)?;
            let mellin = mellin_l1_estimate(bc.f.as_ref(), cfg.mellin_u_max);
            let result = bilinear_bound_check(&bc, mellin.script_l).map_err(domain)?;
            Some(BilinearCheck { mellin, result })
        }
        _ => None,
    };
    Ok(SieveReport { summaries, bilinear })
}
