//! Experiment configuration files.

use std::path::{Path, PathBuf};

use alsieve::bilinear::{ExperimentTemplate, Regime};
use alsieve::{CheckKind, MollifierWeight, SmoothCutoff, VectorSource};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Registered cutoff names.
pub const CUTOFFS: [&str; 1] = ["standard"];

pub fn cutoff_by_name(name: &str) -> Option<SmoothCutoff> {
    match name {
        "standard" => Some(SmoothCutoff::standard().clone()),
        _ => None,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output: OutputConfig,
    pub identities: IdentitiesConfig,
    pub asymptotics: AsymptoticsConfig,
    pub sieve: SieveConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Worker threads; 0 means the rayon default.
    pub workers: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentitiesConfig {
    pub cutoff: String,
    pub q_values: Vec<f64>,
    /// `C = Q^c_exponent`, raised to the smallest admissible value if needed.
    pub c_exponent: f64,
    pub pairs: usize,
    pub max_mn: u64,
    pub seed: u64,
    /// Exhaustive range of `l` and `u` for the exact lemmas.
    pub lemma_max: u64,
    pub lemma_draws: usize,
    pub lemma_coefficient_max: u64,
    pub orthogonality_q_max: u64,
    pub orthogonality_pairs: usize,
    pub count_q_max: u64,
    pub euler_degrees: Vec<u32>,
    pub euler_delta_max: u64,
    pub euler_truncation: usize,
    pub tolerance: IdentityTolerances,
}

impl Default for IdentitiesConfig {
    fn default() -> Self {
        Self {
            cutoff: "standard".into(),
            q_values: vec![50.0, 100.0, 200.0],
            c_exponent: 0.25,
            pairs: 50,
            max_mn: 30,
            seed: 2024,
            lemma_max: 200,
            lemma_draws: 5,
            lemma_coefficient_max: 100,
            orthogonality_q_max: 200,
            orthogonality_pairs: 20,
            count_q_max: 500,
            euler_degrees: vec![1, 2, 3],
            euler_delta_max: 30,
            euler_truncation: 10_000,
            tolerance: IdentityTolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentityTolerances {
    /// Relative to `Δ(1, 1)`.
    pub split: f64,
    /// Relative to `Δ(1, 1)`.
    pub cancellation: f64,
    /// Absolute.
    pub euler_maclaurin: f64,
    /// Absolute.
    pub orthogonality: f64,
}

impl Default for IdentityTolerances {
    fn default() -> Self {
        Self {
            split: 1e-9,
            cancellation: 1e-9,
            euler_maclaurin: 1e-8,
            orthogonality: 1e-12,
        }
    }
}

impl IdentityTolerances {
    pub fn uniform(t: f64) -> Self {
        Self {
            split: t,
            cancellation: t,
            euler_maclaurin: t,
            orthogonality: t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsymptoticsConfig {
    pub grid: Vec<f64>,
    pub template: ExperimentTemplate,
    /// Fail when the last normalized error is not below the first.
    pub require_decay: bool,
    /// Grid for `|Δ(1,1) − Ψ̄𝔖Q|/Q^{1/2}` and the diagonal structure.
    pub cardinality_grid: Vec<f64>,
    pub diagonal_m_max: u64,
    pub special: SpecialConfig,
    /// Echoed into the table metadata; the sweep itself draws nothing.
    pub seed: u64,
}

impl Default for AsymptoticsConfig {
    fn default() -> Self {
        Self {
            grid: vec![100.0, 200.0, 400.0, 800.0],
            template: ExperimentTemplate::default(),
            require_decay: true,
            cardinality_grid: vec![100.0, 200.0, 400.0, 800.0, 1600.0],
            diagonal_m_max: 50,
            special: SpecialConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecialConfig {
    pub grid: Vec<f64>,
    pub degrees: Vec<u32>,
    /// `X = Q^θ`; `θ = 0` uses `ρ = δ_{r=1}`.
    pub mollifier_exponents: Vec<f64>,
    pub mollifier: MollifierWeight,
}

impl Default for SpecialConfig {
    fn default() -> Self {
        Self {
            grid: vec![100.0, 400.0],
            degrees: vec![1, 2],
            mollifier_exponents: vec![0.0, 0.5],
            mollifier: MollifierWeight::LogRamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SieveConfig {
    pub suites: Vec<CheckKind>,
    pub trials: usize,
    pub seed: u64,
    pub q: u64,
    pub n: usize,
    pub shifted_offset: u64,
    pub t: f64,
    pub sources: Vec<VectorSource>,
    /// Allowed excess of a ratio over 1.
    pub ratio_slack: f64,
    /// `Q` for the bilinear bound check on the default experiment config;
    /// 0 skips it.
    pub bilinear_q: f64,
    pub mellin_u_max: f64,
}

impl Default for SieveConfig {
    fn default() -> Self {
        Self {
            suites: CheckKind::SUITES.to_vec(),
            trials: 100,
            seed: 7,
            q: 60,
            n: 60,
            shifted_offset: 1_000_000,
            t: 4.0,
            sources: VectorSource::ALL.to_vec(),
            ratio_slack: 1e-9,
            bilinear_q: 100.0,
            mellin_u_max: 20.0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical TOML.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let id = &self.identities;
        if cutoff_by_name(&id.cutoff).is_none() {
            return Err(CliError::Config(format!(
                "unknown cutoff {:?}; registered: {}",
                id.cutoff,
                CUTOFFS.join(", ")
            )));
        }
        for &g in id.euler_degrees.iter().chain(&self.asymptotics.special.degrees) {
            if !(1..=3).contains(&g) {
                return Err(CliError::Config(format!("degree {g} is not in 1..=3")));
            }
        }
        if !(1..=3).contains(&self.asymptotics.template.degree) {
            return Err(CliError::Config(format!(
                "degree {} is not in 1..=3",
                self.asymptotics.template.degree
            )));
        }
        if id.max_mn == 0 || id.lemma_coefficient_max == 0 {
            return Err(CliError::Config("ranges must be positive".into()));
        }
        for (name, grid) in [
            ("asymptotics.grid", &self.asymptotics.grid),
            ("asymptotics.cardinality_grid", &self.asymptotics.cardinality_grid),
            ("asymptotics.special.grid", &self.asymptotics.special.grid),
        ] {
            if grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CliError::Config(format!("{name} must be strictly increasing")));
            }
        }
        match self.asymptotics.template.regime {
            Regime::Short { epsilon } if !(0.0..1.0).contains(&epsilon) => {
                return Err(CliError::Config(format!("epsilon {epsilon} outside [0, 1)")))
            }
            Regime::Long { delta, .. } if !(delta > 0.0 && delta < 2.0) => {
                return Err(CliError::Config(format!("delta {delta} outside (0, 2)")))
            }
            _ => {}
        }
        let s = &self.sieve;
        if s.trials > 0 && s.sources.is_empty() {
            return Err(CliError::Config("sieve.sources is empty".into()));
        }
        if s.q == 0 || s.n == 0 {
            return Err(CliError::Config("sieve.q and sieve.n must be positive".into()));
        }
        if s.suites.contains(&CheckKind::Hybrid) && s.t < 1.0 {
            return Err(CliError::Config(format!("sieve.t = {} is below 1", s.t)));
        }
        if s.suites.contains(&CheckKind::Bilinear) {
            return Err(CliError::Config(
                "bilinear is configured through sieve.bilinear_q, not sieve.suites".into(),
            ));
        }
        Ok(())
    }

    /// Replaces every section seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.identities.seed = seed;
        self.asymptotics.seed = seed;
        self.sieve.seed = seed;
    }

    /// Replaces every residual tolerance.
    pub fn set_tolerance(&mut self, t: f64) {
        self.identities.tolerance = IdentityTolerances::uniform(t);
        self.sieve.ratio_slack = t;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn partial_files_take_defaults() {
        let cfg = ExperimentConfig::from_toml("[sieve]\ntrials = 3\n").unwrap();
        assert_eq!(cfg.sieve.trials, 3);
        assert_eq!(cfg.identities, IdentitiesConfig::default());
    }

    #[test]
    fn unknown_names_are_rejected() {
        assert!(ExperimentConfig::from_toml("[identities]\ncutoff = \"box\"\n").is_err());
        assert!(ExperimentConfig::from_toml("[sieve]\nsources = [\"uniform\"]\n").is_err());
        assert!(ExperimentConfig::from_toml("[sieve]\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("[asymptotics]\ngrid = [200.0, 100.0]\n").is_err());
    }

    #[test]
    fn regime_syntax() {
        let text = "[asymptotics.template]\nregime = { kind = \"long\", delta = 0.25, localized = true }\n\
                    degree = 1\nmollifier = \"sharp\"\nmollifier_exponent = 0.5\nc_exponent = 0.25\n";
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(
            cfg.asymptotics.template.regime,
            Regime::Long {
                delta: 0.25,
                localized: true
            }
        );
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
