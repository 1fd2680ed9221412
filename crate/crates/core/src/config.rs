//! Experiment configuration: strict JSON with a versioned `schema` field.
//!
//! Every block and field is optional and falls back to its documented
//! default. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bt::{FitConfig, Solver};
use crate::mesh::MeshParams;
use crate::reputation::ReputationParams;
use crate::scheduler::hex;
use crate::sim::{SimParams, SwarmConfig};
use crate::sybil::{EconomicParams, SybilParams};

pub const SCHEMA: &str = "swarmlab/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Experiment {
    #[serde(rename = "fit")]
    Fit,
    #[serde(rename = "round")]
    Round,
    #[serde(rename = "sweep-size")]
    SweepSize,
    #[serde(rename = "sweep-byzantine")]
    SweepByzantine,
    #[serde(rename = "sweep-sybil")]
    SweepSybil,
    #[serde(rename = "mesh-build")]
    MeshBuild,
    #[serde(rename = "route")]
    Route,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).unwrap();
        f.write_str(s.as_str().unwrap())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepBlock {
    pub sizes: Vec<usize>,
    pub fractions: Vec<f64>,
    /// Measured rounds per run, after the swarm's burn-in.
    pub rounds: u64,
    pub replicates: usize,
}

impl Default for SweepBlock {
    fn default() -> Self {
        Self {
            sizes: vec![1, 3, 5, 7, 10, 15, 20, 25, 30, 35],
            fractions: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            rounds: 500,
            replicates: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SybilSweepBlock {
    pub ks: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub horizon: u64,
    /// Honest nodes the attacker's identities join.
    pub honest_nodes: usize,
    pub economics: EconomicParams,
}

impl Default for SybilSweepBlock {
    fn default() -> Self {
        Self {
            ks: vec![2, 3, 4, 5, 6],
            lambdas: vec![12.0, 15.0, 20.0],
            horizon: 200,
            honest_nodes: 16,
            economics: EconomicParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshBlock {
    pub params: MeshParams,
    /// Random points generated when no points file is given.
    pub n_points: usize,
    pub dim: usize,
    /// Per-node request rates; absent nodes carry none.
    pub loads: BTreeMap<usize, f64>,
}

impl Default for MeshBlock {
    fn default() -> Self {
        Self {
            params: MeshParams::default(),
            n_points: 1000,
            dim: 64,
            loads: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub schema: String,
    /// Optional; when present it must match the subcommand.
    pub experiment: Option<Experiment>,
    pub master_seed: u64,
    /// Absent means the experiment's default: gradient ascent for `fit`,
    /// Newton for simulations.
    pub fit: Option<FitConfig>,
    pub reputation: ReputationParams,
    pub sybil: SybilParams,
    pub swarm: SwarmConfig,
    pub sweep: SweepBlock,
    pub sybil_sweep: SybilSweepBlock,
    pub mesh: MeshBlock,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema: SCHEMA.to_string(),
            experiment: None,
            master_seed: SwarmConfig::default().master_seed,
            fit: None,
            reputation: ReputationParams::default(),
            sybil: SybilParams::default(),
            swarm: SwarmConfig::default(),
            sweep: SweepBlock::default(),
            sybil_sweep: SybilSweepBlock::default(),
            mesh: MeshBlock::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn field(name: &str, msg: impl fmt::Display) -> ConfigError {
    ConfigError(format!("{name}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError(format!("invalid config: {e}")))?;
        if cfg.schema.is_empty() {
            return Err(field("schema", format!("missing, expected \"{SCHEMA}\"")));
        }
        if cfg.schema != SCHEMA {
            return Err(field("schema", format!("expected \"{SCHEMA}\", got \"{}\"", cfg.schema)));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    /// Fills experiment-dependent defaults, applies the master seed and
    /// validates every block used by `kind`.
    pub fn resolve(mut self, kind: Experiment) -> Result<Self, ConfigError> {
        if let Some(declared) = self.experiment {
            if declared != kind {
                return Err(field(
                    "experiment",
                    format!("config is for '{declared}' but '{kind}' was requested"),
                ));
            }
        }
        self.experiment = Some(kind);
        if self.fit.is_none() {
            let solver = if kind == Experiment::Fit { Solver::Gradient } else { Solver::Newton };
            self.fit = Some(FitConfig { solver, ..FitConfig::default() });
        }
        self.swarm.master_seed = self.master_seed;
        self.validate(kind)?;
        Ok(self)
    }

    fn validate(&self, kind: Experiment) -> Result<(), ConfigError> {
        let fit = self.fit.unwrap_or_default();
        fit.validate().map_err(|e| field("fit", e))?;
        match kind {
            Experiment::Fit => {}
            Experiment::MeshBuild | Experiment::Route => {
                self.mesh.params.validate().map_err(|e| field("mesh.params", e))?;
                if self.mesh.dim == 0 {
                    return Err(field("mesh.dim", "must be at least 1"));
                }
                if let Some((node, rate)) = self.mesh.loads.iter().find(|(_, r)| !(**r >= 0.0)) {
                    return Err(field("mesh.loads", format!("rate of node {node} must be non-negative (got {rate})")));
                }
            }
            _ => {
                self.sim_params().validate().map_err(ConfigError)?;
                match kind {
                    Experiment::SweepSize => {
                        if self.sweep.sizes.is_empty() {
                            return Err(field("sweep.sizes", "must not be empty"));
                        }
                        if self.sweep.sizes.contains(&0) {
                            return Err(field("sweep.sizes", "sizes must be at least 1"));
                        }
                        self.check_replicates()?;
                    }
                    Experiment::SweepByzantine => {
                        if self.sweep.fractions.is_empty() {
                            return Err(field("sweep.fractions", "must not be empty"));
                        }
                        if let Some(f) = self.sweep.fractions.iter().find(|f| !(0.0..=0.5).contains(*f)) {
                            return Err(field("sweep.fractions", format!("values must lie in [0, 0.5] (got {f})")));
                        }
                        self.check_replicates()?;
                    }
                    Experiment::SweepSybil => {
                        let s = &self.sybil_sweep;
                        if s.ks.is_empty() || s.ks.contains(&0) {
                            return Err(field("sybil_sweep.ks", "must be a non-empty list of positive counts"));
                        }
                        if s.lambdas.is_empty() {
                            return Err(field("sybil_sweep.lambdas", "must not be empty"));
                        }
                        for &l in &s.lambdas {
                            let mut sy = self.sybil;
                            sy.lambda = l;
                            sy.validate(s.honest_nodes + s.ks[0])
                                .map_err(|e| field("sybil_sweep.lambdas", e))?;
                        }
                        s.economics.validate().map_err(|e| field("sybil_sweep.economics", e))?;
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    fn check_replicates(&self) -> Result<(), ConfigError> {
        if self.sweep.replicates == 0 {
            return Err(field("sweep.replicates", "must be at least 1"));
        }
        Ok(())
    }

    pub fn sim_params(&self) -> SimParams {
        let mut swarm = self.swarm.clone();
        swarm.master_seed = self.master_seed;
        SimParams {
            swarm,
            fit: self.fit.unwrap_or(FitConfig {
                solver: Solver::Newton,
                ..FitConfig::default()
            }),
            reputation: self.reputation,
            sybil: self.sybil,
        }
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// SHA-256 of the pretty-printed resolved configuration, hex encoded.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_pretty_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_needs_schema() {
        let err = ExperimentConfig::from_json("{}").unwrap_err();
        assert!(err.0.starts_with("schema"), "{err}");
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"schema": "swarmlab/v1"}"#).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_json(r#"{"schema": "swarmlab/v1", "swarm": {"n_node": 3}}"#).unwrap_err();
        assert!(err.0.contains("n_node"), "{err}");
        assert!(err.0.contains("line 1"), "{err}");
    }

    #[test]
    fn range_errors_name_the_field() {
        let cfg = ExperimentConfig::from_json(r#"{"schema": "swarmlab/v1", "swarm": {"byzantine_fraction": 1.5}}"#).unwrap();
        let err = cfg.resolve(Experiment::Round).unwrap_err();
        assert!(err.0.contains("byzantine_fraction"), "{err}");
    }

    #[test]
    fn declared_experiment_must_match() {
        let cfg = ExperimentConfig::from_json(r#"{"schema": "swarmlab/v1", "experiment": "round"}"#).unwrap();
        assert!(cfg.clone().resolve(Experiment::Round).is_ok());
        assert!(cfg.resolve(Experiment::SweepSize).is_err());
    }

    #[test]
    fn resolution_round_trips() {
        let cfg = ExperimentConfig::default().resolve(Experiment::SweepByzantine).unwrap();
        let again = ExperimentConfig::from_json(&cfg.to_pretty_json()).unwrap();
        assert_eq!(again.clone().resolve(Experiment::SweepByzantine).unwrap(), cfg);
        assert_eq!(again.hash(), cfg.hash());
    }

    #[test]
    fn default_solver_depends_on_experiment() {
        let fit = ExperimentConfig::default().resolve(Experiment::Fit).unwrap();
        assert_eq!(fit.fit.unwrap().solver, Solver::Gradient);
        let round = ExperimentConfig::default().resolve(Experiment::Round).unwrap();
        assert_eq!(round.fit.unwrap().solver, Solver::Newton);
    }
}
