//! Run configuration: a TOML file with one section per concern.
//!
//! ```toml
//! [map]
//! family = "power_plus_c"
//! N = 0
//! c_re = 0.1
//!
//! [domain]
//! k = 0.8
//!
//! [numeric]
//! grid_shape = [65, 64]
//! n = 8
//! ```
//!
//! Unknown keys are rejected. A periodic sequence is written as an array of
//! tables, `[[map]]`, one per step.

use std::path::{Path, PathBuf};

use repeller_core::components::two_cantor_fixture;
use repeller_core::random::{EnsembleSpec, SweepAxis};
use repeller_core::solver::SolverConfig;
use repeller_core::{Complex64, GridShape, HyperbolicAnnulus, IfsBranch, MapDescriptor};
use serde::{Deserialize, Serialize};

use crate::RunError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must match the subcommand when present.
    pub subcommand: Option<String>,
    pub map: Option<MapBlock>,
    #[serde(default)]
    pub domain: DomainBlock,
    #[serde(default)]
    pub numeric: NumericBlock,
    pub ensemble: Option<EnsembleBlock>,
    pub sweep: Option<SweepBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MapBlock {
    One(MapSpec),
    Sequence(Vec<MapSpec>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    /// `z^(N+2) + c`.
    PowerPlusC {
        #[serde(rename = "N", default)]
        n: u32,
        #[serde(default)]
        c_re: f64,
        #[serde(default)]
        c_im: f64,
    },
    CirclePower { d: u32 },
    /// Affine branches `t ↦ ratio·t + translation` on the band chart.
    LinearIfs { branches: Vec<BranchSpec> },
    /// `count` equal branches of ratio `ratio`.
    UniformCantor { count: usize, ratio: f64 },
    /// Two invariant Cantor sets with ratios 1/3 and 1/4 and no transitions.
    TwoCantor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub ratio: f64,
    pub translation: f64,
    pub range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBlock {
    /// `U = A_{k²/2}`, `K = closure(A_{k/2})`.
    pub k: Option<f64>,
    #[serde(rename = "rho_U")]
    pub rho_u: Option<f64>,
    #[serde(rename = "rho_K")]
    pub rho_k: Option<f64>,
}

pub const DEFAULT_K: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericBlock {
    pub grid_shape: [usize; 2],
    pub n: usize,
    pub s: f64,
    pub s_range: [f64; 2],
    pub tol: f64,
    pub max_iter: usize,
    pub cocycle_steps: usize,
    pub burn_in: usize,
    pub radii: Option<Vec<f64>>,
    pub depth: usize,
    pub cap: usize,
    pub base_re: f64,
    pub base_im: f64,
    pub delta: Option<f64>,
}

impl Default for NumericBlock {
    fn default() -> Self {
        let solver = SolverConfig::default();
        Self {
            grid_shape: [33, 64],
            n: solver.n,
            s: 1.0,
            s_range: [solver.s_range.0, solver.s_range.1],
            tol: solver.tol,
            max_iter: solver.max_iter,
            cocycle_steps: solver.cocycle_steps,
            burn_in: solver.burn_in,
            radii: None,
            depth: 16,
            cap: repeller_core::boxcount::DEFAULT_CAP,
            base_re: 1.0,
            base_im: 0.0,
            delta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleBlock {
    pub a_re: f64,
    pub a_im: f64,
    pub r: f64,
    pub lambda: f64,
    /// Falls back to `[domain] k`, then to 0.99.
    pub k: Option<f64>,
    pub seq_len: usize,
    pub seed: u64,
    pub replicas: usize,
    pub burn_in: usize,
}

impl Default for EnsembleBlock {
    fn default() -> Self {
        let spec = EnsembleSpec::default();
        Self {
            a_re: 0.0,
            a_im: 0.0,
            r: 0.0,
            lambda: 0.0,
            k: None,
            seq_len: spec.seq_len,
            seed: spec.seed,
            replicas: spec.replicas,
            burn_in: spec.burn_in,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    /// `a_modulus`, `r` or `lambda`.
    pub axis: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub path: Option<PathBuf>,
    pub format: Option<Format>,
}

fn invalid(msg: impl Into<String>) -> RunError {
    RunError::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    /// `(U, K)` from `rho_U`/`rho_K` when both are given, else from `k`.
    pub fn domains(&self) -> Result<(HyperbolicAnnulus, HyperbolicAnnulus), RunError> {
        let d = &self.domain;
        match (d.rho_u, d.rho_k, d.k) {
            (Some(_), Some(_), Some(_)) => Err(invalid("give either k or rho_U/rho_K, not both")),
            (Some(u), Some(k), None) => {
                if !(u < k) {
                    return Err(invalid("rho_U must be smaller than rho_K"));
                }
                Ok((HyperbolicAnnulus::new(u).map_err(core_config)?, HyperbolicAnnulus::new(k).map_err(core_config)?))
            }
            (None, None, k) => HyperbolicAnnulus::example_pair(k.unwrap_or(DEFAULT_K)).map_err(core_config),
            _ => Err(invalid("rho_U and rho_K must be given together")),
        }
    }

    pub fn maps(&self) -> Result<Vec<MapDescriptor>, RunError> {
        let (u, k) = self.domains()?;
        let specs = match &self.map {
            None => return Err(invalid("missing [map] section")),
            Some(MapBlock::One(m)) => vec![m.clone()],
            Some(MapBlock::Sequence(v)) if v.is_empty() => return Err(invalid("empty map sequence")),
            Some(MapBlock::Sequence(v)) => v.clone(),
        };
        specs.iter().map(|m| m.build(&k, u)).collect()
    }

    pub fn shape(&self) -> Result<GridShape, RunError> {
        let [r, a] = self.numeric.grid_shape;
        if r < 2 || a < 1 {
            return Err(invalid("grid_shape needs at least 2 radial and 1 angular node"));
        }
        Ok(GridShape::new(r, a))
    }

    pub fn solver(&self) -> Result<SolverConfig, RunError> {
        let n = &self.numeric;
        if n.n == 0 || !(n.tol > 0.0) || !(n.s_range[0] < n.s_range[1]) || n.cocycle_steps <= n.burn_in {
            return Err(invalid("numeric block needs n >= 1, tol > 0, s_range increasing, cocycle_steps > burn_in"));
        }
        Ok(SolverConfig {
            n: n.n,
            s_range: (n.s_range[0], n.s_range[1]),
            tol: n.tol,
            max_iter: n.max_iter,
            cocycle_steps: n.cocycle_steps,
            burn_in: n.burn_in,
        })
    }

    pub fn ensemble(&self) -> Result<EnsembleSpec, RunError> {
        let e = self.ensemble.clone().ok_or_else(|| invalid("missing [ensemble] section"))?;
        let spec = EnsembleSpec {
            a: Complex64::new(e.a_re, e.a_im),
            r: e.r,
            lambda: e.lambda,
            k: e.k.or(self.domain.k).unwrap_or(DEFAULT_K),
            seq_len: e.seq_len,
            seed: e.seed,
            replicas: e.replicas,
            burn_in: e.burn_in,
        };
        spec.validate().map_err(core_config)?;
        Ok(spec)
    }

    pub fn sweep_axis(&self) -> Result<(SweepAxis, Vec<f64>), RunError> {
        let s = self.sweep.as_ref().ok_or_else(|| invalid("missing [sweep] section"))?;
        let axis = match s.axis.as_str() {
            "a_modulus" => SweepAxis::AModulus,
            "r" => SweepAxis::R,
            "lambda" => SweepAxis::Lambda,
            other => return Err(invalid(format!("unknown sweep axis {other:?}"))),
        };
        if s.values.is_empty() {
            return Err(invalid("sweep needs at least one value"));
        }
        let base = self.ensemble()?;
        for &v in &s.values {
            axis.apply(&base, v).validate().map_err(core_config)?;
        }
        Ok((axis, s.values.clone()))
    }

    pub fn base_point(&self) -> Complex64 {
        Complex64::new(self.numeric.base_re, self.numeric.base_im)
    }
}

fn core_config(e: repeller_core::Error) -> RunError {
    invalid(format!("{}: {e}", e.name()))
}

impl MapSpec {
    pub fn build(&self, k: &HyperbolicAnnulus, u: HyperbolicAnnulus) -> Result<MapDescriptor, RunError> {
        match self {
            MapSpec::PowerPlusC { n, c_re, c_im } => Ok(MapDescriptor::power_plus_c(*n, Complex64::new(*c_re, *c_im), u)),
            MapSpec::CirclePower { d } => MapDescriptor::circle_power(*d, u).map_err(core_config),
            MapSpec::LinearIfs { branches } => {
                let branches = branches
                    .iter()
                    .map(|b| {
                        let branch = IfsBranch::new(b.ratio, b.translation);
                        match b.range {
                            Some([lo, hi]) => branch.with_range(lo, hi),
                            None => branch,
                        }
                    })
                    .collect();
                MapDescriptor::linear_ifs(branches, k, u).map_err(core_config)
            }
            MapSpec::UniformCantor { count, ratio } => MapDescriptor::uniform_cantor(*count, *ratio, k, u).map_err(core_config),
            MapSpec::TwoCantor => two_cantor_fixture(k, u).map_err(core_config),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let cfg = RunConfig::parse(
            r#"
            subcommand = "dimension"
            [map]
            family = "power_plus_c"
            N = 1
            c_re = 0.05
            [domain]
            k = 0.8
            [numeric]
            grid_shape = [17, 32]
            s_range = [0.5, 1.5]
            [output]
            format = "json"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.maps().unwrap()[0].degree(), 3);
        assert_eq!(cfg.numeric.n, 8);
        assert_eq!(cfg.output.format, Some(Format::Json));
    }

    #[test]
    fn sequences_and_branches() {
        let cfg = RunConfig::parse(
            r#"
            [[map]]
            family = "uniform_cantor"
            count = 2
            ratio = 0.25
            [[map]]
            family = "linear_ifs"
            branches = [{ ratio = 0.5, translation = 0.0 }, { ratio = 0.25, translation = 0.75, range = [0.0, 1.0] }]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.maps().unwrap().len(), 2);
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(RunConfig::parse("[numeric]\ngrid = [3, 3]\n").is_err());
        assert!(RunConfig::parse("[map]\nfamily = \"circle_power\"\nd = 2\ncolour = 1\n").is_err());
        assert!(RunConfig::parse("bogus = 1\n").is_err());
    }

    #[test]
    fn ensemble_is_validated() {
        let cfg = RunConfig::parse("[ensemble]\nr = -0.1\n").unwrap();
        assert!(matches!(cfg.ensemble(), Err(RunError::Config(_))));
        let cfg = RunConfig::parse("[ensemble]\na_re = 0.2\nr = 0.1\n").unwrap();
        assert!(cfg.ensemble().is_err());
    }
}
