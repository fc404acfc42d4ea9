//! Experiment configuration (TOML).

use std::path::{Path, PathBuf};

use harnacklab_core::harnack::DEFAULT_CYLINDER;
use harnacklab_core::montecarlo::Estimand;
use harnacklab_core::space::Metric;
use harnacklab_core::{KernelSpec, ScaleSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed. Required: there is no clock-derived default.
    pub seed: u64,
    pub space: SpaceConfig,
    pub scale: ScaleSpec,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub checkers: CheckerConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceFamily {
    Torus,
    Gasket,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub family: SpaceFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Metric>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u32>,
    /// `mmspace v1` file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// `[r_min, r_max]`; the family default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckerId {
    Doubling,
    Polycon,
    JBounds,
    Ujs,
    Tail,
    Fk,
    Pi,
    Csj,
    Hk,
    Ndl,
    Ephi,
    Conservative,
    Ehi,
    Phi,
    PhiPlus,
    Ehr,
    Phr,
    /// Every condition of the equivalence groups.
    Suite,
}

impl CheckerId {
    pub const SUITE: [CheckerId; 11] = [
        CheckerId::Phi,
        CheckerId::PhiPlus,
        CheckerId::Hk,
        CheckerId::Ndl,
        CheckerId::Ujs,
        CheckerId::Phr,
        CheckerId::Ehr,
        CheckerId::Ephi,
        CheckerId::Pi,
        CheckerId::JBounds,
        CheckerId::Csj,
    ];
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckerConfig {
    pub run: Vec<CheckerId>,
    pub fk: FkConfig,
    pub pi: PiConfig,
    pub csj: CsjConfig,
    pub hk: HkConfig,
    pub ndl: NdlConfig,
    pub ephi: CentersConfig,
    pub ehi: EhiConfig,
    pub phi: PhiConfig,
    pub holder: HolderConfig,
    pub ujs: UjsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CentersConfig {
    pub centers: usize,
}

impl Default for CentersConfig {
    fn default() -> Self {
        Self { centers: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FkConfig {
    pub centers: usize,
    pub densities: Vec<f64>,
}

impl Default for FkConfig {
    fn default() -> Self {
        Self { centers: 8, densities: vec![0.125, 0.25, 0.5, 1.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PiConfig {
    pub kappa: f64,
    pub centers: usize,
}

impl Default for PiConfig {
    fn default() -> Self {
        Self { kappa: 2.0, centers: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsjConfig {
    pub c0: f64,
    pub centers: usize,
    pub functions: usize,
}

impl Default for CsjConfig {
    fn default() -> Self {
        Self { c0: 0.5, centers: 4, functions: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HkConfig {
    /// Tensor times; `phi(r_max) 2^-k` inside the window when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    /// Largest heat domain accepted.
    pub max_points: usize,
}

impl Default for HkConfig {
    fn default() -> Self {
        Self { times: None, max_points: 16384 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NdlConfig {
    pub epsilon: f64,
    pub centers: usize,
}

impl Default for NdlConfig {
    fn default() -> Self {
        Self { epsilon: 0.5, centers: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EhiConfig {
    pub delta: f64,
    pub centers: usize,
    pub budget: usize,
}

impl Default for EhiConfig {
    fn default() -> Self {
        Self { delta: 0.5, centers: 4, budget: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhiConfig {
    /// `[C1, C2, C3, C4, C5]`.
    pub cylinder: [f64; 5],
    pub centers: usize,
    pub budget: usize,
    pub random: usize,
}

impl Default for PhiConfig {
    fn default() -> Self {
        Self { cylinder: DEFAULT_CYLINDER, centers: 4, budget: 256, random: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HolderConfig {
    pub centers: usize,
    pub budget: usize,
    pub random: usize,
}

impl Default for HolderConfig {
    fn default() -> Self {
        Self { centers: 1, budget: 256, random: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UjsConfig {
    pub budget: usize,
}

impl Default for UjsConfig {
    fn default() -> Self {
        Self { budget: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub conservative: f64,
    /// Largest constant ratio between a run and its refinement.
    pub refine_ratio: f64,
    /// Largest exponent change between a run and its refinement.
    pub refine_exponent: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { conservative: 1e-8, refine_ratio: 2.0, refine_exponent: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Write `report.csv` next to `report.json`.
    pub csv: bool,
    /// Write `matrix.md` next to `report.json`.
    pub markdown: bool,
    /// Also run at the next refinement level.
    pub refine: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: None, csv: true, markdown: true, refine: false }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// Defaults to the exit time of `B(0, r_max)` from its center.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimand: Option<Estimand>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levy: Option<LevyConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyConfig {
    pub time: f64,
    #[serde(default)]
    pub x0: usize,
    /// Target set `A` of the functional `f(s, x, y) = 1{y in A}`.
    pub target: Vec<usize>,
}

pub fn parse(text: &str, origin: &str) -> Result<ExperimentConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))
}

pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = parse(&text, &path.display().to_string())?;
    if let Some(f) = &cfg.space.file {
        if f.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.space.file = Some(base.join(f));
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
[space]
family = "torus"
dim = 1
side = 32
metric = "l2"
[scale]
family = "power"
alpha = 1.0
[kernel]
kind = "stable-like"
"#;

    #[test]
    fn minimal_parses_with_defaults() {
        let c = parse(MINIMAL, "t").unwrap();
        assert_eq!(c.seed, 3);
        assert!(c.checkers.run.is_empty());
        assert_eq!(c.checkers.phi.cylinder, DEFAULT_CYLINDER);
        assert_eq!(c.tolerances.conservative, 1e-8);
    }

    #[test]
    fn missing_seed_is_a_config_error() {
        let text = MINIMAL.replace("seed = 3", "");
        let err = parse(&text, "t").unwrap_err();
        assert!(matches!(err, CliError::Config(ref m) if m.contains("seed")), "{err}");
    }

    #[test]
    fn unknown_field_reports_its_line() {
        let text = MINIMAL.replace("side = 32", "side = 32\nsides = 4");
        let CliError::Config(m) = parse(&text, "t").unwrap_err() else { panic!() };
        assert!(m.contains("sides") && m.contains("line 7"), "{m}");
    }

    #[test]
    fn checker_names_and_kernels() {
        let text = format!("{MINIMAL}\n[checkers]\nrun = [\"doubling\", \"j-bounds\", \"phi-plus\", \"suite\"]\n");
        let c = parse(&text.replace("kind = \"stable-like\"", "kind = \"cone\"\naxis = [1.0, 0.0]\ntheta = 0.9"), "t")
            .unwrap();
        assert_eq!(c.checkers.run, vec![CheckerId::Doubling, CheckerId::JBounds, CheckerId::PhiPlus, CheckerId::Suite]);
        assert!(matches!(c.kernel, KernelSpec::Cone { .. }));
    }

    #[test]
    fn round_trip() {
        let c = parse(MINIMAL, "t").unwrap();
        let again: ExperimentConfig = toml::from_str(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, again);
    }
}
