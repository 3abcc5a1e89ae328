//! Experiment configuration: a TOML file merged over per-experiment defaults.
//!
//! Tables carrying a `kind` key (manifold, partition, test function) replace
//! the default table wholesale; every other table is merged key by key.

use std::path::{Path, PathBuf};

use pinning_core::density::Functional;
use pinning_core::geometry::{Ambient, ManifoldKind, ManifoldModel, PointParam};
use pinning_core::kernels::{KernelFamily, KernelKind, Normalization};
use pinning_core::pinning::{Interpolation, Partition, DEFAULT_REFINEMENT_DEPTH};
use pinning_core::semigroup::TestFunction;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    WickCheck,
    ChernoffCheck,
    HessianLimit,
    NormalizationCheck,
    SamplePinned,
    CompareDensity,
    BridgeStat,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::WickCheck,
        Experiment::ChernoffCheck,
        Experiment::HessianLimit,
        Experiment::NormalizationCheck,
        Experiment::SamplePinned,
        Experiment::CompareDensity,
        Experiment::BridgeStat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::WickCheck => "wick_check",
            Experiment::ChernoffCheck => "chernoff_check",
            Experiment::HessianLimit => "hessian_limit",
            Experiment::NormalizationCheck => "normalization_check",
            Experiment::SamplePinned => "sample_pinned",
            Experiment::CompareDensity => "compare_density",
            Experiment::BridgeStat => "bridge_stat",
        }
    }

    /// What the experiment checks, for `list`.
    pub fn anchor(self) -> &'static str {
        match self {
            Experiment::WickCheck => "Gaussian moments of graded monomials vs tensor quadrature",
            Experiment::ChernoffCheck => "Chernoff products and the short-time generator residual",
            Experiment::HessianLimit => "chord-arc constant -|II(v,v)|^2/12",
            Experiment::NormalizationCheck => "kernel mass b(t,x) = exp(tE(x)) + O(t^{3/2})",
            Experiment::SamplePinned => "pinned skeletons with interpolation and path weights",
            Experiment::CompareDensity => "pinned law vs Feynman-Kac weighted Brownian motion",
            Experiment::BridgeStat => "Brownian bridge excursion tail exp(-chi alpha^2/dt)",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManifoldSpec {
    Circle {
        radius: f64,
        #[serde(default)]
        ambient: Ambient,
    },
    Ellipse {
        semi_axis_a: f64,
        semi_axis_b: f64,
        #[serde(default)]
        ambient: Ambient,
    },
    Sphere2 {
        radius: f64,
        #[serde(default)]
        ambient: Ambient,
    },
}

impl ManifoldSpec {
    pub fn build(&self) -> Result<ManifoldModel, CliError> {
        let (kind, ambient) = match *self {
            ManifoldSpec::Circle { radius, ambient } => (ManifoldKind::Circle { radius }, ambient),
            ManifoldSpec::Ellipse { semi_axis_a, semi_axis_b, ambient } => {
                (ManifoldKind::Ellipse { semi_axis_a, semi_axis_b }, ambient)
            }
            ManifoldSpec::Sphere2 { radius, ambient } => (ManifoldKind::Sphere2 { radius }, ambient),
        };
        ManifoldModel::new(kind, ambient).map_err(CliError::from_validation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionSpec {
    Uniform { n: usize },
    Geometric { ratio: f64, steps: usize },
    Explicit { times: Vec<f64> },
}

impl PartitionSpec {
    pub fn build(&self) -> Result<Partition, CliError> {
        match self {
            PartitionSpec::Uniform { n } => Partition::uniform(*n),
            PartitionSpec::Geometric { ratio, steps } => Partition::geometric(*ratio, *steps),
            PartitionSpec::Explicit { times } => Partition::explicit(times.clone()),
        }
        .map_err(CliError::from_validation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSettings {
    pub seed: u64,
    pub paths: usize,
    /// Transition grid resolution; omitted means the coarsest adequate grid.
    pub resolution: Option<usize>,
    pub refinement_depth: u32,
    pub interpolation: Interpolation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WickSettings {
    pub max_dim: usize,
    /// Largest degree `d(k)`, a multiple of 1/2.
    pub max_degree: f64,
    pub max_spatial_order: u32,
    pub t_values: Vec<f64>,
    /// Oracle cube half-width in units of `sqrt(n t)`.
    pub oracle_radius: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChernoffSettings {
    pub min_order: f64,
    pub product_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HessianSettings {
    pub s_values: Vec<f64>,
    /// Base point; omitted means the manifold origin.
    pub point: Option<PointParam>,
    /// Unit tangent direction in the chart frame; omitted means the first
    /// frame vector.
    pub direction: Option<Vec<f64>>,
    /// Omitted means 1e-3 on homogeneous manifolds and 2e-2 otherwise.
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationSettings {
    pub points: usize,
    pub min_slope: f64,
    /// Residuals below this are treated as quadrature noise and left out of
    /// the fit.
    pub noise_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySettings {
    /// Omitted means the built-in functionals for the manifold.
    pub functionals: Option<Vec<Functional>>,
    pub start: Option<PointParam>,
    /// Uniform step count of the coarser run used for the mesh-bias
    /// allowance; omitted disables the allowance.
    pub coarse_steps: Option<usize>,
    pub max_allowance: f64,
    pub z_max: f64,
    pub ks_min_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeSettings {
    pub alphas: Vec<f64>,
}

/// The effective configuration. `threads` and `output_dir` do not affect
/// results and are left out of the serialized form and the hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: Experiment,
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    pub manifold: ManifoldSpec,
    pub family: KernelFamily,
    pub partition: PartitionSpec,
    pub mc: McSettings,
    pub t_grid: Vec<f64>,
    pub test_function: TestFunction,
    pub wick: WickSettings,
    pub chernoff: ChernoffSettings,
    pub hessian: HessianSettings,
    pub normalization: NormalizationSettings,
    pub density: DensitySettings,
    pub bridge: BridgeSettings,
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
}

impl Config {
    pub fn default_for(experiment: Experiment) -> Config {
        let circle = ManifoldSpec::Circle { radius: 1.0, ambient: Ambient::Euclidean };
        let mut cfg = Config {
            experiment,
            threads: None,
            output_dir: None,
            manifold: circle,
            family: KernelFamily::new(KernelKind::IntrinsicGauss, Normalization::MarkovT),
            partition: PartitionSpec::Uniform { n: 64 },
            mc: McSettings {
                seed: 1,
                paths: 1000,
                resolution: None,
                refinement_depth: DEFAULT_REFINEMENT_DEPTH,
                interpolation: Interpolation::None,
            },
            t_grid: logspace(1e-3, 1e-1, 5),
            test_function: TestFunction::CircleMode { frequency: 1 },
            wick: WickSettings {
                max_dim: 3,
                max_degree: 3.0,
                max_spatial_order: 6,
                t_values: vec![1e-3, 1e-2, 1e-1],
                oracle_radius: 12.0,
                tolerance: 1e-10,
            },
            chernoff: ChernoffSettings { min_order: 0.4, product_tolerance: 5e-3 },
            hessian: HessianSettings {
                s_values: vec![0.1, 0.05, 0.02, 0.01],
                point: None,
                direction: None,
                tolerance: None,
            },
            normalization: NormalizationSettings { points: 4, min_slope: 1.4, noise_floor: 1e-13 },
            density: DensitySettings {
                functionals: None,
                start: None,
                coarse_steps: None,
                max_allowance: 0.02,
                z_max: 3.0,
                ks_min_p: 0.01,
            },
            bridge: BridgeSettings { alphas: vec![0.05, 0.1, 0.15, 0.2, 0.25] },
        };
        match experiment {
            Experiment::NormalizationCheck => {
                cfg.manifold = ManifoldSpec::Sphere2 { radius: 1.0, ambient: Ambient::Euclidean };
                cfg.family = KernelFamily::new(KernelKind::IntrinsicGauss, Normalization::RawS);
                cfg.t_grid = logspace(1e-4, 1e-2, 5);
            }
            Experiment::SamplePinned => {
                cfg.family = KernelFamily::new(KernelKind::IntrinsicGauss, Normalization::RawS);
                cfg.partition = PartitionSpec::Uniform { n: 16 };
                cfg.mc.paths = 8;
                cfg.mc.interpolation = Interpolation::LGeodesic;
                cfg.mc.refinement_depth = 2;
            }
            Experiment::CompareDensity => {
                cfg.manifold = ManifoldSpec::Ellipse { semi_axis_a: 1.0, semi_axis_b: 0.5, ambient: Ambient::Euclidean };
                cfg.family = KernelFamily::new(KernelKind::AmbientGauss, Normalization::GlobalSigma);
                cfg.mc.paths = 10_000;
                cfg.density.coarse_steps = Some(32);
            }
            Experiment::BridgeStat => {
                cfg.mc.paths = 1563;
                cfg.mc.interpolation = Interpolation::EuclideanBridge;
            }
            _ => {}
        }
        cfg
    }

    /// Reads `path` (if any) over the defaults of `experiment`.
    pub fn load(experiment: Experiment, path: Option<&Path>) -> Result<Config, CliError> {
        let user = match path {
            None => toml::Table::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                text.parse::<toml::Table>().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
        };
        Config::from_table(experiment, user)
    }

    pub fn from_table(experiment: Experiment, user: toml::Table) -> Result<Config, CliError> {
        if let Some(v) = user.get("experiment") {
            if v.as_str() != Some(experiment.name()) {
                return Err(CliError::Config(format!(
                    "config is for experiment {v}, but {} was requested",
                    experiment.name()
                )));
            }
        }
        let defaults = toml::Table::try_from(Config::default_for(experiment))
            .map_err(|e| CliError::Config(format!("default config: {e}")))?;
        let merged = merge(defaults, user);
        let cfg: Config = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.t_grid.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return bad("t_grid entries must lie in (0, 1]".into());
        }
        if self.t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("t_grid must be strictly increasing".into());
        }
        if self.mc.paths == 0 {
            return bad("mc.paths must be >= 1".into());
        }
        if self.mc.refinement_depth > 16 {
            return bad("mc.refinement_depth must be <= 16".into());
        }
        if (2.0 * self.wick.max_degree).fract() != 0.0 || self.wick.max_degree < 0.0 {
            return bad("wick.max_degree must be a non-negative multiple of 1/2".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be >= 1".into());
        }
        Ok(())
    }

    /// Canonical serialized form: compact JSON of the effective config.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn merge(mut base: toml::Table, user: toml::Table) -> toml::Table {
    for (key, value) in user {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) if !u.contains_key("kind") => {
                let merged = merge(std::mem::take(b), u);
                *b = merged;
            }
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
    base
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(s: &str) -> toml::Table {
        s.parse().unwrap()
    }

    #[test]
    fn defaults_round_trip() {
        for e in Experiment::ALL {
            let cfg = Config::from_table(e, toml::Table::new()).unwrap();
            assert_eq!(cfg, Config::default_for(e));
        }
    }

    #[test]
    fn unknown_fields_rejected() {
        for s in ["bogus = 1", "[mc]\nseeed = 3", "[manifold]\nkind = \"circle\"\nradius = 1.0\nextra = 2"] {
            assert!(matches!(
                Config::from_table(Experiment::SamplePinned, table(s)),
                Err(CliError::Config(_))
            ));
        }
    }

    #[test]
    fn tagged_tables_replace() {
        let cfg = Config::from_table(
            Experiment::ChernoffCheck,
            table("[partition]\nkind = \"geometric\"\nratio = 1.2\nsteps = 24\n[mc]\nseed = 9"),
        )
        .unwrap();
        assert_eq!(cfg.partition, PartitionSpec::Geometric { ratio: 1.2, steps: 24 });
        assert_eq!(cfg.mc.seed, 9);
        assert_eq!(cfg.mc.paths, 1000);
    }

    #[test]
    fn hash_tracks_fields_but_not_threads() {
        let base = Config::default_for(Experiment::SamplePinned);
        let mut threaded = base.clone();
        threaded.threads = Some(8);
        threaded.output_dir = Some("elsewhere".into());
        assert_eq!(base.hash(), threaded.hash());
        let mut seeded = base.clone();
        seeded.mc.seed += 1;
        assert_ne!(base.hash(), seeded.hash());
        let mut fam = base.clone();
        fam.family.normalization = Normalization::MarkovT;
        assert_ne!(base.hash(), fam.hash());
    }

    #[test]
    fn experiment_mismatch_rejected() {
        assert!(Config::from_table(Experiment::WickCheck, table("experiment = \"bridge_stat\"")).is_err());
        assert!(Config::from_table(Experiment::WickCheck, table("experiment = \"wick_check\"")).is_ok());
    }

    #[test]
    fn sphere_ambient_and_points_parse() {
        let cfg = Config::from_table(
            Experiment::HessianLimit,
            table("[manifold]\nkind = \"sphere2\"\nradius = 2.0\n[hessian]\npoint = { theta = 0.5, phi = 1.0 }"),
        )
        .unwrap();
        assert_eq!(cfg.hessian.point, Some(PointParam::Sphere { theta: 0.5, phi: 1.0 }));
        assert!(matches!(cfg.manifold, ManifoldSpec::Sphere2 { ambient: Ambient::Euclidean, .. }));
    }
}
