//! Limiting densities of pinned measures against Brownian motion on `L`:
//! the exponents `D`, discrete Feynman–Kac weights, a reference Brownian
//! sampler and self-normalized ensemble comparisons.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ManifoldKind, ManifoldModel, PointParam};
use crate::kernels::{sphere_heat_angle_cdf, KernelFamily, KernelKind, Normalization};
use crate::numerics::{wrap_signed, MonotoneCubic};
use crate::pinning::{Interpolation, Partition, Sampler, SamplerConfig, WeightedPath};
use crate::semigroup::TestFunction;

/// The curvature combination `D` attached to a kernel kind.
pub fn d_function(kind: KernelKind, mf: &ManifoldModel, x: &PointParam) -> f64 {
    let c = mf.curvature_at(x);
    match kind {
        KernelKind::IntrinsicGauss | KernelKind::IntrinsicSymmetric => c.scal_l / 6.0,
        KernelKind::AmbientGauss => c.scal_l / 4.0 - c.tau_sq / 8.0 - c.rbar / 12.0,
        KernelKind::HeatRestricted => {
            c.scal_l / 4.0 - c.tau_sq / 8.0 - (c.rbar + c.ricbar + c.scal_m) / 12.0
        }
    }
}

/// `log dP_S/dP_B` along a skeleton: the left-endpoint Riemann sum of the
/// normalization exponent `E = −D`.
pub fn discrete_fk_weight(path: &WeightedPath, kind: KernelKind, mf: &ManifoldModel) -> f64 {
    path.times
        .windows(2)
        .zip(&path.skeleton)
        .map(|(w, y)| -(w[1] - w[0]) * d_function(kind, mf, y))
        .sum()
}

/// Inverse-CDF table for the geodesic angle of sphere Brownian motion after
/// time `dt`.
#[derive(Debug, Clone)]
pub struct SphereAngleTable {
    inverse: MonotoneCubic,
    lo: f64,
    hi: f64,
}

const ANGLE_TABLE_SIZE: usize = 4096;

impl SphereAngleTable {
    pub fn new(radius: f64, dt: f64) -> Self {
        let theta_max = (12.0 * dt.sqrt() / radius).min(PI);
        let mut fs = Vec::with_capacity(ANGLE_TABLE_SIZE + 1);
        let mut ts = Vec::with_capacity(ANGLE_TABLE_SIZE + 1);
        for i in 0..=ANGLE_TABLE_SIZE {
            let th = theta_max * i as f64 / ANGLE_TABLE_SIZE as f64;
            let f = if i == 0 { 0.0 } else { sphere_heat_angle_cdf(radius, dt, th) };
            if fs.last().is_none_or(|&last| f > last) {
                fs.push(f);
                ts.push(th);
            }
        }
        let (lo, hi) = (fs[0], *fs.last().unwrap());
        Self { inverse: MonotoneCubic::new(fs, ts), lo, hi }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        self.inverse.eval(u.clamp(self.lo, self.hi))
    }
}

/// Exact Brownian skeletons on `L`. Curves use wrapped Gaussian arc-length
/// increments (an ellipse is isometric to the circle of equal perimeter);
/// the sphere draws the geodesic angle from the heat kernel and a uniform
/// azimuth.
pub struct ReferenceSampler<'a> {
    mf: &'a ManifoldModel,
    partition: Partition,
    seed: u64,
    tables: BTreeMap<u64, SphereAngleTable>,
}

impl<'a> ReferenceSampler<'a> {
    pub fn new(mf: &'a ManifoldModel, partition: Partition, seed: u64) -> Self {
        let mut tables = BTreeMap::new();
        if let ManifoldKind::Sphere2 { radius } = mf.kind() {
            for dt in partition.increments() {
                tables.entry(dt.to_bits()).or_insert_with(|| SphereAngleTable::new(radius, dt));
            }
        }
        Self { mf, partition, seed, tables }
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, x: &PointParam, rng: &mut R) -> WeightedPath {
        let times = self.partition.times().to_vec();
        let mut skeleton = Vec::with_capacity(times.len());
        skeleton.push(*x);
        for w in times.windows(2) {
            let dt = w[1] - w[0];
            let prev = *skeleton.last().unwrap();
            let next = match prev {
                PointParam::Arc(s) => {
                    let z: f64 = rng.sample(StandardNormal);
                    self.mf.arc_point(s + dt.sqrt() * z)
                }
                PointParam::Sphere { .. } => {
                    let theta = self.tables[&dt.to_bits()].sample(rng);
                    let beta = rng.gen::<f64>() * 2.0 * PI;
                    let (sb, cb) = beta.sin_cos();
                    self.mf.exp_map(&prev, &[cb, sb], self.mf.sphere_radius() * theta)
                }
            };
            skeleton.push(next);
        }
        WeightedPath {
            times,
            skeleton,
            log_weight: 0.0,
            interpolation: Interpolation::None,
            refinement_depth: 0,
            fine_path: None,
        }
    }

    pub fn sample_path(&self, x: &PointParam, index: u64) -> WeightedPath {
        self.sample_with(x, &mut crate::pinning::path_rng(self.seed, index))
    }
}

pub fn reference_bm_sampler<R: Rng + ?Sized>(
    mf: &ManifoldModel,
    partition: &Partition,
    x: &PointParam,
    rng: &mut R,
) -> WeightedPath {
    ReferenceSampler::new(mf, partition.clone(), 0).sample_with(x, rng)
}

/// Bounded path functionals read from the skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Functional {
    /// `f(ω(1))`.
    EndValue { function: TestFunction },
    /// `∫₀¹ f(ω(s)) ds` as a left Riemann sum over the partition.
    TimeAverage { function: TestFunction },
    /// Largest unwrapped arc displacement (curves) or geodesic distance from
    /// the start (sphere).
    MaxDisplacement,
    /// Geodesic distance from the start to `ω(1)`.
    EndDistance,
    /// `∫₀¹ |τ|²(ω(s)) ds` as a left Riemann sum.
    CurvatureOccupation,
}

impl Functional {
    pub fn id(&self) -> String {
        match self {
            Functional::EndValue { function } => format!("end_value[{}]", function_label(function)),
            Functional::TimeAverage { function } => format!("time_average[{}]", function_label(function)),
            Functional::MaxDisplacement => "max_displacement".into(),
            Functional::EndDistance => "end_distance".into(),
            Functional::CurvatureOccupation => "curvature_occupation".into(),
        }
    }

    pub fn eval(&self, mf: &ManifoldModel, path: &WeightedPath) -> f64 {
        let sk = &path.skeleton;
        let left_sum = |g: &dyn Fn(&PointParam) -> f64| -> f64 {
            path.times.windows(2).zip(sk).map(|(w, y)| (w[1] - w[0]) * g(y)).sum()
        };
        match self {
            Functional::EndValue { function } => function.eval(mf, sk.last().unwrap()),
            Functional::TimeAverage { function } => left_sum(&|y| function.eval(mf, y)),
            Functional::MaxDisplacement => {
                if mf.is_curve() {
                    let p = mf.perimeter();
                    let mut pos: f64 = 0.0;
                    let mut best: f64 = 0.0;
                    for w in sk.windows(2) {
                        pos += wrap_signed(w[1].arc() - w[0].arc(), p);
                        best = best.max(pos.abs());
                    }
                    best
                } else {
                    sk.iter().map(|y| mf.geodesic_distance(&sk[0], y)).fold(0.0, f64::max)
                }
            }
            Functional::EndDistance => mf.geodesic_distance(&sk[0], sk.last().unwrap()),
            Functional::CurvatureOccupation => left_sum(&|y| mf.curvature_at(y).tau_sq),
        }
    }
}

fn function_label(f: &TestFunction) -> String {
    match f {
        TestFunction::SphereHarmonic { l, m } => format!("Y_{l}_{m}"),
        TestFunction::CircleMode { frequency } => format!("circle_mode_{frequency}"),
        TestFunction::EllipseMode { frequency } => format!("ellipse_mode_{frequency}"),
        TestFunction::Bump { width, .. } => format!("bump_{width}"),
    }
}

/// Functional values of one path with its log-weight.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedSample {
    pub values: Vec<f64>,
    pub log_weight: f64,
}

/// Self-normalized importance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub ess: f64,
    pub weight_free: bool,
}

/// Relative weight variance below which weights are treated as constant.
pub const WEIGHT_FREE_THRESHOLD: f64 = 1e-20;

/// Normalized weights `w_i / max w`, and whether they are constant.
pub fn normalized_weights(log_weights: &[f64]) -> (Vec<f64>, bool) {
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|v| (v / mean - 1.0).powi(2)).sum::<f64>() / n;
    if var < WEIGHT_FREE_THRESHOLD {
        (vec![1.0; w.len()], true)
    } else {
        (w, false)
    }
}

/// Ratio estimator with a delta-method standard error.
pub fn weighted_estimate(values: &[f64], weights: &[f64], weight_free: bool) -> Estimate {
    let sw: f64 = weights.iter().sum();
    let sw2: f64 = weights.iter().map(|w| w * w).sum();
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / sw;
    let var = values.iter().zip(weights).map(|(v, w)| w * w * (v - mean).powi(2)).sum::<f64>() / (sw * sw);
    Estimate { mean, se: var.sqrt(), ess: sw * sw / sw2, weight_free }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub functional_id: String,
    pub pinned_estimate: f64,
    pub pinned_se: f64,
    pub weighted_reference_estimate: f64,
    pub weighted_reference_se: f64,
    pub z_score: f64,
    pub n_paths: usize,
    pub mesh: f64,
    pub pinned_ess: f64,
    pub reference_ess: f64,
    pub pinned_weight_free: bool,
    pub reference_weight_free: bool,
}

/// Compares a globally normalized pinned batch with a Feynman–Kac weighted
/// reference batch, functional by functional.
pub fn compare_ensembles(
    pinned: &[WeightedSample],
    reference: &[WeightedSample],
    functional_ids: &[String],
    mesh: f64,
) -> Result<Vec<ComparisonReport>> {
    if pinned.is_empty() || reference.is_empty() {
        return Err(Error::InvalidParameter("ensembles must be non-empty".into()));
    }
    let (wp, free_p) = normalized_weights(&pinned.iter().map(|s| s.log_weight).collect::<Vec<_>>());
    let (wr, free_r) = normalized_weights(&reference.iter().map(|s| s.log_weight).collect::<Vec<_>>());
    let ess_r = wr.iter().sum::<f64>().powi(2) / wr.iter().map(|w| w * w).sum::<f64>();
    if ess_r < 0.05 * reference.len() as f64 {
        return Err(Error::LowEffectiveSampleSize { ess: ess_r, nominal: reference.len() });
    }
    functional_ids
        .iter()
        .enumerate()
        .map(|(k, id)| {
            let vp: Vec<f64> = pinned.iter().map(|s| s.values[k]).collect();
            let vr: Vec<f64> = reference.iter().map(|s| s.values[k]).collect();
            let p = weighted_estimate(&vp, &wp, free_p);
            let r = weighted_estimate(&vr, &wr, free_r);
            let se = p.se.hypot(r.se);
            Ok(ComparisonReport {
                functional_id: id.clone(),
                pinned_estimate: p.mean,
                pinned_se: p.se,
                weighted_reference_estimate: r.mean,
                weighted_reference_se: r.se,
                z_score: (p.mean - r.mean) / se,
                n_paths: pinned.len().min(reference.len()),
                mesh,
                pinned_ess: p.ess,
                reference_ess: r.ess,
                pinned_weight_free: free_p,
                reference_weight_free: free_r,
            })
        })
        .collect()
}

/// Paths processed per parallel chunk when building ensembles.
pub const CHUNK_PATHS: u64 = 16_384;

/// Functional values of `n` globally normalized pinned paths.
#[allow(clippy::too_many_arguments)]
pub fn pinned_samples(
    mf: &ManifoldModel,
    kind: KernelKind,
    partition: &Partition,
    x: &PointParam,
    seed: u64,
    n: usize,
    resolution: Option<usize>,
    functionals: &[Functional],
) -> Result<Vec<WeightedSample>> {
    let mut cfg = SamplerConfig::new(seed, n, partition.clone(), KernelFamily::new(kind, Normalization::GlobalSigma));
    cfg.resolution = resolution;
    let sampler = Sampler::new(cfg, mf)?;
    let mut out = Vec::with_capacity(n);
    let mut start = 0u64;
    while start < n as u64 {
        let end = (start + CHUNK_PATHS).min(n as u64);
        let chunk: Result<Vec<WeightedSample>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let p = sampler.sample_path(x, i)?;
                Ok(WeightedSample { values: functionals.iter().map(|f| f.eval(mf, &p)).collect(), log_weight: p.log_weight })
            })
            .collect();
        out.extend(chunk?);
        start = end;
    }
    Ok(out)
}

/// Functional values of `n` reference Brownian paths weighted by
/// `exp(discrete_fk_weight)`.
pub fn reference_samples(
    mf: &ManifoldModel,
    kind: KernelKind,
    partition: &Partition,
    x: &PointParam,
    seed: u64,
    n: usize,
    functionals: &[Functional],
) -> Vec<WeightedSample> {
    let sampler = ReferenceSampler::new(mf, partition.clone(), seed);
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let p = sampler.sample_path(x, i);
            WeightedSample {
                values: functionals.iter().map(|f| f.eval(mf, &p)).collect(),
                log_weight: discrete_fk_weight(&p, kind, mf),
            }
        })
        .collect()
}

/// Seed of the reference ensemble paired with a pinned seed.
pub fn reference_seed(seed: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    rng.gen()
}
