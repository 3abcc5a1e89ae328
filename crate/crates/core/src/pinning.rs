//! Discrete pinned path measures: partitions, grid-categorical transitions,
//! path weights and continuous interpolation between skeleton points.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, WeightedAliasIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::d_function;
use crate::error::{Error, Result};
use crate::geometry::{Ambient, GridStructure, ManifoldKind, ManifoldModel, PointParam, QuadratureGrid};
use crate::kernels::{Kernel, KernelFamily, Normalization};
use crate::numerics::linear_fit;

/// Strictly increasing time grid of `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    times: Vec<f64>,
    mesh: f64,
}

impl Partition {
    pub fn explicit(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 || *times.last().unwrap() != 1.0 {
            return Err(Error::InvalidParameter("partition must start at 0 and end at 1".into()));
        }
        let mut mesh: f64 = 0.0;
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidParameter("partition times must increase strictly".into()));
            }
            mesh = mesh.max(w[1] - w[0]);
        }
        Ok(Self { times, mesh })
    }

    /// `n` equal steps.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("uniform partition needs n >= 1".into()));
        }
        let mut times: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        times[n] = 1.0;
        Self::explicit(times)
    }

    /// Steps proportional to `ratio^k`, `k = 0..steps`, scaled to sum to 1.
    pub fn geometric(ratio: f64, steps: usize) -> Result<Self> {
        if !(ratio > 0.0) || steps == 0 {
            return Err(Error::InvalidParameter("geometric partition needs ratio > 0 and steps >= 1".into()));
        }
        let raw: Vec<f64> = (0..steps).map(|k| ratio.powi(k as i32)).collect();
        let total: f64 = raw.iter().sum();
        let mut times = Vec::with_capacity(steps + 1);
        let mut acc = 0.0;
        times.push(0.0);
        for r in &raw[..steps - 1] {
            acc += r / total;
            times.push(acc);
        }
        times.push(1.0);
        Self::explicit(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn increments(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn min_increment(&self) -> f64 {
        self.increments().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    None,
    LGeodesic,
    MGeodesic,
    EuclideanBridge,
}

/// Default dyadic refinement depth.
pub const DEFAULT_REFINEMENT_DEPTH: u32 = 6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedPath {
    pub times: Vec<f64>,
    pub skeleton: Vec<PointParam>,
    pub log_weight: f64,
    pub interpolation: Interpolation,
    pub refinement_depth: u32,
    /// Ambient points at the refined times.
    pub fine_path: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub seed: u64,
    pub paths: usize,
    /// Grid resolution for transitions; `None` picks the coarsest adequate one.
    pub resolution: Option<usize>,
    pub partition: Partition,
    pub family: KernelFamily,
    pub interpolation: Interpolation,
    pub refinement_depth: u32,
}

impl SamplerConfig {
    pub fn new(seed: u64, paths: usize, partition: Partition, family: KernelFamily) -> Self {
        Self {
            seed,
            paths,
            resolution: None,
            partition,
            family,
            interpolation: Interpolation::None,
            refinement_depth: DEFAULT_REFINEMENT_DEPTH,
        }
    }
}

/// Independent RNG stream for one path.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn alias(masses: Vec<f64>) -> WeightedAliasIndex<f64> {
    WeightedAliasIndex::new(masses).expect("kernel masses are positive and finite")
}

/// One-step transition law at a fixed increment, discretized on a grid.
#[derive(Debug, Clone)]
pub struct TransitionTable {
    dt: f64,
    log_mass_const: Option<f64>,
    law: Law,
}

#[derive(Debug, Clone)]
enum Law {
    /// Translation-invariant law on a circle: offsets `j h`.
    Offsets { spacing: f64, alias: WeightedAliasIndex<f64> },
    /// Rotation-invariant law on a sphere: colatitude rings about the start
    /// point with a uniform azimuth.
    Rings { radius: f64, thetas: Vec<f64>, alias: WeightedAliasIndex<f64> },
    /// Per-node rows on a non-homogeneous curve.
    Rows { family: KernelFamily, grid: QuadratureGrid, rows: Vec<(WeightedAliasIndex<f64>, f64)> },
}

impl TransitionTable {
    pub fn new(fam: KernelFamily, mf: &ManifoldModel, dt: f64, resolution: usize) -> Result<Self> {
        let grid = mf.build_quadrature(resolution)?;
        grid.check_adequate(dt)?;
        let k = Kernel::new(fam, mf, dt)?;
        let homogeneous_curve = matches!(
            (mf.kind(), mf.ambient()),
            (ManifoldKind::Circle { .. }, Ambient::Euclidean | Ambient::Itself | Ambient::Sphere { .. })
        );
        if homogeneous_curve {
            let origin = mf.origin();
            let masses: Vec<f64> = (0..grid.node_count()).map(|j| grid.weights[j] * k.value(&origin, &grid.nodes[j])).collect();
            let total: f64 = masses.iter().sum();
            return Ok(Self {
                dt,
                log_mass_const: Some(total.ln()),
                law: Law::Offsets { spacing: grid.spacing, alias: alias(masses) },
            });
        }
        match &grid.structure {
            GridStructure::Rings { thetas, ring_weights, n_phi } => {
                let pole = mf.origin();
                let masses: Vec<f64> = thetas
                    .iter()
                    .zip(ring_weights)
                    .map(|(&th, &w)| w * *n_phi as f64 * k.value(&pole, &PointParam::Sphere { theta: th, phi: 0.0 }))
                    .collect();
                let total: f64 = masses.iter().sum();
                Ok(Self {
                    dt,
                    log_mass_const: Some(total.ln()),
                    law: Law::Rings { radius: mf.sphere_radius(), thetas: thetas.clone(), alias: alias(masses) },
                })
            }
            GridStructure::Uniform { .. } => {
                let rows = (0..grid.node_count())
                    .into_par_iter()
                    .map(|i| {
                        let (x, xe) = (&grid.nodes[i], &grid.points[i]);
                        let masses: Vec<f64> = (0..grid.node_count())
                            .map(|j| grid.weights[j] * k.value_embedded(x, xe, &grid.nodes[j], &grid.points[j]))
                            .collect();
                        let total: f64 = masses.iter().sum();
                        (alias(masses), total.ln())
                    })
                    .collect();
                Ok(Self { dt, log_mass_const: None, law: Law::Rows { family: fam, grid, rows } })
            }
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Nearest grid node for a per-node table.
    fn node_of(&self, x: &PointParam) -> Option<usize> {
        match &self.law {
            Law::Rows { grid, .. } => {
                let n = grid.node_count();
                let i = (x.arc() / grid.spacing).round() as usize % n;
                ((grid.nodes[i].arc() - x.arc()).abs() < 1e-9 * grid.spacing).then_some(i)
            }
            _ => None,
        }
    }

    /// Draws `y` from `x` and returns it with `log Σ_j w_j q(x, y_j)`.
    pub fn step<R: Rng + ?Sized>(&self, mf: &ManifoldModel, x: &PointParam, rng: &mut R) -> Result<(PointParam, f64)> {
        match &self.law {
            Law::Offsets { spacing, alias } => {
                let j = alias.sample(rng);
                Ok((mf.arc_point(x.arc() + j as f64 * spacing), self.log_mass_const.unwrap()))
            }
            Law::Rings { radius, thetas, alias } => {
                let theta = thetas[alias.sample(rng)];
                let beta = rng.gen::<f64>() * 2.0 * PI;
                let (sb, cb) = beta.sin_cos();
                Ok((mf.exp_map(x, &[cb, sb], radius * theta), self.log_mass_const.unwrap()))
            }
            Law::Rows { family, grid, rows } => match self.node_of(x) {
                Some(i) => {
                    let (a, lm) = &rows[i];
                    Ok((grid.nodes[a.sample(rng)], *lm))
                }
                // Off-grid start: build the row on the fly.
                None => step_sample(*family, mf, self.dt, x, grid, rng),
            },
        }
    }
}

/// One grid-categorical draw with node probabilities `∝ w_j q_t(x, y_j)`.
pub fn step_sample<R: Rng + ?Sized>(
    fam: KernelFamily,
    mf: &ManifoldModel,
    t: f64,
    x: &PointParam,
    grid: &QuadratureGrid,
    rng: &mut R,
) -> Result<(PointParam, f64)> {
    grid.check_adequate(t)?;
    let k = Kernel::new(fam, mf, t)?;
    let xe = mf.embed(x);
    let masses: Vec<f64> =
        (0..grid.node_count()).map(|j| grid.weights[j] * k.value_embedded(x, &xe, &grid.nodes[j], &grid.points[j])).collect();
    let total: f64 = masses.iter().sum();
    assert!(total > 0.0 && total.is_finite(), "kernel masses must be positive");
    let j = alias(masses).sample(rng);
    Ok((grid.nodes[j], total.ln()))
}

/// `D` lookups along a chain.
#[derive(Debug, Clone)]
enum DCache {
    Constant(f64),
    Pointwise,
}

/// Path sampler with transition tables built once per distinct increment.
pub struct Sampler<'a> {
    cfg: SamplerConfig,
    mf: &'a ManifoldModel,
    tables: BTreeMap<u64, TransitionTable>,
    d_cache: DCache,
    node_d: Option<(f64, Vec<f64>)>,
}

impl<'a> Sampler<'a> {
    pub fn new(cfg: SamplerConfig, mf: &'a ManifoldModel) -> Result<Self> {
        if cfg.paths == 0 {
            return Err(Error::InvalidParameter("paths must be >= 1".into()));
        }
        let resolution = match cfg.resolution {
            Some(r) => r,
            None => mf.resolution_for(cfg.partition.min_increment()),
        };
        let mut tables = BTreeMap::new();
        for dt in cfg.partition.increments() {
            if let std::collections::btree_map::Entry::Vacant(e) = tables.entry(dt.to_bits()) {
                e.insert(TransitionTable::new(cfg.family, mf, dt, resolution)?);
            }
        }
        let d_cache = if mf.is_homogeneous() {
            DCache::Constant(d_function(cfg.family.kind, mf, &mf.origin()))
        } else {
            DCache::Pointwise
        };
        let node_d = if matches!(d_cache, DCache::Pointwise) && cfg.family.normalization == Normalization::RescaledB {
            let g = mf.build_quadrature(resolution)?;
            Some((g.spacing, g.nodes.iter().map(|x| d_function(cfg.family.kind, mf, x)).collect()))
        } else {
            None
        };
        Ok(Self { cfg, mf, tables, d_cache, node_d })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    fn d_at(&self, x: &PointParam) -> f64 {
        match &self.d_cache {
            DCache::Constant(d) => *d,
            DCache::Pointwise => {
                if let Some((h, nodes)) = &self.node_d {
                    let i = (x.arc() / h).round() as usize % nodes.len();
                    if ((i as f64) * h - x.arc()).abs() < 1e-9 * h {
                        return nodes[i];
                    }
                }
                d_function(self.cfg.family.kind, self.mf, x)
            }
        }
    }

    /// Skeleton and log-weight for one path drawn from `rng`.
    pub fn sample_skeleton_with<R: Rng + ?Sized>(&self, x: &PointParam, rng: &mut R) -> Result<WeightedPath> {
        let times = self.cfg.partition.times().to_vec();
        let mut skeleton = Vec::with_capacity(times.len());
        skeleton.push(*x);
        let mut log_weight = 0.0;
        let fam = self.cfg.family;
        for w in times.windows(2) {
            let dt = w[1] - w[0];
            let table = &self.tables[&dt.to_bits()];
            let prev = *skeleton.last().unwrap();
            let (y, log_mass) = table.step(self.mf, &prev, rng)?;
            match fam.normalization {
                Normalization::MarkovT => {}
                Normalization::RawS | Normalization::GlobalSigma => log_weight += log_mass,
                Normalization::RescaledB => {
                    let dx = self.d_at(&prev);
                    let exponent = match fam.kind {
                        crate::kernels::KernelKind::IntrinsicSymmetric => 0.5 * dt * (dx + self.d_at(&y)),
                        _ => dt * dx,
                    };
                    log_weight += log_mass + exponent;
                }
            }
            skeleton.push(y);
        }
        Ok(WeightedPath {
            times,
            skeleton,
            log_weight,
            interpolation: Interpolation::None,
            refinement_depth: 0,
            fine_path: None,
        })
    }

    /// Path number `index`, including the configured interpolation.
    pub fn sample_path(&self, x: &PointParam, index: u64) -> Result<WeightedPath> {
        let mut rng = path_rng(self.cfg.seed, index);
        let path = self.sample_skeleton_with(x, &mut rng)?;
        Ok(interpolate(self.mf, path, self.cfg.interpolation, self.cfg.refinement_depth, &mut rng))
    }

    /// Paths `range`, generated in parallel and returned in index order.
    pub fn sample_range(&self, x: &PointParam, range: std::ops::Range<u64>) -> Result<Vec<WeightedPath>> {
        range.into_par_iter().map(|i| self.sample_path(x, i)).collect()
    }

    pub fn sample_batch(&self, x: &PointParam) -> Result<Vec<WeightedPath>> {
        self.sample_range(x, 0..self.cfg.paths as u64)
    }
}

/// First path of the configured run.
pub fn sample_skeleton(cfg: &SamplerConfig, mf: &ManifoldModel, x: &PointParam) -> Result<WeightedPath> {
    let mut one = cfg.clone();
    one.interpolation = Interpolation::None;
    let s = Sampler::new(one, mf)?;
    s.sample_path(x, 0)
}

/// Fills `fine_path` at `2^depth` sub-steps per segment. Skeleton points are
/// copied into the fine path unchanged.
pub fn interpolate<R: Rng + ?Sized>(
    mf: &ManifoldModel,
    mut path: WeightedPath,
    mode: Interpolation,
    depth: u32,
    rng: &mut R,
) -> WeightedPath {
    path.interpolation = mode;
    path.refinement_depth = depth;
    if mode == Interpolation::None {
        path.fine_path = None;
        return path;
    }
    let sub = 1usize << depth;
    let segs = path.skeleton.len() - 1;
    let embedded: Vec<[f64; 3]> = path.skeleton.iter().map(|x| mf.embed(x)).collect();
    let mut fine = Vec::with_capacity(segs * sub + 1);
    for k in 0..segs {
        let (a, b) = (&path.skeleton[k], &path.skeleton[k + 1]);
        let (ea, eb) = (embedded[k], embedded[k + 1]);
        fine.push(ea);
        match mode {
            Interpolation::LGeodesic => {
                for i in 1..sub {
                    fine.push(mf.embed(&mf.geodesic_point(a, b, i as f64 / sub as f64)));
                }
            }
            Interpolation::MGeodesic => {
                for i in 1..sub {
                    let l = i as f64 / sub as f64;
                    fine.push(std::array::from_fn(|c| ea[c] + l * (eb[c] - ea[c])));
                }
            }
            Interpolation::EuclideanBridge => {
                let dt = path.times[k + 1] - path.times[k];
                let seg = bridge_segment(ea, eb, dt, depth, mf.embed_dim(), rng);
                fine.extend_from_slice(&seg[1..sub]);
            }
            Interpolation::None => unreachable!(),
        }
    }
    fine.push(*embedded.last().unwrap());
    path.fine_path = Some(fine);
    path
}

/// Brownian bridge in the first `dim` coordinates from `a` to `b` over time
/// `dt`, sampled by midpoint bisection at `2^depth + 1` points.
pub fn bridge_segment<R: Rng + ?Sized>(
    a: [f64; 3],
    b: [f64; 3],
    dt: f64,
    depth: u32,
    dim: usize,
    rng: &mut R,
) -> Vec<[f64; 3]> {
    let n = 1usize << depth;
    let mut pts = vec![[0.0; 3]; n + 1];
    pts[0] = a;
    pts[n] = b;
    let mut step = n;
    while step > 1 {
        let half = step / 2;
        // Midpoint of an interval of length h has variance h/4.
        let sd = (dt * step as f64 / n as f64 / 4.0).sqrt();
        let mut lo = 0;
        while lo < n {
            let hi = lo + step;
            let mut m = [0.0; 3];
            for c in 0..3 {
                m[c] = 0.5 * (pts[lo][c] + pts[hi][c]);
                if c < dim {
                    let z: f64 = rng.sample(StandardNormal);
                    m[c] += sd * z;
                }
            }
            pts[lo + half] = m;
            lo = hi;
        }
        step = half;
    }
    pts
}

/// Largest distance of a sampled bridge from its chord.
pub fn max_chord_deviation(seg: &[[f64; 3]]) -> f64 {
    let n = seg.len() - 1;
    let (a, b) = (seg[0], seg[n]);
    seg.iter()
        .enumerate()
        .map(|(i, p)| {
            let l = i as f64 / n as f64;
            (0..3).map(|c| (p[c] - a[c] - l * (b[c] - a[c])).powi(2)).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max)
}

/// Per-segment `(Δt, max deviation)` of a bridge-interpolated path.
pub fn excursion_maxima(path: &WeightedPath) -> Result<Vec<(f64, f64)>> {
    let fine = match (&path.fine_path, path.interpolation) {
        (Some(f), Interpolation::EuclideanBridge) => f,
        _ => return Err(Error::InvalidParameter("path has no bridge interpolation".into())),
    };
    let sub = 1usize << path.refinement_depth;
    Ok((0..path.skeleton.len() - 1)
        .map(|k| (path.times[k + 1] - path.times[k], max_chord_deviation(&fine[k * sub..=(k + 1) * sub])))
        .collect())
}

/// Fraction of segments whose deviation from the chord exceeds `alpha`.
pub fn bridge_excursion_stat(maxima: &[f64], alpha: f64) -> f64 {
    if maxima.is_empty() {
        return 0.0;
    }
    maxima.iter().filter(|&&m| m > alpha).count() as f64 / maxima.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcursionFit {
    pub alphas: Vec<f64>,
    pub fractions: Vec<f64>,
    /// `-slope` of `log(fraction/Δt)` against `α²/Δt`.
    pub chi_hat: f64,
    pub intercept: f64,
    pub monotone: bool,
}

/// Fits the tail shape `fraction ≈ C Δt e^{-χ α²/Δt}` over an α-grid for
/// segments of common length `dt`.
pub fn fit_excursion_rate(maxima: &[f64], dt: f64, alphas: &[f64]) -> ExcursionFit {
    let fractions: Vec<f64> = alphas.iter().map(|&a| bridge_excursion_stat(maxima, a)).collect();
    let monotone = fractions.windows(2).all(|w| w[1] < w[0]);
    let (xs, ys): (Vec<f64>, Vec<f64>) = alphas
        .iter()
        .zip(&fractions)
        .filter(|(_, &f)| f > 0.0)
        .map(|(&a, &f)| (a * a / dt, (f / dt).ln()))
        .unzip();
    let (slope, intercept) = if xs.len() >= 2 { linear_fit(&xs, &ys) } else { (f64::NAN, f64::NAN) };
    ExcursionFit { alphas: alphas.to_vec(), fractions, chi_hat: -slope, intercept, monotone }
}
