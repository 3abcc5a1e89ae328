//! The seven experiment runners. Each validates its inputs before doing any
//! numerical work and returns tables plus a JSON result block.

use pinning_core::density::{
    compare_ensembles, d_function, normalized_weights, pinned_samples, reference_samples, reference_seed,
    weighted_estimate, ComparisonReport, Functional, WeightedSample,
};
use pinning_core::geometry::{Ambient, ManifoldKind, ManifoldModel, PointParam};
use pinning_core::kernels::{check_supported, normalization_b, normalization_exponent, sphere_heat_angle_cdf, Normalization};
use pinning_core::numerics::{ks_test, ks_test_weighted, loglog_slope};
use pinning_core::pinning::{excursion_maxima, fit_excursion_rate, Interpolation, Partition, Sampler, SamplerConfig};
use pinning_core::semigroup::{chernoff_product, chernoff_residual, TestFunction};
use pinning_core::wick::{admissible_indices, gaussian_moment, gaussian_moment_oracle, HalfInt, MultiIndex};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{Config, Experiment};
use crate::output::{Cell, Outcome, Table};
use crate::CliError;

pub fn run(cfg: &Config) -> Result<Outcome, CliError> {
    match cfg.experiment {
        Experiment::WickCheck => wick_check(cfg),
        Experiment::ChernoffCheck => chernoff_check(cfg),
        Experiment::HessianLimit => hessian_limit(cfg),
        Experiment::NormalizationCheck => normalization_check(cfg),
        Experiment::SamplePinned => sample_pinned(cfg),
        Experiment::CompareDensity => compare_density(cfg),
        Experiment::BridgeStat => bridge_stat(cfg),
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Config(msg.into()))
}

/// Manifold plus family, validated together.
fn manifold_and_family(cfg: &Config) -> Result<ManifoldModel, CliError> {
    let mf = cfg.manifold.build()?;
    check_supported(cfg.family, &mf).map_err(CliError::from_validation)?;
    Ok(mf)
}

fn check_point(mf: &ManifoldModel, x: PointParam) -> Result<PointParam, CliError> {
    match (x, mf.is_curve()) {
        (PointParam::Arc(s), true) if s.is_finite() => Ok(mf.arc_point(s)),
        (PointParam::Sphere { theta, phi }, false) if theta.is_finite() && phi.is_finite() => {
            Ok(mf.sphere_point(theta, phi))
        }
        _ => config_err(format!("point {x:?} does not fit {}", mf.name())),
    }
}

fn coord_header(mf: &ManifoldModel) -> Vec<&'static str> {
    if mf.is_curve() {
        vec!["s"]
    } else {
        vec!["theta", "phi"]
    }
}

fn coord_cells(x: &PointParam) -> Vec<Cell> {
    x.coords().into_iter().map(Cell::Float).collect()
}

fn header<'a>(parts: &[&[&'a str]]) -> Vec<&'a str> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

/// `E|Z|^k` for a standard normal `Z`.
fn abs_normal_moment(k: u32) -> f64 {
    let m = k / 2;
    let mut acc = 1.0;
    if k.is_multiple_of(2) {
        let mut j = k as i64 - 1;
        while j > 1 {
            acc *= j as f64;
            j -= 2;
        }
        acc
    } else {
        for i in 1..=m {
            acc *= 2.0 * i as f64;
        }
        (2.0 / std::f64::consts::PI).sqrt() * acc
    }
}

fn wick_check(cfg: &Config) -> Result<Outcome, CliError> {
    let w = &cfg.wick;
    if w.max_dim == 0 || w.max_dim > 4 {
        return config_err("wick.max_dim must lie in 1..=4");
    }
    if w.t_values.iter().any(|&t| !(t > 0.0)) {
        return config_err("wick.t_values must be positive");
    }
    if w.oracle_radius < 8.0 {
        return config_err("wick.oracle_radius must be >= 8");
    }
    let max_degree = HalfInt::from_twice((2.0 * w.max_degree) as i64);
    let mut jobs: Vec<(MultiIndex, f64)> = Vec::new();
    for n in 1..=w.max_dim {
        for k in admissible_indices(n, max_degree, w.max_spatial_order) {
            for &t in &w.t_values {
                jobs.push((k.clone(), t));
            }
        }
    }
    let results: Result<Vec<(f64, f64, f64)>, CliError> = jobs
        .par_iter()
        .map(|(k, t)| {
            let exact = gaussian_moment(k, *t)?;
            let radius = w.oracle_radius * (*t * k.dim() as f64).sqrt();
            let oracle = gaussian_moment_oracle(k, *t, radius)?;
            let scale = t.powi(k.k0) * k.kspace.iter().map(|&e| t.powf(e as f64 / 2.0) * abs_normal_moment(e)).product::<f64>();
            Ok((exact, oracle, (exact - oracle).abs() / scale))
        })
        .collect();
    let results = results?;
    let mut table = Table::new("moments", &["n", "k0", "k", "degree", "t", "exact", "oracle", "rel_error"]);
    let mut max_rel: f64 = 0.0;
    for ((k, t), (exact, oracle, rel)) in jobs.iter().zip(&results) {
        max_rel = max_rel.max(*rel);
        let ks: Vec<String> = k.kspace.iter().map(|e| e.to_string()).collect();
        table.push(vec![
            k.dim().into(),
            (k.k0 as i64).into(),
            ks.join(";").into(),
            k.degree().to_string().into(),
            (*t).into(),
            (*exact).into(),
            (*oracle).into(),
            (*rel).into(),
        ]);
    }
    let passed = max_rel <= w.tolerance;
    Ok(Outcome {
        passed,
        results: json!({
            "cases": jobs.len(),
            "max_rel_error": max_rel,
            "tolerance": w.tolerance,
        }),
        tables: vec![table],
    })
}

/// Eigenvalue of the Laplacian for the closed-form test functions.
fn laplace_eigenvalue(f: &TestFunction, mf: &ManifoldModel) -> Option<f64> {
    let probe = match mf.kind() {
        ManifoldKind::Sphere2 { .. } => {
            // Any point off the nodal set of the harmonic will do.
            mf.sphere_point(0.7390851332151607, 0.4142135623730951)
        }
        _ => mf.arc_point(0.0),
    };
    let v = f.eval(mf, &probe);
    let lap = f.laplacian(mf, &probe)?;
    if v.abs() > 1e-8 {
        return Some(lap / v);
    }
    let probe = mf.origin();
    Some(f.laplacian(mf, &probe)? / f.eval(mf, &probe))
}

fn chernoff_check(cfg: &Config) -> Result<Outcome, CliError> {
    let mf = manifold_and_family(cfg)?;
    let f = cfg.test_function;
    f.check(&mf).map_err(CliError::from_validation)?;
    let Some(lambda) = laplace_eigenvalue(&f, &mf) else {
        return Err(CliError::Unsupported(format!("{f:?} has no closed-form Laplacian")));
    };
    if cfg.t_grid.len() < 3 {
        return config_err("t_grid needs at least three entries");
    }
    let partition = cfg.partition.build()?;
    let resolution = cfg.mc.resolution.unwrap_or_else(|| mf.resolution_for(partition.min_increment()));
    let grid = mf.build_quadrature(resolution).map_err(CliError::from_validation)?;
    for dt in partition.increments() {
        grid.check_adequate(dt).map_err(CliError::from_validation)?;
    }

    let report = chernoff_residual(cfg.family, &mf, &f, &cfg.t_grid)?;
    let mut residuals = Table::new("residual", &["t", "residual_sup"]);
    for (t, r) in report.t_grid.iter().zip(&report.residual_sup) {
        residuals.push(vec![(*t).into(), (*r).into()]);
    }

    // The limit is the heat semigroup, times e^{E} for the raw and global
    // normalizations when E is constant.
    let horizon = *partition.times().last().unwrap();
    let zeroth = match cfg.family.normalization {
        Normalization::MarkovT | Normalization::RescaledB => Some(0.0),
        Normalization::RawS | Normalization::GlobalSigma => {
            mf.is_homogeneous().then(|| normalization_exponent(cfg.family.kind, &mf, &mf.origin()))
        }
    };
    let values = chernoff_product(cfg.family, &mf, &partition, &f, &grid)?;
    let mut product = Table::new("product", &header(&[&["node"], &coord_header(&mf), &["value", "limit"]]));
    let mut product_error: Option<f64> = None;
    for (i, (x, v)) in grid.nodes.iter().zip(&values).enumerate() {
        let limit = zeroth.map(|e| ((e + 0.5 * lambda) * horizon).exp() * f.eval(&mf, x));
        if let Some(l) = limit {
            product_error = Some(product_error.unwrap_or(0.0).max((v - l).abs()));
        }
        let mut row: Vec<Cell> = vec![i.into()];
        row.extend(coord_cells(x));
        row.push((*v).into());
        row.push(limit.unwrap_or(f64::NAN).into());
        product.push(row);
    }
    let order_ok = report.fitted_order >= cfg.chernoff.min_order;
    let product_ok = product_error.is_none_or(|e| e <= cfg.chernoff.product_tolerance);
    Ok(Outcome {
        passed: order_ok && product_ok,
        results: json!({
            "fitted_order": report.fitted_order,
            "min_order": cfg.chernoff.min_order,
            "product_sup_error": product_error,
            "product_tolerance": cfg.chernoff.product_tolerance,
            "product_steps": partition.len() - 1,
            "product_mesh": partition.mesh(),
            "grid_nodes": grid.node_count(),
        }),
        tables: vec![residuals, product],
    })
}

/// `lim (d_M² − d_L²)/d_L⁴ = −|II(v, v)|²/12` along a unit-speed geodesic.
pub fn chord_arc_constant(mf: &ManifoldModel, x: &PointParam) -> f64 {
    match (mf.kind(), mf.ambient()) {
        (_, Ambient::Itself) => 0.0,
        (ManifoldKind::Sphere2 { radius }, _) => -1.0 / (12.0 * radius * radius),
        _ => -mf.curvature_at(x).tau_sq / 12.0,
    }
}

fn hessian_limit(cfg: &Config) -> Result<Outcome, CliError> {
    let mf = cfg.manifold.build()?;
    let h = &cfg.hessian;
    if h.s_values.is_empty() {
        return config_err("hessian.s_values must not be empty");
    }
    let x = check_point(&mf, h.point.unwrap_or_else(|| mf.origin()))?;
    let direction = h.direction.clone().unwrap_or_else(|| {
        let mut d = vec![0.0; mf.intrinsic_dim()];
        d[0] = 1.0;
        d
    });
    let predicted = chord_arc_constant(&mf, &x);
    let tolerance = h.tolerance.unwrap_or(if mf.is_homogeneous() { 1e-3 } else { 2e-2 });
    let mut table = Table::new("defect", &["s", "defect", "predicted", "abs_error"]);
    let mut finest = (f64::INFINITY, f64::NAN);
    for &s in &h.s_values {
        let defect = mf.chord_arc_defect(&x, &direction, s).map_err(CliError::from_validation)?;
        let err = (defect - predicted).abs();
        if s < finest.0 {
            finest = (s, err);
        }
        table.push(vec![s.into(), defect.into(), predicted.into(), err.into()]);
    }
    Ok(Outcome {
        passed: finest.1 <= tolerance,
        results: json!({
            "predicted": predicted,
            "finest_s": finest.0,
            "finest_abs_error": finest.1,
            "tolerance": tolerance,
        }),
        tables: vec![table],
    })
}

/// Evenly spread probe points: arc lengths from 0 on curves, staggered
/// colatitudes on the sphere.
fn probe_points(mf: &ManifoldModel, n: usize) -> Vec<PointParam> {
    (0..n)
        .map(|k| {
            if mf.is_curve() {
                mf.arc_point(k as f64 * mf.perimeter() / n as f64)
            } else {
                let theta = (k as f64 + 0.5) * std::f64::consts::PI / n as f64;
                mf.sphere_point(theta, 0.7 * k as f64)
            }
        })
        .collect()
}

/// Slope of the log–log fit over the entries above `floor`, or `None` when
/// fewer than two are.
fn fit_above_floor(ts: &[f64], residuals: &[f64], floor: f64) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = ts.iter().zip(residuals).filter(|(_, &r)| r > floor).map(|(&t, &r)| (t, r)).unzip();
    (x.len() >= 2).then(|| loglog_slope(&x, &y))
}

fn normalization_check(cfg: &Config) -> Result<Outcome, CliError> {
    let mf = manifold_and_family(cfg)?;
    let ns = &cfg.normalization;
    if ns.points == 0 {
        return config_err("normalization.points must be >= 1");
    }
    if cfg.t_grid.len() < 2 {
        return config_err("t_grid needs at least two entries");
    }
    let t_min = cfg.t_grid[0];
    if let Some(r) = cfg.mc.resolution {
        mf.build_quadrature(r)
            .and_then(|g| g.check_adequate(t_min))
            .map_err(CliError::from_validation)?;
    }
    // Kernel construction rejects times outside its series range up front.
    for &t in &cfg.t_grid {
        pinning_core::kernels::Kernel::new(cfg.family, &mf, t).map_err(CliError::from_validation)?;
    }
    let points = probe_points(&mf, ns.points);
    let mut table = Table::new(
        "normalization",
        &header(&[&["t", "point"], &coord_header(&mf), &["b", "normalized", "predicted", "residual", "residual_opposite_sign"]]),
    );
    let mut sup = Vec::new();
    let mut sup_opposite = Vec::new();
    for &t in &cfg.t_grid {
        let grid = mf.build_quadrature(cfg.mc.resolution.unwrap_or_else(|| mf.resolution_for(t)))?;
        let reports: Result<Vec<_>, _> =
            points.par_iter().map(|x| normalization_b(cfg.family, &mf, t, x, &grid)).collect();
        let (mut s, mut so) = (0.0f64, 0.0f64);
        for (k, r) in reports?.into_iter().enumerate() {
            let e = normalization_exponent(cfg.family.kind, &mf, &r.x);
            let opposite = r.normalized - (-t * e).exp();
            s = s.max(r.residual.abs());
            so = so.max(opposite.abs());
            let mut row: Vec<Cell> = vec![t.into(), k.into()];
            row.extend(coord_cells(&r.x));
            row.extend([r.b_value.into(), r.normalized.into(), r.predicted.into(), r.residual.into(), opposite.into()]);
            table.push(row);
        }
        sup.push(s);
        sup_opposite.push(so);
    }
    let slope = fit_above_floor(&cfg.t_grid, &sup, ns.noise_floor);
    let slope_opposite = fit_above_floor(&cfg.t_grid, &sup_opposite, ns.noise_floor);
    let mut fit = Table::new("fit", &["t", "residual_sup", "residual_sup_opposite_sign"]);
    for ((t, s), so) in cfg.t_grid.iter().zip(&sup).zip(&sup_opposite) {
        fit.push(vec![(*t).into(), (*s).into(), (*so).into()]);
    }
    // Residuals entirely below the floor mean the expansion holds to
    // quadrature accuracy.
    let passed = slope.is_none_or(|s| s >= ns.min_slope);
    Ok(Outcome {
        passed,
        results: json!({
            "fitted_slope": slope,
            "fitted_slope_opposite_sign": slope_opposite,
            "below_noise_floor": slope.is_none(),
            "min_slope": ns.min_slope,
            "noise_floor": ns.noise_floor,
        }),
        tables: vec![table, fit],
    })
}

fn sampler_config(cfg: &Config, partition: Partition) -> SamplerConfig {
    let mut sc = SamplerConfig::new(cfg.mc.seed, cfg.mc.paths, partition, cfg.family);
    sc.resolution = cfg.mc.resolution;
    sc.interpolation = cfg.mc.interpolation;
    sc.refinement_depth = cfg.mc.refinement_depth;
    sc
}

fn check_interpolation(mf: &ManifoldModel, mode: Interpolation) -> Result<(), CliError> {
    if mode == Interpolation::EuclideanBridge && mf.ambient() != Ambient::Euclidean {
        return Err(CliError::Unsupported("Euclidean bridges need a Euclidean ambient space".into()));
    }
    Ok(())
}

fn sample_pinned(cfg: &Config) -> Result<Outcome, CliError> {
    let mf = manifold_and_family(cfg)?;
    check_interpolation(&mf, cfg.mc.interpolation)?;
    let partition = cfg.partition.build()?;
    let sampler = Sampler::new(sampler_config(cfg, partition), &mf).map_err(CliError::from_validation)?;
    let x = mf.origin();
    let paths = sampler.sample_batch(&x)?;
    let dim = mf.embed_dim();
    let xyz = &["x", "y", "z"][..dim];
    let mut skel = Table::new("paths", &header(&[&["path_id", "step", "time"], &coord_header(&mf), xyz, &["log_weight"]]));
    let mut fine = Table::new("fine_paths", &header(&[&["path_id", "index", "time"], xyz]));
    for (id, p) in paths.iter().enumerate() {
        for (k, (t, y)) in p.times.iter().zip(&p.skeleton).enumerate() {
            let e = mf.embed(y);
            let mut row: Vec<Cell> = vec![id.into(), k.into(), (*t).into()];
            row.extend(coord_cells(y));
            row.extend(e[..dim].iter().map(|&c| Cell::Float(c)));
            row.push(p.log_weight.into());
            skel.push(row);
        }
        if let Some(fp) = &p.fine_path {
            let sub = 1usize << p.refinement_depth;
            for (i, e) in fp.iter().enumerate() {
                let (seg, j) = (i / sub, i % sub);
                let t = if seg + 1 < p.times.len() {
                    p.times[seg] + (p.times[seg + 1] - p.times[seg]) * j as f64 / sub as f64
                } else {
                    p.times[seg]
                };
                let mut row: Vec<Cell> = vec![id.into(), i.into(), t.into()];
                row.extend(e[..dim].iter().map(|&c| Cell::Float(c)));
                fine.push(row);
            }
        }
    }
    let logw: Vec<f64> = paths.iter().map(|p| p.log_weight).collect();
    let finite = logw.iter().all(|w| w.is_finite());
    let (w, weight_free) = normalized_weights(&logw);
    let ess = w.iter().sum::<f64>().powi(2) / w.iter().map(|v| v * v).sum::<f64>();
    let mut tables = vec![skel];
    if cfg.mc.interpolation != Interpolation::None {
        tables.push(fine);
    }
    Ok(Outcome {
        passed: finite,
        results: json!({
            "paths": paths.len(),
            "steps": sampler.config().partition.len() - 1,
            "mean_log_weight": logw.iter().sum::<f64>() / logw.len() as f64,
            "min_log_weight": logw.iter().cloned().fold(f64::INFINITY, f64::min),
            "max_log_weight": logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            "effective_sample_size": ess,
            "weight_free": weight_free,
        }),
        tables,
    })
}

/// Built-in functionals: end value and time average of the first mode, and
/// the largest displacement.
pub fn default_functionals(mf: &ManifoldModel) -> Vec<Functional> {
    let f = match mf.kind() {
        ManifoldKind::Circle { .. } => TestFunction::CircleMode { frequency: 1 },
        ManifoldKind::Ellipse { .. } => TestFunction::EllipseMode { frequency: 1 },
        ManifoldKind::Sphere2 { .. } => TestFunction::SphereHarmonic { l: 1, m: 0 },
    };
    vec![Functional::EndValue { function: f }, Functional::TimeAverage { function: f }, Functional::MaxDisplacement]
}

/// `+1` if the Feynman–Kac weight grows with `|τ|²` along `L`, `-1` if it
/// shrinks, `None` if `D` is constant.
fn curvature_weight_direction(cfg: &Config, mf: &ManifoldModel) -> Option<f64> {
    if mf.is_homogeneous() {
        return None;
    }
    let pts = probe_points(mf, 64);
    let (lo, hi) = pts.iter().fold((pts[0], pts[0]), |(lo, hi), p| {
        let tau = |x: &PointParam| mf.curvature_at(x).tau_sq;
        (if tau(p) < tau(&lo) { *p } else { lo }, if tau(p) > tau(&hi) { *p } else { hi })
    });
    let dd = d_function(cfg.family.kind, mf, &hi) - d_function(cfg.family.kind, mf, &lo);
    // The weight is exp(-Σ Δt D).
    (dd.abs() > 1e-12).then(|| -dd.signum())
}

struct Ensembles {
    pinned: Vec<WeightedSample>,
    reference: Vec<WeightedSample>,
}

fn ensembles(
    cfg: &Config,
    mf: &ManifoldModel,
    partition: &Partition,
    x: &PointParam,
    functionals: &[Functional],
) -> Result<Ensembles, CliError> {
    let kind = cfg.family.kind;
    let (seed, n) = (cfg.mc.seed, cfg.mc.paths);
    let pinned = pinned_samples(mf, kind, partition, x, seed, n, cfg.mc.resolution, functionals)?;
    let reference = reference_samples(mf, kind, partition, x, reference_seed(seed), n, functionals);
    Ok(Ensembles { pinned, reference })
}

fn column(samples: &[WeightedSample], k: usize) -> Vec<f64> {
    samples.iter().map(|s| s.values[k]).collect()
}

fn compare_density(cfg: &Config) -> Result<Outcome, CliError> {
    let mf = manifold_and_family(cfg)?;
    let ds = &cfg.density;
    if cfg.family.normalization != Normalization::GlobalSigma {
        return config_err("compare_density compares the global_sigma normalization");
    }
    let partition = cfg.partition.build()?;
    let x = check_point(&mf, ds.start.unwrap_or_else(|| mf.origin()))?;
    let visible = ds.functionals.clone().unwrap_or_else(|| default_functionals(&mf));
    if visible.is_empty() {
        return config_err("density.functionals must not be empty");
    }
    for f in &visible {
        if let Functional::EndValue { function } | Functional::TimeAverage { function } = f {
            function.check(&mf).map_err(CliError::from_validation)?;
        }
    }
    let coarse = ds.coarse_steps.map(Partition::uniform).transpose().map_err(CliError::from_validation)?;
    // Validate transition grids before sampling anything.
    Sampler::new(sampler_config(cfg, partition.clone()), &mf).map_err(CliError::from_validation)?;
    if let Some(c) = &coarse {
        Sampler::new(sampler_config(cfg, c.clone()), &mf).map_err(CliError::from_validation)?;
    }

    let direction = curvature_weight_direction(cfg, &mf);
    let sphere_radius = matches!(mf.kind(), ManifoldKind::Sphere2 { .. }).then(|| mf.sphere_radius());
    let mut all = visible.clone();
    let mut extra = |f: Functional| {
        if let Some(i) = all.iter().position(|g| *g == f) {
            i
        } else {
            all.push(f);
            all.len() - 1
        }
    };
    let occupation = direction.map(|_| extra(Functional::CurvatureOccupation));
    let end_distance = sphere_radius.map(|_| extra(Functional::EndDistance));
    let ids: Vec<String> = all.iter().map(Functional::id).collect();

    let fine = ensembles(cfg, &mf, &partition, &x, &all)?;
    let reports = compare_ensembles(&fine.pinned, &fine.reference, &ids, partition.mesh())?;
    let coarse_reports = match &coarse {
        Some(c) => {
            let e = ensembles(cfg, &mf, c, &x, &all)?;
            Some(compare_ensembles(&e.pinned, &e.reference, &ids, c.mesh())?)
        }
        None => None,
    };

    let mut table = Table::new(
        "comparison",
        &[
            "functional",
            "mesh",
            "pinned_estimate",
            "pinned_se",
            "reference_estimate",
            "reference_se",
            "z_score",
            "allowance",
            "passed",
        ],
    );
    let mut passed = true;
    let mut checks = Vec::new();
    let push_row = |t: &mut Table, r: &ComparisonReport, allowance: f64, ok: Option<bool>| {
        t.push(vec![
            r.functional_id.clone().into(),
            r.mesh.into(),
            r.pinned_estimate.into(),
            r.pinned_se.into(),
            r.weighted_reference_estimate.into(),
            r.weighted_reference_se.into(),
            r.z_score.into(),
            allowance.into(),
            ok.map_or("", |b| if b { "true" } else { "false" }).into(),
        ]);
    };
    for (k, r) in reports.iter().enumerate() {
        let gated = k < visible.len();
        let allowance = coarse_reports.as_ref().map_or(0.0, |c| {
            let d_coarse = c[k].pinned_estimate - c[k].weighted_reference_estimate;
            let d_fine = r.pinned_estimate - r.weighted_reference_estimate;
            (d_coarse - d_fine).abs().min(ds.max_allowance)
        });
        let se = r.pinned_se.hypot(r.weighted_reference_se);
        let ok = (r.pinned_estimate - r.weighted_reference_estimate).abs() <= ds.z_max * se + allowance;
        if gated {
            passed &= ok;
            checks.push(json!({
                "functional": r.functional_id,
                "z_score": r.z_score,
                "allowance": allowance,
                "passed": ok,
            }));
        }
        push_row(&mut table, r, allowance, gated.then_some(ok));
    }
    if let Some(c) = &coarse_reports {
        for r in c {
            push_row(&mut table, r, f64::NAN, None);
        }
    }

    let sign_test = match (direction, occupation) {
        (Some(dir), Some(k)) => {
            let r = &reports[k];
            let unweighted_values = column(&fine.reference, k);
            let ones = vec![1.0; unweighted_values.len()];
            let u = weighted_estimate(&unweighted_values, &ones, true);
            let z = (r.pinned_estimate - u.mean) / r.pinned_se.hypot(u.se);
            let ok = dir * z >= ds.z_max;
            passed &= ok;
            Some(json!({
                "pinned_occupation": r.pinned_estimate,
                "pinned_se": r.pinned_se,
                "unweighted_occupation": u.mean,
                "unweighted_se": u.se,
                "expected_direction": dir,
                "z_score": z,
                "passed": ok,
            }))
        }
        _ => None,
    };

    let ks = match (sphere_radius, end_distance) {
        (Some(r), Some(k)) => {
            let horizon = *partition.times().last().unwrap();
            let cdf = |theta: f64| sphere_heat_angle_cdf(r, horizon, theta);
            let angles = |s: &[WeightedSample]| -> Vec<f64> { column(s, k).iter().map(|d| d / r).collect() };
            let test = |s: &[WeightedSample]| {
                let (w, free) = normalized_weights(&s.iter().map(|v| v.log_weight).collect::<Vec<_>>());
                let a = angles(s);
                if free {
                    ks_test(&a, cdf, a.len() as f64)
                } else {
                    ks_test_weighted(&a, &w, cdf)
                }
            };
            let (d_p, p_p) = test(&fine.pinned);
            let (d_r, p_r) = test(&fine.reference);
            let ok = p_p > ds.ks_min_p;
            passed &= ok;
            Some(json!({
                "pinned_statistic": d_p,
                "pinned_p_value": p_p,
                "reference_statistic": d_r,
                "reference_p_value": p_r,
                "min_p": ds.ks_min_p,
                "passed": ok,
            }))
        }
        _ => None,
    };

    Ok(Outcome {
        passed,
        results: json!({
            "reports": reports,
            "coarse_reports": coarse_reports,
            "checks": checks,
            "curvature_sign_test": sign_test,
            "geodesic_angle_ks": ks,
        }),
        tables: vec![table],
    })
}

fn bridge_stat(cfg: &Config) -> Result<Outcome, CliError> {
    let mf = manifold_and_family(cfg)?;
    if cfg.mc.interpolation != Interpolation::EuclideanBridge {
        return config_err("bridge_stat needs mc.interpolation = \"euclidean_bridge\"");
    }
    check_interpolation(&mf, cfg.mc.interpolation)?;
    let partition = cfg.partition.build()?;
    let inc = partition.increments();
    let dt = partition.mesh();
    if inc.iter().any(|&d| (d - dt).abs() > 1e-12 * dt) {
        return config_err("bridge_stat needs a uniform partition");
    }
    let a = &cfg.bridge.alphas;
    if a.len() < 2 || a.iter().any(|&v| !(v > 0.0)) || a.windows(2).any(|w| w[1] <= w[0]) {
        return config_err("bridge.alphas must be at least two increasing positive values");
    }
    let sampler = Sampler::new(sampler_config(cfg, partition), &mf).map_err(CliError::from_validation)?;
    let x = mf.origin();
    let per_path: Result<Vec<Vec<f64>>, CliError> = (0..cfg.mc.paths as u64)
        .into_par_iter()
        .map(|i| {
            let p = sampler.sample_path(&x, i)?;
            Ok(excursion_maxima(&p)?.into_iter().map(|(_, m)| m).collect())
        })
        .collect();
    let maxima: Vec<f64> = per_path?.into_iter().flatten().collect();
    let fit = fit_excursion_rate(&maxima, dt, a);
    let mut table = Table::new("excursions", &["alpha", "fraction", "alpha_sq_over_dt", "log_fraction_over_dt"]);
    for (alpha, frac) in fit.alphas.iter().zip(&fit.fractions) {
        table.push(vec![(*alpha).into(), (*frac).into(), (alpha * alpha / dt).into(), (frac / dt).ln().into()]);
    }
    Ok(Outcome {
        passed: fit.chi_hat > 0.0 && fit.monotone,
        results: json!({
            "segments": maxima.len(),
            "dt": dt,
            "chi_hat": fit.chi_hat,
            "intercept": fit.intercept,
            "monotone": fit.monotone,
        }),
        tables: vec![table],
    })
}

/// `list` output: one line per experiment.
pub fn list_experiments() -> String {
    Experiment::ALL.iter().map(|e| format!("{} → {}\n", e.name(), e.anchor())).collect()
}
