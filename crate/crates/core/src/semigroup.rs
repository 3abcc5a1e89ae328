//! Kernel operators on grid functions, Chernoff products and the
//! short-time residual against `Zf + ½Δf`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::d_function;
use crate::error::{Error, Result};
use crate::geometry::{ManifoldKind, ManifoldModel, PointParam, QuadratureGrid};
use crate::kernels::{normalization_exponent, Kernel, KernelFamily, Normalization};
use crate::numerics::{associated_legendre, loglog_slope};
use crate::pinning::Partition;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    /// Real spherical harmonic: `P_l^|m|(cos θ)` times `cos(mφ)` for `m >= 0`
    /// and `sin(|m|φ)` for `m < 0`.
    SphereHarmonic { l: usize, m: i32 },
    /// `cos(k s / r)` on a circle of radius `r`.
    CircleMode { frequency: u32 },
    /// `cos(2π k s / perimeter)` on an ellipse.
    EllipseMode { frequency: u32 },
    /// `exp(-d_L(x, center)² / 2 width²)`.
    Bump { center: PointParam, width: f64 },
}

impl TestFunction {
    pub fn check(&self, mf: &ManifoldModel) -> Result<()> {
        let ok = match (self, mf.kind()) {
            (TestFunction::SphereHarmonic { l, m }, ManifoldKind::Sphere2 { .. }) => m.unsigned_abs() as usize <= *l,
            (TestFunction::CircleMode { .. }, ManifoldKind::Circle { .. }) => true,
            (TestFunction::EllipseMode { .. }, ManifoldKind::Ellipse { .. }) => true,
            (TestFunction::Bump { center, width }, _) => {
                *width > 0.0 && matches!(center, PointParam::Arc(_)) == mf.is_curve()
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Unsupported(format!("test function {self:?} on {}", mf.name())))
        }
    }

    pub fn eval(&self, mf: &ManifoldModel, x: &PointParam) -> f64 {
        match (*self, *x) {
            (TestFunction::SphereHarmonic { l, m }, PointParam::Sphere { theta, phi }) => {
                let p = associated_legendre(l, m.unsigned_abs() as usize, theta.cos());
                let a = m.unsigned_abs() as f64 * phi;
                if m >= 0 {
                    p * a.cos()
                } else {
                    p * a.sin()
                }
            }
            (TestFunction::CircleMode { frequency }, PointParam::Arc(s)) => {
                let r = mf.total_volume() / (2.0 * PI);
                (frequency as f64 * s / r).cos()
            }
            (TestFunction::EllipseMode { frequency }, PointParam::Arc(s)) => {
                (2.0 * PI * frequency as f64 * s / mf.total_volume()).cos()
            }
            (TestFunction::Bump { center, width }, _) => {
                let d = mf.geodesic_distance(x, &center);
                (-d * d / (2.0 * width * width)).exp()
            }
            _ => panic!("test function does not match manifold"),
        }
    }

    /// Closed-form Laplace–Beltrami value where available.
    pub fn laplacian(&self, mf: &ManifoldModel, x: &PointParam) -> Option<f64> {
        let eigen = match *self {
            TestFunction::SphereHarmonic { l, .. } => {
                let r = mf.sphere_radius();
                -((l * (l + 1)) as f64) / (r * r)
            }
            TestFunction::CircleMode { frequency } => {
                let r = mf.total_volume() / (2.0 * PI);
                -(frequency as f64 / r).powi(2)
            }
            TestFunction::EllipseMode { frequency } => {
                -(2.0 * PI * frequency as f64 / mf.total_volume()).powi(2)
            }
            TestFunction::Bump { .. } => return None,
        };
        Some(eigen * self.eval(mf, x))
    }

    pub fn on_grid(&self, mf: &ManifoldModel, grid: &QuadratureGrid) -> Vec<f64> {
        grid.nodes.iter().map(|x| self.eval(mf, x)).collect()
    }
}

/// One kernel operator at a fixed time, ready to act on grid functions.
pub struct Operator<'a> {
    kernel: Kernel<'a>,
    grid: &'a QuadratureGrid,
    /// `D` at every grid node, for the rescaled normalization.
    d_nodes: Option<Vec<f64>>,
}

impl<'a> Operator<'a> {
    pub fn new(fam: KernelFamily, mf: &'a ManifoldModel, t: f64, grid: &'a QuadratureGrid) -> Result<Self> {
        grid.check_adequate(t)?;
        let kernel = Kernel::new(fam, mf, t)?;
        let d_nodes = (fam.normalization == Normalization::RescaledB)
            .then(|| grid.nodes.par_iter().map(|x| d_function(fam.kind, mf, x)).collect());
        Ok(Self { kernel, grid, d_nodes })
    }

    /// `(Sf)(x_i)` for one output node.
    pub fn apply_at(&self, i: usize, values: &[f64]) -> f64 {
        let g = self.grid;
        let (x, xe) = (&g.nodes[i], &g.points[i]);
        let symmetric = self.kernel.uses_target_d();
        let mut acc = 0.0;
        let mut mass = 0.0;
        for j in self.kernel.support(g, x) {
            let mut w = g.weights[j] * self.kernel.value_embedded(x, xe, &g.nodes[j], &g.points[j]);
            if symmetric {
                if let Some(d) = &self.d_nodes {
                    w *= self.kernel.rescale_factor(d[i], d[j]);
                }
            }
            acc += w * values[j];
            mass += w;
        }
        match self.kernel.family.normalization {
            Normalization::RawS | Normalization::GlobalSigma => acc,
            Normalization::MarkovT => acc / mass,
            Normalization::RescaledB => {
                if symmetric {
                    acc
                } else {
                    let d = self.d_nodes.as_ref().expect("D on grid")[i];
                    acc * self.kernel.rescale_factor(d, d)
                }
            }
        }
    }

    /// Applies the operator at every node, in parallel over output nodes.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.grid.node_count());
        (0..values.len()).into_par_iter().map(|i| self.apply_at(i, values)).collect()
    }

    pub fn apply_at_nodes(&self, nodes: &[usize], values: &[f64]) -> Vec<f64> {
        nodes.par_iter().map(|&i| self.apply_at(i, values)).collect()
    }
}

/// `S(t) f` on the grid. The global normalization acts on single steps like
/// the raw operator.
pub fn apply_operator(
    fam: KernelFamily,
    mf: &ManifoldModel,
    t: f64,
    f: &TestFunction,
    grid: &QuadratureGrid,
) -> Result<Vec<f64>> {
    f.check(mf)?;
    Ok(Operator::new(fam, mf, t, grid)?.apply(&f.on_grid(mf, grid)))
}

/// `S(t_1) ⋯ S(t_r) f`: the last increment acts first.
pub fn chernoff_product_values(
    fam: KernelFamily,
    mf: &ManifoldModel,
    partition: &Partition,
    values: Vec<f64>,
    grid: &QuadratureGrid,
) -> Result<Vec<f64>> {
    let increments = partition.increments();
    for &dt in &increments {
        grid.check_adequate(dt)?;
    }
    let mut v = values;
    for &dt in increments.iter().rev() {
        v = Operator::new(fam, mf, dt, grid)?.apply(&v);
    }
    Ok(v)
}

pub fn chernoff_product(
    fam: KernelFamily,
    mf: &ManifoldModel,
    partition: &Partition,
    f: &TestFunction,
    grid: &QuadratureGrid,
) -> Result<Vec<f64>> {
    f.check(mf)?;
    chernoff_product_values(fam, mf, partition, f.on_grid(mf, grid), grid)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChernoffReport {
    pub t_grid: Vec<f64>,
    pub residual_sup: Vec<f64>,
    pub fitted_order: f64,
}

/// Largest number of output nodes probed per time on a sphere grid.
pub const SPHERE_PROBE_NODES: usize = 2048;

/// Zeroth-order coefficient of the generator expansion `S(t)f = f + t(Zf + ½Δf) + ...`.
fn zeroth_order(fam: KernelFamily, mf: &ManifoldModel, x: &PointParam) -> f64 {
    match fam.normalization {
        Normalization::RawS | Normalization::GlobalSigma => normalization_exponent(fam.kind, mf, x),
        Normalization::MarkovT | Normalization::RescaledB => 0.0,
    }
}

/// Output nodes used for the residual sup: all nodes on curves, an evenly
/// strided subset on the sphere.
fn probe_nodes(grid: &QuadratureGrid) -> Vec<usize> {
    let n = grid.node_count();
    if n <= SPHERE_PROBE_NODES || matches!(grid.structure, crate::geometry::GridStructure::Uniform { .. }) {
        return (0..n).collect();
    }
    // A stride coprime to the ring length walks through all longitudes.
    let mut stride = n / SPHERE_PROBE_NODES;
    while gcd(stride, n) != 1 {
        stride += 1;
    }
    (0..SPHERE_PROBE_NODES).map(|k| (k * stride + k / 7) % n).collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Sup over probe nodes of `|(S(t)f − f)/t − (Zf + ½Δf)|` per time, with the
/// log–log order fitted on the interior of the time grid.
pub fn chernoff_residual(
    fam: KernelFamily,
    mf: &ManifoldModel,
    f: &TestFunction,
    t_grid: &[f64],
) -> Result<ChernoffReport> {
    f.check(mf)?;
    if t_grid.len() < 3 {
        return Err(Error::InvalidParameter("residual fit needs at least three times".into()));
    }
    let mut residual_sup = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let grid = mf.build_quadrature(mf.resolution_for(t))?;
        residual_sup.push(residual_on_grid(fam, mf, f, t, &grid)?);
    }
    let lo = 1;
    let hi = t_grid.len() - 1;
    let fitted_order = loglog_slope(&t_grid[lo..hi], &residual_sup[lo..hi]);
    Ok(ChernoffReport { t_grid: t_grid.to_vec(), residual_sup, fitted_order })
}

pub fn residual_on_grid(
    fam: KernelFamily,
    mf: &ManifoldModel,
    f: &TestFunction,
    t: f64,
    grid: &QuadratureGrid,
) -> Result<f64> {
    let lap_missing = || Error::Unsupported(format!("{f:?} has no closed-form Laplacian"));
    f.laplacian(mf, &grid.nodes[0]).ok_or_else(lap_missing)?;
    let op = Operator::new(fam, mf, t, grid)?;
    let values = f.on_grid(mf, grid);
    let probes = probe_nodes(grid);
    let applied = op.apply_at_nodes(&probes, &values);
    Ok(probes
        .iter()
        .zip(&applied)
        .map(|(&i, sf)| {
            let x = &grid.nodes[i];
            let lap = f.laplacian(mf, x).expect("checked");
            let target = zeroth_order(fam, mf, x) * values[i] + 0.5 * lap;
            ((sf - values[i]) / t - target).abs()
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelKind;

    fn fam(kind: KernelKind, n: Normalization) -> KernelFamily {
        KernelFamily::new(kind, n)
    }

    #[test]
    fn markov_preserves_constants() {
        for mf in [ManifoldModel::circle(1.0), ManifoldModel::ellipse(1.0, 0.5), ManifoldModel::sphere2(1.0)] {
            let t = 0.05;
            let grid = mf.build_quadrature(mf.resolution_for(t)).unwrap();
            for kind in [KernelKind::IntrinsicGauss, KernelKind::AmbientGauss, KernelKind::IntrinsicSymmetric] {
                let op = Operator::new(fam(kind, Normalization::MarkovT), &mf, t, &grid).unwrap();
                let probes = probe_nodes(&grid);
                let out = op.apply_at_nodes(&probes, &vec![1.0; grid.node_count()]);
                assert!(out.iter().all(|v| (v - 1.0).abs() < 1e-10));
            }
        }
    }

    #[test]
    fn wrapped_heat_semigroup_has_cosine_eigenfunction() {
        let c = ManifoldModel::new(ManifoldKind::Circle { radius: 1.0 }, crate::geometry::Ambient::Itself).unwrap();
        let grid = c.build_quadrature(128).unwrap();
        let f = TestFunction::CircleMode { frequency: 1 };
        let out = apply_operator(fam(KernelKind::HeatRestricted, Normalization::RawS), &c, 0.2, &f, &grid).unwrap();
        for (x, v) in grid.nodes.iter().zip(&out) {
            assert!((v - (-0.1f64).exp() * f.eval(&c, x)).abs() < 1e-8);
        }
    }

    #[test]
    fn raw_operator_on_constants_is_the_mass() {
        let c = ManifoldModel::circle(1.0);
        let t = 0.01;
        let grid = c.build_quadrature(c.resolution_for(t)).unwrap();
        let f = fam(KernelKind::IntrinsicGauss, Normalization::RawS);
        let op = Operator::new(f, &c, t, &grid).unwrap();
        let out = op.apply(&vec![1.0; grid.node_count()]);
        let b = crate::kernels::normalization_b(f, &c, t, &grid.nodes[3], &grid).unwrap().b_value;
        assert!((out[3] - b).abs() < 1e-14);
        assert!((b - 1.0).abs() < 1e-10);
    }

    #[test]
    fn single_interval_product_is_one_application() {
        let c = ManifoldModel::circle(1.0);
        let grid = c.build_quadrature(64).unwrap();
        let f = TestFunction::CircleMode { frequency: 3 };
        let fm = fam(KernelKind::IntrinsicGauss, Normalization::MarkovT);
        let p = chernoff_product(fm, &c, &Partition::uniform(1).unwrap(), &f, &grid).unwrap();
        let a = apply_operator(fm, &c, 1.0, &f, &grid).unwrap();
        assert_eq!(p, a);
    }

    #[test]
    fn linearity_and_positivity() {
        let s = ManifoldModel::sphere2(1.0);
        let t = 0.1;
        let grid = s.build_quadrature(s.resolution_for(t)).unwrap();
        let op = Operator::new(fam(KernelKind::AmbientGauss, Normalization::RescaledB), &s, t, &grid).unwrap();
        let f = TestFunction::SphereHarmonic { l: 2, m: 1 }.on_grid(&s, &grid);
        let g = TestFunction::SphereHarmonic { l: 3, m: -2 }.on_grid(&s, &grid);
        let combo: Vec<f64> = f.iter().zip(&g).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let probes = probe_nodes(&grid);
        let (af, ag, ac) =
            (op.apply_at_nodes(&probes, &f), op.apply_at_nodes(&probes, &g), op.apply_at_nodes(&probes, &combo));
        for k in 0..probes.len() {
            assert!((ac[k] - (2.0 * af[k] - 0.5 * ag[k])).abs() < 1e-12);
        }
        let sq: Vec<f64> = f.iter().map(|v| v * v).collect();
        assert!(op.apply_at_nodes(&probes, &sq).iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn probe_nodes_cover_many_rings() {
        let s = ManifoldModel::sphere2(1.0);
        let grid = s.build_quadrature(100).unwrap();
        let probes = probe_nodes(&grid);
        assert_eq!(probes.len(), SPHERE_PROBE_NODES);
        let rings: std::collections::BTreeSet<usize> = probes.iter().map(|i| i / 200).collect();
        assert!(rings.len() > 90);
    }
}
