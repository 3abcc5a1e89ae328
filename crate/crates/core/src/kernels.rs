//! Kernel families `q_t(x, y)`, their masses `b(t, x)` and the heat-kernel
//! series on the circle and the round sphere.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::density::d_function;
use crate::error::{Error, Result};
use crate::geometry::{unit_angle, Ambient, ManifoldKind, ManifoldModel, PointParam, QuadratureGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `(2πt)^{-l/2} exp(-d_L²/2t)`.
    IntrinsicGauss,
    /// The intrinsic kernel with the rescaling split evenly between the two
    /// endpoints.
    IntrinsicSymmetric,
    /// `(2πt)^{-l/2} exp(-d_M²/2t)`.
    AmbientGauss,
    /// `(2πt)^{(m-l)/2} p_t^M` restricted to `L`.
    HeatRestricted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    RawS,
    MarkovT,
    RescaledB,
    GlobalSigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelFamily {
    pub kind: KernelKind,
    pub normalization: Normalization,
}

impl KernelFamily {
    pub fn new(kind: KernelKind, normalization: Normalization) -> Self {
        Self { kind, normalization }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalizationReport {
    pub t: f64,
    pub x: PointParam,
    pub b_value: f64,
    /// `b` with the Gaussian convention factor `(2πt)^{l/2}` removed.
    pub normalized: f64,
    /// `e^{tE(x)}`.
    pub predicted: f64,
    pub residual: f64,
}

/// Gaussian factors below `e^{-CUTOFF}` are skipped when summing over
/// sphere rings.
pub const RING_EXPONENT_CUTOFF: f64 = 50.0;

#[derive(Debug, Clone, Copy)]
enum Eval {
    Geodesic,
    Chord,
    SphereAmbient { radius: f64 },
    WrappedHeat { circumference: f64 },
    SphereHeat { radius: f64, intrinsic: bool, prefactor: f64 },
}

/// A kernel family frozen at one manifold and one time.
#[derive(Debug, Clone)]
pub struct Kernel<'a> {
    pub family: KernelFamily,
    pub mf: &'a ManifoldModel,
    pub t: f64,
    gauss_norm: f64,
    eval: Eval,
}

impl<'a> Kernel<'a> {
    pub fn new(family: KernelFamily, mf: &'a ManifoldModel, t: f64) -> Result<Self> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::InvalidParameter(format!("kernel time must lie in (0, 1], got {t}")));
        }
        let l = mf.intrinsic_dim() as f64;
        let gauss_norm = (2.0 * PI * t).powf(-l / 2.0);
        let ambient_gauss = match mf.ambient() {
            Ambient::Euclidean => Eval::Chord,
            Ambient::Itself => Eval::Geodesic,
            Ambient::Sphere { radius } => Eval::SphereAmbient { radius },
        };
        let eval = match family.kind {
            KernelKind::IntrinsicGauss | KernelKind::IntrinsicSymmetric => Eval::Geodesic,
            KernelKind::AmbientGauss => ambient_gauss,
            KernelKind::HeatRestricted => match (mf.kind(), mf.ambient()) {
                (_, Ambient::Euclidean) => Eval::Chord,
                (ManifoldKind::Circle { .. }, Ambient::Itself) => {
                    Eval::WrappedHeat { circumference: mf.total_volume() }
                }
                (ManifoldKind::Sphere2 { radius }, Ambient::Itself) => {
                    check_sphere_heat_time(radius, t)?;
                    Eval::SphereHeat { radius, intrinsic: true, prefactor: 1.0 }
                }
                (ManifoldKind::Circle { .. }, Ambient::Sphere { radius }) => {
                    check_sphere_heat_time(radius, t)?;
                    Eval::SphereHeat { radius, intrinsic: false, prefactor: (2.0 * PI * t).sqrt() }
                }
                (k, a) => {
                    return Err(Error::Unsupported(format!("heat_restricted on {k:?} in {a:?}")));
                }
            },
        };
        Ok(Self { family, mf, t, gauss_norm, eval })
    }

    /// Raw kernel `q_t(x, y)` from chart points and their embeddings.
    pub fn value_embedded(&self, x: &PointParam, xe: &[f64; 3], y: &PointParam, ye: &[f64; 3]) -> f64 {
        let t = self.t;
        match self.eval {
            Eval::Geodesic => {
                let d = self.mf.geodesic_distance(x, y);
                self.gauss_norm * (-d * d / (2.0 * t)).exp()
            }
            Eval::Chord => {
                let d2 = (xe[0] - ye[0]).powi(2) + (xe[1] - ye[1]).powi(2) + (xe[2] - ye[2]).powi(2);
                self.gauss_norm * (-d2 / (2.0 * t)).exp()
            }
            Eval::SphereAmbient { radius } => {
                let d = radius * embedded_angle(xe, ye, radius);
                self.gauss_norm * (-d * d / (2.0 * t)).exp()
            }
            Eval::WrappedHeat { circumference } => {
                wrapped_heat_kernel(circumference, t, y.arc() - x.arc())
            }
            Eval::SphereHeat { radius, intrinsic, prefactor } => {
                let angle = if intrinsic {
                    self.mf.geodesic_distance(x, y) / radius
                } else {
                    embedded_angle(xe, ye, radius)
                };
                prefactor * sphere_heat_series(radius, t, angle)
            }
        }
    }

    pub fn value(&self, x: &PointParam, y: &PointParam) -> f64 {
        self.value_embedded(x, &self.mf.embed(x), y, &self.mf.embed(y))
    }

    /// Whether far sphere rings can be pruned for this kernel.
    pub fn is_gaussian(&self) -> bool {
        !matches!(self.eval, Eval::WrappedHeat { .. } | Eval::SphereHeat { .. })
    }

    /// Grid node indices that can carry non-negligible mass from `x`.
    pub fn support(&self, grid: &QuadratureGrid, x: &PointParam) -> std::ops::Range<usize> {
        match *x {
            PointParam::Sphere { theta, .. } if self.is_gaussian() => {
                let r = self.mf.sphere_radius();
                // chord <= geodesic, so bound the chord.
                let chord = (2.0 * self.t * RING_EXPONENT_CUTOFF).sqrt();
                let angle = if chord >= 2.0 * r { PI } else { 2.0 * (chord / (2.0 * r)).asin() };
                grid.rings_within(theta, angle)
            }
            _ => 0..grid.node_count(),
        }
    }

    /// `Σ_j w_j q_t(x, y_j)` over the grid.
    pub fn mass(&self, grid: &QuadratureGrid, x: &PointParam) -> f64 {
        let xe = self.mf.embed(x);
        self.support(grid, x)
            .map(|j| grid.weights[j] * self.value_embedded(x, &xe, &grid.nodes[j], &grid.points[j]))
            .sum()
    }

    /// Factor turning `q` into the rescaled kernel: `e^{tD(x)}`, or
    /// `e^{t(D(x)+D(y))/2}` for the symmetric kind.
    pub fn rescale_factor(&self, d_x: f64, d_y: f64) -> f64 {
        match self.family.kind {
            KernelKind::IntrinsicSymmetric => (self.t * 0.5 * (d_x + d_y)).exp(),
            _ => (self.t * d_x).exp(),
        }
    }

    pub fn uses_target_d(&self) -> bool {
        self.family.kind == KernelKind::IntrinsicSymmetric
    }
}

fn embedded_angle(xe: &[f64; 3], ye: &[f64; 3], radius: f64) -> f64 {
    let s = 1.0 / radius;
    unit_angle([xe[0] * s, xe[1] * s, xe[2] * s], [ye[0] * s, ye[1] * s, ye[2] * s])
}

fn check_sphere_heat_time(radius: f64, t: f64) -> Result<()> {
    if t < 1e-4 * radius * radius {
        return Err(Error::InvalidParameter(format!(
            "sphere heat kernel series needs t >= 1e-4 r² = {:e}, got {t:e}",
            1e-4 * radius * radius
        )));
    }
    Ok(())
}

/// Checks that a (family, manifold) pair can be evaluated.
pub fn check_supported(family: KernelFamily, mf: &ManifoldModel) -> Result<()> {
    Kernel::new(family, mf, 0.5).map(|_| ())
}

pub fn kernel_value(fam: KernelFamily, mf: &ManifoldModel, t: f64, x: &PointParam, y: &PointParam) -> Result<f64> {
    Ok(Kernel::new(fam, mf, t)?.value(x, y))
}

pub fn rescaled_kernel_value(
    fam: KernelFamily,
    mf: &ManifoldModel,
    t: f64,
    x: &PointParam,
    y: &PointParam,
) -> Result<f64> {
    let k = Kernel::new(fam, mf, t)?;
    let dx = d_function(fam.kind, mf, x);
    let dy = if k.uses_target_d() { d_function(fam.kind, mf, y) } else { dx };
    Ok(k.value(x, y) * k.rescale_factor(dx, dy))
}

/// Normalization exponent `E` with `b / (2πt)^{l/2} = e^{tE} + O(t^{3/2})`.
pub fn normalization_exponent(kind: KernelKind, mf: &ManifoldModel, x: &PointParam) -> f64 {
    -d_function(kind, mf, x)
}

pub fn normalization_b(
    fam: KernelFamily,
    mf: &ManifoldModel,
    t: f64,
    x: &PointParam,
    grid: &QuadratureGrid,
) -> Result<NormalizationReport> {
    grid.check_adequate(t)?;
    let k = Kernel::new(fam, mf, t)?;
    let b_value = k.mass(grid, x);
    // The kernels carry the (2πt)^{-l/2} factor already.
    let normalized = b_value;
    let predicted = (t * normalization_exponent(fam.kind, mf, x)).exp();
    Ok(NormalizationReport { t, x: *x, b_value, normalized, predicted, residual: normalized - predicted })
}

/// `Σ_j (2πt)^{-1/2} exp(-(arc + j c)²/2t)`.
pub fn wrapped_heat_kernel(circumference: f64, t: f64, arc: f64) -> f64 {
    let c = circumference;
    let a = arc - c * (arc / c).round();
    let norm = 1.0 / (2.0 * PI * t).sqrt();
    let g = |z: f64| (-z * z / (2.0 * t)).exp();
    let mut sum = g(a);
    let mut j = 1.0;
    loop {
        let (p, m) = (g(a + j * c), g(a - j * c));
        sum += p + m;
        // Images only get farther once |a| <= c/2; `<=` also ends the loop
        // when everything has underflowed.
        if p + m <= 1e-17 * sum {
            break;
        }
        j += 1.0;
    }
    norm * sum
}

/// Heat kernel of `exp(tΔ/2)` on the sphere of radius `r` as a function of the
/// geodesic angle.
pub fn sphere_heat_kernel(r: f64, t: f64, geodesic_angle: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("t must be positive, got {t}")));
    }
    check_sphere_heat_time(r, t)?;
    Ok(sphere_heat_series(r, t, geodesic_angle))
}

fn sphere_heat_series(r: f64, t: f64, angle: f64) -> f64 {
    let tau = t / (2.0 * r * r);
    let c = angle.cos();
    let (mut p_prev, mut p) = (1.0, c);
    let mut sum = 1.0;
    let mut bound_sum = 1.0;
    let peak = 1.0 / (2.0 * tau).sqrt();
    let mut l = 1.0f64;
    loop {
        let bound = (2.0 * l + 1.0) * (-l * (l + 1.0) * tau).exp();
        sum += bound * p;
        bound_sum += bound;
        if l > peak && bound < 1e-14 * bound_sum {
            break;
        }
        let next = ((2.0 * l + 1.0) * c * p - l * p_prev) / (l + 1.0);
        p_prev = p;
        p = next;
        l += 1.0;
    }
    let v = sum / (4.0 * PI * r * r);
    debug_assert!(v > -1e-12 * bound_sum, "heat series ringing {v}");
    v.max(0.0)
}

/// `P(angle <= θ)` for the heat kernel on the sphere started at a pole.
pub fn sphere_heat_angle_cdf(r: f64, t: f64, theta: f64) -> f64 {
    let tau = t / (2.0 * r * r);
    let c = theta.cos();
    // P_{l-1}, P_l, P_{l+1}
    let (mut pm, mut p0) = (1.0, c);
    let mut pp = 0.5 * (3.0 * c * c - 1.0);
    let mut sum = 0.5 * (1.0 - c);
    let peak = 1.0 / (2.0 * tau).sqrt();
    let mut l = 1.0f64;
    loop {
        let e = (-l * (l + 1.0) * tau).exp();
        sum += 0.5 * e * (pm - pp);
        if l > peak && e < 1e-16 {
            break;
        }
        let next = ((2.0 * (l + 1.0) + 1.0) * c * pp - (l + 1.0) * p0) / (l + 2.0);
        pm = p0;
        p0 = pp;
        pp = next;
        l += 1.0;
    }
    sum.clamp(0.0, 1.0)
}
