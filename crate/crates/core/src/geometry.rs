//! Concrete closed manifolds: circle, ellipse and round 2-sphere.
//!
//! Curves are parametrized by arc length `s ∈ [0, perimeter)`, the sphere by
//! colatitude and longitude. Every manifold carries an ambient model that
//! fixes `d_M` and the curvature data entering the density exponents.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gauss_legendre, gauss_legendre_on, wrap, wrap_signed, MonotoneCubic};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManifoldKind {
    Circle { radius: f64 },
    Ellipse { semi_axis_a: f64, semi_axis_b: f64 },
    Sphere2 { radius: f64 },
}

/// The manifold `M` that `L` is embedded in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Ambient {
    /// Flat `ℝ²` for curves, `ℝ³` for the sphere.
    #[default]
    Euclidean,
    /// `M = L` through the identity map.
    Itself,
    /// Round sphere of the given radius; a circle sits in it as a small circle.
    Sphere { radius: f64 },
}

/// Point in chart coordinates. Serialized as a bare arc length or as a
/// `{ theta, phi }` table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointParam {
    Arc(f64),
    Sphere { theta: f64, phi: f64 },
}

impl PointParam {
    pub fn coords(&self) -> Vec<f64> {
        match *self {
            PointParam::Arc(s) => vec![s],
            PointParam::Sphere { theta, phi } => vec![theta, phi],
        }
    }

    pub fn arc(&self) -> f64 {
        match *self {
            PointParam::Arc(s) => s,
            PointParam::Sphere { .. } => panic!("sphere point used as an arc-length point"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureData {
    pub scal_l: f64,
    pub tau_sq: f64,
    pub rbar: f64,
    pub ricbar: f64,
    pub scal_m: f64,
}

/// Arc-length tables for an ellipse `(a cos u, b sin u)`.
#[derive(Debug)]
struct EllipseTable {
    a: f64,
    b: f64,
    perimeter: f64,
    /// Arc length at the knots `u_i = 2π i / N`.
    knots_s: Vec<f64>,
    inverse: MonotoneCubic,
    gl_nodes: Vec<f64>,
    gl_weights: Vec<f64>,
}

const ELLIPSE_TABLE_SIZE: usize = 4096;
const ELLIPSE_GL_ORDER: usize = 16;

impl EllipseTable {
    fn new(a: f64, b: f64) -> Self {
        let (gl_nodes, gl_weights) = gauss_legendre(ELLIPSE_GL_ORDER);
        let mut table = EllipseTable {
            a,
            b,
            perimeter: 0.0,
            knots_s: Vec::with_capacity(ELLIPSE_TABLE_SIZE + 1),
            inverse: MonotoneCubic::new(vec![0.0, 1.0], vec![0.0, 1.0]),
            gl_nodes,
            gl_weights,
        };
        let h = 2.0 * PI / ELLIPSE_TABLE_SIZE as f64;
        let mut acc = 0.0;
        table.knots_s.push(0.0);
        for i in 0..ELLIPSE_TABLE_SIZE {
            acc += table.speed_integral(i as f64 * h, (i + 1) as f64 * h);
            table.knots_s.push(acc);
        }
        table.perimeter = acc;
        let us: Vec<f64> = (0..=ELLIPSE_TABLE_SIZE).map(|i| i as f64 * h).collect();
        table.inverse = MonotoneCubic::new(table.knots_s.clone(), us);
        table
    }

    fn speed(&self, u: f64) -> f64 {
        let (su, cu) = u.sin_cos();
        (self.a * self.a * su * su + self.b * self.b * cu * cu).sqrt()
    }

    fn speed_integral(&self, lo: f64, hi: f64) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        self.gl_nodes
            .iter()
            .zip(&self.gl_weights)
            .map(|(x, w)| w * self.speed(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// `S(u)` for `u ∈ [0, 2π]`.
    fn arc_of_angle(&self, u: f64) -> f64 {
        let h = 2.0 * PI / ELLIPSE_TABLE_SIZE as f64;
        let i = ((u / h).floor() as usize).min(ELLIPSE_TABLE_SIZE - 1);
        self.knots_s[i] + self.speed_integral(i as f64 * h, u)
    }

    /// Angle `u` with `S(u) = s`, for `s ∈ [0, perimeter)`.
    fn angle_of_arc(&self, s: f64) -> f64 {
        let mut u = self.inverse.eval(s);
        for _ in 0..3 {
            let step = (self.arc_of_angle(u) - s) / self.speed(u);
            u -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        u
    }

    fn curvature(&self, u: f64) -> f64 {
        let (su, cu) = u.sin_cos();
        let q = self.a * self.a * su * su + self.b * self.b * cu * cu;
        self.a * self.b / (q * q.sqrt())
    }
}

/// A closed manifold `L` with its embedding into an ambient `M`.
#[derive(Debug, Clone)]
pub struct ManifoldModel {
    kind: ManifoldKind,
    ambient: Ambient,
    total_volume: f64,
    ellipse: Option<Arc<EllipseTable>>,
}

impl ManifoldModel {
    pub fn circle(radius: f64) -> Self {
        Self::new(ManifoldKind::Circle { radius }, Ambient::Euclidean).expect("valid circle")
    }

    pub fn ellipse(a: f64, b: f64) -> Self {
        Self::new(ManifoldKind::Ellipse { semi_axis_a: a, semi_axis_b: b }, Ambient::Euclidean)
            .expect("valid ellipse")
    }

    pub fn sphere2(radius: f64) -> Self {
        Self::new(ManifoldKind::Sphere2 { radius }, Ambient::Euclidean).expect("valid sphere")
    }

    pub fn new(kind: ManifoldKind, ambient: Ambient) -> Result<Self> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
            }
        };
        let (total_volume, ellipse) = match kind {
            ManifoldKind::Circle { radius } => {
                positive("radius", radius)?;
                (2.0 * PI * radius, None)
            }
            ManifoldKind::Ellipse { semi_axis_a, semi_axis_b } => {
                positive("semi_axis_a", semi_axis_a)?;
                positive("semi_axis_b", semi_axis_b)?;
                let table = EllipseTable::new(semi_axis_a, semi_axis_b);
                (table.perimeter, Some(Arc::new(table)))
            }
            ManifoldKind::Sphere2 { radius } => {
                positive("radius", radius)?;
                (4.0 * PI * radius * radius, None)
            }
        };
        match (kind, ambient) {
            (_, Ambient::Euclidean) | (ManifoldKind::Circle { .. }, Ambient::Itself) => {}
            (ManifoldKind::Circle { radius }, Ambient::Sphere { radius: big }) => {
                if !cfg!(feature = "curved-ambient") {
                    return Err(Error::Unsupported(
                        "circle inside a sphere needs the curved-ambient feature".into(),
                    ));
                }
                positive("ambient radius", big)?;
                if radius > big {
                    return Err(Error::InvalidParameter(format!(
                        "circle radius {radius} exceeds ambient sphere radius {big}"
                    )));
                }
            }
            (ManifoldKind::Sphere2 { .. }, Ambient::Itself) => {
                if !cfg!(feature = "curved-ambient") {
                    return Err(Error::Unsupported(
                        "sphere as its own ambient needs the curved-ambient feature".into(),
                    ));
                }
            }
            (k, a) => return Err(Error::Unsupported(format!("{k:?} in ambient {a:?}"))),
        }
        Ok(Self { kind, ambient, total_volume, ellipse })
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn ambient(&self) -> Ambient {
        self.ambient
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ManifoldKind::Circle { .. } => "circle",
            ManifoldKind::Ellipse { .. } => "ellipse",
            ManifoldKind::Sphere2 { .. } => "sphere2",
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Sphere2 { .. } => 2,
            _ => 1,
        }
    }

    /// Dimension of the ambient `M`.
    pub fn ambient_dim(&self) -> usize {
        match self.ambient {
            Ambient::Euclidean => self.intrinsic_dim() + 1,
            Ambient::Itself => self.intrinsic_dim(),
            Ambient::Sphere { .. } => 2,
        }
    }

    pub fn total_volume(&self) -> f64 {
        self.total_volume
    }

    pub fn is_curve(&self) -> bool {
        self.intrinsic_dim() == 1
    }

    /// Perimeter for curves.
    pub fn perimeter(&self) -> f64 {
        assert!(self.is_curve());
        self.total_volume
    }

    /// Whether the curvature data is the same at every point.
    pub fn is_homogeneous(&self) -> bool {
        !matches!(self.kind, ManifoldKind::Ellipse { .. })
    }

    pub fn sphere_radius(&self) -> f64 {
        match self.kind {
            ManifoldKind::Sphere2 { radius } => radius,
            _ => panic!("not a sphere"),
        }
    }

    /// Arc-length point, reduced modulo the perimeter.
    pub fn arc_point(&self, s: f64) -> PointParam {
        PointParam::Arc(wrap(s, self.perimeter()))
    }

    /// Sphere point with `θ` folded into `[0, π]` and `φ` into `[0, 2π)`.
    pub fn sphere_point(&self, theta: f64, phi: f64) -> PointParam {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        point_from_unit([st * cp, st * sp, ct])
    }

    /// Canonical starting point: `s = 0` or the north pole.
    pub fn origin(&self) -> PointParam {
        if self.is_curve() {
            PointParam::Arc(0.0)
        } else {
            PointParam::Sphere { theta: 0.0, phi: 0.0 }
        }
    }

    fn ellipse_table(&self) -> &EllipseTable {
        self.ellipse.as_deref().expect("ellipse table")
    }

    /// Ellipse angle `u` with `(a cos u, b sin u)` at arc length `s`.
    pub fn ellipse_angle(&self, s: f64) -> f64 {
        self.ellipse_table().angle_of_arc(wrap(s, self.total_volume))
    }

    /// Embedded coordinates, padded with zeros to length 3. A circle inside
    /// a sphere of radius `R` sits at height `sqrt(R² − r²)`.
    pub fn embed(&self, x: &PointParam) -> [f64; 3] {
        match (self.kind, *x) {
            (ManifoldKind::Circle { radius }, PointParam::Arc(s)) => {
                let (sn, cs) = (s / radius).sin_cos();
                let h = match self.ambient {
                    Ambient::Sphere { radius: big } => (big * big - radius * radius).max(0.0).sqrt(),
                    _ => 0.0,
                };
                [radius * cs, radius * sn, h]
            }
            (ManifoldKind::Ellipse { semi_axis_a, semi_axis_b }, PointParam::Arc(s)) => {
                let (su, cu) = self.ellipse_angle(s).sin_cos();
                [semi_axis_a * cu, semi_axis_b * su, 0.0]
            }
            (ManifoldKind::Sphere2 { radius }, PointParam::Sphere { theta, phi }) => {
                let u = unit_vector(theta, phi);
                [radius * u[0], radius * u[1], radius * u[2]]
            }
            _ => panic!("point type does not match manifold"),
        }
    }

    /// Number of meaningful embedded coordinates.
    pub fn embed_dim(&self) -> usize {
        match (self.kind, self.ambient) {
            (ManifoldKind::Circle { .. }, Ambient::Sphere { .. }) => 3,
            (ManifoldKind::Sphere2 { .. }, _) => 3,
            _ => 2,
        }
    }

    pub fn geodesic_distance(&self, x: &PointParam, y: &PointParam) -> f64 {
        match (*x, *y) {
            (PointParam::Arc(a), PointParam::Arc(b)) => {
                let p = self.total_volume;
                let d = (a - b).abs() % p;
                d.min(p - d)
            }
            (PointParam::Sphere { theta: t1, phi: p1 }, PointParam::Sphere { theta: t2, phi: p2 }) => {
                self.sphere_radius() * unit_angle(unit_vector(t1, p1), unit_vector(t2, p2))
            }
            _ => panic!("point types differ"),
        }
    }

    /// Euclidean distance of the embedded points.
    pub fn chord_distance(&self, x: &PointParam, y: &PointParam) -> f64 {
        let (u, v) = (self.embed(x), self.embed(y));
        ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2) + (u[2] - v[2]).powi(2)).sqrt()
    }

    /// `d_M` between the images of two points.
    pub fn ambient_distance(&self, x: &PointParam, y: &PointParam) -> f64 {
        match self.ambient {
            Ambient::Euclidean => self.chord_distance(x, y),
            Ambient::Itself => self.geodesic_distance(x, y),
            Ambient::Sphere { radius } => {
                let (u, v) = (self.embed(x), self.embed(y));
                radius * unit_angle(scale3(u, 1.0 / radius), scale3(v, 1.0 / radius))
            }
        }
    }

    pub fn curvature_at(&self, x: &PointParam) -> CurvatureData {
        let zero = CurvatureData { scal_l: 0.0, tau_sq: 0.0, rbar: 0.0, ricbar: 0.0, scal_m: 0.0 };
        match (self.kind, self.ambient) {
            (ManifoldKind::Circle { radius }, Ambient::Euclidean) => {
                CurvatureData { tau_sq: 1.0 / (radius * radius), ..zero }
            }
            (ManifoldKind::Circle { .. }, Ambient::Itself) => zero,
            (ManifoldKind::Circle { radius }, Ambient::Sphere { radius: big }) => {
                let (r2, b2) = (radius * radius, big * big);
                CurvatureData {
                    tau_sq: (b2 - r2) / (b2 * r2),
                    ricbar: 1.0 / b2,
                    scal_m: 2.0 / b2,
                    ..zero
                }
            }
            (ManifoldKind::Ellipse { .. }, _) => {
                let k = self.ellipse_table().curvature(self.ellipse_angle(x.arc()));
                CurvatureData { tau_sq: k * k, ..zero }
            }
            (ManifoldKind::Sphere2 { radius }, Ambient::Itself) => {
                let c = 2.0 / (radius * radius);
                CurvatureData { scal_l: c, tau_sq: 0.0, rbar: c, ricbar: c, scal_m: c }
            }
            (ManifoldKind::Sphere2 { radius }, _) => {
                let r2 = radius * radius;
                CurvatureData { scal_l: 2.0 / r2, tau_sq: 4.0 / r2, ..zero }
            }
        }
    }

    /// Orthonormal tangent frame at `x` as ambient vectors: `[e_s]` for
    /// curves and `[e_θ, e_φ]` for the sphere.
    pub fn tangent_frame(&self, x: &PointParam) -> Vec<[f64; 3]> {
        match *x {
            PointParam::Arc(s) => {
                let h = 1e-6 * self.total_volume;
                let (p, m) = (self.embed(&self.arc_point(s + h)), self.embed(&self.arc_point(s - h)));
                let d = sub3(p, m);
                vec![scale3(d, 1.0 / norm3(d))]
            }
            PointParam::Sphere { theta, phi } => {
                let (st, ct) = theta.sin_cos();
                let (sp, cp) = phi.sin_cos();
                vec![[ct * cp, ct * sp, -st], [-sp, cp, 0.0]]
            }
        }
    }

    /// Endpoint of the geodesic of length `s` leaving `x` in `direction`,
    /// a unit vector in chart-frame coordinates (`[±1]` or `(e_θ, e_φ)`
    /// components).
    pub fn exp_map(&self, x: &PointParam, direction: &[f64], s: f64) -> PointParam {
        match *x {
            PointParam::Arc(a) => self.arc_point(a + direction[0].signum() * s),
            PointParam::Sphere { theta, phi } => {
                let r = self.sphere_radius();
                let u = unit_vector(theta, phi);
                let f = self.tangent_frame(x);
                let norm = direction[0].hypot(direction[1]);
                let v = add3(scale3(f[0], direction[0] / norm), scale3(f[1], direction[1] / norm));
                let (sa, ca) = (s / r).sin_cos();
                point_from_unit(add3(scale3(u, ca), scale3(v, sa)))
            }
        }
    }

    /// Point at fraction `lambda` along the minimizing geodesic from `x` to
    /// `y`. Ties between two minimizers go to decreasing `s` on curves and to
    /// the direction `-e_θ` at `x` on the sphere.
    pub fn geodesic_point(&self, x: &PointParam, y: &PointParam, lambda: f64) -> PointParam {
        match (*x, *y) {
            (PointParam::Arc(a), PointParam::Arc(b)) => {
                let d = wrap_signed(b - a, self.total_volume);
                self.arc_point(a + lambda * d)
            }
            (PointParam::Sphere { theta: t1, phi: p1 }, PointParam::Sphere { theta: t2, phi: p2 }) => {
                let (u, v) = (unit_vector(t1, p1), unit_vector(t2, p2));
                let angle = unit_angle(u, v);
                let w = sub3(v, scale3(u, dot3(u, v)));
                let wn = norm3(w);
                let dir = if wn < 1e-14 {
                    if angle < 1.0 {
                        return *x;
                    }
                    scale3(self.tangent_frame(x)[0], -1.0)
                } else {
                    scale3(w, 1.0 / wn)
                };
                let (sa, ca) = (lambda * angle).sin_cos();
                point_from_unit(add3(scale3(u, ca), scale3(dir, sa)))
            }
            _ => panic!("point types differ"),
        }
    }

    /// `(d_M² − d_L²)/d_L⁴` at the geodesic endpoint a distance `s` from `x`.
    pub fn chord_arc_defect(&self, x: &PointParam, direction: &[f64], s: f64) -> Result<f64> {
        if direction.len() != self.intrinsic_dim() {
            return Err(Error::DimensionMismatch { expected: self.intrinsic_dim(), got: direction.len() });
        }
        let norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("direction must be a unit vector, norm {norm}")));
        }
        let limit = match self.kind {
            ManifoldKind::Sphere2 { radius } => PI * radius / 2.0,
            _ => self.total_volume / 4.0,
        };
        if !(s > 0.0 && s < limit) {
            return Err(Error::OutsideInjectivity { s, limit });
        }
        let y = self.exp_map(x, direction, s);
        let dm = self.ambient_distance(x, &y);
        Ok((dm * dm - s * s) / s.powi(4))
    }

    pub fn build_quadrature(&self, resolution: usize) -> Result<QuadratureGrid> {
        if resolution < 16 {
            return Err(Error::InvalidParameter(format!("resolution must be >= 16, got {resolution}")));
        }
        Ok(match self.kind {
            ManifoldKind::Sphere2 { radius } => QuadratureGrid::sphere(radius, resolution),
            _ => QuadratureGrid::curve(self, resolution),
        })
    }

    /// Smallest resolution whose grid spacing is at most `sqrt(t)/4`.
    pub fn resolution_for(&self, t: f64) -> usize {
        let h = t.sqrt() / 4.0;
        match self.kind {
            ManifoldKind::Sphere2 { radius } => {
                let mut n = ((PI * radius / h).ceil() as usize).max(16);
                while QuadratureGrid::sphere_spacing(radius, n) > h {
                    n += 1 + n / 64;
                }
                n
            }
            _ => ((self.total_volume / h).ceil() as usize).max(16),
        }
    }
}

/// Layout of grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub enum GridStructure {
    /// `n` equally spaced arc-length nodes starting at `s = 0`.
    Uniform { n: usize },
    /// Gauss–Legendre rings in `cos θ`, each with `n_phi` equally spaced
    /// longitudes starting at `φ = 0`. Node index is `ring * n_phi + j`.
    Rings { thetas: Vec<f64>, ring_weights: Vec<f64>, n_phi: usize },
}

#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub nodes: Vec<PointParam>,
    pub weights: Vec<f64>,
    /// Embedded node coordinates.
    pub points: Vec<[f64; 3]>,
    pub spacing: f64,
    pub structure: GridStructure,
}

impl QuadratureGrid {
    fn curve(mf: &ManifoldModel, n: usize) -> Self {
        let p = mf.total_volume();
        let h = p / n as f64;
        let nodes: Vec<PointParam> = (0..n).map(|i| PointParam::Arc(i as f64 * h)).collect();
        let points = nodes.iter().map(|x| mf.embed(x)).collect();
        QuadratureGrid {
            nodes,
            weights: vec![h; n],
            points,
            spacing: h,
            structure: GridStructure::Uniform { n },
        }
    }

    fn sphere_spacing(radius: f64, n: usize) -> f64 {
        let (x, _) = gauss_legendre(n);
        // Nodes ascend in cos θ, so θ descends.
        let mut thetas: Vec<f64> = x.iter().map(|c| c.acos()).collect();
        thetas.reverse();
        let mut gap = thetas[0].max(PI - thetas[n - 1]);
        for w in thetas.windows(2) {
            gap = gap.max(w[1] - w[0]);
        }
        radius * gap.max(PI / n as f64)
    }

    fn sphere(radius: f64, n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        let n_phi = 2 * n;
        let dphi = 2.0 * PI / n_phi as f64;
        // Ascending θ.
        let thetas: Vec<f64> = x.iter().rev().map(|c| c.acos()).collect();
        let ring_weights: Vec<f64> = w.iter().rev().map(|wi| wi * radius * radius * dphi).collect();
        let mut nodes = Vec::with_capacity(n * n_phi);
        let mut weights = Vec::with_capacity(n * n_phi);
        let mut points = Vec::with_capacity(n * n_phi);
        for (i, &theta) in thetas.iter().enumerate() {
            for j in 0..n_phi {
                let phi = j as f64 * dphi;
                nodes.push(PointParam::Sphere { theta, phi });
                weights.push(ring_weights[i]);
                points.push(scale3(unit_vector(theta, phi), radius));
            }
        }
        QuadratureGrid {
            nodes,
            weights,
            points,
            spacing: Self::sphere_spacing(radius, n),
            structure: GridStructure::Rings { thetas, ring_weights, n_phi },
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Errors unless the spacing resolves the length scale `sqrt(t)`.
    pub fn check_adequate(&self, t: f64) -> Result<()> {
        let required = t.sqrt() / 4.0;
        if self.spacing > required * (1.0 + 1e-12) {
            return Err(Error::GridTooCoarse { spacing: self.spacing, t, required });
        }
        Ok(())
    }

    /// Node index ranges of the rings whose colatitude lies within
    /// `max_angle` of `theta_x`; every node outside them is at least that far
    /// from any point of colatitude `theta_x`. Uniform grids return all nodes.
    pub fn rings_within(&self, theta_x: f64, max_angle: f64) -> std::ops::Range<usize> {
        match &self.structure {
            GridStructure::Rings { thetas, n_phi, .. } => {
                let lo = thetas.partition_point(|&th| th < theta_x - max_angle);
                let hi = thetas.partition_point(|&th| th <= theta_x + max_angle);
                lo * n_phi..hi.max(lo) * n_phi
            }
            GridStructure::Uniform { n } => 0..*n,
        }
    }
}

pub(crate) fn unit_vector(theta: f64, phi: f64) -> [f64; 3] {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * cp, st * sp, ct]
}

/// Chart point of a (not necessarily normalized) vector.
pub(crate) fn point_from_unit(v: [f64; 3]) -> PointParam {
    let rho = v[0].hypot(v[1]);
    let theta = rho.atan2(v[2]);
    let phi = if rho == 0.0 { 0.0 } else { wrap(v[1].atan2(v[0]), 2.0 * PI) };
    PointParam::Sphere { theta, phi }
}

/// Angle between unit vectors, accurate at both coincidence and antipodes.
pub(crate) fn unit_angle(u: [f64; 3], v: [f64; 3]) -> f64 {
    norm3(cross3(u, v)).atan2(dot3(u, v))
}

pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

pub(crate) fn add3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn scale3(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Perimeter by composite Gauss–Legendre on `[0, 2π]` with `pieces` panels.
pub fn ellipse_perimeter_quadrature(a: f64, b: f64, pieces: usize, order: usize) -> f64 {
    let h = 2.0 * PI / pieces as f64;
    (0..pieces)
        .map(|i| {
            let (x, w) = gauss_legendre_on(order, i as f64 * h, (i + 1) as f64 * h);
            x.iter()
                .zip(&w)
                .map(|(u, wi)| wi * (a * a * u.sin().powi(2) + b * b * u.cos().powi(2)).sqrt())
                .sum::<f64>()
        })
        .sum()
}
