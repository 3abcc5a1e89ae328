use std::f64::consts::PI;

use pinning_core::geometry::{Ambient, ManifoldKind, ManifoldModel, PointParam};
use pinning_core::kernels::{
    kernel_value, normalization_b, rescaled_kernel_value, sphere_heat_kernel, wrapped_heat_kernel, KernelFamily,
    KernelKind, Normalization,
};
use proptest::prelude::*;

const KINDS: [KernelKind; 4] =
    [KernelKind::IntrinsicGauss, KernelKind::IntrinsicSymmetric, KernelKind::AmbientGauss, KernelKind::HeatRestricted];

fn raw(kind: KernelKind) -> KernelFamily {
    KernelFamily::new(kind, Normalization::RawS)
}

fn point(mf: &ManifoldModel, u: f64, v: f64) -> PointParam {
    if mf.is_curve() {
        mf.arc_point(u * mf.perimeter())
    } else {
        mf.sphere_point((1.0 - 2.0 * v).acos(), 2.0 * PI * u)
    }
}

proptest! {
    #[test]
    fn kernels_positive_and_symmetric(
        a in (0.0f64..1.0, 0.0f64..1.0),
        b in (0.0f64..1.0, 0.0f64..1.0),
        t in 0.01f64..0.5,
    ) {
        for mf in [ManifoldModel::circle(1.0), ManifoldModel::ellipse(1.0, 0.5), ManifoldModel::sphere2(1.0)] {
            let (x, y) = (point(&mf, a.0, a.1), point(&mf, b.0, b.1));
            for kind in KINDS {
                let q = kernel_value(raw(kind), &mf, t, &x, &y).unwrap();
                let q_rev = kernel_value(raw(kind), &mf, t, &y, &x).unwrap();
                prop_assert!(q > 0.0 || (q == 0.0 && mf.geodesic_distance(&x, &y) > 1.0));
                prop_assert!((q - q_rev).abs() <= 1e-12 * q.max(1e-300));
            }
            let sym = KernelFamily::new(KernelKind::IntrinsicSymmetric, Normalization::RescaledB);
            let r = rescaled_kernel_value(sym, &mf, t, &x, &y).unwrap();
            let r_rev = rescaled_kernel_value(sym, &mf, t, &y, &x).unwrap();
            prop_assert!((r - r_rev).abs() <= 1e-12 * r.max(1e-300));
        }
    }
}

#[test]
fn wrapped_heat_kernel_chapman_kolmogorov() {
    let (s, t) = (0.05, 0.08);
    let n = 512;
    let h = 2.0 * PI / n as f64;
    for y in [0.0, 0.7, 2.9] {
        let conv: f64 = (0..n)
            .map(|j| {
                let z = j as f64 * h;
                h * wrapped_heat_kernel(2.0 * PI, s, z) * wrapped_heat_kernel(2.0 * PI, t, y - z)
            })
            .sum();
        let direct = wrapped_heat_kernel(2.0 * PI, s + t, y);
        assert!((conv - direct).abs() < 1e-10 * direct, "{conv} vs {direct}");
    }
}

/// Sup over probe targets of `|∫ q_s(x,z) q_t(z,y) dz / q_{s+t}(x,y) − 1|`.
fn semigroup_defect(mf: &ManifoldModel, q: &dyn Fn(f64, &PointParam, &PointParam) -> f64, s: f64, t: f64) -> f64 {
    let g = mf.build_quadrature(64).unwrap();
    let x = mf.sphere_point(0.3, 0.2);
    [mf.sphere_point(0.3, 0.2), mf.sphere_point(0.6, 0.5), mf.sphere_point(1.0, -0.4)]
        .iter()
        .map(|y| {
            let conv: f64 = g.nodes.iter().zip(&g.weights).map(|(z, w)| w * q(s, &x, z) * q(t, z, y)).sum();
            (conv / q(s + t, &x, y) - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn sphere_heat_kernel_is_a_semigroup_and_gaussians_are_not() {
    let mf = ManifoldModel::sphere2(1.0);
    let heat = |t: f64, x: &PointParam, y: &PointParam| sphere_heat_kernel(1.0, t, mf.geodesic_distance(x, y)).unwrap();
    assert!(semigroup_defect(&mf, &heat, 0.1, 0.15) < 1e-9);
    for kind in [KernelKind::IntrinsicGauss, KernelKind::AmbientGauss] {
        let gauss = |t: f64, x: &PointParam, y: &PointParam| kernel_value(raw(kind), &mf, t, x, y).unwrap();
        let defect = semigroup_defect(&mf, &gauss, 0.1, 0.15);
        assert!(defect > 1e-3, "{kind:?}: {defect}");
    }
}

#[test]
fn restricted_heat_kernel_on_euclidean_ambient_is_the_chord_gaussian() {
    let mf = ManifoldModel::ellipse(1.0, 0.5);
    let (x, y) = (mf.arc_point(0.3), mf.arc_point(0.9));
    let a = kernel_value(raw(KernelKind::HeatRestricted), &mf, 0.05, &x, &y).unwrap();
    let b = kernel_value(raw(KernelKind::AmbientGauss), &mf, 0.05, &x, &y).unwrap();
    assert_eq!(a, b);
}

#[test]
fn circle_as_its_own_ambient_uses_the_wrapped_heat_kernel() {
    let mf = ManifoldModel::new(ManifoldKind::Circle { radius: 1.0 }, Ambient::Itself).unwrap();
    let (x, y) = (mf.arc_point(0.1), mf.arc_point(2.0));
    let q = kernel_value(raw(KernelKind::HeatRestricted), &mf, 0.2, &x, &y).unwrap();
    assert!((q - wrapped_heat_kernel(2.0 * PI, 0.2, 1.9)).abs() < 1e-14);
    // The heat kernel is Markov, so its mass is one for every t.
    let g = mf.build_quadrature(256).unwrap();
    let r = normalization_b(raw(KernelKind::HeatRestricted), &mf, 0.2, &x, &g).unwrap();
    assert!((r.b_value - 1.0).abs() < 1e-12);
}

#[test]
fn normalization_matches_exponent_at_small_t() {
    // Circle in the plane: E = |τ|²/8 = 1/8.
    let mf = ManifoldModel::circle(1.0);
    let t = 1e-3;
    let g = mf.build_quadrature(mf.resolution_for(t)).unwrap();
    let r = normalization_b(raw(KernelKind::AmbientGauss), &mf, t, &mf.origin(), &g).unwrap();
    assert!(((r.normalized - 1.0) / t - 0.125).abs() < 1e-2);
    // Unit sphere, intrinsic: E = -1/3.
    let s = ManifoldModel::sphere2(1.0);
    let g = s.build_quadrature(s.resolution_for(t)).unwrap();
    let r = normalization_b(raw(KernelKind::IntrinsicGauss), &s, t, &s.origin(), &g).unwrap();
    assert!(((r.normalized - 1.0) / t + 1.0 / 3.0).abs() < 1e-2);
}

#[test]
fn supported_and_unsupported_pairs() {
    let mf = ManifoldModel::sphere2(1.0);
    assert!(kernel_value(raw(KernelKind::HeatRestricted), &mf, 0.1, &mf.origin(), &mf.origin()).is_ok());
    let r = ManifoldModel::new(ManifoldKind::Ellipse { semi_axis_a: 1.0, semi_axis_b: 0.5 }, Ambient::Itself);
    assert!(matches!(r, Err(pinning_core::Error::Unsupported(_))));
}
