use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use shrinkstab::basis::BasisOptions;
use shrinkstab::fields::NormalField;
use shrinkstab::functional::{f_value, scaling_invariance_check, CenterScale};
use shrinkstab::models::ShrinkerModel;
use shrinkstab::nelder_mead::{minimize, NelderMeadOptions};
use shrinkstab::par;
use shrinkstab::quadrature::{build_grid, verify_weighted_identities, weighted_inner_fields, Resolution, WeightedGrid};
use shrinkstab::spectrum::{assemble, spectrum, OperatorKind, DEFAULT_BAND};
use shrinkstab::variation::{random_field, second_variation, second_variation_bilinear, NormalVariation};
use shrinkstab::verdict::inner_max;

fn grid(name: &str) -> &'static WeightedGrid {
    static SPHERE: OnceLock<WeightedGrid> = OnceLock::new();
    static SPHERE_CODIM2: OnceLock<WeightedGrid> = OnceLock::new();
    static CLIFFORD: OnceLock<WeightedGrid> = OnceLock::new();
    static CYLINDER: OnceLock<WeightedGrid> = OnceLock::new();
    let (cell, m) = match name {
        "sphere" => (&SPHERE, ShrinkerModel::sphere(2, 1)),
        "sphere_codim2" => (&SPHERE_CODIM2, ShrinkerModel::sphere(2, 2)),
        "clifford" => (&CLIFFORD, ShrinkerModel::clifford_torus()),
        "cylinder" => (&CYLINDER, ShrinkerModel::cylinder(1, 2, 1)),
        _ => unreachable!(),
    };
    cell.get_or_init(|| build_grid(&m.unwrap(), Resolution::new(24, 32), 10.0).unwrap())
}

fn rotated(g: &WeightedGrid, theta: f64) -> WeightedGrid {
    let (c, s) = (theta.cos(), theta.sin());
    let q = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    let mut out = g.clone();
    out.geometry = g.geometry.iter().map(|geo| geo.rotate_normal_frame(&q)).collect();
    out
}

fn variation(g: &WeightedGrid, seed: u64, y: &[f64], h: f64) -> NormalVariation {
    NormalVariation::new(random_field(g, seed), y.to_vec(), h)
}

fn model_name() -> impl Strategy<Value = &'static str> {
    prop_oneof![Just("sphere"), Just("sphere_codim2"), Just("clifford"), Just("cylinder")]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    /// The same ambient field expressed in a rotated normal frame has the
    /// same second variation.
    #[test]
    fn second_variation_is_frame_covariant(
        name in prop_oneof![Just("sphere_codim2"), Just("clifford")],
        theta in -3.0f64..3.0,
        seed in 0u64..1000,
        h in -0.5f64..0.5,
    ) {
        let g = grid(name);
        let r = rotated(g, theta);
        let y: Vec<f64> = (0..g.ambient()).map(|i| 0.1 * i as f64 - 0.15).collect();
        let a = second_variation(g, &variation(g, seed, &y, h)).unwrap();
        let b = second_variation(&r, &variation(&r, seed, &y, h)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn weighted_inner_product_is_symmetric_and_linear(
        name in model_name(),
        s1 in 0u64..1000,
        s2 in 0u64..1000,
        s3 in 0u64..1000,
        alpha in -3.0f64..3.0,
    ) {
        let g = grid(name);
        let (a, b, c) = (random_field(g, s1), random_field(g, s2), random_field(g, s3));
        let ab = weighted_inner_fields(g, &a, &b).unwrap();
        let ba = weighted_inner_fields(g, &b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.abs().max(1.0));
        let lhs = weighted_inner_fields(g, &a.scaled(alpha).add_scaled(1.0, &b), &c).unwrap();
        let rhs = alpha * weighted_inner_fields(g, &a, &c).unwrap() + weighted_inner_fields(g, &b, &c).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    /// `F''(a + b) = F''(a) + 2 B(a, b) + F''(b)` with `B` symmetric.
    #[test]
    fn second_variation_polarizes(
        name in model_name(),
        s1 in 0u64..1000,
        s2 in 0u64..1000,
        h1 in -0.5f64..0.5,
        h2 in -0.5f64..0.5,
    ) {
        let g = grid(name);
        let big = g.ambient();
        let y1: Vec<f64> = (0..big).map(|i| 0.2 - 0.1 * i as f64).collect();
        let y2: Vec<f64> = (0..big).map(|i| 0.05 * i as f64).collect();
        let a = variation(g, s1, &y1, h1);
        let b = variation(g, s2, &y2, h2);
        let sum = NormalVariation::new(
            a.v.add_scaled(1.0, &b.v),
            y1.iter().zip(&y2).map(|(p, q)| p + q).collect(),
            h1 + h2,
        );
        let bab = second_variation_bilinear(g, &a, &b).unwrap();
        let bba = second_variation_bilinear(g, &b, &a).unwrap();
        prop_assert!((bab - bba).abs() <= 1e-12 * bab.abs().max(1.0));
        let lhs = second_variation(g, &sum).unwrap();
        let rhs = second_variation(g, &a).unwrap() + 2.0 * bab + second_variation(g, &b).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    /// The closed-form maximum over `(h, y)` is not beaten by a derivative-free search
    /// and is reached by it.
    #[test]
    fn inner_max_matches_nelder_mead(
        name in prop_oneof![Just("sphere"), Just("clifford")],
        seed in 0u64..1000,
    ) {
        let g = grid(name);
        let v = random_field(g, seed);
        let im = inner_max(g, &v).unwrap();
        prop_assert!(im.bounded);
        let big = g.ambient();
        let objective = |z: &[f64]| -> f64 {
            -second_variation(g, &NormalVariation::new(v.clone(), z[1..].to_vec(), z[0])).unwrap()
        };
        let opts = NelderMeadOptions { max_iter: 20000, f_tol: 1e-14, x_tol: 1e-10, initial_step: 0.5 };
        let nm = minimize(objective, &vec![0.0; big + 1], &opts);
        let found = -nm.f;
        let at_closed = second_variation(g, &NormalVariation::new(v.clone(), im.y.clone(), im.h)).unwrap();
        prop_assert!((at_closed - im.value).abs() <= 1e-10 * im.value.abs().max(1.0));
        prop_assert!(found <= im.value + 1e-9 * im.value.abs().max(1.0), "search {found} above closed form {}", im.value);
        prop_assert!(found >= im.value - 1e-6 * im.value.abs().max(1.0), "search {found} short of {}", im.value);
    }

    /// `u^T S v = v^T S u` for the strong-form matrix of the drift Laplacian
    /// and of `L_nu`.
    #[test]
    fn strong_operators_are_self_adjoint(
        name in prop_oneof![Just("sphere"), Just("cylinder")],
        lnu in any::<bool>(),
        seed in 0u64..1000,
    ) {
        let g = grid(name);
        let kind = if lnu { OperatorKind::Lnu } else { OperatorKind::Drift };
        let op = assemble(g, kind, BasisOptions { line_degree: 8, ..BasisOptions::default() }).unwrap();
        let s = op.strong.as_ref().unwrap();
        let d = op.dimension;
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let u = DVector::from_fn(d, |_, _| next());
        let w = DVector::from_fn(d, |_, _| next());
        let a = u.dot(&(s * &w));
        let b = w.dot(&(s * &u));
        let scale = s.amax() * u.norm() * w.norm();
        prop_assert!((a - b).abs() <= 1e-10 * scale, "{a} vs {b}");
    }

    #[test]
    fn f_is_scale_invariant(
        alpha in 0.5f64..2.0,
        x in prop::collection::vec(-0.3f64..0.3, 3),
        t0 in 0.4f64..1.2,
    ) {
        let cs = CenterScale::new(x, t0).unwrap();
        for m in [ShrinkerModel::sphere(2, 1).unwrap(), ShrinkerModel::cylinder(1, 2, 1).unwrap()] {
            let r = scaling_invariance_check(&m, alpha, &cs, Resolution::default(), 10.0).unwrap();
            prop_assert!(r <= 1e-8, "{}: {r}", m.name());
        }
    }
}

#[test]
fn spectrum_is_frame_covariant() {
    let g = grid("clifford");
    let r = rotated(g, 0.7);
    let a = spectrum(&assemble(g, OperatorKind::FullL, BasisOptions::default()).unwrap(), 12, DEFAULT_BAND).unwrap();
    let b = spectrum(&assemble(&r, OperatorKind::FullL, BasisOptions::default()).unwrap(), 12, DEFAULT_BAND).unwrap();
    for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
        assert!((x - y).abs() < 1e-9, "{x} vs {y}");
    }
}

/// Integrals on noncompact models do not move when the truncation grows from
/// 8 to 10 standard deviations.
#[test]
fn truncation_robustness() {
    for m in [ShrinkerModel::cylinder(1, 2, 1).unwrap(), ShrinkerModel::plane(2, 1).unwrap()] {
        let g8 = build_grid(&m, Resolution::default(), 8.0).unwrap();
        let g10 = build_grid(&m, Resolution::default(), 10.0).unwrap();
        let cs = CenterScale::standard(m.ambient_dim());
        let (f8, f10) = (f_value(&g8, &cs).unwrap(), f_value(&g10, &cs).unwrap());
        assert!((f8 - f10).abs() <= 1e-9 * f10.abs(), "{}: {f8} vs {f10}", m.name());
        let (i8, i10) = (verify_weighted_identities(&g8).unwrap(), verify_weighted_identities(&g10).unwrap());
        assert!((i8.normalizer - i10.normalizer).abs() <= 1e-9 * i10.normalizer);
        for (a, b) in i8.residuals.iter().zip(&i10.residuals) {
            assert!((a.residual - b.residual).abs() <= 1e-9, "{} {}: {} vs {}", m.name(), a.name, a.residual, b.residual);
        }
    }
}

/// The parallel and sequential paths give bit-identical results.
#[test]
fn parallel_and_sequential_agree_bitwise() {
    let g = grid("clifford");
    let compute = || {
        let v = variation(g, 3, &[0.1, 0.0, -0.2, 0.05], 0.3);
        let f2 = second_variation(g, &v).unwrap();
        let f = f_value(g, &CenterScale::new(vec![0.1, 0.2, 0.0, -0.1], 0.7).unwrap()).unwrap();
        let s = spectrum(&assemble(g, OperatorKind::FullL, BasisOptions::default()).unwrap(), 8, DEFAULT_BAND).unwrap();
        (f2.to_bits(), f.to_bits(), s.eigenvalues.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
    };
    par::force_sequential(true);
    let seq = compute();
    par::force_sequential(false);
    let parallel = compute();
    assert_eq!(seq, parallel);
}

#[test]
fn rotated_fields_keep_their_norm() {
    let g = grid("sphere_codim2");
    let r = rotated(g, -1.1);
    let a: NormalField = random_field(g, 9);
    let b: NormalField = random_field(&r, 9);
    let na = weighted_inner_fields(g, &a, &a).unwrap();
    let nb = weighted_inner_fields(&r, &b, &b).unwrap();
    assert!((na - nb).abs() < 1e-10 * na);
}
