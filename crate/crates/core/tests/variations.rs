use shrinkstab::fields::NormalField;
use shrinkstab::functional::CenterScale;
use shrinkstab::models::ShrinkerModel;
use shrinkstab::quadrature::{build_grid, default_grid, Resolution};
use shrinkstab::variation::{
    finite_difference_variation, first_variation, random_field, random_variation, second_variation, FieldChoice,
    NormalVariation, DEFAULT_STEPS,
};

#[test]
fn sphere_random_variation_matches_finite_differences() {
    let m = ShrinkerModel::sphere(2, 1).unwrap();
    let g = build_grid(&m, Resolution::uniform(32), 10.0).unwrap();
    let var = NormalVariation::new(random_field(&g, 11), vec![0.1, 0.0, 0.0], 0.05);
    let r = finite_difference_variation(&g, &var, &CenterScale::standard(3), &DEFAULT_STEPS).unwrap();
    println!("{r:?}");
    assert!(r.discrepancy_second.unwrap() <= 1e-4);
    let off = CenterScale::new(vec![0.2, -0.1, 0.05], 0.6).unwrap();
    let r = finite_difference_variation(&g, &var, &off, &DEFAULT_STEPS).unwrap();
    println!("{r:?}");
    assert!(r.discrepancy_first <= 1e-6);
}

#[test]
fn cylinder_cutoff_variation_matches_finite_differences() {
    let m = ShrinkerModel::cylinder(1, 2, 1).unwrap();
    let g = default_grid(&m).unwrap();
    let var = NormalVariation::pure(FieldChoice::CoordinateTimesNormal.build(&g), 3);
    let r = finite_difference_variation(&g, &var, &CenterScale::standard(3), &DEFAULT_STEPS).unwrap();
    println!("{r:?}");
    assert!(r.discrepancy_second.unwrap() <= 1e-3);
}

#[test]
fn plane_bump_matches_finite_differences() {
    let m = ShrinkerModel::plane(2, 1).unwrap();
    let g = default_grid(&m).unwrap();
    let v = NormalField::scalar_times_frame(&g, 0, |_, geo| {
        let x = &geo.position;
        let b = (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp();
        (b, vec![-x[0] * b, -x[1] * b])
    });
    let var = NormalVariation::new(v, vec![0.0, 0.1, 0.2], -0.1);
    let r = finite_difference_variation(&g, &var, &CenterScale::standard(3), &DEFAULT_STEPS).unwrap();
    println!("{r:?}");
    assert!(r.discrepancy_second.unwrap() <= 1e-5);
}

#[test]
fn every_catalog_shrinker_is_critical_for_random_variations() {
    for m in [
        ShrinkerModel::sphere(1, 2).unwrap(),
        ShrinkerModel::clifford_torus().unwrap(),
        ShrinkerModel::cylinder(1, 2, 1).unwrap(),
    ] {
        let g = build_grid(&m, Resolution::new(32, 48), 10.0).unwrap();
        for seed in 0..5 {
            let var = random_variation(&g, seed);
            let f1 = first_variation(&g, &var, &CenterScale::standard(m.ambient_dim())).unwrap();
            assert!(f1.abs() <= 1e-8, "{} seed {seed}: {f1}", m.name());
            let _ = second_variation(&g, &var).unwrap();
        }
    }
}
