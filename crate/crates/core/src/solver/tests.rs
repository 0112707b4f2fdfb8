use alloc::vec;

use super::*;
use crate::fiber::{exp_map, path_energy, path_length};
use crate::oracles::{column_cone_distance, random_full_rank, random_tangent, InstanceGenerator};

fn col(v: &[f64]) -> FullRankMatrix {
    FullRankMatrix::new(DMatrix::from_column_slice(v.len(), 1, v)).unwrap()
}

fn radial() -> f64 {
    2.0 * (2f64.sqrt() - 1.0)
}

#[test]
fn log_map_of_identical_points_is_zero() {
    let a = col(&[1.0, 0.0]);
    let z = log_map(&a, &a, &SolverOptions::default()).unwrap();
    assert!(z.entries().iter().all(|v| *v == 0.0));
}

#[test]
fn log_map_inverts_worked_geodesic() {
    let a = col(&[1.0, 0.0]);
    let b = col(&[0.75, 1.0]);
    let z = log_map(&a, &b, &SolverOptions::default()).unwrap();
    let expected = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
    assert!(linalg::fro(&(z.entries() - expected)) < 1e-8, "{z:?}");
}

#[test]
fn log_map_round_trips_small_tangents() {
    let opts = SolverOptions::default();
    let mut gen = InstanceGenerator::new(21, 4, 2, 0.5, 2.0).unwrap();
    for _ in 0..20 {
        let a = random_full_rank(&mut gen);
        let norm = gen.uniform(0.05, 0.5);
        let zeta = random_tangent(&mut gen, &a, norm);
        let b = exp_map(&a, &zeta, 1.0).unwrap();
        let got = log_map(&a, &b, &opts).unwrap();
        assert!(linalg::fro(&(got.entries() - zeta.entries())) <= 1e-6);
        assert!(linalg::fro(&(exp_map(&a, &got, 1.0).unwrap().entries() - b.entries())) <= opts.endpoint_tol);
    }
}

#[test]
fn straight_geodesic_is_stationary_for_pl() {
    let a = col(&[1.0, 0.0]);
    let b = col(&[2.0, 0.0]);
    let path = PlPath::straight(&a, &b, 8).unwrap();
    let out = pl_shorten_with(&path, 5, DEFAULT_RANK_TOL);
    for w in out.history.windows(2) {
        assert!(w[0] - w[1] <= 1e-10);
    }
}

#[test]
fn pl_shortening_recovers_radial_length() {
    let a = col(&[1.0, 0.0]);
    let b = col(&[2.0, 0.0]);
    let mut gen = InstanceGenerator::new(5, 2, 1, 1.0, 1.0).unwrap();
    let mut controls = vec![a.entries().clone()];
    for i in 1..16 {
        let u = i as f64 / 16.0;
        let x = a.entries() * (1.0 - u) + b.entries() * u + gen.gaussian(2, 1) * 0.3;
        controls.push(x);
    }
    controls.push(b.entries().clone());
    let path = PlPath::new(controls).unwrap();
    let before = path_energy(&path).unwrap();
    let out = pl_shorten_with(&path, 500, DEFAULT_RANK_TOL);
    assert!(path_energy(&out.path).unwrap() <= before);
    for w in out.history.windows(2) {
        assert!(w[1] <= w[0]);
    }
    assert_eq!(out.path.start(), a.entries());
    assert_eq!(out.path.end(), b.entries());
    let len = path_length(&out.path).unwrap();
    assert!((len - radial()).abs() <= 0.01 * radial(), "{len}");
}

#[test]
fn distance_examples() {
    let opts = SolverOptions::default();
    let a = col(&[1.0, 0.0]);
    assert_eq!(distance(&a, &a, &opts).value, 0.0);

    let r = distance(&a, &col(&[0.75, 1.0]), &opts);
    assert!((r.value - 1.0).abs() < 0.01);
    assert_eq!(r.method, Method::Shooting);

    let r = distance(&a, &col(&[2.0, 0.0]), &opts);
    assert!((r.value - radial()).abs() < 0.01 * radial());
    assert!(r.value >= r.lower - 1e-8);
}

#[test]
fn shooting_certificate_reaches_the_other_endpoint() {
    let opts = SolverOptions::default();
    let a = col(&[0.3, 1.0, -0.4]);
    let b = col(&[1.2, 0.1, 0.5]);
    for (x, y) in [(&a, &b), (&b, &a)] {
        let r = distance(x, y, &opts);
        let Some(Certificate::Geodesic(z)) = r.certificate else { panic!("expected a geodesic") };
        let other = if z.base() == x { y } else { x };
        let end = exp_map(z.base(), &z, 1.0).unwrap();
        assert!(linalg::fro(&(end.entries() - other.entries())) <= opts.endpoint_tol);
    }
}

#[test]
fn distance_is_exactly_symmetric() {
    let opts = SolverOptions::default();
    let mut gen = InstanceGenerator::new(8, 3, 2, 0.5, 2.0).unwrap();
    for _ in 0..5 {
        let a = random_full_rank(&mut gen);
        let b = random_full_rank(&mut gen);
        assert_eq!(distance(&a, &b, &opts).value, distance(&b, &a, &opts).value);
    }
}

#[test]
fn m1_distances_match_cone_formula() {
    let opts = SolverOptions::default();
    let mut gen = InstanceGenerator::new(99, 3, 1, 0.5, 2.0).unwrap();
    for _ in 0..10 {
        let a = random_full_rank(&mut gen);
        let b = random_full_rank(&mut gen);
        let exact = column_cone_distance(a.entries(), b.entries());
        let got = distance(&a, &b, &opts).value;
        assert!((got - exact).abs() <= 1e-6 * exact.max(1.0), "{got} vs {exact}");
    }
}

#[test]
fn dist_to_singular_examples() {
    assert!((dist_to_singular(&col(&[1.0, 0.0])) - 2.0).abs() < 1e-15);
    assert!((dist_to_singular(&col(&[2.0, 0.0])) - 2.0 * 2f64.sqrt()).abs() < 1e-14);
    let mut gen = InstanceGenerator::new(1, 4, 2, 0.5, 2.0).unwrap();
    let a = random_full_rank(&mut gen);
    let o = gen.rotation(4);
    let rotated = a.left_mul(&o).unwrap();
    assert!((dist_to_singular(&a) - dist_to_singular(&rotated)).abs() < 1e-12);
    let lb = lower_bound(a.entries(), &DMatrix::zeros(4, 2)).unwrap();
    assert!((dist_to_singular(&a) - lb).abs() < 1e-10);
}

#[test]
fn completion_distance_examples() {
    let opts = SolverOptions::default();
    let zero = CompletionPoint::singular(2, 1);
    let other_singular = CompletionPoint::new(DMatrix::from_column_slice(2, 1, &[0.0, 0.0])).unwrap();
    assert_eq!(completion_distance(&zero, &other_singular, &opts), 0.0);

    let a = CompletionPoint::from(col(&[1.0, 0.0]));
    assert!((completion_distance(&a, &zero, &opts) - 2.0).abs() < 1e-15);
    assert!((completion_distance(&zero, &a, &opts) - 2.0).abs() < 1e-15);

    let b = CompletionPoint::from(col(&[0.75, 1.0]));
    let direct = distance(a.full_rank().unwrap(), b.full_rank().unwrap(), &opts).value;
    assert_eq!(completion_distance(&a, &b, &opts), direct);
}

#[test]
fn rank_deficient_input_collapses_to_zero() {
    let p = CompletionPoint::new(DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0])).unwrap();
    assert!(p.is_singular());
    assert!(p.matrix().iter().all(|v| *v == 0.0));
}
