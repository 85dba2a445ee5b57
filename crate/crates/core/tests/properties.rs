use proptest::prelude::*;

use divcurl_lab::config::ExperimentConfig;
use divcurl_lab::diffops::curl_matrix;
use divcurl_lab::field::{ScalarField, VectorField};
use divcurl_lab::grid::{Grid, MIN_POINTS};
use divcurl_lab::io::{read_field_binary, read_field_csv, write_field_binary, write_field_csv};
use divcurl_lab::lab::{EpsSchedule, Profile, Wave};
use divcurl_lab::poisson::{solve_dirichlet, SolverConfig};
use divcurl_lab::quadrature::integrate;

fn grid_2d() -> impl Strategy<Value = Grid> {
    (MIN_POINTS..MIN_POINTS + 10).prop_map(|n| Grid::new(2, n).unwrap())
}

fn scalar(g: Grid) -> impl Strategy<Value = ScalarField> {
    prop::collection::vec(-10.0f64..10.0, g.len()).prop_map(move |v| ScalarField::from_values(g, v).unwrap())
}

fn vector(g: Grid) -> impl Strategy<Value = VectorField> {
    prop::collection::vec(scalar(g), g.dim()).prop_map(|c| VectorField::from_components(c).unwrap())
}

fn profile() -> impl Strategy<Value = Profile> {
    (prop_oneof![Just(Wave::None), Just(Wave::Sin), Just(Wave::Cos)], -8i32..8, 0u32..4)
        .prop_map(|(wave, num, pow)| Profile::shifted(num as f64 / 2f64.powi(pow as i32), wave))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn integration_is_linear(
        (f, g) in grid_2d().prop_flat_map(|g| (scalar(g), scalar(g))),
        a in -5.0f64..5.0,
        b in -5.0f64..5.0,
    ) {
        let combo = &f.scale(a) + &g.scale(b);
        let lhs = integrate(&combo);
        let rhs = a * integrate(&f) + b * integrate(&g);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn curl_is_antisymmetric(w in (MIN_POINTS..MIN_POINTS + 4).prop_flat_map(|n| vector(Grid::new(3, n).unwrap()))) {
        let c = curl_matrix(&w);
        for i in 0..3 {
            prop_assert!(c.entry(i, i).max_abs() == 0.0);
            for j in 0..3 {
                let sum = &c.entry(i, j) + &c.entry(j, i);
                prop_assert!(sum.max_abs() == 0.0);
            }
        }
    }

    #[test]
    fn poisson_solve_is_linear(
        (f, g) in grid_2d().prop_flat_map(|g| (scalar(g), scalar(g))),
        a in -3.0f64..3.0,
    ) {
        let cfg = SolverConfig::default();
        let solve = |x: &ScalarField| solve_dirichlet(x, &cfg).unwrap().solution;
        let lhs = solve(&(&f.scale(a) + &g));
        let rhs = &solve(&f).scale(a) + &solve(&g);
        let scale = 1.0 + rhs.max_abs();
        prop_assert!((&lhs - &rhs).max_abs() <= 1e-10 * scale);
    }

    #[test]
    fn profile_text_round_trip(p in profile()) {
        let back: Profile = p.to_string().parse().unwrap();
        prop_assert_eq!(back, p);
        let json = serde_json::to_string(&p).unwrap();
        prop_assert_eq!(serde_json::from_str::<Profile>(&json).unwrap(), p);
    }

    #[test]
    fn field_files_round_trip(w in (2usize..4, MIN_POINTS..MIN_POINTS + 4).prop_flat_map(|(d, n)| vector(Grid::new(d, n).unwrap()))) {
        let mut bin = Vec::new();
        write_field_binary(&mut bin, &w).unwrap();
        prop_assert_eq!(read_field_binary(bin.as_slice()).unwrap(), w.clone());
        let mut csv = Vec::new();
        write_field_csv(&mut csv, &w).unwrap();
        prop_assert_eq!(read_field_csv(csv.as_slice()).unwrap(), w);
    }

    #[test]
    fn config_toml_round_trip(
        dim in 2usize..4,
        ks in prop::collection::btree_set(1u32..64, 1..6),
        a in profile(),
        b in profile(),
        radius in 0.05f64..0.45,
        n in prop::option::of(MIN_POINTS..300),
    ) {
        let cfg = ExperimentConfig {
            dim,
            n,
            k_schedule: ks.into_iter().collect(),
            profile_a: a,
            profile_b: b,
            bump_radius: radius,
            ..ExperimentConfig::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        prop_assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn schedules_are_strictly_decreasing_in_eps(ks in prop::collection::vec(1u32..100, 1..8)) {
        match EpsSchedule::new(ks.clone()) {
            Ok(s) => {
                let eps = s.eps();
                prop_assert!(eps.windows(2).all(|w| w[1] < w[0]));
                prop_assert_eq!(s.ks(), ks.as_slice());
            }
            Err(_) => prop_assert!(ks.windows(2).any(|w| w[1] <= w[0])),
        }
    }
}
