mod common;

use common::*;
use odflow::gravity::*;
use odflow::io::{synth_dataset, SynthOptions};
use odflow::{CityId, FlowMatrix, VehicleClass};
use proptest::prelude::*;
use rand::Rng;

const BETAS: [f64; 4] = [0.85, 1.03, 1.11, 2.0];

fn attractions(seed: u64, n: usize) -> Vec<f64> {
    let mut r = rng(seed ^ 0x5eed);
    (0..n).map(|_| r.random_range(1e3..5e4)).collect()
}

fn centred_logs(p: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = p.iter().map(|v| v.ln()).collect();
    let m = mean(&logs);
    logs.iter().map(|v| v - m).collect()
}

fn check_round_trip(fit: &GravityFit, beta: f64, cities: &[CityId], p: &[f64]) {
    assert!((fit.beta - beta).abs() < 1e-6, "{:?}: {} vs {beta}", fit.method, fit.beta);
    let truth = centred_logs(p);
    assert!(fit.attractions.values().sum::<f64>().abs() < 1e-9);
    for (c, x) in cities.iter().zip(truth) {
        assert!((fit.attractions[c.as_str()] - x).abs() < 1e-6, "{c}");
    }
}

#[test]
fn noiseless_round_trip_on_scattered_cities() {
    for (k, &beta) in BETAS.iter().enumerate() {
        let (cities, d) = scattered(10, 400.0, 20.0, k as u64);
        let p = attractions(k as u64, 10);
        let flows = generate_gravity(&cities, &p, beta, &d, 0.0, 1).unwrap();
        let ll = fit_loglinear(&flows, &d).unwrap();
        check_round_trip(&ll, beta, &cities, &p);
        assert!((ll.fit_metric - 1.0).abs() < 1e-12);
        let mm = fit_minimax(&flows, &d).unwrap();
        check_round_trip(&mm, beta, &cities, &p);
        assert!(mm.fit_metric.abs() < 1e-6);
    }
}

#[test]
fn noiseless_round_trip_on_ring_design() {
    for &beta in &BETAS {
        let (cities, d) = circulant(10, 10.0, 1000.0);
        let p = attractions(3, 10);
        let flows = generate_gravity(&cities, &p, beta, &d, 0.0, 1).unwrap();
        check_round_trip(&fit_loglinear(&flows, &d).unwrap(), beta, &cities, &p);
        check_round_trip(&fit_minimax(&flows, &d).unwrap(), beta, &cities, &p);
        assert!((fit_nullmodel(&flows, &d).unwrap().beta - beta).abs() < 1e-9);
    }
}

#[test]
fn null_model_ensemble_stays_within_tolerance() {
    let (cities, d) = circulant(10, 10.0, 1000.0);
    for &beta in &BETAS {
        let est: Vec<f64> = (0..100)
            .map(|s| {
                let flows = generate_gravity(&cities, &attractions(s, 10), beta, &d, 0.1, s).unwrap();
                fit_nullmodel(&flows, &d).unwrap().beta
            })
            .collect();
        assert!(est.iter().all(|b| (b - beta).abs() < 0.2));
        assert!((mean(&est) - beta).abs() < 0.01);
    }
}

#[test]
fn null_model_of_distance_free_flows_is_zero() {
    let (cities, d) = scattered(6, 300.0, 20.0, 2);
    let w = [250.0; 6];
    let mut flows = FlowMatrix::new(2015, VehicleClass::CarsBuses);
    for i in 0..6 {
        for j in 0..6 {
            if i != j {
                flows.insert(cities[i].clone(), cities[j].clone(), w[i] * w[j], None);
            }
        }
    }
    let fit = fit_nullmodel(&flows, &d).unwrap();
    assert!(fit.beta.abs() < 1e-12);
    assert!(fit.attractions.is_empty());
}

#[test]
fn doubling_attractions_quadruples_flows() {
    let (cities, d) = scattered(5, 200.0, 10.0, 4);
    let p = attractions(4, 5);
    let p2: Vec<f64> = p.iter().map(|v| 2.0 * v).collect();
    let a = generate_gravity(&cities, &p, 1.3, &d, 0.0, 0).unwrap();
    let b = generate_gravity(&cities, &p2, 1.3, &d, 0.0, 0).unwrap();
    for (i, ci) in cities.iter().enumerate() {
        for (j, cj) in cities.iter().enumerate() {
            if i == j {
                continue;
            }
            let direct = p[i] * p[j] / d.get(ci, cj).unwrap().powf(1.3);
            assert!(rel_close(a.volume(ci, cj), direct, 1e-14));
            assert!(rel_close(b.volume(ci, cj), 4.0 * direct, 1e-14));
        }
    }
}

#[test]
fn minimax_objective_is_largest_log_deviation() {
    let (cities, d) = scattered(8, 300.0, 20.0, 9);
    let flows = generate_gravity(&cities, &attractions(9, 8), 1.1, &d, 0.3, 9).unwrap();
    let fit = fit_minimax(&flows, &d).unwrap();
    let worst = flows
        .entries()
        .filter(|(o, t, _)| o != t)
        .map(|(o, t, e)| (fit.predict(o, t, d.get(o, t).unwrap()).unwrap().ln() - e.vehicles.ln()).abs())
        .fold(0.0, f64::max);
    assert!((worst - fit.fit_metric).abs() < 1e-7, "{worst} vs {}", fit.fit_metric);
    // Least squares never beats MINIMAX on the worst residual.
    let ll = fit_loglinear(&flows, &d).unwrap();
    let ll_worst = flows
        .entries()
        .filter(|(o, t, _)| o != t)
        .map(|(o, t, e)| (ll.predict(o, t, d.get(o, t).unwrap()).unwrap().ln() - e.vehicles.ln()).abs())
        .fold(0.0, f64::max);
    assert!(fit.fit_metric <= ll_worst + 1e-9);

    let lp = minimax_lp(&flows, &d).unwrap();
    let sol = solve_lp(&lp).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    assert!(lp.max_violation(&sol.values()) < 1e-7);
    assert!(sol.values().iter().all(|v| *v >= 0.0));
}

fn decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

#[test]
fn beta_trend_follows_planted_sequence() {
    let options = SynthOptions::new(13, vec![2014, 2015, 2016, 2017], vec![1.2, 1.15, 1.1, 1.05], 42);
    let (dataset, _) = synth_dataset(&options).unwrap();
    for class in VehicleClass::ALL {
        for method in [GravityMethod::LogLinear, GravityMethod::Minimax, GravityMethod::NullModel] {
            let betas: Vec<f64> = options
                .years
                .iter()
                .map(|&y| method.fit(dataset.flow(y, class).unwrap(), &dataset.distances).unwrap().beta)
                .collect();
            assert!(decreasing(&betas), "{class} {method:?}: {betas:?}");
        }
    }
}

#[test]
fn larger_planted_beta_gives_larger_estimates() {
    let options = SynthOptions::new(9, vec![2015, 2016], vec![1.03, 1.11], 7);
    let (dataset, _) = synth_dataset(&options).unwrap();
    for method in [GravityMethod::LogLinear, GravityMethod::Minimax, GravityMethod::NullModel] {
        let fit = |y| method.fit(dataset.flow(y, VehicleClass::CarsBuses).unwrap(), &dataset.distances).unwrap().beta;
        assert!(fit(2016) > fit(2015), "{method:?}");
    }
}

#[test]
fn zero_flows_are_excluded_and_counted() {
    let (cities, d) = scattered(6, 300.0, 20.0, 5);
    let p = attractions(5, 6);
    let mut flows = generate_gravity(&cities, &p, 1.2, &d, 0.0, 0).unwrap();
    flows.insert(cities[0].clone(), cities[1].clone(), 0.0, None);
    let fit = fit_loglinear(&flows, &d).unwrap();
    assert_eq!(fit.excluded_zero_flows, 1);
    assert_eq!(fit.n_observations, 29);
    assert!((fit.beta - 1.2).abs() < 1e-9);
}

#[test]
fn too_few_cities_is_rejected() {
    let (cities, d) = scattered(3, 100.0, 10.0, 1);
    let flows = generate_gravity(&cities, &[1.0, 2.0, 3.0], 1.0, &d, 0.0, 0).unwrap();
    assert!(fit_loglinear(&flows, &d).is_err());
    assert!(fit_minimax(&flows, &d).is_err());
}

#[test]
fn simplex_matches_vertex_enumeration() {
    for seed in 0..20 {
        let lp = random_lp(seed);
        let (best, _) = vertex_oracle(&lp).unwrap();
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - best).abs() < 1e-8, "seed {seed}: {} vs {best}", sol.objective);
        assert!(lp.max_violation(&sol.values()) < 1e-9);
    }
}

#[test]
fn beale_example_terminates_at_optimum() {
    let sol = solve_lp(&beale()).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    assert!((sol.objective + 1.25).abs() < 1e-12);
    assert!((sol.variables["x4"] - 1.0).abs() < 1e-12);
    assert!((sol.variables["x6"] - 1.0).abs() < 1e-12);
}

#[test]
fn infeasible_and_unbounded_programs_are_reported() {
    let mut lp = LinearProgram::new(vec!["x".into()], vec![1.0]);
    lp.add(vec![1.0], ConstraintKind::Le, 1.0);
    lp.add(vec![1.0], ConstraintKind::Ge, 2.0);
    assert!(matches!(solve_lp(&lp), Err(odflow::Error::LpFailure(LpStatus::Infeasible))));
    let mut lp = LinearProgram::new(vec!["x".into()], vec![-1.0]);
    lp.add(vec![1.0], ConstraintKind::Ge, 1.0);
    assert!(matches!(solve_lp(&lp), Err(odflow::Error::LpFailure(LpStatus::Unbounded))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn loglinear_recovers_any_planted_beta(seed in 0u64..1000, beta in 0.1f64..3.0) {
        let (cities, d) = scattered(6, 300.0, 15.0, seed);
        let p = attractions(seed, 6);
        let flows = generate_gravity(&cities, &p, beta, &d, 0.0, seed).unwrap();
        let fit = fit_loglinear(&flows, &d).unwrap();
        prop_assert!((fit.beta - beta).abs() < 1e-8);
        prop_assert!(fit.attractions.values().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn minimax_solution_is_feasible(seed in 0u64..1000, sigma in 0.0f64..0.5) {
        let (cities, d) = scattered(5, 300.0, 15.0, seed);
        let flows = generate_gravity(&cities, &attractions(seed, 5), 1.0, &d, sigma, seed).unwrap();
        let lp = minimax_lp(&flows, &d).unwrap();
        let sol = solve_lp(&lp).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        prop_assert!(lp.max_violation(&sol.values()) < 1e-7);
    }

    #[test]
    fn generator_is_deterministic(seed in 0u64..1000) {
        let (cities, d) = scattered(4, 100.0, 5.0, 1);
        let a = generate_gravity(&cities, &[1.0, 2.0, 3.0, 4.0], 1.5, &d, 0.2, seed).unwrap();
        let b = generate_gravity(&cities, &[1.0, 2.0, 3.0, 4.0], 1.5, &d, 0.2, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
