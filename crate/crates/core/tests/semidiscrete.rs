use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use updown::perm::{pattern_density, Permutation};
use updown::rational::{binomial, rat, to_f64, Rational};
use updown::semidiscrete::*;

fn perm(s: &str) -> Permutation {
    s.parse().unwrap()
}

#[test]
fn phi_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let s: f64 = rng.random();
        let eps: f64 = rng.random_range(1e-3..0.999);
        let mut prev = -1.0;
        for i in 0..=200 {
            let v = phi_map(s, eps, i as f64 / 200.0).unwrap();
            assert!(v >= prev && (0.0..=1.0).contains(&v));
            prev = v;
        }
    }
}

#[test]
fn inflation_keeps_weight_support_and_marginals() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for start in [PermutonMeasure::diagonal(), PermutonMeasure::from_permutation(&perm("2413"))] {
        let mut mu = start;
        for step in 0..25 {
            let eps = rng.random_range(0.01..0.5);
            let p = rng.random();
            mu = mu.random_inflation(p, eps, &mut rng).unwrap();
            mu.validate().unwrap_or_else(|e| panic!("step {step}: {e}"));
            let [mx, sx, my, sy] = mu.marginal_moments();
            for (v, target) in [(mx, 0.5), (sx, 1.0 / 3.0), (my, 0.5), (sy, 1.0 / 3.0)] {
                assert!((v - target).abs() < 1e-12, "step {step}: {v}");
            }
        }
        assert!(mu.permuton);
    }
}

#[test]
fn inflated_diagonal_marginals_by_sampling() {
    let mu = PermutonMeasure::diagonal().inflate(0.3, 0.6, 0.2, Orientation::Down).unwrap();
    let stats = mu.marginal_moments_mc(1_000_000, 9);
    for ((mean, se), target) in stats.iter().zip([0.5, 1.0 / 3.0, 0.5, 1.0 / 3.0]) {
        assert!((mean - target).abs() <= 4.0 * se, "{mean} vs {target}");
    }
}

#[test]
fn json_round_trip() {
    let mu = PermutonMeasure::from_permutation(&perm("312"))
        .inflate(0.5, 0.5, 0.1, Orientation::Up)
        .unwrap();
    let back = PermutonMeasure::from_json(&mu.to_json()).unwrap();
    assert_eq!(back, mu);
    assert!(mu.to_json().contains("\"type\": \"segment\""));
    assert!(PermutonMeasure::from_json(r#"{"atoms":[{"type":"point","weight":0.5,"coords":[0.1,0.2]}]}"#).is_err());
    assert!(PermutonMeasure::from_json(r#"{"atoms":[{"type":"point","weight":1.0,"coords":[1.5,0.2]}]}"#).is_err());
}

#[test]
fn block_densities_match_sampling() {
    for (s, pi) in [("2413", "12"), ("2413", "132"), ("3142", "2413"), ("21", "12"), ("12345", "321")] {
        let sigma = perm(s);
        let pi = perm(pi);
        let exact = to_f64(&permuton_density_exact(&sigma, &pi).unwrap());
        let (est, se) = mc_density(&PermutonMeasure::from_permutation(&sigma), &pi, 200_000, 5, 4).unwrap();
        assert!((est - exact).abs() <= 4.0 * se + 1e-12, "{s} {pi}: {est} vs {exact}");
    }
}

#[test]
fn block_densities_are_close_to_pattern_densities() {
    let patterns: Vec<Permutation> = (1..=3).flat_map(Permutation::all).collect();
    (1..=8usize).into_par_iter().for_each(|n| {
        for sigma in Permutation::all(n) {
            for pi in patterns.iter().filter(|pi| pi.len() <= n) {
                let k = pi.len();
                let diff = permuton_density_exact(&sigma, pi).unwrap() - pattern_density(pi, &sigma);
                let bound = Rational::new(binomial(k, 2), (n as i64).into());
                assert!(diff.clone() <= bound && -diff <= bound, "{sigma} {pi}");
            }
        }
    });
}

#[test]
fn small_inflation_leaves_densities() {
    let sigma = perm("2413");
    let mu = PermutonMeasure::from_permutation(&sigma);
    let pi = perm("132");
    let exact = to_f64(&permuton_density_exact(&sigma, &pi).unwrap());
    let (est, se) = mc_inflated_density(&mu, &pi, 0.5, 1e-6, 200_000, 17, 4).unwrap();
    assert!((est - exact).abs() <= 4.0 * se);
}

#[test]
fn size_one_pattern_is_constant() {
    let sigma = perm("2413");
    let one = perm("1");
    let poly = inf_eps_expected_polynomial(&one, &rat(1, 3), &mut |t| permuton_density_exact(&sigma, t)).unwrap();
    assert_eq!(poly.coefficients, vec![Rational::one(), Rational::zero()]);
    assert!(generator_eps(&sigma, &one, &rat(1, 3), &rat(1, 10)).unwrap().is_zero());
}

#[test]
fn generator_of_increasing_pair() {
    for p in [rat(1, 2), rat(2, 7)] {
        let chain = generator_chain(&p).unwrap();
        for s in ["21", "2413", "132", "54321"] {
            let sigma = perm(s);
            let d = permuton_density_exact(&sigma, &perm("12")).unwrap();
            let expected = (p.clone() - d) * rat(2, 1);
            assert_eq!(limit_generator(&chain, &sigma, &perm("12")).unwrap(), expected);
        }
    }
}

#[test]
fn expansion_cancels_and_matches_limit() {
    let patterns: Vec<Permutation> = (1..=4).flat_map(Permutation::all).collect();
    for p in [rat(1, 2), rat(1, 3)] {
        let chain = generator_chain(&p).unwrap();
        for n in 1..=6 {
            let sigmas = Permutation::all(n);
            sigmas.par_iter().for_each(|sigma| {
                for pi in &patterns {
                    let r = generator_limit_check(&chain, sigma, pi, None).unwrap();
                    assert!(r.passed(), "{sigma} {pi}: {r:?}");
                }
            });
        }
    }
}

#[test]
fn generator_approaches_limit() {
    let p = rat(1, 2);
    let chain = generator_chain(&p).unwrap();
    let sigma = perm("2413");
    let pi = perm("132");
    let limit = limit_generator(&chain, &sigma, &pi).unwrap();
    let mut prev = None;
    for e in [rat(1, 10), rat(1, 100), rat(1, 1000)] {
        let gap = to_f64(&(generator_eps(&sigma, &pi, &p, &e).unwrap() - &limit)).abs();
        if let Some(g) = prev {
            assert!(gap < g);
        }
        prev = Some(gap);
    }
}

#[test]
fn expectation_matches_sampling_on_blocks() {
    let sigma = perm("2413");
    let mu = PermutonMeasure::from_permutation(&sigma);
    for (i, pi) in ["12", "21", "132"].into_iter().map(perm).enumerate() {
        let poly = inf_eps_expected_polynomial(&pi, &rat(1, 2), &mut |t| permuton_density_exact(&sigma, t)).unwrap();
        let rhs = to_f64(&poly.evaluate(&rat(1, 10)));
        let (lhs, se) = mc_inflated_density(&mu, &pi, 0.5, 0.1, 400_000, 100 + i as u64, 4).unwrap();
        assert!((lhs - rhs).abs() <= 3.0 * se, "{pi}: {lhs} ± {se} vs {rhs}");
    }
}

#[test]
fn expectation_matches_sampling_on_random_measures() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let patterns = ["12", "21", "123", "213", "2413"];
    for case in 0..6u64 {
        let mut mu = PermutonMeasure::from_permutation(&Permutation::random(rng.random_range(2..6), &mut rng));
        for _ in 0..3 {
            mu = mu.random_inflation(0.5, 0.2, &mut rng).unwrap();
        }
        let pi = perm(patterns[case as usize % patterns.len()]);
        let eps = rng.random_range(0.05..0.3);
        let p: f64 = rng.random_range(0.1..0.9);
        let mut seed = 1000 * (case + 1);
        let mut se_sum = 0.0;
        let rhs = inf_eps_expected_density(&pi, p, eps, &mut |tau| {
            seed += 1;
            let (v, se) = mc_density(&mu, tau, 100_000, seed, 4)?;
            se_sum += se;
            Ok(v)
        })
        .unwrap();
        // All expansion weights lie in [0, 1], so the summed standard errors
        // dominate the right-hand side's error.
        let (lhs, se) = mc_inflated_density(&mu, &pi, p, eps, 100_000, 7 + case, 4).unwrap();
        assert!((lhs - rhs).abs() <= 3.0 * (se + se_sum), "case {case}: {lhs} vs {rhs}");
    }
}

#[test]
fn size_caps() {
    assert!(permuton_density_exact(&Permutation::identity(13), &perm("12")).is_err());
    assert!(permuton_density_exact(&perm("12"), &Permutation::identity(7)).is_err());
}
