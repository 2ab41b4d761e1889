use std::f64::consts::PI;

use latte_core::data::world::{sample_theory, sample_unit_ball, TheoryWorld, WorldSpec};
use latte_core::theory::{
    analytic_error, cap_ratio, cap_ratio_bounds, cap_volume, sphere_volume, theta_radius, w_asym,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Beta, ContinuousCDF};

fn unit(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

#[test]
fn low_dimensional_caps_match_closed_forms() {
    // disk segment θ − sin θ cos θ, solid 3-ball cap π(1 − cos θ)²(2 + cos θ)/3
    for i in 1..30 {
        let t = i as f64 * PI / 30.0;
        let (s, c) = t.sin_cos();
        assert!((cap_volume(2, t).unwrap() - (t - s * c)).abs() < 1e-12);
        assert!((cap_volume(3, t).unwrap() - PI * (1.0 - c).powi(2) * (2.0 + c) / 3.0).abs() < 1e-11);
    }
    assert!((sphere_volume(3) - 4.0 * PI / 3.0).abs() < 1e-12);
}

#[test]
fn cap_ratio_matches_regularized_beta() {
    // for θ ≤ π/2 the cap holds I_{sin²θ}((d+1)/2, 1/2) / 2 of the ball
    for d in 1..12 {
        let b = Beta::new((d as f64 + 1.0) / 2.0, 0.5).unwrap();
        for i in 1..=15 {
            let t = i as f64 * 0.1;
            let want = b.cdf(t.sin().powi(2)) / 2.0;
            let got = cap_ratio(d, t).unwrap();
            assert!((got - want).abs() < 1e-9 * want.max(1e-300), "d={d} θ={t}: {got} vs {want}");
        }
    }
}

#[test]
fn better_aligned_classifiers_err_less() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..1000 {
        let d = rng.random_range(2..9);
        let mu_dir = unit(d, &mut rng);
        let norm = rng.random_range(0.1..2.0);
        let mu: Vec<f64> = mu_dir.iter().map(|x| x * norm).collect();
        let (a, b) = (unit(d, &mut rng), unit(d, &mut rng));
        let ca: f64 = a.iter().zip(&mu_dir).map(|(x, y)| x * y).sum();
        let cb: f64 = b.iter().zip(&mu_dir).map(|(x, y)| x * y).sum();
        if ca <= 0.0 || cb <= 0.0 || (ca - cb).abs() < 1e-9 {
            continue;
        }
        let (ea, eb) = (analytic_error(&mu, &a).unwrap(), analytic_error(&mu, &b).unwrap());
        if ca > cb {
            assert!(ea <= eb, "{ca} > {cb} but {ea} > {eb}");
        } else {
            assert!(eb <= ea);
        }
    }
}

#[test]
fn radius_shrinks_with_stream_length_and_grows_with_confidence() {
    let mut last = f64::INFINITY;
    for n in [100, 1000, 10_000, 100_000] {
        let r = theta_radius(n, 4, 3, 0.1).unwrap();
        assert!(r < last);
        last = r;
    }
    assert!(theta_radius(1000, 4, 3, 0.01).unwrap() > theta_radius(1000, 4, 3, 0.1).unwrap());
}

#[test]
fn unit_ball_radii_follow_power_law() {
    // |x|^d is uniform on [0, 1] for x uniform in the d-ball
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for d in [1, 2, 3, 7] {
        let n = 20_000;
        let mut u: Vec<f64> = (0..n)
            .map(|_| sample_unit_ball(d, &mut rng).iter().map(|x| x * x).sum::<f64>().sqrt().powi(d as i32))
            .collect();
        u.sort_by(f64::total_cmp);
        let ks = u
            .iter()
            .enumerate()
            .map(|(i, &x)| f64::max((i + 1) as f64 / n as f64 - x, x - i as f64 / n as f64))
            .fold(0.0, f64::max);
        // 1.63/sqrt(n) is the 1% critical value
        assert!(ks < 1.63 / (n as f64).sqrt(), "d={d}: KS {ks}");
    }
}

#[test]
fn theory_samples_stay_in_their_ball() {
    let world = TheoryWorld::new(WorldSpec {
        mu: vec![0.7, 0.1, 0.0],
        w_pre: vec![0.6, 0.8, 0.0],
        b_pre: 0.0,
        t_scale: 50.0,
        ood_centers: vec![[vec![-0.7, 0.0, 5.0], vec![0.7, 0.0, 5.0]]],
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for y in 0..2 {
        for ood in [None, Some(0)] {
            let c = world.center(y, ood).unwrap();
            for _ in 0..500 {
                let f = sample_theory(&world, y, ood, &mut rng).unwrap();
                let r: f64 = f.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(r <= 1.0 + 1e-12);
            }
        }
    }
    let w = w_asym(&world).unwrap();
    assert!((w.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn bounds_bracket_ratio(d in 2usize..40, theta in 0.01f64..1.57) {
        let r = cap_ratio(d, theta).unwrap();
        let (lo, hi) = cap_ratio_bounds(d, theta).unwrap();
        prop_assert!(lo <= r && r <= hi, "{} {} {}", lo, r, hi);
    }

    #[test]
    fn cap_volume_is_monotone_in_angle(d in 1usize..20, a in 0.0f64..PI, b in 0.0f64..PI) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(cap_volume(d, lo).unwrap() <= cap_volume(d, hi).unwrap() + 1e-12);
    }

    #[test]
    fn complementary_caps_fill_the_sphere(d in 1usize..20, theta in 0.0f64..PI) {
        let total = cap_volume(d, theta).unwrap() + cap_volume(d, PI - theta).unwrap();
        prop_assert!((total / sphere_volume(d) - 1.0).abs() < 1e-10);
    }
}
