//! Invariants of the policy class, optimizer and sampler as proptest properties.

mod common;

use common::*;
use locnpg::decay::check_product_tv_lemma;
use locnpg::estimation::{derive_seed, sample_batch, SamplerOptions};
use locnpg::mdp::exact_values;
use locnpg::optim::{exact_quadratic, kkt_residual, project_ball, solve_exact};
use locnpg::policy::PolicyInit;
use proptest::prelude::*;

fn init(seed: u64) -> PolicyInit {
    PolicyInit::Random { seed, scale: 0.9 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn score_has_zero_mean(seed in any::<u64>(), k in 0usize..3, s in proptest::collection::vec(0usize..2, 3)) {
        let m = fixture3();
        let p = policy(&m, &[1.0, 0.5, 0.25], init(seed));
        let probs = p.action_probs(k, &s);
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let mut mean = vec![0.0; p.active_len(k)];
        for (a, pa) in probs.iter().enumerate() {
            for &(i, g) in &p.log_grad(k, &s, a).entries {
                mean[i] += pa * g;
            }
        }
        prop_assert!(mean.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn score_matches_finite_differences(seed in any::<u64>(), k in 0usize..3, s in proptest::collection::vec(0usize..2, 3), a in 0usize..2) {
        let m = fixture3();
        let p = policy(&m, &[1.0, 0.5, 0.25], init(seed));
        let dense = p.log_grad(k, &s, a).to_dense();
        let h = 1e-5;
        for (i, g) in dense.iter().enumerate() {
            let lp = |d: f64| {
                let mut q = p.clone();
                q.set_param(k, i, p.params(k)[i] + d).unwrap();
                q.action_probs(k, &s)[a].ln()
            };
            let fd = (lp(h) - lp(-h)) / (2.0 * h);
            prop_assert!((fd - g).abs() <= 1e-6 * g.abs().max(1e-3), "param {}: {} vs {}", i, fd, g);
        }
    }

    #[test]
    fn policy_reads_only_its_neighborhood(seed in any::<u64>(), r in 0usize..3, k in 0usize..3, s in proptest::collection::vec(0usize..2, 3), t in proptest::collection::vec(0usize..2, 3)) {
        let m = fixture3();
        let mut p = policy(&m, &[1.0, 0.5, 0.25], init(seed));
        p.truncate(r);
        let hood = m.graph().neighborhood(k, r);
        let mixed: Vec<usize> = (0..3).map(|j| if hood.contains(&j) { s[j] } else { t[j] }).collect();
        prop_assert_eq!(p.action_probs(k, &s), p.action_probs(k, &mixed));
        prop_assert_eq!(p.log_grad(k, &s, 0), p.log_grad(k, &mixed, 0));
    }

    #[test]
    fn updates_stay_in_box(seed in any::<u64>(), scale in -50.0f64..50.0, w in proptest::collection::vec(-3.0f64..3.0, 28)) {
        let m = fixture3();
        let mut p = policy(&m, &[1.0, 0.5, 0.25], init(seed));
        p.truncate(2);
        let n = p.active_len(0);
        p.apply_update(0, &w[..n], scale).unwrap();
        prop_assert!(p.params(0).iter().all(|x| x.abs() <= p.c_f()));
    }

    #[test]
    fn grad_norm_bound_holds(seed in any::<u64>(), r in 0usize..3, k in 0usize..3, s in proptest::collection::vec(0usize..2, 3), a in 0usize..2) {
        let m = fixture3();
        let mut p = policy(&m, &[1.0, 0.5, 0.25], init(seed));
        p.truncate(r);
        prop_assert!(p.log_grad(k, &s, a).norm() <= p.grad_norm_bound() + 1e-12);
    }

    #[test]
    fn projection_lands_in_ball(w in proptest::collection::vec(-10.0f64..10.0, 1..12), radius in 0.01f64..5.0) {
        let mut x = w.clone();
        project_ball(&mut x, radius);
        let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(n <= radius * (1.0 + 1e-12));
        let n0 = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n0 <= radius {
            prop_assert_eq!(x, w);
        }
    }

    #[test]
    fn constrained_solve_is_optimal(seed in any::<u64>(), radius in 0.01f64..3.0, probe in proptest::collection::vec(-1.0f64..1.0, 16)) {
        let m = fixture2();
        let p = policy(&m, &[1.0, 0.5], init(seed));
        let sol = exact_values(&m, &p.to_table(&m)).unwrap();
        let quad = exact_quadratic(&m, &p, &[0], &sol.d_nu, |q| sol.advantage_agent(0, q));
        let w = solve_exact(&quad, radius);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(norm <= radius * (1.0 + 1e-9));
        prop_assert!(kkt_residual(&quad, &w, radius) < 1e-6);
        let mut other: Vec<f64> = probe[..w.len()].to_vec();
        project_ball(&mut other, radius);
        prop_assert!(quad.loss(&w) <= quad.loss(&other) + 1e-10);
    }

    #[test]
    fn product_tv_lemma(f in proptest::collection::vec(-1.0f64..1.0, 8), mu in proptest::collection::vec(0.0f64..1.0, 3), nu in proptest::collection::vec(0.0f64..1.0, 3)) {
        let mus: Vec<Vec<f64>> = mu.iter().map(|&p| vec![p, 1.0 - p]).collect();
        let nus: Vec<Vec<f64>> = nu.iter().map(|&p| vec![p, 1.0 - p]).collect();
        prop_assert!(check_product_tv_lemma(&f, &mus, &nus).ok);
    }

    #[test]
    fn seed_paths_do_not_collide(a in any::<u64>(), p in proptest::collection::vec(any::<u64>(), 0..4), q in proptest::collection::vec(any::<u64>(), 0..4)) {
        if p != q {
            prop_assert_ne!(derive_seed(a, &p), derive_seed(a, &q));
        } else {
            prop_assert_eq!(derive_seed(a, &p), derive_seed(a, &q));
        }
    }
}

#[test]
fn sampler_batches_are_prefix_stable() {
    let m = fixture2();
    let p = policy(&m, &[1.0, 0.5], init(1));
    let ids = [0u64, 1];
    let all = sample_batch(&m, &p, SamplerOptions::default(), 9, 3, 0, 200, &ids);
    let tail = sample_batch(&m, &p, SamplerOptions::default(), 9, 3, 120, 80, &ids);
    assert_eq!(&all[120..], &tail[..]);
    let again = sample_batch(&m, &p, SamplerOptions::default(), 9, 3, 0, 200, &ids);
    assert_eq!(all, again);
}

#[test]
fn advantage_estimates_are_bounded_by_rollout() {
    let m = fixture2();
    let p = policy(&m, &[1.0, 0.5], init(2));
    for e in sample_batch(&m, &p, SamplerOptions::default(), 1, 0, 0, 2000, &[0, 1]) {
        for v in &e.estimate.values {
            assert!(v.abs() <= 2.0 * e.estimate.rollout_len as f64 + 1e-12);
        }
    }
}
