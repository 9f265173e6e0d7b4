//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N PASS|FAIL` line. Run with `cargo test --test acceptance`.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::*;
use locnpg::decay::{
    certificate, certify, check_product_tv_lemma, dobrushin_matrix, measure_q_decay, measure_v_decay, CertifyOptions,
    DobrushinMode,
};
use locnpg::estimation::{audit_sampler, sample_batch, AuditSettings, SamplerOptions};
use locnpg::mdp::{exact_values, Kernel};
use locnpg::npg::{bias_gap, decentralized_npg, independence_check, NpgConfig};
use locnpg::optim::{exact_quadratic, solve_exact, spgd, spgd_bound};
use locnpg::policy::PolicyInit;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn criterion_01_dobrushin_certification() {
    let start = Instant::now();
    let m = fixture3();
    let analytic = match m.kernel() {
        Kernel::Influence(net) => net.analytic_dobrushin(),
        _ => unreachable!(),
    };
    let enumerated = dobrushin_matrix(&m, DobrushinMode::Enumerate).unwrap();
    let mut worst = f64::NEG_INFINITY;
    for (ra, re) in analytic.iter().zip(&enumerated) {
        for (a, e) in ra.iter().zip(re) {
            worst = worst.max(e - a);
        }
    }
    let (rho, _) = certify(&m, &enumerated, std::f64::consts::LN_2, GAMMA);
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-12 && rho <= 0.6 + 1e-12 && secs < 5.0;
    report(
        1,
        "Dobrushin certification",
        pass,
        &format!("max(C_enum - C_analytic) = {worst:.3e}, rho_enum = {rho:.6}, {secs:.2}s"),
    );
    assert!(pass);
}

#[test]
fn criterion_02_exponential_decay() {
    let start = Instant::now();
    let m = fixture3();
    let p = policy(&m, &TRAIN_ALPHAS, random_init(1));
    let cert = certificate(&m, Some(&p), CertifyOptions::default()).unwrap();
    let consts = cert.constants.expect("fixture certifies");
    let table = p.to_table(&m);
    let mut pass = true;
    let mut detail = String::new();
    let (mut last_q, mut last_v) = (f64::INFINITY, f64::INFINITY);
    for r in 0..=2usize {
        let q = measure_q_decay(&m, &table, r).unwrap();
        let v = measure_v_decay(&m, &table, r).unwrap();
        let e = (r + 1) as i32;
        let (qb, vb) = (consts.c * consts.psi.powi(e), consts.c_prime * consts.phi.powi(e));
        pass &= q <= qb && v <= vb && q <= last_q && v <= last_v;
        last_q = q;
        last_v = v;
        detail += &format!("r={r}: Q {q:.3e}<={qb:.3e} V {v:.3e}<={vb:.3e}; ");
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 30.0;
    report(2, "decay of Q and V", pass, &format!("{detail}{secs:.2}s"));
    assert!(pass);
}

#[test]
fn criterion_03_product_tv_lemma() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_slack = f64::INFINITY;
    let mut failures = 0;
    for _ in 0..200 {
        let m = rng.random_range(-2.0..0.0);
        let big = m + rng.random_range(0.0..3.0);
        let f: Vec<f64> = (0..8).map(|_| rng.random_range(m..=big)).collect();
        let coord = |rng: &mut ChaCha8Rng| {
            let p: f64 = rng.random();
            vec![p, 1.0 - p]
        };
        let mus: Vec<Vec<f64>> = (0..3).map(|_| coord(&mut rng)).collect();
        let nus: Vec<Vec<f64>> = (0..3).map(|_| coord(&mut rng)).collect();
        let chk = check_product_tv_lemma(&f, &mus, &nus);
        if chk.lhs > chk.rhs + 1e-12 {
            failures += 1;
        }
        worst_slack = worst_slack.min(chk.rhs - chk.lhs);
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures == 0 && secs < 5.0;
    report(
        3,
        "product-measure TV lemma",
        pass,
        &format!("200 triples, {failures} violations, min slack {worst_slack:.3e}, {secs:.2}s"),
    );
    assert!(pass);
}

#[test]
fn criterion_04_sampler_soundness() {
    let start = Instant::now();
    let m = fixture2();
    let p = policy(&m, &[1.0, 0.5], random_init(7));
    let table = p.to_table(&m);
    let settings = AuditSettings {
        seed: 4,
        episodes: 100_000,
        advantage_episodes: 1_000_000,
        max_tv: 0.02,
        max_z: 4.0,
        sampler: SamplerOptions::default(),
    };
    let rep = audit_sampler(&m, &p, &table, &settings, |_| {}).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = rep.tv <= 0.02 && rep.max_abs_z <= 4.0 && rep.length_z.abs() <= 3.0 && secs < 120.0;
    report(
        4,
        "sampler soundness",
        pass,
        &format!(
            "TV {:.4}, max|z| {:.2} over {} (pair, agent) cells, length {:.4} vs {} (z {:.2}), {secs:.1}s",
            rep.tv,
            rep.max_abs_z,
            rep.z_scores.len(),
            rep.mean_length,
            rep.expected_length,
            rep.length_z
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_spgd_rate() {
    let start = Instant::now();
    let m = fixture2();
    let p = policy(&m, &[1.0, 0.5], random_init(5));
    let sol = exact_values(&m, &p.to_table(&m)).unwrap();
    let w_radius = 1.0;
    let b = p.grad_norm_bound();
    let ids = [0u64, 1];
    let mut pass = true;
    let mut detail = String::new();
    for &n in &[100usize, 1_000, 10_000] {
        let bound = spgd_bound(b, w_radius, GAMMA, n);
        let mut worst = f64::NEG_INFINITY;
        for seed in 0..20u64 {
            let eps = sample_batch(&m, &p, SamplerOptions::default(), seed, 0, 0, n, &ids);
            for k in 0..2 {
                let quad = exact_quadratic(&m, &p, &[k], &sol.d_nu, |q| sol.advantage_agent(k, q));
                let best = quad.loss(&solve_exact(&quad, w_radius));
                let scores: Vec<_> = eps.iter().map(|e| p.log_grad(k, &e.sample.state, e.sample.action[k])).collect();
                let res = spgd(
                    p.active_len(k),
                    scores.iter().zip(&eps).map(|(g, e)| (g, e.estimate.values[k])),
                    n,
                    b,
                    w_radius,
                    GAMMA,
                )
                .unwrap();
                worst = worst.max(quad.loss(&res.w_bar) - best);
            }
        }
        pass &= worst <= bound;
        detail += &format!("N={n}: worst gap {worst:.3e} <= {bound:.3e}; ");
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 120.0;
    report(5, "SPGD rate", pass, &format!("{detail}{secs:.1}s"));
    assert!(pass);
}

#[test]
fn criterion_06_gradient_correctness() {
    let m = fixture3();
    let base = policy(&m, &[1.0, 0.5, 0.25], PolicyInit::Random { seed: 6, scale: 0.5 });
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = 1e-5;
    let mut worst_rel = 0.0f64;
    for _ in 0..1000 {
        let k = rng.random_range(0..3);
        let s: Vec<usize> = (0..3).map(|_| rng.random_range(0..2)).collect();
        let a = rng.random_range(0..2);
        let score = base.log_grad(k, &s, a);
        let (i, g) = score.entries[rng.random_range(0..score.entries.len())];
        let g_total: f64 = score.entries.iter().filter(|e| e.0 == i).map(|e| e.1).sum();
        let logp = |delta: f64| {
            let mut q = base.clone();
            q.set_param(k, i, base.params(k)[i] + delta).unwrap();
            q.action_probs(k, &s)[a].ln()
        };
        let fd = (logp(h) - logp(-h)) / (2.0 * h);
        let _ = g;
        let rel = (fd - g_total).abs() / g_total.abs().max(fd.abs()).max(1e-300);
        worst_rel = worst_rel.max(rel);
    }
    let mut worst_mean = 0.0f64;
    for si in 0..8 {
        let s = m.index().states.decode(si);
        for k in 0..3 {
            let probs = base.action_probs(k, &s);
            let mut mean = vec![0.0; base.active_len(k)];
            for (a, pa) in probs.iter().enumerate() {
                for &(i, g) in &base.log_grad(k, &s, a).entries {
                    mean[i] += pa * g;
                }
            }
            worst_mean = mean.iter().fold(worst_mean, |acc, x| acc.max(x.abs()));
        }
    }
    let pass = worst_rel <= 1e-6 && worst_mean <= 1e-12;
    report(
        6,
        "gradient correctness",
        pass,
        &format!("1000 probes, max rel err {worst_rel:.3e}; max |E score| {worst_mean:.3e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_07_independent_agents() {
    let m = influence(3, 0.0);
    let p = policy(&m, &[1.0, 0.0, 0.0], random_init(8));
    let cfg = NpgConfig {
        iterations: 50,
        w_radius: 1.0,
        ..Default::default()
    };
    let rep = independence_check(&m, &p, &cfg).unwrap();
    let pass = rep.applicable && rep.max_divergence == 0.0 && rep.iterations == 50;
    report(
        7,
        "independent-agents equivalence",
        pass,
        &format!("applicable {}, max divergence {:e} over {} iterations", rep.applicable, rep.max_divergence, rep.iterations),
    );
    assert!(pass);
}

fn train_fixture(r: usize) -> locnpg::npg::RunRecord {
    let m = fixture3();
    let mut p = policy(&m, &TRAIN_ALPHAS, PolicyInit::Uniform);
    let cfg = NpgConfig {
        radius: r,
        iterations: 200,
        w_radius: TRAIN_W,
        ..Default::default()
    };
    decentralized_npg(&m, &mut p, &cfg).unwrap()
}

#[test]
fn criterion_08_global_convergence() {
    let start = Instant::now();
    let rec = train_fixture(2);
    let secs = start.elapsed().as_secs_f64();
    let gap = rec.min_gap.expect("oracle fits");
    let pass = gap <= 1e-2 && secs < 60.0;
    report(
        8,
        "global convergence at full radius",
        pass,
        &format!("min_t gap {gap:.4e} (eta {:.4}, V* {:.6}), {secs:.2}s", rec.eta, rec.v_star.unwrap()),
    );
    assert!(pass);
}

#[test]
fn criterion_09_localization_tradeoff() {
    let recs: Vec<_> = (0..=2).map(train_fixture).collect();
    let gaps: Vec<f64> = recs.iter().map(|r| r.min_gap.unwrap()).collect();
    let full = gaps[2];
    let mut pass = true;
    let mut detail = String::new();
    for (r, rec) in recs.iter().enumerate() {
        let bound = rec.loc_bound.expect("constants exist");
        if r > 0 {
            pass &= gaps[r] <= gaps[r - 1] + 5e-3;
        }
        pass &= gaps[r] - full <= bound;
        detail += &format!("r={r}: gap {:.4e}, excess {:.3e} <= {bound:.3e}; ", gaps[r], gaps[r] - full);
    }
    report(9, "localization tradeoff", pass, detail.trim_end_matches("; "));
    assert!(pass);
}

#[test]
fn criterion_10_bias_gap() {
    let m = fixture3();
    let p = policy(&m, &TRAIN_ALPHAS, PolicyInit::Uniform);
    let rows = bias_gap(&m, &p, TRAIN_W, &[0, 1, 2]).unwrap();
    let mut pass = rows.iter().all(|r| r.gap >= -1e-9);
    pass &= rows.last().unwrap().gap.abs() <= 1e-9;
    pass &= rows.windows(2).all(|w| w[1].gap <= w[0].gap + 1e-9);
    let detail: Vec<String> = rows
        .iter()
        .map(|r| format!("r={}: eps_r {:.4e}, eps {:.4e}, gap {:.3e}", r.r, r.eps_bias_r, r.eps_bias, r.gap))
        .collect();
    report(10, "bias gap", pass, &detail.join("; "));
    assert!(pass);
}

fn run_train(config: &Path, out: &Path, threads: Option<&str>) -> Vec<u8> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_locnpg"));
    cmd.arg("train").arg("--config").arg(config).arg("--out").arg(out);
    if let Some(t) = threads {
        cmd.arg("--threads").arg(t);
    }
    let status = cmd.env_remove("LOCNPG_THREADS").status().unwrap();
    assert!(status.success());
    std::fs::read(out.join("train.csv")).unwrap()
}

#[test]
fn criterion_11_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    std::fs::write(
        &config,
        r#"{"version": 1, "graph": {"type": "path", "agents": 3}, "gamma": 0.5,
            "policy": {"alphas": [5.0, 0.005, 0.005], "init": {"kind": "random", "seed": 11, "scale": 1.0}},
            "npg": {"mode": "sampled", "radius": 1, "iterations": 15, "spgd_steps": 2000, "w_radius": 0.1, "seed": 42}}"#,
    )
    .unwrap();
    let runs: Vec<Vec<u8>> = (0..3)
        .map(|i| run_train(&config, &dir.path().join(format!("run{i}")), None))
        .collect();
    let one = run_train(&config, &dir.path().join("t1"), Some("1"));
    let eight = run_train(&config, &dir.path().join("t8"), Some("8"));
    let rows = runs[0].iter().filter(|&&b| b == b'\n').count();
    let pass = runs.iter().all(|r| *r == runs[0]) && one == runs[0] && eight == runs[0] && rows == 16;
    report(
        11,
        "determinism",
        pass,
        &format!("3 reruns + --threads 1/8 byte-identical: {pass}, {} bytes, {rows} lines", runs[0].len()),
    );
    assert!(pass);
}
