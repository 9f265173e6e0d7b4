//! Ball-constrained least-squares fits of advantages onto policy scores:
//! projected stochastic gradient descent with averaged iterates, and an exact
//! solver for the quadratic form of the loss.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{input, Result};
use crate::mdp::FactoredMdp;
use crate::policy::{LocalizedPolicy, Score};

/// `L(w) = c0 - 2 b.w + w' Sigma w` with `Sigma = E[g g']`, `b = E[A g]`,
/// `c0 = E[A^2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub sigma: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c0: f64,
}

impl Quadratic {
    pub fn zeros(dim: usize) -> Self {
        Self {
            sigma: DMatrix::zeros(dim, dim),
            b: DVector::zeros(dim),
            c0: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Adds `weight * (target - g.w)^2` for a score placed at `offset`.
    pub fn accumulate(&mut self, weight: f64, score: &Score, offset: usize, target: f64) {
        if weight == 0.0 {
            return;
        }
        for &(i, gi) in &score.entries {
            self.b[offset + i] += weight * target * gi;
            for &(j, gj) in &score.entries {
                self.sigma[(offset + i, offset + j)] += weight * gi * gj;
            }
        }
        self.c0 += weight * target * target;
    }

    pub fn loss(&self, w: &[f64]) -> f64 {
        let w = DVector::from_column_slice(w);
        self.c0 - 2.0 * self.b.dot(&w) + w.dot(&(&self.sigma * &w))
    }

    pub fn grad(&self, w: &[f64]) -> Vec<f64> {
        let w = DVector::from_column_slice(w);
        (2.0 * (&self.sigma * &w - &self.b)).as_slice().to_vec()
    }
}

/// Exact regression of a per-pair target onto the concatenated scores of
/// `agents` under `dist` (a distribution over flat global pairs).
pub fn exact_quadratic(
    mdp: &FactoredMdp,
    policy: &LocalizedPolicy,
    agents: &[usize],
    dist: &[f64],
    target: impl Fn(usize) -> f64,
) -> Quadratic {
    let idx = mdp.index();
    let na = idx.num_actions();
    let mut offsets = Vec::with_capacity(agents.len());
    let mut dim = 0;
    for &k in agents {
        offsets.push(dim);
        dim += policy.active_len(k);
    }
    let mut quad = Quadratic::zeros(dim);
    let mut s = vec![0; mdp.num_agents()];
    let mut a = vec![0; mdp.num_agents()];
    for si in 0..idx.num_states() {
        idx.states.decode_into(si, &mut s);
        let probs: Vec<Vec<f64>> = agents.iter().map(|&k| policy.action_probs(k, &s)).collect();
        for ai in 0..na {
            let pair = si * na + ai;
            let weight = dist[pair];
            if weight == 0.0 {
                continue;
            }
            idx.actions.decode_into(ai, &mut a);
            let scores: Vec<Score> = agents
                .iter()
                .zip(&probs)
                .map(|(&k, p)| policy.log_grad_with_probs(k, &s, a[k], p))
                .collect();
            let t = target(pair);
            quad.c0 += weight * t * t;
            for (i, si_score) in scores.iter().enumerate() {
                for &(p, gp) in &si_score.entries {
                    quad.b[offsets[i] + p] += weight * t * gp;
                    for (j, sj_score) in scores.iter().enumerate() {
                        for &(q, gq) in &sj_score.entries {
                            quad.sigma[(offsets[i] + p, offsets[j] + q)] += weight * gp * gq;
                        }
                    }
                }
            }
        }
    }
    quad
}

/// `w * min(1, W / ||w||)`.
pub fn project_ball(w: &mut [f64], radius: f64) {
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > radius {
        let scale = radius / norm;
        for x in w.iter_mut() {
            *x *= scale;
        }
    }
}

/// Stochastic gradient `-2 (A_hat - g.w) g` of one sample.
pub fn loss_grad_stochastic(score: &Score, target: f64, w: &[f64]) -> Vec<f64> {
    let resid = target - score.dot(w);
    let mut out = vec![0.0; w.len()];
    for &(i, g) in &score.entries {
        out[i] -= 2.0 * resid * g;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpgdResult {
    /// Average of the iterates after each step.
    pub w_bar: Vec<f64>,
    pub w_last: Vec<f64>,
    pub steps: usize,
    pub step_size: f64,
}

/// `W / (8 B (B W + 1/(1-gamma)) sqrt(N))`.
pub fn spgd_step_size(b: f64, radius: f64, gamma: f64, n: usize) -> f64 {
    radius / (8.0 * b * (b * radius + 1.0 / (1.0 - gamma)) * (n as f64).sqrt())
}

/// `8 B W (B W + 1/(1-gamma)) / sqrt(N)`.
pub fn spgd_bound(b: f64, radius: f64, gamma: f64, n: usize) -> f64 {
    8.0 * b * radius * (b * radius + 1.0 / (1.0 - gamma)) / (n as f64).sqrt()
}

/// Projected SGD from `w = 0` over the given `(score, target)` stream, one
/// sample per step. `b` is the score-norm bound.
pub fn spgd<'a>(
    dim: usize,
    samples: impl IntoIterator<Item = (&'a Score, f64)>,
    n: usize,
    b: f64,
    radius: f64,
    gamma: f64,
) -> Result<SpgdResult> {
    if n == 0 {
        return input("SPGD needs at least one step");
    }
    if !(radius > 0.0) {
        return input("ball radius must be positive");
    }
    if b == 0.0 {
        return Ok(SpgdResult {
            w_bar: vec![0.0; dim],
            w_last: vec![0.0; dim],
            steps: 0,
            step_size: 0.0,
        });
    }
    let alpha = spgd_step_size(b, radius, gamma, n);
    let mut w = vec![0.0; dim];
    let mut sum = vec![0.0; dim];
    let mut steps = 0;
    for (score, target) in samples.into_iter().take(n) {
        let resid = target - score.dot(&w);
        for &(i, g) in &score.entries {
            w[i] += alpha * 2.0 * resid * g;
        }
        project_ball(&mut w, radius);
        for (s, x) in sum.iter_mut().zip(&w) {
            *s += x;
        }
        steps += 1;
    }
    if steps < n {
        return input(format!("SPGD asked for {n} steps but got {steps} samples"));
    }
    let w_bar = sum.iter().map(|s| s / n as f64).collect();
    Ok(SpgdResult {
        w_bar,
        w_last: w,
        steps,
        step_size: alpha,
    })
}

const EIG_REL_TOL: f64 = 1e-12;

fn sym_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
}

/// Minimizer of the quadratic over `||w|| <= W`: the minimum-norm
/// unconstrained solution when it fits, otherwise the sphere point with
/// `(Sigma + lambda I) w = b` found by bisection on `lambda`.
pub fn solve_exact(quad: &Quadratic, radius: f64) -> Vec<f64> {
    let dim = quad.dim();
    if dim == 0 {
        return Vec::new();
    }
    let eig = sym_eigen(&quad.sigma);
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let thresh = EIG_REL_TOL * top.max(f64::MIN_POSITIVE);
    let coeffs: Vec<(f64, f64)> = (0..dim)
        .filter(|&i| eig.eigenvalues[i] > thresh)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).dot(&quad.b)))
        .collect();
    let keep: Vec<usize> = (0..dim).filter(|&i| eig.eigenvalues[i] > thresh).collect();
    let norm_at = |lambda: f64| -> f64 {
        coeffs
            .iter()
            .map(|(e, c)| (c / (e + lambda)).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let build = |lambda: f64| -> Vec<f64> {
        let mut w = DVector::zeros(dim);
        for (&i, (e, c)) in keep.iter().zip(&coeffs) {
            w += eig.eigenvectors.column(i) * (c / (e + lambda));
        }
        w.as_slice().to_vec()
    };
    if norm_at(0.0) <= radius {
        return build(0.0);
    }
    let mut lo = 0.0;
    let mut hi = quad.b.norm() / radius;
    while norm_at(hi) > radius {
        hi *= 2.0;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if norm_at(mid) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let mut w = build(hi);
    let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in &mut w {
            *x *= radius / n;
        }
    }
    w
}

/// KKT residual of a ball-constrained minimizer: the gradient norm inside the
/// ball, or the component of the gradient not anti-parallel to `w` on the
/// sphere (plus any positive multiplier violation).
pub fn kkt_residual(quad: &Quadratic, w: &[f64], radius: f64) -> f64 {
    let g = DVector::from_vec(quad.grad(w));
    let wv = DVector::from_column_slice(w);
    let norm = wv.norm();
    if norm < radius * (1.0 - 1e-9) {
        return g.norm();
    }
    let u = &wv / norm;
    let along = g.dot(&u);
    let perp = (&g - &u * along).norm();
    perp + along.max(0.0)
}

/// `sup_w (w' A w) / (w' B w)`; infinite when `A` has mass in the null space of `B`.
pub fn relative_condition(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let dim = a.nrows();
    if dim == 0 {
        return 0.0;
    }
    let eb = sym_eigen(b);
    let top_b = eb.eigenvalues.iter().copied().fold(0.0, f64::max);
    let top_a = sym_eigen(a).eigenvalues.iter().copied().fold(0.0, f64::max);
    let thresh = EIG_REL_TOL * top_b.max(top_a).max(f64::MIN_POSITIVE);
    let range: Vec<usize> = (0..dim).filter(|&i| eb.eigenvalues[i] > thresh).collect();
    let null: Vec<usize> = (0..dim).filter(|&i| eb.eigenvalues[i] <= thresh).collect();
    for &i in &null {
        let v = eb.eigenvectors.column(i);
        if v.dot(&(a * v)) > 1e3 * thresh {
            return f64::INFINITY;
        }
    }
    if range.is_empty() {
        return 0.0;
    }
    let m = range.len();
    let mut t = DMatrix::zeros(dim, m);
    for (c, &i) in range.iter().enumerate() {
        t.set_column(c, &(eb.eigenvectors.column(i) / eb.eigenvalues[i].sqrt()));
    }
    let reduced = t.transpose() * a * &t;
    sym_eigen(&reduced).eigenvalues.iter().copied().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_quad(dim: usize, seed: u64) -> Quadratic {
        let mut state = seed;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 10_000) as f64 / 10_000.0 - 0.5
        };
        let m = DMatrix::from_fn(dim, dim, |_, _| next());
        let sigma = &m * m.transpose();
        let b = DVector::from_fn(dim, |_, _| next());
        Quadratic { sigma, b, c0: 1.0 }
    }

    #[test]
    fn projection_examples() {
        let mut w = [3.0, 4.0];
        project_ball(&mut w, 1.0);
        assert!((w[0] - 0.6).abs() < 1e-15 && (w[1] - 0.8).abs() < 1e-15);
        let mut z = [0.0, 0.0];
        project_ball(&mut z, 1.0);
        assert_eq!(z, [0.0, 0.0]);
        let mut inside = [0.1, 0.2];
        project_ball(&mut inside, 1.0);
        assert_eq!(inside, [0.1, 0.2]);
    }

    #[test]
    fn zero_target_zero_solution() {
        let mut q = random_quad(4, 3);
        q.b.fill(0.0);
        q.c0 = 0.0;
        assert!(solve_exact(&q, 1.0).iter().all(|x| *x == 0.0));
        assert_eq!(q.loss(&[0.0; 4]), 0.0);
        assert!(q.grad(&[0.0; 4]).iter().all(|x| *x == 0.0));
    }

    #[test]
    fn interior_solution_satisfies_normal_equations() {
        let q = random_quad(5, 11);
        let w = solve_exact(&q, 1e6);
        let resid = &q.sigma * DVector::from_vec(w.clone()) - &q.b;
        assert!(resid.norm() <= 1e-9, "{}", resid.norm());
        assert!(kkt_residual(&q, &w, 1e6) <= 1e-8);
    }

    #[test]
    fn tiny_ball_is_active() {
        let q = random_quad(5, 12);
        let w = solve_exact(&q, 1e-6);
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1e-6).abs() < 1e-9);
        assert!(kkt_residual(&q, &w, 1e-6) <= 1e-8);
    }

    #[test]
    fn perfect_fit_has_zero_loss() {
        let g = Score {
            dim: 2,
            entries: vec![(0, 1.0), (1, -0.5)],
        };
        let h = Score {
            dim: 2,
            entries: vec![(0, 0.25), (1, 1.0)],
        };
        let w_star = [0.3, -0.2];
        let mut q = Quadratic::zeros(2);
        q.accumulate(0.4, &g, 0, g.dot(&w_star));
        q.accumulate(0.6, &h, 0, h.dot(&w_star));
        assert!(q.loss(&w_star).abs() < 1e-15);
        let w = solve_exact(&q, 1.0);
        assert!((w[0] - 0.3).abs() < 1e-10 && (w[1] + 0.2).abs() < 1e-10);
    }

    #[test]
    fn single_step_spgd() {
        let g = Score {
            dim: 2,
            entries: vec![(0, 1.0)],
        };
        let r = spgd(2, [(&g, 1.0)], 1, 1.0, 1.0, 0.5).unwrap();
        let alpha = spgd_step_size(1.0, 1.0, 0.5, 1);
        let mut w = vec![2.0 * alpha, 0.0];
        project_ball(&mut w, 1.0);
        assert_eq!(r.w_bar, w);
    }

    #[test]
    fn zero_bound_returns_zero() {
        let g = Score { dim: 3, entries: vec![] };
        let r = spgd(3, [(&g, 1.0)], 1, 0.0, 1.0, 0.5).unwrap();
        assert_eq!(r.w_bar, vec![0.0; 3]);
    }

    #[test]
    fn relative_condition_identity() {
        let a = DMatrix::<f64>::identity(3, 3) * 2.0;
        let b = DMatrix::<f64>::identity(3, 3);
        assert!((relative_condition(&a, &b) - 2.0).abs() < 1e-12);
        let mut sing = DMatrix::<f64>::identity(3, 3);
        sing[(2, 2)] = 0.0;
        assert!(relative_condition(&a, &sing).is_infinite());
    }
}
