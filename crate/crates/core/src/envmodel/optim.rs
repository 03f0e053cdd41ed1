//! Quasi-Newton minimization for the small MAP problems of the environment fits.

/// Outcome of one BFGS run.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Relative decrease below which an iteration counts as stalled.
    pub stall_rel: f64,
    /// Consecutive stalled iterations that end the run.
    pub stall_iters: usize,
    /// Gradient norm a stalled run must be under to count as converged.
    pub stall_grad_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-6, max_iter: 2000, stall_rel: 1e-13, stall_iters: 10, stall_grad_tol: 1e-3 }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`, which returns the objective and writes its gradient.
///
/// Dense inverse-Hessian BFGS with Armijo backtracking. The first step is
/// capped at unit length and the initial inverse Hessian is rescaled after
/// the first accepted step, which keeps badly scaled likelihoods from
/// overflowing before curvature information is available. Non-finite trial
/// points are treated as failed line-search steps.
///
/// Long sums of large likelihood terms can leave the gradient norm just above
/// `grad_tol` while the objective no longer moves in working precision; such a
/// run stops after `stall_iters` flat iterations and counts as converged if
/// its gradient is below `stall_grad_tol`.
pub fn bfgs(mut f: impl FnMut(&[f64], &mut [f64]) -> f64, x0: &[f64], opts: BfgsOptions) -> Minimum {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    let mut first = true;
    let mut stalled = 0;
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];
    for iter in 0..opts.max_iter {
        let gn = norm(&g);
        if !fx.is_finite() || !gn.is_finite() {
            return Minimum { x, value: fx, grad_norm: gn, iterations: iter, converged: false };
        }
        if gn <= opts.grad_tol {
            return Minimum { x, value: fx, grad_norm: gn, iterations: iter, converged: true };
        }
        for i in 0..n {
            dir[i] = -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>();
        }
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 {
            // Lost descent; fall back to steepest descent and reset curvature.
            for i in 0..n {
                dir[i] = -g[i];
                for j in 0..n {
                    h[i * n + j] = if i == j { 1.0 } else { 0.0 };
                }
            }
            slope = -gn * gn;
            first = true;
        }
        let mut step = if first { (1.0 / norm(&dir)).min(1.0) } else { 1.0 };
        let mut f_new = f64::INFINITY;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            let gn = norm(&g);
            return Minimum { x, value: fx, grad_norm: gn, iterations: iter, converged: gn <= opts.grad_tol };
        }
        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if first {
                let scale = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= scale);
                first = false;
            }
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        stalled = if fx - f_new <= opts.stall_rel * fx.abs().max(1.0) { stalled + 1 } else { 0 };
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        fx = f_new;
        if stalled >= opts.stall_iters {
            let gn = norm(&g);
            return Minimum { x, value: fx, grad_norm: gn, iterations: iter + 1, converged: gn <= opts.stall_grad_tol };
        }
    }
    let gn = norm(&g);
    Minimum { x, value: fx, grad_norm: gn, iterations: opts.max_iter, converged: gn <= opts.grad_tol }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let m = bfgs(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            &[-1.2, 1.0],
            BfgsOptions::default(),
        );
        assert!(m.converged, "{m:?}");
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn badly_scaled_quadratic() {
        let d = [1e-2, 1.0, 1e3];
        let m = bfgs(
            |x, g| {
                let mut v = 0.0;
                for i in 0..3 {
                    g[i] = d[i] * (x[i] - i as f64);
                    v += 0.5 * d[i] * (x[i] - i as f64).powi(2);
                }
                v
            },
            &[10.0, -10.0, 5.0],
            BfgsOptions::default(),
        );
        assert!(m.converged);
        for i in 0..3 {
            assert!((m.x[i] - i as f64).abs() < 1e-4);
        }
    }

    #[test]
    fn survives_overflowing_region() {
        // exp(x) - 100 x has its minimum at ln 100; large steps overflow.
        let m = bfgs(
            |x, g| {
                g[0] = x[0].exp() - 100.0;
                x[0].exp() - 100.0 * x[0]
            },
            &[0.0],
            BfgsOptions::default(),
        );
        assert!(m.converged);
        assert!((m.x[0] - 100f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn flat_objective_stops_on_stall() {
        // Gradient noise of 1e-5 never lets the strict tolerance trigger.
        let mut calls = 0u64;
        let m = bfgs(
            |x, g| {
                calls += 1;
                let noise = if calls.is_multiple_of(2) { 1e-5 } else { -1e-5 };
                g[0] = 2.0 * x[0] + noise;
                1e6 + x[0] * x[0]
            },
            &[3.0],
            BfgsOptions::default(),
        );
        assert!(m.converged, "{m:?}");
        assert!(m.iterations < 2000);
        assert!(m.x[0].abs() < 1e-3);
        let strict = BfgsOptions { stall_grad_tol: 1e-9, ..Default::default() };
        let mut calls = 0u64;
        let m = bfgs(
            |x, g| {
                calls += 1;
                g[0] = 2.0 * x[0] + if calls.is_multiple_of(2) { 1e-5 } else { -1e-5 };
                1e6 + x[0] * x[0]
            },
            &[3.0],
            strict,
        );
        assert!(!m.converged);
    }
}
