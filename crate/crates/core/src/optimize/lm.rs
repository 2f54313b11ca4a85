use super::{nelder_mead, Bounds, LeastSquaresProblem, Minimum, OptimizerConfig, Termination};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, spd_inverse};
use crate::scalar::{lit, Real};

const MAX_DAMPING: f64 = 1e20;

struct Evaluator<'a, T: Real, P: LeastSquaresProblem<T>> {
    problem: &'a P,
    bounds: Bounds<T>,
    m: usize,
    n: usize,
    evaluations: usize,
}

impl<T: Real, P: LeastSquaresProblem<T>> Evaluator<'_, T, P> {
    fn residuals(&mut self, x: &[T], out: &mut [T]) -> Option<T> {
        self.evaluations += 1;
        self.problem.residuals(x, out);
        let cost = out.iter().map(|&r| r * r).sum::<T>() / lit::<T>(2.0);
        cost.is_finite().then_some(cost)
    }

    fn cost(&mut self, x: &[T]) -> T {
        let mut r = vec![T::zero(); self.m];
        self.residuals(x, &mut r).unwrap_or(T::infinity())
    }

    /// Row-major m × n Jacobian at `x` with residuals `r0`.
    fn jacobian(&mut self, x: &[T], jac: &mut [T]) -> bool {
        if self.problem.jacobian(x, jac) {
            return jac.iter().all(|v| v.is_finite());
        }
        let (m, n) = (self.m, self.n);
        let step_scale = T::epsilon().cbrt();
        let mut xp = x.to_vec();
        let mut rp = vec![T::zero(); m];
        let mut rm = vec![T::zero(); m];
        for j in 0..n {
            let h = step_scale * x[j].abs().max(T::one());
            let (lo, hi) = (self.bounds.lower[j], self.bounds.upper[j]);
            let up = (x[j] + h).min(hi);
            let down = (x[j] - h).max(lo);
            xp[j] = up;
            let okp = self.residuals(&xp, &mut rp).is_some();
            xp[j] = down;
            let okm = self.residuals(&xp, &mut rm).is_some();
            xp[j] = x[j];
            let span = up - down;
            if !(okp && okm) || span <= T::zero() {
                return false;
            }
            for i in 0..m {
                jac[i * n + j] = (rp[i] - rm[i]) / span;
            }
        }
        true
    }
}

fn normal_equations<T: Real>(jac: &[T], r: &[T], m: usize, n: usize) -> (Vec<T>, Vec<T>) {
    let mut a = vec![T::zero(); n * n];
    let mut g = vec![T::zero(); n];
    for i in 0..m {
        let row = &jac[i * n..(i + 1) * n];
        for j in 0..n {
            g[j] += row[j] * r[i];
            for k in 0..=j {
                a[j * n + k] += row[j] * row[k];
            }
        }
    }
    for j in 0..n {
        for k in 0..j {
            a[k * n + j] = a[j * n + k];
        }
    }
    (a, g)
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Minimizes ½‖r(p)‖² subject to `bounds`, starting from `start`.
///
/// The cost never increases across accepted steps. Non-finite residuals at a
/// trial point stop the iteration with [`Termination::NonFinite`] and the last
/// accepted parameters.
pub fn least_squares_minimize<T: Real, P: LeastSquaresProblem<T>>(
    problem: &P,
    start: &[T],
    bounds: Option<&Bounds<T>>,
    config: &OptimizerConfig<T>,
) -> Result<Minimum<T>> {
    config.validate()?;
    let n = problem.n_params();
    let m = problem.n_residuals();
    if start.len() != n {
        return Err(Error::input(format!(
            "start vector has {} entries, problem has {n} parameters",
            start.len()
        )));
    }
    if m == 0 || n == 0 {
        return Err(Error::input("empty least-squares problem"));
    }
    let bounds = match bounds {
        Some(b) if b.len() != n => {
            return Err(Error::input("bounds length does not match parameter count"))
        }
        Some(b) => b.clone(),
        None => Bounds::unbounded(n),
    };
    let mut ev = Evaluator {
        problem,
        bounds,
        m,
        n,
        evaluations: 0,
    };

    let mut x = start.to_vec();
    ev.bounds.project(&mut x);
    let mut r = vec![T::zero(); m];
    let mut cost = ev
        .residuals(&x, &mut r)
        .ok_or_else(|| Error::input("residuals are not finite at the starting point"))?;

    let mut history = vec![cost];
    let mut jac = vec![T::zero(); m * n];
    let mut lambda = config.initial_damping;
    let mut diag = vec![T::zero(); n];
    let mut restarted = false;
    let mut iterations = 0;
    let mut r_trial = vec![T::zero(); m];

    let termination = 'outer: loop {
        if cost == T::zero() {
            break Termination::ZeroResidual;
        }
        if iterations >= config.max_iterations {
            break Termination::IterationCap;
        }
        if !ev.jacobian(&x, &mut jac) {
            break Termination::NonFinite;
        }
        let (a, g) = normal_equations(&jac, &r, m, n);
        for j in 0..n {
            diag[j] = diag[j].max(a[j * n + j]);
        }

        // Largest cosine between the residual vector and a Jacobian column.
        let rnorm = (lit::<T>(2.0) * cost).sqrt();
        let gcos = (0..n)
            .filter(|&j| a[j * n + j] > T::zero())
            .map(|j| g[j].abs() / (a[j * n + j].sqrt() * rnorm))
            .fold(T::zero(), T::max);
        if gcos <= config.g_tol {
            break Termination::GradientTolerance;
        }
        iterations += 1;

        loop {
            let mut damped = a.clone();
            for j in 0..n {
                let d = if diag[j] > T::zero() {
                    diag[j]
                } else {
                    T::one()
                };
                damped[j * n + j] += lambda * d;
            }
            let neg_g: Vec<T> = g.iter().map(|&v| -v).collect();
            let step = match cholesky_solve(&damped, n, &neg_g) {
                Some(s) => s,
                None => {
                    lambda *= lit(10.0);
                    if lambda > lit(MAX_DAMPING) {
                        break;
                    }
                    continue;
                }
            };
            let mut trial: Vec<T> = x.iter().zip(&step).map(|(&a, &b)| a + b).collect();
            ev.bounds.project(&mut trial);
            let actual_step: Vec<T> = trial.iter().zip(&x).map(|(&a, &b)| a - b).collect();
            let step_norm = norm(&actual_step);
            let x_norm = norm(&x);

            let Some(trial_cost) = ev.residuals(&trial, &mut r_trial) else {
                break 'outer Termination::NonFinite;
            };

            // Predicted reduction of the local quadratic model.
            let mut ja_step = vec![T::zero(); m];
            for i in 0..m {
                ja_step[i] = (0..n).map(|j| jac[i * n + j] * actual_step[j]).sum();
            }
            let predicted = -(0..n).map(|j| g[j] * actual_step[j]).sum::<T>()
                - ja_step.iter().map(|&v| v * v).sum::<T>() / lit::<T>(2.0);

            if trial_cost < cost {
                let reduction = cost - trial_cost;
                x = trial;
                std::mem::swap(&mut r, &mut r_trial);
                cost = trial_cost;
                history.push(cost);
                lambda = (lambda / lit(10.0)).max(T::epsilon());
                if cost == T::zero() {
                    break 'outer Termination::ZeroResidual;
                }
                if reduction <= config.f_tol * (cost + reduction)
                    && predicted <= config.f_tol * (cost + reduction)
                {
                    break 'outer Termination::ResidualTolerance;
                }
                if step_norm <= config.x_tol * (x_norm + config.x_tol) {
                    break 'outer Termination::ParameterTolerance;
                }
                break;
            }

            // Rejected: the model cannot promise a meaningful decrease, or the
            // step is already negligible.
            if predicted <= config.f_tol * cost
                || step_norm <= config.x_tol * (x_norm + config.x_tol)
            {
                break 'outer Termination::ParameterTolerance;
            }
            lambda *= lit(10.0);
            if lambda > lit(MAX_DAMPING) {
                break;
            }
        }

        if lambda > lit(MAX_DAMPING) {
            if config.restart_on_stall && !restarted {
                restarted = true;
                let bounds = ev.bounds.clone();
                let simplex = nelder_mead(|p: &[T]| ev.cost(p), &x, &bounds, 200 * n, config.f_tol);
                if simplex.1 < cost {
                    x = simplex.0;
                    cost = ev
                        .residuals(&x, &mut r)
                        .ok_or_else(|| Error::input("non-finite residuals after restart"))?;
                    history.push(cost);
                }
                lambda = config.initial_damping;
                diag.iter_mut().for_each(|d| *d = T::zero());
                continue;
            }
            break Termination::Stall;
        }
    };

    let inverse_curvature = if ev.jacobian(&x, &mut jac) {
        let (a, _) = normal_equations(&jac, &r, m, n);
        spd_inverse(&a, n)
    } else {
        None
    };

    Ok(Minimum {
        params: x,
        cost,
        iterations,
        evaluations: ev.evaluations,
        termination,
        restarted,
        cost_history: history,
        inverse_curvature,
    })
}

#[cfg(test)]
mod tests {
    use super::super::FnProblem;
    use super::*;

    fn rosenbrock(p: &[f64], r: &mut [f64]) {
        r[0] = 10.0 * (p[1] - p[0] * p[0]);
        r[1] = 1.0 - p[0];
    }

    #[test]
    fn quadratic_bowl() {
        let prob = FnProblem::new(2, 2, |p: &[f64], r: &mut [f64]| {
            r[0] = 3.0 * (p[0] - 1.5);
            r[1] = 0.5 * (p[1] + 2.0);
        });
        let min = least_squares_minimize(&prob, &[10.0, 10.0], None, &Default::default()).unwrap();
        assert!(min.converged(), "{:?}", min.termination);
        assert!((min.params[0] - 1.5).abs() < 1e-10);
        assert!((min.params[1] + 2.0).abs() < 1e-10);
    }

    #[test]
    fn rosenbrock_reaches_minimum() {
        let prob = FnProblem::new(2, 2, rosenbrock);
        let cfg = OptimizerConfig::default();
        let min = least_squares_minimize(&prob, &[-1.2, 1.0], None, &cfg).unwrap();
        assert!(min.cost < 1e-10, "{}", min.cost);
        assert!(min.iterations <= cfg.max_iterations);
        assert!((min.params[0] - 1.0).abs() < 1e-6 && (min.params[1] - 1.0).abs() < 1e-6);
        assert!(min.cost_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn start_at_optimum() {
        let prob = FnProblem::new(2, 2, rosenbrock);
        let min = least_squares_minimize(&prob, &[1.0, 1.0], None, &Default::default()).unwrap();
        assert!(min.iterations <= 1);
        assert!(min.converged());
        assert_eq!(min.params, vec![1.0, 1.0]);
    }

    #[test]
    fn respects_bounds() {
        let prob = FnProblem::new(1, 1, |p: &[f64], r: &mut [f64]| r[0] = p[0] - 5.0);
        let b = Bounds::new(vec![0.0], vec![2.0]).unwrap();
        let min = least_squares_minimize(&prob, &[1.0], Some(&b), &Default::default()).unwrap();
        assert!((min.params[0] - 2.0).abs() < 1e-12);
        assert!(b.contains(&min.params));
    }

    #[test]
    fn non_finite_mid_run_keeps_last_good_state() {
        // finite only for p < 1, minimum at p = 3 lies in the non-finite region
        let prob = FnProblem::new(1, 1, |p: &[f64], r: &mut [f64]| {
            r[0] = if p[0] < 1.0 { p[0] - 3.0 } else { f64::NAN };
        });
        let min = least_squares_minimize(&prob, &[0.0], None, &Default::default()).unwrap();
        assert_eq!(min.termination, Termination::NonFinite);
        assert!(min.params[0] < 1.0 && min.cost.is_finite());
    }

    #[test]
    fn rejects_non_finite_start() {
        let prob = FnProblem::new(1, 1, |_: &[f64], r: &mut [f64]| r[0] = f64::NAN);
        assert!(least_squares_minimize(&prob, &[0.0], None, &Default::default()).is_err());
    }

    #[test]
    fn iteration_cap_is_reported() {
        let prob = FnProblem::new(2, 2, rosenbrock);
        let cfg = OptimizerConfig {
            max_iterations: 2,
            ..Default::default()
        };
        let min = least_squares_minimize(&prob, &[-1.2, 1.0], None, &cfg).unwrap();
        assert_eq!(min.termination, Termination::IterationCap);
        assert!(!min.converged());
    }

    #[test]
    fn deterministic() {
        let prob = FnProblem::new(2, 2, rosenbrock);
        let a = least_squares_minimize(&prob, &[-1.2, 1.0], None, &Default::default()).unwrap();
        let b = least_squares_minimize(&prob, &[-1.2, 1.0], None, &Default::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uncertainties_of_linear_fit() {
        // y = 2x + 1 with alternating ±0.1 noise
        let xs: Vec<f64> = (0..20).map(|i| i as f64 / 4.0).collect();
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| 2.0 * x + 1.0 + if i % 2 == 0 { 0.1 } else { -0.1 })
            .collect();
        let prob = FnProblem::new(2, xs.len(), |p: &[f64], r: &mut [f64]| {
            for i in 0..r.len() {
                r[i] = p[0] * xs[i] + p[1] - ys[i];
            }
        });
        let min = least_squares_minimize(&prob, &[0.0, 0.0], None, &Default::default()).unwrap();
        let s = min.uncertainties(xs.len()).unwrap();
        assert!(s[0] > 0.0 && s[0] < 0.05 && s[1] > 0.0 && s[1] < 0.2);
    }
}
