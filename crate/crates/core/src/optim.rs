//! Nelder–Mead simplex minimization with restarts.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimplexSettings {
    pub max_iterations: usize,
    pub max_evaluations: usize,
    /// Simplex diameter (max-norm) below which the search may stop.
    pub x_tol: f64,
    /// Spread of objective values over the simplex below which it may stop.
    pub f_tol: f64,
    /// Edge length of the initial simplex in each coordinate.
    pub initial_step: f64,
    /// Fresh simplices built around the best point after convergence.
    pub restarts: usize,
}

impl Default for SimplexSettings {
    fn default() -> Self {
        SimplexSettings {
            max_iterations: 2000,
            max_evaluations: 4000,
            x_tol: 1e-4,
            f_tol: 1e-6,
            initial_step: 0.1,
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub x: Vec<f64>,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    /// Best point after each iteration.
    pub trace: Vec<TracePoint>,
}

struct Counter<F> {
    f: F,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counter<F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let v = (self.f)(x);
        // Non-finite values rank worst so the simplex moves away from them.
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Minimizes `f` from `x0`. Non-finite objective values are treated as `+∞`.
pub fn nelder_mead(f: impl FnMut(&[f64]) -> f64, x0: &[f64], settings: &SimplexSettings) -> Minimum {
    let mut counter = Counter { f, evaluations: 0 };
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut best_x = x0.to_vec();
    let mut best_f = counter.eval(x0);
    let mut converged = false;
    for round in 0..=settings.restarts {
        let (x, fx, ok) = run_simplex(&mut counter, &best_x, best_f, settings, &mut iterations, &mut trace);
        let improvement = best_f - fx;
        if fx <= best_f {
            best_x = x;
            best_f = fx;
        }
        converged = ok;
        if !ok || (round > 0 && improvement.abs() <= settings.f_tol) {
            break;
        }
    }
    Minimum {
        x: best_x,
        f: best_f,
        converged,
        iterations,
        evaluations: counter.evaluations,
        trace,
    }
}

fn run_simplex<F: FnMut(&[f64]) -> f64>(
    counter: &mut Counter<F>,
    x0: &[f64],
    f0: f64,
    s: &SimplexSettings,
    iterations: &mut usize,
    trace: &mut Vec<TracePoint>,
) -> (Vec<f64>, f64, bool) {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += s.initial_step;
        let fx = counter.eval(&x);
        simplex.push((x, fx));
    }
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if best.is_finite() && (worst - best).abs() <= s.f_tol && diameter <= s.x_tol {
            return (simplex[0].0.clone(), best, true);
        }
        if *iterations >= s.max_iterations || counter.evaluations >= s.max_evaluations {
            return (simplex[0].0.clone(), best, false);
        }
        *iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let along =
            |t: f64, from: &[f64]| -> Vec<f64> { centroid.iter().zip(from).map(|(c, w)| c + t * (c - w)).collect() };
        let worst_x = simplex[n].0.clone();
        let xr = along(alpha, &worst_x);
        let fr = counter.eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(gamma, &worst_x);
            let fe = counter.eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(alpha * rho, &worst_x);
                let fc = counter.eval(&xc);
                (xc, fc)
            } else {
                let xc = along(-rho, &worst_x);
                let fc = counter.eval(&xc);
                (xc, fc)
            };
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = x_best.iter().zip(&item.0).map(|(b, w)| b + sigma * (w - b)).collect();
                    let fx = counter.eval(&x);
                    *item = (x, fx);
                }
            }
        }
        let b = simplex
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty simplex");
        trace.push(TracePoint {
            iteration: *iterations,
            x: b.0.clone(),
            f: b.1,
        });
    }
}
