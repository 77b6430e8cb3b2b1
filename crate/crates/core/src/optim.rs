//! Quasi-Newton minimization with finite-difference gradients.

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Converged when the gradient max-norm falls below `grad_tol * (1 + |f|)`.
    pub grad_tol: f64,
    pub step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-8,
            step: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn gradient<G: Fn(&[f64]) -> f64>(f: &G, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BFGS with an Armijo backtracking line search.
pub fn bfgs<G: Fn(&[f64]) -> f64>(f: G, x0: &[f64], opts: &BfgsOptions) -> Minimum {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if n == 0 {
        return Minimum { x, value: fx, iterations: 0, converged: true };
    }
    let mut g = gradient(&f, &x, opts.step);
    let mut h = vec![vec![0.0; n]; n];
    for (i, row) in h.iter_mut().enumerate() {
        row[i] = 1.0 / (1.0 + fx.abs()).max(1.0);
    }
    let mut reset_pending = true;
    for iter in 0..opts.max_iter {
        if max_abs(&g) <= opts.grad_tol * (1.0 + fx.abs()) {
            return Minimum { x, value: fx, iterations: iter, converged: true };
        }
        let mut d: Vec<f64> = h.iter().map(|row| -dot(row, &g)).collect();
        let mut slope = dot(&d, &g);
        if slope >= 0.0 {
            // not a descent direction: fall back to steepest descent
            for (i, row) in h.iter_mut().enumerate() {
                row.iter_mut().for_each(|v| *v = 0.0);
                row[i] = 1.0 / (1.0 + fx.abs()).max(1.0);
            }
            d = g.iter().map(|v| -v / (1.0 + fx.abs()).max(1.0)).collect();
            slope = dot(&d, &g);
            reset_pending = true;
        }
        // keep trial points in a sane range of the unconstrained parameters
        let norm = max_abs(&d);
        let mut t = if norm > 2.0 { 2.0 / norm } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let ft = f(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * t * slope {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fxn)) = accepted else {
            let converged = max_abs(&g) <= 1e3 * opts.grad_tol * (1.0 + fx.abs());
            return Minimum { x, value: fx, iterations: iter, converged };
        };
        let gn = gradient(&f, &xn, opts.step);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 {
            if reset_pending {
                let scale = sy / dot(&yv, &yv);
                for (i, row) in h.iter_mut().enumerate() {
                    row.iter_mut().for_each(|v| *v = 0.0);
                    row[i] = scale;
                }
                reset_pending = false;
            }
            let hy: Vec<f64> = h.iter().map(|row| dot(row, &yv)).collect();
            let yhy = dot(&yv, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
        }
        let small_change = (fx - fxn).abs() <= 1e-15 * (1.0 + fx.abs());
        x = xn;
        fx = fxn;
        g = gn;
        if small_change && max_abs(&g) <= 1e3 * opts.grad_tol * (1.0 + fx.abs()) {
            return Minimum { x, value: fx, iterations: iter + 1, converged: true };
        }
    }
    let converged = max_abs(&g) <= opts.grad_tol * (1.0 + fx.abs());
    Minimum { x, value: fx, iterations: opts.max_iter, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |p: &[f64]| (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2);
        let m = bfgs(f, &[-1.2, 1.0], &BfgsOptions { max_iter: 500, ..Default::default() });
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn quadratic_bowl() {
        let f = |p: &[f64]| 3.0 * (p[0] - 2.0).powi(2) + (p[1] + 1.0).powi(2) + 5.0;
        let m = bfgs(f, &[0.0, 0.0], &BfgsOptions::default());
        assert!((m.x[0] - 2.0).abs() < 1e-5 && (m.x[1] + 1.0).abs() < 1e-5);
        assert!((m.value - 5.0).abs() < 1e-9);
    }
}
