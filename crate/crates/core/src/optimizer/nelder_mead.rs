//! Nelder-Mead simplex search with standard coefficients.

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Stop when `max f - min f` over the simplex falls below this.
    pub ftol: f64,
    /// ... and the simplex diameter falls below this.
    pub xtol: f64,
    pub max_iter: usize,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { ftol: 1e-8, xtol: 1e-8, max_iter: 5000, initial_step: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn build_simplex<F>(f: &mut F, x0: &[f64], step: f64) -> Result<Vec<(Vec<f64>, f64)>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut simplex = Vec::with_capacity(x0.len() + 1);
    simplex.push((x0.to_vec(), f(x0)?));
    for i in 0..x0.len() {
        let mut x = x0.to_vec();
        x[i] += step;
        let fx = f(&x)?;
        simplex.push((x, fx));
    }
    Ok(simplex)
}

fn diameter(simplex: &[(Vec<f64>, f64)]) -> f64 {
    let best = &simplex[0].0;
    simplex[1..]
        .iter()
        .map(|(x, _)| x.iter().zip(best).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
}

/// Minimizes `f` starting from `x0`. When the simplex collapses the search
/// is restarted once from the best vertex with a fresh simplex, and
/// convergence is declared only if that restart does not improve on it.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Result<NelderMeadResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    assert!(!x0.is_empty(), "Nelder-Mead needs at least one dimension");
    let mut iterations = 0;
    let mut start = x0.to_vec();
    let mut step = opts.initial_step;
    let mut last_best = f64::INFINITY;
    loop {
        let (x, fx, converged) = run_simplex(&mut f, &start, step, opts, &mut iterations)?;
        if !converged {
            return Ok(NelderMeadResult { x, fx, iterations, converged: false });
        }
        if last_best - fx <= opts.ftol {
            let (x, fx) = if fx <= last_best { (x, fx) } else { (start, last_best) };
            return Ok(NelderMeadResult { x, fx, iterations, converged: true });
        }
        last_best = fx;
        start = x;
        step = (step * 0.1).max(1e-3);
    }
}

fn run_simplex<F>(
    f: &mut F,
    x0: &[f64],
    step: f64,
    opts: &NelderMeadOptions,
    iterations: &mut usize,
) -> Result<(Vec<f64>, f64, bool)>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    let mut simplex = build_simplex(f, x0, step)?;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        if spread <= opts.ftol && diameter(&simplex) <= opts.xtol.max(opts.ftol) {
            let (x, fx) = simplex.swap_remove(0);
            return Ok((x, fx, true));
        }
        if *iterations >= opts.max_iter {
            let (x, fx) = simplex.swap_remove(0);
            return Ok((x, fx, false));
        }
        *iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (c - w)).collect()
        };

        let xr = along(REFLECT);
        let fr = f(&xr)?;
        if fr < simplex[0].1 {
            let xe = along(EXPAND);
            let fe = f(&xe)?;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let xc = along(REFLECT * CONTRACT);
            let fc = f(&xc)?;
            (xc, fc)
        } else {
            let xc = along(-CONTRACT);
            let fc = f(&xc)?;
            (xc, fc)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = best.iter().zip(&vertex.0).map(|(b, v)| b + SHRINK * (v - b)).collect();
            let fx = f(&x)?;
            *vertex = (x, fx);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let rosen = |x: &[f64]| Ok((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2));
        let opts = NelderMeadOptions { ftol: 1e-14, xtol: 1e-10, max_iter: 20_000, initial_step: 0.5 };
        let r = minimize(rosen, &[-1.2, 1.0], &opts).unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn one_dimensional_quadratic() {
        let r = minimize(|x: &[f64]| Ok((x[0] - 3.0).powi(2) + 2.0), &[0.0], &NelderMeadOptions::default())
            .unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 3.0).abs() < 1e-3);
        assert!((r.fx - 2.0).abs() < 1e-8);
    }

    #[test]
    fn never_worse_than_start() {
        let f = |x: &[f64]| Ok(x.iter().map(|v| v.abs().sqrt()).sum::<f64>());
        let x0 = [0.3, -0.2, 0.1];
        let r = minimize(f, &x0, &NelderMeadOptions::default()).unwrap();
        assert!(r.fx <= f(&x0).unwrap());
    }

    #[test]
    fn iteration_cap_reports_not_converged() {
        let opts = NelderMeadOptions { max_iter: 3, ..NelderMeadOptions::default() };
        let rosen = |x: &[f64]| Ok((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2));
        let r = minimize(rosen, &[-1.2, 1.0], &opts).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
    }

    #[test]
    fn errors_propagate() {
        let f = |x: &[f64]| {
            if x[0] > 0.5 {
                Err(crate::Error::NonFiniteObjective { value: f64::NAN, point: x.to_vec() })
            } else {
                Ok(-x[0])
            }
        };
        assert!(minimize(f, &[0.0], &NelderMeadOptions::default()).is_err());
    }
}
