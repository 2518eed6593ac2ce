use crate::error::Result;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineMinimum {
    pub x: f64,
    pub fx: f64,
    /// Best point of the coarse grid, before refinement.
    pub grid_x: f64,
    pub grid_fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Golden-section search on `[a, b]` until the bracket is narrower than
/// `tol`. Returns the best point evaluated and the iteration count.
pub fn golden_section<F>(f: &mut F, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> Result<(f64, f64, usize, bool)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut iters = 0;
    while (b - a).abs() > tol {
        if iters >= max_iter {
            break;
        }
        iters += 1;
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    let converged = (b - a).abs() <= tol;
    Ok(if fc < fd { (c, fc, iters, converged) } else { (d, fd, iters, converged) })
}

/// Coarse grid over `[lo, hi]` followed by golden-section refinement in the
/// bracket around the best grid point. The result is never worse than the
/// grid minimum.
pub fn grid_then_golden<F>(mut f: F, lo: f64, hi: f64, points: usize, tol: f64, max_iter: usize) -> Result<LineMinimum>
where
    F: FnMut(f64) -> Result<f64>,
{
    let points = points.max(3);
    let xs: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
    let mut best = 0;
    let mut fbest = f64::INFINITY;
    for (i, &x) in xs.iter().enumerate() {
        let fx = f(x)?;
        if fx < fbest {
            best = i;
            fbest = fx;
        }
    }
    let a = xs[best.saturating_sub(1)];
    let b = xs[(best + 1).min(points - 1)];
    let (x, fx, iterations, converged) = golden_section(&mut f, a, b, tol, max_iter)?;
    let (x, fx) = if fx <= fbest { (x, fx) } else { (xs[best], fbest) };
    Ok(LineMinimum { x, fx, grid_x: xs[best], grid_fx: fbest, iterations, converged })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_vertex() {
        let mut f = |x: f64| Ok((x - 0.37).powi(2));
        let (x, _, _, conv) = golden_section(&mut f, 0.0, 1.0, 1e-10, 500).unwrap();
        assert!(conv);
        assert!((x - 0.37).abs() < 1e-8);
    }

    #[test]
    fn refinement_never_loses_to_grid() {
        let f = |x: f64| Ok((10.0 * x).sin() + x);
        let r = grid_then_golden(f, 0.0, 3.0, 50, 1e-10, 500).unwrap();
        assert!(r.fx <= r.grid_fx);
    }

    #[test]
    fn boundary_minimum() {
        let r = grid_then_golden(|x: f64| Ok(x), 0.1, 0.9, 200, 1e-8, 500).unwrap();
        assert!((r.x - 0.1).abs() < 1e-7);
    }
}
