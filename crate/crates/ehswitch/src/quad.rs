//! Adaptive numerical quadrature.
//!
//! A small recursive Simpson integrator with Richardson extrapolation. It is
//! enough for the densities used here: piecewise polynomials with known kink
//! locations (handled by [`integrate_with_breaks`]) and exponentially decaying
//! tails.

use thiserror::Error;

/// Quadrature failure diagnostics.
#[derive(Debug, Error)]
pub enum QuadError {
    /// The recursion hit its depth limit before reaching the tolerance.
    #[error(
        "quadrature did not converge on [{a}, {b}]: residual {residual:e} > tolerance {tol:e} at depth {depth}"
    )]
    NonConvergence {
        a: f64,
        b: f64,
        residual: f64,
        tol: f64,
        depth: usize,
    },
}

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    (fa + 4.0 * fm + fb) * h / 6.0
}

#[allow(clippy::too_many_arguments)]
fn adapt<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> Result<f64, QuadError> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(QuadError::NonConvergence {
            a,
            b,
            residual: delta.abs() / 15.0,
            tol,
            depth: 0,
        });
    }
    let l = adapt(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = adapt(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

/// Integrates `f` over `[a, b]` to absolute tolerance `abs_tol`.
///
/// `max_depth` bounds the recursion; exhausting it yields
/// [`QuadError::NonConvergence`] with the interval that failed.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_depth: usize,
) -> Result<f64, QuadError> {
    if a == b {
        return Ok(0.0);
    }
    let (fa, fb) = (f(a), f(b));
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, b - a);
    adapt(&mut f, a, b, fa, fm, fb, whole, abs_tol, max_depth)
}

/// Integrates `f` over consecutive intervals given by `points`, splitting the
/// tolerance evenly. `points` must be sorted ascending; kinks of the integrand
/// should appear as interior points so each piece is smooth.
pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
    mut f: F,
    points: &[f64],
    abs_tol: f64,
    max_depth: usize,
) -> Result<f64, QuadError> {
    if points.len() < 2 {
        return Ok(0.0);
    }
    let pieces = (points.len() - 1) as f64;
    let mut total = 0.0;
    for w in points.windows(2) {
        total += integrate(&mut f, w[0], w[1], abs_tol / pieces, max_depth)?;
    }
    Ok(total)
}
