//! Quadrature utilities: adaptive Simpson integration, a tangent substitution
//! for kernels peaked on the smoothing scale, and fixed Gauss-Legendre panels
//! for smooth cumulative integrals.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("adaptive refinement stalled at depth {depth} (interval [{a}, {b}], local error {err:e})")]
    RefinementStalled { a: f64, b: f64, depth: usize, err: f64 },
    #[error("invalid integration bounds [{0}, {1}]")]
    InvalidBounds(f64, f64),
}

const MAX_DEPTH: usize = 48;

/// Adaptive Simpson integration of `f` over `[a, b]`.
///
/// The tolerance is `abs_tol + rel_tol * |integral|`, applied per interval
/// with the usual bisection budget split.
pub fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64, QuadError> {
    if !a.is_finite() || !b.is_finite() {
        return Err(QuadError::InvalidBounds(a, b));
    }
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    // First pass to get a magnitude scale for the relative tolerance.
    let scale = whole.abs().max(abs_tol / rel_tol.max(f64::EPSILON));
    let tol = (rel_tol * scale).max(abs_tol);
    // Local errors below the rounding noise of the full integral cannot be
    // refined away; the halved per-interval budget must not chase them.
    let noise = 8.0 * f64::EPSILON * scale;
    simpson_recurse(f, a, b, fa, fm, fb, whole, tol, tol, noise, 0)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    tol0: f64,
    noise: f64,
    depth: usize,
) -> Result<f64, QuadError> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let err = left + right - whole;
    if err.abs() <= (15.0 * tol).max(noise) || (b - a) < f64::EPSILON * (a.abs() + b.abs()) {
        return Ok(left + right + err / 15.0);
    }
    if depth >= MAX_DEPTH {
        // Endpoint kinks stop the local estimate from reaching the halved
        // budget, but an error within the original tolerance is acceptable.
        if err.abs() <= tol0 {
            return Ok(left + right + err / 15.0);
        }
        return Err(QuadError::RefinementStalled { a, b, depth, err: err.abs() });
    }
    let l = simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, tol0, noise, depth + 1)?;
    let r = simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, tol0, noise, depth + 1)?;
    Ok(l + r)
}

/// Integrate `f` over `[a, b]` when the integrand has structure on the scale
/// `eps` near the origin, via the substitution `tau = eps * tan(u)`.
///
/// The substitution spends nodes where the kernel peaks and compresses the
/// power-law tail, so plateaus of width `eps` inside spans of `1000 eps`
/// resolve without a uniform fine grid.
pub fn peaked<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    eps: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64, QuadError> {
    if !(eps > 0.0) {
        return Err(QuadError::InvalidBounds(a, b));
    }
    if a == b {
        return Ok(0.0);
    }
    let ua = (a / eps).atan();
    let ub = (b / eps).atan();
    let g = |u: f64| {
        let t = u.tan();
        f(eps * t) * eps * (1.0 + t * t)
    };
    adaptive(&g, ua, ub, rel_tol, abs_tol)
}

// 10-point Gauss-Legendre nodes/weights on [-1, 1].
const GL10_NODES: [f64; 10] = [
    -0.973906528517172,
    -0.865063366688985,
    -0.679409568299024,
    -0.433395394129247,
    -0.148874338981631,
    0.148874338981631,
    0.433395394129247,
    0.679409568299024,
    0.865063366688985,
    0.973906528517172,
];
const GL10_WEIGHTS: [f64; 10] = [
    0.066671344308688,
    0.149451349150581,
    0.219086362515982,
    0.269266719309996,
    0.295524224714753,
    0.295524224714753,
    0.269266719309996,
    0.219086362515982,
    0.149451349150581,
    0.066671344308688,
];

/// Single 10-point Gauss-Legendre panel over `[a, b]`.
pub fn gauss10<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in GL10_NODES.iter().zip(GL10_WEIGHTS.iter()) {
        acc += w * f(mid + half * x);
    }
    half * acc
}
