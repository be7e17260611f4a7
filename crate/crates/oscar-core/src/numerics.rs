//! Small numerical helpers shared by the analysis and averaging modules.

/// Vertex of the parabola through (x0,y0), (x1,y1), (x2,y2).
/// Returns `None` when the points are collinear or not concave.
pub(crate) fn parabolic_vertex(
    x: [f64; 3],
    y: [f64; 3],
) -> Option<(f64, f64)> {
    // Shift to x1 for conditioning.
    let dl = x[0] - x[1];
    let dr = x[2] - x[1];
    let sl = (y[0] - y[1]) / dl;
    let sr = (y[2] - y[1]) / dr;
    let curv = (sr - sl) / (dr - dl) * 2.0; // second derivative
    if !(curv < 0.0) {
        return None;
    }
    // y'(x1) = (sl*dr - sr*dl) / (dr - dl)
    let slope = (sl * dr - sr * dl) / (dr - dl);
    let dx = -slope / curv;
    Some((x[1] + dx, y[1] + slope * dx + 0.5 * curv * dx * dx))
}

/// Bisection on a bracketing interval. `f(lo)` and `f(hi)` must have
/// opposite signs. Deterministic, tolerance on the interval width.
pub(crate) fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    debug_assert!(flo * f(hi) <= 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol {
            return mid;
        }
        let fmid = f(mid);
        if fmid == 0.0 {
            return mid;
        }
        if (fmid > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertex_of_exact_parabola() {
        // y = 3 - 2 (x - 0.7)^2
        let f = |x: f64| 3.0 - 2.0 * (x - 0.7) * (x - 0.7);
        let x = [0.1, 0.4, 1.1];
        let (xv, yv) = parabolic_vertex(x, x.map(f)).unwrap();
        assert!((xv - 0.7).abs() < 1e-12);
        assert!((yv - 3.0).abs() < 1e-12);
    }

    #[test]
    fn vertex_rejects_convex_data() {
        let x = [0.0, 1.0, 2.0];
        assert!(parabolic_vertex(x, [1.0, 0.0, 1.0]).is_none());
        assert!(parabolic_vertex(x, [0.0, 1.0, 2.0]).is_none());
    }

    #[test]
    fn bisect_finds_root() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14);
        assert!((r - std::f64::consts::SQRT_2).abs() < 1e-13);
    }
}
