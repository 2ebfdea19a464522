//! Small numerical routines shared across the crate: tanh-sinh quadrature,
//! golden-section minimization, and monotone bisection.

/// Numerically integrates `f` over `[a, b]` with tanh-sinh (double-exponential)
/// quadrature.
///
/// The change of variables pushes the abscissas exponentially close to the
/// endpoints, so integrable endpoint singularities (e.g. beta densities with
/// shape parameters below one) converge cleanly. The integrand is never
/// evaluated exactly at `a` or `b`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let rad = 0.5 * (b - a);
    let half_pi = std::f64::consts::FRAC_PI_2;

    // t-range wide enough that the weights have decayed below any tolerance.
    let t_max = 4.0;
    // Distance from the nearer endpoint and the quadrature weight at |t|.
    // The offset form 2/(e^{2u}+1) = 1 - tanh(u) avoids the cancellation
    // that would otherwise land abscissas exactly on singular endpoints.
    let node = |t: f64| -> (f64, f64) {
        let u = half_pi * t.sinh();
        let offset = rad * 2.0 / ((2.0 * u).exp() + 1.0);
        let c = u.cosh();
        let w = half_pi * t.cosh() / (c * c) * rad;
        (offset, w)
    };
    // Sample both endpoint neighborhoods, ignoring non-finite values from
    // integrable endpoint singularities (their true contribution is below
    // any tolerance once the weight has decayed).
    let term = |t: f64| -> f64 {
        let (offset, w) = node(t);
        let mut acc = 0.0;
        let fp = f(b - offset) * w;
        if fp.is_finite() {
            acc += fp;
        }
        if t > 0.0 {
            let fm = f(a + offset) * w;
            if fm.is_finite() {
                acc += fm;
            }
        }
        acc
    };

    let mut h = 1.0;
    let mut sum = term(0.0);
    let mut k = 1;
    while (k as f64) * h <= t_max {
        sum += term(k as f64 * h);
        k += 1;
    }
    let mut result = sum * h;

    let mut small_steps = 0;
    for _ in 0..12 {
        h *= 0.5;
        // Add the new midpoints of the refined lattice.
        let mut t = h;
        while t <= t_max {
            sum += term(t);
            t += 2.0 * h;
        }
        let next = sum * h;
        let err = (next - result).abs();
        result = next;
        if err <= tol * result.abs().max(1.0) {
            small_steps += 1;
            // One lucky agreement is not convergence for kinked integrands.
            if small_steps >= 2 {
                break;
            }
        } else {
            small_steps = 0;
        }
    }
    result
}

/// Golden-section search for the minimum of `f` on `[a, b]`.
///
/// Returns `(x_min, f_min)`. Stops when the bracket is narrower than `tol`.
pub fn golden_section_minimize(
    f: impl Fn(f64) -> f64,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> (f64, f64) {
    const RESP: f64 = 2.0 - 1.618_033_988_749_895; // 2 - phi

    if b - a <= tol {
        let x = 0.5 * (a + b);
        return (x, f(x));
    }
    let mut x1 = a + RESP * (b - a);
    let mut x2 = b - RESP * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);

    while (b - a).abs() > tol {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = a + RESP * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = b - RESP * (b - a);
            f2 = f(x2);
        }
    }

    if f1 < f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Finds `x` in `[lo, hi]` with `f(x) = target` for a nondecreasing `f`,
/// by bisection to an absolute bracket width of `tol`.
pub fn bisect_nondecreasing(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
