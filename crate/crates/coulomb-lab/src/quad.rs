//! One-dimensional quadrature and radial averaging helpers.

use quadrature::double_exponential;

/// Tanh-sinh integral of `f` over `[a, b]` to the given absolute tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    double_exponential::integrate(f, a, b, tol).integral
}

/// Integral over `[a, b]` split at every breakpoint strictly inside the range.
pub fn integrate_split<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut pts: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
    pts.push(a);
    let mut inner: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&x| x > a && x < b && (x - a) > 1e-14 * b.abs().max(1.0) && (b - x) > 1e-14 * b.abs().max(1.0))
        .collect();
    inner.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
    inner.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
    pts.extend(inner);
    pts.push(b);
    let mut total = 0.0;
    for w in pts.windows(2) {
        total += integrate(&f, w[0], w[1], tol);
    }
    total
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|t| half * t).collect(),
    )
}

/// Mean of the radial function `f(|z|)` over the sphere `|z - p| = t`, where `|p| = s`.
///
/// `kinks` lists radii at which `f` is not smooth; the integration is split there.
pub fn sphere_mean_radial<F: Fn(f64) -> f64>(f: &F, s: f64, t: f64, d: usize, kinks: &[f64], tol: f64) -> f64 {
    let lo = (s - t).abs();
    let hi = s + t;
    if s.min(t) <= 1e-9 * s.max(t) || hi - lo <= 1e-14 {
        return f(s.max(t));
    }
    match d {
        3 => {
            let g = |r: f64| f(r) * r;
            integrate_split(g, lo, hi, kinks, tol * 2.0 * s * t) / (2.0 * s * t)
        }
        2 => {
            let angle_breaks: Vec<f64> = kinks
                .iter()
                .filter(|&&k| k > lo && k < hi)
                .map(|&k| ((s * s + t * t - k * k) / (2.0 * s * t)).clamp(-1.0, 1.0).acos())
                .collect();
            let g = |theta: f64| {
                let r2 = s * s + t * t - 2.0 * s * t * theta.cos();
                f(r2.max(0.0).sqrt())
            };
            integrate_split(g, 0.0, std::f64::consts::PI, &angle_breaks, tol * std::f64::consts::PI)
                / std::f64::consts::PI
        }
        _ => panic!("sphere means implemented for d = 2, 3"),
    }
}

/// Average of the radial function `f(|z|)` over the ball `B(p, radius)`, `|p| = s`.
pub fn ball_average_radial<F: Fn(f64) -> f64>(f: &F, s: f64, radius: f64, d: usize, kinks: &[f64], tol: f64) -> f64 {
    let mut breaks = Vec::with_capacity(2 * kinks.len());
    for &k in kinks {
        breaks.push((s - k).abs());
        breaks.push(s + k);
    }
    let df = d as f64;
    let outer = |t: f64| df * t.powi(d as i32 - 1) * sphere_mean_radial(f, s, t, d, kinks, tol);
    integrate_split(outer, 0.0, radius, &breaks, tol * radius.powi(d as i32)) / radius.powi(d as i32)
}
