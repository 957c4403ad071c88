//! Shared numerical machinery: adaptive quadrature, polynomial roots,
//! characteristic polynomials, 1D optimization, deterministic hashing.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("quadrature did not converge: best error {best:.3e} > tolerance {tol:.3e} after {evals} evaluations")]
    QuadratureNonConvergence { best: f64, tol: f64, evals: usize },
    #[error("polynomial root finder did not converge after {0} iterations")]
    RootsNonConvergence(usize),
    #[error("no local maximum above {floor:.3e} found in [{lo}, {hi}]")]
    NoMaximum { lo: f64, hi: f64, floor: f64 },
}

// ---------------------------------------------------------------------------
// Gauss-Kronrod 15-point rule (G7, K15) on [-1, 1].
// Abscissae/weights are the standard QUADPACK values.
// ---------------------------------------------------------------------------

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One K15 application on [a, b]: returns (integral, error estimate).
fn kronrod15<F: FnMut(f64) -> C64>(f: &mut F, a: f64, b: f64) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut ik = C64::new(0.0, 0.0);
    let mut ig = C64::new(0.0, 0.0);
    for (j, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate() {
        if x == 0.0 {
            let v = f(c);
            ik += wk * v;
            ig += WG[3] * v;
        } else {
            let v1 = f(c - h * x);
            let v2 = f(c + h * x);
            ik += wk * (v1 + v2);
            // odd j are the Gauss points of the embedded G7 rule
            if j % 2 == 1 {
                ig += WG[j / 2] * (v1 + v2);
            }
        }
    }
    ik *= h;
    ig *= h;
    ((ik), (ik - ig).norm())
}

#[derive(Debug, Clone, Copy)]
pub struct QuadTol {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for QuadTol {
    fn default() -> Self {
        QuadTol { abs: 1e-10, rel: 1e-8, max_intervals: 4000 }
    }
}

/// Globally adaptive Gauss-Kronrod integration of a complex-valued integrand.
/// `breakpoints` seeds the initial subdivision (for known near-singular spots).
pub fn integrate_adaptive<F: FnMut(f64) -> C64>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    tol: QuadTol,
) -> Result<(C64, f64), NumericsError> {
    let mut edges: Vec<f64> = vec![a, b];
    for &p in breakpoints {
        if p > a && p < b {
            edges.push(p);
        }
    }
    edges.sort_by(|x, y| x.partial_cmp(y).unwrap());
    edges.dedup();

    // (neg error, lo, hi, value, err) ordered worst-first via simple Vec max scan
    let mut intervals: Vec<(f64, f64, C64, f64)> = Vec::new();
    let mut total = C64::new(0.0, 0.0);
    let mut toterr = 0.0;
    let mut evals = 0usize;
    for w in edges.windows(2) {
        let (v, e) = kronrod15(&mut f, w[0], w[1]);
        evals += 15;
        total += v;
        toterr += e;
        intervals.push((w[0], w[1], v, e));
    }

    while toterr > tol.abs.max(tol.rel * total.norm()) {
        if intervals.len() >= tol.max_intervals {
            return Err(NumericsError::QuadratureNonConvergence {
                best: toterr,
                tol: tol.abs.max(tol.rel * total.norm()),
                evals,
            });
        }
        // split the interval with the largest error
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap())
            .unwrap();
        let (lo, hi, v, e) = intervals.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // cannot subdivide further at f64 resolution; accept as converged spot
            intervals.push((lo, hi, v, 0.0));
            toterr -= e;
            continue;
        }
        let (v1, e1) = kronrod15(&mut f, lo, mid);
        let (v2, e2) = kronrod15(&mut f, mid, hi);
        evals += 30;
        total += v1 + v2 - v;
        toterr += e1 + e2 - e;
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
    Ok((total, toterr))
}

/// One K15 application of a matrix-valued integrand on [a, b].
fn kronrod15_mat<F: FnMut(f64) -> DMatrix<C64>>(
    f: &mut F,
    a: f64,
    b: f64,
) -> (DMatrix<C64>, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let probe = f(c);
    let (rows, cols) = probe.shape();
    let mut ik = probe.clone() * C64::new(WGK[7], 0.0);
    let mut ig = probe * C64::new(WG[3], 0.0);
    for (j, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate().take(7) {
        let v1 = f(c - h * x);
        let v2 = f(c + h * x);
        let sum = v1 + v2;
        ik += &sum * C64::new(wk, 0.0);
        if j % 2 == 1 {
            ig += &sum * C64::new(WG[j / 2], 0.0);
        }
    }
    ik *= C64::new(h, 0.0);
    ig *= C64::new(h, 0.0);
    let mut err = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            err += (ik[(i, j)] - ig[(i, j)]).norm_sqr();
        }
    }
    (ik, err.sqrt())
}

/// Globally adaptive matrix-valued integration over the real line through the
/// substitution w = center + scale * tan(theta).
pub fn integrate_mat_real_line<F: FnMut(f64) -> DMatrix<C64>>(
    mut f: F,
    center: f64,
    scale: f64,
    breakpoints: &[f64],
    tol: QuadTol,
) -> Result<(DMatrix<C64>, f64), NumericsError> {
    use std::f64::consts::FRAC_PI_2;
    let theta_of = |w: f64| ((w - center) / scale).atan();
    let mut g = |theta: f64| {
        let t = theta.tan();
        let w = center + scale * t;
        let jac = scale * (1.0 + t * t);
        f(w) * C64::new(jac, 0.0)
    };
    let eps = 1e-12;
    let (a, b) = (-FRAC_PI_2 + eps, FRAC_PI_2 - eps);
    let mut edges: Vec<f64> = vec![a, b];
    for &p in breakpoints {
        let th = theta_of(p);
        if th > a && th < b {
            edges.push(th);
        }
    }
    edges.sort_by(|x, y| x.partial_cmp(y).unwrap());
    edges.dedup();

    let mut intervals: Vec<(f64, f64, DMatrix<C64>, f64)> = Vec::new();
    let mut toterr = 0.0;
    for w in edges.windows(2) {
        let (v, e) = kronrod15_mat(&mut g, w[0], w[1]);
        toterr += e;
        intervals.push((w[0], w[1], v, e));
    }
    let total_norm = |ints: &Vec<(f64, f64, DMatrix<C64>, f64)>| -> f64 {
        let mut acc = 0.0f64;
        if let Some(first) = ints.first() {
            let mut sum = DMatrix::<C64>::zeros(first.2.nrows(), first.2.ncols());
            for it in ints {
                sum += &it.2;
            }
            acc = sum.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        }
        acc
    };
    loop {
        let target = tol.abs.max(tol.rel * total_norm(&intervals));
        if toterr <= target {
            break;
        }
        if intervals.len() >= tol.max_intervals {
            return Err(NumericsError::QuadratureNonConvergence {
                best: toterr,
                tol: target,
                evals: intervals.len() * 15,
            });
        }
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap())
            .unwrap();
        let (lo, hi, v, e) = intervals.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            intervals.push((lo, hi, v, 0.0));
            toterr -= e;
            continue;
        }
        let (v1, e1) = kronrod15_mat(&mut g, lo, mid);
        let (v2, e2) = kronrod15_mat(&mut g, mid, hi);
        toterr += e1 + e2 - e;
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
    let first = &intervals[0];
    let mut sum = DMatrix::<C64>::zeros(first.2.nrows(), first.2.ncols());
    for it in &intervals {
        sum += &it.2;
    }
    Ok((sum, toterr))
}

/// Neville extrapolation of matrix samples f(eps_j) to eps = 0.
pub fn neville_to_zero(samples: &[(f64, DMatrix<C64>)]) -> DMatrix<C64> {
    let n = samples.len();
    let mut table: Vec<DMatrix<C64>> = samples.iter().map(|s| s.1.clone()).collect();
    let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    for level in 1..n {
        for i in 0..(n - level) {
            let xi = xs[i];
            let xj = xs[i + level];
            let num = (table[i].clone() * C64::new(-xj, 0.0))
                + (table[i + 1].clone() * C64::new(xi, 0.0));
            table[i] = num * C64::new(1.0 / (xi - xj), 0.0);
        }
    }
    table[0].clone()
}

/// Real-valued adaptive quadrature (wrapper over the complex rule).
pub fn integrate_adaptive_real<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    tol: QuadTol,
) -> Result<(f64, f64), NumericsError> {
    let (v, e) = integrate_adaptive(|x| C64::new(f(x), 0.0), a, b, breakpoints, tol)?;
    Ok((v.re, e))
}

/// Integral over the whole real line through the substitution
/// w = center + scale * tan(theta). Breakpoints are given in w-space.
pub fn integrate_real_line<F: FnMut(f64) -> C64>(
    mut f: F,
    center: f64,
    scale: f64,
    breakpoints: &[f64],
    tol: QuadTol,
) -> Result<(C64, f64), NumericsError> {
    use std::f64::consts::FRAC_PI_2;
    let theta_of = |w: f64| ((w - center) / scale).atan();
    let bp: Vec<f64> = breakpoints.iter().map(|&w| theta_of(w)).collect();
    let g = |theta: f64| {
        let t = theta.tan();
        let w = center + scale * t;
        let jac = scale * (1.0 + t * t);
        f(w) * jac
    };
    let eps = 1e-12;
    integrate_adaptive(g, -FRAC_PI_2 + eps, FRAC_PI_2 - eps, &bp, tol)
}

// ---------------------------------------------------------------------------
// Polynomial utilities. Polynomials are stored as coefficient slices
// c[0] + c[1] x + ... + c[n] x^n.
// ---------------------------------------------------------------------------

pub fn poly_eval(coeffs: &[C64], x: C64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

pub fn poly_derivative(coeffs: &[C64]) -> Vec<C64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &c)| c * (i as f64))
        .collect()
}

/// All complex roots of a polynomial by the Aberth-Ehrlich simultaneous
/// iteration with a Newton polish. Robust for the small degrees used here.
pub fn poly_roots(coeffs: &[C64]) -> Result<Vec<C64>, NumericsError> {
    // strip trailing (numerically) zero leading coefficients
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut cs: Vec<C64> = coeffs.to_vec();
    while cs.len() > 1 && cs.last().unwrap().norm() < 1e-14 * scale {
        cs.pop();
    }
    let n = cs.len() - 1;
    if n == 0 {
        return Ok(vec![]);
    }
    let lead = cs[n];
    let monic: Vec<C64> = cs.iter().map(|&c| c / lead).collect();
    // Cauchy bound for the root radius
    let bound = 1.0
        + monic[..n]
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
    // deterministic start: points on a circle, irrational angle offset
    let mut z: Vec<C64> = (0..n)
        .map(|i| {
            let ang = 2.0 * std::f64::consts::PI * (i as f64) / (n as f64) + 0.4;
            C64::from_polar(0.7 * bound, ang)
        })
        .collect();
    let deriv = poly_derivative(&monic);
    let max_iter = 400;
    for iter in 0..max_iter {
        let mut moved = 0.0f64;
        for i in 0..n {
            let p = poly_eval(&monic, z[i]);
            let dp = poly_eval(&deriv, z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let newton = if dp.norm() > 0.0 { p / dp } else { C64::new(1e-8, 1e-8) };
            let mut rep = C64::new(0.0, 0.0);
            for j in 0..n {
                if j != i {
                    let d = z[i] - z[j];
                    if d.norm() > 1e-300 {
                        rep += 1.0 / d;
                    }
                }
            }
            let denom = C64::new(1.0, 0.0) - newton * rep;
            let step = if denom.norm() > 1e-300 { newton / denom } else { newton };
            z[i] -= step;
            moved = moved.max(step.norm());
        }
        if moved < 1e-14 * bound.max(1.0) {
            // final Newton polish
            for zi in z.iter_mut() {
                for _ in 0..3 {
                    let p = poly_eval(&monic, *zi);
                    let dp = poly_eval(&deriv, *zi);
                    if dp.norm() > 1e-300 {
                        *zi -= p / dp;
                    }
                }
            }
            return Ok(z);
        }
        if iter == max_iter - 1 {
            return Err(NumericsError::RootsNonConvergence(max_iter));
        }
    }
    unreachable!()
}

/// Characteristic polynomial det(x I - A) by the Faddeev-LeVerrier recursion.
/// Returns coefficients c[0..=n] with c[n] = 1.
pub fn char_poly(a: &DMatrix<C64>) -> Vec<C64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut coeffs = vec![C64::new(0.0, 0.0); n + 1];
    coeffs[n] = C64::new(1.0, 0.0);
    // M_1 = I, c_{n-k} = -tr(A M_k)/k, M_{k+1} = A M_k + c_{n-k} I
    let mut m = DMatrix::<C64>::identity(n, n);
    for k in 1..=n {
        let am = a * &m;
        let c = -am.trace() / C64::new(k as f64, 0.0);
        coeffs[n - k] = c;
        if k < n {
            m = am;
            for i in 0..n {
                m[(i, i)] += c;
            }
        }
    }
    coeffs
}

/// Characteristic polynomial together with the adjugate expansion
/// adj(x I - A) = sum_{k=1..n} M_k x^{n-k}, so that
/// (x I - A)^{-1} = adj(x I - A) / det(x I - A).
pub fn char_poly_adjugate(a: &DMatrix<C64>) -> (Vec<C64>, Vec<DMatrix<C64>>) {
    let n = a.nrows();
    let mut coeffs = vec![C64::new(0.0, 0.0); n + 1];
    coeffs[n] = C64::new(1.0, 0.0);
    let mut ms = Vec::with_capacity(n);
    let mut m = DMatrix::<C64>::identity(n, n);
    for k in 1..=n {
        ms.push(m.clone());
        let am = a * &m;
        let c = -am.trace() / C64::new(k as f64, 0.0);
        coeffs[n - k] = c;
        if k < n {
            m = am;
            for i in 0..n {
                m[(i, i)] += c;
            }
        }
    }
    (coeffs, ms)
}

// ---------------------------------------------------------------------------
// Golden-section maximization.
// ---------------------------------------------------------------------------

/// Refine a bracketed maximum of `f` on [lo, hi] to |dx| < xtol.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, xtol: f64) -> (f64, f64) {
    let invphi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > xtol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    (x, fx)
}

// ---------------------------------------------------------------------------
// Deterministic FNV-1a hashing for config/manifest provenance.
// ---------------------------------------------------------------------------

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| a + (b - a) * (i as f64) / ((n - 1) as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kronrod_exact_on_smooth() {
        let (v, _) = integrate_adaptive(
            |x| C64::new(x.exp(), 0.0),
            0.0,
            1.0,
            &[],
            QuadTol::default(),
        )
        .unwrap();
        assert_relative_eq!(v.re, std::f64::consts::E - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn lorentzian_line_integral() {
        // integral of eps/((x-3)^2+eps^2) over R = pi, sharp peak
        let eps = 1e-5;
        let (v, _) = integrate_real_line(
            |x| C64::new(eps / ((x - 3.0).powi(2) + eps * eps), 0.0),
            0.0,
            5.0,
            &[3.0],
            QuadTol { abs: 1e-10, rel: 1e-9, max_intervals: 20000 },
        )
        .unwrap();
        assert_relative_eq!(v.re, std::f64::consts::PI, max_relative = 1e-8);
    }

    #[test]
    fn roots_of_known_quartic() {
        // (x-1)(x+2)(x-3i)(x+1+i)
        let r1 = C64::new(1.0, 0.0);
        let r2 = C64::new(-2.0, 0.0);
        let r3 = C64::new(0.0, 3.0);
        let r4 = C64::new(-1.0, -1.0);
        // expand
        let mut c = vec![C64::new(1.0, 0.0)];
        for r in [r1, r2, r3, r4] {
            let mut nc = vec![C64::new(0.0, 0.0); c.len() + 1];
            for (i, &ci) in c.iter().enumerate() {
                nc[i + 1] += ci;
                nc[i] -= ci * r;
            }
            c = nc;
        }
        let mut roots = poly_roots(&c).unwrap();
        roots.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        let mut expect = [r1, r2, r3, r4];
        expect.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        for (z, e) in roots.iter().zip(expect.iter()) {
            assert!((z - e).norm() < 1e-10, "{z} vs {e}");
        }
    }

    #[test]
    fn char_poly_matches_eigenvalues_2x2() {
        let a = DMatrix::from_row_slice(2, 2, &[
            C64::new(2.0, -0.5),
            C64::new(0.3, 0.1),
            C64::new(0.3, 0.1),
            C64::new(1.0, 0.0),
        ]);
        let cp = char_poly(&a);
        // det(xI - A) = x^2 - tr x + det
        let tr = a[(0, 0)] + a[(1, 1)];
        let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
        assert!((cp[2] - C64::new(1.0, 0.0)).norm() < 1e-14);
        assert!((cp[1] + tr).norm() < 1e-13);
        assert!((cp[0] - det).norm() < 1e-13);
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, fx) = golden_max(|x| -(x - 0.7).powi(2) + 2.0, 0.0, 2.0, 1e-9);
        assert_relative_eq!(x, 0.7, epsilon = 1e-7);
        assert_relative_eq!(fx, 2.0, epsilon = 1e-12);
    }
}
