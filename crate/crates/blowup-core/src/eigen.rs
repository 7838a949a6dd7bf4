//! Closed-form eigenanalysis for real 3x3 matrices.
//!
//! The linearizations here are small and their characteristic polynomials are
//! known in closed form at several points, so eigenvalues are computed from
//! the cubic directly (trigonometric/Cardano split on the discriminant) and
//! polished with two complex Newton steps. Eigenvectors come from complex
//! cross products of the rows of `M - lambda I`, with a rank-degenerate
//! fallback.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

type CVec3 = [Complex64; 3];

/// Coefficients `(c2, c1, c0)` of `det(lambda I - M) = lambda^3 + c2 lambda^2
/// + c1 lambda + c0`.
pub fn char_poly_coeffs(m: &Matrix3<f64>) -> (f64, f64, f64) {
    let tr = m.trace();
    let tr2 = (m * m).trace();
    let det = m.determinant();
    (-tr, 0.5 * (tr * tr - tr2), -det)
}

/// Roots of the monic cubic `x^3 + c2 x^2 + c1 x + c0`, exact-split on the
/// discriminant, Newton-polished. Ordering: ascending by `(re, im)`.
pub fn cubic_roots(c2: f64, c1: f64, c0: f64) -> [Complex64; 3] {
    // Depressed form t^3 + pt + q with x = t - c2/3.
    let shift = c2 / 3.0;
    let p = c1 - c2 * c2 / 3.0;
    let q = 2.0 * c2.powi(3) / 27.0 - c2 * c1 / 3.0 + c0;
    let scale = p.abs().sqrt().max(q.abs().cbrt()).max(1e-300);
    let mut roots: [Complex64; 3];
    if p.abs() < 1e-30 * scale * scale && q.abs() < 1e-30 * scale.powi(3) {
        roots = [Complex64::new(-shift, 0.0); 3];
        return roots;
    }
    let disc = -4.0 * p.powi(3) - 27.0 * q * q;
    if disc >= 0.0 {
        // Three real roots; p < 0 necessarily.
        let r = (-p / 3.0).sqrt();
        let arg = (3.0 * q / (2.0 * p) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0);
        let phi = arg.acos();
        let mut out = [0.0f64; 3];
        for (k, o) in out.iter_mut().enumerate() {
            *o = 2.0 * r * ((phi - 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() - shift;
        }
        roots = [
            Complex64::new(out[0], 0.0),
            Complex64::new(out[1], 0.0),
            Complex64::new(out[2], 0.0),
        ];
    } else {
        // One real root and a conjugate pair.
        let s = (q * q / 4.0 + p.powi(3) / 27.0).sqrt();
        let u = if q <= 0.0 { (-q / 2.0 + s).cbrt() } else { (-q / 2.0 - s).cbrt() };
        let v = if u.abs() > 0.0 { -p / (3.0 * u) } else { 0.0 };
        let t_real = u + v;
        let re = -t_real / 2.0;
        let im = (3.0f64).sqrt() / 2.0 * (u - v).abs();
        roots = [
            Complex64::new(t_real - shift, 0.0),
            Complex64::new(re - shift, im),
            Complex64::new(re - shift, -im),
        ];
    }
    // Two Newton polish passes on the original monic cubic.
    let (a2, a1, a0) = (
        Complex64::new(c2, 0.0),
        Complex64::new(c1, 0.0),
        Complex64::new(c0, 0.0),
    );
    let eval = |x: Complex64| ((x + a2) * x + a1) * x + a0;
    for r in roots.iter_mut() {
        // Accept a step only if it reduces the residual: near a multiple
        // root the derivative underflows while the residual is rounding
        // noise, and an unguarded step would leave the root cluster.
        for _ in 0..2 {
            let f = eval(*r);
            let df = (Complex64::new(3.0, 0.0) * *r + 2.0 * a2) * *r + a1;
            if df.norm() <= 1e-300 {
                break;
            }
            let cand = *r - f / df;
            if eval(cand).norm() < f.norm() {
                *r = cand;
            } else {
                break;
            }
        }
        // Collapse spurious imaginary dust on essentially real roots.
        if r.im.abs() < 1e-12 * (1.0 + r.re.abs()) {
            *r = Complex64::new(r.re, 0.0);
        }
    }
    roots.sort_by(|a, b| {
        (a.re, a.im)
            .partial_cmp(&(b.re, b.im))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    roots
}

/// Eigenvalues of `m`, ascending by `(re, im)`.
pub fn eigenvalues(m: &Matrix3<f64>) -> [Complex64; 3] {
    let (c2, c1, c0) = char_poly_coeffs(m);
    cubic_roots(c2, c1, c0)
}

fn row(m: &Matrix3<f64>, i: usize, lambda: Complex64) -> CVec3 {
    [
        Complex64::new(m[(i, 0)], 0.0) - if i == 0 { lambda } else { Complex64::default() },
        Complex64::new(m[(i, 1)], 0.0) - if i == 1 { lambda } else { Complex64::default() },
        Complex64::new(m[(i, 2)], 0.0) - if i == 2 { lambda } else { Complex64::default() },
    ]
}

fn cross(a: &CVec3, b: &CVec3) -> CVec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn cnorm(v: &CVec3) -> f64 {
    (v[0].norm_sqr() + v[1].norm_sqr() + v[2].norm_sqr()).sqrt()
}

/// Null vector of `M - lambda I` for an eigenvalue `lambda`.
///
/// Cross products of row pairs span the null direction when the matrix has
/// rank 2. Rank 1 (a plane of eigenvectors) falls back to any vector
/// orthogonal to the surviving row; rank 0 returns a coordinate axis.
pub fn eigenvector(m: &Matrix3<f64>, lambda: Complex64) -> CVec3 {
    let r0 = row(m, 0, lambda);
    let r1 = row(m, 1, lambda);
    let r2 = row(m, 2, lambda);
    let scale = m.norm() + lambda.norm() + 1.0;
    let candidates = [cross(&r0, &r1), cross(&r1, &r2), cross(&r0, &r2)];
    let mut best = candidates[0];
    let mut best_norm = cnorm(&best);
    for c in &candidates[1..] {
        let n = cnorm(c);
        if n > best_norm {
            best = *c;
            best_norm = n;
        }
    }
    if best_norm > 1e-11 * scale * scale {
        return normalize(best);
    }
    // Rank <= 1: pick the largest row and any orthogonal direction.
    let rows = [r0, r1, r2];
    let big = rows
        .iter()
        .max_by(|a, b| cnorm(a).partial_cmp(&cnorm(b)).unwrap())
        .unwrap();
    if cnorm(big) <= 1e-13 * scale {
        return [
            Complex64::new(1.0, 0.0),
            Complex64::default(),
            Complex64::default(),
        ];
    }
    let orth = [
        [-big[1], big[0], Complex64::default()],
        [-big[2], Complex64::default(), big[0]],
        [Complex64::default(), -big[2], big[1]],
    ];
    let v = orth
        .iter()
        .max_by(|a, b| cnorm(a).partial_cmp(&cnorm(b)).unwrap())
        .unwrap();
    normalize(*v)
}

/// Scale so the largest component is exactly 1 (real, positive).
fn normalize(mut v: CVec3) -> CVec3 {
    let mut idx = 0;
    for i in 1..3 {
        if v[i].norm() > v[idx].norm() {
            idx = i;
        }
    }
    let d = v[idx];
    if d.norm() > 0.0 {
        for c in v.iter_mut() {
            *c /= d;
        }
    }
    v
}

/// Full eigen decomposition: eigenvalues with matching eigenvectors.
pub fn eigen_triple(m: &Matrix3<f64>) -> ([Complex64; 3], [CVec3; 3]) {
    let vals = eigenvalues(m);
    let vecs = [
        eigenvector(m, vals[0]),
        eigenvector(m, vals[1]),
        eigenvector(m, vals[2]),
    ];
    (vals, vecs)
}

/// Stable/unstable/center dimensions by sign of the real parts.
/// `tol` is relative to the eigenvalue magnitude scale.
pub fn manifold_dims(vals: &[Complex64; 3], tol: f64) -> (usize, usize, usize) {
    let scale = vals.iter().map(|v| v.norm()).fold(0.0f64, f64::max).max(1.0);
    let cut = tol * scale;
    let mut dims = (0usize, 0usize, 0usize);
    for v in vals {
        if v.re < -cut {
            dims.0 += 1;
        } else if v.re > cut {
            dims.1 += 1;
        } else {
            dims.2 += 1;
        }
    }
    dims
}

/// Real part of a complex vector, valid when the imaginary part is dust.
pub fn real_vector(v: &CVec3) -> Option<Vector3<f64>> {
    let re = Vector3::new(v[0].re, v[1].re, v[2].re);
    let im = (v[0].im.powi(2) + v[1].im.powi(2) + v[2].im.powi(2)).sqrt();
    if im <= 1e-10 * (re.norm() + 1.0) {
        Some(re)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn assert_root_set(got: &[Complex64; 3], want: &[Complex64; 3], tol: f64) {
        let mut used = [false; 3];
        for w in want {
            let mut hit = false;
            for (i, g) in got.iter().enumerate() {
                if !used[i] && (g - w).norm() <= tol * (1.0 + w.norm()) {
                    used[i] = true;
                    hit = true;
                    break;
                }
            }
            assert!(hit, "missing root {w}, got {got:?}");
        }
    }

    #[test]
    fn cubic_with_three_real_roots() {
        // (x-1)(x-2)(x-3) = x^3 - 6x^2 + 11x - 6.
        let r = cubic_roots(-6.0, 11.0, -6.0);
        assert_root_set(
            &r,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(2.0, 0.0),
                Complex64::new(3.0, 0.0),
            ],
            1e-13,
        );
    }

    #[test]
    fn cubic_with_complex_pair() {
        // (x+2)(x^2+x+1): roots -2, (-1 +- i sqrt(3))/2.
        let r = cubic_roots(3.0, 3.0, 2.0);
        let s3 = 3.0f64.sqrt() / 2.0;
        assert_root_set(
            &r,
            &[
                Complex64::new(-2.0, 0.0),
                Complex64::new(-0.5, s3),
                Complex64::new(-0.5, -s3),
            ],
            1e-13,
        );
    }

    #[test]
    fn cubic_with_clustered_roots() {
        // (x - 1)^2 (x - 1.000001): near-degenerate pair. Working from the
        // coefficients, a cluster this tight can only be located to about
        // cbrt(machine epsilon); require all roots within 1e-5 of it.
        let a = 1.0;
        let b = 1.000001;
        let c2 = -(2.0 * a + b);
        let c1 = a * a + 2.0 * a * b;
        let c0 = -a * a * b;
        let r = cubic_roots(c2, c1, c0);
        for root in r {
            assert!(root.im.abs() < 1e-5, "root {root}");
            assert!((root.re - 1.0).abs() < 1e-5, "root {root}");
        }
    }

    #[test]
    fn eigen_of_diagonal_and_triangular() {
        let d = Matrix3::new(2.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.5);
        let (vals, vecs) = eigen_triple(&d);
        assert_root_set(
            &vals,
            &[
                Complex64::new(2.0, 0.0),
                Complex64::new(-1.0, 0.0),
                Complex64::new(0.5, 0.0),
            ],
            1e-14,
        );
        for (v, vec) in vals.iter().zip(vecs.iter()) {
            // Residual |(M - lambda I) v| must vanish.
            let mut res = 0.0f64;
            for i in 0..3 {
                let mut acc = Complex64::default();
                for j in 0..3 {
                    acc += Complex64::new(d[(i, j)], 0.0) * vec[j];
                }
                acc -= *v * vec[i];
                res += acc.norm();
            }
            assert!(res < 1e-12, "residual {res}");
        }
    }

    #[test]
    fn eigenvector_residuals_on_generic_matrix() {
        let m = Matrix3::new(0.3, -1.2, 0.7, 2.0, 0.1, -0.4, -0.9, 0.8, 1.5);
        let (vals, vecs) = eigen_triple(&m);
        for (v, vec) in vals.iter().zip(vecs.iter()) {
            let mut res = 0.0f64;
            let mut norm = 0.0f64;
            for i in 0..3 {
                let mut acc = Complex64::default();
                for j in 0..3 {
                    acc += Complex64::new(m[(i, j)], 0.0) * vec[j];
                }
                acc -= *v * vec[i];
                res += acc.norm();
                norm += vec[i].norm();
            }
            assert!(res < 1e-10 * norm.max(1.0), "residual {res}");
        }
        // Characteristic coefficients reproduce trace and determinant.
        let (c2, _, c0) = char_poly_coeffs(&m);
        assert_relative_eq!(-c2, m.trace(), max_relative = 1e-14);
        assert_relative_eq!(-c0, m.determinant(), max_relative = 1e-14);
        let sum: Complex64 = vals.iter().sum();
        assert_relative_eq!(sum.re, m.trace(), max_relative = 1e-10);
        assert!(sum.im.abs() < 1e-10);
    }

    #[test]
    fn repeated_eigenvalue_plane_still_yields_vectors() {
        // diag(1,1,3): lambda = 1 has a two-dimensional eigenspace.
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 3.0);
        let v = eigenvector(&m, Complex64::new(1.0, 0.0));
        // Any unit vector with zero third component works.
        assert!(v[2].norm() < 1e-12);
        assert!(cnorm(&v) > 0.5);
    }

    #[test]
    fn manifold_dimension_counting() {
        let vals = [
            Complex64::new(-1.0, 0.0),
            Complex64::new(2.0, 0.0),
            Complex64::new(0.0, 0.0),
        ];
        assert_eq!(manifold_dims(&vals, 1e-9), (1, 1, 1));
    }
}
