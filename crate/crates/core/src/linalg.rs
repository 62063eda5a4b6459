//! Small dense kernels for the 4×4 mode blocks: one-sided Jacobi SVD over
//! the complex field, quartic root finding and a Padé matrix exponential.

use nalgebra::{Complex, Matrix4, Vector4};

pub type C64 = Complex<f64>;
pub type CMat4 = Matrix4<C64>;
pub type CVec4 = Vector4<C64>;

const MAX_SWEEPS: usize = 60;

/// Singular values (descending) and the matching right singular vectors.
#[derive(Clone, Debug)]
pub struct Svd4 {
    pub singular_values: [f64; 4],
    /// Column `k` is the right singular vector belonging to `singular_values[k]`.
    pub right: CMat4,
}

impl Svd4 {
    pub fn sigma_max(&self) -> f64 {
        self.singular_values[0]
    }

    pub fn sigma_min(&self) -> f64 {
        self.singular_values[3]
    }

    pub fn condition_number(&self) -> f64 {
        self.sigma_max() / self.sigma_min()
    }
}

/// One-sided (Hestenes) Jacobi SVD of a complex 4×4 matrix.
///
/// Columns of `A·V` are rotated pairwise until mutually orthogonal; the
/// singular values are then the column norms. The stopping rule is relative
/// to the column norms, so small singular values keep full relative accuracy
/// on well-scaled input.
pub fn svd4(a: &CMat4) -> Svd4 {
    let mut u = *a;
    let mut v = CMat4::identity();
    let tol = f64::EPSILON;

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..3 {
            for q in (p + 1)..4 {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = C64::new(0.0, 0.0);
                for i in 0..4 {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    alpha += up.norm_sqr();
                    beta += uq.norm_sqr();
                    gamma += up.conj() * uq;
                }
                let g = gamma.norm();
                if g == 0.0 || g <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let ph = phase.conj();
                for i in 0..4 {
                    let up = u[(i, p)];
                    let w = u[(i, q)] * ph;
                    u[(i, p)] = up * c - w * s;
                    u[(i, q)] = up * s + w * c;
                    let vp = v[(i, p)];
                    let vw = v[(i, q)] * ph;
                    v[(i, p)] = vp * c - vw * s;
                    v[(i, q)] = vp * s + vw * c;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sv = [0.0; 4];
    for (k, s) in sv.iter_mut().enumerate() {
        *s = u.column(k).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    }
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let mut right = CMat4::zeros();
    let mut singular_values = [0.0; 4];
    for (dst, &src) in order.iter().enumerate() {
        singular_values[dst] = sv[src];
        right.set_column(dst, &v.column(src));
    }
    Svd4 { singular_values, right }
}

pub fn spectral_norm(a: &CMat4) -> f64 {
    svd4(a).sigma_max()
}

pub fn complexify(a: &Matrix4<f64>) -> CMat4 {
    a.map(|x| C64::new(x, 0.0))
}

fn horner(coeffs: &[f64; 5], z: C64) -> (C64, C64) {
    // coeffs[k] multiplies z^k
    let mut p = C64::new(coeffs[4], 0.0);
    let mut dp = C64::new(0.0, 0.0);
    for k in (0..4).rev() {
        dp = dp * z + p;
        p = p * z + coeffs[k];
    }
    (p, dp)
}

/// Initial radii from the upper convex hull of `(k, ln|a_k|)`.
fn newton_polygon_starts(coeffs: &[f64; 5]) -> [C64; 4] {
    let pts: Vec<(usize, f64)> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(k, c)| (k, c.abs().ln()))
        .collect();
    let mut hull: Vec<(usize, f64)> = Vec::new();
    for &pt in &pts {
        while hull.len() >= 2 {
            let (k1, y1) = hull[hull.len() - 2];
            let (k2, y2) = hull[hull.len() - 1];
            let cross = (k2 as f64 - k1 as f64) * (pt.1 - y1) - (y2 - y1) * (pt.0 as f64 - k1 as f64);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(pt);
    }
    let mut starts = [C64::new(0.0, 0.0); 4];
    let mut idx = 0;
    // a zero constant term contributes roots at the origin
    let lowest = pts.first().map(|p| p.0).unwrap_or(0);
    for _ in 0..lowest {
        starts[idx] = C64::new(1e-300, 0.0);
        idx += 1;
    }
    for seg in hull.windows(2) {
        let (i, yi) = seg[0];
        let (j, yj) = seg[1];
        let m = j - i;
        let r = ((yi - yj) / m as f64).exp();
        for l in 0..m {
            let angle = 2.0 * std::f64::consts::PI * l as f64 / m as f64 + 0.4 + 0.7 * idx as f64;
            starts[idx] = C64::from_polar(r, angle);
            idx += 1;
        }
    }
    starts
}

/// Roots of the monic quartic `s⁴ + c[3]s³ + c[2]s² + c[1]s + c[0]` by
/// Aberth–Ehrlich simultaneous iteration.
pub fn quartic_roots(c: [f64; 4]) -> [C64; 4] {
    let coeffs = [c[0], c[1], c[2], c[3], 1.0];
    let mut z = newton_polygon_starts(&coeffs);
    let mut done = [false; 4];
    for _ in 0..500 {
        let mut all_done = true;
        for k in 0..4 {
            if done[k] {
                continue;
            }
            let (p, dp) = horner(&coeffs, z[k]);
            if p == C64::new(0.0, 0.0) {
                done[k] = true;
                continue;
            }
            let w = p / dp;
            let mut sum = C64::new(0.0, 0.0);
            for j in 0..4 {
                if j != k {
                    sum += (z[k] - z[j]).inv();
                }
            }
            let corr = w / (C64::new(1.0, 0.0) - w * sum);
            z[k] -= corr;
            if corr.norm() <= 4.0 * f64::EPSILON * z[k].norm() {
                done[k] = true;
            } else {
                all_done = false;
            }
        }
        if all_done {
            break;
        }
    }
    z
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn one_norm(a: &Matrix4<f64>) -> f64 {
    (0..4)
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with the degree-13 Padé
/// approximant.
pub fn expm_pade(a: &Matrix4<f64>) -> Matrix4<f64> {
    let norm = one_norm(a);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * 2f64.powi(-squarings);
    let b = &PADE13;
    let id = Matrix4::<f64>::identity();
    let a2 = a * a;
    let a4 = a2 * a2;
    let a6 = a4 * a2;
    let u = a * (a6 * (a6 * b[13] + a4 * b[11] + a2 * b[9]) + a6 * b[7] + a4 * b[5] + a2 * b[3] + id * b[1]);
    let v = a6 * (a6 * b[12] + a4 * b[10] + a2 * b[8]) + a6 * b[6] + a4 * b[4] + a2 * b[2] + id * b[0];
    let mut x = (v - u)
        .lu()
        .solve(&(v + u))
        .expect("Padé denominator is nonsingular for scaled arguments");
    for _ in 0..squarings {
        x = x * x;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn svd_of_diagonal_matrix() {
        let a = CMat4::from_diagonal(&Vector4::new(c(3.0), c(-1.0), C64::new(0.0, 2.0), c(0.5)));
        let s = svd4(&a);
        assert_eq!(s.singular_values, [3.0, 2.0, 1.0, 0.5]);
    }

    #[test]
    fn svd_matches_nalgebra_on_dense_complex_matrix() {
        let a = CMat4::from_fn(|i, j| C64::new((i * 4 + j) as f64 * 0.37 - 2.0, ((i + 2 * j) % 5) as f64 - 1.5));
        let ours = svd4(&a);
        let reference = a.svd(false, false).singular_values;
        let mut r: Vec<f64> = reference.iter().copied().collect();
        r.sort_by(|x, y| y.total_cmp(x));
        for (got, want) in ours.singular_values.iter().zip(&r) {
            assert_relative_eq!(*got, *want, max_relative = 1e-12);
        }
        // A v_min has norm sigma_min
        let vmin = ours.right.column(3).into_owned();
        assert_relative_eq!((a * vmin).norm(), ours.sigma_min(), max_relative = 1e-10);
    }

    #[test]
    fn quartic_with_known_roots() {
        // (s^2 + 2s + 4)(s^2 + s + 1)
        let roots = quartic_roots([4.0, 6.0, 7.0, 3.0]);
        let mut expected = [
            C64::new(-1.0, 3f64.sqrt()),
            C64::new(-1.0, -(3f64.sqrt())),
            C64::new(-0.5, 0.75f64.sqrt()),
            C64::new(-0.5, -(0.75f64.sqrt())),
        ];
        for r in roots {
            let (k, _) = expected
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - r).norm().total_cmp(&(b.1 - r).norm()))
                .unwrap();
            assert!((expected[k] - r).norm() < 1e-13, "{r} vs {}", expected[k]);
            expected[k] = C64::new(f64::INFINITY, 0.0);
        }
    }

    #[test]
    fn quartic_with_widely_separated_roots() {
        // (s + 1e8)(s + 1e-8)(s + 1)(s + 3)
        let r = [1e8, 1e-8, 1.0, 3.0];
        let e1: f64 = r.iter().sum();
        let e2 = r[0] * r[1] + r[0] * r[2] + r[0] * r[3] + r[1] * r[2] + r[1] * r[3] + r[2] * r[3];
        let e3 = r[0] * r[1] * r[2] + r[0] * r[1] * r[3] + r[0] * r[2] * r[3] + r[1] * r[2] * r[3];
        let e4 = r.iter().product::<f64>();
        let mut got: Vec<f64> = quartic_roots([e4, e3, e2, e1]).iter().map(|z| -z.re).collect();
        got.sort_by(f64::total_cmp);
        let mut want = r.to_vec();
        want.sort_by(f64::total_cmp);
        for (g, w) in got.iter().zip(&want) {
            assert_relative_eq!(g, w, max_relative = 1e-10);
        }
    }

    #[test]
    fn pade_exponential_of_rotation_generator() {
        let mut a = Matrix4::<f64>::zeros();
        a[(0, 1)] = 30.0;
        a[(1, 0)] = -30.0;
        a[(2, 2)] = -2.0;
        a[(3, 3)] = 0.0;
        let e = expm_pade(&a);
        assert_relative_eq!(e[(0, 0)], 30f64.cos(), epsilon = 1e-12);
        assert_relative_eq!(e[(0, 1)], 30f64.sin(), epsilon = 1e-12);
        assert_relative_eq!(e[(2, 2)], (-2f64).exp(), epsilon = 1e-14);
        assert_relative_eq!(e[(3, 3)], 1.0, epsilon = 1e-14);
    }
}
