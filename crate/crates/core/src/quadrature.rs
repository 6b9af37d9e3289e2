//! Quadrature on the reference triangle and tetrahedron.
//!
//! Rules are conical products of Gauss-Jacobi rules in collapsed
//! coordinates. With `n` points per direction they integrate every
//! polynomial of total degree `2n - 1` exactly, so a rule of exactness `p`
//! uses `n = ceil((p + 1) / 2)` points per direction.
//!
//! Reference triangle: `{xi >= 0, xi1 + xi2 <= 1}`, measure 1/2.
//! Reference tetrahedron: `{xi >= 0, xi1 + xi2 + xi3 <= 1}`, measure 1/6.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Largest exactness degree for which rules are generated.
pub const MAX_EXACTNESS: usize = 16;

/// Points and weights on a reference simplex.
#[derive(Debug, Clone)]
pub struct QuadratureRule<T> {
    dim: usize,
    exactness: usize,
    points: Vec<[T; 3]>,
    weights: Vec<T>,
}

impl<T: Real> QuadratureRule<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn exactness(&self) -> usize {
        self.exactness
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Reference coordinates; unused trailing coordinates are zero.
    pub fn points(&self) -> &[[T; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[T; 3], T)> + '_ {
        self.points.iter().zip(self.weights.iter().copied())
    }

    /// Integral of `f` over the reference simplex.
    pub fn integrate(&self, mut f: impl FnMut(&[T; 3]) -> T) -> T {
        self.iter().map(|(p, w)| w * f(p)).sum()
    }
}

/// Builds a rule on the reference simplex of dimension `dim` (2 or 3)
/// integrating polynomials up to total degree `exactness` exactly.
pub fn make_quadrature<T: Real>(dim: usize, exactness: usize) -> Result<QuadratureRule<T>> {
    if exactness > MAX_EXACTNESS {
        return Err(Error::UnsupportedDegree {
            degree: exactness,
            min: 0,
            max: MAX_EXACTNESS,
        });
    }
    if dim != 2 && dim != 3 {
        return Err(Error::Config(format!("quadrature dimension {dim} not in {{2, 3}}")));
    }
    let n = (exactness + 2) / 2;
    let (xa, wa) = gauss_jacobi_unit(n, 0);
    let (xb, wb) = gauss_jacobi_unit(n, 1);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    if dim == 2 {
        for (&b, &wbv) in xb.iter().zip(&wb) {
            for (&a, &wav) in xa.iter().zip(&wa) {
                points.push([T::lit(a * (1.0 - b)), T::lit(b), T::zero()]);
                weights.push(T::lit(wav * wbv));
            }
        }
    } else {
        let (xc, wc) = gauss_jacobi_unit(n, 2);
        for (&c, &wcv) in xc.iter().zip(&wc) {
            for (&b, &wbv) in xb.iter().zip(&wb) {
                for (&a, &wav) in xa.iter().zip(&wa) {
                    points.push([T::lit(a * (1.0 - b) * (1.0 - c)), T::lit(b * (1.0 - c)), T::lit(c)]);
                    weights.push(T::lit(wav * wbv * wcv));
                }
            }
        }
    }
    Ok(QuadratureRule {
        dim,
        exactness,
        points,
        weights,
    })
}

/// Gauss-Legendre points and weights on `[0, 1]`, exact to `exactness`.
pub fn gauss_legendre_unit<T: Real>(exactness: usize) -> (Vec<T>, Vec<T>) {
    let (s, w) = gauss_jacobi_unit(exactness / 2 + 1, 0);
    (s.into_iter().map(T::lit).collect(), w.into_iter().map(T::lit).collect())
}

/// Gauss-Jacobi rule on `[0, 1]` for the weight `(1 - s)^alpha`.
fn gauss_jacobi_unit(n: usize, alpha: u32) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_jacobi(n, alpha as f64);
    let scale = 2f64.powi(alpha as i32 + 1);
    let s = x.iter().map(|&xi| 0.5 * (1.0 + xi)).collect();
    let ws = w.iter().map(|&wi| wi / scale).collect();
    (s, ws)
}

/// Values `P_n^{(a,0)}(x)` and `P_{n-1}^{(a,0)}(x)` by the three-term recurrence.
fn jacobi_pair(n: usize, a: f64, x: f64) -> (f64, f64) {
    let b = 0.0;
    let mut p0 = 1.0;
    if n == 0 {
        return (p0, 0.0);
    }
    let mut p1 = 0.5 * (a - b) + 0.5 * (a + b + 2.0) * x;
    for k in 2..=n {
        let k = k as f64;
        let c = 2.0 * k + a + b;
        let a1 = 2.0 * k * (k + a + b) * (c - 2.0);
        let a2 = (c - 1.0) * (a * a - b * b);
        let a3 = (c - 2.0) * (c - 1.0) * c;
        let a4 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * c;
        let p2 = ((a2 + a3 * x) * p1 - a4 * p0) / a1;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

fn jacobi_derivative(n: usize, a: f64, x: f64) -> f64 {
    // d/dx P_n^{(a,b)} = (n + a + b + 1) / 2 * P_{n-1}^{(a+1,b+1)}; with b = 0
    // use the equivalent identity in terms of P_n and P_{n-1}.
    let b = 0.0;
    let nf = n as f64;
    let (pn, pm) = jacobi_pair(n, a, x);
    let c = 2.0 * nf + a + b;
    (nf * ((a - b) - c * x) * pn + 2.0 * (nf + a) * (nf + b) * pm) / (c * (1.0 - x * x))
}

/// Gauss-Jacobi nodes/weights on `[-1, 1]` for weight `(1 - x)^a`.
fn gauss_jacobi(n: usize, a: f64) -> (Vec<f64>, Vec<f64>) {
    let mut x: Vec<f64> = Vec::with_capacity(n);
    for k in 0..n {
        let mut r = -((2 * k + 1) as f64 * std::f64::consts::PI / (2 * n) as f64).cos();
        if k > 0 {
            r = 0.5 * (r + x[k - 1]);
        }
        for _ in 0..100 {
            let (p, _) = jacobi_pair(n, a, r);
            let dp = jacobi_derivative(n, a, r);
            let s: f64 = x.iter().map(|&xi| 1.0 / (r - xi)).sum();
            let delta = -p / (dp - s * p);
            r += delta;
            if delta.abs() < 1e-16 {
                break;
            }
        }
        x.push(r);
    }
    // w_i = Gamma(n+a+1) Gamma(n+1) / (Gamma(n+a+1) Gamma(n+1)) * 2^{a+1}
    //       / ((1 - x_i^2) P_n'(x_i)^2)   (with b = 0 the Gamma ratio is 1)
    let w = x
        .iter()
        .map(|&xi| {
            let dp = jacobi_derivative(n, a, xi);
            2f64.powf(a + 1.0) / ((1.0 - xi * xi) * dp * dp)
        })
        .collect();
    (x, w)
}

/// Closed-form integral of `xi1^a xi2^b` (and `xi3^c` in 3D) over the
/// reference simplex: `a! b! (c!) / (a + b (+ c) + dim)!`.
pub fn reference_monomial_integral(dim: usize, exps: [usize; 3]) -> f64 {
    let fact = |n: usize| (1..=n).map(|v| v as f64).product::<f64>();
    let e: &[usize] = &exps[..dim];
    let num: f64 = e.iter().map(|&k| fact(k)).product();
    num / fact(e.iter().sum::<usize>() + dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_reference_measure() {
        for p in 0..=MAX_EXACTNESS {
            let t = make_quadrature::<f64>(2, p).unwrap();
            let s: f64 = t.weights().iter().sum();
            assert!((s - 0.5).abs() < 1e-14, "tri p={p}: {s}");
            let k = make_quadrature::<f64>(3, p).unwrap();
            let s: f64 = k.weights().iter().sum();
            assert!((s - 1.0 / 6.0).abs() < 1e-14, "tet p={p}: {s}");
        }
    }

    #[test]
    fn exact_for_all_monomials_up_to_degree() {
        for p in 0..=10 {
            let tri = make_quadrature::<f64>(2, p).unwrap();
            let tet = make_quadrature::<f64>(3, p).unwrap();
            for a in 0..=p {
                for b in 0..=p - a {
                    let exact = reference_monomial_integral(2, [a, b, 0]);
                    let q = tri.integrate(|x| x[0].powi(a as i32) * x[1].powi(b as i32));
                    assert!((q - exact).abs() < 1e-14, "tri p={p} ({a},{b})");
                    for c in 0..=p - a - b {
                        let exact = reference_monomial_integral(3, [a, b, c]);
                        let q = tet.integrate(|x| x[0].powi(a as i32) * x[1].powi(b as i32) * x[2].powi(c as i32));
                        assert!((q - exact).abs() < 1e-14, "tet p={p} ({a},{b},{c})");
                    }
                }
            }
        }
    }

    #[test]
    fn barycentric_product_integrals() {
        // lambda_1 = xi1, lambda_2 = xi2 on the triangle: 2|T| 1!1!0!/4! = 1/24.
        let tri = make_quadrature::<f64>(2, 2).unwrap();
        assert!((tri.integrate(|x| x[0] * x[1]) - 1.0 / 24.0).abs() < 1e-15);
        // lambda_1^2 lambda_2 on the tetrahedron: 2! 1! / 6! = 1/360.
        let tet = make_quadrature::<f64>(3, 3).unwrap();
        assert!((tet.integrate(|x| x[0] * x[0] * x[1]) - 1.0 / 360.0).abs() < 1e-15);
        assert!((tet.integrate(|_| 1.0) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn unit_interval_rule_is_exact() {
        for p in 0..=12 {
            let (s, w) = gauss_legendre_unit::<f64>(p);
            let got: f64 = s.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
            assert!((got - 1.0 / (p + 1) as f64).abs() < 1e-14, "{p}");
        }
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!(
            make_quadrature::<f64>(3, MAX_EXACTNESS + 1),
            Err(Error::UnsupportedDegree { .. })
        ));
        assert!(make_quadrature::<f64>(4, 2).is_err());
    }

    #[test]
    fn single_precision_rule_is_usable() {
        let tet = make_quadrature::<f32>(3, 4).unwrap();
        let q = tet.integrate(|x| x[0] * x[1] * x[2]);
        assert!((q - 1.0 / 720.0).abs() < 1e-6);
    }
}
