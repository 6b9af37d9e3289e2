//! Orthonormal polynomial bases on reference simplices and affine maps.
//!
//! A [`BasisSet`] of degree `k` spans `P_k` on the reference triangle
//! (`dim = 2`) or tetrahedron (`dim = 3`). It is obtained by Gram-Schmidt
//! orthonormalisation of centroid-shifted monomials in graded order, so the
//! leading `C(j + dim, dim)` functions span `P_j` for every `j <= k` and the
//! first function is the constant.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::quadrature::make_quadrature;
use crate::scalar::Real;

pub const MIN_DEGREE: usize = 0;
pub const MAX_DEGREE: usize = 4;

/// `C(k + dim, dim)`, the dimension of `P_k` in `dim` variables.
pub fn poly_dim(k: usize, dim: usize) -> usize {
    (1..=dim).fold(1, |acc, i| acc * (k + i) / i)
}

#[derive(Debug, Clone)]
pub struct BasisSet<T> {
    degree: usize,
    dim: usize,
    exponents: Vec<[usize; 3]>,
    centroid: [T; 3],
    /// Row `i` holds the monomial coefficients of basis function `i`.
    coeffs: DenseMatrix<T>,
}

/// Builds the orthonormal basis of `P_k` on the reference simplex.
///
/// Degree 0 is accepted because the pressure space of a degree-1 velocity is
/// `P_0`; the velocity range itself is checked by the discretisation.
pub fn make_basis<T: Real>(k: usize, dim: usize) -> Result<BasisSet<T>> {
    if k > MAX_DEGREE {
        return Err(Error::UnsupportedDegree {
            degree: k,
            min: MIN_DEGREE,
            max: MAX_DEGREE,
        });
    }
    if dim != 2 && dim != 3 {
        return Err(Error::Config(format!("basis dimension {dim} not in {{2, 3}}")));
    }
    let mut exponents = Vec::with_capacity(poly_dim(k, dim));
    for total in 0..=k {
        if dim == 2 {
            for b in 0..=total {
                exponents.push([total - b, b, 0]);
            }
        } else {
            for c in 0..=total {
                for b in 0..=total - c {
                    exponents.push([total - b - c, b, c]);
                }
            }
        }
    }
    let c = T::one() / T::of(dim + 1);
    let centroid = if dim == 2 { [c, c, T::zero()] } else { [c, c, c] };
    let n = exponents.len();
    let identity = BasisSet {
        degree: k,
        dim,
        exponents,
        centroid,
        coeffs: DenseMatrix::identity(n),
    };

    let rule = make_quadrature::<T>(dim, 2 * k)?;
    let mut mass = DenseMatrix::<T>::zeros(n, n);
    let mut m = vec![T::zero(); n];
    for (p, w) in rule.iter() {
        identity.eval_into(p, &mut m);
        for i in 0..n {
            for j in 0..=i {
                mass[(i, j)] += w * m[i] * m[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            mass[(j, i)] = mass[(i, j)];
        }
    }
    let l = mass
        .cholesky()
        .ok_or_else(|| Error::Config("monomial mass matrix not positive definite".into()))?;
    Ok(BasisSet {
        coeffs: l.lower_triangular_inverse(),
        ..identity
    })
}

impl<T: Real> BasisSet<T> {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    fn monomials(&self, p: &[T; 3], vals: &mut [T], grads: Option<&mut [[T; 3]]>) {
        let y = [
            p[0] - self.centroid[0],
            p[1] - self.centroid[1],
            p[2] - self.centroid[2],
        ];
        // powers[d][e] = y_d^e
        let mut powers = [[T::one(); MAX_DEGREE + 1]; 3];
        for d in 0..self.dim {
            for e in 1..=self.degree {
                powers[d][e] = powers[d][e - 1] * y[d];
            }
        }
        for (v, e) in vals.iter_mut().zip(&self.exponents) {
            *v = powers[0][e[0]] * powers[1][e[1]] * powers[2][e[2]];
        }
        if let Some(grads) = grads {
            for (g, e) in grads.iter_mut().zip(&self.exponents) {
                for d in 0..3 {
                    g[d] = if d < self.dim && e[d] > 0 {
                        let mut v = T::of(e[d]);
                        for dd in 0..3 {
                            let pow = if dd == d { e[dd] - 1 } else { e[dd] };
                            v *= powers[dd][pow];
                        }
                        v
                    } else {
                        T::zero()
                    };
                }
            }
        }
    }

    /// Basis values at a reference point.
    pub fn eval_into(&self, p: &[T; 3], vals: &mut [T]) {
        let n = self.len();
        let mut m = [T::zero(); 35];
        self.monomials(p, &mut m[..n], None);
        for (i, v) in vals.iter_mut().enumerate().take(n) {
            let row = self.coeffs.row(i);
            *v = (0..=i).fold(T::zero(), |s, j| s + row[j] * m[j]);
        }
    }

    /// Basis values and reference gradients at a reference point.
    pub fn eval_grad_into(&self, p: &[T; 3], vals: &mut [T], grads: &mut [[T; 3]]) {
        let n = self.len();
        let mut m = [T::zero(); 35];
        let mut dm = [[T::zero(); 3]; 35];
        self.monomials(p, &mut m[..n], Some(&mut dm[..n]));
        for i in 0..n {
            let row = self.coeffs.row(i);
            let mut v = T::zero();
            let mut g = [T::zero(); 3];
            for j in 0..=i {
                v += row[j] * m[j];
                for d in 0..3 {
                    g[d] += row[j] * dm[j][d];
                }
            }
            vals[i] = v;
            grads[i] = g;
        }
    }

    pub fn eval(&self, p: &[T; 3]) -> Vec<T> {
        let mut v = vec![T::zero(); self.len()];
        self.eval_into(p, &mut v);
        v
    }

    /// Evaluates `sum_i c_i phi_i(p)`.
    pub fn combine(&self, coeffs: &[T], p: &[T; 3]) -> T {
        let v = self.eval(p);
        coeffs.iter().zip(&v).fold(T::zero(), |s, (&c, &b)| s + c * b)
    }
}

/// Affine map from the reference tetrahedron to a space-time cell.
///
/// Physical coordinates are ordered `(t, x1, x2)`.
#[derive(Debug, Clone, Copy)]
pub struct AffineMap<T> {
    origin: [T; 3],
    jac: [[T; 3]; 3],
    inv: [[T; 3]; 3],
    det: T,
}

impl<T: Real> AffineMap<T> {
    /// Map sending the reference vertices `0, e1, e2, e3` to `verts[0..4]`.
    pub fn from_vertices(verts: &[[T; 3]; 4]) -> Result<Self> {
        let mut jac = [[T::zero(); 3]; 3];
        for (c, v) in verts[1..].iter().enumerate() {
            for r in 0..3 {
                jac[r][c] = v[r] - verts[0][r];
            }
        }
        Self::new(verts[0], jac)
    }

    pub fn new(origin: [T; 3], jac: [[T; 3]; 3]) -> Result<Self> {
        let det = det3(&jac);
        if !(det.abs() >= T::lit(1e-14)) {
            return Err(Error::DegenerateMap { det: det.f64() });
        }
        let j = &jac;
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| j[r0][c0] * j[r1][c1] - j[r0][c1] * j[r1][c0];
        let inv = [
            [cof(1, 2, 1, 2) / det, -cof(0, 2, 1, 2) / det, cof(0, 1, 1, 2) / det],
            [-cof(1, 2, 0, 2) / det, cof(0, 2, 0, 2) / det, -cof(0, 1, 0, 2) / det],
            [cof(1, 2, 0, 1) / det, -cof(0, 2, 0, 1) / det, cof(0, 1, 0, 1) / det],
        ];
        Ok(Self { origin, jac, inv, det })
    }

    pub fn det(&self) -> T {
        self.det
    }

    pub fn jacobian(&self) -> &[[T; 3]; 3] {
        &self.jac
    }

    pub fn map(&self, xi: &[T; 3]) -> [T; 3] {
        let mut x = self.origin;
        for (r, xr) in x.iter_mut().enumerate() {
            for c in 0..3 {
                *xr += self.jac[r][c] * xi[c];
            }
        }
        x
    }

    pub fn inverse(&self, x: &[T; 3]) -> [T; 3] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1], x[2] - self.origin[2]];
        let mut xi = [T::zero(); 3];
        for (r, v) in xi.iter_mut().enumerate() {
            for c in 0..3 {
                *v += self.inv[r][c] * d[c];
            }
        }
        xi
    }

    /// Physical gradient `J^{-T} g` of a reference gradient `g`.
    #[inline]
    pub fn push_gradient(&self, g: &[T; 3]) -> [T; 3] {
        let mut out = [T::zero(); 3];
        for (r, o) in out.iter_mut().enumerate() {
            for c in 0..3 {
                *o += self.inv[c][r] * g[c];
            }
        }
        out
    }
}

pub fn det3<T: Real>(j: &[[T; 3]; 3]) -> T {
    j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
        + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0])
}

/// Per-point basis values and per-point gradients.
pub type PointValues<T> = (Vec<Vec<T>>, Vec<Vec<[T; 3]>>);

/// Basis values and space-time gradients `(d/dt, d/dx1, d/dx2)` at
/// reference points, pushed forward through `map`.
pub fn physical_gradients<T: Real>(
    basis: &BasisSet<T>,
    map: &AffineMap<T>,
    points: &[[T; 3]],
) -> Result<PointValues<T>> {
    if !(map.det().abs() >= T::lit(1e-14)) {
        return Err(Error::DegenerateMap { det: map.det().f64() });
    }
    let n = basis.len();
    let mut values = Vec::with_capacity(points.len());
    let mut grads = Vec::with_capacity(points.len());
    for p in points {
        let mut v = vec![T::zero(); n];
        let mut g = vec![[T::zero(); 3]; n];
        basis.eval_grad_into(p, &mut v, &mut g);
        for gi in g.iter_mut() {
            *gi = map.push_gradient(gi);
        }
        values.push(v);
        grads.push(g);
    }
    Ok((values, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::reference_monomial_integral;

    #[test]
    fn sizes_match_binomials() {
        assert_eq!(make_basis::<f64>(2, 3).unwrap().len(), 10);
        assert_eq!(make_basis::<f64>(3, 2).unwrap().len(), 10);
        assert_eq!(make_basis::<f64>(4, 3).unwrap().len(), 35);
        assert_eq!(poly_dim(1, 3), 4);
        assert!(matches!(make_basis::<f64>(5, 3), Err(Error::UnsupportedDegree { .. })));
    }

    #[test]
    fn orthonormal_on_reference_simplex() {
        for dim in [2, 3] {
            for k in 1..=4 {
                let b = make_basis::<f64>(k, dim).unwrap();
                let rule = make_quadrature::<f64>(dim, 2 * k).unwrap();
                let n = b.len();
                let mut g = DenseMatrix::<f64>::zeros(n, n);
                for (p, w) in rule.iter() {
                    let v = b.eval(p);
                    for i in 0..n {
                        for j in 0..n {
                            g[(i, j)] += w * v[i] * v[j];
                        }
                    }
                }
                for i in 0..n {
                    for j in 0..n {
                        let e = if i == j { 1.0 } else { 0.0 };
                        assert!((g[(i, j)] - e).abs() < 1e-10, "dim={dim} k={k} ({i},{j})");
                    }
                }
            }
        }
    }

    #[test]
    fn vandermonde_on_lattice_is_invertible() {
        for dim in [2, 3] {
            for k in 1..=4 {
                let b = make_basis::<f64>(k, dim).unwrap();
                let mut pts = Vec::new();
                for i in 0..=k {
                    for j in 0..=k - i {
                        if dim == 2 {
                            pts.push([i as f64 / k as f64, j as f64 / k as f64, 0.0]);
                        } else {
                            for l in 0..=k - i - j {
                                pts.push([i as f64 / k as f64, j as f64 / k as f64, l as f64 / k as f64]);
                            }
                        }
                    }
                }
                assert_eq!(pts.len(), b.len());
                let v = DenseMatrix::from_fn(b.len(), b.len(), |i, j| b.eval(&pts[i])[j]);
                assert!(v.lu().is_some(), "dim={dim} k={k}");
            }
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let b = make_basis::<f64>(3, 3).unwrap();
        let p = [0.21, 0.17, 0.33];
        let mut v = vec![0.0; b.len()];
        let mut g = vec![[0.0; 3]; b.len()];
        b.eval_grad_into(&p, &mut v, &mut g);
        let h = 1e-6;
        for d in 0..3 {
            let mut pp = p;
            let mut pm = p;
            pp[d] += h;
            pm[d] -= h;
            let (fp, fm) = (b.eval(&pp), b.eval(&pm));
            for i in 0..b.len() {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!((fd - g[i][d]).abs() < 1e-7 * (1.0 + g[i][d].abs()), "i={i} d={d}");
            }
        }
    }

    #[test]
    fn leading_functions_span_lower_degrees() {
        // The constant function is phi_0 times sqrt(measure).
        let b = make_basis::<f64>(2, 3).unwrap();
        let v = b.eval(&[0.1, 0.2, 0.3]);
        assert!((v[0] - 6f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn degree_one_reproduces_linear_function() {
        // Project f(xi) = xi1 onto P_1 on the tetrahedron and evaluate.
        let b = make_basis::<f64>(1, 3).unwrap();
        let rule = make_quadrature::<f64>(3, 2).unwrap();
        let mut c = vec![0.0; b.len()];
        for (p, w) in rule.iter() {
            let v = b.eval(p);
            for i in 0..b.len() {
                c[i] += w * v[i] * p[0];
            }
        }
        for p in [[0.1, 0.2, 0.3], [0.7, 0.1, 0.05], [0.0, 0.0, 1.0]] {
            assert!((b.combine(&c, &p) - p[0]).abs() < 1e-13);
        }
    }

    #[test]
    fn mass_matrix_matches_closed_form_monomials() {
        // Cell mass matrix of the monomial basis via quadrature of exactness
        // 2k against the closed-form simplex integrals.
        let k = 3;
        let rule = make_quadrature::<f64>(3, 2 * k).unwrap();
        let mut exps = Vec::new();
        for a in 0..=k {
            for b in 0..=k - a {
                for c in 0..=k - a - b {
                    exps.push([a, b, c]);
                }
            }
        }
        for e in &exps {
            for f in &exps {
                let s = [e[0] + f[0], e[1] + f[1], e[2] + f[2]];
                let q = rule.integrate(|x| x[0].powi(s[0] as i32) * x[1].powi(s[1] as i32) * x[2].powi(s[2] as i32));
                assert!((q - reference_monomial_integral(3, s)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_map_preserves_gradients() {
        let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let map = AffineMap::new([0.0; 3], id).unwrap();
        let b = make_basis::<f64>(2, 3).unwrap();
        let pts = [[0.2, 0.3, 0.1]];
        let (_, g) = physical_gradients(&b, &map, &pts).unwrap();
        let mut v = vec![0.0; b.len()];
        let mut gr = vec![[0.0; 3]; b.len()];
        b.eval_grad_into(&pts[0], &mut v, &mut gr);
        assert_eq!(g[0], gr);
    }

    #[test]
    fn time_scaling_halves_time_derivative() {
        let jac = [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let map = AffineMap::new([0.0; 3], jac).unwrap();
        let b = make_basis::<f64>(2, 3).unwrap();
        let pts = [[0.2, 0.3, 0.1]];
        let (_, g) = physical_gradients(&b, &map, &pts).unwrap();
        let mut v = vec![0.0; b.len()];
        let mut gr = vec![[0.0; 3]; b.len()];
        b.eval_grad_into(&pts[0], &mut v, &mut gr);
        for i in 0..b.len() {
            assert!((g[0][i][0] - 0.5 * gr[i][0]).abs() < 1e-14);
            assert!((g[0][i][1] - gr[i][1]).abs() < 1e-14);
        }
    }

    #[test]
    fn random_affine_map_chain_rule() {
        // f = x1 * t expanded in the degree-2 basis through the map; the
        // physical gradient must equal (x1, t, 0).
        let verts: [[f64; 3]; 4] = [[0.1, 0.2, -0.3], [0.9, 0.35, 0.1], [0.3, 1.1, 0.2], [0.25, 0.4, 0.95]];
        let map = AffineMap::from_vertices(&verts).unwrap();
        let comp = map.map(&map.inverse(&[0.3, 0.4, 0.5]));
        assert!(comp.iter().zip([0.3f64, 0.4, 0.5]).all(|(a, b)| (a - b).abs() < 1e-13));
        let b = make_basis::<f64>(2, 3).unwrap();
        let rule = make_quadrature::<f64>(3, 4).unwrap();
        let mut c = vec![0.0; b.len()];
        for (p, w) in rule.iter() {
            let x = map.map(p);
            let v = b.eval(p);
            for i in 0..b.len() {
                c[i] += w * v[i] * x[0] * x[1];
            }
        }
        let xi = [0.15, 0.25, 0.35];
        let x = map.map(&xi);
        let (_, g) = physical_gradients(&b, &map, &[xi]).unwrap();
        let mut grad = [0.0; 3];
        for i in 0..b.len() {
            for d in 0..3 {
                grad[d] += c[i] * g[0][i][d];
            }
        }
        assert!((grad[0] - x[1]).abs() < 1e-12);
        assert!((grad[1] - x[0]).abs() < 1e-12);
        assert!(grad[2].abs() < 1e-12);
    }

    #[test]
    fn degenerate_map_is_rejected() {
        let flat = [[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]];
        assert!(matches!(
            AffineMap::<f64>::from_vertices(&flat),
            Err(Error::DegenerateMap { .. })
        ));
    }
}
