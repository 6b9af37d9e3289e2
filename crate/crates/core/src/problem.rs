//! Flow problems: source, boundary and initial data, and exact solutions
//! where one is known.

use serde::{Deserialize, Serialize};

use crate::marching::FlowData;
use crate::scalar::Real;

/// Closed-form velocity and pressure on the space-time domain.
pub trait ExactSolution<T: Real>: Sync {
    fn velocity(&self, x: [T; 3]) -> [T; 2];
    fn pressure(&self, x: [T; 3]) -> T;
}

/// Outflow data `(β − max(β, 0)) u + p n − ν (∇u) n` with `β = n_t + u·n`,
/// where `n` is the spatial part of the unit space-time normal and
/// `(∇u)_{ij} = ∂_j u_i`.
pub fn outflow_traction<T: Real>(u: [T; 2], p: T, grad: [[T; 2]; 2], nu: T, n: [T; 3]) -> [T; 2] {
    let beta = n[0] + u[0] * n[1] + u[1] * n[2];
    let inflow = beta - beta.max(T::zero());
    let mut g = [T::zero(); 2];
    for i in 0..2 {
        g[i] = inflow * u[i] + p * n[i + 1] - nu * (grad[i][0] * n[1] + grad[i][1] * n[2]);
    }
    g
}

/// Smooth solution on the deforming unit square:
/// `u = (e^t − 1)(sin πx1 sin πx2, cos πx1 cos πx2)`,
/// `p = (2 + cos t) sin πx1 cos πx2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Manufactured {
    pub nu: f64,
}

impl Manufactured {
    pub fn new(nu: f64) -> Self {
        Self { nu }
    }

    fn trig<T: Real>(x: [T; 3]) -> (T, T, T, T, T) {
        let pi = T::PI();
        let (s1, c1) = (pi * x[1]).sin_cos();
        let (s2, c2) = (pi * x[2]).sin_cos();
        (s1, c1, s2, c2, x[0].exp() - T::one())
    }

    /// `(∇u)_{ij} = ∂_j u_i`.
    pub fn velocity_gradient<T: Real>(&self, x: [T; 3]) -> [[T; 2]; 2] {
        let (s1, c1, s2, c2, e) = Self::trig(x);
        let pe = T::PI() * e;
        [[pe * c1 * s2, pe * s1 * c2], [-pe * s1 * c2, -pe * c1 * s2]]
    }
}

impl<T: Real> ExactSolution<T> for Manufactured {
    fn velocity(&self, x: [T; 3]) -> [T; 2] {
        let (s1, c1, s2, c2, e) = Self::trig(x);
        [e * s1 * s2, e * c1 * c2]
    }

    fn pressure(&self, x: [T; 3]) -> T {
        let pi = T::PI();
        (T::lit(2.0) + x[0].cos()) * (pi * x[1]).sin() * (pi * x[2]).cos()
    }
}

impl<T: Real> FlowData<T> for Manufactured {
    /// `∂_t u + (u·∇)u − νΔu + ∇p`, differentiated by hand.
    fn source(&self, x: [T; 3]) -> [T; 2] {
        let (s1, c1, s2, c2, e) = Self::trig(x);
        let pi = T::PI();
        let et = x[0].exp();
        let nu = T::lit(self.nu);
        let two = T::lit(2.0);
        let q = two + x[0].cos();
        let visc = two * nu * pi * pi * e;
        [
            et * s1 * s2 + e * e * pi * s1 * c1 + visc * s1 * s2 + q * pi * c1 * c2,
            et * c1 * c2 - e * e * pi * s2 * c2 + visc * c1 * c2 - q * pi * s1 * s2,
        ]
    }

    fn dirichlet(&self, x: [T; 3]) -> [T; 2] {
        self.velocity(x)
    }

    fn neumann(&self, x: [T; 3], n: [T; 3]) -> [T; 2] {
        outflow_traction(
            self.velocity(x),
            self.pressure(x),
            self.velocity_gradient(x),
            T::lit(self.nu),
            n,
        )
    }

    fn initial_velocity(&self, x: [T; 2]) -> [T; 2] {
        self.velocity([T::zero(), x[0], x[1]])
    }
}

/// Constant velocity and pressure; an exact solution on any moving mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformFlow {
    pub velocity: [f64; 2],
    pub pressure: f64,
}

impl Default for UniformFlow {
    fn default() -> Self {
        Self {
            velocity: [1.0, 0.5],
            pressure: 0.25,
        }
    }
}

impl<T: Real> ExactSolution<T> for UniformFlow {
    fn velocity(&self, _x: [T; 3]) -> [T; 2] {
        self.velocity.map(T::lit)
    }

    fn pressure(&self, _x: [T; 3]) -> T {
        T::lit(self.pressure)
    }
}

impl<T: Real> FlowData<T> for UniformFlow {
    fn source(&self, _x: [T; 3]) -> [T; 2] {
        [T::zero(); 2]
    }

    fn dirichlet(&self, x: [T; 3]) -> [T; 2] {
        self.velocity(x)
    }

    fn neumann(&self, x: [T; 3], n: [T; 3]) -> [T; 2] {
        let zero = [[T::zero(); 2]; 2];
        outflow_traction(self.velocity(x), self.pressure(x), zero, T::zero(), n)
    }

    fn initial_velocity(&self, _x: [T; 2]) -> [T; 2] {
        self.velocity.map(T::lit)
    }
}

/// Unforced flow with homogeneous Dirichlet data started from the curl of
/// `ψ = A sin²(πx1) sin²(πx2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyDecay {
    pub amplitude: f64,
}

impl Default for EnergyDecay {
    fn default() -> Self {
        Self { amplitude: 1.0 }
    }
}

impl<T: Real> FlowData<T> for EnergyDecay {
    fn source(&self, _x: [T; 3]) -> [T; 2] {
        [T::zero(); 2]
    }

    fn dirichlet(&self, _x: [T; 3]) -> [T; 2] {
        [T::zero(); 2]
    }

    fn neumann(&self, _x: [T; 3], _n: [T; 3]) -> [T; 2] {
        [T::zero(); 2]
    }

    /// `(∂_2 ψ, −∂_1 ψ)`.
    fn initial_velocity(&self, x: [T; 2]) -> [T; 2] {
        let pi = T::PI();
        let (s1, c1) = (pi * x[0]).sin_cos();
        let (s2, c2) = (pi * x[1]).sin_cos();
        let a = T::lit(2.0 * self.amplitude) * pi;
        [a * s1 * s1 * s2 * c2, -a * s1 * c1 * s2 * s2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_points(n: usize) -> Vec<[f64; 3]> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        (0..n)
            .map(|_| {
                [
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.0..1.0),
                ]
            })
            .collect()
    }

    fn shifted(x: [f64; 3], d: usize, h: f64) -> [f64; 3] {
        let mut y = x;
        y[d] += h;
        y
    }

    /// Fourth-order central difference of `f` along coordinate `d`.
    fn fd(f: &dyn Fn([f64; 3]) -> f64, x: [f64; 3], d: usize, h: f64) -> f64 {
        (f(shifted(x, d, -2.0 * h)) - 8.0 * f(shifted(x, d, -h)) + 8.0 * f(shifted(x, d, h))
            - f(shifted(x, d, 2.0 * h)))
            / (12.0 * h)
    }

    fn fd2(f: &dyn Fn([f64; 3]) -> f64, x: [f64; 3], d: usize, h: f64) -> f64 {
        (f(shifted(x, d, -h)) - 2.0 * f(x) + f(shifted(x, d, h))) / (h * h)
    }

    #[test]
    fn source_matches_finite_difference_of_the_momentum_equation() {
        for nu in [1e-4, 0.7] {
            let m = Manufactured::new(nu);
            for x in random_points(20) {
                let u = ExactSolution::<f64>::velocity(&m, x);
                let f = FlowData::<f64>::source(&m, x);
                for i in 0..2 {
                    let ui = |y: [f64; 3]| ExactSolution::<f64>::velocity(&m, y)[i];
                    let p = |y: [f64; 3]| ExactSolution::<f64>::pressure(&m, y);
                    let h = 1e-3;
                    let dt = fd(&ui, x, 0, h);
                    let adv = u[0] * fd(&ui, x, 1, h) + u[1] * fd(&ui, x, 2, h);
                    let lap = fd2(&ui, x, 1, 1e-4) + fd2(&ui, x, 2, 1e-4);
                    let grad_p = fd(&p, x, i + 1, h);
                    let oracle = dt + adv - nu * lap + grad_p;
                    assert!(
                        (f[i] - oracle).abs() < 1e-6,
                        "nu={nu} x={x:?} i={i}: {} vs {oracle}",
                        f[i]
                    );
                }
            }
        }
    }

    #[test]
    fn manufactured_velocity_vanishes_initially_and_is_solenoidal() {
        let m = Manufactured::new(1e-4);
        for x in random_points(10) {
            let u0 = FlowData::<f64>::initial_velocity(&m, [x[1], x[2]]);
            assert_eq!(u0, [0.0, 0.0]);
            let g = m.velocity_gradient(x);
            assert!((g[0][0] + g[1][1]).abs() < 1e-14);
            for i in 0..2 {
                for j in 0..2 {
                    let ui = |y: [f64; 3]| ExactSolution::<f64>::velocity(&m, y)[i];
                    assert!((g[i][j] - fd(&ui, x, j + 1, 1e-3)).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn outflow_traction_drops_convection_on_outflow() {
        let u = [2.0, -1.0];
        let grad = [[0.5, 1.0], [-2.0, -0.5]];
        // beta = 0 + 2 > 0: pure traction.
        let g = outflow_traction(u, 3.0, grad, 0.1, [0.0, 1.0, 0.0]);
        assert_eq!(g, [3.0 - 0.1 * 0.5, 0.2]);
        // beta = -1 - 2 = -3: inflow adds beta u.
        let g = outflow_traction(u, 0.0, [[0.0; 2]; 2], 0.0, [-1.0, -1.0, 0.0]);
        assert_eq!(g, [-6.0, 3.0]);
    }

    #[test]
    fn energy_decay_start_is_solenoidal_and_vanishes_on_the_square_boundary() {
        let d = EnergyDecay::default();
        let u = |y: [f64; 3]| FlowData::<f64>::initial_velocity(&d, [y[1], y[2]]);
        for x in random_points(10) {
            let div = fd(&|y| u(y)[0], x, 1, 1e-3) + fd(&|y| u(y)[1], x, 2, 1e-3);
            assert!(div.abs() < 1e-9, "{div}");
        }
        for s in [0.0, 0.3, 1.0] {
            for p in [[0.0, s], [1.0, s], [s, 0.0], [s, 1.0]] {
                let v = FlowData::<f64>::initial_velocity(&d, p);
                assert!(v[0].abs() < 1e-14 && v[1].abs() < 1e-14);
            }
        }
    }
}
