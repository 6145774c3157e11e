//! Forward-mode derivatives for Lyapunov functions.
//!
//! A [`Jet`] carries the value, the full phase-space gradient over
//! `(x, v, aux)` and the Laplacians restricted to the two noise blocks,
//! which is exactly what the generator needs. Products and compositions
//! propagate the block Laplacians through
//! `lap(fg) = f lap g + g lap f + 2 grad_b f . grad_b g` and
//! `lap phi(f) = phi' lap f + phi'' |grad_b f|^2`.

use std::ops::{Add, Mul, Neg, Sub};

use crate::processes::{Derivs, State};

#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub val: f64,
    pub grad: Vec<f64>,
    pub lap_v: f64,
    pub lap_a: f64,
    n: usize,
}

impl Jet {
    pub fn constant(c: f64, n: usize, m: usize) -> Self {
        Jet {
            val: c,
            grad: vec![0.0; m],
            lap_v: 0.0,
            lap_a: 0.0,
            n,
        }
    }

    /// Coordinate `i` of the flattened phase vector.
    pub fn coord(i: usize, val: f64, n: usize, m: usize) -> Self {
        let mut j = Jet::constant(val, n, m);
        j.grad[i] = 1.0;
        j
    }

    /// A function of positions only, given its value and `x`-gradient.
    pub fn of_x(val: f64, grad_x: &[f64], n: usize, m: usize) -> Self {
        let mut j = Jet::constant(val, n, m);
        j.grad[..n].copy_from_slice(grad_x);
        j
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn grad_x(&self) -> &[f64] {
        &self.grad[..self.n]
    }

    pub fn grad_v(&self) -> &[f64] {
        &self.grad[self.n..2 * self.n]
    }

    pub fn grad_aux(&self) -> &[f64] {
        &self.grad[2 * self.n..]
    }

    fn block_dots(&self, o: &Jet) -> (f64, f64) {
        let n = self.n;
        let dv = self.grad[n..2 * n]
            .iter()
            .zip(&o.grad[n..2 * n])
            .map(|(a, b)| a * b)
            .sum();
        let da = self.grad[2 * n..]
            .iter()
            .zip(&o.grad[2 * n..])
            .map(|(a, b)| a * b)
            .sum();
        (dv, da)
    }

    pub fn is_zero(&self) -> bool {
        self.val == 0.0 && self.lap_v == 0.0 && self.lap_a == 0.0 && self.grad.iter().all(|g| *g == 0.0)
    }

    /// `phi(self)` from `(phi, phi', phi'')` at `self.val`.
    pub fn map(&self, f: (f64, f64, f64)) -> Jet {
        let (f0, f1, f2) = f;
        let (gv, ga) = self.block_dots(self);
        Jet {
            val: f0,
            grad: self.grad.iter().map(|g| f1 * g).collect(),
            lap_v: f1 * self.lap_v + f2 * gv,
            lap_a: f1 * self.lap_a + f2 * ga,
            n: self.n,
        }
    }

    pub fn scale(&self, c: f64) -> Jet {
        Jet {
            val: c * self.val,
            grad: self.grad.iter().map(|g| c * g).collect(),
            lap_v: c * self.lap_v,
            lap_a: c * self.lap_a,
            n: self.n,
        }
    }

    pub fn add_const(&self, c: f64) -> Jet {
        let mut j = self.clone();
        j.val += c;
        j
    }

    pub fn sqrt(&self) -> Jet {
        let r = self.val.sqrt();
        self.map((r, 0.5 / r, -0.25 / (r * self.val)))
    }

    pub fn powf(&self, p: f64) -> Jet {
        let x = self.val;
        let xp = x.powf(p);
        self.map((xp, p * xp / x, p * (p - 1.0) * xp / (x * x)))
    }

    pub fn recip(&self) -> Jet {
        let x = self.val;
        self.map((1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x)))
    }

    pub fn exp(&self) -> Jet {
        let e = self.val.exp();
        self.map((e, e, e))
    }

    pub fn square(&self) -> Jet {
        let x = self.val;
        self.map((x * x, 2.0 * x, 2.0))
    }

    pub fn div(&self, o: &Jet) -> Jet {
        self * &o.recip()
    }

    /// `sum_i a_i b_i`.
    pub fn dot(a: &[Jet], b: &[Jet]) -> Jet {
        let mut it = a.iter().zip(b);
        let (a0, b0) = it.next().expect("empty dot product");
        let mut acc = a0 * b0;
        for (p, q) in it {
            acc = &acc + &(p * q);
        }
        acc
    }

    pub fn sum(items: &[Jet]) -> Jet {
        let mut acc = items[0].clone();
        for j in &items[1..] {
            acc = &acc + j;
        }
        acc
    }

    pub fn to_derivs(&self) -> Derivs {
        Derivs {
            value: self.val,
            grad_x: self.grad_x().to_vec(),
            grad_v: self.grad_v().to_vec(),
            grad_aux: self.grad_aux().to_vec(),
            lap_v: self.lap_v,
            lap_aux: self.lap_a,
        }
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, o: &Jet) -> Jet {
        Jet {
            val: self.val + o.val,
            grad: self.grad.iter().zip(&o.grad).map(|(a, b)| a + b).collect(),
            lap_v: self.lap_v + o.lap_v,
            lap_a: self.lap_a + o.lap_a,
            n: self.n,
        }
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, o: &Jet) -> Jet {
        Jet {
            val: self.val - o.val,
            grad: self.grad.iter().zip(&o.grad).map(|(a, b)| a - b).collect(),
            lap_v: self.lap_v - o.lap_v,
            lap_a: self.lap_a - o.lap_a,
            n: self.n,
        }
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, o: &Jet) -> Jet {
        let (dv, da) = self.block_dots(o);
        Jet {
            val: self.val * o.val,
            grad: self
                .grad
                .iter()
                .zip(&o.grad)
                .map(|(a, b)| self.val * b + o.val * a)
                .collect(),
            lap_v: self.val * o.lap_v + o.val * self.lap_v + 2.0 * dv,
            lap_a: self.val * o.lap_a + o.val * self.lap_a + 2.0 * da,
            n: self.n,
        }
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

/// Coordinate jets of a state: `(x_i, v_i, aux_j)`.
pub struct Coords {
    pub x: Vec<Jet>,
    pub v: Vec<Jet>,
    pub aux: Vec<Jet>,
    pub n: usize,
    pub m: usize,
}

impl Coords {
    pub fn new(s: &State) -> Self {
        let n = s.x.len();
        let m = 2 * n + s.aux.len();
        Coords {
            x: (0..n).map(|i| Jet::coord(i, s.x[i], n, m)).collect(),
            v: (0..n).map(|i| Jet::coord(n + i, s.v[i], n, m)).collect(),
            aux: (0..s.aux.len())
                .map(|i| Jet::coord(2 * n + i, s.aux[i], n, m))
                .collect(),
            n,
            m,
        }
    }

    pub fn constant(&self, c: f64) -> Jet {
        Jet::constant(c, self.n, self.m)
    }

    pub fn of_x(&self, val: f64, grad_x: &[f64]) -> Jet {
        Jet::of_x(val, grad_x, self.n, self.m)
    }

    /// `|v|^2 / 2`.
    pub fn half_sq(items: &[Jet]) -> Jet {
        Jet::dot(items, items).scale(0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_laplacian() {
        // f = v0^2 * v1 at (v0, v1) = (2, 3): lap_v = 2 v1 = 6.
        let s = State::new(vec![0.0, 0.0], vec![2.0, 3.0], vec![]);
        let c = Coords::new(&s);
        let f = &c.v[0].square() * &c.v[1];
        assert_eq!(f.val, 12.0);
        assert_eq!(f.lap_v, 6.0);
        assert_eq!(f.grad_v(), &[12.0, 4.0]);
    }

    #[test]
    fn chain_laplacian() {
        // sqrt(1 + |v|^2) at v = (1, 1): lap = (n + (n-1)|v|^2)/r^3 with n = 2.
        let s = State::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![]);
        let c = Coords::new(&s);
        let f = Jet::dot(&c.v, &c.v).add_const(1.0).sqrt();
        let r = 3f64.sqrt();
        assert!((f.lap_v - (2.0 + 2.0) / (r * r * r)).abs() < 1e-14);
    }
}
