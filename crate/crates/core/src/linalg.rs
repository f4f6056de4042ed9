//! 3×3 complex blocks for the harmonic recursion.

use num_complex::Complex64;
use std::ops::{Add, Mul, Sub};

pub type Vec3 = [Complex64; 3];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[Complex64; 3]; 3]);

impl Mat3 {
    pub const fn zero() -> Self {
        Mat3([[ZERO; 3]; 3])
    }

    pub fn identity() -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            m.0[i][i] = ONE;
        }
        m
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut m = *self;
        m.0.iter_mut().flatten().for_each(|x| *x *= s);
        m
    }

    pub fn mul_vec(&self, v: &Vec3) -> Vec3 {
        let a = &self.0;
        [
            a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
            a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
            a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
        ]
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        self.0
            .iter()
            .map(|row| row.iter().map(|x| x.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// LU factorisation with partial pivoting; `None` when a pivot vanishes
    /// relative to the matrix norm.
    pub fn lu(&self) -> Option<Lu3> {
        let scale = self.norm_inf();
        if !(scale.is_finite() && scale > 0.0) {
            return None;
        }
        let mut a = self.0;
        let mut perm = [0usize, 1, 2];
        for col in 0..3 {
            let pivot = (col..3)
                .max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))
                .unwrap();
            if a[pivot][col].norm() <= 1e-14 * scale {
                return None;
            }
            a.swap(col, pivot);
            perm.swap(col, pivot);
            for row in col + 1..3 {
                let factor = a[row][col] / a[col][col];
                a[row][col] = factor;
                for k in col + 1..3 {
                    let upper = a[col][k];
                    a[row][k] -= factor * upper;
                }
            }
        }
        Some(Lu3 { a, perm })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Lu3 {
    a: [[Complex64; 3]; 3],
    perm: [usize; 3],
}

impl Lu3 {
    pub fn solve(&self, b: &Vec3) -> Vec3 {
        let a = &self.a;
        let mut y = [b[self.perm[0]], b[self.perm[1]], b[self.perm[2]]];
        for i in 1..3 {
            for k in 0..i {
                let l = a[i][k];
                y[i] -= l * y[k];
            }
        }
        for i in (0..3).rev() {
            for k in i + 1..3 {
                let u = a[i][k];
                y[i] -= u * y[k];
            }
            y[i] /= a[i][i];
        }
        y
    }

    /// X = A⁻¹·B column by column.
    pub fn solve_mat(&self, b: &Mat3) -> Mat3 {
        let mut out = Mat3::zero();
        for col in 0..3 {
            let x = self.solve(&[b.0[0][col], b.0[1][col], b.0[2][col]]);
            for row in 0..3 {
                out.0[row][col] = x[row];
            }
        }
        out
    }
}

impl Add for Mat3 {
    type Output = Mat3;
    fn add(mut self, rhs: Mat3) -> Mat3 {
        for i in 0..3 {
            for j in 0..3 {
                self.0[i][j] += rhs.0[i][j];
            }
        }
        self
    }
}

impl Sub for Mat3 {
    type Output = Mat3;
    fn sub(mut self, rhs: Mat3) -> Mat3 {
        for i in 0..3 {
            for j in 0..3 {
                self.0[i][j] -= rhs.0[i][j];
            }
        }
        self
    }
}

impl Mul for Mat3 {
    type Output = Mat3;
    fn mul(self, rhs: Mat3) -> Mat3 {
        let mut out = Mat3::zero();
        for i in 0..3 {
            for j in 0..3 {
                out.0[i][j] = (0..3).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        out
    }
}

pub fn vec_sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn vec_norm(v: &Vec3) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn solves_with_pivoting() {
        // Zero in the (0,0) slot forces a row swap.
        let m = Mat3([
            [c(0.0, 0.0), c(2.0, 1.0), c(1.0, 0.0)],
            [c(1.0, -1.0), c(0.5, 0.0), c(0.0, 3.0)],
            [c(4.0, 0.0), c(0.0, 0.0), c(-1.0, 2.0)],
        ]);
        let x = [c(1.0, 2.0), c(-0.5, 0.0), c(0.0, -1.0)];
        let b = m.mul_vec(&x);
        let got = m.lu().unwrap().solve(&b);
        for i in 0..3 {
            assert!((got[i] - x[i]).norm() < 1e-14);
        }
        let inv = m.lu().unwrap().solve_mat(&Mat3::identity());
        let id = m * inv;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((id.0[i][j] - c(want, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn singular_is_detected() {
        let m = Mat3([
            [c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)],
            [c(2.0, 0.0), c(4.0, 0.0), c(6.0, 0.0)],
            [c(0.0, 1.0), c(0.0, 0.0), c(1.0, 0.0)],
        ]);
        assert!(m.lu().is_none());
        assert!(Mat3::zero().lu().is_none());
    }
}
