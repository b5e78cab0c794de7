//! Fixed-step classical Runge-Kutta integration.

use crate::scalar::Scalar;

/// Reusable RK4 stepper for an autonomous system `x' = f(x)`.
///
/// Holds the stage buffers so a long simulation does not allocate per step.
pub struct Rk4<T> {
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    tmp: Vec<T>,
}

impl<T: Scalar> Rk4<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![T::zero(); dim],
            k2: vec![T::zero(); dim],
            k3: vec![T::zero(); dim],
            k4: vec![T::zero(); dim],
            tmp: vec![T::zero(); dim],
        }
    }

    /// Advance `x` by one step of size `h` in place.
    pub fn step<F>(&mut self, x: &mut [T], h: T, mut f: F)
    where
        F: FnMut(&[T], &mut [T]),
    {
        let half = h / T::lit(2.0);
        let sixth = h / T::lit(6.0);
        let two = T::lit(2.0);

        f(x, &mut self.k1);
        for ((t, &xi), &k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k1) {
            *t = xi + half * k;
        }
        f(&self.tmp, &mut self.k2);
        for ((t, &xi), &k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k2) {
            *t = xi + half * k;
        }
        f(&self.tmp, &mut self.k3);
        for ((t, &xi), &k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k3) {
            *t = xi + h * k;
        }
        f(&self.tmp, &mut self.k4);
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += sixth * (self.k1[i] + two * self.k2[i] + two * self.k3[i] + self.k4[i]);
        }
    }
}
