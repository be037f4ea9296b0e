//! Real embedding of complex decision variables.
//!
//! A complex vector `z` of length `n` is stored as `2n` reals laid out
//! `[re z_0, im z_0, re z_1, im z_1, ...]`.

use crate::channel::C64;

use super::LinearForm;

pub fn embed_complex(z: &[C64]) -> Vec<f64> {
    z.iter().flat_map(|c| [c.re, c.im]).collect()
}

pub fn lift_real(x: &[f64]) -> Vec<C64> {
    assert!(x.len() % 2 == 0, "real embedding must have even length");
    x.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect()
}

/// `constant + sum_j a_j z_j`, where `z_j` lives at reals `(off_j, off_j + 1)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ComplexAffine {
    pub terms: Vec<(usize, C64)>,
    pub constant: C64,
}

impl ComplexAffine {
    pub fn constant(c: C64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn push(&mut self, offset: usize, a: C64) {
        if a != C64::new(0.0, 0.0) {
            self.terms.push((offset, a));
        }
    }

    pub fn real_part(&self) -> LinearForm {
        let mut f = LinearForm::constant(self.constant.re);
        for &(o, a) in &self.terms {
            f.add(o, a.re);
            f.add(o + 1, -a.im);
        }
        f
    }

    pub fn imag_part(&self) -> LinearForm {
        let mut f = LinearForm::constant(self.constant.im);
        for &(o, a) in &self.terms {
            f.add(o, a.im);
            f.add(o + 1, a.re);
        }
        f
    }

    /// Real and imaginary parts, ready to be squared.
    pub fn parts(&self) -> [LinearForm; 2] {
        [self.real_part(), self.imag_part()]
    }

    pub fn eval(&self, x: &[f64]) -> C64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(o, a)| acc + a * C64::new(x[o], x[o + 1]))
    }
}
