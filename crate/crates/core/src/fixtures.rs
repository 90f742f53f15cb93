//! Reference potentials shared by the verification suite, tests and the demo.

use num_complex::Complex64;

use crate::dirac::{BlockSignature, Potential};
use crate::error::Result;
use crate::numerics::BlockMatrix;

fn scalar(z: Complex64) -> BlockMatrix {
    BlockMatrix::from_element(1, 1, z)
}

/// `v = ic` on `[0, a]`.
pub fn constant(c: f64, a: f64, h: f64) -> Result<Potential> {
    Potential::from_fn(BlockSignature::scalar(), a, h, move |_| {
        scalar(Complex64::new(0.0, c))
    })
}

/// Smooth complex bump `0.4 e^{-8(x - 0.4)^2} (1 + 0.5i)` on `[0, a]`.
pub fn gaussian_bump(a: f64, h: f64) -> Result<Potential> {
    Potential::from_fn(BlockSignature::scalar(), a, h, |x| {
        scalar(Complex64::new(1.0, 0.5) * (0.4 * (-8.0 * (x - 0.4).powi(2)).exp()))
    })
}

/// A `2 x 1` trigonometric potential on `[0, 1]` with `m1 = 2`, `m2 = 1`.
pub fn trig_matrix(h: f64) -> Result<Potential> {
    let sig = BlockSignature::new(2, 1)?;
    Potential::from_fn(sig, 1.0, h, |x| {
        let t = std::f64::consts::TAU * x;
        BlockMatrix::from_column_slice(
            2,
            1,
            &[
                Complex64::new(0.3 * t.cos(), 0.2 * t.sin()),
                Complex64::new(0.1, -0.25 * (0.5 * t).sin()),
            ],
        )
    })
}

/// Base profile shared by both members of a comparison pair.
fn pair_base(x: f64) -> Complex64 {
    Complex64::new(0.3 * (2.0 * x).cos(), 0.2 * x)
}

/// Two potentials on `[0, 2]` that coincide on `[0, split]` and differ by a
/// step of height `0.3i` on `(split, 2]`.
pub fn bm_pair(split: f64, h: f64) -> Result<(Potential, Potential)> {
    let p1 = Potential::from_fn(BlockSignature::scalar(), 2.0, h, |x| scalar(pair_base(x)))?;
    let p2 = Potential::from_fn(BlockSignature::scalar(), 2.0, h, move |x| {
        let bump = if x > split {
            Complex64::new(0.0, 0.3)
        } else {
            Complex64::new(0.0, 0.0)
        };
        scalar(pair_base(x) + bump)
    })?;
    Ok((p1, p2))
}

/// `J_1(t)` from its power series; accurate for the moderate arguments used here.
fn bessel_j1(t: f64) -> f64 {
    let mut term = t / 2.0;
    let mut sum = term;
    for k in 1..80 {
        term *= -(t / 2.0).powi(2) / (k as f64 * (k + 1) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// 𝒜 of `v = ic` at `x <= a`: `-J_1(2cx) / x`, with value `-c` at the origin.
pub fn constant_a_oracle(c: f64, x: f64) -> f64 {
    if x == 0.0 {
        -c
    } else {
        -bessel_j1(2.0 * c * x) / x
    }
}
