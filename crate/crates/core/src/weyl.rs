//! Weyl–Titchmarsh function by truncation, transfer, Riccati flow and
//! Neumann series, plus the constant-potential closed form.

use num_complex::Complex64;

use crate::afunction::series_terms;
use crate::dirac::{branch_sqrt, flat_to_block, Potential, Propagator};
use crate::error::{Error, Result};
use crate::numerics::{operator_norm, solve_dense, BlockMatrix};
use crate::par;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest RK4 step used by the Weyl routes.
pub const DEFAULT_MAX_STEP: f64 = 1e-3;

/// A point `z` in the upper half-plane and the `m2 x m1` value `φ(z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeylSample {
    pub z: Complex64,
    pub phi: BlockMatrix,
}

impl WeylSample {
    pub fn norm(&self) -> f64 {
        operator_norm(&self.phi)
    }

    pub fn is_contractive(&self, slack: f64) -> bool {
        self.norm() <= 1.0 + slack
    }
}

fn require_upper(z: Complex64) -> Result<()> {
    if !(z.im > 0.0) || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::validation(format!("z = {z} must satisfy Im z > 0")));
    }
    Ok(())
}

/// `φ` from the lower block row of `u_0(a, z)`.
fn phi_from_transfer(
    flat: &[Complex64],
    m1: usize,
    m2: usize,
    z: Complex64,
) -> Result<BlockMatrix> {
    let m = m1 + m2;
    let u = flat_to_block(flat, m, m);
    let u21 = u.view((m1, 0), (m2, m1)).into_owned();
    let u22 = u.view((m1, m1), (m2, m2)).into_owned();
    let x = solve_dense(&u22, &u21).map_err(|e| match e {
        Error::Numerical(msg) => Error::numerical(format!("u22(a, {z}) is singular: {msg}")),
        other => other,
    })?;
    Ok(-x)
}

/// `φ(z) = -u22(a, z)^{-1} u21(a, z)` for a potential supported on `[0, a]`.
pub fn weyl_truncated(potential: &Potential, z: Complex64) -> Result<WeylSample> {
    weyl_truncated_with_step(potential, z, DEFAULT_MAX_STEP)
}

pub fn weyl_truncated_with_step(
    potential: &Potential,
    z: Complex64,
    max_step: f64,
) -> Result<WeylSample> {
    Ok(weyl_truncated_batch(potential, &[z], max_step)?.remove(0))
}

/// [`weyl_truncated`] over many `z`, sharing one tabulation of the potential.
pub fn weyl_truncated_batch(
    potential: &Potential,
    zs: &[Complex64],
    max_step: f64,
) -> Result<Vec<WeylSample>> {
    for &z in zs {
        require_upper(z)?;
    }
    let sig = potential.signature();
    if potential.samples().len() < 2 {
        return Ok(zs
            .iter()
            .map(|&z| WeylSample {
                z,
                phi: BlockMatrix::zeros(sig.m2, sig.m1),
            })
            .collect());
    }
    let prop = Propagator::new(potential, max_step.min(potential.spacing()));
    par::try_map_range(zs.len(), |k| {
        let z = zs[k];
        let u = prop.transfer(z);
        if u.iter().any(|w| !w.re.is_finite() || !w.im.is_finite()) {
            return Err(Error::numerical(format!(
                "fundamental solution overflowed on [0, {}] for z = {z}",
                potential.support()
            )));
        }
        Ok(WeylSample {
            z,
            phi: phi_from_transfer(&u, sig.m1, sig.m2, z)?,
        })
    })
}

/// `φ_ℓ = (u21 + u22 φ_0)(u11 + u12 φ_0)^{-1}` with `u = u_0(ℓ, z)`.
pub fn weyl_transfer(phi0: &WeylSample, u_at_ell: &BlockMatrix) -> Result<WeylSample> {
    let (m2, m1) = phi0.phi.shape();
    let m = m1 + m2;
    if u_at_ell.shape() != (m, m) {
        return Err(Error::validation(format!(
            "transfer matrix has shape {:?}, expected ({m}, {m})",
            u_at_ell.shape()
        )));
    }
    let u11 = u_at_ell.view((0, 0), (m1, m1));
    let u12 = u_at_ell.view((0, m1), (m1, m2));
    let u21 = u_at_ell.view((m1, 0), (m2, m1));
    let u22 = u_at_ell.view((m1, m1), (m2, m2));
    let den = u11 + u12 * &phi0.phi;
    let num = u21 + u22 * &phi0.phi;
    // X den = num  <=>  den^T X^T = num^T
    let xt = solve_dense(&den.transpose(), &num.transpose()).map_err(|e| match e {
        Error::Numerical(msg) => Error::numerical(format!(
            "invalid Weyl data, singular transfer denominator: {msg}"
        )),
        other => other,
    })?;
    Ok(WeylSample {
        z: phi0.z,
        phi: xt.transpose(),
    })
}

/// Right-hand side `-i(φ v φ + v^* + 2zφ)` of the Riccati flow in `ℓ`.
pub fn riccati_derivative(
    phi: &WeylSample,
    v_at_ell: &BlockMatrix,
    z: Complex64,
) -> Result<BlockMatrix> {
    let (m2, m1) = phi.phi.shape();
    if v_at_ell.shape() != (m1, m2) {
        return Err(Error::validation(format!(
            "v has shape {:?}, expected ({m1}, {m2})",
            v_at_ell.shape()
        )));
    }
    let p = &phi.phi;
    Ok((p * v_at_ell * p + v_at_ell.adjoint() + p * (z * 2.0)) * (-I))
}

/// Closed-form `φ` for `v = i c` on `[0, a]`:
/// `i c (1 - e^{2iaq}) / (z + q - (z - q) e^{2iaq})` with `q = (z^2 - c^2)^{1/2}`, `Im q > 0`.
pub fn weyl_constant_closed_form(c: f64, a: f64, z: Complex64) -> Result<WeylSample> {
    closed_form_impl(c, a, z, false)
}

/// Closed form with the branch of `q` deliberately flipped in the linear
/// terms only; used as a mutation check for the verification suite.
#[doc(hidden)]
pub fn weyl_constant_closed_form_flipped(c: f64, a: f64, z: Complex64) -> Result<WeylSample> {
    closed_form_impl(c, a, z, true)
}

fn closed_form_impl(c: f64, a: f64, z: Complex64, flip: bool) -> Result<WeylSample> {
    require_upper(z)?;
    if !(c >= 0.0) || !(a >= 0.0) {
        return Err(Error::validation(format!(
            "need c >= 0 and a >= 0, got c = {c}, a = {a}"
        )));
    }
    let w = z * z - c * c;
    if w.norm() <= 1e-14 * (1.0 + z.norm_sqr()) {
        return Err(Error::validation(format!(
            "z = {z} is a branch point for c = {c}"
        )));
    }
    let q = branch_sqrt(w);
    let e = (I * 2.0 * a * q).exp();
    let ql = if flip { -q } else { q };
    let den = z + ql - (z - ql) * e;
    if den.norm() == 0.0 {
        return Err(Error::numerical(format!(
            "closed-form denominator vanishes at z = {z}"
        )));
    }
    let phi = I * c * (1.0 - e) / den;
    Ok(WeylSample {
        z,
        phi: BlockMatrix::from_element(1, 1, phi),
    })
}

/// Convergence threshold `max(√2 c, a c^2 / 2)` for the Neumann series.
pub fn neumann_threshold(c: f64, a: f64) -> f64 {
    (2f64.sqrt() * c).max(0.5 * a * c * c)
}

/// `φ ≈ -Σ_{k ≤ kmax} M_{2k+1}` with `M_{2k+1} = ∫ e^{2izα} 𝒜_k(α) dα`.
pub fn weyl_neumann_series(potential: &Potential, z: Complex64, kmax: usize) -> Result<WeylSample> {
    require_upper(z)?;
    if kmax > 3 {
        return Err(Error::validation(format!(
            "kmax = {kmax} exceeds the cap of 3"
        )));
    }
    let a = potential.support();
    let c = potential.sup_norm();
    let need = neumann_threshold(c, a);
    if z.im < need {
        return Err(Error::validation(format!(
            "Im z = {} is outside the convergence region, need Im z >= {need}",
            z.im
        )));
    }
    let sig = potential.signature();
    let mut phi = BlockMatrix::zeros(sig.m2, sig.m1);
    if potential.samples().len() < 2 {
        return Ok(WeylSample { z, phi });
    }
    let h = potential.spacing();
    let cap = (kmax + 1) as f64 * a;
    let terms = series_terms(potential, kmax, h, cap)?;
    // Exact integration of e^{2izα} against the piecewise-linear interpolant of each term.
    let p = I * 2.0 * z;
    let e = (p * h).exp();
    let m0 = (e - 1.0) / p;
    let m1 = (e * h / p - (e - 1.0) / (p * p)) / h;
    let (w_left, w_right) = (m0 - m1, m1);
    // 𝒜_0 jumps to zero past the support; the higher terms are continuous.
    let nx = potential.samples().len();
    for (k, term) in terms.iter().enumerate() {
        let len = if k == 0 { nx } else { term.len() };
        let mut phase = Complex64::from(1.0);
        for pair in term[..len].windows(2) {
            phi -= (&pair[0] * w_left + &pair[1] * w_right) * phase;
            phase *= e;
        }
    }
    Ok(WeylSample { z, phi })
}

/// Free resolvent kernel `i e^{iz|x-x'|} diag(I_{m1}, 0)` for `x > x'` and
/// `i e^{iz|x-x'|} diag(0, I_{m2})` for `x < x'`.
pub fn greens_kernel_free(
    m1: usize,
    m2: usize,
    z: Complex64,
    x: f64,
    xp: f64,
) -> Result<BlockMatrix> {
    if x == xp {
        return Err(Error::validation("free kernel is discontinuous on x = x'"));
    }
    let m = m1 + m2;
    let f = I * (I * z * (x - xp).abs()).exp();
    let mut g = BlockMatrix::zeros(m, m);
    let range = if x > xp { 0..m1 } else { m1..m };
    for k in range {
        g[(k, k)] = f;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirac::{fundamental_solution, shift_potential, BlockSignature};
    use crate::numerics::make_uniform_grid;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn constant(cval: f64, a: f64, h: f64) -> Potential {
        Potential::from_fn(BlockSignature::scalar(), a, h, move |_| {
            BlockMatrix::from_element(1, 1, c(0.0, cval))
        })
        .unwrap()
    }

    #[test]
    fn zero_potential_gives_zero() {
        let sig = BlockSignature::new(2, 1).unwrap();
        let p = Potential::zero(sig, 1.0, 0.01).unwrap();
        let w = weyl_truncated(&p, c(0.3, 1.0)).unwrap();
        assert_eq!(w.phi.shape(), (1, 2));
        assert!(w.phi.norm() < 1e-14);
        assert!(weyl_truncated(&p, c(0.3, 0.0)).is_err());
    }

    #[test]
    fn truncated_matches_closed_form() {
        let p = constant(1.0, 1.0, 1e-3);
        for z in [c(0.0, 1.0), c(0.0, 2.0), c(1.0, 2.0)] {
            let t = weyl_truncated(&p, z).unwrap();
            let f = weyl_constant_closed_form(1.0, 1.0, z).unwrap();
            assert!((t.phi - f.phi).norm() < 1e-6, "z = {z}");
        }
    }

    #[test]
    fn closed_form_carries_length_factor() {
        let p = constant(1.0, 0.5, 1e-3);
        let z = c(0.4, 1.5);
        let t = weyl_truncated(&p, z).unwrap();
        let f = weyl_constant_closed_form(1.0, 0.5, z).unwrap();
        assert!((t.phi - f.phi).norm() < 1e-6);
    }

    #[test]
    fn closed_form_limits() {
        let z = c(0.2, 2.0);
        assert!(weyl_constant_closed_form(1e-10, 1.0, z).unwrap().phi.norm() < 1e-9);
        assert!(weyl_constant_closed_form(1.0, 0.0, z).unwrap().phi.norm() < 1e-15);
        assert!(weyl_constant_closed_form(1.0, 1.0, c(1.0, 0.0)).is_err());
        // Long support: approaches the stationary root i(z - q)/c.
        let long = weyl_constant_closed_form(1.0, 40.0, z).unwrap().phi[(0, 0)];
        let q = branch_sqrt(z * z - 1.0);
        assert!((long - I * (z - q)).norm() < 1e-12);
    }

    #[test]
    fn flipped_branch_disagrees() {
        let z = c(0.0, 2.0);
        let good = weyl_constant_closed_form(1.0, 1.0, z).unwrap();
        let bad = weyl_constant_closed_form_flipped(1.0, 1.0, z).unwrap();
        assert!((good.phi - bad.phi).norm() > 1e-2);
    }

    #[test]
    fn contractive_matrix_case() {
        let sig = BlockSignature::new(2, 1).unwrap();
        let p = Potential::from_fn(sig, 1.0, 1e-3, |x| {
            BlockMatrix::from_row_slice(2, 1, &[c(0.3 * x.cos(), 0.1), c(-0.2, 0.25 * x)])
        })
        .unwrap();
        let w = weyl_truncated(&p, c(0.0, 3.0)).unwrap();
        assert!(w.is_contractive(0.0));
    }

    #[test]
    fn transfer_examples() {
        let phi0 = WeylSample {
            z: c(0.0, 1.0),
            phi: BlockMatrix::from_element(1, 1, c(0.2, -0.1)),
        };
        assert_eq!(
            weyl_transfer(&phi0, &BlockMatrix::identity(2, 2)).unwrap(),
            phi0
        );
        let z = c(0.5, 1.0);
        let zero = WeylSample {
            z,
            phi: BlockMatrix::zeros(1, 1),
        };
        let u = BlockMatrix::from_row_slice(
            2,
            2,
            &[
                (I * z * 0.5).exp(),
                0.0.into(),
                0.0.into(),
                (-I * z * 0.5).exp(),
            ],
        );
        assert!(weyl_transfer(&zero, &u).unwrap().phi.norm() == 0.0);
    }

    #[test]
    fn transfer_matches_shifted_system() {
        let p = constant(1.0, 1.0, 1e-3);
        let z = c(0.5, 2.0);
        let phi0 = weyl_constant_closed_form(1.0, 1.0, z).unwrap();
        let u = crate::dirac::closed_form_fundamental_constant(1.0, 1.0, z, 0.5).unwrap();
        let moved = weyl_transfer(&phi0, &u).unwrap();
        let shifted = weyl_truncated(&shift_potential(&p, 0.5).unwrap(), z).unwrap();
        assert!((moved.phi - shifted.phi).norm() < 1e-6);
    }

    #[test]
    fn riccati_examples() {
        let z = c(0.0, 2.0);
        let v = BlockMatrix::from_element(1, 1, c(0.3, 0.4));
        let zero = WeylSample {
            z,
            phi: BlockMatrix::zeros(1, 1),
        };
        let d = riccati_derivative(&zero, &v, z).unwrap();
        assert!((d - v.adjoint() * (-I)).norm() < 1e-15);
        let phi = WeylSample {
            z,
            phi: BlockMatrix::from_element(1, 1, c(0.1, 0.2)),
        };
        let d = riccati_derivative(&phi, &BlockMatrix::zeros(1, 1), z).unwrap();
        assert!((d - &phi.phi * (-I * 2.0 * z)).norm() < 1e-15);
        assert!(riccati_derivative(&phi, &BlockMatrix::zeros(2, 1), z).is_err());
    }

    #[test]
    fn riccati_matches_central_difference() {
        let p = constant(1.0, 1.0, 1e-3);
        let z = c(0.0, 2.0);
        let h = 1e-3;
        let at = |l: f64| weyl_truncated(&shift_potential(&p, l).unwrap(), z).unwrap();
        let l = 0.3;
        let fd = (at(l + h).phi - at(l - h).phi) / Complex64::from(2.0 * h);
        let rhs = riccati_derivative(&at(l), &p.value_at(l), z).unwrap();
        assert!((fd - &rhs).norm() <= 1e-4 * rhs.norm());
    }

    #[test]
    fn neumann_examples() {
        let p = Potential::from_fn(BlockSignature::scalar(), 1.0, 1e-3, |x| {
            BlockMatrix::from_element(1, 1, c(0.2 * x, 0.1))
        })
        .unwrap();
        let z = c(0.5, 3.0);
        // Leading term i ∫_0^1 e^{2izx} (0.2x - 0.1i) dx in closed form.
        let m1 = weyl_neumann_series(&p, z, 0).unwrap();
        let q = I * 2.0 * z;
        let e = q.exp();
        let int1 = (e - 1.0) / q;
        let intx = e / q - (e - 1.0) / (q * q);
        let exact = I * (intx * 0.2 - I * 0.1 * int1);
        assert!((m1.phi[(0, 0)] - exact).norm() < 1e-12);

        let zero = Potential::zero(BlockSignature::scalar(), 1.0, 0.01).unwrap();
        assert!(weyl_neumann_series(&zero, z, 3).unwrap().phi.norm() == 0.0);
        assert!(weyl_neumann_series(&p, z, 4).is_err());
    }

    #[test]
    fn neumann_converges_to_truncated() {
        let p = constant(0.3, 1.0, 2e-3);
        let z = c(0.0, 3.0);
        let exact = weyl_truncated(&p, z).unwrap().phi;
        let errs: Vec<f64> = (0..=2)
            .map(|k| (weyl_neumann_series(&p, z, k).unwrap().phi - &exact).norm())
            .collect();
        assert!(errs[2] < 1e-3, "{errs:?}");
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        let big = constant(3.0, 1.0, 1e-2);
        assert!(matches!(
            weyl_neumann_series(&big, z, 1),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn high_energy_decay_is_bounded() {
        let p = constant(1.0, 1.0, 1e-3);
        let scaled: Vec<f64> = [4.0, 8.0, 16.0, 32.0]
            .iter()
            .map(|&eta| eta * weyl_truncated(&p, c(0.0, eta)).unwrap().norm())
            .collect();
        for s in &scaled {
            assert!(*s < 1.0, "{scaled:?}");
        }
    }

    #[test]
    fn free_kernel_cases() {
        let z = c(0.0, 1.0);
        let g = greens_kernel_free(1, 2, z, 1.5, 0.5).unwrap();
        assert!((g[(0, 0)] - I * (-1f64).exp()).norm() < 1e-15);
        assert_eq!(g[(1, 1)], Complex64::from(0.0));
        let g = greens_kernel_free(1, 2, z, 0.5, 1.5).unwrap();
        assert_eq!(g[(0, 0)], Complex64::from(0.0));
        assert!((g[(2, 2)] - I * (-1f64).exp()).norm() < 1e-15);
        assert!(greens_kernel_free(1, 1, z, 0.3, 0.3).is_err());
        for d in [0.1, 1.0, 3.0] {
            let g = greens_kernel_free(2, 2, c(0.7, 0.8), d, 0.0).unwrap();
            assert!(operator_norm(&g) <= (-0.8 * d).exp() + 1e-15);
        }
    }

    #[test]
    fn fundamental_solution_and_truncation_agree() {
        let p = constant(0.7, 1.0, 1e-3);
        let z = c(0.3, 1.2);
        let g = make_uniform_grid(1.0, 11).unwrap();
        let u = fundamental_solution(&p, z, &g, 0.0).unwrap();
        let ua = u.at(10);
        let phi = -ua.view((1, 1), (1, 1)).try_inverse().unwrap() * ua.view((1, 0), (1, 1));
        assert!((phi - weyl_truncated(&p, z).unwrap().phi).norm() < 1e-10);
    }
}
