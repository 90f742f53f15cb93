//! Local uniqueness comparator: how fast two Weyl functions approach each
//! other along a ray, and the agreement length that rate implies.

use num_complex::Complex64;

use crate::dirac::Potential;
use crate::error::{Error, Result};
use crate::numerics::{operator_norm, BlockMatrix};
use crate::par;
use crate::weyl::{weyl_truncated_batch, DEFAULT_MAX_STEP};

/// Differences below this are treated as identical.
pub const DIFFERENCE_FLOOR: f64 = 1e-12;

/// Default radii `η` for `z = cη + iη`.
pub const DEFAULT_RADII: [f64; 9] = [2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];

/// Weyl differences `‖φ(z) - φ̃(z)‖` at `z = cη + iη`.
#[derive(Debug, Clone, PartialEq)]
pub struct RaySamples {
    pub c: f64,
    pub radii: Vec<f64>,
    pub differences: Vec<f64>,
    /// Larger of the two support bounds.
    pub support: f64,
}

impl RaySamples {
    pub fn new(c: f64, radii: Vec<f64>, differences: Vec<f64>, support: f64) -> Result<Self> {
        if radii.len() != differences.len() {
            return Err(Error::validation("radii and differences differ in length"));
        }
        if radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("radii must be strictly increasing"));
        }
        if differences.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::validation("differences must be nonnegative"));
        }
        Ok(Self {
            c,
            radii,
            differences,
            support,
        })
    }
}

/// Evaluates both Weyl functions along the ray `Re z = c Im z`.
pub fn weyl_difference_ray(
    p1: &Potential,
    p2: &Potential,
    c: f64,
    radii: &[f64],
) -> Result<RaySamples> {
    if p1.signature() != p2.signature() {
        return Err(Error::validation(
            "potentials have different block signatures",
        ));
    }
    if let Some(r) = radii.iter().find(|r| !(**r >= 1.0)) {
        return Err(Error::validation(format!(
            "radii must be at least 1, got {r}"
        )));
    }
    let zs: Vec<Complex64> = radii
        .iter()
        .map(|&eta| Complex64::new(c * eta, eta))
        .collect();
    let step = DEFAULT_MAX_STEP.min(p1.spacing()).min(p2.spacing());
    let both = par::try_map_range(2, |k| {
        let p = if k == 0 { p1 } else { p2 };
        weyl_truncated_batch(p, &zs, step)
    })?;
    let differences = both[0]
        .iter()
        .zip(&both[1])
        .map(|(a, b)| operator_norm(&(&a.phi - &b.phi as &BlockMatrix)))
        .collect();
    RaySamples::new(
        c,
        radii.to_vec(),
        differences,
        p1.support().max(p2.support()),
    )
}

/// Result of [`estimate_agreement_length`].
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementEstimate {
    /// Estimated length `T` of the interval where the potentials agree.
    pub length: f64,
    /// Every difference sat at the floor; `length` is the support bound.
    pub total_agreement: bool,
    /// RMS deviation of the fit in `ln ‖Δφ‖`.
    pub fit_residual: f64,
    pub warning: Option<String>,
}

/// Fits `ln ‖Δφ(η)‖ = -2Tη - p ln η + b` over the samples above the floor.
///
/// The algebraic factor `η^{-p}` absorbs the regularity of the first
/// difference; without it the slope is biased toward zero at small `η`.
pub fn estimate_agreement_length(samples: &RaySamples) -> Result<AgreementEstimate> {
    let pts: Vec<(f64, f64)> = samples
        .radii
        .iter()
        .zip(&samples.differences)
        .filter(|(_, d)| **d > DIFFERENCE_FLOOR)
        .map(|(r, d)| (*r, d.ln()))
        .collect();
    if pts.is_empty() {
        return Ok(AgreementEstimate {
            length: samples.support,
            total_agreement: true,
            fit_residual: 0.0,
            warning: None,
        });
    }
    if pts.len() < 4 {
        return Err(Error::validation(format!(
            "need at least 4 radii above the floor {DIFFERENCE_FLOOR:.0e}, have {}",
            pts.len()
        )));
    }
    let design = nalgebra::DMatrix::from_fn(pts.len(), 3, |r, c| match c {
        0 => -2.0 * pts[r].0,
        1 => -pts[r].0.ln(),
        _ => 1.0,
    });
    let rhs = nalgebra::DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1));
    let coef = design
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::numerical(format!("agreement fit failed: {e}")))?;
    let resid = &design * &coef - &rhs;
    let fit_residual = (resid.norm_squared() / pts.len() as f64).sqrt();
    let warning = (fit_residual > 0.2).then(|| {
        format!("decay is noisy or non-monotone: fit residual {fit_residual:.3} exceeds 0.2")
    });
    Ok(AgreementEstimate {
        length: coef[0],
        total_agreement: false,
        fit_residual,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirac::BlockSignature;
    use crate::fixtures;

    #[test]
    fn identical_potentials_give_sentinel() {
        let p = fixtures::gaussian_bump(1.0, 1e-2).unwrap();
        let s = weyl_difference_ray(&p, &p, 0.0, &DEFAULT_RADII).unwrap();
        assert!(s.differences.iter().all(|d| *d == 0.0));
        let est = estimate_agreement_length(&s).unwrap();
        assert!(est.total_agreement);
        assert_eq!(est.length, 1.0);
    }

    #[test]
    fn synthetic_decay_is_recovered() {
        let radii: Vec<f64> = DEFAULT_RADII.to_vec();
        let d = radii
            .iter()
            .map(|e| 0.3 * (-2.0 * 0.7 * e).exp() / e.powi(2))
            .collect();
        let s = RaySamples::new(0.0, radii, d, 2.0).unwrap();
        let est = estimate_agreement_length(&s).unwrap();
        assert!((est.length - 0.7).abs() < 1e-10);
        assert!(est.fit_residual < 1e-10 && est.warning.is_none());
    }

    #[test]
    fn noisy_decay_warns() {
        let radii: Vec<f64> = DEFAULT_RADII.to_vec();
        let d = radii
            .iter()
            .enumerate()
            .map(|(k, e)| (-2.0 * e).exp() * if k % 2 == 0 { 5.0 } else { 0.2 })
            .collect();
        let est = estimate_agreement_length(&RaySamples::new(0.0, radii, d, 2.0).unwrap()).unwrap();
        assert!(est.warning.is_some());
    }

    #[test]
    fn validation() {
        assert!(RaySamples::new(0.0, vec![2.0, 1.0], vec![0.0, 0.0], 1.0).is_err());
        assert!(RaySamples::new(0.0, vec![1.0, 2.0], vec![0.0, -1.0], 1.0).is_err());
        let p = Potential::zero(BlockSignature::scalar(), 1.0, 0.1).unwrap();
        assert!(weyl_difference_ray(&p, &p, 0.0, &[0.5, 2.0]).is_err());
        let few = RaySamples::new(0.0, vec![1.0, 2.0, 3.0], vec![1e-2, 1e-3, 1e-4], 1.0).unwrap();
        assert!(estimate_agreement_length(&few).is_err());
    }

    #[test]
    fn swap_symmetry() {
        let (p1, p2) = fixtures::bm_pair(1.0, 1e-2).unwrap();
        let a = weyl_difference_ray(&p1, &p2, 0.5, &[2.0, 4.0]).unwrap();
        let b = weyl_difference_ray(&p2, &p1, 0.5, &[2.0, 4.0]).unwrap();
        assert_eq!(a.differences, b.differences);
    }
}
