//! The acceptance suite: twelve criteria, each reported as measured value,
//! required bound and verdict.

use num_complex::Complex64;
use serde::Serialize;

use crate::aeq::{a_equation_residual, solve_a_equation, AField};
use crate::afunction::{a_direct_series, a_field_direct, FieldMethod, FourierConfig};
use crate::bm::{estimate_agreement_length, weyl_difference_ray, DEFAULT_RADII};
use crate::dirac::{fundamental_solution, shift_potential, Potential};
use crate::error::Result;
use crate::fixtures;
use crate::krein::{
    build_s_kernel, check_positivity, e_phi_kernel, factorization_residual, recover_v_field,
    recover_v_krein, EPhiMethod,
};
use crate::numerics::{make_uniform_grid, BlockMatrix, Grid};
use crate::par;
use crate::weyl::{
    riccati_derivative, weyl_constant_closed_form, weyl_constant_closed_form_flipped,
    weyl_transfer, weyl_truncated, weyl_truncated_batch, DEFAULT_MAX_STEP,
};

/// One line of the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub name: String,
    /// Headline measurement; `NaN` (serialized as `null`) when the run errored.
    pub measured: f64,
    pub required: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

/// Knobs for mutation testing of the suite itself.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct VerifyOptions {
    /// Evaluate the closed form with the wrong branch of `q`.
    pub inject_branch_flip: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub criteria: Vec<CriterionReport>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }
}

type Check = fn(&VerifyOptions) -> CriterionReport;

/// Every criterion in report order.
pub const CRITERIA: [(&str, Check); 12] = [
    ("closed-form Weyl agreement", closed_form_agreement),
    ("contractivity", contractivity),
    ("Riccati consistency", riccati_consistency),
    ("transfer consistency", transfer_consistency),
    ("edge identity", edge_identity),
    ("A-equation residual", a_equation_residual_check),
    ("inverse round trip, evolution route", round_trip_evolution),
    ("inverse round trip, Krein route", round_trip_krein),
    ("positivity threshold", positivity_threshold),
    ("factorization residual", factorization),
    ("Borg-Marchenko agreement length", borg_marchenko),
    ("determinism", determinism),
];

pub fn run_verify(opts: &VerifyOptions) -> VerifyReport {
    VerifyReport {
        criteria: CRITERIA.iter().map(|(_, f)| f(opts)).collect(),
    }
}

/// Builds a report from a fallible measurement `(measured, pass, detail)`.
fn guard(
    name: &str,
    required: &str,
    f: impl FnOnce() -> Result<(f64, bool, String)>,
) -> CriterionReport {
    match f() {
        Ok((measured, pass, detail)) => CriterionReport {
            name: name.into(),
            measured,
            required: required.into(),
            pass: pass && measured.is_finite(),
            detail,
        },
        Err(e) => CriterionReport {
            name: name.into(),
            measured: f64::NAN,
            required: required.into(),
            pass: false,
            detail: e.to_string(),
        },
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `sup_{x_j <= upto} ‖v(x_j) - truth(x_j)‖`.
fn sup_error(v: &Potential, truth: &Potential, upto: f64) -> f64 {
    let h = v.spacing();
    let last = ((upto / h + 1e-9).floor() as usize).min(v.samples().len() - 1);
    (0..=last)
        .map(|j| (&v.samples()[j] - truth.value_at(j as f64 * h)).norm())
        .fold(0.0, f64::max)
}

fn sup_between(a: &Potential, b: &Potential, upto: f64) -> f64 {
    let h = a.spacing();
    let last = ((upto / h + 1e-9).floor() as usize).min(a.samples().len() - 1);
    (0..=last)
        .map(|j| (&a.samples()[j] - &b.samples()[j]).norm())
        .fold(0.0, f64::max)
}

fn in_window(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo && x <= hi
}

fn closed_form_agreement(opts: &VerifyOptions) -> CriterionReport {
    guard(CRITERIA[0].0, "<= 1e-6", || {
        let p = fixtures::constant(1.0, 1.0, 1e-3)?;
        let mut worst: f64 = 0.0;
        for z in [c(0.0, 1.0), c(0.0, 2.0), c(1.0, 2.0)] {
            let ode = weyl_truncated(&p, z)?;
            let closed = if opts.inject_branch_flip {
                weyl_constant_closed_form_flipped(1.0, 1.0, z)?
            } else {
                weyl_constant_closed_form(1.0, 1.0, z)?
            };
            worst = worst.max((ode.phi - closed.phi).norm());
        }
        let detail = if opts.inject_branch_flip {
            "branch of q flipped".into()
        } else {
            String::new()
        };
        Ok((worst, worst <= 1e-6, detail))
    })
}

fn contractivity(_: &VerifyOptions) -> CriterionReport {
    guard(CRITERIA[1].0, "max ||phi|| <= 1 + 1e-8", || {
        let zs: Vec<Complex64> = [-3.0, -1.0, 0.0, 1.0, 3.0]
            .iter()
            .flat_map(|&re| [0.05, 0.5, 2.0, 8.0].map(|im| c(re, im)))
            .collect();
        let potentials = [
            fixtures::constant(1.0, 1.0, 1e-3)?,
            fixtures::gaussian_bump(1.0, 1e-3)?,
            fixtures::trig_matrix(1e-3)?,
        ];
        let mut worst: f64 = 0.0;
        for p in &potentials {
            for s in weyl_truncated_batch(p, &zs, DEFAULT_MAX_STEP)? {
                worst = worst.max(s.norm());
            }
        }
        Ok((
            worst,
            worst <= 1.0 + 1e-8,
            format!("{} points x 3 potentials", zs.len()),
        ))
    })
}

/// Relative error of the central difference of `ℓ -> φ_ℓ` against the Riccati right-hand side.
fn riccati_error(step: f64) -> Result<f64> {
    let p = fixtures::gaussian_bump(1.0, step)?;
    let ell = 0.3;
    let mut worst: f64 = 0.0;
    for z in [c(0.0, 2.0), c(1.0, 2.0)] {
        let at = |l: f64| -> Result<BlockMatrix> {
            Ok(weyl_truncated(&shift_potential(&p, l)?, z)?.phi)
        };
        let fd = (at(ell + step)? - at(ell - step)?) / Complex64::from(2.0 * step);
        let phi = weyl_truncated(&shift_potential(&p, ell)?, z)?;
        let rhs = riccati_derivative(&phi, &p.value_at(ell), z)?;
        worst = worst.max((fd - &rhs).norm() / rhs.norm());
    }
    Ok(worst)
}

fn riccati_consistency(_: &VerifyOptions) -> CriterionReport {
    guard(
        CRITERIA[2].0,
        "relative error <= 1e-3, ratio 4 +/- 20%",
        || {
            let coarse = riccati_error(1e-3)?;
            let fine = riccati_error(5e-4)?;
            let ratio = coarse / fine;
            let pass = coarse <= 1e-3 && in_window(ratio, 3.2, 4.8);
            Ok((
                coarse,
                pass,
                format!("h/2 error {fine:.3e}, ratio {ratio:.3}"),
            ))
        },
    )
}

fn transfer_consistency(_: &VerifyOptions) -> CriterionReport {
    guard(CRITERIA[3].0, "<= 1e-6", || {
        let z = c(1.0, 2.0);
        let mut worst: f64 = 0.0;
        for p in [
            fixtures::constant(1.0, 1.0, 1e-3)?,
            fixtures::gaussian_bump(1.0, 1e-3)?,
        ] {
            let phi0 = weyl_truncated(&p, z)?;
            for ell in [0.25, 0.5] {
                let grid = Grid::with_spacing(ell, p.spacing())?;
                let path = fundamental_solution(&p, z, &grid, 0.0)?;
                let moved = weyl_transfer(&phi0, path.at(grid.len() - 1))?;
                let shifted = weyl_truncated(&shift_potential(&p, ell)?, z)?;
                worst = worst.max((moved.phi - shifted.phi).norm());
            }
        }
        Ok((worst, worst <= 1e-6, String::new()))
    })
}

fn edge_identity(_: &VerifyOptions) -> CriterionReport {
    guard(CRITERIA[4].0, "<= 1e-3 for both routes", || {
        let (t_end, n) = (0.8, 17);
        let h = t_end / (n - 1) as f64;
        let p = fixtures::gaussian_bump(1.0, h)?;
        let mut parts = Vec::new();
        let mut worst: f64 = 0.0;
        for (label, method) in [
            ("series", FieldMethod::Series { kmax: 3 }),
            ("fourier", FieldMethod::Fourier(FourierConfig::default())),
        ] {
            let field = a_field_direct(&p, t_end, n, method)?;
            let err = field
                .left_edge()
                .iter()
                .enumerate()
                .take_while(|(i, _)| *i as f64 * h <= 0.5 * t_end + 1e-12)
                .map(|(i, a)| (a + p.value_at(i as f64 * h).adjoint() * c(0.0, 1.0)).norm())
                .fold(0.0, f64::max);
            parts.push(format!("{label} {err:.3e}"));
            worst = worst.max(err);
        }
        Ok((worst, worst <= 1e-3, parts.join(", ")))
    })
}

fn bump_field(n: usize) -> Result<AField> {
    let h = 1.0 / (n - 1) as f64;
    a_field_direct(
        &fixtures::gaussian_bump(1.0, h)?,
        1.0,
        n,
        FieldMethod::Series { kmax: 3 },
    )
}

fn a_equation_residual_check(_: &VerifyOptions) -> CriterionReport {
    guard(
        CRITERIA[5].0,
        "<= 1e-3 at h = 5e-3, ratio 4 +/- 25%",
        || {
            let coarse = a_equation_residual(&bump_field(101)?)?.max();
            let fine = a_equation_residual(&bump_field(201)?)?.max();
            let ratio = coarse / fine;
            let pass = fine <= 1e-3 && in_window(ratio, 3.0, 5.0);
            Ok((
                fine,
                pass,
                format!("h = 1e-2 residual {coarse:.3e}, ratio {ratio:.3}"),
            ))
        },
    )
}

fn round_trip_fixtures(h: f64) -> Result<[(&'static str, Potential); 2]> {
    Ok([
        ("constant", fixtures::constant(0.5, 1.0, h)?),
        ("bump", fixtures::gaussian_bump(1.0, h)?),
    ])
}

fn series_initial(p: &Potential, n: usize) -> Result<crate::afunction::AFunction> {
    a_direct_series(p, 3, &make_uniform_grid(1.0, n)?, 1e-4)
}

fn round_trip_evolution(_: &VerifyOptions) -> CriterionReport {
    guard(
        CRITERIA[6].0,
        "<= 5e-3 at h = 5e-3 on [0, T/2], ratio in [1.6, 4.8]",
        || {
            let mut worst: f64 = 0.0;
            let mut pass = true;
            let mut parts = Vec::new();
            for ((name, coarse_p), (_, fine_p)) in round_trip_fixtures(1e-2)?
                .into_iter()
                .zip(round_trip_fixtures(5e-3)?)
            {
                let coarse = sup_error(
                    &recover_v_field(&series_initial(&coarse_p, 101)?, 1.0)?,
                    &coarse_p,
                    0.5,
                );
                let fine = sup_error(
                    &recover_v_field(&series_initial(&fine_p, 201)?, 1.0)?,
                    &fine_p,
                    0.5,
                );
                let ratio = coarse / fine;
                pass &= fine <= 5e-3 && in_window(ratio, 1.6, 4.8);
                worst = worst.max(fine);
                parts.push(format!("{name} {fine:.3e} (ratio {ratio:.3})"));
            }
            Ok((worst, pass, parts.join(", ")))
        },
    )
}

fn round_trip_krein(_: &VerifyOptions) -> CriterionReport {
    guard(
        CRITERIA[7].0,
        "<= 5e-3 at n = 400; routes agree to 1e-2 on [0, T/2]",
        || {
            let n = 400;
            let h = 1.0 / (n - 1) as f64;
            let mut worst: f64 = 0.0;
            let mut pass = true;
            let mut parts = Vec::new();
            for (name, p) in round_trip_fixtures(h)? {
                let a = series_initial(&p, n)?;
                let krein = recover_v_krein(&a, 1.0)?;
                let field = recover_v_field(&a, 1.0)?;
                let err = sup_error(&krein, &p, 1.0);
                let gap = sup_between(&krein, &field, 0.5);
                pass &= err <= 5e-3 && gap <= 1e-2;
                worst = worst.max(err);
                parts.push(format!("{name} {err:.3e} (route gap {gap:.3e})"));
            }
            Ok((worst, pass, parts.join(", ")))
        },
    )
}

fn unit_margin(t_end: f64, n: usize) -> Result<f64> {
    let grid = make_uniform_grid(t_end, n)?;
    let a = crate::afunction::AFunction::new(
        grid,
        vec![BlockMatrix::from_element(1, 1, c(1.0, 0.0)); n],
    )?;
    Ok(check_positivity(&build_s_kernel(&a, t_end)?))
}

fn positivity_threshold(_: &VerifyOptions) -> CriterionReport {
    guard(
        CRITERIA[8].0,
        "sign change in [1.54, 1.60] at n = 800; T = 1 margin within 2%",
        || {
            let n = 800;
            let exact = 1.0 - 4.0 / std::f64::consts::PI.powi(2);
            let m1 = unit_margin(1.0, n)?;
            let lo = unit_margin(1.54, n)?;
            let hi = unit_margin(1.60, n)?;
            let rel = (m1 - exact).abs() / exact;
            let pass = lo > 0.0 && hi < 0.0 && rel <= 0.02;
            Ok((
                rel,
                pass,
                format!("margin(1) = {m1:.6}, margin(1.54) = {lo:.3e}, margin(1.60) = {hi:.3e}"),
            ))
        },
    )
}

fn factorization(_: &VerifyOptions) -> CriterionReport {
    guard(CRITERIA[9].0, "<= 1e-4 at n = 400", || {
        let (t_end, n) = (0.8, 400);
        let grid = make_uniform_grid(t_end, n)?;
        let p = fixtures::constant(0.5, t_end, grid.spacing())?;
        let a = a_direct_series(&p, 3, &grid, 1e-4)?;
        let kernel = build_s_kernel(&a, t_end)?;
        let e = e_phi_kernel(&kernel, EPhiMethod::Recursion)?;
        let r = factorization_residual(&kernel, &e);
        Ok((r, r <= 1e-4, String::new()))
    })
}

fn borg_marchenko(_: &VerifyOptions) -> CriterionReport {
    guard(
        CRITERIA[10].0,
        "|T_est - 1| <= 0.1 on rays c = 0 and c = 1",
        || {
            let (p1, p2) = fixtures::bm_pair(1.0, 1e-3)?;
            let mut worst: f64 = 0.0;
            let mut parts = Vec::new();
            for ray in [0.0, 1.0] {
                let est = estimate_agreement_length(&weyl_difference_ray(
                    &p1,
                    &p2,
                    ray,
                    &DEFAULT_RADII,
                )?)?;
                worst = worst.max((est.length - 1.0).abs());
                parts.push(format!("c = {ray}: T_est = {:.4}", est.length));
                if let Some(w) = est.warning {
                    parts.push(w);
                }
            }
            Ok((worst, worst <= 0.1, parts.join(", ")))
        },
    )
}

fn determinism(_: &VerifyOptions) -> CriterionReport {
    guard(CRITERIA[11].0, "0 mismatches across repeated runs", || {
        let h = 5e-3;
        let p = fixtures::gaussian_bump(1.0, h)?;
        let a = series_initial(&p, 201)?;
        let first = solve_a_equation(&a)?;
        let second = solve_a_equation(&a)?;
        let serial = par::sequential(|| solve_a_equation(&a))?;
        let mut mismatches = 0;
        mismatches += (first != second) as usize;
        mismatches += (first != serial) as usize;
        let k1 = recover_v_krein(&a, 0.5)?;
        let k2 = par::sequential(|| recover_v_krein(&a, 0.5))?;
        mismatches += (k1.samples() != k2.samples()) as usize;
        let mut csv1 = Vec::new();
        let mut csv2 = Vec::new();
        crate::io::write_afield_to(&mut csv1, &first)?;
        crate::io::write_afield_to(&mut csv2, &serial)?;
        mismatches += (csv1 != csv2) as usize;
        Ok((
            mismatches as f64,
            mismatches == 0,
            "field, Krein recovery and CSV output".into(),
        ))
    })
}
