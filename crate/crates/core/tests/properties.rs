//! Structural invariants checked over randomized inputs.

use dirac_afunc::afunction::{a_direct_series, AFunction};
use dirac_afunc::bm::weyl_difference_ray;
use dirac_afunc::dirac::{fundamental_solution, shift_potential, BlockSignature, Potential};
use dirac_afunc::io;
use dirac_afunc::krein::{
    build_s_kernel, check_positivity, e_phi_kernel, resolvent_gamma, EPhiMethod,
};
use dirac_afunc::numerics::{make_uniform_grid, BlockMatrix, Grid};
use dirac_afunc::weyl::{weyl_transfer, weyl_truncated_with_step};
use num_complex::Complex64;
use proptest::prelude::*;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// A smooth random potential `Σ_k c_k cos(k x + θ_k)` entrywise.
fn potential(m1: usize, m2: usize, coeffs: &[(f64, f64, f64)], scale: f64, h: f64) -> Potential {
    let sig = BlockSignature::new(m1, m2).unwrap();
    let coeffs = coeffs.to_vec();
    Potential::from_fn(sig, 1.0, h, move |x| {
        BlockMatrix::from_fn(m1, m2, |r, c| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, (re, im, ph)) in coeffs.iter().enumerate() {
                let arg = (k + 1 + r + c) as f64 * x + ph;
                acc += Complex64::new(*re, *im) * arg.cos();
            }
            acc * scale
        })
    })
    .unwrap()
}

fn coeffs() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, 0.0..6.3f64), 3)
}

fn shape() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=2, 1usize..=2)
}

fn upper_z() -> impl Strategy<Value = Complex64> {
    (-3.0..3.0f64, 0.1..4.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

fn random_afunction(m2: usize, m1: usize, n: usize, vals: &[f64]) -> AFunction {
    let grid = make_uniform_grid(1.0, n).unwrap();
    let mut it = vals.iter().cycle();
    let samples = (0..n)
        .map(|_| {
            BlockMatrix::from_fn(m2, m1, |_, _| {
                Complex64::new(*it.next().unwrap(), *it.next().unwrap())
            })
        })
        .collect();
    AFunction::new(grid, samples).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn determinant_follows_trace((m1, m2) in shape(), cs in coeffs(), z in upper_z()) {
        let p = potential(m1, m2, &cs, 0.5, 1e-3);
        let grid = Grid::with_spacing(1.0, 0.05).unwrap();
        let path = fundamental_solution(&p, z, &grid, 0.0).unwrap();
        for (k, u) in path.values.iter().enumerate() {
            let x = grid.node(k);
            let expected = (I * z * (m1 as f64 - m2 as f64) * x).exp();
            // Entries grow like e^{Im z x}, so the determinant carries that scale.
            let scale = (z.im * x * (m1 + m2) as f64).exp();
            let det = u.determinant();
            prop_assert!((det - expected).norm() <= 1e-9 * scale, "x = {x}: {det} vs {expected}");
        }
    }

    #[test]
    fn real_spectrum_preserves_signature((m1, m2) in shape(), cs in coeffs(), z in -4.0..4.0f64) {
        let p = potential(m1, m2, &cs, 0.5, 0.01);
        let grid = Grid::with_spacing(1.0, 0.01).unwrap();
        let j = p.signature().j_matrix();
        let path = fundamental_solution(&p, Complex64::new(z, 0.0), &grid, 0.0).unwrap();
        for x in [0, grid.len() / 2, grid.len() - 1] {
            let u = path.at(x);
            prop_assert!((u.adjoint() * &j * u - &j).norm() < 1e-8);
        }
    }

    #[test]
    fn weyl_function_is_contractive((m1, m2) in shape(), cs in coeffs(), scale in 0.1..2.0f64, z in upper_z()) {
        let p = potential(m1, m2, &cs, scale, 0.01);
        let phi = weyl_truncated_with_step(&p, z, 0.01).unwrap();
        prop_assert!(phi.is_contractive(1e-8), "norm {}", phi.norm());
    }

    #[test]
    fn transfer_matches_shift((m1, m2) in shape(), cs in coeffs(), z in upper_z(), k in 1usize..9) {
        let h = 1e-3;
        let p = potential(m1, m2, &cs, 0.5, h);
        let ell = 0.1 * k as f64;
        let phi0 = weyl_truncated_with_step(&p, z, h).unwrap();
        let grid = Grid::with_spacing(ell, h).unwrap();
        let u = fundamental_solution(&p, z, &grid, 0.0).unwrap();
        let moved = weyl_transfer(&phi0, u.at(grid.len() - 1)).unwrap();
        let shifted = weyl_truncated_with_step(&shift_potential(&p, ell).unwrap(), z, h).unwrap();
        let err = (moved.phi - shifted.phi).norm();
        prop_assert!(err < 1e-7, "{err:e}");
    }

    #[test]
    fn kernel_is_hermitian_and_vanishes_at_origin(
        (m1, m2) in shape(),
        vals in prop::collection::vec(-1.0..1.0f64, 7..40),
    ) {
        let a = random_afunction(m2, m1, 25, &vals);
        let s = build_s_kernel(&a, 1.0).unwrap();
        prop_assert_eq!(s.values.adjoint(), s.values.clone());
        for j in 0..25 {
            prop_assert_eq!(s.block(0, j).norm(), 0.0);
        }
    }

    #[test]
    fn resolvent_is_hermitian_and_paths_agree(
        (m1, m2) in shape(),
        vals in prop::collection::vec(-0.4..0.4f64, 7..40),
    ) {
        let a = random_afunction(m2, m1, 21, &vals);
        let s = build_s_kernel(&a, 1.0).unwrap();
        prop_assume!(check_positivity(&s) > 1e-3);
        let g = resolvent_gamma(&s, 20).unwrap();
        prop_assert!((&g.values - g.values.adjoint()).norm() <= 1e-10 * g.values.norm().max(1.0));
        let d = e_phi_kernel(&s, EPhiMethod::DirectSolves).unwrap();
        let r = e_phi_kernel(&s, EPhiMethod::Recursion).unwrap();
        prop_assert!(d.max_difference(&r) < 1e-6);
    }

    #[test]
    fn genuine_data_are_admissible(cs in coeffs(), scale in 0.1..1.0f64, t in 2usize..=10) {
        let p = potential(1, 1, &cs, scale, 0.02);
        let t_end = 0.1 * t as f64;
        let n = (t_end / 0.02).round() as usize + 1;
        let a = a_direct_series(&p, 3, &make_uniform_grid(t_end, n).unwrap(), f64::INFINITY).unwrap();
        prop_assert!(check_positivity(&build_s_kernel(&a, t_end).unwrap()) > 0.0);
    }

    #[test]
    fn ray_differences_are_symmetric(cs in coeffs(), ds in coeffs(), c in -1.0..1.0f64) {
        let p = potential(1, 1, &cs, 0.5, 0.02);
        let q = potential(1, 1, &ds, 0.5, 0.02);
        let radii = [1.0, 2.0, 3.0];
        let a = weyl_difference_ray(&p, &q, c, &radii).unwrap();
        let b = weyl_difference_ray(&q, &p, c, &radii).unwrap();
        prop_assert_eq!(a.differences, b.differences);
    }

    #[test]
    fn potential_csv_round_trip_is_exact((m1, m2) in shape(), cs in coeffs(), scale in 1e-3..1e3f64) {
        let p = potential(m1, m2, &cs, scale, 0.05);
        let mut buf = Vec::new();
        io::write_potential_to(&mut buf, &p).unwrap();
        let q = io::read_potential_from(buf.as_slice(), "mem").unwrap();
        prop_assert_eq!(q.samples(), p.samples());
        prop_assert_eq!(q.signature(), p.signature());
    }
}
