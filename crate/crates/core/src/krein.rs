//! Inverse route through the kernel
//! `s(x, t) = ∫_0^{min(x,t)} 𝒜(x-ξ) 𝒜(t-ξ)^* dξ`: positivity margin,
//! resolvents `Γ_ξ`, the triangular factor `E_Φ`, and recovery of `v`.

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;

use crate::afunction::{phi_from_a, AFunction};
use crate::dirac::{BlockSignature, Potential};
use crate::error::{Error, Result};
use crate::numerics::{operator_norm, solve_dense, trapezoid_weights, BlockMatrix, Grid};
use crate::par;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Margins at or below this value count as degenerate.
pub const MARGIN_FLOOR: f64 = 1e-8;

/// `s(x_i, x_j)` as an `n m2 x n m2` matrix of `m2 x m2` blocks.
#[derive(Debug, Clone)]
pub struct SKernel {
    pub grid: Grid,
    pub m2: usize,
    pub values: BlockMatrix,
}

impl SKernel {
    pub fn block(&self, i: usize, j: usize) -> BlockMatrix {
        let m = self.m2;
        self.values.view((i * m, j * m), (m, m)).into_owned()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// 𝒜 restricted to the nodes of `[0, T]`.
fn restrict(a_fn: &AFunction, t_end: f64) -> Result<AFunction> {
    let idx = a_fn.grid.index_of(t_end).ok_or_else(|| {
        Error::validation(format!(
            "T = {t_end} is not a node of the 𝒜 grid on [0, {}]",
            a_fn.grid.end()
        ))
    })?;
    if idx == 0 {
        return Err(Error::validation("T must be positive"));
    }
    a_fn.truncate(idx + 1)
}

/// Trapezoid evaluation of `s` at every node pair, exactly conjugate-symmetric.
pub fn build_s_kernel(a_fn: &AFunction, t_end: f64) -> Result<SKernel> {
    let a = restrict(a_fn, t_end)?;
    let n = a.grid.len();
    let h = a.grid.spacing();
    let (m2, _) = a.block_shape();
    // P(p, q) = 𝒜(x_p) 𝒜(x_q)^*, D(i, j) = Σ_k P(i-k, j-k) along diagonals.
    let adj: Vec<BlockMatrix> = a.samples.iter().map(|b| b.adjoint()).collect();
    let p = |i: usize, j: usize| &a.samples[i] * &adj[j];
    let mut values = BlockMatrix::zeros(n * m2, n * m2);
    // Lower triangle j <= i; each diagonal i - j = d is one running sum.
    for d in 0..n {
        let mut run = BlockMatrix::zeros(m2, m2);
        let first = p(d, 0);
        for j in 0..n - d {
            let i = j + d;
            let pij = if j == 0 { first.clone() } else { p(i, j) };
            run += &pij;
            let s = &run * Complex64::from(h) - (&pij + &first) * Complex64::from(0.5 * h);
            values.view_mut((i * m2, j * m2), (m2, m2)).copy_from(&s);
            if i != j {
                values
                    .view_mut((j * m2, i * m2), (m2, m2))
                    .copy_from(&s.adjoint());
            }
        }
    }
    Ok(SKernel {
        grid: a.grid,
        m2,
        values,
    })
}

/// Square roots of the trapezoid weights on `[0, T]`, one per scalar row.
fn sqrt_weights(n: usize, h: f64, m2: usize) -> Vec<f64> {
    trapezoid_weights(n, h)
        .into_iter()
        .flat_map(|w| std::iter::repeat_n(w.sqrt(), m2))
        .collect()
}

/// `I - D s D` with `D` the square-rooted trapezoid weights on the first `k + 1` nodes.
fn symmetrized_operator(kernel: &SKernel, k: usize) -> BlockMatrix {
    let m2 = kernel.m2;
    let dim = (k + 1) * m2;
    let d = sqrt_weights(k + 1, kernel.grid.spacing(), m2);
    BlockMatrix::from_fn(dim, dim, |r, c| {
        let id = if r == c { 1.0 } else { 0.0 };
        Complex64::from(id) - kernel.values[(r, c)] * (d[r] * d[c])
    })
}

fn min_hermitian_eigenvalue(m: &BlockMatrix) -> f64 {
    if m.iter().all(|z| z.im == 0.0) {
        let re: DMatrix<f64> = m.map(|z| z.re);
        re.symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    } else {
        m.symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Smallest eigenvalue of the symmetrized Nyström matrix `I - D s D`.
///
/// A positive value certifies the data at grid resolution; a nonpositive
/// one is a valid result that marks inadmissible data.
pub fn check_positivity(kernel: &SKernel) -> f64 {
    min_hermitian_eigenvalue(&symmetrized_operator(kernel, kernel.len() - 1))
}

/// Rejects margins at or below [`MARGIN_FLOOR`].
pub fn require_margin(margin: f64) -> Result<()> {
    if margin <= 0.0 {
        Err(Error::Inadmissible {
            margin,
            detail: "is not positive; the data do not come from a potential".into(),
        })
    } else if margin <= MARGIN_FLOOR {
        Err(Error::Inadmissible {
            margin,
            detail: format!(
                "is within {MARGIN_FLOOR:.0e} of zero; the operator is near-degenerate"
            ),
        })
    } else {
        Ok(())
    }
}

/// `Γ_ξ(x_i, x_j)` on `[0, ξ]^2` for `ξ = x_k`.
#[derive(Debug, Clone)]
pub struct GammaKernel {
    pub k: usize,
    pub h: f64,
    pub m2: usize,
    pub values: BlockMatrix,
}

impl GammaKernel {
    pub fn block(&self, i: usize, j: usize) -> BlockMatrix {
        let m = self.m2;
        self.values.view((i * m, j * m), (m, m)).into_owned()
    }
}

/// Scalar trapezoid weights on `[0, x_k]` expanded over `m2`.
fn local_weights(k: usize, h: f64, m2: usize) -> Vec<f64> {
    trapezoid_weights(k + 1, h)
        .into_iter()
        .flat_map(|w| std::iter::repeat_n(w, m2))
        .collect()
}

/// Solves `Γ = s + ∫_0^ξ s(·, r) Γ(r, ·) dr` on the nodes of `[0, ξ]`.
pub fn resolvent_gamma(kernel: &SKernel, k: usize) -> Result<GammaKernel> {
    if k >= kernel.len() {
        return Err(Error::validation(format!(
            "node {k} outside the kernel grid"
        )));
    }
    let m2 = kernel.m2;
    let h = kernel.grid.spacing();
    let dim = (k + 1) * m2;
    let s = kernel.values.view((0, 0), (dim, dim)).into_owned();
    let w = local_weights(k, h, m2);
    let a = BlockMatrix::from_fn(dim, dim, |r, c| {
        let id = if r == c { 1.0 } else { 0.0 };
        Complex64::from(id) - s[(r, c)] * w[c]
    });
    let values = solve_dense(&a, &s)?;
    Ok(GammaKernel { k, h, m2, values })
}

/// Lower-triangular table `E_Φ(x_k, x_j)`, `j <= k`.
#[derive(Debug, Clone)]
pub struct EPhiKernel {
    pub h: f64,
    pub m2: usize,
    pub rows: Vec<Vec<BlockMatrix>>,
}

impl EPhiKernel {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn max_difference(&self, other: &EPhiKernel) -> f64 {
        self.rows
            .iter()
            .zip(&other.rows)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }
}

/// How `E_Φ` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EPhiMethod {
    /// One Hermitian positive-definite solve per node.
    #[default]
    DirectSolves,
    /// Node-by-node rank updates of `Γ_ξ` as `ξ` grows.
    Recursion,
}

/// `E_Φ(x_k, t) = Γ_{x_k}(x_k, t)` for every node.
pub fn e_phi_kernel(kernel: &SKernel, method: EPhiMethod) -> Result<EPhiKernel> {
    match method {
        EPhiMethod::DirectSolves => e_phi_direct(kernel),
        EPhiMethod::Recursion => e_phi_recursion(kernel),
    }
}

fn e_phi_direct(kernel: &SKernel) -> Result<EPhiKernel> {
    let n = kernel.len();
    let m2 = kernel.m2;
    let h = kernel.grid.spacing();
    let rows = par::try_map_range(n, |k| -> Result<Vec<BlockMatrix>> {
        if k == 0 {
            return Ok(vec![kernel.block(0, 0)]);
        }
        // (I - S W) γ = s(·, x_k) becomes (I - D S D)(D γ) = D s(·, x_k) with D = W^{1/2}.
        let dim = (k + 1) * m2;
        let w = local_weights(k, h, m2);
        let d: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
        let a = BlockMatrix::from_fn(dim, dim, |r, c| {
            let id = if r == c { 1.0 } else { 0.0 };
            Complex64::from(id) - kernel.values[(r, c)] * (d[r] * d[c])
        });
        let rhs = BlockMatrix::from_fn(dim, m2, |r, c| kernel.values[(r, k * m2 + c)] * d[r]);
        let chol = Cholesky::new(a).ok_or_else(|| {
            Error::numerical(format!(
                "I - S is not positive definite on [0, {}]",
                k as f64 * h
            ))
        })?;
        let y = chol.solve(&rhs);
        Ok((0..=k)
            .map(|j| {
                // Γ(x_k, x_j) = Γ(x_j, x_k)^*.
                let blk = BlockMatrix::from_fn(m2, m2, |r, c| y[(j * m2 + r, c)] / d[j * m2 + r]);
                blk.adjoint()
            })
            .collect())
    })?;
    Ok(EPhiKernel { h, m2, rows })
}

/// Rank-`m2` update of `Γ` for a weight change `delta` at node `p`:
/// `Γ + Γ(:, p) δ (I - δ Γ_pp)^{-1} Γ(p, :)`.
fn reweight(gamma: &mut BlockMatrix, p: usize, delta: f64, m2: usize) -> Result<()> {
    let dim = gamma.nrows();
    let col = gamma.view((0, p * m2), (dim, m2)).into_owned();
    let row = gamma.view((p * m2, 0), (m2, dim)).into_owned();
    let gpp = gamma.view((p * m2, p * m2), (m2, m2)).into_owned();
    let core = BlockMatrix::identity(m2, m2) - gpp * Complex64::from(delta);
    // (I - δ Γ_pp)^{-1} Γ(p, :) scaled by δ.
    let right = solve_dense(&core, &row)? * Complex64::from(delta);
    *gamma += col * right;
    Ok(())
}

fn e_phi_recursion(kernel: &SKernel) -> Result<EPhiKernel> {
    let n = kernel.len();
    let m2 = kernel.m2;
    let h = kernel.grid.spacing();
    let s = &kernel.values;
    let mut rows = Vec::with_capacity(n);
    // Γ on nodes 0..=k with trapezoid weights on [0, x_k].
    let mut gamma = kernel.block(0, 0);
    rows.push(vec![gamma.clone()]);
    let mut weights = vec![0.0; 1];
    for k in 1..n {
        let old = k * m2;
        let dim = old + m2;
        // Append node k with weight 0: its row follows explicitly from the
        // defining equation, its column by Hermitian symmetry.
        let s_new_old = s.view((old, 0), (m2, old)).into_owned();
        let weighted = BlockMatrix::from_fn(m2, old, |r, c| s_new_old[(r, c)] * weights[c / m2]);
        let row_new = &s_new_old + &weighted * &gamma;
        let corner = s.view((old, old), (m2, m2)).into_owned() + &weighted * row_new.adjoint();
        let mut next = BlockMatrix::zeros(dim, dim);
        next.view_mut((0, 0), (old, old)).copy_from(&gamma);
        next.view_mut((old, 0), (m2, old)).copy_from(&row_new);
        next.view_mut((0, old), (old, m2))
            .copy_from(&row_new.adjoint());
        next.view_mut((old, old), (m2, m2)).copy_from(&corner);
        gamma = next;
        weights.push(0.0);
        // Old endpoint gains h/2 (0 -> h/2 at node 0, h/2 -> h otherwise), new endpoint 0 -> h/2.
        reweight(&mut gamma, k - 1, 0.5 * h, m2)?;
        weights[k - 1] += 0.5 * h;
        reweight(&mut gamma, k, 0.5 * h, m2)?;
        weights[k] = 0.5 * h;
        let row: Vec<BlockMatrix> = (0..=k)
            .map(|j| gamma.view((k * m2, j * m2), (m2, m2)).into_owned())
            .collect();
        if row
            .iter()
            .any(|b| b.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()))
        {
            return Err(Error::numerical(format!(
                "resolvent recursion diverged at node {k}"
            )));
        }
        rows.push(row);
    }
    Ok(EPhiKernel { h, m2, rows })
}

/// `‖(I + Ẽ)^*(I + Ẽ)(I - D s D) - I‖_2` in the weighted coordinates where
/// the discrete `L^2` product is Euclidean.
pub fn factorization_residual(kernel: &SKernel, e_phi: &EPhiKernel) -> f64 {
    let n = kernel.len();
    let m2 = kernel.m2;
    let h = kernel.grid.spacing();
    let d = sqrt_weights(n, h, m2);
    let dim = n * m2;
    let mut e = BlockMatrix::identity(dim, dim);
    let global = trapezoid_weights(n, h);
    for (i, row) in e_phi.rows.iter().enumerate() {
        let mut w = trapezoid_weights(i + 1, h);
        // The diagonal carries half of the node's weight in the product
        // quadrature, which differs from the row trapezoid only at x = T.
        w[i] = 0.5 * global[i];
        for (j, blk) in row.iter().enumerate() {
            for r in 0..m2 {
                for c in 0..m2 {
                    let (gr, gc) = (i * m2 + r, j * m2 + c);
                    e[(gr, gc)] += blk[(r, c)] * (w[j] * d[gr] / d[gc]);
                }
            }
        }
    }
    let st = symmetrized_operator(kernel, n - 1);
    let prod = e.adjoint() * &e * st - BlockMatrix::identity(dim, dim);
    operator_norm(&prod)
}

/// Options for [`recover_v_krein_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct KreinOptions {
    pub method: EPhiMethod,
    /// Run both `E_Φ` paths and fail if they disagree by more than `1e-6`.
    pub cross_check: bool,
}

/// Recovers `v = i β_Φ' J γ_Φ^*` on `[0, T]`.
pub fn recover_v_krein(a_fn: &AFunction, t_end: f64) -> Result<Potential> {
    recover_v_krein_with(a_fn, t_end, KreinOptions::default())
}

pub fn recover_v_krein_with(a_fn: &AFunction, t_end: f64, opts: KreinOptions) -> Result<Potential> {
    let a = restrict(a_fn, t_end)?;
    let kernel = build_s_kernel(&a, t_end)?;
    require_margin(check_positivity(&kernel))?;
    let e = e_phi_kernel(&kernel, opts.method)?;
    if opts.cross_check {
        let other = match opts.method {
            EPhiMethod::DirectSolves => EPhiMethod::Recursion,
            EPhiMethod::Recursion => EPhiMethod::DirectSolves,
        };
        let diff = e.max_difference(&e_phi_kernel(&kernel, other)?);
        if diff > 1e-6 {
            return Err(Error::numerical(format!(
                "E_Φ paths disagree by {diff:.3e}"
            )));
        }
    }
    recover_from_factor(&a, &e)
}

fn recover_from_factor(a: &AFunction, e: &EPhiKernel) -> Result<Potential> {
    let n = a.grid.len();
    let h = a.grid.spacing();
    let (m2, m1) = a.block_shape();
    let sig = BlockSignature::new(m1, m2)?;
    let m = m1 + m2;
    let phi = phi_from_a(a).samples;
    // [Φ(t), I] as m2 x m blocks.
    let aug: Vec<BlockMatrix> = phi
        .iter()
        .map(|p| {
            let mut b = BlockMatrix::zeros(m2, m);
            b.view_mut((0, 0), (m2, m1)).copy_from(p);
            b.view_mut((0, m1), (m2, m2))
                .copy_from(&BlockMatrix::identity(m2, m2));
            b
        })
        .collect();
    let j = sig.j_matrix();
    let samples = par::map_range(n, |i| {
        let w = trapezoid_weights(i + 1, h);
        let mut gamma = aug[i].clone();
        let mut g = a.samples[i].clone();
        for (t, wt) in w.iter().enumerate() {
            if *wt == 0.0 {
                continue;
            }
            let et = &e.rows[i][t] * Complex64::from(*wt);
            gamma += &et * &aug[t];
            g += &et * &a.samples[t];
        }
        let beta_prime = g.adjoint() * &gamma;
        beta_prime * &j * gamma.adjoint() * I
    });
    Potential::from_samples(sig, h, samples)
}

/// Recovers `v` by evolving the 𝒜-equation and reading its edge.
pub fn recover_v_field(a_fn: &AFunction, t_end: f64) -> Result<Potential> {
    let a = restrict(a_fn, t_end)?;
    let field = crate::aeq::solve_a_equation(&a)?;
    crate::aeq::recover_potential(&field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::make_uniform_grid;

    fn constant_a(n: usize, t: f64, val: Complex64) -> AFunction {
        let g = make_uniform_grid(t, n).unwrap();
        AFunction::new(g, vec![BlockMatrix::from_element(1, 1, val); n]).unwrap()
    }

    fn random_a(n: usize, m2: usize, m1: usize, seed: u64) -> AFunction {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = make_uniform_grid(1.0, n).unwrap();
        let samples = (0..n)
            .map(|_| {
                BlockMatrix::from_fn(m2, m1, |_, _| {
                    Complex64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))
                })
            })
            .collect();
        AFunction::new(g, samples).unwrap()
    }

    #[test]
    fn kernel_examples() {
        let zero = constant_a(11, 1.0, 0.0.into());
        assert!(build_s_kernel(&zero, 1.0).unwrap().values.norm() == 0.0);
        let one = constant_a(11, 1.0, 1.0.into());
        let s = build_s_kernel(&one, 1.0).unwrap();
        for i in 0..11 {
            for j in 0..11 {
                let expected = 0.1 * i.min(j) as f64;
                assert!((s.values[(i, j)] - Complex64::from(expected)).norm() < 1e-14);
            }
        }
        let r = random_a(15, 2, 3, 1);
        let s = build_s_kernel(&r, 1.0).unwrap();
        assert_eq!(s.values.adjoint(), s.values);
        for j in 0..15 {
            assert_eq!(s.block(0, j).norm(), 0.0);
        }
    }

    #[test]
    fn kernel_matches_direct_quadrature() {
        let r = random_a(12, 1, 2, 5);
        let s = build_s_kernel(&r, 1.0).unwrap();
        let h = r.grid.spacing();
        for i in 0..12 {
            for j in 0..12 {
                let m = i.min(j);
                let mut acc = BlockMatrix::zeros(1, 1);
                for k in 0..=m {
                    let w = if k == 0 || k == m { 0.5 * h } else { h };
                    if m == 0 {
                        continue;
                    }
                    acc += &r.samples[i - k] * r.samples[j - k].adjoint() * Complex64::from(w);
                }
                assert!((s.block(i, j) - acc).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn margin_examples() {
        let zero = constant_a(21, 1.0, 0.0.into());
        assert!((check_positivity(&build_s_kernel(&zero, 1.0).unwrap()) - 1.0).abs() < 1e-14);
        let one = constant_a(201, 1.0, 1.0.into());
        let m = check_positivity(&build_s_kernel(&one, 1.0).unwrap());
        let exact = 1.0 - 4.0 / std::f64::consts::PI.powi(2);
        assert!((m - exact).abs() < 0.02 * exact, "{m}");
        let two = constant_a(201, 2.0, 1.0.into());
        let m = check_positivity(&build_s_kernel(&two, 2.0).unwrap());
        assert!(m < 0.0);
        assert!((m - (1.0 - 16.0 / std::f64::consts::PI.powi(2))).abs() < 0.02);
        // A complex phase leaves the kernel unchanged up to conjugation.
        let rot = constant_a(201, 1.0, Complex64::new(0.6, 0.8));
        let mr = check_positivity(&build_s_kernel(&rot, 1.0).unwrap());
        assert!((mr - exact).abs() < 0.02 * exact);
    }

    #[test]
    fn margin_gate() {
        assert!(require_margin(0.5).is_ok());
        assert!(matches!(
            require_margin(-0.1),
            Err(Error::Inadmissible { .. })
        ));
        assert!(matches!(
            require_margin(1e-9),
            Err(Error::Inadmissible { .. })
        ));
    }

    #[test]
    fn resolvent_examples() {
        let zero = constant_a(11, 1.0, 0.0.into());
        let g = resolvent_gamma(&build_s_kernel(&zero, 1.0).unwrap(), 10).unwrap();
        assert_eq!(g.values.norm(), 0.0);

        let r = random_a(21, 2, 1, 9);
        let s = build_s_kernel(&r, 1.0).unwrap();
        let k = 15;
        let g = resolvent_gamma(&s, k).unwrap();
        let dim = (k + 1) * 2;
        let sk = s.values.view((0, 0), (dim, dim)).into_owned();
        let w = local_weights(k, s.grid.spacing(), 2);
        let wg = BlockMatrix::from_fn(dim, dim, |r, c| g.values[(r, c)] * w[r]);
        let resid = &g.values - &sk - &sk * wg;
        assert!(resid.norm() <= 1e-10 * sk.norm().max(1.0));
        assert!((&g.values - g.values.adjoint()).norm() < 1e-12);
        assert!(resolvent_gamma(&s, 21).is_err());
    }

    #[test]
    fn e_phi_paths_agree() {
        let one = constant_a(51, 0.5, 1.0.into());
        let s = build_s_kernel(&one, 0.5).unwrap();
        let d = e_phi_kernel(&s, EPhiMethod::DirectSolves).unwrap();
        let r = e_phi_kernel(&s, EPhiMethod::Recursion).unwrap();
        assert!(d.max_difference(&r) < 1e-10);

        let rnd = random_a(31, 2, 2, 3);
        let s = build_s_kernel(&rnd, 1.0).unwrap();
        if check_positivity(&s) > 0.0 {
            let d = e_phi_kernel(&s, EPhiMethod::DirectSolves).unwrap();
            let r = e_phi_kernel(&s, EPhiMethod::Recursion).unwrap();
            assert!(d.max_difference(&r) < 1e-10);
        }
        // Each direct row is the last row of the corresponding resolvent.
        let g = resolvent_gamma(&s, 20).unwrap();
        let d = e_phi_kernel(&s, EPhiMethod::DirectSolves).unwrap();
        for j in 0..=20 {
            assert!((g.block(20, j) - &d.rows[20][j]).norm() < 1e-10);
        }
    }

    #[test]
    fn zero_data_recover_zero() {
        let zero = constant_a(21, 1.0, 0.0.into());
        let s = build_s_kernel(&zero, 1.0).unwrap();
        let e = e_phi_kernel(&s, EPhiMethod::DirectSolves).unwrap();
        assert!(e.rows.iter().flatten().all(|b| b.norm() == 0.0));
        let v = recover_v_krein(&zero, 1.0).unwrap();
        assert!(v.samples().iter().all(|b| b.norm() == 0.0));
        let v = recover_v_field(&zero, 1.0).unwrap();
        assert!(v.samples().iter().all(|b| b.norm() == 0.0));
    }

    #[test]
    fn recovery_is_exact_at_origin() {
        let r = random_a(41, 1, 2, 21);
        let small = AFunction::new(
            r.grid,
            r.samples.iter().map(|b| b * Complex64::from(0.3)).collect(),
        )
        .unwrap();
        let v = recover_v_krein(&small, 1.0).unwrap();
        let expected = small.samples[0].adjoint() * (-I);
        assert!((&v.samples()[0] - expected).norm() < 1e-15);
    }

    #[test]
    fn inadmissible_data_rejected() {
        let two = constant_a(81, 2.0, 1.0.into());
        assert!(matches!(
            recover_v_krein(&two, 2.0),
            Err(Error::Inadmissible { .. })
        ));
    }
}
