//! Evolution of the 𝒜-equation
//! `∂_ℓ 𝒜 = ∂_x 𝒜 + ∫_0^x 𝒜(x-t, ℓ) 𝒜(0, ℓ)^* 𝒜(t, ℓ) dt`
//! along characteristics, and recovery of the potential from its edge.

use num_complex::Complex64;

use crate::afunction::AFunction;
use crate::dirac::{BlockSignature, Potential};
use crate::error::{Error, Result};
use crate::numerics::BlockMatrix;
use crate::par;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Norm above which an evolved row counts as blown up.
pub const BLOWUP_NORM: f64 = 1e6;

/// 𝒜(x_j, ℓ_i) on the triangle `x_j + ℓ_i <= T`; row `i` has `n - i` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct AField {
    pub t_end: f64,
    pub h: f64,
    pub rows: Vec<Vec<BlockMatrix>>,
    pub warnings: Vec<String>,
}

impl AField {
    pub fn from_rows(t_end: f64, h: f64, rows: Vec<Vec<BlockMatrix>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::validation("field needs at least one row"));
        }
        let shape = rows[0]
            .first()
            .ok_or_else(|| Error::validation("empty first row"))?
            .shape();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n - i {
                return Err(Error::validation(format!(
                    "row {i} has {} nodes, expected {}",
                    r.len(),
                    n - i
                )));
            }
            if r.iter().any(|b| b.shape() != shape) {
                return Err(Error::validation(format!(
                    "row {i} has inconsistent block shapes"
                )));
            }
        }
        Ok(Self {
            t_end,
            h,
            rows,
            warnings: Vec::new(),
        })
    }

    /// Number of nodes in the first row.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// 𝒜(x_j, ℓ_i).
    pub fn value(&self, j: usize, i: usize) -> &BlockMatrix {
        &self.rows[i][j]
    }

    /// The edge `ℓ -> 𝒜(0, ℓ)`.
    pub fn left_edge(&self) -> Vec<BlockMatrix> {
        self.rows.iter().map(|r| r[0].clone()).collect()
    }

    /// Largest node-wise difference against another field on the common triangle.
    pub fn max_difference(&self, other: &AField) -> f64 {
        self.rows
            .iter()
            .zip(&other.rows)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }
}

/// Flat row storage: `len` blocks of `r x c`, row-major.
struct FlatRow {
    r: usize,
    c: usize,
    data: Vec<Complex64>,
}

impl FlatRow {
    fn from_blocks(blocks: &[BlockMatrix]) -> Self {
        let (r, c) = blocks[0].shape();
        let mut data = Vec::with_capacity(blocks.len() * r * c);
        for b in blocks {
            for i in 0..r {
                for j in 0..c {
                    data.push(b[(i, j)]);
                }
            }
        }
        Self { r, c, data }
    }

    fn bs(&self) -> usize {
        self.r * self.c
    }

    fn len(&self) -> usize {
        self.data.len() / self.bs()
    }

    fn block(&self, j: usize) -> &[Complex64] {
        &self.data[j * self.bs()..(j + 1) * self.bs()]
    }

    fn to_blocks(&self) -> Vec<BlockMatrix> {
        (0..self.len())
            .map(|j| BlockMatrix::from_row_slice(self.r, self.c, self.block(j)))
            .collect()
    }
}

/// `Q(x_j) = ∫_0^{x_j} 𝒜(x_j - t) 𝒜(0)^* 𝒜(t) dt` by trapezoid for every node of the row.
fn convolution_all(row: &FlatRow, h: f64) -> Vec<Complex64> {
    let (m2, m1) = (row.r, row.c);
    let n = row.len();
    let bs = row.bs();
    let a0 = row.block(0);
    // B(t) = 𝒜(0)^* 𝒜(t), m1 x m1.
    let mut b = vec![Complex64::default(); n * m1 * m1];
    for t in 0..n {
        let at = row.block(t);
        for i in 0..m1 {
            for k in 0..m1 {
                let mut acc = Complex64::default();
                for l in 0..m2 {
                    acc += a0[l * m1 + i].conj() * at[l * m1 + k];
                }
                b[t * m1 * m1 + i * m1 + k] = acc;
            }
        }
    }
    let cols = par::map_range(n, |j| {
        let mut out = vec![Complex64::default(); bs];
        for t in 0..=j {
            if j == 0 {
                break;
            }
            let w = if t == 0 || t == j { 0.5 * h } else { h };
            let ax = row.block(j - t);
            let bt = &b[t * m1 * m1..(t + 1) * m1 * m1];
            for r in 0..m2 {
                for c in 0..m1 {
                    let mut acc = Complex64::default();
                    for l in 0..m1 {
                        acc += ax[r * m1 + l] * bt[l * m1 + c];
                    }
                    out[r * m1 + c] += acc * w;
                }
            }
        }
        out
    });
    cols.concat()
}

/// Trapezoid approximation of `∫_0^{x} 𝒜(x-t) 𝒜(0)^* 𝒜(t) dt` at `x = x_index * h`.
pub fn convolution_term(row: &[BlockMatrix], x_index: usize, h: f64) -> Result<BlockMatrix> {
    if x_index >= row.len() {
        return Err(Error::validation(format!(
            "index {x_index} outside a row of {} nodes",
            row.len()
        )));
    }
    let shape = row[0].shape();
    let a0s = row[0].adjoint();
    let mut acc = BlockMatrix::zeros(shape.0, shape.1);
    for t in 0..=x_index {
        if x_index == 0 {
            break;
        }
        let w = if t == 0 || t == x_index { 0.5 * h } else { h };
        acc += &row[x_index - t] * &a0s * &row[t] * Complex64::from(w);
    }
    Ok(acc)
}

/// One characteristic Heun step: row `ℓ` to row `ℓ + h`, one node shorter.
pub fn evolve_step(row: &[BlockMatrix], h: f64) -> Result<Vec<BlockMatrix>> {
    if row.len() < 2 {
        return Err(Error::validation(
            "row exhausted: need at least 2 nodes to step",
        ));
    }
    let flat = FlatRow::from_blocks(row);
    Ok(step_flat(&flat, h).to_blocks())
}

fn step_flat(row: &FlatRow, h: f64) -> FlatRow {
    let bs = row.bs();
    let n = row.len();
    let q = convolution_all(row, h);
    let mut pred = vec![Complex64::default(); (n - 1) * bs];
    for j in 0..n - 1 {
        for e in 0..bs {
            pred[j * bs + e] = row.data[(j + 1) * bs + e] + q[(j + 1) * bs + e] * h;
        }
    }
    let pred = FlatRow {
        r: row.r,
        c: row.c,
        data: pred,
    };
    let qp = convolution_all(&pred, h);
    let mut next = vec![Complex64::default(); (n - 1) * bs];
    for j in 0..n - 1 {
        for e in 0..bs {
            next[j * bs + e] =
                row.data[(j + 1) * bs + e] + (q[(j + 1) * bs + e] + qp[j * bs + e]) * (0.5 * h);
        }
    }
    FlatRow {
        r: row.r,
        c: row.c,
        data: next,
    }
}

/// Evolves `initial` on `[0, T]` over the whole triangle `x + ℓ <= T`.
///
/// The initial row is first certified by the positivity margin of its
/// kernel; data failing the gate are rejected before any evolution.
pub fn solve_a_equation(initial: &AFunction) -> Result<AField> {
    let s = crate::krein::build_s_kernel(initial, initial.grid.end())?;
    let margin = crate::krein::check_positivity(&s);
    crate::krein::require_margin(margin)?;
    evolve_unchecked(initial)
}

/// Evolution without the positivity gate.
pub fn evolve_unchecked(initial: &AFunction) -> Result<AField> {
    let h = initial.grid.spacing();
    let n = initial.grid.len();
    let mut rows = Vec::with_capacity(n);
    let mut cur = FlatRow::from_blocks(&initial.samples);
    rows.push(initial.samples.clone());
    for i in 1..n {
        cur = step_flat(&cur, h);
        let peak = cur.data.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !(peak <= BLOWUP_NORM) {
            return Err(Error::numerical(format!(
                "𝒜-equation blew up at ℓ = {:.6} (|𝒜| = {peak:.3e})",
                i as f64 * h
            )));
        }
        rows.push(cur.to_blocks());
    }
    AField::from_rows(initial.grid.end(), h, rows)
}

/// `v(ℓ_i) = -i 𝒜(0, ℓ_i)^*` along the computed edge.
pub fn recover_potential(field: &AField) -> Result<Potential> {
    let edge = field.left_edge();
    let (m2, m1) = edge[0].shape();
    let sig = BlockSignature::new(m1, m2)?;
    let samples = edge.iter().map(|a| a.adjoint() * (-I)).collect();
    Potential::from_samples(sig, field.h, samples)
}

/// Residual norms at interior nodes `(x_j, ℓ_i)`, `i, j >= 1`, `i + j <= n - 2`.
#[derive(Debug, Clone)]
pub struct Residual {
    /// `(i, j, |ℱ|)` triples.
    pub nodes: Vec<(usize, usize, f64)>,
}

impl Residual {
    pub fn max(&self) -> f64 {
        self.nodes.iter().map(|n| n.2).fold(0.0, f64::max)
    }

    /// Node with the largest residual.
    pub fn argmax(&self) -> Option<(usize, usize)> {
        self.nodes
            .iter()
            .max_by(|a, b| a.2.total_cmp(&b.2))
            .map(|n| (n.0, n.1))
    }
}

/// Central-difference residual `∂_ℓ 𝒜 - ∂_x 𝒜 - ∫ 𝒜 𝒜(0)^* 𝒜` on interior nodes.
pub fn a_equation_residual(field: &AField) -> Result<Residual> {
    let n = field.len();
    if n < 3 {
        return Err(Error::validation("residual needs at least 3 rows"));
    }
    let h = field.h;
    let convs: Vec<Vec<Complex64>> = field
        .rows
        .iter()
        .map(|r| convolution_all(&FlatRow::from_blocks(r), h))
        .collect();
    let bs = field.rows[0][0].len();
    let mut nodes = Vec::new();
    for (i, conv) in convs.iter().enumerate().take(n - 1).skip(1) {
        for j in 1..(n - 1 - i) {
            let dl = (&field.rows[i + 1][j] - &field.rows[i - 1][j]) / Complex64::from(2.0 * h);
            let dx = (&field.rows[i][j + 1] - &field.rows[i][j - 1]) / Complex64::from(2.0 * h);
            let q = BlockMatrix::from_row_slice(
                field.rows[0][0].nrows(),
                field.rows[0][0].ncols(),
                &conv[j * bs..(j + 1) * bs],
            );
            nodes.push((i, j, (dl - dx - q).norm()));
        }
    }
    Ok(Residual { nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::make_uniform_grid;

    fn s(z: Complex64) -> BlockMatrix {
        BlockMatrix::from_element(1, 1, z)
    }

    #[test]
    fn convolution_examples() {
        let h = 0.1;
        let row: Vec<_> = (0..11).map(|_| s(Complex64::new(0.6, 0.8))).collect();
        assert_eq!(
            convolution_term(&row, 0, h).unwrap(),
            BlockMatrix::zeros(1, 1)
        );
        let q = convolution_term(&row, 7, h).unwrap();
        assert!((q[(0, 0)] - Complex64::new(0.6, 0.8) * 0.7).norm() < 1e-14);
        let lin: Vec<_> = (0..11).map(|j| s((j as f64 * h).into())).collect();
        assert_eq!(convolution_term(&lin, 10, h).unwrap().norm(), 0.0);
        assert!(convolution_term(&lin, 11, h).is_err());
    }

    #[test]
    fn flat_convolution_matches_blockwise() {
        let row: Vec<_> = (0..9)
            .map(|j| {
                BlockMatrix::from_fn(2, 3, |r, c| {
                    Complex64::new((j + r) as f64 * 0.1, c as f64 - 0.5 * j as f64)
                })
            })
            .collect();
        let flat = convolution_all(&FlatRow::from_blocks(&row), 0.05);
        for j in 0..9 {
            let b = convolution_term(&row, j, 0.05).unwrap();
            let f = BlockMatrix::from_row_slice(2, 3, &flat[j * 6..(j + 1) * 6]);
            assert!((b - f).norm() < 1e-13);
        }
    }

    #[test]
    fn zero_row_stays_zero() {
        let row = vec![BlockMatrix::zeros(1, 2); 6];
        let next = evolve_step(&row, 0.1).unwrap();
        assert_eq!(next.len(), 5);
        assert!(next.iter().all(|b| b.norm() == 0.0));
        assert!(evolve_step(&row[..1], 0.1).is_err());
    }

    #[test]
    fn vanishing_edge_shifts_on_euler_stage() {
        // With 𝒜(0) = 0 the convolution vanishes, so the predictor is a pure shift.
        let row: Vec<_> = (0..6)
            .map(|j| s(Complex64::new(j as f64, 2.0 * j as f64)))
            .collect();
        let flat = FlatRow::from_blocks(&row);
        let q = convolution_all(&flat, 0.1);
        assert!(q.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn recover_examples() {
        let field =
            AField::from_rows(0.2, 0.1, vec![vec![s(-I); 3], vec![s(-I); 2], vec![s(-I)]]).unwrap();
        let v = recover_potential(&field).unwrap();
        assert!(v
            .samples()
            .iter()
            .all(|b| (b[(0, 0)] - Complex64::from(1.0)).norm() < 1e-15));
        let zero = AField::from_rows(
            0.2,
            0.1,
            vec![
                vec![s(0.0.into()); 3],
                vec![s(0.0.into()); 2],
                vec![s(0.0.into())],
            ],
        )
        .unwrap();
        assert!(recover_potential(&zero)
            .unwrap()
            .samples()
            .iter()
            .all(|b| b.norm() == 0.0));
    }

    #[test]
    fn residual_examples() {
        let n = 8;
        let zero = AField::from_rows(
            0.7,
            0.1,
            (0..n).map(|i| vec![s(0.0.into()); n - i]).collect(),
        )
        .unwrap();
        assert_eq!(a_equation_residual(&zero).unwrap().max(), 0.0);
        let mut bad = zero.clone();
        bad.rows[3][2] = s(1.0.into());
        let r = a_equation_residual(&bad).unwrap();
        // The spike only reaches nodes whose stencils touch (j = 2, i = 3).
        for &(i, j, v) in &r.nodes {
            if v > 0.0 {
                let near =
                    (i == 3 && (j == 1 || j == 3)) || (j == 2 && (i == 2 || i == 4)) || i == 3;
                assert!(near, "unexpected residual at ({i}, {j})");
            }
        }
        assert!(r.max() > 1.0);
    }

    #[test]
    fn solve_zero_initial() {
        let g = make_uniform_grid(1.0, 21).unwrap();
        let a = AFunction::new(g, vec![BlockMatrix::zeros(1, 1); 21]).unwrap();
        let f = solve_a_equation(&a).unwrap();
        assert!(f.rows.iter().flatten().all(|b| b.norm() == 0.0));
        assert!(recover_potential(&f)
            .unwrap()
            .samples()
            .iter()
            .all(|b| b.norm() == 0.0));
    }

    #[test]
    fn gate_rejects_inadmissible_data() {
        let g = make_uniform_grid(2.0, 81).unwrap();
        let a = AFunction::new(g, vec![BlockMatrix::from_element(1, 1, 1.0.into()); 81]).unwrap();
        assert!(matches!(
            solve_a_equation(&a),
            Err(Error::Inadmissible { .. })
        ));
    }
}
