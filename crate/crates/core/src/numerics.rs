//! Uniform grids, trapezoid quadrature, RK4 steps and dense solves.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix used for every block-valued quantity.
pub type BlockMatrix = DMatrix<Complex64>;

/// Uniform grid `x_j = j h` on `[0, end]` with `len >= 2` nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    end: f64,
    len: usize,
}

impl Grid {
    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.end / (self.len - 1) as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j + 1 == self.len {
            self.end
        } else {
            j as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len).map(|j| self.node(j)).collect()
    }

    /// Index of the node equal to `x` up to a relative slack of `1e-9 h`.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let h = self.spacing();
        let r = x / h;
        let j = r.round();
        if j < 0.0 || j as usize >= self.len || (r - j).abs() > 1e-9 {
            None
        } else {
            Some(j as usize)
        }
    }

    /// Nearest node index, clamped to the grid.
    pub fn nearest_index(&self, x: f64) -> usize {
        let j = (x / self.spacing()).round();
        if j <= 0.0 {
            0
        } else {
            (j as usize).min(self.len - 1)
        }
    }

    /// Grid with the given spacing on `[0, end]`; `end` must be a multiple of `h`.
    pub fn with_spacing(end: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::validation(format!(
                "grid spacing must be positive, got {h}"
            )));
        }
        let steps = (end / h).round();
        if steps < 1.0 || ((end / h) - steps).abs() > 1e-6 {
            return Err(Error::validation(format!(
                "length {end} is not a positive multiple of spacing {h}"
            )));
        }
        make_uniform_grid(end, steps as usize + 1)
    }
}

pub fn make_uniform_grid(end: f64, n: usize) -> Result<Grid> {
    if !(end > 0.0) || !end.is_finite() {
        return Err(Error::validation(format!(
            "grid endpoint must be positive, got {end}"
        )));
    }
    if n < 2 {
        return Err(Error::validation(format!(
            "grid needs at least 2 nodes, got {n}"
        )));
    }
    Ok(Grid { end, len: n })
}

/// Trapezoid weights `h/2, h, ..., h, h/2` for `n` nodes.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    if n > 0 {
        w[0] = 0.5 * h;
        w[n - 1] = 0.5 * h;
    }
    if n == 1 {
        w[0] = 0.0;
    }
    w
}

fn check_dims(samples: &[BlockMatrix]) -> Result<(usize, usize)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::validation("no samples"))?;
    let dims = first.shape();
    if let Some((j, m)) = samples.iter().enumerate().find(|(_, m)| m.shape() != dims) {
        return Err(Error::validation(format!(
            "sample {j} has shape {:?}, expected {:?}",
            m.shape(),
            dims
        )));
    }
    Ok(dims)
}

/// Composite trapezoid approximation of the integral over the whole grid.
pub fn trapezoid_integrate(samples: &[BlockMatrix], grid: &Grid) -> Result<BlockMatrix> {
    if samples.len() != grid.len() {
        return Err(Error::validation(format!(
            "{} samples for a grid of {} nodes",
            samples.len(),
            grid.len()
        )));
    }
    let (r, c) = check_dims(samples)?;
    let w = trapezoid_weights(samples.len(), grid.spacing());
    let mut acc = BlockMatrix::zeros(r, c);
    for (s, &wj) in samples.iter().zip(&w) {
        acc += s * Complex64::from(wj);
    }
    Ok(acc)
}

/// Running trapezoid integrals `∫_0^{x_j}`, starting at zero.
pub fn cumulative_trapezoid(samples: &[BlockMatrix], h: f64) -> Result<Vec<BlockMatrix>> {
    let (r, c) = check_dims(samples)?;
    let mut out = Vec::with_capacity(samples.len());
    let mut acc = BlockMatrix::zeros(r, c);
    out.push(acc.clone());
    for pair in samples.windows(2) {
        acc += (&pair[0] + &pair[1]) * Complex64::from(0.5 * h);
        out.push(acc.clone());
    }
    Ok(out)
}

fn all_finite(m: &BlockMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// One classical fourth-order Runge–Kutta step of `y' = f(x, y)`.
pub fn rk4_step<F>(derivative: F, state: &BlockMatrix, x: f64, h: f64) -> Result<BlockMatrix>
where
    F: Fn(f64, &BlockMatrix) -> BlockMatrix,
{
    let half = Complex64::from(0.5 * h);
    let k1 = derivative(x, state);
    let k2 = derivative(x + 0.5 * h, &(state + &k1 * half));
    let k3 = derivative(x + 0.5 * h, &(state + &k2 * half));
    let k4 = derivative(x + h, &(state + &k3 * Complex64::from(h)));
    let out = state + (k1 + (k2 + k3) * Complex64::from(2.0) + k4) * Complex64::from(h / 6.0);
    if !all_finite(&out) {
        return Err(Error::numerical(format!(
            "non-finite RK4 state at x = {x} with step {h}"
        )));
    }
    Ok(out)
}

/// Solves `matrix * X = rhs` by LU with partial pivoting.
///
/// Fails when the smallest pivot is below `n * eps` times the largest one,
/// and reports that pivot.
pub fn solve_dense(matrix: &BlockMatrix, rhs: &BlockMatrix) -> Result<BlockMatrix> {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return Err(Error::validation(format!(
            "matrix must be square, got {}x{}",
            n,
            matrix.ncols()
        )));
    }
    if rhs.nrows() != n {
        return Err(Error::validation(format!(
            "rhs has {} rows, matrix has {}",
            rhs.nrows(),
            n
        )));
    }
    if !all_finite(matrix) || !all_finite(rhs) {
        return Err(Error::numerical("non-finite entries in linear system"));
    }
    let lu = matrix.clone().lu();
    let u = lu.u();
    let (mut pmin, mut pmax) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        let p = u[(i, i)].norm();
        pmin = pmin.min(p);
        pmax = pmax.max(p);
    }
    if n > 0 && (pmax == 0.0 || pmin <= n as f64 * f64::EPSILON * pmax) {
        return Err(Error::numerical(format!(
            "matrix singular to working precision: pivot {pmin:.3e} against {pmax:.3e}"
        )));
    }
    lu.solve(rhs)
        .ok_or_else(|| Error::numerical("LU solve failed"))
}

/// Spectral norm (largest singular value).
pub fn operator_norm(m: &BlockMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.norm();
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

pub fn identity(n: usize) -> BlockMatrix {
    BlockMatrix::identity(n, n)
}

/// Largest entrywise modulus, used as a cheap sup norm over grids.
pub fn max_abs(m: &BlockMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
