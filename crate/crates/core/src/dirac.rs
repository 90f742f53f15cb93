//! Potentials and fundamental solutions of `u' = i(zJ + JV(x))u`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{BlockMatrix, Grid};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Block sizes `m1`, `m2` of the signature `J = diag(I_{m1}, -I_{m2})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSignature {
    pub m1: usize,
    pub m2: usize,
}

impl BlockSignature {
    pub fn new(m1: usize, m2: usize) -> Result<Self> {
        if m1 == 0 || m2 == 0 {
            return Err(Error::validation(format!(
                "block sizes must be positive, got m1 = {m1}, m2 = {m2}"
            )));
        }
        Ok(Self { m1, m2 })
    }

    pub fn scalar() -> Self {
        Self { m1: 1, m2: 1 }
    }

    pub fn m(&self) -> usize {
        self.m1 + self.m2
    }

    pub fn j_matrix(&self) -> BlockMatrix {
        let d: Vec<Complex64> = (0..self.m())
            .map(|k| if k < self.m1 { 1.0 } else { -1.0 }.into())
            .collect();
        BlockMatrix::from_diagonal(&DVector::from_vec(d))
    }
}

/// Analytic profile `x -> v(x)` used instead of sample interpolation.
pub type Profile = Arc<dyn Fn(f64) -> BlockMatrix + Send + Sync>;

/// An `m1 x m2` potential sampled at `x_j = j h` on its support `[0, a]`.
///
/// The potential is taken to vanish outside `[0, a]`. Off-node values
/// come from the analytic profile when one is attached and from
/// four-point cubic interpolation otherwise.
#[derive(Clone)]
pub struct Potential {
    sig: BlockSignature,
    h: f64,
    samples: Vec<BlockMatrix>,
    derivative: Option<Vec<BlockMatrix>>,
    profile: Option<Profile>,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential")
            .field("sig", &self.sig)
            .field("h", &self.h)
            .field("support", &self.support())
            .field("nodes", &self.samples.len())
            .field("profile", &self.profile.is_some())
            .finish()
    }
}

impl Potential {
    pub fn from_samples(sig: BlockSignature, h: f64, samples: Vec<BlockMatrix>) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::validation(format!(
                "spacing must be positive, got {h}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::validation("potential needs at least one sample"));
        }
        for (j, s) in samples.iter().enumerate() {
            if s.shape() != (sig.m1, sig.m2) {
                return Err(Error::validation(format!(
                    "sample {j} has shape {:?}, expected ({}, {})",
                    s.shape(),
                    sig.m1,
                    sig.m2
                )));
            }
            if s.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::validation(format!("sample {j} is not finite")));
            }
        }
        Ok(Self {
            sig,
            h,
            samples,
            derivative: None,
            profile: None,
        })
    }

    /// Samples `f` on `[0, a]` with spacing `h` and keeps `f` for off-node evaluation.
    pub fn from_fn<F>(sig: BlockSignature, a: f64, h: f64, f: F) -> Result<Self>
    where
        F: Fn(f64) -> BlockMatrix + Send + Sync + 'static,
    {
        let grid = Grid::with_spacing(a, h)?;
        let samples = grid.nodes().into_iter().map(&f).collect();
        let mut p = Self::from_samples(sig, grid.spacing(), samples)?;
        p.profile = Some(Arc::new(f));
        Ok(p)
    }

    /// The zero potential on `[0, a]`.
    pub fn zero(sig: BlockSignature, a: f64, h: f64) -> Result<Self> {
        Self::from_fn(sig, a, h, move |_| BlockMatrix::zeros(sig.m1, sig.m2))
    }

    pub fn with_derivative(mut self, derivative: Vec<BlockMatrix>) -> Result<Self> {
        if derivative.len() != self.samples.len() {
            return Err(Error::validation(
                "derivative samples do not match the grid",
            ));
        }
        self.derivative = Some(derivative);
        Ok(self)
    }

    pub fn signature(&self) -> BlockSignature {
        self.sig
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn support(&self) -> f64 {
        (self.samples.len() - 1) as f64 * self.h
    }

    pub fn samples(&self) -> &[BlockMatrix] {
        &self.samples
    }

    pub fn profile(&self) -> Option<&Profile> {
        self.profile.as_ref()
    }

    /// Grid over the support; `None` for a single-node (degenerate) support.
    pub fn grid(&self) -> Option<Grid> {
        if self.samples.len() < 2 {
            None
        } else {
            Grid::with_spacing(self.support(), self.h).ok()
        }
    }

    /// The same potential sampled with spacing `h`; the support must be a multiple of `h`.
    pub fn resample(&self, h: f64) -> Result<Self> {
        if (h - self.h).abs() <= 1e-12 * self.h {
            return Ok(self.clone());
        }
        let a = self.support();
        let r = a / h;
        if !(h > 0.0) || (r - r.round()).abs() > 1e-6 {
            return Err(Error::validation(format!(
                "support {a} is not a multiple of spacing {h}"
            )));
        }
        let n = r.round() as usize;
        let samples = (0..=n)
            .map(|j| self.value_at(if j == n { a } else { j as f64 * h }))
            .collect();
        Ok(Self {
            sig: self.sig,
            h,
            samples,
            derivative: None,
            profile: self.profile.clone(),
        })
    }

    /// Largest operator norm of the samples, the `c` of the convergence bounds.
    pub fn sup_norm(&self) -> f64 {
        self.samples
            .iter()
            .map(crate::numerics::operator_norm)
            .fold(0.0, f64::max)
    }

    /// `v'` at the nodes: supplied samples or second-order finite differences.
    pub fn derivative_samples(&self) -> Vec<BlockMatrix> {
        if let Some(d) = &self.derivative {
            return d.clone();
        }
        let s = &self.samples;
        let n = s.len();
        let zero = BlockMatrix::zeros(self.sig.m1, self.sig.m2);
        if n < 3 {
            return match n {
                2 => vec![(&s[1] - &s[0]) / Complex64::from(self.h); 2],
                _ => vec![zero],
            };
        }
        let inv = Complex64::from(1.0 / (2.0 * self.h));
        (0..n)
            .map(|j| {
                if j == 0 {
                    (&s[0] * Complex64::from(-3.0) + &s[1] * Complex64::from(4.0) - &s[2])
                        .map(|z| z * inv)
                } else if j == n - 1 {
                    (&s[n - 1] * Complex64::from(3.0) - &s[n - 2] * Complex64::from(4.0)
                        + &s[n - 3])
                        .map(|z| z * inv)
                } else {
                    (&s[j + 1] - &s[j - 1]).map(|z| z * inv)
                }
            })
            .collect()
    }

    /// Largest second difference divided by `h^2`, a discrete `C^1`/`C^2` indicator.
    pub fn max_second_difference(&self) -> f64 {
        self.samples
            .windows(3)
            .map(|w| (&w[0] - &w[1] * Complex64::from(2.0) + &w[2]).norm() / (self.h * self.h))
            .fold(0.0, f64::max)
    }

    /// `v(x)`, zero outside `[0, a]`.
    pub fn value_at(&self, x: f64) -> BlockMatrix {
        let a = self.support();
        let slack = 1e-12 * self.h.max(a);
        if x < -slack || x > a + slack {
            return BlockMatrix::zeros(self.sig.m1, self.sig.m2);
        }
        if let Some(p) = &self.profile {
            return p(x.clamp(0.0, a));
        }
        self.interpolate(x.clamp(0.0, a))
    }

    fn interpolate(&self, x: f64) -> BlockMatrix {
        let n = self.samples.len();
        if n == 1 {
            return self.samples[0].clone();
        }
        let r = x / self.h;
        let mut j = r.floor() as usize;
        if j >= n - 1 {
            j = n - 2;
        }
        let t = r - j as f64;
        if t.abs() < 1e-12 {
            return self.samples[j].clone();
        }
        if n < 4 {
            return &self.samples[j] * Complex64::from(1.0 - t)
                + &self.samples[j + 1] * Complex64::from(t);
        }
        // Four consecutive nodes containing [x_j, x_{j+1}], shifted inward at the ends.
        let start = j.saturating_sub(1).min(n - 4);
        let s = r - start as f64;
        let mut out = BlockMatrix::zeros(self.sig.m1, self.sig.m2);
        for k in 0..4 {
            let mut w = 1.0;
            for l in 0..4 {
                if l != k {
                    w *= (s - l as f64) / (k as f64 - l as f64);
                }
            }
            out += &self.samples[start + k] * Complex64::from(w);
        }
        out
    }
}

/// Fundamental solution samples `u_ell(x_j, z)` along a grid.
#[derive(Debug, Clone)]
pub struct MatrixPath {
    pub grid: Grid,
    pub z: Complex64,
    pub ell_index: usize,
    pub values: Vec<BlockMatrix>,
}

impl MatrixPath {
    pub fn at(&self, j: usize) -> &BlockMatrix {
        &self.values[j]
    }
}

/// `V(x) = [[0, v(x)], [v(x)^*, 0]]` with `v` read at the nearest node.
pub fn assemble_v_matrix(potential: &Potential, x: f64) -> BlockMatrix {
    let sig = potential.sig;
    let m = sig.m();
    let mut out = BlockMatrix::zeros(m, m);
    let a = potential.support();
    let slack = 1e-12 * potential.h.max(a);
    if x < -slack || x > a + slack {
        return out;
    }
    let j = ((x / potential.h).round().max(0.0) as usize).min(potential.samples.len() - 1);
    let v = &potential.samples[j];
    out.view_mut((0, sig.m1), (sig.m1, sig.m2)).copy_from(v);
    out.view_mut((sig.m1, 0), (sig.m2, sig.m1))
        .copy_from(&v.adjoint());
    out
}

/// Flat row-major small-matrix propagator for the Dirac system.
///
/// Hot loops (Weyl batches over thousands of `z`) run through this type
/// instead of `BlockMatrix` to avoid per-stage allocations.
pub(crate) struct Propagator {
    m1: usize,
    m2: usize,
    step: f64,
    /// `v` at `x_k = k * step` (even slots) and midpoints (odd slots), row-major `m1 x m2`.
    table: Vec<Complex64>,
    steps: usize,
}

impl Propagator {
    /// Tabulates `v` on `[0, a]` with a step no larger than `max_step`
    /// that divides the sample spacing.
    pub(crate) fn new(potential: &Potential, max_step: f64) -> Self {
        let sig = potential.sig;
        let a = potential.support();
        let nseg = potential.samples.len() - 1;
        let sub = (potential.h / max_step).ceil().max(1.0) as usize;
        let steps = nseg * sub;
        let step = if steps == 0 {
            potential.h
        } else {
            a / steps as f64
        };
        let bs = sig.m1 * sig.m2;
        let mut table = vec![Complex64::default(); (2 * steps + 1) * bs];
        for k in 0..=2 * steps {
            let x = if k == 2 * steps {
                a
            } else {
                0.5 * k as f64 * step
            };
            let v = if k % (2 * sub) == 0 && potential.profile.is_none() {
                potential.samples[k / (2 * sub)].clone()
            } else {
                potential.value_at(x)
            };
            for r in 0..sig.m1 {
                for c in 0..sig.m2 {
                    table[k * bs + r * sig.m2 + c] = v[(r, c)];
                }
            }
        }
        Self {
            m1: sig.m1,
            m2: sig.m2,
            step,
            table,
            steps,
        }
    }

    pub(crate) fn steps(&self) -> usize {
        self.steps
    }

    pub(crate) fn step(&self) -> f64 {
        self.step
    }

    fn m(&self) -> usize {
        self.m1 + self.m2
    }

    fn v_slot(&self, half_index: usize) -> &[Complex64] {
        let bs = self.m1 * self.m2;
        &self.table[half_index * bs..(half_index + 1) * bs]
    }

    /// `out = i(zJ + JV) u` for a row-major `m x ncols` block `u`.
    fn generator(
        &self,
        z: Complex64,
        v: &[Complex64],
        u: &[Complex64],
        ncols: usize,
        out: &mut [Complex64],
    ) {
        let (m1, m2) = (self.m1, self.m2);
        for r in 0..m1 {
            for c in 0..ncols {
                let mut acc = z * u[r * ncols + c];
                for k in 0..m2 {
                    acc += v[r * m2 + k] * u[(m1 + k) * ncols + c];
                }
                out[r * ncols + c] = I * acc;
            }
        }
        for r in 0..m2 {
            for c in 0..ncols {
                let mut acc = -z * u[(m1 + r) * ncols + c];
                for k in 0..m1 {
                    acc -= v[k * m2 + r].conj() * u[k * ncols + c];
                }
                out[(m1 + r) * ncols + c] = I * acc;
            }
        }
    }

    /// Advances `u` (row-major `m x ncols`) over tabulated step `k`, forward
    /// when `forward` and from `x_{k+1}` back to `x_k` otherwise.
    pub(crate) fn rk4(
        &self,
        z: Complex64,
        k: usize,
        forward: bool,
        u: &mut [Complex64],
        work: &mut Rk4Work,
    ) {
        let n = u.len();
        let ncols = n / self.m();
        let (h, s0, s2) = if forward {
            (self.step, 2 * k, 2 * k + 2)
        } else {
            (-self.step, 2 * k + 2, 2 * k)
        };
        let (v0, vm, v1) = (self.v_slot(s0), self.v_slot(2 * k + 1), self.v_slot(s2));
        work.resize(n);
        let Rk4Work {
            k1,
            k2,
            k3,
            k4,
            tmp,
        } = work;
        self.generator(z, v0, u, ncols, k1);
        for i in 0..n {
            tmp[i] = u[i] + k1[i] * (0.5 * h);
        }
        self.generator(z, vm, tmp, ncols, k2);
        for i in 0..n {
            tmp[i] = u[i] + k2[i] * (0.5 * h);
        }
        self.generator(z, vm, tmp, ncols, k3);
        for i in 0..n {
            tmp[i] = u[i] + k3[i] * h;
        }
        self.generator(z, v1, tmp, ncols, k4);
        let w = h / 6.0;
        for i in 0..n {
            u[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * w;
        }
    }

    /// `u_0(a, z)` as a flat row-major `m x m` array.
    pub(crate) fn transfer(&self, z: Complex64) -> Vec<Complex64> {
        let m = self.m();
        let mut u = vec![Complex64::default(); m * m];
        for i in 0..m {
            u[i * m + i] = Complex64::from(1.0);
        }
        let mut work = Rk4Work::default();
        for k in 0..self.steps {
            self.rk4(z, k, true, &mut u, &mut work);
        }
        u
    }
}

#[derive(Default)]
pub(crate) struct Rk4Work {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl Rk4Work {
    fn resize(&mut self, n: usize) {
        if self.k1.len() != n {
            for b in [
                &mut self.k1,
                &mut self.k2,
                &mut self.k3,
                &mut self.k4,
                &mut self.tmp,
            ] {
                b.resize(n, Complex64::default());
            }
        }
    }
}

pub(crate) fn flat_to_block(flat: &[Complex64], rows: usize, cols: usize) -> BlockMatrix {
    BlockMatrix::from_row_slice(rows, cols, flat)
}

fn check_finite(u: &[Complex64], x: f64, z: Complex64) -> Result<()> {
    if u.iter().any(|w| !w.re.is_finite() || !w.im.is_finite()) {
        return Err(Error::numerical(format!(
            "fundamental solution overflowed at x = {x} for z = {z}"
        )));
    }
    Ok(())
}

/// Free propagation `e^{i t z J}` applied in place to a row-major block.
fn free_propagate(m1: usize, m: usize, z: Complex64, t: f64, u: &mut [Complex64]) {
    let ncols = u.len() / m;
    let up = (I * z * t).exp();
    let down = (-I * z * t).exp();
    for r in 0..m {
        let f = if r < m1 { up } else { down };
        for c in 0..ncols {
            u[r * ncols + c] *= f;
        }
    }
}

/// `u_ell(x_j, z)` on `grid`, normalized to the identity at `x = ell`.
///
/// Each grid step is split so the RK4 step never exceeds the potential
/// spacing; beyond the support the free propagator is applied exactly.
pub fn fundamental_solution(
    potential: &Potential,
    z: Complex64,
    grid: &Grid,
    ell: f64,
) -> Result<MatrixPath> {
    let ell_index = grid
        .index_of(ell)
        .ok_or_else(|| Error::validation(format!("ell = {ell} is not a grid node")))?;
    let sig = potential.sig;
    let m = sig.m();
    let a = potential.support();
    let hg = grid.spacing();
    let sub = (hg / potential.h).ceil().max(1.0) as usize;
    let hs = hg / sub as f64;
    // Substeps over [0, a] tabulated on a fine grid aligned with the outer one.
    let fine = Potential {
        profile: potential.profile.clone(),
        ..potential.clone()
    };
    let prop = Propagator::new(&fine, hs);
    let step = prop.step();
    let identity: Vec<Complex64> = (0..m * m)
        .map(|k| {
            if k / m == k % m {
                1.0.into()
            } else {
                0.0.into()
            }
        })
        .collect();
    let mut values = vec![BlockMatrix::zeros(m, m); grid.len()];
    values[ell_index] = BlockMatrix::identity(m, m);
    let mut work = Rk4Work::default();

    // One substep of length `hs` starting at `x`, in either direction.
    let advance = |u: &mut Vec<Complex64>, x: f64, forward: bool, work: &mut Rk4Work| {
        let x_end = if forward { x + hs } else { x - hs };
        let (lo, hi) = if forward { (x, x_end) } else { (x_end, x) };
        if prop.steps() == 0 || lo >= a - 1e-12 * a.max(1.0) {
            free_propagate(sig.m1, m, z, x_end - x, u);
            return;
        }
        if hi > a + 1e-9 * step {
            // Split at the support edge.
            if forward {
                advance_inside(&prop, z, lo, a, true, u, work);
                free_propagate(sig.m1, m, z, hi - a, u);
            } else {
                free_propagate(sig.m1, m, z, a - hi, u);
                advance_inside(&prop, z, lo, a, false, u, work);
            }
            return;
        }
        advance_inside(&prop, z, lo, hi, forward, u, work);
    };

    let mut u = identity.clone();
    for j in ell_index..grid.len() - 1 {
        for s in 0..sub {
            advance(&mut u, grid.node(j) + s as f64 * hs, true, &mut work);
        }
        check_finite(&u, grid.node(j + 1), z)?;
        values[j + 1] = flat_to_block(&u, m, m);
    }
    let mut u = identity;
    for j in (1..=ell_index).rev() {
        for s in 0..sub {
            advance(&mut u, grid.node(j) - s as f64 * hs, false, &mut work);
        }
        check_finite(&u, grid.node(j - 1), z)?;
        values[j - 1] = flat_to_block(&u, m, m);
    }
    Ok(MatrixPath {
        grid: *grid,
        z,
        ell_index,
        values,
    })
}

/// Runs the tabulated steps covering `[lo, hi]` inside the support.
fn advance_inside(
    prop: &Propagator,
    z: Complex64,
    lo: f64,
    hi: f64,
    forward: bool,
    u: &mut [Complex64],
    work: &mut Rk4Work,
) {
    let k0 = (lo / prop.step()).round() as usize;
    let k1 = ((hi / prop.step()).round() as usize).min(prop.steps());
    if forward {
        for k in k0..k1 {
            prop.rk4(z, k, true, u, work);
        }
    } else {
        for k in (k0..k1).rev() {
            prop.rk4(z, k, false, u, work);
        }
    }
}

/// The shifted potential `x -> v(x + ell)` with support `[0, a - ell]`.
pub fn shift_potential(potential: &Potential, ell: f64) -> Result<Potential> {
    let a = potential.support();
    let r = ell / potential.h;
    let k = r.round();
    if ell < 0.0 || k as usize > potential.samples.len() || (r - k).abs() > 1e-9 {
        return Err(Error::validation(format!(
            "shift {ell} is not a node of the potential grid on [0, {a}]"
        )));
    }
    let k = k as usize;
    if k >= potential.samples.len() {
        return Err(Error::validation(format!(
            "shift {ell} exceeds support {a}"
        )));
    }
    let samples = potential.samples[k..].to_vec();
    let derivative = potential.derivative.as_ref().map(|d| d[k..].to_vec());
    let profile = potential.profile.clone().map(|p| -> Profile {
        let shift = k as f64 * potential.h;
        Arc::new(move |x| p(x + shift))
    });
    Ok(Potential {
        sig: potential.sig,
        h: potential.h,
        samples,
        derivative,
        profile,
    })
}

/// Principal square root of `w` with the sign chosen so that `Im q > 0`.
pub fn branch_sqrt(w: Complex64) -> Complex64 {
    let q = w.sqrt();
    if q.im < 0.0 || (q.im == 0.0 && q.re < 0.0) {
        -q
    } else {
        q
    }
}

/// Closed-form fundamental solution for `v = i c` on `[0, a]`, `v = 0` beyond.
pub fn closed_form_fundamental_constant(
    c: f64,
    a: f64,
    z: Complex64,
    x: f64,
) -> Result<BlockMatrix> {
    let w = z * z - c * c;
    if w.norm() <= 1e-14 * (1.0 + z.norm_sqr()) {
        return Err(Error::validation(format!(
            "z = {z} is a branch point for c = {c}"
        )));
    }
    let q = branch_sqrt(w);
    let ic = I * c;
    let k = BlockMatrix::from_row_slice(2, 2, &[-ic, -ic, z - q, z + q]);
    let det = -ic * (z + q) + ic * (z - q);
    let k_inv = BlockMatrix::from_row_slice(2, 2, &[z + q, ic, -(z - q), -ic]) / det;
    let inside = x.min(a);
    let e = BlockMatrix::from_row_slice(
        2,
        2,
        &[
            (I * inside * q).exp(),
            0.0.into(),
            0.0.into(),
            (-I * inside * q).exp(),
        ],
    );
    let mut u = k * e * k_inv;
    if x > a {
        let t = x - a;
        let f = BlockMatrix::from_row_slice(
            2,
            2,
            &[
                (I * t * z).exp(),
                0.0.into(),
                0.0.into(),
                (-I * t * z).exp(),
            ],
        );
        u = f * u;
    }
    Ok(u)
}
