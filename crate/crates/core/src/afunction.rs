//! The 𝒜-function of a potential: iterated-integral series, Fourier
//! inversion of the Weyl function, and the two-parameter field 𝒜(x, ℓ).

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::aeq::AField;
use crate::dirac::{shift_potential, Potential};
use crate::error::{Error, Result};
use crate::numerics::{cumulative_trapezoid, BlockMatrix, Grid};
use crate::par;
use crate::weyl::{neumann_threshold, weyl_truncated_batch, DEFAULT_MAX_STEP};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest series index accepted by the series routes.
pub const MAX_SERIES_K: usize = 3;

/// Samples of 𝒜 (`m2 x m1` blocks) on a uniform grid.
#[derive(Debug, Clone)]
pub struct AFunction {
    pub grid: Grid,
    pub samples: Vec<BlockMatrix>,
    /// Diagnostics such as an unresolved Fourier tail.
    pub warnings: Vec<String>,
}

impl AFunction {
    pub fn new(grid: Grid, samples: Vec<BlockMatrix>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::validation(format!(
                "{} samples for a grid of {} nodes",
                samples.len(),
                grid.len()
            )));
        }
        let shape = samples[0].shape();
        if samples.iter().any(|s| s.shape() != shape) {
            return Err(Error::validation("𝒜 samples have inconsistent shapes"));
        }
        Ok(Self {
            grid,
            samples,
            warnings: Vec::new(),
        })
    }

    /// Restriction to the first `len` nodes.
    pub fn truncate(&self, len: usize) -> Result<Self> {
        let grid = Grid::with_spacing(self.grid.spacing() * (len - 1) as f64, self.grid.spacing())?;
        Ok(Self {
            grid,
            samples: self.samples[..len].to_vec(),
            warnings: self.warnings.clone(),
        })
    }

    /// `(m2, m1)`.
    pub fn block_shape(&self) -> (usize, usize) {
        self.samples[0].shape()
    }
}

/// `Φ(x) = ∫_0^x 𝒜`.
#[derive(Debug, Clone)]
pub struct PhiFunction {
    pub grid: Grid,
    pub samples: Vec<BlockMatrix>,
}

/// The kernel `𝒜_k` of the `(2k+1)`-th Neumann term.
#[derive(Debug, Clone)]
pub struct SeriesTerm {
    pub k: usize,
    pub grid: Grid,
    pub samples: Vec<BlockMatrix>,
}

/// Row-major `r x k` times `k x c`, accumulated into `out` with weight `w`.
#[inline]
fn mm_acc(
    out: &mut [Complex64],
    a: &[Complex64],
    b: &[Complex64],
    r: usize,
    k: usize,
    c: usize,
    w: f64,
) {
    for i in 0..r {
        for j in 0..c {
            let mut acc = Complex64::default();
            for l in 0..k {
                acc += a[i * k + l] * b[l * c + j];
            }
            out[i * c + j] += acc * w;
        }
    }
}

/// All kernels `𝒜_0, …, 𝒜_kmax` at `α_j = j h`, `α_j <= cap`.
///
/// The simplex integrals are evaluated inside out. Level `2j` holds
/// `G(y, s)` with `y` the lower bound of the next variable and `s` the
/// remaining partial sum; odd levels hold `y` as an upper bound. Every
/// level is a prefix or suffix trapezoid sum over one variable, so a
/// term costs `O(n_y n_s)` and all breakpoints fall on nodes.
pub(crate) fn series_terms(
    potential: &Potential,
    kmax: usize,
    h: f64,
    cap: f64,
) -> Result<Vec<Vec<BlockMatrix>>> {
    if kmax > MAX_SERIES_K {
        return Err(Error::validation(format!(
            "series index {kmax} exceeds the cap of {MAX_SERIES_K}"
        )));
    }
    let sig = potential.signature();
    let (m1, m2) = (sig.m1, sig.m2);
    let ns = (cap / h + 1e-9).floor() as usize;
    let zero = BlockMatrix::zeros(m2, m1);
    if potential.samples().len() < 2 {
        // Degenerate support: only 𝒜_0(0) can be nonzero, and it carries zero width.
        let mut terms = vec![vec![zero.clone(); ns + 1]; kmax + 1];
        terms[0][0] = potential.samples()[0].adjoint() * (-I);
        return Ok(terms);
    }
    let p = potential.resample(h)?;
    let nx = p.samples().len() - 1;

    let bv = m1 * m2;
    let mut v = vec![Complex64::default(); (nx + 1) * bv];
    let mut vs = vec![Complex64::default(); (nx + 1) * bv];
    for (x, s) in p.samples().iter().enumerate() {
        for r in 0..m1 {
            for c in 0..m2 {
                v[x * bv + r * m2 + c] = s[(r, c)];
                vs[x * bv + c * m1 + r] = s[(r, c)].conj();
            }
        }
    }
    let ny = nx + 1;
    let b_even = m2 * m1;
    let b_odd = m1 * m1;

    let mut terms = Vec::with_capacity(kmax + 1);
    terms.push(
        (0..=ns)
            .map(|s| {
                if s <= nx {
                    BlockMatrix::from_row_slice(m2, m1, &vs[s * bv..(s + 1) * bv]) * (-I)
                } else {
                    zero.clone()
                }
            })
            .collect::<Vec<_>>(),
    );
    if kmax == 0 {
        return Ok(terms);
    }

    // Layout: s-major, `g[(s * ny + y) * b + ..]`.
    let mut even: Vec<Complex64> = Vec::new();
    let mut odd = vec![Complex64::default(); (ns + 1) * ny * b_odd];
    for level in 1..=2 * kmax {
        if level % 2 == 1 {
            odd.iter_mut().for_each(|z| *z = Complex64::default());
            let first = level == 1;
            let even_ref = &even;
            let (v, vs) = (&v, &vs);
            par::for_each_chunk_mut(&mut odd, ny * b_odd, |s, col| {
                // Largest x with s + x inside the computed range and, on the
                // first level, inside the support.
                let top = if first {
                    if s > nx {
                        return;
                    }
                    nx - s
                } else {
                    nx.min(ns - s)
                };
                let mut prev = vec![Complex64::default(); b_odd];
                let mut cur = vec![Complex64::default(); b_odd];
                let mut acc = vec![Complex64::default(); b_odd];
                for x in 0..=top {
                    cur.iter_mut().for_each(|z| *z = Complex64::default());
                    let inner = if first {
                        &vs[(s + x) * bv..(s + x + 1) * bv]
                    } else {
                        let o = ((s + x) * ny + x) * b_even;
                        &even_ref[o..o + b_even]
                    };
                    mm_acc(&mut cur, &v[x * bv..(x + 1) * bv], inner, m1, m2, m1, 1.0);
                    if x > 0 {
                        for l in 0..b_odd {
                            acc[l] += (prev[l] + cur[l]) * (0.5 * h);
                        }
                    }
                    col[x * b_odd..(x + 1) * b_odd].copy_from_slice(&acc);
                    std::mem::swap(&mut prev, &mut cur);
                }
                // y beyond `top`: the integral stops at `top` (first level) or is unused.
                if first {
                    for y in top + 1..ny {
                        col.copy_within(top * b_odd..(top + 1) * b_odd, y * b_odd);
                    }
                }
            });
        } else {
            let mut next = vec![Complex64::default(); (ns + 1) * ny * b_even];
            let odd_ref = &odd;
            let vs = &vs;
            par::for_each_chunk_mut(&mut next, ny * b_even, |s, col| {
                let upper = nx.min(s);
                let mut prev = vec![Complex64::default(); b_even];
                let mut cur = vec![Complex64::default(); b_even];
                let mut acc = vec![Complex64::default(); b_even];
                for x in (0..=upper).rev() {
                    cur.iter_mut().for_each(|z| *z = Complex64::default());
                    let o = ((s - x) * ny + x) * b_odd;
                    mm_acc(
                        &mut cur,
                        &vs[x * bv..(x + 1) * bv],
                        &odd_ref[o..o + b_odd],
                        m2,
                        m1,
                        m1,
                        1.0,
                    );
                    if x < upper {
                        for l in 0..b_even {
                            acc[l] += (prev[l] + cur[l]) * (0.5 * h);
                        }
                    }
                    col[x * b_even..(x + 1) * b_even].copy_from_slice(&acc);
                    std::mem::swap(&mut prev, &mut cur);
                }
            });
            even = next;
            let k = level / 2;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            terms.push(
                (0..=ns)
                    .map(|s| {
                        let o = (s * ny) * b_even;
                        BlockMatrix::from_row_slice(m2, m1, &even[o..o + b_even]) * (I * sign)
                    })
                    .collect(),
            );
        }
    }
    Ok(terms)
}

/// `𝒜_k` on the nodes of `grid` (zero beyond `(k+1) a`).
pub fn a_series_term(potential: &Potential, k: usize, grid: &Grid) -> Result<SeriesTerm> {
    if k > MAX_SERIES_K {
        return Err(Error::validation(format!(
            "series index {k} exceeds the cap of {MAX_SERIES_K}"
        )));
    }
    let h = grid.spacing();
    let cap = grid.end().min((k + 1) as f64 * potential.support());
    let mut term = series_terms(potential, k, h, cap)?
        .pop()
        .expect("at least one term");
    let sig = potential.signature();
    term.resize(grid.len(), BlockMatrix::zeros(sig.m2, sig.m1));
    Ok(SeriesTerm {
        k,
        grid: *grid,
        samples: term,
    })
}

/// Bound `Σ_{k > kmax} c^{2k+1} α^{2k} / (k! (k+1)!)` on the series tail at `α`.
pub fn series_tail_bound(c: f64, alpha: f64, kmax: usize) -> f64 {
    let mut term = c; // k = 0
    let mut sum = 0.0;
    for k in 1..200 {
        term *= (c * alpha).powi(2) / (k as f64 * (k + 1) as f64);
        if k > kmax {
            sum += term;
            if term <= 1e-18 * sum {
                break;
            }
        }
    }
    sum
}

/// Partial sum `Σ_{k <= kmax} 𝒜_k` on `grid`, refused when the tail bound exceeds `tol`.
pub fn a_direct_series(
    potential: &Potential,
    kmax: usize,
    grid: &Grid,
    tol: f64,
) -> Result<AFunction> {
    let bound = series_tail_bound(potential.sup_norm(), grid.end(), kmax);
    if bound > tol {
        return Err(Error::validation(format!(
            "series tail bound {bound:.3e} exceeds tolerance {tol:.3e} at kmax = {kmax}"
        )));
    }
    let samples = series_on_nodes(potential, kmax, grid.spacing(), grid.len())?;
    AFunction::new(*grid, samples)
}

fn series_on_nodes(
    potential: &Potential,
    kmax: usize,
    h: f64,
    count: usize,
) -> Result<Vec<BlockMatrix>> {
    let sig = potential.signature();
    let cap = (count - 1) as f64 * h;
    let terms = series_terms(potential, kmax, h, cap)?;
    let mut out = vec![BlockMatrix::zeros(sig.m2, sig.m1); count];
    for term in &terms {
        for (o, t) in out.iter_mut().zip(term) {
            *o += t;
        }
    }
    Ok(out)
}

/// Parameters of the Fourier route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierConfig {
    /// Contour height; `None` picks `max(4, √2 c, a c^2 / 2)`.
    pub eta: Option<f64>,
    /// Half-width `W` of the window `[-W, W)`.
    pub window: f64,
    /// Number of midpoint samples, a power of two.
    pub samples: usize,
    /// Decay rate of the subtracted model.
    pub kappa: f64,
    /// Largest RK4 step for the Weyl samples.
    pub max_step: f64,
}

impl Default for FourierConfig {
    fn default() -> Self {
        Self {
            eta: None,
            window: 64.0,
            samples: 4096,
            kappa: 1.0,
            max_step: DEFAULT_MAX_STEP,
        }
    }
}

/// Default contour height for a potential.
pub fn default_eta(potential: &Potential) -> f64 {
    neumann_threshold(potential.sup_norm(), potential.support()).max(4.0)
}

/// 𝒜 on `[0, T]` (spacing of the potential) by inverting
/// `φ(ξ + iη) = -∫ e^{2ixξ} e^{-2ηx} 𝒜(x) dx` over a finite window.
pub fn a_via_fourier(
    potential: &Potential,
    eta: f64,
    t_end: f64,
    n_xi: usize,
) -> Result<AFunction> {
    let cfg = FourierConfig {
        eta: Some(eta),
        samples: n_xi,
        ..FourierConfig::default()
    };
    a_via_fourier_with(potential, t_end, &cfg)
}

pub fn a_via_fourier_with(
    potential: &Potential,
    t_end: f64,
    cfg: &FourierConfig,
) -> Result<AFunction> {
    let grid = Grid::with_spacing(t_end, potential.spacing())?;
    let (samples, warnings) = fourier_on_nodes(potential, cfg, grid.spacing(), grid.len())?;
    let mut a = AFunction::new(grid, samples)?;
    a.warnings = warnings;
    Ok(a)
}

fn fourier_on_nodes(
    potential: &Potential,
    cfg: &FourierConfig,
    h: f64,
    count: usize,
) -> Result<(Vec<BlockMatrix>, Vec<String>)> {
    let sig = potential.signature();
    let (m1, m2) = (sig.m1, sig.m2);
    let c = potential.sup_norm();
    let a = potential.support();
    let need = neumann_threshold(c, a);
    let eta = cfg.eta.unwrap_or_else(|| need.max(4.0));
    if eta < need {
        return Err(Error::validation(format!(
            "eta = {eta} is below the required {need}"
        )));
    }
    let n = cfg.samples;
    if n < 16 || !n.is_power_of_two() {
        return Err(Error::validation(format!(
            "sample count {n} must be a power of two >= 16"
        )));
    }
    if !(cfg.window > 0.0) || !(cfg.kappa > 0.0) {
        return Err(Error::validation("window and kappa must be positive"));
    }
    if potential.samples().len() < 2 {
        return Ok((vec![BlockMatrix::zeros(m2, m1); count], Vec::new()));
    }
    let w = cfg.window;
    let dxi = 2.0 * w / n as f64;
    let xis: Vec<f64> = (0..n).map(|j| -w + (j as f64 + 0.5) * dxi).collect();
    let zs: Vec<Complex64> = xis.iter().map(|&x| Complex64::new(x, eta)).collect();
    let phis = weyl_truncated_batch(potential, &zs, cfg.max_step)?;

    // Fit φ ≈ -Σ_{k<3} c_k / s^{k+1}, s = -2iz, on the outer half of the window.
    let tail: Vec<usize> = (0..n).filter(|&j| xis[j].abs() >= 0.5 * w).collect();
    let scale = 2.0 * w;
    let design = DMatrix::from_fn(tail.len(), 3, |r, k| {
        let s = -2.0 * I * zs[tail[r]];
        -(scale / s).powi(k as i32 + 1)
    });
    let bs = m1 * m2;
    let rhs = DMatrix::from_fn(tail.len(), bs, |r, e| phis[tail[r]].phi[(e / m1, e % m1)]);
    let coef = design
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::numerical(format!("tail fit failed: {e}")))?;
    // Undo the column scaling: c_k = coef_k * scale^{k+1}.
    let ck = |k: usize, e: usize| coef[(k, e)] * scale.powi(k as i32 + 1);

    let kappa = cfg.kappa;
    // Model m(x) = (p0 + p1 x + p2 x^2) e^{-κx} matching c0, c1, c2 at x = 0.
    let poly: Vec<[Complex64; 3]> = (0..bs)
        .map(|e| {
            let p0 = ck(0, e);
            let p1 = ck(1, e) + p0 * kappa;
            let p2 = (ck(2, e) + p1 * (2.0 * kappa) - p0 * (kappa * kappa)) * 0.5;
            [p0, p1, p2]
        })
        .collect();
    let model_hat = |z: Complex64, e: usize| {
        let d = kappa - 2.0 * I * z;
        let [p0, p1, p2] = poly[e];
        -(p0 / d + p1 / (d * d) + p2 * 2.0 / (d * d * d))
    };
    let resid: Vec<Vec<Complex64>> = (0..n)
        .map(|j| {
            (0..bs)
                .map(|e| phis[j].phi[(e / m1, e % m1)] - model_hat(zs[j], e))
                .collect()
        })
        .collect();

    let mut warnings = Vec::new();
    let edge = [0, n - 1]
        .iter()
        .flat_map(|&j| resid[j].iter().map(|r| r.norm()))
        .fold(0.0, f64::max);
    if edge > 1e-6 {
        warnings.push(format!(
            "Weyl tail after model subtraction is {edge:.2e} at |ξ| = {w}; widen the window"
        ));
    }

    let samples = par::map_range(count, |j| {
        let x = j as f64 * h;
        let mut acc = vec![Complex64::default(); bs];
        let step = (-2.0 * I * dxi * x).exp();
        let mut ph = (-2.0 * I * xis[0] * x).exp();
        for r in &resid {
            for e in 0..bs {
                acc[e] += r[e] * ph;
            }
            ph *= step;
        }
        let amp = (2.0 * eta * x).exp() * (-dxi / std::f64::consts::PI);
        let decay = (-kappa * x).exp();
        BlockMatrix::from_fn(m2, m1, |r, c| {
            let e = r * m1 + c;
            let [p0, p1, p2] = poly[e];
            acc[e] * amp + (p0 + p1 * x + p2 * x * x) * decay
        })
    });
    Ok((samples, warnings))
}

/// `Φ(x) = ∫_0^x 𝒜` by cumulative trapezoid, `Φ(0) = 0`.
pub fn phi_from_a(a_fn: &AFunction) -> PhiFunction {
    let samples =
        cumulative_trapezoid(&a_fn.samples, a_fn.grid.spacing()).expect("validated samples");
    PhiFunction {
        grid: a_fn.grid,
        samples,
    }
}

/// How each row of the field is produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldMethod {
    Fourier(FourierConfig),
    Series { kmax: usize },
}

/// 𝒜(x, ℓ) on the triangle `x + ℓ <= T`, one row per shifted potential.
pub fn a_field_direct(
    potential: &Potential,
    t_end: f64,
    n: usize,
    method: FieldMethod,
) -> Result<AField> {
    let grid = crate::numerics::make_uniform_grid(t_end, n)?;
    let h = grid.spacing();
    let p = potential.resample(h)?;
    let sig = p.signature();
    let rows_out = par::try_map_range(n, |i| -> Result<(Vec<BlockMatrix>, Vec<String>)> {
        let count = n - i;
        let ell = i as f64 * h;
        if i >= p.samples().len() {
            // Beyond the support the shifted potential vanishes.
            return Ok((vec![BlockMatrix::zeros(sig.m2, sig.m1); count], Vec::new()));
        }
        let shifted = shift_potential(&p, ell)?;
        match method {
            FieldMethod::Series { kmax } => {
                Ok((series_on_nodes(&shifted, kmax, h, count)?, Vec::new()))
            }
            FieldMethod::Fourier(cfg) => fourier_on_nodes(&shifted, &cfg, h, count),
        }
    })?;
    let mut warnings = Vec::new();
    let mut rows = Vec::with_capacity(n);
    for (i, (row, w)) in rows_out.into_iter().enumerate() {
        warnings.extend(w.into_iter().map(|m| format!("row {i}: {m}")));
        rows.push(row);
    }
    let mut field = AField::from_rows(t_end, h, rows)?;
    field.warnings = warnings;
    Ok(field)
}
