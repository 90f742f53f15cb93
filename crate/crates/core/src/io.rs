//! CSV import and export for potentials, 𝒜 samples, fields, Weyl samples and rays.
//!
//! Block entries are written in row-major order as `re_<p>_<j>_<k>, im_<p>_<j>_<k>`
//! with one-based indices, so the header alone fixes the block shape.
//! Floats use the shortest round-trip representation, which keeps output
//! byte-identical across runs.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::aeq::AField;
use crate::afunction::AFunction;
use crate::bm::RaySamples;
use crate::dirac::{BlockSignature, Potential};
use crate::error::{Error, Result};
use crate::numerics::{make_uniform_grid, BlockMatrix};
use crate::weyl::WeylSample;

fn block_header(prefix: &str, rows: usize, cols: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(2 * rows * cols);
    for j in 1..=rows {
        for k in 1..=cols {
            out.push(format!("re_{prefix}_{j}_{k}"));
            out.push(format!("im_{prefix}_{j}_{k}"));
        }
    }
    out
}

fn push_block(record: &mut Vec<String>, b: &BlockMatrix) {
    for j in 0..b.nrows() {
        for k in 0..b.ncols() {
            record.push(b[(j, k)].re.to_string());
            record.push(b[(j, k)].im.to_string());
        }
    }
}

fn write_table<W: Write>(
    out: W,
    header: Vec<String>,
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::validation(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::validation(format!("{}: {e}", path.display())))
}

/// Parsed block table: key columns plus one block per row.
struct BlockTable {
    keys: Vec<Vec<f64>>,
    blocks: Vec<BlockMatrix>,
    shape: (usize, usize),
}

/// Reads a table whose header is `keys` followed by a block header for `prefix`.
fn read_table<R: Read>(input: R, source: &str, keys: &[&str], prefix: &str) -> Result<BlockTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header = rdr
        .headers()
        .map_err(|e| Error::validation(format!("{source}:1: {e}")))?
        .clone();
    let bad_header = |msg: String| Error::validation(format!("{source}:1: {msg}"));
    if header.len() < keys.len() + 2 || header.iter().take(keys.len()).ne(keys.iter().copied()) {
        return Err(bad_header(format!(
            "expected columns {} followed by block entries",
            keys.join(",")
        )));
    }
    let (mut rows, mut cols) = (0, 0);
    for name in header.iter().skip(keys.len()) {
        let parts: Vec<&str> = name.split('_').collect();
        let parsed = match parts.as_slice() {
            [re_im, p, j, k] if (*re_im == "re" || *re_im == "im") && *p == prefix => {
                j.parse::<usize>().ok().zip(k.parse::<usize>().ok())
            }
            _ => None,
        };
        let (j, k) = parsed.ok_or_else(|| bad_header(format!("unrecognized column '{name}'")))?;
        rows = rows.max(j);
        cols = cols.max(k);
    }
    let expected = block_header(prefix, rows, cols);
    if header
        .iter()
        .skip(keys.len())
        .ne(expected.iter().map(String::as_str))
    {
        return Err(bad_header(format!(
            "block columns must list re/im pairs of a {rows}x{cols} block in row-major order"
        )));
    }
    let mut table = BlockTable {
        keys: Vec::new(),
        blocks: Vec::new(),
        shape: (rows, cols),
    };
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::validation(format!("{source}:{line}: {e}"))
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let mut vals = Vec::with_capacity(rec.len());
        for (field, name) in rec.iter().zip(header.iter()) {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::validation(format!(
                    "{source}:{line}: column '{name}' is not a number: '{field}'"
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::validation(format!(
                    "{source}:{line}: column '{name}' is not finite"
                )));
            }
            vals.push(v);
        }
        let (k, b) = vals.split_at(keys.len());
        table.keys.push(k.to_vec());
        table.blocks.push(BlockMatrix::from_fn(rows, cols, |j, c| {
            Complex64::new(b[2 * (j * cols + c)], b[2 * (j * cols + c) + 1])
        }));
    }
    Ok(table)
}

/// Checks `x_j = j h` and returns `h`.
fn uniform_spacing(xs: &[f64], source: &str) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::validation(format!(
            "{source}: need at least two rows"
        )));
    }
    let h = xs[1] - xs[0];
    if xs[0] != 0.0 || !(h > 0.0) {
        return Err(Error::validation(format!(
            "{source}:2: grid must start at 0 and increase"
        )));
    }
    for (j, x) in xs.iter().enumerate() {
        let expected = j as f64 * h;
        if (x - expected).abs() > 1e-9 * expected.abs().max(1.0) {
            return Err(Error::validation(format!(
                "{source}:{}: x = {x} breaks the uniform spacing {h}",
                j + 2
            )));
        }
    }
    Ok(h)
}

/// Writes `x, re_v_j_k, im_v_j_k` for every node of the support.
pub fn write_potential(path: &Path, p: &Potential) -> Result<()> {
    write_potential_to(create(path)?, p)
}

pub fn write_potential_to<W: Write>(out: W, p: &Potential) -> Result<()> {
    let sig = p.signature();
    let mut header = vec!["x".to_string()];
    header.extend(block_header("v", sig.m1, sig.m2));
    let h = p.spacing();
    let rows = p.samples().iter().enumerate().map(|(j, b)| {
        let mut r = vec![(j as f64 * h).to_string()];
        push_block(&mut r, b);
        r
    });
    write_table(out, header, rows)
}

pub fn read_potential(path: &Path) -> Result<Potential> {
    read_potential_from(open(path)?, &path.display().to_string())
}

pub fn read_potential_from<R: Read>(input: R, source: &str) -> Result<Potential> {
    let t = read_table(input, source, &["x"], "v")?;
    let xs: Vec<f64> = t.keys.iter().map(|k| k[0]).collect();
    let h = uniform_spacing(&xs, source)?;
    let sig = BlockSignature::new(t.shape.0, t.shape.1)?;
    Potential::from_samples(sig, h, t.blocks)
}

/// Writes `x, re_a_j_k, im_a_j_k`.
pub fn write_afunction(path: &Path, a: &AFunction) -> Result<()> {
    write_afunction_to(create(path)?, a)
}

pub fn write_afunction_to<W: Write>(out: W, a: &AFunction) -> Result<()> {
    let (m2, m1) = a.block_shape();
    let mut header = vec!["x".to_string()];
    header.extend(block_header("a", m2, m1));
    let rows = a.samples.iter().enumerate().map(|(j, b)| {
        let mut r = vec![a.grid.node(j).to_string()];
        push_block(&mut r, b);
        r
    });
    write_table(out, header, rows)
}

pub fn read_afunction(path: &Path) -> Result<AFunction> {
    read_afunction_from(open(path)?, &path.display().to_string())
}

pub fn read_afunction_from<R: Read>(input: R, source: &str) -> Result<AFunction> {
    let t = read_table(input, source, &["x"], "a")?;
    let xs: Vec<f64> = t.keys.iter().map(|k| k[0]).collect();
    let h = uniform_spacing(&xs, source)?;
    let grid = make_uniform_grid(h * (xs.len() - 1) as f64, xs.len())?;
    AFunction::new(grid, t.blocks)
}

/// Writes `ell, x, re_a_j_k, im_a_j_k` over the triangle only.
pub fn write_afield(path: &Path, f: &AField) -> Result<()> {
    write_afield_to(create(path)?, f)
}

pub fn write_afield_to<W: Write>(out: W, f: &AField) -> Result<()> {
    let (m2, m1) = f.rows[0][0].shape();
    let mut header = vec!["ell".to_string(), "x".to_string()];
    header.extend(block_header("a", m2, m1));
    let rows = f.rows.iter().enumerate().flat_map(|(i, row)| {
        row.iter().enumerate().map(move |(j, b)| {
            let mut r = vec![(i as f64 * f.h).to_string(), (j as f64 * f.h).to_string()];
            push_block(&mut r, b);
            r
        })
    });
    write_table(out, header, rows)
}

/// Writes `re_z, im_z, re_phi_j_k, im_phi_j_k`.
pub fn write_weyl(path: &Path, samples: &[WeylSample]) -> Result<()> {
    write_weyl_to(create(path)?, samples)
}

pub fn write_weyl_to<W: Write>(out: W, samples: &[WeylSample]) -> Result<()> {
    let (m2, m1) = samples.first().map(|s| s.phi.shape()).unwrap_or((1, 1));
    let mut header = vec!["re_z".to_string(), "im_z".to_string()];
    header.extend(block_header("phi", m2, m1));
    let rows = samples.iter().map(|s| {
        let mut r = vec![s.z.re.to_string(), s.z.im.to_string()];
        push_block(&mut r, &s.phi);
        r
    });
    write_table(out, header, rows)
}

/// Writes `c, im_z, difference`.
pub fn write_ray(path: &Path, s: &RaySamples) -> Result<()> {
    write_ray_to(create(path)?, s)
}

pub fn write_ray_to<W: Write>(out: W, s: &RaySamples) -> Result<()> {
    let header = vec![
        "c".to_string(),
        "im_z".to_string(),
        "difference".to_string(),
    ];
    let rows = s
        .radii
        .iter()
        .zip(&s.differences)
        .map(|(r, d)| vec![s.c.to_string(), r.to_string(), d.to_string()]);
    write_table(out, header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn to_string(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> String {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn potential_round_trip_is_exact() {
        let p = fixtures::trig_matrix(0.1).unwrap();
        let text = to_string(|b| write_potential_to(b, &p));
        assert!(text.starts_with("x,re_v_1_1,im_v_1_1,re_v_2_1,im_v_2_1\n"));
        let q = read_potential_from(text.as_bytes(), "mem").unwrap();
        assert_eq!(q.signature(), p.signature());
        assert_eq!(q.samples(), p.samples());
        assert_eq!(q.spacing(), p.spacing());
    }

    #[test]
    fn afunction_round_trip_is_exact() {
        let g = make_uniform_grid(0.5, 6).unwrap();
        let samples = (0..6)
            .map(|j| BlockMatrix::from_element(1, 2, Complex64::new(j as f64 / 3.0, -0.1)))
            .collect();
        let a = AFunction::new(g, samples).unwrap();
        let text = to_string(|b| write_afunction_to(b, &a));
        let back = read_afunction_from(text.as_bytes(), "mem").unwrap();
        assert_eq!(back.samples, a.samples);
        assert_eq!(back.grid.len(), 6);
    }

    #[test]
    fn malformed_input_reports_line() {
        let bad = "x,re_v_1_1,im_v_1_1\n0,1,0\n0.1,oops,0\n";
        let err = read_potential_from(bad.as_bytes(), "f.csv")
            .unwrap_err()
            .to_string();
        assert!(err.contains("f.csv:3"), "{err}");
        let ragged = "x,re_v_1_1,im_v_1_1\n0,1,0\n0.1,1\n";
        assert!(read_potential_from(ragged.as_bytes(), "f.csv").is_err());
        let header = "x,re_w_1_1,im_w_1_1\n0,1,0\n0.1,1,0\n";
        let err = read_potential_from(header.as_bytes(), "f.csv")
            .unwrap_err()
            .to_string();
        assert!(err.contains("f.csv:1"), "{err}");
        let gap = "x,re_v_1_1,im_v_1_1\n0,1,0\n0.1,1,0\n0.3,1,0\n";
        let err = read_potential_from(gap.as_bytes(), "f.csv")
            .unwrap_err()
            .to_string();
        assert!(err.contains("f.csv:4"), "{err}");
    }

    #[test]
    fn field_and_ray_layouts() {
        let b = |x: f64| BlockMatrix::from_element(1, 1, Complex64::new(x, 0.0));
        let f = AField::from_rows(
            0.2,
            0.1,
            vec![
                vec![b(1.0), b(2.0), b(3.0)],
                vec![b(4.0), b(5.0)],
                vec![b(6.0)],
            ],
        )
        .unwrap();
        let text = to_string(|w| write_afield_to(w, &f));
        assert_eq!(text.lines().count(), 7);
        assert_eq!(text.lines().nth(5).unwrap(), "0.1,0.1,5,0");
        let r = RaySamples::new(0.5, vec![2.0, 3.0], vec![1e-3, 1e-5], 1.0).unwrap();
        let text = to_string(|w| write_ray_to(w, &r));
        assert_eq!(text, "c,im_z,difference\n0.5,2,0.001\n0.5,3,0.00001\n");
    }
}
