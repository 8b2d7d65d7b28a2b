//! Run artifacts: legacy VTK rectilinear-grid snapshots, the coefficient CSV
//! and the provenance stamp of an output directory.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::VtkFormat;
use crate::error::IoError;
use crate::grid::{CellKind, FieldSet, RectilinearGrid};
use crate::post::Coefficients;

pub const PROVENANCE_FILE: &str = "provenance.toml";
pub const SERIES_FILE: &str = "coefficients.csv";
pub const SERIES_HEADER: &str = "step,time,cl,cd,cd_p,cd_v,cl_p,cl_v";

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let tmp = path.with_extension(match path.extension() {
        Some(e) => format!("{}.tmp", e.to_string_lossy()),
        None => "tmp".into(),
    });
    fs::write(&tmp, bytes).map_err(|e| IoError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| IoError::io(path, e))
}

/// Cell data of one snapshot on explicit face coordinates. Vectors are padded
/// to three components.
#[derive(Clone, Debug, PartialEq)]
pub struct VtkSnapshot<'a> {
    pub faces: [Vec<f64>; 3],
    pub fields: &'a FieldSet,
    pub kinds: &'a [CellKind],
    pub title: String,
}

impl<'a> VtkSnapshot<'a> {
    pub fn new(grid: &RectilinearGrid, fields: &'a FieldSet, kinds: &'a [CellKind], title: String) -> Self {
        let axis = |d: usize| if d < grid.dim() { grid.faces(d).to_vec() } else { vec![0.0] };
        VtkSnapshot { faces: [axis(0), axis(1), axis(2)], fields, kinds, title }
    }

    fn n_cells(&self) -> usize {
        self.faces.iter().map(|f| (f.len() - 1).max(1)).product()
    }

    pub fn write(&self, mut out: impl Write, format: VtkFormat) -> std::io::Result<()> {
        let n = self.n_cells();
        let f = self.fields;
        let bad = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidInput, m.to_string());
        if f.n_cells() != n || self.kinds.len() != n {
            return Err(bad("field sizes do not match the face coordinates"));
        }
        if self.title.contains('\n') || self.title.len() > 255 {
            return Err(bad("VTK title must be a single line of at most 255 bytes"));
        }
        let w = &mut out;
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "{}", self.title)?;
        writeln!(w, "{}", if format == VtkFormat::Ascii { "ASCII" } else { "BINARY" })?;
        writeln!(w, "DATASET RECTILINEAR_GRID")?;
        writeln!(w, "DIMENSIONS {} {} {}", self.faces[0].len(), self.faces[1].len(), self.faces[2].len())?;
        for (name, c) in ["X", "Y", "Z"].iter().zip(&self.faces) {
            writeln!(w, "{name}_COORDINATES {} double", c.len())?;
            write_values(w, format, c.iter().copied())?;
        }
        writeln!(w, "CELL_DATA {n}")?;

        write_scalar(w, format, "rho", &f.rho)?;
        write_vector(w, format, "u", &f.u, n)?;
        write_scalar(w, format, "p", &f.p)?;
        write_scalar(w, format, "T", &f.t)?;
        writeln!(w, "SCALARS cell_kind int 1\nLOOKUP_TABLE default")?;
        match format {
            VtkFormat::Ascii => write_lines(w, self.kinds.iter().map(|k| (*k as u8).to_string()))?,
            VtkFormat::Binary => {
                let bytes: Vec<u8> = self.kinds.iter().flat_map(|k| (*k as i32).to_be_bytes()).collect();
                w.write_all(&bytes)?;
                writeln!(w)?;
            }
        }
        write_scalar(w, format, "f_rho", &f.f_rho)?;
        write_vector(w, format, "f_u", &f.f_u, n)?;
        write_scalar(w, format, "f_T", &f.f_t)?;
        Ok(())
    }
}

fn write_scalar(w: &mut impl Write, format: VtkFormat, name: &str, v: &[f64]) -> std::io::Result<()> {
    writeln!(w, "SCALARS {name} double 1\nLOOKUP_TABLE default")?;
    write_values(w, format, v.iter().copied())
}

fn write_vector(w: &mut impl Write, format: VtkFormat, name: &str, v: &[Vec<f64>], n: usize) -> std::io::Result<()> {
    writeln!(w, "VECTORS {name} double")?;
    write_values(w, format, (0..n).flat_map(|c| (0..3).map(move |d| v.get(d).map_or(0.0, |x| x[c]))))
}

fn write_values(w: &mut impl Write, format: VtkFormat, v: impl Iterator<Item = f64>) -> std::io::Result<()> {
    match format {
        VtkFormat::Ascii => write_lines(w, v.map(|x| format!("{x:e}"))),
        VtkFormat::Binary => {
            let bytes: Vec<u8> = v.flat_map(f64::to_be_bytes).collect();
            w.write_all(&bytes)?;
            writeln!(w)
        }
    }
}

/// Nine values per line.
fn write_lines(w: &mut impl Write, items: impl Iterator<Item = String>) -> std::io::Result<()> {
    let items: Vec<String> = items.collect();
    for chunk in items.chunks(9) {
        writeln!(w, "{}", chunk.join(" "))?;
    }
    Ok(())
}

pub fn snapshot_path(dir: &Path, step: u64) -> PathBuf {
    dir.join("snapshots").join(format!("fields_{step:09}.vtk"))
}

pub fn emit_snapshot(path: &Path, snapshot: &VtkSnapshot, format: VtkFormat) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| IoError::io(parent, e))?;
    }
    let mut buf = Vec::new();
    snapshot.write(&mut buf, format).map_err(|e| IoError::format(path, e.to_string()))?;
    write_atomic(path, &buf)
}

/// Coefficient time series on disk: a `#`-comment line carrying the config
/// hash, a header row, and one row per sample.
pub struct SeriesWriter {
    path: PathBuf,
}

pub fn series_row(step: u64, time: f64, c: &Coefficients) -> String {
    format!(
        "{step},{time:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
        c.cl, c.cd, c.cd_p, c.cd_v, c.cl_p, c.cl_v
    )
}

impl SeriesWriter {
    /// Rewrites the file with `rows` (step, time, coefficients) already taken.
    pub fn create(dir: &Path, hash: &str, rows: &[(u64, f64, Coefficients)]) -> Result<Self, IoError> {
        let path = dir.join(SERIES_FILE);
        let mut text = format!("# config_hash = {hash}\n{SERIES_HEADER}\n");
        for (s, t, c) in rows {
            text.push_str(&series_row(*s, *t, c));
        }
        write_atomic(&path, text.as_bytes())?;
        Ok(SeriesWriter { path })
    }

    /// Appends one complete row with a single write.
    pub fn append(&self, step: u64, time: f64, c: &Coefficients) -> Result<(), IoError> {
        let mut f = OpenOptions::new().append(true).open(&self.path).map_err(|e| IoError::io(&self.path, e))?;
        f.write_all(series_row(step, time, c).as_bytes()).map_err(|e| IoError::io(&self.path, e))
    }
}

/// Reads a coefficient CSV written by [`SeriesWriter`]; returns the hash and rows.
pub fn read_series(path: &Path) -> Result<(String, Vec<(u64, f64, Coefficients)>), IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let mut lines = text.lines();
    let hash = lines
        .next()
        .and_then(|l| l.strip_prefix("# config_hash = "))
        .ok_or_else(|| IoError::format(path, "missing config hash line"))?
        .to_string();
    if lines.next() != Some(SERIES_HEADER) {
        return Err(IoError::format(path, "unexpected header row"));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let bad = || IoError::format(path, format!("malformed row {}", i + 3));
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            return Err(bad());
        }
        let step: u64 = cols[0].parse().map_err(|_| bad())?;
        let v: Vec<f64> = cols[1..].iter().map(|s| s.parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
        let c = Coefficients { cl: v[1], cd: v[2], cd_p: v[3], cd_v: v[4], cl_p: v[5], cl_v: v[6] };
        rows.push((step, v[0], c));
    }
    Ok((hash, rows))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub case: String,
}

/// Claims `dir` for the config with `hash`; a directory stamped by another
/// config is refused.
pub fn claim_output_dir(dir: &Path, hash: &str, case: &str) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let path = dir.join(PROVENANCE_FILE);
    if path.exists() {
        let found = read_provenance(dir)?;
        if found.config_hash != hash {
            return Err(IoError::MixedProvenance { path: dir.to_path_buf(), found: found.config_hash, expected: hash.into() });
        }
        return Ok(());
    }
    let stamp = Provenance { config_hash: hash.into(), case: case.into() };
    write_atomic(&path, toml::to_string(&stamp).expect("provenance serializes").as_bytes())
}

pub fn read_provenance(dir: &Path) -> Result<Provenance, IoError> {
    let path = dir.join(PROVENANCE_FILE);
    let text = fs::read_to_string(&path).map_err(|e| IoError::io(&path, e))?;
    toml::from_str(&text).map_err(|e| IoError::format(&path, e.to_string()))
}

/// Buffered file for text reports.
pub fn create_text(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path).map(BufWriter::new).map_err(|e| IoError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_2x2() -> (FieldSet, Vec<CellKind>) {
        let n = 4;
        let ramp = |s: f64| (0..n).map(|c| s * (c as f64 + 1.0)).collect::<Vec<f64>>();
        let fields = FieldSet {
            rho: ramp(1.0),
            u: vec![ramp(0.5), ramp(-0.25)],
            p: ramp(2.0),
            t: ramp(0.125),
            e_s: vec![0.0; n],
            f_rho: vec![0.0, 0.0, 1.5, 0.0],
            f_u: vec![vec![0.0, 0.0, -3.0, 0.0], vec![0.0, 0.0, 0.75, 0.0]],
            f_t: vec![0.0, 0.0, 0.0625, 0.0],
        };
        (fields, vec![CellKind::Fluid, CellKind::Fluid, CellKind::Ghost, CellKind::Solid])
    }

    #[test]
    fn ascii_snapshot_matches_golden_file() {
        let (fields, kinds) = synthetic_2x2();
        let snap = VtkSnapshot {
            faces: [vec![0.0, 0.5, 1.0], vec![0.0, 0.25, 1.0], vec![0.0]],
            fields: &fields,
            kinds: &kinds,
            title: "sharpib step 7 config 0123abcd".into(),
        };
        let mut buf = Vec::new();
        snap.write(&mut buf, VtkFormat::Ascii).unwrap();
        let golden = include_str!("../../tests/golden/snapshot_2x2.vtk");
        assert_eq!(String::from_utf8(buf).unwrap(), golden);
    }

    #[test]
    fn ghost_cells_carry_a_distinct_kind_value() {
        let (fields, kinds) = synthetic_2x2();
        let snap = VtkSnapshot {
            faces: [vec![0.0, 0.5, 1.0], vec![0.0, 0.25, 1.0], vec![0.0]],
            fields: &fields,
            kinds: &kinds,
            title: "t".into(),
        };
        let mut buf = Vec::new();
        snap.write(&mut buf, VtkFormat::Ascii).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let after = text.split("SCALARS cell_kind int 1\nLOOKUP_TABLE default\n").nth(1).unwrap();
        assert_eq!(after.lines().next().unwrap(), "0 0 2 1");
    }

    #[test]
    fn mismatched_sizes_are_rejected() {
        let (fields, kinds) = synthetic_2x2();
        let snap =
            VtkSnapshot { faces: [vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0]], fields: &fields, kinds: &kinds, title: "t".into() };
        assert!(snap.write(Vec::new(), VtkFormat::Binary).is_err());
    }

    #[test]
    fn series_round_trips_and_provenance_guards_directory() {
        let dir = tempfile::tempdir().unwrap();
        let c = Coefficients { cd: 0.25, cd_p: 0.125, cd_v: 0.125, cl: 0.5, cl_p: 0.375, cl_v: 0.125 };
        let w = SeriesWriter::create(dir.path(), "abc", &[(1, 0.1, c)]).unwrap();
        w.append(2, 0.2, &c).unwrap();
        let (hash, rows) = read_series(&dir.path().join(SERIES_FILE)).unwrap();
        assert_eq!(hash, "abc");
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].0, 2);
        assert_eq!(rows[1].2, c);

        claim_output_dir(dir.path(), "abc", "x").unwrap();
        claim_output_dir(dir.path(), "abc", "x").unwrap();
        assert!(matches!(claim_output_dir(dir.path(), "def", "x"), Err(IoError::MixedProvenance { .. })));
    }
}
