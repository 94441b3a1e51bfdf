//! Persistence: flat binary matrices, CSV tables and legacy-VTK patterns.
//!
//! Binary matrix layout: 8-byte magic `FHNMAT01`, then rows / cols /
//! column stride as little-endian u64, then column-major f64 data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

const MAGIC: &[u8; 8] = b"FHNMAT01";

pub fn write_matrix(path: &Path, matrix: &DMatrix<f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&(matrix.nrows() as u64).to_le_bytes())?;
    out.write_all(&(matrix.ncols() as u64).to_le_bytes())?;
    out.write_all(&(matrix.nrows() as u64).to_le_bytes())?; // column stride
    for value in matrix.as_slice() {
        out.write_all(&value.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Artifact(format!(
            "{}: bad magic {magic:?}",
            path.display()
        )));
    }
    let mut word = [0u8; 8];
    let mut read_u64 = |input: &mut BufReader<File>| -> Result<u64> {
        input.read_exact(&mut word)?;
        Ok(u64::from_le_bytes(word))
    };
    let rows = read_u64(&mut input)? as usize;
    let cols = read_u64(&mut input)? as usize;
    let stride = read_u64(&mut input)? as usize;
    if stride < rows {
        return Err(Error::Artifact(format!(
            "{}: column stride {stride} smaller than row count {rows}",
            path.display()
        )));
    }
    let mut data = vec![0.0f64; rows * cols];
    let mut buf = vec![0u8; stride * 8];
    for col in 0..cols {
        input.read_exact(&mut buf)?;
        for row in 0..rows {
            data[col * rows + row] =
                f64::from_le_bytes(buf[row * 8..row * 8 + 8].try_into().unwrap());
        }
    }
    Ok(DMatrix::from_vec(rows, cols, data))
}

pub fn write_vector(path: &Path, vector: &DVector<f64>) -> Result<()> {
    write_matrix(path, &DMatrix::from_column_slice(vector.len(), 1, vector.as_slice()))
}

pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path)?;
    if m.ncols() != 1 {
        return Err(Error::Artifact(format!(
            "{}: expected a single column, found {}",
            path.display(),
            m.ncols()
        )));
    }
    Ok(DVector::from_column_slice(m.column(0).as_slice()))
}

/// Interpolation indices as a one-column CSV of integers.
pub fn write_indices_csv(path: &Path, indices: &[usize]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "index")?;
    for p in indices {
        writeln!(out, "{p}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_indices_csv(path: &Path) -> Result<Vec<usize>> {
    let mut text = String::new();
    BufReader::new(File::open(path)?).read_to_string(&mut text)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 && line.trim() == "index" {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        out.push(line.trim().parse::<usize>().map_err(|e| {
            Error::Artifact(format!("{}: line {}: {e}", path.display(), lineno + 1))
        })?);
    }
    Ok(out)
}

/// Legacy-VTK (ASCII) unstructured grid with one scalar per cell per field.
pub fn write_vtk_cell_scalars(
    path: &Path,
    mesh: &Mesh,
    title: &str,
    fields: &[(&str, &[f64])],
) -> Result<()> {
    for (name, values) in fields {
        if values.len() != mesh.n_elements() {
            return Err(Error::DimensionMismatch {
                context: "write_vtk_cell_scalars",
                expected: mesh.n_elements(),
                found: values.len(),
            });
        }
        if name.contains(char::is_whitespace) {
            return Err(Error::InvalidInput(format!(
                "VTK field name '{name}' must not contain whitespace"
            )));
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{title}")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", mesh.n_vertices())?;
    for v in &mesh.vertices {
        writeln!(out, "{} {} 0.0", v.x, v.y)?;
    }
    writeln!(out, "CELLS {} {}", mesh.n_elements(), 4 * mesh.n_elements())?;
    for [a, b, c] in &mesh.elements {
        writeln!(out, "3 {a} {b} {c}")?;
    }
    writeln!(out, "CELL_TYPES {}", mesh.n_elements())?;
    for _ in 0..mesh.n_elements() {
        writeln!(out, "5")?;
    }
    if !fields.is_empty() {
        writeln!(out, "CELL_DATA {}", mesh.n_elements())?;
        for (name, values) in fields {
            writeln!(out, "SCALARS {name} double 1")?;
            writeln!(out, "LOOKUP_TABLE default")?;
            for value in *values {
                writeln!(out, "{value}")?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_square_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matrix_round_trip_is_bitwise() {
        let dir = std::env::temp_dir().join("fhn_io_test_matrix");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.bin");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = DMatrix::from_fn(7, 3, |_, _| rng.random::<f64>() * 1e3 - 500.0);
        write_matrix(&path, &m).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(m, back);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = std::env::temp_dir().join("fhn_io_test_magic");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("junk.bin");
        std::fs::write(&path, b"NOTAMATRIXFILE..").unwrap();
        assert!(matches!(read_matrix(&path), Err(Error::Artifact(_))));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn indices_round_trip() {
        let dir = std::env::temp_dir().join("fhn_io_test_idx");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("p.csv");
        let indices = vec![5usize, 0, 99, 42];
        write_indices_csv(&path, &indices).unwrap();
        assert_eq!(read_indices_csv(&path).unwrap(), indices);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn vtk_cell_count_survives_reparse() {
        let dir = std::env::temp_dir().join("fhn_io_test_vtk");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("pattern.vtk");
        let mesh = build_square_mesh(10.0, 2);
        let values: Vec<f64> = (0..mesh.n_elements()).map(|e| e as f64).collect();
        write_vtk_cell_scalars(&path, &mesh, "pattern", &[("u", &values)]).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        let cells_line = text
            .lines()
            .find(|l| l.starts_with("CELLS "))
            .expect("CELLS header present");
        let declared: usize = cells_line.split_whitespace().nth(1).unwrap().parse().unwrap();
        assert_eq!(declared, mesh.n_elements());
        let cell_lines = text
            .lines()
            .skip_while(|l| !l.starts_with("CELLS "))
            .skip(1)
            .take_while(|l| l.starts_with("3 "))
            .count();
        assert_eq!(cell_lines, mesh.n_elements());
        assert!(text.contains("SCALARS u double 1"));
        std::fs::remove_dir_all(&dir).ok();
    }
}
