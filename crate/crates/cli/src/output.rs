//! Artifact writers: legacy-ASCII VTK snapshots and CSV tables.
//!
//! Every CSV starts with a comment line carrying the artifact version and a
//! 64-bit FNV-1a hash of the raw configuration text, so a result file can
//! always be matched to the exact configuration that produced it.  All
//! numbers are written with 17 significant digits; identical configurations
//! therefore produce bit-identical files.

use std::io::Write;
use std::path::Path;

use dynbc_core::mesh::Mesh;
use dynbc_core::report::format_float;
use dynbc_core::{Error, Result};

/// 64-bit FNV-1a hash of the raw configuration text.
pub fn config_hash(raw: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in raw.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// The provenance line prepended to every CSV artifact.
pub fn artifact_header(raw_config: &str) -> String {
    format!(
        "# dynbc {} config fnv1a:{:016x}",
        env!("CARGO_PKG_VERSION"),
        config_hash(raw_config)
    )
}

/// Write a CSV artifact: provenance header, then the body.
pub fn write_csv(path: &Path, raw_config: &str, body: &str) -> Result<()> {
    let mut file = std::fs::File::create(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    writeln!(file, "{}", artifact_header(raw_config))?;
    file.write_all(body.as_bytes())?;
    Ok(())
}

/// Write one nodal scalar field as a legacy-ASCII VTK unstructured grid
/// (`POINTS` / `CELLS` / `CELL_TYPES` / `POINT_DATA SCALARS`), readable by
/// every common viewer.
pub fn write_vtk(path: &Path, mesh: &Mesh, values: &[f64], time: f64) -> Result<()> {
    if values.len() != mesh.num_vertices() {
        return Err(Error::invalid(format!(
            "VTK writer: {} nodal values for a mesh with {} vertices",
            values.len(),
            mesh.num_vertices()
        )));
    }
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str(&format!("dynbc solution at t = {}\n", format_float(time)));
    out.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");

    out.push_str(&format!("POINTS {} double\n", mesh.num_vertices()));
    for v in &mesh.vertices {
        out.push_str(&format!("{} {} 0\n", format_float(v[0]), format_float(v[1])));
    }

    let nt = mesh.triangles.len();
    out.push_str(&format!("CELLS {nt} {}\n", 4 * nt));
    for tri in &mesh.triangles {
        out.push_str(&format!("3 {} {} {}\n", tri[0], tri[1], tri[2]));
    }
    out.push_str(&format!("CELL_TYPES {nt}\n"));
    for _ in 0..nt {
        out.push_str("5\n");
    }

    out.push_str(&format!("POINT_DATA {}\n", mesh.num_vertices()));
    out.push_str("SCALARS u double 1\nLOOKUP_TABLE default\n");
    for v in values {
        out.push_str(&format_float(*v));
        out.push('\n');
    }

    std::fs::write(path, out)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(())
}
