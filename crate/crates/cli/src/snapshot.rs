//! Field snapshot format: "VCHR1\n", an ASCII header line
//! "dim n1 [n2 [n3]] L1 [L2 [L3]] bc\n", then raw little-endian f64,
//! row-major with the last axis fastest. Read of write is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use vchr_core::grid::BoundaryKind;
use vchr_core::{Field64, Grid64};

use crate::{HarnessError, Result};

const MAGIC: &[u8; 6] = b"VCHR1\n";

pub fn snapshot_write(field: &Field64, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| HarnessError::io(path, e);

    w.write_all(MAGIC).map_err(io_err)?;
    let grid = field.grid();
    let mut header = format!("{}", grid.dim());
    for &n in grid.shape() {
        header.push_str(&format!(" {n}"));
    }
    for &l in grid.length() {
        header.push_str(&format!(" {l:?}"));
    }
    header.push(' ');
    header.push_str(grid.bc().name());
    header.push('\n');
    w.write_all(header.as_bytes()).map_err(io_err)?;
    for &v in field.data() {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

pub fn snapshot_read(path: &Path) -> Result<Field64> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 6];
    read_exact_at(&mut r, &mut magic, 0)?;
    if &magic != MAGIC {
        return Err(HarnessError::SnapshotFormat {
            offset: 0,
            what: format!("bad magic {:?}", String::from_utf8_lossy(&magic)),
        });
    }

    // header line, byte by byte up to a sane cap
    let mut header = Vec::new();
    let mut offset = MAGIC.len() as u64;
    loop {
        let mut byte = [0u8; 1];
        read_exact_at(&mut r, &mut byte, offset)?;
        offset += 1;
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
        if header.len() > 256 {
            return Err(HarnessError::SnapshotFormat {
                offset,
                what: "unterminated header line".into(),
            });
        }
    }
    let header = String::from_utf8(header).map_err(|_| HarnessError::SnapshotFormat {
        offset: MAGIC.len() as u64,
        what: "header is not ASCII".into(),
    })?;
    let grid = parse_header(&header, offset)?;

    let mut data = vec![0.0f64; grid.len()];
    let mut buf = [0u8; 8];
    for v in data.iter_mut() {
        read_exact_at(&mut r, &mut buf, offset)?;
        offset += 8;
        *v = f64::from_le_bytes(buf);
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(|e| HarnessError::SnapshotFormat {
        offset,
        what: e.to_string(),
    })? != 0
    {
        return Err(HarnessError::SnapshotFormat {
            offset,
            what: "trailing bytes after field data".into(),
        });
    }

    Ok(Field64::from_vec(&grid, data)?)
}

fn read_exact_at(r: &mut impl Read, buf: &mut [u8], offset: u64) -> Result<()> {
    r.read_exact(buf).map_err(|e| HarnessError::SnapshotFormat {
        offset,
        what: if e.kind() == std::io::ErrorKind::UnexpectedEof {
            "unexpected end of file".into()
        } else {
            e.to_string()
        },
    })
}

fn parse_header(header: &str, offset: u64) -> Result<Arc<Grid64>> {
    let bad = |what: String| HarnessError::SnapshotFormat { offset, what };
    let mut tok = header.split_whitespace();
    let dim: usize = tok
        .next()
        .ok_or_else(|| bad("missing dimension".into()))?
        .parse()
        .map_err(|e| bad(format!("dimension: {e}")))?;
    if !(1..=3).contains(&dim) {
        return Err(bad(format!("dimension {dim} out of range")));
    }
    let mut shape = Vec::with_capacity(dim);
    for _ in 0..dim {
        shape.push(
            tok.next()
                .ok_or_else(|| bad("missing axis size".into()))?
                .parse::<usize>()
                .map_err(|e| bad(format!("axis size: {e}")))?,
        );
    }
    let mut length = Vec::with_capacity(dim);
    for _ in 0..dim {
        length.push(
            tok.next()
                .ok_or_else(|| bad("missing axis length".into()))?
                .parse::<f64>()
                .map_err(|e| bad(format!("axis length: {e}")))?,
        );
    }
    let bc = match tok.next() {
        Some("periodic") => BoundaryKind::Periodic,
        Some("noflux") => BoundaryKind::NoFlux,
        other => return Err(bad(format!("boundary condition {other:?}"))),
    };
    if tok.next().is_some() {
        return Err(bad("trailing header tokens".into()));
    }
    Grid64::new(&shape, &length, bc)
        .map(Arc::new)
        .map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use vchr_core::field::ScalarField;

    #[test]
    fn header_format_2d() {
        let grid =
            Arc::new(Grid64::new(&[4, 4], &[1.0, 1.0], BoundaryKind::Periodic).unwrap());
        let f = ScalarField::zeros(&grid);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.snap");
        snapshot_write(&f, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"VCHR1\n2 4 4 1.0 1.0 periodic\n"));
    }

    #[test]
    fn roundtrip_bit_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let grid =
            Arc::new(Grid64::new(&[5, 7, 6], &[1.0, 2.0, 0.5], BoundaryKind::NoFlux).unwrap());
        let f = ScalarField::from_fn(&grid, |_| rng.gen_range(-1e3..1e3));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.snap");
        snapshot_write(&f, &path).unwrap();
        let g = snapshot_read(&path).unwrap();
        assert_eq!(g.grid().shape(), f.grid().shape());
        assert_eq!(g.grid().bc(), f.grid().bc());
        for (a, b) in f.data().iter().zip(g.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_file_is_format_error() {
        let grid =
            Arc::new(Grid64::new(&[6, 6], &[1.0, 1.0], BoundaryKind::Periodic).unwrap());
        let f = ScalarField::constant(&grid, 1.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.snap");
        snapshot_write(&f, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 11]).unwrap();
        match snapshot_read(&path) {
            Err(HarnessError::SnapshotFormat { what, .. }) => {
                assert!(what.contains("end of file"), "{what}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.snap");
        std::fs::write(&path, b"NOPE!\nxxxxxxx").unwrap();
        match snapshot_read(&path) {
            Err(HarnessError::SnapshotFormat { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
