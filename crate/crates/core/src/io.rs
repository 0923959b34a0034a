//! On-disk formats: field CSV, JSON envelopes, binary ensembles and trajectory frames.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{EquiwaveError, Result};
use crate::grid::{Field, ModelParams, RadialGrid};
use crate::measures::Ensemble;

/// Version string embedded in every output, from `git describe` when available.
pub const VERSION: &str = env!("EQUIWAVE_VERSION");

pub const ENSEMBLE_MAGIC: &[u8; 8] = b"EQWVENS1";
pub const TRAJECTORY_MAGIC: &[u8; 8] = b"EQWVTRJ1";

/// JSON wrapper carrying provenance next to the payload.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub version: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub data: T,
}

impl<T> Envelope<T> {
    pub fn new(config: serde_json::Value, seed: Option<u64>, data: T) -> Self {
        Envelope { version: VERSION.to_string(), config, seed, data }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Writes `r,value` rows with a header line.
pub fn write_field_csv(path: &Path, field: &Field) -> Result<()> {
    write_columns_csv(path, &["r", "value"], &[field.grid.nodes(), field.values.clone()])
}

pub fn write_columns_csv(path: &Path, header: &[&str], columns: &[Vec<f64>]) -> Result<()> {
    let rows = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != rows) || header.len() != columns.len() {
        return Err(EquiwaveError::Format("CSV columns must have equal length and match the header".into()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for i in 0..rows {
        let row: Vec<String> = columns.iter().map(|c| format!("{:e}", c[i])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a two-column `r,value` CSV back onto a uniform grid.
pub fn read_field_csv(path: &Path) -> Result<Field> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let mut rs = Vec::new();
    let mut vs = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let mut it = line.split(',');
        let parse = |s: Option<&str>| -> Result<f64> {
            s.and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| EquiwaveError::Format(format!("bad CSV line {}: {line:?}", n + 1)))
        };
        rs.push(parse(it.next())?);
        vs.push(parse(it.next())?);
    }
    if rs.len() < 3 || (rs[0] - 1.0).abs() > 1e-12 {
        return Err(EquiwaveError::Format("field CSV must start at r = 1 and have at least 3 rows".into()));
    }
    let grid = RadialGrid::new(*rs.last().unwrap(), rs.len() - 1);
    Field::new(grid, vs)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
struct BinaryHeader {
    version: String,
    params: ModelParams,
    seed: u64,
    config: serde_json::Value,
}

fn write_header(w: &mut impl Write, magic: &[u8; 8], header: &BinaryHeader) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    w.write_all(magic)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    Ok(())
}

fn read_header(r: &mut impl Read, magic: &[u8; 8]) -> Result<BinaryHeader> {
    let mut m = [0u8; 8];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(EquiwaveError::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let len = read_u32(r)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    Ok(serde_json::from_slice(&json)?)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn write_f64s(w: &mut impl Write, xs: &[f64]) -> Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; 8 * n];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Magic, length-prefixed JSON params header, sample count, node count, then
/// little-endian f64 samples back to back.
pub fn write_ensemble(path: &Path, ens: &Ensemble, config: serde_json::Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = BinaryHeader { version: VERSION.into(), params: ens.params, seed: ens.seed, config };
    write_header(&mut w, ENSEMBLE_MAGIC, &header)?;
    w.write_all(&(ens.samples.len() as u64).to_le_bytes())?;
    w.write_all(&(ens.grid.len() as u64).to_le_bytes())?;
    for s in &ens.samples {
        write_f64s(&mut w, s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ensemble(path: &Path) -> Result<Ensemble> {
    let mut r = BufReader::new(File::open(path)?);
    let header = read_header(&mut r, ENSEMBLE_MAGIC)?;
    header.params.validate()?;
    let count = read_u64(&mut r)? as usize;
    let len = read_u64(&mut r)? as usize;
    let grid = header.params.grid();
    if len != grid.len() {
        return Err(EquiwaveError::Format(format!("node count {len} does not match M + 1 = {}", grid.len())));
    }
    let samples = (0..count).map(|_| read_f64s(&mut r, len)).collect::<Result<_>>()?;
    Ok(Ensemble { params: header.params, seed: header.seed, grid, samples })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FrameEntry {
    pub index: usize,
    pub time: f64,
    /// Byte offset of the frame in the binary file.
    pub offset: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub version: String,
    pub params: ModelParams,
    pub seed: u64,
    pub config: serde_json::Value,
    pub frames_file: String,
    pub nodes: usize,
    pub frames: Vec<FrameEntry>,
    pub energy: Vec<(f64, f64)>,
}

/// Frames file (magic, header, then per frame: time, psi, W) plus a JSON manifest.
pub fn write_trajectory(
    frames_path: &Path,
    manifest_path: &Path,
    params: &ModelParams,
    seed: u64,
    config: serde_json::Value,
    traj: &Trajectory,
) -> Result<TrajectoryManifest> {
    let mut w = BufWriter::new(File::create(frames_path)?);
    let header = BinaryHeader { version: VERSION.into(), params: *params, seed, config: config.clone() };
    let json = serde_json::to_vec(&header)?;
    write_header(&mut w, TRAJECTORY_MAGIC, &header)?;
    let mut offset = (8 + 4 + json.len()) as u64;
    let nodes = params.grid().len();
    let mut frames = Vec::new();
    for (index, s) in traj.snapshots.iter().enumerate() {
        frames.push(FrameEntry { index, time: s.time, offset });
        w.write_all(&s.time.to_le_bytes())?;
        write_f64s(&mut w, &s.psi.values)?;
        write_f64s(&mut w, &s.w.values)?;
        offset += (8 * (1 + 2 * nodes)) as u64;
    }
    w.flush()?;
    let manifest = TrajectoryManifest {
        version: VERSION.into(),
        params: *params,
        seed,
        config,
        frames_file: frames_path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        nodes,
        frames,
        energy: traj.energy.clone(),
    };
    write_json(manifest_path, &manifest)?;
    Ok(manifest)
}

/// Reads every frame as (time, psi, W).
pub fn read_trajectory_frames(frames_path: &Path) -> Result<(ModelParams, Vec<(f64, Vec<f64>, Vec<f64>)>)> {
    let mut bytes = Vec::new();
    File::open(frames_path)?.read_to_end(&mut bytes)?;
    let mut r = bytes.as_slice();
    let header = read_header(&mut r, TRAJECTORY_MAGIC)?;
    let nodes = header.params.grid().len();
    let frame = 8 * (1 + 2 * nodes);
    if r.len() % frame != 0 {
        return Err(EquiwaveError::Format("trailing bytes in trajectory frames".into()));
    }
    let mut out = Vec::new();
    while !r.is_empty() {
        let t = read_f64s(&mut r, 1)?[0];
        let psi = read_f64s(&mut r, nodes)?;
        let w = read_f64s(&mut r, nodes)?;
        out.push((t, psi, w));
    }
    Ok((header.params, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{evolve, FlowConfig};
    use crate::grid::PhaseState;
    use crate::soliton::Background;

    #[test]
    fn ensemble_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = ModelParams::new(1, 1, 5.0, 8).unwrap();
        let grid = p.grid();
        let samples = vec![(0..9).map(|i| i as f64 * 0.25 - 1.0).collect(), vec![0.5; 9]];
        let ens = Ensemble { params: p, seed: 9, grid, samples };
        let path = dir.path().join("e.bin");
        write_ensemble(&path, &ens, serde_json::json!({"cmd": "sample"})).unwrap();
        assert_eq!(read_ensemble(&path).unwrap(), ens);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], ENSEMBLE_MAGIC);
        let tail = &bytes[bytes.len() - 8..];
        assert_eq!(f64::from_le_bytes(tail.try_into().unwrap()), 0.5);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        std::fs::write(&path, b"NOTMAGIC0000").unwrap();
        assert!(matches!(read_ensemble(&path), Err(EquiwaveError::Format(_))));
    }

    #[test]
    fn field_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let f = Field::from_fn(RadialGrid::new(3.0, 16), |r| (r - 1.0) * (3.0 - r));
        let path = dir.path().join("f.csv");
        write_field_csv(&path, &f).unwrap();
        let g = read_field_csv(&path).unwrap();
        assert!(g.values.iter().zip(&f.values).all(|(a, b)| (a - b).abs() <= 1e-15 * (1.0 + b.abs())));
        assert!(g.grid.same_as(&f.grid));
    }

    #[test]
    fn trajectory_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = ModelParams::new(0, 0, 3.0, 32).unwrap();
        let bg = Background::trivial(p.grid(), 0.0);
        let psi = Field::from_fn(p.grid(), |r| ((r - 1.0) * std::f64::consts::FRAC_PI_2).sin());
        let s = PhaseState::new(psi, Field::zeros(p.grid())).unwrap();
        let tr = evolve(&s, &FlowConfig::cfl1(p.grid(), 1.0).with_snapshots(vec![0.0, 0.5]), &bg).unwrap();
        let (fp, mp) = (dir.path().join("t.bin"), dir.path().join("t.json"));
        let man = write_trajectory(&fp, &mp, &p, 1, serde_json::json!({}), &tr).unwrap();
        let (_, frames) = read_trajectory_frames(&fp).unwrap();
        assert_eq!(frames.len(), 3);
        assert_eq!(man.frames.len(), 3);
        for (f, s) in frames.iter().zip(&tr.snapshots) {
            assert_eq!(f.0, s.time);
            assert_eq!(f.1, s.psi.values);
            assert_eq!(f.2, s.w.values);
        }
        let back: TrajectoryManifest = read_json(&mp).unwrap();
        assert_eq!(back.frames, man.frames);
    }
}
