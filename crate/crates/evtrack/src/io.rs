//! File formats: event streams, OBJ meshes, trajectories, config, PGM dumps.

use crate::types::{Event, Pose, TimedPose};
use nalgebra::Vector3;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("{0}")]
    Format(String),
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

/// Event file format. `Csv`: `t_seconds,x,y,polarity` with polarity in {1,-1}.
/// `SpaceMicros`: `t_microseconds x y {0,1}` (0 maps to -1), converted on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EventFormat {
    #[default]
    Csv,
    SpaceMicros,
}

/// Read a time-sorted event stream. `sensor` bounds, when given, are enforced.
pub fn read_events(
    path: &Path,
    format: EventFormat,
    sensor: Option<(u32, u32)>,
) -> Result<Vec<Event>, IoError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut events = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = match format {
            EventFormat::Csv => trimmed.split(',').map(str::trim).collect(),
            EventFormat::SpaceMicros => trimmed.split_whitespace().collect(),
        };
        if fields.len() != 4 {
            return Err(parse_err(path, lineno, format!("expected 4 fields, got {}", fields.len())));
        }
        let t = match format {
            EventFormat::Csv => fields[0]
                .parse::<f64>()
                .map_err(|e| parse_err(path, lineno, format!("bad timestamp: {e}")))?,
            EventFormat::SpaceMicros => {
                let us = fields[0]
                    .parse::<i64>()
                    .map_err(|e| parse_err(path, lineno, format!("bad timestamp: {e}")))?;
                us as f64 * 1e-6
            }
        };
        if t < 0.0 || !t.is_finite() {
            return Err(parse_err(path, lineno, format!("invalid timestamp {t}")));
        }
        if t < last_t {
            return Err(parse_err(path, lineno, format!("unsorted timestamp {t} (previous {last_t})")));
        }
        last_t = t;
        let x = fields[1]
            .parse::<i64>()
            .map_err(|e| parse_err(path, lineno, format!("bad x: {e}")))?;
        let y = fields[2]
            .parse::<i64>()
            .map_err(|e| parse_err(path, lineno, format!("bad y: {e}")))?;
        if x < 0 || y < 0 {
            return Err(parse_err(path, lineno, "pixel out of bounds"));
        }
        if let Some((w, h)) = sensor {
            if x >= w as i64 || y >= h as i64 {
                return Err(parse_err(path, lineno, "pixel out of bounds"));
            }
        }
        let polarity = match (format, fields[3]) {
            (EventFormat::Csv, "1") => 1i8,
            (EventFormat::Csv, "-1") => -1,
            (EventFormat::SpaceMicros, "1") => 1,
            (EventFormat::SpaceMicros, "0") => -1,
            (_, p) => return Err(parse_err(path, lineno, format!("bad polarity '{p}'"))),
        };
        events.push(Event { t, x: x as u32, y: y as u32, polarity });
    }
    Ok(events)
}

pub fn write_events(events: &[Event], path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    for e in events {
        writeln!(w, "{:.9},{},{},{}", e.t, e.x, e.y, e.polarity)?;
    }
    w.flush()?;
    Ok(())
}

/// Triangle mesh in object-frame meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn validate(&self) -> Result<(), IoError> {
        if self.vertices.len() < 4 || self.triangles.len() < 4 {
            return Err(IoError::Format(format!(
                "mesh too small: {} vertices, {} triangles (need >= 4 of each)",
                self.vertices.len(),
                self.triangles.len()
            )));
        }
        for v in &self.vertices {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(IoError::Format("non-finite vertex coordinate".into()));
            }
        }
        for t in &self.triangles {
            for &i in t {
                if i >= self.vertices.len() {
                    return Err(IoError::Format(format!("face index {} out of range", i + 1)));
                }
            }
        }
        Ok(())
    }

    /// Axis-aligned cuboid centered at the origin; 8 vertices, 12 triangles.
    pub fn cuboid(sx: f64, sy: f64, sz: f64) -> Mesh {
        let (hx, hy, hz) = (sx / 2.0, sy / 2.0, sz / 2.0);
        let vertices = vec![
            Vector3::new(-hx, -hy, -hz),
            Vector3::new(hx, -hy, -hz),
            Vector3::new(hx, hy, -hz),
            Vector3::new(-hx, hy, -hz),
            Vector3::new(-hx, -hy, hz),
            Vector3::new(hx, -hy, hz),
            Vector3::new(hx, hy, hz),
            Vector3::new(-hx, hy, hz),
        ];
        let triangles = vec![
            [0, 2, 1], [0, 3, 2], // back (-z)
            [4, 5, 6], [4, 6, 7], // front (+z)
            [0, 1, 5], [0, 5, 4], // bottom
            [2, 3, 7], [2, 7, 6], // top
            [0, 4, 7], [0, 7, 3], // left
            [1, 2, 6], [1, 6, 5], // right
        ];
        Mesh { vertices, triangles }
    }
}

/// Minimal OBJ loader: `v x y z` and triangle-only `f i j k`; other lines ignored.
pub fn read_mesh(path: &Path) -> Result<Mesh, IoError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let coords: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| parse_err(path, lineno, format!("bad vertex: {e}")))?;
                if coords.len() != 3 {
                    return Err(parse_err(path, lineno, "vertex needs 3 coordinates"));
                }
                vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idxs: Vec<&str> = it.collect();
                if idxs.len() != 3 {
                    return Err(parse_err(path, lineno, "non-triangle face: triangulate input"));
                }
                let mut tri = [0usize; 3];
                for (slot, raw) in tri.iter_mut().zip(idxs) {
                    // accept "i", "i/..", "i//.." vertex references
                    let first = raw.split('/').next().unwrap_or(raw);
                    let i = first
                        .parse::<usize>()
                        .map_err(|e| parse_err(path, lineno, format!("bad face index: {e}")))?;
                    if i == 0 || i > vertices.len() {
                        return Err(parse_err(path, lineno, format!("face index {i} out of range")));
                    }
                    *slot = i - 1;
                }
                triangles.push(tri);
            }
            _ => {}
        }
    }
    let mesh = Mesh { vertices, triangles };
    mesh.validate()?;
    Ok(mesh)
}

pub fn write_mesh(mesh: &Mesh, path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in &mesh.vertices {
        writeln!(w, "v {:.9} {:.9} {:.9}", v.x, v.y, v.z)?;
    }
    for t in &mesh.triangles {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    w.flush()?;
    Ok(())
}

/// Trajectory CSV: `t,tx,ty,tz,qw,qx,qy,qz`.
pub fn read_trajectory(path: &Path) -> Result<Vec<TimedPose>, IoError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let lineno = idx + 1;
        let f: Vec<f64> = trimmed
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| parse_err(path, lineno, format!("bad number: {e}")))?;
        if f.len() != 8 {
            return Err(parse_err(path, lineno, format!("expected 8 fields, got {}", f.len())));
        }
        if f[0] <= last_t {
            return Err(parse_err(path, lineno, format!("non-monotone timestamp {}", f[0])));
        }
        last_t = f[0];
        let norm = (f[4] * f[4] + f[5] * f[5] + f[6] * f[6] + f[7] * f[7]).sqrt();
        if !(0.99..=1.01).contains(&norm) {
            return Err(parse_err(path, lineno, format!("quaternion norm {norm} outside [0.99, 1.01]")));
        }
        out.push(TimedPose {
            t: f[0],
            pose: Pose::from_parts(Vector3::new(f[1], f[2], f[3]), f[4], f[5], f[6], f[7]),
        });
    }
    Ok(out)
}

pub fn write_trajectory(trajectory: &[TimedPose], path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    for tp in trajectory {
        let t = tp.pose.translation;
        let q = tp.pose.quat_wxyz();
        writeln!(
            w,
            "{:.9},{:.12},{:.12},{:.12},{:.12},{:.12},{:.12},{:.12}",
            tp.t, t.x, t.y, t.z, q[0], q[1], q[2], q[3]
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Write a grayscale binary PGM (maxval 255), mapping `lo..hi` linearly to 0..255.
pub fn write_pgm(values: &[f64], width: usize, height: usize, lo: f64, hi: f64, path: &Path) -> Result<(), IoError> {
    assert_eq!(values.len(), width * height);
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{width} {height}\n255\n")?;
    let span = (hi - lo).max(1e-300);
    let bytes: Vec<u8> = values
        .iter()
        .map(|&v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn read_events_basic_line() {
        let f = write_tmp("0.001250,100,200,1\n");
        let ev = read_events(f.path(), EventFormat::Csv, Some((640, 480))).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0], Event { t: 0.00125, x: 100, y: 200, polarity: 1 });
    }

    #[test]
    fn read_events_empty_file() {
        let f = write_tmp("");
        assert!(read_events(f.path(), EventFormat::Csv, None).unwrap().is_empty());
    }

    #[test]
    fn read_events_out_of_bounds_pixel() {
        let f = write_tmp("0.002,-1,5,1\n");
        let err = read_events(f.path(), EventFormat::Csv, Some((640, 480))).unwrap_err();
        assert!(err.to_string().contains("pixel out of bounds"), "{err}");
    }

    #[test]
    fn read_events_unsorted_names_line() {
        let f = write_tmp("0.002,1,1,1\n0.001,2,2,-1\n");
        let err = read_events(f.path(), EventFormat::Csv, None).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
        assert!(err.to_string().contains("unsorted"), "{err}");
    }

    #[test]
    fn read_events_space_micros_variant() {
        let f = write_tmp("1250 100 200 0\n2500 101 200 1\n");
        let ev = read_events(f.path(), EventFormat::SpaceMicros, None).unwrap();
        assert_eq!(ev[0].t, 0.00125);
        assert_eq!(ev[0].polarity, -1);
        assert_eq!(ev[1].polarity, 1);
    }

    #[test]
    fn read_mesh_cube() {
        let mesh = Mesh::cuboid(1.0, 1.0, 1.0);
        let f = tempfile::NamedTempFile::new().unwrap();
        write_mesh(&mesh, f.path()).unwrap();
        let back = read_mesh(f.path()).unwrap();
        assert_eq!(back.vertices.len(), 8);
        assert_eq!(back.triangles.len(), 12);
        assert_eq!(back, mesh);
    }

    #[test]
    fn read_mesh_rejects_quads() {
        let f = write_tmp("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
        let err = read_mesh(f.path()).unwrap_err();
        assert!(err.to_string().contains("triangulate"), "{err}");
    }

    #[test]
    fn read_mesh_rejects_bad_index() {
        let mut body = String::new();
        for v in Mesh::cuboid(1.0, 1.0, 1.0).vertices {
            body.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
        }
        body.push_str("f 9 1 2\n");
        let f = write_tmp(&body);
        let err = read_mesh(f.path()).unwrap_err();
        assert!(err.to_string().contains("out of range"), "{err}");
    }

    #[test]
    fn trajectory_round_trip() {
        let f = write_tmp("0.0,0,0,0.5,1,0,0,0\n0.002,0.001,0,0.5,0.9999,0.0141,0,0\n");
        let traj = read_trajectory(f.path()).unwrap();
        assert_eq!(traj.len(), 2);
        assert_eq!(traj[0].pose.translation.z, 0.5);
        // renormalized on read
        assert!((traj[1].pose.rotation.norm() - 1.0).abs() < 1e-12);

        let out = tempfile::NamedTempFile::new().unwrap();
        write_trajectory(&traj, out.path()).unwrap();
        let back = read_trajectory(out.path()).unwrap();
        for (a, b) in traj.iter().zip(&back) {
            assert!((a.t - b.t).abs() < 1e-9);
            assert!((a.pose.translation - b.pose.translation).norm() < 1e-9);
            assert!(crate::types::rotation_angle_between(&a.pose, &b.pose) < 1e-9);
        }
    }

    #[test]
    fn trajectory_rejects_bad_norm_and_nonmonotone() {
        let f = write_tmp("0.0,0,0,0.5,0.5,0,0,0\n");
        assert!(read_trajectory(f.path()).is_err());
        let f = write_tmp("0.0,0,0,0.5,1,0,0,0\n0.0,0,0,0.5,1,0,0,0\n");
        assert!(read_trajectory(f.path()).is_err());
    }
}
