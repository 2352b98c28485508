//! Little-endian binary dataset files and CSV exports.
//!
//! Point files: 16-byte header `b"APCD"`, version, sample count, points per
//! sample (each `u32`), then per sample an `i32` label and `n × 3` row-major
//! `f32` coordinates.
//!
//! Event files: header `b"AEVT"`, version, sample count, sensor width and
//! height (`u16` each), then per sample an `i32` label, a `u32` event count
//! and `m × 4` `f32` rows `[t, p, x, y]`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::events::{Event, EventCloudSample};
use super::points::PointCloudSample;

const POINT_MAGIC: &[u8; 4] = b"APCD";
const EVENT_MAGIC: &[u8; 4] = b"AEVT";
const VERSION: u32 = 1;

fn u32_at(buf: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(buf[at..at + 4].try_into().expect("4 bytes"))
}

fn read_exact<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>> {
    let mut buf = vec![0; n];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated file: {e}")))?;
    Ok(buf)
}

fn read_label<R: Read>(r: &mut R) -> Result<usize> {
    let raw = i32::from_le_bytes(read_exact(r, 4)?.try_into().expect("4 bytes"));
    usize::try_from(raw).map_err(|_| Error::Format(format!("negative label {raw}")))
}

fn check_header(head: &[u8], magic: &[u8; 4]) -> Result<()> {
    if &head[..4] != magic {
        return Err(Error::Format(format!("bad magic {:?}", &head[..4])));
    }
    let version = u32_at(head, 4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    Ok(())
}

pub fn write_points<W: Write>(w: &mut W, samples: &[PointCloudSample]) -> Result<()> {
    let n = samples.first().map_or(0, |s| s.points.shape()[0]);
    w.write_all(POINT_MAGIC)?;
    for v in [VERSION, samples.len() as u32, n as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    for s in samples {
        if s.points.shape() != [n, 3] {
            return Err(Error::shape("write_points", &[n, 3], s.points.shape()));
        }
        w.write_all(&(s.label as i32).to_le_bytes())?;
        for &v in s.points.data() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_points<R: Read>(r: &mut R) -> Result<Vec<PointCloudSample>> {
    let head = read_exact(r, 16)?;
    check_header(&head, POINT_MAGIC)?;
    let (count, n) = (u32_at(&head, 8) as usize, u32_at(&head, 12) as usize);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let label = read_label(r)?;
        let raw = read_exact(r, n * 3 * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect();
        out.push(PointCloudSample {
            points: Tensor::new(vec![n, 3], data)?,
            label,
        });
    }
    Ok(out)
}

pub fn write_events<W: Write>(w: &mut W, samples: &[EventCloudSample], width: u16, height: u16) -> Result<()> {
    w.write_all(EVENT_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(samples.len() as u32).to_le_bytes())?;
    w.write_all(&width.to_le_bytes())?;
    w.write_all(&height.to_le_bytes())?;
    for s in samples {
        w.write_all(&(s.label as i32).to_le_bytes())?;
        w.write_all(&(s.events.len() as u32).to_le_bytes())?;
        for e in &s.events {
            for v in [e.t as f32, e.p as f32, e.x as f32, e.y as f32] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Returns the samples and the sensor `(width, height)`.
pub fn read_events<R: Read>(r: &mut R) -> Result<(Vec<EventCloudSample>, u16, u16)> {
    let head = read_exact(r, 16)?;
    check_header(&head, EVENT_MAGIC)?;
    let count = u32_at(&head, 8) as usize;
    let width = u16::from_le_bytes([head[12], head[13]]);
    let height = u16::from_le_bytes([head[14], head[15]]);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let label = read_label(r)?;
        let m = u32::from_le_bytes(read_exact(r, 4)?.try_into().expect("4 bytes")) as usize;
        let raw = read_exact(r, m * 16)?;
        let events = raw
            .chunks_exact(16)
            .map(|row| {
                let f = |i: usize| f32::from_le_bytes(row[i * 4..i * 4 + 4].try_into().expect("4 bytes"));
                Event {
                    t: f(0) as f64,
                    p: f(1) as u8,
                    x: f(2) as u16,
                    y: f(3) as u16,
                }
            })
            .collect();
        out.push(EventCloudSample { events, label });
    }
    Ok((out, width, height))
}

/// `sample,label,x,y,z` rows, one per point.
pub fn write_points_csv<W: Write>(w: &mut W, samples: &[PointCloudSample]) -> Result<()> {
    writeln!(w, "sample,label,x,y,z")?;
    for (i, s) in samples.iter().enumerate() {
        for p in s.points.data().chunks(3) {
            writeln!(w, "{i},{},{},{},{}", s.label, p[0] as f32, p[1] as f32, p[2] as f32)?;
        }
    }
    Ok(())
}

/// `sample,label,t,p,x,y` rows, one per event.
pub fn write_events_csv<W: Write>(w: &mut W, samples: &[EventCloudSample]) -> Result<()> {
    writeln!(w, "sample,label,t,p,x,y")?;
    for (i, s) in samples.iter().enumerate() {
        for e in &s.events {
            writeln!(w, "{i},{},{},{},{},{}", s.label, e.t as f32, e.p, e.x, e.y)?;
        }
    }
    Ok(())
}

pub fn save_points(path: &Path, samples: &[PointCloudSample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_points(&mut w, samples)?;
    w.flush()?;
    Ok(())
}

pub fn load_points(path: &Path) -> Result<Vec<PointCloudSample>> {
    read_points(&mut BufReader::new(File::open(path)?))
}

pub fn save_events(path: &Path, samples: &[EventCloudSample], width: u16, height: u16) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_events(&mut w, samples, width, height)?;
    w.flush()?;
    Ok(())
}

pub fn load_events(path: &Path) -> Result<(Vec<EventCloudSample>, u16, u16)> {
    read_events(&mut BufReader::new(File::open(path)?))
}
