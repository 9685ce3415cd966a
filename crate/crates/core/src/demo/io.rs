//! `.traj` text format and `.gt` ground-truth sidecar.
//!
//! ```text
//! #artikin-traj schema=1 frame_rate=30
//! # id frame px py pz nx ny nz
//! 0 0 1.9 0.42 0.31 -1 0 0
//! ```
//!
//! One record per observation, grouped by trajectory and ordered by frame.
//! Floats are written in shortest round-trip form, so `load(save(d)) == d`.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{Demonstration, FeatureObservation, FeatureTrajectory, GroundTruth};
use crate::error::{Error, Result};

pub const TRAJ_SCHEMA: u32 = 1;
const MAGIC: &str = "#artikin-traj";

/// Path of the ground-truth sidecar belonging to a `.traj` file.
pub fn gt_path(traj: &Path) -> PathBuf {
    traj.with_extension("gt")
}

#[derive(Serialize, Deserialize)]
struct GtFile {
    schema: u32,
    ground_truth: GroundTruth,
}

pub fn save(demo: &Demonstration, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{MAGIC} schema={TRAJ_SCHEMA} frame_rate={}", demo.frame_rate)?;
    writeln!(out, "# id frame px py pz nx ny nz")?;
    let mut line = String::new();
    for t in &demo.trajectories {
        for o in &t.observations {
            line.clear();
            let (p, n) = (&o.position, &o.normal);
            let _ = write!(
                line,
                "{} {} {} {} {} {} {} {}",
                t.id, o.frame, p.x, p.y, p.z, n.x, n.y, n.z
            );
            writeln!(out, "{line}")?;
        }
    }
    out.flush()?;

    let sidecar = gt_path(path);
    match &demo.ground_truth {
        Some(gt) => {
            let file = GtFile {
                schema: TRAJ_SCHEMA,
                ground_truth: gt.clone(),
            };
            let json = serde_json::to_string(&file).map_err(|e| Error::InvalidSpec(e.to_string()))?;
            fs::write(sidecar, json + "\n")?;
        }
        None => {
            if sidecar.exists() {
                fs::remove_file(sidecar)?;
            }
        }
    }
    Ok(())
}

fn parse_header(line: &str) -> Result<f64> {
    let mut fields = line.split_whitespace();
    if fields.next() != Some(MAGIC) {
        return Err(Error::parse(1, format!("expected '{MAGIC}' header")));
    }
    let mut schema = None;
    let mut frame_rate = None;
    for f in fields {
        let (key, value) = f
            .split_once('=')
            .ok_or_else(|| Error::parse(1, format!("malformed header field '{f}'")))?;
        match key {
            "schema" => {
                schema = Some(
                    value
                        .parse::<u32>()
                        .map_err(|_| Error::parse(1, format!("bad schema '{value}'")))?,
                )
            }
            "frame_rate" => {
                frame_rate = Some(
                    value
                        .parse::<f64>()
                        .map_err(|_| Error::parse(1, format!("bad frame_rate '{value}'")))?,
                )
            }
            _ => return Err(Error::parse(1, format!("unknown header field '{key}'"))),
        }
    }
    match schema {
        Some(TRAJ_SCHEMA) => {}
        Some(found) => {
            return Err(Error::SchemaVersionMismatch {
                expected: TRAJ_SCHEMA,
                found,
            })
        }
        None => return Err(Error::parse(1, "header lacks schema")),
    }
    frame_rate.ok_or_else(|| Error::parse(1, "header lacks frame_rate"))
}

fn parse_record(line: &str, number: usize) -> Result<(u64, FeatureObservation)> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 8 {
        return Err(Error::parse(
            number,
            format!("expected 8 fields, found {}", fields.len()),
        ));
    }
    let id = fields[0]
        .parse::<u64>()
        .map_err(|_| Error::parse(number, format!("bad id '{}'", fields[0])))?;
    let frame = fields[1]
        .parse::<u32>()
        .map_err(|_| Error::parse(number, format!("bad frame '{}'", fields[1])))?;
    let mut v = [0.0; 6];
    for (slot, text) in v.iter_mut().zip(&fields[2..]) {
        *slot = text
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::parse(number, format!("bad number '{text}'")))?;
    }
    let normal = Vector3::new(v[3], v[4], v[5]);
    if (normal.norm() - 1.0).abs() > 1e-6 {
        return Err(Error::parse(number, "normal is not unit length"));
    }
    Ok((
        id,
        FeatureObservation {
            frame,
            position: Vector3::new(v[0], v[1], v[2]),
            normal,
        },
    ))
}

pub fn load(path: &Path) -> Result<Demonstration> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| Error::parse(1, "empty file"))??;
    let frame_rate = parse_header(&header)?;

    let mut trajectories: Vec<FeatureTrajectory> = Vec::new();
    let mut first_line: Vec<usize> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in lines.enumerate() {
        let number = i + 2;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (id, obs) = parse_record(trimmed, number)?;
        match trajectories.last_mut() {
            Some(t) if t.id == id => {
                if obs.frame <= t.last_frame() {
                    return Err(Error::parse(
                        number,
                        format!("trajectory {id}: frame {} is not after {}", obs.frame, t.last_frame()),
                    ));
                }
                t.observations.push(obs);
            }
            _ => {
                if !seen.insert(id) {
                    return Err(Error::parse(number, format!("duplicate id {id}")));
                }
                trajectories.push(FeatureTrajectory {
                    id,
                    observations: vec![obs],
                });
                first_line.push(number);
            }
        }
    }
    for (t, line) in trajectories.iter().zip(&first_line) {
        if t.observations.len() < 2 {
            return Err(Error::parse(
                *line,
                format!("trajectory {} has fewer than 2 observations", t.id),
            ));
        }
    }

    let sidecar = gt_path(path);
    let ground_truth = if sidecar.exists() {
        let text = fs::read_to_string(&sidecar)?;
        let file: GtFile =
            serde_json::from_str(&text).map_err(|e| Error::parse(e.line(), e.to_string()))?;
        if file.schema != TRAJ_SCHEMA {
            return Err(Error::SchemaVersionMismatch {
                expected: TRAJ_SCHEMA,
                found: file.schema,
            });
        }
        Some(file.ground_truth)
    } else {
        None
    };

    let demo = Demonstration {
        frame_rate,
        trajectories,
        ground_truth,
    };
    demo.validate().map_err(|m| Error::parse(0, m))?;
    Ok(demo)
}
