//! Versioned text formats for maps and selections.
//!
//! Map files start with the line `mapselect/1` followed by one record per
//! line:
//!
//! ```text
//! camera fx fy cx cy baseline
//! keyframe id index qw qx qy qz tx ty tz loop
//! point id x y z
//! obs point_id frame_id stereo u_left v u_right sigma
//! obs point_id frame_id mono u v sigma
//! gt_pose frame_id qw qx qy qz tx ty tz
//! ```
//!
//! `loop` is `0` or `1`. Blank lines and lines starting with `#` are
//! skipped. Poses are world-to-camera. Gzip input is recognised by its magic
//! bytes, so `.map` and `.map.gz` load the same way.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::str::{FromStr, SplitWhitespace};
use std::time::Duration;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Se3};
use crate::map::{validate, Keyframe, MapPoint, Measurement, Observation, SlamMap};

pub const MAP_VERSION: &str = "mapselect/1";
pub const SELECTION_VERSION: &str = "mapselect-selection/1";
const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];
const QUATERNION_TOL: f64 = 1e-6;

/// A map plus the optional ground-truth trajectory stored alongside it.
#[derive(Debug, Clone, PartialEq)]
pub struct MapFile {
    pub map: SlamMap,
    /// World-to-camera poses by frame slot.
    pub ground_truth: Option<Vec<Se3>>,
}

/// Stored result of one selection run.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionFile {
    pub kind: String,
    pub budget: usize,
    pub value: f64,
    pub duration: Duration,
    pub gain_evals: u64,
    /// Selected point ids, ascending.
    pub ids: Vec<u64>,
}

struct Lines<'a> {
    path: &'a Path,
    line: usize,
}

impl Lines<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { path: self.path.to_path_buf(), line: self.line, msg: msg.into() }
    }

    fn field<T: FromStr>(&self, it: &mut SplitWhitespace<'_>, name: &str) -> Result<T> {
        let tok = it.next().ok_or_else(|| self.err(format!("missing {name}")))?;
        tok.parse().map_err(|_| self.err(format!("invalid {name} '{tok}'")))
    }

    fn floats<const N: usize>(&self, it: &mut SplitWhitespace<'_>, names: [&str; N]) -> Result<[f64; N]> {
        let mut out = [0.0; N];
        for (v, name) in out.iter_mut().zip(names) {
            *v = self.field(it, name)?;
        }
        Ok(out)
    }

    fn end(&self, mut it: SplitWhitespace<'_>) -> Result<()> {
        match it.next() {
            None => Ok(()),
            Some(tok) => Err(self.err(format!("unexpected trailing field '{tok}'"))),
        }
    }

    fn pose(&self, it: &mut SplitWhitespace<'_>) -> Result<Se3> {
        let [qw, qx, qy, qz, tx, ty, tz] = self.floats(it, ["qw", "qx", "qy", "qz", "tx", "ty", "tz"])?;
        let norm = (qw * qw + qx * qx + qy * qy + qz * qz).sqrt();
        if !((norm - 1.0).abs() <= QUATERNION_TOL) {
            return Err(self.err(format!("quaternion norm {norm} is not 1")));
        }
        Ok(Se3::from_quaternion([qw, qx, qy, qz], Vector3::new(tx, ty, tz)))
    }
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(&GZIP_MAGIC) {
        let mut text = String::new();
        GzDecoder::new(bytes.as_slice()).read_to_string(&mut text).map_err(|e| Error::io(path, e))?;
        Ok(text)
    } else {
        String::from_utf8(bytes).map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: "not UTF-8 text".into(),
        })
    }
}

fn write_bytes(path: &Path, text: &str, gzip: bool) -> Result<()> {
    let bytes = if gzip {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        text.as_bytes().to_vec()
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Meaningful lines with their 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Parses map text; `path` only labels errors. The map must pass validation.
pub fn parse_map(text: &str, path: &Path) -> Result<MapFile> {
    let mut ctx = Lines { path, line: 0 };
    let mut recs = records(text);
    match recs.next() {
        Some((_, MAP_VERSION)) => {}
        Some((line, other)) => {
            ctx.line = line;
            return Err(ctx.err(format!("expected version '{MAP_VERSION}', found '{other}'")));
        }
        None => return Err(ctx.err("empty file")),
    }
    let mut camera = None;
    let mut keyframes = Vec::new();
    let mut points = Vec::new();
    let mut observations = Vec::new();
    let mut gt: Vec<(u64, Se3)> = Vec::new();
    for (line, rec) in recs {
        ctx.line = line;
        let mut it = rec.split_whitespace();
        let tag = it.next().expect("record is non-empty");
        match tag {
            "camera" => {
                if camera.is_some() {
                    return Err(ctx.err("duplicate camera record"));
                }
                let [fx, fy, cx, cy, b] = ctx.floats(&mut it, ["fx", "fy", "cx", "cy", "baseline"])?;
                camera = Some(CameraIntrinsics::new(fx, fy, cx, cy, b));
            }
            "keyframe" => {
                let id = ctx.field(&mut it, "keyframe id")?;
                let index = ctx.field(&mut it, "index")?;
                let pose = ctx.pose(&mut it)?;
                let is_loop_frame = match ctx.field::<u8>(&mut it, "loop flag")? {
                    0 => false,
                    1 => true,
                    v => return Err(ctx.err(format!("loop flag must be 0 or 1, found {v}"))),
                };
                keyframes.push(Keyframe { id, index, pose, is_loop_frame });
            }
            "point" => {
                let id = ctx.field(&mut it, "point id")?;
                let [x, y, z] = ctx.floats(&mut it, ["x", "y", "z"])?;
                points.push(MapPoint { id, position: Vector3::new(x, y, z) });
            }
            "obs" => {
                let point_id = ctx.field(&mut it, "point id")?;
                let frame_id = ctx.field(&mut it, "frame id")?;
                let kind: String = ctx.field(&mut it, "observation kind")?;
                let measurement = match kind.as_str() {
                    "stereo" => {
                        let [u_left, v, u_right] = ctx.floats(&mut it, ["u_left", "v", "u_right"])?;
                        Measurement::Stereo { u_left, v, u_right }
                    }
                    "mono" => {
                        let [u, v] = ctx.floats(&mut it, ["u", "v"])?;
                        Measurement::Mono { u, v }
                    }
                    other => return Err(ctx.err(format!("unknown observation kind '{other}'"))),
                };
                let sigma = ctx.field(&mut it, "sigma")?;
                observations.push(Observation { point_id, frame_id, measurement, sigma });
            }
            "gt_pose" => {
                let id = ctx.field(&mut it, "frame id")?;
                gt.push((id, ctx.pose(&mut it)?));
            }
            other => return Err(ctx.err(format!("unknown record '{other}'"))),
        }
        ctx.end(it)?;
    }
    ctx.line = 0;
    let camera = camera.ok_or_else(|| ctx.err("missing camera record"))?;
    let map = SlamMap::new(camera, keyframes, points, observations);
    let issues = validate(&map);
    if !issues.is_empty() {
        return Err(Error::Validation(issues));
    }
    let ground_truth = if gt.is_empty() {
        None
    } else {
        let mut poses = vec![None; map.num_frames()];
        for (id, pose) in gt {
            let slot = map.frame_slot(id).map_err(|_| ctx.err(format!("ground truth for unknown frame {id}")))?;
            if poses[slot].replace(pose).is_some() {
                return Err(ctx.err(format!("duplicate ground truth for frame {id}")));
            }
        }
        let poses: Option<Vec<Se3>> = poses.into_iter().collect();
        Some(poses.ok_or_else(|| ctx.err("ground truth does not cover every keyframe"))?)
    };
    Ok(MapFile { map, ground_truth })
}

fn push_pose(out: &mut String, pose: &Se3) {
    let [qw, qx, qy, qz] = pose.quaternion_wxyz();
    let t = pose.translation;
    write!(out, " {qw} {qx} {qy} {qz} {} {} {}", t.x, t.y, t.z).expect("write to string");
}

/// Canonical text: keyframes by index, then points, observations and ground
/// truth in stored order. Floats use the shortest exact representation.
pub fn format_map(file: &MapFile) -> String {
    let map = &file.map;
    let mut out = String::new();
    let c = map.camera();
    writeln!(out, "{MAP_VERSION}").unwrap();
    writeln!(out, "camera {} {} {} {} {}", c.fx, c.fy, c.cx, c.cy, c.baseline).unwrap();
    for kf in map.keyframes() {
        write!(out, "keyframe {} {}", kf.id, kf.index).unwrap();
        push_pose(&mut out, &kf.pose);
        writeln!(out, " {}", u8::from(kf.is_loop_frame)).unwrap();
    }
    for p in map.points() {
        writeln!(out, "point {} {} {} {}", p.id, p.position.x, p.position.y, p.position.z).unwrap();
    }
    for o in map.observations() {
        match o.measurement {
            Measurement::Stereo { u_left, v, u_right } => {
                writeln!(out, "obs {} {} stereo {u_left} {v} {u_right} {}", o.point_id, o.frame_id, o.sigma).unwrap()
            }
            Measurement::Mono { u, v } => {
                writeln!(out, "obs {} {} mono {u} {v} {}", o.point_id, o.frame_id, o.sigma).unwrap()
            }
        }
    }
    if let Some(gt) = &file.ground_truth {
        for (kf, pose) in map.keyframes().iter().zip(gt) {
            write!(out, "gt_pose {}", kf.id).unwrap();
            push_pose(&mut out, pose);
            out.push('\n');
        }
    }
    out
}

pub fn load_map(path: impl AsRef<Path>) -> Result<MapFile> {
    let path = path.as_ref();
    parse_map(&read_text(path)?, path)
}

/// Writes the canonical text, gzip-compressed when the path ends in `.gz`.
pub fn save_map(path: impl AsRef<Path>, file: &MapFile) -> Result<()> {
    let path = path.as_ref();
    write_bytes(path, &format_map(file), path.extension().is_some_and(|e| e == "gz"))
}

pub fn parse_selection(text: &str, path: &Path) -> Result<SelectionFile> {
    let mut ctx = Lines { path, line: 0 };
    let mut recs = records(text);
    match recs.next() {
        Some((_, SELECTION_VERSION)) => {}
        Some((line, other)) => {
            ctx.line = line;
            return Err(ctx.err(format!("expected version '{SELECTION_VERSION}', found '{other}'")));
        }
        None => return Err(ctx.err("empty file")),
    }
    let mut kind = None;
    let mut budget = None;
    let mut value = None;
    let mut duration = None;
    let mut gain_evals = None;
    let mut ids = Vec::new();
    for (line, rec) in recs {
        ctx.line = line;
        let mut it = rec.split_whitespace();
        match it.next().expect("record is non-empty") {
            "kind" => kind = Some(ctx.field::<String>(&mut it, "kind")?),
            "budget" => budget = Some(ctx.field(&mut it, "budget")?),
            "value" => value = Some(ctx.field(&mut it, "value")?),
            "duration" => {
                let secs: f64 = ctx.field(&mut it, "duration")?;
                duration =
                    Some(Duration::try_from_secs_f64(secs).map_err(|_| ctx.err(format!("invalid duration {secs}")))?);
            }
            "gain_evals" => gain_evals = Some(ctx.field(&mut it, "gain_evals")?),
            "id" => ids.push(ctx.field(&mut it, "point id")?),
            other => return Err(ctx.err(format!("unknown record '{other}'"))),
        }
        ctx.end(it)?;
    }
    ctx.line = 0;
    let missing = |name: &str| ctx.err(format!("missing '{name}' record"));
    let budget = budget.ok_or_else(|| missing("budget"))?;
    if ids.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ctx.err("ids must be strictly ascending"));
    }
    Ok(SelectionFile {
        kind: kind.ok_or_else(|| missing("kind"))?,
        budget,
        value: value.ok_or_else(|| missing("value"))?,
        duration: duration.ok_or_else(|| missing("duration"))?,
        gain_evals: gain_evals.ok_or_else(|| missing("gain_evals"))?,
        ids,
    })
}

pub fn format_selection(sel: &SelectionFile) -> String {
    let mut out = String::new();
    writeln!(out, "{SELECTION_VERSION}").unwrap();
    writeln!(out, "kind {}", sel.kind).unwrap();
    writeln!(out, "budget {}", sel.budget).unwrap();
    writeln!(out, "value {}", sel.value).unwrap();
    writeln!(out, "duration {}", sel.duration.as_secs_f64()).unwrap();
    writeln!(out, "gain_evals {}", sel.gain_evals).unwrap();
    for id in &sel.ids {
        writeln!(out, "id {id}").unwrap();
    }
    out
}

pub fn load_selection(path: impl AsRef<Path>) -> Result<SelectionFile> {
    let path = path.as_ref();
    parse_selection(&read_text(path)?, path)
}

pub fn save_selection(path: impl AsRef<Path>, sel: &SelectionFile) -> Result<()> {
    let path = path.as_ref();
    write_bytes(path, &format_selection(sel), false)
}
