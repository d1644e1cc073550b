//! Snippet bundle layout on disk, teacher ingestion, and point-cloud export.
//!
//! A bundle directory holds `frame_prev.pgm`, `frame_target.pgm`,
//! `frame_next.pgm`, `depth_gt.pfm`, optionally `teacher.pfm`, and the
//! manifest `poses.txt` with one row-major 3x4 [R | t] pose per line:
//! first T_{t,t-1}, then T_{t,t+1}.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};

use crate::camera::RigidPose;
use crate::error::{Error, Result};
use crate::io::pfm::{read_pfm, write_pfm};
use crate::io::pgm::{read_pgm, write_pgm, PgmDepth};
use crate::oracle::SnippetBundle;
use crate::raster::{DepthGrid, ImageBuffer, ValidityMask};

pub const FRAME_PREV: &str = "frame_prev.pgm";
pub const FRAME_TARGET: &str = "frame_target.pgm";
pub const FRAME_NEXT: &str = "frame_next.pgm";
pub const DEPTH_GT: &str = "depth_gt.pfm";
pub const TEACHER: &str = "teacher.pfm";
pub const MANIFEST: &str = "poses.txt";

fn pose_line(pose: &RigidPose) -> String {
    let r = pose.rotation();
    let t = pose.translation();
    let vals = [
        r[(0, 0)],
        r[(0, 1)],
        r[(0, 2)],
        t.x,
        r[(1, 0)],
        r[(1, 1)],
        r[(1, 2)],
        t.y,
        r[(2, 0)],
        r[(2, 1)],
        r[(2, 2)],
        t.z,
    ];
    vals.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

fn parse_pose_line(line: &str) -> Result<RigidPose> {
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| Error::Format(format!("bad pose number {t:?}"))))
        .collect::<Result<_>>()?;
    if vals.len() != 12 {
        return Err(Error::Format(format!("pose line has {} numbers, want 12", vals.len())));
    }
    let rotation = Matrix3::new(
        vals[0], vals[1], vals[2], vals[4], vals[5], vals[6], vals[8], vals[9], vals[10],
    );
    let translation = Vector3::new(vals[3], vals[7], vals[11]);
    RigidPose::new(rotation, translation)
}

pub fn write_pose_manifest(path: impl AsRef<Path>, poses: &[&RigidPose]) -> Result<()> {
    let mut f = std::fs::File::create(path.as_ref())?;
    for pose in poses {
        writeln!(f, "{}", pose_line(pose))?;
    }
    Ok(())
}

pub fn read_pose_manifest(path: impl AsRef<Path>) -> Result<Vec<RigidPose>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(parse_pose_line)
        .collect()
}

/// Write a rendered snippet (plus an optional teacher map) as a bundle.
pub fn write_snippet_bundle(
    dir: impl AsRef<Path>,
    bundle: &SnippetBundle,
    teacher: Option<&DepthGrid>,
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_pgm(dir.join(FRAME_PREV), &bundle.prev.image, PgmDepth::Sixteen)?;
    write_pgm(dir.join(FRAME_TARGET), &bundle.target.image, PgmDepth::Sixteen)?;
    write_pgm(dir.join(FRAME_NEXT), &bundle.next.image, PgmDepth::Sixteen)?;
    write_pfm(dir.join(DEPTH_GT), bundle.gt_depth())?;
    if let Some(t) = teacher {
        write_pfm(dir.join(TEACHER), t)?;
    }
    write_pose_manifest(dir.join(MANIFEST), &[&bundle.pose_prev, &bundle.pose_next])?;
    Ok(())
}

/// A snippet bundle loaded back from disk.
#[derive(Debug, Clone)]
pub struct LoadedBundle {
    pub prev: ImageBuffer,
    pub target: ImageBuffer,
    pub next: ImageBuffer,
    pub gt: DepthGrid,
    pub pose_prev: RigidPose,
    pub pose_next: RigidPose,
    pub teacher_path: Option<PathBuf>,
}

pub fn read_snippet_bundle(dir: impl AsRef<Path>) -> Result<LoadedBundle> {
    let dir = dir.as_ref();
    let poses = read_pose_manifest(dir.join(MANIFEST))?;
    if poses.len() != 2 {
        return Err(Error::Format(format!(
            "manifest lists {} poses, want 2 (prev, next)",
            poses.len()
        )));
    }
    let teacher_path = dir.join(TEACHER);
    Ok(LoadedBundle {
        prev: read_pgm(dir.join(FRAME_PREV))?,
        target: read_pgm(dir.join(FRAME_TARGET))?,
        next: read_pgm(dir.join(FRAME_NEXT))?,
        gt: read_pfm(dir.join(DEPTH_GT))?,
        pose_prev: poses[0].clone(),
        pose_next: poses[1].clone(),
        teacher_path: teacher_path.exists().then_some(teacher_path),
    })
}

/// Value space of an external teacher file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeacherMode {
    /// Values are depths.
    Depth,
    /// Values are inverse depths (relative disparities).
    InverseDepth,
}

impl TeacherMode {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "depth" => Some(Self::Depth),
            "inverse_depth" => Some(Self::InverseDepth),
            _ => None,
        }
    }
}

/// Load a teacher map and deliver it in depth units rescaled to median 1.
/// In inverse-depth mode the values map through v -> 1 / (v + 1e-6) first.
pub fn ingest_teacher(path: impl AsRef<Path>, mode: TeacherMode) -> Result<DepthGrid> {
    let raw = read_pfm(path.as_ref())?;
    let grid = match mode {
        TeacherMode::Depth => raw,
        TeacherMode::InverseDepth => {
            let (w, h) = (raw.width(), raw.height());
            let values: Vec<f64> = raw
                .values()
                .iter()
                .zip(raw.mask().data())
                .map(|(v, ok)| if *ok { 1.0 / (v + 1e-6) } else { 0.0 })
                .collect();
            DepthGrid::from_parts(w, h, values, raw.mask().clone())?
        }
    };
    let med = grid.median_valid()?;
    grid.scaled(1.0 / med)
}

/// ASCII `X Y Z` per valid pixel.
pub fn write_xyz(
    path: impl AsRef<Path>,
    points: &[Vector3<f64>],
    mask: &ValidityMask,
) -> Result<()> {
    if points.len() != mask.data().len() {
        return Err(Error::Contract("point count does not match mask".into()));
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    for (p, ok) in points.iter().zip(mask.data()) {
        if *ok {
            writeln!(f, "{:?} {:?} {:?}", p.x, p.y, p.z)?;
        }
    }
    f.flush()?;
    Ok(())
}
