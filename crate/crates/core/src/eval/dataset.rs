//! On-disk dataset fixture: a CSV manifest plus one tensor file per clip and
//! per pose sequence.
//!
//! ```text
//! manifest.csv
//! clips/0000.eitt    [1, T, H, W]
//! poses/0000.eitt    [T, joints, 3], millimetres
//! ```
//!
//! Manifest columns: `sample_id,subject_id,view_id,label,clip_path,pose_path`
//! followed by the player box `box_cx,box_cy,box_w,box_h` in pixels. Paths
//! are relative to the manifest. Lines starting with `#` are comments.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::detection::BoundingBox;
use crate::error::{Error, Result};
use crate::metrics::SkeletonPose;
use crate::tensor::{load_tensor, save_tensor, Tensor};

use super::synth::{ActionLabel, SyntheticAction};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const MANIFEST_HEADER: [&str; 10] = [
    "sample_id",
    "subject_id",
    "view_id",
    "label",
    "clip_path",
    "pose_path",
    "box_cx",
    "box_cy",
    "box_w",
    "box_h",
];

fn pose_tensor(poses: &[SkeletonPose]) -> Result<Tensor> {
    let joints = poses.first().map_or(0, SkeletonPose::len);
    if poses.iter().any(|p| p.len() != joints) {
        return Err(Error::Shape("pose sequence mixes joint counts".into()));
    }
    let data = poses.iter().flat_map(|p| p.joints.iter().flatten().copied()).collect();
    Tensor::new(vec![poses.len(), joints, 3], data)
}

fn poses_from_tensor(t: &Tensor) -> Result<Vec<SkeletonPose>> {
    match *t.shape() {
        [_, j, 3] if j > 0 => t
            .data()
            .chunks(j * 3)
            .map(|frame| SkeletonPose::new(frame.chunks(3).map(|c| [c[0], c[1], c[2]]).collect()))
            .collect(),
        ref s => Err(Error::Format(format!("pose tensor must be [T, joints, 3], got {s:?}"))),
    }
}

/// Writes `samples` under `dir` (created if missing). `comment` becomes a
/// leading `#` line of the manifest.
pub fn write_dataset(dir: impl AsRef<Path>, samples: &[SyntheticAction], comment: Option<&str>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("clips"))?;
    fs::create_dir_all(dir.join("poses"))?;
    let manifest = dir.join(MANIFEST_FILE);
    let mut file = fs::File::create(&manifest)?;
    if let Some(c) = comment {
        writeln!(file, "# {c}")?;
    }
    let mut out = csv::Writer::from_writer(file);
    out.write_record(MANIFEST_HEADER)?;
    for s in samples {
        let clip_path = format!("clips/{:04}.eitt", s.sample_id);
        let pose_path = format!("poses/{:04}.eitt", s.sample_id);
        save_tensor(dir.join(&clip_path), &s.clip)?;
        save_tensor(dir.join(&pose_path), &pose_tensor(&s.poses)?)?;
        let b = &s.player_box;
        out.write_record([
            s.sample_id.to_string(),
            s.subject_id.to_string(),
            s.view_id.to_string(),
            s.label.name().to_string(),
            clip_path,
            pose_path,
            b.cx.to_string(),
            b.cy.to_string(),
            b.w.to_string(),
            b.h.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(manifest)
}

/// Loads every sample listed in `dir/manifest.csv`, in manifest order.
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Vec<SyntheticAction>> {
    let dir = dir.as_ref();
    let manifest = dir.join(MANIFEST_FILE);
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(&manifest)
        .map_err(|e| Error::Io(format!("{}: {e}", manifest.display())))?;
    let header = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("manifest lacks a {name:?} column")))
    };
    let idx: Vec<usize> = MANIFEST_HEADER.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let mut samples = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| rec.get(idx[k]).unwrap_or("");
        let bad = |k: usize| Error::Format(format!("manifest row {}: bad {} {:?}", line + 1, MANIFEST_HEADER[k], field(k)));
        let int = |k: usize| field(k).parse::<u32>().map_err(|_| bad(k));
        let num = |k: usize| field(k).parse::<f64>().map_err(|_| bad(k));
        let clip = load_tensor(dir.join(field(4)))?;
        let poses = poses_from_tensor(&load_tensor(dir.join(field(5)))?)?;
        match *clip.shape() {
            [1, t, _, _] if t == poses.len() => {}
            ref s => {
                return Err(Error::Format(format!(
                    "sample {}: clip {s:?} does not match {} poses",
                    field(0),
                    poses.len()
                )))
            }
        }
        samples.push(SyntheticAction {
            sample_id: int(0)?,
            subject_id: int(1)?,
            view_id: int(2)?,
            label: field(3).parse::<ActionLabel>()?,
            clip,
            poses,
            player_box: BoundingBox::new(num(6)?, num(7)?, num(8)?, num(9)?),
        });
    }
    Ok(samples)
}
