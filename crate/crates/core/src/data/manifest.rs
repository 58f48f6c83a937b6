//! CSV manifests: `clip_id,audio_path,video_path,label,split`, paths
//! relative to the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::data::Split;
use crate::error::{Error, Result};
use crate::label::Intensity;

pub const COLUMNS: [&str; 5] = ["clip_id", "audio_path", "video_path", "label", "split"];

/// One manifest row with resolved paths; media are loaded on demand.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipStub {
    pub clip_id: String,
    pub audio_path: PathBuf,
    pub video_path: PathBuf,
    pub label: Intensity,
    pub split: Split,
}

#[derive(Serialize)]
struct Row<'a> {
    clip_id: &'a str,
    audio_path: String,
    video_path: String,
    label: &'a str,
    split: &'a str,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

pub fn load_manifest(path: &Path) -> Result<Vec<ClipStub>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    let mut col = [0usize; 5];
    for (slot, name) in col.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(path, 1, format!("missing column `{name}`")))?;
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = row.as_ref().ok().and_then(|r| r.position()).map_or(i + 2, |p| p.line() as usize);
        let row = row.map_err(|e| parse_err(path, line, e.to_string()))?;
        let field = |k: usize| row.get(col[k]).unwrap_or("");
        let label = field(3)
            .parse::<Intensity>()
            .map_err(|_| parse_err(path, line, format!("unknown label `{}`", field(3))))?;
        let split = field(4)
            .parse::<Split>()
            .map_err(|_| parse_err(path, line, format!("unknown split `{}`", field(4))))?;
        let audio_path = base.join(field(1));
        let video_path = base.join(field(2));
        for (what, p) in [("audio", &audio_path), ("video", &video_path)] {
            if !p.exists() {
                return Err(parse_err(path, line, format!("{what} path {} does not exist", p.display())));
            }
        }
        if field(0).is_empty() {
            return Err(parse_err(path, line, "empty clip_id"));
        }
        out.push(ClipStub { clip_id: field(0).to_string(), audio_path, video_path, label, split });
    }
    Ok(out)
}

/// Writes `stubs` with paths made relative to the manifest's directory where possible.
pub fn write_manifest(path: &Path, stubs: &[ClipStub]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new("."));
    let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).to_string_lossy().replace('\\', "/");
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Input(format!("{other:?}")),
    })?;
    for s in stubs {
        w.serialize(Row {
            clip_id: &s.clip_id,
            audio_path: rel(&s.audio_path),
            video_path: rel(&s.video_path),
            label: s.label.name(),
            split: s.split.name(),
        })?;
    }
    if stubs.is_empty() {
        w.write_record(COLUMNS)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Finds `<root>/<Label>/<clip>.wav` with frames in `<root>/<Label>/<clip>/`
/// or `<root>/<Label>/<clip>.frames`. Every clip is tagged `train`; callers
/// assign splits afterwards.
pub fn scan_class_folders(root: &Path) -> Result<Vec<ClipStub>> {
    let mut out = Vec::new();
    for class in Intensity::ALL {
        let dir = root.join(class.name());
        if !dir.is_dir() {
            continue;
        }
        let mut wavs: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        wavs.sort();
        for wav in wavs {
            let stem = wav.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let frames_dir = dir.join(&stem);
            let pack = dir.join(format!("{stem}.frames"));
            let video_path = if frames_dir.is_dir() {
                frames_dir
            } else if pack.is_file() {
                pack
            } else {
                return Err(Error::Input(format!("no frames found for {}", wav.display())));
            };
            out.push(ClipStub {
                clip_id: format!("{}/{stem}", class.name()),
                audio_path: wav,
                video_path,
                label: class,
                split: Split::Train,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "clip_id,audio_path,video_path,label,split\n").unwrap();
        assert!(load_manifest(&p).unwrap().is_empty());
    }

    #[test]
    fn parses_rows_and_reports_lines() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.wav"), b"").unwrap();
        fs::create_dir(dir.path().join("a")).unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "clip_id,audio_path,video_path,label,split\nc1,a.wav,a,Medium,val\n").unwrap();
        let rows = load_manifest(&p).unwrap();
        assert_eq!(rows[0].label, Intensity::Medium);
        assert_eq!(rows[0].split, Split::Val);
        assert_eq!(rows[0].audio_path, dir.path().join("a.wav"));

        fs::write(&p, "clip_id,audio_path,video_path,label,split\nc1,a.wav,a,Medium,val\nc2,a.wav,a,Huge,val\n").unwrap();
        match load_manifest(&p) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("Huge"));
            }
            other => panic!("{other:?}"),
        }
        fs::write(&p, "clip_id,audio_path,label,split\n").unwrap();
        assert!(matches!(load_manifest(&p), Err(Error::Parse { line: 1, .. })));
        fs::write(&p, "clip_id,audio_path,video_path,label,split\nc1,missing.wav,a,Weak,train\n").unwrap();
        assert!(matches!(load_manifest(&p), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x.wav"), b"").unwrap();
        fs::write(dir.path().join("x.frames"), b"").unwrap();
        let stubs = vec![ClipStub {
            clip_id: "x".into(),
            audio_path: dir.path().join("x.wav"),
            video_path: dir.path().join("x.frames"),
            label: Intensity::Strong,
            split: Split::Test,
        }];
        let p = dir.path().join("m.csv");
        write_manifest(&p, &stubs).unwrap();
        assert!(fs::read_to_string(&p).unwrap().contains("x,x.wav,x.frames,Strong,test"));
        assert_eq!(load_manifest(&p).unwrap(), stubs);
    }
}
