//! Datasets: the seeded synthetic generator with its labelling oracle,
//! CSV manifests for recorded data, and stratified splits.

pub mod manifest;
pub mod oracle;
pub mod split;
pub mod synth;

pub use manifest::{load_manifest, scan_class_folders, write_manifest, ClipStub};
pub use oracle::{oracle_from_measurements, oracle_label};
pub use split::{make_splits, split_counts, Split};
pub use synth::{generate_clip, SynthClip, SynthParams};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::mel::MelFrontend;
use crate::dsp::wav::{read_wav, write_wav};
use crate::dsp::{MelConfig, MelFeature, Waveform};
use crate::error::{Error, Result};
use crate::label::Intensity;
use crate::numerics::Checkpoint;
use crate::parallel;
use crate::rng;
use crate::video::{load_frame_dir, VideoClip};

/// Where a clip came from.
#[derive(Clone, Debug, PartialEq)]
pub enum Origin {
    Synthetic { seed: u64, index: usize, class: Intensity },
    Recorded,
}

/// One labelled two-second audio-visual clip.
#[derive(Clone, Debug)]
pub struct ClipRecord {
    pub clip_id: String,
    pub waveform: Waveform,
    pub frames: VideoClip,
    pub label: Intensity,
    pub split: Split,
    pub origin: Origin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub params: SynthParams,
    pub clips: usize,
    /// Train/val/test fractions.
    pub fractions: [f64; 3],
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { params: SynthParams::default(), clips: 1000, fractions: [0.8, 0.1, 0.1] }
    }
}

/// Clip `index` of a synthetic set: class `index mod 4`, label from the oracle.
pub fn synth_record(params: &SynthParams, seed: u64, index: usize) -> Result<ClipRecord> {
    let class = Intensity::ALL[index % 4];
    let clip = generate_clip(class, params, &mut rng::stream(seed, &[rng::label::SYNTH_CLIP, index as u64]))?;
    let mut rec = ClipRecord {
        clip_id: format!("synth-{index:05}"),
        waveform: clip.waveform,
        frames: clip.video,
        label: class,
        split: Split::Train,
        origin: Origin::Synthetic { seed, index, class },
    };
    rec.label = oracle_label(&rec, params)?;
    Ok(rec)
}

/// A prepared example: the full-length log-mel and the native frames.
#[derive(Clone, Debug)]
pub struct Example {
    pub clip_id: String,
    pub label: Intensity,
    pub split: Split,
    pub mel: MelFeature,
    pub video: VideoClip,
    pub audio: AudioSource,
}

/// How to get an example's waveform back, e.g. to mix in noise.
#[derive(Clone, Debug, PartialEq)]
pub enum AudioSource {
    Synthetic { seed: u64, index: usize },
    File(PathBuf),
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub mel: MelConfig,
    pub synth: Option<SynthParams>,
}

impl Dataset {
    pub fn synthetic(cfg: &SynthConfig, mel: &MelConfig, seed: u64) -> Result<Self> {
        cfg.params.validate()?;
        let frontend = MelFrontend::new(mel.clone())?;
        let records = parallel::map_indexed(cfg.clips, |i| -> Result<(ClipRecord, MelFeature)> {
            let rec = synth_record(&cfg.params, seed, i)?;
            let m = frontend.compute(&rec.waveform)?;
            Ok((rec, m))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let labels: Vec<Intensity> = records.iter().map(|(r, _)| r.label).collect();
        let splits = make_splits(&labels, cfg.fractions, seed)?;
        let examples = records
            .into_iter()
            .zip(splits)
            .map(|((r, m), split)| Example {
                clip_id: r.clip_id,
                label: r.label,
                split,
                mel: m,
                video: r.frames,
                audio: AudioSource::Synthetic { seed, index: match r.origin {
                    Origin::Synthetic { index, .. } => index,
                    Origin::Recorded => unreachable!("synthetic records"),
                } },
            })
            .collect();
        Ok(Self { examples, mel: mel.clone(), synth: Some(cfg.params.clone()) })
    }

    /// Loads every clip of a manifest. Frames are area-downscaled to `image`
    /// pixels; mel features are read from `cache` when present there.
    pub fn from_manifest(path: &Path, mel: &MelConfig, image: usize, cache: Option<&Path>) -> Result<Self> {
        let stubs = load_manifest(path)?;
        let frontend = MelFrontend::new(mel.clone())?;
        let examples = parallel::map_slice(&stubs, |s| -> Result<Example> {
            let cached = cache.map(|c| c.join(mel_cache_name(&s.clip_id)));
            let m = match cached.as_ref().filter(|p| p.exists()) {
                Some(p) => MelFeature::from_checkpoint(&Checkpoint::read(p)?)?,
                None => frontend.compute(&read_wav(&s.audio_path)?)?,
            };
            Ok(Example {
                clip_id: s.clip_id.clone(),
                label: s.label,
                split: s.split,
                mel: m,
                video: fit_frames(load_video(&s.video_path)?, image)?,
                audio: AudioSource::File(s.audio_path.clone()),
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(Self { examples, mel: mel.clone(), synth: None })
    }

    pub fn split(&self, split: Split) -> Vec<&Example> {
        self.examples.iter().filter(|e| e.split == split).collect()
    }

    pub fn counts(&self) -> [usize; 3] {
        split_counts(self.examples.iter().map(|e| e.split))
    }

    pub fn waveform(&self, ex: &Example) -> Result<Waveform> {
        match &ex.audio {
            AudioSource::Synthetic { seed, index } => {
                let p = self.synth.as_ref().ok_or_else(|| Error::Contract("synthetic example without parameters".into()))?;
                Ok(synth_record(p, *seed, *index)?.waveform)
            }
            AudioSource::File(path) => read_wav(path),
        }
    }
}

/// Writes a synthetic set as `<root>/<Label>/<clip>.wav` plus a packed
/// `<clip>.frames` file, and `<root>/manifest.csv` carrying labels and splits.
pub fn export_synthetic(cfg: &SynthConfig, seed: u64, root: &Path) -> Result<Vec<ClipStub>> {
    cfg.params.validate()?;
    let records = parallel::map_indexed(cfg.clips, |i| synth_record(&cfg.params, seed, i))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<Intensity> = records.iter().map(|r| r.label).collect();
    let splits = make_splits(&labels, cfg.fractions, seed)?;
    let stubs = parallel::map_indexed(records.len(), |i| -> Result<ClipStub> {
        let r = &records[i];
        let dir = root.join(r.label.name());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let audio_path = dir.join(format!("{}.wav", r.clip_id));
        let video_path = dir.join(format!("{}.frames", r.clip_id));
        write_wav(&audio_path, &r.waveform)?;
        r.frames.to_checkpoint()?.write(&video_path)?;
        Ok(ClipStub { clip_id: r.clip_id.clone(), audio_path, video_path, label: r.label, split: splits[i] })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    write_manifest(&root.join("manifest.csv"), &stubs)?;
    Ok(stubs)
}

/// Computes and caches the log-mel of every manifest clip under `cache`.
/// Returns the number of features written.
pub fn preprocess_manifest(manifest: &Path, mel: &MelConfig, cache: &Path) -> Result<usize> {
    let stubs = load_manifest(manifest)?;
    std::fs::create_dir_all(cache).map_err(|e| Error::io(cache, e))?;
    let frontend = MelFrontend::new(mel.clone())?;
    parallel::map_slice(&stubs, |s| -> Result<()> {
        let m = frontend.compute(&read_wav(&s.audio_path)?)?;
        m.to_checkpoint().write(cache.join(mel_cache_name(&s.clip_id)))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(stubs.len())
}

/// File name of a clip's cached mel.
pub fn mel_cache_name(clip_id: &str) -> String {
    let safe: String = clip_id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    format!("{safe}.mel")
}

/// A frame directory of PNGs, or a packed frame file.
pub fn load_video(path: &Path) -> Result<VideoClip> {
    if path.is_dir() {
        load_frame_dir(path)
    } else {
        VideoClip::from_checkpoint(&Checkpoint::read(path)?)
    }
}

fn fit_frames(clip: VideoClip, image: usize) -> Result<VideoClip> {
    if clip.height() == image && clip.width() == image {
        return Ok(clip);
    }
    if clip.height() != clip.width() || clip.height() % image != 0 {
        return Err(Error::Input(format!(
            "{}×{} frames cannot be area-downscaled to {image}×{image}",
            clip.height(),
            clip.width()
        )));
    }
    clip.downscale(clip.height() / image)
}
