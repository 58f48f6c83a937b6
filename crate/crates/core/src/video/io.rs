use std::fs;
use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::video::VideoClip;

/// Loads every `*.png` in `dir`, in file-name order, as one clip.
pub fn load_frame_dir(dir: &Path) -> Result<VideoClip> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::input(format!("{} contains no PNG frames", dir.display())));
    }
    let mut size = None;
    let mut pixels = Vec::new();
    for path in &paths {
        let img = image::open(path)?.to_rgb8();
        let dims = img.dimensions();
        if *size.get_or_insert(dims) != dims {
            return Err(Error::input(format!("{} has size {dims:?}, expected {size:?}", path.display())));
        }
        let (w, h) = (dims.0 as usize, dims.1 as usize);
        let raw = img.as_raw();
        for c in 0..3 {
            pixels.extend((0..h * w).map(|i| raw[i * 3 + c]));
        }
    }
    let (w, h) = size.expect("at least one frame");
    VideoClip::new(pixels, paths.len(), h as usize, w as usize)
}

/// Writes `frame_000.png`, `frame_001.png`, ... into `dir`.
pub fn save_frame_dir(clip: &VideoClip, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (h, w) = (clip.height(), clip.width());
    for i in 0..clip.frames() {
        let f = clip.frame(i);
        let img: RgbImage = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
            let at = y as usize * w + x as usize;
            Rgb([f[at], f[h * w + at], f[2 * h * w + at]])
        });
        img.save(dir.join(format!("frame_{i:03}.png")))?;
    }
    Ok(())
}
