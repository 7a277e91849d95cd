use std::fs;
use std::path::{Path, PathBuf};

use super::VideoTensor;

#[derive(Debug, thiserror::Error)]
pub enum MediaError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("missing frame {index} in {dir}")]
    MissingFrame { index: usize, dir: PathBuf },
    #[error("dimension error: {0}")]
    Dimensions(String),
    #[error("bad sidecar {path}: {reason}")]
    Sidecar { path: PathBuf, reason: String },
    #[error("png error in {path}: {reason}")]
    Png { path: PathBuf, reason: String },
    #[error("unsupported video path {0} (expected a .rgb file or a frame directory)")]
    Unsupported(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MediaError + '_ {
    move |source| MediaError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn is_raw(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "rgb")
}

/// Sidecar path `<video>.dims` next to `<video>.rgb`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("dims")
}

/// Loads a raw `.rgb` file (with its `.dims` sidecar) or a directory of
/// numerically named PNG frames.
pub fn load_video(path: &Path) -> Result<VideoTensor, MediaError> {
    if path.is_dir() {
        load_png_dir(path)
    } else if is_raw(path) {
        load_raw(path)
    } else {
        Err(MediaError::Unsupported(path.to_path_buf()))
    }
}

/// Saves to a raw `.rgb` file plus sidecar, or to a PNG frame directory for
/// any other path. Samples are stored as `round(v * 255)`.
pub fn save_video(video: &VideoTensor, path: &Path) -> Result<(), MediaError> {
    if is_raw(path) {
        save_raw(video, path)
    } else {
        save_png_dir(video, path)
    }
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn parse_sidecar(path: &Path) -> Result<(usize, usize, usize), MediaError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |reason: &str| MediaError::Sidecar {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let nums: Vec<usize> = text
        .split_whitespace()
        .map(|s| s.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad("expected three integers `T H W`"))?;
    match nums.as_slice() {
        &[t, h, w] if t > 0 && h > 0 && w > 0 => Ok((t, h, w)),
        &[_, _, _] => Err(bad("dimensions must be positive")),
        _ => Err(bad("expected three integers `T H W`")),
    }
}

fn load_raw(path: &Path) -> Result<VideoTensor, MediaError> {
    let side = sidecar_path(path);
    let (t, h, w) = parse_sidecar(&side)?;
    let bytes = fs::read(path).map_err(io_err(path))?;
    let expect = t
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .and_then(|v| v.checked_mul(3))
        .ok_or_else(|| MediaError::Dimensions("sidecar dimensions overflow".into()))?;
    if bytes.len() != expect {
        return Err(MediaError::Dimensions(format!(
            "{} holds {} bytes but sidecar {t}x{h}x{w} needs {expect}",
            path.display(),
            bytes.len()
        )));
    }
    // planar per frame: R plane, G plane, B plane
    let plane = h * w;
    let mut data = vec![0f32; expect];
    for f in 0..t {
        let src = &bytes[f * 3 * plane..(f + 1) * 3 * plane];
        let dst = &mut data[f * 3 * plane..(f + 1) * 3 * plane];
        for p in 0..plane {
            for c in 0..3 {
                dst[p * 3 + c] = src[c * plane + p] as f32 / 255.0;
            }
        }
    }
    VideoTensor::new(t, h, w, data)
}

fn save_raw(video: &VideoTensor, path: &Path) -> Result<(), MediaError> {
    let (t, h, w) = video.dims();
    let plane = h * w;
    let mut bytes = vec![0u8; t * 3 * plane];
    for f in 0..t {
        let src = video.frame_slice(f);
        let dst = &mut bytes[f * 3 * plane..(f + 1) * 3 * plane];
        for p in 0..plane {
            for c in 0..3 {
                dst[c * plane + p] = to_u8(src[p * 3 + c]);
            }
        }
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, bytes).map_err(io_err(path))?;
    let side = sidecar_path(path);
    fs::write(&side, format!("{t} {h} {w}\n")).map_err(io_err(&side))
}

/// Frame files in `dir` keyed by the integer value of their stem.
fn frame_files(dir: &Path) -> Result<Vec<(usize, PathBuf)>, MediaError> {
    let mut frames = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path
            .extension()
            .is_none_or(|e| !e.eq_ignore_ascii_case("png"))
        {
            continue;
        }
        if let Some(idx) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<usize>().ok())
        {
            frames.push((idx, path));
        }
    }
    frames.sort();
    Ok(frames)
}

#[cfg(feature = "png")]
fn load_png_dir(dir: &Path) -> Result<VideoTensor, MediaError> {
    let files = frame_files(dir)?;
    if files.is_empty() {
        return Err(MediaError::MissingFrame {
            index: 0,
            dir: dir.to_path_buf(),
        });
    }
    for (expect, (idx, _)) in files.iter().enumerate() {
        if *idx != expect {
            return Err(MediaError::MissingFrame {
                index: expect,
                dir: dir.to_path_buf(),
            });
        }
    }
    let mut dims = None;
    let mut data = Vec::new();
    for (_, path) in &files {
        let (h, w, rgb) = read_png(path)?;
        match dims {
            None => dims = Some((h, w)),
            Some(d) if d != (h, w) => {
                return Err(MediaError::Dimensions(format!(
                    "{} is {h}x{w}, earlier frames are {}x{}",
                    path.display(),
                    d.0,
                    d.1
                )))
            }
            Some(_) => {}
        }
        data.extend(rgb.into_iter().map(|b| b as f32 / 255.0));
    }
    let (h, w) = dims.unwrap();
    VideoTensor::new(files.len(), h, w, data)
}

#[cfg(feature = "png")]
fn read_png(path: &Path) -> Result<(usize, usize, Vec<u8>), MediaError> {
    let png_err = |reason: String| MediaError::Png {
        path: path.to_path_buf(),
        reason,
    };
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| png_err(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| png_err("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| png_err(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let px = &buf[..info.buffer_size()];
    let rgb = match info.color_type {
        png::ColorType::Rgb => px.to_vec(),
        png::ColorType::Rgba => px
            .chunks_exact(4)
            .flat_map(|p| [p[0], p[1], p[2]])
            .collect(),
        png::ColorType::Grayscale => px.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => px
            .chunks_exact(2)
            .flat_map(|p| [p[0], p[0], p[0]])
            .collect(),
        other => return Err(png_err(format!("unsupported color type {other:?}"))),
    };
    Ok((h, w, rgb))
}

#[cfg(feature = "png")]
fn save_png_dir(video: &VideoTensor, dir: &Path) -> Result<(), MediaError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let (t, h, w) = video.dims();
    for f in 0..t {
        let path = dir.join(format!("{f:05}.png"));
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        let mut enc = png::Encoder::new(std::io::BufWriter::new(file), w as u32, h as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let png_err = |e: png::EncodingError| MediaError::Png {
            path: path.clone(),
            reason: e.to_string(),
        };
        let mut writer = enc.write_header().map_err(png_err)?;
        let bytes: Vec<u8> = video.frame_slice(f).iter().map(|&v| to_u8(v)).collect();
        writer.write_image_data(&bytes).map_err(png_err)?;
    }
    Ok(())
}

#[cfg(not(feature = "png"))]
fn load_png_dir(dir: &Path) -> Result<VideoTensor, MediaError> {
    Err(MediaError::Unsupported(dir.to_path_buf()))
}

#[cfg(not(feature = "png"))]
fn save_png_dir(_video: &VideoTensor, dir: &Path) -> Result<(), MediaError> {
    Err(MediaError::Unsupported(dir.to_path_buf()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_8bit(t: usize, h: usize, w: usize, seed: u64) -> VideoTensor {
        let mut s = seed;
        let data = (0..t * h * w * 3)
            .map(|_| {
                s = s
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                ((s >> 56) as u8) as f32 / 255.0
            })
            .collect();
        VideoTensor::new(t, h, w, data).unwrap()
    }

    #[test]
    fn raw_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let v = random_8bit(3, 5, 7, 1);
        let path = dir.path().join("clip.rgb");
        save_video(&v, &path).unwrap();
        assert_eq!(
            fs::read_to_string(dir.path().join("clip.dims")).unwrap(),
            "3 5 7\n"
        );
        assert_eq!(load_video(&path).unwrap(), v);
    }

    #[test]
    fn raw_layout_is_planar() {
        let dir = tempfile::tempdir().unwrap();
        let mut data = vec![0.0; 2 * 3];
        data[0] = 1.0; // pixel 0 red
        data[5] = 1.0; // pixel 1 blue
        let v = VideoTensor::new(1, 1, 2, data).unwrap();
        let path = dir.path().join("p.rgb");
        save_video(&v, &path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), vec![255, 0, 0, 0, 0, 255]);
    }

    #[test]
    fn sidecar_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.rgb");
        fs::write(&path, vec![0u8; 100]).unwrap();
        fs::write(dir.path().join("v.dims"), "2 4 4\n").unwrap();
        assert!(matches!(load_video(&path), Err(MediaError::Dimensions(_))));
        fs::write(dir.path().join("v.dims"), "2 4\n").unwrap();
        assert!(matches!(load_video(&path), Err(MediaError::Sidecar { .. })));
        fs::remove_file(dir.path().join("v.dims")).unwrap();
        assert!(matches!(load_video(&path), Err(MediaError::Io { .. })));
    }

    #[cfg(feature = "png")]
    #[test]
    fn png_dir_roundtrip_and_missing_frame() {
        let dir = tempfile::tempdir().unwrap();
        let v = random_8bit(10, 4, 6, 2);
        let frames = dir.path().join("frames");
        save_video(&v, &frames).unwrap();
        assert_eq!(load_video(&frames).unwrap(), v);
        fs::remove_file(frames.join("00005.png")).unwrap();
        match load_video(&frames) {
            Err(MediaError::MissingFrame { index, .. }) => assert_eq!(index, 5),
            other => panic!("expected missing frame, got {other:?}"),
        }
    }

    #[cfg(feature = "png")]
    #[test]
    fn png_dir_inconsistent_dims() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        save_video(&random_8bit(2, 4, 4, 3), &a).unwrap();
        let b = dir.path().join("b");
        save_video(&random_8bit(1, 5, 4, 3), &b).unwrap();
        fs::copy(b.join("00000.png"), a.join("00001.png")).unwrap();
        assert!(matches!(load_video(&a), Err(MediaError::Dimensions(_))));
    }
}
