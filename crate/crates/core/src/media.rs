//! Video ingestion, uniform shot sampling and mosaic composition.
//!
//! Decoding is kept behind [`VideoSource`]. The stock implementation is
//! [`FrameDirectory`], which reads pre-extracted `frame_%06d.<ext>` files,
//! and [`InMemoryVideo`] covers tests and synthetic scenarios.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::imageops::{self, FilterType};
use image::RgbImage;
use rayon::prelude::*;
use thiserror::Error;

/// Video id carried by synthesized black frames. Real sources never use it.
pub const BLACK_VIDEO_ID: &str = "<black>";

/// Default shot count for long-video backends.
pub const DEFAULT_NUM_SHOTS: usize = 128;

/// Default number of consecutive shots folded into one mosaic.
pub const DEFAULT_GROUP_SIZE: usize = 4;

/// Default per-tile resolution, in pixels, after normalization.
pub const DEFAULT_TILE_SIZE: u32 = 336;

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("cannot read video source {path}: {reason}")]
    Ingestion { path: PathBuf, reason: String },
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// Width and height of a raster, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
}

impl Resolution {
    pub fn new(width: u32, height: u32) -> Result<Self, MediaError> {
        if width == 0 || height == 0 {
            return Err(MediaError::Argument(format!(
                "resolution must be positive, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn square(side: u32) -> Result<Self, MediaError> {
        Self::new(side, side)
    }

    fn of(image: &RgbImage) -> Self {
        Self {
            width: image.width(),
            height: image.height(),
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// One decoded frame of a video together with its position in the stream.
///
/// The raster is reference counted, so cloning a `FrameRef` (which the
/// sub-shot sequences do a lot) never copies pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRef {
    pub video_id: Arc<str>,
    pub index: usize,
    pub timestamp: f64,
    pub pixels: Arc<RgbImage>,
    /// Content labels. Only mock components look at these; production
    /// frames leave the set empty.
    pub tags: BTreeSet<String>,
}

impl FrameRef {
    pub fn resolution(&self) -> Resolution {
        Resolution::of(&self.pixels)
    }

    pub fn is_black_sentinel(&self) -> bool {
        &*self.video_id == BLACK_VIDEO_ID
    }
}

/// An ordered, non-empty run of shots sharing one resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotSequence {
    shots: Vec<FrameRef>,
    source: Arc<str>,
}

impl ShotSequence {
    pub fn new(source: impl Into<Arc<str>>, shots: Vec<FrameRef>) -> Result<Self, MediaError> {
        let Some(first) = shots.first() else {
            return Err(MediaError::Argument("shot sequence is empty".into()));
        };
        let resolution = first.resolution();
        let mut last_seen: HashMap<&str, f64> = HashMap::new();
        for (pos, shot) in shots.iter().enumerate() {
            if shot.resolution() != resolution {
                return Err(MediaError::Argument(format!(
                    "shot {pos} is {} but the sequence is {resolution}",
                    shot.resolution()
                )));
            }
            if shot.timestamp.is_nan() || shot.timestamp < 0.0 {
                return Err(MediaError::Argument(format!(
                    "shot {pos} has invalid timestamp {}",
                    shot.timestamp
                )));
            }
            let prev = last_seen.insert(&shot.video_id, shot.timestamp);
            if prev.is_some_and(|t| t > shot.timestamp) {
                return Err(MediaError::Argument(format!(
                    "shot {pos} of {} goes back in time",
                    shot.video_id
                )));
            }
        }
        Ok(Self {
            shots,
            source: source.into(),
        })
    }

    pub fn shots(&self) -> &[FrameRef] {
        &self.shots
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty()
    }

    pub fn resolution(&self) -> Resolution {
        self.shots[0].resolution()
    }

    pub fn get(&self, index: usize) -> Option<&FrameRef> {
        self.shots.get(index)
    }
}

/// A raw frame as produced by a [`VideoSource`].
#[derive(Debug, Clone)]
pub struct DecodedFrame {
    pub pixels: RgbImage,
    pub tags: BTreeSet<String>,
}

impl DecodedFrame {
    pub fn untagged(pixels: RgbImage) -> Self {
        Self {
            pixels,
            tags: BTreeSet::new(),
        }
    }
}

/// Anything that can hand out frames by position.
pub trait VideoSource: Sync {
    fn video_id(&self) -> &str;
    fn frame_count(&self) -> usize;
    /// Frames per second, when known.
    fn fps(&self) -> Option<f64>;
    fn decode_frame(&self, index: usize) -> Result<DecodedFrame, MediaError>;
}

/// Labels attached to frame files, keyed by path.
///
/// A key is either a path relative to the table's base directory or a bare
/// file name; relative paths win when both match.
#[derive(Debug, Clone, Default)]
pub struct TagTable {
    base_dir: PathBuf,
    entries: HashMap<PathBuf, BTreeSet<String>>,
}

impl TagTable {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        Self {
            base_dir: base_dir.into(),
            entries: HashMap::new(),
        }
    }

    pub fn insert(&mut self, key: impl Into<PathBuf>, tags: BTreeSet<String>) {
        self.entries.insert(key.into(), tags);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, frame_path: &Path) -> Option<&BTreeSet<String>> {
        let base = fs::canonicalize(&self.base_dir).unwrap_or_else(|_| self.base_dir.clone());
        let frame = fs::canonicalize(frame_path).unwrap_or_else(|_| frame_path.to_path_buf());
        if let Ok(rel) = frame.strip_prefix(&base) {
            if let Some(tags) = self.entries.get(rel) {
                return Some(tags);
            }
        }
        frame_path
            .file_name()
            .and_then(|name| self.entries.get(Path::new(name)))
    }
}

/// A directory of pre-extracted frames named `frame_%06d.<ext>`.
///
/// Files are ordered by their numeric suffix. An optional `fps.txt` holding
/// one decimal number supplies the frame rate.
#[derive(Debug, Clone)]
pub struct FrameDirectory {
    root: PathBuf,
    id: String,
    files: Vec<PathBuf>,
    fps: Option<f64>,
    tags: Option<Arc<TagTable>>,
}

impl FrameDirectory {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, MediaError> {
        let root = root.as_ref().to_path_buf();
        let ingest = |reason: String| MediaError::Ingestion {
            path: root.clone(),
            reason,
        };
        let entries = fs::read_dir(&root).map_err(|e| ingest(e.to_string()))?;
        let mut numbered = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| ingest(e.to_string()))?;
            let name = entry.file_name();
            if let Some(number) = name.to_str().and_then(parse_frame_name) {
                numbered.push((number, entry.path()));
            }
        }
        if numbered.is_empty() {
            return Err(ingest("no frame_%06d.<ext> files found".into()));
        }
        numbered.sort();

        let fps_path = root.join("fps.txt");
        let fps = if fps_path.exists() {
            let text = fs::read_to_string(&fps_path).map_err(|e| ingest(e.to_string()))?;
            let fps: f64 = text.trim().parse().map_err(|_| {
                ingest(format!("fps.txt does not hold a number: {:?}", text.trim()))
            })?;
            if !(fps > 0.0 && fps.is_finite()) {
                return Err(ingest(format!("fps must be positive, got {fps}")));
            }
            Some(fps)
        } else {
            None
        };

        Ok(Self {
            id: root.display().to_string(),
            root,
            files: numbered.into_iter().map(|(_, p)| p).collect(),
            fps,
            tags: None,
        })
    }

    pub fn with_tags(mut self, tags: Arc<TagTable>) -> Self {
        self.tags = Some(tags);
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn frame_path(&self, index: usize) -> Option<&Path> {
        self.files.get(index).map(PathBuf::as_path)
    }
}

fn parse_frame_name(name: &str) -> Option<u64> {
    let rest = name.strip_prefix("frame_")?;
    let (digits, ext) = rest.split_once('.')?;
    if digits.is_empty() || ext.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

impl VideoSource for FrameDirectory {
    fn video_id(&self) -> &str {
        &self.id
    }

    fn frame_count(&self) -> usize {
        self.files.len()
    }

    fn fps(&self) -> Option<f64> {
        self.fps
    }

    fn decode_frame(&self, index: usize) -> Result<DecodedFrame, MediaError> {
        let path = self.files.get(index).ok_or_else(|| {
            MediaError::Argument(format!(
                "frame {index} out of range for {} frames",
                self.files.len()
            ))
        })?;
        let pixels = image::open(path)
            .map_err(|e| MediaError::Ingestion {
                path: path.clone(),
                reason: e.to_string(),
            })?
            .to_rgb8();
        let tags = self
            .tags
            .as_ref()
            .and_then(|t| t.lookup(path))
            .cloned()
            .unwrap_or_default();
        Ok(DecodedFrame { pixels, tags })
    }
}

/// Frames held in memory; handy for tests and generated scenarios.
#[derive(Debug, Clone)]
pub struct InMemoryVideo {
    pub id: String,
    pub frames: Vec<DecodedFrame>,
    pub fps: Option<f64>,
}

impl VideoSource for InMemoryVideo {
    fn video_id(&self) -> &str {
        &self.id
    }

    fn frame_count(&self) -> usize {
        self.frames.len()
    }

    fn fps(&self) -> Option<f64> {
        self.fps
    }

    fn decode_frame(&self, index: usize) -> Result<DecodedFrame, MediaError> {
        self.frames
            .get(index)
            .cloned()
            .ok_or_else(|| MediaError::Argument(format!("frame {index} out of range")))
    }
}

/// Source positions picked by uniform sampling: `round(i * F / n)` clamped
/// to the last frame.
pub fn uniform_indices(frame_count: usize, n: usize) -> Vec<usize> {
    if frame_count == 0 {
        return Vec::new();
    }
    let (f, n64) = (frame_count as u128, n as u128);
    (0..n as u128)
        .map(|i| {
            // round half up, in exact integer arithmetic
            let idx = (2 * i * f + n64) / (2 * n64);
            (idx as usize).min(frame_count - 1)
        })
        .collect()
}

/// Uniformly samples `n` shots and optionally resizes them to `normalize`.
///
/// Timestamps come from the source frame rate, falling back to one frame per
/// second when the rate is unknown.
pub fn sample_shots(
    video: &dyn VideoSource,
    n: usize,
    normalize: Option<Resolution>,
) -> Result<ShotSequence, MediaError> {
    if n == 0 {
        return Err(MediaError::Argument("shot count must be at least 1".into()));
    }
    let frame_count = video.frame_count();
    if frame_count == 0 {
        return Err(MediaError::Ingestion {
            path: PathBuf::from(video.video_id()),
            reason: "video has no frames".into(),
        });
    }
    let fps = video.fps().unwrap_or(1.0);
    let id: Arc<str> = Arc::from(video.video_id());
    let shots = uniform_indices(frame_count, n)
        .into_par_iter()
        .map(|index| {
            let decoded = video.decode_frame(index)?;
            let pixels = match normalize {
                Some(res) if Resolution::of(&decoded.pixels) != res => {
                    imageops::resize(&decoded.pixels, res.width, res.height, FilterType::Triangle)
                }
                _ => decoded.pixels,
            };
            Ok(FrameRef {
                video_id: id.clone(),
                index,
                timestamp: index as f64 / fps,
                pixels: Arc::new(pixels),
                tags: decoded.tags,
            })
        })
        .collect::<Result<Vec<_>, MediaError>>()?;
    ShotSequence::new(id, shots)
}

/// Several consecutive shots laid out on one grid raster.
#[derive(Debug, Clone, PartialEq)]
pub struct MosaicImage {
    pub pixels: RgbImage,
    pub grid_rows: u32,
    pub grid_cols: u32,
    frames: Vec<FrameRef>,
    first: usize,
}

impl MosaicImage {
    /// Global shot indices covered by this mosaic, in temporal order.
    pub fn members(&self) -> Vec<usize> {
        (self.first..self.first + self.frames.len()).collect()
    }

    /// The member frames themselves (without padding tiles).
    pub fn member_frames(&self) -> &[FrameRef] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// `(rows, cols)` of the tile grid used for groups of `k` shots.
pub fn grid_shape(k: usize) -> (u32, u32) {
    let mut cols = (k as f64).sqrt().ceil() as usize;
    // guard against sqrt rounding on large perfect squares
    while cols * cols < k {
        cols += 1;
    }
    while cols > 1 && (cols - 1) * (cols - 1) >= k {
        cols -= 1;
    }
    let rows = k.div_ceil(cols);
    (rows as u32, cols as u32)
}

/// Folds every `k` consecutive shots into one grid image.
///
/// Tiles go row-major in temporal order. A short final group repeats its
/// last member to fill the grid. With `k = 1` each mosaic is the frame
/// itself.
pub fn compose_mosaics(shots: &ShotSequence, k: usize) -> Result<Vec<MosaicImage>, MediaError> {
    if k == 0 {
        return Err(MediaError::Argument("group size must be at least 1".into()));
    }
    if shots.is_empty() {
        return Err(MediaError::Argument(
            "cannot mosaic an empty sequence".into(),
        ));
    }
    let (rows, cols) = grid_shape(k);
    let tile = shots.resolution();
    let mosaics = shots
        .shots()
        .par_chunks(k)
        .enumerate()
        .map(|(group, chunk)| {
            let pixels = if k == 1 {
                (*chunk[0].pixels).clone()
            } else {
                let mut canvas = RgbImage::new(cols * tile.width, rows * tile.height);
                let last = chunk.last().expect("chunks are non-empty");
                for slot in 0..k {
                    let frame = chunk.get(slot).unwrap_or(last);
                    let (r, c) = (slot as u32 / cols, slot as u32 % cols);
                    imageops::replace(
                        &mut canvas,
                        &*frame.pixels,
                        (c * tile.width) as i64,
                        (r * tile.height) as i64,
                    );
                }
                canvas
            };
            MosaicImage {
                pixels,
                grid_rows: rows,
                grid_cols: cols,
                frames: chunk.to_vec(),
                first: group * k,
            }
        })
        .collect();
    Ok(mosaics)
}

/// An all-zero frame used where a negative sequence has nothing to draw on.
pub fn make_black_frame(height: u32, width: u32) -> Result<FrameRef, MediaError> {
    let resolution = Resolution::new(width, height)?;
    Ok(FrameRef {
        video_id: Arc::from(BLACK_VIDEO_ID),
        index: 0,
        timestamp: 0.0,
        pixels: Arc::new(RgbImage::new(resolution.width, resolution.height)),
        tags: BTreeSet::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    pub(crate) fn solid(w: u32, h: u32, v: u8) -> RgbImage {
        RgbImage::from_pixel(w, h, Rgb([v, v.wrapping_mul(3), v.wrapping_add(7)]))
    }

    fn video(count: usize) -> InMemoryVideo {
        InMemoryVideo {
            id: "v".into(),
            frames: (0..count)
                .map(|i| DecodedFrame::untagged(solid(4, 3, i as u8)))
                .collect(),
            fps: Some(2.0),
        }
    }

    #[test]
    fn uniform_identity_when_counts_match() {
        assert_eq!(uniform_indices(128, 128), (0..128).collect::<Vec<_>>());
    }

    #[test]
    fn uniform_quarter_points() {
        assert_eq!(uniform_indices(1000, 4), vec![0, 250, 500, 750]);
    }

    #[test]
    fn uniform_oversampling_duplicates_and_clamps() {
        let idx = uniform_indices(2, 5);
        assert_eq!(idx.len(), 5);
        assert!(idx.windows(2).all(|w| w[0] <= w[1]));
        assert!(idx.iter().all(|&i| i <= 1));
    }

    #[test]
    fn sample_rejects_zero() {
        assert!(matches!(
            sample_shots(&video(3), 0, None),
            Err(MediaError::Argument(_))
        ));
    }

    #[test]
    fn sample_sets_timestamps_from_fps() {
        let seq = sample_shots(&video(8), 4, None).unwrap();
        let ts: Vec<f64> = seq.shots().iter().map(|s| s.timestamp).collect();
        assert_eq!(ts, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn sample_normalizes_resolution() {
        let seq = sample_shots(&video(3), 3, Some(Resolution::square(5).unwrap())).unwrap();
        assert_eq!(seq.resolution(), Resolution::new(5, 5).unwrap());
    }

    #[test]
    fn missing_directory_names_the_path() {
        let err = FrameDirectory::open("/definitely/not/here").unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here"));
    }

    #[test]
    fn frame_names() {
        assert_eq!(parse_frame_name("frame_000012.png"), Some(12));
        assert_eq!(parse_frame_name("frame_.png"), None);
        assert_eq!(parse_frame_name("frame_12"), None);
        assert_eq!(parse_frame_name("thumb_000001.png"), None);
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(grid_shape(1), (1, 1));
        assert_eq!(grid_shape(2), (1, 2));
        assert_eq!(grid_shape(4), (2, 2));
        assert_eq!(grid_shape(5), (2, 3));
        assert_eq!(grid_shape(8), (3, 3));
        assert_eq!(grid_shape(16), (4, 4));
    }

    #[test]
    fn mosaics_for_default_setting() {
        let seq = sample_shots(&video(128), 128, None).unwrap();
        let mosaics = compose_mosaics(&seq, 4).unwrap();
        assert_eq!(mosaics.len(), 32);
        assert!(mosaics.iter().all(|m| (m.grid_rows, m.grid_cols) == (2, 2)));
        assert_eq!(mosaics[3].members(), vec![12, 13, 14, 15]);
    }

    #[test]
    fn partial_group_pads_with_last_member() {
        let seq = sample_shots(&video(5), 5, None).unwrap();
        let mosaics = compose_mosaics(&seq, 4).unwrap();
        assert_eq!(mosaics.len(), 2);
        assert_eq!(mosaics[1].members(), vec![4]);
        let tile = &seq.shots()[4].pixels;
        let m = &mosaics[1].pixels;
        for (ox, oy) in [(0, 0), (4, 0), (0, 3), (4, 3)] {
            for y in 0..3 {
                for x in 0..4 {
                    assert_eq!(m.get_pixel(ox + x, oy + y), tile.get_pixel(x, y));
                }
            }
        }
    }

    #[test]
    fn tiles_are_row_major() {
        let seq = sample_shots(&video(4), 4, None).unwrap();
        let m = &compose_mosaics(&seq, 4).unwrap()[0].pixels;
        assert_eq!(m.dimensions(), (8, 6));
        assert_eq!(m.get_pixel(0, 0), seq.shots()[0].pixels.get_pixel(0, 0));
        assert_eq!(m.get_pixel(4, 0), seq.shots()[1].pixels.get_pixel(0, 0));
        assert_eq!(m.get_pixel(0, 3), seq.shots()[2].pixels.get_pixel(0, 0));
        assert_eq!(m.get_pixel(4, 3), seq.shots()[3].pixels.get_pixel(0, 0));
    }

    #[test]
    fn single_shot_groups_are_unmodified() {
        let seq = sample_shots(&video(3), 3, None).unwrap();
        let mosaics = compose_mosaics(&seq, 1).unwrap();
        assert_eq!(mosaics.len(), 3);
        for (m, s) in mosaics.iter().zip(seq.shots()) {
            assert_eq!(&m.pixels, &*s.pixels);
        }
    }

    #[test]
    fn black_frame() {
        let a = make_black_frame(2, 2).unwrap();
        assert!(a.pixels.pixels().all(|p| p.0 == [0, 0, 0]));
        assert!(a.tags.is_empty());
        assert_eq!(a.timestamp, 0.0);
        assert!(a.is_black_sentinel());
        assert_eq!(a, make_black_frame(2, 2).unwrap());
        assert!(make_black_frame(0, 2).is_err());
        assert!(make_black_frame(2, 0).is_err());
    }

    #[test]
    fn sequence_rejects_mixed_resolution() {
        let a = make_black_frame(2, 2).unwrap();
        let b = make_black_frame(3, 2).unwrap();
        assert!(ShotSequence::new("x", vec![a, b]).is_err());
        assert!(ShotSequence::new("x", vec![]).is_err());
    }
}
