//! Corpus container format.
//!
//! Little-endian binary, fully determined by corpus content:
//!
//! ```text
//! magic   "LVTP" (4 bytes)
//! version u32 = 1
//! config  num_actions u32, num_function_words u32, clips_per_video u32,
//!         max_words_per_video u32, raw_dim u32, num_videos u32,
//!         group_min u32, group_max u32,
//!         noise_sigma f64, content_word_rate f64,
//!         pos_strength_video f64, pos_strength_word f64,
//!         mixer_coupling f64, seed u64
//! mixers  2 x (rows u32, cols u32, rows*cols f64)          E_v then E_w
//! videos  count u32, then per video:
//!         clip count u32, clip action ids u32 each
//!         clip_raw rows u32, cols u32, f64 data
//!         word count u32, word ids u32 each
//!         word_raw rows u32, cols u32, f64 data
//!         word_is_content u8 each (0/1)
//!         per clip: gt length u32, gt word positions u32 each
//! ```
//!
//! All floats are 64-bit. A human-readable sidecar `<stem>.meta.json` echoes
//! the config and generation statistics.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffmath::Tensor;

use super::{Corpus, CorpusConfig, CorpusError, CorpusStats, VideoSample};

pub const MAGIC: &[u8; 4] = b"LVTP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct MetaSidecar {
    format_version: u32,
    config: CorpusConfig,
    stats: CorpusStats,
}

struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    fn new() -> Self {
        ByteWriter { buf: Vec::new() }
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn tensor(&mut self, t: &Tensor) {
        self.u32(t.rows() as u32);
        self.u32(t.cols() as u32);
        for &v in t.data() {
            self.f64(v);
        }
    }
}

struct ByteReader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> ByteReader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, at: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8], CorpusError> {
        if self.at + n > self.buf.len() {
            return Err(CorpusError::Truncated);
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, CorpusError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CorpusError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, CorpusError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u8(&mut self) -> Result<u8, CorpusError> {
        Ok(self.take(1)?[0])
    }
    /// Length-sanity guard so corrupt counts cannot ask for absurd buffers.
    fn checked_len(&self, n: u32, elem_bytes: usize) -> Result<usize, CorpusError> {
        let n = n as usize;
        if n.saturating_mul(elem_bytes) > self.buf.len() {
            return Err(CorpusError::Truncated);
        }
        Ok(n)
    }
    fn tensor(&mut self) -> Result<Tensor, CorpusError> {
        let rows = self.u32()?;
        let cols = self.u32()?;
        let rows = self.checked_len(rows, 8)?;
        let cols = self.checked_len(cols as u32, 8)?;
        let numel = rows
            .checked_mul(cols)
            .ok_or(CorpusError::Truncated)?;
        if numel.saturating_mul(8) > self.buf.len() {
            return Err(CorpusError::Truncated);
        }
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(self.f64()?);
        }
        if rows == 0 || cols == 0 {
            return Err(CorpusError::Invalid("zero-sized tensor block".into()));
        }
        Ok(Tensor::new(vec![rows, cols], data))
    }
    fn done(&self) -> bool {
        self.at == self.buf.len()
    }
}

fn encode(corpus: &Corpus) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.buf.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    let c = &corpus.config;
    w.u32(c.num_actions as u32);
    w.u32(c.num_function_words as u32);
    w.u32(c.clips_per_video as u32);
    w.u32(c.max_words_per_video as u32);
    w.u32(c.raw_dim as u32);
    w.u32(c.num_videos as u32);
    w.u32(c.group_min as u32);
    w.u32(c.group_max as u32);
    w.f64(c.noise_sigma);
    w.f64(c.content_word_rate);
    w.f64(c.pos_strength_video);
    w.f64(c.pos_strength_word);
    w.f64(c.mixer_coupling);
    w.u64(c.seed);
    w.tensor(&corpus.mixer_video);
    w.tensor(&corpus.mixer_word);
    w.u32(corpus.videos.len() as u32);
    for v in &corpus.videos {
        w.u32(v.clip_actions.len() as u32);
        for &a in &v.clip_actions {
            w.u32(a);
        }
        w.tensor(&v.clip_raw);
        w.u32(v.word_ids.len() as u32);
        for &id in &v.word_ids {
            w.u32(id);
        }
        w.tensor(&v.word_raw);
        for &content in &v.word_is_content {
            w.u8(content as u8);
        }
        for gt in &v.gt_align {
            w.u32(gt.len() as u32);
            for &s in gt {
                w.u32(s);
            }
        }
    }
    w.buf
}

fn decode(bytes: &[u8]) -> Result<Corpus, CorpusError> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(CorpusError::BadMagic);
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CorpusError::UnsupportedVersion { found: version });
    }
    let config = CorpusConfig {
        num_actions: r.u32()? as usize,
        num_function_words: r.u32()? as usize,
        clips_per_video: r.u32()? as usize,
        max_words_per_video: r.u32()? as usize,
        raw_dim: r.u32()? as usize,
        num_videos: r.u32()? as usize,
        group_min: r.u32()? as usize,
        group_max: r.u32()? as usize,
        noise_sigma: r.f64()?,
        content_word_rate: r.f64()?,
        pos_strength_video: r.f64()?,
        pos_strength_word: r.f64()?,
        mixer_coupling: r.f64()?,
        seed: r.u64()?,
    };
    let mixer_video = r.tensor()?;
    let mixer_word = r.tensor()?;
    let count = r.u32()?;
    let count = r.checked_len(count, 16)?;
    let mut videos = Vec::with_capacity(count);
    for _ in 0..count {
        let t = r.u32()?;
        let t = r.checked_len(t as u32, 4)?;
        let mut clip_actions = Vec::with_capacity(t);
        for _ in 0..t {
            clip_actions.push(r.u32()?);
        }
        let clip_raw = r.tensor()?;
        let s = r.u32()?;
        let s = r.checked_len(s as u32, 4)?;
        let mut word_ids = Vec::with_capacity(s);
        for _ in 0..s {
            word_ids.push(r.u32()?);
        }
        let word_raw = r.tensor()?;
        let mut word_is_content = Vec::with_capacity(s);
        for _ in 0..s {
            word_is_content.push(match r.u8()? {
                0 => false,
                1 => true,
                other => {
                    return Err(CorpusError::Invalid(format!(
                        "word_is_content byte {other} is not 0/1"
                    )))
                }
            });
        }
        let mut gt_align = Vec::with_capacity(t);
        for _ in 0..t {
            let len = r.u32()?;
            let len = r.checked_len(len, 4)?;
            let mut gt = Vec::with_capacity(len);
            for _ in 0..len {
                gt.push(r.u32()?);
            }
            gt_align.push(gt);
        }
        videos.push(VideoSample {
            clip_actions,
            clip_raw,
            word_ids,
            word_raw,
            word_is_content,
            gt_align,
        });
    }
    if !r.done() {
        return Err(CorpusError::Invalid("trailing bytes after payload".into()));
    }
    let mut corpus = Corpus {
        config,
        mixer_video,
        mixer_word,
        videos,
        stats: CorpusStats::default(),
    };
    corpus.validate()?;
    corpus.stats = super::measure_stats(&corpus);
    Ok(corpus)
}

/// Path of the metadata sidecar for a corpus path.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".to_string());
    path.with_file_name(format!("{stem}.meta.json"))
}

/// Write the binary container plus the `.meta.json` sidecar.
pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    corpus.validate()?;
    fs::write(path, encode(corpus))?;
    let meta = MetaSidecar {
        format_version: FORMAT_VERSION,
        config: corpus.config.clone(),
        stats: corpus.stats.clone(),
    };
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| CorpusError::Invalid(format!("sidecar encode: {e}")))?;
    fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

/// Inverse of [`write_corpus`]; validates header and structural invariants.
pub fn read_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let bytes = fs::read(path)?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, CorpusConfig};

    fn tmpdir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "vtalign-io-{tag}-{}",
            std::process::id()
        ));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn small_corpus() -> Corpus {
        generate_corpus(&CorpusConfig {
            num_actions: 12,
            num_function_words: 2,
            clips_per_video: 4,
            max_words_per_video: 16,
            raw_dim: 16,
            noise_sigma: 0.1,
            num_videos: 6,
            content_word_rate: 0.8,
            group_min: 2,
            group_max: 3,
            pos_strength_video: 0.4,
            pos_strength_word: 0.4,
            mixer_coupling: 0.5,
            seed: 99,
        })
        .unwrap()
    }

    #[test]
    fn roundtrip_preserves_every_bit() {
        let dir = tmpdir("roundtrip");
        let path = dir.join("c.lvtp");
        let corpus = small_corpus();
        write_corpus(&corpus, &path).unwrap();
        let loaded = read_corpus(&path).unwrap();
        assert_eq!(corpus.config, loaded.config);
        assert_eq!(corpus.mixer_video, loaded.mixer_video);
        assert_eq!(corpus.videos, loaded.videos);
        // Write the loaded corpus again: bytes must match exactly.
        let path2 = dir.join("c2.lvtp");
        write_corpus(&loaded, &path2).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
        assert!(sidecar_path(&path).exists());
    }

    #[test]
    fn same_corpus_written_twice_is_identical() {
        let dir = tmpdir("twice");
        let a = dir.join("a.lvtp");
        let b = dir.join("b.lvtp");
        let corpus = small_corpus();
        write_corpus(&corpus, &a).unwrap();
        write_corpus(&corpus, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn corrupted_magic_is_a_format_error() {
        let dir = tmpdir("magic");
        let path = dir.join("bad.lvtp");
        write_corpus(&small_corpus(), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_corpus(&path), Err(CorpusError::BadMagic)));
    }

    #[test]
    fn bumped_version_is_rejected() {
        let dir = tmpdir("version");
        let path = dir.join("v.lvtp");
        write_corpus(&small_corpus(), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_corpus(&path),
            Err(CorpusError::UnsupportedVersion { found: 2 })
        ));
    }

    #[test]
    fn truncated_payload_is_detected() {
        let dir = tmpdir("trunc");
        let path = dir.join("t.lvtp");
        write_corpus(&small_corpus(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(read_corpus(&path), Err(CorpusError::Truncated)));
    }

    #[test]
    fn tampered_gt_fails_validation() {
        let dir = tmpdir("gt");
        let path = dir.join("g.lvtp");
        let mut corpus = small_corpus();
        // Point clip 0's ground truth at a wrong word.
        let v = &mut corpus.videos[0];
        let wrong = (0..v.num_words() as u32)
            .find(|s| !v.gt_align[0].contains(s))
            .unwrap();
        v.gt_align[0] = vec![wrong];
        // write_corpus validates too, so encode manually.
        fs::write(&path, super::encode(&corpus)).unwrap();
        assert!(matches!(read_corpus(&path), Err(CorpusError::Invalid(_))));
    }
}
