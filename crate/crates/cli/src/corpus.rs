use std::path::{Path, PathBuf};

use intra_core::frame::write_pgm;
use intra_core::{load_frame, Frame, LumaFormat};

use crate::artifact::sha256_file;
use crate::error::{LabError, Result};
use crate::synth::{corpus_size, synth_frame};

const PICTURE_EXTENSIONS: [&str; 4] = ["pgm", "yuv", "raw", "y"];

/// A loaded corpus picture. Ids are positions in the sorted file list.
pub struct Picture {
    pub id: u32,
    pub path: PathBuf,
    pub hash: String,
    pub frame: Frame,
}

fn is_picture(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| PICTURE_EXTENSIONS.iter().any(|p| e.eq_ignore_ascii_case(p)))
}

/// Picture files named by `paths` (files, or directories scanned one level).
pub fn discover(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let entries = std::fs::read_dir(p).map_err(|e| LabError::io(p, e))?;
            for entry in entries {
                let path = entry.map_err(|e| LabError::io(p, e))?.path();
                if path.is_file() && is_picture(&path) {
                    files.push(path);
                }
            }
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            return Err(LabError::data(format!("corpus path {} does not exist", p.display())));
        }
    }
    files.sort();
    files.dedup();
    if files.is_empty() {
        return Err(LabError::data("corpus contains no pictures"));
    }
    Ok(files)
}

pub fn load_corpus(paths: &[PathBuf]) -> Result<Vec<Picture>> {
    discover(paths)?
        .into_iter()
        .enumerate()
        .map(|(i, path)| {
            let frame = load_frame(&path, LumaFormat::from_path(&path))
                .map_err(|e| LabError::data(format!("{}: {e}", path.display())))?;
            Ok(Picture {
                id: i as u32,
                hash: sha256_file(&path)?,
                path,
                frame,
            })
        })
        .collect()
}

/// Write `count` procedural pictures as `synth_NNN.pgm`.
pub fn generate_corpus(dir: &Path, count: usize, seed: u64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    (0..count)
        .map(|i| {
            let (w, h) = corpus_size(i);
            let frame = synth_frame(w, h, seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
            let path = dir.join(format!("synth_{i:03}.pgm"));
            write_pgm(&path, &frame).map_err(|e| LabError::data(e.to_string()))?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generate_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let files = generate_corpus(dir.path(), 3, 0).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let pics = load_corpus(&[dir.path().to_path_buf()]).unwrap();
        assert_eq!(pics.len(), 3);
        assert_eq!(pics[0].path, files[0]);
        assert_eq!(pics[2].id, 2);
        assert_eq!(pics[0].frame.width(), 128);
    }

    #[test]
    fn missing_and_empty_corpora_are_data_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(load_corpus(&[dir.path().to_path_buf()]).err().unwrap().exit_code(), 4);
        assert_eq!(load_corpus(&[dir.path().join("nope")]).err().unwrap().exit_code(), 4);
    }
}
