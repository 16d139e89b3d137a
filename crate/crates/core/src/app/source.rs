//! Frame sources.

use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::imagecore::{load_gray, GrayImage};

/// Image files in a directory, in lexicographic byte order of their names.
#[derive(Debug, Clone)]
pub struct DirectorySource {
    files: Vec<PathBuf>,
    next: usize,
}

fn is_frame(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("png"))
}

impl DirectorySource {
    pub fn open(dir: &Path) -> Result<Self> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .filter(|p| p.is_file() && is_frame(p))
            .collect();
        files.sort_by(|a, b| {
            let (a, b) = (a.file_name().unwrap_or_default(), b.file_name().unwrap_or_default());
            a.as_encoded_bytes().cmp(b.as_encoded_bytes())
        });
        Ok(Self { files, next: 0 })
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.files
    }
}

/// Frame index, origin path and the decoded image (or why it failed).
pub type SourceFrame = (u64, PathBuf, Result<GrayImage>);

impl Iterator for DirectorySource {
    type Item = SourceFrame;

    fn next(&mut self) -> Option<SourceFrame> {
        let path = self.files.get(self.next)?.clone();
        let idx = self.next as u64;
        self.next += 1;
        let img = load_gray(&path);
        Some((idx, path, img))
    }
}
