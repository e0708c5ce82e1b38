// SPDX-License-Identifier: Apache-2.0

//! On-disk tensor cache: a one-line JSON header followed by little-endian f32 data.

use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::zoo::checkpoint::sha256_hex;

#[derive(Serialize, Deserialize)]
struct Header {
    shape: Vec<usize>,
    #[serde(default)]
    meta: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct TensorCache {
    dir: PathBuf,
}

impl TensorCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        TensorCache { dir: dir.into() }
    }

    fn path(&self, key: &[&str]) -> PathBuf {
        self.dir.join(format!("{}.bin", &sha256_hex(key.join("\u{1f}").as_bytes())[..32]))
    }

    /// Returns the cached tensor and its integer metadata, computing and
    /// storing them on a miss.
    pub fn get_or_compute(
        &self,
        key: &[&str],
        compute: impl FnOnce() -> Result<(Tensor, Vec<usize>)>,
    ) -> Result<(Tensor, Vec<usize>)> {
        let path = self.path(key);
        if let Ok(hit) = read(&path) {
            return Ok(hit);
        }
        let (t, meta) = compute()?;
        write(&path, &t, &meta)?;
        Ok((t, meta))
    }
}

fn write(path: &Path, t: &Tensor, meta: &[usize]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let header = Header {
        shape: t.shape().to_vec(),
        meta: meta.to_vec(),
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    bytes.extend(t.data().iter().flat_map(|v| v.to_le_bytes()));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<(Tensor, Vec<usize>)> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(f);
    let mut line = String::new();
    r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    let header: Header = serde_json::from_str(line.trim_end())?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((Tensor::new(header.shape, data)?, header.meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_lookup_hits() {
        let dir = tempfile::tempdir().unwrap();
        let c = TensorCache::new(dir.path());
        let t = Tensor::new(vec![2, 2], vec![1.0, -2.0, 3.5, 0.0]).unwrap();
        let (a, m) = c.get_or_compute(&["k"], || Ok((t.clone(), vec![7]))).unwrap();
        let (b, m2) = c
            .get_or_compute(&["k"], || panic!("should be cached"))
            .unwrap();
        assert_eq!((a, m), (b, m2));
    }
}
