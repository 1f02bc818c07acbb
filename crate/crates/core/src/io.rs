//! On-disk formats: raw volumes, 16-bit slice images, CSV tables and a hashed manifest.
//!
//! Volume files start with the line `SWAVEVOL 1`, followed by one line of JSON
//! metadata and then the samples in little-endian order.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::volume::{Volume, C64};

const MAGIC: &str = "SWAVEVOL 1";

/// Sample types that can be stored in a volume file.
pub trait Sample: Sized + Copy {
    const TAG: &'static str;
    const SIZE: usize;
    fn put(&self, out: &mut Vec<u8>);
    fn get(bytes: &[u8]) -> Self;
}

impl Sample for f64 {
    const TAG: &'static str = "f64";
    const SIZE: usize = 8;
    fn put(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get(b: &[u8]) -> Self {
        f64::from_le_bytes(b.try_into().expect("8 bytes"))
    }
}

impl Sample for C64 {
    const TAG: &'static str = "c64";
    const SIZE: usize = 16;
    fn put(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.re.to_le_bytes());
        out.extend_from_slice(&self.im.to_le_bytes());
    }
    fn get(b: &[u8]) -> Self {
        C64::new(f64::get(&b[..8]), f64::get(&b[8..]))
    }
}

impl Sample for u8 {
    const TAG: &'static str = "u8";
    const SIZE: usize = 1;
    fn put(&self, out: &mut Vec<u8>) {
        out.push(*self);
    }
    fn get(b: &[u8]) -> Self {
        b[0]
    }
}

impl Sample for u16 {
    const TAG: &'static str = "u16";
    const SIZE: usize = 2;
    fn put(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get(b: &[u8]) -> Self {
        u16::from_le_bytes([b[0], b[1]])
    }
}

impl Sample for bool {
    const TAG: &'static str = "bool";
    const SIZE: usize = 1;
    fn put(&self, out: &mut Vec<u8>) {
        out.push(*self as u8);
    }
    fn get(b: &[u8]) -> Self {
        b[0] != 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dtype: String,
    pub dims: [usize; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Origin of displacement data: `oracle` or `tracked`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

impl VolumeHeader {
    pub fn new<T: Sample>(dims: [usize; 3]) -> Self {
        VolumeHeader { dtype: T::TAG.into(), dims, spacing: None, origin: None, name: None, provenance: None }
    }
}

/// Write `bytes` through a temporary sibling file and rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::Format(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn encode_volume<T: Sample>(vol: &Volume<T>, header: &VolumeHeader) -> Result<Vec<u8>> {
    if header.dtype != T::TAG || header.dims != vol.dims() {
        return Err(Error::Contract("volume header does not describe the data".into()));
    }
    let meta = serde_json::to_string(header).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(MAGIC.len() + meta.len() + 2 + vol.len() * T::SIZE);
    out.extend_from_slice(MAGIC.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(meta.as_bytes());
    out.push(b'\n');
    for v in vol.iter() {
        v.put(&mut out);
    }
    Ok(out)
}

pub fn write_volume<T: Sample>(path: &Path, vol: &Volume<T>, header: &VolumeHeader) -> Result<()> {
    write_atomic(path, &encode_volume(vol, header)?)
}

pub fn decode_volume<T: Sample>(bytes: &[u8]) -> Result<(Volume<T>, VolumeHeader)> {
    let mut rd = BufReader::new(bytes);
    let mut line = String::new();
    rd.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(Error::Format("not a volume file".into()));
    }
    line.clear();
    rd.read_line(&mut line)?;
    let header: VolumeHeader = serde_json::from_str(line.trim_end()).map_err(|e| Error::Format(e.to_string()))?;
    if header.dtype != T::TAG {
        return Err(Error::Format(format!("expected {} samples, file holds {}", T::TAG, header.dtype)));
    }
    let n: usize = header.dims.iter().product();
    let mut raw = Vec::new();
    rd.read_to_end(&mut raw)?;
    if raw.len() != n * T::SIZE {
        return Err(Error::Format(format!("expected {} data bytes, found {}", n * T::SIZE, raw.len())));
    }
    let data = raw.chunks_exact(T::SIZE).map(T::get).collect();
    Ok((Volume::from_vec(header.dims, data)?, header))
}

pub fn read_volume<T: Sample>(path: &Path) -> Result<(Volume<T>, VolumeHeader)> {
    decode_volume(&fs::read(path)?)
}

/// 16-bit grayscale image of slice `index` along `axis`, scaled to the masked range.
pub fn slice_png(vol: &Volume<f64>, mask: Option<&Volume<bool>>, axis: usize, index: usize) -> Result<Vec<u8>> {
    let d = vol.dims();
    if axis > 2 || index >= d[axis] {
        return Err(Error::Parameter(format!("slice {index} on axis {axis} is outside {d:?}")));
    }
    let (ra, ca) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let at = |r: usize, c: usize| {
        let mut p = [0usize; 3];
        p[axis] = index;
        p[ra] = r;
        p[ca] = c;
        p
    };
    let valid = |p: [usize; 3]| mask.is_none_or(|m| m[p]) && vol[p].is_finite();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in 0..d[ra] {
        for c in 0..d[ca] {
            let p = at(r, c);
            if valid(p) {
                lo = lo.min(vol[p]);
                hi = hi.max(vol[p]);
            }
        }
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_fn(d[ca] as u32, d[ra] as u32, |c, r| {
        let p = at(r as usize, c as usize);
        if !valid(p) {
            return image::Luma([0]);
        }
        image::Luma([(1.0 + (vol[p] - lo) / span * 65534.0).round().min(65535.0) as u16])
    });
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok(out.into_inner())
}

/// Serialize rows to CSV with a header line.
pub fn csv_bytes<R: Serialize>(rows: &[R]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Tracks every artifact written under an output directory.
#[derive(Clone, Debug, Default)]
pub struct ArtifactWriter {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
    written: Vec<PathBuf>,
}

impl ArtifactWriter {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(ArtifactWriter { root, entries: Vec::new(), written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(rel);
        write_atomic(&path, bytes)?;
        self.entries.push(ManifestEntry { path: rel.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_volume<T: Sample>(&mut self, rel: &str, vol: &Volume<T>, header: &VolumeHeader) -> Result<PathBuf> {
        let bytes = encode_volume(vol, header)?;
        self.write(rel, &bytes)
    }

    pub fn write_json<S: Serialize>(&mut self, rel: &str, value: &S) -> Result<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
        bytes.push(b'\n');
        self.write(rel, &bytes)
    }

    pub fn write_csv<R: Serialize>(&mut self, rel: &str, rows: &[R]) -> Result<PathBuf> {
        let bytes = csv_bytes(rows)?;
        self.write(rel, &bytes)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    /// Write `manifest.json` listing every artifact so far, sorted by path.
    pub fn finish(mut self) -> Result<Vec<ManifestEntry>> {
        let mut entries = self.entries.clone();
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        let mut bytes = serde_json::to_vec_pretty(&entries).map_err(|e| Error::Format(e.to_string()))?;
        bytes.push(b'\n');
        self.write("manifest.json", &bytes)?;
        Ok(entries)
    }
}
