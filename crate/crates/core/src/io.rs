//! Array files: 8-byte magic `DMOLARR1`, little-endian u64 header length,
//! JSON header, raw little-endian payload. Writes go to a temporary file in
//! the target directory and are renamed into place.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dissoc::JointAmplitude;
use crate::error::{Error, Result};
use crate::grid::Grid1D;

pub const MAGIC: &[u8; 8] = b"DMOLARR1";

/// Build identifier recorded in every header.
pub fn build_id() -> String {
    option_env!("DMOLSIM_GIT_DESCRIBE").map_or_else(|| format!("v{}", env!("CARGO_PKG_VERSION")), str::to_string)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    C128,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::C128 => 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayHeader {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub units: String,
    pub config_hash: String,
    pub git_describe: String,
    /// Free-form metadata such as grids.
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl ArrayHeader {
    pub fn new(dtype: Dtype, shape: Vec<usize>, units: &str, config_hash: &str) -> Self {
        ArrayHeader { dtype, shape, units: units.into(), config_hash: config_hash.into(), git_describe: build_id(), meta: serde_json::Value::Null }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F64(Vec<f64>),
    C128(Vec<Complex64>),
}

impl ArrayData {
    pub fn dtype(&self) -> Dtype {
        match self {
            ArrayData::F64(_) => Dtype::F64,
            ArrayData::C128(_) => Dtype::C128,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArrayData::F64(v) => v.len(),
            ArrayData::C128(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn encode(header: &ArrayHeader, data: &ArrayData) -> Result<Vec<u8>> {
    if header.dtype != data.dtype() || header.len() != data.len() {
        return Err(Error::invalid(format!(
            "header {:?} {:?} does not describe {} {:?} values",
            header.dtype,
            header.shape,
            data.len(),
            data.dtype()
        )));
    }
    let json = serde_json::to_vec(header).map_err(|e| Error::invalid(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + json.len() + data.len() * header.dtype.size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    match data {
        ArrayData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        ArrayData::C128(v) => v.iter().for_each(|z| {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }),
    }
    Ok(out)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(ArrayHeader, ArrayData)> {
    let fail = |m: &str| Error::Format { path: path.to_path_buf(), message: m.to_string() };
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(fail("bad magic"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16usize.checked_add(hlen).ok_or_else(|| fail("header length overflows"))?).ok_or_else(|| fail("truncated header"))?;
    let header: ArrayHeader = serde_json::from_slice(body).map_err(|e| fail(&format!("corrupted header: {e}")))?;
    let payload = &bytes[16 + hlen..];
    let n = header.shape.iter().try_fold(1usize, |a, &b| a.checked_mul(b)).ok_or_else(|| fail("shape overflows"))?;
    let expected = n.checked_mul(header.dtype.size()).ok_or_else(|| fail("shape overflows"))?;
    if payload.len() != expected {
        return Err(fail(&format!("payload holds {} bytes, shape {:?} {:?} needs {expected}", payload.len(), header.shape, header.dtype)));
    }
    let f = |c: &[u8]| f64::from_le_bytes(c.try_into().expect("8 bytes"));
    let data = match header.dtype {
        Dtype::F64 => ArrayData::F64(payload.chunks_exact(8).map(f).collect()),
        Dtype::C128 => ArrayData::C128(payload.chunks_exact(16).map(|c| Complex64::new(f(&c[..8]), f(&c[8..]))).collect()),
    };
    Ok((header, data))
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().ok_or_else(|| Error::invalid(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn write_array(path: &Path, header: &ArrayHeader, data: &ArrayData) -> Result<()> {
    write_atomic(path, &encode(header, data)?)
}

pub fn read_array(path: &Path) -> Result<(ArrayHeader, ArrayData)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct JointMeta {
    px: Grid1D,
    py: Option<Grid1D>,
    k: Grid1D,
    reduced_mass: f64,
    layout: String,
}

/// Joint amplitude file: `c128` array `[channel][px]([py])[K]`, momenta in
/// a.u.
pub fn write_joint(path: &Path, joint: &JointAmplitude, config_hash: &str, extra: serde_json::Value) -> Result<()> {
    let mut h = ArrayHeader::new(Dtype::C128, joint.shape(), "amplitude [a.u.]", config_hash);
    let meta = JointMeta { px: joint.px, py: joint.py, k: joint.k, reduced_mass: joint.reduced_mass, layout: "channel(g,u), px, [py], K".into() };
    let mut m = serde_json::to_value(meta).map_err(|e| Error::invalid(e.to_string()))?;
    if let (Some(obj), serde_json::Value::Object(x)) = (m.as_object_mut(), extra) {
        obj.extend(x);
    }
    h.meta = m;
    write_array(path, &h, &ArrayData::C128(joint.data.clone()))
}

pub fn read_joint(path: &Path) -> Result<(JointAmplitude, ArrayHeader)> {
    let (h, data) = read_array(path)?;
    let fail = |m: String| Error::Format { path: path.to_path_buf(), message: m };
    let ArrayData::C128(data) = data else {
        return Err(fail("joint amplitude must be complex".into()));
    };
    let meta: JointMeta = serde_json::from_value(h.meta.clone()).map_err(|e| fail(format!("joint metadata: {e}")))?;
    let joint = JointAmplitude::new(meta.px, meta.py, meta.k, meta.reduced_mass, data).map_err(|e| fail(e.to_string()))?;
    if joint.shape() != h.shape {
        return Err(fail(format!("shape {:?} does not match the grids {:?}", h.shape, joint.shape())));
    }
    Ok((joint, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_array_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.bin");
        let h = ArrayHeader::new(Dtype::F64, vec![0, 3], "", "h");
        write_array(&p, &h, &ArrayData::F64(vec![])).unwrap();
        let (h2, d2) = read_array(&p).unwrap();
        assert_eq!(h, h2);
        assert!(d2.is_empty());
    }

    #[test]
    fn random_complex_3d_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<Complex64> = (0..4 * 5 * 6).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random_range(-1e300..1e300))).collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bin");
        write_array(&p, &ArrayHeader::new(Dtype::C128, vec![4, 5, 6], "a.u.", "abc"), &ArrayData::C128(v.clone())).unwrap();
        let first = fs::read(&p).unwrap();
        let (_, d) = read_array(&p).unwrap();
        let ArrayData::C128(w) = d else { panic!() };
        assert!(v.iter().zip(&w).all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits()));
        // re-encoding reproduces the file byte for byte
        let (h, d) = decode(&first, &p).unwrap();
        assert_eq!(encode(&h, &d).unwrap(), first);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn corrupted_files_fail() {
        let h = ArrayHeader::new(Dtype::F64, vec![2], "", "");
        let good = encode(&h, &ArrayData::F64(vec![1.0, 2.0])).unwrap();
        let p = Path::new("x");
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad, p), Err(Error::Format { .. })));
        let mut bad = good.clone();
        bad[17] = b'#';
        assert!(decode(&bad, p).is_err());
        assert!(decode(&good[..good.len() - 1], p).is_err());
        assert!(decode(&good[..12], p).is_err());
        assert!(encode(&h, &ArrayData::F64(vec![1.0])).is_err());
        assert!(encode(&h, &ArrayData::C128(vec![Complex64::new(0.0, 0.0); 2])).is_err());
    }

    #[test]
    fn joint_round_trip() {
        let px = Grid1D::new(-1.0, 5, 0.5).unwrap();
        let k = Grid1D::new(1.0, 3, 1.0).unwrap();
        let mut j = JointAmplitude::zeros(px, None, k, 1835.24).unwrap();
        j.data.iter_mut().enumerate().for_each(|(i, z)| *z = Complex64::new(i as f64, -(i as f64)));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("joint.bin");
        write_joint(&p, &j, "hash", serde_json::json!({"cep_rad": 0.0})).unwrap();
        let (back, h) = read_joint(&p).unwrap();
        assert_eq!(back, j);
        assert_eq!(h.config_hash, "hash");
        assert_eq!(h.meta["cep_rad"], 0.0);
    }
}
