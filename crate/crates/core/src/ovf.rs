//! OVF: a minimal little-endian binary container for dense grids.
//!
//! ```text
//! offset  size        field
//! 0       8           magic "OVF1\0\0\0\0"
//! 8       1           dtype code (1 = f32-le, 2 = u8)
//! 9       1           ndim (3 = volume/mask, 4 = channel-first logits/features)
//! 10      4           reserved, zero
//! 14      4·ndim      dims, u32-le each
//! ..      12          spacing, 3 × f32-le (z, y, x)
//! ..      payload     row-major, last axis fastest
//! ```
//!
//! Feature-stage tensors carry their downsample factor (in input voxels) in
//! the spacing field.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{
    Dims, FeaturePyramid, LogitVolume, MaskVolume, StageId, StageMap, Volume3D,
};

pub const MAGIC: [u8; 8] = *b"OVF1\0\0\0\0";
const FIXED_HEADER: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    U8,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 1,
            DType::U8 => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(DType::F32),
            2 => Ok(DType::U8),
            other => Err(Error::UnknownDtype(other)),
        }
    }

    fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

/// Untyped view of an OVF file; convert with the `into_*` methods.
#[derive(Debug, Clone, PartialEq)]
pub struct OvfTensor {
    pub dims: Vec<u32>,
    pub spacing: [f32; 3],
    pub payload: Payload,
}

impl OvfTensor {
    pub fn dtype(&self) -> DType {
        match self.payload {
            Payload::F32(_) => DType::F32,
            Payload::U8(_) => DType::U8,
        }
    }

    fn spatial(&self, ndim: usize) -> Result<Dims> {
        if self.dims.len() != ndim {
            return Err(Error::Shape(format!(
                "expected a {ndim}-d tensor, found {}-d",
                self.dims.len()
            )));
        }
        let d = &self.dims[ndim - 3..];
        Ok([d[0] as usize, d[1] as usize, d[2] as usize])
    }

    fn into_f32(self) -> Result<Vec<f32>> {
        match self.payload {
            Payload::F32(v) => Ok(v),
            Payload::U8(_) => Err(Error::Shape("expected f32 payload, found u8".into())),
        }
    }

    pub fn into_volume(self) -> Result<Volume3D> {
        let dims = self.spatial(3)?;
        let spacing = self.spacing;
        Volume3D::new(dims, spacing, self.into_f32()?)
    }

    pub fn into_mask(self) -> Result<MaskVolume> {
        let dims = self.spatial(3)?;
        match self.payload {
            Payload::U8(v) => MaskVolume::new(dims, v),
            Payload::F32(_) => Err(Error::Shape("expected u8 mask payload, found f32".into())),
        }
    }

    pub fn into_logits(self) -> Result<LogitVolume> {
        let dims = self.spatial(4)?;
        if self.dims[0] as usize != LogitVolume::CHANNELS {
            return Err(Error::Shape(format!(
                "logit tensor needs 2 channels, found {}",
                self.dims[0]
            )));
        }
        LogitVolume::new(dims, self.into_f32()?)
    }

    pub fn into_stage(self, stage: StageId) -> Result<StageMap> {
        let grid = self.spatial(4)?;
        let channels = self.dims[0] as usize;
        let factor = self.spacing[0];
        if !(factor >= 1.0 && factor.fract() == 0.0) || self.spacing.iter().any(|&s| s != factor)
        {
            return Err(Error::Shape(format!(
                "stage tensor spacing {:?} is not an integral downsample factor",
                self.spacing
            )));
        }
        StageMap::new(stage, factor as usize, channels, grid, self.into_f32()?)
    }
}

impl From<&Volume3D> for OvfTensor {
    fn from(v: &Volume3D) -> Self {
        OvfTensor {
            dims: v.dims().iter().map(|&d| d as u32).collect(),
            spacing: v.spacing(),
            payload: Payload::F32(v.data().to_vec()),
        }
    }
}

impl From<&MaskVolume> for OvfTensor {
    fn from(m: &MaskVolume) -> Self {
        OvfTensor {
            dims: m.dims().iter().map(|&d| d as u32).collect(),
            spacing: [1.0; 3],
            payload: Payload::U8(m.data().to_vec()),
        }
    }
}

impl From<&LogitVolume> for OvfTensor {
    fn from(l: &LogitVolume) -> Self {
        let mut dims = vec![LogitVolume::CHANNELS as u32];
        dims.extend(l.dims().iter().map(|&d| d as u32));
        OvfTensor {
            dims,
            spacing: [1.0; 3],
            payload: Payload::F32(l.data().to_vec()),
        }
    }
}

impl From<&StageMap> for OvfTensor {
    fn from(s: &StageMap) -> Self {
        let mut dims = vec![s.channels as u32];
        dims.extend(s.grid.iter().map(|&d| d as u32));
        OvfTensor {
            dims,
            spacing: [s.downsample as f32; 3],
            payload: Payload::F32(s.data.clone()),
        }
    }
}

/// Serialize to the in-memory OVF byte layout.
pub fn encode(t: &OvfTensor) -> Result<Vec<u8>> {
    if let Payload::F32(v) = &t.payload {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
    }
    let n: usize = t.dims.iter().map(|&d| d as usize).product();
    let len = match &t.payload {
        Payload::F32(v) => v.len(),
        Payload::U8(v) => v.len(),
    };
    if n != len {
        return Err(Error::PayloadLengthMismatch {
            expected: n,
            actual: len,
        });
    }
    let dtype = t.dtype();
    let mut out =
        Vec::with_capacity(FIXED_HEADER + 4 * t.dims.len() + 12 + n * dtype.width());
    out.extend_from_slice(&MAGIC);
    out.push(dtype.code());
    out.push(t.dims.len() as u8);
    out.extend_from_slice(&[0u8; 4]);
    for d in &t.dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for s in t.spacing {
        out.extend_from_slice(&s.to_le_bytes());
    }
    match &t.payload {
        Payload::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        Payload::U8(v) => out.extend_from_slice(v),
    }
    Ok(out)
}

/// Parse OVF bytes. `origin` is only used in error messages.
pub fn decode(bytes: &[u8], origin: &Path) -> Result<OvfTensor> {
    if bytes.len() < FIXED_HEADER || bytes[..8] != MAGIC {
        return Err(Error::BadMagic(origin.to_path_buf()));
    }
    let dtype = DType::from_code(bytes[8])?;
    let ndim = bytes[9] as usize;
    if !(ndim == 3 || ndim == 4) {
        return Err(Error::Shape(format!("unsupported ndim {ndim}")));
    }
    let header_len = FIXED_HEADER + 4 * ndim + 12;
    if bytes.len() < header_len {
        return Err(Error::Shape("truncated header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let dims: Vec<u32> = (0..ndim).map(|i| u32_at(FIXED_HEADER + 4 * i)).collect();
    let sp_off = FIXED_HEADER + 4 * ndim;
    let spacing = [0, 1, 2].map(|i| f32::from_bits(u32_at(sp_off + 4 * i)));

    let expected: usize = dims.iter().map(|&d| d as usize).product();
    let body = &bytes[header_len..];
    if body.len() % dtype.width() != 0 || body.len() / dtype.width() != expected {
        return Err(Error::PayloadLengthMismatch {
            expected,
            actual: body.len() / dtype.width(),
        });
    }
    let payload = match dtype {
        DType::F32 => Payload::F32(
            body.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        DType::U8 => Payload::U8(body.to_vec()),
    };
    Ok(OvfTensor {
        dims,
        spacing,
        payload,
    })
}

pub fn write_ovf(tensor: impl Into<OvfTensor>, path: &Path) -> Result<()> {
    let bytes = encode(&tensor.into())?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_ovf(path: &Path) -> Result<OvfTensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Check magic, dtype and payload size without decoding the payload.
pub fn validate_header(path: &Path) -> Result<()> {
    use std::io::Read;
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let total = file.metadata().map_err(|e| Error::io(path, e))?.len() as usize;
    let mut head = [0u8; FIXED_HEADER + 16];
    let got = file.read(&mut head).map_err(|e| Error::io(path, e))?;
    if got < FIXED_HEADER || head[..8] != MAGIC {
        return Err(Error::BadMagic(path.to_path_buf()));
    }
    let dtype = DType::from_code(head[8])?;
    let ndim = head[9] as usize;
    if !(ndim == 3 || ndim == 4) || got < FIXED_HEADER + 4 * ndim {
        return Err(Error::Shape(format!("bad header in {}", path.display())));
    }
    let expected: usize = (0..ndim)
        .map(|i| {
            let o = FIXED_HEADER + 4 * i;
            u32::from_le_bytes(head[o..o + 4].try_into().unwrap()) as usize
        })
        .product();
    let header_len = FIXED_HEADER + 4 * ndim + 12;
    let body = total.saturating_sub(header_len);
    if total < header_len || body != expected * dtype.width() {
        return Err(Error::PayloadLengthMismatch {
            expected,
            actual: body / dtype.width(),
        });
    }
    Ok(())
}

pub fn read_volume(path: &Path) -> Result<Volume3D> {
    read_ovf(path)?.into_volume()
}

pub fn read_mask(path: &Path) -> Result<MaskVolume> {
    read_ovf(path)?.into_mask()
}

pub fn read_logits(path: &Path) -> Result<LogitVolume> {
    read_ovf(path)?.into_logits()
}

/// Read the five stage files of a pyramid, given in `PE, SB1..SB4` order.
pub fn read_pyramid<P: AsRef<Path>>(paths: &[P], volume_dims: Dims) -> Result<FeaturePyramid> {
    if paths.len() != StageId::ALL.len() {
        return Err(Error::Shape(format!(
            "pyramid needs 5 stage files, got {}",
            paths.len()
        )));
    }
    let stages = paths
        .iter()
        .zip(StageId::ALL)
        .map(|(p, id)| read_ovf(p.as_ref())?.into_stage(id))
        .collect::<Result<Vec<_>>>()?;
    FeaturePyramid::new(volume_dims, stages)
}

pub fn write_pyramid<P: AsRef<Path>>(pyramid: &FeaturePyramid, paths: &[P]) -> Result<()> {
    if paths.len() != StageId::ALL.len() {
        return Err(Error::invalid("pyramid needs 5 stage paths"));
    }
    for (stage, p) in pyramid.stages().iter().zip(paths) {
        write_ovf(stage, p.as_ref())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_volume_byte_layout() {
        let v = Volume3D::new([1, 1, 1], [1.0; 3], vec![0.0]).unwrap();
        let bytes = encode(&OvfTensor::from(&v)).unwrap();
        // 8 magic + 1 dtype + 1 ndim + 4 reserved + 3*4 dims + 3*4 spacing + 4 payload
        assert_eq!(bytes.len(), 42);
        assert_eq!(&bytes[..8], b"OVF1\0\0\0\0");
        assert_eq!(bytes[8], 1);
        assert_eq!(bytes[9], 3);
        assert_eq!(&bytes[10..14], &[0, 0, 0, 0]);
        assert_eq!(&bytes[14..18], &1u32.to_le_bytes());
        assert_eq!(&bytes[26..30], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[38..42], &0.0f32.to_le_bytes());
    }

    #[test]
    fn nan_is_rejected_on_write() {
        let t = OvfTensor {
            dims: vec![1, 1, 1],
            spacing: [1.0; 3],
            payload: Payload::F32(vec![f32::NAN]),
        };
        let err = encode(&t).unwrap_err();
        assert_eq!(err.to_string(), "non-finite payload");
    }

    #[test]
    fn altered_magic_is_rejected() {
        let v = Volume3D::filled([2, 2, 2], [1.0; 3], 0.5).unwrap();
        let mut bytes = encode(&OvfTensor::from(&v)).unwrap();
        bytes[1] = b'X';
        let err = decode(&bytes, Path::new("x.ovf")).unwrap_err();
        assert!(err.to_string().contains("bad magic"));
    }

    #[test]
    fn short_payload_is_rejected() {
        let v = Volume3D::filled([2, 2, 2], [1.0; 3], 0.5).unwrap();
        let mut bytes = encode(&OvfTensor::from(&v)).unwrap();
        bytes.truncate(bytes.len() - 4);
        let err = decode(&bytes, Path::new("x.ovf")).unwrap_err();
        assert!(err.to_string().contains("payload length mismatch"));
        assert!(matches!(
            err,
            Error::PayloadLengthMismatch {
                expected: 8,
                actual: 7
            }
        ));
    }

    #[test]
    fn unknown_dtype_is_rejected() {
        let v = Volume3D::filled([1, 1, 1], [1.0; 3], 0.5).unwrap();
        let mut bytes = encode(&OvfTensor::from(&v)).unwrap();
        bytes[8] = 9;
        assert!(matches!(
            decode(&bytes, Path::new("x.ovf")),
            Err(Error::UnknownDtype(9))
        ));
    }

    #[test]
    fn pyramid_roundtrip_preserves_order_and_factors() {
        let dir = tempfile::tempdir().unwrap();
        let stages: Vec<StageMap> = StageId::ALL
            .iter()
            .enumerate()
            .map(|(i, &id)| {
                let f = 2usize << i;
                let g = 32usize.div_ceil(f);
                let c = 2 + i;
                let data = (0..c * g * g * g).map(|k| k as f32 * 0.25).collect();
                StageMap::new(id, f, c, [g; 3], data).unwrap()
            })
            .collect();
        let pyr = FeaturePyramid::new([32; 3], stages).unwrap();
        let paths: Vec<_> = (0..5).map(|i| dir.path().join(format!("s{i}.ovf"))).collect();
        write_pyramid(&pyr, &paths).unwrap();
        let back = read_pyramid(&paths, [32; 3]).unwrap();
        assert_eq!(back, pyr);
        let factors: Vec<_> = back.stages().iter().map(|s| s.downsample).collect();
        assert_eq!(factors, vec![2, 4, 8, 16, 32]);
    }

    #[test]
    fn header_validation_matches_decode() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.ovf");
        let v = Volume3D::filled([2, 3, 4], [1.0; 3], 0.5).unwrap();
        write_ovf(&v, &p).unwrap();
        validate_header(&p).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        bytes.pop();
        fs::write(&p, &bytes).unwrap();
        assert!(validate_header(&p).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn volume_roundtrip_is_bit_exact(
            dz in 1usize..5, dy in 1usize..5, dx in 1usize..5,
            seed in any::<u64>(),
            sp in prop::array::uniform3(0.1f32..4.0),
        ) {
            let mut rng = crate::rng::SplitMix64::new(seed);
            let n = dz * dy * dx;
            let data: Vec<f32> = (0..n).map(|_| (rng.normal() * 1e3) as f32).collect();
            let v = Volume3D::new([dz, dy, dx], sp, data).unwrap();
            let bytes = encode(&OvfTensor::from(&v)).unwrap();
            let back = decode(&bytes, Path::new("mem")).unwrap().into_volume().unwrap();
            prop_assert_eq!(back.dims(), v.dims());
            prop_assert_eq!(back.spacing().map(f32::to_bits), v.spacing().map(f32::to_bits));
            let a: Vec<u32> = back.data().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u32> = v.data().iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
