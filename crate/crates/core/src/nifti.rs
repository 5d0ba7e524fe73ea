//! Single-file NIfTI-1 (`.nii` / `.nii.gz`) reading and writing for label masks.
//!
//! Orientation fields (qform/sform) are parsed but not applied: masks are
//! assumed to be already aligned to the template space, so array axes are
//! used directly.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::grid::{VoxelGrid, MAX_LABEL};

pub const HEADER_SIZE: usize = 348;
/// Data offset used when writing: header plus the 4-byte extension flag.
pub const DEFAULT_VOX_OFFSET: usize = 352;
pub const MAGIC_SINGLE_FILE: [u8; 4] = *b"n+1\0";
const GZIP_MAGIC: [u8; 2] = [0x1F, 0x8B];

/// NIfTI datatype codes accepted for label volumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    Uint8,
    Int16,
    Int32,
    Int8,
    Uint16,
}

impl Datatype {
    pub fn from_code(code: i16) -> Result<Self> {
        Ok(match code {
            2 => Datatype::Uint8,
            4 => Datatype::Int16,
            8 => Datatype::Int32,
            256 => Datatype::Int8,
            512 => Datatype::Uint16,
            other => return Err(Error::UnsupportedDatatype(other)),
        })
    }

    pub fn code(self) -> i16 {
        match self {
            Datatype::Uint8 => 2,
            Datatype::Int16 => 4,
            Datatype::Int32 => 8,
            Datatype::Int8 => 256,
            Datatype::Uint16 => 512,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Datatype::Uint8 | Datatype::Int8 => 1,
            Datatype::Int16 | Datatype::Uint16 => 2,
            Datatype::Int32 => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endianness {
    Little,
    Big,
}

/// The NIfTI-1 header fields this crate reads or writes.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub sizeof_hdr: i32,
    pub dim_info: u8,
    pub dim: [i16; 8],
    pub intent_code: i16,
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub xyzt_units: u8,
    pub descrip: [u8; 80],
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub srow_x: [f32; 4],
    pub srow_y: [f32; 4],
    pub srow_z: [f32; 4],
    pub magic: [u8; 4],
    pub endianness: Endianness,
}

impl NiftiHeader {
    /// Header for a uint8 label volume with the given grid geometry.
    pub fn for_grid(grid: &VoxelGrid) -> Result<Self> {
        let d = grid.dims();
        let mut dim = [1i16; 8];
        dim[0] = 3;
        for axis in 0..3 {
            dim[axis + 1] = i16::try_from(d[axis])
                .map_err(|_| Error::InvalidGrid(format!("axis {axis} length {} exceeds NIfTI-1 limits", d[axis])))?;
        }
        let s = grid.spacing();
        let mut pixdim = [1.0f32; 8];
        pixdim[0] = 1.0;
        pixdim[1] = s[0] as f32;
        pixdim[2] = s[1] as f32;
        pixdim[3] = s[2] as f32;
        let mut descrip = [0u8; 80];
        let text = b"lesion label mask";
        descrip[..text.len()].copy_from_slice(text);
        Ok(Self {
            sizeof_hdr: HEADER_SIZE as i32,
            dim_info: 0,
            dim,
            intent_code: 1002, // NIFTI_INTENT_LABEL
            datatype: Datatype::Uint8.code(),
            bitpix: 8,
            pixdim,
            vox_offset: DEFAULT_VOX_OFFSET as f32,
            scl_slope: 1.0,
            scl_inter: 0.0,
            xyzt_units: 2, // NIFTI_UNITS_MM
            descrip,
            qform_code: 0,
            sform_code: 1,
            quatern: [0.0; 3],
            qoffset: [0.0; 3],
            srow_x: [pixdim[1], 0.0, 0.0, 0.0],
            srow_y: [0.0, pixdim[2], 0.0, 0.0],
            srow_z: [0.0, 0.0, pixdim[3], 0.0],
            magic: MAGIC_SINGLE_FILE,
            endianness: Endianness::Little,
        })
    }

    /// Parse and validate the 348-byte header. Byte order is inferred from
    /// `sizeof_hdr`.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_SIZE {
            return Err(Error::Truncated { expected: HEADER_SIZE, found: bytes.len() });
        }
        let le = LittleEndian::read_i32(&bytes[0..4]);
        let header = if le == HEADER_SIZE as i32 {
            Self::parse_with::<LittleEndian>(bytes, Endianness::Little)
        } else if BigEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
            Self::parse_with::<BigEndian>(bytes, Endianness::Big)
        } else {
            return Err(Error::HeaderSize(le));
        };
        header.validate()?;
        Ok(header)
    }

    fn parse_with<B: ByteOrder>(b: &[u8], endianness: Endianness) -> Self {
        let i16_at = |off: usize| B::read_i16(&b[off..off + 2]);
        let f32_at = |off: usize| B::read_f32(&b[off..off + 4]);
        let f32s = |off: usize, out: &mut [f32]| {
            for (i, v) in out.iter_mut().enumerate() {
                *v = f32_at(off + 4 * i);
            }
        };
        let mut dim = [0i16; 8];
        for (i, d) in dim.iter_mut().enumerate() {
            *d = i16_at(40 + 2 * i);
        }
        let mut pixdim = [0f32; 8];
        f32s(76, &mut pixdim);
        let mut descrip = [0u8; 80];
        descrip.copy_from_slice(&b[148..228]);
        let mut quatern = [0f32; 3];
        f32s(256, &mut quatern);
        let mut qoffset = [0f32; 3];
        f32s(268, &mut qoffset);
        let mut srow_x = [0f32; 4];
        f32s(280, &mut srow_x);
        let mut srow_y = [0f32; 4];
        f32s(296, &mut srow_y);
        let mut srow_z = [0f32; 4];
        f32s(312, &mut srow_z);
        let mut magic = [0u8; 4];
        magic.copy_from_slice(&b[344..348]);
        Self {
            sizeof_hdr: B::read_i32(&b[0..4]),
            dim_info: b[39],
            dim,
            intent_code: i16_at(68),
            datatype: i16_at(70),
            bitpix: i16_at(72),
            pixdim,
            vox_offset: f32_at(108),
            scl_slope: f32_at(112),
            scl_inter: f32_at(116),
            xyzt_units: b[123],
            descrip,
            qform_code: i16_at(252),
            sform_code: i16_at(254),
            quatern,
            qoffset,
            srow_x,
            srow_y,
            srow_z,
            magic,
            endianness,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.sizeof_hdr != HEADER_SIZE as i32 {
            return Err(Error::HeaderSize(self.sizeof_hdr));
        }
        if self.magic != MAGIC_SINGLE_FILE {
            return Err(Error::BadMagic(self.magic));
        }
        if self.dim[0] != 3 {
            return Err(Error::NotThreeDimensional(self.dim[0]));
        }
        if self.dim[1..4].iter().any(|&d| d <= 0) {
            return Err(Error::InvalidHeader(format!("non-positive dimensions {:?}", &self.dim[1..4])));
        }
        Datatype::from_code(self.datatype)?;
        let offset = self.vox_offset;
        if !offset.is_finite() || offset < DEFAULT_VOX_OFFSET as f32 || offset.fract() != 0.0 {
            return Err(Error::InvalidHeader(format!("vox_offset {offset} is invalid for a single-file volume")));
        }
        for (axis, &p) in self.pixdim[1..4].iter().enumerate() {
            if !p.is_finite() || p == 0.0 {
                return Err(Error::InvalidHeader(format!("pixdim[{}] = {p}", axis + 1)));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.dim[1] as usize, self.dim[2] as usize, self.dim[3] as usize]
    }

    /// Voxel spacing in mm. Negative pixdim values encode orientation and are
    /// taken by absolute value.
    pub fn spacing(&self) -> [f64; 3] {
        [
            f64::from(self.pixdim[1].abs()),
            f64::from(self.pixdim[2].abs()),
            f64::from(self.pixdim[3].abs()),
        ]
    }

    /// Serialize to exactly 348 bytes in the header's byte order.
    pub fn to_bytes(&self) -> [u8; HEADER_SIZE] {
        match self.endianness {
            Endianness::Little => self.write_with::<LittleEndian>(),
            Endianness::Big => self.write_with::<BigEndian>(),
        }
    }

    fn write_with<B: ByteOrder>(&self) -> [u8; HEADER_SIZE] {
        let mut b = [0u8; HEADER_SIZE];
        B::write_i32(&mut b[0..4], self.sizeof_hdr);
        b[38] = b'r';
        b[39] = self.dim_info;
        for (i, &d) in self.dim.iter().enumerate() {
            B::write_i16(&mut b[40 + 2 * i..42 + 2 * i], d);
        }
        B::write_i16(&mut b[68..70], self.intent_code);
        B::write_i16(&mut b[70..72], self.datatype);
        B::write_i16(&mut b[72..74], self.bitpix);
        let mut put_f32s = |off: usize, vals: &[f32]| {
            for (i, &v) in vals.iter().enumerate() {
                B::write_f32(&mut b[off + 4 * i..off + 4 * i + 4], v);
            }
        };
        put_f32s(76, &self.pixdim);
        put_f32s(108, &[self.vox_offset, self.scl_slope, self.scl_inter]);
        put_f32s(256, &self.quatern);
        put_f32s(268, &self.qoffset);
        put_f32s(280, &self.srow_x);
        put_f32s(296, &self.srow_y);
        put_f32s(312, &self.srow_z);
        b[123] = self.xyzt_units;
        b[148..228].copy_from_slice(&self.descrip);
        B::write_i16(&mut b[252..254], self.qform_code);
        B::write_i16(&mut b[254..256], self.sform_code);
        b[344..348].copy_from_slice(&self.magic);
        b
    }
}

/// Decode a mask from in-memory file contents (plain or gzip-wrapped).
pub fn decode_mask(bytes: &[u8]) -> Result<VoxelGrid> {
    if bytes.starts_with(&GZIP_MAGIC) {
        let mut plain = Vec::new();
        MultiGzDecoder::new(bytes).read_to_end(&mut plain)?;
        return decode_plain(&plain);
    }
    decode_plain(bytes)
}

fn decode_plain(bytes: &[u8]) -> Result<VoxelGrid> {
    let header = NiftiHeader::parse(bytes)?;
    let datatype = Datatype::from_code(header.datatype)?;
    let dims = header.dims();
    let n: usize = dims.iter().product();
    let offset = header.vox_offset as usize;
    let expected = offset + n * datatype.size();
    if bytes.len() < expected {
        return Err(Error::Truncated { expected, found: bytes.len() });
    }
    let payload = &bytes[offset..expected];
    let labels = match header.endianness {
        Endianness::Little => cast_labels::<LittleEndian>(payload, datatype)?,
        Endianness::Big => cast_labels::<BigEndian>(payload, datatype)?,
    };
    VoxelGrid::new(dims, header.spacing(), labels)
}

fn cast_labels<B: ByteOrder>(payload: &[u8], datatype: Datatype) -> Result<Vec<u8>> {
    let size = datatype.size();
    payload
        .chunks_exact(size)
        .enumerate()
        .map(|(index, c)| {
            let value: i64 = match datatype {
                Datatype::Uint8 => i64::from(c[0]),
                Datatype::Int8 => i64::from(c[0] as i8),
                Datatype::Int16 => i64::from(B::read_i16(c)),
                Datatype::Uint16 => i64::from(B::read_u16(c)),
                Datatype::Int32 => i64::from(B::read_i32(c)),
            };
            if (0..=i64::from(MAX_LABEL)).contains(&value) {
                Ok(value as u8)
            } else {
                Err(Error::LabelOutOfRange { value, index })
            }
        })
        .collect()
}

/// Encode a grid as an uncompressed single-file NIfTI-1 (uint8, little-endian).
pub fn encode_mask(grid: &VoxelGrid) -> Result<Vec<u8>> {
    let header = NiftiHeader::for_grid(grid)?;
    let mut out = Vec::with_capacity(DEFAULT_VOX_OFFSET + grid.len());
    out.extend_from_slice(&header.to_bytes());
    out.extend_from_slice(&[0u8; DEFAULT_VOX_OFFSET - HEADER_SIZE]);
    out.extend_from_slice(grid.labels());
    Ok(out)
}

pub fn gzip(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(bytes)?;
    Ok(enc.finish()?)
}

/// Read a `.nii` or `.nii.gz` label mask. Compression is detected from the
/// content, not the extension.
pub fn read_mask(path: impl AsRef<Path>) -> Result<VoxelGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(Error::at(path))?;
    decode_mask(&bytes)
}

/// Write a label mask; gzip-compressed when the path ends in `.gz`.
pub fn write_mask(grid: &VoxelGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = encode_mask(grid)?;
    if path.extension().is_some_and(|e| e == "gz") {
        bytes = gzip(&bytes)?;
    }
    fs::write(path, bytes).map_err(Error::at(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header_bytes(dim: [i16; 8], pixdim: [f32; 8], datatype: i16, bitpix: i16) -> Vec<u8> {
        let mut b = vec![0u8; DEFAULT_VOX_OFFSET];
        LittleEndian::write_i32(&mut b[0..4], 348);
        for (i, &d) in dim.iter().enumerate() {
            LittleEndian::write_i16(&mut b[40 + 2 * i..], d);
        }
        LittleEndian::write_i16(&mut b[70..], datatype);
        LittleEndian::write_i16(&mut b[72..], bitpix);
        for (i, &p) in pixdim.iter().enumerate() {
            LittleEndian::write_f32(&mut b[76 + 4 * i..], p);
        }
        LittleEndian::write_f32(&mut b[108..], 352.0);
        b[344..348].copy_from_slice(b"n+1\0");
        b
    }

    #[test]
    fn reads_all_background_volume() {
        let mut bytes = header_bytes([3, 64, 64, 64, 1, 1, 1, 1], [1.0; 8], 2, 8);
        bytes.extend(std::iter::repeat(0u8).take(64 * 64 * 64));
        let g = decode_mask(&bytes).unwrap();
        assert_eq!(g.dims(), [64, 64, 64]);
        assert_eq!(g.spacing(), [1.0, 1.0, 1.0]);
        assert!(g.labels().iter().all(|&v| v == 0));
    }

    #[test]
    fn spacing_gives_voxel_volume() {
        let mut bytes = header_bytes([3, 4, 4, 4, 1, 1, 1, 1], [1.0, 0.5, 0.5, 2.0, 1.0, 1.0, 1.0, 1.0], 2, 8);
        bytes.extend(std::iter::repeat(0u8).take(64));
        let g = decode_mask(&bytes).unwrap();
        assert_eq!(g.spacing(), [0.5, 0.5, 2.0]);
        // 0.5 * 0.5 * 2.0 mm³ = 0.5 mm³ = 0.0005 mL
        assert!((g.voxel_volume_ml() - 0.0005).abs() < 1e-18);
    }

    #[test]
    fn label_five_is_out_of_range() {
        let mut bytes = header_bytes([3, 2, 2, 2, 1, 1, 1, 1], [1.0; 8], 2, 8);
        bytes.extend([0, 0, 0, 5, 0, 0, 0, 0]);
        let err = decode_mask(&bytes).unwrap_err();
        assert!(err.to_string().contains("label out of range"), "{err}");
    }

    #[test]
    fn integer_datatypes_are_cast() {
        for (code, size) in [(4i16, 2usize), (8, 4), (256, 1), (512, 2)] {
            let mut bytes = header_bytes([3, 2, 1, 1, 1, 1, 1, 1], [1.0; 8], code, (size * 8) as i16);
            let mut payload = vec![0u8; 2 * size];
            payload[size] = 3; // little-endian low byte of the second voxel
            bytes.extend(payload);
            let g = decode_mask(&bytes).unwrap();
            assert_eq!(g.labels(), &[0, 3], "datatype {code}");
        }
        // negative int16 label
        let mut bytes = header_bytes([3, 1, 1, 1, 1, 1, 1, 1], [1.0; 8], 4, 16);
        bytes.extend((-1i16).to_le_bytes());
        assert!(matches!(decode_mask(&bytes), Err(Error::LabelOutOfRange { value: -1, .. })));
    }

    #[test]
    fn rejects_malformed_headers() {
        let good = || {
            let mut b = header_bytes([3, 1, 1, 1, 1, 1, 1, 1], [1.0; 8], 2, 8);
            b.push(1);
            b
        };
        assert!(decode_mask(&good()).is_ok());

        let mut b = good();
        LittleEndian::write_i32(&mut b[0..4], 540);
        assert!(matches!(decode_mask(&b), Err(Error::HeaderSize(_))));

        let mut b = good();
        b[344..348].copy_from_slice(b"ni1\0");
        assert!(matches!(decode_mask(&b), Err(Error::BadMagic(_))));

        let mut b = good();
        LittleEndian::write_i16(&mut b[70..], 16); // float32
        assert!(matches!(decode_mask(&b), Err(Error::UnsupportedDatatype(16))));

        let mut b = good();
        LittleEndian::write_i16(&mut b[40..], 4);
        assert!(matches!(decode_mask(&b), Err(Error::NotThreeDimensional(4))));

        let mut b = good();
        b.pop();
        assert!(matches!(decode_mask(&b), Err(Error::Truncated { expected: 353, found: 352 })));

        assert!(matches!(decode_mask(&good()[..100]), Err(Error::Truncated { .. })));
    }

    #[test]
    fn single_voxel_file_layout() {
        let g = VoxelGrid::new([1, 1, 1], [1.0; 3], vec![4]).unwrap();
        let bytes = encode_mask(&g).unwrap();
        assert_eq!(bytes.len(), 353);
        // independent field dump
        assert_eq!(LittleEndian::read_i32(&bytes[0..4]), 348);
        assert_eq!(LittleEndian::read_i16(&bytes[40..42]), 3);
        assert_eq!(LittleEndian::read_i16(&bytes[42..44]), 1);
        assert_eq!(LittleEndian::read_i16(&bytes[70..72]), 2);
        assert_eq!(LittleEndian::read_i16(&bytes[72..74]), 8);
        assert_eq!(LittleEndian::read_f32(&bytes[108..112]), 352.0);
        assert_eq!(&bytes[344..348], b"n+1\0");
        assert_eq!(&bytes[348..352], &[0, 0, 0, 0]);
        assert_eq!(bytes[352], 4);
    }

    #[test]
    fn negative_pixdim_is_absolute() {
        let mut bytes = header_bytes([3, 1, 1, 1, 1, 1, 1, 1], [1.0, -2.0, 1.5, -0.5, 1.0, 1.0, 1.0, 1.0], 2, 8);
        bytes.push(0);
        assert_eq!(decode_mask(&bytes).unwrap().spacing(), [2.0, 1.5, 0.5]);
    }

    #[test]
    fn big_endian_header_and_payload() {
        let g = VoxelGrid::new([2, 1, 1], [0.75, 1.0, 3.0], vec![1, 4]).unwrap();
        let mut h = NiftiHeader::for_grid(&g).unwrap();
        h.endianness = Endianness::Big;
        h.datatype = Datatype::Int16.code();
        h.bitpix = 16;
        let mut bytes = h.to_bytes().to_vec();
        bytes.extend([0u8; 4]);
        bytes.extend(1i16.to_be_bytes());
        bytes.extend(4i16.to_be_bytes());
        assert_eq!(decode_mask(&bytes).unwrap(), g);
    }

    #[test]
    fn file_roundtrip_plain_and_gz() {
        let dir = tempfile::tempdir().unwrap();
        let g = VoxelGrid::new([3, 2, 2], [1.0, 2.0, 0.5], vec![0, 1, 2, 3, 4, 0, 0, 1, 2, 3, 4, 4]).unwrap();
        for name in ["m.nii", "m.nii.gz"] {
            let p = dir.path().join(name);
            write_mask(&g, &p).unwrap();
            assert_eq!(read_mask(&p).unwrap(), g);
        }
        let raw = std::fs::read(dir.path().join("m.nii.gz")).unwrap();
        assert_eq!(&raw[..2], &GZIP_MAGIC);
        assert!(matches!(read_mask(dir.path().join("missing.nii")), Err(Error::IoAt { .. })));
    }
}
