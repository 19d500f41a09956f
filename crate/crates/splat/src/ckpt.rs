use std::io::Write;

use crate::error::SplatError;
use crate::set::{SplatSet, ROW_LENS};

pub const CKPT_MAGIC: &[u8; 4] = b"SPLT";
pub const CKPT_VERSION: u16 = 1;
const MAX_COUNT: u64 = 1 << 26;
const HEADER: usize = 4 + 2 + 8;
const ROW_FLOATS: usize = 3 + 3 + 4 + 1 + 12;

/// `"SPLT"`, u16 version, u64 count, then little-endian f32 arrays for
/// means, log-scales, rotations, opacity logits and colors.
pub fn encode_checkpoint(splats: &SplatSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 4 * ROW_FLOATS * splats.len());
    out.extend_from_slice(CKPT_MAGIC);
    out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    out.extend_from_slice(&(splats.len() as u64).to_le_bytes());
    for group in splats.groups() {
        for &v in group {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<SplatSet, SplatError> {
    let bad = |m: &str| SplatError::Checkpoint(m.to_string());
    if bytes.len() < HEADER {
        return Err(bad("truncated header"));
    }
    if &bytes[..4] != CKPT_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CKPT_VERSION {
        return Err(SplatError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(bytes[6..14].try_into().expect("8 bytes"));
    if count > MAX_COUNT {
        return Err(SplatError::Checkpoint(format!("count {count} too large")));
    }
    let n = count as usize;
    if bytes.len() != HEADER + 4 * ROW_FLOATS * n {
        return Err(SplatError::Checkpoint(format!(
            "expected {} bytes for {n} gaussians, got {}",
            HEADER + 4 * ROW_FLOATS * n,
            bytes.len()
        )));
    }
    let mut floats = bytes[HEADER..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64);
    let mut set = SplatSet::default();
    for (group, &row) in set.groups_mut().into_iter().zip(&ROW_LENS) {
        group.extend(floats.by_ref().take(row * n));
    }
    if !set.is_finite() {
        return Err(bad("non-finite value"));
    }
    if set.rotations.chunks_exact(4).any(|q| q.iter().all(|v| *v == 0.0)) {
        return Err(bad("zero quaternion"));
    }
    Ok(set)
}

/// Binary little-endian PLY with the usual splat-viewer property names.
/// `f_dc_*` and `f_rest_*` hold this crate's SH coefficients; opacity and
/// scales are stored pre-activation.
pub fn export_ply(splats: &SplatSet, mut out: impl Write) -> std::io::Result<()> {
    let mut header = format!("ply\nformat binary_little_endian 1.0\nelement vertex {}\n", splats.len());
    let mut props: Vec<String> = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    props.extend((0..9).map(|i| format!("f_rest_{i}")));
    props.push("opacity".into());
    props.extend((0..3).map(|i| format!("scale_{i}")));
    props.extend((0..4).map(|i| format!("rot_{i}")));
    for p in &props {
        header.push_str(&format!("property float {p}\n"));
    }
    header.push_str("end_header\n");
    out.write_all(header.as_bytes())?;
    let mut row = Vec::with_capacity(props.len());
    for i in 0..splats.len() {
        row.clear();
        row.extend_from_slice(&splats.means[3 * i..3 * i + 3]);
        row.extend_from_slice(&[0.0; 3]);
        let col = splats.color(i);
        row.extend((0..3).map(|c| col[c * 4]));
        row.extend((0..3).flat_map(|c| col[c * 4 + 1..c * 4 + 4].to_vec()));
        row.push(splats.opacity_logits[i]);
        row.extend_from_slice(&splats.log_scales[3 * i..3 * i + 3]);
        row.extend_from_slice(&splats.rotations[4 * i..4 * i + 4]);
        for v in &row {
            out.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_set() -> SplatSet {
        let mut s = SplatSet::default();
        s.push([0.5, -1.0, 2.0], [-2.0, -2.5, -3.0], [0.9, 0.1, 0.2, 0.3], 0.7, [0.25; 12]);
        s.push([1.0, 1.0, 1.0], [-1.0; 3], [1.0, 0.0, 0.0, 0.0], -0.5, [-0.5; 12]);
        s
    }

    #[test]
    fn round_trip_is_f32_exact() {
        let s = sample_set();
        let back = decode_checkpoint(&encode_checkpoint(&s)).unwrap();
        for (a, b) in s.groups().iter().zip(back.groups()) {
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(*x as f32 as f64, *y);
            }
        }
        assert_eq!(decode_checkpoint(&encode_checkpoint(&SplatSet::default())).unwrap(), SplatSet::default());
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_checkpoint(&sample_set());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(decode_checkpoint(&magic).is_err());
        let mut ver = bytes.clone();
        ver[4] = 9;
        assert!(decode_checkpoint(&ver).is_err());
        let mut nan = bytes.clone();
        nan[HEADER..HEADER + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode_checkpoint(&nan).is_err());
        let mut huge = bytes;
        huge[6..14].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(decode_checkpoint(&huge).is_err());
    }

    #[test]
    fn ply_layout() {
        let mut buf = Vec::new();
        export_ply(&sample_set(), &mut buf).unwrap();
        let text = String::from_utf8_lossy(&buf);
        let end = text.find("end_header\n").unwrap() + "end_header\n".len();
        assert!(text.contains("element vertex 2\n"));
        assert_eq!(text[..end].matches("property float").count(), 26);
        assert_eq!(buf.len() - end, 2 * 26 * 4);
    }
}
