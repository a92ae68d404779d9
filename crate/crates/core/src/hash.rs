//! Seeded 64-bit hashing shared by partitioning, sampling and HLL.
//!
//! Words are mixed with the MurmurHash3 64-bit finalizer, so the output is
//! stable across platforms and releases (unlike `DefaultHasher`).

#[inline]
pub fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xff51_afd7_ed55_8ccd);
    k ^= k >> 33;
    k = k.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    k ^ (k >> 33)
}

pub fn hash_bytes(bytes: &[u8], salt: u64) -> u64 {
    let mut h = fmix64(salt ^ 0x9e37_79b9_7f4a_7c15);
    let mut chunks = bytes.chunks_exact(8);
    for chunk in &mut chunks {
        let w = u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        h = (h ^ fmix64(w)).rotate_left(27).wrapping_mul(5).wrapping_add(0x52dc_e729);
    }
    let rest = chunks.remainder();
    if !rest.is_empty() {
        let mut buf = [0u8; 8];
        buf[..rest.len()].copy_from_slice(rest);
        h = (h ^ fmix64(u64::from_le_bytes(buf))).rotate_left(31).wrapping_mul(5);
    }
    fmix64(h ^ bytes.len() as u64)
}
