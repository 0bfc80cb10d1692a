use std::sync::atomic::{AtomicU64, Ordering};

/// Maximum Ethernet frame size in bytes.
pub const FRAME_BYTES: usize = 1518;
pub const FRAME_BITS: usize = FRAME_BYTES * 8;

static TRUNCATED_FRAMES: AtomicU64 = AtomicU64::new(0);

/// Number of frames longer than [`FRAME_BYTES`] seen by [`pad_and_bitize`]
/// since process start.
pub fn truncated_frame_count() -> u64 {
    TRUNCATED_FRAMES.load(Ordering::Relaxed)
}

/// A frame zero-padded to 1518 bytes and read most-significant-bit first.
#[derive(Clone, PartialEq, Eq)]
pub struct BitVector12144 {
    bytes: Box<[u8; FRAME_BYTES]>,
}

impl std::fmt::Debug for BitVector12144 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BitVector12144({} ones)", self.count_ones())
    }
}

impl BitVector12144 {
    pub const LEN: usize = FRAME_BITS;

    pub fn len(&self) -> usize {
        FRAME_BITS
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < FRAME_BITS, "bit index {i} out of range");
        self.bytes[i / 8] >> (7 - i % 8) & 1 == 1
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..FRAME_BITS).map(|i| self.get(i))
    }

    /// Indices of set bits, ascending.
    pub fn ones(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (byte_idx, &b) in self.bytes.iter().enumerate() {
            if b == 0 {
                continue;
            }
            for bit in 0..8 {
                if b >> (7 - bit) & 1 == 1 {
                    out.push(byte_idx * 8 + bit);
                }
            }
        }
        out
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.iter().map(|b| if b { 1.0 } else { 0.0 }).collect()
    }
}

pub fn pad_and_bitize(raw: &[u8]) -> BitVector12144 {
    let mut bytes = Box::new([0u8; FRAME_BYTES]);
    if raw.len() > FRAME_BYTES {
        TRUNCATED_FRAMES.fetch_add(1, Ordering::Relaxed);
        log::warn!("frame of {} bytes truncated to {FRAME_BYTES}", raw.len());
    }
    let n = raw.len().min(FRAME_BYTES);
    bytes[..n].copy_from_slice(&raw[..n]);
    BitVector12144 { bytes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_is_all_zero() {
        let v = pad_and_bitize(&[]);
        assert_eq!(v.len(), 12_144);
        assert_eq!(v.count_ones(), 0);
    }

    #[test]
    fn full_ff_is_all_one() {
        let v = pad_and_bitize(&[0xff; 1518]);
        assert!(v.iter().all(|b| b));
        assert_eq!(v.iter().count(), 12_144);
    }

    #[test]
    fn msb_first_expansion() {
        let v = pad_and_bitize(&[0xa5]);
        let head: Vec<bool> = v.iter().take(8).collect();
        assert_eq!(head, [true, false, true, false, false, true, false, true]);
        assert!(v.iter().skip(8).all(|b| !b));
        assert_eq!(v.ones(), vec![0, 2, 5, 7]);
    }

    #[test]
    fn oversize_is_truncated_and_counted() {
        let before = truncated_frame_count();
        let mut raw = vec![0u8; 2000];
        raw[1517] = 1;
        raw[1518] = 0xff;
        let v = pad_and_bitize(&raw);
        assert_eq!(v.ones(), vec![12_143]);
        assert!(truncated_frame_count() > before);
    }

    proptest! {
        #[test]
        fn length_is_always_12144(raw in proptest::collection::vec(any::<u8>(), 0..3000)) {
            let v = pad_and_bitize(&raw);
            prop_assert_eq!(v.iter().count(), 12_144);
            prop_assert_eq!(v.to_f64().len(), 12_144);
        }
    }
}
