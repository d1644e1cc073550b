//! Hash of the discrete selection state of one loss evaluation.
//!
//! Every non-smooth choice the loss makes (validity bits, sampling cells,
//! min-reprojection argmins, auto-mask bits, absolute-value and median
//! selections) is folded into one value. Two evaluations with equal
//! fingerprints took identical branches, so the loss restricted to the
//! segment between them is smooth; the gradient checker uses this to detect
//! central-difference intervals that cross a sampling-cell or selection
//! boundary.

#[derive(Debug, Clone)]
pub(crate) struct Fingerprint(u64);

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

impl Fingerprint {
    pub fn new() -> Self {
        Self(FNV_OFFSET)
    }

    #[inline]
    pub fn write_u64(&mut self, v: u64) {
        let mut h = self.0;
        for byte in v.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
        self.0 = h;
    }

    #[inline]
    pub fn write_usize(&mut self, v: usize) {
        self.write_u64(v as u64);
    }

    #[inline]
    pub fn write_bit(&mut self, b: bool) {
        self.write_u64(if b { 0x9e3779b97f4a7c15 } else { 0x2545f4914f6cdd1d });
    }

    #[inline]
    pub fn write_sign(&mut self, v: f64) {
        self.write_u64(if v > 0.0 {
            1
        } else if v < 0.0 {
            2
        } else {
            3
        });
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}
