//! Flat views over named parameter tensors, shared by the optimizer, the
//! weight files, and gradient checks.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Matrix,
    Bias,
    NormScale,
    NormShift,
}

impl ParamKind {
    /// Only projection matrices receive weight decay.
    pub fn decays(self) -> bool {
        matches!(self, ParamKind::Matrix)
    }
}

#[derive(Debug)]
pub struct ParamRef<'a> {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

#[derive(Debug)]
pub struct ParamMut<'a> {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
}

/// A model whose trainable state is a fixed, ordered list of named tensors.
/// `params` and `params_mut` must list the same tensors in the same order.
pub trait Parameters {
    fn params(&self) -> Vec<ParamRef<'_>>;
    fn params_mut(&mut self) -> Vec<ParamMut<'_>>;

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.data.len()).sum()
    }

    /// Bit-level FNV-1a digest of every parameter value.
    fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in self.params() {
            for v in p.data {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }
}
