//! Mixed-radix codecs between per-agent tuples and flat indices.

/// Mixed-radix codec. The first coordinate is the most significant digit, so
/// flat order is lexicographic in the tuple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixedRadix {
    radices: Vec<usize>,
    strides: Vec<usize>,
    size: usize,
}

impl MixedRadix {
    pub fn new(radices: &[usize]) -> Self {
        let mut strides = vec![0; radices.len()];
        let mut size = 1usize;
        for i in (0..radices.len()).rev() {
            strides[i] = size;
            size = size.saturating_mul(radices[i]);
        }
        Self {
            radices: radices.to_vec(),
            strides,
            size,
        }
    }

    /// Number of flat indices (product of the radices; saturates on overflow).
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    pub fn stride(&self, i: usize) -> usize {
        self.strides[i]
    }

    pub fn encode(&self, digits: &[usize]) -> usize {
        debug_assert_eq!(digits.len(), self.radices.len());
        digits
            .iter()
            .zip(&self.strides)
            .map(|(d, s)| d * s)
            .sum()
    }

    pub fn decode_into(&self, mut index: usize, out: &mut [usize]) {
        for (i, &r) in self.radices.iter().enumerate().rev() {
            out[i] = index % r;
            index /= r;
        }
    }

    pub fn decode(&self, index: usize) -> Vec<usize> {
        let mut out = vec![0; self.radices.len()];
        self.decode_into(index, &mut out);
        out
    }

    /// Digit `i` of a flat index without a full decode.
    pub fn digit(&self, index: usize, i: usize) -> usize {
        (index / self.strides[i]) % self.radices[i]
    }
}

/// Codec pair for global states and global actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalIndex {
    pub states: MixedRadix,
    pub actions: MixedRadix,
}

impl GlobalIndex {
    pub fn new(state_sizes: &[usize], action_sizes: &[usize]) -> Self {
        Self {
            states: MixedRadix::new(state_sizes),
            actions: MixedRadix::new(action_sizes),
        }
    }

    pub fn num_states(&self) -> usize {
        self.states.size()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.size()
    }

    /// Number of global state-action pairs (saturating).
    pub fn num_pairs(&self) -> usize {
        self.states.size().saturating_mul(self.actions.size())
    }

    /// Flat pair index `s * |A| + a`.
    pub fn pair(&self, s: usize, a: usize) -> usize {
        s * self.actions.size() + a
    }
}

/// Encodes the restriction of a global tuple onto a subset of coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetCodec {
    members: Vec<usize>,
    codec: MixedRadix,
}

impl SubsetCodec {
    pub fn new(members: &[usize], sizes: &[usize]) -> Self {
        let radices: Vec<usize> = members.iter().map(|&j| sizes[j]).collect();
        Self {
            members: members.to_vec(),
            codec: MixedRadix::new(&radices),
        }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn size(&self) -> usize {
        self.codec.size()
    }

    /// Code of `global[members]`.
    pub fn code(&self, global: &[usize]) -> usize {
        self.members
            .iter()
            .enumerate()
            .map(|(i, &j)| global[j] * self.codec.stride(i))
            .sum()
    }
}
