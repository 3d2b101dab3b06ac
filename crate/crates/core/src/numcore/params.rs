use super::Matrix;

/// Index of a parameter block inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub value: Matrix,
}

/// Named parameter blocks in declaration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    blocks: Vec<ParamBlock>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.blocks.push(ParamBlock { name: name.into(), value });
        ParamId(self.blocks.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.blocks[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.blocks[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.blocks[id.0].name
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ParamBlock] {
        &mut self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.blocks.len()).map(ParamId)
    }

    /// Total scalar count across all blocks.
    pub fn scalar_count(&self) -> usize {
        self.blocks.iter().map(|b| b.value.len()).sum()
    }

    /// All coordinates concatenated in declaration order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.scalar_count());
        for b in &self.blocks {
            out.extend_from_slice(b.value.as_slice());
        }
        out
    }

    /// Inverse of [`ParamStore::flatten`]. Panics if `flat` has the wrong length.
    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.scalar_count(), "flat parameter length");
        let mut at = 0;
        for b in &mut self.blocks {
            let n = b.value.len();
            b.value.as_mut_slice().copy_from_slice(&flat[at..at + n]);
            at += n;
        }
    }

    /// Zero-valued matrices with the shape of every block.
    pub fn zeros_like(&self) -> Vec<Matrix> {
        self.blocks.iter().map(|b| Matrix::zeros(b.value.rows(), b.value.cols())).collect()
    }
}
