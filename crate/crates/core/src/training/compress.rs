use crate::error::{Error, Result};
use crate::models::{Network, TensorKind};
use crate::quantize::{codebook_memory_bits, kmeans_compress, Codebook};

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCodebook {
    pub name: &'static str,
    pub codebook: Codebook,
    pub weight_count: usize,
}

/// What offline compression produced, tensor by tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressionReport {
    pub bits: u32,
    pub tensors: Vec<TensorCodebook>,
}

impl CompressionReport {
    /// Bits spent on codebooks across all compressed tensors.
    pub fn codebook_memory_bits(&self) -> u64 {
        self.tensors.iter().map(|t| codebook_memory_bits(&t.codebook)).sum()
    }

    /// Bits spent on per-weight cluster indices.
    pub fn index_bits(&self) -> u64 {
        self.tensors.iter().map(|t| t.weight_count as u64 * self.bits as u64).sum()
    }
}

/// Replaces every weight tensor of a trained model by its k-means
/// reconstruction with `k = 2^bits - 1` shared values. Biases are untouched.
pub fn compress_trained<N: Network>(model: &N, bits: u32, center_bits: u32, seed: u64) -> Result<(N, CompressionReport)> {
    if !(1..=32).contains(&bits) {
        return Err(Error::InvalidArgument(format!(
            "codebook index width must be 1..=32 bits, got {bits}"
        )));
    }
    let k = ((1u64 << bits) - 1) as usize;
    let mut compressed = model.clone();
    let mut tensors = Vec::new();
    for (t, param) in compressed.params_mut().into_iter().enumerate() {
        if param.kind != TensorKind::Weight {
            continue;
        }
        let (codebook, assignments) = kmeans_compress(param.values, k, center_bits, seed.wrapping_add(t as u64))?;
        param.values.copy_from_slice(&codebook.decode(&assignments));
        tensors.push(TensorCodebook {
            name: param.name,
            codebook,
            weight_count: param.values.len(),
        });
    }
    Ok((compressed, CompressionReport { bits, tensors }))
}
