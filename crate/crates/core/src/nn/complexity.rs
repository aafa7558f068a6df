use super::layers::{LayerKind, LayerSpec};

/// Multiply-accumulate count of a fully connected chain with the given
/// layer widths: the sum of `N_l * N_{l-1}` over consecutive layers.
pub fn flops_from_widths(widths: &[usize]) -> u64 {
    widths.windows(2).map(|w| (w[0] * w[1]) as u64).sum()
}

/// Multiply-accumulate count of a layer stack. Convolutions are charged the
/// dense cost of each output element (`in_channels * k * k` per output);
/// element-wise layers are free.
pub fn flops_estimate(specs: &[LayerSpec]) -> u64 {
    specs
        .iter()
        .map(|s| {
            let inputs: usize = s.input_dims.iter().product();
            let outputs: usize = s.output_dims.iter().product();
            match s.kind {
                LayerKind::Dense => (inputs * outputs) as u64,
                LayerKind::Conv2d => {
                    let k = s.kernel.unwrap_or(1);
                    let in_channels = s.input_dims.first().copied().unwrap_or(1);
                    (outputs * in_channels * k * k) as u64
                }
                _ => 0,
            }
        })
        .sum()
}
