//! Closed-form parameter and multiply-accumulate counts.

use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, ModulationStrategy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Complexity {
    pub params: usize,
    /// Multiply-accumulates of one batch-1 forward pass, counting affine
    /// maps, joint mixing and convolutions (norms and activations excluded).
    pub macs: usize,
}

fn linear(fan_in: usize, fan_out: usize, bias: bool) -> usize {
    fan_in * fan_out + if bias { fan_out } else { 0 }
}

/// Counts derived from the configuration alone; they agree with the
/// parameter store of a constructed model.
pub fn count_params_flops(cfg: &ModelConfig) -> Complexity {
    let (c, q, v, t) = (cfg.channels, cfg.quarter(), cfg.joints, cfg.seq_len);
    let hidden = cfg.ffn_expansion * c;
    let mut params = 0;
    let mut macs = 0;

    // embedding
    params += linear(cfg.in_channels, c, true) + 2 * linear(c, c, true) + v * c;
    macs += t * v * (cfg.in_channels * c + 2 * c * c + c);

    for l in 0..cfg.stages {
        let tl = cfg.stage_len(l);
        let pos = tl * v;
        let mut p = 0;
        let mut m = 0;
        p += 2 * c + linear(c, c, true);
        m += pos * c * c;
        p += v * v + q * q;
        m += tl * v * v * q + pos * q * q;
        p += cfg.tconv_kernel * q * q;
        m += pos * cfg.tconv_kernel * q * q;
        if cfg.msm_enabled {
            p += v * v + 4 * q * q;
            m += tl * v * v * 2 * q + pos * 4 * q * q;
        }
        if cfg.mtm_enabled {
            let k = cfg.mtm_kernel_t * cfg.mtm_kernel_v * 4 * q * q;
            p += k;
            m += pos * k;
        }
        if cfg.modulation_strategy == ModulationStrategy::Concat {
            let active = cfg.msm_enabled as usize + cfg.mtm_enabled as usize;
            p += 2 * linear(2 * q, q, true);
            m += active * pos * 2 * q * q;
        }
        p += linear(c, 3, true);
        m += 3 * c;
        p += linear(c, c, true) + 2 * c + linear(c, hidden, true) + linear(hidden, c, true);
        m += pos * (c * c + 2 * c * hidden);
        params += cfg.blocks * p;
        macs += cfg.blocks * m;
    }

    if cfg.stages > 1 {
        let lc = cfg.stages * c;
        params += linear(lc, cfg.stages, true) + linear(lc, c, true);
        macs += lc * cfg.stages + cfg.fused_len() * v * lc * c;
    }
    params += 2 * c + linear(c, cfg.num_classes, true);
    macs += c * cfg.num_classes;
    Complexity { params, macs }
}
