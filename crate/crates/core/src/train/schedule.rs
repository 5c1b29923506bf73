use std::f64::consts::PI;

use super::TrainConfig;

/// Learning rate at a (possibly fractional) epoch.
///
/// Linear warmup from `warmup_start_lr` to `base_lr` over `warmup_epochs`,
/// then the remaining span up to `epochs` is split into `cosine_cycles`
/// equal half-cosine decays from `base_lr` to `min_lr`, each restarting at
/// `base_lr`. Past `epochs` the rate stays at `min_lr`.
pub fn lr_at(epoch: f64, cfg: &TrainConfig) -> f64 {
    let epoch = epoch.max(0.0);
    let warm = cfg.warmup_epochs as f64;
    if epoch < warm {
        return cfg.warmup_start_lr + (cfg.base_lr - cfg.warmup_start_lr) * epoch / warm;
    }
    let span = (cfg.epochs as f64 - warm).max(0.0);
    if span == 0.0 {
        return cfg.base_lr;
    }
    if epoch >= warm + span {
        return cfg.min_lr;
    }
    let cycle = span / cfg.cosine_cycles as f64;
    let u = ((epoch - warm) % cycle) / cycle;
    cfg.min_lr + 0.5 * (cfg.base_lr - cfg.min_lr) * (1.0 + (PI * u).cos())
}
