//! Run configuration: model, optimizer and augmentation settings merged
//! from defaults, an optional `key=value` file, a named preset and
//! per-field command-line overrides, in that order.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use mmn_core::data::AugmentationParams;
use mmn_core::kv;
use mmn_core::model::{ModelConfig, ModulationStrategy};
use mmn_core::train::TrainConfig;

use crate::CliError;

/// Named variants of the ablation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// No motion-guided modulation in either path.
    A1,
    /// Skeletal modulation only.
    A2,
    /// Temporal modulation only.
    A3,
    /// Both modulations (the full model).
    A4,
    /// Modulation without the scale factor.
    B1,
    /// Modulation without the shift factor.
    B2,
    /// Additive combination.
    B3,
    /// Concatenation followed by a projection.
    B4,
    /// Hadamard product.
    B5,
    /// No augmentation.
    C1,
    /// Skeletal augmentation only.
    C2,
    /// Temporal augmentation only.
    C3,
    /// Both augmentations (the full recipe).
    C4,
}

impl Preset {
    pub const ALL: [Preset; 13] = [
        Preset::A1,
        Preset::A2,
        Preset::A3,
        Preset::A4,
        Preset::B1,
        Preset::B2,
        Preset::B3,
        Preset::B4,
        Preset::B5,
        Preset::C1,
        Preset::C2,
        Preset::C3,
        Preset::C4,
    ];

    pub fn apply(self, cfg: &mut RunConfig) {
        let m = &mut cfg.model;
        let a = &mut cfg.aug;
        match self {
            Preset::A1 => (m.msm_enabled, m.mtm_enabled) = (false, false),
            Preset::A2 => (m.msm_enabled, m.mtm_enabled) = (true, false),
            Preset::A3 => (m.msm_enabled, m.mtm_enabled) = (false, true),
            Preset::A4 => (m.msm_enabled, m.mtm_enabled) = (true, true),
            Preset::B1 => m.modulation_strategy = ModulationStrategy::NoScale,
            Preset::B2 => m.modulation_strategy = ModulationStrategy::NoShift,
            Preset::B3 => m.modulation_strategy = ModulationStrategy::Add,
            Preset::B4 => m.modulation_strategy = ModulationStrategy::Concat,
            Preset::B5 => m.modulation_strategy = ModulationStrategy::Hadamard,
            Preset::C1 => (a.skeletal_enabled, a.temporal_enabled) = (false, false),
            Preset::C2 => (a.skeletal_enabled, a.temporal_enabled) = (true, false),
            Preset::C3 => (a.skeletal_enabled, a.temporal_enabled) = (false, true),
            Preset::C4 => (a.skeletal_enabled, a.temporal_enabled) = (true, true),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|p| p.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown preset {s:?}; expected one of A1-A4, B1-B5, C1-C4"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub aug: AugmentationParams,
    pub preset: Option<Preset>,
}

/// Every field name accepted in config files and as `--kebab-case` flags.
pub fn known_keys() -> BTreeSet<String> {
    let mut keys = BTreeSet::new();
    for text in [
        kv::to_lines(&ModelConfig::default()),
        kv::to_lines(&TrainConfig::default()),
        kv::to_lines(&AugmentationParams::default()),
    ] {
        for (k, _) in kv::parse_lines(&text).expect("own output parses") {
            keys.insert(k);
        }
    }
    keys
}

/// Flags that clap defines itself even though they name config fields.
const DEDICATED_FLAGS: [&str; 2] = ["seed", "epochs"];

/// Pulls `--field value` and `--field=value` pairs naming config fields
/// out of `args`; everything else is left for the argument parser.
pub fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>), CliError> {
    let keys = known_keys();
    let mut rest = Vec::with_capacity(args.len());
    let mut pairs = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (name, inline) = match flag.split_once('=') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (flag.to_string(), None),
        };
        let key = name.replace('-', "_");
        if !keys.contains(&key) || DEDICATED_FLAGS.contains(&key.as_str()) {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it.next().ok_or_else(|| CliError::Usage(format!("--{name} needs a value")))?,
        };
        pairs.push((key, value));
    }
    Ok((rest, pairs))
}

impl RunConfig {
    pub fn new(model: ModelConfig) -> Self {
        Self { model, train: TrainConfig::default(), aug: AugmentationParams::default(), preset: None }
    }

    /// Applies `key=value` pairs to whichever section owns each key.
    pub fn apply_pairs(&mut self, pairs: &[(String, String)]) -> Result<(), CliError> {
        let (model, rest) = kv::apply(&self.model, pairs)?;
        let (train, rest) = kv::apply(&self.train, &rest)?;
        let (aug, rest) = kv::apply(&self.aug, &rest)?;
        let mut unknown = Vec::new();
        for (k, v) in rest {
            if k == "preset" {
                self.preset = Some(v.parse().map_err(CliError::Usage)?);
            } else {
                unknown.push(k);
            }
        }
        if !unknown.is_empty() {
            return Err(CliError::Usage(format!("unknown configuration keys: {}", unknown.join(", "))));
        }
        (self.model, self.train, self.aug) = (model, train, aug);
        Ok(())
    }

    /// `base` < config file < preset < overrides.
    pub fn resolve(
        base: ModelConfig,
        file: Option<&Path>,
        preset: Option<Preset>,
        overrides: &[(String, String)],
    ) -> Result<Self, CliError> {
        Self::new(base).layered(file, preset, overrides)
    }

    /// Applies a config file, a preset and overrides on top of `self`.
    pub fn layered(
        mut self,
        file: Option<&Path>,
        preset: Option<Preset>,
        overrides: &[(String, String)],
    ) -> Result<Self, CliError> {
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            self.apply_pairs(&kv::parse_lines(&text)?)?;
        }
        if preset.is_some() {
            self.preset = preset;
        }
        if let Some(p) = self.preset {
            p.apply(&mut self);
        }
        self.apply_pairs(overrides)?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        self.train.validate()?;
        self.aug.validate()?;
        Ok(())
    }

    /// Plain-text form readable by `--config`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(p) = self.preset {
            out.push_str(&format!("# preset {p} (already folded into the values below)\n"));
        }
        out.push_str("# model\n");
        out.push_str(&kv::to_lines(&self.model));
        out.push_str("# optimization\n");
        out.push_str(&kv::to_lines(&self.train));
        out.push_str("# augmentation\n");
        out.push_str(&kv::to_lines(&self.aug));
        out
    }
}
