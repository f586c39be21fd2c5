//! Pipeline settings: built-in defaults, then a flat `key = value` file,
//! then command-line flags, each layer overriding the previous one.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use artqr::decode::{default_window, DecodeParams, Eta};
use artqr::qab::{BlueprintOptions, MarkerStyle};
use artqr::qr::{EcLevel, Message, Version};
use artqr::refine::{LossWeights, RefineConfig};

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub message: Option<String>,
    pub version: Version,
    pub ec_level: EcLevel,
    pub mask: u8,
    pub eta: Eta,
    pub module_px: usize,
    /// None means a third of the module size.
    pub window: Option<usize>,
    pub quiet: usize,
    pub seed: Option<u64>,
    pub style: MarkerStyle,
    pub weights: LossWeights,
    pub refine: RefineConfig,
    /// Keys given in the config file or on the command line.
    pub explicit: BTreeSet<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            message: None,
            version: Version::new(5).expect("version 5 exists"),
            ec_level: EcLevel::M,
            mask: 0,
            eta: Eta::DEFAULT,
            module_px: 16,
            window: None,
            quiet: 4,
            seed: None,
            style: MarkerStyle::Square,
            weights: LossWeights::default(),
            refine: RefineConfig::default(),
            explicit: BTreeSet::new(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> anyhow::Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| anyhow!("bad value {value:?} for {key}: {e}"))
}

impl PipelineConfig {
    pub const KEYS: &'static [&'static str] = &[
        "message",
        "version",
        "ec_level",
        "mask",
        "eta",
        "module_px",
        "window",
        "quiet",
        "seed",
        "style",
        "lambda1",
        "lambda2",
        "lambda3",
        "iterations",
        "learning_rate",
        "code_margin",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "message" => self.message = Some(value.to_string()),
            "version" => self.version = Version::new(parse(&key, value)?)?,
            "ec_level" => self.ec_level = parse(&key, value)?,
            "mask" => self.mask = parse(&key, value)?,
            "eta" => self.eta = Eta::new(parse(&key, value)?)?,
            "module_px" => self.module_px = parse(&key, value)?,
            "window" => self.window = Some(parse(&key, value)?),
            "quiet" => self.quiet = parse(&key, value)?,
            "seed" => self.seed = Some(parse(&key, value)?),
            "style" => self.style = parse(&key, value)?,
            "lambda1" => self.weights.lambda1 = parse(&key, value)?,
            "lambda2" => self.weights.lambda2 = parse(&key, value)?,
            "lambda3" => self.weights.lambda3 = parse(&key, value)?,
            "iterations" => self.refine.iterations = parse(&key, value)?,
            "learning_rate" => self.refine.learning_rate = parse(&key, value)?,
            "code_margin" => self.refine.code_margin = parse(&key, value)?,
            _ => bail!("unknown setting {key:?} (known: {})", Self::KEYS.join(", ")),
        }
        self.explicit.insert(key);
        Ok(())
    }

    /// Reads `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> anyhow::Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("{origin}:{}: expected key = value", i + 1))?;
            self.set(k, v).with_context(|| format!("{origin}:{}", i + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> anyhow::Result<()> {
        let text = std::fs::read_to_string(path).map_err(artqr::Error::from).with_context(|| format!("reading config {}", path.display()))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    pub fn window(&self) -> usize {
        self.window.unwrap_or_else(|| default_window(self.module_px))
    }

    pub fn params(&self) -> anyhow::Result<DecodeParams> {
        Ok(DecodeParams::new(self.eta, self.window())?)
    }

    pub fn message(&self) -> anyhow::Result<Message> {
        let text = self.message.as_deref().ok_or_else(|| anyhow!("no message given (use --message)"))?;
        Ok(Message::new(text.as_bytes(), self.ec_level, self.version)?)
    }

    pub fn blueprint_options(&self) -> anyhow::Result<BlueprintOptions> {
        Ok(BlueprintOptions {
            mask: self.mask,
            module_px: self.module_px,
            params: self.params()?,
            u_min: None,
            style: self.style,
        })
    }
}
