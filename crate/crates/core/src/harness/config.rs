//! Experiment configuration documents.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ivy_train::TrainConfig;
use crate::proxy_loss::ProxyConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    GenData,
    Train,
    Eval,
    ProxyCheck,
    ShatterVerify,
    GjTrace,
    AmgCheck,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::GenData,
        Command::Train,
        Command::Eval,
        Command::ProxyCheck,
        Command::ShatterVerify,
        Command::GjTrace,
        Command::AmgCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::ProxyCheck => "proxy-check",
            Command::ShatterVerify => "shatter-verify",
            Command::GjTrace => "gj-trace",
            Command::AmgCheck => "amg-check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyChoice {
    /// Rank-one row family with `n` members in `d` columns.
    Rank1,
    /// Dense family with sketch dimension `k`.
    Dense,
    /// Block family with `k` and sparsity `s`.
    Block,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub step_size: f64,
    pub batch_size: usize,
    pub fd_step: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self { epochs: t.epochs, step_size: t.step_size, batch_size: t.batch_size, fd_step: t.fd_step }
    }
}

impl TrainSection {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig { epochs: self.epochs, step_size: self.step_size, batch_size: self.batch_size, fd_step: self.fd_step, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxySection {
    pub subset_cap: usize,
    pub q_constant: f64,
}

impl Default for ProxySection {
    fn default() -> Self {
        let p = ProxyConfig::default();
        Self { subset_cap: p.subset_cap, q_constant: p.q_constant }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShatterSection {
    pub family: FamilyChoice,
    /// Random subsets drawn when the family is too large to enumerate.
    pub subsets: usize,
    /// Margin; 0.4 for the rank-one family and 0 otherwise when absent.
    pub gamma: Option<f64>,
}

impl Default for ShatterSection {
    fn default() -> Self {
        Self { family: FamilyChoice::Rank1, subsets: 256, gamma: None }
    }
}

impl ShatterSection {
    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(match self.family {
            FamilyChoice::Rank1 => 0.4,
            FamilyChoice::Dense | FamilyChoice::Block => 0.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GjSection {
    /// Largest power in the `M^q·π` demo.
    pub max_power: usize,
    /// Largest `r` in the min-of-`r` demo.
    pub max_r: usize,
    /// Power iterations for the traced proxy program.
    pub proxy_q: usize,
}

impl Default for GjSection {
    fn default() -> Self {
        Self { max_power: 6, max_r: 8, proxy_q: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmgSection {
    /// Coarse dimension of the prolongation.
    pub coarse: usize,
    pub s1: usize,
    pub s2: usize,
    /// Steps in the loss.
    pub q: usize,
    /// Training epochs for the prolongation values; 0 skips training.
    pub train_epochs: usize,
    pub step_size: f64,
}

impl Default for AmgSection {
    fn default() -> Self {
        Self { coarse: 4, s1: 1, s2: 1, q: 1, train_epochs: 0, step_size: 10.0 }
    }
}

/// One JSON document configures every command; each reads the fields it
/// needs and ignores the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub k: usize,
    pub s: usize,
    pub epsilon: f64,
    pub seed: u64,
    /// Random instances (or training matrices for `gen-data`).
    pub instances: usize,
    /// Held-out matrices for `gen-data`.
    pub test_instances: usize,
    /// Noise level of the spiked distribution.
    pub noise: f64,
    /// Dataset directory with `train/` and `test/` subdirectories.
    pub data: Option<PathBuf>,
    /// Learned sketch matrix for `eval`.
    pub sketch: Option<PathBuf>,
    /// Output directory for the report, summary and artifacts.
    pub out: Option<PathBuf>,
    pub train: TrainSection,
    pub proxy: ProxySection,
    pub shatter: ShatterSection,
    pub gj: GjSection,
    pub amg: AmgSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 16,
            d: 16,
            m: 6,
            k: 3,
            s: 1,
            epsilon: 0.1,
            seed: 0,
            instances: 50,
            test_instances: 20,
            noise: 0.1,
            data: None,
            sketch: None,
            out: None,
            train: TrainSection::default(),
            proxy: ProxySection::default(),
            shatter: ShatterSection::default(),
            gj: GjSection::default(),
            amg: AmgSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn proxy_config(&self) -> ProxyConfig {
        ProxyConfig { epsilon: self.epsilon, subset_cap: self.proxy.subset_cap, q_constant: self.proxy.q_constant }
    }

    /// Every violated constraint for `command`.
    pub fn problems(&self, command: Command) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [("n", self.n), ("d", self.d), ("m", self.m), ("k", self.k), ("s", self.s)] {
            if v == 0 {
                out.push(format!("{name} must be positive"));
            }
        }
        if self.s > self.m {
            out.push(format!("s = {} exceeds m = {}", self.s, self.m));
        }
        if self.k > self.m {
            out.push(format!("k = {} exceeds m = {}", self.k, self.m));
        }
        let sketching = matches!(command, Command::Train | Command::Eval | Command::ProxyCheck);
        if sketching && self.m > self.n {
            out.push(format!("m = {} exceeds n = {}", self.m, self.n));
        }
        if matches!(command, Command::GenData | Command::Train | Command::Eval) && self.k > self.n {
            out.push(format!("k = {} exceeds n = {}", self.k, self.n));
        }
        if self.instances == 0 {
            out.push("instances must be at least 1".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            out.push(format!("noise must be non-negative, got {}", self.noise));
        }
        out.extend(self.proxy_config().problems());
        out.extend(self.train.with_seed(self.seed).problems());
        match command {
            Command::GenData => {
                if self.out.is_none() {
                    out.push("gen-data needs an output directory (out)".into());
                }
            }
            Command::Eval => {
                if self.sketch.is_none() {
                    out.push("eval needs a learned sketch file (sketch)".into());
                }
            }
            Command::ShatterVerify => {
                let g = self.shatter.gamma();
                if !(0.0..0.5).contains(&g) {
                    out.push(format!("shatter.gamma must lie in [0, 0.5), got {g}"));
                }
                if self.shatter.subsets == 0 {
                    out.push("shatter.subsets must be at least 1".into());
                }
            }
            Command::AmgCheck => {
                if self.amg.coarse == 0 || self.amg.coarse > self.n {
                    out.push(format!("amg.coarse must lie in 1..=n, got {}", self.amg.coarse));
                }
                if !(self.amg.step_size > 0.0 && self.amg.step_size.is_finite()) {
                    out.push(format!("amg.step_size must be positive, got {}", self.amg.step_size));
                }
            }
            Command::Train | Command::ProxyCheck | Command::GjTrace => {}
        }
        out
    }

    pub fn validate(&self, command: Command) -> Result<()> {
        let p = self.problems(command);
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }
}
