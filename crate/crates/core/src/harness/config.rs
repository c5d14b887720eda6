use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::amp::{EarlyStop, SeMode};
use crate::cs_amp::Prior;
use crate::design::{Field, OperatorKind};
use crate::error::{Error, Result};
use crate::params::{db_to_linear, CouplingParams, LengthRounding};
use crate::state_evolution::DEFAULT_SAMPLES;

/// Full experiment description, usually read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub code: Option<CodeSection>,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    pub cs: Option<CsSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeSection {
    pub rate_bits: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub omega: usize,
    #[serde(rename = "Lambda")]
    pub lambda: usize,
    #[serde(default)]
    pub rho: f64,
    #[serde(rename = "L")]
    pub l: usize,
    pub snr_db: Option<f64>,
    #[serde(rename = "P")]
    pub power: Option<f64>,
    pub sigma2: Option<f64>,
    /// Fixes the code length instead of deriving it from the rate.
    pub n: Option<usize>,
    #[serde(default)]
    pub rounding: LengthRounding,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub snr_db: Option<f64>,
    pub sigma2: Option<f64>,
    #[serde(default)]
    pub field: Field,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub snr_db: Option<Vec<f64>>,
    pub rate_bits: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub trials: usize,
    pub seed: u64,
    pub operator: OperatorKind,
    pub se_mode: SeMode,
    pub t_max: Option<usize>,
    pub early_stop: Option<EarlyStop>,
    pub se_samples: usize,
    pub se_threshold: f64,
    pub sweep: Option<Sweep>,
    pub dense_cap_bytes: Option<u64>,
    /// Keep per-iteration, per-block NMSE traces in the diagnostics.
    pub record_trace: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            trials: 1,
            seed: 0,
            operator: OperatorKind::Dft,
            se_mode: SeMode::Online,
            t_max: None,
            early_stop: Some(EarlyStop::default()),
            se_samples: DEFAULT_SAMPLES,
            se_threshold: 1e-4,
            sweep: None,
            dense_cap_bytes: None,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    pub omega: usize,
    #[serde(rename = "Lambda")]
    pub lambda: usize,
    #[serde(default)]
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsSection {
    pub p: usize,
    pub delta: f64,
    pub prior: Prior,
    #[serde(rename = "W")]
    pub w: CouplingSpec,
    pub sigma2: f64,
    #[serde(default = "default_cs_t_max")]
    pub t_max: usize,
    #[serde(default)]
    pub operator: Option<OperatorKind>,
}

fn default_cs_t_max() -> usize {
    20
}

/// One point of a sweep, with the resolved channel quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub rate_bits: f64,
    pub power: f64,
    pub sigma2: f64,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.code.is_none() && self.cs.is_none() {
            return Err(Error::Config("need a [code] or a [cs] section".into()));
        }
        if self.experiment.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if let Some(es) = self.experiment.early_stop {
            if es.window == 0 || !(es.tol > 0.0) {
                return Err(Error::Config("early_stop needs tol > 0 and window >= 1".into()));
            }
        }
        if self.experiment.se_samples == 0 {
            return Err(Error::Config("se_samples must be at least 1".into()));
        }
        if let Some(code) = &self.code {
            self.coupling()?;
            if code.n.is_some() && self.experiment.sweep.as_ref().and_then(|s| s.rate_bits.as_ref()).is_some() {
                return Err(Error::Config("a fixed code length n cannot be combined with a rate sweep".into()));
            }
            if let Some(s) = &self.experiment.sweep {
                if s.snr_db.is_some() && s.rate_bits.is_some() {
                    return Err(Error::Config("sweep either snr_db or rate_bits, not both".into()));
                }
            }
            self.points()?;
        }
        if let Some(cs) = &self.cs {
            cs.prior.validate()?;
            CouplingParams::new(cs.w.omega, cs.w.lambda, cs.w.rho)?;
            if !(cs.delta > 0.0) || !(cs.sigma2 >= 0.0) || cs.p == 0 {
                return Err(Error::Config("cs needs p >= 1, delta > 0 and sigma2 >= 0".into()));
            }
        }
        Ok(())
    }

    fn code(&self) -> Result<&CodeSection> {
        self.code
            .as_ref()
            .ok_or_else(|| Error::Config("missing [code] section".into()))
    }

    pub fn coupling(&self) -> Result<CouplingParams> {
        let c = self.code()?;
        CouplingParams::new(c.omega, c.lambda, c.rho)
    }

    /// Resolves power and noise variance for one snr override.
    ///
    /// Precedence: sweep value, then `[channel]`, then `[code]`.
    fn resolve(&self, snr_override: Option<f64>) -> Result<(f64, f64)> {
        let code = self.code()?;
        let power = code.power.unwrap_or(1.0);
        if !(power > 0.0) {
            return Err(Error::Config(format!("P must be positive, got {power}")));
        }
        let sigma2 = if let Some(db) = snr_override {
            power / db_to_linear(db)
        } else if let Some(s) = self.channel.sigma2 {
            s
        } else if let Some(db) = self.channel.snr_db {
            power / db_to_linear(db)
        } else if let Some(s) = code.sigma2 {
            s
        } else if let Some(db) = code.snr_db {
            power / db_to_linear(db)
        } else {
            return Err(Error::Config("no noise level: set snr_db or sigma2".into()));
        };
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::Config(format!("noise variance must be positive, got {sigma2}")));
        }
        Ok((power, sigma2))
    }

    /// Sweep points in configuration order (a single point without a sweep).
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let code = self.code()?;
        let point = |snr: Option<f64>, rate_bits: f64| -> Result<SweepPoint> {
            let (power, sigma2) = self.resolve(snr)?;
            Ok(SweepPoint {
                snr_db: 10.0 * (power / sigma2).log10(),
                rate_bits,
                power,
                sigma2,
            })
        };
        let sweep = self.experiment.sweep.clone().unwrap_or_default();
        if let Some(list) = &sweep.snr_db {
            list.iter().map(|s| point(Some(*s), code.rate_bits)).collect()
        } else if let Some(list) = &sweep.rate_bits {
            list.iter().map(|r| point(None, *r)).collect()
        } else {
            Ok(vec![point(None, code.rate_bits)?])
        }
    }

    pub fn field(&self) -> Field {
        self.channel.field
    }
}
