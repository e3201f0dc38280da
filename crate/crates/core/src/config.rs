//! Run configuration shared by every `ssv` subcommand. Every field has a
//! default, so `{}` is a complete configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data_io::VixConvention;
use crate::error::{Result, SsvError};
use crate::inference::BootstrapConfig;
use crate::model::{dt_intraday_years, dt_joint_days, OuParams, ProcessState, SsvParams};
use crate::npsmle::EstimatorConfig;
use crate::sentiment::{EmptyBarPolicy, SessionCalendar, TrainConfig};
use crate::simulate::CorrelationScheme;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; `None` lets the pool decide. Results do not depend
    /// on it.
    pub threads: Option<usize>,
    pub params: SsvParams,
    pub ou_params: OuParams,
    pub simulate: SimulateSection,
    pub moments: MomentsSection,
    pub data: DataSection,
    pub estimator: EstimatorConfig,
    pub bootstrap: BootstrapSection,
    pub sentiment: SentimentSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let params = SsvParams::sp500_2015();
        RunConfig {
            seed: 1,
            threads: None,
            params,
            ou_params: params.sentiment(),
            simulate: SimulateSection::default(),
            moments: MomentsSection::default(),
            data: DataSection::default(),
            estimator: EstimatorConfig::default(),
            bootstrap: BootstrapSection::default(),
            sentiment: SentimentSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Sentiment, log price and log variance.
    #[default]
    Joint,
    /// Sentiment alone.
    Sentiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub model: ModelKind,
    pub n_paths: usize,
    pub n_bars: usize,
    /// Bar spacing; `None` means one day per 26 bars for the joint model and
    /// one year per 6500 bars for the sentiment model.
    pub dt: Option<f64>,
    pub m_substeps: usize,
    pub initial: ProcessState,
    pub scheme: CorrelationScheme,
    pub antithetic: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            model: ModelKind::Joint,
            n_paths: 1,
            n_bars: 6500,
            dt: None,
            m_substeps: 10,
            initial: ProcessState {
                s: SsvParams::sp500_2015().mu_s,
                p: 7.6,
                v: -3.0,
                t: 0.0,
            },
            scheme: CorrelationScheme::Cholesky,
            antithetic: false,
        }
    }
}

impl SimulateSection {
    pub fn resolved_dt(&self) -> f64 {
        self.dt.unwrap_or(match self.model {
            ModelKind::Joint => dt_joint_days(),
            ModelKind::Sentiment => dt_intraday_years(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsSection {
    pub s0: f64,
    pub v0: f64,
    pub horizons: Vec<f64>,
    pub format: OutputFormat,
    /// When positive, Monte Carlo estimates with standard errors are added.
    pub mc_paths: usize,
    pub mc_dt: f64,
    pub mc_substeps: usize,
}

impl Default for MomentsSection {
    fn default() -> Self {
        MomentsSection {
            s0: SsvParams::sp500_2015().mu_s,
            v0: -3.0,
            horizons: vec![0.1, 0.5, 1.0],
            format: OutputFormat::Json,
            mc_paths: 0,
            mc_dt: 0.01,
            mc_substeps: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Observation CSV (`timestamp` or `t` column, then `s[,p,v]`).
    pub observations: Option<PathBuf>,
    /// Raw `timestamp,value` bar files, joined on the session grid.
    pub sentiment: Option<PathBuf>,
    pub price: Option<PathBuf>,
    pub volatility: Option<PathBuf>,
    /// Bar spacing of the observations; `None` uses the model default.
    pub dt: Option<f64>,
    pub vix_convention: VixConvention,
    pub calendar: SessionCalendar,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            observations: None,
            sentiment: None,
            price: None,
            volatility: None,
            dt: None,
            vix_convention: VixConvention::LogvarAnnual,
            calendar: SessionCalendar::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSection {
    pub n_reps: usize,
    pub n_bars: usize,
    pub data_substeps: usize,
    /// 1000 replications of 6500 bars.
    pub full_scale: bool,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        BootstrapSection {
            n_reps: 100,
            n_bars: 2000,
            data_substeps: 10,
            full_scale: false,
        }
    }
}

impl BootstrapSection {
    pub const FULL_SCALE_REPS: usize = 1000;
    pub const FULL_SCALE_BARS: usize = 6500;

    pub fn resolved(&self) -> (usize, usize) {
        if self.full_scale {
            (Self::FULL_SCALE_REPS, Self::FULL_SCALE_BARS)
        } else {
            (self.n_reps, self.n_bars)
        }
    }

    pub fn to_config(&self, seed: u64, initial: ProcessState, estimator: &EstimatorConfig) -> BootstrapConfig {
        BootstrapConfig {
            n_reps: self.resolved().0,
            master_seed: seed,
            initial,
            data_substeps: self.data_substeps,
            estimator: estimator.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SentimentSection {
    pub train: TrainConfig,
    /// Penalties tried by cross-validation; empty trains at `train.lambda`.
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    /// Field separator of the labeled sentence file.
    pub delimiter: char,
    pub empty_bars: EmptyBarPolicy,
}

impl Default for SentimentSection {
    fn default() -> Self {
        SentimentSection {
            train: TrainConfig::default(),
            lambda_grid: vec![1e-2, 1e-3, 1e-4],
            folds: 5,
            delimiter: ',',
            empty_bars: EmptyBarPolicy::Zero,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SsvError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.ou_params.validate()?;
        self.estimator.validate()?;
        self.sentiment.train.validate()?;
        self.data.calendar.validate()?;
        if self.threads == Some(0) {
            return Err(SsvError::Config("threads must be >= 1".into()));
        }
        if let Some(dt) = self
            .simulate
            .dt
            .into_iter()
            .chain(self.data.dt)
            .find(|d| !(*d > 0.0 && d.is_finite()))
        {
            return Err(SsvError::Config(format!("dt must be positive, got {dt}")));
        }
        if self.moments.horizons.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(SsvError::Config("moment horizons must be finite and >= 0".into()));
        }
        if self.sentiment.folds < 2 {
            return Err(SsvError::Config("folds must be >= 2".into()));
        }
        Ok(())
    }
}
