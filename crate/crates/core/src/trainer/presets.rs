use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DecompositionKind, ModelConfig};
use crate::trainer::TrainConfig;

/// Which utterances a system is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingData {
    /// Original-rate utterances only.
    Original,
    /// Originals plus the time-stretched copies.
    Augmented,
    /// Natively slow, normal and fast recordings.
    AllRates,
    /// Natively normal recordings only.
    NormalOnly,
    /// Normal recordings plus time-stretched copies at 0.8, 0.9, 1.1 and 1.2.
    NormalPlusTsm,
}

/// Compared systems. S1..S5 use the stretched protocol, S6..S12 the
/// native-rate one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SystemPreset {
    Baseline,
    TsmAug,
    FdAtt,
    AlCos,
    FdAl,
    RatesBaseline,
    NormalOnly,
    NormalTsm,
    RatesFdAtt,
    RatesAlCos,
    RatesFdAl,
}

impl SystemPreset {
    pub const ALL: [SystemPreset; 11] = [
        SystemPreset::Baseline,
        SystemPreset::TsmAug,
        SystemPreset::FdAtt,
        SystemPreset::AlCos,
        SystemPreset::FdAl,
        SystemPreset::RatesBaseline,
        SystemPreset::NormalOnly,
        SystemPreset::NormalTsm,
        SystemPreset::RatesFdAtt,
        SystemPreset::RatesAlCos,
        SystemPreset::RatesFdAl,
    ];

    pub fn system_id(self) -> &'static str {
        use SystemPreset::*;
        match self {
            Baseline => "S1",
            TsmAug => "S2",
            FdAtt => "S3",
            AlCos => "S4",
            FdAl => "S5",
            RatesBaseline => "S6",
            NormalOnly => "S7",
            NormalTsm => "S9",
            RatesFdAtt => "S10",
            RatesAlCos => "S11",
            RatesFdAl => "S12",
        }
    }

    pub fn name(self) -> &'static str {
        use SystemPreset::*;
        match self {
            Baseline => "baseline",
            TsmAug => "tsm-aug",
            FdAtt => "fd-att",
            AlCos => "al-cos",
            FdAl => "fd-al",
            RatesBaseline => "rates-baseline",
            NormalOnly => "normal-only",
            NormalTsm => "normal-tsm",
            RatesFdAtt => "rates-fd-att",
            RatesAlCos => "rates-al-cos",
            RatesFdAl => "rates-fd-al",
        }
    }

    pub fn native_rates(self) -> bool {
        use SystemPreset::*;
        matches!(
            self,
            RatesBaseline | NormalOnly | NormalTsm | RatesFdAtt | RatesAlCos | RatesFdAl
        )
    }

    pub fn decomposition(self) -> DecompositionKind {
        use SystemPreset::*;
        match self {
            FdAtt | FdAl | RatesFdAtt | RatesFdAl => DecompositionKind::Attention,
            AlCos | RatesAlCos => DecompositionKind::Parallel,
            _ => DecompositionKind::Identity,
        }
    }

    /// `(lambda1, lambda2)`
    pub fn lambdas(self) -> (f64, f64) {
        use SystemPreset::*;
        match self {
            FdAtt | RatesFdAtt => (0.1, 0.0),
            AlCos | FdAl | RatesAlCos | RatesFdAl => (0.1, 0.1),
            _ => (0.0, 0.0),
        }
    }

    pub fn training_data(self) -> TrainingData {
        use SystemPreset::*;
        match self {
            Baseline => TrainingData::Original,
            TsmAug | FdAtt | AlCos | FdAl => TrainingData::Augmented,
            NormalOnly => TrainingData::NormalOnly,
            NormalTsm => TrainingData::NormalPlusTsm,
            RatesBaseline | RatesFdAtt | RatesAlCos | RatesFdAl => TrainingData::AllRates,
        }
    }

    /// Writes the preset's architecture, loss weights and schedule switch
    /// into the configs; other fields are left alone.
    pub fn apply(self, model: &mut ModelConfig, train: &mut TrainConfig) {
        model.decomposition = self.decomposition();
        let (l1, l2) = self.lambdas();
        train.loss.lambda1 = l1;
        train.loss.lambda2 = l2;
        train.schedule.adversarial = l2 > 0.0;
    }
}

impl fmt::Display for SystemPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        SystemPreset::ALL
            .into_iter()
            .find(|p| p.name() == t || p.system_id().eq_ignore_ascii_case(&t))
            .ok_or_else(|| {
                let known: Vec<&str> = SystemPreset::ALL.iter().map(|p| p.name()).collect();
                Error::Config(format!("unknown preset `{s}` (known: {})", known.join(", ")))
            })
    }
}

impl TryFrom<String> for SystemPreset {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SystemPreset> for String {
    fn from(p: SystemPreset) -> String {
        p.name().to_string()
    }
}
