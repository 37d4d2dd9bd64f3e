use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::corpus::{RateLabel, UtteranceRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub enroll: String,
    pub test: String,
    pub is_target: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrialList {
    pub trials: Vec<Trial>,
}

impl TrialList {
    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn n_targets(&self) -> usize {
        self.trials.iter().filter(|t| t.is_target).count()
    }
}

/// Chooses which utterances take part on one side of a trial list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateSelector {
    Label(RateLabel),
    /// Utterances produced with this exact scale factor (matched on the 0.1 grid).
    Alpha(f64),
}

impl RateSelector {
    pub fn matches(&self, r: &UtteranceRecord) -> bool {
        match *self {
            RateSelector::Label(l) => r.rate_label == l,
            RateSelector::Alpha(a) => (r.alpha - a).abs() < 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrialOptions {
    /// Also drop pairs whose two sides derive from the same recording
    /// (an original and its time-scaled copy).
    pub exclude_same_source: bool,
}

/// Full cross-product of enrollment and test utterances, self-pairs excluded.
pub fn make_trials(
    test_manifest: &[UtteranceRecord],
    enroll_rate: RateSelector,
    test_rate: RateSelector,
) -> Result<TrialList> {
    make_trials_with(test_manifest, enroll_rate, test_rate, TrialOptions::default())
}

pub fn make_trials_with(
    test_manifest: &[UtteranceRecord],
    enroll_rate: RateSelector,
    test_rate: RateSelector,
    opts: TrialOptions,
) -> Result<TrialList> {
    if test_manifest.is_empty() {
        return Err(Error::EmptyTrials("test manifest is empty".into()));
    }
    let speakers: BTreeSet<&str> = test_manifest.iter().map(|r| r.speaker_id.as_str()).collect();
    if speakers.len() < 2 {
        return Err(Error::EmptyTrials(
            "need at least two speakers for impostor trials".into(),
        ));
    }
    let enroll: Vec<&UtteranceRecord> =
        test_manifest.iter().filter(|r| enroll_rate.matches(r)).collect();
    let test: Vec<&UtteranceRecord> =
        test_manifest.iter().filter(|r| test_rate.matches(r)).collect();
    if enroll.is_empty() {
        return Err(Error::EmptyTrials(format!("no enrollment utterances match {enroll_rate:?}")));
    }
    if test.is_empty() {
        return Err(Error::EmptyTrials(format!("no test utterances match {test_rate:?}")));
    }

    let mut trials = Vec::with_capacity(enroll.len() * test.len());
    for e in &enroll {
        for t in &test {
            if e.utt_id == t.utt_id {
                continue;
            }
            if opts.exclude_same_source && e.source_utt() == t.source_utt() {
                continue;
            }
            trials.push(Trial {
                enroll: e.utt_id.clone(),
                test: t.utt_id.clone(),
                is_target: e.speaker_id == t.speaker_id,
            });
        }
    }
    let list = TrialList { trials };
    let n_target = list.n_targets();
    if n_target == 0 || n_target == list.len() {
        return Err(Error::EmptyTrials(format!(
            "{} trials with {} targets; need both target and impostor trials",
            list.len(),
            n_target
        )));
    }
    Ok(list)
}

/// Writes `enroll<SP>test<SP>target|nontarget` lines.
pub fn write_trials(path: impl AsRef<Path>, list: &TrialList) -> Result<()> {
    let path = path.as_ref();
    let mut out =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for t in &list.trials {
        let tag = if t.is_target { "target" } else { "nontarget" };
        writeln!(out, "{} {} {}", t.enroll, t.test, tag).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trials(path: impl AsRef<Path>) -> Result<TrialList> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut trials = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(' ').collect();
        let is_target = match cols.as_slice() {
            [_, _, "target"] => true,
            [_, _, "nontarget"] => false,
            _ => {
                return Err(Error::format(
                    path,
                    format!("line {}: expected `enroll test target|nontarget`", i + 1),
                ))
            }
        };
        trials.push(Trial {
            enroll: cols[0].to_string(),
            test: cols[1].to_string(),
            is_target,
        });
    }
    Ok(TrialList { trials })
}
