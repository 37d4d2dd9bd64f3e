use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use crate::backend::{compute_eer, cosine_score, EerResult, EmbeddingSet, PldaModel};
use crate::corpus::TrialList;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub enum Scorer<'a, T> {
    Cosine,
    Plda(&'a PldaModel<T>),
}

impl<T: Scalar> Scorer<'_, T> {
    pub fn score(&self, enroll: &[T], test: &[T]) -> Result<f64> {
        match self {
            Scorer::Cosine => cosine_score(enroll, test).map(|s| s.as_f64()),
            Scorer::Plda(m) => m.score(enroll, test).map(|s| s.as_f64()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialScore {
    pub enroll: String,
    pub test: String,
    pub score: f64,
    pub is_target: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialScoreSet {
    pub scores: Vec<TrialScore>,
    /// Trials naming an utterance without an embedding.
    pub missing: usize,
}

impl TrialScoreSet {
    pub fn eer(&self) -> Result<EerResult> {
        let (t, i): (Vec<&TrialScore>, Vec<&TrialScore>) =
            self.scores.iter().partition(|s| s.is_target);
        compute_eer(
            &t.iter().map(|s| s.score).collect::<Vec<_>>(),
            &i.iter().map(|s| s.score).collect::<Vec<_>>(),
        )
    }
}

pub fn score_trials<T: Scalar>(
    scorer: &Scorer<'_, T>,
    set: &EmbeddingSet<T>,
    trials: &TrialList,
) -> Result<TrialScoreSet> {
    let mut out = TrialScoreSet::default();
    for t in &trials.trials {
        let (Some(e), Some(v)) = (set.get(&t.enroll), set.get(&t.test)) else {
            out.missing += 1;
            continue;
        };
        out.scores.push(TrialScore {
            enroll: t.enroll.clone(),
            test: t.test.clone(),
            score: scorer.score(e, v)?,
            is_target: t.is_target,
        });
    }
    Ok(out)
}

/// `enroll test score` lines.
pub fn write_scores(path: impl AsRef<Path>, scores: &TrialScoreSet) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for s in &scores.scores {
        writeln!(out, "{} {} {:e}", s.enroll, s.test, s.score).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a score file and attaches target flags from the trial list.
pub fn read_scores(path: impl AsRef<Path>, trials: &TrialList) -> Result<TrialScoreSet> {
    let path = path.as_ref();
    let targets: std::collections::HashMap<(&str, &str), bool> = trials
        .trials
        .iter()
        .map(|t| ((t.enroll.as_str(), t.test.as_str()), t.is_target))
        .collect();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = TrialScoreSet::default();
    for (no, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        let bad = |why: &str| Error::format(path, format!("line {}: {why}", no + 1));
        let [enroll, test, score] = f[..] else {
            return Err(bad("expected `enroll test score`"));
        };
        let score: f64 = score.parse().map_err(|_| bad("bad score"))?;
        let is_target = *targets
            .get(&(enroll, test))
            .ok_or_else(|| bad("pair not in the trial list"))?;
        out.scores.push(TrialScore {
            enroll: enroll.into(),
            test: test.into(),
            score,
            is_target,
        });
    }
    Ok(out)
}
