use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance from 1.0 within which a scale factor counts as the original rate.
pub const NORMAL_ALPHA_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateLabel {
    Slow,
    Normal,
    Fast,
}

impl RateLabel {
    pub const ALL: [RateLabel; 3] = [RateLabel::Slow, RateLabel::Normal, RateLabel::Fast];

    /// Total labeling rule: slower than the original is `Slow`, faster is `Fast`.
    pub fn from_alpha(alpha: f64) -> RateLabel {
        if (alpha - 1.0).abs() <= NORMAL_ALPHA_TOLERANCE {
            RateLabel::Normal
        } else if alpha < 1.0 {
            RateLabel::Slow
        } else {
            RateLabel::Fast
        }
    }

    /// Class index used by the rate head.
    pub fn index(self) -> usize {
        match self {
            RateLabel::Slow => 0,
            RateLabel::Normal => 1,
            RateLabel::Fast => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RateLabel::Slow => "slow",
            RateLabel::Normal => "normal",
            RateLabel::Fast => "fast",
        }
    }
}

impl fmt::Display for RateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RateLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slow" => Ok(RateLabel::Slow),
            "normal" => Ok(RateLabel::Normal),
            "fast" => Ok(RateLabel::Fast),
            other => Err(Error::Argument(format!("unknown rate label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceRecord {
    pub utt_id: String,
    pub speaker_id: String,
    pub path: PathBuf,
    pub alpha: f64,
    pub rate_label: RateLabel,
}

impl UtteranceRecord {
    pub fn new(
        utt_id: impl Into<String>,
        speaker_id: impl Into<String>,
        path: impl Into<PathBuf>,
        alpha: f64,
    ) -> Self {
        UtteranceRecord {
            utt_id: utt_id.into(),
            speaker_id: speaker_id.into(),
            path: path.into(),
            alpha,
            rate_label: RateLabel::from_alpha(alpha),
        }
    }

    /// Identifier of the recording this utterance was derived from. Augmented
    /// utterances carry a `_a{alpha}` suffix on their source id.
    pub fn source_utt(&self) -> &str {
        match self.utt_id.rfind("_a") {
            Some(pos)
                if self.utt_id[pos + 2..]
                    .parse::<f64>()
                    .map(|a| a > 0.0)
                    .unwrap_or(false) =>
            {
                &self.utt_id[..pos]
            }
            _ => &self.utt_id,
        }
    }
}

/// Scale factors keyed by utterance id; anything absent is an original (1.0).
#[derive(Debug, Clone, Default)]
pub struct AlphaMap(pub HashMap<String, f64>);

impl AlphaMap {
    pub fn get(&self, utt_id: &str) -> f64 {
        self.0.get(utt_id).copied().unwrap_or(1.0)
    }
}

#[derive(Debug, Default)]
pub struct ManifestScan {
    pub records: Vec<UtteranceRecord>,
    /// Files that could not be read, with the reason.
    pub errors: Vec<(PathBuf, String)>,
    pub warning: Option<String>,
}

/// Scans `root/<speaker_id>/<utt>.wav` and builds one record per readable file.
pub fn build_manifest(root: impl AsRef<Path>, labeling: &AlphaMap) -> Result<ManifestScan> {
    let root = root.as_ref();
    let mut scan = ManifestScan::default();
    let mut speakers: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    speakers.sort();

    for spk_dir in speakers {
        let speaker_id = spk_dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut files: Vec<PathBuf> = match std::fs::read_dir(&spk_dir) {
            Ok(rd) => rd
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "wav"))
                .collect(),
            Err(e) => {
                scan.errors.push((spk_dir.clone(), e.to_string()));
                continue;
            }
        };
        files.sort();
        for path in files {
            if let Err(e) = hound::WavReader::open(&path) {
                scan.errors.push((path, e.to_string()));
                continue;
            }
            let utt_id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let alpha = labeling.get(&utt_id);
            scan.records
                .push(UtteranceRecord::new(utt_id, speaker_id.clone(), path, alpha));
        }
    }
    if scan.records.is_empty() {
        let msg = format!("no utterances found under {}", root.display());
        log::warn!("{msg}");
        scan.warning = Some(msg);
    }
    Ok(scan)
}

/// Writes `utt_id<TAB>speaker_id<TAB>path<TAB>alpha<TAB>rate_label` lines.
pub fn write_manifest(path: impl AsRef<Path>, records: &[UtteranceRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.utt_id,
            r.speaker_id,
            r.path.display(),
            r.alpha,
            r.rate_label
        )
        .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<UtteranceRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |why: &str| Error::format(path, format!("line {}: {why}", lineno + 1));
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(bad(&format!("expected 5 tab-separated columns, got {}", cols.len())));
        }
        let alpha: f64 = cols[3].parse().map_err(|_| bad("alpha is not a number"))?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(bad("alpha must be positive"));
        }
        let label: RateLabel = cols[4].parse().map_err(|_| bad("unknown rate label"))?;
        if label != RateLabel::from_alpha(alpha) {
            return Err(bad(&format!("rate label `{label}` disagrees with alpha {alpha}")));
        }
        records.push(UtteranceRecord {
            utt_id: cols[0].to_string(),
            speaker_id: cols[1].to_string(),
            path: PathBuf::from(cols[2]),
            alpha,
            rate_label: label,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{save_wav, AudioClip};

    #[test]
    fn labels_follow_alpha() {
        assert_eq!(RateLabel::from_alpha(0.8), RateLabel::Slow);
        assert_eq!(RateLabel::from_alpha(1.3), RateLabel::Fast);
        assert_eq!(RateLabel::from_alpha(1.0), RateLabel::Normal);
        assert_eq!(RateLabel::from_alpha(1.0 + 5e-10), RateLabel::Normal);
        assert_eq!(RateLabel::from_alpha(1.0 + 1e-6), RateLabel::Fast);
    }

    #[test]
    fn source_utt_strips_alpha_suffix() {
        let r = UtteranceRecord::new("spk1_u03_a0.5", "spk1", "x.wav", 0.5);
        assert_eq!(r.source_utt(), "spk1_u03");
        let r = UtteranceRecord::new("my_audio", "spk1", "x.wav", 1.0);
        assert_eq!(r.source_utt(), "my_audio");
    }

    #[test]
    fn scans_speaker_directories() {
        let dir = tempfile::tempdir().unwrap();
        let clip = AudioClip::new(vec![0.1; 800], 16000).unwrap();
        for s in 0..3 {
            let spk = dir.path().join(format!("spk{s}"));
            std::fs::create_dir(&spk).unwrap();
            for u in 0..2 {
                save_wav(spk.join(format!("spk{s}_u{u}.wav")), &clip).unwrap();
            }
        }
        std::fs::write(dir.path().join("spk1").join("broken.wav"), b"nope").unwrap();
        let mut alphas = AlphaMap::default();
        alphas.0.insert("spk0_u1".into(), 0.8);
        let scan = build_manifest(dir.path(), &alphas).unwrap();
        assert_eq!(scan.records.len(), 6);
        let speakers: std::collections::BTreeSet<_> =
            scan.records.iter().map(|r| r.speaker_id.clone()).collect();
        assert_eq!(speakers.len(), 3);
        assert_eq!(scan.errors.len(), 1);
        let r = scan.records.iter().find(|r| r.utt_id == "spk0_u1").unwrap();
        assert_eq!(r.rate_label, RateLabel::Slow);
    }

    #[test]
    fn empty_directory_warns() {
        let dir = tempfile::tempdir().unwrap();
        let scan = build_manifest(dir.path(), &AlphaMap::default()).unwrap();
        assert!(scan.records.is_empty());
        assert!(scan.warning.is_some());
    }

    #[test]
    fn manifest_file_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.tsv");
        let recs = vec![
            UtteranceRecord::new("a", "s1", "/x/a.wav", 1.0),
            UtteranceRecord::new("a_a1.3", "s1", "/x/a_a1.3.wav", 1.3),
        ];
        write_manifest(&p, &recs).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), "a\ts1\t/x/a.wav\t1\tnormal");
        assert_eq!(read_manifest(&p).unwrap(), recs);

        std::fs::write(&p, "a\ts1\t/x/a.wav\t0.7\tfast\n").unwrap();
        assert!(read_manifest(&p).is_err());
    }
}
