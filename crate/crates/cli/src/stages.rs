//! The pipeline stages. Each reads its predecessor's files from the work
//! directory, writes its own, and records a stamp when it finishes.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};

use ratesv::backend::{
    rate_sweep_report, read_embeddings, read_scores, write_embeddings, write_scores, RateTable,
    Scorer,
};
use ratesv::corpus::{
    load_wav, read_manifest, read_trials, save_wav, write_manifest, write_trials, UtteranceRecord,
};
use ratesv::experiment::{
    augment_train, column_labels, conditions, embed, fit_plda, score_condition, select_training,
    stretch_test_set, synth_toy_corpus, CorpusUtterance, ExperimentConfig, Protocol,
};
use ratesv::features::{extract_features, read_archive, read_archive_index, write_archive, FeatureMatrix};
use ratesv::model::{load_checkpoint, save_checkpoint, CheckpointMeta};
use ratesv::trainer::{run_training, SystemPreset, TrainStatus, TrainingSet};

use crate::config::FileConfig;
use crate::stamp::{clear_stamp, read_stamp, require, write_stamp, KeyBuilder};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub struct Context {
    pub file: FileConfig,
    pub exp: ExperimentConfig,
    pub workdir: PathBuf,
    pub corpus_dir: PathBuf,
    /// Rerun stages even when their stamp is current.
    pub force: bool,
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| CliError::io(p, e))
}

fn write_text(p: &Path, text: &str) -> Result<()> {
    std::fs::write(p, text).map_err(|e| CliError::io(p, e))
}

fn stage_of(preset: SystemPreset, stage: &str) -> String {
    format!("{stage}.{}", preset.name())
}

impl Context {
    pub fn new(file: FileConfig, workdir: Option<PathBuf>, seed: Option<u64>) -> Result<Self> {
        let mut file = file;
        if let Some(s) = seed {
            file.seed = s;
        }
        let exp = file.experiment();
        exp.validate()?;
        let workdir = workdir
            .or_else(|| file.paths.workdir.clone())
            .unwrap_or_else(|| PathBuf::from("work"));
        let workdir = std::path::absolute(&workdir).map_err(|e| CliError::io(&workdir, e))?;
        let corpus_dir = match &file.paths.corpus {
            Some(p) => std::path::absolute(p).map_err(|e| CliError::io(p, e))?,
            None => workdir.join("corpus"),
        };
        Ok(Context {
            file,
            exp,
            workdir,
            corpus_dir,
            force: false,
        })
    }

    fn dir(&self, name: &str) -> PathBuf {
        self.workdir.join(name)
    }

    fn synth_key(&self) -> Result<String> {
        Ok(KeyBuilder::new("synth", &[])
            .with("seed", &self.exp.seed)?
            .with("protocol", &self.exp.protocol)?
            .with("corpus", &self.exp.corpus)?
            .finish())
    }

    fn augment_key(&self) -> Result<String> {
        Ok(KeyBuilder::new("augment", &[&self.synth_key()?])
            .with("tsm", &self.exp.tsm)?
            .finish())
    }

    fn featurize_key(&self) -> Result<String> {
        Ok(KeyBuilder::new("featurize", &[&self.augment_key()?])
            .with("features", &self.exp.features)?
            .finish())
    }

    fn train_key(&self, p: SystemPreset) -> Result<String> {
        let (model, train) = self.exp.for_system(p);
        Ok(KeyBuilder::new("train", &[&self.featurize_key()?])
            .with("preset", &p)?
            .with("model", &model)?
            .with("train", &train)?
            .finish())
    }

    fn extract_key(&self, p: SystemPreset) -> Result<String> {
        Ok(KeyBuilder::new("extract", &[&self.train_key(p)?]).finish())
    }

    fn score_key(&self, p: SystemPreset) -> Result<String> {
        Ok(KeyBuilder::new("score", &[&self.extract_key(p)?])
            .with("backend", &self.exp.backend)?
            .with("plda", &self.exp.plda)?
            .finish())
    }

    fn report_key(&self) -> Result<String> {
        let keys = self
            .exp
            .systems
            .iter()
            .map(|&p| self.score_key(p))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&str> = keys.iter().map(String::as_str).collect();
        Ok(KeyBuilder::new("report", &refs).finish())
    }

    /// Runs `body` unless the stamp already matches `key` and every output
    /// exists. Returns whether the stage ran.
    fn stage(
        &self,
        stamp: &str,
        key: &str,
        outputs: &[PathBuf],
        body: impl FnOnce() -> Result<()>,
    ) -> Result<bool> {
        let current = read_stamp(&self.workdir, stamp).as_deref() == Some(key);
        if current && !self.force && outputs.iter().all(|p| p.exists()) {
            info!("{stamp}: up to date, nothing to do");
            return Ok(false);
        }
        info!("{stamp}: running");
        clear_stamp(&self.workdir, stamp)?;
        body()?;
        write_stamp(&self.workdir, stamp, key)?;
        info!("{stamp}: done");
        Ok(true)
    }

    fn corpus_manifests(&self) -> (PathBuf, PathBuf) {
        (self.corpus_dir.join("train.lst"), self.corpus_dir.join("test.lst"))
    }

    fn augment_manifests(&self) -> (PathBuf, PathBuf) {
        let d = self.dir("augment");
        (d.join("train.lst"), d.join("test.lst"))
    }

    fn archive(&self) -> (PathBuf, PathBuf) {
        let d = self.dir("features");
        (d.join("feats.ark"), d.join("feats.idx"))
    }

    fn checkpoint(&self, p: SystemPreset) -> PathBuf {
        self.dir("models").join(format!("{}.ckpt", p.name()))
    }

    fn embeddings(&self, p: SystemPreset) -> (PathBuf, PathBuf) {
        let d = self.dir("embeddings");
        (
            d.join(format!("{}.train.emb", p.name())),
            d.join(format!("{}.test.emb", p.name())),
        )
    }

    fn score_dir(&self, p: SystemPreset) -> PathBuf {
        self.dir("scores").join(p.name())
    }

    pub fn synth(&self) -> Result<bool> {
        let key = self.synth_key()?;
        let (train_lst, test_lst) = self.corpus_manifests();
        self.stage("synth", &key, &[train_lst.clone(), test_lst.clone()], || {
            let corpus = synth_toy_corpus(&self.exp.corpus, self.exp.protocol, self.exp.seed)?;
            for (split, utts, lst) in [
                ("train", &corpus.train, &train_lst),
                ("test", &corpus.test, &test_lst),
            ] {
                let mut records = Vec::with_capacity(utts.len());
                for u in utts {
                    let path = self.corpus_dir.join(split).join(&u.record.path);
                    mkdir(path.parent().expect("audio path has a directory"))?;
                    save_wav(&path, &u.clip)?;
                    records.push(UtteranceRecord {
                        path,
                        ..u.record.clone()
                    });
                }
                write_manifest(lst, &records)?;
                info!("synth: {} {split} utterances", records.len());
            }
            Ok(())
        })
    }

    fn load_split(&self, manifest: &Path) -> Result<Vec<CorpusUtterance>> {
        read_manifest(manifest)?
            .into_iter()
            .map(|record| {
                let clip = load_wav(&record.path)?;
                Ok(CorpusUtterance { record, clip })
            })
            .collect()
    }

    pub fn augment(&self) -> Result<bool> {
        require(&self.workdir, "synth", "synth", &self.synth_key()?)?;
        let key = self.augment_key()?;
        let (train_lst, test_lst) = self.augment_manifests();
        self.stage("augment", &key, &[train_lst.clone(), test_lst.clone()], || {
            let (src_train, src_test) = self.corpus_manifests();
            let train = self.load_split(&src_train)?;
            let test = self.load_split(&src_test)?;
            let extra_train = augment_train(&train, self.exp.protocol, &self.exp.tsm, self.exp.seed)?;
            let extra_test = match self.exp.protocol {
                Protocol::Stretched => stretch_test_set(&test, &self.exp.corpus.test_alphas, &self.exp.tsm)?,
                Protocol::NativeRates => Vec::new(),
            };
            let wav_dir = self.dir("augment").join("wav");
            mkdir(&wav_dir)?;
            for (base, extra, lst) in [(&train, &extra_train, &train_lst), (&test, &extra_test, &test_lst)] {
                let mut records: Vec<UtteranceRecord> = base.iter().map(|u| u.record.clone()).collect();
                for u in extra {
                    let path = wav_dir.join(format!("{}.wav", u.record.utt_id));
                    save_wav(&path, &u.clip)?;
                    records.push(UtteranceRecord {
                        path,
                        ..u.record.clone()
                    });
                }
                write_manifest(lst, &records)?;
            }
            info!(
                "augment: {} training and {} test copies",
                extra_train.len(),
                extra_test.len()
            );
            Ok(())
        })
    }

    pub fn featurize(&self) -> Result<bool> {
        require(&self.workdir, "augment", "augment", &self.augment_key()?)?;
        let key = self.featurize_key()?;
        let (ark, idx) = self.archive();
        self.stage("featurize", &key, &[ark.clone(), idx.clone()], || {
            let (train_lst, test_lst) = self.augment_manifests();
            let mut mats = Vec::new();
            let mut errors = String::new();
            for r in read_manifest(&train_lst)?.into_iter().chain(read_manifest(&test_lst)?) {
                match load_wav(&r.path).and_then(|c| extract_features(&c, &self.exp.features, &r.utt_id)) {
                    Ok(m) => mats.push(m),
                    Err(e) => {
                        warn!("featurize: skipping {}: {e}", r.utt_id);
                        let _ = writeln!(errors, "{}\t{e}", r.utt_id);
                    }
                }
            }
            if mats.is_empty() {
                return Err(CliError::Data("no utterance produced features".into()));
            }
            mkdir(&self.dir("features"))?;
            write_archive(&ark, &idx, &mats)?;
            write_text(&self.dir("features").join("errors.txt"), &errors)?;
            info!("featurize: {} matrices", mats.len());
            Ok(())
        })
    }

    fn features(&self) -> Result<HashMap<String, FeatureMatrix>> {
        let (ark, idx) = self.archive();
        let names = read_archive_index(&idx)?;
        let mats = read_archive(&ark, &idx)?;
        Ok(names.into_iter().map(|(n, _)| n).zip(mats).collect())
    }

    fn training_records(&self, p: SystemPreset) -> Result<Vec<UtteranceRecord>> {
        let all = read_manifest(self.augment_manifests().0)?;
        Ok(select_training(&all, p.training_data()))
    }

    pub fn train(&self, p: SystemPreset) -> Result<bool> {
        require(&self.workdir, "featurize", "featurize", &self.featurize_key()?)?;
        let key = self.train_key(p)?;
        let ckpt = self.checkpoint(p);
        self.stage(&stage_of(p, "train"), &key, &[ckpt.clone()], || {
            let (model, cfg) = self.exp.for_system(p);
            let feats = self.features()?;
            let records = self.training_records(p)?;
            let set = TrainingSet::new(&records, &feats, model.receptive_field());
            for (u, why) in &set.skipped {
                warn!("train: not using {u}: {why}");
            }
            info!(
                "train {}: {} utterances of {} speakers, {} steps",
                p.name(),
                set.items.len(),
                set.speakers.len(),
                cfg.iterations
            );
            let out = run_training::<f32>(&set, &model, &cfg, self.exp.seed, None)?;

            let mut log = String::new();
            for e in &out.log {
                let _ = writeln!(log, "{e}");
            }
            for e in &out.phase_evals {
                let _ = writeln!(
                    log,
                    "# {} {}-{} L_cos {:.6} -> {:.6}",
                    e.phase, e.first_step, e.last_step, e.start.l_cos, e.end.l_cos
                );
            }
            mkdir(&self.dir("models"))?;
            write_text(&self.dir("models").join(format!("{}.log", p.name())), &log)?;
            let mut meta = CheckpointMeta {
                seed: self.exp.seed,
                step: out.log.len() as u64,
                ..Default::default()
            };
            meta.extra.insert("preset".into(), p.name().into());
            save_checkpoint(&ckpt, &out.params, &meta)?;
            if let TrainStatus::Diverged { step, reason } = out.status {
                return Err(CliError::Diverged {
                    system: p.name().into(),
                    step,
                    reason,
                });
            }
            if let Some(last) = out.log.last() {
                info!("train {}: final {last}", p.name());
            }
            Ok(())
        })
    }

    pub fn extract(&self, p: SystemPreset) -> Result<bool> {
        require(
            &self.workdir,
            &stage_of(p, "train"),
            &format!("train --system {}", p.name()),
            &self.train_key(p)?,
        )?;
        let key = self.extract_key(p)?;
        let (train_emb, test_emb) = self.embeddings(p);
        self.stage(&stage_of(p, "extract"), &key, &[train_emb.clone(), test_emb.clone()], || {
            let params = load_checkpoint(self.checkpoint(p))?.params;
            let feats = self.features()?;
            let train = self.training_records(p)?;
            let test = read_manifest(self.augment_manifests().1)?;
            mkdir(&self.dir("embeddings"))?;
            write_embeddings(&train_emb, &embed(&params, &train, &feats)?)?;
            write_embeddings(&test_emb, &embed(&params, &test, &feats)?)?;
            Ok(())
        })
    }

    pub fn score(&self, p: SystemPreset) -> Result<bool> {
        require(
            &self.workdir,
            &stage_of(p, "extract"),
            &format!("extract --system {}", p.name()),
            &self.extract_key(p)?,
        )?;
        let key = self.score_key(p)?;
        let dir = self.score_dir(p);
        self.stage(&stage_of(p, "score"), &key, &[dir.clone()], || {
            let (train_emb, test_emb) = self.embeddings(p);
            let test_set = read_embeddings::<f64>(&test_emb)?;
            let plda = match self.exp.backend {
                ratesv::experiment::BackendKind::Cosine => None,
                ratesv::experiment::BackendKind::Plda => {
                    let train_set = read_embeddings::<f64>(&train_emb)?;
                    Some(fit_plda(&self.training_records(p)?, &train_set, &self.exp.plda)?)
                }
            };
            let scorer = match &plda {
                Some(m) => Scorer::Plda(m),
                None => Scorer::Cosine,
            };
            let test = read_manifest(self.augment_manifests().1)?;
            if dir.exists() {
                std::fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
            }
            mkdir(&dir)?;
            for c in conditions(self.exp.protocol, &self.exp.corpus.test_alphas) {
                match score_condition(&scorer, &test, &test_set, &c) {
                    Ok((trials, scores)) => {
                        if scores.missing > 0 {
                            warn!("score {} {}: {} trials lack embeddings", p.name(), c.label, scores.missing);
                        }
                        write_trials(dir.join(format!("{}.trials", c.label)), &trials)?;
                        write_scores(dir.join(format!("{}.scores", c.label)), &scores)?;
                    }
                    Err(e) => {
                        warn!("score {} {}: {e}", p.name(), c.label);
                        write_text(&dir.join(format!("{}.err", c.label)), &format!("{e}\n"))?;
                    }
                }
            }
            Ok(())
        })
    }

    fn cell(&self, p: SystemPreset, label: &str) -> std::result::Result<f64, String> {
        let dir = self.score_dir(p);
        let err = dir.join(format!("{label}.err"));
        if let Ok(msg) = std::fs::read_to_string(&err) {
            return Err(msg.trim().to_string());
        }
        let trials = read_trials(dir.join(format!("{label}.trials"))).map_err(|e| e.to_string())?;
        let scores = read_scores(dir.join(format!("{label}.scores")), &trials).map_err(|e| e.to_string())?;
        scores.eer().map(|e| e.eer).map_err(|e| e.to_string())
    }

    pub fn report_table(&self) -> RateTable {
        let labels = column_labels(&self.exp);
        let rows = self
            .exp
            .systems
            .iter()
            .map(|&p| {
                let cells = labels.iter().map(|l| self.cell(p, l)).collect();
                (format!("{}:{}", p.system_id(), p.name()), cells)
            })
            .collect();
        rate_sweep_report(labels, rows, self.exp.protocol == Protocol::NativeRates)
    }

    /// Writes the table files and returns the text table.
    pub fn report(&self) -> Result<String> {
        for &p in &self.exp.systems {
            require(
                &self.workdir,
                &stage_of(p, "score"),
                &format!("score --system {}", p.name()),
                &self.score_key(p)?,
            )?;
        }
        let key = self.report_key()?;
        let dir = self.dir("report");
        let (txt, svg) = (dir.join("table.txt"), dir.join("table.svg"));
        self.stage("report", &key, &[txt.clone(), svg.clone()], || {
            let table = self.report_table();
            mkdir(&dir)?;
            write_text(&txt, &table.to_text())?;
            write_text(&svg, &table.to_svg())?;
            Ok(())
        })?;
        std::fs::read_to_string(&txt).map_err(|e| CliError::io(&txt, e))
    }

    pub fn systems(&self, requested: &[SystemPreset]) -> Result<Vec<SystemPreset>> {
        if requested.is_empty() {
            return Ok(self.exp.systems.clone());
        }
        for p in requested {
            if !self.exp.systems.contains(p) {
                return Err(CliError::Config(format!(
                    "system `{}` is not listed in `systems` of the config",
                    p.name()
                )));
            }
        }
        Ok(requested.to_vec())
    }

    pub fn run_all(&self) -> Result<String> {
        self.synth()?;
        self.augment()?;
        self.featurize()?;
        for &p in &self.exp.systems {
            self.train(p)?;
            self.extract(p)?;
            self.score(p)?;
        }
        self.report()
    }
}
