use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, TrainingMode};
use super::data::FeatureStore;
use super::report;
use crate::corpus::{build_dataset, derive_seed, format_snr, Dataset, DATASET_FILE};
use crate::dsp::baseline_f0;
use crate::error::{Error, Result};
use crate::init::{pretrain_autoassociative, transfer_weights, PretrainConfig};
use crate::lstm::{
    init_random, predict, sse_loss, train, InitKind, LstmWeights, Model, Normalizer, Stage,
    TrainConfig, TrainRecord,
};
use crate::metrics::{
    default_voicing_threshold, track_from_outputs, EvalReport, F0Track, FrameCounts, System,
};
use crate::par::{self, Exec};

const TAG_THETA_R: u64 = 11;
const TAG_PRETRAIN: u64 = 12;
const TAG_CELL: u64 = 13;

pub const THETA_A_FILE: &str = "models/theta_a.bin";
pub const THETA_R_FILE: &str = "models/theta_r.bin";
pub const PRETRAIN_RECORD: &str = "records/pretrain.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_SNAPSHOT: &str = "config.toml";

/// One detector training run: an initialization at one noise condition.
/// `snr_db = None` is the pooled condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub init: InitKind,
    pub snr_db: Option<f64>,
}

impl Cell {
    pub fn system(&self) -> System {
        match self.init {
            InitKind::Random => System::Lstm,
            InitKind::AutoAssociative => System::LstmAa,
        }
    }

    fn condition(&self) -> String {
        match self.snr_db {
            Some(s) => format!("snr_{}", format_snr(s)),
            None => "pooled".to_string(),
        }
    }

    /// `lstm_snr_0`, `lstm_aa_pooled`, ...
    pub fn name(&self) -> String {
        let prefix = match self.init {
            InitKind::Random => "lstm",
            InitKind::AutoAssociative => "lstm_aa",
        };
        format!("{prefix}_{}", self.condition())
    }

    /// Curve file stem, `random_snr_0` or `auto_assoc_snr_0`.
    pub fn curve_name(&self) -> String {
        let prefix = match self.init {
            InitKind::Random => "random",
            InitKind::AutoAssociative => "auto_assoc",
        };
        format!("{prefix}_{}", self.condition())
    }

    pub fn model_path(&self) -> String {
        format!("models/{}.bin", self.name())
    }

    pub fn record_path(&self) -> String {
        format!("records/{}.json", self.name())
    }

    pub fn curve_path(&self) -> String {
        format!("curves/{}.csv", self.curve_name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub cell: Cell,
    pub shuffle_seed: u64,
    pub record: TrainRecord,
    /// ‖θ_start − θ_f‖ in parameter space.
    pub distance_to_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub cell: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub name: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub dataset_dir: PathBuf,
    pub seeds: Vec<SeedRecord>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<PathBuf>,
    pub timings: Vec<Timing>,
    pub pretrain: Option<TrainRecord>,
    pub cells: Vec<CellRecord>,
    pub reports: Vec<EvalReport>,
    pub incomplete: Vec<Failure>,
}

impl RunManifest {
    pub fn is_complete(&self) -> bool {
        self.incomplete.is_empty()
    }

    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn timing(stage: &str, since: Instant) -> Timing {
    Timing {
        stage: stage.to_string(),
        seconds: since.elapsed().as_secs_f64(),
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// The experiment driver. Each stage reads its inputs from and writes its
/// outputs to the output directory, so stages can run separately.
#[derive(Debug, Clone)]
pub struct Experiment {
    cfg: ExperimentConfig,
    exec: Exec,
}

/// Corpus features loaded for training and evaluation.
pub struct Prepared {
    pub dataset: Dataset,
    pub store: FeatureStore,
    pub normalizer: Normalizer,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig, exec: Exec) -> Result<Self> {
        cfg.validate()?;
        Ok(Experiment { cfg, exec })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.cfg.output_dir.join(rel)
    }

    fn ensure_dirs(&self) -> Result<()> {
        for d in ["models", "records", "curves", "reports"] {
            let p = self.path(d);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }

    pub fn theta_r_seed(&self) -> u64 {
        derive_seed(self.cfg.master_seed, &[TAG_THETA_R])
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            seed: derive_seed(
                self.cfg.master_seed,
                &[TAG_PRETRAIN, self.cfg.pretrain.seed],
            ),
            ..self.cfg.pretrain.clone()
        }
    }

    /// Both initializations at one condition share the shuffle order.
    pub fn cell_train_config(&self, cell: &Cell) -> TrainConfig {
        let level = cell.snr_db.map_or(u64::MAX, f64::to_bits);
        TrainConfig {
            seed: derive_seed(
                self.cfg.master_seed,
                &[TAG_CELL, self.cfg.train.seed, level],
            ),
            ..self.cfg.train.clone()
        }
    }

    pub fn seeds(&self) -> Vec<SeedRecord> {
        let mut out = vec![
            SeedRecord {
                name: "master".into(),
                seed: self.cfg.master_seed,
            },
            SeedRecord {
                name: "theta_r".into(),
                seed: self.theta_r_seed(),
            },
            SeedRecord {
                name: "pretrain".into(),
                seed: self.pretrain_config().seed,
            },
        ];
        for c in self.cells() {
            out.push(SeedRecord {
                name: format!("{}_shuffle", c.name()),
                seed: self.cell_train_config(&c).seed,
            });
        }
        out
    }

    /// Detector runs implied by the requested systems and training mode.
    pub fn cells(&self) -> Vec<Cell> {
        let conditions: Vec<Option<f64>> = match self.cfg.training_mode {
            TrainingMode::Matched => self.cfg.snr_levels.iter().map(|&s| Some(s)).collect(),
            TrainingMode::Pooled => vec![None],
        };
        let mut out = Vec::new();
        for cond in conditions {
            for (system, init) in [
                (System::Lstm, InitKind::Random),
                (System::LstmAa, InitKind::AutoAssociative),
            ] {
                if self.cfg.wants(system) {
                    out.push(Cell { init, snr_db: cond });
                }
            }
        }
        out
    }

    /// The cell whose network is evaluated for `system` at `snr_db`.
    pub fn cell_for(&self, system: System, snr_db: f64) -> Option<Cell> {
        let init = match system {
            System::Baseline => return None,
            System::Lstm => InitKind::Random,
            System::LstmAa => InitKind::AutoAssociative,
        };
        let snr_db = match self.cfg.training_mode {
            TrainingMode::Matched => Some(snr_db),
            TrainingMode::Pooled => None,
        };
        Some(Cell { init, snr_db })
    }

    /// Loads the corpus if one built from the same settings exists, builds it
    /// otherwise.
    pub fn prepare_corpus(&self) -> Result<Dataset> {
        let root = self.cfg.dataset_dir();
        let corpus = self.cfg.corpus_config();
        if root.join(DATASET_FILE).exists() {
            let ds = Dataset::load(&root)?;
            if ds.corpus != corpus
                || ds.features != self.cfg.features
                || ds.master_seed != self.cfg.master_seed
            {
                return Err(Error::InvalidConfig(format!(
                    "dataset at {} was built with different settings",
                    root.display()
                )));
            }
            return Ok(ds);
        }
        build_dataset(
            &corpus,
            &self.cfg.features,
            self.cfg.master_seed,
            &root,
            self.exec,
        )
        .map_err(|e| e.context("corpus build"))
    }

    pub fn prepare(&self) -> Result<Prepared> {
        let dataset = self.prepare_corpus()?;
        let store = FeatureStore::load(
            &self.cfg.dataset_dir(),
            &dataset,
            &self.cfg.snr_levels,
            self.exec,
        )?;
        let normalizer = store.fit_normalizer(&dataset.train)?;
        Ok(Prepared {
            dataset,
            store,
            normalizer,
        })
    }

    fn model(
        &self,
        weights: LstmWeights,
        norm: &Normalizer,
        init: InitKind,
        stage: Stage,
    ) -> Model {
        Model {
            weights,
            normalizer: norm.clone(),
            init_kind: init,
            stage,
        }
    }

    pub fn theta_r(&self) -> Result<LstmWeights> {
        init_random(&self.cfg.arch()?, self.theta_r_seed())
    }

    /// Trains θ_A on clean training features and saves it with its record.
    pub fn pretrain(&self, data: &Prepared) -> Result<TrainRecord> {
        self.ensure_dirs()?;
        let norm = &data.normalizer;
        let train = data.store.clean_set(&data.dataset.train, norm)?;
        let val = data.store.clean_set(&data.dataset.validation, norm)?;
        let (theta_a, record) = pretrain_autoassociative(
            &self.cfg.arch()?,
            &train,
            &val,
            &self.pretrain_config(),
            self.exec,
        )
        .map_err(|e| e.context("pretraining"))?;
        self.model(theta_a, norm, InitKind::AutoAssociative, Stage::Pretrain)
            .save(&self.path(THETA_A_FILE))?;
        record.write_csv(&self.path("curves/pretrain.csv"))?;
        write_json(&self.path(PRETRAIN_RECORD), &record)?;
        Ok(record)
    }

    fn start_weights(&self, cell: &Cell) -> Result<LstmWeights> {
        let arch = self.cfg.arch()?;
        match cell.init {
            InitKind::Random => self.theta_r(),
            InitKind::AutoAssociative => {
                let path = self.path(THETA_A_FILE);
                if !path.exists() {
                    return Err(Error::MissingWeights(path.display().to_string()));
                }
                transfer_weights(&Model::load(&path)?.weights, &arch)
            }
        }
    }

    /// Trains one detector on (noisy, clean) pairs of its condition.
    pub fn train_cell(&self, data: &Prepared, cell: &Cell) -> Result<CellRecord> {
        self.ensure_dirs()?;
        let levels = match cell.snr_db {
            Some(s) => vec![s],
            None => self.cfg.snr_levels.clone(),
        };
        let norm = &data.normalizer;
        let train_set = data.store.pairs(&data.dataset.train, &levels, norm)?;
        let val_set = data.store.pairs(&data.dataset.validation, &levels, norm)?;
        let start = self.start_weights(cell)?;
        let cfg = self.cell_train_config(cell);
        let (theta_f, record) = train(&start, &train_set, &val_set, &cfg, self.exec)?;
        let out = CellRecord {
            cell: *cell,
            shuffle_seed: cfg.seed,
            distance_to_final: start.l2_distance(&theta_f),
            record,
        };
        self.model(theta_f, norm, cell.init, Stage::Detector)
            .save(&self.path(cell.model_path()))?;
        out.record.write_csv(&self.path(cell.curve_path()))?;
        write_json(&self.path(cell.record_path()), &out)?;
        Ok(out)
    }

    fn load_detector(&self, cell: &Cell) -> Result<Model> {
        let path = self.path(cell.model_path());
        if !path.exists() {
            return Err(Error::MissingWeights(cell.name()));
        }
        Model::load(&path)
    }

    /// Per-frame f0 of `system` on one noisy test utterance.
    fn detect(
        &self,
        data: &Prepared,
        model: Option<&Model>,
        id: &str,
        snr_db: f64,
    ) -> Result<F0Track> {
        match model {
            None => {
                let noisy = Dataset::noisy_signal(&self.cfg.dataset_dir(), id, snr_db)?;
                baseline_f0(&noisy, &data.dataset.features)
            }
            Some(m) => {
                let x = m.normalizer.apply(data.store.noisy(id, snr_db)?)?;
                let out = m.normalizer.invert(&predict(&m.weights, &x)?)?;
                Ok(track_from_outputs(
                    &out.to_rows(),
                    default_voicing_threshold(),
                ))
            }
        }
    }

    /// DR, VDE and (for networks) normalized test sse of one system at one
    /// level, pooled over the test split.
    pub fn evaluate_one(&self, data: &Prepared, system: System, snr_db: f64) -> Result<EvalReport> {
        let model = match self.cell_for(system, snr_db) {
            Some(cell) => Some(self.load_detector(&cell)?),
            None => None,
        };
        let root = self.cfg.dataset_dir();
        let ids = &data.dataset.test;
        let per_utt = par::try_map(self.exec, ids, |id| -> Result<(FrameCounts, f64)> {
            let truth = Dataset::truth(&root, id)?;
            let track = self.detect(data, model.as_ref(), id, snr_db)?;
            let counts = FrameCounts::tally(&track, &truth)?;
            let sse = match &model {
                Some(m) => {
                    let x = m.normalizer.apply(data.store.noisy(id, snr_db)?)?;
                    let y = m.normalizer.apply(data.store.clean(id)?)?;
                    sse_loss(&predict(&m.weights, &x)?, &y)?
                }
                None => 0.0,
            };
            Ok((counts, sse))
        })?;
        let mut total = FrameCounts::default();
        let mut sse = 0.0;
        for (c, s) in &per_utt {
            total.add(c);
            sse += s;
        }
        Ok(EvalReport {
            system,
            snr_db,
            dr_percent: total.dr_percent()?,
            vde_percent: total.vde_percent()?,
            test_sse: model.map(|_| sse),
        })
    }

    /// Every requested (system, level) pair in table order. Failures are
    /// returned alongside the completed rows.
    pub fn evaluate(&self, data: &Prepared) -> (Vec<EvalReport>, Vec<Failure>) {
        let mut units = Vec::new();
        for &snr in &self.cfg.snr_levels {
            for system in System::ALL {
                if self.cfg.wants(system) {
                    units.push((system, snr));
                }
            }
        }
        let results = par::map(self.exec, &units, |&(system, snr)| {
            self.evaluate_one(data, system, snr)
        });
        let mut reports = Vec::new();
        let mut failures = Vec::new();
        for ((system, snr), r) in units.into_iter().zip(results) {
            match r {
                Ok(rep) => reports.push(rep),
                Err(e) => failures.push(Failure {
                    cell: format!("eval {system} snr {}", format_snr(snr)),
                    error: e.to_string(),
                }),
            }
        }
        (reports, failures)
    }

    /// Writes `frame_index,truth_f0,none_f0,lstm_f0,lstm_aa_f0` for one test
    /// utterance, keeping only the columns of `systems`.
    pub fn export_contour(
        &self,
        data: &Prepared,
        id: &str,
        snr_db: f64,
        systems: &[System],
        path: &Path,
    ) -> Result<()> {
        if !data.dataset.test.iter().any(|t| t == id) {
            return Err(Error::UnknownUtterance(id.to_string()));
        }
        let truth = Dataset::truth(&self.cfg.dataset_dir(), id)?;
        let mut columns = Vec::new();
        for system in System::ALL {
            if !systems.contains(&system) {
                continue;
            }
            let model = match self.cell_for(system, snr_db) {
                Some(cell) => Some(self.load_detector(&cell)?),
                None => None,
            };
            columns.push((system, self.detect(data, model.as_ref(), id, snr_db)?));
        }
        report::write_contour(path, &truth, &columns)
    }

    /// Builds or loads the corpus, pretrains θ_A once, trains every cell,
    /// evaluates and writes all reports. Cell failures are recorded in the
    /// manifest instead of aborting the run.
    pub fn run_all(&self) -> Result<RunManifest> {
        let out_dir = &self.cfg.output_dir;
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        self.ensure_dirs()?;
        let snapshot = self.path(CONFIG_SNAPSHOT);
        std::fs::write(&snapshot, self.cfg.snapshot()).map_err(|e| Error::io(&snapshot, e))?;
        let mut timings = Vec::new();

        let t = Instant::now();
        let data = self.prepare()?;
        timings.push(timing("corpus", t));

        let mut incomplete = Vec::new();
        if self.cfg.wants(System::Lstm) {
            let theta_r = self.theta_r()?;
            self.model(theta_r, &data.normalizer, InitKind::Random, Stage::Detector)
                .save(&self.path(THETA_R_FILE))?;
        }
        let mut pretrain = None;
        if self.cfg.wants(System::LstmAa) {
            let t = Instant::now();
            match self.pretrain(&data) {
                Ok(r) => pretrain = Some(r),
                Err(e) => incomplete.push(Failure {
                    cell: "pretrain".into(),
                    error: e.to_string(),
                }),
            }
            timings.push(timing("pretrain", t));
        }

        let t = Instant::now();
        let cells = self.cells();
        let results = par::map(self.exec, &cells, |c| {
            let t = Instant::now();
            (self.train_cell(&data, c), t.elapsed().as_secs_f64())
        });
        let mut records = Vec::new();
        for (cell, (r, secs)) in cells.iter().zip(results) {
            match r {
                Ok(rec) => {
                    timings.push(Timing {
                        stage: cell.name(),
                        seconds: secs,
                    });
                    records.push(rec);
                }
                Err(e) => incomplete.push(Failure {
                    cell: cell.name(),
                    error: e.to_string(),
                }),
            }
        }
        timings.push(timing("training", t));

        let t = Instant::now();
        let (reports, failures) = self.evaluate(&data);
        incomplete.extend(failures);
        timings.push(timing("evaluation", t));

        let mut artifacts = self.write_reports(&reports, &records)?;
        artifacts.insert(0, PathBuf::from(CONFIG_SNAPSHOT));
        if self.cfg.wants(System::Lstm) {
            artifacts.push(THETA_R_FILE.into());
        }
        if pretrain.is_some() {
            artifacts
                .extend([THETA_A_FILE, PRETRAIN_RECORD, "curves/pretrain.csv"].map(PathBuf::from));
        }
        for r in &records {
            artifacts.extend(
                [
                    r.cell.model_path(),
                    r.cell.record_path(),
                    r.cell.curve_path(),
                ]
                .map(PathBuf::from),
            );
        }
        artifacts.push(MANIFEST_FILE.into());

        let manifest = RunManifest {
            config: self.cfg.clone(),
            dataset_dir: self.cfg.dataset_dir(),
            seeds: self.seeds(),
            artifacts,
            timings,
            pretrain,
            cells: records,
            reports,
            incomplete,
        };
        write_json(&self.path(MANIFEST_FILE), &manifest)?;
        for a in &manifest.artifacts {
            debug_assert!(self.path(a).exists(), "{} missing", a.display());
        }
        Ok(manifest)
    }

    /// Evaluation CSV, metric tables, comparison curves and diagnostics.
    /// Returns the written paths relative to the output directory.
    pub fn write_reports(
        &self,
        reports: &[EvalReport],
        records: &[CellRecord],
    ) -> Result<Vec<PathBuf>> {
        self.ensure_dirs()?;
        let mut written = Vec::new();
        let mut put = |rel: String| -> PathBuf {
            written.push(PathBuf::from(&rel));
            self.path(rel)
        };
        EvalReport::write_csv(reports, &put("reports/eval.csv".into()))?;
        let systems: Vec<System> = System::ALL
            .into_iter()
            .filter(|s| self.cfg.wants(*s))
            .collect();
        for (metric, file) in report::TABLES {
            report::write_table(
                &put(format!("reports/{file}")),
                reports,
                &self.cfg.snr_levels,
                &systems,
                metric,
            )?;
        }
        let by_name: BTreeMap<String, &CellRecord> =
            records.iter().map(|r| (r.cell.name(), r)).collect();
        let conditions: Vec<Option<f64>> = match self.cfg.training_mode {
            TrainingMode::Matched => self.cfg.snr_levels.iter().map(|&s| Some(s)).collect(),
            TrainingMode::Pooled => vec![None],
        };
        let mut pairs = Vec::new();
        for cond in conditions {
            let get = |init| by_name.get(&Cell { init, snr_db: cond }.name()).copied();
            let (r, a) = (get(InitKind::Random), get(InitKind::AutoAssociative));
            if let (Some(r), Some(a)) = (r, a) {
                let stem = Cell {
                    init: InitKind::Random,
                    snr_db: cond,
                }
                .condition();
                report::write_comparison(
                    &put(format!("curves/compare_{stem}.csv")),
                    &r.record,
                    &a.record,
                )?;
                pairs.push((cond, r, a));
            }
        }
        if !pairs.is_empty() {
            report::write_warm_start(&put("reports/warm_start.csv".into()), &pairs)?;
        }
        if !records.is_empty() {
            report::write_distances(&put("reports/distances.csv".into()), records)?;
        }
        Ok(written)
    }

    /// Rebuilds the reports from records and evaluation results on disk.
    pub fn report_from_disk(&self) -> Result<Vec<PathBuf>> {
        let reports = EvalReport::read_csv(&self.path("reports/eval.csv"))?;
        let mut records = Vec::new();
        for c in self.cells() {
            let p = self.path(c.record_path());
            if p.exists() {
                records.push(read_json::<CellRecord>(&p)?);
            }
        }
        self.write_reports(&reports, &records)
    }
}

/// Runs the full pipeline for `cfg`.
pub fn run_experiment(cfg: ExperimentConfig, exec: Exec) -> Result<RunManifest> {
    Experiment::new(cfg, exec)?.run_all()
}
