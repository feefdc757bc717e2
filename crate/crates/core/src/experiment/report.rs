use std::path::{Path, PathBuf};

use super::run::{Cell, CellRecord, RunManifest};
use crate::corpus::format_snr;
use crate::error::{Error, Result};
use crate::lstm::{InitKind, TrainRecord};
use crate::metrics::{EvalReport, F0Track, System};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Vde,
    Dr,
    /// 100 − DR, the error-rate reading of the DR table.
    DrComplement,
}

impl Metric {
    pub fn value(self, r: &EvalReport) -> f64 {
        match self {
            Metric::Vde => r.vde_percent,
            Metric::Dr => r.dr_percent,
            Metric::DrComplement => 100.0 - r.dr_percent,
        }
    }
}

pub const TABLES: [(Metric, &str); 3] = [
    (Metric::Vde, "table_vde.csv"),
    (Metric::Dr, "table_dr.csv"),
    (Metric::DrComplement, "table_dr_complement.csv"),
];

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::from(e).context(path.display().to_string()))
}

fn condition_label(snr_db: Option<f64>) -> String {
    snr_db.map_or_else(|| "pooled".to_string(), format_snr)
}

/// `snr_db,None,LSTM,LSTM-AA` with one row per level; missing cells are left
/// blank.
pub fn write_table(
    path: &Path,
    reports: &[EvalReport],
    levels: &[f64],
    systems: &[System],
    metric: Metric,
) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["snr_db".to_string()];
    header.extend(systems.iter().map(|s| s.name().to_string()));
    w.write_record(&header)?;
    for &snr in levels {
        let mut row = vec![format_snr(snr)];
        for &s in systems {
            let cell = reports
                .iter()
                .find(|r| r.system == s && r.snr_db == snr)
                .map(|r| format!("{:.2}", metric.value(r)))
                .unwrap_or_default();
            row.push(cell);
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Validation sse of both initializations side by side,
/// `epoch,Random,Auto-Asoc.`. The shorter run is padded with blanks.
pub fn write_comparison(path: &Path, random: &TrainRecord, aa: &TrainRecord) -> Result<()> {
    if random.epochs.is_empty() || aa.epochs.is_empty() {
        return Err(Error::Empty("training record"));
    }
    let mut w = writer(path)?;
    w.write_record(["epoch", "Random", "Auto-Asoc."])?;
    let n = random.epochs.len().max(aa.epochs.len());
    let val = |r: &TrainRecord, i: usize| {
        r.epochs
            .get(i)
            .map(|e| e.val_sse.to_string())
            .unwrap_or_default()
    };
    for i in 0..n {
        w.write_record([(i + 1).to_string(), val(random, i), val(aa, i)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Epoch-1 and best validation sse per condition for both initializations.
pub fn write_warm_start(
    path: &Path,
    pairs: &[(Option<f64>, &CellRecord, &CellRecord)],
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "snr_db",
        "random_epoch1_val_sse",
        "aa_epoch1_val_sse",
        "aa_epoch1_lower",
        "random_best_val_sse",
        "aa_best_val_sse",
        "aa_best_not_higher",
    ])?;
    for (cond, r, a) in pairs {
        let first = |c: &CellRecord| {
            c.record
                .epoch(1)
                .map(|e| e.val_sse)
                .ok_or(Error::Empty("training record"))
        };
        let (r1, a1) = (first(r)?, first(a)?);
        let (rb, ab) = (r.record.best_validation_sse, a.record.best_validation_sse);
        w.write_record([
            condition_label(*cond),
            r1.to_string(),
            a1.to_string(),
            (a1 < r1).to_string(),
            rb.to_string(),
            ab.to_string(),
            (ab <= rb).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parameter-space distance each run travelled from its start weights.
pub fn write_distances(path: &Path, records: &[CellRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["snr_db", "init", "distance_to_final", "best_epoch"])?;
    for r in records {
        w.write_record([
            condition_label(r.cell.snr_db),
            r.cell.init.as_str().to_string(),
            r.distance_to_final.to_string(),
            r.record.best_epoch.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn contour_column(system: System) -> &'static str {
    match system {
        System::Baseline => "none_f0",
        System::Lstm => "lstm_f0",
        System::LstmAa => "lstm_aa_f0",
    }
}

pub fn write_contour(path: &Path, truth: &F0Track, columns: &[(System, F0Track)]) -> Result<()> {
    for (s, t) in columns {
        if t.len() != truth.len() {
            return Err(Error::DimensionMismatch(format!(
                "{s} contour has {} frames, truth {}",
                t.len(),
                truth.len()
            )));
        }
    }
    let mut w = writer(path)?;
    let mut header = vec!["frame_index", "truth_f0"];
    header.extend(columns.iter().map(|(s, _)| contour_column(*s)));
    w.write_record(&header)?;
    for i in 0..truth.len() {
        let mut row = vec![i.to_string(), truth.f0()[i].to_string()];
        row.extend(columns.iter().map(|(_, t)| t.f0()[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes every run's `epoch,train_sse,val_sse` curve plus the Random vs
/// Auto-Asoc. comparison per condition into `dir`.
pub fn export_curves(run: &RunManifest, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for r in &run.cells {
        let p = dir.join(format!("{}.csv", r.cell.curve_name()));
        r.record.write_csv(&p)?;
        out.push(p);
    }
    for r in run.cells.iter().filter(|r| r.cell.init == InitKind::Random) {
        let partner = Cell {
            init: InitKind::AutoAssociative,
            snr_db: r.cell.snr_db,
        };
        if let Some(a) = run.cells.iter().find(|c| c.cell == partner) {
            let p = dir.join(format!("compare_{}.csv", condition_stem(r.cell.snr_db)));
            write_comparison(&p, &r.record, &a.record)?;
            out.push(p);
        }
    }
    Ok(out)
}

pub(crate) fn condition_stem(snr_db: Option<f64>) -> String {
    snr_db.map_or_else(
        || "pooled".to_string(),
        |s| format!("snr_{}", format_snr(s)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::{EpochStats, StopReason};

    fn record(n: usize, offset: f64) -> TrainRecord {
        TrainRecord {
            epochs: (1..=n)
                .map(|e| EpochStats {
                    epoch: e,
                    train_sse: 10.0 / e as f64,
                    val_sse: offset + 5.0 / e as f64,
                })
                .collect(),
            initial_val_sse: offset + 10.0,
            best_epoch: n,
            best_validation_sse: offset + 5.0 / n as f64,
            stop_reason: StopReason::MaxEpochs,
        }
    }

    fn lines(path: &Path) -> Vec<String> {
        std::fs::read_to_string(path)
            .unwrap()
            .lines()
            .map(str::to_string)
            .collect()
    }

    #[test]
    fn curve_has_one_row_per_epoch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        record(140, 0.0).write_csv(&p).unwrap();
        let l = lines(&p);
        assert_eq!(l.len(), 141);
        assert_eq!(l[0], "epoch,train_sse,val_sse");
    }

    #[test]
    fn comparison_pads_the_shorter_series() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        write_comparison(&p, &record(5, 0.0), &record(3, 1.0)).unwrap();
        let l = lines(&p);
        assert_eq!(l.len(), 6);
        assert_eq!(l[0], "epoch,Random,Auto-Asoc.");
        assert_eq!(l[5], "5,1,");
        assert_eq!(l[1], "1,5,6");
        let empty = TrainRecord {
            epochs: vec![],
            ..record(1, 0.0)
        };
        assert!(write_comparison(&p, &empty, &record(2, 0.0)).is_err());
    }

    #[test]
    fn table_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let reports = vec![
            EvalReport {
                system: System::Baseline,
                snr_db: -5.0,
                dr_percent: 40.0,
                vde_percent: 30.126,
                test_sse: None,
            },
            EvalReport {
                system: System::LstmAa,
                snr_db: 0.0,
                dr_percent: 90.0,
                vde_percent: 5.0,
                test_sse: Some(1.0),
            },
        ];
        let systems = System::ALL.to_vec();
        write_table(&p, &reports, &[-5.0, 0.0], &systems, Metric::Vde).unwrap();
        assert_eq!(
            lines(&p),
            vec!["snr_db,None,LSTM,LSTM-AA", "-5,30.13,,", "0,,,5.00"]
        );
        write_table(&p, &reports, &[-5.0, 0.0], &systems, Metric::DrComplement).unwrap();
        assert_eq!(lines(&p)[2], "0,,,10.00");
    }

    #[test]
    fn contour_columns_follow_requested_systems() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let truth = F0Track::new(vec![0.0, 100.0, 110.0]).unwrap();
        let none = F0Track::new(vec![0.0, 0.0, 108.0]).unwrap();
        write_contour(&p, &truth, &[(System::Baseline, none.clone())]).unwrap();
        let l = lines(&p);
        assert_eq!(l[0], "frame_index,truth_f0,none_f0");
        assert_eq!(l[2], "1,100,0");
        assert!(l.iter().all(|r| r.split(',').count() == 3));
        let short = F0Track::new(vec![0.0]).unwrap();
        assert!(write_contour(&p, &truth, &[(System::Lstm, short)]).is_err());
    }
}
