//! Detection Rate and Voice Decision Error on frame-level f0 tracks.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative f0 deviation a voiced estimate may have and still count as detected.
pub const DR_TOLERANCE: f64 = 0.05;

/// Default V/UV decision point on a decoded log-f0 output (ln 50 Hz).
pub fn default_voicing_threshold() -> f64 {
    50f64.ln()
}

/// Frame-level f0 in Hz; 0 marks an unvoiced frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F0Track {
    f0: Vec<f64>,
}

impl F0Track {
    pub fn new(f0: Vec<f64>) -> Result<Self> {
        if let Some(i) = f0.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::NonFinite(format!(
                "f0 track value {} at frame {i}",
                f0[i]
            )));
        }
        Ok(F0Track { f0 })
    }

    pub fn unvoiced(len: usize) -> Self {
        F0Track { f0: vec![0.0; len] }
    }

    pub fn f0(&self) -> &[f64] {
        &self.f0
    }

    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    pub fn is_voiced(&self, i: usize) -> bool {
        self.f0[i] > 0.0
    }

    pub fn voiced_count(&self) -> usize {
        self.f0.iter().filter(|&&f| f > 0.0).count()
    }

    /// Writes `frame_index,f0_hz,voiced`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["frame_index", "f0_hz", "voiced"])?;
        for (i, f) in self.f0.iter().enumerate() {
            w.write_record([i.to_string(), f.to_string(), u8::from(*f > 0.0).to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<F0Track> {
        let mut r = csv::Reader::from_path(path)?;
        let mut f0 = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let bad = || Error::InvalidSignal(format!("{}: malformed row", path.display()));
            let hz: f64 = rec.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let voiced = rec.get(2).ok_or_else(bad)? == "1";
            if voiced != (hz > 0.0) {
                return Err(bad());
            }
            f0.push(hz);
        }
        F0Track::new(f0)
    }
}

fn check_lengths(predicted: &F0Track, truth: &F0Track) -> Result<()> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "predicted track has {} frames, truth {}",
            predicted.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// Percentage of truth-voiced frames whose estimate is voiced and within 5%
/// (linear Hz) of the true f0.
pub fn detection_rate(predicted: &F0Track, truth: &F0Track) -> Result<f64> {
    check_lengths(predicted, truth)?;
    let mut voiced = 0usize;
    let mut hits = 0usize;
    for (&p, &t) in predicted.f0.iter().zip(&truth.f0) {
        if t > 0.0 {
            voiced += 1;
            if p > 0.0 && (p - t).abs() <= DR_TOLERANCE * t {
                hits += 1;
            }
        }
    }
    if voiced == 0 {
        return Err(Error::UndefinedMetric(
            "detection rate needs at least one voiced truth frame".into(),
        ));
    }
    Ok(100.0 * hits as f64 / voiced as f64)
}

/// Percentage of frames whose voicing decision disagrees with the truth.
pub fn voice_decision_error(predicted: &F0Track, truth: &F0Track) -> Result<f64> {
    check_lengths(predicted, truth)?;
    if truth.is_empty() {
        return Err(Error::Empty("f0 track"));
    }
    let errors = predicted
        .f0
        .iter()
        .zip(&truth.f0)
        .filter(|(&p, &t)| (p > 0.0) != (t > 0.0))
        .count();
    Ok(100.0 * errors as f64 / truth.len() as f64)
}

/// Frame counts behind DR and VDE, so corpus-level rates can pool frames
/// across utterances instead of averaging per-utterance percentages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FrameCounts {
    pub frames: usize,
    pub truth_voiced: usize,
    pub detected: usize,
    pub voiced_to_unvoiced: usize,
    pub unvoiced_to_voiced: usize,
}

impl FrameCounts {
    pub fn tally(predicted: &F0Track, truth: &F0Track) -> Result<Self> {
        check_lengths(predicted, truth)?;
        let mut c = FrameCounts {
            frames: truth.len(),
            ..Default::default()
        };
        for (&p, &t) in predicted.f0.iter().zip(&truth.f0) {
            match (p > 0.0, t > 0.0) {
                (true, true) => {
                    c.truth_voiced += 1;
                    if (p - t).abs() <= DR_TOLERANCE * t {
                        c.detected += 1;
                    }
                }
                (false, true) => {
                    c.truth_voiced += 1;
                    c.voiced_to_unvoiced += 1;
                }
                (true, false) => c.unvoiced_to_voiced += 1,
                (false, false) => {}
            }
        }
        Ok(c)
    }

    pub fn add(&mut self, other: &FrameCounts) {
        self.frames += other.frames;
        self.truth_voiced += other.truth_voiced;
        self.detected += other.detected;
        self.voiced_to_unvoiced += other.voiced_to_unvoiced;
        self.unvoiced_to_voiced += other.unvoiced_to_voiced;
    }

    pub fn dr_percent(&self) -> Result<f64> {
        if self.truth_voiced == 0 {
            return Err(Error::UndefinedMetric("no voiced truth frames".into()));
        }
        Ok(100.0 * self.detected as f64 / self.truth_voiced as f64)
    }

    pub fn vde_percent(&self) -> Result<f64> {
        if self.frames == 0 {
            return Err(Error::Empty("frame counts"));
        }
        Ok(100.0 * (self.voiced_to_unvoiced + self.unvoiced_to_voiced) as f64 / self.frames as f64)
    }
}

/// Decodes the log-f0 slot (index 0) of raw-unit output vectors. A frame is
/// voiced iff its log f0 is strictly above `voicing_threshold`.
pub fn track_from_outputs<R: AsRef<[f64]>>(outputs: &[R], voicing_threshold: f64) -> F0Track {
    F0Track {
        f0: outputs
            .iter()
            .map(|o| {
                let v = o.as_ref()[0];
                if v > voicing_threshold {
                    v.exp()
                } else {
                    0.0
                }
            })
            .collect(),
    }
}

/// The three compared detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum System {
    #[serde(rename = "None")]
    Baseline,
    #[serde(rename = "LSTM")]
    Lstm,
    #[serde(rename = "LSTM-AA")]
    LstmAa,
}

impl System {
    pub const ALL: [System; 3] = [System::Baseline, System::Lstm, System::LstmAa];

    pub fn name(self) -> &'static str {
        match self {
            System::Baseline => "None",
            System::Lstm => "LSTM",
            System::LstmAa => "LSTM-AA",
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "None" | "none" => Ok(System::Baseline),
            "LSTM" | "lstm" => Ok(System::Lstm),
            "LSTM-AA" | "lstm-aa" | "lstm_aa" => Ok(System::LstmAa),
            _ => Err(Error::InvalidConfig(format!("unknown system {s:?}"))),
        }
    }
}

/// One (system, SNR) cell of the comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: System,
    pub snr_db: f64,
    pub dr_percent: f64,
    pub vde_percent: f64,
    /// Network sse on the test split; `None` for the baseline.
    pub test_sse: Option<f64>,
}

pub const EVAL_CSV_HEADER: [&str; 5] =
    ["system", "snr_db", "dr_percent", "vde_percent", "test_sse"];

impl EvalReport {
    pub fn write_csv(reports: &[EvalReport], path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(EVAL_CSV_HEADER)?;
        for r in reports {
            w.write_record([
                r.system.name().to_string(),
                r.snr_db.to_string(),
                r.dr_percent.to_string(),
                r.vde_percent.to_string(),
                r.test_sse.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Vec<EvalReport>> {
        let mut r = csv::Reader::from_path(path)?;
        let mut out = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let bad = || Error::InvalidConfig(format!("{}: malformed report row", path.display()));
            let num = |i: usize| -> Result<f64> {
                rec.get(i).ok_or_else(bad)?.parse().map_err(|_| bad())
            };
            let sse = rec.get(4).ok_or_else(bad)?;
            out.push(EvalReport {
                system: rec.get(0).ok_or_else(bad)?.parse()?,
                snr_db: num(1)?,
                dr_percent: num(2)?,
                vde_percent: num(3)?,
                test_sse: if sse.is_empty() {
                    None
                } else {
                    Some(sse.parse().map_err(|_| bad())?)
                },
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn track(v: &[f64]) -> F0Track {
        F0Track::new(v.to_vec()).unwrap()
    }

    #[test]
    fn dr_hand_cases() {
        let truth = track(&[200.0; 10]);
        assert_eq!(detection_rate(&truth, &truth).unwrap(), 100.0);
        let mut p = vec![209.0; 5];
        p.extend([211.0; 5]);
        assert_eq!(detection_rate(&track(&p), &truth).unwrap(), 50.0);
        assert_eq!(detection_rate(&F0Track::unvoiced(10), &truth).unwrap(), 0.0);
        // Exactly on the 5% edge counts.
        assert_eq!(detection_rate(&track(&[210.0; 10]), &truth).unwrap(), 100.0);
    }

    #[test]
    fn dr_undefined_without_voiced_truth() {
        let t = F0Track::unvoiced(4);
        assert!(matches!(
            detection_rate(&t, &t),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn vde_hand_cases() {
        let truth = track(&[0.0, 0.0, 0.0, 0.0, 0.0, 100.0, 100.0, 100.0, 100.0, 100.0]);
        assert_eq!(voice_decision_error(&truth, &truth).unwrap(), 0.0);
        let p = track(&[120.0, 0.0, 0.0, 0.0, 0.0, 0.0, 100.0, 100.0, 100.0, 100.0]);
        assert_eq!(voice_decision_error(&p, &truth).unwrap(), 20.0);
        let complement = track(&[1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(voice_decision_error(&complement, &truth).unwrap(), 100.0);
        assert!(matches!(
            voice_decision_error(&F0Track::unvoiced(3), &truth),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn decoding_rules() {
        let th = default_voicing_threshold();
        let outs = vec![
            vec![0.0, 1.0, 2.0],
            vec![200f64.ln(), 0.0, 0.0],
            vec![th, 0.0, 0.0],
        ];
        let t = track_from_outputs(&outs, th);
        assert_eq!(t.f0()[0], 0.0);
        assert!((t.f0()[1] - 200.0).abs() < 1e-9);
        assert_eq!(t.f0()[2], 0.0);
    }

    #[test]
    fn report_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eval.csv");
        let rows = vec![
            EvalReport {
                system: System::Baseline,
                snr_db: -5.0,
                dr_percent: 12.5,
                vde_percent: 40.0,
                test_sse: None,
            },
            EvalReport {
                system: System::LstmAa,
                snr_db: 0.0,
                dr_percent: 90.0,
                vde_percent: 3.25,
                test_sse: Some(1234.5),
            },
        ];
        EvalReport::write_csv(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(
            text.starts_with("system,snr_db,dr_percent,vde_percent,test_sse\nNone,-5,12.5,40,\n")
        );
        assert_eq!(EvalReport::read_csv(&path).unwrap(), rows);
    }

    fn arb_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        let f0 = prop_oneof![Just(0.0), 50.0..500.0f64];
        (1usize..60).prop_flat_map(move |n| {
            (
                prop::collection::vec(f0.clone(), n),
                prop::collection::vec(f0.clone(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn vde_is_symmetric((a, b) in arb_pair()) {
            let (a, b) = (track(&a), track(&b));
            prop_assert_eq!(
                voice_decision_error(&a, &b).unwrap(),
                voice_decision_error(&b, &a).unwrap()
            );
        }

        #[test]
        fn dr_ignores_truth_unvoiced_frames((p, t) in arb_pair(), junk in 50.0..500.0f64) {
            let truth = track(&t);
            prop_assume!(truth.voiced_count() > 0);
            let altered: Vec<f64> = p.iter().zip(&t)
                .map(|(&pv, &tv)| if tv == 0.0 { junk } else { pv })
                .collect();
            prop_assert_eq!(
                detection_rate(&track(&p), &truth).unwrap(),
                detection_rate(&track(&altered), &truth).unwrap()
            );
        }

        #[test]
        fn decoding_inverts_log_encoding(t in prop::collection::vec(prop_oneof![Just(0.0), 50.0001..500.0f64], 1..50)) {
            let outs: Vec<Vec<f64>> = t.iter()
                .map(|&f| vec![if f > 0.0 { f.ln() } else { 0.0 }, 0.0])
                .collect();
            let back = track_from_outputs(&outs, default_voicing_threshold());
            for (a, b) in back.f0().iter().zip(&t) {
                prop_assert!((a - b).abs() <= 1e-12 * b.max(1.0));
                prop_assert_eq!(*a > 0.0, *b > 0.0);
            }
        }

        #[test]
        fn pooled_counts_match_single_track((p, t) in arb_pair()) {
            let (p, t) = (track(&p), track(&t));
            let c = FrameCounts::tally(&p, &t).unwrap();
            prop_assert_eq!(c.vde_percent().unwrap(), voice_decision_error(&p, &t).unwrap());
            if t.voiced_count() > 0 {
                prop_assert_eq!(c.dr_percent().unwrap(), detection_rate(&p, &t).unwrap());
            }
        }
    }
}
