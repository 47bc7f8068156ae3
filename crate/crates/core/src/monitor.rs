//! Stream gate: score each incoming feature vector by likelihood regret and
//! pass only trusted samples to the downstream regressor.
//!
//! A bounded window of samples is scored in parallel; decisions are emitted
//! strictly in input order.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lab::{r2, LabError, RidgeRegressor};
use crate::regret::{score_lr, ScoreSettings};
use crate::vae::VaeParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Trusted,
    Untrusted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamSample {
    pub sample_id: String,
    pub features: Vec<f64>,
    /// Ground truth for R² bookkeeping; not used by the gate.
    pub truth: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonitorDecision {
    pub sample_id: String,
    /// NaN when scoring failed.
    pub lr: f64,
    pub threshold: f64,
    pub verdict: Verdict,
    /// Present exactly when trusted.
    pub downstream_prediction: Option<Vec<f64>>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorSummary {
    pub samples: usize,
    pub trusted: usize,
    pub trusted_fraction: f64,
    pub threshold: f64,
    /// R² over trusted samples; `None` when undefined (no trusted samples or
    /// constant truths).
    pub r2_with: Option<f64>,
    /// R² over every sample with the regressor applied unconditionally.
    pub r2_without: Option<f64>,
}

pub struct Monitor<'a> {
    pub vae: &'a VaeParams,
    pub regressor: &'a RidgeRegressor,
    pub settings: ScoreSettings,
    pub threshold: f64,
    /// Samples scored concurrently.
    pub window: usize,
    /// Sample `i` of the stream is scored with seed `base_seed + i`.
    pub base_seed: u64,
}

struct Scored {
    decision: MonitorDecision,
    prediction: Option<Vec<f64>>,
}

impl Monitor<'_> {
    fn decide(&self, index: usize, s: &StreamSample) -> Scored {
        let seed = self.base_seed.wrapping_add(index as u64);
        let mut settings = self.settings;
        settings.zo.seed = seed;
        let prediction = self.regressor.predict(&s.features).ok();
        let (lr, note) = match score_lr(self.vae, &s.features, &settings, seed) {
            Ok(score) => (score.lr, None),
            Err(e) => (f64::NAN, Some(e.to_string())),
        };
        // NaN compares false, so failed samples fall through to untrusted
        let verdict = if lr <= self.threshold { Verdict::Trusted } else { Verdict::Untrusted };
        let downstream_prediction = if verdict == Verdict::Trusted { prediction.clone() } else { None };
        Scored {
            decision: MonitorDecision {
                sample_id: s.sample_id.clone(),
                lr,
                threshold: self.threshold,
                verdict,
                downstream_prediction,
                note,
            },
            prediction,
        }
    }

    /// Gates the stream, handing each decision to `emit` in input order.
    pub fn run<I, F>(&self, stream: I, mut emit: F) -> MonitorSummary
    where
        I: IntoIterator<Item = StreamSample>,
        F: FnMut(&MonitorDecision),
    {
        let mut stream = stream.into_iter();
        let window = self.window.max(1);
        let mut index = 0;
        let (mut all_preds, mut all_truths) = (Vec::new(), Vec::new());
        let (mut kept_preds, mut kept_truths) = (Vec::new(), Vec::new());
        let mut samples = 0;
        let mut trusted = 0;
        loop {
            let chunk: Vec<StreamSample> = stream.by_ref().take(window).collect();
            if chunk.is_empty() {
                break;
            }
            let scored: Vec<Scored> =
                chunk.par_iter().enumerate().map(|(k, s)| self.decide(index + k, s)).collect();
            for (s, sc) in chunk.iter().zip(scored) {
                samples += 1;
                if sc.decision.verdict == Verdict::Trusted {
                    trusted += 1;
                }
                if let (Some(p), Some(t)) = (&sc.prediction, &s.truth) {
                    all_preds.push(p.clone());
                    all_truths.push(t.clone());
                    if let Some(kept) = &sc.decision.downstream_prediction {
                        kept_preds.push(kept.clone());
                        kept_truths.push(t.clone());
                    }
                }
                emit(&sc.decision);
            }
            index += chunk.len();
        }
        let defined = |p: &[Vec<f64>], t: &[Vec<f64>]| if t.is_empty() { None } else { r2(p, t).ok() };
        MonitorSummary {
            samples,
            trusted,
            trusted_fraction: if samples == 0 { 0.0 } else { trusted as f64 / samples as f64 },
            threshold: self.threshold,
            r2_with: defined(&kept_preds, &kept_truths),
            r2_without: defined(&all_preds, &all_truths),
        }
    }

    pub fn run_collect<I: IntoIterator<Item = StreamSample>>(&self, stream: I) -> (Vec<MonitorDecision>, MonitorSummary) {
        let mut out = Vec::new();
        let summary = self.run(stream, |d| out.push(d.clone()));
        (out, summary)
    }
}

/// Header for a decision log with `k` prediction columns.
pub fn decision_header(k: usize) -> String {
    let mut s = String::from("sample_id,lr,threshold,verdict");
    for i in 0..k {
        let _ = write!(s, ",pred_{i}");
    }
    s.push_str(",note");
    s
}

pub fn write_decision<W: Write>(w: &mut W, d: &MonitorDecision, k: usize) -> std::io::Result<()> {
    let verdict = match d.verdict {
        Verdict::Trusted => "trusted",
        Verdict::Untrusted => "untrusted",
    };
    write!(w, "{},{},{},{}", d.sample_id, d.lr, d.threshold, verdict)?;
    for i in 0..k {
        match &d.downstream_prediction {
            Some(p) => write!(w, ",{}", p[i])?,
            None => write!(w, ",")?,
        }
    }
    // notes are free text; keep the row parseable
    let note = d.note.as_deref().unwrap_or("").replace([',', '\n'], ";");
    writeln!(w, ",{note}")
}

/// Clean-stream reference: R² of the regressor on samples with truths.
pub fn r2_of(regressor: &RidgeRegressor, samples: &[StreamSample]) -> Result<f64, LabError> {
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    for s in samples {
        if let Some(t) = &s.truth {
            preds.push(regressor.predict(&s.features)?);
            truths.push(t.clone());
        }
    }
    r2(&preds, &truths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (VaeParams, RidgeRegressor, Vec<StreamSample>) {
        let vae = VaeParams::init(3, 1, &[4], 2).unwrap();
        let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 * 0.1, (i as f64).sin(), 0.5]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0] + x[1]]).collect();
        let reg = RidgeRegressor::fit(&xs, &ys, 1e-6).unwrap();
        let stream = xs
            .iter()
            .zip(&ys)
            .enumerate()
            .map(|(i, (x, y))| StreamSample {
                sample_id: i.to_string(),
                features: x.clone(),
                truth: Some(vec![y[0] + if i % 3 == 0 { 0.3 } else { 0.0 }]),
            })
            .collect();
        (vae, reg, stream)
    }

    fn monitor<'a>(vae: &'a VaeParams, reg: &'a RidgeRegressor, threshold: f64) -> Monitor<'a> {
        let mut settings = ScoreSettings::default();
        settings.zo.iterations = 5;
        settings.zo.spsa.c = 1e-3;
        settings.zo.spsa.a = 1e-4;
        Monitor { vae, regressor: reg, settings, threshold, window: 4, base_seed: 7 }
    }

    #[test]
    fn infinite_threshold_trusts_everything() {
        let (vae, reg, stream) = setup();
        let (d, s) = monitor(&vae, &reg, f64::INFINITY).run_collect(stream.clone());
        assert_eq!(d.len(), stream.len());
        assert!(d.iter().all(|d| d.verdict == Verdict::Trusted && d.downstream_prediction.is_some()));
        assert_eq!(s.r2_with, s.r2_without);
        assert_eq!(s.trusted_fraction, 1.0);
    }

    #[test]
    fn negative_threshold_trusts_nothing() {
        let (vae, reg, stream) = setup();
        let (d, s) = monitor(&vae, &reg, -1.0).run_collect(stream);
        assert!(d.iter().all(|d| d.verdict == Verdict::Untrusted && d.downstream_prediction.is_none()));
        assert_eq!(s.r2_with, None);
        assert!(s.r2_without.is_some());
        assert_eq!(s.trusted, 0);
    }

    #[test]
    fn order_and_gate_hold_for_any_window() {
        let (vae, reg, stream) = setup();
        let mut m = monitor(&vae, &reg, 0.0);
        let (a, _) = m.run_collect(stream.clone());
        let median = {
            let mut v: Vec<f64> = a.iter().map(|d| d.lr).collect();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        m.threshold = median;
        for window in [1, 3, 100] {
            m.window = window;
            let (d, _) = m.run_collect(stream.clone());
            let ids: Vec<&str> = d.iter().map(|d| d.sample_id.as_str()).collect();
            let expected: Vec<&str> = stream.iter().map(|s| s.sample_id.as_str()).collect();
            assert_eq!(ids, expected);
            for d in &d {
                assert_eq!(d.verdict == Verdict::Untrusted, d.lr > d.threshold);
                assert_eq!(d.downstream_prediction.is_some(), d.verdict == Verdict::Trusted);
            }
        }
    }

    #[test]
    fn scoring_failure_is_untrusted_with_note() {
        let (vae, reg, _) = setup();
        let bad = StreamSample { sample_id: "x".into(), features: vec![1.0], truth: None };
        let (d, _) = monitor(&vae, &reg, f64::INFINITY).run_collect(vec![bad]);
        assert_eq!(d[0].verdict, Verdict::Untrusted);
        assert!(d[0].note.is_some());
        let mut buf = Vec::new();
        write_decision(&mut buf, &d[0], 1).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().matches(',').count(), decision_header(1).matches(',').count());
    }
}
