//! Batch evaluation of an enhanced test set against its references.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{sdr, stoi, SDR_CAP_DB};
use crate::audio::read_wav;
use crate::error::{Error, Result};
use crate::mixture::Manifest;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemScores {
    pub sdr_db: f64,
    /// The SDR hit the +/- cap.
    pub sdr_saturated: bool,
    pub stoi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemResult {
    pub id: String,
    #[serde(flatten)]
    pub scores: Option<ItemScores>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub items: usize,
    pub scored: usize,
    pub failed: usize,
    pub mean_sdr_db: f64,
    pub mean_stoi: f64,
    pub sdr_cap_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub summary: Summary,
    pub per_item: Vec<ItemResult>,
}

impl MetricReport {
    /// Builds the aggregate; fails when no item could be scored.
    pub fn from_items(mut items: Vec<ItemResult>) -> Result<Self> {
        items.sort_by(|a, b| a.id.cmp(&b.id));
        let ok: Vec<&ItemScores> = items.iter().filter_map(|i| i.scores.as_ref()).collect();
        if ok.is_empty() {
            let first = items
                .iter()
                .find_map(|i| {
                    i.error
                        .as_ref()
                        .map(|e| format!(" (first error: {}: {e})", i.id))
                })
                .unwrap_or_default();
            return Err(Error::usage(format!("no item could be scored{first}")));
        }
        let n = ok.len() as f64;
        let summary = Summary {
            items: items.len(),
            scored: ok.len(),
            failed: items.len() - ok.len(),
            mean_sdr_db: ok.iter().map(|s| s.sdr_db).sum::<f64>() / n,
            mean_stoi: ok.iter().map(|s| s.stoi).sum::<f64>() / n,
            sdr_cap_db: SDR_CAP_DB,
        };
        Ok(Self {
            summary,
            per_item: items,
        })
    }

    /// Per-item table followed by a `mean` row.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("id\tsdr_db\tstoi\tstatus\n");
        for i in &self.per_item {
            match (&i.scores, &i.error) {
                (Some(sc), _) => {
                    let status = if sc.sdr_saturated { "saturated" } else { "ok" };
                    let _ = writeln!(s, "{}\t{:.4}\t{:.6}\t{status}", i.id, sc.sdr_db, sc.stoi);
                }
                (None, e) => {
                    let msg = e.as_deref().unwrap_or("error").replace(['\t', '\n'], " ");
                    let _ = writeln!(s, "{}\tNA\tNA\terror: {msg}", i.id);
                }
            }
        }
        let _ = writeln!(
            s,
            "mean\t{:.4}\t{:.6}\t{} of {} scored",
            self.summary.mean_sdr_db,
            self.summary.mean_stoi,
            self.summary.scored,
            self.summary.items
        );
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }
}

fn score_item(reference: &Path, enhanced: &Path) -> Result<ItemScores> {
    let (r, _) = read_wav(reference)?;
    let (e, _) = read_wav(enhanced)?;
    let sdr_db = sdr(&r, &e)?;
    Ok(ItemScores {
        sdr_db,
        sdr_saturated: sdr_db.abs() >= SDR_CAP_DB,
        stoi: stoi(&r, &e)?,
    })
}

/// Scores `{enhanced_dir}/{id}.wav` against each manifest item's reference.
/// Items that fail are recorded and left out of the means.
pub fn evaluate_set(manifest: &Manifest, enhanced_dir: &Path) -> Result<MetricReport> {
    let items = manifest
        .rows
        .par_iter()
        .map(|row| {
            let enhanced = enhanced_dir.join(format!("{}.wav", row.id));
            match score_item(&manifest.reference_path(&row.id), &enhanced) {
                Ok(s) => ItemResult {
                    id: row.id.clone(),
                    scores: Some(s),
                    error: None,
                },
                Err(e) => ItemResult {
                    id: row.id.clone(),
                    scores: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    MetricReport::from_items(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{write_wav, AudioBuffer, SampleFormat};
    use crate::mixture::{make_test_set, MixSpec, Sources, MIX_DIR};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn corpus(dir: &Path) -> Manifest {
        let sd = dir.join("speech");
        let nd = dir.join("noise");
        std::fs::create_dir_all(&sd).unwrap();
        std::fs::create_dir_all(&nd).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in 0..2 {
            let s: Vec<f64> = (0..48_000)
                .map(|i| {
                    let t = i as f64 / 32_000.0;
                    let env = (std::f64::consts::PI * 4.0 * t).sin().max(0.0);
                    0.3 * env * (2.0 * std::f64::consts::PI * (150.0 + 40.0 * k as f64) * t).sin()
                        + 0.001 * rng.random_range(-1.0..1.0)
                })
                .collect();
            write_wav(
                sd.join(format!("{k}.wav")),
                &AudioBuffer::new(s, 32_000),
                SampleFormat::Float32,
            )
            .unwrap();
        }
        let n: Vec<f64> = (0..20_000).map(|_| rng.random_range(-0.1..0.1)).collect();
        write_wav(
            nd.join("n.wav"),
            &AudioBuffer::new(n, 32_000),
            SampleFormat::Float32,
        )
        .unwrap();
        let src = Sources {
            speech_dir: sd,
            noise_dir: nd,
            ir_dir: None,
        };
        make_test_set(&src, &MixSpec::default(), 3, &dir.join("set")).unwrap()
    }

    #[test]
    fn references_score_at_the_cap() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path());
        let r = evaluate_set(&m, &dir.path().join("set").join("clean")).unwrap();
        assert_eq!(r.summary.scored, 3);
        assert_eq!(r.summary.mean_sdr_db, SDR_CAP_DB);
        assert!((r.summary.mean_stoi - 1.0).abs() < 1e-6);
        assert!(r
            .per_item
            .iter()
            .all(|i| i.scores.as_ref().unwrap().sdr_saturated));
    }

    #[test]
    fn mixtures_score_as_unprocessed() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path());
        let r = evaluate_set(&m, &dir.path().join("set").join(MIX_DIR)).unwrap();
        for item in &r.per_item {
            let (reference, _) = read_wav(m.reference_path(&item.id)).unwrap();
            let (mix, _) = read_wav(m.mixture_path(&item.id)).unwrap();
            let sc = item.scores.as_ref().unwrap();
            assert_eq!(sc.sdr_db, sdr(&reference, &mix).unwrap());
            assert_eq!(sc.stoi, stoi(&reference, &mix).unwrap());
        }
        let ids: Vec<&str> = r.per_item.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids, ["00000", "00001", "00002"]);
        let tsv = r.to_tsv();
        assert!(tsv.starts_with("id\tsdr_db\tstoi\tstatus\n"));
        assert_eq!(tsv.lines().count(), 5);
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["summary"]["scored"], 3);
    }

    #[test]
    fn missing_files_are_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path());
        let partial = dir.path().join("partial");
        std::fs::create_dir_all(&partial).unwrap();
        std::fs::copy(m.reference_path("00001"), partial.join("00001.wav")).unwrap();
        let r = evaluate_set(&m, &partial).unwrap();
        assert_eq!((r.summary.scored, r.summary.failed), (1, 2));
        assert!(r.per_item[0].error.is_some());
        assert!(r.to_tsv().contains("00000\tNA\tNA\terror"));

        let empty = dir.path().join("empty");
        std::fs::create_dir_all(&empty).unwrap();
        assert!(matches!(evaluate_set(&m, &empty), Err(Error::Usage(_))));
    }
}
