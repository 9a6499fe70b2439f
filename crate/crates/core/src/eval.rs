//! Exact-match and thresholded semantic accuracy over JSONL datasets.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::answer::{Answer, Question, QuestionType};
use crate::error::{Error, Result};
use crate::text::jaccard;

pub const DEFAULT_TAU: f64 = 0.5;

/// 1 iff `pred` equals a gold answer after trimming surrounding whitespace.
/// Case-sensitive.
pub fn exact_match(pred: &str, golds: &[String]) -> bool {
    let pred = pred.trim();
    golds.iter().any(|g| g.trim() == pred)
}

/// Similarity function used by the accuracy metric.
pub trait AccScorer: Send + Sync {
    fn similarity(&self, pred: &str, gold: &str) -> Result<f64>;
}

/// Token-level Jaccard overlap.
#[derive(Debug, Clone, Copy, Default)]
pub struct JaccardScorer;

impl AccScorer for JaccardScorer {
    fn similarity(&self, pred: &str, gold: &str) -> Result<f64> {
        Ok(jaccard(pred, gold))
    }
}

/// 1 iff the best similarity over `golds` reaches `tau`.
pub fn semantic_acc(pred: &str, golds: &[String], scorer: &dyn AccScorer, tau: f64) -> Result<bool> {
    let mut best: Option<f64> = None;
    for g in golds {
        let s = scorer.similarity(pred, g)?;
        if !s.is_finite() {
            return Err(Error::Provider(format!("similarity {s} for {pred:?} vs {g:?}")));
        }
        best = Some(best.map_or(s, |b| b.max(s)));
    }
    Ok(best.is_some_and(|b| b >= tau))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedLine {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub questions: Vec<Question>,
    pub skipped: Vec<SkippedLine>,
}

/// Parse JSONL. Blank lines are ignored; malformed lines are skipped and
/// recorded.
pub fn parse_dataset(text: &str) -> Dataset {
    let mut ds = Dataset::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Question>(line) {
            Ok(q) if q.text.trim().is_empty() => ds.skipped.push(SkippedLine {
                line: i + 1,
                reason: "empty question".into(),
            }),
            Ok(q) => ds.questions.push(q),
            Err(e) => {
                log::warn!("dataset line {}: {e}", i + 1);
                ds.skipped.push(SkippedLine {
                    line: i + 1,
                    reason: e.to_string(),
                });
            }
        }
    }
    ds
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read dataset {}: {e}", path.display())))?;
    Ok(parse_dataset(&text))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub question_id: String,
    pub predicted: String,
    pub gold: Vec<String>,
    pub em: u8,
    pub acc: u8,
    pub track: QuestionType,
    pub latency_ms: u64,
    /// False when the accuracy scorer failed; excluded from aggregates.
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackAggregate {
    pub n: usize,
    pub em: Option<f64>,
    pub acc: Option<f64>,
}

/// Means over valid records; `None` when there are none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub em: Option<f64>,
    pub acc: Option<f64>,
    pub n: usize,
    pub invalid: usize,
    pub skipped: usize,
    pub per_track: BTreeMap<String, TrackAggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub records: Vec<EvalRecord>,
    pub aggregate: Aggregate,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped_lines: Vec<SkippedLine>,
}

fn mean(values: impl Iterator<Item = u8>) -> Option<f64> {
    let (sum, n) = values.fold((0u64, 0u64), |(s, n), v| (s + u64::from(v), n + 1));
    (n > 0).then(|| sum as f64 / n as f64)
}

pub fn aggregate(records: &[EvalRecord], skipped: usize) -> Aggregate {
    let valid: Vec<&EvalRecord> = records.iter().filter(|r| r.valid).collect();
    let mut per_track = BTreeMap::new();
    for track in [QuestionType::Chained, QuestionType::Parallel] {
        let rs: Vec<&&EvalRecord> = valid.iter().filter(|r| r.track == track).collect();
        per_track.insert(
            track.as_str().to_string(),
            TrackAggregate {
                n: rs.len(),
                em: mean(rs.iter().map(|r| r.em)),
                acc: mean(rs.iter().map(|r| r.acc)),
            },
        );
    }
    Aggregate {
        em: mean(valid.iter().map(|r| r.em)),
        acc: mean(valid.iter().map(|r| r.acc)),
        n: valid.len(),
        invalid: records.len() - valid.len(),
        skipped,
        per_track,
    }
}

/// Score one answer against the question's gold list.
pub fn score_answer(q: &Question, a: &Answer, scorer: &dyn AccScorer, tau: f64, latency_ms: u64) -> EvalRecord {
    let em = exact_match(&a.text, &q.gold_answers);
    let (acc, valid, error) = match semantic_acc(&a.text, &q.gold_answers, scorer, tau) {
        Ok(v) => (v, true, None),
        Err(e) => (false, false, Some(format!("accuracy scorer failed: {e}"))),
    };
    EvalRecord {
        question_id: q.id.clone(),
        predicted: a.text.clone(),
        gold: q.gold_answers.clone(),
        em: u8::from(em),
        acc: u8::from(acc),
        track: a.track,
        latency_ms,
        valid,
        flags: a.flags.iter().cloned().collect(),
        error: error.or_else(|| (!a.warnings.is_empty() && a.text.is_empty()).then(|| a.warnings.join("; "))),
    }
}

/// Answer every question with up to `parallelism` worker threads.
/// Records keep dataset order.
pub fn evaluate<F>(dataset: &Dataset, answer: F, scorer: &dyn AccScorer, tau: f64, parallelism: usize) -> Report
where
    F: Fn(&Question) -> Answer + Sync,
{
    let n = dataset.questions.len();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<EvalRecord>>> = Mutex::new(vec![None; n]);
    let workers = parallelism.clamp(1, n.max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(q) = dataset.questions.get(i) else { break };
                let start = Instant::now();
                let a = answer(q);
                let latency = start.elapsed().as_millis() as u64;
                let record = score_answer(q, &a, scorer, tau, latency);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(record);
            });
        }
    });
    let records: Vec<EvalRecord> = slots
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|r| r.expect("every question answered"))
        .collect();
    Report {
        aggregate: aggregate(&records, dataset.skipped.len()),
        records,
        skipped_lines: dataset.skipped.clone(),
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{:.1}", x * 100.0))
}

impl Report {
    /// Plain-text summary table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<24} {:<9} {:>3} {:>3}  predicted", "question", "track", "EM", "ACC");
        for r in &self.records {
            let acc = if r.valid { r.acc.to_string() } else { "-".into() };
            let pred: String = r.predicted.chars().take(48).collect();
            let _ = writeln!(out, "{:<24} {:<9} {:>3} {:>3}  {}", r.question_id, r.track, r.em, acc, pred.replace('\n', " "));
        }
        let a = &self.aggregate;
        let _ = writeln!(out, "\n{:<10} {:>5} {:>7} {:>7}", "track", "n", "EM%", "ACC%");
        for (track, t) in &a.per_track {
            let _ = writeln!(out, "{:<10} {:>5} {:>7} {:>7}", track, t.n, pct(t.em), pct(t.acc));
        }
        let _ = writeln!(out, "{:<10} {:>5} {:>7} {:>7}", "all", a.n, pct(a.em), pct(a.acc));
        if a.invalid > 0 || a.skipped > 0 {
            let _ = writeln!(out, "invalid records: {}, skipped lines: {}", a.invalid, a.skipped);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn exact_match_examples() {
        assert!(exact_match("Paris", &g(&["Paris"])));
        assert!(!exact_match("paris", &g(&["Paris"])));
        assert!(!exact_match("Paris, France", &g(&["Paris"])));
        assert!(exact_match("  Paris\n", &g(&["Paris "])));
        assert!(exact_match("Lutetia", &g(&["Paris", "Lutetia"])));
        assert!(!exact_match("Paris", &[]));
    }

    #[test]
    fn semantic_acc_examples() {
        let s = JaccardScorer;
        assert!(semantic_acc("Paris", &g(&["Paris"]), &s, 1.0).unwrap());
        assert!(!semantic_acc("Berlin", &g(&["Paris"]), &s, 0.5).unwrap());
        assert!(semantic_acc("Berlin", &g(&["Paris"]), &s, 0.0).unwrap());
        // {paris, france} vs {paris}: 1/2
        assert!(semantic_acc("Paris, France", &g(&["Paris"]), &s, 0.5).unwrap());
        assert!(!semantic_acc("Paris, France", &g(&["Paris"]), &s, 0.51).unwrap());
    }

    struct Failing;
    impl AccScorer for Failing {
        fn similarity(&self, _: &str, _: &str) -> Result<f64> {
            Err(Error::Provider("down".into()))
        }
    }

    #[test]
    fn scorer_failure_marks_record_invalid() {
        let ds = Dataset {
            questions: vec![Question::new("1", "q").with_gold(["x"])],
            skipped: vec![],
        };
        let report = evaluate(
            &ds,
            |q| {
                let mut a = Answer::new(q.id.clone(), QuestionType::Parallel);
                a.text = "x".into();
                a
            },
            &Failing,
            0.5,
            2,
        );
        assert!(!report.records[0].valid);
        assert_eq!(report.aggregate.invalid, 1);
        assert_eq!(report.aggregate.n, 0);
        assert_eq!(report.aggregate.em, None);
    }

    #[test]
    fn dataset_skips_malformed_lines() {
        let ds = parse_dataset(
            "{\"id\": \"a\", \"question\": \"Q?\", \"gold_answers\": [\"x\"]}\n\nnot json\n{\"id\": \"b\", \"question\": \"R?\"}\n",
        );
        assert_eq!(ds.questions.len(), 2);
        assert_eq!(ds.skipped.len(), 1);
        assert_eq!(ds.skipped[0].line, 3);
        assert!(ds.questions[1].gold_answers.is_empty());
    }

    #[test]
    fn empty_dataset_has_undefined_aggregates() {
        let report = evaluate(&Dataset::default(), |_| unreachable!(), &JaccardScorer, 0.5, 4);
        assert!(report.records.is_empty());
        assert_eq!(report.aggregate.em, None);
        assert_eq!(report.aggregate.acc, None);
        let json = serde_json::to_value(&report).unwrap();
        assert!(json["aggregate"]["em"].is_null());
    }

    proptest! {
        #[test]
        fn exact_match_reflexive(s in "\\PC{0,20}") {
            prop_assert!(exact_match(&s, std::slice::from_ref(&s)));
        }

        #[test]
        fn acc_monotone_in_tau(p in "[a-c ]{0,12}", gold in "[a-c ]{0,12}", t1 in 0.0..=1.0f64, t2 in 0.0..=1.0f64) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let golds = vec![gold];
            let a_lo = semantic_acc(&p, &golds, &JaccardScorer, lo).unwrap();
            let a_hi = semantic_acc(&p, &golds, &JaccardScorer, hi).unwrap();
            prop_assert!(a_lo || !a_hi);
        }

        #[test]
        fn aggregate_is_exact_mean(bits in proptest::collection::vec((0u8..2, 0u8..2, any::<bool>()), 0..40)) {
            let records: Vec<EvalRecord> = bits.iter().enumerate().map(|(i, &(em, acc, chained))| EvalRecord {
                question_id: i.to_string(),
                predicted: String::new(),
                gold: vec![],
                em,
                acc,
                track: if chained { QuestionType::Chained } else { QuestionType::Parallel },
                latency_ms: 0,
                valid: true,
                flags: vec![],
                error: None,
            }).collect();
            let a = aggregate(&records, 0);
            let n = bits.len();
            if n == 0 {
                prop_assert_eq!(a.em, None);
            } else {
                let em_sum: u32 = bits.iter().map(|b| u32::from(b.0)).sum();
                let acc_sum: u32 = bits.iter().map(|b| u32::from(b.1)).sum();
                prop_assert_eq!(a.em, Some(f64::from(em_sum) / n as f64));
                prop_assert_eq!(a.acc, Some(f64::from(acc_sum) / n as f64));
            }
            let per: usize = a.per_track.values().map(|t| t.n).sum();
            prop_assert_eq!(per, n);
        }
    }
}
