//! Ranked-list evaluation: HR@k and NDCG@k over sampled candidate sets.
//!
//! Every model under comparison scores the same per-user candidate lists
//! (held-out item + sampled negatives), candidates are sorted by score, and
//! the held-out item's position yields the metrics. With a single relevant
//! item NDCG collapses to 1/log₂(pos+1) — the log base is forced to 2 by the
//! convention that the ideal DCG equals 1.
//!
//! HR is the standard 0/1 indicator. A literal reading of the hit-rate
//! formula some papers print would award 1/k per hit, capping HR@10 at 0.1;
//! that variant is available as [`HrMode::OneOverK`] for anyone auditing the
//! discrepancy, but the indicator is the default everywhere.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::features::FeatureStore;
use crate::error::{Error, Result};
use crate::models::ScorerModel;
use crate::sampling::{CandidateSet, EvalCandidates};

/// Anything that can score a (user, item) pair for ranking. Scores only need
/// a consistent order, not a probability scale.
pub trait Scorer: Sync {
    fn score_item(&self, user: u32, item: u32, store: &FeatureStore) -> Result<f32>;
}

impl Scorer for ScorerModel {
    fn score_item(&self, user: u32, item: u32, store: &FeatureStore) -> Result<f32> {
        self.score(user, item, store)
    }
}

/// Candidates in descending score order; ties broken by ascending item id.
pub fn rank_candidates<S: Scorer + ?Sized>(
    scorer: &S,
    user: u32,
    candidates: &CandidateSet,
    store: &FeatureStore,
) -> Result<Vec<u32>> {
    let mut scored = Vec::with_capacity(candidates.len());
    for item in candidates.items() {
        scored.push((item, scorer.score_item(user, item, store)?));
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    Ok(scored.into_iter().map(|(item, _)| item).collect())
}

fn position_of(ranked: &[u32], item: u32) -> Result<usize> {
    ranked
        .iter()
        .position(|&i| i == item)
        .map(|p| p + 1)
        .ok_or_else(|| {
            Error::Protocol(format!(
                "held-out item {item} is missing from the ranked candidate list"
            ))
        })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HrMode {
    /// 1 on a top-k hit, 0 otherwise (the form Table-style results need).
    Indicator,
    /// The literal 1/k-per-hit variant; kept for auditing only.
    OneOverK,
}

pub fn hr_at_k(ranked: &[u32], test_item: u32, k: usize, mode: HrMode) -> Result<f64> {
    if k < 1 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    let pos = position_of(ranked, test_item)?;
    if pos > k {
        return Ok(0.0);
    }
    Ok(match mode {
        HrMode::Indicator => 1.0,
        HrMode::OneOverK => 1.0 / k as f64,
    })
}

pub fn ndcg_at_k(ranked: &[u32], test_item: u32, k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    let pos = position_of(ranked, test_item)?;
    if pos > k {
        return Ok(0.0);
    }
    Ok(1.0 / ((pos + 1) as f64).log2())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerUserRecord {
    pub user: u32,
    /// 1-based position of the held-out item in the ranked candidates.
    pub rank: u32,
    pub hit: bool,
    pub ndcg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub k: u32,
    pub hr: f64,
    pub ndcg: f64,
    pub users: usize,
    /// Hash of the candidate sets; must match across compared models.
    pub candidates_fingerprint: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_user: Option<Vec<PerUserRecord>>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s)
            .map_err(|e| Error::Protocol(format!("malformed eval report: {e}")))
    }
}

/// Every user in `expected` must have a candidate set (protocol error
/// otherwise) — guards against evaluating with stale candidate artifacts.
pub fn verify_coverage(candidates: &EvalCandidates, expected: &[(u32, u32)]) -> Result<()> {
    for &(user, target) in expected {
        match candidates.get(user) {
            None => {
                return Err(Error::Protocol(format!(
                    "user {user} has no candidate set"
                )))
            }
            Some(c) if c.target != target => {
                return Err(Error::Protocol(format!(
                    "user {user}: candidate target {} does not match held-out item {target}",
                    c.target
                )))
            }
            Some(_) => {}
        }
    }
    Ok(())
}

/// Rank every user's candidates and average the per-user metrics. Users are
/// scored in parallel; records are merged back in ascending user order, so
/// the report is deterministic regardless of thread count.
pub fn evaluate<S: Scorer + ?Sized>(
    scorer: &S,
    model_tag: &str,
    candidates: &EvalCandidates,
    store: &FeatureStore,
    k: usize,
    hr_mode: HrMode,
    keep_per_user: bool,
) -> Result<EvalReport> {
    let entries: Vec<(u32, &CandidateSet)> = candidates.iter().collect();
    let records: Vec<PerUserRecord> = entries
        .par_iter()
        .map(|&(user, cands)| -> Result<PerUserRecord> {
            let ranked = rank_candidates(scorer, user, cands, store)?;
            let pos = position_of(&ranked, cands.target)?;
            Ok(PerUserRecord {
                user,
                rank: pos as u32,
                hit: pos <= k,
                ndcg: ndcg_at_k(&ranked, cands.target, k)?,
            })
        })
        .collect::<Result<_>>()?;

    let n = records.len();
    if n == 0 {
        return Err(Error::Protocol("no users to evaluate".into()));
    }
    let hit_value = match hr_mode {
        HrMode::Indicator => 1.0,
        HrMode::OneOverK => 1.0 / k as f64,
    };
    let hr = records.iter().filter(|r| r.hit).count() as f64 * hit_value / n as f64;
    let ndcg = records.iter().map(|r| r.ndcg).sum::<f64>() / n as f64;
    Ok(EvalReport {
        model: model_tag.to_string(),
        k: k as u32,
        hr,
        ndcg,
        users: n,
        candidates_fingerprint: format!("{:016x}", candidates.fingerprint()),
        per_user: keep_per_user.then_some(records),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::interactions::{leave_one_out_split, parse_interactions, LogFormat};
    use crate::rng::RngState;
    use crate::sampling::{sample_eval_candidates, Holdout};
    use std::fmt::Write as _;

    /// Scores each item by a fixed table; missing items score 0.
    struct TableScorer(Vec<f32>);

    impl Scorer for TableScorer {
        fn score_item(&self, _u: u32, item: u32, _s: &FeatureStore) -> Result<f32> {
            Ok(self.0.get(item as usize).copied().unwrap_or(0.0))
        }
    }

    fn cands(target: u32, negatives: &[u32]) -> CandidateSet {
        CandidateSet {
            target,
            negatives: negatives.to_vec(),
        }
    }

    #[test]
    fn ranking_is_by_score_then_id() {
        let store = FeatureStore::new();
        let s = TableScorer(vec![0.1, 0.9, 0.5, 0.9]);
        let ranked = rank_candidates(&s, 0, &cands(0, &[1, 2, 3]), &store).unwrap();
        // 1 and 3 tie at 0.9: ascending id puts 1 first
        assert_eq!(ranked, vec![1, 3, 2, 0]);

        let flat = TableScorer(vec![0.5; 5]);
        let ranked = rank_candidates(&flat, 0, &cands(4, &[2, 0, 3, 1]), &store).unwrap();
        assert_eq!(ranked, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn hr_boundary_cases() {
        let ranked: Vec<u32> = (0..20).collect();
        assert_eq!(hr_at_k(&ranked, 0, 10, HrMode::Indicator).unwrap(), 1.0);
        assert_eq!(hr_at_k(&ranked, 9, 10, HrMode::Indicator).unwrap(), 1.0); // pos 10
        assert_eq!(hr_at_k(&ranked, 10, 10, HrMode::Indicator).unwrap(), 0.0); // pos 11
        assert_eq!(hr_at_k(&ranked, 0, 10, HrMode::OneOverK).unwrap(), 0.1);
        assert!(hr_at_k(&ranked, 99, 10, HrMode::Indicator).is_err());
    }

    #[test]
    fn ndcg_closed_forms() {
        let ranked: Vec<u32> = (0..20).collect();
        assert_eq!(ndcg_at_k(&ranked, 0, 10).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&ranked, 2, 10).unwrap(), 0.5); // pos 3: 1/log2(4)
        let pos10 = ndcg_at_k(&ranked, 9, 10).unwrap();
        assert!((pos10 - 0.2890648263178879).abs() < 1e-12); // 1/log2(11)
        assert_eq!(ndcg_at_k(&ranked, 10, 10).unwrap(), 0.0);
    }

    #[test]
    fn ndcg_never_exceeds_hr() {
        let ranked: Vec<u32> = (0..15).collect();
        for item in 0..15u32 {
            let hr = hr_at_k(&ranked, item, 10, HrMode::Indicator).unwrap();
            let nd = ndcg_at_k(&ranked, item, 10).unwrap();
            assert!(nd <= hr + 1e-12);
        }
    }

    fn toy_candidates() -> EvalCandidates {
        let mut text = String::new();
        for u in 0..30u32 {
            for k in 0..5u32 {
                let _ = writeln!(text, "u{u}\ti{}\t{k}", (u + 7 * k) % 40);
            }
        }
        let log =
            parse_interactions(std::io::Cursor::new(text), LogFormat::Tsv, "<toy>").unwrap();
        let split = leave_one_out_split(&log);
        sample_eval_candidates(&split, Holdout::Test, 10, &mut RngState::new(3)).unwrap()
    }

    #[test]
    fn perfect_scorer_gets_ones() {
        let cands = toy_candidates();
        let store = FeatureStore::new();
        // score each user's target above everything else
        struct Oracle(EvalCandidates);
        impl Scorer for Oracle {
            fn score_item(&self, user: u32, item: u32, _s: &FeatureStore) -> Result<f32> {
                Ok(if self.0.get(user).unwrap().target == item {
                    1.0
                } else {
                    0.1
                })
            }
        }
        let report = evaluate(
            &Oracle(cands.clone()),
            "oracle",
            &cands,
            &store,
            10,
            HrMode::Indicator,
            true,
        )
        .unwrap();
        assert_eq!(report.hr, 1.0);
        assert_eq!(report.ndcg, 1.0);
        assert!(report.per_user.unwrap().iter().all(|r| r.rank == 1));
    }

    #[test]
    fn means_equal_per_user_average_exactly() {
        let cands = toy_candidates();
        let store = FeatureStore::new();
        let s = TableScorer((0..40).map(|i| (i as f32 * 0.77).sin()).collect());
        let report = evaluate(&s, "t", &cands, &store, 10, HrMode::Indicator, true).unwrap();
        let records = report.per_user.as_ref().unwrap();
        let hr = records.iter().filter(|r| r.hit).count() as f64 / records.len() as f64;
        let ndcg = records.iter().map(|r| r.ndcg).sum::<f64>() / records.len() as f64;
        assert_eq!(report.hr, hr);
        assert_eq!(report.ndcg, ndcg);
        assert!(report.hr >= 0.0 && report.hr <= 1.0);
        assert!(report.ndcg <= report.hr);
    }

    #[test]
    fn monotone_transform_leaves_metrics_unchanged() {
        let cands = toy_candidates();
        let store = FeatureStore::new();
        let base: Vec<f32> = (0..40).map(|i| (i as f32 * 1.3).cos()).collect();
        let squashed: Vec<f32> = base.iter().map(|&v| 1.0 / (1.0 + (-3.0 * v).exp())).collect();
        let a = evaluate(&TableScorer(base), "a", &cands, &store, 10, HrMode::Indicator, false)
            .unwrap();
        let b = evaluate(
            &TableScorer(squashed),
            "b",
            &cands,
            &store,
            10,
            HrMode::Indicator,
            false,
        )
        .unwrap();
        assert_eq!(a.hr, b.hr);
        assert_eq!(a.ndcg, b.ndcg);
        assert_eq!(a.candidates_fingerprint, b.candidates_fingerprint);
    }

    #[test]
    fn coverage_check_catches_missing_and_mismatched_users() {
        let cands = toy_candidates();
        let pairs: Vec<(u32, u32)> = cands.iter().map(|(u, c)| (u, c.target)).collect();
        assert!(verify_coverage(&cands, &pairs).is_ok());
        let mut missing = pairs.clone();
        missing.push((9999, 1));
        assert!(matches!(
            verify_coverage(&cands, &missing),
            Err(Error::Protocol(_))
        ));
        let mut mismatched = pairs;
        mismatched[0].1 = u32::MAX;
        assert!(matches!(
            verify_coverage(&cands, &mismatched),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn report_json_round_trips() {
        let cands = toy_candidates();
        let store = FeatureStore::new();
        let s = TableScorer((0..40).map(|i| i as f32).collect());
        let report = evaluate(&s, "t", &cands, &store, 10, HrMode::Indicator, true).unwrap();
        let back = EvalReport::from_json(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn parallel_evaluation_is_deterministic() {
        let cands = toy_candidates();
        let store = FeatureStore::new();
        let s = TableScorer((0..40).map(|i| (i as f32).tan()).collect());
        let a = evaluate(&s, "t", &cands, &store, 10, HrMode::Indicator, true).unwrap();
        let b = evaluate(&s, "t", &cands, &store, 10, HrMode::Indicator, true).unwrap();
        assert_eq!(a, b);
        let users: Vec<u32> = a.per_user.unwrap().iter().map(|r| r.user).collect();
        let mut sorted = users.clone();
        sorted.sort_unstable();
        assert_eq!(users, sorted, "records must merge in user order");
    }
}
