//! Aggregation of human annotator ratings into per-team feature values.
//!
//! Each submission answers the 20 questions `hl_01..hl_20` on a 1–5 scale
//! plus an attention check (the claimed participant count). Aggregation
//! drops submissions failing the attention check, then per question drops
//! ratings more than 1.5 population standard deviations from the mean and
//! takes the median of the survivors.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::features::HUMAN_LABEL_NAMES;
use crate::transcript::Transcript;
use crate::Result;

/// Minimum ratings required per question.
pub const MIN_RATERS: usize = 3;

/// One rater's survey submission for one team.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSubmission {
    pub team_id: String,
    pub rater_id: String,
    /// Claimed number of participants (the attention check).
    pub attention_answer: usize,
    /// Answers in `hl_01..hl_20` order, each 1–5.
    pub answers: Vec<u8>,
}

impl RatingSubmission {
    pub fn validate(&self) -> Result<()> {
        if self.answers.len() != HUMAN_LABEL_NAMES.len() {
            return Err(Error::validation(format!(
                "submission by {:?} for team {:?} has {} answers, expected {}",
                self.rater_id,
                self.team_id,
                self.answers.len(),
                HUMAN_LABEL_NAMES.len()
            )));
        }
        for (i, &a) in self.answers.iter().enumerate() {
            if !(1..=5).contains(&a) {
                return Err(Error::validation(format!(
                    "answer {} out of range 1-5 in submission by {:?} for team {:?}: {a}",
                    HUMAN_LABEL_NAMES[i], self.rater_id, self.team_id
                )));
            }
        }
        Ok(())
    }
}

/// Aggregated per-team label values with the per-question count of ratings
/// the median was taken over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedLabels {
    pub team_id: String,
    /// Values in `hl_01..hl_20` order, each in `[1, 5]`.
    pub values: Vec<f64>,
    pub rater_count_used: Vec<usize>,
}

/// Keep only submissions whose attention answer matches the roster size.
pub fn filter_attention<'a>(
    submissions: &'a [RatingSubmission],
    transcript: &Transcript,
) -> Vec<&'a RatingSubmission> {
    submissions
        .iter()
        .filter(|s| s.attention_answer == transcript.roster.len())
        .collect()
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Aggregate one question's ratings: drop ratings more than 1.5 population
/// standard deviations from the mean, then take the median of the survivors
/// (the unfiltered median when filtering removed everything). Returns the
/// value and the number of ratings the median was taken over.
pub fn aggregate_question(ratings: &[u8]) -> Result<(f64, usize)> {
    if ratings.len() < MIN_RATERS {
        return Err(Error::degenerate(format!(
            "need at least {MIN_RATERS} ratings per question, got {}",
            ratings.len()
        )));
    }
    let values: Vec<f64> = ratings.iter().map(|&r| r as f64).collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let threshold = 1.5 * std;
    let mut survivors: Vec<f64> = values
        .iter()
        .copied()
        .filter(|v| (v - mean).abs() <= threshold)
        .collect();
    if survivors.is_empty() {
        survivors = values;
    }
    survivors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((median(&survivors), survivors.len()))
}

/// Aggregate all submissions for one team: attention filter, then the
/// per-question rule. Requires at least [`MIN_RATERS`] attention-passing
/// submissions.
pub fn aggregate_team(
    submissions: &[RatingSubmission],
    transcript: &Transcript,
) -> Result<AggregatedLabels> {
    for s in submissions {
        s.validate()?;
        if s.team_id != transcript.team_id {
            return Err(Error::validation(format!(
                "submission by {:?} is for team {:?}, not {:?}",
                s.rater_id, s.team_id, transcript.team_id
            )));
        }
    }
    let passing = filter_attention(submissions, transcript);
    if passing.len() < MIN_RATERS {
        return Err(Error::degenerate(format!(
            "team {:?}: {} attention-passing submissions, need at least {MIN_RATERS}",
            transcript.team_id,
            passing.len()
        )));
    }
    let mut values = Vec::with_capacity(HUMAN_LABEL_NAMES.len());
    let mut counts = Vec::with_capacity(HUMAN_LABEL_NAMES.len());
    for q in 0..HUMAN_LABEL_NAMES.len() {
        let ratings: Vec<u8> = passing.iter().map(|s| s.answers[q]).collect();
        let (value, used) = aggregate_question(&ratings)?;
        values.push(value);
        counts.push(used);
    }
    Ok(AggregatedLabels {
        team_id: transcript.team_id.clone(),
        values,
        rater_count_used: counts,
    })
}

/// Read a JSONL ratings file: one submission per line with fields `team_id`,
/// `rater_id`, `attention_answer`, and `answers` mapping `hl_01..hl_20` to
/// integers.
pub fn load_ratings(path: &Path) -> Result<Vec<RatingSubmission>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let display = path.display().to_string();
    let mut submissions = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| Error::parse(&display, line_no, format!("invalid JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::parse(&display, line_no, "expected a JSON object"))?;
        let team_id = obj
            .get("team_id")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::parse(&display, line_no, "missing field \"team_id\""))?
            .to_string();
        let rater_id = obj
            .get("rater_id")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::parse(&display, line_no, "missing field \"rater_id\""))?
            .to_string();
        let attention_answer = obj
            .get("attention_answer")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::parse(&display, line_no, "missing field \"attention_answer\""))?
            as usize;
        let answers_obj = obj
            .get("answers")
            .and_then(|v| v.as_object())
            .ok_or_else(|| Error::parse(&display, line_no, "missing object field \"answers\""))?;
        let mut answers = Vec::with_capacity(HUMAN_LABEL_NAMES.len());
        for name in HUMAN_LABEL_NAMES {
            let a = answers_obj.get(name).and_then(|v| v.as_u64()).ok_or_else(|| {
                Error::parse(&display, line_no, format!("missing or invalid answer {name:?}"))
            })?;
            answers.push(a.min(u8::MAX as u64) as u8);
        }
        let submission = RatingSubmission {
            team_id,
            rater_id,
            attention_answer,
            answers,
        };
        submission
            .validate()
            .map_err(|e| Error::parse(&display, line_no, e.to_string()))?;
        submissions.push(submission);
    }
    Ok(submissions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::{Condition, Transcript};
    use proptest::prelude::*;

    fn transcript(roster_size: usize) -> Transcript {
        Transcript {
            team_id: "team".into(),
            round: 1,
            condition: Condition::Masked,
            roster: (1..=roster_size).map(|i| format!("Person{i}")).collect(),
            messages: vec![],
            duration: 600.0,
        }
    }

    fn submission(rater: &str, attention: usize, answers: [u8; 20]) -> RatingSubmission {
        RatingSubmission {
            team_id: "team".into(),
            rater_id: rater.into(),
            attention_answer: attention,
            answers: answers.to_vec(),
        }
    }

    #[test]
    fn attention_filter_matches_roster_size() {
        let t = transcript(4);
        let subs = vec![
            submission("r1", 4, [3; 20]),
            submission("r2", 3, [3; 20]),
            submission("r3", 4, [3; 20]),
        ];
        let kept = filter_attention(&subs, &t);
        assert_eq!(kept.len(), 2);
        assert!(kept.iter().all(|s| s.attention_answer == 4));
        assert!(filter_attention(&[], &t).is_empty());
    }

    #[test]
    fn aggregate_question_constant_ratings() {
        assert_eq!(aggregate_question(&[3, 3, 3]).unwrap(), (3.0, 3));
    }

    #[test]
    fn aggregate_question_filters_outlier() {
        // mean 4.2, population std 1.6; |1 - 4.2| = 3.2 > 2.4 drops the 1
        let (value, used) = aggregate_question(&[1, 5, 5, 5, 5]).unwrap();
        assert_eq!(value, 5.0);
        assert_eq!(used, 4);
    }

    #[test]
    fn aggregate_question_insufficient_raters() {
        let err = aggregate_question(&[2, 4]).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn aggregate_question_even_survivors_take_half_integer_median() {
        // mean 3, std ~0.707; all within 1.5 std -> median of [2,3,3,4] = 3
        assert_eq!(aggregate_question(&[2, 3, 3, 4]).unwrap().0, 3.0);
        // [2,3,4,5]: mean 3.5, std ~1.118, threshold 1.677; all survive
        // median = 3.5
        assert_eq!(aggregate_question(&[2, 3, 4, 5]).unwrap().0, 3.5);
    }

    #[test]
    fn aggregate_team_over_attention_passing_submissions() {
        let t = transcript(4);
        let mut answers_a = [3u8; 20];
        answers_a[0] = 5;
        let subs = vec![
            submission("r1", 4, answers_a),
            submission("r2", 4, [3; 20]),
            submission("r3", 4, [3; 20]),
            submission("r4", 4, [3; 20]),
            submission("r5", 2, [1; 20]), // fails attention, ignored
        ];
        let agg = aggregate_team(&subs, &t).unwrap();
        assert_eq!(agg.values[1], 3.0);
        // hl_01 ratings [5,3,3,3]: mean 3.5, std 0.866, threshold 1.299;
        // the 5 is dropped -> median of [3,3,3]
        assert_eq!(agg.values[0], 3.0);
        assert_eq!(agg.rater_count_used[0], 3);
        assert_eq!(agg.rater_count_used[1], 4);
    }

    #[test]
    fn aggregate_team_identical_submissions() {
        let t = transcript(3);
        let subs = vec![
            submission("r1", 3, [4; 20]),
            submission("r2", 3, [4; 20]),
            submission("r3", 3, [4; 20]),
        ];
        let agg = aggregate_team(&subs, &t).unwrap();
        assert!(agg.values.iter().all(|&v| v == 4.0));
        assert!(agg.rater_count_used.iter().all(|&c| c == 3));
    }

    #[test]
    fn aggregate_team_requires_three_passing() {
        let t = transcript(5);
        let subs = vec![
            submission("r1", 5, [3; 20]),
            submission("r2", 5, [3; 20]),
            submission("r3", 4, [3; 20]),
        ];
        let err = aggregate_team(&subs, &t).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn load_ratings_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ratings.jsonl");
        let answers: serde_json::Map<String, serde_json::Value> = HUMAN_LABEL_NAMES
            .iter()
            .map(|n| (n.to_string(), serde_json::json!(4)))
            .collect();
        let line = serde_json::json!({
            "team_id": "team",
            "rater_id": "r1",
            "attention_answer": 4,
            "answers": answers,
        });
        std::fs::write(&path, format!("{line}\n")).unwrap();
        let subs = load_ratings(&path).unwrap();
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].answers, vec![4; 20]);

        // out-of-range answer reports the line
        let mut bad = line.clone();
        bad["answers"]["hl_07"] = serde_json::json!(9);
        std::fs::write(&path, format!("{bad}\n")).unwrap();
        let err = load_ratings(&path).unwrap_err();
        assert!(err.to_string().contains("ratings.jsonl:1"), "{err}");
    }

    proptest! {
        #[test]
        fn aggregate_is_permutation_invariant(
            mut ratings in proptest::collection::vec(1u8..=5, 3..12),
            seed in 0u64..500,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let before = aggregate_question(&ratings).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            ratings.shuffle(&mut rng);
            prop_assert_eq!(aggregate_question(&ratings).unwrap(), before);
        }

        #[test]
        fn aggregate_stays_within_rating_range(
            ratings in proptest::collection::vec(1u8..=5, 3..12),
        ) {
            let (value, used) = aggregate_question(&ratings).unwrap();
            let min = *ratings.iter().min().unwrap() as f64;
            let max = *ratings.iter().max().unwrap() as f64;
            prop_assert!(value >= min && value <= max);
            prop_assert!(used >= 1 && used <= ratings.len());
        }

        #[test]
        fn duplicating_the_median_is_stable_when_the_filter_is(
            ratings in proptest::collection::vec(1u8..=5, 3..10),
        ) {
            // Adding a duplicate of the median shifts the mean and std, so
            // it can change which ratings the 1.5-sigma filter drops; the
            // median is only guaranteed stable when the survivor set is.
            let survivors = |rs: &[u8]| -> Vec<f64> {
                let values: Vec<f64> = rs.iter().map(|&r| r as f64).collect();
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                let std =
                    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                let mut kept: Vec<f64> = values
                    .iter()
                    .copied()
                    .filter(|v| (v - mean).abs() <= 1.5 * std)
                    .collect();
                if kept.is_empty() {
                    kept = values;
                }
                kept.sort_by(|a, b| a.partial_cmp(b).unwrap());
                kept
            };
            let (value, _) = aggregate_question(&ratings).unwrap();
            if value.fract() == 0.0 {
                let mut extended = ratings.clone();
                extended.push(value as u8);
                let mut expected = survivors(&ratings);
                expected.push(value);
                expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
                if survivors(&extended) == expected {
                    let (with_dup, _) = aggregate_question(&extended).unwrap();
                    prop_assert!((with_dup - value).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn unanimous_ratings_pass_unfiltered(
            value in 1u8..=5,
            n in 3usize..10,
        ) {
            let ratings = vec![value; n];
            let (agg, used) = aggregate_question(&ratings).unwrap();
            prop_assert_eq!(agg, value as f64);
            prop_assert_eq!(used, n);
        }
    }
}
