//! Corpus data model and ingestion: chat transcripts, team metadata, and
//! viability instrument responses.
//!
//! Input is two JSON Lines files. The messages file carries one object per
//! message (`team_id`, `sender`, `timestamp_s`, `text`); the teams file
//! carries one object per team (`team_id`, `round`, `condition`, optional
//! `duration_s`, `members` with their 14 instrument items, optional
//! `performance`). Loading validates every documented invariant and reports
//! the offending file and line on failure.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Default interaction length in seconds when the teams file does not
/// override it.
pub const DEFAULT_DURATION_S: f64 = 600.0;

/// Number of items in the viability instrument.
pub const VIABILITY_ITEMS: usize = 14;

/// Experimental condition a team interaction was recorded under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Masked,
    InitialVisible,
    Reconvened,
}

impl Condition {
    pub fn as_str(&self) -> &'static str {
        match self {
            Condition::Masked => "masked",
            Condition::InitialVisible => "initial_visible",
            Condition::Reconvened => "reconvened",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "masked" => Ok(Condition::Masked),
            "initial_visible" => Ok(Condition::InitialVisible),
            "reconvened" => Ok(Condition::Reconvened),
            other => Err(Error::validation(format!(
                "unknown condition {other:?} (expected masked|initial_visible|reconvened)"
            ))),
        }
    }
}

/// One chat message. Timestamps are seconds since the start of the
/// interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub sender: String,
    pub timestamp: f64,
    pub text: String,
}

/// One team's ordered chat log plus metadata.
///
/// Invariants (enforced on load): 3–8 roster members, messages sorted
/// nondecreasing by timestamp, every timestamp within `[0, duration]`, and
/// every sender on the roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub team_id: String,
    /// Interaction round 1–4, or 0 when unknown.
    pub round: u8,
    pub condition: Condition,
    pub roster: Vec<String>,
    pub messages: Vec<ChatMessage>,
    pub duration: f64,
}

/// Instrument responses for one member: exactly 14 items, each 1–5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberResponse {
    pub member_id: String,
    pub items: Vec<u8>,
}

/// Per-team viability instrument responses and optional task performance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViabilityRecord {
    pub team_id: String,
    pub members: Vec<MemberResponse>,
    pub performance: Option<f64>,
}

/// A transcript joined with its viability record.
#[derive(Debug, Clone, PartialEq)]
pub struct Team {
    pub transcript: Transcript,
    pub viability: ViabilityRecord,
}

/// A validated corpus. Teams keep the order of the teams file; messages are
/// stably sorted by timestamp within each team. Immutable after load.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub teams: Vec<Team>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.teams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.teams.is_empty()
    }

    pub fn message_count(&self) -> usize {
        self.teams.iter().map(|t| t.transcript.messages.len()).sum()
    }

    pub fn get(&self, team_id: &str) -> Option<&Team> {
        self.teams.iter().find(|t| t.transcript.team_id == team_id)
    }

    /// Team viability score per team, in corpus order.
    pub fn viability_scores(&self) -> Result<Vec<(String, f64)>> {
        self.teams
            .iter()
            .map(|t| Ok((t.transcript.team_id.clone(), team_viability(&t.viability)?)))
            .collect()
    }
}

/// A loaded corpus plus non-fatal loader warnings (unknown fields, class
/// degeneracies noticed early, ...).
#[derive(Debug)]
pub struct LoadOutcome {
    pub corpus: Corpus,
    pub warnings: Vec<String>,
}

/// Sum of the 14 instrument items; range 14–70.
pub fn individual_viability(items: &[u8]) -> Result<u32> {
    if items.len() != VIABILITY_ITEMS {
        return Err(Error::validation(format!(
            "expected {VIABILITY_ITEMS} viability items, got {}",
            items.len()
        )));
    }
    for (i, &v) in items.iter().enumerate() {
        if !(1..=5).contains(&v) {
            return Err(Error::validation(format!(
                "viability item {} out of range 1-5: {v}",
                i + 1
            )));
        }
    }
    Ok(items.iter().map(|&v| v as u32).sum())
}

/// Mean of the members' individual scores.
pub fn team_viability(record: &ViabilityRecord) -> Result<f64> {
    if record.members.is_empty() {
        return Err(Error::validation(format!(
            "team {} has no members with viability responses",
            record.team_id
        )));
    }
    let mut total = 0u32;
    for m in &record.members {
        total += individual_viability(&m.items)?;
    }
    Ok(total as f64 / record.members.len() as f64)
}

/// Percentile of `scores` by linear interpolation between closest ranks
/// (inclusive method): rank `p/100 * (n-1)` into the sorted list.
pub fn percentile_cutoff(scores: &[f64], p: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::validation("percentile of an empty score list"));
    }
    if !(p > 0.0 && p < 100.0) {
        return Err(Error::validation(format!(
            "percentile must be strictly between 0 and 100, got {p}"
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::validation("non-finite score in percentile input"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if frac == 0.0 || lo + 1 == sorted.len() {
        Ok(sorted[lo])
    } else {
        Ok(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
    }
}

/// Binary viability class relative to a percentile cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViabilityClass {
    High,
    Low,
}

impl ViabilityClass {
    pub fn is_high(&self) -> bool {
        matches!(self, ViabilityClass::High)
    }
}

/// Result of splitting teams at a percentile cutoff. Scores strictly above
/// the cutoff are high; scores at or below it are low, so the high class at
/// the 90th percentile never exceeds a decile plus ties.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeling {
    pub percentile: f64,
    pub cutoff: f64,
    /// Per-team class, in input order.
    pub labels: Vec<(String, ViabilityClass)>,
    /// True when one class came out empty.
    pub degenerate: bool,
}

impl Labeling {
    pub fn class_counts(&self) -> (usize, usize) {
        let high = self.labels.iter().filter(|(_, c)| c.is_high()).count();
        (high, self.labels.len() - high)
    }
}

/// Label every team high/low against the percentile cutoff of the given
/// scores. A degenerate split (either class empty) is flagged, not an error.
pub fn label_teams(scores: &[(String, f64)], p: f64) -> Result<Labeling> {
    let values: Vec<f64> = scores.iter().map(|(_, s)| *s).collect();
    let cutoff = percentile_cutoff(&values, p)?;
    let labels: Vec<(String, ViabilityClass)> = scores
        .iter()
        .map(|(id, s)| {
            let class = if *s > cutoff {
                ViabilityClass::High
            } else {
                ViabilityClass::Low
            };
            (id.clone(), class)
        })
        .collect();
    let high = labels.iter().filter(|(_, c)| c.is_high()).count();
    Ok(Labeling {
        percentile: p,
        cutoff,
        degenerate: high == 0 || high == labels.len(),
        labels,
    })
}

// ---------------------------------------------------------------------------
// JSONL ingestion
// ---------------------------------------------------------------------------

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    reader
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

struct LineCtx<'a> {
    path: &'a str,
    line: usize,
}

impl LineCtx<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::parse(self.path, self.line, message)
    }
}

fn parse_object<'a>(
    ctx: &LineCtx,
    raw: &'a str,
) -> Result<serde_json::Map<String, serde_json::Value>> {
    let value: serde_json::Value = serde_json::from_str(raw)
        .map_err(|e| ctx.err(format!("invalid JSON: {e}")))?;
    match value {
        serde_json::Value::Object(map) => Ok(map),
        _ => Err(ctx.err("expected a JSON object")),
    }
}

fn take_str(
    ctx: &LineCtx,
    map: &serde_json::Map<String, serde_json::Value>,
    key: &str,
) -> Result<String> {
    map.get(key)
        .and_then(|v| v.as_str())
        .map(str::to_owned)
        .ok_or_else(|| ctx.err(format!("missing or non-string field {key:?}")))
}

fn take_f64(
    ctx: &LineCtx,
    map: &serde_json::Map<String, serde_json::Value>,
    key: &str,
) -> Result<f64> {
    map.get(key)
        .and_then(|v| v.as_f64())
        .ok_or_else(|| ctx.err(format!("missing or non-numeric field {key:?}")))
}

fn warn_unknown(
    warnings: &mut Vec<String>,
    ctx: &LineCtx,
    map: &serde_json::Map<String, serde_json::Value>,
    known: &[&str],
) {
    for key in map.keys() {
        if !known.contains(&key.as_str()) {
            warnings.push(format!(
                "{}:{}: ignoring unknown field {:?}",
                ctx.path, ctx.line, key
            ));
        }
    }
}

/// Load and validate a corpus from a messages file and a teams file.
///
/// Messages may arrive out of time order; they are stably sorted within each
/// team. Everything else that violates an invariant is an error carrying the
/// offending file and line.
pub fn load_corpus(messages_path: &Path, teams_path: &Path) -> Result<LoadOutcome> {
    let mut warnings = Vec::new();
    let teams_file = teams_path.display().to_string();
    let messages_file = messages_path.display().to_string();

    // Teams first: the roster is needed to validate message senders.
    let mut teams: Vec<Team> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, raw) in read_lines(teams_path)?.iter().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let ctx = LineCtx {
            path: &teams_file,
            line: i + 1,
        };
        let map = parse_object(&ctx, raw)?;
        warn_unknown(
            &mut warnings,
            &ctx,
            &map,
            &[
                "team_id",
                "round",
                "condition",
                "duration_s",
                "members",
                "performance",
            ],
        );
        let team_id = take_str(&ctx, &map, "team_id")?;
        if index.contains_key(&team_id) {
            return Err(ctx.err(format!("duplicate team_id {team_id:?}")));
        }
        let round = match map.get("round") {
            None => 0,
            Some(v) => {
                let r = v
                    .as_u64()
                    .ok_or_else(|| ctx.err("field \"round\" must be an integer"))?;
                if r > 4 {
                    return Err(ctx.err(format!("round must be 0-4, got {r}")));
                }
                r as u8
            }
        };
        let condition: Condition = take_str(&ctx, &map, "condition")?
            .parse()
            .map_err(|e| ctx.err(format!("{e}")))?;
        let duration = match map.get("duration_s") {
            None => DEFAULT_DURATION_S,
            Some(v) => {
                let d = v
                    .as_f64()
                    .ok_or_else(|| ctx.err("field \"duration_s\" must be numeric"))?;
                if !(d.is_finite() && d > 0.0) {
                    return Err(ctx.err(format!("duration_s must be positive, got {d}")));
                }
                d
            }
        };
        let performance = match map.get("performance") {
            None | Some(serde_json::Value::Null) => None,
            Some(v) => Some(
                v.as_f64()
                    .ok_or_else(|| ctx.err("field \"performance\" must be numeric"))?,
            ),
        };
        let members_raw = map
            .get("members")
            .and_then(|v| v.as_array())
            .ok_or_else(|| ctx.err("missing or non-array field \"members\""))?;
        if !(3..=8).contains(&members_raw.len()) {
            return Err(ctx.err(format!(
                "team {team_id:?} roster size {} out of range 3-8",
                members_raw.len()
            )));
        }
        let mut roster = Vec::with_capacity(members_raw.len());
        let mut members = Vec::with_capacity(members_raw.len());
        for entry in members_raw {
            let obj = entry
                .as_object()
                .ok_or_else(|| ctx.err("each member must be an object"))?;
            let member_id = take_str(&ctx, obj, "member_id")?;
            if roster.contains(&member_id) {
                return Err(ctx.err(format!(
                    "team {team_id:?} has duplicate member {member_id:?}"
                )));
            }
            let items_raw = obj
                .get("viability_items")
                .and_then(|v| v.as_array())
                .ok_or_else(|| ctx.err("missing or non-array field \"viability_items\""))?;
            let mut items = Vec::with_capacity(items_raw.len());
            for v in items_raw {
                let item = v
                    .as_u64()
                    .ok_or_else(|| ctx.err("viability items must be integers"))?;
                items.push(item.min(u8::MAX as u64) as u8);
            }
            individual_viability(&items).map_err(|e| {
                ctx.err(format!("member {member_id:?} of team {team_id:?}: {e}"))
            })?;
            roster.push(member_id.clone());
            members.push(MemberResponse { member_id, items });
        }
        index.insert(team_id.clone(), teams.len());
        teams.push(Team {
            transcript: Transcript {
                team_id: team_id.clone(),
                round,
                condition,
                roster,
                messages: Vec::new(),
                duration,
            },
            viability: ViabilityRecord {
                team_id,
                members,
                performance,
            },
        });
    }

    for (i, raw) in read_lines(messages_path)?.iter().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let ctx = LineCtx {
            path: &messages_file,
            line: i + 1,
        };
        let map = parse_object(&ctx, raw)?;
        warn_unknown(
            &mut warnings,
            &ctx,
            &map,
            &["team_id", "sender", "timestamp_s", "text"],
        );
        let team_id = take_str(&ctx, &map, "team_id")?;
        let Some(&team_idx) = index.get(&team_id) else {
            return Err(ctx.err(format!(
                "message references unknown team_id {team_id:?}"
            )));
        };
        let sender = take_str(&ctx, &map, "sender")?;
        let timestamp = take_f64(&ctx, &map, "timestamp_s")?;
        let text = take_str(&ctx, &map, "text")?;
        let transcript = &mut teams[team_idx].transcript;
        if !timestamp.is_finite() || timestamp < 0.0 {
            return Err(ctx.err(format!("timestamp_s must be >= 0, got {timestamp}")));
        }
        if timestamp > transcript.duration {
            return Err(ctx.err(format!(
                "timestamp_s {timestamp} exceeds team {team_id:?} duration {}",
                transcript.duration
            )));
        }
        if !transcript.roster.contains(&sender) {
            return Err(ctx.err(format!(
                "sender {sender:?} is not on team {team_id:?} roster"
            )));
        }
        transcript.messages.push(ChatMessage {
            sender,
            timestamp,
            text,
        });
    }

    // Stable sort keeps same-timestamp messages in file order.
    for team in &mut teams {
        team.transcript
            .messages
            .sort_by(|a, b| a.timestamp.partial_cmp(&b.timestamp).unwrap());
    }

    Ok(LoadOutcome {
        corpus: Corpus { teams },
        warnings,
    })
}

/// Write a corpus back out as the two JSONL files. Deterministic: identical
/// corpora serialize to identical bytes, and `load(save(c)) == c`.
pub fn save_corpus(corpus: &Corpus, messages_path: &Path, teams_path: &Path) -> Result<()> {
    let teams_file = File::create(teams_path).map_err(|e| Error::io(teams_path, e))?;
    let mut teams_out = BufWriter::new(teams_file);
    for team in &corpus.teams {
        let t = &team.transcript;
        let members: Vec<serde_json::Value> = team
            .viability
            .members
            .iter()
            .map(|m| {
                serde_json::json!({
                    "member_id": m.member_id,
                    "viability_items": m.items,
                })
            })
            .collect();
        let mut obj = serde_json::json!({
            "team_id": t.team_id,
            "round": t.round,
            "condition": t.condition.as_str(),
            "duration_s": t.duration,
            "members": members,
        });
        if let Some(perf) = team.viability.performance {
            obj["performance"] = serde_json::json!(perf);
        }
        writeln!(teams_out, "{obj}").map_err(|e| Error::io(teams_path, e))?;
    }
    teams_out.flush().map_err(|e| Error::io(teams_path, e))?;

    let messages_file =
        File::create(messages_path).map_err(|e| Error::io(messages_path, e))?;
    let mut messages_out = BufWriter::new(messages_file);
    for team in &corpus.teams {
        for msg in &team.transcript.messages {
            let obj = serde_json::json!({
                "team_id": team.transcript.team_id,
                "sender": msg.sender,
                "timestamp_s": msg.timestamp,
                "text": msg.text,
            });
            writeln!(messages_out, "{obj}").map_err(|e| Error::io(messages_path, e))?;
        }
    }
    messages_out.flush().map_err(|e| Error::io(messages_path, e))?;
    Ok(())
}
