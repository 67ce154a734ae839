//! Engagement logs to labeled preference data.
//!
//! Raw per-bucket send/click rows are aggregated per post, the generated
//! arm's CTR is compared with the rule arm's, and posts whose lift ratio
//! clears the margin become [`PreferencePair`]s. Pairs are then rendered into
//! pointwise, pairwise or SFT training records.

use std::collections::HashMap;
use std::hash::Hasher;
use std::io::{Read, Write};

use chrono::NaiveDate;
use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidate::{Provenance, SubjectLineCandidate};
use crate::templates;

pub const LOG_HEADER: [&str; 7] = ["post_id", "variant_id", "source", "bucket", "sends", "clicks", "day"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Rule,
    Generated,
}

impl From<Source> for Provenance {
    fn from(s: Source) -> Self {
        match s {
            Source::Rule => Provenance::Rule,
            Source::Generated => Provenance::Generated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Control,
    Treatment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngagementRecord {
    pub post_id: String,
    pub variant_id: String,
    pub source: Source,
    pub bucket: Bucket,
    pub sends: u64,
    pub clicks: u64,
    pub day: NaiveDate,
}

impl EngagementRecord {
    fn validate(&self) -> Result<(), String> {
        if self.clicks > self.sends {
            return Err(format!("clicks ({}) exceed sends ({})", self.clicks, self.sends));
        }
        let paired = matches!(
            (self.source, self.bucket),
            (Source::Rule, Bucket::Control) | (Source::Generated, Bucket::Treatment)
        );
        if !paired {
            return Err(format!(
                "source {:?} cannot be served in bucket {:?}",
                self.source, self.bucket
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: {message}")]
    Validation { line: u64, message: String },
    #[error("log header must be `{}`", LOG_HEADER.join(","))]
    Header,
    #[error("post {0} is not in the catalog")]
    UnknownPost(String),
    #[error("variant {variant_id} of post {post_id} is not in the catalog")]
    UnknownVariant { post_id: String, variant_id: String },
    #[error("post {post_id}: expected one rule and one generated variant, found {rule} and {generated}")]
    ArmCount {
        post_id: String,
        rule: usize,
        generated: usize,
    },
    #[error("post {post_id} variant {variant_id} is logged with conflicting sources")]
    ConflictingSource { post_id: String, variant_id: String },
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Parses an engagement log in the CSV schema of [`LOG_HEADER`].
///
/// Line numbers in errors are 1-based physical lines, the header being line 1.
pub fn ingest_logs(reader: impl Read) -> Result<Vec<EngagementRecord>, PipelineError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    if headers.iter().ne(LOG_HEADER.iter().copied()) {
        return Err(PipelineError::Header);
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| PipelineError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let record: EngagementRecord = row.deserialize(Some(&headers)).map_err(|e| PipelineError::Parse {
            line,
            message: e.to_string(),
        })?;
        record
            .validate()
            .map_err(|message| PipelineError::Validation { line, message })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_logs(writer: impl Write, records: &[EngagementRecord]) -> Result<(), PipelineError> {
    // Header written by hand so an empty log still has one.
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    wtr.write_record(LOG_HEADER)?;
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Post text and variant subject lines, joined to the logs by id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub post_id: String,
    pub post_text: String,
    pub variants: Vec<CatalogVariant>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogVariant {
    pub variant_id: String,
    pub subject: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantTotals {
    pub variant_id: String,
    pub subject_text: String,
    pub source: Source,
    pub sends: u64,
    pub clicks: u64,
}

impl VariantTotals {
    pub fn ctr(&self) -> Option<f64> {
        (self.sends > 0).then(|| self.clicks as f64 / self.sends as f64)
    }

    pub fn candidate(&self) -> SubjectLineCandidate {
        SubjectLineCandidate {
            text: self.subject_text.clone(),
            source: self.source.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementAggregate {
    pub post_id: String,
    pub post_text: String,
    pub variants: Vec<VariantTotals>,
}

impl EngagementAggregate {
    fn arm(&self, source: Source) -> Result<&VariantTotals, LiftError> {
        let mut it = self.variants.iter().filter(|v| v.source == source);
        match (it.next(), it.next()) {
            (Some(v), None) => Ok(v),
            (None, _) => Err(LiftError::MissingArm(source)),
            (Some(_), Some(_)) => Err(LiftError::AmbiguousArm(source)),
        }
    }

    pub fn rule_arm(&self) -> Result<&VariantTotals, LiftError> {
        self.arm(Source::Rule)
    }

    pub fn generated_arm(&self) -> Result<&VariantTotals, LiftError> {
        self.arm(Source::Generated)
    }
}

/// Sums records per (post, variant) across days, in first-seen order, and
/// attaches texts from the catalog. Every post must end up with exactly one
/// rule and one generated variant.
pub fn aggregate(
    records: &[EngagementRecord],
    catalog: &[CatalogEntry],
) -> Result<Vec<EngagementAggregate>, PipelineError> {
    let by_post: HashMap<&str, &CatalogEntry> = catalog.iter().map(|e| (e.post_id.as_str(), e)).collect();
    let mut order: Vec<&str> = Vec::new();
    let mut totals: HashMap<&str, Vec<VariantTotals>> = HashMap::new();

    for r in records {
        let entry = by_post
            .get(r.post_id.as_str())
            .ok_or_else(|| PipelineError::UnknownPost(r.post_id.clone()))?;
        let variants = totals.entry(r.post_id.as_str()).or_insert_with(|| {
            order.push(r.post_id.as_str());
            Vec::new()
        });
        match variants.iter_mut().find(|v| v.variant_id == r.variant_id) {
            Some(v) => {
                if v.source != r.source {
                    return Err(PipelineError::ConflictingSource {
                        post_id: r.post_id.clone(),
                        variant_id: r.variant_id.clone(),
                    });
                }
                v.sends += r.sends;
                v.clicks += r.clicks;
            }
            None => {
                let subject = entry
                    .variants
                    .iter()
                    .find(|cv| cv.variant_id == r.variant_id)
                    .ok_or_else(|| PipelineError::UnknownVariant {
                        post_id: r.post_id.clone(),
                        variant_id: r.variant_id.clone(),
                    })?;
                variants.push(VariantTotals {
                    variant_id: r.variant_id.clone(),
                    subject_text: subject.subject.clone(),
                    source: r.source,
                    sends: r.sends,
                    clicks: r.clicks,
                });
            }
        }
    }

    order
        .into_iter()
        .map(|post_id| {
            let variants = totals.remove(post_id).unwrap_or_default();
            let rule = variants.iter().filter(|v| v.source == Source::Rule).count();
            let generated = variants.len() - rule;
            if rule != 1 || generated != 1 {
                return Err(PipelineError::ArmCount {
                    post_id: post_id.to_string(),
                    rule,
                    generated,
                });
            }
            Ok(EngagementAggregate {
                post_id: post_id.to_string(),
                post_text: by_post[post_id].post_text.clone(),
                variants,
            })
        })
        .collect()
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum LiftError {
    #[error("no {0:?} arm with sends")]
    MissingArm(Source),
    #[error("more than one {0:?} arm")]
    AmbiguousArm(Source),
    #[error("rule arm CTR is zero")]
    ZeroBaselineCtr,
}

/// CTR of the generated arm over the CTR of the rule arm.
pub fn compute_lift(aggregate: &EngagementAggregate) -> Result<f64, LiftError> {
    let rule = aggregate.rule_arm()?;
    let generated = aggregate.generated_arm()?;
    if rule.sends == 0 {
        return Err(LiftError::MissingArm(Source::Rule));
    }
    if generated.sends == 0 {
        return Err(LiftError::MissingArm(Source::Generated));
    }
    if rule.clicks == 0 {
        return Err(LiftError::ZeroBaselineCtr);
    }
    // Cross-multiplied so that integer-exact ratios such as 1.1 stay exact.
    Ok((generated.clicks as f64 * rule.sends as f64) / (generated.sends as f64 * rule.clicks as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinSendsScope {
    PerArm,
    Combined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub margin: f64,
    pub min_sends: u64,
    pub min_sends_scope: MinSendsScope,
    /// Mixed with each post id to derive the pair's shuffle seed.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            margin: 0.1,
            min_sends: 300,
            min_sends_scope: MinSendsScope::PerArm,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.margin > 0.0 && self.margin < 1.0) {
            return Err(PipelineError::Config(format!(
                "margin must be in (0, 1), got {}",
                self.margin
            )));
        }
        if self.min_sends < 1 {
            return Err(PipelineError::Config("min_sends must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub post_id: String,
    pub post_text: String,
    pub winner: SubjectLineCandidate,
    pub loser: SubjectLineCandidate,
    pub lift_ratio: f64,
    pub shuffle_seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub total: usize,
    pub emitted: usize,
    pub dropped_min_sends: usize,
    pub dropped_zero_ctr: usize,
    pub dropped_dead_zone: usize,
    /// Aggregates without exactly one usable arm of each source. Zero for
    /// output of [`aggregate`].
    pub dropped_invalid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelOutcome {
    pub pairs: Vec<PreferencePair>,
    pub summary: LabelSummary,
}

pub fn shuffle_seed(seed: u64, post_id: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(&seed.to_le_bytes());
    h.write(post_id.as_bytes());
    h.finish()
}

fn passes_min_sends(rule: &VariantTotals, generated: &VariantTotals, config: &PipelineConfig) -> bool {
    match config.min_sends_scope {
        MinSendsScope::PerArm => rule.sends >= config.min_sends && generated.sends >= config.min_sends,
        MinSendsScope::Combined => rule.sends + generated.sends >= config.min_sends,
    }
}

/// Turns aggregates into preference pairs. A post yields a pair only when it
/// passes the send filter and its lift ratio is strictly outside
/// `[1 - margin, 1 + margin]`.
pub fn label_pairs(aggregates: &[EngagementAggregate], config: &PipelineConfig) -> LabelOutcome {
    let mut summary = LabelSummary {
        total: aggregates.len(),
        ..Default::default()
    };
    let mut pairs = Vec::new();
    for agg in aggregates {
        let (rule, generated) = match (agg.rule_arm(), agg.generated_arm()) {
            (Ok(r), Ok(g)) => (r, g),
            _ => {
                summary.dropped_invalid += 1;
                continue;
            }
        };
        if !passes_min_sends(rule, generated, config) {
            summary.dropped_min_sends += 1;
            continue;
        }
        let lift = match compute_lift(agg) {
            Ok(l) => l,
            Err(LiftError::ZeroBaselineCtr) => {
                summary.dropped_zero_ctr += 1;
                continue;
            }
            Err(_) => {
                summary.dropped_invalid += 1;
                continue;
            }
        };
        let (winner, loser) = if lift > 1.0 + config.margin {
            (generated, rule)
        } else if lift < 1.0 - config.margin {
            (rule, generated)
        } else {
            summary.dropped_dead_zone += 1;
            continue;
        };
        pairs.push(PreferencePair {
            post_id: agg.post_id.clone(),
            post_text: agg.post_text.clone(),
            winner: winner.candidate(),
            loser: loser.candidate(),
            lift_ratio: lift,
            shuffle_seed: shuffle_seed(config.seed, &agg.post_id),
        });
    }
    summary.emitted = pairs.len();
    LabelOutcome { pairs, summary }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointwiseLabel {
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairwiseLabel {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointwiseExample {
    pub input: String,
    pub target: PointwiseLabel,
}

impl PointwiseExample {
    /// `(post, subject)` recovered from the rendered input.
    pub fn fields(&self) -> Result<(String, String), templates::TemplateError> {
        templates::parse_pointwise(&self.input)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseExample {
    pub input: String,
    pub target: PairwiseLabel,
}

impl PairwiseExample {
    /// `(post, subject_a, subject_b)` recovered from the rendered input.
    pub fn fields(&self) -> Result<(String, String, String), templates::TemplateError> {
        templates::parse_pairwise(&self.input)
    }
}

/// Winner becomes a "yes" example and loser a "no" example.
pub fn format_pointwise(pair: &PreferencePair) -> [PointwiseExample; 2] {
    [
        PointwiseExample {
            input: templates::render_pointwise(&pair.post_text, &pair.winner.text),
            target: PointwiseLabel::Yes,
        },
        PointwiseExample {
            input: templates::render_pointwise(&pair.post_text, &pair.loser.text),
            target: PointwiseLabel::No,
        },
    ]
}

/// Whether the pair's seeded coin puts the winner in slot a.
pub fn winner_in_slot_a(shuffle_seed: u64) -> bool {
    ChaCha8Rng::seed_from_u64(shuffle_seed).gen_bool(0.5)
}

pub fn format_pairwise(pair: &PreferencePair) -> PairwiseExample {
    let (a, b, target) = if winner_in_slot_a(pair.shuffle_seed) {
        (&pair.winner.text, &pair.loser.text, PairwiseLabel::A)
    } else {
        (&pair.loser.text, &pair.winner.text, PairwiseLabel::B)
    };
    PairwiseExample {
        input: templates::render_pairwise(&pair.post_text, a, b),
        target,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub prompt: String,
    pub completion: String,
}

/// Policy-model fine-tuning records: the policy prompt for the post and the
/// winning subject as completion.
pub fn export_sft(pairs: &[PreferencePair]) -> Vec<SftRecord> {
    pairs
        .iter()
        .map(|p| SftRecord {
            prompt: templates::render_policy(&p.post_text),
            completion: p.winner.text.clone(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "post_id,variant_id,source,bucket,sends,clicks,day\n";

    fn agg(rule: (u64, u64), generated: (u64, u64)) -> EngagementAggregate {
        EngagementAggregate {
            post_id: "p1".into(),
            post_text: "Lost dog near the park. Please call.".into(),
            variants: vec![
                VariantTotals {
                    variant_id: "r".into(),
                    subject_text: "Lost dog near the park.".into(),
                    source: Source::Rule,
                    sends: rule.0,
                    clicks: rule.1,
                },
                VariantTotals {
                    variant_id: "g".into(),
                    subject_text: "Lost dog near the park...".into(),
                    source: Source::Generated,
                    sends: generated.0,
                    clicks: generated.1,
                },
            ],
        }
    }

    #[test]
    fn ingest_well_formed_lines() {
        let csv = format!(
            "{HEADER}p1,v1,rule,control,300,15,2024-01-01\np1,v2,generated,treatment,300,18,2024-01-01\np2,v3,rule,control,10,0,2024-01-02\n"
        );
        let records = ingest_logs(csv.as_bytes()).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[1].source, Source::Generated);
        assert_eq!(records[2].day, NaiveDate::from_ymd_opt(2024, 1, 2).unwrap());
    }

    #[test]
    fn ingest_empty_input() {
        assert!(ingest_logs(&b""[..]).unwrap().is_empty());
        assert!(ingest_logs(HEADER.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn ingest_rejects_more_clicks_than_sends() {
        let csv = format!("{HEADER}p1,v1,rule,control,300,15,2024-01-01\np1,v2,generated,treatment,3,5,2024-01-01\n");
        match ingest_logs(csv.as_bytes()) {
            Err(PipelineError::Validation { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn ingest_reports_malformed_line() {
        let csv =
            format!("{HEADER}p1,v1,rule,control,300,15,2024-01-01\np1,v2,generated,treatment,many,5,2024-01-01\n");
        match ingest_logs(csv.as_bytes()) {
            Err(PipelineError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let csv = format!("{HEADER}p1,v1,rule,treatment,300,15,2024-01-01\n");
        assert!(matches!(
            ingest_logs(csv.as_bytes()),
            Err(PipelineError::Validation { line: 2, .. })
        ));
        assert!(matches!(ingest_logs(&b"a,b\n1,2\n"[..]), Err(PipelineError::Header)));
    }

    #[test]
    fn written_logs_read_back() {
        let csv = format!("{HEADER}p1,r,rule,control,300,30,2024-01-01\np1,g,generated,treatment,310,40,2024-01-02\n");
        let records = ingest_logs(csv.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_logs(&mut buf, &records).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), csv);
        let mut empty = Vec::new();
        write_logs(&mut empty, &[]).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap(), HEADER);
    }

    #[test]
    fn lift_arithmetic() {
        let lift = compute_lift(&agg((1000, 50), (1000, 60))).unwrap();
        assert!((lift - 1.2).abs() < 1e-12);
        assert_eq!(compute_lift(&agg((1000, 50), (1000, 50))).unwrap(), 1.0);
        assert_eq!(
            compute_lift(&agg((1000, 0), (1000, 50))),
            Err(LiftError::ZeroBaselineCtr)
        );
        let mut missing = agg((1000, 50), (1000, 50));
        missing.variants.pop();
        assert_eq!(compute_lift(&missing), Err(LiftError::MissingArm(Source::Generated)));
    }

    #[test]
    fn labeling_rules() {
        let config = PipelineConfig::default();
        let out = label_pairs(&[agg((350, 28), (400, 40))], &config);
        assert_eq!(out.pairs.len(), 1);
        assert_eq!(out.pairs[0].winner.source, Provenance::Generated);
        assert!((out.pairs[0].lift_ratio - 1.25).abs() < 1e-12);

        let dead = label_pairs(&[agg((400, 40), (400, 42))], &config);
        assert!(dead.pairs.is_empty());
        assert_eq!(dead.summary.dropped_dead_zone, 1);

        let thin = label_pairs(&[agg((250, 10), (400, 40))], &config);
        assert!(thin.pairs.is_empty());
        assert_eq!(thin.summary.dropped_min_sends, 1);

        let combined = PipelineConfig {
            min_sends_scope: MinSendsScope::Combined,
            ..config.clone()
        };
        assert_eq!(label_pairs(&[agg((250, 10), (400, 40))], &combined).pairs.len(), 1);

        let rule_wins = label_pairs(&[agg((400, 40), (400, 20))], &config);
        assert_eq!(rule_wins.pairs[0].winner.source, Provenance::Rule);
    }

    #[test]
    fn margin_bounds_are_strict() {
        let config = PipelineConfig::default();
        // 1.10 exactly sits on the boundary and is not a label.
        let edge = label_pairs(&[agg((1000, 100), (1000, 110))], &config);
        assert_eq!(edge.summary.dropped_dead_zone, 1);
        let edge = label_pairs(&[agg((1000, 100), (1000, 90))], &config);
        assert_eq!(edge.summary.dropped_dead_zone, 1);
    }

    #[test]
    fn pointwise_and_pairwise_formats() {
        let pair = label_pairs(&[agg((350, 28), (400, 40))], &PipelineConfig::default())
            .pairs
            .remove(0);
        let [yes, no] = format_pointwise(&pair);
        assert_eq!(yes.target, PointwiseLabel::Yes);
        assert_eq!(no.target, PointwiseLabel::No);
        assert_eq!(yes.fields().unwrap().1, pair.winner.text);
        assert_eq!(no.fields().unwrap().1, pair.loser.text);

        let ex = format_pairwise(&pair);
        assert_eq!(ex, format_pairwise(&pair));
        let (_, a, b) = ex.fields().unwrap();
        match ex.target {
            PairwiseLabel::A => assert_eq!(a, pair.winner.text),
            PairwiseLabel::B => assert_eq!(b, pair.winner.text),
        }
    }

    #[test]
    fn pairwise_target_follows_seed() {
        let mut pair = label_pairs(&[agg((350, 28), (400, 40))], &PipelineConfig::default())
            .pairs
            .remove(0);
        let seed_a = (0..).find(|s| winner_in_slot_a(*s)).unwrap();
        let seed_b = (0..).find(|s| !winner_in_slot_a(*s)).unwrap();
        pair.shuffle_seed = seed_a;
        assert_eq!(format_pairwise(&pair).target, PairwiseLabel::A);
        pair.shuffle_seed = seed_b;
        assert_eq!(format_pairwise(&pair).target, PairwiseLabel::B);
    }

    #[test]
    fn sft_export_escapes_newlines() {
        let mut a = agg((350, 28), (400, 40));
        a.post_text = "First line\nsecond \"quoted\" line".into();
        let pairs = label_pairs(&[a], &PipelineConfig::default()).pairs;
        let records = export_sft(&pairs);
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].completion, pairs[0].winner.text);
        let mut buf = Vec::new();
        crate::jsonl::write_jsonl(&mut buf, &records).unwrap();
        assert_eq!(buf.iter().filter(|b| **b == b'\n').count(), 1);
        let back: Vec<SftRecord> = crate::jsonl::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, records);
        assert!(back[0].prompt.ends_with("Post: First line\nsecond \"quoted\" line"));
    }

    #[test]
    fn aggregate_sums_days_and_checks_arms() {
        let csv = format!(
            "{HEADER}p1,v1,rule,control,100,5,2024-01-01\np1,v2,generated,treatment,100,9,2024-01-01\np1,v1,rule,control,200,10,2024-01-02\np1,v2,generated,treatment,250,20,2024-01-02\n"
        );
        let records = ingest_logs(csv.as_bytes()).unwrap();
        let catalog = vec![CatalogEntry {
            post_id: "p1".into(),
            post_text: "Text".into(),
            variants: vec![
                CatalogVariant {
                    variant_id: "v1".into(),
                    subject: "Rule".into(),
                },
                CatalogVariant {
                    variant_id: "v2".into(),
                    subject: "Gen".into(),
                },
            ],
        }];
        let aggs = aggregate(&records, &catalog).unwrap();
        assert_eq!(aggs.len(), 1);
        assert_eq!(aggs[0].rule_arm().unwrap().sends, 300);
        assert_eq!(aggs[0].generated_arm().unwrap().clicks, 29);

        let partial = &records[..1];
        assert!(matches!(
            aggregate(partial, &catalog),
            Err(PipelineError::ArmCount { .. })
        ));
        assert!(matches!(aggregate(&records, &[]), Err(PipelineError::UnknownPost(_))));
    }
}
