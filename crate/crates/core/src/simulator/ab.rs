use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::SyntheticPost;
use super::user::SyntheticUserModel;
use crate::pipeline::{Bucket, CatalogEntry, CatalogVariant, EngagementRecord, Source};
use crate::reward::features::featurize;
use crate::reward::ModelError;

/// First day of simulated traffic.
pub fn start_day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date")
}

/// Independent random stream for one (phase, post) pair.
pub fn stream_rng(seed: u64, phase: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ phase.wrapping_mul(0xA076_1D64_78BD_642F));
    rng.set_stream(index);
    rng
}

pub fn rule_variant_id(post_id: &str) -> String {
    format!("{post_id}-rule")
}

pub fn generated_variant_id(post_id: &str) -> String {
    format!("{post_id}-gen")
}

/// Texts for the pipeline: one rule and one generated variant per post.
pub fn catalog(posts: &[SyntheticPost], control: &[String], treatment: &[String]) -> Vec<CatalogEntry> {
    posts
        .iter()
        .zip(control.iter().zip(treatment))
        .map(|(p, (c, t))| CatalogEntry {
            post_id: p.post_id.clone(),
            post_text: p.text.clone(),
            variants: vec![
                CatalogVariant {
                    variant_id: rule_variant_id(&p.post_id),
                    subject: c.clone(),
                },
                CatalogVariant {
                    variant_id: generated_variant_id(&p.post_id),
                    subject: t.clone(),
                },
            ],
        })
        .collect()
}

/// Two-bucket test: every send of every post goes to the treatment bucket
/// with probability `split`, and is clicked per the user model. Sends are
/// spread round-robin over `days` days; one record per post, variant and
/// day that saw traffic.
#[allow(clippy::too_many_arguments)]
pub fn simulate_ab(
    posts: &[SyntheticPost],
    control: &[String],
    treatment: &[String],
    user: &SyntheticUserModel,
    sends_per_post: u64,
    split: f64,
    days: u32,
    seed: u64,
) -> Result<Vec<EngagementRecord>, ModelError> {
    let days = days.max(1) as usize;
    let mut records = Vec::new();
    for (i, post) in posts.iter().enumerate() {
        let p_control = user.click_probability_features(&featurize(&post.text, &control[i])?);
        let p_treatment = user.click_probability_features(&featurize(&post.text, &treatment[i])?);
        let mut rng = stream_rng(seed, 1, i as u64);
        // [day][bucket] -> (sends, clicks)
        let mut tally = vec![[(0u64, 0u64); 2]; days];
        for s in 0..sends_per_post as usize {
            let treated = rng.gen_bool(split);
            let p = if treated { p_treatment } else { p_control };
            let click = rng.gen_bool(p);
            let cell = &mut tally[s % days][treated as usize];
            cell.0 += 1;
            cell.1 += click as u64;
        }
        for (d, cells) in tally.iter().enumerate() {
            let day = start_day() + Days::new(d as u64);
            for (treated, (sends, clicks)) in cells.iter().enumerate() {
                if *sends == 0 {
                    continue;
                }
                let (variant_id, source, bucket) = if treated == 1 {
                    (
                        generated_variant_id(&post.post_id),
                        Source::Generated,
                        Bucket::Treatment,
                    )
                } else {
                    (rule_variant_id(&post.post_id), Source::Rule, Bucket::Control)
                };
                records.push(EngagementRecord {
                    post_id: post.post_id.clone(),
                    variant_id,
                    source,
                    bucket,
                    sends: *sends,
                    clicks: *clicks,
                    day,
                });
            }
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmTotals {
    pub sends: u64,
    pub clicks: u64,
    /// Mean click probability over the arm's subjects, without sampling noise.
    pub expected_ctr: f64,
}

impl ArmTotals {
    pub fn ctr(&self) -> f64 {
        if self.sends == 0 {
            0.0
        } else {
            self.clicks as f64 / self.sends as f64
        }
    }
}

/// Sends each post's subject `sends_per_post` times; `phase` selects the
/// random stream so arms are independent.
pub fn simulate_arm(
    posts: &[SyntheticPost],
    subjects: &[String],
    user: &SyntheticUserModel,
    sends_per_post: u64,
    seed: u64,
    phase: u64,
) -> Result<ArmTotals, ModelError> {
    let mut totals = ArmTotals::default();
    let mut expected = 0.0;
    for (i, (post, subject)) in posts.iter().zip(subjects).enumerate() {
        let p = user.click_probability_features(&featurize(&post.text, subject)?);
        expected += p;
        let mut rng = stream_rng(seed, phase, i as u64);
        for _ in 0..sends_per_post {
            totals.clicks += rng.gen_bool(p) as u64;
        }
        totals.sends += sends_per_post;
    }
    totals.expected_ctr = if posts.is_empty() {
        0.0
    } else {
        expected / posts.len() as f64
    };
    Ok(totals)
}
