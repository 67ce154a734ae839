use std::hash::Hasher;
use std::sync::atomic::{AtomicU64, Ordering};

use async_trait::async_trait;
use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::generators::{ChatBackend, ChatRequest, RemoteError};
use crate::templates::extract_post;

/// Offline stand-in for a chat-completions model. It reads the post out of
/// the prompt and answers with one of a few extraction styles, chosen
/// deterministically from the post text and the request seed.
#[derive(Debug, Default)]
pub struct SimulatedLlm {
    calls: AtomicU64,
}

fn sentences(post: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for token in post.split_whitespace() {
        current.push(token);
        if token.ends_with(['.', '!', '?']) {
            out.push(current.join(" "));
            current.clear();
        }
    }
    if !current.is_empty() {
        out.push(current.join(" "));
    }
    out
}

fn first_words(text: &str, n: usize) -> String {
    text.split_whitespace().take(n).collect::<Vec<_>>().join(" ")
}

impl SimulatedLlm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// The completion this backend returns for `post` under `seed`.
    pub fn respond(post: &str, seed: u64) -> String {
        let mut h = FnvHasher::default();
        h.write(post.as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish() ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let all = sentences(post);
        // Skip a bare opening greeting when there is anything after it.
        let body: Vec<&String> = if all.len() > 1 && all[0].split_whitespace().count() <= 2 {
            all[1..].iter().collect()
        } else {
            all.iter().collect()
        };
        let pick = |rng: &mut ChaCha8Rng| body[rng.gen_range(0..body.len())].clone();
        match rng.gen_range(0..6) {
            // The opening of the post, cut mid-phrase.
            0 => format!("{} ...", first_words(post, 8)),
            // A sentence from the body, as-is.
            1 => pick(&mut rng),
            // A labelled sentence, which postprocessing has to strip.
            2 => format!("Subject line: {}", pick(&mut rng)),
            // A quoted fragment.
            3 => format!("\"{}\"", first_words(&pick(&mut rng), 6)),
            // Shouting the first few words.
            4 => first_words(&pick(&mut rng), 4).to_uppercase(),
            // The later part of the body.
            _ => body.last().map(|s| s.to_string()).unwrap_or_default(),
        }
    }
}

#[async_trait]
impl ChatBackend for SimulatedLlm {
    async fn complete(&self, request: &ChatRequest) -> Result<String, RemoteError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt = request
            .messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .ok_or_else(|| RemoteError::Rejected {
                status: 400,
                body: "no user message".into(),
            })?;
        let post = extract_post(&prompt.content).ok_or_else(|| RemoteError::Rejected {
            status: 400,
            body: "prompt has no post".into(),
        })?;
        Ok(Self::respond(post, request.seed.unwrap_or(0)))
    }
}
