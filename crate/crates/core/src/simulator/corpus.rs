use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticPost {
    pub post_id: String,
    pub text: String,
    /// The first sentence is a bare greeting.
    pub greeting_first: bool,
    pub topic: String,
}

/// Share of posts that open with a bare greeting.
pub const GREETING_SHARE: f64 = 0.2;

const GREETINGS: [&str; 6] = [
    "Hello.",
    "Hi all!",
    "Hey neighbors!",
    "Good morning.",
    "Hi everyone.",
    "Hello everyone!",
];

const STREETS: [&str; 8] = [
    "Elm Street",
    "Oak Avenue",
    "Maple Drive",
    "Pine Court",
    "Cedar Lane",
    "5th Street",
    "Birch Road",
    "Lakeview Blvd",
];
const PETS: [&str; 4] = ["cat", "dog", "puppy", "parrot"];
const NAMES: [&str; 6] = ["Milo", "Luna", "Biscuit", "Pepper", "Max", "Coco"];
const ITEMS: [&str; 6] = [
    "mulch",
    "firewood",
    "moving boxes",
    "a couch",
    "baby clothes",
    "tomato plants",
];
const EVENTS: [&str; 4] = ["block party", "garage sale", "cleanup day", "movie night"];
const PLACES: [&str; 4] = ["the park", "the library", "the community center", "the school field"];
const DAYS: [&str; 4] = ["Saturday", "Sunday", "Friday evening", "next weekend"];
const TRADES: [&str; 5] = ["plumber", "electrician", "dentist", "babysitter", "roofer"];
const ANIMALS: [&str; 3] = ["coyote", "bobcat", "bear"];
const TIMES: [&str; 4] = ["6am", "midnight", "8pm", "noon"];
const EMOJI: [&str; 4] = ["🐾", "🚨", "🎉", "🌱"];

struct Topic {
    name: &'static str,
    sentences: &'static [&'static str],
    shout: &'static str,
}

const TOPICS: [Topic; 6] = [
    Topic {
        name: "lost_pet",
        sentences: &[
            "Our {pet} {name} went missing near {street} last night.",
            "{name} is friendly but very shy.",
            "Please call if you see anything.",
            "We are offering a reward for any help.",
        ],
        shout: "LOST PET",
    },
    Topic {
        name: "crime",
        sentences: &[
            "Someone broke into {n} cars on {street} overnight.",
            "The police have been notified.",
            "Please keep your doors locked and check your cameras.",
            "Stay safe everyone.",
        ],
        shout: "CRIME ALERT",
    },
    Topic {
        name: "free_stuff",
        sentences: &[
            "Free {item} available on {street} this weekend.",
            "First come first served.",
            "Just leave a message and pick up anytime.",
            "Thanks for helping us clear space.",
        ],
        shout: "FREE",
    },
    Topic {
        name: "event",
        sentences: &[
            "Join us for a {event} at {place} on {day}.",
            "Everyone is welcome and kids are free.",
            "Bring a chair and a snack to share.",
            "Hope to see you there.",
        ],
        shout: "SAVE THE DATE",
    },
    Topic {
        name: "recommendation",
        sentences: &[
            "Can anyone recommend a good {trade} in the area?",
            "Our last one retired after {n} years.",
            "Thanks in advance for any suggestions!",
        ],
        shout: "HELP NEEDED",
    },
    Topic {
        name: "wildlife",
        sentences: &[
            "A {animal} was spotted on {street} around {time}.",
            "Keep small pets inside tonight.",
            "Animal control says it is passing through.",
            "Stay safe everyone.",
        ],
        shout: "WARNING",
    },
];

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs[rng.gen_range(0..xs.len())]
}

fn fill(template: &str, rng: &mut ChaCha8Rng) -> String {
    let mut out = template.to_string();
    for (slot, pool) in [
        ("{pet}", &PETS[..]),
        ("{name}", &NAMES[..]),
        ("{street}", &STREETS[..]),
        ("{item}", &ITEMS[..]),
        ("{event}", &EVENTS[..]),
        ("{place}", &PLACES[..]),
        ("{day}", &DAYS[..]),
        ("{trade}", &TRADES[..]),
        ("{animal}", &ANIMALS[..]),
        ("{time}", &TIMES[..]),
    ] {
        while out.contains(slot) {
            let value = pick(rng, pool);
            out = out.replacen(slot, value, 1);
        }
    }
    while out.contains("{n}") {
        let n = rng.gen_range(2..12).to_string();
        out = out.replacen("{n}", &n, 1);
    }
    out
}

/// Deterministic templated neighborhood posts. Exactly
/// `ceil(GREETING_SHARE * num_posts)` of them open with a bare greeting.
pub fn gen_corpus(num_posts: usize, seed: u64) -> Vec<SyntheticPost> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let greeting_quota = (GREETING_SHARE * num_posts as f64).ceil() as usize;
    let mut greeting_flags: Vec<bool> = (0..num_posts).map(|i| i < greeting_quota).collect();
    greeting_flags.shuffle(&mut rng);

    greeting_flags
        .into_iter()
        .enumerate()
        .map(|(i, greeting_first)| {
            let topic = &TOPICS[rng.gen_range(0..TOPICS.len())];
            let keep = rng.gen_range(2..=topic.sentences.len());
            let mut sentences: Vec<String> = topic.sentences[..keep].iter().map(|s| fill(s, &mut rng)).collect();
            if rng.gen_bool(0.15) {
                sentences[0] = format!("{}: {}", topic.shout, sentences[0]);
            }
            if rng.gen_bool(0.25) {
                let at = rng.gen_range(0..sentences.len());
                sentences[at] = format!("{} {}", sentences[at], pick(&mut rng, &EMOJI));
            }
            if greeting_first {
                sentences.insert(0, pick(&mut rng, &GREETINGS).to_string());
            }
            SyntheticPost {
                post_id: format!("post-{i:05}"),
                text: sentences.join(" "),
                greeting_first,
                topic: topic.name.to_string(),
            }
        })
        .collect()
}

/// Words the corpus draws on, for planting token weights.
pub fn vocabulary() -> Vec<String> {
    let mut words: Vec<String> = TOPICS
        .iter()
        .flat_map(|t| t.sentences.iter().chain(std::iter::once(&t.shout)))
        .flat_map(|s| s.split_whitespace())
        .chain(
            STREETS
                .iter()
                .chain(&PETS)
                .chain(&NAMES)
                .chain(&ITEMS)
                .chain(&EVENTS)
                .chain(&TRADES)
                .chain(&ANIMALS)
                .flat_map(|s| s.split_whitespace()),
        )
        .filter(|w| !w.contains('{'))
        .map(crate::text::normalize_token)
        .filter(|w| !w.is_empty())
        .collect();
    words.sort();
    words.dedup();
    words
}
