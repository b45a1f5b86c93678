//! Offline completion provider.
//!
//! Output is a pure function of `(seed, prompt digest, temperature,
//! replicate_index)`. Text is templated filler whose sentence length and
//! share of rare vocabulary grow with temperature; prompts that name an
//! audience age get shorter sentences and fewer rare words.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CompletionProvider, FinishReason, ProviderCall, ProviderError, ProviderReply};
use crate::prompting::estimate_tokens;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockConfig {
    pub seed: u64,
    /// Exact word count per completion; otherwise drawn from the seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words_per_call: Option<usize>,
    /// Appended as a final paragraph to every completion when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_marker: Option<String>,
}

impl MockConfig {
    pub fn seeded(seed: u64) -> Self {
        MockConfig { seed, words_per_call: None, end_marker: None }
    }
}

#[derive(Debug, Clone)]
pub struct MockProvider {
    config: MockConfig,
}

impl MockProvider {
    pub fn new(config: MockConfig) -> Self {
        MockProvider { config }
    }

    pub fn seeded(seed: u64) -> Self {
        Self::new(MockConfig::seeded(seed))
    }

    fn rng_for(&self, call: &ProviderCall<'_>) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.config.seed.to_le_bytes());
        h.update(call.prompt_digest.as_bytes());
        h.update(call.temperature.to_bits().to_le_bytes());
        h.update(call.replicate_index.to_le_bytes());
        let seed: [u8; 32] = h.finalize().into();
        ChaCha8Rng::from_seed(seed)
    }

    /// Generates filler text; `target_words` is exact when given.
    fn compose(&self, rng: &mut ChaCha8Rng, temperature: f64, young_audience: bool, target_words: usize) -> String {
        let t = temperature.clamp(0.0, 2.0);
        let mut mean_len = 9.0 + 9.0 * t;
        let mut rare_p = 0.03 + 0.12 * t;
        if young_audience {
            mean_len -= 3.0;
            rare_p *= 0.6;
        }
        let spread = 2.0 + 4.0 * t;

        let mut paragraphs: Vec<String> = Vec::new();
        let mut sentences: Vec<String> = Vec::new();
        let mut written = 0;
        while written < target_words {
            let jitter: f64 = rng.random_range(-1.0..=1.0);
            let len = ((mean_len + jitter * spread).round() as usize).clamp(3, 40);
            let len = len.min(target_words - written);
            sentences.push(sentence(rng, len, rare_p));
            written += len;
            if sentences.len() == 4 {
                paragraphs.push(sentences.join(" "));
                sentences.clear();
            }
        }
        if !sentences.is_empty() {
            paragraphs.push(sentences.join(" "));
        }
        paragraphs.join("\n\n")
    }
}

const DET: &[&str] = &["the", "a", "every", "this", "one", "each", "some", "their"];
const ADJ: &[&str] = &[
    "small", "busy", "strong", "bright", "warm", "young", "quiet", "green", "tiny", "happy", "large", "cold", "wild",
    "gentle", "clever", "old", "long", "brown",
];
const NOUN: &[&str] = &[
    "bee", "flower", "garden", "river", "forest", "child", "friend", "tree", "nest", "queen", "worker", "honey",
    "field", "animal", "village", "family", "water", "home", "mountain", "bird", "rabbit", "story", "ground", "sun",
];
const VERB: &[&str] = &[
    "found",
    "carried",
    "made",
    "watched",
    "helped",
    "built",
    "saw",
    "followed",
    "kept",
    "gave",
    "heard",
    "moved",
    "protected",
    "collected",
    "visited",
    "shared",
    "reached",
    "covered",
];
const PREP: &[&str] = &["near", "under", "over", "across", "inside", "behind", "through", "beside", "toward"];
const CONJ: &[&str] = &["and", "while", "because", "so", "but", "when"];
const RARE: &[&str] = &[
    "pollination",
    "ecosystem",
    "colony",
    "chlorophyll",
    "abdomen",
    "thorax",
    "nocturnal",
    "camouflage",
    "metamorphosis",
    "symbiotic",
    "habitat",
    "pheromone",
    "hexagonal",
    "meticulous",
    "luminous",
    "resilient",
    "intricate",
    "venerable",
    "cultivated",
    "orchestrated",
    "navigated",
    "accumulated",
    "sustained",
    "observatory",
    "biodiversity",
    "tributary",
    "archipelago",
    "labyrinth",
    "predator",
    "migration",
];

enum Slot {
    Det,
    Adj,
    Noun,
    Verb,
    Prep,
    Conj,
}

const PATTERN: [Slot; 10] = [
    Slot::Det,
    Slot::Adj,
    Slot::Noun,
    Slot::Verb,
    Slot::Det,
    Slot::Noun,
    Slot::Prep,
    Slot::Det,
    Slot::Noun,
    Slot::Conj,
];

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
    words[rng.random_range(0..words.len())]
}

fn sentence(rng: &mut ChaCha8Rng, len: usize, rare_p: f64) -> String {
    let mut words: Vec<&str> = Vec::with_capacity(len);
    for i in 0..len {
        let slot = &PATTERN[i % PATTERN.len()];
        let content = matches!(slot, Slot::Adj | Slot::Noun | Slot::Verb);
        let w = if content && rng.random_bool(rare_p) {
            pick(rng, RARE)
        } else {
            match slot {
                Slot::Det => pick(rng, DET),
                Slot::Adj => pick(rng, ADJ),
                Slot::Noun => pick(rng, NOUN),
                Slot::Verb => pick(rng, VERB),
                Slot::Prep => pick(rng, PREP),
                Slot::Conj => pick(rng, CONJ),
            }
        };
        words.push(w);
    }
    let mut s = words.join(" ");
    if let Some(first) = s.get(..1) {
        s.replace_range(..1, &first.to_uppercase());
    }
    s.push('.');
    s
}

impl CompletionProvider for MockProvider {
    fn complete(&self, call: &ProviderCall<'_>) -> Result<ProviderReply, ProviderError> {
        let mut rng = self.rng_for(call);
        let young = call.prompt.contains("-year-old");
        let target = self.config.words_per_call.unwrap_or_else(|| rng.random_range(180..=320));
        let mut text = self.compose(&mut rng, call.temperature, young, target);
        let mut finish_reason = FinishReason::Stop;

        let budget = call.max_tokens as usize;
        if estimate_tokens(&text) > budget {
            let mut kept: Vec<&str> = Vec::new();
            for w in text.split(' ') {
                kept.push(w);
                if estimate_tokens(&kept.join(" ")) > budget {
                    kept.pop();
                    break;
                }
            }
            text = kept.join(" ");
            finish_reason = FinishReason::Length;
        }
        if let Some(marker) = &self.config.end_marker {
            text.push_str("\n\n");
            text.push_str(marker);
        }
        Ok(ProviderReply {
            prompt_tokens: estimate_tokens(call.prompt) as u64,
            completion_tokens: estimate_tokens(&text) as u64,
            text,
            finish_reason,
        })
    }

    fn describe(&self) -> String {
        format!("mock(seed={})", self.config.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call<'a>(digest: &'a str, t: f64, rep: u32) -> ProviderCall<'a> {
        ProviderCall {
            model: "mock",
            prompt: "Generate an informative story about Bees.",
            prompt_digest: digest,
            temperature: t,
            max_tokens: 1200,
            replicate_index: rep,
        }
    }

    #[test]
    fn pure_function_of_inputs() {
        let m = MockProvider::seeded(7);
        let a = m.complete(&call("d1", 0.7, 0)).unwrap();
        let b = m.complete(&call("d1", 0.7, 0)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.text, m.complete(&call("d1", 0.7, 1)).unwrap().text);
        assert_ne!(a.text, m.complete(&call("d2", 0.7, 0)).unwrap().text);
        assert_ne!(a.text, m.complete(&call("d1", 0.9, 0)).unwrap().text);
        assert_ne!(a.text, MockProvider::seeded(8).complete(&call("d1", 0.7, 0)).unwrap().text);
        assert_eq!(m.network_calls(), 0);
    }

    #[test]
    fn exact_word_count() {
        let m = MockProvider::new(MockConfig { seed: 1, words_per_call: Some(100), end_marker: None });
        for rep in 0..5 {
            let r = m.complete(&call("d", 0.5, rep)).unwrap();
            assert_eq!(r.text.split_whitespace().count(), 100);
        }
    }

    #[test]
    fn truncates_to_max_tokens() {
        let m = MockProvider::new(MockConfig { seed: 1, words_per_call: Some(500), end_marker: None });
        let mut c = call("d", 0.5, 0);
        c.max_tokens = 50;
        let r = m.complete(&c).unwrap();
        assert_eq!(r.finish_reason, FinishReason::Length);
        assert!(estimate_tokens(&r.text) <= 50);
    }
}
