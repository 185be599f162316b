//! Template grammar for desk-scale corpora.
//!
//! A context template and its response templates share slot bindings, so a
//! response is content-related to its context. Style sentences are template
//! responses rewritten by a [`StyleTransform`]; they share content with the
//! conversation data but are never paired with a context.

use std::collections::{BTreeMap, HashMap};

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::RawPair;
use crate::error::{Error, Result};
use crate::rng::{derived_rng, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Template {
    /// Utterance patterns; more than one gives a multi-turn context.
    pub context: Vec<String>,
    pub responses: Vec<String>,
}

/// Word substitutions plus sentence-level markers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StyleTransform {
    pub substitutions: BTreeMap<String, String>,
    pub prefixes: Vec<String>,
    pub suffixes: Vec<String>,
    /// Probability of attaching one marker to a sentence.
    pub marker_prob: f64,
}

impl StyleTransform {
    pub fn identity() -> Self {
        Self::default()
    }

    /// Substitutes a seeded `fraction` of `lexicon` with stylized variants:
    /// the default transform's synonym when it has one, otherwise a
    /// derived token.
    pub fn substitute_fraction(lexicon: &[String], fraction: f64, seed: u64) -> Self {
        let known = SynthSpec::default().style.substitutions;
        let k = ((lexicon.len() as f64) * fraction).round() as usize;
        let mut rng = crate::rng::rng(seed);
        let chosen = rand::seq::index::sample(&mut rng, lexicon.len(), k.min(lexicon.len()));
        let substitutions = chosen
            .iter()
            .map(|i| {
                let w = &lexicon[i];
                let s = known.get(w).cloned().unwrap_or_else(|| format!("{w}eth"));
                (w.clone(), s)
            })
            .collect();
        StyleTransform {
            substitutions,
            ..Self::default()
        }
    }

    /// Rewrites `tokens`; each substitutable word is replaced with
    /// probability `strength`.
    pub fn apply(&self, tokens: &[String], strength: f64, rng: &mut Rng) -> Vec<String> {
        let mut out: Vec<String> = Vec::with_capacity(tokens.len() + 4);
        for t in tokens {
            match self.substitutions.get(t) {
                Some(s) if strength >= 1.0 || rng.random::<f64>() < strength => {
                    out.extend(s.split_whitespace().map(str::to_string))
                }
                _ => out.push(t.clone()),
            }
        }
        let n_markers = self.prefixes.len() + self.suffixes.len();
        if n_markers > 0 && rng.random::<f64>() < self.marker_prob {
            let k = rng.random_range(0..n_markers);
            if k < self.prefixes.len() {
                let mut pre: Vec<String> = self.prefixes[k].split_whitespace().map(str::to_string).collect();
                pre.append(&mut out);
                out = pre;
            } else {
                out.extend(
                    self.suffixes[k - self.prefixes.len()]
                        .split_whitespace()
                        .map(str::to_string),
                );
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    /// Slot category -> candidate words. `{noun2}` draws from `noun`.
    pub slots: BTreeMap<String, Vec<String>>,
    pub templates: Vec<Template>,
    pub style: StyleTransform,
    pub n_pairs: usize,
    pub n_style: usize,
    /// Responses generated per sampled context (thread size).
    pub responses_per_context: usize,
    /// Fraction of conversation responses that are partially stylized.
    pub stylized_response_rate: f64,
    /// Substitution probability used for partially stylized responses.
    pub partial_strength: f64,
}

/// Generated text corpora.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub pairs: Vec<RawPair>,
    pub style: Vec<Vec<String>>,
}

fn slot_category(name: &str) -> &str {
    name.trim_end_matches(|c: char| c.is_ascii_digit())
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.templates.is_empty() {
            return Err(Error::Config("synthetic grammar has no templates".into()));
        }
        for (i, t) in self.templates.iter().enumerate() {
            if t.context.is_empty() || t.responses.is_empty() {
                return Err(Error::Config(format!(
                    "template {i} needs a context and at least one response"
                )));
            }
            for pat in t.context.iter().chain(&t.responses) {
                if pat.split_whitespace().next().is_none() {
                    return Err(Error::Config(format!("template {i} has an empty pattern")));
                }
                for tok in pat.split_whitespace() {
                    if let Some(name) = tok.strip_prefix('{').and_then(|t| t.strip_suffix('}')) {
                        match self.slots.get(slot_category(name)) {
                            Some(v) if !v.is_empty() => {}
                            _ => return Err(Error::Config(format!("template {i} uses unknown slot {{{name}}}"))),
                        }
                    }
                }
            }
        }
        if self.responses_per_context == 0 {
            return Err(Error::Config("responses_per_context must be at least 1".into()));
        }
        Ok(())
    }

    /// Every plain word the grammar can emit (slot fillers and literal
    /// template words), sorted.
    pub fn lexicon(&self) -> Vec<String> {
        let mut set = std::collections::BTreeSet::new();
        for v in self.slots.values() {
            set.extend(v.iter().cloned());
        }
        for t in &self.templates {
            for pat in t.context.iter().chain(&t.responses) {
                for tok in pat.split_whitespace() {
                    if !tok.starts_with('{') {
                        set.insert(tok.to_string());
                    }
                }
            }
        }
        set.into_iter().collect()
    }

    fn render(&self, pattern: &str, bindings: &mut HashMap<String, String>, rng: &mut Rng) -> Vec<String> {
        pattern
            .split_whitespace()
            .map(|tok| match tok.strip_prefix('{').and_then(|t| t.strip_suffix('}')) {
                Some(name) => bindings
                    .entry(name.to_string())
                    .or_insert_with(|| {
                        self.slots[slot_category(name)]
                            .choose(rng)
                            .expect("validated non-empty slot")
                            .clone()
                    })
                    .clone(),
                None => tok.to_string(),
            })
            .collect()
    }
}

/// Draws conversation pairs and style sentences from `spec`. Output is a
/// pure function of `(spec, seed)`.
pub fn synth_corpus(spec: &SynthSpec, seed: u64) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = derived_rng(seed, 0);
    let mut pairs = Vec::with_capacity(spec.n_pairs);
    while pairs.len() < spec.n_pairs {
        let t = spec.templates.choose(&mut rng).expect("validated");
        let mut ctx_bindings = HashMap::new();
        let context: Vec<Vec<String>> = t
            .context
            .iter()
            .map(|p| spec.render(p, &mut ctx_bindings, &mut rng))
            .collect();
        let thread = spec.responses_per_context.min(spec.n_pairs - pairs.len());
        for _ in 0..thread {
            let mut bindings = ctx_bindings.clone();
            let pat = t.responses.choose(&mut rng).expect("validated");
            let mut response = spec.render(pat, &mut bindings, &mut rng);
            if rng.random::<f64>() < spec.stylized_response_rate {
                response = spec.style.apply(&response, spec.partial_strength, &mut rng);
            }
            pairs.push(RawPair {
                context: context.clone(),
                response,
            });
        }
    }

    let mut rng = derived_rng(seed, 1);
    let mut style = Vec::with_capacity(spec.n_style);
    for _ in 0..spec.n_style {
        let t = spec.templates.choose(&mut rng).expect("validated");
        let mut bindings = HashMap::new();
        for p in &t.context {
            spec.render(p, &mut bindings, &mut rng);
        }
        let pat = t.responses.choose(&mut rng).expect("validated");
        let plain = spec.render(pat, &mut bindings, &mut rng);
        style.push(spec.style.apply(&plain, 1.0, &mut rng));
    }
    Ok(SynthCorpus { pairs, style })
}

impl Default for SynthSpec {
    /// Casual chat as the conversation register; an old-fashioned formal
    /// register as the target style.
    fn default() -> Self {
        let slot = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let mut slots = BTreeMap::new();
        slots.insert(
            "noun".into(),
            slot(&[
                "game", "movie", "book", "song", "car", "phone", "city", "team", "job", "class", "dog", "pizza",
                "garden", "party", "trip", "show", "computer", "coffee", "house", "bike", "beach", "band", "camera",
                "recipe",
            ]),
        );
        slots.insert(
            "verb".into(),
            slot(&[
                "play", "watch", "read", "try", "buy", "fix", "visit", "cook", "share", "sell",
            ]),
        );
        slots.insert(
            "adj".into(),
            slot(&[
                "good", "great", "bad", "cool", "weird", "funny", "hard", "easy", "big", "awesome", "new", "old",
            ]),
        );
        let tpl = |ctx: &[&str], resp: &[&str]| Template {
            context: ctx.iter().map(|s| s.to_string()).collect(),
            responses: resp.iter().map(|s| s.to_string()).collect(),
        };
        let templates = vec![
            tpl(
                &["do you want to {verb} the {noun} ?"],
                &[
                    "yeah i want to {verb} the {noun}",
                    "i think the {noun} is {adj}",
                    "no i do not want to {verb} it",
                    "sure the {noun} sounds {adj}",
                    "maybe later , the {noun} is {adj}",
                    "lol i guess i will {verb} the {noun}",
                ],
            ),
            tpl(
                &["what do you think about the {noun} ?"],
                &[
                    "i think the {noun} is really {adj}",
                    "the {noun} is pretty {adj} tbh",
                    "i like the {noun} a lot",
                    "honestly the {noun} is kinda {adj}",
                    "dude the {noun} is {adj}",
                ],
            ),
            tpl(
                &["i am gonna {verb} a {adj} {noun}"],
                &[
                    "that is {adj} lol",
                    "cool , a {adj} {noun} sounds great",
                    "why would you {verb} a {noun} ?",
                    "i want to {verb} a {noun} too",
                ],
            ),
            tpl(
                &["is the {noun} {adj} ?"],
                &[
                    "yeah the {noun} is {adj}",
                    "no the {noun} is not {adj}",
                    "i guess it is pretty {adj}",
                    "maybe , i do not know",
                ],
            ),
            tpl(
                &["have you seen my {noun} ?"],
                &[
                    "no i have not seen your {noun}",
                    "yeah your {noun} is in the {noun2}",
                    "lol i think the dog took your {noun}",
                    "sure , it is near the {noun2}",
                ],
            ),
            tpl(
                &["hey dude", "can you help me {verb} the {noun} ?"],
                &[
                    "sure i can help you {verb} the {noun}",
                    "no i am busy , maybe later",
                    "yeah the {noun} is easy to {verb}",
                    "i guess i can try",
                ],
            ),
            tpl(
                &["my {noun} is so {adj}"],
                &[
                    "lol that is {adj}",
                    "i like your {noun}",
                    "really ? i think it is {adj2}",
                    "cool stuff dude",
                ],
            ),
            tpl(
                &["where should we {verb} the {noun} ?"],
                &[
                    "we should {verb} it at the {noun2}",
                    "i guess at the {noun2}",
                    "maybe we can {verb} it later",
                ],
            ),
        ];
        let substitutions = [
            ("yeah", "indeed"),
            ("lol", "quite"),
            ("really", "most"),
            ("pretty", "rather"),
            ("good", "excellent"),
            ("great", "remarkable"),
            ("bad", "dreadful"),
            ("cool", "curious"),
            ("weird", "singular"),
            ("think", "believe"),
            ("like", "fancy"),
            ("want", "desire"),
            ("gonna", "resolved to"),
            ("tbh", "truly"),
            ("dude", "sir"),
            ("stuff", "affair"),
            ("awesome", "splendid"),
            ("guess", "suppose"),
            ("maybe", "perhaps"),
            ("sure", "certainly"),
            ("funny", "peculiar"),
            ("hard", "arduous"),
            ("easy", "simple"),
            ("big", "considerable"),
            ("kinda", "somewhat"),
            ("honestly", "frankly"),
            ("no", "nay"),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        SynthSpec {
            slots,
            templates,
            style: StyleTransform {
                substitutions,
                prefixes: vec!["my dear fellow ,".into(), "i confess".into()],
                suffixes: vec![", i dare say".into(), ", without a doubt".into()],
                marker_prob: 0.5,
            },
            n_pairs: 5000,
            n_style: 2000,
            responses_per_context: 1,
            stylized_response_rate: 0.1,
            partial_strength: 0.6,
        }
    }
}
