//! Topic-mixture corpora with known groundtruth.
//!
//! Every document belongs to one topic. Its title and abstract tokens come
//! from that topic's vocabulary, from a vocabulary shared by all topics, or
//! (with probability `noise`) from the vocabulary of another topic. Word
//! ranks within a vocabulary are Zipf distributed.
//!
//! Coherence between the two parts comes from a handful of focus words per
//! document, drawn from its topic vocabulary: an on-topic token is one of
//! them with probability `title_coherence` in the title and `coherence` in
//! the abstract, so titles read as keyword summaries of their abstracts.
//! A test document's groundtruth is every candidate of its topic.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::corpus::{RawDocument, Split};
use crate::error::{Error, Result};
use crate::evaluation::Judgments;

pub const PART_ORDER: [&str; 2] = ["title", "abstract"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub topics: usize,
    pub vocab_per_topic: usize,
    pub shared_vocab: usize,
    pub candidates_per_topic: usize,
    pub tests_per_topic: usize,
    pub title_len: (usize, usize),
    pub abstract_len: (usize, usize),
    /// Fraction of tokens drawn from another topic.
    pub noise: f64,
    /// Fraction of on-topic draws taken from the shared vocabulary.
    pub shared_rate: f64,
    /// Focus words per document.
    pub focus_words: usize,
    /// Fraction of on-topic abstract draws taken from the focus words.
    pub coherence: f64,
    /// Same fraction for title draws.
    pub title_coherence: f64,
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            topics: 4,
            vocab_per_topic: 60,
            shared_vocab: 100,
            candidates_per_topic: 100,
            tests_per_topic: 10,
            title_len: (6, 10),
            abstract_len: (20, 30),
            noise: 0.3,
            shared_rate: 0.4,
            focus_words: 4,
            coherence: 0.5,
            title_coherence: 0.9,
            zipf_exponent: 1.0,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.topics,
            self.vocab_per_topic,
            self.shared_vocab,
            self.candidates_per_topic,
            self.tests_per_topic,
            self.title_len.0,
            self.abstract_len.0,
            self.focus_words,
        ];
        if counts.contains(&0) {
            return Err(Error::Config("synthetic counts must be at least 1".into()));
        }
        if self.title_len.0 > self.title_len.1 || self.abstract_len.0 > self.abstract_len.1 {
            return Err(Error::Config("length range has min above max".into()));
        }
        if [self.noise, self.shared_rate, self.coherence, self.title_coherence]
            .iter()
            .any(|r| !(0.0..1.0).contains(r))
        {
            return Err(Error::Config(
                "noise, shared rate and coherence must lie in [0, 1)".into(),
            ));
        }
        if self.noise > 0.0 && self.topics < 2 {
            return Err(Error::Config("noise needs at least two topics".into()));
        }
        if !(self.zipf_exponent > 0.0) {
            return Err(Error::Config("zipf exponent must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub documents: Vec<RawDocument>,
    pub judgments: Judgments,
    /// Topic of each document, parallel to `documents`.
    pub topics: Vec<usize>,
}

fn word(prefix: &str, index: usize) -> String {
    // letters only, so every word survives preprocessing unchanged
    let mut s = String::from(prefix);
    let mut n = index;
    loop {
        s.push((b'a' + (n % 26) as u8) as char);
        n /= 26;
        if n == 0 {
            break;
        }
    }
    s
}

fn topic_prefix(topic: usize) -> String {
    format!("t{}x", word("", topic))
}

struct Sampler {
    topic_zipf: Zipf<f64>,
    shared_zipf: Zipf<f64>,
}

impl Sampler {
    fn token(
        &self,
        spec: &SyntheticSpec,
        topic: usize,
        focus: &[usize],
        coherence: f64,
        rng: &mut ChaCha8Rng,
    ) -> String {
        if spec.noise > 0.0 && rng.gen_bool(spec.noise) {
            let other = rng.gen_range(0..spec.topics - 1);
            let other = if other >= topic { other + 1 } else { other };
            return self.background(spec, other, rng);
        }
        if coherence > 0.0 && rng.gen_bool(coherence) {
            let rank = focus[rng.gen_range(0..focus.len())];
            return word(&topic_prefix(topic), rank);
        }
        self.background(spec, topic, rng)
    }

    fn background(&self, spec: &SyntheticSpec, topic: usize, rng: &mut ChaCha8Rng) -> String {
        if spec.shared_rate > 0.0 && rng.gen_bool(spec.shared_rate) {
            let rank = self.shared_zipf.sample(rng) as usize - 1;
            word("sx", rank)
        } else {
            let rank = self.topic_zipf.sample(rng) as usize - 1;
            word(&topic_prefix(topic), rank)
        }
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sampler = Sampler {
        topic_zipf: Zipf::new(spec.vocab_per_topic as u64, spec.zipf_exponent)
            .map_err(|e| Error::Config(e.to_string()))?,
        shared_zipf: Zipf::new(spec.shared_vocab as u64, spec.zipf_exponent)
            .map_err(|e| Error::Config(e.to_string()))?,
    };

    // (topic, split) slots, shuffled so ids carry no topic order
    let mut slots: Vec<(usize, Split)> = Vec::new();
    for t in 0..spec.topics {
        slots.extend(std::iter::repeat((t, Split::Candidate)).take(spec.candidates_per_topic));
        slots.extend(std::iter::repeat((t, Split::Test)).take(spec.tests_per_topic));
    }
    slots.shuffle(&mut rng);

    let mut next = [0usize; 2];
    let mut documents = Vec::with_capacity(slots.len());
    let mut topics = Vec::with_capacity(slots.len());
    for &(topic, split) in &slots {
        let (prefix, counter) = match split {
            Split::Candidate => ("c", &mut next[0]),
            Split::Test => ("q", &mut next[1]),
        };
        let id = format!("{prefix}{:05}", *counter);
        *counter += 1;
        let focus: Vec<usize> = (0..spec.focus_words)
            .map(|_| sampler.topic_zipf.sample(&mut rng) as usize - 1)
            .collect();
        let title_len = rng.gen_range(spec.title_len.0..=spec.title_len.1);
        let title: Vec<String> = (0..title_len)
            .map(|_| sampler.token(spec, topic, &focus, spec.title_coherence, &mut rng))
            .collect();
        let abstract_len = rng.gen_range(spec.abstract_len.0..=spec.abstract_len.1);
        let mut abstract_text = String::new();
        for i in 0..abstract_len {
            if i > 0 {
                abstract_text.push_str(if i % 8 == 0 { ". " } else { " " });
            }
            abstract_text.push_str(&sampler.token(spec, topic, &focus, spec.coherence, &mut rng));
        }
        abstract_text.push('.');
        documents.push(RawDocument {
            id,
            parts: vec![
                (PART_ORDER[0].into(), title.join(" ")),
                (PART_ORDER[1].into(), abstract_text),
            ],
            groundtruth: None,
            split,
        });
        topics.push(topic);
    }

    let mut judgments = Judgments::default();
    for doc in documents.iter().filter(|d| d.split == Split::Candidate) {
        judgments.candidates.insert(doc.id.clone());
    }
    for i in 0..documents.len() {
        if documents[i].split != Split::Test {
            continue;
        }
        let rel: BTreeSet<String> = documents
            .iter()
            .zip(&topics)
            .filter(|(d, &t)| d.split == Split::Candidate && t == topics[i])
            .map(|(d, _)| d.id.clone())
            .collect();
        documents[i].groundtruth = Some(rel.clone());
        judgments.relevant.insert(documents[i].id.clone(), rel);
    }
    Ok(SyntheticCorpus {
        documents,
        judgments,
        topics,
    })
}

impl SyntheticCorpus {
    /// Raw corpus lines, led by a part-order header.
    pub fn write_corpus(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{}", serde_json::json!({ "part_order": PART_ORDER }))?;
        for doc in &self.documents {
            writeln!(out, "{}", doc.to_json_line())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_raw_corpus, preprocess_text};

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            topics: 2,
            candidates_per_topic: 100,
            tests_per_topic: 3,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn sizes_and_groundtruth() {
        let c = generate(&small()).unwrap();
        assert_eq!(c.documents.len(), 206);
        assert_eq!(c.judgments.relevant.len(), 6);
        assert_eq!(c.judgments.universe_size(), 200);
        for (q, rel) in &c.judgments.relevant {
            assert_eq!(rel.len(), 100);
            let qi = c.documents.iter().position(|d| &d.id == q).unwrap();
            for (d, t) in c.documents.iter().zip(&c.topics) {
                if rel.contains(&d.id) {
                    assert_eq!(*t, c.topics[qi]);
                }
            }
        }
    }

    #[test]
    fn noiseless_documents_stay_on_topic() {
        let spec = SyntheticSpec {
            noise: 0.0,
            ..small()
        };
        let c = generate(&spec).unwrap();
        for (d, &t) in c.documents.iter().zip(&c.topics) {
            let own = topic_prefix(t);
            for (_, text) in &d.parts {
                for tok in preprocess_text(text) {
                    assert!(tok.starts_with(&own) || tok.starts_with("sx"), "{tok}");
                }
            }
        }
    }

    #[test]
    fn same_seed_same_files() {
        let write = |spec: &SyntheticSpec| {
            let mut buf = Vec::new();
            generate(spec).unwrap().write_corpus(&mut buf).unwrap();
            buf
        };
        assert_eq!(write(&small()), write(&small()));
        assert_ne!(write(&small()), write(&SyntheticSpec { seed: 2, ..small() }));
    }

    #[test]
    fn output_parses_as_a_raw_corpus() {
        let c = generate(&small()).unwrap();
        let mut buf = Vec::new();
        c.write_corpus(&mut buf).unwrap();
        let (order, docs) = parse_raw_corpus(buf.as_slice(), None).unwrap();
        assert_eq!(order, vec!["title", "abstract"]);
        assert_eq!(docs, c.documents);
        for tok in preprocess_text(&c.documents[0].parts[1].1) {
            assert!(tok.chars().all(|ch| ch.is_ascii_lowercase()));
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(generate(&SyntheticSpec { noise: 1.0, ..small() }).is_err());
        assert!(generate(&SyntheticSpec { topics: 0, ..small() }).is_err());
        assert!(generate(&SyntheticSpec { title_len: (5, 2), ..small() }).is_err());
    }
}
