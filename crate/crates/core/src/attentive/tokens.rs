use crate::corpus::{Interaction, Section, StudentSequence};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};

pub const PAD_QUESTION: u32 = 0;
pub const UNK_QUESTION: u32 = 1;
const FIRST_QUESTION: u32 = 2;

pub const SECTION_VOCAB: usize = 3;
pub const SECTION_PAD: u8 = 2;
pub const ASSESSMENT_VOCAB: usize = 4;

/// Token values shared by the correctness and timeliness channels.
pub mod assessment {
    /// CORRECT / TIMELY
    pub const POSITIVE: u8 = 0;
    /// INCORRECT / LATE
    pub const NEGATIVE: u8 = 1;
    pub const MASK: u8 = 2;
    pub const PAD: u8 = 3;
}

/// Bijective map from question ids to token ids. Token 0 is padding and
/// token 1 stands in for questions not seen when the vocabulary was built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    ids: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn from_ids(ids: Vec<String>) -> Self {
        let index = ids.iter().enumerate().map(|(i, q)| (q.clone(), i as u32 + FIRST_QUESTION)).collect();
        Vocab { ids, index }
    }

    /// Sorted distinct question ids of `interactions`.
    pub fn build(interactions: &[Interaction]) -> Self {
        let ids: BTreeSet<&str> = interactions.iter().map(|i| i.question_id.as_str()).collect();
        Vocab::from_ids(ids.into_iter().map(String::from).collect())
    }

    /// Embedding rows needed: known questions plus PAD and UNK.
    pub fn size(&self) -> usize {
        self.ids.len() + FIRST_QUESTION as usize
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn token(&self, question_id: &str) -> Option<u32> {
        self.index.get(question_id).copied()
    }

    pub fn token_or_unk(&self, question_id: &str) -> u32 {
        self.token(question_id).unwrap_or(UNK_QUESTION)
    }

    pub fn question_id(&self, token: u32) -> Option<&str> {
        token.checked_sub(FIRST_QUESTION).and_then(|i| self.ids.get(i as usize)).map(String::as_str)
    }
}

/// One encoder input position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub question: u32,
    pub section: u8,
    pub correctness: u8,
    pub timeliness: u8,
}

impl Token {
    pub const PAD: Token = Token {
        question: PAD_QUESTION,
        section: SECTION_PAD,
        correctness: assessment::PAD,
        timeliness: assessment::PAD,
    };

    pub fn from_interaction(it: &Interaction, vocab: &Vocab) -> Token {
        let flag = |b: bool| if b { assessment::POSITIVE } else { assessment::NEGATIVE };
        Token {
            question: vocab.token_or_unk(&it.question_id),
            section: it.section.index() as u8,
            correctness: flag(it.correct),
            timeliness: flag(it.timely()),
        }
    }

    pub fn is_masked(&self) -> bool {
        self.correctness == assessment::MASK
    }
}

/// Encoder input. Position `p` uses position embedding `p`; positions whose
/// `attention_mask` is false are padding and are never attended to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedSequence {
    pub tokens: Vec<Token>,
    pub attention_mask: Vec<bool>,
}

impl TokenizedSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn n_real(&self) -> usize {
        self.attention_mask.iter().filter(|m| **m).count()
    }

    /// Append PAD positions up to `len`.
    pub fn padded(&self, len: usize) -> TokenizedSequence {
        let mut out = self.clone();
        while out.tokens.len() < len {
            out.tokens.push(Token::PAD);
            out.attention_mask.push(false);
        }
        out
    }

    /// Check the channel invariants: PAD exactly at padding positions, MASK only
    /// at real positions and always in both assessment channels together.
    pub fn validate(&self) -> Result<(), String> {
        if self.tokens.len() != self.attention_mask.len() {
            return Err("tokens and attention_mask differ in length".into());
        }
        for (p, (t, &real)) in self.tokens.iter().zip(&self.attention_mask).enumerate() {
            let pads = [t.correctness == assessment::PAD, t.timeliness == assessment::PAD];
            if real && (pads[0] || pads[1]) {
                return Err(format!("PAD assessment at real position {p}"));
            }
            if !real && !(pads[0] && pads[1]) {
                return Err(format!("padding position {p} carries assessment tokens"));
            }
            if (t.correctness == assessment::MASK) != (t.timeliness == assessment::MASK) {
                return Err(format!("position {p} is masked in only one channel"));
            }
            if t.correctness as usize >= ASSESSMENT_VOCAB
                || t.timeliness as usize >= ASSESSMENT_VOCAB
                || t.section as usize >= SECTION_VOCAB
            {
                return Err(format!("position {p} has an out-of-range token"));
            }
        }
        Ok(())
    }
}

/// Result of tokenizing a history for the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Tokenized {
    pub seq: TokenizedSequence,
    /// Interactions whose question is not in the vocabulary.
    pub unknown: usize,
    /// The history was empty and a single placeholder position was used.
    pub no_history: bool,
}

/// Tokenize the most recent `max_len` events. An empty history becomes one
/// placeholder position (UNK question, LC, both assessments masked) so the
/// encoder always sees at least one real position.
pub fn tokenize(seq: &StudentSequence, vocab: &Vocab, max_len: usize) -> Tokenized {
    let start = seq.events.len().saturating_sub(max_len);
    let events = &seq.events[start..];
    if events.is_empty() {
        return Tokenized {
            seq: TokenizedSequence {
                tokens: vec![Token {
                    question: UNK_QUESTION,
                    section: Section::LC.index() as u8,
                    correctness: assessment::MASK,
                    timeliness: assessment::MASK,
                }],
                attention_mask: vec![true],
            },
            unknown: 0,
            no_history: true,
        };
    }
    let tokens: Vec<Token> = events.iter().map(|e| Token::from_interaction(e, vocab)).collect();
    let unknown = tokens.iter().filter(|t| t.question == UNK_QUESTION).count();
    Tokenized {
        seq: TokenizedSequence { attention_mask: vec![true; tokens.len()], tokens },
        unknown,
        no_history: false,
    }
}
