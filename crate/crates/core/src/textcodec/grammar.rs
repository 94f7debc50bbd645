//! Incremental grammar of well-formed serialized rows, used to mask the
//! language model during constrained decoding.

use thiserror::Error;

use super::vocab::{SlotKind, TokenId, Vocab, BOS};

/// Default cap on the number of characters in one generated number.
pub const DEFAULT_MAX_VALUE_CHARS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    ExpectBos,
    /// Next token is a field name.
    FieldStart,
    ExpectIs(usize),
    /// Next token is the single category/label token of `slot`.
    Choice(usize),
    /// Inside a number; `len` characters so far.
    Number {
        len: usize,
        negative: bool,
        int_digits: usize,
        dot: bool,
        frac_digits: usize,
    },
    /// A value is complete; SEP or EOS follows.
    ValueDone,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("token {token} is not allowed at sequence position {position}")]
pub struct GrammarError {
    pub token: TokenId,
    pub position: usize,
}

/// Tracks a partially generated sequence and yields the legal next tokens.
///
/// Legal continuations: a not-yet-emitted field name at a field start; `IS`
/// after a name; the declared categories (or labels) of the current field, or
/// number characters for a continuous field; `SEP` once a value is complete and
/// fields remain; `EOS` only once every field has been emitted.
#[derive(Debug, Clone)]
pub struct GrammarState {
    emitted: Vec<bool>,
    current: Option<usize>,
    phase: Phase,
    max_value_chars: usize,
    position: usize,
}

impl GrammarState {
    pub fn new(vocab: &Vocab, max_value_chars: usize) -> Self {
        GrammarState {
            emitted: vec![false; vocab.slots.len()],
            current: None,
            phase: Phase::ExpectBos,
            max_value_chars: max_value_chars.max(2),
            position: 0,
        }
    }

    /// Upper bound on the length of any sequence this grammar accepts.
    pub fn max_sequence_len(vocab: &Vocab, max_value_chars: usize) -> usize {
        let max_value_chars = max_value_chars.max(2);
        let per_field: usize = vocab
            .slots
            .iter()
            .map(|s| match s.kind {
                SlotKind::Continuous => 2 + max_value_chars,
                _ => 3,
            })
            .sum();
        // BOS + fields + separators + EOS
        1 + per_field + vocab.slots.len() - 1 + 1
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    /// True when the next token is a field name.
    pub fn at_field_start(&self) -> bool {
        self.phase == Phase::FieldStart
    }

    pub fn emitted_fields(&self) -> usize {
        self.emitted.iter().filter(|&&e| e).count()
    }

    fn all_emitted_with_current(&self) -> bool {
        self.emitted.iter().all(|&e| e)
    }

    fn terminators(&self, vocab: &Vocab, out: &mut Vec<TokenId>) {
        if self.all_emitted_with_current() {
            out.push(vocab.eos());
        } else {
            out.push(vocab.sep());
        }
    }

    /// Legal next tokens, in ascending id order.
    pub fn allowed(&self, vocab: &Vocab) -> Vec<TokenId> {
        let mut out = Vec::new();
        match self.phase {
            Phase::ExpectBos => out.push(BOS),
            Phase::FieldStart => {
                out.extend(
                    vocab
                        .slots
                        .iter()
                        .zip(&self.emitted)
                        .filter(|(_, &e)| !e)
                        .map(|(s, _)| s.name_token),
                );
            }
            Phase::ExpectIs(_) => out.push(vocab.is_tok()),
            Phase::Choice(slot) => out.extend(vocab.slots[slot].value_tokens.iter().copied()),
            Phase::Number {
                len,
                negative,
                int_digits,
                dot,
                frac_digits,
            } => {
                let budget = self.max_value_chars - len;
                let digits = |out: &mut Vec<TokenId>| out.extend((0..10).map(|d| 4 + d));
                if !dot && int_digits == 0 {
                    if budget >= 1 {
                        digits(&mut out);
                    }
                    if !negative && budget >= 2 {
                        out.push(vocab.char_id('-').expect("minus token"));
                    }
                } else if !dot {
                    if budget >= 1 {
                        digits(&mut out);
                    }
                    if budget >= 2 {
                        out.push(vocab.char_id('.').expect("dot token"));
                    }
                    self.terminators(vocab, &mut out);
                } else if frac_digits == 0 {
                    digits(&mut out);
                } else {
                    if budget >= 1 {
                        digits(&mut out);
                    }
                    self.terminators(vocab, &mut out);
                }
            }
            Phase::ValueDone => self.terminators(vocab, &mut out),
            Phase::Done => {}
        }
        out.sort_unstable();
        out
    }

    /// Consumes one token, rejecting anything [`allowed`](Self::allowed) would not list.
    pub fn advance(&mut self, vocab: &Vocab, token: TokenId) -> Result<(), GrammarError> {
        if !self.allowed(vocab).contains(&token) {
            return Err(GrammarError {
                token,
                position: self.position,
            });
        }
        self.position += 1;
        self.phase = match self.phase {
            Phase::ExpectBos => Phase::FieldStart,
            Phase::FieldStart => {
                let slot = vocab.slot_of_name_token(token).expect("allowed name token");
                self.current = Some(slot);
                Phase::ExpectIs(slot)
            }
            Phase::ExpectIs(slot) => {
                self.emitted[slot] = true;
                match vocab.slots[slot].kind {
                    SlotKind::Continuous => Phase::Number {
                        len: 0,
                        negative: false,
                        int_digits: 0,
                        dot: false,
                        frac_digits: 0,
                    },
                    _ => Phase::Choice(slot),
                }
            }
            Phase::Choice(_) => Phase::ValueDone,
            Phase::Number {
                len,
                negative,
                int_digits,
                dot,
                frac_digits,
            } => match vocab.char_of(token) {
                Some('-') => Phase::Number {
                    len: len + 1,
                    negative: true,
                    int_digits,
                    dot,
                    frac_digits,
                },
                Some('.') => Phase::Number {
                    len: len + 1,
                    negative,
                    int_digits,
                    dot: true,
                    frac_digits,
                },
                Some(_) if dot => Phase::Number {
                    len: len + 1,
                    negative,
                    int_digits,
                    dot,
                    frac_digits: frac_digits + 1,
                },
                Some(_) => Phase::Number {
                    len: len + 1,
                    negative,
                    int_digits: int_digits + 1,
                    dot,
                    frac_digits,
                },
                None => self.after_terminator(vocab, token),
            },
            Phase::ValueDone => self.after_terminator(vocab, token),
            Phase::Done => unreachable!("nothing is allowed after EOS"),
        };
        Ok(())
    }

    fn after_terminator(&mut self, vocab: &Vocab, token: TokenId) -> Phase {
        self.current = None;
        if token == vocab.eos() {
            Phase::Done
        } else {
            Phase::FieldStart
        }
    }

    /// Treats the value being generated as final, e.g. after a prompt that ends
    /// with a seeded feature value. Only a separator or EOS may follow.
    pub fn seal_value(&mut self) {
        match self.phase {
            Phase::Number {
                int_digits, dot, frac_digits, ..
            } if int_digits > 0 && (!dot || frac_digits > 0) => self.phase = Phase::ValueDone,
            _ => {}
        }
    }

    /// Feeds a whole prefix.
    pub fn consume(&mut self, vocab: &Vocab, tokens: &[TokenId]) -> Result<(), GrammarError> {
        tokens.iter().try_for_each(|&t| self.advance(vocab, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Row, Value};
    use crate::rng;
    use crate::textcodec::tests::income_schema;
    use crate::textcodec::{decode_to_row, encode, permute_sentence, row_to_sentence, Permutation, Token};
    use rand::Rng;

    #[test]
    fn accepts_every_encoded_row() {
        let schema = income_schema();
        let v = Vocab::build(&schema);
        let row = Row::new(
            vec![Value::Cat("Master".into()), Value::Cat("Doctor".into()), Value::Num(-0.0125)],
            "≥200K",
        );
        let s = row_to_sentence(&row, &schema, true, 4);
        let mut rng = rng::stream(0);
        for strategy in [Permutation::PermuteXy, Permutation::FixY] {
            let ids = encode(&permute_sentence(&s, "Income", strategy, &mut rng), &v).unwrap();
            let mut g = GrammarState::new(&v, DEFAULT_MAX_VALUE_CHARS);
            g.consume(&v, &ids).unwrap();
            assert!(g.is_done());
            assert!(ids.len() <= GrammarState::max_sequence_len(&v, DEFAULT_MAX_VALUE_CHARS));
        }
    }

    #[test]
    fn random_walks_always_parse() {
        let schema = income_schema();
        let v = Vocab::build(&schema);
        let mut rng = rng::stream(5);
        let bound = GrammarState::max_sequence_len(&v, 5);
        for _ in 0..500 {
            let mut g = GrammarState::new(&v, 5);
            let mut ids = Vec::new();
            while !g.is_done() {
                let allowed = g.allowed(&v);
                assert!(!allowed.is_empty());
                let t = allowed[rng.random_range(0..allowed.len())];
                g.advance(&v, t).unwrap();
                ids.push(t);
            }
            assert!(ids.len() <= bound);
            decode_to_row(&ids, &v, &schema).unwrap();
        }
    }

    #[test]
    fn eos_only_after_all_fields() {
        let schema = income_schema();
        let v = Vocab::build(&schema);
        let mut g = GrammarState::new(&v, 8);
        let income = v.name_token("Income").unwrap();
        let label = v.id(&Token::Label("≥200K".into())).unwrap();
        g.consume(&v, &[BOS, income, v.is_tok(), label]).unwrap();
        assert_eq!(g.allowed(&v), vec![v.sep()]);
        g.advance(&v, v.sep()).unwrap();
        assert!(g.at_field_start());
        let names = g.allowed(&v);
        assert_eq!(names.len(), 3);
        assert!(!names.contains(&income));
        assert!(g.advance(&v, v.eos()).is_err());
    }

    #[test]
    fn sealed_number_takes_only_terminator() {
        let schema = income_schema();
        let v = Vocab::build(&schema);
        let mut g = GrammarState::new(&v, 8);
        let wh = v.name_token("WH").unwrap();
        g.consume(&v, &[BOS, wh, v.is_tok(), v.char_id('4').unwrap()]).unwrap();
        assert!(g.allowed(&v).len() > 1);
        g.seal_value();
        assert_eq!(g.allowed(&v), vec![v.sep()]);
    }
}
