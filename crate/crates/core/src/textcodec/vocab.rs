use std::collections::HashMap;
use std::fmt;
use std::ops::Deref;

use thiserror::Error;

use super::{Field, Sentence};
use crate::data::{FeatureKind, Row, Schema, Value};
use crate::error::{Error, Result};

pub type TokenId = usize;

/// Id of the beginning-of-sequence token.
pub const BOS: TokenId = 0;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Token {
    Bos,
    Eos,
    Is,
    Sep,
    /// One character of a number: `0`-`9`, `.` or `-`.
    Char(char),
    /// A feature name or the target name.
    Name(String),
    Category(String),
    Label(String),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Bos => f.write_str("<bos>"),
            Token::Eos => f.write_str("<eos>"),
            Token::Is => f.write_str("is"),
            Token::Sep => f.write_str(","),
            Token::Char(c) => write!(f, "{c}"),
            Token::Name(s) | Token::Category(s) | Token::Label(s) => f.write_str(s),
        }
    }
}

pub(crate) const NUMBER_CHARS: [char; 12] = ['0', '1', '2', '3', '4', '5', '6', '7', '8', '9', '.', '-'];

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum SlotKind {
    Continuous,
    Categorical,
    Target,
}

/// A field position: features `0..M`, then the target at index `M`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Slot {
    pub name: String,
    pub name_token: TokenId,
    pub kind: SlotKind,
    /// Category or label tokens in declared order; empty for continuous slots.
    pub value_tokens: Vec<TokenId>,
}

/// Closed token vocabulary derived from a schema.
///
/// Id layout: `BOS EOS IS SEP`, the twelve number characters, feature names,
/// the target name, categories (schema order, declared order, deduplicated by
/// string), then the two labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<Token>,
    index: HashMap<Token, TokenId>,
    pub(crate) slots: Vec<Slot>,
    slot_by_name: HashMap<String, usize>,
}

impl Vocab {
    pub fn build(schema: &Schema) -> Vocab {
        let mut tokens = vec![Token::Bos, Token::Eos, Token::Is, Token::Sep];
        tokens.extend(NUMBER_CHARS.iter().map(|&c| Token::Char(c)));
        tokens.extend(schema.features.iter().map(|f| Token::Name(f.name.clone())));
        tokens.push(Token::Name(schema.target.name.clone()));
        for f in &schema.features {
            for c in f.category_list() {
                let t = Token::Category(c.clone());
                if !tokens.contains(&t) {
                    tokens.push(t);
                }
            }
        }
        tokens.extend(schema.target.labels.iter().map(|l| Token::Label(l.clone())));

        let index: HashMap<Token, TokenId> = tokens.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        let mut slots: Vec<Slot> = schema
            .features
            .iter()
            .map(|f| Slot {
                name: f.name.clone(),
                name_token: index[&Token::Name(f.name.clone())],
                kind: match f.kind {
                    FeatureKind::Continuous => SlotKind::Continuous,
                    FeatureKind::Categorical => SlotKind::Categorical,
                },
                value_tokens: f
                    .category_list()
                    .iter()
                    .map(|c| index[&Token::Category(c.clone())])
                    .collect(),
            })
            .collect();
        slots.push(Slot {
            name: schema.target.name.clone(),
            name_token: index[&Token::Name(schema.target.name.clone())],
            kind: SlotKind::Target,
            value_tokens: schema
                .target
                .labels
                .iter()
                .map(|l| index[&Token::Label(l.clone())])
                .collect(),
        });
        let slot_by_name = slots.iter().enumerate().map(|(i, s)| (s.name.clone(), i)).collect();
        Vocab {
            tokens,
            index,
            slots,
            slot_by_name,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: TokenId) -> Option<&Token> {
        self.tokens.get(id)
    }

    pub fn id(&self, token: &Token) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn eos(&self) -> TokenId {
        1
    }

    pub fn is_tok(&self) -> TokenId {
        2
    }

    pub fn sep(&self) -> TokenId {
        3
    }

    pub fn char_id(&self, c: char) -> Option<TokenId> {
        NUMBER_CHARS.iter().position(|&x| x == c).map(|i| 4 + i)
    }

    pub(crate) fn char_of(&self, id: TokenId) -> Option<char> {
        NUMBER_CHARS.get(id.wrapping_sub(4)).copied()
    }

    pub(crate) fn slot_of_name_token(&self, id: TokenId) -> Option<usize> {
        self.slots.iter().position(|s| s.name_token == id)
    }

    pub(crate) fn slot_by_name(&self, name: &str) -> Option<usize> {
        self.slot_by_name.get(name).copied()
    }

    pub fn name_token(&self, field_name: &str) -> Option<TokenId> {
        self.slot_by_name(field_name).map(|s| self.slots[s].name_token)
    }

    /// Human-readable rendering of a token sequence.
    pub fn render(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        let mut prev_char = false;
        for &id in ids {
            let Some(tok) = self.tokens.get(id) else {
                out.push_str(" <?>");
                continue;
            };
            let is_char = matches!(tok, Token::Char(_));
            if !(is_char && prev_char) && !matches!(tok, Token::Sep) && !out.is_empty() {
                out.push(' ');
            }
            out.push_str(&tok.to_string());
            prev_char = is_char;
        }
        out
    }
}

/// Token ids of one serialized sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TokenSeq {
    pub ids: Vec<TokenId>,
}

impl TokenSeq {
    pub fn new(ids: Vec<TokenId>) -> Self {
        TokenSeq { ids }
    }
}

impl Deref for TokenSeq {
    type Target = [TokenId];

    fn deref(&self) -> &[TokenId] {
        &self.ids
    }
}

impl AsRef<[TokenId]> for TokenSeq {
    fn as_ref(&self) -> &[TokenId] {
        &self.ids
    }
}

impl From<Vec<TokenId>> for TokenSeq {
    fn from(ids: Vec<TokenId>) -> Self {
        TokenSeq { ids }
    }
}

/// Appends the tokens of one field (`name IS value...`) to `out`.
pub(crate) fn encode_field(field: &Field, vocab: &Vocab, out: &mut Vec<TokenId>) -> Result<()> {
    let slot = vocab
        .slot_by_name(&field.name)
        .ok_or_else(|| Error::Encode(format!("unknown field name {:?}", field.name)))?;
    let info = &vocab.slots[slot];
    out.push(info.name_token);
    out.push(vocab.is_tok());
    match info.kind {
        SlotKind::Continuous => {
            if field.value_text.is_empty() {
                return Err(Error::Encode(format!("empty numeric value for {:?}", field.name)));
            }
            for c in field.value_text.chars() {
                let id = vocab
                    .char_id(c)
                    .ok_or_else(|| Error::Encode(format!("character {c:?} is not a number token")))?;
                out.push(id);
            }
        }
        SlotKind::Categorical | SlotKind::Target => {
            let token = if info.kind == SlotKind::Target {
                Token::Label(field.value_text.clone())
            } else {
                Token::Category(field.value_text.clone())
            };
            let id = vocab
                .id(&token)
                .filter(|id| info.value_tokens.contains(id))
                .ok_or_else(|| {
                    Error::Encode(format!("value {:?} is not declared for {:?}", field.value_text, field.name))
                })?;
            out.push(id);
        }
    }
    Ok(())
}

/// `BOS, (name IS value... SEP)*, EOS` with no separator after the last field.
pub fn encode(sentence: &Sentence, vocab: &Vocab) -> Result<TokenSeq> {
    let mut ids = vec![BOS];
    for (i, field) in sentence.fields.iter().enumerate() {
        if i > 0 {
            ids.push(vocab.sep());
        }
        encode_field(field, vocab, &mut ids)?;
    }
    ids.push(vocab.eos());
    Ok(TokenSeq { ids })
}

/// Why a token sequence is not a valid serialized row. Positions index into
/// the token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("malformed sequence at position {position}: expected {expected}")]
    Malformed { position: usize, expected: &'static str },
    #[error("duplicate field {field:?} at position {position}")]
    DuplicateField { position: usize, field: String },
    #[error("missing field {field:?} (sequence ends at position {position})")]
    MissingField { position: usize, field: String },
    #[error("token at position {position} is not a legal value for its field")]
    OutOfVocabValue { position: usize },
    #[error("unparseable number {text:?} starting at position {position}")]
    UnparseableNumber { position: usize, text: String },
}

fn is_number_text(text: &str) -> bool {
    let body = text.strip_prefix('-').unwrap_or(text);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    digits(int) && frac.is_none_or(digits)
}

/// Parses a generated sequence back into a row. Total over arbitrary input.
pub fn decode_to_row(tokens: &[TokenId], vocab: &Vocab, schema: &Schema) -> std::result::Result<Row, ParseError> {
    let malformed = |position, expected| ParseError::Malformed { position, expected };
    if tokens.first() != Some(&BOS) {
        return Err(malformed(0, "BOS"));
    }
    let n_slots = vocab.slots.len();
    let mut values: Vec<Option<Value>> = vec![None; n_slots];
    let mut pos = 1;
    let end = loop {
        let name_id = *tokens.get(pos).ok_or(malformed(pos, "field name"))?;
        let slot = vocab
            .slot_of_name_token(name_id)
            .ok_or(malformed(pos, "field name"))?;
        let info = &vocab.slots[slot];
        if values[slot].is_some() {
            return Err(ParseError::DuplicateField {
                position: pos,
                field: info.name.clone(),
            });
        }
        pos += 1;
        if tokens.get(pos) != Some(&vocab.is_tok()) {
            return Err(malformed(pos, "IS"));
        }
        pos += 1;
        let value_start = pos;
        let value = match info.kind {
            SlotKind::Continuous => {
                let mut text = String::new();
                while let Some(c) = tokens.get(pos).and_then(|&id| vocab.char_of(id)) {
                    text.push(c);
                    pos += 1;
                }
                if text.is_empty() {
                    return match tokens.get(pos) {
                        None => Err(malformed(pos, "number")),
                        Some(_) => Err(ParseError::OutOfVocabValue { position: pos }),
                    };
                }
                if !is_number_text(&text) {
                    return Err(ParseError::UnparseableNumber {
                        position: value_start,
                        text,
                    });
                }
                let x: f64 = text.parse().map_err(|_| ParseError::UnparseableNumber {
                    position: value_start,
                    text: text.clone(),
                })?;
                if !x.is_finite() {
                    return Err(ParseError::UnparseableNumber {
                        position: value_start,
                        text,
                    });
                }
                Value::Num(x)
            }
            SlotKind::Categorical | SlotKind::Target => {
                let id = *tokens.get(pos).ok_or(malformed(pos, "value"))?;
                if !info.value_tokens.contains(&id) {
                    return Err(ParseError::OutOfVocabValue { position: pos });
                }
                pos += 1;
                match vocab.token(id) {
                    Some(Token::Category(c)) | Some(Token::Label(c)) => Value::Cat(c.clone()),
                    _ => return Err(ParseError::OutOfVocabValue { position: value_start }),
                }
            }
        };
        values[slot] = Some(value);
        match tokens.get(pos) {
            Some(&t) if t == vocab.sep() => pos += 1,
            Some(&t) if t == vocab.eos() => break pos,
            _ => return Err(malformed(pos, "SEP or EOS")),
        }
    };
    if end + 1 != tokens.len() {
        return Err(malformed(end + 1, "end of sequence after EOS"));
    }
    if let Some(missing) = values.iter().position(Option::is_none) {
        return Err(ParseError::MissingField {
            position: end,
            field: vocab.slots[missing].name.clone(),
        });
    }
    let mut values: Vec<Value> = values.into_iter().map(|v| v.expect("all present")).collect();
    let label = match values.pop() {
        Some(Value::Cat(l)) => l,
        _ => unreachable!("target slot holds a label"),
    };
    debug_assert_eq!(values.len(), schema.n_features());
    Ok(Row::new(values, label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureSpec, TargetSpec};
    use crate::textcodec::tests::income_schema;
    use crate::textcodec::{permute_sentence, row_to_sentence, Permutation};
    use crate::rng;

    #[test]
    fn vocab_counts_and_order() {
        let v = Vocab::build(&income_schema());
        assert_eq!(v.len(), 4 + 12 + 3 + 1 + 5 + 2);
        assert_eq!(v.token(BOS), Some(&Token::Bos));
        assert_eq!(Vocab::build(&income_schema()), v);
        for c in ["School", "Bachelor", "Master", "Sales", "Doctor"] {
            assert!(v.id(&Token::Category(c.into())).is_some());
        }
    }

    #[test]
    fn shared_categories_share_a_token() {
        let s = Schema::new(
            vec![
                FeatureSpec::categorical("a", ["yes", "no"]),
                FeatureSpec::categorical("b", ["no", "yes", "maybe"]),
            ],
            TargetSpec::new("y", ["yes", "no"], "yes"),
        )
        .unwrap();
        let v = Vocab::build(&s);
        // structural + chars + 3 names + 3 distinct categories + 2 labels
        assert_eq!(v.len(), 4 + 12 + 3 + 3 + 2);
    }

    #[test]
    fn encodes_layout() {
        let v = Vocab::build(&income_schema());
        let s = Sentence {
            fields: vec![Field::new("Income", "≥200K"), Field::new("WH", "35.5")],
        };
        let ids = encode(&s, &v).unwrap();
        let expected = vec![
            Token::Bos,
            Token::Name("Income".into()),
            Token::Is,
            Token::Label("≥200K".into()),
            Token::Sep,
            Token::Name("WH".into()),
            Token::Is,
            Token::Char('3'),
            Token::Char('5'),
            Token::Char('.'),
            Token::Char('5'),
            Token::Eos,
        ];
        let got: Vec<Token> = ids.iter().map(|&i| v.token(i).unwrap().clone()).collect();
        assert_eq!(got, expected);
        assert_eq!(v.render(&ids), "<bos> Income is ≥200K, WH is 35.5 <eos>");
    }

    #[test]
    fn encode_errors() {
        let v = Vocab::build(&income_schema());
        let bad = |f: Field| encode(&Sentence { fields: vec![f] }, &v).is_err();
        assert!(bad(Field::new("WH", "")));
        assert!(bad(Field::new("Nope", "1")));
        assert!(bad(Field::new("Edu", "PhD")));
        assert!(bad(Field::new("Edu", "Sales")));
        assert!(bad(Field::new("WH", "1e5")));
        assert!(bad(Field::new("Income", "Bachelor")));
    }

    fn full_row() -> Row {
        Row::new(
            vec![Value::Cat("Bachelor".into()), Value::Cat("Sales".into()), Value::Num(35.5)],
            "<200K",
        )
    }

    #[test]
    fn round_trip_in_any_order() {
        let schema = income_schema();
        let v = Vocab::build(&schema);
        let s = row_to_sentence(&full_row(), &schema, true, 4);
        let mut rng = rng::stream(4);
        for strategy in [Permutation::PermuteXy, Permutation::FixY] {
            for _ in 0..20 {
                let p = permute_sentence(&s, "Income", strategy, &mut rng);
                let ids = encode(&p, &v).unwrap();
                let expected_len =
                    2 + p.fields.iter().map(|f| 3 + if f.name == "WH" { 4 } else { 1 }).sum::<usize>() - 1;
                assert_eq!(ids.len(), expected_len);
                assert_eq!(decode_to_row(&ids, &v, &schema).unwrap(), full_row());
            }
        }
    }

    #[test]
    fn decode_error_variants() {
        let schema = income_schema();
        let v = Vocab::build(&schema);
        let s = row_to_sentence(&full_row(), &schema, true, 4);
        let ids = encode(&s, &v).unwrap().ids;

        let partial = Sentence {
            fields: s.fields[1..].to_vec(),
        };
        let missing = encode(&partial, &v).unwrap();
        assert!(matches!(
            decode_to_row(&missing, &v, &schema),
            Err(ParseError::MissingField { field, .. }) if field == "Edu"
        ));

        let mut dup = s.clone();
        dup.fields.insert(1, Field::new("Edu", "School"));
        let dup = encode(&dup, &v).unwrap();
        assert!(matches!(
            decode_to_row(&dup, &v, &schema),
            Err(ParseError::DuplicateField { position: 5, .. })
        ));

        assert!(matches!(decode_to_row(&[], &v, &schema), Err(ParseError::Malformed { position: 0, .. })));
        let truncated = &ids[..ids.len() - 1];
        assert!(matches!(decode_to_row(truncated, &v, &schema), Err(ParseError::Malformed { .. })));
        let mut trailing = ids.clone();
        trailing.push(v.eos());
        assert!(matches!(decode_to_row(&trailing, &v, &schema), Err(ParseError::Malformed { .. })));

        // category of the wrong feature in Edu's value position
        let mut wrong = ids.clone();
        wrong[3] = v.id(&Token::Category("Sales".into())).unwrap();
        assert_eq!(decode_to_row(&wrong, &v, &schema), Err(ParseError::OutOfVocabValue { position: 3 }));

        let mut bad_number = Sentence { fields: s.fields.clone() };
        bad_number.fields[2] = Field::new("WH", "3.5.1");
        let bad_number = encode(&bad_number, &v).unwrap();
        assert!(matches!(
            decode_to_row(&bad_number, &v, &schema),
            Err(ParseError::UnparseableNumber { position: 11, .. })
        ));

        // out-of-range ids never panic
        assert!(decode_to_row(&[BOS, 999, 2, 3], &v, &schema).is_err());
    }

    #[test]
    fn number_grammar() {
        for ok in ["0", "-1", "35.5", "-0.000123", "10"] {
            assert!(is_number_text(ok), "{ok}");
        }
        for bad in ["", "-", ".", "1.", ".5", "1-2", "--1", "1..2"] {
            assert!(!is_number_text(bad), "{bad}");
        }
    }
}
