//! Fine-tuning corpora of serialized rows.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{FinetuneSet, PartialRow};
use crate::data::Table;
use crate::error::{Error, Result};
use crate::lm::CorpusSource;
use crate::rng;
use crate::textcodec::{encode, permute_sentence, row_to_sentence, Permutation, Sentence, TokenSeq, Vocab};

/// Serialized rows that are re-permuted on every epoch, so the model sees a
/// fresh field order each time it visits a row.
#[derive(Debug, Clone)]
pub struct FinetuneCorpus {
    sentences: Vec<Sentence>,
    target_name: String,
    permutation: Permutation,
    vocab: Vocab,
    seed: u64,
}

impl FinetuneCorpus {
    /// Collects the rows selected by `set`: majority rows only for
    /// `major_minor`, interpolants only for `minor_interpolate`.
    pub fn new(
        set: FinetuneSet,
        major: &Table,
        minor: &Table,
        inter: &[PartialRow],
        permutation: Permutation,
        vocab: &Vocab,
        seed: u64,
    ) -> Result<Self> {
        let schema = minor.schema();
        let mut sentences = Vec::new();
        if set == FinetuneSet::MajorMinor {
            sentences.extend(major.rows().iter().map(|r| row_to_sentence(r, schema, true, 4)));
        }
        sentences.extend(minor.rows().iter().map(|r| row_to_sentence(r, schema, true, 4)));
        if set == FinetuneSet::MinorInterpolate {
            for p in inter {
                sentences.push(p.to_sentence(schema, 4)?);
            }
        }
        if sentences.is_empty() {
            return Err(Error::Degenerate("fine-tuning corpus is empty".into()));
        }
        Ok(FinetuneCorpus {
            sentences,
            target_name: schema.target.name.clone(),
            permutation,
            vocab: vocab.clone(),
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    fn permuted<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<TokenSeq> {
        self.sentences
            .iter()
            .map(|s| {
                let s = permute_sentence(s, &self.target_name, self.permutation, rng);
                encode(&s, &self.vocab).expect("corpus sentences use vocabulary fields")
            })
            .collect()
    }
}

impl CorpusSource for FinetuneCorpus {
    fn size(&self) -> usize {
        self.len()
    }

    fn epoch_sequences(&self, epoch: usize) -> Vec<TokenSeq> {
        self.permuted(&mut rng::substream(self.seed, epoch as u64))
    }
}

/// One permuted, encoded, shuffled draw of the corpus.
pub fn build_finetune_corpus<R: Rng + ?Sized>(
    set: FinetuneSet,
    major: &Table,
    minor: &Table,
    inter: &[PartialRow],
    permutation: Permutation,
    vocab: &Vocab,
    rng: &mut R,
) -> Result<Vec<TokenSeq>> {
    let corpus = FinetuneCorpus::new(set, major, minor, inter, permutation, vocab, 0)?;
    let mut seqs = corpus.permuted(rng);
    seqs.shuffle(rng);
    Ok(seqs)
}
