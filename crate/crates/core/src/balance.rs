//! Domain-specific (comparison-condition) classification and seeded oversampling of the
//! minority class with replacement.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Example, Op};
use crate::error::{Error, Result};
use crate::seed;

/// A question is domain-specific when its gold SQL compares with `>` or `<`.
pub fn is_domain_specific(example: &Example) -> bool {
    example.gold.conds.iter().any(|c| matches!(c.op, Op::Gt | Op::Lt))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub phrase: Vec<String>,
    pub op: Op,
}

/// Comparison phrases mapped to the operator they usually express.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub entries: Vec<LexiconEntry>,
}

/// A lexicon phrase found at `start..start + len` in a token list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhraseMatch {
    pub start: usize,
    pub len: usize,
    pub entry: usize,
    pub op: Op,
}

const STRICT_PHRASES: [(&str, Op); 5] = [
    ("more than", Op::Gt),
    ("less than", Op::Lt),
    ("bigger than", Op::Gt),
    ("larger than", Op::Gt),
    ("smaller than", Op::Lt),
];

const EXTENDED_PHRASES: [(&str, Op); 8] = [
    ("greater than", Op::Gt),
    ("fewer than", Op::Lt),
    ("higher than", Op::Gt),
    ("lower than", Op::Lt),
    ("at least", Op::Gt),
    ("at most", Op::Lt),
    ("over", Op::Gt),
    ("under", Op::Lt),
];

impl Lexicon {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, Op)>) -> Self {
        Lexicon {
            entries: pairs
                .into_iter()
                .map(|(p, op)| LexiconEntry {
                    phrase: p.split_whitespace().map(str::to_owned).collect(),
                    op,
                })
                .collect(),
        }
    }

    /// The five phrases quoted for the comparison-question grouping.
    pub fn strict() -> Self {
        Self::from_pairs(STRICT_PHRASES)
    }

    pub fn extended() -> Self {
        Self::from_pairs(STRICT_PHRASES.into_iter().chain(EXTENDED_PHRASES))
    }

    pub fn for_mode(strict: bool) -> Self {
        if strict {
            Self::strict()
        } else {
            Self::extended()
        }
    }

    /// All phrase occurrences, by start position; at one position the longest entry wins.
    pub fn find(&self, tokens: &[String]) -> Vec<PhraseMatch> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let best = self
                .entries
                .iter()
                .enumerate()
                .filter(|(_, e)| !e.phrase.is_empty() && tokens[i..].starts_with(&e.phrase))
                .max_by(|(ia, a), (ib, b)| a.phrase.len().cmp(&b.phrase.len()).then(ib.cmp(ia)));
            match best {
                Some((entry, e)) => {
                    out.push(PhraseMatch {
                        start: i,
                        len: e.phrase.len(),
                        entry,
                        op: e.op,
                    });
                    i += e.phrase.len();
                }
                None => i += 1,
            }
        }
        out
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::extended()
    }
}

pub fn has_domain_phrase(tokens: &[String], lexicon: &Lexicon) -> bool {
    lexicon
        .entries
        .iter()
        .any(|e| !e.phrase.is_empty() && tokens.windows(e.phrase.len()).any(|w| w == e.phrase.as_slice()))
}

/// An example together with its index in the partitioned input.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub source: usize,
    pub example: Example,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SamplePartition {
    pub majority: Vec<Member>,
    pub minority: Vec<Member>,
}

impl SamplePartition {
    pub fn n_majority(&self) -> usize {
        self.majority.len()
    }

    pub fn n_minority(&self) -> usize {
        self.minority.len()
    }
}

/// Splits examples into normal (majority) and domain-specific (minority), keeping order.
pub fn partition(examples: &[Example]) -> SamplePartition {
    let mut p = SamplePartition::default();
    for (source, ex) in examples.iter().enumerate() {
        let member = Member {
            source,
            example: ex.clone(),
        };
        if is_domain_specific(ex) {
            p.minority.push(member);
        } else {
            p.majority.push(member);
        }
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OversampleConfig {
    /// Target minority size as a multiple of the majority size.
    pub factor: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Original { source: usize },
    DuplicateOf { source: usize },
}

impl Provenance {
    pub fn source(self) -> usize {
        match self {
            Provenance::Original { source } | Provenance::DuplicateOf { source } => source,
        }
    }

    pub fn is_duplicate(self) -> bool {
        matches!(self, Provenance::DuplicateOf { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalancedDataset {
    pub examples: Vec<Example>,
    pub provenance: Vec<Provenance>,
    /// Number of duplicates added.
    pub m: usize,
}

impl BalancedDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn originals(&self) -> usize {
        self.provenance.iter().filter(|p| !p.is_duplicate()).count()
    }
}

/// Number of duplicates needed so that the minority reaches `factor * n_majority`.
pub fn additional_samples(n_majority: usize, n_minority: usize, factor: usize) -> usize {
    (factor * n_majority).saturating_sub(n_minority)
}

/// Draws `m` minority duplicates uniformly with replacement, merges them with every original
/// and shuffles the result with the same seeded generator.
pub fn oversample(partition: &SamplePartition, config: &OversampleConfig) -> Result<BalancedDataset> {
    if config.factor < 1 {
        return Err(Error::Config(format!(
            "oversampling factor must be >= 1, got {}",
            config.factor
        )));
    }
    let m = additional_samples(partition.n_majority(), partition.n_minority(), config.factor);
    if m > 0 && partition.minority.is_empty() {
        return Err(Error::EmptyMinority { needed: m });
    }
    let mut rng = seed::rng(config.seed);
    let mut items: Vec<(&Example, Provenance)> =
        Vec::with_capacity(partition.n_majority() + partition.n_minority() + m);
    for member in partition.majority.iter().chain(&partition.minority) {
        items.push((&member.example, Provenance::Original { source: member.source }));
    }
    for _ in 0..m {
        let member = &partition.minority[rng.gen_range(0..partition.minority.len())];
        items.push((&member.example, Provenance::DuplicateOf { source: member.source }));
    }
    items.shuffle(&mut rng);
    let (examples, provenance) = items.into_iter().map(|(e, p)| (e.clone(), p)).unzip();
    Ok(BalancedDataset {
        examples,
        provenance,
        m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Agg, Condition, QuerySketch, Split};

    fn ex(op: Option<Op>, tag: usize) -> Example {
        let conds = op
            .map(|op| vec![Condition::new(1, op, tag.to_string())])
            .unwrap_or_default();
        Example::new(
            format!("question {tag}"),
            "t",
            QuerySketch::new(0, Agg::None, conds),
            Split::Train,
        )
    }

    fn corpus(normal: usize, domain: usize) -> Vec<Example> {
        let mut v: Vec<Example> = (0..normal).map(|i| ex(Some(Op::Eq), i)).collect();
        v.extend((0..domain).map(|i| ex(Some(if i % 2 == 0 { Op::Gt } else { Op::Lt }), normal + i)));
        v
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    #[test]
    fn domain_specific_classification() {
        assert!(is_domain_specific(&ex(Some(Op::Gt), 5)));
        assert!(is_domain_specific(&ex(Some(Op::Lt), 5)));
        assert!(!is_domain_specific(&ex(Some(Op::Eq), 0)));
        assert!(!is_domain_specific(&ex(None, 0)));
    }

    #[test]
    fn phrase_detection() {
        let lex = Lexicon::strict();
        assert!(has_domain_phrase(&toks("players bigger than 2.5"), &lex));
        assert!(!has_domain_phrase(&toks("what is the name"), &lex));
        assert!(!has_domain_phrase(&[], &lex));
        assert!(!has_domain_phrase(&toks("games over 5"), &lex));
        assert!(has_domain_phrase(&toks("games over 5"), &Lexicon::extended()));
        // a phrase split across non-adjacent tokens does not count
        assert!(!has_domain_phrase(&toks("more goals than"), &lex));
    }

    #[test]
    fn find_reports_positions() {
        let m = Lexicon::extended().find(&toks("at least 3 and fewer than 9"));
        assert_eq!(m.len(), 2);
        assert_eq!((m[0].start, m[0].len, m[0].op), (0, 2, Op::Gt));
        assert_eq!((m[1].start, m[1].len, m[1].op), (4, 2, Op::Lt));
    }

    #[test]
    fn partition_counts() {
        let p = partition(&corpus(300, 100));
        assert_eq!((p.n_majority(), p.n_minority()), (300, 100));
        assert!(p.majority.windows(2).all(|w| w[0].source < w[1].source));
        let p = partition(&corpus(0, 5));
        assert_eq!(p.n_majority(), 0);
        let p = partition(&[]);
        assert_eq!((p.n_majority(), p.n_minority()), (0, 0));
    }

    #[test]
    fn worked_example_300_100() {
        let p = partition(&corpus(300, 100));
        let b = oversample(&p, &OversampleConfig { factor: 1, seed: 1 }).unwrap();
        assert_eq!(b.m, 200);
        assert_eq!(b.len(), 600);
        assert_eq!(b.examples.iter().filter(|e| is_domain_specific(e)).count(), 300);
        assert_eq!(b.originals(), 400);
    }

    #[test]
    fn already_balanced_is_reshuffled() {
        let data = corpus(50, 50);
        let b = oversample(&partition(&data), &OversampleConfig { factor: 1, seed: 3 }).unwrap();
        assert_eq!(b.m, 0);
        assert_eq!(b.len(), 100);
        let mut sources: Vec<usize> = b.provenance.iter().map(|p| p.source()).collect();
        assert_ne!(sources, (0..100).collect::<Vec<_>>());
        sources.sort();
        assert_eq!(sources, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn factor_three() {
        let b = oversample(&partition(&corpus(10, 4)), &OversampleConfig { factor: 3, seed: 9 }).unwrap();
        assert_eq!(b.m, 26);
        assert_eq!(b.len(), 40);
    }

    #[test]
    fn errors() {
        let p = partition(&corpus(10, 0));
        assert!(matches!(
            oversample(&p, &OversampleConfig { factor: 1, seed: 0 }),
            Err(Error::EmptyMinority { needed: 10 })
        ));
        assert!(matches!(
            oversample(&p, &OversampleConfig { factor: 0, seed: 0 }),
            Err(Error::Config(_))
        ));
        // nothing to add: empty minority is fine
        let b = oversample(&partition(&[]), &OversampleConfig { factor: 2, seed: 0 }).unwrap();
        assert!(b.is_empty());
    }

    #[test]
    fn duplicates_copy_their_source() {
        let data = corpus(40, 7);
        let b = oversample(&partition(&data), &OversampleConfig { factor: 2, seed: 11 }).unwrap();
        for (e, p) in b.examples.iter().zip(&b.provenance) {
            assert_eq!(e, &data[p.source()]);
            if p.is_duplicate() {
                assert!(is_domain_specific(&data[p.source()]));
            }
        }
        let again = oversample(&partition(&data), &OversampleConfig { factor: 2, seed: 11 }).unwrap();
        assert_eq!(b, again);
        let other = oversample(&partition(&data), &OversampleConfig { factor: 2, seed: 12 }).unwrap();
        assert_ne!(b.provenance, other.provenance);
    }
}
