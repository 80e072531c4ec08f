//! Word-sequence passphrases over the BIP39 English wordlist.
//!
//! The first word selects the rendezvous channel (its index in the list,
//! 0..=2047). The whole sequence is the shared secret fed to the PAKE.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::Rng;
use thiserror::Error;

/// Separator used by the text form, e.g. `abandon-ability-able-about`.
pub const SEPARATOR: char = '-';

/// Number of words produced when the caller does not choose.
pub const DEFAULT_WORD_COUNT: usize = 4;

/// Minimum passphrase length: one channel word plus one secret word.
pub const MIN_WORD_COUNT: usize = 2;

/// Size of the BIP39 wordlist; channel ids live in `0..WORDLIST_LEN`.
pub const WORDLIST_LEN: usize = 2048;

const RAW_WORDLIST: &str = include_str!("../assets/bip39-english.txt");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PassphraseError {
    #[error("invalid argument: passphrase needs at least {MIN_WORD_COUNT} words, got {0}")]
    TooFewWords(usize),
    #[error("parse error: {0:?} is not a word in the BIP39 English wordlist")]
    UnknownWord(String),
}

/// The embedded BIP39 English wordlist with its reverse index.
pub struct Wordlist {
    words: Vec<&'static str>,
    index: HashMap<&'static str, u16>,
}

impl Wordlist {
    /// Shared instance, parsed once.
    pub fn english() -> &'static Wordlist {
        static LIST: OnceLock<Wordlist> = OnceLock::new();
        LIST.get_or_init(|| {
            let words: Vec<&'static str> = RAW_WORDLIST.lines().filter(|l| !l.is_empty()).collect();
            assert_eq!(words.len(), WORDLIST_LEN, "embedded wordlist is corrupt");
            let index = words.iter().enumerate().map(|(i, w)| (*w, i as u16)).collect();
            Wordlist { words, index }
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, index: u16) -> Option<&'static str> {
        self.words.get(index as usize).copied()
    }

    pub fn index_of(&self, word: &str) -> Option<u16> {
        self.index.get(word).copied()
    }

    pub fn words(&self) -> &[&'static str] {
        &self.words
    }

    /// Raw asset bytes as embedded at build time.
    pub fn raw() -> &'static str {
        RAW_WORDLIST
    }
}

/// An ordered sequence of at least two wordlist members.
///
/// Words are stored as indices; the joined text form is only produced on
/// demand by [`fmt::Display`].
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Passphrase {
    indices: Vec<u16>,
}

impl Passphrase {
    pub fn from_indices(indices: Vec<u16>) -> Result<Self, PassphraseError> {
        if indices.len() < MIN_WORD_COUNT {
            return Err(PassphraseError::TooFewWords(indices.len()));
        }
        if let Some(bad) = indices.iter().find(|&&i| i as usize >= WORDLIST_LEN) {
            return Err(PassphraseError::UnknownWord(format!("#{bad}")));
        }
        Ok(Self { indices })
    }

    pub fn from_words<S: AsRef<str>>(words: &[S]) -> Result<Self, PassphraseError> {
        let list = Wordlist::english();
        let indices = words
            .iter()
            .map(|w| {
                let w = w.as_ref();
                list.index_of(w)
                    .ok_or_else(|| PassphraseError::UnknownWord(w.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_indices(indices)
    }

    pub fn words(&self) -> Vec<&'static str> {
        let list = Wordlist::english();
        self.indices.iter().map(|&i| list.words[i as usize]).collect()
    }

    pub fn indices(&self) -> &[u16] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Rendezvous channel: index of the first word.
    pub fn channel_id(&self) -> u16 {
        self.indices[0]
    }

    /// Canonical ASCII rendering used as the PAKE password.
    pub fn secret_bytes(&self) -> Vec<u8> {
        self.to_string().into_bytes()
    }
}

impl fmt::Display for Passphrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let words = self.words();
        let mut sep = String::new();
        sep.push(SEPARATOR);
        f.write_str(&words.join(&sep))
    }
}

// Keep the secret out of debug logs.
impl fmt::Debug for Passphrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Passphrase")
            .field("channel", &self.channel_id())
            .field("words", &self.len())
            .finish()
    }
}

impl FromStr for Passphrase {
    type Err = PassphraseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_passphrase(s)
    }
}

/// Draws `word_count` words uniformly and independently (repeats allowed).
pub fn generate_passphrase<R: Rng + ?Sized>(word_count: usize, rng: &mut R) -> Result<Passphrase, PassphraseError> {
    if word_count < MIN_WORD_COUNT {
        return Err(PassphraseError::TooFewWords(word_count));
    }
    let indices = (0..word_count).map(|_| rng.gen_range(0..WORDLIST_LEN as u16)).collect();
    Passphrase::from_indices(indices)
}

/// Parses the dash-joined text form. Surrounding whitespace is ignored.
pub fn parse_passphrase(text: &str) -> Result<Passphrase, PassphraseError> {
    let tokens: Vec<&str> = text.trim().split(SEPARATOR).collect();
    if tokens.len() < MIN_WORD_COUNT {
        return Err(PassphraseError::TooFewWords(tokens.len()));
    }
    Passphrase::from_words(&tokens)
}

pub fn channel_id(p: &Passphrase) -> u16 {
    p.channel_id()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use sha2::{Digest, Sha256};

    const WORDLIST_SHA256: &str = "2f5eed53a4727b4bf8880d8f3f199efc90e58503646d9ff8eff3a2ed3b24dbda";

    #[test]
    fn embedded_wordlist_checksum() {
        let digest = Sha256::digest(Wordlist::raw().as_bytes());
        assert_eq!(hex::encode(digest), WORDLIST_SHA256);
    }

    #[test]
    fn wordlist_invariants() {
        let list = Wordlist::english();
        assert_eq!(list.len(), 2048);
        let mut seen = std::collections::HashSet::new();
        for (i, w) in list.words().iter().enumerate() {
            assert!(seen.insert(*w), "duplicate word {w}");
            assert!(w.chars().all(|c| c.is_ascii_lowercase()), "{w}");
            assert_eq!(list.index_of(w), Some(i as u16));
        }
    }

    #[test]
    fn generate_four_words() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let p = generate_passphrase(4, &mut rng).unwrap();
        assert_eq!(p.len(), 4);
        for w in p.words() {
            assert!(Wordlist::english().index_of(w).is_some());
        }
    }

    #[test]
    fn generate_is_deterministic_under_seed() {
        let a = generate_passphrase(2, &mut ChaCha20Rng::seed_from_u64(99)).unwrap();
        let b = generate_passphrase(2, &mut ChaCha20Rng::seed_from_u64(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generate_rejects_single_word() {
        let err = generate_passphrase(1, &mut ChaCha20Rng::seed_from_u64(0)).unwrap_err();
        assert_eq!(err, PassphraseError::TooFewWords(1));
    }

    #[test]
    fn parse_examples() {
        let p = parse_passphrase("abandon-zoo").unwrap();
        assert_eq!(p.words(), vec!["abandon", "zoo"]);
        assert_eq!(
            parse_passphrase("abandon").unwrap_err(),
            PassphraseError::TooFewWords(1)
        );
        match parse_passphrase("abandon-notaword").unwrap_err() {
            PassphraseError::UnknownWord(w) => assert_eq!(w, "notaword"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_passphrase("").is_err());
        assert!(parse_passphrase("abandon--zoo").is_err());
    }

    #[test]
    fn channel_of_first_and_last_word() {
        assert_eq!(parse_passphrase("abandon-zoo").unwrap().channel_id(), 0);
        assert_eq!(parse_passphrase("zoo-abandon").unwrap().channel_id(), 2047);
    }

    #[test]
    fn debug_does_not_leak_words() {
        let p = parse_passphrase("abandon-zoo").unwrap();
        assert!(!format!("{p:?}").contains("zoo"));
    }

    /// Chi-square goodness of fit over 2048 bins at significance 0.001.
    /// Critical value for 2047 degrees of freedom via the Wilson-Hilferty
    /// approximation with z(0.999) = 3.0902.
    #[test]
    fn channel_histogram_is_uniform() {
        let n = 200_000usize;
        let mut rng = ChaCha20Rng::seed_from_u64(0x5eed);
        let mut hist = vec![0u64; WORDLIST_LEN];
        for _ in 0..n {
            let p = generate_passphrase(2, &mut rng).unwrap();
            hist[p.channel_id() as usize] += 1;
        }
        let expected = n as f64 / WORDLIST_LEN as f64;
        let chi2: f64 = hist.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        let k = (WORDLIST_LEN - 1) as f64;
        let z = 3.0902;
        let critical = k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3);
        assert!(chi2 < critical, "chi2 {chi2} >= {critical}");
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(indices in proptest::collection::vec(0u16..2048, 2..12)) {
            let p = Passphrase::from_indices(indices).unwrap();
            let back = parse_passphrase(&p.to_string()).unwrap();
            prop_assert_eq!(back.channel_id(), p.channel_id());
            prop_assert!(back.channel_id() < 2048);
            prop_assert_eq!(back, p);
        }
    }
}
