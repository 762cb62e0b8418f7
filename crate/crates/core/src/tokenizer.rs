//! Rule-based lexical tokenizer with an embedded English stopword list.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Tokenizer settings. Serialized into every index artifact so later stages
/// can detect a mismatched configuration via [`TokenizerConfig::fingerprint`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    /// Minimum token length in characters.
    pub min_len: usize,
    /// Drop tokens found in [`STOPWORDS`].
    pub stopwords: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            min_len: 2,
            stopwords: true,
        }
    }
}

impl TokenizerConfig {
    /// FNV-1a hash over the settings and the stopword list.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv1a::new();
        h.write(b"tokenizer/v1;");
        h.write(&[self.lowercase as u8]);
        h.write(&(self.min_len as u64).to_le_bytes());
        h.write(&[self.stopwords as u8]);
        if self.stopwords {
            for w in STOPWORDS {
                h.write(w.as_bytes());
                h.write(b"\n");
            }
        }
        h.finish()
    }

    pub fn is_stopword(&self, term: &str) -> bool {
        self.stopwords && STOPWORDS.binary_search(&term).is_ok()
    }
}

/// Split `text` on non-alphanumeric boundaries, lowercase, and drop short
/// tokens and stopwords.
pub fn tokenize(text: &str, cfg: &TokenizerConfig) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|piece| !piece.is_empty())
        .filter_map(|piece| {
            let term = if cfg.lowercase {
                piece.chars().flat_map(char::to_lowercase).collect::<String>()
            } else {
                String::from(piece)
            };
            if term.chars().count() < cfg.min_len || cfg.is_stopword(&term) {
                None
            } else {
                Some(term)
            }
        })
        .collect()
}

struct Fnv1a(u64);

impl Fnv1a {
    fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// Sorted English stopword list.
pub static STOPWORDS: &[&str] = &[
    "a", "about", "above", "across", "after", "afterwards", "again", "against", "ain", "all",
    "almost", "alone", "along", "already", "also", "although", "always", "am", "among", "amongst",
    "an", "and", "another", "any", "anyhow", "anyone", "anything", "anyway", "anywhere", "are",
    "aren", "around", "as", "at", "back", "be", "became", "because", "become", "becomes",
    "becoming", "been", "before", "beforehand", "behind", "being", "below", "beside", "besides",
    "between", "beyond", "both", "bottom", "but", "by", "call", "can", "cannot", "could",
    "couldn", "did", "didn", "do", "does", "doesn", "doing", "don", "done", "down", "due",
    "during", "each", "eight", "either", "eleven", "else", "elsewhere", "empty", "enough",
    "etc", "even", "ever", "every", "everyone", "everything", "everywhere", "except", "few",
    "fifteen", "fifty", "first", "five", "for", "former", "formerly", "forty", "four", "from",
    "front", "full", "further", "get", "give", "go", "had", "hadn", "has", "hasn", "have",
    "haven", "having", "he", "hence", "her", "here", "hereafter", "hereby", "herein",
    "hereupon", "hers", "herself", "him", "himself", "his", "how", "however", "hundred", "i",
    "if", "in", "indeed", "into", "is", "isn", "it", "its", "itself", "just", "keep", "last",
    "latter", "latterly", "least", "less", "ll", "made", "make", "many", "may", "me",
    "meanwhile", "might", "mightn", "mine", "more", "moreover", "most", "mostly", "move", "much",
    "must", "mustn", "my", "myself", "name", "namely", "needn", "neither", "never",
    "nevertheless", "next", "nine", "no", "nobody", "none", "noone", "nor", "not", "nothing",
    "now", "nowhere", "of", "off", "often", "on", "once", "one", "only", "onto", "or", "other",
    "others", "otherwise", "our", "ours", "ourselves", "out", "over", "own", "part", "per",
    "perhaps", "please", "put", "quite", "rather", "re", "really", "regarding", "same", "say",
    "see", "seem", "seemed", "seeming", "seems", "serious", "several", "shan", "she", "should",
    "shouldn", "show", "side", "since", "six", "sixty", "so", "some", "somehow", "someone",
    "something", "sometime", "sometimes", "somewhere", "still", "such", "take", "ten", "than",
    "that", "the", "their", "theirs", "them", "themselves", "then", "thence", "there",
    "thereafter", "thereby", "therefore", "therein", "thereupon", "these", "they", "third",
    "this", "those", "though", "three", "through", "throughout", "thru", "thus", "to",
    "together", "too", "top", "toward", "towards", "twelve", "twenty", "two", "under", "unless",
    "until", "up", "upon", "us", "used", "using", "ve", "very", "via", "was", "wasn", "we",
    "well", "were", "weren", "what", "whatever", "when", "whence", "whenever", "where",
    "whereafter", "whereas", "whereby", "wherein", "whereupon", "wherever", "whether", "which",
    "while", "whither", "who", "whoever", "whole", "whom", "whose", "why", "will", "with",
    "within", "without", "won", "would", "wouldn", "yet", "you", "your", "yours", "yourself",
    "yourselves",
];

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn cfg() -> TokenizerConfig {
        TokenizerConfig::default()
    }

    #[test]
    fn stopwords_sorted_and_unique() {
        assert!(STOPWORDS.windows(2).all(|w| w[0] < w[1]));
        assert!(STOPWORDS.len() > 290);
    }

    #[test]
    fn splits_on_punctuation_and_lowercases() {
        assert_eq!(tokenize("COVID-19 vaccine", &cfg()), vec!["covid", "19", "vaccine"]);
        assert_eq!(tokenize("BERT-based rankers", &cfg()), vec!["bert", "based", "rankers"]);
        assert_eq!(tokenize("The cats sat.", &cfg()), vec!["cats", "sat"]);
    }

    #[test]
    fn all_stopwords_yield_nothing() {
        assert!(tokenize("the a of", &cfg()).is_empty());
        assert!(tokenize("", &cfg()).is_empty());
    }

    #[test]
    fn min_len_applies_in_chars() {
        let c = TokenizerConfig { min_len: 3, ..cfg() };
        assert_eq!(tokenize("ab abc äöü", &c), vec!["abc", "äöü"]);
    }

    #[test]
    fn fingerprint_tracks_settings() {
        let a = cfg();
        let b = TokenizerConfig { min_len: 3, ..cfg() };
        assert_eq!(a.fingerprint(), cfg().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
