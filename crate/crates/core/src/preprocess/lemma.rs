//! Aggressive suffix-stripping lemmatizer: an irregular-form table plus
//! plural/`-ing`/`-ed` rules with a two-character minimum stem. It
//! deliberately over-strips ("was" -> "wa", "does" -> "doe").

use std::collections::HashMap;
use std::sync::LazyLock;

static IRREGULAR: LazyLock<HashMap<&'static str, &'static str>> = LazyLock::new(|| {
    include_str!("irregular.txt")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let (form, lemma) = l.split_once('\t').expect("tab-separated irregular table");
            (form, lemma)
        })
        .collect()
});

const MIN_STEM: usize = 2;

fn is_vowel(c: char) -> bool {
    matches!(c.to_ascii_lowercase(), 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

fn ends_with_ci(word: &str, suffix: &str) -> bool {
    word.len() >= suffix.len()
        && word.is_char_boundary(word.len() - suffix.len())
        && word[word.len() - suffix.len()..].eq_ignore_ascii_case(suffix)
}

fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Repair a stem left by removing `-ing` / `-ed`: undouble a final double
/// consonant (runn -> run) or restore a silent e on short CVC stems
/// (mak -> make).
fn repair_stem(stem: &str) -> String {
    let chars: Vec<char> = stem.chars().collect();
    let n = chars.len();
    if n >= 2 {
        let (a, b) = (chars[n - 2].to_ascii_lowercase(), chars[n - 1].to_ascii_lowercase());
        if a == b && !is_vowel(b) && !matches!(b, 'l' | 's' | 'z') {
            return chars[..n - 1].iter().collect();
        }
    }
    if n == 3 {
        let c = |i: usize| chars[i].to_ascii_lowercase();
        let cvc = !is_vowel(c(0)) && is_vowel(c(1)) && !is_vowel(c(2));
        if cvc && !matches!(c(2), 'w' | 'x' | 'y') && c(0).is_ascii_alphabetic() {
            return format!("{stem}e");
        }
    }
    stem.to_string()
}

fn strip_once(word: &str) -> Option<String> {
    if let Some(lemma) = IRREGULAR.get(word.to_lowercase().as_str()) {
        return (*lemma != word).then(|| lemma.to_string());
    }
    let cut = |n: usize| &word[..word.len() - n];

    if ends_with_ci(word, "ies") || ends_with_ci(word, "ied") {
        let rest = if char_len(word) > 4 { "y" } else { "ie" };
        return Some(format!("{}{rest}", cut(3)));
    }
    if ends_with_ci(word, "sses") {
        return Some(cut(2).to_string());
    }
    for es in ["ches", "shes", "xes", "zes"] {
        if ends_with_ci(word, es) && char_len(cut(2)) >= MIN_STEM {
            return Some(cut(2).to_string());
        }
    }
    if ends_with_ci(word, "s") {
        if ["ss", "us", "is"].iter().any(|s| ends_with_ci(word, s)) {
            return None;
        }
        return (char_len(cut(1)) >= MIN_STEM).then(|| cut(1).to_string());
    }
    if ends_with_ci(word, "eed") {
        return None;
    }
    for suffix in ["ing", "ed"] {
        if ends_with_ci(word, suffix) {
            let stem = cut(suffix.len());
            if char_len(stem) >= MIN_STEM && stem.chars().any(is_vowel) {
                return Some(repair_stem(stem));
            }
            return None;
        }
    }
    None
}

/// Lemma of `word`, iterated to a fixed point so that lemmatizing a lemma is
/// a no-op. Suffix rules always shorten the word; irregular lemmas are fixed
/// points of the rules.
pub fn lemmatize(word: &str) -> String {
    let mut current = word.to_string();
    for _ in 0..16 {
        let Some(next) = strip_once(&current) else {
            break;
        };
        if next == current || next.is_empty() {
            break;
        }
        current = next;
    }
    current
}
