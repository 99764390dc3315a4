//! Shared text utilities: sentence splitting, CJK-aware tokenization,
//! stopword lists and causal cue words.

/// English function words plus causal cue words. Used both for trigger
/// selection and for feature filtering.
const EN_STOPWORDS: &[&str] = &[
    "a", "about", "after", "again", "all", "also", "an", "and", "any", "are", "as", "at", "be",
    "been", "before", "being", "both", "but", "by", "can", "could", "did", "do", "does", "during",
    "each", "for", "from", "had", "has", "have", "he", "her", "hers", "him", "his", "how", "i",
    "if", "in", "into", "is", "it", "its", "itself", "may", "might", "more", "most", "much",
    "must", "no", "nor", "not", "of", "off", "on", "once", "only", "or", "other", "our", "out",
    "over", "own", "same", "she", "should", "some", "such", "than", "that", "the", "their",
    "them", "then", "there", "these", "they", "this", "those", "through", "to", "too", "under",
    "until", "up", "upon", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your",
    // causal cues are connectives, never triggers
    "because", "since", "therefore", "so", "thus", "hence", "consequently", "accordingly",
];

const ZH_STOPWORDS: &[&str] = &[
    "的", "了", "在", "是", "和", "与", "及", "或", "也", "都", "就", "而", "并", "被", "把", "对",
    "从", "向", "这", "那", "其", "之", "一", "个", "有", "为", "以", "于", "由", "因", "所", "此",
    "因为", "所以", "因此", "于是", "由于",
];

/// Cue words whose sentence is the effect of the preceding sentence.
const FORWARD_CUES: &[&str] = &[
    "therefore", "so", "thus", "hence", "consequently", "accordingly", "所以", "因此", "于是",
];

/// Cue words whose sentence is the cause of the preceding sentence.
const BACKWARD_CUES: &[&str] = &["because", "since", "因为", "由于"];

pub fn is_stopword(token: &str) -> bool {
    let lower = token.to_lowercase();
    EN_STOPWORDS.contains(&lower.as_str()) || ZH_STOPWORDS.contains(&lower.as_str())
}

pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2A6DF
        | 0x3040..=0x30FF | 0xAC00..=0xD7AF)
}

fn is_sentence_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '。' | '！' | '？')
}

/// Normalizes line endings to `\n` and strips trailing whitespace from every
/// line and from the end of the text.
pub fn normalize(text: &str) -> String {
    let unified = text.replace("\r\n", "\n").replace('\r', "\n");
    let mut out = unified
        .split('\n')
        .map(str::trim_end)
        .collect::<Vec<_>>()
        .join("\n");
    let trimmed = out.trim_end().len();
    out.truncate(trimmed);
    out
}

/// Splits text into sentences on `. ! ?` and their CJK equivalents. The
/// terminator stays attached to its sentence; empty pieces are dropped.
pub fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if is_sentence_terminator(c) {
            // swallow runs like "?!" or "..."
            while let Some(&next) = chars.peek() {
                if is_sentence_terminator(next) {
                    current.push(next);
                    chars.next();
                } else {
                    break;
                }
            }
            push_sentence(&mut out, &mut current);
        }
    }
    push_sentence(&mut out, &mut current);
    out
}

fn push_sentence(out: &mut Vec<String>, current: &mut String) {
    let collapsed = current.split_whitespace().collect::<Vec<_>>().join(" ");
    if collapsed.chars().any(char::is_alphanumeric) {
        out.push(collapsed);
    }
    current.clear();
}

/// Removes bracketed asides: `(..)`, `[..]`, `（..）` and `【..】`, then
/// collapses whitespace. Unbalanced openers are kept verbatim.
pub fn remove_asides(sentence: &str) -> String {
    let mut out = String::with_capacity(sentence.len());
    let mut depth = 0usize;
    let mut pending = String::new();
    for c in sentence.chars() {
        match c {
            '(' | '[' | '（' | '【' => {
                depth += 1;
                pending.push(c);
            }
            ')' | ']' | '）' | '】' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    pending.clear();
                } else {
                    pending.push(c);
                }
            }
            _ if depth > 0 => pending.push(c),
            _ => out.push(c),
        }
    }
    out.push_str(&pending);
    let collapsed = out.split_whitespace().collect::<Vec<_>>().join(" ");
    // "word ." left behind by a removed aside
    collapsed
        .replace(" .", ".")
        .replace(" ,", ",")
        .replace(" !", "!")
        .replace(" ?", "?")
}

fn strip_punct(token: &str) -> &str {
    token.trim_matches(|c: char| !c.is_alphanumeric())
}

/// Whitespace tokenization where every CJK character is its own token and
/// leading/trailing punctuation is stripped. Case is preserved.
pub fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut run = String::new();
        for c in chunk.chars() {
            if is_cjk(c) {
                flush_run(&mut out, &mut run);
                out.push(c.to_string());
            } else if is_sentence_terminator(c) || matches!(c, '，' | '、' | '；' | '：') {
                flush_run(&mut out, &mut run);
            } else {
                run.push(c);
            }
        }
        flush_run(&mut out, &mut run);
    }
    out
}

fn flush_run(out: &mut Vec<String>, run: &mut String) {
    let stripped = strip_punct(run);
    if !stripped.is_empty() {
        out.push(stripped.to_string());
    }
    run.clear();
}

/// Lowercased tokens, the form the sequence model consumes.
pub fn model_tokens(text: &str) -> Vec<String> {
    tokens(text).into_iter().map(|t| t.to_lowercase()).collect()
}

/// Lowercased, stopword-filtered terms. Consecutive CJK characters also
/// contribute their bigrams.
pub fn feature_terms(text: &str) -> Vec<String> {
    let toks = model_tokens(text);
    let mut out = Vec::with_capacity(toks.len() * 2);
    for (i, tok) in toks.iter().enumerate() {
        let single_cjk = tok.chars().count() == 1 && tok.chars().all(is_cjk);
        if !is_stopword(tok) {
            out.push(tok.clone());
        }
        if single_cjk {
            if let Some(next) = toks.get(i + 1) {
                if next.chars().count() == 1 && next.chars().all(is_cjk) {
                    let bigram = format!("{tok}{next}");
                    if !is_stopword(&bigram) {
                        out.push(bigram);
                    }
                }
            }
        }
    }
    out
}

/// Splits identifier-like names (`Change_tool`, `NaturalDisaster`) into
/// lowercase words.
pub fn split_name(name: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut cur = String::new();
    let mut prev_lower = false;
    for c in name.chars() {
        if !c.is_alphanumeric() {
            if !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
            prev_lower = false;
            continue;
        }
        if c.is_uppercase() && prev_lower && !cur.is_empty() {
            words.push(std::mem::take(&mut cur));
        }
        prev_lower = c.is_lowercase();
        cur.extend(c.to_lowercase());
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words
}

/// Direction of a causal cue at the start of a sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cue {
    /// The sentence is the effect of its predecessor.
    Forward,
    /// The sentence is the cause of its predecessor.
    Backward,
}

pub fn leading_cue(sentence: &str) -> Option<Cue> {
    let trimmed = sentence.trim_start();
    for cue in BACKWARD_CUES.iter().filter(|c| c.chars().all(is_cjk)) {
        if trimmed.starts_with(cue) {
            return Some(Cue::Backward);
        }
    }
    for cue in FORWARD_CUES.iter().filter(|c| c.chars().all(is_cjk)) {
        if trimmed.starts_with(cue) {
            return Some(Cue::Forward);
        }
    }
    let first = trimmed.split_whitespace().next().map(strip_punct)?.to_lowercase();
    if FORWARD_CUES.contains(&first.as_str()) {
        Some(Cue::Forward)
    } else if BACKWARD_CUES.contains(&first.as_str()) {
        Some(Cue::Backward)
    } else {
        None
    }
}

/// First token usable as an event trigger: at least three characters and
/// not a stopword. CJK sentences fall back to the first non-stopword
/// character bigram.
pub fn trigger_candidate(sentence: &str) -> Option<String> {
    let toks = tokens(sentence);
    if let Some(t) = toks
        .iter()
        .find(|t| t.chars().count() >= 3 && !is_stopword(t) && !t.chars().all(char::is_numeric))
    {
        return Some(t.clone());
    }
    let cjk: Vec<&String> = toks
        .iter()
        .filter(|t| t.chars().all(is_cjk))
        .collect();
    cjk.windows(2)
        .map(|w| format!("{}{}", w[0], w[1]))
        .find(|bigram| !is_stopword(bigram) && !bigram.chars().any(|c| is_stopword(&c.to_string())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_sentences_on_latin_and_cjk_terminators() {
        let s = sentences("The dam broke. So the valley flooded!  Why?\n大雨来了。所以河水上涨。");
        assert_eq!(
            s,
            vec![
                "The dam broke.",
                "So the valley flooded!",
                "Why?",
                "大雨来了。",
                "所以河水上涨。"
            ]
        );
    }

    #[test]
    fn trailing_text_without_terminator_is_a_sentence() {
        assert_eq!(sentences("one. two"), vec!["one.", "two"]);
        assert!(sentences("  ...  ").is_empty());
    }

    #[test]
    fn aside_removal() {
        assert_eq!(
            remove_asides("The army (about 300 men) attacked the fort [citation]."),
            "The army attacked the fort."
        );
        assert_eq!(remove_asides("洪水（据报道）冲毁了大坝。"), "洪水冲毁了大坝。");
        assert_eq!(remove_asides("open (never closed"), "open (never closed");
    }

    #[test]
    fn tokenization_is_cjk_aware() {
        assert_eq!(tokens("Hello, world!"), vec!["Hello", "world"]);
        assert_eq!(tokens("大雨 came"), vec!["大", "雨", "came"]);
        assert_eq!(tokens("a #1 b"), vec!["a", "1", "b"]);
    }

    #[test]
    fn feature_terms_drop_stopwords_and_add_bigrams() {
        assert_eq!(feature_terms("The army attacked the fort"), vec!["army", "attacked", "fort"]);
        assert_eq!(feature_terms("洪水"), vec!["洪", "洪水", "水"]);
    }

    #[test]
    fn name_splitting() {
        assert_eq!(split_name("Change_tool"), vec!["change", "tool"]);
        assert_eq!(split_name("NaturalDisaster"), vec!["natural", "disaster"]);
    }

    #[test]
    fn cues() {
        assert_eq!(leading_cue("Therefore, the city fell."), Some(Cue::Forward));
        assert_eq!(leading_cue("Because rain fell."), Some(Cue::Backward));
        assert_eq!(leading_cue("所以河水上涨。"), Some(Cue::Forward));
        assert_eq!(leading_cue("The sun rose."), None);
    }

    #[test]
    fn trigger_skips_short_and_stopword_tokens() {
        assert_eq!(trigger_candidate("So the flood came.").as_deref(), Some("flood"));
        assert_eq!(trigger_candidate("An ox ran.").as_deref(), Some("ran"));
        assert_eq!(trigger_candidate("所以洪水来了。").as_deref(), Some("洪水"));
        assert_eq!(trigger_candidate("of the an"), None);
    }

    #[test]
    fn normalization_trims_trailing_whitespace() {
        assert_eq!(normalize("a  \r\nb\t\r\n\n"), "a\nb");
    }
}
