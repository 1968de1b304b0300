//! Data files bundled into the crate.

pub const CORPUS: &str = include_str!("../data/corpus.json");
pub const STOPLIST: &str = include_str!("../data/stoplist.txt");
pub const POSITIVE: &str = include_str!("../data/positive.txt");
pub const NEGATIVE: &str = include_str!("../data/negative.txt");
pub const NEGATION: &str = include_str!("../data/negation.txt");
pub const CONCEPTS: &str = include_str!("../data/concepts.json");
pub const TEMPLATES: &str = include_str!("../data/templates.json");
pub const LEXICON_AUTOMATION: &str = include_str!("../data/lexicon_automation.txt");
pub const LEXICON_ECOMMERCE: &str = include_str!("../data/lexicon_e-commerce.txt");
pub const LEXICON_HUMAN: &str = include_str!("../data/lexicon_human.txt");

/// One entry per non-blank line; `#` starts a comment.
pub fn parse_word_list(text: &str) -> Vec<String> {
    text.lines()
        .map(|line| line.split('#').next().unwrap_or("").trim())
        .filter(|line| !line.is_empty())
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_list_skips_comments_and_blanks() {
        let words = parse_word_list("# header\nfoo\n\n  bar  # trailing\n#baz\n");
        assert_eq!(words, ["foo", "bar"]);
    }
}
