//! Keyword chains: one caption per image, then `J` parallel
//! foreground → background question chains, each built from a variant of
//! the task prompt. Answers are reduced to short keywords.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::{CaptionQaBackend, ImageRef, QaQuery, QaTurn, QueryKind};
use crate::error::{Error, Result};

const DEFAULT_TEMPLATES: &str = include_str!("../templates/chain_questions.v1.txt");

/// Keyword used when a background answer cannot be parsed.
pub const BACKGROUND_FALLBACK: &str = "background";

/// Versioned question templates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplates {
    pub version: u32,
    pub caption: String,
    pub fore: String,
    pub back: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::parse(DEFAULT_TEMPLATES).expect("bundled templates parse")
    }
}

impl PromptTemplates {
    /// Parses `id: text` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut version = None;
        let (mut caption, mut fore, mut back) = (None, None, None);
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| Error::Format(format!("template line {}: expected `id: text`", n + 1)))?;
            let value = value.trim().to_string();
            match key.trim() {
                "version" => {
                    version = Some(value.parse::<u32>().map_err(|_| {
                        Error::Format(format!("template line {}: bad version `{value}`", n + 1))
                    })?)
                }
                "caption" => caption = Some(value),
                "fore" => fore = Some(value),
                "back" => back = Some(value),
                other => return Err(Error::Format(format!("unknown template id `{other}`"))),
            }
        }
        let version = version.ok_or_else(|| Error::Format("templates missing `version`".into()))?;
        if version != 1 {
            return Err(Error::Format(format!("unsupported template version {version}")));
        }
        let fore = fore.ok_or_else(|| Error::Format("templates missing `fore`".into()))?;
        let back = back.ok_or_else(|| Error::Format("templates missing `back`".into()))?;
        if !fore.contains("{variant}") || !back.contains("{fore}") {
            return Err(Error::Format("templates must use {variant} and {fore}".into()));
        }
        Ok(Self {
            version,
            caption: caption.unwrap_or_default(),
            fore,
            back,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn fore_question(&self, variant: &str) -> String {
        self.fore.replace("{variant}", variant)
    }

    pub fn back_question(&self, fore_keyword: &str) -> String {
        self.back.replace("{fore}", fore_keyword)
    }
}

/// The generic task description plus synonyms, one chain per phrase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPrompt {
    pub text: String,
    pub synonyms: Vec<String>,
}

impl TaskPrompt {
    pub fn new(text: impl Into<String>, synonyms: Vec<String>) -> Result<Self> {
        let text = text.into();
        if normalize_phrase(&text).is_empty() {
            return Err(Error::Config("task prompt must be non-empty".into()));
        }
        Ok(Self { text, synonyms })
    }

    /// Number of chains `J = 1 + |synonyms|`.
    pub fn chains(&self) -> usize {
        1 + self.synonyms.len()
    }

    /// Keeps the first `chains - 1` synonyms.
    pub fn with_chains(&self, chains: usize) -> Result<Self> {
        if chains == 0 || chains > self.chains() {
            return Err(Error::Config(format!(
                "{chains} chains requested but the prompt provides {} (task + {} synonyms)",
                self.chains(),
                self.synonyms.len()
            )));
        }
        Ok(Self {
            text: self.text.clone(),
            synonyms: self.synonyms[..chains - 1].to_vec(),
        })
    }

    /// Phrase per chain: synonyms first, the task text last.
    pub fn variants(&self) -> Vec<String> {
        self.synonyms
            .iter()
            .chain(std::iter::once(&self.text))
            .map(|s| normalize_phrase(s))
            .collect()
    }

    /// Last word of the task text, used as the fallback foreground keyword.
    pub fn head_noun(&self) -> String {
        normalize_phrase(&self.text)
            .split_whitespace()
            .last()
            .unwrap_or_default()
            .to_string()
    }
}

/// Lowercases, drops a leading article, trims punctuation and collapses spaces.
fn normalize_phrase(s: &str) -> String {
    let lower = s.to_lowercase();
    let words: Vec<&str> = lower
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .collect();
    let start = match words.first() {
        Some(&"a" | &"an" | &"the") if words.len() > 1 => 1,
        _ => 0,
    };
    words[start..].join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainQuestions {
    pub chain_index: usize,
    pub variant: String,
    pub fore_question: String,
}

pub fn build_chains(prompt: &TaskPrompt, templates: &PromptTemplates) -> Vec<ChainQuestions> {
    prompt
        .variants()
        .into_iter()
        .enumerate()
        .map(|(i, variant)| ChainQuestions {
            chain_index: i + 1,
            fore_question: templates.fore_question(&variant),
            variant,
        })
        .collect()
}

const HEDGES: [&str; 16] = [
    "i think", "i believe", "i guess", "it looks like", "it is", "it's", "this is", "that is",
    "there is", "the answer is", "answer", "maybe", "probably", "perhaps", "possibly", "likely",
];

/// Phrases that mark an answer as carrying no keyword at all.
const NON_ANSWERS: [&str; 9] = [
    "not sure", "no idea", "don't know", "do not know", "unknown", "unsure", "cannot tell", "can't tell",
    "nothing",
];

/// Reduces a free-form answer to a lowercase keyword.
///
/// Keeps the first sentence and the first comma clause, drops hedging
/// prefixes ("i think", "it is", ...) and leading articles, trims
/// surrounding punctuation and collapses whitespace.
pub fn parse_keyword(raw_answer: &str) -> Result<String> {
    let lower = raw_answer.to_lowercase();
    let first_line = lower.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let mut sentence = first_line;
    for (i, ch) in first_line.char_indices() {
        let ends = match ch {
            '!' | '?' | ';' | ',' => true,
            '.' => first_line[i + 1..].chars().next().is_none_or(char::is_whitespace),
            _ => false,
        };
        if ends {
            sentence = &first_line[..i];
            break;
        }
    }
    let mut words: Vec<&str> = sentence
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .collect();
    'strip: loop {
        for hedge in HEDGES {
            let hw: Vec<&str> = hedge.split(' ').collect();
            if words.len() > hw.len() && words[..hw.len()] == hw[..] {
                words.drain(..hw.len());
                continue 'strip;
            }
        }
        match words.first() {
            Some(&"a" | &"an" | &"the") if words.len() > 1 => {
                words.remove(0);
            }
            _ => break,
        }
    }
    let keyword = words.join(" ");
    let padded = format!(" {keyword} ");
    if keyword.is_empty() || NON_ANSWERS.iter().any(|p| padded.contains(&format!(" {p} "))) {
        Err(Error::Unparseable(raw_answer.to_string()))
    } else {
        Ok(keyword)
    }
}

/// Full record of one chain's exchange with the backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainTranscript {
    pub chain_index: usize,
    pub caption: String,
    pub fore_question: String,
    pub fore_answer: String,
    pub fore_keyword: String,
    pub back_question: String,
    pub back_answer: String,
    pub back_keyword: String,
    /// True when a keyword came from the fallback rule.
    pub fore_fallback: bool,
    pub back_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KeywordBundle {
    pub fore_keywords: Vec<String>,
    pub back_keywords: Vec<String>,
}

impl KeywordBundle {
    pub fn chains(&self) -> usize {
        self.fore_keywords.len()
    }
}

fn keyword_or(raw: &str, fallback: &str, what: &str) -> (String, bool) {
    match parse_keyword(raw) {
        Ok(k) => (k, false),
        Err(_) => {
            log::warn!("unparseable {what} answer {raw:?}; using `{fallback}`");
            (fallback.to_string(), true)
        }
    }
}

fn run_chain(
    image: ImageRef<'_>,
    caption: &str,
    chain: &ChainQuestions,
    prompt: &TaskPrompt,
    qa: &dyn CaptionQaBackend,
    templates: &PromptTemplates,
) -> Result<ChainTranscript> {
    let j = chain.chain_index;
    let fore_query = QaQuery {
        kind: QueryKind::Foreground(j),
        caption: Some(caption.to_string()),
        history: Vec::new(),
        question: chain.fore_question.clone(),
    };
    let fore_answer = qa.ask(image, &fore_query)?;
    let (fore_keyword, fore_fallback) = keyword_or(&fore_answer, &prompt.head_noun(), "foreground");

    let back_question = templates.back_question(&fore_keyword);
    let back_query = QaQuery {
        kind: QueryKind::Background(j),
        caption: Some(caption.to_string()),
        history: vec![QaTurn {
            question: chain.fore_question.clone(),
            answer: fore_answer.clone(),
        }],
        question: back_question.clone(),
    };
    let back_answer = qa.ask(image, &back_query)?;
    let (back_keyword, back_fallback) = keyword_or(&back_answer, BACKGROUND_FALLBACK, "background");

    Ok(ChainTranscript {
        chain_index: j,
        caption: caption.to_string(),
        fore_question: chain.fore_question.clone(),
        fore_answer,
        fore_keyword,
        back_question,
        back_answer,
        back_keyword,
        fore_fallback,
        back_fallback,
    })
}

/// Caption once, then every chain (concurrently when the backend allows it).
/// Issues exactly `1 + 2J` backend queries on success.
pub fn run_cctp(
    image: ImageRef<'_>,
    prompt: &TaskPrompt,
    qa: &dyn CaptionQaBackend,
    templates: &PromptTemplates,
) -> Result<(KeywordBundle, Vec<ChainTranscript>)> {
    let caption = qa.ask(
        image,
        &QaQuery {
            kind: QueryKind::Caption,
            caption: None,
            history: Vec::new(),
            question: templates.caption.clone(),
        },
    )?;
    let chains = build_chains(prompt, templates);

    let results: Vec<Result<ChainTranscript>> = if qa.capabilities().concurrent_safe && chains.len() > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> = chains
                .iter()
                .map(|c| s.spawn(|| run_chain(image, &caption, c, prompt, qa, templates)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("chain worker panicked"))
                .collect()
        })
    } else {
        chains
            .iter()
            .map(|c| run_chain(image, &caption, c, prompt, qa, templates))
            .collect()
    };

    let transcripts = results.into_iter().collect::<Result<Vec<_>>>()?;
    let bundle = KeywordBundle {
        fore_keywords: transcripts.iter().map(|t| t.fore_keyword.clone()).collect(),
        back_keywords: transcripts.iter().map(|t| t.back_keyword.clone()).collect(),
    };
    Ok((bundle, transcripts))
}

#[derive(Serialize)]
struct TranscriptLine<'a> {
    image_id: &'a str,
    #[serde(flatten)]
    chain: &'a ChainTranscript,
}

/// Appends one JSON object per chain.
pub fn write_transcripts(mut out: impl Write, image_id: &str, transcripts: &[ChainTranscript]) -> Result<()> {
    for chain in transcripts {
        serde_json::to_writer(&mut out, &TranscriptLine { image_id, chain })?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_keyword_examples() {
        assert_eq!(parse_keyword("Grasshopper.").unwrap(), "grasshopper");
        assert_eq!(parse_keyword("  A hidden LIZARD ").unwrap(), "hidden lizard");
        assert_eq!(parse_keyword("I think it is a crab, maybe.").unwrap(), "crab");
        assert_eq!(parse_keyword("a green grasshopper.").unwrap(), "green grasshopper");
        assert_eq!(parse_keyword("Frog! Definitely a frog.").unwrap(), "frog");
        assert_eq!(parse_keyword("sand\nwith pebbles").unwrap(), "sand");
    }

    #[test]
    fn parse_keyword_rejects_empty() {
        assert!(matches!(parse_keyword("  ...  "), Err(Error::Unparseable(_))));
        assert!(parse_keyword("").is_err());
        assert!(parse_keyword("I'm not sure.").is_err());
        assert!(parse_keyword("No idea").is_err());
        assert_eq!(parse_keyword("It is probably a toad, hiding").unwrap(), "toad");
    }

    #[test]
    fn single_article_word_is_kept() {
        assert_eq!(parse_keyword("The.").unwrap(), "the");
    }

    #[test]
    fn chains_follow_templates() {
        let p = TaskPrompt::new(
            "the camouflaged animal",
            vec!["hidden animal".into(), "concealed animal".into()],
        )
        .unwrap();
        let t = PromptTemplates::default();
        let qs: Vec<String> = build_chains(&p, &t).into_iter().map(|c| c.fore_question).collect();
        assert_eq!(
            qs,
            [
                "Name of the hidden animal in one word.",
                "Name of the concealed animal in one word.",
                "Name of the camouflaged animal in one word.",
            ]
        );
        assert_eq!(t.back_question("grasshopper"), "Name of the background of the grasshopper in one word.");
    }

    #[test]
    fn single_chain_prompts() {
        let t = PromptTemplates::default();
        let p = TaskPrompt::new("Polyp", vec![]).unwrap();
        let c = build_chains(&p, &t);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].fore_question, "Name of the polyp in one word.");
        assert_eq!(p.head_noun(), "polyp");
    }

    #[test]
    fn with_chains_truncates_synonyms() {
        let p = TaskPrompt::new("the camouflaged animal", vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(p.with_chains(2).unwrap().synonyms, vec!["a".to_string()]);
        assert!(p.with_chains(4).is_err());
        assert!(p.with_chains(0).is_err());
        assert_eq!(p.head_noun(), "animal");
    }

    #[test]
    fn empty_prompt_rejected() {
        assert!(TaskPrompt::new("  ", vec![]).is_err());
    }

    #[test]
    fn template_parse_errors() {
        assert!(PromptTemplates::parse("fore: x {variant}\nback: {fore}").is_err());
        assert!(PromptTemplates::parse("version: 2\nfore: {variant}\nback: {fore}").is_err());
        assert!(PromptTemplates::parse("version: 1\nfore: no placeholder\nback: {fore}").is_err());
        assert!(PromptTemplates::parse("version: 1\nbogus: x").is_err());
        let t = PromptTemplates::parse("version: 1\nfore: Q {variant}?\nback: B {fore}?").unwrap();
        assert_eq!(t.caption, "");
    }
}
