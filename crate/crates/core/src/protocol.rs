//! The tagged output protocol spoken between the policy model and the
//! runtime: `<think>`, `<search>`, `<answer>` and `<information>` blocks, with
//! multiple search queries separated by `##`.
//!
//! The grammar is flat. A block opens with a lowercase tag, closes with the
//! matching closing tag, and may not contain any other protocol tag. Text
//! between blocks is kept as [`SegmentKind::Raw`] when it is not blank.

use crate::model::{Question, QueryBundle, RolloutConfig, Segment, SegmentKind, Summary};

/// Separator between query variants inside a `<search>` block.
pub const QUERY_SEPARATOR: &str = "##";

pub const SEARCH_CLOSE: &str = "</search>";
pub const ANSWER_CLOSE: &str = "</answer>";

/// Stop sequences for policy generation.
pub const POLICY_STOP_SEQUENCES: [&str; 2] = [SEARCH_CLOSE, ANSWER_CLOSE];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    Think,
    Search,
    Answer,
    Information,
}

impl Tag {
    const ALL: [Tag; 4] = [Tag::Think, Tag::Search, Tag::Answer, Tag::Information];

    pub fn name(self) -> &'static str {
        match self {
            Tag::Think => "think",
            Tag::Search => "search",
            Tag::Answer => "answer",
            Tag::Information => "information",
        }
    }

    pub fn open(self) -> &'static str {
        match self {
            Tag::Think => "<think>",
            Tag::Search => "<search>",
            Tag::Answer => "<answer>",
            Tag::Information => "<information>",
        }
    }

    pub fn close(self) -> &'static str {
        match self {
            Tag::Think => "</think>",
            Tag::Search => "</search>",
            Tag::Answer => "</answer>",
            Tag::Information => "</information>",
        }
    }

    pub fn kind(self) -> SegmentKind {
        match self {
            Tag::Think => SegmentKind::Think,
            Tag::Search => SegmentKind::Search,
            Tag::Answer => SegmentKind::Answer,
            Tag::Information => SegmentKind::Information,
        }
    }

    pub fn for_kind(kind: SegmentKind) -> Option<Tag> {
        match kind {
            SegmentKind::Think => Some(Tag::Think),
            SegmentKind::Search => Some(Tag::Search),
            SegmentKind::Answer => Some(Tag::Answer),
            SegmentKind::Information => Some(Tag::Information),
            SegmentKind::RethinkNotice | SegmentKind::Raw => None,
        }
    }

    fn is_terminal(self) -> bool {
        matches!(self, Tag::Search | Tag::Answer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Token {
    tag: Tag,
    closing: bool,
    at: usize,
    len: usize,
}

fn next_token(text: &str, from: usize) -> Option<Token> {
    let mut pos = from;
    while let Some(off) = text[pos..].find('<') {
        let at = pos + off;
        let rest = &text[at..];
        for tag in Tag::ALL {
            if rest.starts_with(tag.open()) {
                return Some(Token { tag, closing: false, at, len: tag.open().len() });
            }
            if rest.starts_with(tag.close()) {
                return Some(Token { tag, closing: true, at, len: tag.close().len() });
            }
        }
        pos = at + 1;
    }
    None
}

/// What the policy asked the runtime to do in one generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedAction {
    Search(QueryBundle),
    Answer(String),
    Malformed(String),
}

impl ParsedAction {
    pub fn is_malformed(&self) -> bool {
        matches!(self, ParsedAction::Malformed(_))
    }
}

/// Result of scanning one policy generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scan {
    pub segments: Vec<Segment>,
    pub action: ParsedAction,
    /// Byte length of the prefix of the generation that was kept. Text after
    /// the first terminal tag is discarded.
    pub consumed: usize,
}

struct Lexer<'a> {
    text: &'a str,
    pos: usize,
    turn: u32,
}

enum Step<'a> {
    Block { tag: Tag, body: &'a str },
    Raw(&'a str),
    Error { at: usize, reason: String },
    End,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str, turn: u32) -> Self {
        Self { text, pos: 0, turn }
    }

    fn step(&mut self) -> Step<'a> {
        let text = self.text;
        if self.pos >= text.len() {
            return Step::End;
        }
        let Some(open) = next_token(text, self.pos) else {
            let raw = &text[self.pos..];
            self.pos = text.len();
            return Step::Raw(raw);
        };
        if open.at > self.pos {
            let raw = &text[self.pos..open.at];
            self.pos = open.at;
            return Step::Raw(raw);
        }
        if open.closing {
            return Step::Error {
                at: open.at,
                reason: format!("unexpected closing tag {}", open.tag.close()),
            };
        }
        let body_start = open.at + open.len;
        match next_token(text, body_start) {
            None => Step::Error {
                at: open.at,
                reason: format!("unclosed {} tag", open.tag.open()),
            },
            Some(close) if close.closing && close.tag == open.tag => {
                self.pos = close.at + close.len;
                Step::Block { tag: open.tag, body: &text[body_start..close.at] }
            }
            Some(other) => Step::Error {
                at: open.at,
                reason: format!(
                    "nested or interleaved tag {} inside {}",
                    if other.closing { other.tag.close() } else { other.tag.open() },
                    open.tag.open()
                ),
            },
        }
    }

    fn raw_segment(&self, raw: &str) -> Option<Segment> {
        (!raw.trim().is_empty()).then(|| Segment::new(SegmentKind::Raw, raw, self.turn))
    }
}

/// Parses a whole rollout text into segments without any stop semantics.
///
/// On a grammar error the well-formed prefix is returned together with the
/// remainder as a single raw segment and the error reason.
pub fn scan_segments(text: &str, turn: u32) -> (Vec<Segment>, Option<String>) {
    let mut lexer = Lexer::new(text, turn);
    let mut segments = Vec::new();
    loop {
        match lexer.step() {
            Step::End => return (segments, None),
            Step::Raw(raw) => segments.extend(lexer.raw_segment(raw)),
            Step::Block { tag, body } => segments.push(Segment::new(tag.kind(), body, turn)),
            Step::Error { at, reason } => {
                segments.extend(lexer.raw_segment(&text[at..]));
                return (segments, Some(reason));
            }
        }
    }
}

/// Parses one policy generation and decides the action it requests.
///
/// Scanning stops at the first closed `<search>` or `<answer>` block; any
/// trailing text is dropped. A generation without a terminal block, with an
/// unclosed or nested tag, or with an empty search body is malformed.
pub fn scan_generation(raw: &str, turn: u32) -> Scan {
    let mut lexer = Lexer::new(raw, turn);
    let mut segments = Vec::new();
    loop {
        match lexer.step() {
            Step::End => {
                return Scan {
                    segments,
                    action: ParsedAction::Malformed("no terminal action tag".into()),
                    consumed: raw.len(),
                }
            }
            Step::Raw(text) => segments.extend(lexer.raw_segment(text)),
            Step::Error { at, reason } => {
                segments.extend(lexer.raw_segment(&raw[at..]));
                return Scan {
                    segments,
                    action: ParsedAction::Malformed(reason),
                    consumed: raw.len(),
                };
            }
            Step::Block { tag, body } => {
                segments.push(Segment::new(tag.kind(), body, turn));
                if !tag.is_terminal() {
                    continue;
                }
                let consumed = lexer.pos;
                if !raw[consumed..].trim().is_empty() {
                    tracing::warn!(
                        turn,
                        discarded = raw.len() - consumed,
                        "text after the first terminal tag discarded"
                    );
                }
                let action = match tag {
                    Tag::Search => match split_queries(body, turn) {
                        Some(bundle) => ParsedAction::Search(bundle),
                        None => ParsedAction::Malformed("empty query bundle".into()),
                    },
                    _ => ParsedAction::Answer(body.trim().to_string()),
                };
                return Scan { segments, action, consumed };
            }
        }
    }
}

/// Splits a search body on `##`, trimming each query and dropping empty ones.
pub fn split_queries(body: &str, turn: u32) -> Option<QueryBundle> {
    QueryBundle::from_queries(body.split(QUERY_SEPARATOR), turn)
}

pub fn render_segment(segment: &Segment) -> String {
    match Tag::for_kind(segment.kind) {
        Some(tag) => format!("{}{}{}", tag.open(), segment.content, tag.close()),
        None => segment.content.clone(),
    }
}

pub fn render_segments(segments: &[Segment]) -> String {
    segments.iter().map(render_segment).collect()
}

pub fn render_information(summary: &Summary) -> String {
    format!("{}{}{}", Tag::Information.open(), summary.text, Tag::Information.close())
}

/// Renders the policy instruction for `question`, asking for
/// `cfg.n_expansions` query variants per search.
pub fn render_prompt(question: &Question, cfg: &RolloutConfig) -> String {
    format!(
        "Answer the given question. \
You must conduct reasoning inside <think> and </think> first every time you get new information. \
After reasoning, if you find you lack some knowledge, you can call a search engine by <search> query </search>, \
and it will return the searched results between <information> and </information>. \
Within <search> </search>, generate {n} diverse query variants — such as paraphrases, decomposed sub-questions, \
keyword expansions to facilitate retrieval for more relevant knowledge. \
Separate multiple queries with ## so they can be run in parallel.\n\
Example format: <search> query_1 ## query_2 ## ... ## query_n </search>\n\
You can search as many times as you want. \
If you find no further external knowledge needed, you can directly provide the answer inside <answer> and </answer> \
without detailed illustrations. For example, <answer> abc </answer>. Question: {question}.\n",
        n = cfg.n_expansions,
        question = question.text,
    )
}

/// Recovers the requested variant count from a rendered prompt.
pub fn requested_variants(prompt: &str) -> Option<u32> {
    let key = "Within <search> </search>, generate ";
    let start = prompt.find(key)? + key.len();
    let digits: String = prompt[start..].chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok()
}
