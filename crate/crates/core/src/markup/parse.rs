use thiserror::Error;

use super::{MarkupDoc, Node, PointSet, Section, SectionKind};
use crate::coordsys::{NormBox, NormPoint, NORM_MAX};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("byte {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unclosed <{0}> tag")]
    UnclosedTag(&'static str),
    #[error("closing </{0}> without a matching opening tag")]
    UnexpectedClose(&'static str),
    #[error("<{found}> not allowed inside <{inside}>")]
    MisplacedTag { found: &'static str, inside: &'static str },
    #[error("empty <{0}> content")]
    EmptyContent(&'static str),
    #[error("section <{0}> appears more than once")]
    DuplicateSection(&'static str),
    #[error("malformed coordinate list: {0}")]
    MalformedCoordinates(&'static str),
    #[error("coordinate group has {found} values, expected {expected}")]
    WrongArity { expected: usize, found: usize },
    #[error("coordinate {0} outside [0, 999]")]
    CoordinateOutOfRange(u64),
    #[error("box corners out of order")]
    InvertedBox,
}

impl ParseError {
    fn new(offset: usize, kind: ParseErrorKind) -> Self {
        Self { offset, kind }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag {
    Ref,
    Box,
    Point,
    Pred,
    Section(SectionKind),
}

impl Tag {
    const ALL: [Tag; 7] = [
        Tag::Ref,
        Tag::Box,
        Tag::Point,
        Tag::Pred,
        Tag::Section(SectionKind::Description),
        Tag::Section(SectionKind::Reasoning),
        Tag::Section(SectionKind::Answer),
    ];

    fn name(self) -> &'static str {
        match self {
            Tag::Ref => "ref",
            Tag::Box => "box",
            Tag::Point => "point",
            Tag::Pred => "pred",
            Tag::Section(k) => k.tag_name(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Token<'a> {
    Text { start: usize, text: &'a str },
    Open { start: usize, tag: Tag },
    Close { start: usize, end: usize, tag: Tag },
}

impl Token<'_> {
    fn start(&self) -> usize {
        match *self {
            Token::Text { start, .. } | Token::Open { start, .. } | Token::Close { start, .. } => start,
        }
    }
}

fn match_tag(rest: &str) -> Option<(bool, Tag, usize)> {
    let (closing, body) = match rest.strip_prefix("</") {
        Some(b) => (true, b),
        None => (false, rest.strip_prefix('<')?),
    };
    for tag in Tag::ALL {
        let name = tag.name();
        if body.starts_with(name) && body[name.len()..].starts_with('>') {
            let len = name.len() + if closing { 3 } else { 2 };
            return Some((closing, tag, len));
        }
    }
    None
}

fn lex(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut text_start = 0;
    let mut i = 0;
    while let Some(rel) = text[i..].find('<') {
        let at = i + rel;
        match match_tag(&text[at..]) {
            Some((closing, tag, len)) => {
                if at > text_start {
                    tokens.push(Token::Text { start: text_start, text: &text[text_start..at] });
                }
                let end = at + len;
                tokens.push(if closing {
                    Token::Close { start: at, end, tag }
                } else {
                    Token::Open { start: at, tag }
                });
                text_start = end;
                i = end;
            }
            None => i = at + 1,
        }
    }
    if text_start < text.len() {
        tokens.push(Token::Text { start: text_start, text: &text[text_start..] });
    }
    tokens
}

struct Parser<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<Token<'a>> {
        self.tokens.get(self.pos).copied()
    }

    fn next(&mut self) -> Option<Token<'a>> {
        let t = self.peek();
        self.pos += 1;
        t
    }

    /// Reads `content</tag>` after the opening tag at `open_start`.
    fn inline_content(&mut self, tag: Tag, open_start: usize) -> Result<(usize, &'a str, usize), ParseError> {
        let (content_start, content) = match self.next() {
            Some(Token::Text { start, text }) => (start, text),
            Some(Token::Close { tag: t, .. }) if t == tag => {
                return Err(ParseError::new(open_start, ParseErrorKind::EmptyContent(tag.name())))
            }
            Some(Token::Open { start, tag: t, .. }) | Some(Token::Close { start, tag: t, .. }) => {
                return Err(ParseError::new(
                    start,
                    ParseErrorKind::MisplacedTag { found: t.name(), inside: tag.name() },
                ))
            }
            None => return Err(ParseError::new(open_start, ParseErrorKind::UnclosedTag(tag.name()))),
        };
        match self.next() {
            Some(Token::Close { tag: t, end, .. }) if t == tag => Ok((content_start, content, end)),
            Some(tok @ Token::Open { tag: t, .. }) | Some(tok @ Token::Close { tag: t, .. }) => {
                Err(ParseError::new(tok.start(), ParseErrorKind::MisplacedTag { found: t.name(), inside: tag.name() }))
            }
            _ => Err(ParseError::new(open_start, ParseErrorKind::UnclosedTag(tag.name()))),
        }
    }

    fn box_tag(&mut self, open_start: usize) -> Result<(Vec<NormBox>, usize), ParseError> {
        let (at, content, end) = self.inline_content(Tag::Box, open_start)?;
        let groups = parse_groups(content, at, 4)?;
        let mut boxes = Vec::with_capacity(groups.len());
        for (off, g) in groups {
            let b = NormBox::try_from([g[0], g[1], g[2], g[3]])
                .map_err(|_| ParseError::new(off, ParseErrorKind::InvertedBox))?;
            boxes.push(b);
        }
        Ok((boxes, end))
    }

    /// Collects `<box>` tags that start exactly at `end`, chaining.
    fn bound_boxes(&mut self, mut end: usize) -> Result<Vec<NormBox>, ParseError> {
        let mut boxes = Vec::new();
        while let Some(Token::Open { start, tag: Tag::Box, .. }) = self.peek() {
            if start != end {
                break;
            }
            self.pos += 1;
            let (more, e) = self.box_tag(start)?;
            boxes.extend(more);
            end = e;
        }
        Ok(boxes)
    }

    fn parse(mut self) -> Result<(Vec<Section>, Vec<Node>), ParseError> {
        let mut sections: Vec<Section> = Vec::new();
        let mut outside: Vec<Node> = Vec::new();
        let mut current: Option<(SectionKind, usize, Vec<Node>)> = None;

        while let Some(tok) = self.next() {
            let node = match tok {
                Token::Text { text, .. } => Node::Text { text: text.to_string() },
                Token::Open { start, tag: Tag::Section(kind), .. } => {
                    if let Some((open, _, _)) = &current {
                        return Err(ParseError::new(
                            start,
                            ParseErrorKind::MisplacedTag { found: kind.tag_name(), inside: open.tag_name() },
                        ));
                    }
                    if sections.iter().any(|s| s.kind == kind) {
                        return Err(ParseError::new(start, ParseErrorKind::DuplicateSection(kind.tag_name())));
                    }
                    current = Some((kind, start, Vec::new()));
                    continue;
                }
                Token::Close { start, tag: Tag::Section(kind), .. } => match current.take() {
                    Some((open, _, nodes)) if open == kind => {
                        sections.push(Section { kind, tagged: true, nodes });
                        continue;
                    }
                    _ => return Err(ParseError::new(start, ParseErrorKind::UnexpectedClose(kind.tag_name()))),
                },
                Token::Close { start, tag, .. } => {
                    return Err(ParseError::new(start, ParseErrorKind::UnexpectedClose(tag.name())))
                }
                Token::Open { start, tag: Tag::Ref, .. } => {
                    let (_, name, end) = self.inline_content(Tag::Ref, start)?;
                    let name = name.trim();
                    if name.is_empty() {
                        return Err(ParseError::new(start, ParseErrorKind::EmptyContent("ref")));
                    }
                    let boxes = self.bound_boxes(end)?;
                    Node::Ref { name: name.to_string(), boxes }
                }
                Token::Open { start, tag: Tag::Pred, .. } => {
                    let (_, pred, end) = self.inline_content(Tag::Pred, start)?;
                    let pred = pred.trim();
                    if pred.is_empty() {
                        return Err(ParseError::new(start, ParseErrorKind::EmptyContent("pred")));
                    }
                    let boxes = self.bound_boxes(end)?;
                    Node::Pred { predicate: pred.to_string(), boxes }
                }
                Token::Open { start, tag: Tag::Box, .. } => {
                    let (boxes, _) = self.box_tag(start)?;
                    Node::Boxes { boxes }
                }
                Token::Open { start, tag: Tag::Point, .. } => {
                    let (at, content, _) = self.inline_content(Tag::Point, start)?;
                    let groups = parse_groups(content, at, 2)?;
                    let points =
                        groups.into_iter().map(|(_, g)| NormPoint { x: g[0] as u16, y: g[1] as u16 }).collect();
                    Node::Points { points: PointSet(points) }
                }
            };
            match &mut current {
                Some((_, _, nodes)) => nodes.push(node),
                None => outside.push(node),
            }
        }
        if let Some((kind, start, _)) = current {
            return Err(ParseError::new(start, ParseErrorKind::UnclosedTag(kind.tag_name())));
        }
        Ok((sections, outside))
    }
}

/// Parses a grounded-markup document.
///
/// When section tags are present, content outside them is ignored. Errors
/// carry the byte offset of the offending tag or character.
pub fn parse_document(text: &str) -> Result<MarkupDoc, ParseError> {
    let (mut sections, outside) = Parser { tokens: lex(text), pos: 0 }.parse()?;
    if sections.is_empty() && !outside.is_empty() {
        sections.push(Section { kind: SectionKind::Answer, tagged: false, nodes: outside });
    }
    Ok(MarkupDoc { sections, raw: text.to_string() })
}

/// Parses `[[a, b, ...], [c, d, ...]]` where every group has `arity` values.
/// Returns each group together with the byte offset of its opening bracket.
fn parse_groups(s: &str, base: usize, arity: usize) -> Result<Vec<(usize, Vec<u32>)>, ParseError> {
    let bytes = s.as_bytes();
    let mut i = 0;
    let skip_ws = |i: &mut usize| {
        while *i < bytes.len() && bytes[*i].is_ascii_whitespace() {
            *i += 1;
        }
    };
    let err = |i: usize, what: &'static str| ParseError::new(base + i, ParseErrorKind::MalformedCoordinates(what));

    skip_ws(&mut i);
    if bytes.get(i) != Some(&b'[') {
        return Err(err(i, "expected '['"));
    }
    i += 1;
    let mut groups = Vec::new();
    loop {
        skip_ws(&mut i);
        let group_at = i;
        if bytes.get(i) != Some(&b'[') {
            return Err(err(i, "expected '[' opening a coordinate group"));
        }
        i += 1;
        let mut values = Vec::with_capacity(arity);
        loop {
            skip_ws(&mut i);
            let num_at = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i == num_at {
                return Err(err(i, "expected an unsigned integer"));
            }
            let digits = &s[num_at..i];
            let value: u64 = digits.parse().unwrap_or(u64::MAX);
            if value > u64::from(NORM_MAX) {
                return Err(ParseError::new(base + num_at, ParseErrorKind::CoordinateOutOfRange(value)));
            }
            values.push(value as u32);
            skip_ws(&mut i);
            match bytes.get(i) {
                Some(b',') => i += 1,
                Some(b']') => {
                    i += 1;
                    break;
                }
                _ => return Err(err(i, "expected ',' or ']' in coordinate group")),
            }
        }
        if values.len() != arity {
            return Err(ParseError::new(
                base + group_at,
                ParseErrorKind::WrongArity { expected: arity, found: values.len() },
            ));
        }
        groups.push((base + group_at, values));
        skip_ws(&mut i);
        match bytes.get(i) {
            Some(b',') => i += 1,
            Some(b']') => {
                i += 1;
                break;
            }
            _ => return Err(err(i, "expected ',' or ']' after coordinate group")),
        }
    }
    skip_ws(&mut i);
    if i != bytes.len() {
        return Err(err(i, "trailing characters after coordinate list"));
    }
    Ok(groups)
}
