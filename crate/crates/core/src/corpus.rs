//! Data model for videos, channels, textbook questions and labeled video
//! questions, with validation. Parsing from files lives in the `eduqa` crate.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoDoc {
    pub video_id: String,
    pub channel_id: String,
    pub transcript: String,
    /// One caption per sampled minute, in frame order.
    pub captions: Vec<String>,
    pub duration_min: u32,
    pub views: u64,
}

impl VideoDoc {
    /// All captions joined in frame order, each closed as a sentence.
    pub fn caption_text(&self) -> String {
        join_sentences(self.captions.iter().map(String::as_str))
    }

    /// Transcript followed by the joined captions.
    pub fn joint_text(&self) -> String {
        if self.captions.is_empty() {
            return self.transcript.clone();
        }
        join_sentences(core::iter::once(self.transcript.as_str()).chain(self.captions.iter().map(String::as_str)))
    }

    pub fn text(&self, measure: Measure) -> String {
        match measure {
            Measure::Transcript => self.transcript.clone(),
            Measure::Caption => self.caption_text(),
            Measure::Joint => self.joint_text(),
        }
    }
}

/// Joins non-empty parts with spaces, adding a full stop to every part
/// but the last that does not already end a sentence.
pub fn join_sentences<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for p in parts.into_iter().map(str::trim).filter(|p| !p.is_empty()) {
        if !out.is_empty() {
            if !out.ends_with(['.', '!', '?']) {
                out.push('.');
            }
            out.push(' ');
        }
        out.push_str(p);
    }
    out
}

/// Which part of a video is used as retrieval field or reading context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Measure {
    Transcript,
    Caption,
    Joint,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::Transcript, Measure::Caption, Measure::Joint];

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Transcript => "transcript",
            Measure::Caption => "caption",
            Measure::Joint => "joint",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transcript" => Ok(Measure::Transcript),
            "caption" => Ok(Measure::Caption),
            "joint" => Ok(Measure::Joint),
            other => Err(Error::invalid(
                "measure",
                format!("`{other}` (expected transcript, caption or joint)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Channel {
    pub channel_id: String,
    pub name: String,
    pub total_views: u64,
    pub subscriber_count: u64,
    pub video_ids: BTreeSet<String>,
}

impl Channel {
    /// Number of videos posted by the channel.
    pub fn n_videos(&self) -> usize {
        self.video_ids.len()
    }
}

/// Non-fatal validation finding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Warning {
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

/// Per-video channel metadata that is not part of [`VideoDoc`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChannelMeta {
    pub name: String,
    pub subscriber_count: u64,
}

/// Validated, immutable video corpus. Videos are kept sorted by id so that
/// every derived structure is independent of ingestion order.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    videos: Vec<VideoDoc>,
    index: BTreeMap<String, usize>,
    channels: BTreeMap<String, Channel>,
}

impl Corpus {
    /// Validates `videos` and derives channels. `meta` supplies channel
    /// metadata per video (same order as `videos`); missing entries default.
    pub fn new(videos: Vec<VideoDoc>, meta: Vec<ChannelMeta>) -> Result<(Corpus, Vec<Warning>)> {
        let mut warnings = Vec::new();
        let mut paired: Vec<(VideoDoc, ChannelMeta)> = videos
            .into_iter()
            .zip(meta.into_iter().map(Some).chain(core::iter::repeat(None)))
            .map(|(v, m)| (v, m.unwrap_or_default()))
            .collect();
        paired.sort_by(|a, b| a.0.video_id.cmp(&b.0.video_id));

        let mut index = BTreeMap::new();
        let mut channels: BTreeMap<String, Channel> = BTreeMap::new();
        for (i, (v, m)) in paired.iter().enumerate() {
            validate_video(v, &mut warnings)?;
            if index.insert(v.video_id.clone(), i).is_some() {
                return Err(Error::DuplicateId {
                    kind: "video",
                    id: v.video_id.clone(),
                });
            }
            let ch = channels.entry(v.channel_id.clone()).or_insert_with(|| Channel {
                channel_id: v.channel_id.clone(),
                name: m.name.clone(),
                total_views: 0,
                subscriber_count: m.subscriber_count,
                video_ids: BTreeSet::new(),
            });
            if ch.name != m.name {
                warnings.push(Warning {
                    subject: v.video_id.clone(),
                    message: format!(
                        "channel `{}` name `{}` differs from `{}`; keeping the first",
                        v.channel_id, m.name, ch.name
                    ),
                });
            }
            ch.subscriber_count = ch.subscriber_count.max(m.subscriber_count);
            ch.total_views = ch.total_views.saturating_add(v.views);
            ch.video_ids.insert(v.video_id.clone());
        }
        let videos = paired.into_iter().map(|(v, _)| v).collect();
        Ok((
            Corpus {
                videos,
                index,
                channels,
            },
            warnings,
        ))
    }

    pub fn videos(&self) -> &[VideoDoc] {
        &self.videos
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn get(&self, video_id: &str) -> Option<&VideoDoc> {
        self.index.get(video_id).map(|&i| &self.videos[i])
    }

    pub fn position(&self, video_id: &str) -> Option<usize> {
        self.index.get(video_id).copied()
    }

    pub fn channels(&self) -> impl Iterator<Item = &Channel> {
        self.channels.values()
    }

    pub fn channel(&self, channel_id: &str) -> Option<&Channel> {
        self.channels.get(channel_id)
    }
}

fn validate_video(v: &VideoDoc, warnings: &mut Vec<Warning>) -> Result<()> {
    if v.video_id.trim().is_empty() {
        return Err(Error::invalid("video", "empty video_id"));
    }
    if v.channel_id.trim().is_empty() {
        return Err(Error::invalid(
            "video",
            format!("`{}` has an empty channel_id", v.video_id),
        ));
    }
    if v.transcript.trim().is_empty() {
        return Err(Error::invalid(
            "video",
            format!("`{}` has an empty transcript", v.video_id),
        ));
    }
    if !v.captions.is_empty() && v.duration_min > 0 && v.captions.len() != v.duration_min as usize {
        warnings.push(Warning {
            subject: v.video_id.clone(),
            message: format!("{} captions for a {}-minute video", v.captions.len(), v.duration_min),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TqaQuestion {
    pub question_id: String,
    pub topic_id: String,
    pub text: String,
    pub choices: Vec<String>,
    pub correct_index: usize,
}

impl TqaQuestion {
    pub fn gold(&self) -> &str {
        &self.choices[self.correct_index]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.choices.len();
        if !(2..=4).contains(&n) {
            return Err(Error::invalid(
                "question",
                format!("`{}` has {n} choices (expected 2 to 4)", self.question_id),
            ));
        }
        if self.correct_index >= n {
            return Err(Error::invalid(
                "question",
                format!(
                    "`{}` correct_index {} out of range for {n} choices",
                    self.question_id, self.correct_index
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TqaTopic {
    pub topic_id: String,
    pub lesson_id: String,
    pub title: String,
    /// Background passage; also the retrieval query.
    pub context: String,
    pub question_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TqaLesson {
    pub lesson_id: String,
    pub title: String,
    pub topic_ids: Vec<String>,
}

/// Lesson → topic → question tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TqaSet {
    lessons: Vec<TqaLesson>,
    topics: Vec<TqaTopic>,
    questions: Vec<TqaQuestion>,
    topic_index: BTreeMap<String, usize>,
    question_index: BTreeMap<String, usize>,
}

impl TqaSet {
    pub fn new(lessons: Vec<TqaLesson>, topics: Vec<TqaTopic>, questions: Vec<TqaQuestion>) -> Result<Self> {
        let mut lesson_ids = BTreeSet::new();
        for l in &lessons {
            if !lesson_ids.insert(l.lesson_id.as_str()) {
                return Err(Error::DuplicateId {
                    kind: "lesson",
                    id: l.lesson_id.clone(),
                });
            }
        }
        let mut topic_index = BTreeMap::new();
        for (i, t) in topics.iter().enumerate() {
            if topic_index.insert(t.topic_id.clone(), i).is_some() {
                return Err(Error::DuplicateId {
                    kind: "topic",
                    id: t.topic_id.clone(),
                });
            }
            if !lesson_ids.contains(t.lesson_id.as_str()) {
                return Err(Error::UnknownId {
                    kind: "lesson",
                    id: t.lesson_id.clone(),
                });
            }
        }
        // Each topic hangs under exactly one lesson: the tree stays acyclic.
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for l in &lessons {
            for tid in &l.topic_ids {
                let t = topic_index
                    .get(tid)
                    .map(|&i| &topics[i])
                    .ok_or_else(|| Error::UnknownId {
                        kind: "topic",
                        id: tid.clone(),
                    })?;
                if t.lesson_id != l.lesson_id || owner.insert(tid, &l.lesson_id).is_some() {
                    return Err(Error::invalid(
                        "lesson tree",
                        format!("topic `{tid}` is attached to more than one lesson"),
                    ));
                }
            }
        }
        let mut question_index = BTreeMap::new();
        for (i, q) in questions.iter().enumerate() {
            q.validate()?;
            if question_index.insert(q.question_id.clone(), i).is_some() {
                return Err(Error::DuplicateId {
                    kind: "question",
                    id: q.question_id.clone(),
                });
            }
            if !topic_index.contains_key(&q.topic_id) {
                return Err(Error::UnknownId {
                    kind: "topic",
                    id: q.topic_id.clone(),
                });
            }
        }
        for t in &topics {
            for qid in &t.question_ids {
                match question_index.get(qid) {
                    Some(&i) if questions[i].topic_id == t.topic_id => {}
                    Some(_) => {
                        return Err(Error::invalid(
                            "topic",
                            format!("`{}` lists question `{qid}` that belongs elsewhere", t.topic_id),
                        ))
                    }
                    None => {
                        return Err(Error::UnknownId {
                            kind: "question",
                            id: qid.clone(),
                        })
                    }
                }
            }
        }
        Ok(TqaSet {
            lessons,
            topics,
            questions,
            topic_index,
            question_index,
        })
    }

    pub fn lessons(&self) -> &[TqaLesson] {
        &self.lessons
    }

    pub fn topics(&self) -> &[TqaTopic] {
        &self.topics
    }

    pub fn questions(&self) -> &[TqaQuestion] {
        &self.questions
    }

    pub fn topic(&self, topic_id: &str) -> Option<&TqaTopic> {
        self.topic_index.get(topic_id).map(|&i| &self.topics[i])
    }

    pub fn question(&self, question_id: &str) -> Option<&TqaQuestion> {
        self.question_index.get(question_id).map(|&i| &self.questions[i])
    }

    /// Questions of a topic, in the topic's listed order.
    pub fn topic_questions<'a>(&'a self, topic: &'a TqaTopic) -> impl Iterator<Item = &'a TqaQuestion> + 'a {
        topic.question_ids.iter().filter_map(move |q| self.question(q))
    }

    /// `(lesson_id, question count)` in lesson order.
    pub fn question_counts(&self) -> Vec<(String, usize)> {
        self.lessons
            .iter()
            .map(|l| {
                let n = l
                    .topic_ids
                    .iter()
                    .filter_map(|t| self.topic(t))
                    .map(|t| t.question_ids.len())
                    .sum();
                (l.lesson_id.clone(), n)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum QuestionType {
    Simple,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Modality {
    Visual,
    Language,
    Both,
}

macro_rules! closed_enum {
    ($ty:ty, $what:literal, $($name:literal => $variant:expr),+) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(Error::invalid($what, format!("`{other}` is not one of {}", [$($name),+].join(", ")))),
                }
            }
        }

        impl $ty {
            pub fn as_str(self) -> &'static str {
                $(if self == $variant { return $name; })+
                unreachable!()
            }
        }
    };
}

closed_enum!(QuestionType, "qtype", "simple" => QuestionType::Simple, "complex" => QuestionType::Complex);
closed_enum!(Modality, "modality", "visual" => Modality::Visual, "language" => Modality::Language, "both" => Modality::Both);

/// A labeled question about a video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CvqaRecord {
    pub video_id: String,
    pub time_s: u32,
    pub question: String,
    pub answer: String,
    pub qtype: QuestionType,
    pub modality: Modality,
    pub quality_rating: u8,
}

impl CvqaRecord {
    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.quality_rating) {
            return Err(Error::invalid(
                "quality_rating",
                format!("{} is outside 1..=5", self.quality_rating),
            ));
        }
        if self.question.trim().is_empty() {
            return Err(Error::invalid("cvqa record", "empty question"));
        }
        Ok(())
    }
}

/// Parses an `MM:SS` timestamp into seconds. Minutes may exceed 59.
pub fn parse_timestamp(s: &str) -> Result<u32> {
    let bad = || Error::invalid("timestamp", format!("`{s}` is not MM:SS"));
    let (m, sec) = s.split_once(':').ok_or_else(bad)?;
    let digits = |x: &str| !x.is_empty() && x.bytes().all(|b| b.is_ascii_digit());
    if !digits(m) || sec.len() != 2 || !digits(sec) {
        return Err(bad());
    }
    let m: u32 = m.parse().map_err(|_| bad())?;
    let sec: u32 = sec.parse().map_err(|_| bad())?;
    if sec >= 60 {
        return Err(bad());
    }
    m.checked_mul(60).and_then(|x| x.checked_add(sec)).ok_or_else(bad)
}

pub fn format_timestamp(seconds: u32) -> String {
    format!("{:02}:{:02}", seconds / 60, seconds % 60)
}

/// Per-type counts.
pub fn count_by_type(records: &[CvqaRecord]) -> BTreeMap<QuestionType, usize> {
    let mut out = BTreeMap::new();
    for r in records {
        *out.entry(r.qtype).or_insert(0) += 1;
    }
    out
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
