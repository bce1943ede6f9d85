//! Line-delimited JSON for videos and labeled video questions, nested JSON
//! for the textbook set, and the plain-text word-vector file.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use eduqa_core::corpus::{
    format_timestamp, parse_timestamp, ChannelMeta, Corpus, CvqaRecord, TqaLesson, TqaQuestion, TqaSet, TqaTopic,
    VideoDoc, Warning,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub channel_id: String,
    #[serde(default)]
    pub channel_name: String,
    pub transcript: String,
    #[serde(default)]
    pub captions: Vec<String>,
    #[serde(default)]
    pub duration_min: u32,
    #[serde(default)]
    pub views: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subscriber_count: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvqaLine {
    pub video_id: String,
    pub time: String,
    pub question: String,
    pub answer: String,
    pub qtype: String,
    pub modality: String,
    pub quality_rating: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TqaFile {
    pub lessons: Vec<LessonRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LessonRecord {
    pub lesson_id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub topics: Vec<TopicRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicRecord {
    pub topic_id: String,
    #[serde(default)]
    pub title: String,
    pub context: String,
    #[serde(default)]
    pub questions: Vec<QuestionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question_id: String,
    /// Optional; must name the enclosing topic when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_id: Option<String>,
    pub text: String,
    pub choices: Vec<String>,
    pub correct_index: i64,
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Parses every non-blank line; line numbers are 1-based.
fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

fn write_lines<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for r in records {
        let s = serde_json::to_string(&r).map_err(|e| Error::Internal(e.to_string()))?;
        writeln!(w, "{s}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn videos_from_records(records: Vec<VideoRecord>) -> Result<(Corpus, Vec<Warning>)> {
    let (videos, meta) = records
        .into_iter()
        .map(|r| {
            (
                VideoDoc {
                    video_id: r.video_id,
                    channel_id: r.channel_id,
                    transcript: r.transcript,
                    captions: r.captions,
                    duration_min: r.duration_min,
                    views: r.views,
                },
                ChannelMeta {
                    name: r.channel_name,
                    subscriber_count: r.subscriber_count.unwrap_or(0),
                },
            )
        })
        .unzip();
    Ok(Corpus::new(videos, meta)?)
}

pub fn load_videos(path: &Path) -> Result<(Corpus, Vec<Warning>)> {
    let lines: Vec<(usize, VideoRecord)> = read_jsonl(path)?;
    for (line, r) in &lines {
        if r.transcript.trim().is_empty() {
            return Err(Error::parse(
                path,
                *line,
                format!("video `{}` has an empty transcript", r.video_id),
            ));
        }
    }
    videos_from_records(lines.into_iter().map(|(_, r)| r).collect())
}

pub fn corpus_records(corpus: &Corpus) -> Vec<VideoRecord> {
    corpus
        .videos()
        .iter()
        .map(|v| {
            let ch = corpus.channel(&v.channel_id);
            VideoRecord {
                video_id: v.video_id.clone(),
                channel_id: v.channel_id.clone(),
                channel_name: ch.map(|c| c.name.clone()).unwrap_or_default(),
                transcript: v.transcript.clone(),
                captions: v.captions.clone(),
                duration_min: v.duration_min,
                views: v.views,
                subscriber_count: ch.map(|c| c.subscriber_count).filter(|&n| n > 0),
            }
        })
        .collect()
}

/// Canonical form: sorted by video id, one compact object per line.
pub fn save_videos(corpus: &Corpus, path: &Path) -> Result<()> {
    write_lines(path, corpus_records(corpus))
}

pub fn tqa_from_file(file: TqaFile) -> Result<TqaSet> {
    let mut lessons = Vec::new();
    let mut topics = Vec::new();
    let mut questions = Vec::new();
    for l in file.lessons {
        let mut topic_ids = Vec::new();
        for t in l.topics {
            let mut question_ids = Vec::new();
            for q in t.questions {
                if let Some(tid) = &q.topic_id {
                    if *tid != t.topic_id {
                        return Err(Error::Validation(format!(
                            "question `{}` names topic `{tid}` but sits under `{}`",
                            q.question_id, t.topic_id
                        )));
                    }
                }
                let correct_index = usize::try_from(q.correct_index).map_err(|_| {
                    Error::Validation(format!(
                        "question `{}`: correct_index {} is negative",
                        q.question_id, q.correct_index
                    ))
                })?;
                question_ids.push(q.question_id.clone());
                questions.push(TqaQuestion {
                    question_id: q.question_id,
                    topic_id: t.topic_id.clone(),
                    text: q.text,
                    choices: q.choices,
                    correct_index,
                });
            }
            topic_ids.push(t.topic_id.clone());
            topics.push(TqaTopic {
                topic_id: t.topic_id,
                lesson_id: l.lesson_id.clone(),
                title: t.title,
                context: t.context,
                question_ids,
            });
        }
        lessons.push(TqaLesson {
            lesson_id: l.lesson_id,
            title: l.title,
            topic_ids,
        });
    }
    Ok(TqaSet::new(lessons, topics, questions)?)
}

pub fn load_tqa(path: &Path) -> Result<TqaSet> {
    let file: TqaFile =
        serde_json::from_reader(open(path)?).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
    tqa_from_file(file)
}

pub fn tqa_to_file(tqa: &TqaSet) -> TqaFile {
    TqaFile {
        lessons: tqa
            .lessons()
            .iter()
            .map(|l| LessonRecord {
                lesson_id: l.lesson_id.clone(),
                title: l.title.clone(),
                topics: l
                    .topic_ids
                    .iter()
                    .filter_map(|id| tqa.topic(id))
                    .map(|t| TopicRecord {
                        topic_id: t.topic_id.clone(),
                        title: t.title.clone(),
                        context: t.context.clone(),
                        questions: tqa
                            .topic_questions(t)
                            .map(|q| QuestionRecord {
                                question_id: q.question_id.clone(),
                                topic_id: None,
                                text: q.text.clone(),
                                choices: q.choices.clone(),
                                correct_index: q.correct_index as i64,
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect(),
    }
}

pub fn save_tqa(tqa: &TqaSet, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(&tqa_to_file(tqa)).map_err(|e| Error::Internal(e.to_string()))?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn cvqa_from_line(rec: CvqaLine) -> eduqa_core::Result<CvqaRecord> {
    let quality_rating = u8::try_from(rec.quality_rating).map_err(|_| eduqa_core::Error::Invalid {
        what: "quality_rating",
        detail: format!("{} is outside 1..=5", rec.quality_rating),
    })?;
    let r = CvqaRecord {
        video_id: rec.video_id,
        time_s: parse_timestamp(&rec.time)?,
        question: rec.question,
        answer: rec.answer,
        qtype: rec.qtype.parse()?,
        modality: rec.modality.parse()?,
        quality_rating,
    };
    r.validate()?;
    Ok(r)
}

pub fn load_cvqa(path: &Path) -> Result<Vec<CvqaRecord>> {
    read_jsonl::<CvqaLine>(path)?
        .into_iter()
        .map(|(line, rec)| cvqa_from_line(rec).map_err(|e| Error::parse(path, line, e.to_string())))
        .collect()
}

pub fn cvqa_to_line(r: &CvqaRecord) -> CvqaLine {
    CvqaLine {
        video_id: r.video_id.clone(),
        time: format_timestamp(r.time_s),
        question: r.question.clone(),
        answer: r.answer.clone(),
        qtype: r.qtype.as_str().to_string(),
        modality: r.modality.as_str().to_string(),
        quality_rating: i64::from(r.quality_rating),
    }
}

pub fn save_cvqa(records: &[CvqaRecord], path: &Path) -> Result<()> {
    write_lines(path, records.iter().map(cvqa_to_line))
}

/// Reads a `count dim` header followed by `token v1 .. vdim` lines.
pub fn load_vectors(path: &Path) -> Result<(usize, BTreeMap<String, Vec<f64>>)> {
    let mut lines = open(path)?.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::parse(path, 1, "empty vector file")),
    };
    let nums: Vec<usize> = header.split_whitespace().filter_map(|x| x.parse().ok()).collect();
    let [count, dim] = nums[..] else {
        return Err(Error::parse(path, 1, "header must be `count dim`"));
    };
    if dim == 0 {
        return Err(Error::parse(path, 1, "dimension must be positive"));
    }
    let mut words = BTreeMap::new();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().unwrap_or_default().to_string();
        let v = parts
            .map(|x| x.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if v.len() != dim {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected {dim} values, found {}", v.len()),
            ));
        }
        if words.insert(word.clone(), v).is_some() {
            return Err(Error::parse(path, i + 1, format!("duplicate token `{word}`")));
        }
    }
    if words.len() != count {
        return Err(Error::parse(
            path,
            1,
            format!("header declares {count} vectors, file has {}", words.len()),
        ));
    }
    Ok((dim, words))
}

pub fn save_vectors(dim: usize, words: &BTreeMap<String, Vec<f64>>, path: &Path) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let mut go = || -> std::io::Result<()> {
        writeln!(w, "{} {dim}", words.len())?;
        for (word, v) in words {
            write!(w, "{word}")?;
            for x in v {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    go().map_err(|e| Error::io(path, e))
}
