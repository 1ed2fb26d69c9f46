//! Channel archive data model.
//!
//! An archive is assembled from flat record lists (one list per JSONL file on
//! disk), validated once, and then indexed for the read-only queries every
//! analysis runs: per-channel video lists, per-video comment lists and
//! per-channel subscriber snapshots sorted by date.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    pub channel_id: String,
    pub display_name: String,
    #[serde(default)]
    pub is_fringe: bool,
}

/// A video upload.
///
/// Reaction counts are `None` when the platform hid them; such videos never
/// enter a disagreement computation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Video {
    pub video_id: String,
    pub channel_id: String,
    pub upload_ts: DateTime<Utc>,
    pub like_count: Option<u64>,
    pub dislike_count: Option<u64>,
    pub comments_enabled: bool,
    /// Attached from the transcript records when the archive is assembled.
    #[serde(skip)]
    pub transcript: Option<TranscriptDoc>,
}

impl Video {
    pub fn upload_date(&self) -> NaiveDate {
        self.upload_ts.date_naive()
    }
}

/// A top-level comment. Replies are not modelled; archives carry a flat list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub comment_id: String,
    pub video_id: String,
    pub user_id: String,
    pub ts: DateTime<Utc>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptDoc {
    pub video_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscriberSnapshot {
    pub channel_id: String,
    pub date: NaiveDate,
    pub count: u64,
}

/// Inclusive UTC date range.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub label: String,
}

const fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    match NaiveDate::from_ymd_opt(y, m, d) {
        Some(d) => d,
        None => panic!("invalid calendar date"),
    }
}

impl TimeWindow {
    pub fn new(label: impl Into<String>, start: NaiveDate, end: NaiveDate) -> Result<Self> {
        let label = label.into();
        if start > end {
            return Err(Error::invalid(format!(
                "window `{label}` starts ({start}) after it ends ({end})"
            )));
        }
        Ok(TimeWindow { start, end, label })
    }

    /// The 64 days leading up to election day: 2020-08-31..=2020-11-02.
    pub fn before() -> Self {
        TimeWindow { start: ymd(2020, 8, 31), end: ymd(2020, 11, 2), label: "before".into() }
    }

    /// Election day through 2021-01-05.
    pub fn after() -> Self {
        TimeWindow { start: ymd(2020, 11, 3), end: ymd(2021, 1, 5), label: "after".into() }
    }

    /// Union of `before` and `after`.
    pub fn t128() -> Self {
        TimeWindow { start: ymd(2020, 8, 31), end: ymd(2021, 1, 5), label: "t128".into() }
    }

    /// From the day the race was called through 2021-01-05.
    pub fn postcall() -> Self {
        TimeWindow { start: ymd(2020, 11, 7), end: ymd(2021, 1, 5), label: "postcall".into() }
    }

    /// Looks up one of the built-in windows by label.
    pub fn named(label: &str) -> Option<Self> {
        match label {
            "before" => Some(Self::before()),
            "after" => Some(Self::after()),
            "t128" => Some(Self::t128()),
            "postcall" => Some(Self::postcall()),
            _ => None,
        }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

/// Which timestamp decides whether a comment falls in a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CommentAttribution {
    /// The parent video's upload date.
    #[default]
    ParentVideo,
    /// The comment's own timestamp.
    CommentTimestamp,
}

/// Flat record lists, as read from or written to an archive directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArchiveParts {
    pub channels: Vec<Channel>,
    pub videos: Vec<Video>,
    pub comments: Vec<Comment>,
    pub transcripts: Vec<TranscriptDoc>,
    pub subscribers: Vec<SubscriberSnapshot>,
}

/// Videos and comments of one channel restricted to a window.
#[derive(Debug, Clone)]
pub struct WindowSlice<'a> {
    pub videos: Vec<&'a Video>,
    pub comments: Vec<&'a Comment>,
}

/// Validated, cross-linked archive. Immutable once built.
#[derive(Debug, Clone)]
pub struct ChannelArchive {
    channels: Vec<Channel>,
    videos: Vec<Video>,
    comments: Vec<Comment>,
    subscribers: Vec<SubscriberSnapshot>,
    channel_index: BTreeMap<String, usize>,
    video_index: BTreeMap<String, usize>,
    videos_by_channel: Vec<Vec<usize>>,
    comments_by_video: Vec<Vec<usize>>,
    snapshots_by_channel: Vec<Vec<usize>>,
}

impl ChannelArchive {
    /// Validates keys and references, attaches transcripts to their videos
    /// and builds the lookup indices.
    pub fn from_parts(parts: ArchiveParts) -> Result<Self> {
        let ArchiveParts { channels, mut videos, comments, transcripts, mut subscribers } = parts;

        let mut channel_index = BTreeMap::new();
        for (i, c) in channels.iter().enumerate() {
            if c.channel_id.is_empty() {
                return Err(Error::invalid("channel with empty channel_id"));
            }
            if channel_index.insert(c.channel_id.clone(), i).is_some() {
                return Err(Error::DuplicateKey { kind: "channel", key: c.channel_id.clone() });
            }
        }

        let mut video_index = BTreeMap::new();
        let mut videos_by_channel = alloc::vec![Vec::new(); channels.len()];
        for (i, v) in videos.iter().enumerate() {
            let Some(&ci) = channel_index.get(&v.channel_id) else {
                return Err(Error::Referential {
                    kind: "video",
                    key: v.video_id.clone(),
                    target: "channel",
                    reference: v.channel_id.clone(),
                });
            };
            if video_index.insert(v.video_id.clone(), i).is_some() {
                return Err(Error::DuplicateKey { kind: "video", key: v.video_id.clone() });
            }
            videos_by_channel[ci].push(i);
        }

        let mut seen_transcripts = BTreeMap::new();
        for t in transcripts {
            let Some(&vi) = video_index.get(&t.video_id) else {
                return Err(Error::Referential {
                    kind: "transcript",
                    key: t.video_id.clone(),
                    target: "video",
                    reference: t.video_id.clone(),
                });
            };
            if t.text.trim().is_empty() {
                return Err(Error::invalid(format!("empty transcript for video `{}`", t.video_id)));
            }
            if seen_transcripts.insert(t.video_id.clone(), ()).is_some() {
                return Err(Error::DuplicateKey { kind: "transcript", key: t.video_id.clone() });
            }
            videos[vi].transcript = Some(t);
        }

        let mut comment_ids = BTreeMap::new();
        let mut comments_by_video = alloc::vec![Vec::new(); videos.len()];
        for (i, c) in comments.iter().enumerate() {
            let Some(&vi) = video_index.get(&c.video_id) else {
                return Err(Error::Referential {
                    kind: "comment",
                    key: c.comment_id.clone(),
                    target: "video",
                    reference: c.video_id.clone(),
                });
            };
            if comment_ids.insert(c.comment_id.as_str(), ()).is_some() {
                return Err(Error::DuplicateKey { kind: "comment", key: c.comment_id.clone() });
            }
            comments_by_video[vi].push(i);
        }
        drop(comment_ids);

        subscribers.sort_by(|a, b| a.channel_id.cmp(&b.channel_id).then(a.date.cmp(&b.date)));
        let mut snapshots_by_channel = alloc::vec![Vec::new(); channels.len()];
        for (i, s) in subscribers.iter().enumerate() {
            let Some(&ci) = channel_index.get(&s.channel_id) else {
                return Err(Error::Referential {
                    kind: "subscriber snapshot",
                    key: format!("{}@{}", s.channel_id, s.date),
                    target: "channel",
                    reference: s.channel_id.clone(),
                });
            };
            let list: &mut Vec<usize> = &mut snapshots_by_channel[ci];
            if let Some(&prev) = list.last() {
                if subscribers[prev].date == s.date {
                    return Err(Error::DuplicateKey {
                        kind: "subscriber snapshot",
                        key: format!("{}@{}", s.channel_id, s.date),
                    });
                }
            }
            list.push(i);
        }

        Ok(ChannelArchive {
            channels,
            videos,
            comments,
            subscribers,
            channel_index,
            video_index,
            videos_by_channel,
            comments_by_video,
            snapshots_by_channel,
        })
    }

    /// Inverse of [`ChannelArchive::from_parts`] up to record order within
    /// each list (subscriber snapshots come back sorted by channel and date).
    pub fn to_parts(&self) -> ArchiveParts {
        let transcripts = self.videos.iter().filter_map(|v| v.transcript.clone()).collect();
        let videos = self
            .videos
            .iter()
            .map(|v| Video { transcript: None, ..v.clone() })
            .collect();
        ArchiveParts {
            channels: self.channels.clone(),
            videos,
            comments: self.comments.clone(),
            transcripts,
            subscribers: self.subscribers.clone(),
        }
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn videos(&self) -> &[Video] {
        &self.videos
    }

    pub fn comments(&self) -> &[Comment] {
        &self.comments
    }

    pub fn subscribers(&self) -> &[SubscriberSnapshot] {
        &self.subscribers
    }

    pub fn channel(&self, channel_id: &str) -> Result<&Channel> {
        self.channel_pos(channel_id).map(|i| &self.channels[i])
    }

    pub fn video(&self, video_id: &str) -> Option<&Video> {
        self.video_index.get(video_id).map(|&i| &self.videos[i])
    }

    fn channel_pos(&self, channel_id: &str) -> Result<usize> {
        self.channel_index
            .get(channel_id)
            .copied()
            .ok_or_else(|| Error::NotFound { kind: "channel", key: channel_id.to_string() })
    }

    /// Every video uploaded to `channel_id`, in archive order.
    pub fn channel_videos(&self, channel_id: &str) -> Result<impl Iterator<Item = &Video> + '_> {
        let ci = self.channel_pos(channel_id)?;
        Ok(self.videos_by_channel[ci].iter().map(move |&i| &self.videos[i]))
    }

    /// Comments attached to `video`, in archive order.
    pub fn video_comments<'a>(&'a self, video: &Video) -> impl Iterator<Item = &'a Comment> + 'a {
        let list = self
            .video_index
            .get(&video.video_id)
            .map(|&i| self.comments_by_video[i].as_slice())
            .unwrap_or(&[]);
        list.iter().map(move |&i| &self.comments[i])
    }

    pub fn comment_count(&self, video: &Video) -> usize {
        self.video_index
            .get(&video.video_id)
            .map_or(0, |&i| self.comments_by_video[i].len())
    }

    /// Videos of `channel_id` uploaded within `window`, plus the comments on
    /// those videos.
    pub fn slice_window(&self, channel_id: &str, window: &TimeWindow) -> Result<WindowSlice<'_>> {
        self.slice_window_with(channel_id, window, CommentAttribution::ParentVideo)
    }

    /// Like [`slice_window`](Self::slice_window), but with
    /// [`CommentAttribution::CommentTimestamp`] comments on any of the
    /// channel's videos are selected by their own timestamp.
    pub fn slice_window_with(
        &self,
        channel_id: &str,
        window: &TimeWindow,
        attribution: CommentAttribution,
    ) -> Result<WindowSlice<'_>> {
        if window.start > window.end {
            return Err(Error::invalid(format!("window `{}` is empty", window.label)));
        }
        let ci = self.channel_pos(channel_id)?;
        let mut videos = Vec::new();
        let mut comments = Vec::new();
        for &vi in &self.videos_by_channel[ci] {
            let video = &self.videos[vi];
            let in_window = window.contains(video.upload_date());
            if in_window {
                videos.push(video);
            }
            match attribution {
                CommentAttribution::ParentVideo if in_window => {
                    comments.extend(self.comments_by_video[vi].iter().map(|&i| &self.comments[i]));
                }
                CommentAttribution::ParentVideo => {}
                CommentAttribution::CommentTimestamp => comments.extend(
                    self.comments_by_video[vi]
                        .iter()
                        .map(|&i| &self.comments[i])
                        .filter(|c| window.contains(c.ts.date_naive())),
                ),
            }
        }
        Ok(WindowSlice { videos, comments })
    }

    /// Subscriber count of a channel on `date`: the stored value on a
    /// snapshot date, otherwise linear interpolation between the two
    /// bracketing snapshots. Dates outside the snapshot range are rejected.
    pub fn subscribers_at(&self, channel_id: &str, date: NaiveDate) -> Result<f64> {
        let ci = self.channel_pos(channel_id)?;
        let snaps: Vec<&SubscriberSnapshot> =
            self.snapshots_by_channel[ci].iter().map(|&i| &self.subscribers[i]).collect();
        interpolate(channel_id, &snaps, date)
    }

    pub fn snapshot_range(&self, channel_id: &str) -> Result<(NaiveDate, NaiveDate)> {
        let ci = self.channel_pos(channel_id)?;
        let list = &self.snapshots_by_channel[ci];
        match (list.first(), list.last()) {
            (Some(&a), Some(&b)) => Ok((self.subscribers[a].date, self.subscribers[b].date)),
            _ => Err(Error::NoSnapshots(channel_id.to_string())),
        }
    }
}

fn interpolate(channel_id: &str, snaps: &[&SubscriberSnapshot], date: NaiveDate) -> Result<f64> {
    let (Some(first), Some(last)) = (snaps.first(), snaps.last()) else {
        return Err(Error::NoSnapshots(channel_id.to_string()));
    };
    if date < first.date || date > last.date {
        return Err(Error::OutOfRange {
            channel: channel_id.to_string(),
            date,
            earliest: first.date,
            latest: last.date,
        });
    }
    // first index whose date is >= `date`
    let hi = snaps.partition_point(|s| s.date < date);
    let upper = snaps[hi];
    if upper.date == date {
        return Ok(upper.count as f64);
    }
    let lower = snaps[hi - 1];
    let span = (upper.date - lower.date).num_days() as f64;
    let offset = (date - lower.date).num_days() as f64;
    let (a, b) = (lower.count as f64, upper.count as f64);
    Ok(a + (b - a) * offset / span)
}
