//! Viewer disagreement, comment engagement and subscriber market share.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::archive::{ChannelArchive, TimeWindow, Video};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementReport {
    pub channel: String,
    pub window: String,
    pub value: f64,
    /// Videos that entered the mean.
    pub n_videos: usize,
}

/// Dislike ratio of one video, `None` when reactions are hidden or zero.
pub fn dislike_ratio(video: &Video) -> Option<f64> {
    let (likes, dislikes) = (video.like_count?, video.dislike_count?);
    let total = likes + dislikes;
    (total > 0).then(|| dislikes as f64 / total as f64)
}

/// Unweighted mean dislike ratio over the videos that have reactions.
pub fn mean_dislike_ratio<'a, I>(videos: I) -> Option<(f64, usize)>
where
    I: IntoIterator<Item = &'a Video>,
{
    let (sum, n) = videos
        .into_iter()
        .filter_map(dislike_ratio)
        .fold((0.0, 0usize), |(s, n), r| (s + r, n + 1));
    (n > 0).then(|| (sum / n as f64, n))
}

pub fn disagreement_factor(
    archive: &ChannelArchive,
    channel: &str,
    window: &TimeWindow,
) -> Result<DisagreementReport> {
    let slice = archive.slice_window(channel, window)?;
    let (value, n_videos) = mean_dislike_ratio(slice.videos.iter().copied()).ok_or_else(|| {
        Error::undefined(format!(
            "channel `{channel}` has no video with reactions in window `{}`",
            window.label
        ))
    })?;
    Ok(DisagreementReport { channel: channel.to_string(), window: window.label.clone(), value, n_videos })
}

/// `disagreement(before) - disagreement(after)`; negative when disagreement rose.
pub fn delta_disagreement(
    archive: &ChannelArchive,
    channel: &str,
    before: &TimeWindow,
    after: &TimeWindow,
) -> Result<f64> {
    let b = disagreement_factor(archive, channel, before)?;
    let a = disagreement_factor(archive, channel, after)?;
    Ok(b.value - a.value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementSummary {
    pub channel: String,
    pub window: String,
    /// All uploads in the window.
    pub n_videos: usize,
    /// Mean comment count over comment-enabled uploads; `None` if there are none.
    pub avg_comments: Option<f64>,
}

pub fn engagement_summary(
    archive: &ChannelArchive,
    channel: &str,
    window: &TimeWindow,
) -> Result<EngagementSummary> {
    let slice = archive.slice_window(channel, window)?;
    let (total, enabled) = slice
        .videos
        .iter()
        .filter(|v| v.comments_enabled)
        .fold((0usize, 0usize), |(t, n), v| (t + archive.comment_count(v), n + 1));
    Ok(EngagementSummary {
        channel: channel.to_string(),
        window: window.label.clone(),
        n_videos: slice.videos.len(),
        avg_comments: (enabled > 0).then(|| total as f64 / enabled as f64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketShareRow {
    pub date: NaiveDate,
    pub subscribers: BTreeMap<String, f64>,
    pub shares: BTreeMap<String, f64>,
}

/// Each channel's share of the summed subscriber counts of `channels`, on
/// each of `dates`. Counts between snapshots are linearly interpolated.
pub fn market_share_series(
    archive: &ChannelArchive,
    channels: &[String],
    dates: &[NaiveDate],
) -> Result<Vec<MarketShareRow>> {
    if channels.is_empty() {
        return Err(Error::invalid("market share needs at least one channel"));
    }
    dates
        .iter()
        .map(|&date| {
            let subscribers = channels
                .iter()
                .map(|c| Ok((c.clone(), archive.subscribers_at(c, date)?)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            let total: f64 = subscribers.values().sum();
            if total <= 0.0 {
                return Err(Error::undefined(format!("no subscribers on {date}")));
            }
            let shares = subscribers.iter().map(|(c, &s)| (c.clone(), s / total)).collect();
            Ok(MarketShareRow { date, subscribers, shares })
        })
        .collect()
}

/// Every day from `start` to `end` inclusive.
pub fn daily_dates(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    start.iter_days().take_while(|d| *d <= end).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::{ArchiveParts, Channel, SubscriberSnapshot};
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn video(id: &str, likes: Option<u64>, dislikes: Option<u64>) -> Video {
        Video {
            video_id: id.into(),
            channel_id: "c".into(),
            upload_ts: Utc.with_ymd_and_hms(2020, 9, 10, 0, 0, 0).unwrap(),
            like_count: likes,
            dislike_count: dislikes,
            comments_enabled: true,
            transcript: None,
        }
    }

    #[test]
    fn hand_computed_mean() {
        let vs = [video("a", Some(9), Some(1)), video("b", Some(1), Some(1)), video("c", Some(0), Some(4))];
        let (v, n) = mean_dislike_ratio(&vs).unwrap();
        assert_eq!(n, 3);
        assert!((v - 1.6 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn all_liked_is_zero() {
        let vs = [video("a", Some(9), Some(0)), video("b", Some(3), Some(0))];
        assert_eq!(mean_dislike_ratio(&vs).unwrap().0, 0.0);
    }

    #[test]
    fn hidden_and_silent_videos_are_skipped() {
        let vs = [video("a", None, Some(3)), video("b", Some(0), Some(0)), video("c", Some(1), Some(1))];
        assert_eq!(mean_dislike_ratio(&vs), Some((0.5, 1)));
        assert_eq!(mean_dislike_ratio(&vs[..2]), None);
    }

    fn share_archive(counts: &[(&str, u64)]) -> ChannelArchive {
        let d = NaiveDate::from_ymd_opt(2020, 8, 31).unwrap();
        ChannelArchive::from_parts(ArchiveParts {
            channels: counts
                .iter()
                .map(|(c, _)| Channel { channel_id: (*c).into(), display_name: (*c).into(), is_fringe: false })
                .collect(),
            subscribers: counts
                .iter()
                .map(|(c, n)| SubscriberSnapshot { channel_id: (*c).into(), date: d, count: *n })
                .collect(),
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn shares() {
        let d = NaiveDate::from_ymd_opt(2020, 8, 31).unwrap();
        let a = share_archive(&[("a", 100), ("b", 300)]);
        let rows = market_share_series(&a, &["a".into(), "b".into()], &[d]).unwrap();
        assert_eq!(rows[0].shares["a"], 0.25);
        assert_eq!(rows[0].shares["b"], 0.75);
        let rows = market_share_series(&a, &["a".into()], &[d]).unwrap();
        assert_eq!(rows[0].shares["a"], 1.0);
        let late = d.succ_opt().unwrap();
        let err = market_share_series(&a, &["a".into()], &[late]).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { ref channel, .. } if channel == "a"));
    }

    #[test]
    fn daily_range() {
        let d = NaiveDate::from_ymd_opt(2020, 12, 30).unwrap();
        let e = NaiveDate::from_ymd_opt(2021, 1, 2).unwrap();
        assert_eq!(daily_dates(d, e).len(), 4);
    }

    proptest! {
        #[test]
        fn one_video_moves_the_mean_by_at_most_one_over_n(
            pairs in proptest::collection::vec((0u64..50, 0u64..50), 1..30),
            extreme in prop_oneof![Just((0u64, 1000u64)), Just((1000u64, 0u64))],
        ) {
            let mut vs: Vec<Video> = pairs.iter().enumerate()
                .map(|(i, (l, d))| video(&format!("{i}"), Some(*l), Some(*d))).collect();
            if let Some((before, _)) = mean_dislike_ratio(&vs) {
                vs.push(video("x", Some(extreme.0), Some(extreme.1)));
                let (after, n) = mean_dislike_ratio(&vs).unwrap();
                prop_assert!((after - before).abs() <= 1.0 / n as f64 + 1e-12);
            }
        }

        #[test]
        fn scaling_reactions_leaves_the_factor_unchanged(
            pairs in proptest::collection::vec((0u64..50, 0u64..50), 1..20),
            k in 1u64..9,
        ) {
            let base: Vec<Video> = pairs.iter().map(|(l, d)| video("v", Some(*l), Some(*d))).collect();
            let scaled: Vec<Video> = pairs.iter().map(|(l, d)| video("v", Some(l * k), Some(d * k))).collect();
            match (mean_dislike_ratio(&base), mean_dislike_ratio(&scaled)) {
                (Some((a, n)), Some((b, m))) => {
                    prop_assert_eq!(n, m);
                    prop_assert!((a - b).abs() < 1e-12);
                }
                (None, None) => {}
                _ => prop_assert!(false),
            }
        }

        #[test]
        fn shares_sum_to_one(counts in proptest::collection::vec(0u64..1_000_000, 1..7)) {
            prop_assume!(counts.iter().sum::<u64>() > 0);
            let names: Vec<String> = (0..counts.len()).map(|i| format!("c{i}")).collect();
            let pairs: Vec<(&str, u64)> = names.iter().map(String::as_str).zip(counts.iter().copied()).collect();
            let a = share_archive(&pairs);
            let d = NaiveDate::from_ymd_opt(2020, 8, 31).unwrap();
            let row = &market_share_series(&a, &names, &[d]).unwrap()[0];
            let sum: f64 = row.shares.values().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
            prop_assert!(row.shares.values().all(|s| (0.0..=1.0).contains(s)));
        }
    }
}
