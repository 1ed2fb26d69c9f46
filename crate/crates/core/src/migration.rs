//! Cross-channel commenter cohorts and their comment share over time.
//!
//! A cohort is the set of users who commented on both channels of a pair
//! with a combined count at or above a threshold. Its comments are then
//! split either by calendar window or along each user's own activity
//! timeline (earliest and latest fraction of their comments).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::archive::{ChannelArchive, TimeWindow};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub channel_a: String,
    pub channel_b: String,
    pub min_total: usize,
    pub require_both: bool,
}

impl CohortSpec {
    pub fn new(channel_a: impl Into<String>, channel_b: impl Into<String>) -> Result<Self> {
        let spec = CohortSpec {
            channel_a: channel_a.into(),
            channel_b: channel_b.into(),
            min_total: 10,
            require_both: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_a == self.channel_b {
            return Err(Error::invalid(format!("cohort pair repeats channel `{}`", self.channel_a)));
        }
        if self.min_total == 0 {
            return Err(Error::invalid("cohort min_total must be at least 1"));
        }
        Ok(())
    }

    pub fn swapped(&self) -> Self {
        CohortSpec {
            channel_a: self.channel_b.clone(),
            channel_b: self.channel_a.clone(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceLabel {
    Before,
    After,
    Earliest,
    Latest,
}

impl fmt::Display for SliceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SliceLabel::Before => "T_before",
            SliceLabel::After => "T_after",
            SliceLabel::Earliest => "earliest",
            SliceLabel::Latest => "latest",
        })
    }
}

/// How a slice's comments are turned into a share.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareWeighting {
    /// Pool every comment of the slice.
    #[default]
    Comments,
    /// Average the per-user shares.
    Users,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareReport {
    pub slice: SliceLabel,
    /// `(share_a, share_b)`; `None` when the slice holds no cohort comment.
    pub shares: Option<(f64, f64)>,
    pub n_users: usize,
    pub n_comments: usize,
    pub count_a: usize,
    pub count_b: usize,
}

#[derive(Debug, Clone)]
struct CohortComment<'a> {
    ts: DateTime<Utc>,
    comment_id: &'a str,
    on_a: bool,
    upload: NaiveDate,
}

/// Comments on videos of either channel uploaded within `window`, grouped
/// by user.
fn user_comments<'a>(
    archive: &'a ChannelArchive,
    spec: &CohortSpec,
    window: &TimeWindow,
) -> Result<BTreeMap<&'a str, Vec<CohortComment<'a>>>> {
    spec.validate()?;
    let mut by_user: BTreeMap<&str, Vec<CohortComment<'_>>> = BTreeMap::new();
    for (channel, on_a) in [(&spec.channel_a, true), (&spec.channel_b, false)] {
        for video in archive.channel_videos(channel)? {
            let date = video.upload_date();
            if !window.contains(date) {
                continue;
            }
            for c in archive.video_comments(video) {
                by_user.entry(c.user_id.as_str()).or_default().push(CohortComment {
                    ts: c.ts,
                    comment_id: &c.comment_id,
                    on_a,
                    upload: date,
                });
            }
        }
    }
    Ok(by_user)
}

fn qualifies(spec: &CohortSpec, n_a: usize, n_b: usize) -> bool {
    let both = !spec.require_both || (n_a > 0 && n_b > 0);
    both && n_a + n_b >= spec.min_total
}

/// Users who commented on both channels (unless `require_both` is off) with
/// at least `min_total` comments between them, on videos uploaded in `window`.
pub fn select_cohort(
    archive: &ChannelArchive,
    spec: &CohortSpec,
    window: &TimeWindow,
) -> Result<BTreeSet<String>> {
    let by_user = user_comments(archive, spec, window)?;
    Ok(by_user
        .into_iter()
        .filter(|(_, cs)| {
            let n_a = cs.iter().filter(|c| c.on_a).count();
            qualifies(spec, n_a, cs.len() - n_a)
        })
        .map(|(u, _)| String::from(u))
        .collect())
}

#[derive(Default)]
struct Tally {
    a: usize,
    b: usize,
    users: usize,
    user_share_sum: f64,
}

impl Tally {
    fn add_user<'c, I: Iterator<Item = &'c bool>>(&mut self, sides: I) {
        let (mut a, mut b) = (0, 0);
        for &on_a in sides {
            if on_a {
                a += 1;
            } else {
                b += 1;
            }
        }
        if a + b == 0 {
            return;
        }
        self.a += a;
        self.b += b;
        self.users += 1;
        self.user_share_sum += a as f64 / (a + b) as f64;
    }

    fn report(&self, slice: SliceLabel, weighting: ShareWeighting) -> ShareReport {
        let n = self.a + self.b;
        let shares = (n > 0).then(|| {
            let share_a = match weighting {
                ShareWeighting::Comments => self.a as f64 / n as f64,
                ShareWeighting::Users => self.user_share_sum / self.users as f64,
            };
            (share_a, 1.0 - share_a)
        });
        ShareReport { slice, shares, n_users: self.users, n_comments: n, count_a: self.a, count_b: self.b }
    }
}

/// Cohort comment share of each channel within `before` and within `after`,
/// attributing comments to their video's upload window.
pub fn temporal_share(
    archive: &ChannelArchive,
    cohort: &BTreeSet<String>,
    spec: &CohortSpec,
    before: &TimeWindow,
    after: &TimeWindow,
    weighting: ShareWeighting,
) -> Result<(ShareReport, ShareReport)> {
    if cohort.is_empty() {
        return Err(Error::invalid("cohort is empty"));
    }
    let span = TimeWindow {
        start: before.start.min(after.start),
        end: before.end.max(after.end),
        label: String::from("span"),
    };
    let by_user = user_comments(archive, spec, &span)?;
    let (mut tb, mut ta) = (Tally::default(), Tally::default());
    for (user, cs) in &by_user {
        if !cohort.contains(*user) {
            continue;
        }
        tb.add_user(cs.iter().filter(|c| before.contains(c.upload)).map(|c| &c.on_a));
        ta.add_user(cs.iter().filter(|c| after.contains(c.upload)).map(|c| &c.on_a));
    }
    Ok((tb.report(SliceLabel::Before, weighting), ta.report(SliceLabel::After, weighting)))
}

/// Number of comments taken from each end of a user's timeline.
pub fn quantile_count(q: f64, n: usize) -> usize {
    // guard against 0.2 * 15 = 3.0000000000000004 rounding up to 4
    let raw = libm::ceil(q * n as f64 - 1e-9);
    (raw.max(0.0) as usize).min(n)
}

/// Pools the earliest and the latest `ceil(q * n)` comments of every cohort
/// user (over `window`, ordered by timestamp then comment id) and reports
/// each pool's share.
pub fn activity_quantile_share(
    archive: &ChannelArchive,
    cohort: &BTreeSet<String>,
    spec: &CohortSpec,
    window: &TimeWindow,
    q: f64,
    weighting: ShareWeighting,
) -> Result<(ShareReport, ShareReport)> {
    if !(q > 0.0 && q <= 0.5) {
        return Err(Error::invalid(format!("activity quantile {q} is outside (0, 0.5]")));
    }
    let by_user = user_comments(archive, spec, window)?;
    let (mut early, mut late) = (Tally::default(), Tally::default());
    for (user, mut cs) in by_user {
        if !cohort.contains(user) {
            continue;
        }
        cs.sort_by(|x, y| x.ts.cmp(&y.ts).then_with(|| x.comment_id.cmp(y.comment_id)));
        let k = quantile_count(q, cs.len());
        early.add_user(cs[..k].iter().map(|c| &c.on_a));
        late.add_user(cs[cs.len() - k..].iter().map(|c| &c.on_a));
    }
    Ok((early.report(SliceLabel::Earliest, weighting), late.report(SliceLabel::Latest, weighting)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::{ArchiveParts, Channel, Comment, Video};
    use alloc::string::ToString;
    use chrono::{Duration, TimeZone};

    struct Builder {
        parts: ArchiveParts,
        next: usize,
    }

    impl Builder {
        fn new() -> Self {
            let channels = ["fox", "newsmax"]
                .iter()
                .map(|c| Channel { channel_id: c.to_string(), display_name: c.to_string(), is_fringe: false })
                .collect();
            Builder { parts: ArchiveParts { channels, ..Default::default() }, next: 0 }
        }

        fn video(&mut self, channel: &str, date: NaiveDate) -> String {
            let id = format!("v{}", self.parts.videos.len());
            self.parts.videos.push(Video {
                video_id: id.clone(),
                channel_id: channel.into(),
                upload_ts: Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).unwrap()),
                like_count: None,
                dislike_count: None,
                comments_enabled: true,
                transcript: None,
            });
            id
        }

        fn comment(&mut self, video: &str, user: &str, minutes: i64) {
            self.next += 1;
            let base = Utc.with_ymd_and_hms(2020, 9, 1, 0, 0, 0).unwrap();
            self.parts.comments.push(Comment {
                comment_id: format!("c{:04}", self.next),
                video_id: video.into(),
                user_id: user.into(),
                ts: base + Duration::minutes(minutes),
                text: String::new(),
            });
        }

        fn build(self) -> ChannelArchive {
            ChannelArchive::from_parts(self.parts).unwrap()
        }
    }

    fn d(m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, m, day).unwrap()
    }

    #[test]
    fn cohort_threshold_and_both_rule() {
        let mut b = Builder::new();
        let fox = b.video("fox", d(9, 10));
        let nm = b.video("newsmax", d(9, 10));
        for i in 0..10 {
            b.comment(&fox, "only_fox", i);
        }
        for i in 0..5 {
            b.comment(&fox, "five_five", i);
            b.comment(&nm, "five_five", i);
            b.comment(&fox, "five_four", i);
            if i < 4 {
                b.comment(&nm, "five_four", i);
            }
        }
        let a = b.build();
        let spec = CohortSpec::new("fox", "newsmax").unwrap();
        let cohort = select_cohort(&a, &spec, &TimeWindow::t128()).unwrap();
        assert_eq!(cohort.into_iter().collect::<Vec<_>>(), ["five_five"]);

        let loose = CohortSpec { require_both: false, ..spec.clone() };
        let cohort = select_cohort(&a, &loose, &TimeWindow::t128()).unwrap();
        assert!(cohort.contains("only_fox"));

        assert_eq!(select_cohort(&a, &spec.swapped(), &TimeWindow::t128()).unwrap().len(), 1);
        assert!(CohortSpec::new("fox", "fox").is_err());
    }

    #[test]
    fn temporal_shares_from_hand_tally() {
        let mut b = Builder::new();
        let fox_b = b.video("fox", d(9, 10));
        let nm_b = b.video("newsmax", d(9, 11));
        let fox_a = b.video("fox", d(11, 10));
        let nm_a = b.video("newsmax", d(11, 11));
        // u1: before 3 fox + 1 newsmax, after 1 fox + 3 newsmax
        for (v, n) in [(&fox_b, 3), (&nm_b, 1), (&fox_a, 1), (&nm_a, 3)] {
            for i in 0..n {
                b.comment(v, "u1", i);
            }
        }
        // u2: before 2 fox, after 2 newsmax
        for (v, n) in [(&fox_b, 2), (&nm_a, 2)] {
            for i in 0..n {
                b.comment(v, "u2", i);
            }
        }
        let a = b.build();
        let spec = CohortSpec { min_total: 1, ..CohortSpec::new("fox", "newsmax").unwrap() };
        let cohort = select_cohort(&a, &spec, &TimeWindow::t128()).unwrap();
        assert_eq!(cohort.len(), 2);
        let (before, after) = temporal_share(
            &a,
            &cohort,
            &spec,
            &TimeWindow::before(),
            &TimeWindow::after(),
            ShareWeighting::Comments,
        )
        .unwrap();
        assert_eq!((before.count_a, before.count_b), (5, 1));
        assert_eq!((after.count_a, after.count_b), (1, 5));
        assert_eq!(before.shares.unwrap().0, 5.0 / 6.0);
        assert_eq!(after.shares.unwrap().0, 1.0 / 6.0);
        assert_eq!(before.n_comments + after.n_comments, 12);

        let (ub, _) = temporal_share(
            &a,
            &cohort,
            &spec,
            &TimeWindow::before(),
            &TimeWindow::after(),
            ShareWeighting::Users,
        )
        .unwrap();
        assert_eq!(ub.shares.unwrap().0, (0.75 + 1.0) / 2.0);

        let empty = BTreeSet::new();
        assert!(temporal_share(&a, &empty, &spec, &TimeWindow::before(), &TimeWindow::after(), ShareWeighting::Comments).is_err());
    }

    #[test]
    fn quantile_slices() {
        assert_eq!(quantile_count(0.2, 10), 2);
        assert_eq!(quantile_count(0.2, 3), 1);
        assert_eq!(quantile_count(0.2, 15), 3);
        assert_eq!(quantile_count(0.5, 3), 2);

        let mut b = Builder::new();
        let fox = b.video("fox", d(9, 10));
        let nm = b.video("newsmax", d(9, 10));
        // ten comments: first two on fox, last two on newsmax
        for i in 0..10 {
            let v = if i < 5 { &fox } else { &nm };
            b.comment(v, "u", i);
        }
        let a = b.build();
        let spec = CohortSpec::new("fox", "newsmax").unwrap();
        let cohort = select_cohort(&a, &spec, &TimeWindow::t128()).unwrap();
        let (early, late) =
            activity_quantile_share(&a, &cohort, &spec, &TimeWindow::t128(), 0.2, ShareWeighting::Comments)
                .unwrap();
        assert_eq!((early.count_a, early.count_b), (2, 0));
        assert_eq!((late.count_a, late.count_b), (0, 2));
        assert!(activity_quantile_share(&a, &cohort, &spec, &TimeWindow::t128(), 0.6, ShareWeighting::Comments).is_err());
    }

    #[test]
    fn timestamp_ties_break_on_comment_id() {
        let mut b = Builder::new();
        let fox = b.video("fox", d(9, 10));
        let nm = b.video("newsmax", d(9, 10));
        b.comment(&nm, "u", 0); // c0001
        b.comment(&fox, "u", 0); // c0002, same instant
        b.comment(&fox, "u", 5);
        let a = b.build();
        let spec = CohortSpec { min_total: 1, ..CohortSpec::new("fox", "newsmax").unwrap() };
        let cohort = select_cohort(&a, &spec, &TimeWindow::t128()).unwrap();
        let (early, late) =
            activity_quantile_share(&a, &cohort, &spec, &TimeWindow::t128(), 0.2, ShareWeighting::Comments)
                .unwrap();
        assert_eq!((early.count_a, early.count_b), (0, 1));
        assert_eq!((late.count_a, late.count_b), (1, 0));
    }
}
