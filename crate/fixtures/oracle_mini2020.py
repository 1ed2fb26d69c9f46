#!/usr/bin/env python3
"""Brute-force reference values for mini2020, computed straight from the JSONL.

Writes mini2020/manifest.json (per-channel line counts) and
mini2020/expected.json (window slices, stance counts, cohort tally,
normalized tokens). Shares no code with the Rust implementation.
"""
import json
import re
from collections import Counter, defaultdict
from pathlib import Path

DIR = Path(__file__).resolve().parent / "mini2020"

BEFORE = ("2020-08-31", "2020-11-02")
AFTER = ("2020-11-03", "2021-01-05")
T128 = ("2020-08-31", "2021-01-05")
POSTCALL = ("2020-11-07", "2021-01-05")


def rows(name):
    path = DIR / f"{name}.jsonl"
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def within(ts, window):
    return window[0] <= ts[:10] <= window[1]


def tokens(text):
    text = "".join(ch for ch in text if ch in " \t\n\r\f\v" or 32 <= ord(ch) <= 126)
    return re.sub(r"[^a-z0-9]", " ", text.lower()).split()


PRESIDENT_ELECT = re.compile(r"(?:^| )president elect(?: \S+){0,2} biden(?= |$)")


def main():
    channels = [c["channel_id"] for c in rows("channels")]
    videos = rows("videos")
    comments = rows("comments")
    transcripts = {t["video_id"]: t["text"] for t in rows("transcripts")}
    subs = rows("subscribers")
    owner = {v["video_id"]: v["channel_id"] for v in videos}
    uploaded = {v["video_id"]: v["upload_ts"] for v in videos}

    manifest = {"channels": {}, "totals": {}}
    for c in channels:
        manifest["channels"][c] = {
            "videos": sum(1 for v in videos if v["channel_id"] == c),
            "comments": sum(1 for m in comments if owner[m["video_id"]] == c),
            "transcripts": sum(1 for vid in transcripts if owner[vid] == c),
            "subscriber_snapshots": sum(1 for s in subs if s["channel_id"] == c),
        }
    manifest["totals"] = {
        "channels": len(channels), "videos": len(videos), "comments": len(comments),
        "transcripts": len(transcripts), "subscriber_snapshots": len(subs),
    }

    fox_after_videos = sorted(v["video_id"] for v in videos if v["channel_id"] == "fox" and within(v["upload_ts"], AFTER))
    fox_after_comments = sorted(m["comment_id"] for m in comments if m["video_id"] in set(fox_after_videos))

    stance = {}
    for c in channels:
        num = den = 0
        for v in videos:
            if v["channel_id"] != c or not within(v["upload_ts"], POSTCALL) or v["video_id"] not in transcripts:
                continue
            toks = tokens(transcripts[v["video_id"]])
            if "biden" in toks:
                den += 1
                num += bool(PRESIDENT_ELECT.search(" ".join(toks)))
        stance[c] = {"president_elect_videos": num, "biden_videos": den}

    tally = defaultdict(Counter)
    for m in comments:
        ch = owner[m["video_id"]]
        if ch in ("fox", "newsmax") and within(uploaded[m["video_id"]], T128):
            tally[m["user_id"]][ch] += 1
    cohort = sorted(u for u, t in tally.items() if t["fox"] > 0 and t["newsmax"] > 0 and t["fox"] + t["newsmax"] >= 10)
    shares = {}
    for label, window in (("before", BEFORE), ("after", AFTER)):
        count = Counter(owner[m["video_id"]] for m in comments
                        if m["user_id"] in set(cohort) and owner[m["video_id"]] in ("fox", "newsmax")
                        and within(uploaded[m["video_id"]], window))
        total = count["fox"] + count["newsmax"]
        shares[label] = {"fox": count["fox"], "newsmax": count["newsmax"], "fox_share": count["fox"] / total}

    expected = {
        "fox_after": {"video_ids": fox_after_videos, "comment_ids": fox_after_comments},
        "stance_postcall": stance,
        "cohort_fox_newsmax": {"min_total": 10, "users": cohort, "comment_counts": shares},
        "first_100_comment_tokens": [tokens(m["text"]) for m in comments[:100]],
    }

    for name, obj in (("manifest", manifest), ("expected", expected)):
        (DIR / f"{name}.json").write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
