#!/usr/bin/env python3
"""Regenerates fixtures/mini2020: six channels, 60 videos, 3,000 comments.

Deterministic; rerunning rewrites byte-identical files. Run
oracle_mini2020.py afterwards to refresh manifest.json and expected.json.
"""
import datetime as dt
import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent / "mini2020"
RNG = random.Random(2020)

CHANNELS = [
    ("cnn", "CNN", False),
    ("fox", "Fox News", False),
    ("msnbc", "MSNBC", False),
    ("oann", "One America News Network", True),
    ("newsmax", "Newsmax TV", True),
    ("blaze", "TheBlaze", True),
]
COMMENTS_PER_CHANNEL = 500
ID_CHARS = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_"

COMMON = ("the this that people vote election country america news today president we they "
          "it is was are will be all what about time good great state count votes ballots "
          "year win lost court media truth watch again").split()
LEANING = {
    "cnn": "democracy results certified officials science pandemic masks facts".split(),
    "fox": "biden trump debate border economy jobs taxes tucker hannity".split(),
    "msnbc": "democracy insurrection rachel certified results transition pandemic".split(),
    "oann": "fraud rigged dominion audit trump steal patriots machines".split(),
    "newsmax": "fraud rigged audit trump steal patriots newsmax switch".split(),
    "blaze": "fraud freedom patriots steal constitution glenn audit".split(),
}
SHIFTERS = ["not", "never", "hardly", "no"]
NOISE = ["’", "\U0001F1FA\U0001F1F8", "!!", "?", "...", "café"]

SUBSCRIBER_BASE = {
    "cnn": 12_000_000, "fox": 7_500_000, "msnbc": 3_600_000,
    "oann": 1_300_000, "newsmax": 900_000, "blaze": 1_400_000,
}
# Daily growth before and after election day.
SUBSCRIBER_GROWTH = {
    "cnn": (2_000, 1_500), "fox": (4_000, 500), "msnbc": (1_500, 1_000),
    "oann": (1_000, 4_000), "newsmax": (800, 12_000), "blaze": (700, 1_500),
}

BEFORE_START = dt.date(2020, 8, 31)
ELECTION = dt.date(2020, 11, 3)
END = dt.date(2021, 1, 5)

COHORT = [f"u{i:04d}" for i in range(30)]
GENERAL = [f"u{i:04d}" for i in range(30, 400)]
# Chance that a fox or newsmax comment comes from the cohort, by (channel, after election).
COHORT_RATE = {("fox", False): 0.5, ("newsmax", False): 0.08, ("fox", True): 0.3, ("newsmax", True): 0.45}


def video_id():
    return "".join(RNG.choice(ID_CHARS) for _ in range(11))


def at(d, seconds):
    return dt.datetime(d.year, d.month, d.day, tzinfo=dt.timezone.utc) + dt.timedelta(seconds=seconds)


def ts(t):
    return t.strftime("%Y-%m-%dT%H:%M:%SZ")


def upload_dates(channel):
    before = sorted(BEFORE_START + dt.timedelta(days=RNG.randrange(1, 62)) for _ in range(5))
    after = sorted(ELECTION + dt.timedelta(days=RNG.randrange(1, 61)) for _ in range(5))
    if channel == "fox":
        # straddle the window boundary
        before[-1] = dt.date(2020, 11, 2)
        after[0] = ELECTION
    return [(d, False) for d in before] + [(d, True) for d in after]


def comment_text(channel, after, video_ids):
    words = [RNG.choice(COMMON + LEANING[channel] * 2) for _ in range(RNG.randrange(5, 15))]
    if channel in ("oann", "newsmax", "blaze") and after and RNG.random() < 0.25:
        phrase = "stop the steal" if RNG.random() < 0.7 else "stop the damn steal"
        words.insert(RNG.randrange(len(words) + 1), phrase)
    if RNG.random() < 0.12:
        words.insert(RNG.randrange(len(words) + 1), RNG.choice(SHIFTERS))
    if video_ids and RNG.random() < 0.05:
        words.append("watch " + RNG.choice(video_ids))
    if RNG.random() < 0.1:
        words.append(RNG.choice(NOISE))
    text = " ".join(words)
    return text[0].upper() + text[1:]


def transcript_text(channel, after):
    words = [RNG.choice(COMMON + LEANING[channel]) for _ in range(RNG.randrange(40, 80))]
    rate = {"fox": 0.5, "msnbc": 0.9, "oann": 0.1, "newsmax": 0.2, "blaze": 0.3}[channel]
    if RNG.random() < 0.85:
        words.insert(RNG.randrange(len(words)), "biden")
    if after and RNG.random() < rate:
        form = RNG.choice(["president elect biden", "President-elect Joe Biden", "president elect joseph r biden"])
        words.insert(RNG.randrange(len(words)), form)
    if RNG.random() < 0.1:
        words.insert(RNG.randrange(len(words)), "president elect of the senate biden")
    return " ".join(words) + "."


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    channels, videos, comments, transcripts, subscribers = [], [], [], [], []
    comment_seq = 0
    for cid, name, fringe in CHANNELS:
        channels.append({"channel_id": cid, "display_name": name, "is_fringe": fringe})
        chan_videos = []
        for i, (day, after) in enumerate(upload_dates(cid)):
            hidden = i == 3 or (cid == "oann" and i == 7)
            disabled = cid == "blaze" and i == 8
            likes = None if hidden else RNG.randrange(200, 20_000)
            dislikes = None if hidden else RNG.randrange(10, 8_000)
            offset = {dt.date(2020, 11, 2): 86_000, ELECTION: 300}.get(day) if cid == "fox" else None
            uploaded = at(day, RNG.randrange(86_400) if offset is None else offset)
            v = {
                "video_id": video_id(),
                "channel_id": cid,
                "upload_ts": ts(uploaded),
                "like_count": likes,
                "dislike_count": dislikes,
                "comments_enabled": not disabled,
            }
            chan_videos.append((v, uploaded, after))
            videos.append(v)
            if cid != "cnn":
                transcripts.append({"video_id": v["video_id"], "text": transcript_text(cid, after)})

        enabled = [(v, d, a) for v, d, a in chan_videos if v["comments_enabled"]]
        cuts = sorted(RNG.sample(range(1, COMMENTS_PER_CHANNEL), len(enabled) - 1))
        sizes = [b - a for a, b in zip([0] + cuts, cuts + [COMMENTS_PER_CHANNEL])]
        ids_so_far = [v["video_id"] for v in videos]
        for (v, uploaded, after), n in zip(enabled, sizes):
            for _ in range(n):
                rate = COHORT_RATE.get((cid, after), 0.0)
                user = RNG.choice(COHORT) if RNG.random() < rate else RNG.choice(GENERAL)
                comment_seq += 1
                comments.append({
                    "comment_id": f"c{comment_seq:05d}",
                    "video_id": v["video_id"],
                    "user_id": user,
                    "ts": ts(uploaded + dt.timedelta(seconds=RNG.randrange(86_400 * 3))),
                    "text": comment_text(cid, after, ids_so_far),
                })

        days = [BEFORE_START + dt.timedelta(days=7 * k) for k in range(19)]
        days = [d for d in days if d <= END] + [END]
        for day in days:
            if cid == "fox" and day == dt.date(2020, 10, 5):
                continue  # gap to exercise interpolation
            before = (min(day, ELECTION) - BEFORE_START).days
            after = max((day - ELECTION).days, 0)
            slow, fast = SUBSCRIBER_GROWTH[cid]
            count = SUBSCRIBER_BASE[cid] + slow * before + fast * after
            subscribers.append({"channel_id": cid, "date": day.isoformat(), "count": count})

    for name, rows in [("channels", channels), ("videos", videos), ("comments", comments),
                       ("transcripts", transcripts), ("subscribers", subscribers)]:
        with open(OUT / f"{name}.jsonl", "w", encoding="utf-8") as f:
            for r in rows:
                f.write(json.dumps(r, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main()
