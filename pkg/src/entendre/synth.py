"""Deterministic synthetic corpus generator.

Builds an NDJSON post/account corpus with planted automated accounts whose
behavior matches the signals the detector looks for: extreme posting volume,
a follower/following ratio pinned near 1, near-duplicate spam bodies that
differ only in tracking URLs, and metronomic timing. Human accounts get
low-volume, jittered, distinct-body activity. Output is byte-identical for
a given spec (single seeded generator, fixed iteration order).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# 2020-11-03T00:00:00Z, the reference end of the generated activity window.
EPOCH_END = 1604361600

WORDS = (
    "the free press is under attack stand with patriots tonight "
    "local news family dinner weekend game score update weather rain "
    "coffee morning run lake photo dog walk music show ticket live "
    "meeting notes project launch build release friday thread opinion "
    "market open close stock chart garden tomato harvest recipe bread "
    "church sunday school football win loss playoff draft trade team"
).split()

HASHTAG_VOCAB = (
    "qanon trump antilgbt christian wwg1wga maga stopthesteal news "
    "family sports music faith freedom truth local weather football"
).split()

SPAM_TEMPLATES = (
    "breaking they dont want you to see this share before its deleted",
    "the storm is here patriots know what comes next trust the plan",
    "wake up america the truth is finally coming out stand strong",
)


@dataclass
class SyntheticCorpusSpec:
    humans: int = 900
    bots: int = 100
    seed: int = 0
    human_posts_mean: float = 6.0
    human_window_days: float = 30.0
    bot_posts: int = 240
    bot_span_days: float = 2.0
    duplicate_rate: float = 0.7
    cadence_jitter: float = 0.02
    mention_rate: float = 0.2
    comment_rate: float = 0.3
    bot_engagement_rate: float = 0.15
    missing_field_rate: float = 0.02
    hashtags: tuple[str, ...] = tuple(HASHTAG_VOCAB)

    def __post_init__(self):
        if self.humans < 0 or self.bots < 0 or self.humans + self.bots == 0:
            raise ValueError("need at least one account")
        if self.bot_posts < 25:
            raise ValueError("bot_posts must be >= 25 to express the volume signals")
        if not 0.0 <= self.duplicate_rate <= 1.0:
            raise ValueError("duplicate_rate must be in [0, 1]")


@dataclass
class SynthResult:
    posts_path: Path
    accounts_path: Path
    labels_path: Path
    num_posts: int
    num_accounts: int
    num_bots: int


def _sentence(rng: np.random.Generator) -> str:
    n = int(rng.integers(5, 13))
    return " ".join(WORDS[i] for i in rng.integers(0, len(WORDS), n))


def _day_count(spec: SyntheticCorpusSpec, rng: np.random.Generator) -> int:
    return 1 + int(rng.poisson(max(spec.human_posts_mean - 1.0, 0.0)))


def generate(spec: SyntheticCorpusSpec, out_dir: str | Path) -> SynthResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)

    humans = [f"human_{i:05d}" for i in range(spec.humans)]
    bots = [f"bot_{i:04d}" for i in range(spec.bots)]

    accounts: list[dict] = []
    for name in humans:
        following = int(rng.integers(20, 500))
        # Keep the ratio well away from 1 so the ratio rule cannot fire.
        factor = float(rng.uniform(1.3, 5.0)) if rng.random() < 0.5 else float(rng.uniform(0.1, 0.75))
        followers = max(0, int(round(following * factor)))
        rec = {
            "username": name,
            "followers": followers,
            "following": following,
            "bio": _sentence(rng) if rng.random() < 0.8 else "",
            "verified": bool(rng.random() < 0.02),
            "created_at": int(EPOCH_END - rng.integers(200, 1500) * 86400),
        }
        if rng.random() < spec.missing_field_rate:
            # Drop one optional field to exercise the imputation path.
            victim = ("followers", "following", "bio", "created_at")[int(rng.integers(0, 4))]
            del rec[victim]
        accounts.append(rec)
    for name in bots:
        following = int(rng.integers(50, 500))
        followers = int(round(following * float(rng.uniform(0.96, 1.04))))
        accounts.append(
            {
                "username": name,
                "followers": followers,
                "following": following,
                "bio": "",
                "verified": False,
                "created_at": int(EPOCH_END - rng.integers(10, 120) * 86400),
            }
        )

    all_names = humans + bots
    posts: list[dict] = []
    post_seq = 0

    def next_id() -> str:
        nonlocal post_seq
        post_seq += 1
        return f"p{post_seq:07d}"

    window = spec.human_window_days * 86400.0
    human_originals: list[tuple[str, str, int]] = []  # (post_id, author, created_at)

    # Pass 1: human originals, so comments always have an existing parent.
    human_post_times: dict[str, list[float]] = {}
    for name in humans:
        n = _day_count(spec, rng)
        times = sorted(float(t) for t in rng.uniform(EPOCH_END - window, EPOCH_END, n))
        human_post_times[name] = times
        for t in times:
            body = _sentence(rng)
            hashtags = []
            if rng.random() < 0.3:
                hashtags = [spec.hashtags[int(rng.integers(0, len(spec.hashtags)))]]
                body += " #" + hashtags[0]
            urls = []
            if rng.random() < 0.15:
                urls = [f"https://example.com/a/{int(rng.integers(0, 10 ** 6))}"]
                body += " " + urls[0]
            mentions = []
            if rng.random() < spec.mention_rate:
                other = all_names[int(rng.integers(0, len(all_names)))]
                if other != name:
                    mentions = [other]
                    body += " @" + other
            pid = next_id()
            posts.append(
                {
                    "post_id": pid,
                    "author": name,
                    "body": body,
                    "created_at": int(t),
                    "kind": "original",
                    "hashtags": hashtags,
                    "urls": urls,
                    "mentions": mentions,
                    "upvotes": int(rng.integers(0, 50)),
                }
            )
            human_originals.append((pid, name, int(t)))

    # Pass 2: human comments on other humans' originals.
    for name in humans:
        if not human_originals:
            break
        n_comments = int(rng.binomial(max(len(human_post_times[name]), 1), spec.comment_rate))
        for _ in range(n_comments):
            parent_id, parent_author, parent_t = human_originals[int(rng.integers(0, len(human_originals)))]
            if parent_author == name:
                continue
            # Replies land after the post they answer.
            t = int(rng.uniform(parent_t, EPOCH_END))
            posts.append(
                {
                    "post_id": next_id(),
                    "author": name,
                    "body": _sentence(rng),
                    "created_at": t,
                    "kind": "comment",
                    "parent_id": parent_id,
                    "hashtags": [],
                    "urls": [],
                    "mentions": [],
                    "upvotes": int(rng.integers(0, 10)),
                }
            )

    # Pass 3: bot activity. Metronomic originals, most bodies from a small
    # set of spam templates varied only by URL so canonical forms collide.
    bot_originals: list[tuple[str, str, int]] = []
    for name in bots:
        span = spec.bot_span_days * 86400.0
        start = EPOCH_END - span
        n = spec.bot_posts
        gap = span / n
        t = start
        for i in range(n):
            t += gap * (1.0 + float(rng.normal(0.0, spec.cadence_jitter)))
            if rng.random() < spec.duplicate_rate:
                # Spam reposts differ only in the tracking URL; hashtags are
                # pinned per template so the canonical bodies collide.
                t_idx = int(rng.integers(0, len(SPAM_TEMPLATES)))
                url = f"https://track.example/r/{int(rng.integers(0, 10 ** 9))}"
                hashtags = [spec.hashtags[t_idx % len(spec.hashtags)],
                            spec.hashtags[(t_idx + 1) % len(spec.hashtags)]]
                body = f"{SPAM_TEMPLATES[t_idx]} {url} " + " ".join("#" + h for h in hashtags)
                urls = [url]
            else:
                body = _sentence(rng)
                urls = []
                hashtags = [
                    spec.hashtags[int(rng.integers(0, min(5, len(spec.hashtags))))],
                    spec.hashtags[int(rng.integers(0, len(spec.hashtags)))],
                ]
                body += " " + " ".join("#" + h for h in hashtags)
            pid = next_id()
            # The jittered walk can drift a hair past the window end; clamp
            # so replies always have room after their parent.
            t_post = min(int(t), EPOCH_END - 1)
            posts.append(
                {
                    "post_id": pid,
                    "author": name,
                    "body": body,
                    "created_at": t_post,
                    "kind": "original",
                    "hashtags": hashtags,
                    "urls": urls,
                    "mentions": [],
                    "upvotes": int(rng.integers(0, 3)),
                }
            )
            bot_originals.append((pid, name, t_post))

    # Pass 4: exposure edges. Some humans engage with bot content, which is
    # what the network view is meant to surface.
    for name in humans:
        if bot_originals and rng.random() < spec.bot_engagement_rate:
            parent_id, _, parent_t = bot_originals[int(rng.integers(0, len(bot_originals)))]
            posts.append(
                {
                    "post_id": next_id(),
                    "author": name,
                    "body": _sentence(rng),
                    "created_at": int(rng.uniform(parent_t, EPOCH_END)),
                    "kind": "comment",
                    "parent_id": parent_id,
                    "hashtags": [],
                    "urls": [],
                    "mentions": [],
                    "upvotes": 0,
                }
            )

    posts_path = out_dir / "posts.ndjson"
    accounts_path = out_dir / "accounts.ndjson"
    labels_path = out_dir / "labels.csv"
    with open(posts_path, "wb") as fh:
        for rec in posts:
            fh.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")).encode("utf-8") + b"\n")
    with open(accounts_path, "wb") as fh:
        for rec in accounts:
            fh.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")).encode("utf-8") + b"\n")
    with open(labels_path, "wb") as fh:
        fh.write(b"username,label\n")
        for name in humans:
            fh.write(f"{name},human\n".encode("utf-8"))
        for name in bots:
            fh.write(f"{name},bot\n".encode("utf-8"))

    return SynthResult(
        posts_path=posts_path,
        accounts_path=accounts_path,
        labels_path=labels_path,
        num_posts=len(posts),
        num_accounts=len(accounts),
        num_bots=len(bots),
    )
