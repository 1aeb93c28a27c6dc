"""Per-account feature vectors, fuzzy text similarity, and normalization.

The feature list (spec version "v1") combines basic profile attributes
with derived usage attributes: posting rates, engagement mix, cadence
regularity, hashtag diversity, and near-duplicate content share.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .records import Account, Post, PostKind

FEATURE_SPEC_VERSION = "v1"

FEATURE_NAMES = (
    "followers",
    "following",
    "follower_following_ratio_smoothed",
    "post_count",
    "comment_count",
    "echo_count",
    "account_age_days",
    "posts_per_day",
    "hashtags_per_post",
    "urls_per_post",
    "mentions_per_post",
    "duplicate_content_ratio",
    "mean_interpost_gap_seconds",
    "cv_interpost_gap",
    "hashtag_entropy",
    "bio_length_chars",
    "verified",
    "reply_fraction",
)

NUM_FEATURES = len(FEATURE_NAMES)

# Near-duplicate detection: similarity threshold and how many of the most
# recent posts are compared pairwise.
DUPLICATE_THRESHOLD = 0.9
DUPLICATE_POST_CAP = 200

BOT, HUMAN = 1, 0
LABEL_VALUES = {"bot": BOT, "human": HUMAN}


class EmptyMatrix(Exception):
    pass


class SpecVersionMismatch(Exception):
    pass


class UnknownUser(Exception):
    pass


# --------------------------------------------------------------------------
# Fuzzy similarity
# --------------------------------------------------------------------------

_URL_RE = re.compile(r"(?:https?://|www\.)\S+")


def canonicalize(text: str) -> str:
    """Lowercase, drop URLs, collapse runs of whitespace."""
    return " ".join(_URL_RE.sub(" ", text.lower()).split())


def levenshtein(a: str, b: str) -> int:
    """Exact edit distance (unit costs), bit-parallel over the first
    string. Python's unbounded ints make one code path cover any length."""
    if a == b:
        return 0
    m, n = len(a), len(b)
    if m == 0:
        return n
    if n == 0:
        return m
    peq: dict[str, int] = {}
    for i, ch in enumerate(a):
        peq[ch] = peq.get(ch, 0) | (1 << i)
    full = (1 << m) - 1
    last = 1 << (m - 1)
    vp, vn = full, 0
    dist = m
    get = peq.get
    for ch in b:
        eq = get(ch, 0)
        d0 = ((((eq & vp) + vp) & full) ^ vp) | eq | vn
        hp = vn | (full ^ (d0 | vp))
        hn = d0 & vp
        if hp & last:
            dist += 1
        elif hn & last:
            dist -= 1
        x = ((hp << 1) | 1) & full
        vp = ((hn << 1) & full) | (full ^ (d0 | x))
        vn = d0 & x
    return dist


def similarity(a: str, b: str) -> float:
    """Normalized fuzzy similarity in [0, 1] between two texts:
    1 - editDistance(canon(a), canon(b)) / max(|canon(a)|, |canon(b)|).
    Two canonically-empty texts are identical (1.0)."""
    ca, cb = canonicalize(a), canonicalize(b)
    longest = max(len(ca), len(cb))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(ca, cb) / longest


def duplicate_content_ratio(
    posts: list[Post],
    threshold: float = DUPLICATE_THRESHOLD,
    cap: int = DUPLICATE_POST_CAP,
) -> float:
    """Fraction of an account's posts (the `cap` most recent) whose best
    similarity to any other considered post reaches `threshold`."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must be in (0, 1]")
    consider = sorted(posts, key=lambda p: (-p.created_at, p.post_id))[:cap]
    n = len(consider)
    if n < 2:
        return 0.0
    counts = Counter(canonicalize(p.body) for p in consider)

    # Similarity depends only on the canonical string, so the scan runs
    # over distinct canons. A canon appearing twice is its own duplicate
    # (similarity 1.0); a cross-pair at threshold marks both whole groups.
    uniq = list(counts)
    dup = [counts[c] >= 2 for c in uniq]
    lengths = [len(c) for c in uniq]
    for i in range(len(uniq)):
        for j in range(i + 1, len(uniq)):
            if dup[i] and dup[j]:
                continue
            li, lj = lengths[i], lengths[j]
            longest = max(li, lj)
            if longest == 0:
                continue
            # Upper bound from the length difference alone.
            if 1.0 - abs(li - lj) / longest < threshold:
                continue
            if 1.0 - levenshtein(uniq[i], uniq[j]) / longest >= threshold:
                dup[i] = dup[j] = True
    return sum(counts[c] for c, d in zip(uniq, dup) if d) / n


# --------------------------------------------------------------------------
# Feature extraction
# --------------------------------------------------------------------------


@dataclass
class FeatureVector:
    username: str
    values: list[float]  # FEATURE_NAMES order
    feature_spec_version: str = FEATURE_SPEC_VERSION

    def __getitem__(self, name: str) -> float:
        return self.values[FEATURE_NAMES.index(name)]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FEATURE_NAMES, self.values))


def extract(
    account: Account,
    posts: list[Post],
    dup_threshold: float = DUPLICATE_THRESHOLD,
    dup_cap: int = DUPLICATE_POST_CAP,
) -> FeatureVector:
    """Compute the v1 feature vector for one imputed account.

    The active span is max(1 day, last - first post time); an account
    with no posts gets zero for every rate/derived feature.
    """
    if not account.is_complete():
        raise ValueError(f"account {account.username!r} has missing fields; impute first")
    n_items = len(posts)
    post_count = sum(1 for p in posts if p.kind is PostKind.ORIGINAL)
    comment_count = sum(1 for p in posts if p.kind is PostKind.COMMENT)
    echo_count = n_items - post_count - comment_count

    followers = float(account.followers)
    following = float(account.following)
    ratio_smoothed = (followers + 1.0) / (following + 1.0)

    if n_items > 0:
        times = sorted(p.created_at for p in posts)
        span_days = max(1.0, (times[-1] - times[0]) / 86400.0)
        age_days = max(0.0, (times[-1] - account.created_at) / 86400.0)
        per_day = n_items / span_days
        hashtags_per_post = sum(len(p.hashtags) for p in posts) / n_items
        urls_per_post = sum(len(p.urls) for p in posts) / n_items
        mentions_per_post = sum(len(p.mentions) for p in posts) / n_items
        dup_ratio = duplicate_content_ratio(posts, dup_threshold, dup_cap)
        gaps = [times[i + 1] - times[i] for i in range(n_items - 1)]
        mean_gap = sum(gaps) / len(gaps) if gaps else 0.0
        if len(gaps) >= 2 and mean_gap > 0:
            var = sum((g - mean_gap) ** 2 for g in gaps) / len(gaps)
            cv_gap = math.sqrt(var) / mean_gap
        else:
            cv_gap = 0.0
        tag_counts = Counter(tag for p in posts for tag in p.hashtags)
        total_tags = sum(tag_counts.values())
        entropy = 0.0
        if total_tags:
            for c in tag_counts.values():
                p = c / total_tags
                entropy -= p * math.log(p)
            entropy = max(0.0, entropy)
        reply_fraction = comment_count / n_items
    else:
        age_days = per_day = hashtags_per_post = urls_per_post = 0.0
        mentions_per_post = dup_ratio = mean_gap = cv_gap = entropy = 0.0
        reply_fraction = 0.0

    values = [
        followers,
        following,
        ratio_smoothed,
        float(post_count),
        float(comment_count),
        float(echo_count),
        age_days,
        per_day,
        hashtags_per_post,
        urls_per_post,
        mentions_per_post,
        dup_ratio,
        float(mean_gap),
        cv_gap,
        entropy,
        float(len(account.bio)),
        1.0 if account.verified else 0.0,
        reply_fraction,
    ]
    for name, v in zip(FEATURE_NAMES, values):
        if not math.isfinite(v):
            raise ValueError(f"non-finite feature {name}={v!r} for {account.username!r}")
    return FeatureVector(username=account.username, values=values)


# --------------------------------------------------------------------------
# Dataset assembly and normalization
# --------------------------------------------------------------------------


@dataclass
class FeatureMatrix:
    rows: np.ndarray  # (n, NUM_FEATURES) float64
    usernames: list[str]
    labels: np.ndarray | None = None  # parallel ints, BOT/HUMAN
    feature_spec_version: str = FEATURE_SPEC_VERSION

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2 or self.rows.shape[1] != NUM_FEATURES:
            raise ValueError(f"feature matrix must be (n, {NUM_FEATURES})")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if len(self.labels) != len(self.rows):
                raise ValueError("labels length must match row count")

    def __len__(self):
        return len(self.rows)


@dataclass
class NormalizationParams:
    mins: np.ndarray
    maxs: np.ndarray
    feature_spec_version: str = FEATURE_SPEC_VERSION

    def __post_init__(self):
        self.mins = np.asarray(self.mins, dtype=np.float64)
        self.maxs = np.asarray(self.maxs, dtype=np.float64)
        if np.any(self.mins > self.maxs):
            raise ValueError("normalizer min > max")

    def to_dict(self) -> dict:
        return {
            "feature_spec_version": self.feature_spec_version,
            "mins": self.mins.tolist(),
            "maxs": self.maxs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationParams":
        return cls(
            mins=d["mins"], maxs=d["maxs"],
            feature_spec_version=d["feature_spec_version"],
        )


def fit_normalizer(matrix: FeatureMatrix) -> NormalizationParams:
    """Observed per-feature min/max over the training rows only."""
    if len(matrix) == 0:
        raise EmptyMatrix("cannot fit a normalizer on an empty matrix")
    return NormalizationParams(
        mins=matrix.rows.min(axis=0),
        maxs=matrix.rows.max(axis=0),
        feature_spec_version=matrix.feature_spec_version,
    )


def normalize_rows(rows: np.ndarray, params: NormalizationParams) -> np.ndarray:
    span = params.maxs - params.mins
    safe = np.where(span == 0, 1.0, span)
    out = (np.asarray(rows, dtype=np.float64) - params.mins) / safe
    out = np.where(span == 0, 0.0, out)  # constant training feature maps to 0
    return np.clip(out, 0.0, 1.0)


def apply_normalizer(matrix: FeatureMatrix, params: NormalizationParams) -> FeatureMatrix:
    """Min-max scale into [0, 1], clamping values outside the fitted range."""
    if matrix.feature_spec_version != params.feature_spec_version:
        raise SpecVersionMismatch(
            f"matrix is {matrix.feature_spec_version}, normalizer is {params.feature_spec_version}"
        )
    return FeatureMatrix(
        rows=normalize_rows(matrix.rows, params),
        usernames=list(matrix.usernames),
        labels=None if matrix.labels is None else matrix.labels.copy(),
        feature_spec_version=matrix.feature_spec_version,
    )


def normalize_vector(fv: FeatureVector, params: NormalizationParams) -> np.ndarray:
    if fv.feature_spec_version != params.feature_spec_version:
        raise SpecVersionMismatch(
            f"vector is {fv.feature_spec_version}, normalizer is {params.feature_spec_version}"
        )
    return normalize_rows(np.asarray(fv.values, dtype=np.float64)[None, :], params)[0]


def build_dataset(store, labeled) -> FeatureMatrix:
    """One feature row per labeled account, rows in label-file order."""
    rows = []
    usernames = []
    labels = []
    for username, label in labeled.entries:
        account = store.account(username)
        if account is None:
            raise UnknownUser(f"labeled user {username!r} not in store")
        fv = extract(account, store.posts_for(username))
        rows.append(fv.values)
        usernames.append(username)
        labels.append(LABEL_VALUES[label])
    if not rows:
        raise EmptyMatrix("no labeled rows")
    return FeatureMatrix(
        rows=np.asarray(rows, dtype=np.float64),
        usernames=usernames,
        labels=np.asarray(labels, dtype=np.int64),
    )
