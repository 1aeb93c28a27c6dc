"""Rule-based prototype bot classifier.

Each rule is a named predicate over the unnormalized feature vector plus
the raw account record; the verdict score is the weight-fraction of rules
that fired. This is the pre-model pipeline: it produces the review queue
that human annotation turns into training labels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .corpus import CorpusStore
from .features import FeatureVector, extract
from .records import Account, Post

DEFAULT_THRESHOLD = 0.5


@dataclass
class HeuristicRule:
    id: str
    predicate: Callable[[FeatureVector, Account], bool]
    weight: float = 1.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.weight <= 0:
            raise ValueError(f"rule {self.id }: weight must be > 0")


@dataclass
class HeuristicConfig:
    rules: list[HeuristicRule]
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if not self.rules:
            raise ValueError("config needs at least one rule")
        ids = [r.id for r in self.rules]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate rule ids: {ids}")
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must be in (0, 1]")

    @property
    def total_weight(self) -> float:
        return sum(r.weight for r in self.rules)


@dataclass
class HeuristicVerdict:
    username: str
    score: float
    fired_rule_ids: list[str]
    is_bot: bool


# -- rule builders ----------------------------------------------------------
# R1/R2 thresholds follow the published heuristics (>100 posts/day, a
# follower/following ratio suspiciously close to 1); R3/R4 operationalize
# spam near-duplication and metronomic cadence. All parameters are
# overridable from a config document.


def _high_volume(params):
    limit = params.get("min_posts_per_day", 100.0)

    def predicate(fv: FeatureVector, account: Account) -> bool:
        return fv["posts_per_day"] > limit

    return predicate


def _ratio_near_one(params):
    tolerance = params.get("ratio_tolerance", 0.1)
    min_following = params.get("min_following", 10)

    def predicate(fv: FeatureVector, account: Account) -> bool:
        # Raw, unsmoothed ratio; the min_following guard keeps brand-new
        # accounts from tripping the rule. The band check is written as
        # |followers - following| <= tol * following so integer counts on
        # the boundary (e.g. 110 vs 100) are not pushed out by division
        # rounding.
        if account.following is None or account.following < min_following:
            return False
        return abs(account.followers - account.following) <= tolerance * account.following

    return predicate


def _duplicate_content(params):
    min_ratio = params.get("min_duplicate_ratio", 0.5)

    def predicate(fv: FeatureVector, account: Account) -> bool:
        return fv["duplicate_content_ratio"] >= min_ratio

    return predicate


def _metronomic_cadence(params):
    max_cv = params.get("max_cv_interpost_gap", 0.1)
    min_posts = params.get("min_post_count", 20)

    def predicate(fv: FeatureVector, account: Account) -> bool:
        return fv["cv_interpost_gap"] < max_cv and fv["post_count"] >= min_posts

    return predicate


RULE_BUILDERS: dict[str, Callable[[dict], Callable]] = {
    "R1": _high_volume,
    "R2": _ratio_near_one,
    "R3": _duplicate_content,
    "R4": _metronomic_cadence,
}


def build_rule(rule_id: str, weight: float = 1.0, params: dict | None = None) -> HeuristicRule:
    if rule_id not in RULE_BUILDERS:
        raise ValueError(f"unknown rule id {rule_id!r}; known: {sorted(RULE_BUILDERS)}")
    params = dict(params or {})
    return HeuristicRule(id=rule_id, predicate=RULE_BUILDERS[rule_id](params), weight=weight, params=params)


def default_config() -> HeuristicConfig:
    return HeuristicConfig(rules=[build_rule(rid) for rid in ("R1", "R2", "R3", "R4")])


def load_config(path: str | Path) -> HeuristicConfig:
    """Load a config document: {"threshold": 0.5, "rules": [{"id", "weight", "params"}]}."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    rules = [
        build_rule(r["id"], weight=r.get("weight", 1.0), params=r.get("params"))
        for r in doc.get("rules", [])
    ]
    return HeuristicConfig(rules=rules, threshold=doc.get("threshold", DEFAULT_THRESHOLD))


# -- evaluation -------------------------------------------------------------


def evaluate_rules(fv: FeatureVector, account: Account, config: HeuristicConfig) -> list[str]:
    """Ids of the rules whose predicates hold, in config order."""
    return [r.id for r in config.rules if r.predicate(fv, account)]


def heuristic_score(fired_ids: list[str], config: HeuristicConfig) -> float:
    fired = set(fired_ids)
    unknown = fired - {r.id for r in config.rules}
    if unknown:
        raise ValueError(f"fired ids not in config: {sorted(unknown)}")
    return sum(r.weight for r in config.rules if r.id in fired) / config.total_weight


def classify(account: Account, posts: list[Post], config: HeuristicConfig | None = None) -> HeuristicVerdict:
    config = config or default_config()
    fv = extract(account, posts)
    fired = evaluate_rules(fv, account, config)
    score = heuristic_score(fired, config)
    return HeuristicVerdict(
        username=account.username,
        score=score,
        fired_rule_ids=fired,
        is_bot=score >= config.threshold,
    )


def classify_store(store: CorpusStore, config: HeuristicConfig | None = None) -> list[HeuristicVerdict]:
    """Classify every account in the store, one pass over the post shards."""
    config = config or default_config()
    grouped = store.posts_by_author()
    verdicts = []
    for account in store.iter_accounts():
        posts = grouped.get(account.username, [])
        verdicts.append(classify(account, posts, config))
    return verdicts
