"""Canonical record types shared across the toolkit.

Posts and accounts from any platform dump are normalized into these
shapes by the corpus module; everything downstream (features, heuristics,
graphs, serving) works only with canonical records.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


class PostKind(enum.Enum):
    ORIGINAL = "original"
    COMMENT = "comment"
    ECHO = "echo"


# Sentinel for account fields absent from the source dump. Imputation
# replaces every MISSING before records reach feature extraction.
MISSING = None


@dataclass
class RawRecord:
    """One undecoded line of a dump, before schema mapping."""

    source_line_number: int
    payload: dict

    def __post_init__(self):
        if self.source_line_number < 1:
            raise ValueError("line numbers start at 1")
        if not self.payload:
            raise ValueError("empty payload")


@dataclass
class Post:
    post_id: str
    author: str
    body: str
    created_at: int  # UTC epoch seconds
    kind: PostKind = PostKind.ORIGINAL
    parent_id: str | None = None
    hashtags: list[str] = field(default_factory=list)
    urls: list[str] = field(default_factory=list)
    mentions: list[str] = field(default_factory=list)
    upvotes: int = 0

    def __post_init__(self):
        if self.kind is not PostKind.ORIGINAL and not self.parent_id:
            raise ValueError(f"{self.kind.value} post {self.post_id!r} requires parent_id")
        self.hashtags = [h.lower().lstrip("#") for h in self.hashtags]

    def to_json_dict(self) -> dict:
        return {
            "post_id": self.post_id,
            "author": self.author,
            "body": self.body,
            "created_at": self.created_at,
            "kind": self.kind.value,
            "parent_id": self.parent_id,
            "hashtags": self.hashtags,
            "urls": self.urls,
            "mentions": self.mentions,
            "upvotes": self.upvotes,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Post":
        return cls(
            post_id=d["post_id"],
            author=d["author"],
            body=d["body"],
            created_at=d["created_at"],
            kind=PostKind(d["kind"]),
            parent_id=d.get("parent_id"),
            hashtags=d.get("hashtags", []),
            urls=d.get("urls", []),
            mentions=d.get("mentions", []),
            upvotes=d.get("upvotes", 0),
        )


@dataclass
class Account:
    """Profile record. Fields other than username may be MISSING (None)
    until imputation has run."""

    username: str
    followers: int | None = MISSING
    following: int | None = MISSING
    bio: str | None = MISSING
    verified: bool | None = MISSING
    created_at: int | None = MISSING

    def __post_init__(self):
        if not self.username:
            raise ValueError("username must be non-empty")

    def missing_fields(self) -> list[str]:
        return [
            name
            for name in ("followers", "following", "bio", "verified", "created_at")
            if getattr(self, name) is MISSING
        ]

    def is_complete(self) -> bool:
        return not self.missing_fields()

    def to_json_dict(self) -> dict:
        return {
            "username": self.username,
            "followers": self.followers,
            "following": self.following,
            "bio": self.bio,
            "verified": self.verified,
            "created_at": self.created_at,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Account":
        return cls(
            username=d["username"],
            followers=d.get("followers"),
            following=d.get("following"),
            bio=d.get("bio"),
            verified=d.get("verified"),
            created_at=d.get("created_at"),
        )
