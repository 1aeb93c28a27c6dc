"""Dump ingestion and the on-disk corpus store.

A dump is a pair of newline-delimited record streams (posts, accounts) in
whatever schema the source platform uses. A SchemaMapping adapts that
schema onto the canonical records; ingestion streams the input into a
store directory laid out as:

    store/posts-<shard>.ndjson   canonical posts, sharded in input order
    store/accounts.ndjson        canonical accounts
    store/index                  username/post_id -> (file, byte offset)
    store/meta                   counts + schema hash

Malformed lines never abort an ingest run; they are counted per stream.
The store is deterministic: the same input and mapping always produce
byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import shutil
import statistics
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator

from .records import MISSING, Account, Post, PostKind, RawRecord

SHARD_SIZE = 50_000

POST_REQUIRED_FIELDS = ("post_id", "author", "body", "created_at")
POST_OPTIONAL_FIELDS = ("kind", "parent_id", "hashtags", "urls", "mentions", "upvotes")
ACCOUNT_FIELDS = ("username", "followers", "following", "bio", "verified", "created_at")

NUMERIC_ACCOUNT_FIELDS = ("followers", "following", "created_at")
BOOLEAN_ACCOUNT_FIELDS = ("verified",)
TEXT_ACCOUNT_FIELDS = ("bio",)


class CorpusError(Exception):
    pass


class MalformedRecord(CorpusError):
    pass


class MissingRequiredField(CorpusError):
    pass


class UnknownKindValue(CorpusError):
    pass


class InvalidMapping(CorpusError):
    pass


class ConflictingLabels(CorpusError):
    pass


class EmptyLabelSet(CorpusError):
    pass


class MissingFeatureColumn(CorpusError):
    pass


def parse_record(line: str, line_number: int = 1) -> RawRecord | None:
    """Decode one line of a dump. Blank lines return None (skipped);
    anything that is not a JSON object raises MalformedRecord."""
    if not line.strip():
        return None
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"line {line_number}: {exc}") from exc
    if not isinstance(payload, dict) or not payload:
        raise MalformedRecord(f"line {line_number}: record is not a non-empty object")
    return RawRecord(source_line_number=line_number, payload=payload)


@dataclass
class SchemaMapping:
    """Declarative adapter from a source schema onto canonical fields.

    field_map maps canonical field names to dotted paths into the source
    payload (e.g. "user.screen_name"). target picks which canonical record
    this mapping produces.
    """

    target: str  # "post" or "account"
    field_map: dict[str, str]
    kind_map: dict[str, PostKind] = field(default_factory=dict)
    timestamp_format: str = "epoch_seconds"

    def __post_init__(self):
        if self.target not in ("post", "account"):
            raise InvalidMapping(f"unknown mapping target {self.target!r}")
        if self.timestamp_format not in ("epoch_seconds", "epoch_millis", "iso8601"):
            raise InvalidMapping(f"unknown timestamp_format {self.timestamp_format!r}")
        if self.target == "post":
            missing = [f for f in POST_REQUIRED_FIELDS if f not in self.field_map]
            if missing:
                raise InvalidMapping(f"post mapping lacks required fields: {missing}")
        else:
            if "username" not in self.field_map:
                raise InvalidMapping("account mapping lacks required field: username")

    @classmethod
    def identity_post(cls) -> "SchemaMapping":
        fields = POST_REQUIRED_FIELDS + POST_OPTIONAL_FIELDS
        return cls(
            target="post",
            field_map={f: f for f in fields},
            kind_map={k.value: k for k in PostKind},
        )

    @classmethod
    def identity_account(cls) -> "SchemaMapping":
        return cls(target="account", field_map={f: f for f in ACCOUNT_FIELDS})

    @classmethod
    def from_dict(cls, target: str, d: dict) -> "SchemaMapping":
        kind_map = {}
        for src_value, canon in d.get("kind_map", {}).items():
            try:
                kind_map[src_value] = PostKind(canon)
            except ValueError as exc:
                raise InvalidMapping(f"kind_map value {canon!r} is not a post kind") from exc
        return cls(
            target=target,
            field_map=dict(d.get("field_map", {})),
            kind_map=kind_map,
            timestamp_format=d.get("timestamp_format", "epoch_seconds"),
        )

    def to_dict(self) -> dict:
        return {
            "field_map": dict(self.field_map),
            "kind_map": {k: v.value for k, v in self.kind_map.items()},
            "timestamp_format": self.timestamp_format,
        }


def load_mapping_config(path: str | Path) -> tuple[SchemaMapping, SchemaMapping]:
    """Read a mapping config document: {"posts": {...}, "accounts": {...}}."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if "posts" not in doc or "accounts" not in doc:
        raise InvalidMapping("mapping config needs both 'posts' and 'accounts' sections")
    return (
        SchemaMapping.from_dict("post", doc["posts"]),
        SchemaMapping.from_dict("account", doc["accounts"]),
    )


def identity_mapping_config() -> dict:
    return {
        "posts": SchemaMapping.identity_post().to_dict(),
        "accounts": SchemaMapping.identity_account().to_dict(),
    }


def _dig(payload: dict, path: str):
    cur = payload
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return MISSING
        cur = cur[part]
    return cur


def _to_epoch_seconds(value, fmt: str) -> int:
    if fmt == "epoch_seconds":
        return int(value)
    if fmt == "epoch_millis":
        return int(value) // 1000
    # iso8601; Python <3.11 fromisoformat rejects a trailing Z
    text = str(value).replace("Z", "+00:00")
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _as_string_list(value) -> list[str]:
    if value is MISSING:
        return []
    if isinstance(value, str):
        return [value] if value else []
    return [str(v) for v in value]


def map_record(raw: RawRecord, mapping: SchemaMapping) -> Post | Account:
    """Apply a SchemaMapping to one raw record."""
    if mapping.target == "post":
        return _map_post(raw, mapping)
    return _map_account(raw, mapping)


def _map_post(raw: RawRecord, mapping: SchemaMapping) -> Post:
    got = {canon: _dig(raw.payload, src) for canon, src in mapping.field_map.items()}
    for f in POST_REQUIRED_FIELDS:
        if got.get(f) is MISSING:
            raise MissingRequiredField(f"line {raw.source_line_number}: post field {f!r} missing")
    kind = PostKind.ORIGINAL
    kind_value = got.get("kind", MISSING)
    if kind_value is not MISSING:
        key = str(kind_value)
        if key not in mapping.kind_map:
            raise UnknownKindValue(f"line {raw.source_line_number}: kind value {key!r} not in kind_map")
        kind = mapping.kind_map[key]
    parent_id = got.get("parent_id", MISSING)
    if kind is not PostKind.ORIGINAL and parent_id is MISSING:
        raise MissingRequiredField(
            f"line {raw.source_line_number}: {kind.value} post lacks parent_id"
        )
    try:
        created_at = _to_epoch_seconds(got["created_at"], mapping.timestamp_format)
        upvotes = int(got["upvotes"]) if got.get("upvotes") is not MISSING else 0
    except (TypeError, ValueError) as exc:
        raise MalformedRecord(f"line {raw.source_line_number}: {exc}") from exc
    return Post(
        post_id=str(got["post_id"]),
        author=str(got["author"]),
        body=str(got["body"]),
        created_at=created_at,
        kind=kind,
        parent_id=str(parent_id) if parent_id is not MISSING else None,
        hashtags=_as_string_list(got.get("hashtags", MISSING)),
        urls=_as_string_list(got.get("urls", MISSING)),
        mentions=_as_string_list(got.get("mentions", MISSING)),
        upvotes=max(0, upvotes),
    )


def _map_account(raw: RawRecord, mapping: SchemaMapping) -> Account:
    got = {canon: _dig(raw.payload, src) for canon, src in mapping.field_map.items()}
    if got.get("username") is MISSING:
        raise MissingRequiredField(f"line {raw.source_line_number}: account field 'username' missing")
    try:
        followers = int(got["followers"]) if got.get("followers") is not MISSING else MISSING
        following = int(got["following"]) if got.get("following") is not MISSING else MISSING
        created_at = (
            _to_epoch_seconds(got["created_at"], mapping.timestamp_format)
            if got.get("created_at") is not MISSING
            else MISSING
        )
    except (TypeError, ValueError) as exc:
        raise MalformedRecord(f"line {raw.source_line_number}: {exc}") from exc
    verified = got.get("verified", MISSING)
    if verified is not MISSING:
        verified = bool(verified) if not isinstance(verified, str) else verified.lower() == "true"
    bio = got.get("bio", MISSING)
    return Account(
        username=str(got["username"]),
        followers=followers,
        following=following,
        bio=str(bio) if bio is not MISSING else MISSING,
        verified=verified,
        created_at=created_at,
    )


@dataclass
class StreamCounts:
    total_lines: int = 0
    accepted: int = 0
    rejected: int = 0
    blank: int = 0
    reject_reasons: Counter = field(default_factory=Counter)

    def as_dict(self) -> dict:
        return {
            "total_lines": self.total_lines,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "blank": self.blank,
            "reject_reasons": dict(sorted(self.reject_reasons.items())),
        }


@dataclass
class IngestReport:
    posts: StreamCounts
    accounts: StreamCounts

    def as_dict(self) -> dict:
        return {"posts": self.posts.as_dict(), "accounts": self.accounts.as_dict()}


def _iter_lines(source) -> Iterator[str]:
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            yield from fh
    else:
        yield from source


def _record_bytes(d: dict) -> bytes:
    return (json.dumps(d, ensure_ascii=False, separators=(",", ":")) + "\n").encode("utf-8")


def schema_hash(post_mapping: SchemaMapping, account_mapping: SchemaMapping) -> str:
    doc = json.dumps(
        {"posts": post_mapping.to_dict(), "accounts": account_mapping.to_dict()},
        sort_keys=True,
    )
    return hashlib.sha256(doc.encode("utf-8")).hexdigest()[:16]


def ingest(
    posts,
    accounts,
    out_dir: str | Path,
    post_mapping: SchemaMapping | None = None,
    account_mapping: SchemaMapping | None = None,
    shard_size: int = SHARD_SIZE,
) -> tuple["CorpusStore", IngestReport]:
    """Stream two dumps into a fresh store directory.

    posts/accounts may be file paths or iterables of lines. A partial
    store from an interrupted earlier run is replaced wholesale, never
    merged into.
    """
    post_mapping = post_mapping or SchemaMapping.identity_post()
    account_mapping = account_mapping or SchemaMapping.identity_account()
    out_dir = Path(out_dir)
    work = out_dir.with_name(out_dir.name + ".partial")
    if work.exists():
        shutil.rmtree(work)
    work.mkdir(parents=True)

    index = {"accounts": {}, "posts_by_user": {}, "posts_by_id": {}}
    post_counts = StreamCounts()
    account_counts = StreamCounts()

    shard_idx = 0
    in_shard = 0
    shard_fh = open(work / f"posts-{shard_idx:05d}.ndjson", "wb")
    try:
        for lineno, line in enumerate(_iter_lines(posts), start=1):
            post_counts.total_lines += 1
            try:
                raw = parse_record(line, lineno)
            except MalformedRecord:
                post_counts.rejected += 1
                post_counts.reject_reasons["malformed"] += 1
                continue
            if raw is None:
                post_counts.blank += 1
                continue
            try:
                post = _map_post(raw, post_mapping)
            except (MissingRequiredField, UnknownKindValue, MalformedRecord) as exc:
                post_counts.rejected += 1
                post_counts.reject_reasons[type(exc).__name__] += 1
                continue
            if post.post_id in index["posts_by_id"]:
                post_counts.rejected += 1
                post_counts.reject_reasons["duplicate_post_id"] += 1
                continue
            if in_shard >= shard_size:
                shard_fh.close()
                shard_idx += 1
                in_shard = 0
                shard_fh = open(work / f"posts-{shard_idx:05d}.ndjson", "wb")
            offset = shard_fh.tell()
            shard_fh.write(_record_bytes(post.to_json_dict()))
            in_shard += 1
            loc = [shard_idx, offset]
            index["posts_by_id"][post.post_id] = loc
            index["posts_by_user"].setdefault(post.author, []).append(loc)
            post_counts.accepted += 1
    finally:
        shard_fh.close()

    with open(work / "accounts.ndjson", "wb") as acc_fh:
        for lineno, line in enumerate(_iter_lines(accounts), start=1):
            account_counts.total_lines += 1
            try:
                raw = parse_record(line, lineno)
            except MalformedRecord:
                account_counts.rejected += 1
                account_counts.reject_reasons["malformed"] += 1
                continue
            if raw is None:
                account_counts.blank += 1
                continue
            try:
                account = _map_account(raw, account_mapping)
            except (MissingRequiredField, MalformedRecord) as exc:
                account_counts.rejected += 1
                account_counts.reject_reasons[type(exc).__name__] += 1
                continue
            if account.username in index["accounts"]:
                account_counts.rejected += 1
                account_counts.reject_reasons["duplicate_username"] += 1
                continue
            index["accounts"][account.username] = acc_fh.tell()
            acc_fh.write(_record_bytes(account.to_json_dict()))
            account_counts.accepted += 1

    with open(work / "index", "wb") as fh:
        fh.write(json.dumps(index, ensure_ascii=False, separators=(",", ":")).encode("utf-8"))
    meta = {
        "posts": post_counts.as_dict(),
        "accounts": account_counts.as_dict(),
        "num_shards": shard_idx + 1,
        "schema_hash": schema_hash(post_mapping, account_mapping),
        "imputed": False,
    }
    with open(work / "meta", "wb") as fh:
        fh.write(json.dumps(meta, indent=2, sort_keys=True).encode("utf-8"))

    if out_dir.exists():
        shutil.rmtree(out_dir)
    os.replace(work, out_dir)
    return CorpusStore(out_dir), IngestReport(posts=post_counts, accounts=account_counts)


class CorpusStore:
    """Read interface over an ingested store directory."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        if not (self.directory / "meta").exists():
            raise CorpusError(f"{self.directory} is not a corpus store (no meta file)")
        with open(self.directory / "meta", encoding="utf-8") as fh:
            self.meta = json.load(fh)
        with open(self.directory / "index", encoding="utf-8") as fh:
            self._index = json.load(fh)

    # -- lookups ----------------------------------------------------------

    def _shard_path(self, shard: int) -> Path:
        return self.directory / f"posts-{shard:05d}.ndjson"

    def _read_post_at(self, loc) -> Post:
        shard, offset = loc
        with open(self._shard_path(shard), "rb") as fh:
            fh.seek(offset)
            return Post.from_json_dict(json.loads(fh.readline().decode("utf-8")))

    def account(self, username: str) -> Account | None:
        offset = self._index["accounts"].get(username)
        if offset is None:
            return None
        with open(self.directory / "accounts.ndjson", "rb") as fh:
            fh.seek(offset)
            return Account.from_json_dict(json.loads(fh.readline().decode("utf-8")))

    def post(self, post_id: str) -> Post | None:
        loc = self._index["posts_by_id"].get(post_id)
        return self._read_post_at(loc) if loc is not None else None

    def posts_for(self, username: str) -> list[Post]:
        locs = self._index["posts_by_user"].get(username, [])
        if not locs:
            return []
        posts = []
        by_shard: dict[int, list[int]] = {}
        for shard, offset in locs:
            by_shard.setdefault(shard, []).append(offset)
        for shard in sorted(by_shard):
            with open(self._shard_path(shard), "rb") as fh:
                for offset in sorted(by_shard[shard]):
                    fh.seek(offset)
                    posts.append(Post.from_json_dict(json.loads(fh.readline().decode("utf-8"))))
        return posts

    def has_account(self, username: str) -> bool:
        return username in self._index["accounts"]

    def usernames(self) -> list[str]:
        return list(self._index["accounts"].keys())

    def post_count(self) -> int:
        return self.meta["posts"]["accepted"]

    def account_count(self) -> int:
        return self.meta["accounts"]["accepted"]

    def iter_posts(self) -> Iterator[Post]:
        for shard in range(self.meta["num_shards"]):
            path = self._shard_path(shard)
            if not path.exists():
                continue
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    yield Post.from_json_dict(json.loads(line))

    def iter_accounts(self) -> Iterator[Account]:
        with open(self.directory / "accounts.ndjson", encoding="utf-8") as fh:
            for line in fh:
                yield Account.from_json_dict(json.loads(line))

    def posts_by_author(self) -> dict[str, list[Post]]:
        """One pass over all shards, grouped by author (bulk paths)."""
        grouped: dict[str, list[Post]] = {}
        for post in self.iter_posts():
            grouped.setdefault(post.author, []).append(post)
        return grouped


@dataclass
class ImputationReport:
    imputed_counts: dict[str, int]
    fill_values: dict
    warnings: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "imputed_counts": dict(self.imputed_counts),
            "fill_values": dict(self.fill_values),
            "warnings": list(self.warnings),
        }


def imputation_fill_values(accounts: Iterable[Account]) -> tuple[dict, list[str]]:
    """Per-field fill values from a population of accounts: median for
    numeric fields, False for booleans, empty string for text."""
    present: dict[str, list] = {f: [] for f in NUMERIC_ACCOUNT_FIELDS}
    any_account = False
    for acc in accounts:
        any_account = True
        for f in NUMERIC_ACCOUNT_FIELDS:
            v = getattr(acc, f)
            if v is not MISSING:
                present[f].append(v)
    if not any_account:
        raise MissingFeatureColumn("no accounts to impute from")
    warnings = []
    fills: dict = {}
    for f in NUMERIC_ACCOUNT_FIELDS:
        if not present[f]:
            raise MissingFeatureColumn(f"account field {f!r} missing for every account")
        fills[f] = int(round(statistics.median(present[f])))
    for f in BOOLEAN_ACCOUNT_FIELDS:
        fills[f] = False
    for f in TEXT_ACCOUNT_FIELDS:
        fills[f] = ""
    return fills, warnings


def impute_missing(store: CorpusStore) -> ImputationReport:
    """Fill every missing account field in place (atomic rewrite of the
    accounts file). Numeric fields take the population median, booleans
    False, text empty."""
    accounts = list(store.iter_accounts())
    fills, warnings = imputation_fill_values(accounts)
    for f in BOOLEAN_ACCOUNT_FIELDS:
        if accounts and all(getattr(a, f) is MISSING for a in accounts):
            warnings.append(f"account field {f!r} missing for every account; defaulting to false")
    imputed_counts: Counter = Counter()

    offsets: dict[str, int] = {}
    tmp = store.directory / "accounts.ndjson.tmp"
    with open(tmp, "wb") as fh:
        for acc in accounts:
            for f in acc.missing_fields():
                setattr(acc, f, fills[f])
                imputed_counts[f] += 1
            offsets[acc.username] = fh.tell()
            fh.write(_record_bytes(acc.to_json_dict()))
    os.replace(tmp, store.directory / "accounts.ndjson")

    store._index["accounts"] = offsets
    with open(store.directory / "index", "wb") as fh:
        fh.write(json.dumps(store._index, ensure_ascii=False, separators=(",", ":")).encode("utf-8"))
    store.meta["imputed"] = True
    with open(store.directory / "meta", "wb") as fh:
        fh.write(json.dumps(store.meta, indent=2, sort_keys=True).encode("utf-8"))
    return ImputationReport(
        imputed_counts=dict(sorted(imputed_counts.items())),
        fill_values=fills,
        warnings=warnings,
    )


@dataclass
class LabeledDataset:
    """Usernames joined with bot/human labels, in label-file order."""

    entries: list[tuple[str, str]]  # (username, "bot" | "human")
    store: CorpusStore | None = None
    warnings: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)


def apply_labels(store: CorpusStore, labels_csv: str | Path) -> LabeledDataset:
    """Join a labels CSV (header `username,label`, label in {bot, human})
    against the store. Labels for unknown users are skipped with a
    warning; the same user labeled both ways is an error."""
    seen: dict[str, str] = {}
    order: list[str] = []
    with open(labels_csv, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["username", "label"]:
            raise EmptyLabelSet(f"{labels_csv}: expected header 'username,label'")
        for row in reader:
            if not row or not "".join(row).strip():
                continue
            if len(row) != 2:
                raise ConflictingLabels(f"{labels_csv}: malformed row {row!r}")
            username, label = row[0].strip(), row[1].strip().lower()
            if label not in ("bot", "human"):
                raise ConflictingLabels(f"{labels_csv}: label {label!r} for {username!r} not in {{bot, human}}")
            if username in seen:
                if seen[username] != label:
                    raise ConflictingLabels(f"user {username!r} labeled both {seen[username]!r} and {label!r}")
                continue
            seen[username] = label
            order.append(username)

    warnings = []
    entries = []
    for username in order:
        if store.has_account(username):
            entries.append((username, seen[username]))
        else:
            warnings.append(f"label for unknown user {username!r} skipped")
    if not entries:
        raise EmptyLabelSet(f"{labels_csv}: no labeled users matched the store")
    return LabeledDataset(entries=entries, store=store, warnings=warnings)
