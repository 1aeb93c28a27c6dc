"""HTTP scoring service.

App-factory FastAPI service exposing the trained detector over a stable
JSON API. Account data comes through a connector: the archive connector
reads a local corpus store, the remote connector proxies a live platform
API with the same two routes. The model bundle is loaded once at startup;
its identity (content hash) is reported on every score so callers can
attribute results to an exact artifact.

Environment: ENTENDRE_PORT, ENTENDRE_MODEL, ENTENDRE_STORE,
ENTENDRE_CONNECTOR (archive | remote), ENTENDRE_REMOTE_URL,
ENTENDRE_UI_ORIGIN. CLI flags override the environment.
"""

from __future__ import annotations

import datetime as dt
import os
from collections import Counter
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import httpx
from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import forest as rf
from . import graph as gr
from . import heuristic
from .corpus import CorpusStore, imputation_fill_values
from .features import extract, normalize_vector
from .records import MISSING, Account, Post

MAX_BATCH = 100
MAX_NETWORK_NODES = 5000
API_PREFIX = "/api/v1"


class ServiceError(Exception):
    pass


class AccountNotFound(ServiceError):
    pass


class UpstreamUnavailable(ServiceError):
    pass


# -- connectors ---------------------------------------------------------------


class ArchiveConnector:
    """Serves accounts and posts out of a local corpus store."""

    kind = "archive"

    def __init__(self, store: CorpusStore):
        self.store = store
        accounts = list(store.iter_accounts())
        if accounts:
            self.fill_values, _ = imputation_fill_values(accounts)
        else:
            self.fill_values = {"followers": 0, "following": 0, "created_at": 0,
                                "verified": False, "bio": ""}

    def fetch(self, username: str) -> tuple[Account, list[Post]]:
        account = self.store.account(username)
        if account is None:
            raise AccountNotFound(username)
        return account, self.store.posts_for(username)


class RemoteConnector:
    """Proxies a live platform API exposing the same two routes the
    archive serves: /accounts/{username} and /accounts/{username}/posts."""

    kind = "remote"

    def __init__(self, base_url: str, timeout: float = 10.0,
                 client: httpx.Client | None = None):
        self.base_url = base_url.rstrip("/")
        self.client = client or httpx.Client(timeout=timeout)
        # No population to estimate from; neutral fills.
        self.fill_values = {"followers": 0, "following": 0, "created_at": 0,
                            "verified": False, "bio": ""}

    def fetch(self, username: str) -> tuple[Account, list[Post]]:
        try:
            acc_resp = self.client.get(f"{self.base_url}/accounts/{username}")
            if acc_resp.status_code == 404:
                raise AccountNotFound(username)
            acc_resp.raise_for_status()
            posts_resp = self.client.get(f"{self.base_url}/accounts/{username}/posts")
            posts_resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise UpstreamUnavailable(str(exc)) from exc
        account = Account.from_json_dict(acc_resp.json())
        posts = [Post.from_json_dict(p) for p in posts_resp.json()]
        return account, posts


@dataclass
class ServiceConfig:
    model_path: str | None = None
    store_path: str | None = None
    connector: str = "archive"
    remote_url: str | None = None
    port: int = 8000
    ui_origin: str = "*"
    max_batch: int = MAX_BATCH
    max_network_nodes: int = MAX_NETWORK_NODES
    layout_iterations: int = 300
    layout_seed: int = 0

    @classmethod
    def from_env(cls, **overrides) -> "ServiceConfig":
        env = {
            "port": int(os.environ.get("ENTENDRE_PORT", 8000)),
            "model_path": os.environ.get("ENTENDRE_MODEL"),
            "store_path": os.environ.get("ENTENDRE_STORE"),
            "connector": os.environ.get("ENTENDRE_CONNECTOR", "archive"),
            "remote_url": os.environ.get("ENTENDRE_REMOTE_URL"),
            "ui_origin": os.environ.get("ENTENDRE_UI_ORIGIN", "*"),
        }
        env.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**env)


def percent_half_up(proba: float) -> float:
    """0..1 probability to a percentage with one decimal, ties away from zero.

    The scale-by-100 happens in decimal so a clean vote fraction like 0.535
    cannot pick up binary noise before rounding.
    """
    q = (Decimal(str(proba)) * 100).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
    return float(q)


def _complete(account: Account, fills: dict) -> Account:
    """Non-destructive fill of missing optional fields before extraction."""
    if account.is_complete():
        return account
    return Account(
        username=account.username,
        followers=fills["followers"] if account.followers is MISSING else account.followers,
        following=fills["following"] if account.following is MISSING else account.following,
        bio=fills["bio"] if account.bio is MISSING else account.bio,
        verified=fills["verified"] if account.verified is MISSING else account.verified,
        created_at=fills["created_at"] if account.created_at is MISSING else account.created_at,
    )


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": code, "message": message})


def create_app(config: ServiceConfig | None = None,
               connector: ArchiveConnector | RemoteConnector | None = None) -> FastAPI:
    config = config or ServiceConfig.from_env()

    if connector is None:
        if config.connector == "archive":
            if not config.store_path:
                raise ServiceError("archive connector needs a store path")
            connector = ArchiveConnector(CorpusStore(config.store_path))
        elif config.connector == "remote":
            if not config.remote_url:
                raise ServiceError("remote connector needs a base URL")
            connector = RemoteConnector(config.remote_url)
        else:
            raise ServiceError(f"unknown connector {config.connector!r}")

    bundle: rf.ModelBundle | None = None
    if config.model_path:
        bundle = rf.load(config.model_path)
        if bundle.normalizer is None:
            raise ServiceError("model bundle has no normalizer; retrain and save with one")

    heuristic_config = heuristic.default_config()
    app = FastAPI(title="entendre", openapi_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[config.ui_origin] if config.ui_origin != "*" else ["*"],
        allow_methods=["GET", "POST"],
        allow_headers=["*"],
    )

    @app.exception_handler(Exception)
    async def on_unhandled(request: Request, exc: Exception):
        return _error(500, "internal", f"{type(exc).__name__}: {exc}")

    @app.exception_handler(RequestValidationError)
    async def on_invalid(request: Request, exc: RequestValidationError):
        return _error(400, "validation", str(exc.errors()))

    def score_payload(username: str) -> dict:
        if bundle is None:
            raise ServiceError("no model loaded")
        account, posts = connector.fetch(username)
        account = _complete(account, connector.fill_values)
        fv = extract(account, posts)
        x = normalize_vector(fv, bundle.normalizer)
        proba = bundle.forest.predict_proba(x)
        fired = heuristic.evaluate_rules(fv, account, heuristic_config)
        score = heuristic.heuristic_score(fired, heuristic_config)
        return {
            "username": username,
            "bot_likelihood_percent": percent_half_up(proba),
            "heuristic": {
                "score": score,
                "fired_rules": fired,
                "is_bot": score >= heuristic_config.threshold,
            },
            "model_version": bundle.model_version,
            "features": fv.as_dict(),
        }

    @app.get(API_PREFIX + "/accounts/{username}/score")
    def get_score(username: str):
        if bundle is None:
            return _error(503, "model_not_loaded", "no model loaded")
        try:
            return JSONResponse(score_payload(username))
        except AccountNotFound:
            return _error(404, "account_not_found", f"unknown account {username!r}")
        except UpstreamUnavailable as exc:
            return _error(503, "upstream_unavailable", str(exc))

    @app.post(API_PREFIX + "/scores:batch")
    def post_batch(usernames: list[str]):
        if bundle is None:
            return _error(503, "model_not_loaded", "no model loaded")
        if len(usernames) == 0:
            return _error(400, "empty_batch", "batch must contain at least one username")
        if len(usernames) > config.max_batch:
            return _error(400, "batch_too_large",
                          f"batch of {len(usernames)} exceeds limit {config.max_batch}")
        results = []
        for username in usernames:
            try:
                results.append(score_payload(username))
            except AccountNotFound:
                results.append({"username": username, "error": "account_not_found",
                                "message": f"unknown account {username!r}"})
            except UpstreamUnavailable as exc:
                results.append({"username": username, "error": "upstream_unavailable",
                                "message": str(exc)})
        return JSONResponse({"results": results})

    @app.get(API_PREFIX + "/accounts/{username}/insights")
    def get_insights(username: str):
        try:
            account, posts = connector.fetch(username)
        except AccountNotFound:
            return _error(404, "account_not_found", f"unknown account {username!r}")
        except UpstreamUnavailable as exc:
            return _error(503, "upstream_unavailable", str(exc))

        daily: list[dict] = []
        if posts:
            days = [dt.datetime.fromtimestamp(p.created_at, tz=dt.timezone.utc).date()
                    for p in posts]
            counts = Counter(days)
            day = min(days)
            last = max(days)
            while day <= last:
                daily.append({"date": day.isoformat(), "count": counts.get(day, 0)})
                day += dt.timedelta(days=1)

        tag_counts = Counter()
        for p in posts:
            tag_counts.update(p.hashtags)
        top = sorted(tag_counts.items(), key=lambda kv: (-kv[1], kv[0]))[:10]

        kind_counts = Counter(p.kind.value for p in posts)
        return JSONResponse({
            "username": username,
            "post_count": len(posts),
            "kind_counts": {k: kind_counts.get(k, 0) for k in ("original", "comment", "echo")},
            "daily_activity": daily,
            "top_hashtags": [{"tag": t, "count": c} for t, c in top],
        })

    @app.get(API_PREFIX + "/network")
    def get_network(seeds: str = Query(default=""), depth: int = Query(default=1, ge=0),
                    max_nodes: int = Query(default=MAX_NETWORK_NODES, ge=1)):
        if connector.kind != "archive":
            return _error(400, "archive_required",
                          "the network view needs an archive connector")
        seed_ids = [s for s in (part.strip() for part in seeds.split(",")) if s]
        if not seed_ids:
            return _error(400, "bad_seeds", "provide seeds as a comma-separated post id list")
        store = connector.store
        try:
            users = gr.seed_expand(store, seed_ids, depth=depth)
        except gr.UnknownPostId as exc:
            return _error(404, "unknown_seed", str(exc))

        subgraph = gr.build(store, user_filter=users)
        flags: dict[str, bool] = {}
        for u in subgraph.nodes:
            account = store.account(u)
            if account is None:
                flags[u] = False
                continue
            verdict = heuristic.classify(_complete(account, connector.fill_values),
                                         store.posts_for(u), heuristic_config)
            flags[u] = verdict.is_bot
        coloring = gr.classify_exposure(subgraph, flags)
        try:
            centrality = gr.eigenvector_centrality(subgraph)
        except gr.EmptyGraph:
            centrality = None

        limit = min(max_nodes, config.max_network_nodes)
        truncated = subgraph.num_nodes > limit
        if truncated:
            ranked = sorted(
                subgraph.nodes,
                key=lambda u: (-(centrality.as_dict().get(u, 0.0) if centrality else 0.0), u),
            )
            keep = set(ranked[:limit])
            edges = {(s, t): w for (s, t), w in subgraph.edges.items()
                     if s in keep and t in keep}
            subgraph = gr.EngagementGraph(nodes=sorted(keep), edges=edges)

        layout = gr.layout_fa2(subgraph, iterations=config.layout_iterations,
                               seed=config.layout_seed)
        doc = gr.export_json(subgraph, coloring, layout, centrality)
        doc["truncated"] = truncated
        return JSONResponse(doc)

    @app.get(API_PREFIX + "/model")
    def get_model():
        if bundle is None:
            return _error(503, "model_not_loaded", "no model loaded")
        report = bundle.train_report
        return JSONResponse({
            "model_version": bundle.model_version,
            "feature_spec_version": bundle.forest.feature_spec_version,
            "num_trees": bundle.forest.hyperparams.num_trees,
            "hyperparams": bundle.forest.hyperparams.to_dict(),
            "oob_error": None if report is None else report.oob_error,
        })

    @app.get("/healthz")
    def healthz():
        if bundle is None:
            return _error(503, "model_not_loaded", "no model loaded")
        return JSONResponse({"status": "ok", "model_version": bundle.model_version})

    app.state.config = config
    app.state.bundle = bundle
    app.state.connector = connector
    return app
