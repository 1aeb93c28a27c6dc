"""Command-line interface.

Subcommands cover the full pipeline: synth (generate a corpus with planted
automated accounts), ingest (NDJSON to corpus store), flag (heuristic
review queue), train / tune / score (the forest), network (engagement
graph export), and serve (the HTTP API). Report-producing commands render
a matplotlib figure next to each delimited output unless --no-figures.

Exit codes: 0 success, 1 runtime failure (bad input data, missing files),
2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import corpus, features, forest, graph, heuristic, report, smbo, synth
from .service import ServiceConfig, create_app


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def _open_store(path: str) -> corpus.CorpusStore:
    p = Path(path)
    if not p.is_dir():
        raise corpus.CorpusError(f"store directory {path!r} does not exist")
    return corpus.CorpusStore(p)


def _emit(args, payload: dict, lines: list[str]) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for line in lines:
            print(line)


# -- subcommand handlers ------------------------------------------------------


def cmd_synth(args) -> int:
    spec = synth.SyntheticCorpusSpec(
        humans=args.humans, bots=args.bots, seed=args.seed,
        bot_posts=args.bot_posts, bot_span_days=args.bot_span_days,
        human_posts_mean=args.human_posts_mean,
        duplicate_rate=args.duplicate_rate,
    )
    result = synth.generate(spec, args.out)
    payload = {
        "posts": str(result.posts_path),
        "accounts": str(result.accounts_path),
        "labels": str(result.labels_path),
        "num_posts": result.num_posts,
        "num_accounts": result.num_accounts,
        "num_bots": result.num_bots,
    }
    _emit(args, payload, [
        f"wrote {result.num_posts} posts for {result.num_accounts} accounts "
        f"({result.num_bots} automated) under {args.out}",
        f"labels: {result.labels_path}",
    ])
    return 0


def _chain_lines(paths: list[str]):
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            yield from fh


def cmd_ingest(args) -> int:
    post_mapping = account_mapping = None
    if args.mapping:
        post_mapping, account_mapping = corpus.load_mapping_config(args.mapping)
    posts_source = args.posts[0] if len(args.posts) == 1 else _chain_lines(args.posts)
    store, rep = corpus.ingest(
        posts_source, args.accounts, args.out,
        post_mapping=post_mapping, account_mapping=account_mapping,
        shard_size=args.shard_size,
    )
    imputation = None
    if not args.no_impute:
        imputation = corpus.impute_missing(store)
    payload = {"store": str(store.directory), "report": rep.as_dict()}
    lines = [
        f"store: {store.directory}",
        f"posts: {rep.posts.accepted} accepted, {rep.posts.rejected} rejected",
        f"accounts: {rep.accounts.accepted} accepted, {rep.accounts.rejected} rejected",
    ]
    for stream in ("posts", "accounts"):
        reasons = getattr(rep, stream).reject_reasons
        for reason, count in sorted(reasons.items()):
            lines.append(f"  {stream} rejected ({reason}): {count}")
    if imputation is not None:
        payload["imputation"] = imputation.as_dict()
        total = sum(imputation.imputed_counts.values())
        lines.append(f"imputed {total} missing account fields")
        for warning in imputation.warnings:
            lines.append(f"warning: {warning}")
    _emit(args, payload, lines)
    return 0


def cmd_flag(args) -> int:
    store = _open_store(args.store)
    config = heuristic.load_config(args.config) if args.config else heuristic.default_config()
    verdicts = heuristic.classify_store(store, config)
    verdicts.sort(key=lambda v: (-v.score, v.username))

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["username", "score", "fired_rules", "is_bot"])
        for v in verdicts:
            writer.writerow([v.username, f"{v.score:g}", ";".join(v.fired_rule_ids),
                             "true" if v.is_bot else "false"])

    figures = []
    if not args.no_figures:
        fig = report.score_histogram([v.score for v in verdicts], config.threshold,
                                     out.with_suffix(".png"))
        figures.append(str(fig))

    flagged = sum(1 for v in verdicts if v.is_bot)
    payload = {"out": str(out), "accounts": len(verdicts), "flagged": flagged,
               "figures": figures}
    _emit(args, payload, [
        f"flagged {flagged} of {len(verdicts)} accounts -> {out}",
        *(f"figure: {f}" for f in figures),
    ])
    return 0


def _load_dataset(store_path: str, labels_path: str) -> features.FeatureMatrix:
    store = _open_store(store_path)
    labeled = corpus.apply_labels(store, labels_path)
    for warning in labeled.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return features.build_dataset(store, labeled)


def _hyperparams_from_args(args) -> forest.HyperParams:
    return forest.HyperParams(
        num_trees=args.trees, max_depth=args.max_depth,
        min_node_size=args.min_node_size, mtry_fraction=args.mtry,
        sample_fraction=args.sample_fraction,
    )


def _train_and_save(matrix: features.FeatureMatrix, hp: forest.HyperParams,
                    seed: int, out: Path) -> tuple[forest.RandomForest, forest.TrainReport]:
    normalizer = features.fit_normalizer(matrix)
    normalized = features.apply_normalizer(matrix, normalizer)
    model = forest.train(normalized, hp, seed=seed)
    rep = forest.TrainReport(
        oob_error=forest.oob_error(model, normalized),
        feature_importances=forest.feature_importance(model),
    )
    out.parent.mkdir(parents=True, exist_ok=True)
    forest.save(model, out, normalizer=normalizer, train_report=rep)
    return model, rep


def cmd_train(args) -> int:
    matrix = _load_dataset(args.store, args.labels)
    out = Path(args.out)
    model, rep = _train_and_save(matrix, _hyperparams_from_args(args), args.seed, out)

    importances_csv = out.with_name(out.stem + "_importances.csv")
    with open(importances_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "importance"])
        for name, value in zip(features.FEATURE_NAMES, rep.feature_importances):
            writer.writerow([name, f"{value:.6f}"])

    figures = []
    if not args.no_figures:
        fig = report.importance_chart(list(features.FEATURE_NAMES),
                                      rep.feature_importances,
                                      out.with_name(out.stem + "_importances.png"))
        figures.append(str(fig))

    payload = {
        "model": str(out),
        "rows": len(matrix),
        "oob_error": rep.oob_error,
        "importances": str(importances_csv),
        "figures": figures,
    }
    _emit(args, payload, [
        f"trained on {len(matrix)} accounts -> {out}",
        f"oob error: {rep.oob_error:.4f}",
        f"importances: {importances_csv}",
        *(f"figure: {f}" for f in figures),
    ])
    return 0


def cmd_tune(args) -> int:
    matrix = _load_dataset(args.store, args.labels)
    result = smbo.tune(
        matrix, budget=args.budget, init=args.init, k=args.folds,
        seed=args.seed, n_candidates=args.candidates, objective=args.objective,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trials_csv = out_dir / "trials.csv"
    smbo.trials_to_csv(result, trials_csv)
    smbo.result_to_json(result, out_dir / "trials.json")

    best_model = out_dir / "best_model.json"
    _train_and_save(matrix, result.best_hp, args.seed, best_model)

    figures = []
    if not args.no_figures:
        fig = report.tune_trace([t.objective for t in result.trials],
                                result.best_so_far, out_dir / "trace.png")
        figures.append(str(fig))

    payload = {
        "trials": str(trials_csv),
        "best_model": str(best_model),
        "best_objective": result.best_objective,
        "best_hyperparams": result.best_hp.to_dict(),
        "figures": figures,
    }
    _emit(args, payload, [
        f"{len(result.trials)} trials -> {trials_csv}",
        f"best objective: {result.best_objective:.4f}",
        f"best hyperparams: {json.dumps(result.best_hp.to_dict(), sort_keys=True)}",
        f"best model: {best_model}",
        *(f"figure: {f}" for f in figures),
    ])
    return 0


def cmd_score(args) -> int:
    bundle = forest.load(args.model)
    if bundle.normalizer is None:
        return _fail("model bundle has no normalizer; retrain with the train command")
    store = _open_store(args.store)
    usernames = list(args.user or [])
    if args.users_file:
        usernames.extend(
            line.strip() for line in Path(args.users_file).read_text(encoding="utf-8").splitlines()
            if line.strip())
    if not usernames:
        return _fail("no usernames given; use --user or --users-file")

    rows = []
    for username in usernames:
        account = store.account(username)
        if account is None:
            return _fail(f"unknown account {username!r}")
        fv = features.extract(account, store.posts_for(username))
        x = features.normalize_vector(fv, bundle.normalizer)
        proba = bundle.forest.predict_proba(x)
        rows.append({"username": username, "bot_likelihood": proba})
    _emit(args, {"model_version": bundle.model_version, "scores": rows},
          [f"{r['username']} {100.0 * r['bot_likelihood']:.1f}" for r in rows])
    return 0


def cmd_network(args) -> int:
    store = _open_store(args.store)
    seed_ids = [s for s in (part.strip() for part in args.seeds.split(",")) if s]
    if not seed_ids:
        return _fail("no seed post ids given")
    users = graph.seed_expand(store, seed_ids, depth=args.depth)
    g = graph.build(store, user_filter=users)

    config = heuristic.default_config()
    grouped = store.posts_by_author()
    flags = {}
    for u in g.nodes:
        account = store.account(u)
        flags[u] = (heuristic.classify(account, grouped.get(u, []), config).is_bot
                    if account is not None and account.is_complete() else False)
    coloring = graph.classify_exposure(g, flags)
    centrality = None
    if g.num_edges > 0:
        centrality = graph.eigenvector_centrality(g)

    truncated = g.num_nodes > args.max_nodes
    if truncated:
        ranks = centrality.as_dict() if centrality else {}
        keep = set(sorted(g.nodes, key=lambda u: (-ranks.get(u, 0.0), u))[: args.max_nodes])
        edges = {(s, t): w for (s, t), w in g.edges.items() if s in keep and t in keep}
        g = graph.EngagementGraph(nodes=sorted(keep), edges=edges)

    layout = graph.layout_fa2(g, iterations=args.layout_iterations, seed=args.seed)
    doc = graph.export_json(g, coloring, layout, centrality)
    doc["truncated"] = truncated

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gexf_path = out_dir / "network.gexf"
    json_path = out_dir / "network.json"
    gexf_path.write_text(graph.export_gexf(g, coloring, layout, centrality), encoding="utf-8")
    json_path.write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")

    figures = []
    if not args.no_figures:
        fig = report.network_figure(doc, out_dir / "network.png")
        figures.append(str(fig))

    payload = {"nodes": g.num_nodes, "edges": g.num_edges, "truncated": truncated,
               "gexf": str(gexf_path), "json": str(json_path), "figures": figures}
    _emit(args, payload, [
        f"network: {g.num_nodes} nodes, {g.num_edges} edges"
        + (" (truncated)" if truncated else ""),
        f"gexf: {gexf_path}",
        f"json: {json_path}",
        *(f"figure: {f}" for f in figures),
    ])
    return 0


def cmd_serve(args) -> int:
    config = ServiceConfig.from_env(
        port=args.port, model_path=args.model, store_path=args.store,
        connector=args.connector, remote_url=args.remote_url, ui_origin=args.ui_origin,
    )
    if not config.model_path:
        return _fail("no model given; pass --model or set ENTENDRE_MODEL")
    if not Path(config.model_path).is_file():
        return _fail(f"model file {config.model_path!r} does not exist")
    app = create_app(config)

    import uvicorn

    uvicorn.run(app, host=args.host, port=config.port, log_level="warning")
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entendre",
        description="Platform-agnostic social bot detection toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus with planted automated accounts")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--humans", type=int, default=900)
    p.add_argument("--bots", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bot-posts", type=int, default=240)
    p.add_argument("--bot-span-days", type=float, default=2.0)
    p.add_argument("--human-posts-mean", type=float, default=6.0)
    p.add_argument("--duplicate-rate", type=float, default=0.7)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="ingest NDJSON posts/accounts into a corpus store")
    p.add_argument("--posts", action="append", required=True, help="posts NDJSON (repeatable)")
    p.add_argument("--accounts", required=True, help="accounts NDJSON")
    p.add_argument("--out", required=True, help="store directory")
    p.add_argument("--mapping", help="schema mapping config (JSON)")
    p.add_argument("--shard-size", type=int, default=corpus.SHARD_SIZE)
    p.add_argument("--no-impute", action="store_true",
                   help="skip filling missing account fields")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("flag", help="heuristic review queue over a store")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True, help="verdict CSV path")
    p.add_argument("--config", help="heuristic config JSON")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_flag)

    p = sub.add_parser("train", help="train the detection forest on labeled accounts")
    p.add_argument("--store", required=True)
    p.add_argument("--labels", required=True, help="CSV with username,label")
    p.add_argument("--out", required=True, help="model bundle path")
    p.add_argument("--trees", type=int, default=200)
    p.add_argument("--max-depth", type=int, default=16)
    p.add_argument("--min-node-size", type=int, default=5)
    p.add_argument("--mtry", type=float, default=0.24)
    p.add_argument("--sample-fraction", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", help="hyperparameter search for the forest")
    p.add_argument("--store", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--budget", type=int, default=smbo.DEFAULT_BUDGET)
    p.add_argument("--init", type=int, default=smbo.DEFAULT_INIT)
    p.add_argument("--folds", type=int, default=smbo.DEFAULT_FOLDS)
    p.add_argument("--candidates", type=int, default=smbo.DEFAULT_CANDIDATES)
    p.add_argument("--objective", choices=("cv", "oob"), default="cv")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("score", help="score accounts with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--user", action="append", help="username (repeatable)")
    p.add_argument("--users-file", help="file with one username per line")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("network", help="export the engagement network around seed posts")
    p.add_argument("--store", required=True)
    p.add_argument("--seeds", required=True, help="comma-separated seed post ids")
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--max-nodes", type=int, default=5000)
    p.add_argument("--layout-iterations", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_network)

    p = sub.add_parser("serve", help="run the HTTP scoring service")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--model", default=None)
    p.add_argument("--store", default=None)
    p.add_argument("--connector", choices=("archive", "remote"), default=None)
    p.add_argument("--remote-url", default=None)
    p.add_argument("--ui-origin", default=None)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (corpus.CorpusError, forest.ForestError, smbo.TuneError, graph.GraphError,
            features.EmptyMatrix, features.SpecVersionMismatch, features.UnknownUser,
            OSError, ValueError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
