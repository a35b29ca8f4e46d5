"""Single entry point: harvest | stats | index | embed | cluster | disthist
| boiler | serve | ask | eval.

Configuration precedence, ascending: built-in defaults < --config file <
APOFASIS_* environment variables < command-line flags. Unknown config-file
keys are rejected.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import os
import sys
from pathlib import Path

from apofasis import __version__

CONFIG_KEYS = {
    "corpus": str,
    "index": str,
    "vectors": str,
    "sessions": str,
    "encoder": str,
    "generator": str,
    "port": int,
    "rps": float,
    "workers": int,
    "k": int,
    "api_base": str,
}
ENV_PREFIX = "APOFASIS_"


class ConfigError(ValueError):
    pass


def load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(doc) - set(CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return {key: CONFIG_KEYS[key](value) for key, value in doc.items()}


def resolve(key: str, flag_value, config: dict):
    """flag > environment > config file > None."""
    if flag_value is not None:
        return flag_value
    env = os.environ.get(ENV_PREFIX + key.upper())
    if env is not None:
        return CONFIG_KEYS[key](env)
    return config.get(key)


def _require(value, flag: str):
    if value is None:
        raise ConfigError(f"missing required setting {flag}")
    return value


def _print(payload: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(payload, ensure_ascii=False, indent=2, default=str))
    else:
        width = max((len(str(k)) for k in payload), default=0)
        for key, value in payload.items():
            print(f"{str(key):<{width}}  {value}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apofasis", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="JSON config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("harvest", help="paged download into the corpus store")
    p.add_argument("--from", dest="date_from", required=True, help="YYYY-MM-DD")
    p.add_argument("--to", dest="date_to", required=True, help="YYYY-MM-DD")
    p.add_argument("--org", default=None)
    p.add_argument("--rps", type=float, default=None)
    p.add_argument("--out", default=None, help="corpus directory")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--page-size", type=int, default=100)
    p.add_argument("--max-pages", type=int, default=None)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("--corpus", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--top-orgs", type=int, default=5)
    p.add_argument("--format", choices=("json", "table"), default="json")

    p = sub.add_parser("index", help="build or query the lexical index")
    isub = p.add_subparsers(dest="index_command", required=True)
    b = isub.add_parser("build")
    b.add_argument("--corpus", default=None)
    b.add_argument("--out", default=None)
    s = isub.add_parser("search")
    s.add_argument("--index", default=None)
    s.add_argument("--query", required=True)
    s.add_argument("-k", type=int, default=None)

    p = sub.add_parser("embed", help="embed the corpus into a vector store")
    p.add_argument("--corpus", default=None)
    p.add_argument("--encoder", choices=("reference", "remote"), default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("cluster", help="k-means over the vector store")
    p.add_argument("--vectors", default=None)
    p.add_argument("-k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("json", "table"), default="json")

    p = sub.add_parser("disthist", help="pairwise cosine-distance histogram")
    p.add_argument("--vectors", default=None)
    p.add_argument("--sample", type=int, default=2000)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("json", "table"), default="json")

    p = sub.add_parser("boiler", help="boilerplate segmentation and evaluation")
    bsub = p.add_subparsers(dest="boiler_command", required=True)
    seg = bsub.add_parser("segment")
    seg.add_argument("--corpus", default=None)
    seg.add_argument("--vectors", default=None)
    seg.add_argument("--ada", required=True)
    seg.add_argument("--neighbors", type=int, default=10)
    seg.add_argument("--m-frac", type=float, default=0.5)
    seg.add_argument("--min-run", type=int, default=3)
    swp = bsub.add_parser("swap-eval")
    swp.add_argument("--corpus", default=None)
    swp.add_argument("--pairs", required=True)
    swp.add_argument("--m-frac", type=float, default=0.5)
    swp.add_argument("--min-run", type=int, default=3)
    prv = bsub.add_parser("prevalence")
    prv.add_argument("--corpus", default=None)
    prv.add_argument("--vectors", default=None)
    prv.add_argument("--k-list", default="5,10,20,30,40,50,70,100")
    prv.add_argument("--neighbors", type=int, default=10)
    prv.add_argument("--seed", type=int, default=0)
    prv.add_argument("--csv", default=None)

    p = sub.add_parser("serve", help="run the QA HTTP service")
    p.add_argument("--index", default=None)
    p.add_argument("--corpus", default=None)
    p.add_argument("--sessions", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--generator", choices=("echo", "remote"), default=None)

    p = sub.add_parser("ask", help="one-shot question against the index")
    p.add_argument("--question", required=True)
    p.add_argument("--session", default=None)
    p.add_argument("--index", default=None)
    p.add_argument("--sessions", default=None)
    p.add_argument("-k", type=int, default=None)
    p.add_argument("--generator", choices=("echo", "remote"), default=None)

    p = sub.add_parser("eval", help="QA evaluation tracks")
    esub = p.add_subparsers(dest="eval_command", required=True)
    auto = esub.add_parser("auto")
    auto.add_argument("--pairs", required=True)
    auto.add_argument("--index", default=None)
    auto.add_argument("--generator", choices=("echo", "remote"), default=None)
    auto.add_argument("--format", choices=("json", "table"), default="json")
    man = esub.add_parser("manual")
    man.add_argument("--results", required=True)
    man.add_argument("--reported-accuracy", type=float, default=None)
    man.add_argument("--format", choices=("json", "table"), default="json")
    esub.add_parser("fixtures")
    return parser


def _make_generator(choice: str | None):
    from apofasis.rag import MAX_OUTPUT_TOKENS

    if choice == "remote":
        from apofasis.remote import RemoteChatClient, RemoteGenerator

        model = os.environ.get("APOFASIS_GENERATOR_MODEL", "gpt-4o-mini")
        return RemoteGenerator(RemoteChatClient(), model=model,
                               max_output_tokens=MAX_OUTPUT_TOKENS)
    from apofasis.testing import EchoGenerator

    return EchoGenerator()


def _make_encoder(choice: str | None, seed: int = 0):
    from apofasis.embedding import ReferenceEncoder, SentenceModelEncoder

    if choice == "remote":
        return SentenceModelEncoder()
    return ReferenceEncoder(seed=seed)


def _cmd_harvest(args, config) -> int:
    from apofasis.corpus import CorpusLayout
    from apofasis.harvest import DiavgeiaClient, HarvestJob, TokenBucket, run_harvest

    out = Path(_require(resolve("corpus", args.out, config), "--out"))
    out.mkdir(parents=True, exist_ok=True)
    checkpoint = out / ".harvest-checkpoint.json"
    if not args.resume and checkpoint.is_file():
        checkpoint.unlink()
    rps = resolve("rps", args.rps, config) or 2.0
    job = HarvestJob(
        date_from=dt.date.fromisoformat(args.date_from),
        date_to=dt.date.fromisoformat(args.date_to),
        checkpoint_path=checkpoint,
        organization_filter=args.org,
        page_size=args.page_size,
        rate_limit=rps,
        limit_pages=args.max_pages,
    )
    client = DiavgeiaClient(
        base_url=resolve("api_base", None, config), bucket=TokenBucket(rate=rps)
    )
    result = run_harvest(job, CorpusLayout(root=out), client)
    _print(
        {
            "last_completed_page": result.last_completed_page,
            "fetched_adas": result.fetched_adas,
            "failures": len(result.failures),
        },
        "json",
    )
    return 0


def _cmd_stats(args, config) -> int:
    from apofasis.corpus import CorpusLayout
    from apofasis.stats import compute_corpus_stats, top_organizations

    corpus = _require(resolve("corpus", args.corpus, config), "--corpus")
    workers = resolve("workers", args.workers, config) or 1
    stats = compute_corpus_stats(CorpusLayout(root=Path(corpus)), workers=workers)
    payload = stats.to_json()
    payload["top_organizations"] = top_organizations(stats, args.top_orgs)
    _print(payload, args.format)
    return 0


def _cmd_index(args, config) -> int:
    from apofasis.corpus import CorpusLayout, load_document
    from apofasis.index import SearchIndex

    if args.index_command == "build":
        corpus = _require(resolve("corpus", args.corpus, config), "--corpus")
        out = _require(resolve("index", args.out, config), "--out")
        layout = CorpusLayout(root=Path(corpus))
        index = SearchIndex()
        for ada in layout.iter_adas():
            index.index_document(load_document(layout, ada))
        index.save(out)
        _print({"indexed_docs": index.n_docs, "snapshot": str(out)}, "json")
        return 0
    index_path = _require(resolve("index", args.index, config), "--index")
    index = SearchIndex.load(index_path)
    k = resolve("k", args.k, config) or 8
    hits = index.search(args.query, k=k)
    _print(
        {hit.ada: f"{hit.score:.4f}" for hit in hits} or {"hits": 0},
        "json",
    )
    return 0


def _cmd_embed(args, config) -> int:
    from apofasis.corpus import CorpusLayout
    from apofasis.embedding import embed_corpus

    corpus = _require(resolve("corpus", args.corpus, config), "--corpus")
    out = _require(resolve("vectors", args.out, config), "--out")
    encoder = _make_encoder(resolve("encoder", args.encoder, config), seed=args.seed)
    store, failures = embed_corpus(CorpusLayout(root=Path(corpus)), encoder)
    store.save(out)
    _print({"vectors": len(store), "failures": len(failures), "store": str(out)}, "json")
    return 0


def _cmd_cluster(args, config) -> int:
    from apofasis.embedding import VectorStore, centroid_document, kmeans

    vectors = _require(resolve("vectors", args.vectors, config), "--vectors")
    store = VectorStore.load(vectors)
    assignment = kmeans(store, args.k, seed=args.seed)
    sizes = {c: 0 for c in range(args.k)}
    for cluster in assignment.assignments.values():
        sizes[cluster] += 1
    payload = {
        "k": args.k,
        "inertia": assignment.inertia,
        "cluster_sizes": sizes,
        "centroid_documents": {
            c: centroid_document(assignment, c, store) for c in range(args.k)
        },
    }
    _print(payload, args.format)
    return 0


def _cmd_disthist(args, config) -> int:
    from apofasis.embedding import VectorStore, pairwise_distance_histogram

    vectors = _require(resolve("vectors", args.vectors, config), "--vectors")
    store = VectorStore.load(vectors)
    sample = min(args.sample, len(store))
    hist = pairwise_distance_histogram(store, sample, args.bins, args.seed)
    payload = {
        "sample_size": hist.sample_size,
        "n_pairs": hist.n_pairs,
        "edges": list(hist.edges),
        "counts": list(hist.counts),
    }
    _print(payload, args.format)
    return 0


def _cmd_boiler(args, config) -> int:
    from apofasis.boiler import (
        BaselineClassifier,
        BaselineSegmenter,
        baseline_segment,
        prevalence_study,
        read_pairs,
        run_swap_evaluation,
    )
    from apofasis.corpus import CorpusLayout, load_document
    from apofasis.embedding import VectorStore, knn

    corpus = _require(resolve("corpus", args.corpus, config), "--corpus")
    layout = CorpusLayout(root=Path(corpus))

    def text_of(ada: str) -> str:
        return load_document(layout, ada).body_markdown

    if args.boiler_command == "segment":
        vectors = _require(resolve("vectors", args.vectors, config), "--vectors")
        store = VectorStore.load(vectors)
        neighbor_hits = knn(store, store.get(args.ada), args.neighbors + 1)
        neighbors = [a for a, _ in neighbor_hits if a != args.ada][: args.neighbors]
        seg = baseline_segment(
            text_of(args.ada), [text_of(a) for a in neighbors],
            m_frac=args.m_frac, min_run=args.min_run, ada=args.ada,
        )
        print(json.dumps(seg.to_json(), ensure_ascii=False))
        return 0
    if args.boiler_command == "swap-eval":
        pairs = read_pairs(args.pairs)
        segmenter = BaselineSegmenter(m_frac=args.m_frac, min_run=args.min_run)
        report = run_swap_evaluation(pairs, text_of, segmenter)
        _print(report.summary(), "json")
        return 0
    vectors = _require(resolve("vectors", args.vectors, config), "--vectors")
    store = VectorStore.load(vectors)
    k_list = [int(k) for k in args.k_list.split(",") if k]
    rates = prevalence_study(
        store, text_of, k_list, BaselineClassifier(),
        n_neighbors=args.neighbors, seed=args.seed, csv_path=args.csv,
    )
    _print({str(k): f"{rate:.3f}" for k, rate in rates.items()}, "json")
    return 0


def _make_engine(args, config, index_path, sessions_dir, k=None):
    from apofasis.index import SearchIndex
    from apofasis.rag import RagEngine, SessionStore

    index = SearchIndex.load(index_path)
    store = SessionStore(sessions_dir)
    generator = _make_generator(resolve("generator", getattr(args, "generator", None), config))
    kwargs = {}
    if k:
        kwargs["top_k"] = k
    return RagEngine(index, generator, store, **kwargs)


def _cmd_serve(args, config) -> int:
    from apofasis.service import serve

    index_path = _require(resolve("index", args.index, config), "--index")
    sessions = resolve("sessions", args.sessions, config) or ".apofasis-sessions"
    port = resolve("port", args.port, config) or 8000
    engine = _make_engine(args, config, index_path, sessions)
    print(f"serving on http://127.0.0.1:{port}")
    serve(engine, port=port)
    return 0


def _cmd_ask(args, config) -> int:
    index_path = _require(resolve("index", args.index, config), "--index")
    sessions = resolve("sessions", args.sessions, config) or ".apofasis-sessions"
    engine = _make_engine(args, config, index_path, sessions,
                          k=resolve("k", args.k, config))
    session_id = args.session or engine.create_session()
    result = engine.answer(session_id, args.question, mode="structured")
    payload = result.structured.to_json()
    payload["session_id"] = session_id
    _print(payload, "json")
    return 0


def _cmd_eval(args, config) -> int:
    from apofasis.qaeval import (
        ManualOrgResult,
        evaluate_automated,
        read_qa_pairs,
        score_manual,
        verify_aggregation_fixtures,
    )

    if args.eval_command == "auto":
        from apofasis.embedding import ReferenceEncoder

        index_path = _require(resolve("index", args.index, config), "--index")
        from apofasis.index import SearchIndex
        from apofasis.rag import RagEngine, SessionStore
        import tempfile

        index = SearchIndex.load(index_path)
        generator = _make_generator(resolve("generator", args.generator, config))
        with tempfile.TemporaryDirectory() as tmp:
            engine = RagEngine(index, generator, SessionStore(tmp))

            def system(question: str) -> str:
                session_id = engine.create_session()
                return engine.answer(session_id, question).text

            pairs = read_qa_pairs(args.pairs)
            report = evaluate_automated(pairs, system, ReferenceEncoder(), index.stats())
        _print(report.rows(), args.format)
        return 0
    if args.eval_command == "manual":
        doc = json.loads(Path(args.results).read_text(encoding="utf-8"))
        results = [
            ManualOrgResult(
                organization=entry["organization"],
                verdicts=entry["verdicts"],
                notes=entry.get("notes", {}),
            )
            for entry in doc["results"]
        ]
        summary = score_manual(results, reported_accuracy=args.reported_accuracy)
        _print(summary.to_json(), args.format)
        return 0
    checks = verify_aggregation_fixtures()
    for check in checks:
        status = "ok" if check.ok else "MISMATCH"
        line = f"{status:<8} {check.kind:<28} {check.name}"
        if not check.ok:
            line += f" (expected {check.expected}, got {check.actual}, |err|={check.abs_error})"
        print(line)
    return 0


_HANDLERS = {
    "harvest": _cmd_harvest,
    "stats": _cmd_stats,
    "index": _cmd_index,
    "embed": _cmd_embed,
    "cluster": _cmd_cluster,
    "disthist": _cmd_disthist,
    "boiler": _cmd_boiler,
    "serve": _cmd_serve,
    "ask": _cmd_ask,
    "eval": _cmd_eval,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config_file(args.config)
        return _HANDLERS[args.command](args, config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures map to exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
