"""``workbench`` command line."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import collection, corpus, evaluation, expand, index, pipeline, project, rerank, synthetic, topics
from .analyzer import AnalyzerConfig, analyze, load_analyzer_config, topic_model_config
from .kvconfig import ConfigError


def _analyzer(args) -> AnalyzerConfig:
    return load_analyzer_config(args.analyzer) if getattr(args, "analyzer", None) else AnalyzerConfig()


def _subword(args):
    return corpus.VocabTokenizer.from_file(args.vocab) if getattr(args, "vocab", None) else None


def cmd_ingest(args):
    snap = corpus.ingest_snapshot(args.input, args.date, args.store, _subword(args))
    print(f"ingested {snap.doc_count} documents into {snap.path}")


def cmd_stats(args):
    store = corpus.Store(args.store)
    dates = [args.date] if args.date else store.dates()
    rows = []
    for d in dates:
        st = corpus.snapshot_stats(store.snapshot(d), _subword(args)) if args.vocab else store.stats(d)
        rows.append((d, st))
    if args.out:
        corpus.write_stats_csv(rows, args.out)
    for d, st in rows:
        line = f"{d}: {st.count} docs, avg tokens {st.avg_tokens:.1f} (pop. std {st.std_tokens:.1f})"
        if args.rate is not None:
            line += f", cost ${corpus.estimate_llm_cost(st.sum_tokens, args.rate):,.2f}"
        print(line)


def cmd_analyze(args):
    cfg = load_analyzer_config(args.config) if args.config else AnalyzerConfig()
    for term in analyze(args.text, cfg):
        print(term)


def cmd_index(args):
    store = corpus.Store(args.store)
    out = store.index_dir(args.date)
    idx = index.build_index(store.snapshot(args.date), _analyzer(args), out, workers=args.workers)
    print(f"indexed {idx.N} documents, {len(idx.terms())} terms -> {out}")


def cmd_search(args):
    store = corpus.Store(args.store)
    idx = index.InvertedIndex.load(store.index_dir(args.date), _analyzer(args))
    queries = collection.read_queries(args.queries)
    params = index.Bm25Params(args.k1, args.b)
    run = index.search_all(idx, queries, args.k, params, args.tag)
    evaluation.write_run(run, args.out)
    print(f"wrote {len(run)} run lines for {len(queries)} queries to {args.out}")


def cmd_expand(args):
    cfg = expand.load_provider_config(args.provider)
    queries = collection.read_queries(args.queries)
    res = expand.expand_batch(cfg, queries, args.cache, args.concurrency)
    if args.out:
        collection.write_queries([collection.Query(r.qid, r.expanded) for r in res], args.out)
    print(f"{len(res)} expansions available, {len(res.failed)} failed")
    return 1 if res.failed else 0


def cmd_rerank(args):
    analyzer = _analyzer(args)
    scorer = rerank.load_scorer_config(args.scorer, analyzer, args.snapshot)
    run = evaluation.read_run(args.run)
    queries = collection.read_queries(args.queries)
    if args.date:
        snap = corpus.Store(args.store).snapshot(args.date)
        wanted = {e.doc_id for e in run}
        texts = {d.doc_id: d.text for d in snap if d.doc_id in wanted}
    else:
        texts = {}
    out = rerank.rerank_run(scorer, queries, run, texts, args.tag, args.workers)
    evaluation.write_run(out, args.out)
    print(f"reranked {len({e.qid for e in out})} queries -> {args.out}")


def cmd_eval(args):
    run = evaluation.read_run(args.run)
    qrels = evaluation.read_qrels(args.qrels)
    rep = evaluation.evaluate_run(run, qrels, args.k, args.gain, args.experiment, args.snapshot)
    if args.out:
        evaluation.write_report([rep], args.out, args.per_query)
    if rep.n_queries:
        print(f"nDCG@{args.k} mean {rep.mean:.4f} std {rep.std:.4f} over {rep.n_queries} queries")
    else:
        print("no judged queries")


def cmd_drop(args):
    path = Path(args.report)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
    matrix = pipeline.read_matrix(path) if header.startswith("snapshot,") else evaluation.read_report_matrix(path)
    drops = pipeline.report_drop(matrix, args.src, args.dst)
    print("experiment,rnd")
    for exp, v in drops.items():
        print(f"{exp},{'NULL' if v is None else f'{v:.6f}'}")


def _topic_docs(args):
    store = corpus.Store(args.store)
    snap = store.snapshot(args.date)
    sample = float(args.sample) if "." in str(args.sample) else int(args.sample)
    if isinstance(sample, int) and sample >= snap.doc_count:
        return list(snap)
    return topics.sample_documents(snap, sample, args.seed)


def cmd_topics(args):
    docs = _topic_docs(args)
    tdm = topics.build_term_doc_matrix(docs, topic_model_config(args.full_analyzer), args.min_df, args.max_vocab)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.model == "nmf":
        model = topics.nmf_fit(tdm, args.k, args.iters, args.tol, args.seed)
        topics.write_loss_trace(model.loss_trace, out / "loss.csv")
        topics.write_doc_topics(tdm.doc_ids, model.W, out / "doc_topics.csv")
    else:
        model = topics.lda_fit(topics.term_doc_to_tokens(tdm), args.k, args.alpha, args.eta, args.iters,
                               args.seed, vocab=tdm.vocab, check=False)
        ids = [tdm.doc_ids[i] for i in model.doc_index]
        topics.write_doc_topics(ids, model.theta, out / "doc_topics.csv")
    topics.write_top_words(model, out / "top_words", args.top)
    print(f"{args.model}: {tdm.shape[0]} docs x {tdm.shape[1]} terms, k={args.k} -> {out}")


def cmd_project(args):
    ids, W = topics.read_doc_topics(args.weights)
    res = project.project(W, args.method, args.seed, args.row_normalize)
    project.write_scatter(ids, res, args.out, args.snapshot)
    print(f"projected {len(ids)} rows with {args.method} -> {args.out}")


def cmd_run(args):
    cfg = pipeline.load_experiment_config(args.config)
    res = pipeline.run_pipeline(cfg)
    print((res.out / "matrix.csv").read_text(encoding="utf-8"), end="")
    print("stages:", json.dumps(res.counts, sort_keys=True))
    for what, err in res.failures.items():
        print(f"FAILED {what}: {err}", file=sys.stderr)


def cmd_clicks(args):
    sessions = collection.read_click_log(args.log)
    qrels = collection.qrels_from_clicks(sessions, (args.t1, args.t2))
    evaluation.write_qrels(qrels, args.out)
    print(f"{len(qrels)} judgments from {len(sessions)} sessions -> {args.out}")


def cmd_select_queries(args):
    qs = collection.read_queries(args.queries)
    topic_list = collection.load_topics(args.topics)
    tq = collection.match_queries_to_topics(qs, topic_list, args.mode)
    tq = collection.select_top_k_queries(tq, args.top_k)
    selected = tq.union()
    if args.qrels:
        selected = collection.filter_by_assessments(selected, evaluation.read_qrels(args.qrels), args.min_assessments)
    collection.write_queries(selected, args.out, with_frequency=True)
    print(f"selected {len(selected)} queries over {len(topic_list)} topics -> {args.out}")


def cmd_synth(args):
    out = Path(args.out)
    spec = synthetic.SynthSpec(n_docs=args.docs, n_queries=args.queries, seed=args.seed)
    synthetic.generate(out, spec)
    for date in spec.snapshots:
        corpus.ingest_snapshot(out / "raw" / f"{date}.jsonl", date, out / "store")
    conf = synthetic.write_bundle_configs(out)
    print(f"synthetic benchmark in {out}; run it with: workbench run --config {conf}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="workbench", description="Temporal IR evaluation workbench")
    p.add_argument("--store", default=os.environ.get("WORKBENCH_STORE", "store"),
                   help="snapshot store directory (default: $WORKBENCH_STORE or ./store)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="copy a raw collection into the store")
    s.add_argument("--date", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--vocab", help="subword vocabulary file (one piece per line)")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("stats", help="token/word statistics; std is the population form (divide by N)")
    s.add_argument("--date")
    s.add_argument("--out")
    s.add_argument("--vocab", help="recount tokens with this subword vocabulary")
    s.add_argument("--rate", type=float, help="LLM price per million tokens, to print a reading cost")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("analyze", help="print the analyzed terms of a text")
    s.add_argument("--text", required=True)
    s.add_argument("--config")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("index", help="build the BM25 index for a snapshot")
    s.add_argument("--date", required=True)
    s.add_argument("--analyzer")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_index)

    s = sub.add_parser("search", help="BM25 top-k retrieval into a run file")
    s.add_argument("--date", required=True)
    s.add_argument("--queries", required=True)
    s.add_argument("--k", type=int, default=100)
    s.add_argument("--k1", type=float, default=0.9)
    s.add_argument("--b", type=float, default=0.4)
    s.add_argument("--tag", default="bm25")
    s.add_argument("--analyzer")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("expand", help="LLM query expansion with a persistent cache")
    s.add_argument("--queries", required=True)
    s.add_argument("--provider", required=True)
    s.add_argument("--cache", required=True)
    s.add_argument("--concurrency", type=int, default=expand.DEFAULT_CONCURRENCY)
    s.add_argument("--out", help="write expanded queries as qid<TAB>text")
    s.set_defaults(func=cmd_expand)

    s = sub.add_parser("rerank", help="rescore a run with a second-stage scorer")
    s.add_argument("--run", required=True)
    s.add_argument("--scorer", required=True)
    s.add_argument("--queries", required=True)
    s.add_argument("--date", help="snapshot holding the document texts")
    s.add_argument("--snapshot", help="value substituted for {snapshot} in the scorer config")
    s.add_argument("--analyzer")
    s.add_argument("--workers", type=int, default=4)
    s.add_argument("--out", required=True)
    s.add_argument("--tag", default="bm25-reranked")
    s.set_defaults(func=cmd_rerank)

    s = sub.add_parser("eval", help="nDCG@k of a run")
    s.add_argument("--run", required=True)
    s.add_argument("--qrels", required=True)
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--gain", choices=evaluation.GAINS, default="linear")
    s.add_argument("--experiment", default="")
    s.add_argument("--snapshot", default="")
    s.add_argument("--out")
    s.add_argument("--per-query")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("drop", help="relative nDCG drop between two snapshots")
    s.add_argument("--report", required=True, help="report.csv or matrix.csv")
    s.add_argument("--from", dest="src", required=True)
    s.add_argument("--to", dest="dst", required=True)
    s.set_defaults(func=cmd_drop)

    s = sub.add_parser("topics", help="NMF or LDA topic model of a snapshot sample")
    s.add_argument("model", choices=("nmf", "lda"))
    s.add_argument("--date", required=True)
    s.add_argument("--k", type=int, default=20)
    s.add_argument("--sample", default="10000", help="document count, or a fraction like 0.01")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--iters", type=int, default=200, help="NMF iterations or LDA sweeps")
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--alpha", type=float, default=None, help="LDA doc-topic prior (default 50/k)")
    s.add_argument("--eta", type=float, default=0.01)
    s.add_argument("--min-df", type=int, default=1)
    s.add_argument("--max-vocab", type=int, default=None)
    s.add_argument("--top", type=int, default=100)
    s.add_argument("--full-analyzer", action="store_true", help="remove stopwords before modeling")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_topics)

    s = sub.add_parser("project", help="2-D projection of doc-topic weights")
    s.add_argument("--weights", required=True)
    s.add_argument("--method", choices=project.METHODS, default="pca")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--row-normalize", action="store_true")
    s.add_argument("--snapshot", default="")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_project)

    s = sub.add_parser("run", help="run a configured experiment over snapshots")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("clicks", help="graded qrels from a click log")
    s.add_argument("--log", required=True)
    s.add_argument("--t1", type=float, default=1 / 3)
    s.add_argument("--t2", type=float, default=2 / 3)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_clicks)

    s = sub.add_parser("select-queries", help="topic-matched, frequency-trimmed query set")
    s.add_argument("--queries", required=True, help="qid<TAB>text<TAB>frequency")
    s.add_argument("--topics", help="topic file (default: bundled topics)")
    s.add_argument("--mode", choices=collection.MATCH_MODES, default="substring")
    s.add_argument("--top-k", type=int, default=100)
    s.add_argument("--qrels")
    s.add_argument("--min-assessments", type=int, default=10)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_select_queries)

    s = sub.add_parser("synth", help="generate and ingest the synthetic benchmark")
    s.add_argument("--out", required=True)
    s.add_argument("--docs", type=int, default=1000)
    s.add_argument("--queries", type=int, default=50)
    s.add_argument("--seed", type=int, default=13)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args) or 0
    except (ConfigError, corpus.IngestError, evaluation.FormatError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
