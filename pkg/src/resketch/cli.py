"""Command-line interface.

Verbs: gen-corpus, index build|query, sketch oracle|predict,
train sketcher|editor, generate, evaluate, experiment run, ablate.
Exit codes: 0 success, 2 config error, 3 data error, 4 model error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .data import build_vocabulary, load_dataset, tokenize_nl
from .errors import ResketchError
from .generator import GenConfig, generate_corpus
from .harness import RunnerSpec, evaluate_corpus
from .lang import tokenize_code
from .neural import load_checkpoint, save_checkpoint, train_editor, train_sketcher
from .pipeline import (
    ExperimentConfig,
    ablate,
    build_editor_triples,
    build_neighbor_map,
    build_sketcher_triples,
    format_table,
    generate,
    load_config,
    run_experiment,
)
from .retrieval import build_index, load_index, retrieve, save_index
from .sketching import make_labels, oracle_sketch


def _add_common(p):
    p.add_argument("--seed", type=int, default=None,
                   help="override corpus/train/retrieval seeds")
    p.add_argument("--config", default=None,
                   help="experiment config file (.toml or .json)")
    p.add_argument("--out", default=None, help="output path or directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="resketch",
                                 description="retrieve-sketch-edit toolkit")
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen-corpus", help="generate a synthetic corpus")
    _add_common(g)
    g.add_argument("--families", type=int, default=12)
    g.add_argument("--per-family", type=int, default=200)
    g.add_argument("--tests", type=int, default=4)
    g.add_argument("--splits", default="0.8333333333333334,0.08333333333333333,0.08333333333333333",
                   help="train,dev,test fractions")

    ix = sub.add_parser("index", help="build or query a retrieval index")
    ix_sub = ix.add_subparsers(dest="index_cmd", required=True)
    ib = ix_sub.add_parser("build")
    _add_common(ib)
    ib.add_argument("--in", dest="inp", required=True, help="corpus JSONL")
    ib.add_argument("--split", default="train")
    iq = ix_sub.add_parser("query")
    _add_common(iq)
    iq.add_argument("--idx", required=True)
    iq.add_argument("--nl", required=True)
    iq.add_argument("-k", type=int, default=5)

    sk = sub.add_parser("sketch", help="emit oracle or predicted sketches")
    sk_sub = sk.add_subparsers(dest="sketch_cmd", required=True)
    for name in ("oracle", "predict"):
        sp = sk_sub.add_parser(name)
        _add_common(sp)
        sp.add_argument("--in", dest="inp", required=True, help="corpus JSONL")
        sp.add_argument("--idx", required=True)
        sp.add_argument("-k", type=int, default=5)
        sp.add_argument("--split", default="train")
        if name == "predict":
            sp.add_argument("--ckpt", required=True)
            sp.add_argument("--threshold", type=float, default=None)

    tr = sub.add_parser("train", help="train the sketcher or the editor")
    tr_sub = tr.add_subparsers(dest="train_cmd", required=True)
    for name in ("sketcher", "editor"):
        tp = tr_sub.add_parser(name)
        _add_common(tp)
        tp.add_argument("--in", dest="inp", required=True, help="corpus JSONL")
        tp.add_argument("--idx", required=True)
        tp.add_argument("--epochs", type=int, default=None)
        tp.add_argument("-k", type=int, default=5)
        if name == "sketcher":
            tp.add_argument("--labels", choices=("lcs", "overlap"),
                            default="lcs")
        else:
            tp.add_argument("--sketcher", default=None,
                            help="sketcher checkpoint")
            tp.add_argument("--variant", default="neural-lcs")

    ge = sub.add_parser("generate", help="generate code for one description")
    _add_common(ge)
    ge.add_argument("--corpus", required=True)
    ge.add_argument("--idx", required=True)
    ge.add_argument("--editor", required=True)
    ge.add_argument("--sketcher", default=None)
    ge.add_argument("--variant", default="neural-lcs")
    ge.add_argument("--mode", default="bm25")
    ge.add_argument("--beam", type=int, default=10)
    ge.add_argument("--nl", required=True)

    ev = sub.add_parser("evaluate", help="score predictions against a corpus")
    _add_common(ev)
    ev.add_argument("--pred", required=True, help="predictions JSONL")
    ev.add_argument("--corpus", required=True)
    ev.add_argument("--per-sample", action="store_true")
    ev.add_argument("--runner", default=None,
                    help="external runner command template")

    ex = sub.add_parser("experiment", help="run a full experiment")
    ex_sub = ex.add_subparsers(dest="experiment_cmd", required=True)
    er = ex_sub.add_parser("run")
    _add_common(er)

    ab = sub.add_parser("ablate", help="cross-product of experiment rows")
    _add_common(ab)
    ab.add_argument("--axes", required=True,
                    help="e.g. sketcher_variant=none,neural-lcs;retrieval_mode=bm25,random")
    return ap


def _experiment_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, gen=replace(cfg.gen, seed=args.seed),
                      train=replace(cfg.train, seed=args.seed),
                      retrieval_seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    return cfg.validate()


def _parse_axes(spec: str) -> dict:
    axes = {}
    for part in spec.split(";"):
        if not part.strip():
            continue
        name, _, values = part.partition("=")
        axes[name.strip()] = [v.strip() for v in values.split(",") if v.strip()]
    return axes


def _sketch_rows(args, predictor) -> None:
    dataset = load_dataset(args.inp)
    index = load_index(args.idx).attach(dataset)
    samples = dataset.split(args.split)
    neighbors = build_neighbor_map(samples, index, args.k)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for s in samples:
            nl = tokenize_nl(s.nl_text)
            target = tokenize_code(s.code_text)
            for nid in neighbors[s.id]:
                similar = tokenize_code(index.sample(nid).code_text)
                sketch, labels = predictor(nl, similar, target)
                out.write(json.dumps({
                    "id": s.id, "similar_id": nid,
                    "sketch_tokens": sketch, "labels": labels,
                }, sort_keys=True) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ResketchError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


def _dispatch(args) -> int:
    if args.cmd == "gen-corpus":
        fracs = tuple(float(x) for x in args.splits.split(","))
        cfg = GenConfig(seed=args.seed or 0, family_count=args.families,
                        samples_per_family=args.per_family,
                        test_cases_per_sample=args.tests,
                        split_fractions=fracs)
        from .data import save_dataset
        dataset = generate_corpus(cfg)
        out = args.out or "corpus.jsonl"
        save_dataset(dataset, out)
        print(f"wrote {len(dataset)} samples to {out}")
        return 0

    if args.cmd == "index" and args.index_cmd == "build":
        dataset = load_dataset(args.inp)
        index = build_index(dataset, (args.split,))
        out = args.out or "index.skix"
        save_index(index, out)
        print(f"indexed {index.n_docs} documents into {out}")
        return 0

    if args.cmd == "index" and args.index_cmd == "query":
        index = load_index(args.idx)
        hits = retrieve(index, tokenize_nl(args.nl), args.k)
        for doc_id, score in hits.hits:
            print(f"{score:.6f}\t{doc_id}")
        return 0

    if args.cmd == "sketch":
        if args.sketch_cmd == "oracle":
            def predictor(nl, similar, target):
                labels = make_labels(similar, target)
                return oracle_sketch(similar, target), labels
        else:
            from .neural import sketcher_forward
            model = load_checkpoint(args.ckpt)
            threshold = (model.config.keep_threshold if args.threshold is None
                         else args.threshold)

            def predictor(nl, similar, target):
                trunc = similar[:model.config.max_code_len]
                p = sketcher_forward(model, nl, trunc)
                keep = [bool(pi > threshold) for pi in p]
                from resketch.sketching import assemble_sketch
                return assemble_sketch(trunc, keep), keep
        _sketch_rows(args, predictor)
        return 0

    if args.cmd == "train":
        cfg = _experiment_config(args)
        train_cfg = cfg.train
        if args.epochs is not None:
            train_cfg = replace(train_cfg, epochs=args.epochs)
        dataset = load_dataset(args.inp)
        index = load_index(args.idx).attach(dataset)
        vocab = build_vocabulary(dataset)
        if args.train_cmd == "sketcher":
            triples = build_sketcher_triples(dataset, index, args.k,
                                             args.labels)
            model, stats = train_sketcher(triples, vocab, train_cfg)
        else:
            sketcher = load_checkpoint(args.sketcher) if args.sketcher else None
            triples = build_editor_triples(dataset, index, sketcher,
                                           args.variant, args.k,
                                           train_cfg.keep_threshold)
            model, stats = train_editor(triples, vocab, train_cfg)
        out = args.out or f"{args.train_cmd}.skck"
        save_checkpoint(model, out)
        losses = ", ".join(f"{x:.4f}" for x in stats.epoch_losses)
        print(f"saved {out} (epoch losses: {losses})")
        return 0

    if args.cmd == "generate":
        cfg = _experiment_config(args)
        cfg = replace(cfg, sketcher_variant=args.variant,
                      retrieval_mode=args.mode, beam_width=args.beam)
        dataset = load_dataset(args.corpus)
        index = load_index(args.idx).attach(dataset)
        sketcher = load_checkpoint(args.sketcher) if args.sketcher else None
        editor = load_checkpoint(args.editor)
        print(generate(args.nl, index, sketcher, editor, cfg), end="")
        return 0

    if args.cmd == "evaluate":
        dataset = load_dataset(args.corpus)
        preds = []
        with open(args.pred, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    row = json.loads(line)
                    preds.append((row["id"], row["code"]))
        runner = (RunnerSpec(kind="external", command=args.runner)
                  if args.runner else RunnerSpec())
        report = evaluate_corpus(preds, dataset, runner=runner,
                                 with_per_sample=args.per_sample)
        out = Path(args.out) if args.out else None
        if out:
            out.write_text(report.to_json() + "\n", encoding="utf-8")
            if args.per_sample:
                out.with_suffix(".per_sample.jsonl").write_text(
                    report.per_sample_jsonl(), encoding="utf-8")
        print(format_table([report.headline()]))
        return 0

    if args.cmd == "experiment":
        cfg = _experiment_config(args)
        report, manifest = run_experiment(cfg)
        print(format_table([report.headline()]))
        return 0

    if args.cmd == "ablate":
        cfg = _experiment_config(args)
        rows = ablate(cfg, _parse_axes(args.axes))
        print(format_table(rows))
        return 0

    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
