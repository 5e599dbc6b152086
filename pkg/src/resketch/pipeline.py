"""End-to-end orchestration: training-data construction, two-stage training,
generation, and the experiment/ablation harness.

An experiment run materializes its artifacts in one output directory::

    corpus.jsonl  index.skix  sketcher.skck  editor.skck
    predictions.jsonl  report.json  manifest.json

Stages resume: a stage is skipped when its output file still matches the
checksum recorded in the previous manifest and its inputs/config digest are
unchanged, so deleting one checkpoint recomputes only the stages downstream
of it.  The report is byte-deterministic for a fixed config.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

from . import __version__
from .data import Dataset, build_vocabulary, load_dataset, save_dataset, tokenize_nl
from .errors import ConfigError, LockError, MissingModel, StageError
from .generator import GenConfig, generate_corpus
from .harness import EvalReport, RunnerSpec, evaluate_corpus
from .lang import detokenize, tokenize_code
from .neural import (
    Editor,
    Sketcher,
    TrainConfig,
    beam_decode,
    load_checkpoint,
    predict_sketch,
    save_checkpoint,
    train_editor,
    train_sketcher,
)
from .neural.layers import softmax
from .retrieval import (
    RetrievalIndex,
    build_index,
    load_index,
    retrieve,
    retrieve_random,
    save_index,
)
from .sketching import (
    anonymize_sketch,
    assemble_sketch,
    make_labels,
    make_overlap_labels,
    oracle_sketch,
)

log = logging.getLogger(__name__)

SKETCHER_VARIANTS = ("neural-lcs", "oracle", "anonymize", "overlap", "none")
RETRIEVAL_MODES = ("bm25", "random")


@dataclass(frozen=True)
class ExperimentConfig:
    gen: GenConfig = GenConfig()
    train: TrainConfig = TrainConfig()
    k_train: int = 5
    k_infer: int = 1
    sketcher_variant: str = "neural-lcs"
    retrieval_mode: str = "bm25"
    beam_width: int = 10
    retrieval_seed: int = 0
    out_dir: str = "runs/default"
    dataset_path: Optional[str] = None  # reuse an existing corpus file
    index_path: Optional[str] = None    # reuse an existing index file

    def validate(self) -> "ExperimentConfig":
        if self.sketcher_variant not in SKETCHER_VARIANTS:
            raise ConfigError(f"unknown sketcher variant "
                              f"{self.sketcher_variant!r}")
        if self.retrieval_mode not in RETRIEVAL_MODES:
            raise ConfigError(f"unknown retrieval mode "
                              f"{self.retrieval_mode!r}")
        if self.k_train < 1 or self.k_infer < 1 or self.beam_width < 1:
            raise ConfigError("k_train, k_infer and beam_width must be >= 1")
        self.train.validate()
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        gen = dict(raw.pop("gen", {}))
        if "split_fractions" in gen:
            gen["split_fractions"] = tuple(gen["split_fractions"])
        train = dict(raw.pop("train", {}))
        return ExperimentConfig(gen=GenConfig(**gen),
                                train=TrainConfig(**train),
                                **raw).validate()


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith(".toml"):
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib
        raw = tomllib.loads(text)
    else:
        raw = json.loads(text)
    return ExperimentConfig.from_dict(raw)


# -- training-data construction ------------------------------------------------

def _neighbor_ids(sample, index: RetrievalIndex, k: int, mode: str,
                  seed: int, ordinal: int, exclude_own: bool = True) -> list:
    exclude = sample.id if exclude_own else None
    if mode == "random":
        return retrieve_random(index, k, seed=seed + ordinal,
                               exclude_id=exclude).ids()
    return retrieve(index, tokenize_nl(sample.nl_text), k,
                    exclude_id=exclude).ids()


def build_neighbor_map(samples, index: RetrievalIndex, k: int,
                       mode: str = "bm25", seed: int = 0) -> dict:
    """sample_id -> ranked neighbor ids (ground truth excluded by id)."""
    return {
        s.id: _neighbor_ids(s, index, k, mode, seed, ordinal)
        for ordinal, s in enumerate(samples)
    }


def build_sketcher_triples(dataset: Dataset, index: RetrievalIndex,
                           k_train: int = 5, labeler: str = "lcs",
                           mode: str = "bm25", seed: int = 0,
                           split: str = "train",
                           neighbor_map: Optional[dict] = None) -> list:
    """(nl_tokens, similar_tokens, keep_labels) triples for sketcher training."""
    make = make_overlap_labels if labeler == "overlap" else make_labels
    samples = dataset.split(split)
    neighbor_map = neighbor_map or build_neighbor_map(samples, index, k_train,
                                                      mode, seed)
    triples = []
    for s in samples:
        nl = tokenize_nl(s.nl_text)
        target = tokenize_code(s.code_text)
        for nid in neighbor_map[s.id]:
            similar = tokenize_code(index.sample(nid).code_text)
            triples.append((nl, similar, make(similar, target)))
    return triples


def predict_sketches_batch(model: Sketcher, pairs: list, threshold: float,
                           batch_size: int = 64) -> list:
    """Batched predict-then-assemble for (nl_tokens, similar_tokens) pairs."""
    out = []
    for start in range(0, len(pairs), batch_size):
        chunk = pairs[start:start + batch_size]
        rows = [model.encode_pair(nl, sim) for nl, sim in chunk]
        logits = model.forward_rows(rows)
        probs = softmax(logits)[..., 1]
        for i, ((_, sim), row) in enumerate(zip(chunk, rows)):
            s, n = row["code_start"], row["code_len"]
            keep = [bool(p > threshold) for p in probs[i, s:s + n]]
            sim_trunc = list(sim)[:model.config.max_code_len]
            out.append(assemble_sketch(sim_trunc, keep) if sim_trunc else [])
    return out


def build_editor_triples(dataset: Dataset, index: RetrievalIndex,
                         sketcher: Optional[Sketcher], variant: str,
                         k_train: int = 5, threshold: float = 0.5,
                         mode: str = "bm25", seed: int = 0,
                         split: str = "train",
                         neighbor_map: Optional[dict] = None) -> list:
    """(nl_tokens, sketch_tokens, target_tokens) triples for editor training."""
    samples = dataset.split(split)
    if variant == "none":
        return [(tokenize_nl(s.nl_text), [], tokenize_code(s.code_text))
                for s in samples]
    if variant in ("neural-lcs", "overlap") and sketcher is None:
        raise MissingModel(f"variant {variant!r} needs a trained sketcher")
    neighbor_map = neighbor_map or build_neighbor_map(samples, index, k_train,
                                                      mode, seed)
    flat = []
    for s in samples:
        nl = tokenize_nl(s.nl_text)
        target = tokenize_code(s.code_text)
        for nid in neighbor_map[s.id]:
            similar = tokenize_code(index.sample(nid).code_text)
            flat.append((nl, similar, target))
    if variant in ("neural-lcs", "overlap"):
        sketches = predict_sketches_batch(
            sketcher, [(nl, sim) for nl, sim, _ in flat], threshold)
    elif variant == "oracle":
        sketches = [oracle_sketch(sim, tgt) for _, sim, tgt in flat]
    else:  # anonymize
        sketches = [anonymize_sketch(sim) for _, sim, _ in flat]
    return [(nl, sk, tgt) for (nl, _, tgt), sk in zip(flat, sketches)]


# -- single-request generation ---------------------------------------------------

def generate(nl_text: str, index: RetrievalIndex,
             sketcher: Optional[Sketcher], editor: Editor,
             config: ExperimentConfig, exclude_id: Optional[str] = None,
             oracle_target: Optional[str] = None,
             request_ordinal: int = 0) -> str:
    """Retrieve, sketch, edit: NL description to CardLang source text."""
    if editor is None:
        raise MissingModel("generation needs a trained editor")
    nl = tokenize_nl(nl_text)
    variant = config.sketcher_variant
    sketch = []
    if variant != "none":
        if config.retrieval_mode == "random":
            hits = retrieve_random(index, config.k_infer,
                                   seed=config.retrieval_seed + request_ordinal,
                                   exclude_id=exclude_id)
        else:
            hits = retrieve(index, nl, config.k_infer, exclude_id=exclude_id)
        similar = tokenize_code(index.sample(hits.ids()[0]).code_text)
        if variant in ("neural-lcs", "overlap"):
            if sketcher is None:
                raise MissingModel(f"variant {variant!r} needs a sketcher")
            sketch = predict_sketch(sketcher, nl, similar,
                                    config.train.keep_threshold)
        elif variant == "oracle":
            if oracle_target is None:
                raise MissingModel(
                    "oracle variant needs the reference code at generation")
            sketch = oracle_sketch(similar, tokenize_code(oracle_target))
        else:  # anonymize
            sketch = anonymize_sketch(similar)
    tokens = beam_decode(editor, nl, sketch, beam_width=config.beam_width)
    return detokenize(tokens)


# -- experiment stages --------------------------------------------------------

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _digest(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True).encode("utf-8")).hexdigest()


@dataclass
class RunManifest:
    config: dict
    tool_version: str = __version__
    artifacts: dict = field(default_factory=dict)
    stages: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def record(self, name: str, path: Path, stage_digest: str,
               seconds: float) -> None:
        self.artifacts[name] = {"path": path.name, "sha256": _sha256(path)}
        self.stages[name] = stage_digest
        self.timings[name] = round(seconds, 3)

    def to_json(self) -> str:
        return json.dumps({
            "config": self.config,
            "tool_version": self.tool_version,
            "artifacts": self.artifacts,
            "stages": self.stages,
            "timings": self.timings,
        }, sort_keys=True, indent=2)

    @staticmethod
    def load(path: Path) -> Optional["RunManifest"]:
        if not path.exists():
            return None
        raw = json.loads(path.read_text(encoding="utf-8"))
        m = RunManifest(config=raw.get("config", {}),
                        tool_version=raw.get("tool_version", ""))
        m.artifacts = raw.get("artifacts", {})
        m.stages = raw.get("stages", {})
        m.timings = raw.get("timings", {})
        return m


class _Lock:
    def __init__(self, out_dir: Path):
        self.path = out_dir / ".lock"

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise LockError(
                f"{self.path} exists; another run owns this directory "
                f"(remove the file if that run is dead)") from None
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def __exit__(self, *exc):
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass
        return False


class _Stages:
    """Skip/recompute bookkeeping against the previous manifest."""

    def __init__(self, out_dir: Path, prev: Optional[RunManifest],
                 manifest: RunManifest):
        self.out_dir = out_dir
        self.prev = prev
        self.manifest = manifest

    def fresh(self, name: str, filename: str, digest: str) -> bool:
        path = self.out_dir / filename
        if not path.exists() or self.prev is None:
            return False
        prev_art = self.prev.artifacts.get(name)
        if self.prev.stages.get(name) != digest or prev_art is None:
            return False
        return prev_art["sha256"] == _sha256(path)

    def run(self, name: str, filename: str, digest: str, producer) -> Path:
        path = self.out_dir / filename
        started = time.time()
        try:
            if self.fresh(name, filename, digest):
                log.info("stage %s: up to date", name)
            else:
                log.info("stage %s: running", name)
                producer(path)
        except Exception as e:
            raise StageError(name, e) from e
        self.manifest.record(name, path, digest, time.time() - started)
        return path


def run_experiment(config: ExperimentConfig,
                   runner: RunnerSpec = RunnerSpec(),
                   with_per_sample: bool = True):
    """Corpus -> index -> sketcher -> editor -> predictions -> report."""
    config.validate()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    prev = RunManifest.load(out_dir / "manifest.json")
    manifest = RunManifest(config=config.to_dict())
    with _Lock(out_dir):
        stages = _Stages(out_dir, prev, manifest)
        report = _run_stages(config, stages, runner, with_per_sample)
        (out_dir / "manifest.json").write_text(manifest.to_json() + "\n",
                                               encoding="utf-8")
    return report, manifest


def _run_stages(config: ExperimentConfig, stages: _Stages,
                runner: RunnerSpec, with_per_sample: bool) -> EvalReport:
    variant = config.sketcher_variant

    # corpus
    if config.dataset_path:
        corpus_digest = _digest({"external": _sha256(Path(config.dataset_path))})

        def make_corpus(path):
            save_dataset(load_dataset(config.dataset_path), path)
    else:
        corpus_digest = _digest({"gen": asdict(config.gen)})

        def make_corpus(path):
            save_dataset(generate_corpus(config.gen), path)
    corpus_path = stages.run("corpus", "corpus.jsonl", corpus_digest,
                             make_corpus)
    dataset = load_dataset(corpus_path)

    # index over the train split
    if config.index_path:
        index_digest = _digest({"external": _sha256(Path(config.index_path))})

        def make_index(path):
            save_index(load_index(config.index_path), path)
    else:
        index_digest = _digest({"corpus": stages.manifest.artifacts["corpus"]["sha256"]})

        def make_index(path):
            save_index(build_index(dataset, ("train",)), path)
    index_path = stages.run("index", "index.skix", index_digest, make_index)
    index = load_index(index_path).attach(dataset)

    vocab = build_vocabulary(dataset)
    train_samples = dataset.split("train")
    dev_samples = dataset.split("dev")

    needs_sketcher = variant in ("neural-lcs", "overlap")
    sketcher = None
    retrieval_args = {"mode": config.retrieval_mode,
                      "seed": config.retrieval_seed}
    if needs_sketcher:
        labeler = "overlap" if variant == "overlap" else "lcs"
        sk_digest = _digest({
            "corpus": stages.manifest.artifacts["corpus"]["sha256"],
            "train": asdict(config.train), "k_train": config.k_train,
            "labeler": labeler, **retrieval_args,
        })

        def make_sketcher(path):
            triples = build_sketcher_triples(
                dataset, index, config.k_train, labeler,
                split="train", **retrieval_args)
            dev_triples = build_sketcher_triples(
                dataset, index, 1, labeler, split="dev",
                **retrieval_args) if dev_samples else None
            model, stats = train_sketcher(triples, vocab, config.train,
                                          dev_triples)
            log.info("sketcher losses: %s", [round(x, 4)
                                             for x in stats.epoch_losses])
            save_checkpoint(model, path)
        sketcher_path = stages.run("sketcher", "sketcher.skck", sk_digest,
                                   make_sketcher)
        sketcher = load_checkpoint(sketcher_path, expect_config=config.train)

    ed_digest = _digest({
        "corpus": stages.manifest.artifacts["corpus"]["sha256"],
        "sketcher": stages.manifest.artifacts.get("sketcher", {}).get("sha256"),
        "train": asdict(config.train), "k_train": config.k_train,
        "variant": variant, **retrieval_args,
    })

    def make_editor(path):
        triples = build_editor_triples(
            dataset, index, sketcher, variant, config.k_train,
            config.train.keep_threshold, split="train", **retrieval_args)
        dev_triples = build_editor_triples(
            dataset, index, sketcher, variant, 1,
            config.train.keep_threshold, split="dev",
            **retrieval_args) if dev_samples else None
        model, stats = train_editor(triples, vocab, config.train, dev_triples)
        log.info("editor losses: %s", [round(x, 4)
                                       for x in stats.epoch_losses])
        save_checkpoint(model, path)
    editor_path = stages.run("editor", "editor.skck", ed_digest, make_editor)
    editor = load_checkpoint(editor_path, expect_config=config.train)

    pred_digest = _digest({
        "editor": stages.manifest.artifacts["editor"]["sha256"],
        "sketcher": stages.manifest.artifacts.get("sketcher", {}).get("sha256"),
        "beam": config.beam_width, "k_infer": config.k_infer,
        "variant": variant, **retrieval_args,
    })

    def make_predictions(path):
        rows = []
        for ordinal, s in enumerate(dataset.split("test")):
            code = generate(s.nl_text, index, sketcher, editor, config,
                            oracle_target=(s.code_text if variant == "oracle"
                                           else None),
                            request_ordinal=ordinal)
            rows.append({"id": s.id, "code": code})
        with open(path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    predictions_path = stages.run("predict", "predictions.jsonl", pred_digest,
                                  make_predictions)

    eval_digest = _digest({
        "predictions": stages.manifest.artifacts["predict"]["sha256"],
        "runner": runner.kind,
        "per_sample": with_per_sample,
    })

    def make_report(path):
        preds = []
        with open(predictions_path, encoding="utf-8") as fh:
            for line in fh:
                row = json.loads(line)
                preds.append((row["id"], row["code"]))
        report = evaluate_corpus(preds, dataset, runner=runner,
                                 with_per_sample=with_per_sample)
        path.write_text(report.to_json() + "\n", encoding="utf-8")
        if with_per_sample:
            (path.parent / "report_per_sample.jsonl").write_text(
                report.per_sample_jsonl(), encoding="utf-8")
    report_path = stages.run("evaluate", "report.json", eval_digest,
                             make_report)

    raw = json.loads(report_path.read_text(encoding="utf-8"))
    return EvalReport(size=raw["size"], em=raw["em"], bleu=raw["bleu"],
                      codebleu=raw["codebleu"], pass_at_1=raw["pass_at_1"],
                      avg_pass_ratio=raw["avg_pass_ratio"])


ABLATE_AXES = ("sketcher_variant", "retrieval_mode", "keep_threshold",
               "beam_width")


def ablate(base_config: ExperimentConfig, axes: dict,
           runner: RunnerSpec = RunnerSpec()) -> list:
    """Cross-product of configurations sharing one corpus, index and test split.

    Returns one row per configuration: axis values plus all headline metrics.
    """
    for axis in axes:
        if axis not in ABLATE_AXES:
            raise ConfigError(f"unknown ablation axis {axis!r}")
    base_config.validate()
    base_dir = Path(base_config.out_dir)
    base_dir.mkdir(parents=True, exist_ok=True)

    # materialize shared corpus and index once
    corpus_path = base_dir / "corpus.jsonl"
    if not corpus_path.exists():
        if base_config.dataset_path:
            save_dataset(load_dataset(base_config.dataset_path), corpus_path)
        else:
            save_dataset(generate_corpus(base_config.gen), corpus_path)
    index_path = base_dir / "index.skix"
    if not index_path.exists():
        save_index(build_index(load_dataset(corpus_path), ("train",)),
                   index_path)

    names = sorted(axes)
    rows = []
    for combo in itertools.product(*(axes[n] for n in names)):
        overrides = dict(zip(names, combo))
        slug = "-".join(f"{n}_{overrides[n]}" for n in names)
        cfg = replace(base_config,
                      out_dir=str(base_dir / "rows" / slug),
                      dataset_path=str(corpus_path),
                      index_path=str(index_path))
        if "sketcher_variant" in overrides:
            cfg = replace(cfg, sketcher_variant=overrides["sketcher_variant"])
        if "retrieval_mode" in overrides:
            cfg = replace(cfg, retrieval_mode=overrides["retrieval_mode"])
        if "beam_width" in overrides:
            cfg = replace(cfg, beam_width=int(overrides["beam_width"]))
        if "keep_threshold" in overrides:
            cfg = replace(cfg, train=replace(
                cfg.train, keep_threshold=float(overrides["keep_threshold"])))
        report, _ = run_experiment(cfg, runner=runner, with_per_sample=False)
        rows.append({**overrides, **report.headline()})
    return rows


def format_table(rows: list) -> str:
    """Plain-text table for human-readable CLI output."""
    if not rows:
        return "(no rows)"
    cols = list(rows[0].keys())
    rendered = [[_fmt_cell(r.get(c)) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in rendered))
              for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rendered:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    return "\n".join(lines)


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)
