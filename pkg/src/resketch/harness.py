"""Execution-based evaluation: unit-test running and corpus-level reports.

Candidate faults (lex, parse, runtime, fuel) are data, not errors: a test
whose program misbehaves counts as failed and evaluation always completes.
The external runner protocol invokes a command template with
``{program_file}`` and ``{tests_file}`` placeholders and reads one
``PASS``/``FAIL`` line per test from stdout; a nonzero exit fails all
remaining tests.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .data import Dataset
from .errors import EvalError, LexError, ParseError, RunnerUnavailable, UnknownSampleId
from .lang import parse_program, run_program, tokenize_code, values_equal
from .metrics import (
    BleuConfig,
    CodeBleuConfig,
    bleu_corpus,
    bleu_sentence,
    codebleu,
    exact_match,
)

DEFAULT_FUEL = 100_000


@dataclass(frozen=True)
class RunnerSpec:
    kind: str = "builtin"           # "builtin" | "external"
    command: Optional[str] = None   # template with {program_file} {tests_file}
    fuel: int = DEFAULT_FUEL


@dataclass(frozen=True)
class TestOutcome:
    passed: tuple

    @property
    def n_total(self) -> int:
        return len(self.passed)

    @property
    def n_pass(self) -> int:
        return sum(self.passed)

    @property
    def pass_ratio(self) -> float:
        return self.n_pass / self.n_total if self.passed else 0.0


def _run_builtin(code_text: str, tests, fuel: int) -> TestOutcome:
    try:
        prog = parse_program(tokenize_code(code_text))
    except (LexError, ParseError):
        return TestOutcome(passed=tuple(False for _ in tests))
    flags = []
    for case in tests:
        try:
            got = run_program(prog, case.args, fuel=fuel)
            flags.append(values_equal(got, case.expected))
        except EvalError:
            flags.append(False)
    return TestOutcome(passed=tuple(flags))


def _run_external(code_text: str, tests, command: str) -> TestOutcome:
    with tempfile.TemporaryDirectory(prefix="resketch-run-") as td:
        program_file = Path(td) / "program.cl"
        tests_file = Path(td) / "tests.json"
        program_file.write_text(code_text, encoding="utf-8")
        tests_file.write_text(json.dumps({
            "tests": [{"args": c.args, "expected": c.expected}
                      for c in tests],
        }), encoding="utf-8")
        argv = shlex.split(command.format(program_file=str(program_file),
                                          tests_file=str(tests_file)))
        try:
            proc = subprocess.run(argv, capture_output=True, text=True,
                                  timeout=300)
        except FileNotFoundError:
            raise RunnerUnavailable(f"runner command not found: {argv[0]}")
        lines = [ln.strip() for ln in proc.stdout.splitlines() if ln.strip()]
        flags = []
        for i in range(len(tests)):
            if proc.returncode != 0 and i >= len(lines):
                flags.append(False)
            elif i < len(lines):
                flags.append(lines[i] == "PASS")
            else:
                flags.append(False)
        return TestOutcome(passed=tuple(flags))


def run_tests(code_text: str, tests, runner: RunnerSpec = RunnerSpec()) -> TestOutcome:
    if not tests:
        raise ValueError("tests must be non-empty")
    if runner.kind == "external":
        if not runner.command:
            raise RunnerUnavailable("external runner needs a command template")
        return _run_external(code_text, tests, runner.command)
    return _run_builtin(code_text, tests, runner.fuel)


@dataclass
class EvalReport:
    size: int
    em: float
    bleu: float
    codebleu: float
    pass_at_1: float
    avg_pass_ratio: float
    per_sample: list = field(default_factory=list)

    def headline(self) -> dict:
        return {
            "size": self.size,
            "em": self.em,
            "bleu": self.bleu,
            "codebleu": self.codebleu,
            "pass_at_1": self.pass_at_1,
            "avg_pass_ratio": self.avg_pass_ratio,
        }

    def to_json(self) -> str:
        return json.dumps(self.headline(), sort_keys=True)

    def per_sample_jsonl(self) -> str:
        return "\n".join(json.dumps(row, sort_keys=True)
                         for row in self.per_sample) + "\n"


def evaluate_corpus(predictions: list, dataset: Dataset,
                    bleu_config: BleuConfig = BleuConfig(),
                    codebleu_config: CodeBleuConfig = CodeBleuConfig(),
                    runner: RunnerSpec = RunnerSpec(),
                    with_per_sample: bool = True) -> EvalReport:
    """Score (sample_id, candidate_code_text) predictions against a dataset."""
    rows = []
    pairs = []
    em_total = cb_total = 0.0
    pass_full = ratio_total = 0.0
    n_with_tests = 0
    for sample_id, cand_text in sorted(predictions, key=lambda p: p[0]):
        if sample_id not in dataset.by_id:
            raise UnknownSampleId(sample_id)
        sample = dataset.by_id[sample_id]
        ref_tokens = tokenize_code(sample.code_text)
        try:
            cand_tokens = tokenize_code(cand_text)
        except LexError:
            cand_tokens = cand_text.split()
        em = exact_match(cand_tokens, ref_tokens)
        cb = codebleu(cand_text, sample.code_text, codebleu_config)
        sent_bleu = bleu_sentence(cand_tokens, ref_tokens, bleu_config)
        pairs.append((cand_tokens, ref_tokens))
        em_total += em
        cb_total += cb
        row = {"id": sample_id, "em": em, "bleu": sent_bleu, "codebleu": cb}
        if sample.tests:
            outcome = run_tests(cand_text, sample.tests, runner)
            n_with_tests += 1
            ratio_total += outcome.pass_ratio
            pass_full += float(outcome.pass_ratio == 1.0)
            row["pass_ratio"] = outcome.pass_ratio
            row["n_pass"] = outcome.n_pass
            row["n_total"] = outcome.n_total
        rows.append(row)
    if not rows:
        raise UnknownSampleId("no predictions to evaluate")
    n = len(rows)
    return EvalReport(
        size=n,
        em=em_total / n,
        bleu=bleu_corpus(pairs, bleu_config),
        codebleu=cb_total / n,
        pass_at_1=(pass_full / n_with_tests) if n_with_tests else 0.0,
        avg_pass_ratio=(ratio_total / n_with_tests) if n_with_tests else 0.0,
        per_sample=rows if with_per_sample else [],
    )
