"""Word-level alignment, WER decomposition, oracle hypothesis selection,
and inter-model correlation.

The edit-distance inner loop is the hot path when scoring large
transcript sets, so it lives in a compiled kernel
(``asrcausal._editops``, built from Cython) with a pure-Python fallback
selected at import time.  Both kernels implement the identical contract;
``kernel_backend()`` reports which one is active.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .errors import (
    EmptyReferenceError,
    MissingModelError,
    TooFewValuesError,
)

try:
    from . import _editops as _kernel
except ImportError:
    from . import _editops_py as _kernel


def kernel_backend() -> str:
    """Name of the active edit-distance kernel: 'compiled' or 'python'."""
    return _kernel.BACKEND


# Lowercase, strip punctuation except intra-word apostrophes, split on
# whitespace.  Scoring normalization is a known source of divergence
# between WER figures from different toolkits, so the rule is fixed here
# and documented in the README.
_PUNCT_RE = re.compile(r"[^a-z0-9\s']+")
_LONE_APOSTROPHE_RE = re.compile(r"(?<![a-z0-9])'|'(?![a-z0-9])")


def normalize_text(raw: str) -> list[str]:
    """Normalize a transcript to the token sequence used for scoring."""
    text = _PUNCT_RE.sub("", raw.lower())
    text = _LONE_APOSTROPHE_RE.sub("", text)
    return text.split()


@dataclass(frozen=True)
class AlignmentResult:
    """S/D/I decomposition of one (reference, hypothesis) alignment."""

    substitutions: int
    deletions: int
    insertions: int
    ref_len: int

    @property
    def total_errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer(self) -> float:
        """Word error rate as a fraction; may exceed 1 via insertions."""
        return self.total_errors / self.ref_len

    def to_dict(self) -> dict:
        return {
            "substitutions": self.substitutions,
            "deletions": self.deletions,
            "insertions": self.insertions,
            "ref_len": self.ref_len,
            "wer": self.wer,
        }


def align(reference: Sequence[str], hypothesis: Sequence[str]) -> AlignmentResult:
    """Minimum-cost word alignment of two token sequences.

    Ties between equal-cost alignments are broken by preferring fewer
    substitutions, then fewer deletions, so the decomposition is
    deterministic.  Raises EmptyReferenceError when the reference is
    empty (WER is undefined at N=0).
    """
    if len(reference) == 0:
        raise EmptyReferenceError("empty reference: WER undefined")
    try:
        subs, dels, ins = _kernel.align_counts(list(reference),
                                               list(hypothesis))
    except OverflowError:
        # compiled kernel caps sequence length; the pure kernel does not
        from . import _editops_py
        subs, dels, ins = _editops_py.align_counts(list(reference),
                                                   list(hypothesis))
    return AlignmentResult(subs, dels, ins, len(reference))


def align_text(reference: str, hypothesis: str) -> AlignmentResult:
    """Normalize both transcripts, then align."""
    return align(normalize_text(reference), normalize_text(hypothesis))


@dataclass(frozen=True)
class ErrorAggregate:
    """Micro-averaged error sums for one group of utterances.

    Rates are recomputed from the summed counts (sum errors / sum words),
    never averaged over utterances, and are reported in percent.
    """

    key: object
    substitutions: int
    deletions: int
    insertions: int
    ref_len: int

    @property
    def subs_rate(self) -> float:
        return 100.0 * self.substitutions / self.ref_len

    @property
    def del_rate(self) -> float:
        return 100.0 * self.deletions / self.ref_len

    @property
    def ins_rate(self) -> float:
        return 100.0 * self.insertions / self.ref_len

    @property
    def wer(self) -> float:
        return self.subs_rate + self.del_rate + self.ins_rate

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "substitutions": self.substitutions,
            "deletions": self.deletions,
            "insertions": self.insertions,
            "ref_len": self.ref_len,
            "subs_rate": self.subs_rate,
            "del_rate": self.del_rate,
            "ins_rate": self.ins_rate,
            "wer": self.wer,
        }


def score_record(record, model: str) -> AlignmentResult:
    """Align one record's hypothesis for `model` against its reference."""
    if model not in record.hypotheses:
        raise MissingModelError(f"no hypothesis for model {model!r}",
                                record_id=record.id)
    try:
        return align_text(record.reference, record.hypotheses[model])
    except EmptyReferenceError:
        raise EmptyReferenceError("empty reference: WER undefined",
                                  record_id=record.id) from None


def score_dataset(records: Iterable, model: str,
                  key: Callable = lambda r: "all") -> list[ErrorAggregate]:
    """Micro-averaged aggregates per group, emitted in sorted key order."""
    sums: dict = {}
    for record in records:
        result = score_record(record, model)
        k = key(record)
        s, d, i, n = sums.get(k, (0, 0, 0, 0))
        sums[k] = (s + result.substitutions, d + result.deletions,
                   i + result.insertions, n + result.ref_len)
    return [ErrorAggregate(k, *sums[k]) for k in sorted(sums, key=str)]


def oracle_select(records: Iterable) -> dict[str, str]:
    """Per utterance, the model whose hypothesis minimises WER.

    Ties are broken by fewer substitutions, then by lexicographically
    smallest model name.  All records must share the same model set.
    """
    records = list(records)
    if not records:
        return {}
    model_set = set(records[0].hypotheses)
    choice: dict[str, str] = {}
    for record in records:
        if set(record.hypotheses) != model_set:
            raise MissingModelError(
                "records do not share a common model set", record_id=record.id)
        best = None
        for model in sorted(record.hypotheses):
            result = score_record(record, model)
            cand = (result.wer, result.substitutions, model)
            if best is None or cand < best:
                best = cand
        choice[record.id] = best[2]
    return choice


def oracle_aggregate(records: Iterable) -> ErrorAggregate:
    """Micro-averaged aggregate of the per-utterance oracle choices."""
    records = list(records)
    chosen = oracle_select(records)
    s = d = i = n = 0
    for record in records:
        result = score_record(record, chosen[record.id])
        s += result.substitutions
        d += result.deletions
        i += result.insertions
        n += result.ref_len
    return ErrorAggregate("oracle", s, d, i, n)


def model_correlation(records: Iterable,
                      models: Sequence[str] | None = None,
                      method: str = "pearson"):
    """Pearson correlation of utterance-level WER vectors per model pair.

    Returns (models, matrix) where matrix[i][j] is the correlation of
    models i and j.  The diagonal is 1; a model with zero WER variance
    yields undefined (NaN) off-diagonal entries rather than 0.
    """
    if method != "pearson":
        raise ValueError(f"unsupported correlation method {method!r}")
    records = list(records)
    if len(records) < 2:
        raise TooFewValuesError("need at least 2 utterances for correlation")
    if models is None:
        models = sorted(records[0].hypotheses)
    vectors = {m: [score_record(r, m).wer for r in records] for m in models}

    def pearson(xs, ys):
        n = len(xs)
        mx = sum(xs) / n
        my = sum(ys) / n
        sx = math.sqrt(sum((x - mx) ** 2 for x in xs) / n)
        sy = math.sqrt(sum((y - my) ** 2 for y in ys) / n)
        if sx == 0.0 or sy == 0.0:
            return float("nan")
        cov = sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / n
        return cov / (sx * sy)

    matrix = [[1.0] * len(models) for _ in models]
    for a in range(len(models)):
        for b in range(a + 1, len(models)):
            r = pearson(vectors[models[a]], vectors[models[b]])
            matrix[a][b] = matrix[b][a] = r
    return list(models), matrix
