"""Word-level Levenshtein alignment, WER and cumulative accuracy labels."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import DataError


class OpKind(str, Enum):
    MATCH = "match"
    SUBSTITUTE = "substitute"
    DELETE = "delete"
    INSERT = "insert"


@dataclass(frozen=True)
class EditOp:
    kind: OpKind
    ref_index: int | None = None
    hyp_index: int | None = None


@dataclass(frozen=True)
class AlignmentResult:
    ops: tuple[EditOp, ...]
    n_sub: int
    n_del: int
    n_ins: int
    n_match: int
    correct_flags: tuple[bool, ...]
    dels_before: tuple[int, ...]

    @property
    def ref_len(self) -> int:
        return self.n_match + self.n_sub + self.n_del

    @property
    def hyp_len(self) -> int:
        return self.n_match + self.n_sub + self.n_ins

    @property
    def n_errors(self) -> int:
        return self.n_sub + self.n_del + self.n_ins


def edit_distance(reference: Sequence[str], hypothesis: Sequence[str]) -> np.ndarray:
    """Full DP cost table; ``D[i, j]`` aligns ``reference[:i]`` with ``hypothesis[:j]``."""
    R, H = len(reference), len(hypothesis)
    D = np.zeros((R + 1, H + 1), dtype=np.int64)
    D[:, 0] = np.arange(R + 1)
    D[0, :] = np.arange(H + 1)
    for i in range(1, R + 1):
        r = reference[i - 1]
        for j in range(1, H + 1):
            diag = D[i - 1, j - 1] + (r != hypothesis[j - 1])
            D[i, j] = min(diag, D[i - 1, j] + 1, D[i, j - 1] + 1)
    return D


def align(reference: Sequence[str], hypothesis: Sequence[str]) -> AlignmentResult:
    """Minimal-cost alignment of ``hypothesis`` against ``reference``.

    Backtrace ties are broken Match > Substitute > Delete > Insert, so the
    result is deterministic.
    """
    reference = list(reference)
    hypothesis = list(hypothesis)
    D = edit_distance(reference, hypothesis)
    i, j = len(reference), len(hypothesis)
    ops: list[EditOp] = []
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            same = reference[i - 1] == hypothesis[j - 1]
            if same and D[i, j] == D[i - 1, j - 1]:
                ops.append(EditOp(OpKind.MATCH, i - 1, j - 1))
                i, j = i - 1, j - 1
                continue
            if not same and D[i, j] == D[i - 1, j - 1] + 1:
                ops.append(EditOp(OpKind.SUBSTITUTE, i - 1, j - 1))
                i, j = i - 1, j - 1
                continue
        if i > 0 and D[i, j] == D[i - 1, j] + 1:
            ops.append(EditOp(OpKind.DELETE, ref_index=i - 1))
            i -= 1
        else:
            ops.append(EditOp(OpKind.INSERT, hyp_index=j - 1))
            j -= 1
    ops.reverse()

    H = len(hypothesis)
    flags = [False] * H
    dels = [0] * H
    counts = dict.fromkeys(OpKind, 0)
    next_hyp = 0
    for op in ops:
        counts[op.kind] += 1
        if op.kind is OpKind.DELETE:
            # attach to the gap before the next hypothesis word; trailing ones go to the last word
            if H:
                dels[min(next_hyp, H - 1)] += 1
        else:
            if op.kind is OpKind.MATCH:
                flags[op.hyp_index] = True
            next_hyp = op.hyp_index + 1
    return AlignmentResult(
        ops=tuple(ops),
        n_sub=counts[OpKind.SUBSTITUTE],
        n_del=counts[OpKind.DELETE],
        n_ins=counts[OpKind.INSERT],
        n_match=counts[OpKind.MATCH],
        correct_flags=tuple(flags),
        dels_before=tuple(dels),
    )


def wer(result: AlignmentResult, ref_len: int) -> float:
    """(S + D + I) / ref_len.

    With an empty reference the rate is undefined; we return 0 for an empty
    hypothesis and the raw insertion count otherwise, so nuisance audio with
    spurious output still scores as erroneous.
    """
    if ref_len != result.ref_len:
        raise DataError(f"ref_len {ref_len} inconsistent with alignment counts ({result.ref_len})")
    if ref_len == 0:
        return float(result.n_ins)
    return result.n_errors / ref_len


def utterance_accuracy(result: AlignmentResult) -> float:
    """clamp(1 - WER, 0, 1)."""
    return min(1.0, max(0.0, 1.0 - wer(result, result.ref_len)))


def cumulative_labels(result: AlignmentResult, count_deletions: bool = True) -> np.ndarray:
    """Length-normalised running accuracy ``y_1..y_N`` over hypothesis words.

    ``y_n = clamp((correct_n - del_n) / n, 0, 1)``, where ``del_n`` counts
    deletions attributed to the first ``n`` positions. With
    ``count_deletions=False`` this is the plain ``correct_n / n``.
    """
    N = len(result.correct_flags)
    if N == 0:
        raise DataError("cumulative labels need at least one hypothesis word")
    correct = np.cumsum(np.asarray(result.correct_flags, dtype=np.float64))
    n = np.arange(1, N + 1, dtype=np.float64)
    if count_deletions:
        correct = correct - np.cumsum(np.asarray(result.dels_before, dtype=np.float64))
    return np.clip(correct / n, 0.0, 1.0)
