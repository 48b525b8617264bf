"""CA/FA curves, ten-bin confidence-vs-accuracy reliability and WER reporting."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .alignment import align
from .corpus import ScoredUtterance, Utterance
from .errors import DataError

N_BINS = 10


@dataclass(frozen=True)
class CaFaPoint:
    threshold: float
    ca: float
    fa: float


@dataclass(frozen=True)
class ReliabilityBin:
    lower: float
    upper: float
    mean_confidence: float | None
    mean_accuracy: float | None
    count: int


@dataclass(frozen=True)
class WerReport:
    wer: float
    baseline_wer: float
    werr_vs_baseline: float
    n_errors: int
    n_ref_words: int


def default_thresholds() -> np.ndarray:
    return np.round(np.arange(101) * 0.01, 2)


def ca_fa_curve(scores, correct, thresholds=None) -> list[CaFaPoint]:
    """Correct-accept and false-accept rates at each threshold.

    A word is accepted when ``score >= threshold``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    correct = np.asarray(correct, dtype=bool)
    n_corr = int(correct.sum())
    n_inc = int((~correct).sum())
    if n_corr == 0 or n_inc == 0:
        raise DataError("CA/FA needs at least one correct and one incorrect word")
    if thresholds is None:
        thresholds = default_thresholds()
    s_corr = np.sort(scores[correct])
    s_inc = np.sort(scores[~correct])
    out = []
    for t in np.asarray(thresholds, dtype=np.float64):
        ca = (n_corr - np.searchsorted(s_corr, t, side="left")) / n_corr
        fa = (n_inc - np.searchsorted(s_inc, t, side="left")) / n_inc
        out.append(CaFaPoint(float(t), float(ca), float(fa)))
    return out


def bin_index(confidence: float) -> int:
    k = min(max(int(math.floor(confidence * N_BINS)), 0), N_BINS - 1)
    # confidence * 10 can round across a bin edge; settle against the printed edges
    if k > 0 and confidence < k / N_BINS:
        k -= 1
    elif k < N_BINS - 1 and confidence >= (k + 1) / N_BINS:
        k += 1
    return k


def pearson(x, y) -> float | None:
    """Pearson correlation, or ``None`` when undefined."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        return None
    dx, dy = x - x.mean(), y - y.mean()
    den = math.sqrt(float(np.sum(dx * dx)) * float(np.sum(dy * dy)))
    if den == 0.0:
        return None
    return float(np.sum(dx * dy) / den)


def reliability_bins(pool: Sequence[ScoredUtterance]) -> tuple[list[ReliabilityBin], float | None]:
    """Bin utterances by confidence into ``[0, .1), ..., [.9, 1]``.

    Returns the bins and the unweighted Pearson correlation between
    per-bin mean confidence and mean accuracy over the non-empty bins
    (``None`` if fewer than two bins are populated).
    """
    conf = [[] for _ in range(N_BINS)]
    acc = [[] for _ in range(N_BINS)]
    for s in pool:
        if s.accuracy is None:
            raise DataError(f"{s.id}: reliability needs a known accuracy")
        k = bin_index(s.confidence)
        conf[k].append(s.confidence)
        acc[k].append(s.accuracy)
    bins = []
    for k in range(N_BINS):
        n = len(conf[k])
        bins.append(
            ReliabilityBin(
                lower=k / N_BINS,
                upper=(k + 1) / N_BINS,
                mean_confidence=float(np.mean(conf[k])) if n else None,
                mean_accuracy=float(np.mean(acc[k])) if n else None,
                count=n,
            )
        )
    full = [b for b in bins if b.count]
    r = pearson([b.mean_confidence for b in full], [b.mean_accuracy for b in full])
    return bins, r


def corpus_errors(utterances: Iterable[Utterance]) -> tuple[int, int]:
    """Total edit errors and total reference words, pooled over a corpus."""
    errors = words = 0
    for u in utterances:
        res = align(u.reference, u.hyp_tokens)
        errors += res.n_errors
        words += len(u.reference)
    return errors, words


def corpus_wer(utterances: Iterable[Utterance]) -> float:
    errors, words = corpus_errors(utterances)
    if words == 0:
        raise DataError("corpus WER needs at least one reference word")
    return errors / words


def werr(baseline_wer: float, wer: float) -> float:
    """Relative WER reduction in percent."""
    if baseline_wer <= 0:
        return 0.0 if wer == baseline_wer else -math.inf
    return 100.0 * (baseline_wer - wer) / baseline_wer


def wer_report(baseline: Sequence[Utterance], adapted: Sequence[Utterance]) -> WerReport:
    """Pooled WER of ``adapted`` and its WERR over ``baseline``.

    Both corpora must contain the same ids with identical references.
    """
    base_by_id = {u.id: u for u in baseline}
    adapt_by_id = {u.id: u for u in adapted}
    if base_by_id.keys() != adapt_by_id.keys():
        raise DataError("baseline and adapted corpora cover different utterance ids")
    for k, u in base_by_id.items():
        if u.reference != adapt_by_id[k].reference:
            raise DataError(f"{k}: references differ between baseline and adapted")
    b_err, words = corpus_errors(baseline)
    a_err, _ = corpus_errors(adapted)
    if words == 0:
        raise DataError("corpus WER needs at least one reference word")
    b_wer, a_wer = b_err / words, a_err / words
    return WerReport(wer=a_wer, baseline_wer=b_wer, werr_vs_baseline=werr(b_wer, a_wer), n_errors=a_err, n_ref_words=words)


def format_bins_table(bins: Sequence[ReliabilityBin], r: float | None) -> str:
    lines = [f"{'bin':>11} {'count':>7} {'mean_conf':>10} {'mean_acc':>9}"]
    for b in bins:
        mc = "-" if b.mean_confidence is None else f"{b.mean_confidence:.4f}"
        ma = "-" if b.mean_accuracy is None else f"{b.mean_accuracy:.4f}"
        lines.append(f"[{b.lower:.1f},{b.upper:.1f}{']' if b.upper >= 1 else ')'} {b.count:>7} {mc:>10} {ma:>9}")
    lines.append(f"pearson: {'undefined' if r is None else f'{r:.4f}'}")
    return "\n".join(lines)


def write_bins_csv(bins: Sequence[ReliabilityBin], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(asdict(bins[0])))
        w.writeheader()
        for b in bins:
            w.writerow(asdict(b))


def write_curve_csv(points: Sequence[CaFaPoint], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "ca", "fa"])
        for p in points:
            w.writerow([p.threshold, p.ca, p.fa])
