"""Class-aware permutation-invariant SDRi (CAPI-SDRi) scoring.

Sources are grouped by class label; within each label, estimates are matched
to references by a permutation-invariant objective (maximum total SDRi over
all pairings), count mismatches become FN/FP penalties, and the mixture score
is the penalty-and-SDRi sum divided by the total number of true and false
predictions. A mixture with no reference and no estimated sources (correct
silence) has no score and is excluded from corpus averaging.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .audio import sdr, sdri

# Factorial enumeration guard for the brute-force oracle.
BRUTE_FORCE_LIMIT = 6

# Assignments whose totals differ by less than this are tied; ties resolve to
# the lexicographically smallest (estimate, reference) pair list.
TIE_TOLERANCE_DB = 1e-12


@dataclass(frozen=True)
class MatchCounts:
    """Per-label TP/FN/FP tallies. At most one of n_fn, n_fp is nonzero."""

    n_tp: int
    n_fn: int
    n_fp: int

    @property
    def total(self) -> int:
        return self.n_tp + self.n_fn + self.n_fp


@dataclass(frozen=True)
class PenaltyConfig:
    """dB-equivalent penalties added per false negative / false positive."""

    fn_db: float = 0.0
    fp_db: float = 0.0


@dataclass(frozen=True)
class LabeledSource:
    """A class label paired with a mono waveform of mixture length."""

    label: str
    waveform: np.ndarray

    def __post_init__(self):
        wave = np.asarray(self.waveform, dtype=np.float64)
        if wave.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {wave.shape}")
        object.__setattr__(self, "waveform", wave)


@dataclass
class MixtureScore:
    """Score of one mixture. ``value`` is None for excluded correct silence."""

    value: float | None
    counts_per_label: dict[str, MatchCounts] = field(default_factory=dict)
    matched_pairs: list[tuple[int, int, float]] = field(default_factory=list)

    @property
    def excluded(self) -> bool:
        return self.value is None

    @property
    def total_counts(self) -> MatchCounts:
        return MatchCounts(
            n_tp=sum(c.n_tp for c in self.counts_per_label.values()),
            n_fn=sum(c.n_fn for c in self.counts_per_label.values()),
            n_fp=sum(c.n_fp for c in self.counts_per_label.values()),
        )


def group_by_label(sources, class_list=None) -> dict[str, list]:
    """Group source waveforms by label, preserving order within each group.

    When ``class_list`` is given, labels outside it are rejected.
    """
    groups: dict[str, list] = {}
    allowed = set(class_list) if class_list is not None else None
    for source in sources:
        if allowed is not None and source.label not in allowed:
            raise ValueError(f"label {source.label!r} is not in the active class list")
        groups.setdefault(source.label, []).append(source.waveform)
    return groups


def count_matches(n_ref: int, n_est: int) -> MatchCounts:
    """TP/FN/FP counts for one label from the reference and estimate counts."""
    return MatchCounts(
        n_tp=min(n_ref, n_est),
        n_fn=max(n_ref - n_est, 0),
        n_fp=max(n_est - n_ref, 0),
    )


def _sdri_matrix(estimates, references, mixture_ref) -> np.ndarray:
    """SDRi of every (estimate, reference) pair; shape (n_est, n_ref)."""
    mixture_sdr = [sdr(mixture_ref, ref) for ref in references]
    matrix = np.empty((len(estimates), len(references)))
    for j, ref in enumerate(references):
        for i, est in enumerate(estimates):
            matrix[i, j] = sdr(est, ref) - mixture_sdr[j]
    return matrix


def _optimal_total(matrix: np.ndarray) -> float:
    if matrix.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(matrix, maximize=True)
    return float(matrix[rows, cols].sum())


def _assign_pairs(matrix: np.ndarray) -> list[tuple[int, int]]:
    """Maximum-total pairing of min(n_est, n_ref) cardinality.

    Ties (totals within TIE_TOLERANCE_DB) resolve to the lexicographically
    smallest pair list so reports are deterministic across platforms.
    """
    n_est, n_ref = matrix.shape
    n_tp = min(n_est, n_ref)
    if n_tp == 0:
        return []

    target = _optimal_total(matrix)
    est_left = list(range(n_est))
    ref_left = list(range(n_ref))
    pairs: list[tuple[int, int]] = []
    committed = 0.0
    for _ in range(n_tp):
        chosen = None
        for i in est_left:
            for j in ref_left:
                rest = matrix[np.ix_(
                    [e for e in est_left if e != i],
                    [r for r in ref_left if r != j],
                )]
                achievable = committed + matrix[i, j] + _optimal_total(rest)
                if achievable >= target - TIE_TOLERANCE_DB:
                    chosen = (i, j)
                    break
            if chosen is not None:
                break
        assert chosen is not None, "optimal assignment must remain reachable"
        pairs.append(chosen)
        committed += float(matrix[chosen])
        est_left.remove(chosen[0])
        ref_left.remove(chosen[1])
    return sorted(pairs)


def best_matching(estimates, references, mixture_ref) -> tuple[list[tuple[int, int]], float]:
    """Optimal estimate-to-reference pairing within one label group.

    Returns the chosen (estimate index, reference index) pairs, sorted by
    estimate index, and the total SDRi over those pairs in dB.
    """
    matrix = _sdri_matrix(estimates, references, mixture_ref)
    pairs = _assign_pairs(matrix)
    total = float(sum(matrix[i, j] for i, j in pairs))
    return pairs, total


def _label_component_detail(estimates, references, mixture_ref, penalties):
    counts = count_matches(len(references), len(estimates))
    if counts.n_tp:
        matrix = _sdri_matrix(estimates, references, mixture_ref)
        pairs = _assign_pairs(matrix)
        pair_values = [(i, j, float(matrix[i, j])) for i, j in pairs]
        matched_total = float(sum(v for _, _, v in pair_values))
    else:
        pair_values = []
        matched_total = 0.0
    p_value = counts.n_fn * penalties.fn_db + counts.n_fp * penalties.fp_db + matched_total
    return p_value, counts, pair_values


def label_component(
    estimates, references, mixture_ref, penalties: PenaltyConfig = PenaltyConfig()
) -> tuple[float, MatchCounts]:
    """Penalty-plus-matched-SDRi sum for one label group, with its counts."""
    if not len(estimates) and not len(references):
        raise ValueError("label_component requires at least one estimate or reference")
    p_value, counts, _ = _label_component_detail(estimates, references, mixture_ref, penalties)
    return p_value, counts


def _group_indices(sources) -> dict[str, list[int]]:
    groups: dict[str, list[int]] = {}
    for index, source in enumerate(sources):
        groups.setdefault(source.label, []).append(index)
    return groups


def capi_sdri_mixture(
    estimates,
    references,
    mixture_ref,
    penalties: PenaltyConfig = PenaltyConfig(),
) -> MixtureScore:
    """Score one mixture from labeled estimates against labeled references.

    ``mixture_ref`` is the mixture waveform at the reference channel. Every
    source waveform must match its length exactly; mismatches are hard errors
    (silent truncation would hide submission bugs). Returns an excluded score
    (value None) when both collections are empty.
    """
    mixture_ref = np.asarray(mixture_ref, dtype=np.float64)
    for name, collection in (("estimate", estimates), ("reference", references)):
        for source in collection:
            if source.waveform.shape != mixture_ref.shape:
                raise ValueError(
                    f"{name} {source.label!r} has {source.waveform.shape[0]} samples, "
                    f"mixture has {mixture_ref.shape[0]}"
                )

    est_groups = _group_indices(estimates)
    ref_groups = _group_indices(references)
    labels = sorted(set(est_groups) | set(ref_groups))
    if not labels:
        return MixtureScore(value=None)

    numerator = 0.0
    denominator = 0
    counts_per_label: dict[str, MatchCounts] = {}
    matched_pairs: list[tuple[int, int, float]] = []
    for label in labels:
        est_idx = est_groups.get(label, [])
        ref_idx = ref_groups.get(label, [])
        p_value, counts, pair_values = _label_component_detail(
            [estimates[i].waveform for i in est_idx],
            [references[j].waveform for j in ref_idx],
            mixture_ref,
            penalties,
        )
        numerator += p_value
        denominator += counts.total
        counts_per_label[label] = counts
        matched_pairs.extend(
            (est_idx[i], ref_idx[j], value) for i, j, value in pair_values
        )

    return MixtureScore(
        value=numerator / denominator,
        counts_per_label=counts_per_label,
        matched_pairs=sorted(matched_pairs),
    )


def corpus_score(scores) -> float:
    """Unweighted mean CAPI-SDRi over mixtures that have a value."""
    values = [score.value for score in scores if score.value is not None]
    if not values:
        raise ValueError("no scorable mixtures: every mixture is correct silence")
    return float(sum(values) / len(values))


def brute_force_component(
    estimates, references, mixture_ref, penalties: PenaltyConfig = PenaltyConfig()
) -> float:
    """Literal enumeration of all pairings for one label group (test oracle).

    Enumerates every ordered selection of TP estimates against every
    combination of TP references; exponential, so collection sizes are capped
    at BRUTE_FORCE_LIMIT.
    """
    n_est, n_ref = len(estimates), len(references)
    if n_est > BRUTE_FORCE_LIMIT or n_ref > BRUTE_FORCE_LIMIT:
        raise ValueError(
            f"collection too large for enumeration: {n_est}x{n_ref} exceeds "
            f"{BRUTE_FORCE_LIMIT}"
        )
    if n_est == 0 and n_ref == 0:
        raise ValueError("brute_force_component requires at least one estimate or reference")

    counts = count_matches(n_ref, n_est)
    best = 0.0
    if counts.n_tp:
        matrix = _sdri_matrix(estimates, references, mixture_ref)
        best = max(
            sum(matrix[i, j] for i, j in zip(est_sel, ref_sel))
            for ref_sel in itertools.combinations(range(n_ref), counts.n_tp)
            for est_sel in itertools.permutations(range(n_est), counts.n_tp)
        )
    return counts.n_fn * penalties.fn_db + counts.n_fp * penalties.fp_db + best


def accuracy_metrics(per_mixture) -> tuple[float, float]:
    """Mixture-level and source-level label accuracy over a corpus.

    ``per_mixture`` holds (estimated labels, reference labels) pairs, each an
    iterable treated as a multiset. Acc(mix) is the fraction of mixtures whose
    label multisets match exactly; Acc(src) is the total multiset-intersection
    size over the total reference source count. FP estimates do not lower
    Acc(src); they are penalized by the SDRi metric instead.
    """
    per_mixture = list(per_mixture)
    if not per_mixture:
        raise ValueError("accuracy_metrics requires at least one mixture")
    n_exact = 0
    n_hit = 0
    n_ref_total = 0
    for est_labels, ref_labels in per_mixture:
        est_counts = Counter(est_labels)
        ref_counts = Counter(ref_labels)
        if est_counts == ref_counts:
            n_exact += 1
        n_hit += sum((est_counts & ref_counts).values())
        n_ref_total += sum(ref_counts.values())
    if n_ref_total == 0:
        raise ValueError("acc_src is undefined: no reference sources in the corpus")
    return n_exact / len(per_mixture), n_hit / n_ref_total
