"""Corpus evaluation: submission discovery, per-mixture scoring, reports.

Layouts
-------
Reference tree: one directory per mixture containing ``mixture.wav`` (FOA,
channel 0 is the reference channel) and the reference stems, either next to
the mixture or in a ``ref/`` subdirectory (the synthesizer's dataset layout).
Submission tree: one directory per mixture with mono estimates named
``<ClassLabel>_<ordinal>.wav``.

A malformed per-mixture submission (missing directory, unreadable WAV,
unknown label, wrong length) never aborts the corpus run: the mixture is
scored as if the system produced nothing usable (all-FN) and flagged with a
structural warning in the report. Reference-side problems are hard errors.
"""

from __future__ import annotations

import csv
import json
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .audio import MultichannelAudio, load_wav
from .classes import DEFAULT_CLASSES
from .metric import (
    LabeledSource,
    MixtureScore,
    PenaltyConfig,
    accuracy_metrics,
    capi_sdri_mixture,
)

REPORT_SCHEMA_VERSION = 1

_ESTIMATE_NAME_RE = re.compile(r"^(?P<label>.+)_(?P<ordinal>\d+)\.wav$")


class EvaluationError(RuntimeError):
    """Structural problem that prevents scoring the corpus at all."""


@dataclass(frozen=True)
class EvalRunConfig:
    """Everything one corpus evaluation run needs."""

    reference_dir: Path
    submission_dir: Path
    class_list: tuple[str, ...] = DEFAULT_CLASSES
    penalties: PenaltyConfig = PenaltyConfig()
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "reference_dir", Path(self.reference_dir))
        object.__setattr__(self, "submission_dir", Path(self.submission_dir))
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")


@dataclass
class MixtureResult:
    """Everything the report needs about one scored mixture."""

    mixture_id: str
    score: MixtureScore
    ref_labels: list[str] = field(default_factory=list)
    est_labels: list[str] = field(default_factory=list)
    ref_names: list[str] = field(default_factory=list)
    est_names: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    structural_warning: bool = False


def parse_estimate_name(name: str) -> tuple[str, int]:
    """Split ``<ClassLabel>_<ordinal>.wav`` into its parts."""
    match = _ESTIMATE_NAME_RE.match(name)
    if not match:
        raise ValueError(f"{name!r} does not match <ClassLabel>_<ordinal>.wav")
    return match.group("label"), int(match.group("ordinal"))


def list_mixture_ids(reference_dir: str | Path) -> list[str]:
    """Mixture ids: subdirectories of the reference tree holding mixture.wav."""
    reference_dir = Path(reference_dir)
    if not reference_dir.is_dir():
        raise EvaluationError(f"reference directory {reference_dir} does not exist")
    ids = sorted(
        child.name
        for child in reference_dir.iterdir()
        if child.is_dir() and (child / "mixture.wav").is_file()
    )
    if not ids:
        raise EvaluationError(f"{reference_dir} contains no mixture directories")
    return ids


def _reference_stem_paths(mixture_dir: Path) -> list[Path]:
    ref_dir = mixture_dir / "ref"
    if ref_dir.is_dir():
        return sorted(ref_dir.glob("*.wav"))
    return sorted(p for p in mixture_dir.glob("*.wav") if p.name != "mixture.wav")


def load_reference(mixture_dir: Path, class_list) -> tuple[MultichannelAudio, list[LabeledSource], list[str]]:
    """Load mixture.wav and the reference stems; problems are hard errors."""
    mixture = load_wav(mixture_dir / "mixture.wav")
    references = []
    names = []
    for path in _reference_stem_paths(mixture_dir):
        try:
            label, _ = parse_estimate_name(path.name)
        except ValueError as exc:
            raise EvaluationError(f"reference stem {path}: {exc}") from exc
        if label not in class_list:
            raise EvaluationError(f"reference stem {path}: unknown class label {label!r}")
        audio = load_wav(path)
        if audio.channels != 1:
            raise EvaluationError(f"reference stem {path} must be mono, has {audio.channels} channels")
        if audio.sample_rate != mixture.sample_rate:
            raise EvaluationError(
                f"reference stem {path}: sample rate {audio.sample_rate} differs "
                f"from mixture {mixture.sample_rate}"
            )
        if audio.num_samples != mixture.num_samples:
            raise EvaluationError(
                f"reference stem {path}: {audio.num_samples} samples, mixture has "
                f"{mixture.num_samples}"
            )
        references.append(LabeledSource(label, audio.data[0]))
        names.append(path.name)
    return mixture, references, names


def load_submission(
    mixture_dir: Path, mixture: MultichannelAudio, class_list
) -> tuple[list[LabeledSource], list[str], list[str], bool]:
    """Load one mixture's estimates; malformed entries degrade to all-FN.

    Returns (estimates, file names, warnings, structural_warning).
    """
    if not mixture_dir.is_dir():
        return [], [], [f"missing submission directory {mixture_dir.name}"], True

    estimates = []
    names = []
    warnings = []
    for path in sorted(mixture_dir.glob("*.wav")):
        try:
            label, _ = parse_estimate_name(path.name)
            if label not in class_list:
                raise ValueError(f"unknown class label {label!r}")
            audio = load_wav(path)
            if audio.channels != 1:
                raise ValueError(f"estimate must be mono, has {audio.channels} channels")
            if audio.sample_rate != mixture.sample_rate:
                raise ValueError(
                    f"sample rate {audio.sample_rate} differs from mixture "
                    f"{mixture.sample_rate}"
                )
            if audio.num_samples != mixture.num_samples:
                raise ValueError(
                    f"{audio.num_samples} samples, mixture has {mixture.num_samples}"
                )
        except ValueError as exc:
            warnings.append(f"{path.name}: {exc}")
            continue
        estimates.append(LabeledSource(label, audio.data[0]))
        names.append(path.name)

    if warnings:
        # one bad entry invalidates the mixture's estimates: score as all-FN
        return [], [], warnings, True
    return estimates, names, warnings, False


def score_mixture(mixture_id: str, config: EvalRunConfig) -> MixtureResult:
    """Score one mixture; same value a full corpus run would assign it."""
    ref_dir = config.reference_dir / mixture_id
    if not (ref_dir / "mixture.wav").is_file():
        raise EvaluationError(f"mixture {mixture_id!r} not found under {config.reference_dir}")
    mixture, references, ref_names = load_reference(ref_dir, config.class_list)
    estimates, est_names, warnings, structural = load_submission(
        config.submission_dir / mixture_id, mixture, config.class_list
    )
    score = capi_sdri_mixture(estimates, references, mixture.data[0], config.penalties)
    return MixtureResult(
        mixture_id=mixture_id,
        score=score,
        ref_labels=[s.label for s in references],
        est_labels=[s.label for s in estimates],
        ref_names=ref_names,
        est_names=est_names,
        warnings=warnings,
        structural_warning=structural,
    )


def mixture_report_entry(result: MixtureResult) -> dict:
    score = result.score
    return {
        "id": result.mixture_id,
        "excluded": score.excluded,
        "capi_sdri": score.value,
        "structural_warning": result.structural_warning,
        "warnings": result.warnings,
        "ref_labels": dict(sorted(Counter(result.ref_labels).items())),
        "est_labels": dict(sorted(Counter(result.est_labels).items())),
        "counts": {
            label: {"tp": c.n_tp, "fn": c.n_fn, "fp": c.n_fp}
            for label, c in sorted(score.counts_per_label.items())
        },
        "matched_pairs": [
            {
                "label": result.ref_labels[ref_idx],
                "estimate": result.est_names[est_idx],
                "reference": result.ref_names[ref_idx],
                "sdri": value,
            }
            for est_idx, ref_idx, value in score.matched_pairs
        ],
    }


def build_report(results: list[MixtureResult], config: EvalRunConfig) -> dict:
    """Aggregate per-mixture results into the authoritative JSON report.

    The headline numbers are recomputable from the per_mixture section: the
    ranking score is the plain mean of the included capi_sdri values in list
    order, and the accuracies recompute from the label multisets.
    """
    results = sorted(results, key=lambda r: r.mixture_id)
    per_mixture = [mixture_report_entry(r) for r in results]

    included = [e["capi_sdri"] for e in per_mixture if not e["excluded"]]
    ranking_score = sum(included) / len(included) if included else None

    n_ref_sources = sum(len(r.ref_labels) for r in results)
    if n_ref_sources:
        acc_mix, acc_src = accuracy_metrics(
            [(r.est_labels, r.ref_labels) for r in results]
        )
    else:
        acc_mix = sum(
            1 for r in results if Counter(r.est_labels) == Counter(r.ref_labels)
        ) / len(results)
        acc_src = None

    per_class = {}
    for label in config.class_list:
        tp = fn = fp = 0
        sdri_values = []
        for result in results:
            counts = result.score.counts_per_label.get(label)
            if counts is not None:
                tp += counts.n_tp
                fn += counts.n_fn
                fp += counts.n_fp
            for est_idx, ref_idx, value in result.score.matched_pairs:
                if result.ref_labels[ref_idx] == label:
                    sdri_values.append(value)
        per_class[label] = {
            "mean_sdri_tp": sum(sdri_values) / len(sdri_values) if sdri_values else None,
            "tp": tp,
            "fn": fn,
            "fp": fp,
        }

    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "reference_dir": str(config.reference_dir),
        "submission_dir": str(config.submission_dir),
        "penalties": {"fn_db": config.penalties.fn_db, "fp_db": config.penalties.fp_db},
        "n_mixtures": len(results),
        "n_scored": len(included),
        "n_excluded_silence": len(results) - len(included),
        "n_structural_warnings": sum(1 for r in results if r.structural_warning),
        "ranking_score": ranking_score,
        "acc_mix": acc_mix,
        "acc_src": acc_src,
        "per_class": per_class,
        "per_mixture": per_mixture,
    }


def evaluate_corpus(config: EvalRunConfig) -> dict:
    """Score every mixture under the reference tree and build the report.

    Mixtures are scored independently (in parallel when jobs > 1) and
    aggregated in sorted-id order, so the report is byte-identical across
    worker counts.
    """
    mixture_ids = list_mixture_ids(config.reference_dir)
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(lambda mid: score_mixture(mid, config), mixture_ids))
    else:
        results = [score_mixture(mid, config) for mid in mixture_ids]
    return build_report(results, config)


def write_report_json(report: dict, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def write_report_csv(report: dict, path: str | Path) -> None:
    """Flat per-mixture projection of the JSON report, for spreadsheets."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            [
                "mixture_id",
                "excluded",
                "capi_sdri",
                "n_tp",
                "n_fn",
                "n_fp",
                "labels_exact",
                "structural_warning",
                "n_warnings",
            ]
        )
        for entry in report["per_mixture"]:
            tp = sum(c["tp"] for c in entry["counts"].values())
            fn = sum(c["fn"] for c in entry["counts"].values())
            fp = sum(c["fp"] for c in entry["counts"].values())
            writer.writerow(
                [
                    entry["id"],
                    int(entry["excluded"]),
                    "" if entry["capi_sdri"] is None else repr(entry["capi_sdri"]),
                    tp,
                    fn,
                    fp,
                    int(entry["est_labels"] == entry["ref_labels"]),
                    int(entry["structural_warning"]),
                    len(entry["warnings"]),
                ]
            )
