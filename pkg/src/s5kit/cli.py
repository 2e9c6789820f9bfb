"""Command-line front end: evaluate, synthesize, validate, score-one.

Exit codes follow one contract: structural problems (missing trees,
unreadable references, invalid configs or specs) exit nonzero; any
successfully computed score, however low, exits 0.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .audio import WavFormatError, wav_info
from .catalog import AssetCatalog, CatalogError
from .classes import DEFAULT_CLASSES, load_class_list
from .evaluate import (
    EvalRunConfig,
    EvaluationError,
    mixture_report_entry,
    evaluate_corpus,
    parse_estimate_name,
    score_mixture,
    write_report_csv,
    write_report_json,
)
from .metric import PenaltyConfig
from .scene import SceneSpec, SceneValidationError, validate_scene_spec
from .synth import SceneConstraintError, SplitConfig, generate_split

_STRUCTURAL_ERRORS = (
    EvaluationError,
    CatalogError,
    SceneValidationError,
    SceneConstraintError,
    WavFormatError,
    ValueError,
    OSError,
)


def _load_classes(path: str | None) -> tuple[str, ...]:
    return load_class_list(path) if path else DEFAULT_CLASSES


def _parse_proportion(value) -> float:
    if isinstance(value, str) and "/" in value:
        num, den = value.split("/", 1)
        return float(num) / float(den)
    return float(value)


def load_split_config(path: str | Path) -> tuple[SplitConfig, Path]:
    """Read a synthesize config file; returns the config and the catalog path."""
    path = Path(path)
    payload = json.loads(path.read_text(encoding="utf-8"))
    if "catalog" not in payload:
        raise ValueError(f"{path}: config needs a 'catalog' entry")
    if "n_mixtures" not in payload:
        raise ValueError(f"{path}: config needs an 'n_mixtures' entry")
    catalog_path = (path.parent / payload["catalog"]).resolve()
    kwargs = {"n_mixtures": int(payload["n_mixtures"])}
    if "proportions" in payload:
        kwargs["proportions"] = tuple(_parse_proportion(p) for p in payload["proportions"])
    for key in ("same_class_fraction", "duration_s"):
        if key in payload:
            kwargs[key] = float(payload[key])
    if "sample_rate" in payload:
        kwargs["sample_rate"] = int(payload["sample_rate"])
    if payload.get("noise_ref_rms") is not None:
        kwargs["noise_ref_rms"] = float(payload["noise_ref_rms"])
    if "name" in payload:
        kwargs["name"] = str(payload["name"])
    return SplitConfig(**kwargs), catalog_path


# ---------------------------------------------------------------------------
# validate helpers
# ---------------------------------------------------------------------------


def validate_scene_file(path: Path, class_list, catalog=None) -> list[str]:
    try:
        spec = SceneSpec.load(path)
    except SceneValidationError as exc:
        return [f"{path}: {v}" for v in exc.violations]
    return [f"{path}: {v}" for v in validate_scene_spec(spec, catalog, class_list)]


def _validate_estimate_file(path: Path, class_list) -> list[str]:
    violations = []
    try:
        label, _ = parse_estimate_name(path.name)
    except ValueError as exc:
        return [f"{path}: {exc}"]
    if label not in class_list:
        violations.append(f"{path}: unknown class label {label!r}")
    try:
        info = wav_info(path)
    except WavFormatError as exc:
        return violations + [f"{exc}"]
    if info.channels != 1:
        violations.append(f"{path}: estimates must be mono, has {info.channels} channels")
    return violations


def validate_submission_tree(root: Path, class_list) -> list[str]:
    violations = []
    mixture_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not mixture_dirs:
        violations.append(f"{root}: no mixture directories")
    for mixture_dir in mixture_dirs:
        for path in sorted(mixture_dir.glob("*.wav")):
            violations.extend(_validate_estimate_file(path, class_list))
    return violations


def validate_dataset_tree(root: Path, class_list, catalog=None) -> list[str]:
    violations = []
    scene_dirs = sorted(
        p for p in root.iterdir() if p.is_dir() and (p / "mixture.wav").is_file()
    )
    if not scene_dirs:
        violations.append(f"{root}: no scene directories with mixture.wav")
    for scene_dir in scene_dirs:
        expected_rate = None
        spec_path = scene_dir / "scene.json"
        if spec_path.is_file():
            violations.extend(validate_scene_file(spec_path, class_list, catalog))
            try:
                expected_rate = SceneSpec.load(spec_path).sample_rate
            except SceneValidationError:
                pass
        mixture_path = scene_dir / "mixture.wav"
        try:
            info = wav_info(mixture_path)
        except WavFormatError as exc:
            violations.append(str(exc))
        else:
            if info.channels != 4:
                violations.append(f"{mixture_path}: mixtures must be 4-channel FOA, has {info.channels}")
            if info.bits_per_sample != 16 or info.format_tag != 1:
                violations.append(f"{mixture_path}: mixtures must be 16-bit PCM")
            if expected_rate is not None and info.sample_rate != expected_rate:
                violations.append(
                    f"{mixture_path}: sample rate {info.sample_rate} differs from "
                    f"scene.json ({expected_rate})"
                )
        ref_dir = scene_dir / "ref"
        ref_paths = sorted(ref_dir.glob("*.wav")) if ref_dir.is_dir() else sorted(
            p for p in scene_dir.glob("*.wav") if p.name != "mixture.wav"
        )
        for path in ref_paths:
            violations.extend(_validate_estimate_file(path, class_list))
    return violations


def validate_target(target: Path, class_list, catalog=None) -> list[str]:
    """Dispatch validation by target shape: scene.json, dataset tree or submission."""
    if target.is_file():
        return validate_scene_file(target, class_list, catalog)
    if not target.is_dir():
        return [f"{target}: does not exist"]
    has_scenes = any(
        (p / "mixture.wav").is_file() or (p / "scene.json").is_file()
        for p in target.iterdir()
        if p.is_dir()
    )
    if has_scenes or (target / "manifest.json").is_file():
        return validate_dataset_tree(target, class_list, catalog)
    return validate_submission_tree(target, class_list)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_evaluate(args) -> int:
    config = EvalRunConfig(
        reference_dir=args.reference,
        submission_dir=args.submission,
        class_list=_load_classes(args.class_list),
        penalties=PenaltyConfig(fn_db=args.penalty_fn, fp_db=args.penalty_fp),
        jobs=args.jobs,
    )
    report = evaluate_corpus(config)
    output = Path(args.output)
    write_report_json(report, output)
    csv_path = output.with_suffix(".csv")
    write_report_csv(report, csv_path)

    print(
        f"scored {report['n_scored']} of {report['n_mixtures']} mixtures "
        f"({report['n_excluded_silence']} correct-silence excluded)"
    )
    if report["ranking_score"] is not None:
        print(f"ranking score (CAPI-SDRi): {report['ranking_score']:.4f} dB")
    else:
        print("ranking score (CAPI-SDRi): undefined (no scorable mixtures)")
    acc_src = "n/a" if report["acc_src"] is None else f"{report['acc_src']:.4f}"
    print(f"acc(mix): {report['acc_mix']:.4f}   acc(src): {acc_src}")
    if report["n_structural_warnings"]:
        print(f"structural warnings: {report['n_structural_warnings']}")
    print(f"report: {output} and {csv_path}")
    return 0


def cmd_synthesize(args) -> int:
    config, catalog_path = load_split_config(args.config)
    catalog = AssetCatalog.load(catalog_path)
    out_dir = Path(args.output)
    manifest = generate_split(config, catalog, args.seed, out_dir, jobs=args.jobs)

    counts = manifest["bucket_counts"]
    print(f"wrote {manifest['n_mixtures']} mixtures to {out_dir}")
    print(
        "bucket counts by target count: "
        + "  ".join(f"{k}->{counts[k]}" for k in sorted(counts))
    )
    same = manifest["same_class_counts"]
    print(f"same-class mixtures: 2-target {same['2']}, 3-target {same['3']}")

    violations = []
    for entry in manifest["scenes"]:
        violations.extend(
            validate_scene_file(out_dir / entry["path"], None, catalog)
        )
    print(
        f"constraint audit: {len(manifest['scenes'])} scenes checked, "
        f"{len(violations)} violations"
    )
    for violation in violations:
        print(f"  {violation}")
    return 1 if violations else 0


def cmd_validate(args) -> int:
    class_list = _load_classes(args.class_list)
    catalog = AssetCatalog.load(args.catalog) if args.catalog else None
    violations = validate_target(Path(args.target), class_list, catalog)
    for violation in violations:
        print(violation)
    print(f"{len(violations)} violation(s)")
    return 1 if violations else 0


def cmd_score_one(args) -> int:
    config = EvalRunConfig(
        reference_dir=args.reference,
        submission_dir=args.submission,
        class_list=_load_classes(args.class_list),
        penalties=PenaltyConfig(fn_db=args.penalty_fn, fp_db=args.penalty_fp),
    )
    result = score_mixture(args.mixture_id, config)
    print(json.dumps(mixture_report_entry(result), indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="s5kit",
        description="CAPI-SDRi scoring and FOA soundscape synthesis toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("evaluate", help="score a submission tree against references")
    p_eval.add_argument("--reference", required=True, help="reference corpus directory")
    p_eval.add_argument("--submission", required=True, help="submission directory")
    p_eval.add_argument("--output", required=True, help="JSON report path (CSV written alongside)")
    p_eval.add_argument("--class-list", help="class list file (default: built-in 18 classes)")
    p_eval.add_argument("--penalty-fn", type=float, default=0.0, help="dB penalty per false negative")
    p_eval.add_argument("--penalty-fp", type=float, default=0.0, help="dB penalty per false positive")
    p_eval.add_argument("--jobs", type=int, default=1, help="parallel scoring workers")
    p_eval.set_defaults(func=cmd_evaluate)

    p_synth = sub.add_parser("synthesize", help="generate a dataset split from a config")
    p_synth.add_argument("config", help="split config JSON (catalog, n_mixtures, ...)")
    p_synth.add_argument("--output", required=True, help="output dataset directory")
    p_synth.add_argument("--seed", type=int, default=0, help="master seed for the split")
    p_synth.add_argument("--jobs", type=int, default=1, help="parallel rendering workers")
    p_synth.set_defaults(func=cmd_synthesize)

    p_val = sub.add_parser("validate", help="check a submission, dataset or scene.json")
    p_val.add_argument("target", help="submission dir, dataset dir or scene.json")
    p_val.add_argument("--class-list", help="class list file")
    p_val.add_argument("--catalog", help="asset catalog manifest for asset-level checks")
    p_val.set_defaults(func=cmd_validate)

    p_one = sub.add_parser("score-one", help="score a single mixture, print JSON")
    p_one.add_argument("mixture_id", help="mixture directory name")
    p_one.add_argument("--reference", required=True)
    p_one.add_argument("--submission", required=True)
    p_one.add_argument("--class-list", help="class list file")
    p_one.add_argument("--penalty-fn", type=float, default=0.0)
    p_one.add_argument("--penalty-fp", type=float, default=0.0)
    p_one.set_defaults(func=cmd_score_one)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _STRUCTURAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
