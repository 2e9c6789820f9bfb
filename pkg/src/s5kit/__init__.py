"""Scoring and scene-synthesis toolkit for spatial sound-event separation.

Two halves:

* class-aware permutation-invariant SDRi (CAPI-SDRi) scoring of labeled
  separated sources against references, plus corpus aggregation, and
* a deterministic first-order-ambisonics soundscape synthesizer whose scenes
  are fully parameterized as JSON and re-renderable bit-exactly.
"""

from .audio import (
    FOA_CHANNEL_ORDER,
    FOA_CHANNELS,
    SDR_CLAMP_DB,
    ClippingWarning,
    MultichannelAudio,
    WavFormatError,
    convolve,
    load_wav,
    rms_level,
    save_wav,
    sdr,
    sdri,
    wav_info,
)
from .catalog import AssetCatalog, CatalogError, NoiseEntry, RirEntry, SourceEntry
from .classes import DEFAULT_CLASSES, load_class_list
from .evaluate import (
    EvalRunConfig,
    EvaluationError,
    evaluate_corpus,
    score_mixture,
    write_report_csv,
    write_report_json,
)
from .metric import (
    LabeledSource,
    MatchCounts,
    MixtureScore,
    PenaltyConfig,
    accuracy_metrics,
    best_matching,
    brute_force_component,
    capi_sdri_mixture,
    corpus_score,
    count_matches,
    group_by_label,
    label_component,
)
from .scene import (
    EventSpec,
    NoiseSpec,
    SceneSpec,
    SceneValidationError,
    angular_separation,
    check_overlap,
    validate_scene_spec,
)
from .synth import (
    RenderedScene,
    SceneBucket,
    SceneConstraintError,
    SplitConfig,
    generate_split,
    reconstruct_from_json,
    render_scene,
    sample_scene,
    scale_to_snr,
)

__version__ = "0.1.0"

__all__ = [
    "FOA_CHANNELS",
    "FOA_CHANNEL_ORDER",
    "SDR_CLAMP_DB",
    "ClippingWarning",
    "MultichannelAudio",
    "WavFormatError",
    "convolve",
    "load_wav",
    "rms_level",
    "save_wav",
    "sdr",
    "sdri",
    "wav_info",
    "DEFAULT_CLASSES",
    "load_class_list",
    "AssetCatalog",
    "CatalogError",
    "SourceEntry",
    "RirEntry",
    "NoiseEntry",
    "EvalRunConfig",
    "EvaluationError",
    "evaluate_corpus",
    "score_mixture",
    "write_report_json",
    "write_report_csv",
    "EventSpec",
    "NoiseSpec",
    "SceneSpec",
    "SceneValidationError",
    "angular_separation",
    "check_overlap",
    "validate_scene_spec",
    "RenderedScene",
    "SceneBucket",
    "SceneConstraintError",
    "SplitConfig",
    "generate_split",
    "reconstruct_from_json",
    "render_scene",
    "sample_scene",
    "scale_to_snr",
    "LabeledSource",
    "MatchCounts",
    "MixtureScore",
    "PenaltyConfig",
    "accuracy_metrics",
    "best_matching",
    "brute_force_component",
    "capi_sdri_mixture",
    "corpus_score",
    "count_matches",
    "group_by_label",
    "label_component",
    "__version__",
]
