"""Object-centric classification with applied masks, and its evaluation kit."""

__version__ = "0.1.0"

from .core import (
    BinaryMask,
    ClassProbabilities,
    Embedding,
    ImageTensor,
    LabeledSample,
    MaskSet,
    MaskSource,
    entropy,
    full_mask,
    iou,
    softmax,
)
from .maskops import (
    AlphaChannel,
    AppliedImage,
    ApplicationMode,
    FilterConfig,
    GrayBgCrop,
    apply_alpha,
    apply_gray_bg_crop,
    apply_mask,
    connected_components,
    filter_masks,
)
from .fgscore import (
    FgDetectionDataset,
    ScoredMask,
    ScoringStrategy,
    build_fg_dataset,
    roc_auc,
    score_mask,
    select_foreground,
)
from .metrics import (
    EvalRecord,
    GroupedResults,
    InstanceSegmentation,
    accuracy,
    common_counter_gap,
    fg_ari,
    mbo,
    worst_group_accuracy,
)
from .backend import (
    ClassifierHead,
    Dataset,
    EnsembleSpec,
    ToyEncoder,
    classify,
    fit_centroid_head,
    group_predict,
    load_dataset_manifest,
    toy_encoder,
    write_dataset,
)
from .pipeline import Fallback, OccamConfig, OccamOutput, occam_classify, run_benchmark
from .synthgen import SynthSpec, counter_split, generate

__all__ = [name for name in dir() if not name.startswith("_")]
