"""Backends: mask generators, image encoders, classifier heads, and the
file-backed interchange formats that carry real-model exports.

The toy encoder is a deterministic 12-dim color/shape feature extractor that
stands in for a real encoder at desk scale.  File-backed backends read the
interchange formats (JSON manifest, per-mask PNG files, "OCE1" embedding
files) and return bit-identical results across runs.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Protocol, Sequence, Union

import numpy as np
from PIL import Image
from scipy import ndimage

from .core import (
    BinaryMask,
    ClassProbabilities,
    Embedding,
    ImageTensor,
    LabeledSample,
    MaskSet,
    MaskSource,
    softmax,
)
from .maskops import AppliedImage
from .metrics import InstanceSegmentation

__all__ = [
    "MaskGenerator",
    "ImageEncoder",
    "ClassifierHead",
    "EnsembleSpec",
    "classify",
    "group_predict",
    "fit_centroid_head",
    "ToyEncoder",
    "toy_encoder",
    "TOY_DIM",
    "FileBackedEncoder",
    "PrecomputedMaskGenerator",
    "NoisyMaskGenerator",
    "EmptyMaskGenerator",
    "Dataset",
    "SampleError",
    "DATA_ROOT_ENV",
    "OCE_MAGIC",
    "write_embeddings",
    "read_embeddings",
    "write_image_png",
    "read_image_png",
    "write_mask_png",
    "read_mask_png",
    "write_instance_png",
    "read_instance_png",
    "masks_from_instances",
    "load_dataset_manifest",
    "write_dataset",
]

DATA_ROOT_ENV = "OCCAM_DATA_ROOT"


class MaskGenerator(Protocol):
    """Produces candidate object masks for an image."""

    name: str
    source: MaskSource

    def generate(self, image: ImageTensor, sample_id: Optional[str] = None) -> MaskSet: ...


class ImageEncoder(Protocol):
    """Maps an applied image to a fixed-dimensional embedding."""

    name: str
    dim: int
    accepts_alpha: bool

    def encode(self, applied: AppliedImage, sample_id: Optional[str] = None) -> Embedding: ...


@dataclass(frozen=True)
class ClassifierHead:
    """Zero-shot style head: cosine similarity against per-class embeddings.

    Logits are ``temperature * cosine(embedding, class_embedding)``; an
    optional fine-grained-class -> group map supports group-level prediction.
    """

    class_embeddings: np.ndarray  # (num_classes, dim)
    temperature: float = 100.0
    group_map: Optional[dict[int, int]] = None
    class_names: Optional[tuple[str, ...]] = None

    def __post_init__(self) -> None:
        emb = np.asarray(self.class_embeddings, dtype=np.float64)
        if emb.ndim != 2 or emb.shape[0] < 2:
            raise ValueError(f"need a (num_classes >= 2, dim) matrix, got shape {emb.shape}")
        norms = np.linalg.norm(emb, axis=1)
        if not np.all(np.isfinite(emb)) or np.any(norms == 0.0):
            raise ValueError("class embeddings must be finite with nonzero rows")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be > 0")
        emb.setflags(write=False)
        object.__setattr__(self, "class_embeddings", emb)
        if self.class_names is not None:
            names = tuple(self.class_names)
            if len(names) != emb.shape[0]:
                raise ValueError("class_names length must match the embedding matrix")
            object.__setattr__(self, "class_names", names)

    @property
    def num_classes(self) -> int:
        return self.class_embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.class_embeddings.shape[1]


@dataclass(frozen=True)
class EnsembleSpec:
    """Encoder/head pairs forming an ensemble; all heads share one class set."""

    members: tuple[tuple[ImageEncoder, ClassifierHead], ...]

    def __post_init__(self) -> None:
        members = tuple(self.members)
        if not members:
            raise ValueError("ensemble needs at least one member")
        class_counts = {head.num_classes for _, head in members}
        if len(class_counts) > 1:
            raise ValueError(f"ensemble heads disagree on class count: {class_counts}")
        object.__setattr__(self, "members", members)

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def num_classes(self) -> int:
        return self.members[0][1].num_classes


def classify(head: ClassifierHead, emb: Embedding) -> ClassProbabilities:
    """Cosine-similarity logits against the class embeddings, then softmax."""
    if emb.dim != head.dim:
        raise ValueError(f"embedding dim {emb.dim} != head dim {head.dim}")
    norm = np.linalg.norm(emb.values)
    if norm == 0.0:
        raise ValueError("cannot classify a zero embedding")
    rows = head.class_embeddings
    cos = (rows @ emb.values) / (np.linalg.norm(rows, axis=1) * norm)
    return softmax(head.temperature * cos)


def group_predict(
    head: ClassifierHead, probs_or_logits: Union[ClassProbabilities, Sequence[float], np.ndarray]
) -> int:
    """Group of the argmax fine-grained class (ties: lowest class index)."""
    if head.group_map is None:
        raise ValueError("head has no group map")
    if isinstance(probs_or_logits, ClassProbabilities):
        vec = probs_or_logits.logits if probs_or_logits.logits is not None else probs_or_logits.probs
    else:
        vec = np.asarray(probs_or_logits, dtype=np.float64)
    if vec.shape != (head.num_classes,):
        raise ValueError(f"expected {head.num_classes} scores, got shape {vec.shape}")
    cls = int(np.argmax(vec))
    if cls not in head.group_map:
        raise ValueError(f"class {cls} missing from group map")
    return head.group_map[cls]


def fit_centroid_head(
    features: np.ndarray,
    labels: Sequence[int],
    n_classes: int,
    temperature: float = 100.0,
    group_map: Optional[dict[int, int]] = None,
    class_names: Optional[Sequence[str]] = None,
) -> ClassifierHead:
    """Nearest-centroid head: per-class mean feature vectors as class rows."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or features.shape[0] != labels.shape[0]:
        raise ValueError("features must be (n, d) aligned with labels")
    centroids = np.zeros((n_classes, features.shape[1]))
    for c in range(n_classes):
        chosen = features[labels == c]
        if chosen.shape[0] == 0:
            raise ValueError(f"no training samples for class {c}")
        centroids[c] = chosen.mean(axis=0)
    return ClassifierHead(
        class_embeddings=centroids,
        temperature=temperature,
        group_map=group_map,
        class_names=tuple(class_names) if class_names is not None else None,
    )


# --------------------------------------------------------------------------
# Toy encoder
# --------------------------------------------------------------------------

TOY_DIM = 12  # mean RGB (3) + 8-bin hue histogram (8) + region area fraction (1)


def rgb_to_hue(rgb: np.ndarray) -> np.ndarray:
    """Hue plane in [0, 1) from a (3, H, W) RGB array; gray pixels get hue 0.

    Channel priority on ties is R, then G, then B.
    """
    r, g, b = rgb[0], rgb[1], rgb[2]
    maxc = np.maximum(np.maximum(r, g), b)
    minc = np.minimum(np.minimum(r, g), b)
    delta = maxc - minc
    safe = np.where(delta > 0.0, delta, 1.0)
    hue = np.where(
        maxc == r,
        np.mod((g - b) / safe, 6.0),
        np.where(maxc == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    )
    hue = np.where(delta > 0.0, hue / 6.0, 0.0)
    return np.mod(hue, 1.0)


def toy_encoder(applied: AppliedImage) -> Embedding:
    """Deterministic 12-dim feature vector over the visible (alpha > 0) region.

    Concatenates the region's mean RGB, its 8-bin hue histogram (normalized
    to sum 1), and the region's area fraction.  For 3-channel images the
    region is the whole image.
    """
    data = applied.image.data
    rgb = data[:3]
    if applied.image.channels == 4:
        region = data[3] > 0.0
    else:
        region = np.ones(rgb.shape[1:], dtype=bool)
    count = int(region.sum())
    features = np.zeros(TOY_DIM, dtype=np.float64)
    if count > 0:
        features[0:3] = rgb[:, region].mean(axis=1)
        bins = np.minimum((rgb_to_hue(rgb) * 8).astype(np.int64), 7)
        features[3:11] = np.bincount(bins[region], minlength=8) / count
        features[11] = count / region.size
    return Embedding(features)


class ToyEncoder:
    """Encoder wrapper around :func:`toy_encoder`."""

    name = "toy"
    dim = TOY_DIM
    accepts_alpha = True

    def encode(self, applied: AppliedImage, sample_id: Optional[str] = None) -> Embedding:
        return toy_encoder(applied)


# --------------------------------------------------------------------------
# File-backed backends
# --------------------------------------------------------------------------


class FileBackedEncoder:
    """Encoder that looks up precomputed embeddings from an "OCE1" file.

    Rows are keyed "<sample_id>/<mask_index>" for candidate masks and
    "<sample_id>/full" for the full-image application.
    """

    def __init__(self, path: Union[str, Path], name: Optional[str] = None, accepts_alpha: bool = True):
        keys, values = read_embeddings(path)
        self.name = name or Path(path).stem
        self.dim = int(values.shape[1])
        self.accepts_alpha = accepts_alpha
        self._values = values.astype(np.float64)
        self._rows = {key: i for i, key in enumerate(keys)}

    def encode(self, applied: AppliedImage, sample_id: Optional[str] = None) -> Embedding:
        if sample_id is None:
            raise ValueError("file-backed encoder needs a sample id")
        suffix = "full" if applied.source_mask_index < 0 else str(applied.source_mask_index)
        key = f"{sample_id}/{suffix}"
        row = self._rows.get(key)
        if row is None:
            raise ValueError(f"no stored embedding for key {key!r} in encoder {self.name!r}")
        return Embedding(self._values[row])


class PrecomputedMaskGenerator:
    """Serves per-sample mask sets loaded from a manifest (or built in memory)."""

    def __init__(
        self,
        masksets: Mapping[str, MaskSet],
        name: str = "manifest",
        source: MaskSource = MaskSource.EXTERNAL_SEGMENTER,
    ):
        self._masksets = dict(masksets)
        self.name = name
        self.source = source

    def generate(self, image: ImageTensor, sample_id: Optional[str] = None) -> MaskSet:
        if sample_id is None or sample_id not in self._masksets:
            raise ValueError(f"no masks stored for sample {sample_id!r}")
        maskset = self._masksets[sample_id]
        if maskset.shape is not None and maskset.shape != (image.height, image.width):
            raise ValueError(
                f"sample {sample_id}: masks are {maskset.shape}, image is "
                f"{(image.height, image.width)}"
            )
        return MaskSet(masks=maskset.masks, source=self.source)


class NoisyMaskGenerator:
    """Perturbs stored masks by dilating or eroding up to ``max_px`` pixels.

    Perturbations are derived deterministically from (seed, sample id, mask
    index); erosions that would empty a mask fall back to the original.
    """

    def __init__(self, masksets: Mapping[str, MaskSet], max_px: int = 2, seed: int = 0):
        if max_px < 1:
            raise ValueError("max_px must be >= 1")
        self._base = PrecomputedMaskGenerator(masksets, name="noisy", source=MaskSource.SYNTHETIC)
        self.max_px = max_px
        self.seed = seed
        self.name = "noisy"
        self.source = MaskSource.SYNTHETIC

    def generate(self, image: ImageTensor, sample_id: Optional[str] = None) -> MaskSet:
        base = self._base.generate(image, sample_id)
        noisy = []
        for k, mask in enumerate(base):
            rng = np.random.default_rng([self.seed, zlib.crc32(str(sample_id).encode()), k])
            px = int(rng.integers(1, self.max_px + 1))
            if rng.integers(0, 2) == 0:
                bits = ndimage.binary_dilation(mask.bits, iterations=px)
            else:
                bits = ndimage.binary_erosion(mask.bits, iterations=px)
                if not bits.any():
                    bits = mask.bits
            noisy.append(BinaryMask(bits))
        return MaskSet(masks=tuple(noisy), source=MaskSource.SYNTHETIC)


class EmptyMaskGenerator:
    """Always returns zero candidate masks (exercises the pipeline fallback)."""

    name = "none"
    source = MaskSource.EXTERNAL_SEGMENTER

    def generate(self, image: ImageTensor, sample_id: Optional[str] = None) -> MaskSet:
        return MaskSet(masks=(), source=self.source)


# --------------------------------------------------------------------------
# Interchange formats
# --------------------------------------------------------------------------

OCE_MAGIC = b"OCE1"


def write_embeddings(path: Union[str, Path], keys: Sequence[str], values: np.ndarray) -> None:
    """Write an "OCE1" embedding file plus its JSON key sidecar.

    Layout: magic "OCE1", little-endian u32 count, u32 dim, then count*dim
    float32 little-endian values, row-major.  The sidecar ``<path>.json``
    lists the row keys in order.
    """
    values = np.ascontiguousarray(np.asarray(values, dtype="<f4"))
    if values.ndim != 2:
        raise ValueError(f"embeddings must be (count, dim), got shape {values.shape}")
    if len(keys) != values.shape[0]:
        raise ValueError(f"{len(keys)} keys for {values.shape[0]} embedding rows")
    path = Path(path)
    with open(path, "wb") as f:
        f.write(OCE_MAGIC)
        f.write(struct.pack("<II", values.shape[0], values.shape[1]))
        f.write(values.tobytes(order="C"))
    with open(path.with_name(path.name + ".json"), "w", encoding="utf-8") as f:
        json.dump({"keys": list(keys)}, f, indent=2)
        f.write("\n")


def read_embeddings(path: Union[str, Path]) -> tuple[list[str], np.ndarray]:
    """Read an "OCE1" embedding file; returns (keys, float32 (count, dim))."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != OCE_MAGIC:
        raise ValueError(f"{path}: not an OCE1 embedding file")
    count, dim = struct.unpack("<II", raw[4:12])
    expected = 12 + count * dim * 4
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes for {count}x{dim}, got {len(raw)}")
    values = np.frombuffer(raw[12:], dtype="<f4").reshape(count, dim).copy()
    sidecar = path.with_name(path.name + ".json")
    keys = json.loads(sidecar.read_text(encoding="utf-8"))["keys"]
    if len(keys) != count:
        raise ValueError(f"{sidecar}: {len(keys)} keys for {count} rows")
    return list(keys), values


def write_image_png(path: Union[str, Path], image: ImageTensor) -> None:
    """Write a 3-channel image as an 8-bit RGB PNG (values scaled by 255)."""
    if image.channels != 3:
        raise ValueError("only 3-channel images are written as RGB PNGs")
    arr = np.round(image.data * 255.0).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def read_image_png(path: Union[str, Path]) -> ImageTensor:
    """Read an RGB PNG into a float image in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return ImageTensor(arr.transpose(2, 0, 1) / 255.0)


def write_mask_png(path: Union[str, Path], mask: BinaryMask) -> None:
    """Write a mask as an 8-bit grayscale PNG with values 0/255."""
    Image.fromarray(mask.bits.astype(np.uint8) * 255, mode="L").save(path, format="PNG")


def read_mask_png(path: Union[str, Path]) -> BinaryMask:
    """Read a 0/255 grayscale PNG into a boolean mask."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return BinaryMask(arr >= 128)


def write_instance_png(path: Union[str, Path], seg: InstanceSegmentation) -> None:
    """Write ground-truth instance ids as a single 16-bit grayscale PNG."""
    if seg.labels.max() > np.iinfo(np.uint16).max:
        raise ValueError("instance ids exceed 16-bit range")
    Image.fromarray(seg.labels.astype(np.uint16)).save(path, format="PNG")


def read_instance_png(path: Union[str, Path]) -> InstanceSegmentation:
    """Read a 16-bit instance-id PNG."""
    with Image.open(path) as im:
        arr = np.asarray(im)
    return InstanceSegmentation(arr.astype(np.int64))


def masks_from_instances(seg: InstanceSegmentation, include_background: bool = True) -> MaskSet:
    """One mask per instance id (ascending), then the background complement.

    The foreground object is instance id 1 by dataset convention, so it
    comes first.
    """
    masks = [BinaryMask(seg.labels == i) for i in seg.instance_ids()]
    if include_background:
        background = seg.labels == 0
        if background.any():
            masks.append(BinaryMask(background))
    return MaskSet(masks=tuple(masks), source=MaskSource.GROUND_TRUTH)


# --------------------------------------------------------------------------
# Dataset manifest
# --------------------------------------------------------------------------

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class SampleError:
    sample_id: str
    message: str


@dataclass
class Dataset:
    """A loaded dataset split: samples plus their candidate masks and gt."""

    samples: list[LabeledSample]
    masksets: dict[str, MaskSet] = field(default_factory=dict)
    gt_segs: dict[str, InstanceSegmentation] = field(default_factory=dict)
    class_names: list[str] = field(default_factory=list)
    group_map: Optional[dict[int, int]] = None
    group_names: Optional[list[str]] = None
    errors: list[SampleError] = field(default_factory=list)

    @property
    def n_classes(self) -> int:
        if self.class_names:
            return len(self.class_names)
        return max(s.label for s in self.samples) + 1 if self.samples else 0


def _resolve_root(manifest_path: Path, data_root: Optional[Union[str, Path]]) -> Path:
    if data_root is not None:
        return Path(data_root)
    env = os.environ.get(DATA_ROOT_ENV)
    if env:
        return Path(env)
    return manifest_path.parent


def _entry_path(entry: Union[str, dict], root: Path) -> tuple[Path, Optional[str]]:
    if isinstance(entry, str):
        rel, sha = entry, None
    elif isinstance(entry, dict) and "path" in entry:
        rel, sha = entry["path"], entry.get("sha256")
    else:
        raise ValueError(f"bad file entry: {entry!r}")
    path = Path(rel)
    return (path if path.is_absolute() else root / path), sha


def _check_sha256(path: Path, expected: Optional[str]) -> None:
    if expected is None:
        return
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    if digest != expected:
        raise ValueError(f"{path}: checksum mismatch (expected {expected}, got {digest})")


def _load_classes(path: Path) -> tuple[list[str], Optional[dict[int, int]], Optional[list[str]]]:
    data = json.loads(path.read_text(encoding="utf-8"))
    class_names = list(data["class_names"])
    group_map = None
    if data.get("group_map") is not None:
        group_map = {int(k): int(v) for k, v in data["group_map"].items()}
    group_names = list(data["group_names"]) if data.get("group_names") else None
    return class_names, group_map, group_names


def _mask_files(masks_dir: Path) -> list[Path]:
    files = []
    for p in masks_dir.iterdir():
        if p.suffix == ".png" and p.stem.isdigit():
            files.append(p)
    files.sort(key=lambda p: int(p.stem))
    for k, p in enumerate(files):
        if int(p.stem) != k:
            raise ValueError(f"{masks_dir}: mask files must be named 0..K-1, found {p.name}")
    return files


def load_dataset_manifest(
    path: Union[str, Path],
    *,
    data_root: Optional[Union[str, Path]] = None,
    fail_fast: bool = False,
) -> Dataset:
    """Load a dataset split manifest, isolating per-sample failures.

    Relative paths resolve against ``data_root``, the OCCAM_DATA_ROOT
    environment variable, or the manifest's directory, in that order.
    Samples that fail to load are reported in ``Dataset.errors`` (or raised
    immediately when ``fail_fast``).
    """
    manifest_path = Path(path)
    data = json.loads(manifest_path.read_text(encoding="utf-8"))
    if data.get("version") != MANIFEST_VERSION:
        raise ValueError(f"{manifest_path}: unsupported manifest version {data.get('version')!r}")
    entries = data.get("samples", [])
    root = _resolve_root(manifest_path, data_root)

    dataset = Dataset(samples=[])
    if not entries:
        warnings.warn(f"{manifest_path}: manifest has no samples")
        return dataset

    refs = {e.get("class_names_ref") for e in entries if e.get("class_names_ref")}
    if len(refs) > 1:
        raise ValueError(f"{manifest_path}: multiple class_names_ref values: {sorted(refs)}")
    if refs:
        ref_path, _ = _entry_path(next(iter(refs)), root)
        dataset.class_names, dataset.group_map, dataset.group_names = _load_classes(ref_path)

    for entry in entries:
        sample_id = str(entry.get("id", "<missing id>"))
        try:
            image_path, image_sha = _entry_path(entry["image"], root)
            _check_sha256(image_path, image_sha)
            image = read_image_png(image_path)

            maskset = MaskSet(masks=(), source=MaskSource.EXTERNAL_SEGMENTER)
            if entry.get("masks_dir"):
                masks_dir, _ = _entry_path(entry["masks_dir"], root)
                masks = tuple(read_mask_png(p) for p in _mask_files(masks_dir))
                for mask in masks:
                    if mask.shape != (image.height, image.width):
                        raise ValueError(
                            f"mask is {mask.shape}, image is {(image.height, image.width)}"
                        )
                maskset = MaskSet(masks=masks, source=MaskSource.EXTERNAL_SEGMENTER)

            gt_seg = None
            gt_masks = None
            if entry.get("gt_seg"):
                seg_path, seg_sha = _entry_path(entry["gt_seg"], root)
                _check_sha256(seg_path, seg_sha)
                gt_seg = read_instance_png(seg_path)
                if gt_seg.shape != (image.height, image.width):
                    raise ValueError(
                        f"gt_seg is {gt_seg.shape}, image is {(image.height, image.width)}"
                    )
                gt_masks = masks_from_instances(gt_seg)

            label = int(entry["label"])
            if dataset.class_names and label >= len(dataset.class_names):
                raise ValueError(f"label {label} outside the {len(dataset.class_names)}-class set")

            sample = LabeledSample(
                id=sample_id,
                image=image,
                label=label,
                group=int(entry["group"]) if entry.get("group") is not None else None,
                gt_masks=gt_masks,
                gt_bbox=tuple(entry["gt_bbox"]) if entry.get("gt_bbox") else None,
            )
        except Exception as exc:  # noqa: BLE001 - per-sample isolation contract
            if fail_fast:
                raise
            dataset.errors.append(SampleError(sample_id=sample_id, message=str(exc)))
            continue
        dataset.samples.append(sample)
        dataset.masksets[sample_id] = maskset
        if gt_seg is not None:
            dataset.gt_segs[sample_id] = gt_seg
    return dataset


def write_dataset(
    dataset: Dataset,
    out_dir: Union[str, Path],
    manifest_name: str = "manifest.json",
) -> Path:
    """Write a dataset in the interchange layout; returns the manifest path.

    Layout: images/<id>.png, masks/<id>/<k>.png, gt_seg/<id>.png,
    classes.json, and the manifest.  Candidate masks are written exactly as
    stored (pre-filtering).
    """
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    entries = []
    classes_ref = None
    if dataset.class_names:
        classes_ref = "classes.json"
        payload: dict = {"class_names": dataset.class_names}
        if dataset.group_map is not None:
            payload["group_map"] = {str(k): v for k, v in sorted(dataset.group_map.items())}
        if dataset.group_names is not None:
            payload["group_names"] = dataset.group_names
        (out / classes_ref).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")

    for sample in dataset.samples:
        if not isinstance(sample.image, ImageTensor):
            raise ValueError(f"sample {sample.id}: cannot write an unresolved image reference")
        entry: dict = {"id": sample.id, "image": f"images/{sample.id}.png", "label": sample.label}
        write_image_png(out / entry["image"], sample.image)

        maskset = dataset.masksets.get(sample.id)
        if maskset is not None and len(maskset) > 0:
            masks_dir = out / "masks" / sample.id
            masks_dir.mkdir(parents=True, exist_ok=True)
            for k, mask in enumerate(maskset):
                write_mask_png(masks_dir / f"{k}.png", mask)
            entry["masks_dir"] = f"masks/{sample.id}"

        gt_seg = dataset.gt_segs.get(sample.id)
        if gt_seg is not None:
            (out / "gt_seg").mkdir(exist_ok=True)
            entry["gt_seg"] = f"gt_seg/{sample.id}.png"
            write_instance_png(out / entry["gt_seg"], gt_seg)

        if sample.gt_bbox is not None:
            entry["gt_bbox"] = list(sample.gt_bbox)
        if sample.group is not None:
            entry["group"] = sample.group
        if classes_ref:
            entry["class_names_ref"] = classes_ref
        entries.append(entry)

    manifest = {"version": MANIFEST_VERSION, "samples": entries}
    manifest_path = out / manifest_name
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path
