"""Tactile image datasets: file loading, synthetic grating corpora, touch
sampling and rotation augmentation.

A dataset groups fixed-size single- or three-channel images (pixel values in
[0, 1]) by fabric id. File datasets are read from ``<root>/<fabric_id>/*.png``
(also ``.pgm``/``.bmp``); synthetic datasets are built from grating class
parameters and can produce unlimited fresh draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import (
    DatasetEmpty,
    DecodeError,
    FabricEmpty,
    ParamError,
    UnknownFabric,
)

IMAGE_EXTENSIONS = {".png", ".pgm", ".bmp"}


@dataclass(frozen=True)
class FileSource:
    path: str


@dataclass(frozen=True)
class SyntheticSource:
    class_index: int
    draw_index: int


@dataclass(frozen=True)
class AugmentedSource:
    parent_id: str
    angle_degrees: float


ImageSource = Union[FileSource, SyntheticSource, AugmentedSource]


@dataclass
class TextureImage:
    """One tactile observation: a pixel grid plus provenance metadata.

    ``pixels`` is (H, W) or (H, W, 3) float64 with every value in [0, 1].
    """

    pixels: np.ndarray
    fabric_id: str
    image_id: str
    source: ImageSource

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim not in (2, 3):
            raise ParamError(f"pixels must be 2-D or 3-D, got shape {px.shape}")
        if px.size == 0:
            raise ParamError("pixels must be non-empty")
        lo, hi = float(px.min()), float(px.max())
        if lo < 0.0 or hi > 1.0:
            raise ParamError(f"pixel values outside [0, 1]: min={lo}, max={hi}")
        object.__setattr__(self, "pixels", px)

    @property
    def shape(self) -> tuple:
        return self.pixels.shape


@dataclass(frozen=True)
class SyntheticClassParams:
    """Parameters of one synthetic grating class.

    Each draw renders a sinusoidal grating at ``orientation_degrees`` (plus a
    uniform placement-rotation jitter), ``frequency_cycles_per_image`` spatial
    frequency and a uniformly jittered phase, then adds Gaussian pixel noise
    and clamps to [0, 1].
    """

    orientation_degrees: float
    frequency_cycles_per_image: float
    phase_jitter: float = 0.0
    placement_rotation_jitter_degrees: float = 0.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not self.frequency_cycles_per_image > 0:
            raise ParamError("frequency_cycles_per_image must be > 0")
        if self.noise_sigma < 0:
            raise ParamError("noise_sigma must be >= 0")
        if self.phase_jitter < 0 or self.placement_rotation_jitter_degrees < 0:
            raise ParamError("jitters must be >= 0")


class Dataset:
    """Immutable grouping of texture images by fabric id.

    For synthetic datasets ``class_params`` maps each fabric id to its
    generator parameters so fresh draws can be produced during a trial.
    """

    def __init__(self, images_by_fabric, origin="unspecified", class_params=None):
        if not images_by_fabric:
            raise DatasetEmpty("dataset has no fabrics")
        shapes = set()
        seen_ids = set()
        for fabric_id, images in images_by_fabric.items():
            if not images:
                raise FabricEmpty(f"fabric {fabric_id!r} has no images")
            for img in images:
                if img.fabric_id != fabric_id:
                    raise ParamError(
                        f"image {img.image_id!r} filed under {fabric_id!r} "
                        f"but carries fabric_id {img.fabric_id!r}"
                    )
                if img.image_id in seen_ids:
                    raise ParamError(f"duplicate image_id {img.image_id!r}")
                seen_ids.add(img.image_id)
                shapes.add(img.pixels.shape)
        if len(shapes) != 1:
            raise ParamError(f"images have inconsistent shapes: {sorted(shapes)}")
        self._images = {fid: tuple(imgs) for fid, imgs in images_by_fabric.items()}
        self.image_shape = shapes.pop()
        self.origin = origin
        self.class_params = dict(class_params) if class_params else None

    @property
    def fabric_ids(self) -> list:
        return sorted(self._images)

    @property
    def is_synthetic(self) -> bool:
        return self.class_params is not None

    def images(self, fabric_id: str) -> tuple:
        try:
            return self._images[fabric_id]
        except KeyError:
            raise UnknownFabric(f"unknown fabric {fabric_id!r}") from None

    def count(self, fabric_id: str) -> int:
        return len(self.images(fabric_id))

    def counts(self) -> dict:
        return {fid: len(imgs) for fid, imgs in sorted(self._images.items())}

    def __contains__(self, fabric_id) -> bool:
        return fabric_id in self._images

    def __len__(self) -> int:
        return sum(len(v) for v in self._images.values())


def _grating(height, width, orientation_degrees, frequency, phase):
    theta = math.radians(orientation_degrees)
    rows = np.arange(height, dtype=np.float64) / height
    cols = np.arange(width, dtype=np.float64) / width
    v, u = np.meshgrid(rows, cols, indexing="ij")
    arg = 2.0 * math.pi * frequency * (u * math.cos(theta) + v * math.sin(theta)) + phase
    return 0.5 + 0.5 * np.sin(arg)


def synthetic_draw(params: SyntheticClassParams, image_size, rng) -> np.ndarray:
    """Render one draw of a grating class. Pure given the rng state."""
    height, width = image_size
    angle = params.orientation_degrees
    if params.placement_rotation_jitter_degrees > 0:
        angle += rng.uniform(
            -params.placement_rotation_jitter_degrees,
            params.placement_rotation_jitter_degrees,
        )
    phase = 0.0
    if params.phase_jitter > 0:
        phase = rng.uniform(-params.phase_jitter, params.phase_jitter)
    img = _grating(height, width, angle, params.frequency_cycles_per_image, phase)
    if params.noise_sigma > 0:
        img = img + rng.normal(0.0, params.noise_sigma, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def synthetic_fabric_id(class_index: int) -> str:
    return f"class{class_index:02d}"


def generate_synthetic(classes, n_per_class, image_size, seed) -> Dataset:
    """Build a deterministic synthetic dataset: ``n_per_class`` draws of each
    grating class at the given (H, W).
    """
    if n_per_class < 1:
        raise ParamError("n_per_class must be >= 1")
    if len(image_size) != 2 or min(image_size) < 1:
        raise ParamError(f"invalid image_size {image_size!r}")
    if not classes:
        raise ParamError("at least one class is required")
    rng = np.random.default_rng(seed)
    images_by_fabric = {}
    class_params = {}
    for ci, params in enumerate(classes):
        if not isinstance(params, SyntheticClassParams):
            raise ParamError(f"class {ci} is not SyntheticClassParams")
        fabric = synthetic_fabric_id(ci)
        class_params[fabric] = params
        images = []
        for di in range(n_per_class):
            px = synthetic_draw(params, image_size, rng)
            images.append(
                TextureImage(
                    pixels=px,
                    fabric_id=fabric,
                    image_id=f"{fabric}/{di:04d}",
                    source=SyntheticSource(class_index=ci, draw_index=di),
                )
            )
        images_by_fabric[fabric] = images
    return Dataset(images_by_fabric, origin=f"synthetic(seed={seed})", class_params=class_params)


def _decode_image(path: Path, channels: int) -> np.ndarray:
    try:
        from PIL import Image

        with Image.open(path) as im:
            im = im.convert("L" if channels == 1 else "RGB")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except OSError as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc
    return arr


def _resize(arr: np.ndarray, target_hw) -> np.ndarray:
    from PIL import Image

    height, width = target_hw
    if arr.shape[:2] == (height, width):
        return arr
    img = Image.fromarray(np.round(arr * 255.0).astype(np.uint8))
    img = img.resize((width, height), resample=Image.BILINEAR)
    return np.asarray(img, dtype=np.float64) / 255.0


def load_dataset(root_path, image_size=None, channels=1) -> Dataset:
    """Load ``<root>/<fabric_id>/<image>.{png,pgm,bmp}`` into a Dataset.

    Images are decoded, converted to ``channels`` channels, rescaled to
    ``image_size`` (H, W) when given, and normalized to [0, 1]. Without a
    target size all images must share their native dimensions.
    """
    root = Path(root_path)
    if not root.is_dir():
        raise DatasetEmpty(f"dataset root {root} does not exist")
    fabric_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not fabric_dirs:
        raise DatasetEmpty(f"dataset root {root} contains no fabric directories")
    if channels not in (1, 3):
        raise ParamError("channels must be 1 or 3")

    images_by_fabric = {}
    for fdir in fabric_dirs:
        files = sorted(
            p for p in fdir.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS
        )
        if not files:
            raise FabricEmpty(f"fabric directory {fdir.name!r} has no images")
        images = []
        for path in files:
            arr = _decode_image(path, channels)
            if image_size is not None:
                arr = _resize(arr, image_size)
            images.append(
                TextureImage(
                    pixels=arr,
                    fabric_id=fdir.name,
                    image_id=f"{fdir.name}/{path.name}",
                    source=FileSource(path=str(path)),
                )
            )
        images_by_fabric[fdir.name] = images
    return Dataset(images_by_fabric, origin=str(root))


def save_dataset(dataset: Dataset, root_path) -> None:
    """Write a dataset as 8-bit PNGs in the directory layout load_dataset reads."""
    from PIL import Image

    root = Path(root_path)
    root.mkdir(parents=True, exist_ok=True)
    for fabric_id in dataset.fabric_ids:
        fdir = root / fabric_id
        fdir.mkdir(exist_ok=True)
        for idx, img in enumerate(dataset.images(fabric_id)):
            arr = np.round(img.pixels * 255.0).astype(np.uint8)
            Image.fromarray(arr).save(fdir / f"{idx:04d}.png")


def rotate_image(pixels: np.ndarray, angle_degrees: float, fill=None) -> np.ndarray:
    """Rotate an image about its center with bilinear interpolation.

    Sample points falling outside the source frame take ``fill`` (default:
    the image's mean intensity). Output shape equals input shape.
    """
    px = np.asarray(pixels, dtype=np.float64)
    if fill is None:
        fill = float(px.mean())
    squeeze = px.ndim == 2
    if squeeze:
        px = px[:, :, None]
    height, width, _ = px.shape

    theta = math.radians(angle_degrees)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cr, cc = (height - 1) / 2.0, (width - 1) / 2.0
    rows, cols = np.meshgrid(
        np.arange(height, dtype=np.float64),
        np.arange(width, dtype=np.float64),
        indexing="ij",
    )
    # inverse map: where each output pixel samples from in the source
    dr, dc = rows - cr, cols - cc
    src_r = cr + cos_t * dr + sin_t * dc
    src_c = cc - sin_t * dr + cos_t * dc

    inside = (src_r >= 0) & (src_r <= height - 1) & (src_c >= 0) & (src_c <= width - 1)
    r0 = np.clip(np.floor(src_r), 0, height - 1).astype(np.intp)
    c0 = np.clip(np.floor(src_c), 0, width - 1).astype(np.intp)
    r1 = np.minimum(r0 + 1, height - 1)
    c1 = np.minimum(c0 + 1, width - 1)
    fr = (src_r - r0)[:, :, None]
    fc = (src_c - c0)[:, :, None]

    out = (
        px[r0, c0] * (1 - fr) * (1 - fc)
        + px[r0, c1] * (1 - fr) * fc
        + px[r1, c0] * fr * (1 - fc)
        + px[r1, c1] * fr * fc
    )
    out[~inside] = fill
    out = np.clip(out, 0.0, 1.0)
    return out[:, :, 0] if squeeze else out


def augment_rotations(image: TextureImage, copies: int, rng, angle_range_degrees=180.0):
    """Produce ``copies`` independently rotated versions of ``image``.

    Angles are drawn uniformly from (-angle_range_degrees, +angle_range_degrees);
    the default half-range of 180 spans the full circle. The unrotated original
    is not part of the returned list.
    """
    if copies < 1:
        raise ParamError("copies must be >= 1")
    if angle_range_degrees < 0:
        raise ParamError("angle_range_degrees must be >= 0")
    angles = rng.uniform(-angle_range_degrees, angle_range_degrees, size=copies)
    out = []
    for k, angle in enumerate(angles):
        out.append(
            TextureImage(
                pixels=rotate_image(image.pixels, float(angle)),
                fabric_id=image.fabric_id,
                image_id=f"{image.image_id}#rot{k}",
                source=AugmentedSource(parent_id=image.image_id, angle_degrees=float(angle)),
            )
        )
    return out


class TouchSampler:
    """Per-trial touch state over one dataset.

    File-backed fabrics are drawn uniformly without replacement until
    exhausted, then with replacement (``reuse_flags`` records the fallback).
    Synthetic fabrics produce a fresh draw per touch.
    """

    def __init__(self, dataset: Dataset, rng):
        self.dataset = dataset
        self.rng = rng
        self._remaining = {fid: list(range(dataset.count(fid))) for fid in dataset.fabric_ids}
        self._fresh_counter = {fid: dataset.count(fid) for fid in dataset.fabric_ids}
        self.reuse_flags = {fid: False for fid in dataset.fabric_ids}

    def sample_touch(self, fabric_id: str) -> TextureImage:
        if fabric_id not in self.dataset:
            raise UnknownFabric(f"unknown fabric {fabric_id!r}")
        if self.dataset.is_synthetic:
            params = self.dataset.class_params[fabric_id]
            draw_index = self._fresh_counter[fabric_id]
            self._fresh_counter[fabric_id] += 1
            px = synthetic_draw(params, self.dataset.image_shape[:2], self.rng)
            class_index = self.dataset.fabric_ids.index(fabric_id)
            return TextureImage(
                pixels=px,
                fabric_id=fabric_id,
                image_id=f"{fabric_id}/touch{draw_index:04d}",
                source=SyntheticSource(class_index=class_index, draw_index=draw_index),
            )
        remaining = self._remaining[fabric_id]
        images = self.dataset.images(fabric_id)
        if remaining:
            pos = int(self.rng.integers(len(remaining)))
            return images[remaining.pop(pos)]
        self.reuse_flags[fabric_id] = True
        return images[int(self.rng.integers(len(images)))]
