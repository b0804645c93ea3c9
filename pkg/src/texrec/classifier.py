"""A small convolutional probabilistic classifier with inverted dropout.

The network is a stack of conv(3x3) + maxpool(2x2) + ReLU blocks, each
followed by dropout, then a dense hidden layer with dropout and a softmax
head. (Pooling before the ReLU is arithmetically identical to the usual
conv-relu-pool order because max and ReLU commute, and it processes a
quarter of the activations.) Training is SGD with momentum. Prediction comes
in two flavors:

* deterministic: dropout disabled, a pure function of (parameters, input);
* Monte-Carlo: repeated stochastic forward passes with independently sampled
  dropout masks, used to gauge epistemic uncertainty.

All arithmetic is float64 so the finite-difference gradient check is a
meaningful correctness bar.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import nn
from .dataset import TextureImage
from .errors import (
    DistributionError,
    EmptyReference,
    InputShapeError,
    InternalError,
    NumericalDivergence,
    ParamError,
)


@dataclass(frozen=True)
class ClassifierConfig:
    height: int = 32
    width: int = 32
    channels: int = 1
    conv_channels: tuple = (8, 16)
    dense_hidden_units: int = 64
    num_classes: int = 4
    dropout_rate: float = 0.25
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 8
    weight_init_scale: float = math.sqrt(2.0)

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ParamError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.num_classes < 2:
            raise ParamError("num_classes must be >= 2")
        dims = (self.height, self.width, self.channels, self.dense_hidden_units,
                self.batch_size, *self.conv_channels)
        if any(d < 1 for d in dims):
            raise ParamError("all layer dimensions must be positive")
        if self.channels not in (1, 3):
            raise ParamError("channels must be 1 or 3")
        if self.learning_rate <= 0:
            raise ParamError("learning_rate must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ParamError("momentum must be in [0, 1)")
        h, w = self.height, self.width
        for _ in self.conv_channels:
            if h % 2 or w % 2:
                raise ParamError(
                    f"input {self.height}x{self.width} not divisible by the "
                    f"{len(self.conv_channels)} pooling stages"
                )
            h, w = h // 2, w // 2
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))


@dataclass
class PredictiveSample:
    """One probability vector over the class labels."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1:
            raise DistributionError(f"probs must be a vector, got shape {p.shape}")
        if (p < 0).any():
            raise DistributionError("probs has negative entries")
        total = float(p.sum())
        if abs(total - 1.0) > 1e-9:
            raise DistributionError(f"probs sums to {total}, not 1")
        self.probs = p


@dataclass
class ReferenceSet:
    """Augmented copies of the reference touches; all share one fabric id."""

    images: tuple

    def __post_init__(self):
        imgs = tuple(self.images)
        if not imgs:
            raise EmptyReference("reference set has no images")
        fabrics = {im.fabric_id for im in imgs}
        if len(fabrics) != 1:
            raise ParamError(f"reference images span several fabrics: {sorted(fabrics)}")
        self.images = imgs

    @property
    def n_ref(self) -> int:
        return len(self.images)

    @property
    def fabric_id(self) -> str:
        return self.images[0].fabric_id


@dataclass
class TrainStats:
    final_loss: float
    final_train_accuracy: float


class Classifier:
    """Parameter tensors, optimizer state and the layer stack."""

    def __init__(self, config: ClassifierConfig, seed: int):
        self.config = config
        self.valid = True
        self.steps = 0
        self.epochs_trained = 0
        rng = np.random.default_rng(seed)

        scale = config.weight_init_scale
        self._blocks = []
        in_ch = config.channels
        h, w = config.height, config.width
        for out_ch in config.conv_channels:
            self._blocks.append(
                {"conv": nn.Conv3x3(in_ch, out_ch, scale, rng), "pool": nn.MaxPool2(),
                 "relu": nn.ReLU(), "drop": nn.Dropout(config.dropout_rate)}
            )
            in_ch = out_ch
            h, w = h // 2, w // 2
        self._flat_dim = in_ch * h * w
        self._flatten = nn.Flatten()
        self._dense = nn.Dense(self._flat_dim, config.dense_hidden_units, scale, rng)
        self._dense_relu = nn.ReLU()
        self._dense_drop = nn.Dropout(config.dropout_rate)
        self._out = nn.Dense(config.dense_hidden_units, config.num_classes, scale, rng)

        self._velocity = {name: np.zeros_like(p) for name, p in self.parameters().items()}

    # ---- parameter plumbing -------------------------------------------------

    def parameters(self) -> dict:
        params = {}
        for i, blk in enumerate(self._blocks):
            params[f"conv{i}.W"] = blk["conv"].W
            params[f"conv{i}.b"] = blk["conv"].b
        params["dense.W"] = self._dense.W
        params["dense.b"] = self._dense.b
        params["out.W"] = self._out.W
        params["out.b"] = self._out.b
        return params

    def _gradients(self) -> dict:
        grads = {}
        for i, blk in enumerate(self._blocks):
            grads[f"conv{i}.W"] = blk["conv"].dW
            grads[f"conv{i}.b"] = blk["conv"].db
        grads["dense.W"] = self._dense.dW
        grads["dense.b"] = self._dense.db
        grads["out.W"] = self._out.dW
        grads["out.b"] = self._out.db
        return grads

    def _set_parameter(self, name: str, value: np.ndarray) -> None:
        layer, attr = name.split(".")
        if layer.startswith("conv"):
            target = self._blocks[int(layer[4:])]["conv"]
        elif layer == "dense":
            target = self._dense
        elif layer == "out":
            target = self._out
        else:
            raise InternalError(f"unknown parameter {name}")
        getattr(target, attr)[...] = value

    # ---- dropout masks ------------------------------------------------------

    def mask_shapes(self, n: int) -> list:
        shapes = []
        h, w = self.config.height, self.config.width
        for out_ch in self.config.conv_channels:
            h, w = h // 2, w // 2
            shapes.append((n, h, w, out_ch))
        shapes.append((n, self.config.dense_hidden_units))
        return shapes

    def sample_masks(self, n: int, rng) -> Optional[list]:
        """Draw i.i.d. Bernoulli keep-masks for every dropout layer."""
        if self.config.dropout_rate == 0.0:
            return None
        rate = np.float32(self.config.dropout_rate)
        return [rng.random(s, dtype=np.float32) >= rate for s in self.mask_shapes(n)]

    # ---- forward / backward -------------------------------------------------

    def forward(self, x: np.ndarray, dropout=False, cache=False, masks=None, rng=None):
        """Run the stack on (N, H, W, C) input and return logits.

        With ``dropout=True`` masks are taken from ``masks`` or sampled from
        ``rng``; with ``cache=True`` activations are kept for a backward pass.
        """
        if not self.valid:
            raise NumericalDivergence("classifier was invalidated by a diverged training run")
        if dropout and self.config.dropout_rate > 0.0:
            if masks is None:
                if rng is None:
                    raise InternalError("dropout forward needs masks or an rng")
                masks = self.sample_masks(x.shape[0], rng)
        else:
            masks = None

        for mi, blk in enumerate(self._blocks):
            x = blk["conv"].forward(x, train=cache)
            x = blk["pool"].forward(x, train=cache)
            x = blk["relu"].forward(x, train=cache)
            x = blk["drop"].forward(x, mask=None if masks is None else masks[mi], train=cache)
        x = self._flatten.forward(x, train=cache)
        x = self._dense.forward(x, train=cache)
        x = self._dense_relu.forward(x, train=cache)
        x = self._dense_drop.forward(x, mask=None if masks is None else masks[-1], train=cache)
        return self._out.forward(x, train=cache)

    def mc_forward(self, x_unique: np.ndarray, n_mc: int, rng):
        """Dropout forward on each input replicated n_mc times.

        The first block is dropout-free, so it runs once per unique input and
        its output is replicated before the masks apply; this is numerically
        identical per row to forwarding the replicated batch through it.
        """
        blk = self._blocks[0]
        h = blk["relu"].forward(blk["pool"].forward(blk["conv"].forward(x_unique)))
        h = np.repeat(h, n_mc, axis=0)
        masks = self.sample_masks(h.shape[0], rng)
        h = blk["drop"].forward(h, mask=None if masks is None else masks[0])
        for mi, blk in enumerate(self._blocks[1:], start=1):
            h = blk["conv"].forward(h)
            h = blk["pool"].forward(h)
            h = blk["relu"].forward(h)
            h = blk["drop"].forward(h, mask=None if masks is None else masks[mi])
        h = self._flatten.forward(h)
        h = self._dense.forward(h)
        h = self._dense_relu.forward(h)
        h = self._dense_drop.forward(h, mask=None if masks is None else masks[-1])
        return self._out.forward(h)

    def loss_and_grads(self, x, labels, masks=None, rng=None):
        logits = self.forward(x, dropout=True, cache=True, masks=masks, rng=rng)
        probs = nn.softmax(logits)
        loss = nn.cross_entropy(probs, labels)
        d = nn.softmax_cross_entropy_grad(probs, labels)
        d = self._out.backward(d)
        d = self._dense_drop.backward(d)
        d = self._dense_relu.backward(d)
        d = self._dense.backward(d)
        d = self._flatten.backward(d)
        for bi in range(len(self._blocks) - 1, -1, -1):
            blk = self._blocks[bi]
            d = blk["drop"].backward(d)
            d = blk["relu"].backward(d)
            d = blk["pool"].backward(d)
            d = blk["conv"].backward(d, need_dx=bi > 0)
        return loss, self._gradients()

    def frozen_loss(self, x, labels, masks) -> float:
        """Loss under fixed dropout masks, without caching (for finite differences)."""
        logits = self.forward(x, dropout=True, cache=False, masks=masks)
        return nn.cross_entropy(nn.softmax(logits), labels)

    def sgd_step(self, grads: dict) -> None:
        lr, mu = self.config.learning_rate, self.config.momentum
        params = self.parameters()
        for name, g in grads.items():
            v = self._velocity[name]
            v *= mu
            v -= lr * g
            params[name] += v
        self.steps += 1


# ---- batch conversion -------------------------------------------------------


def _image_array(image) -> np.ndarray:
    return image.pixels if isinstance(image, TextureImage) else np.asarray(image, dtype=np.float64)


def images_to_batch(images: Sequence, config: ClassifierConfig) -> np.ndarray:
    """Stack images into (N, H, W, C), checking against the configured shape."""
    arrs = []
    for im in images:
        a = _image_array(im)
        if a.ndim == 2:
            a = a[:, :, None]
        elif a.ndim != 3:
            raise InputShapeError(f"image has ndim {a.ndim}")
        if a.shape != (config.height, config.width, config.channels):
            raise InputShapeError(
                f"image shape {a.shape} does not match configured "
                f"({config.height}, {config.width}, {config.channels})"
            )
        arrs.append(a)
    return np.stack(arrs)


# ---- spec operations ---------------------------------------------------------


def init_classifier(config: ClassifierConfig, seed: int) -> Classifier:
    """Fresh classifier with fan-in-scaled Gaussian weights; deterministic in seed."""
    return Classifier(config, seed)


def train_epochs(classifier: Classifier, samples, epochs: int, rng, shuffle=True) -> TrainStats:
    """Run ``epochs`` full passes of shuffled mini-batch SGD with momentum.

    Warm-starts from the current parameters. Labels must lie in
    [0, num_classes). Raises NumericalDivergence on a non-finite loss and
    invalidates the classifier.
    """
    if not samples:
        raise ParamError("samples must be nonempty")
    if epochs < 0:
        raise ParamError("epochs must be >= 0")
    cfg = classifier.config
    labels = np.array([int(lbl) for _, lbl in samples])
    if labels.min() < 0 or labels.max() >= cfg.num_classes:
        raise ParamError(f"labels must lie in [0, {cfg.num_classes})")
    x = images_to_batch([im for im, _ in samples], cfg)

    n = len(samples)
    bs = cfg.batch_size
    for _ in range(epochs):
        order = rng.permutation(n) if shuffle else np.arange(n)
        for start in range(0, n, bs):
            sel = order[start : start + bs]
            loss, grads = classifier.loss_and_grads(x[sel], labels[sel], rng=rng)
            if not math.isfinite(loss):
                classifier.valid = False
                raise NumericalDivergence(f"loss became {loss} at step {classifier.steps}")
            classifier.sgd_step(grads)
        classifier.epochs_trained += 1

    probs = nn.softmax(classifier.forward(x, dropout=False))
    final_loss = nn.cross_entropy(probs, labels)
    final_acc = float((probs.argmax(axis=1) == labels).mean())
    return TrainStats(final_loss=final_loss, final_train_accuracy=final_acc)


def predict_proba(classifier: Classifier, images: Sequence) -> np.ndarray:
    """Deterministic (dropout-off) class probabilities, one row per image."""
    x = images_to_batch(images, classifier.config)
    return nn.softmax(classifier.forward(x, dropout=False))


def predict_deterministic(classifier: Classifier, image) -> PredictiveSample:
    """Dropout-off prediction; a pure function of (parameters, image)."""
    return PredictiveSample(predict_proba(classifier, [image])[0])


def predict_mc_probs(classifier: Classifier, images: Sequence, n_mc: int, rng) -> np.ndarray:
    """(n_images, n_mc, num_classes) probabilities under i.i.d. dropout masks.

    Every one of the n_images * n_mc stochastic passes gets its own
    independently sampled masks. Deterministic given the rng state.
    """
    if n_mc < 1:
        raise ParamError("n_mc must be >= 1")
    x = images_to_batch(images, classifier.config)
    probs = nn.softmax(classifier.mc_forward(x, n_mc, rng))
    return probs.reshape(len(images), n_mc, classifier.config.num_classes)


def predict_mc(classifier: Classifier, image, n_mc: int, rng) -> list:
    """n_mc stochastic forward passes on one image, in sampling order."""
    probs = predict_mc_probs(classifier, [image], n_mc, rng)[0]
    return [PredictiveSample(row) for row in probs]


def reference_prediction_from_probs(prob_rows: np.ndarray):
    """Label and mean over per-image probability rows; ties break low."""
    rows = np.asarray(prob_rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise EmptyReference("no probability rows to average")
    mean = rows.mean(axis=0)
    return int(np.argmax(mean)), mean


def predict_reference(classifier: Classifier, ref: ReferenceSet):
    """Average the deterministic predictions over the reference copies.

    Returns (label, mean_probs) where label is the argmax class index with
    ties broken toward the lowest index.
    """
    if ref.n_ref < 1:
        raise EmptyReference("reference set has no images")
    return reference_prediction_from_probs(predict_proba(classifier, ref.images))


def gradient_check(
    classifier: Classifier,
    batch,
    epsilon: float = 1e-5,
    min_coords: int = 200,
    rng=None,
    corrupt_param: Optional[str] = None,
) -> float:
    """Compare analytic gradients against central finite differences.

    Dropout masks are sampled once and frozen for both passes. At least
    ``min_coords`` parameter coordinates are probed, spread over every
    parameter tensor. Returns max |g_a - g_n| / max(|g_a|, |g_n|, 1e-8).

    ``corrupt_param`` negates that tensor's analytic gradient first, as a
    sensitivity hook for the checker itself.
    """
    if not batch:
        raise ParamError("batch must be nonempty")
    if rng is None:
        rng = np.random.default_rng(0)
    cfg = classifier.config
    labels = np.array([int(lbl) for _, lbl in batch])
    x = images_to_batch([im for im, _ in batch], cfg)
    masks = classifier.sample_masks(x.shape[0], rng)

    _, grads = classifier.loss_and_grads(x, labels, masks=masks)
    grads = {k: v.copy() for k, v in grads.items()}
    if corrupt_param is not None:
        if corrupt_param not in grads:
            raise ParamError(f"unknown parameter {corrupt_param!r}")
        grads[corrupt_param] = -grads[corrupt_param]

    params = classifier.parameters()
    per_tensor = max(1, -(-min_coords // len(params)))
    max_err = 0.0
    for name, p in params.items():
        flat = p.reshape(-1)
        k = min(per_tensor, flat.size)
        coords = rng.choice(flat.size, size=k, replace=False)
        ga_flat = grads[name].reshape(-1)
        for c in coords:
            old = flat[c]
            flat[c] = old + epsilon
            up = classifier.frozen_loss(x, labels, masks)
            flat[c] = old - epsilon
            down = classifier.frozen_loss(x, labels, masks)
            flat[c] = old
            gn = (up - down) / (2.0 * epsilon)
            ga = ga_flat[c]
            err = abs(ga - gn) / max(abs(ga), abs(gn), 1e-8)
            if err > max_err:
                max_err = err
    return float(max_err)


# ---- checkpointing ------------------------------------------------------------


def save_classifier(classifier: Classifier, path) -> None:
    """Write config + every parameter and momentum tensor; round-trips bit-exactly."""
    meta = {
        "config": {**vars(classifier.config), "conv_channels": list(classifier.config.conv_channels)},
        "steps": classifier.steps,
        "epochs_trained": classifier.epochs_trained,
        "valid": classifier.valid,
    }
    arrays = {}
    for name, p in classifier.parameters().items():
        arrays["param/" + name] = p
        arrays["vel/" + name] = classifier._velocity[name]
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
                 **arrays)


def load_classifier(path) -> Classifier:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        cfg_dict = dict(meta["config"])
        cfg_dict["conv_channels"] = tuple(cfg_dict["conv_channels"])
        clf = Classifier(ClassifierConfig(**cfg_dict), seed=0)
        for name in clf.parameters():
            clf._set_parameter(name, data["param/" + name])
            clf._velocity[name][...] = data["vel/" + name]
        clf.steps = int(meta["steps"])
        clf.epochs_trained = int(meta["epochs_trained"])
        clf.valid = bool(meta["valid"])
    return clf
