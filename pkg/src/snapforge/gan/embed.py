"""Image preprocessing, region detection, and embedding extraction.

The embedding of an image region is the flattened activation entering the
discriminator's final convolution (8192 elements at the default geometry),
L2-normalized. Region detection is pluggable: the default detector passes
the whole image through; a file-backed detector replays externally produced
bounding boxes so a real detector's output can be used without bundling one.
"""

from __future__ import annotations

import io
import json
import logging
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from snapforge.gan.network import DcganParams, discriminator_forward

logger = logging.getLogger(__name__)


class EmbeddingError(Exception):
    """Undecodable image or degenerate feature vector."""


@dataclass(frozen=True)
class Region:
    x: int
    y: int
    w: int
    h: int
    class_label: str = "whole"
    confidence: float = 1.0


@dataclass(frozen=True)
class Embedding:
    vector: np.ndarray  # unit-norm float32
    region: Region


def decode_image(image_bytes: bytes) -> Image.Image:
    try:
        img = Image.open(io.BytesIO(image_bytes))
        img.load()
    except Exception as e:
        raise EmbeddingError(f"undecodable image: {e}") from e
    return img.convert("RGB")


def preprocess_pil(img: Image.Image, size: int = 64) -> np.ndarray:
    """Resize shorter side to `size`, center-crop, scale to [-1, 1] CHW."""
    w, h = img.size
    if w < h:
        nw, nh = size, max(size, round(h * size / w))
    else:
        nw, nh = max(size, round(w * size / h)), size
    img = img.resize((nw, nh), Image.BILINEAR)
    left = (nw - size) // 2
    top = (nh - size) // 2
    img = img.crop((left, top, left + size, top + size))
    arr = np.asarray(img, dtype=np.float32).transpose(2, 0, 1)
    return arr / 127.5 - 1.0


def preprocess(image_bytes: bytes, size: int = 64) -> np.ndarray:
    """decode -> resize -> center-crop -> [-1, 1]; raises EmbeddingError."""
    return preprocess_pil(decode_image(image_bytes), size)


def normalize(vector: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vector.astype(np.float64)))
    if not np.isfinite(norm) or norm < 1e-12:
        raise EmbeddingError("degenerate feature vector (zero or non-finite norm)")
    return (vector.astype(np.float64) / norm).astype(np.float32)


class WholeImageDetector:
    """Fallback detector: one region covering the whole image."""

    name = "whole-image"

    def detect(self, img: Image.Image, key: str | None = None) -> list[Region]:
        w, h = img.size
        return [Region(0, 0, w, h)]


class FileRegionDetector:
    """Replays detections from a JSON file: {key: [{bbox, class_label, confidence}]}.

    Keys are the basename of the image URL/path handed to detect().
    """

    name = "file-replay"

    def __init__(self, path: str):
        with open(path, encoding="utf-8") as f:
            self._regions = json.load(f)

    def detect(self, img: Image.Image, key: str | None = None) -> list[Region]:
        entries = self._regions.get(os.path.basename(key or ""), [])
        out = []
        w, h = img.size
        for e in entries:
            x, y, bw, bh = e["bbox"]
            x, y = max(0, int(x)), max(0, int(y))
            bw, bh = min(int(bw), w - x), min(int(bh), h - y)
            if bw > 0 and bh > 0:
                out.append(Region(x, y, bw, bh, e.get("class_label", "unknown"),
                                  float(e.get("confidence", 1.0))))
        return out


def extract_embedding(
    params: DcganParams,
    image_bytes: bytes,
    detector=None,
    key: str | None = None,
) -> list[Embedding]:
    """One normalized embedding per detected region (whole image when the
    detector yields nothing or fails)."""
    img = decode_image(image_bytes)
    whole = WholeImageDetector()
    if detector is None:
        detector = whole
    try:
        regions = detector.detect(img, key)
    except Exception:
        logger.warning("region detector failed for %s; falling back to whole image", key)
        regions = []
    if not regions:
        regions = whole.detect(img, key)
    size = params.config.image_size
    batch = np.stack(
        [preprocess_pil(img.crop((r.x, r.y, r.x + r.w, r.y + r.h)), size) for r in regions]
    )
    _, _, features = discriminator_forward(params, batch.astype(params.config.np_dtype))
    return [Embedding(normalize(features[i]), r) for i, r in enumerate(regions)]


class DcganEmbedder:
    """Benchmark/service adapter around trained discriminator features."""

    name = "dcgan-discriminator"

    def __init__(self, params: DcganParams, model_path: str | None = None):
        self.params = params
        self.model_size_bytes = (
            os.path.getsize(model_path) if model_path else params.nbytes()
        )

    @property
    def dim(self) -> int:
        return self.params.config.feature_dim

    def embed_decoded(self, img: Image.Image) -> np.ndarray:
        """Preprocess + forward + normalize (the timed inference path)."""
        x = preprocess_pil(img, self.params.config.image_size)[None]
        _, _, features = discriminator_forward(self.params, x.astype(self.params.config.np_dtype))
        return normalize(features[0])

    def embed_batch(self, imgs: list[Image.Image]) -> np.ndarray:
        size = self.params.config.image_size
        x = np.stack([preprocess_pil(im, size) for im in imgs])
        _, _, features = discriminator_forward(self.params, x.astype(self.params.config.np_dtype))
        return np.stack([normalize(f) for f in features])

    def embed_bytes(self, image_bytes: bytes) -> np.ndarray:
        return self.embed_decoded(decode_image(image_bytes))


class PixelEmbedder:
    """Raw-pixel baseline: the preprocessed image flattened, truncated or
    zero-padded to the collection dimension, then normalized."""

    name = "raw-pixels"
    model_size_bytes = 0

    def __init__(self, dim: int = 8192, image_size: int = 64):
        self.dim = dim
        self.image_size = image_size

    def embed_decoded(self, img: Image.Image) -> np.ndarray:
        flat = preprocess_pil(img, self.image_size).reshape(-1)
        if flat.shape[0] >= self.dim:
            flat = flat[: self.dim]
        else:
            flat = np.pad(flat, (0, self.dim - flat.shape[0]))
        return normalize(flat)

    def embed_batch(self, imgs: list[Image.Image]) -> np.ndarray:
        return np.stack([self.embed_decoded(im) for im in imgs])

    def embed_bytes(self, image_bytes: bytes) -> np.ndarray:
        return self.embed_decoded(decode_image(image_bytes))
