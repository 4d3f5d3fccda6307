"""Procedural garment-glyph corpus: the desk-scale training/eval stand-in.

Eight clothing silhouettes are drawn as filled polygons with per-image
jitter in position, scale, rotation, garment hue, and background shade.
Class identity lives in the *shape*; color varies freely within a class, so
raw-pixel similarity is a weak baseline while shape-sensitive features can
separate the classes. Generation is fully seeded.
"""

from __future__ import annotations

import colorsys
import math
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageDraw

CLASS_NAMES = ("dress", "tshirt", "pants", "skirt", "coat", "hat", "bag", "boot")


@dataclass(frozen=True)
class LabeledImage:
    item_id: str
    path: str
    class_label: str


def _polys_dress(j):
    bodice = [(0.38, 0.10), (0.62, 0.10), (0.58, 0.38), (0.42, 0.38)]
    flare = 0.16 + 0.10 * j
    skirt = [(0.42, 0.38), (0.58, 0.38), (0.70 + flare / 2, 0.90), (0.30 - flare / 2, 0.90)]
    return [bodice, skirt]


def _polys_tshirt(j):
    sleeve = 0.12 + 0.06 * j
    body = [(0.34, 0.22), (0.66, 0.22), (0.66, 0.80), (0.34, 0.80)]
    left = [(0.34, 0.22), (0.34 - sleeve, 0.30), (0.34 - sleeve + 0.04, 0.48), (0.34, 0.40)]
    right = [(0.66, 0.22), (0.66 + sleeve, 0.30), (0.66 + sleeve - 0.04, 0.48), (0.66, 0.40)]
    return [body, left, right]


def _polys_pants(j):
    gap = 0.05 + 0.04 * j
    waist = [(0.36, 0.10), (0.64, 0.10), (0.64, 0.30), (0.36, 0.30)]
    leg_l = [(0.36, 0.30), (0.50 - gap / 2, 0.30), (0.47 - gap / 2, 0.92), (0.36, 0.92)]
    leg_r = [(0.50 + gap / 2, 0.30), (0.64, 0.30), (0.64, 0.92), (0.53 + gap / 2, 0.92)]
    return [waist, leg_l, leg_r]


def _polys_skirt(j):
    flare = 0.18 + 0.12 * j
    return [[(0.40, 0.18), (0.60, 0.18), (0.62 + flare, 0.78), (0.38 - flare, 0.78)]]


def _polys_coat(j):
    length = 0.84 + 0.06 * j
    left = [(0.30, 0.12), (0.48, 0.12), (0.48, length), (0.30, length)]
    right = [(0.52, 0.12), (0.70, 0.12), (0.70, length), (0.52, length)]
    collar = [(0.42, 0.06), (0.58, 0.06), (0.62, 0.16), (0.38, 0.16)]
    return [left, right, collar]


def _polys_hat(j):
    brim_w = 0.30 + 0.08 * j
    brim = [(0.50 - brim_w, 0.58), (0.50 + brim_w, 0.58), (0.50 + brim_w, 0.66),
            (0.50 - brim_w, 0.66)]
    dome = [(0.36, 0.58), (0.40, 0.30), (0.60, 0.30), (0.64, 0.58)]
    return [brim, dome]


def _polys_bag(j):
    depth = 0.34 + 0.08 * j
    body = [(0.28, 0.42), (0.72, 0.42), (0.68, 0.42 + depth + 0.18), (0.32, 0.42 + depth + 0.18)]
    handle = [(0.38, 0.42), (0.40, 0.22), (0.60, 0.22), (0.62, 0.42),
              (0.56, 0.42), (0.55, 0.28), (0.45, 0.28), (0.44, 0.42)]
    return [body, handle]


def _polys_boot(j):
    toe = 0.18 + 0.08 * j
    shaft = [(0.38, 0.12), (0.58, 0.12), (0.58, 0.62), (0.38, 0.62)]
    foot = [(0.38, 0.62), (0.58, 0.62), (0.58 + toe, 0.74), (0.58 + toe, 0.88), (0.38, 0.88)]
    return [shaft, foot]


_SHAPES = {
    "dress": _polys_dress,
    "tshirt": _polys_tshirt,
    "pants": _polys_pants,
    "skirt": _polys_skirt,
    "coat": _polys_coat,
    "hat": _polys_hat,
    "bag": _polys_bag,
    "boot": _polys_boot,
}


def _hsv255(h, s, v):
    r, g, b = colorsys.hsv_to_rgb(h % 1.0, min(1.0, s), min(1.0, v))
    return int(r * 255), int(g * 255), int(b * 255)


def _gradient_background(rng: np.random.Generator, size: int) -> Image.Image:
    """Smooth two-color gradient at a random orientation: large nuisance
    variance for raw-pixel distances, trivially learnable for a
    transposed-convolution generator."""
    a = np.array(_hsv255(rng.uniform(0, 1), rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.5)))
    b = np.array(_hsv255(rng.uniform(0, 1), rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.6)))
    theta = rng.uniform(0, 2 * math.pi)
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64) / (size - 1)
    t = (xs * math.cos(theta) + ys * math.sin(theta) + 1.0) / 2.0
    field = a[None, None, :] * (1 - t[..., None]) + b[None, None, :] * t[..., None]
    return Image.fromarray(field.astype(np.uint8), "RGB")


def render_glyph(class_label: str, rng: np.random.Generator, size: int = 64) -> Image.Image:
    """One jittered instance of a silhouette class.

    Gradient backgrounds plus position/scale/rotation jitter and free
    garment color keep raw-pixel distances weak while the silhouette stays
    class-distinctive."""
    img = _gradient_background(rng, size)
    top = _hsv255(rng.uniform(0, 1), rng.uniform(0.55, 0.95), rng.uniform(0.45, 0.95))
    draw = ImageDraw.Draw(img)

    scale = rng.uniform(0.55, 1.05)
    angle = math.radians(rng.uniform(-25, 25))
    dx = rng.uniform(-0.17, 0.17)
    dy = rng.uniform(-0.17, 0.17)
    shape_jitter = rng.uniform(0, 1)
    cos_a, sin_a = math.cos(angle), math.sin(angle)

    for poly in _SHAPES[class_label](shape_jitter):
        pts = []
        for (x, y) in poly:
            # center, scale, rotate, translate, back to pixel coords
            cx, cy = (x - 0.5) * scale, (y - 0.5) * scale
            rx = cx * cos_a - cy * sin_a + 0.5 + dx
            ry = cx * sin_a + cy * cos_a + 0.5 + dy
            pts.append((rx * size, ry * size))
        draw.polygon(pts, fill=top)
    return img


def generate_corpus(
    out_dir: str,
    classes: int = 8,
    per_class: int = 250,
    rng_seed: int = 0,
    size: int = 64,
) -> list[LabeledImage]:
    """Write <out_dir>/<class>/<idx>.png for each sample; returns the listing."""
    if not 1 <= classes <= len(CLASS_NAMES):
        raise ValueError(f"classes must be in 1..{len(CLASS_NAMES)}")
    rng = np.random.default_rng(rng_seed)
    items: list[LabeledImage] = []
    for cls in CLASS_NAMES[:classes]:
        cls_dir = os.path.join(out_dir, cls)
        os.makedirs(cls_dir, exist_ok=True)
        for i in range(per_class):
            img = render_glyph(cls, rng, size)
            path = os.path.join(cls_dir, f"{i:04d}.png")
            img.save(path, format="PNG")
            items.append(LabeledImage(f"{cls}/{i:04d}", path, cls))
    return items


def list_corpus(corpus_dir: str) -> list[LabeledImage]:
    """Read back a generated corpus directory (class subdirs of images)."""
    items: list[LabeledImage] = []
    for cls in sorted(os.listdir(corpus_dir)):
        cls_dir = os.path.join(corpus_dir, cls)
        if not os.path.isdir(cls_dir):
            continue
        for fname in sorted(os.listdir(cls_dir)):
            if fname.lower().endswith((".png", ".jpg", ".jpeg")):
                stem = os.path.splitext(fname)[0]
                items.append(LabeledImage(f"{cls}/{stem}", os.path.join(cls_dir, fname), cls))
    return items
