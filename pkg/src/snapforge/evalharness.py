"""Offline retrieval benchmark: stratified query/gallery split, precision@k,
inference-time and model-size reporting.

A retrieved item is relevant when it shares the query's class label. The
harness is embedder-agnostic: anything with embed_decoded/embed_batch, a
name, a dim, and model_size_bytes runs through the identical ranking and
metric path, so the discriminator features and the raw-pixel baseline are
compared fairly. Gallery embedding is batched; per-query embedding is timed
individually (decode excluded, preprocess + forward + normalize included).
"""

from __future__ import annotations

import json
import statistics
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from snapforge.gan.corpus import LabeledImage as LabeledItem
from snapforge.vectorindex import EmbeddingEntry, VectorCollection


class EvalError(Exception):
    pass


@dataclass
class EvalReport:
    embedder: str
    model_size_bytes: int
    precision_at: dict[int, float]
    mean_inference_secs: float
    median_inference_secs: float
    query_count: int
    gallery_count: int
    failures: int = 0

    def to_dict(self) -> dict:
        return {
            "embedder": self.embedder,
            "model_size_bytes": self.model_size_bytes,
            "precision_at": {str(k): v for k, v in self.precision_at.items()},
            "mean_inference_secs": self.mean_inference_secs,
            "median_inference_secs": self.median_inference_secs,
            "query_count": self.query_count,
            "gallery_count": self.gallery_count,
            "failures": self.failures,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            embedder=d["embedder"],
            model_size_bytes=d["model_size_bytes"],
            precision_at={int(k): v for k, v in d["precision_at"].items()},
            mean_inference_secs=d["mean_inference_secs"],
            median_inference_secs=d["median_inference_secs"],
            query_count=d["query_count"],
            gallery_count=d["gallery_count"],
            failures=d.get("failures", 0),
        )


def split(
    corpus: list[LabeledItem], query_fraction: float, rng_seed: int
) -> tuple[list[LabeledItem], list[LabeledItem]]:
    """Disjoint stratified split; every query class keeps >= 1 gallery item."""
    if not 0 < query_fraction < 1:
        raise ValueError("query_fraction must be in (0, 1)")
    by_class: dict[str, list[LabeledItem]] = {}
    for item in corpus:
        by_class.setdefault(item.class_label, []).append(item)
    for cls, items in by_class.items():
        if len(items) < 2:
            raise ValueError(f"class {cls!r} has {len(items)} item(s); need >= 2")
    rng = np.random.default_rng(rng_seed)
    queries: list[LabeledItem] = []
    gallery: list[LabeledItem] = []
    for cls in sorted(by_class):
        items = sorted(by_class[cls], key=lambda it: it.item_id)
        order = rng.permutation(len(items))
        n_q = min(len(items) - 1, max(1, round(len(items) * query_fraction)))
        for pos, idx in enumerate(order):
            (queries if pos < n_q else gallery).append(items[idx])
    return queries, gallery


def precision_at_k(retrieved, query_label: str, k: int) -> float:
    """Fraction of the top-min(k, len) retrieved items sharing query_label.

    Accepts items carrying class_label or bare label strings; an empty list
    scores 0 with a warning.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    labels = [getattr(item, "class_label", item) for item in retrieved]
    if not labels:
        warnings.warn("precision_at_k over empty retrieval defined as 0", stacklevel=2)
        return 0.0
    top = labels[: min(k, len(labels))]
    return sum(1 for lab in top if lab == query_label) / len(top)


def _decode(path: str) -> Image.Image:
    img = Image.open(path)
    img.load()
    return img.convert("RGB")


def run_benchmark(
    embedder,
    queries: list[LabeledItem],
    gallery: list[LabeledItem],
    k_list: tuple[int, ...] = (1, 5, 10),
    batch_size: int = 64,
) -> EvalReport:
    """Embed the gallery into a fresh collection, flat-search every query,
    average precision@k, and record per-image inference time.

    Queries never enter the gallery collection, so there is no self-match.
    More than 1% embedding failures aborts the run.
    """
    if not gallery:
        raise EvalError("gallery is empty")
    coll = VectorCollection("bench", embedder.dim)
    failures = 0
    label_of: dict[str, str] = {}
    for start in range(0, len(gallery), batch_size):
        chunk = gallery[start : start + batch_size]
        imgs, kept = [], []
        for item in chunk:
            try:
                imgs.append(_decode(item.path))
                kept.append(item)
            except Exception:
                failures += 1
        if not imgs:
            continue
        vectors = embedder.embed_batch(imgs)
        for item, vec in zip(kept, vectors):
            coll.insert(EmbeddingEntry(item.item_id, item.item_id, 0, vec, item.class_label))
            label_of[item.item_id] = item.class_label

    k_max = max(k_list)
    sums = {k: 0.0 for k in k_list}
    times: list[float] = []
    scored = 0
    for item in queries:
        try:
            img = _decode(item.path)
        except Exception:
            failures += 1
            continue
        t0 = time.perf_counter()
        vec = embedder.embed_decoded(img)
        times.append(time.perf_counter() - t0)
        hits = coll.search_flat(vec, k=k_max)
        labels = [label_of[h.entry_id] for h in hits]
        for k in k_list:
            sums[k] += precision_at_k(labels, item.class_label, k)
        scored += 1
    total = len(queries) + len(gallery)
    if failures > 0.01 * total:
        raise EvalError(f"{failures} embedding failures out of {total} images (> 1%)")
    if scored == 0:
        raise EvalError("no queries could be embedded")
    return EvalReport(
        embedder=embedder.name,
        model_size_bytes=embedder.model_size_bytes,
        precision_at={k: sums[k] / scored for k in k_list},
        mean_inference_secs=float(np.mean(times)),
        median_inference_secs=float(statistics.median(times)),
        query_count=scored,
        gallery_count=len(coll),
        failures=failures,
    )


def brute_force_mean_precision(
    query_vectors: np.ndarray,
    query_labels: list[str],
    gallery_vectors: np.ndarray,
    gallery_labels: list[str],
    gallery_ids: list[str],
    k: int,
) -> float:
    """Independent all-pairs oracle: no vector index involved; per-query
    python loop over squared distances with (distance, id) ordering."""
    total = 0.0
    for qv, qlab in zip(query_vectors, query_labels):
        scored = []
        for gv, gid, glab in zip(gallery_vectors, gallery_ids, gallery_labels):
            diff = gv.astype(np.float64) - qv.astype(np.float64)
            scored.append((float(np.einsum("i,i->", diff, diff)), gid, glab))
        scored.sort(key=lambda s: (s[0], s[1]))
        top = scored[: min(k, len(scored))]
        total += sum(1 for _, _, glab in top if glab == qlab) / len(top)
    return total / len(query_labels)


def report_table(reports: list[EvalReport]) -> tuple[str, str]:
    """Render the comparison table (Size / Inference Time / Precision) and a
    machine-readable JSON document; returns (table_text, json_text)."""
    k_cols: list[int] = sorted({k for r in reports for k in r.precision_at})
    headers = ["Model", "Size (MB)", "Inference Time (Second)"] + [
        f"Precision@{k} (%)" for k in k_cols
    ]
    rows = [headers]
    for r in reports:
        rows.append(
            [
                r.embedder,
                f"{r.model_size_bytes / 1e6:.2f}",
                f"{r.median_inference_secs:.4f}",
            ]
            + [
                f"{100 * r.precision_at[k]:.1f}" if k in r.precision_at else "-"
                for k in k_cols
            ]
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(headers))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)))
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    table = "\n".join(lines)
    blob = json.dumps([r.to_dict() for r in reports], indent=2)
    return table, blob
