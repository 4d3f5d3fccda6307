"""DCGAN generator/discriminator: parameter container, forwards, persistence.

Discriminator: strided 4x4 convolutions halving the spatial size each block
(batch norm from the second block, LeakyReLU 0.2 throughout), mapping
(C, S, S) down to (disc_channels[-1], S', S'), then a final valid
convolution to a scalar logit. The flattened activation entering that final
convolution is the image embedding; at the default geometry it has
512*4*4 = 8192 elements.

Generator: a latent vector is projected to a 4x4 volume by a transposed
convolution, upsampled by stride-2 transposed-convolution blocks (batch
norm + ReLU), and mapped to the image by a final transposed convolution
under tanh, so outputs live in [-1, 1].
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from snapforge.gan import layers as L


class ModelFormatError(Exception):
    """Corrupted, truncated, or mismatched parameter file."""


MAGIC = b"SNAPGAN1"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class GanConfig:
    nz: int = 100
    image_size: int = 64
    image_channels: int = 3
    gen_channels: tuple = (512, 256, 128, 64)
    disc_channels: tuple = (64, 128, 256, 512)
    dtype: str = "float32"

    def __post_init__(self):
        s = self.image_size >> len(self.disc_channels)
        if s < 1 or self.image_size != s << len(self.disc_channels):
            raise ValueError(
                f"image_size {self.image_size} not divisible into "
                f"{len(self.disc_channels)} stride-2 blocks"
            )
        base = 4 << (len(self.gen_channels) - 1)
        if base not in (self.image_size, self.image_size // 2):
            raise ValueError(
                f"{len(self.gen_channels)} generator blocks reach {base}, "
                f"cannot hit image_size {self.image_size}"
            )

    @property
    def disc_final_spatial(self) -> int:
        return self.image_size >> len(self.disc_channels)

    @property
    def feature_dim(self) -> int:
        return self.disc_channels[-1] * self.disc_final_spatial**2

    @property
    def gen_output_doubles(self) -> bool:
        """Whether the generator's output layer is the stride-2 kind."""
        return (4 << (len(self.gen_channels) - 1)) == self.image_size // 2

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)


@dataclass
class DcganParams:
    """All weights and batch-norm running statistics, keyed by stable names."""

    config: GanConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def trainable_names(self) -> list[str]:
        return [n for n in self.tensors if "running_" not in n]

    def copy(self) -> "DcganParams":
        return DcganParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def nbytes(self) -> int:
        return sum(t.nbytes for t in self.tensors.values())


def _tensor_layout(config: GanConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Names and shapes in canonical (file) order."""
    out: list[tuple[str, tuple[int, ...]]] = []
    c_in = config.image_channels
    for i, c_out in enumerate(config.disc_channels):
        out.append((f"disc.{i}.conv.w", (c_out, c_in, 4, 4)))
        out.append((f"disc.{i}.conv.b", (c_out,)))
        if i > 0:
            for stat in ("gamma", "beta", "running_mean", "running_var"):
                out.append((f"disc.{i}.bn.{stat}", (c_out,)))
        c_in = c_out
    k = config.disc_final_spatial
    out.append(("disc.out.conv.w", (1, c_in, k, k)))
    out.append(("disc.out.conv.b", (1,)))

    c_in = config.nz
    for i, c_out in enumerate(config.gen_channels):
        out.append((f"gen.{i}.convt.w", (c_in, c_out, 4, 4)))
        out.append((f"gen.{i}.convt.b", (c_out,)))
        for stat in ("gamma", "beta", "running_mean", "running_var"):
            out.append((f"gen.{i}.bn.{stat}", (c_out,)))
        c_in = c_out
    k = 4 if config.gen_output_doubles else 3
    out.append(("gen.out.convt.w", (c_in, config.image_channels, k, k)))
    out.append(("gen.out.convt.b", (config.image_channels,)))
    return out


def init_params(rng_seed: int, config: GanConfig | None = None) -> DcganParams:
    """Conv weights ~ N(0, 0.02); batch-norm scale ~ N(1, 0.02); biases zero."""
    config = config or GanConfig()
    rng = np.random.default_rng(rng_seed)
    dt = config.np_dtype
    tensors: dict[str, np.ndarray] = {}
    for name, shape in _tensor_layout(config):
        if name.endswith((".conv.w", ".convt.w")):
            tensors[name] = rng.normal(0.0, 0.02, size=shape).astype(dt)
        elif name.endswith(".gamma"):
            tensors[name] = rng.normal(1.0, 0.02, size=shape).astype(dt)
        elif name.endswith(".running_var"):
            tensors[name] = np.ones(shape, dtype=dt)
        else:  # biases, beta, running_mean
            tensors[name] = np.zeros(shape, dtype=dt)
    return DcganParams(config, tensors)


# -- discriminator --------------------------------------------------------------


def discriminator_forward(
    params: DcganParams, x: np.ndarray, train: bool = False, want_cache: bool = False
):
    """Returns (logits (N,), probs (N,), features (N, feature_dim)[, cache])."""
    cfg = params.config
    t = params.tensors
    if x.shape[1:] != (cfg.image_channels, cfg.image_size, cfg.image_size):
        raise ValueError(f"discriminator input shape {x.shape[1:]} != "
                         f"{(cfg.image_channels, cfg.image_size, cfg.image_size)}")
    h = x.astype(cfg.np_dtype, copy=False)
    caches = []
    for i in range(len(cfg.disc_channels)):
        h, c_conv = L.conv2d_forward(h, t[f"disc.{i}.conv.w"], t[f"disc.{i}.conv.b"], 2, 1)
        c_bn = None
        if i > 0:
            h, c_bn = L.batchnorm_forward(
                h,
                t[f"disc.{i}.bn.gamma"],
                t[f"disc.{i}.bn.beta"],
                t[f"disc.{i}.bn.running_mean"],
                t[f"disc.{i}.bn.running_var"],
                train,
            )
        h, c_act = L.leaky_relu_forward(h, 0.2)
        caches.append((c_conv, c_bn, c_act))
    features = h.reshape(h.shape[0], -1)
    logits4, c_out = L.conv2d_forward(h, t["disc.out.conv.w"], t["disc.out.conv.b"], 1, 0)
    logits = logits4.reshape(-1)
    probs = L.sigmoid(logits)
    if want_cache:
        return logits, probs, features, (caches, c_out, h.shape)
    return logits, probs, features


def discriminator_backward(params: DcganParams, dlogits: np.ndarray, cache):
    """Gradients of a scalar loss wrt all discriminator tensors and the input."""
    cfg = params.config
    caches, c_out, h_shape = cache
    grads: dict[str, np.ndarray] = {}
    dy = dlogits.reshape(-1, 1, 1, 1).astype(cfg.np_dtype, copy=False)
    dh, grads["disc.out.conv.w"], grads["disc.out.conv.b"] = L.conv2d_backward(dy, c_out)
    for i in reversed(range(len(cfg.disc_channels))):
        c_conv, c_bn, c_act = caches[i]
        dh = L.leaky_relu_backward(dh, c_act)
        if c_bn is not None:
            dh, grads[f"disc.{i}.bn.gamma"], grads[f"disc.{i}.bn.beta"] = L.batchnorm_backward(
                dh, c_bn
            )
        dh, grads[f"disc.{i}.conv.w"], grads[f"disc.{i}.conv.b"] = L.conv2d_backward(dh, c_conv)
    return grads, dh


# -- generator --------------------------------------------------------------------


def generator_forward(
    params: DcganParams, z: np.ndarray, train: bool = False, want_cache: bool = False
):
    """Maps (N, nz) latents to (N, C, S, S) images in [-1, 1]."""
    cfg = params.config
    t = params.tensors
    z = np.asarray(z, dtype=cfg.np_dtype)
    if z.ndim != 2 or z.shape[1] != cfg.nz:
        raise ValueError(f"latent batch must be (N, {cfg.nz}), got {z.shape}")
    h = z.reshape(z.shape[0], cfg.nz, 1, 1)
    caches = []
    for i in range(len(cfg.gen_channels)):
        stride, pad = (1, 0) if i == 0 else (2, 1)
        h, c_conv = L.conv_transpose2d_forward(
            h, t[f"gen.{i}.convt.w"], t[f"gen.{i}.convt.b"], stride, pad
        )
        h, c_bn = L.batchnorm_forward(
            h,
            t[f"gen.{i}.bn.gamma"],
            t[f"gen.{i}.bn.beta"],
            t[f"gen.{i}.bn.running_mean"],
            t[f"gen.{i}.bn.running_var"],
            train,
        )
        h, c_act = L.relu_forward(h)
        caches.append((c_conv, c_bn, c_act))
    stride, pad = (2, 1) if cfg.gen_output_doubles else (1, 1)
    h, c_out = L.conv_transpose2d_forward(
        h, t["gen.out.convt.w"], t["gen.out.convt.b"], stride, pad
    )
    y, c_tanh = L.tanh_forward(h)
    if want_cache:
        return y, (caches, c_out, c_tanh)
    return y


def generator_backward(params: DcganParams, dimages: np.ndarray, cache):
    cfg = params.config
    caches, c_out, c_tanh = cache
    grads: dict[str, np.ndarray] = {}
    dh = L.tanh_backward(dimages.astype(cfg.np_dtype, copy=False), c_tanh)
    dh, grads["gen.out.convt.w"], grads["gen.out.convt.b"] = L.conv_transpose2d_backward(
        dh, c_out
    )
    for i in reversed(range(len(cfg.gen_channels))):
        c_conv, c_bn, c_act = caches[i]
        dh = L.relu_backward(dh, c_act)
        dh, grads[f"gen.{i}.bn.gamma"], grads[f"gen.{i}.bn.beta"] = L.batchnorm_backward(dh, c_bn)
        dh, grads[f"gen.{i}.convt.w"], grads[f"gen.{i}.convt.b"] = L.conv_transpose2d_backward(
            dh, c_conv
        )
    return grads, dh


# -- persistence ----------------------------------------------------------------------


def save_params(params: DcganParams, path: str) -> None:
    """Magic + version + JSON manifest (config, tensor shapes) + raw LE data."""
    manifest = {
        "version": FORMAT_VERSION,
        "config": asdict(params.config),
        "tensors": [
            [name, list(params.tensors[name].shape), str(params.tensors[name].dtype)]
            for name, _ in _tensor_layout(params.config)
        ],
    }
    blob = json.dumps(manifest).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name, _ in _tensor_layout(params.config):
            arr = params.tensors[name]
            f.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def load_params(path: str) -> DcganParams:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != MAGIC:
            raise ModelFormatError(f"bad magic {magic!r}")
        raw_len = f.read(4)
        if len(raw_len) != 4:
            raise ModelFormatError("truncated header")
        (blob_len,) = struct.unpack("<I", raw_len)
        blob = f.read(blob_len)
        if len(blob) != blob_len:
            raise ModelFormatError("truncated manifest")
        try:
            manifest = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise ModelFormatError(f"unreadable manifest: {e}") from e
        if manifest.get("version") != FORMAT_VERSION:
            raise ModelFormatError(f"unsupported format version {manifest.get('version')!r}")
        cfg_dict = dict(manifest["config"])
        cfg_dict["gen_channels"] = tuple(cfg_dict["gen_channels"])
        cfg_dict["disc_channels"] = tuple(cfg_dict["disc_channels"])
        try:
            config = GanConfig(**cfg_dict)
        except (TypeError, ValueError) as e:
            raise ModelFormatError(f"bad config in manifest: {e}") from e
        expected = _tensor_layout(config)
        listed = [(n, tuple(s)) for n, s, _ in manifest["tensors"]]
        if listed != expected:
            raise ModelFormatError("tensor manifest does not match the declared architecture")
        tensors: dict[str, np.ndarray] = {}
        for name, shape, dtype in manifest["tensors"]:
            count = int(np.prod(shape))
            dt = np.dtype(dtype).newbyteorder("<")
            data = f.read(count * dt.itemsize)
            if len(data) != count * dt.itemsize:
                raise ModelFormatError(f"truncated tensor data at {name!r}")
            tensors[name] = np.frombuffer(data, dtype=dt).reshape(shape).astype(np.dtype(dtype))
        if f.read(1):
            raise ModelFormatError("trailing bytes after tensor data")
    return DcganParams(config, tensors)
