"""Trainable projection heads applied on top of frozen embeddings.

Two architectures: an affine map Wx+b (the default; with P=D it admits an
exact identity initialization, so an untrained head reproduces the
prototype-averaging baseline) and a one-hidden-layer ReLU MLP
W2*relu(W1x+b1)+b2. Parameters are float64.

Checkpoint format FSHD: magic "FSHD1\\0", then little-endian u32
architecture tag (0=affine, 1=mlp_one_hidden), u32 D, u32 P, u32 H (0 for
affine), followed by the architecture's parameters as f64 LE in declared
order: affine writes W row-major then b; the MLP writes W1, b1, W2, b2.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FileFormatError

HEAD_MAGIC = b"FSHD1\x00"
_HEAD_HEADER = struct.Struct("<IIII")  # tag, D, P, H


class HeadKind(enum.Enum):
    AFFINE = "affine"
    MLP_ONE_HIDDEN = "mlp_one_hidden"


_KIND_TAGS = {HeadKind.AFFINE: 0, HeadKind.MLP_ONE_HIDDEN: 1}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}

# parameter blocks per architecture, in checkpoint order, with shape builders
_PARAM_SHAPES = {
    HeadKind.AFFINE: lambda d, p, h: {"weight": (p, d), "bias": (p,)},
    HeadKind.MLP_ONE_HIDDEN: lambda d, p, h: {
        "w1": (h, d),
        "b1": (h,),
        "w2": (p, h),
        "b2": (p,),
    },
}


@dataclass
class ProjectionHead:
    """The trainable map applied to frozen embeddings before prototype math."""

    input_dim: int
    output_dim: int
    kind: HeadKind
    hidden_dim: int
    params: dict[str, np.ndarray]

    def __post_init__(self):
        expected = _PARAM_SHAPES[self.kind](
            self.input_dim, self.output_dim, self.hidden_dim
        )
        if set(self.params) != set(expected):
            raise ValueError(
                f"head parameters {sorted(self.params)} do not match "
                f"{self.kind.value} blocks {sorted(expected)}"
            )
        clean = {}
        for name, shape in expected.items():
            arr = np.ascontiguousarray(self.params[name], dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(
                    f"parameter {name} has shape {arr.shape}, expected {shape}"
                )
            if not np.isfinite(arr).all():
                raise ValueError(f"parameter {name} contains non-finite values")
            clean[name] = arr
        self.params = clean

    # -- constructors --------------------------------------------------------

    @classmethod
    def affine(cls, weight: np.ndarray, bias: np.ndarray) -> "ProjectionHead":
        weight = np.asarray(weight, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        p, d = weight.shape
        return cls(d, p, HeadKind.AFFINE, 0, {"weight": weight, "bias": bias})

    @classmethod
    def identity(cls, dim: int) -> "ProjectionHead":
        """Affine head with W=I, b=0; forwards inputs unchanged."""
        return cls.affine(np.eye(dim), np.zeros(dim))

    @classmethod
    def mlp_one_hidden(
        cls, w1: np.ndarray, b1: np.ndarray, w2: np.ndarray, b2: np.ndarray
    ) -> "ProjectionHead":
        w1 = np.asarray(w1, dtype=np.float64)
        w2 = np.asarray(w2, dtype=np.float64)
        h, d = w1.shape
        p = w2.shape[0]
        return cls(
            d, p, HeadKind.MLP_ONE_HIDDEN, h,
            {"w1": w1, "b1": np.asarray(b1, np.float64),
             "w2": w2, "b2": np.asarray(b2, np.float64)},
        )

    @classmethod
    def random(
        cls,
        kind: HeadKind,
        input_dim: int,
        output_dim: int,
        hidden_dim: int = 0,
        rng: np.random.Generator | None = None,
        scale: float | None = None,
    ) -> "ProjectionHead":
        """Gaussian-initialized head, mainly for experiments and tests."""
        rng = rng or np.random.default_rng()
        if kind is HeadKind.AFFINE:
            s = scale if scale is not None else 1.0 / np.sqrt(input_dim)
            return cls.affine(
                rng.standard_normal((output_dim, input_dim)) * s,
                np.zeros(output_dim),
            )
        hidden_dim = hidden_dim or input_dim
        s1 = scale if scale is not None else np.sqrt(2.0 / input_dim)
        s2 = scale if scale is not None else np.sqrt(2.0 / hidden_dim)
        return cls.mlp_one_hidden(
            rng.standard_normal((hidden_dim, input_dim)) * s1,
            np.zeros(hidden_dim),
            rng.standard_normal((output_dim, hidden_dim)) * s2,
            np.zeros(output_dim),
        )

    def with_params(self, params: dict[str, np.ndarray]) -> "ProjectionHead":
        return ProjectionHead(
            self.input_dim, self.output_dim, self.kind, self.hidden_dim,
            {k: np.array(v, dtype=np.float64) for k, v in params.items()},
        )

    def copy(self) -> "ProjectionHead":
        return self.with_params(self.params)

    @property
    def param_order(self) -> tuple[str, ...]:
        return tuple(_PARAM_SHAPES[self.kind](0, 0, 0))

    # -- forward / backward --------------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Map (..., D) inputs to (..., P) outputs in float64."""
        out, _ = self.forward_cache(x)
        return out

    def forward_cache(self, x: np.ndarray):
        """Forward pass keeping the intermediates needed for backprop."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.input_dim:
            raise ValueError(
                f"input has dimension {x.shape[-1]}, head expects {self.input_dim}"
            )
        if self.kind is HeadKind.AFFINE:
            out = x @ self.params["weight"].T + self.params["bias"]
            return out, {"x": x}
        pre = x @ self.params["w1"].T + self.params["b1"]
        hidden = np.maximum(pre, 0.0)
        out = hidden @ self.params["w2"].T + self.params["b2"]
        return out, {"x": x, "pre": pre, "hidden": hidden}

    def backward(self, cache: dict, grad_out: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients given d(loss)/d(output); inputs are frozen."""
        grad_out = np.asarray(grad_out, dtype=np.float64)
        x = cache["x"]
        flat_g = grad_out.reshape(-1, self.output_dim)
        flat_x = x.reshape(-1, self.input_dim)
        if self.kind is HeadKind.AFFINE:
            return {
                "weight": flat_g.T @ flat_x,
                "bias": flat_g.sum(axis=0),
            }
        hidden = cache["hidden"].reshape(-1, self.hidden_dim)
        pre = cache["pre"].reshape(-1, self.hidden_dim)
        grad_hidden = (flat_g @ self.params["w2"]) * (pre > 0.0)
        return {
            "w1": grad_hidden.T @ flat_x,
            "b1": grad_hidden.sum(axis=0),
            "w2": flat_g.T @ hidden,
            "b2": flat_g.sum(axis=0),
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProjectionHead):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.input_dim == other.input_dim
            and self.output_dim == other.output_dim
            and self.hidden_dim == other.hidden_dim
            and all(
                np.array_equal(self.params[k], other.params[k])
                for k in self.param_order
            )
        )


# -- checkpoint i/o ----------------------------------------------------------


def save_head(head: ProjectionHead, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(HEAD_MAGIC)
        fh.write(
            _HEAD_HEADER.pack(
                _KIND_TAGS[head.kind], head.input_dim, head.output_dim, head.hidden_dim
            )
        )
        for name in head.param_order:
            fh.write(np.ascontiguousarray(head.params[name], dtype="<f8").tobytes())


def load_head(path: str | Path) -> ProjectionHead:
    data = Path(path).read_bytes()
    if len(data) < len(HEAD_MAGIC) or data[: len(HEAD_MAGIC)] != HEAD_MAGIC:
        raise FileFormatError(
            f"bad head magic, expected {HEAD_MAGIC!r}", position="byte 0"
        )
    offset = len(HEAD_MAGIC)
    if len(data) < offset + _HEAD_HEADER.size:
        raise FileFormatError("truncated head header", position=f"byte {len(data)}")
    tag, d, p, h = _HEAD_HEADER.unpack_from(data, offset)
    offset += _HEAD_HEADER.size
    if tag not in _TAG_KINDS:
        raise FileFormatError(f"unknown architecture tag {tag}", position="byte 6")
    kind = _TAG_KINDS[tag]
    shapes = _PARAM_SHAPES[kind](d, p, h)
    params = {}
    for name, shape in shapes.items():
        count = int(np.prod(shape))
        nbytes = count * 8
        if len(data) < offset + nbytes:
            raise FileFormatError(
                f"truncated parameter block {name!r}", position=f"byte {offset}"
            )
        params[name] = np.frombuffer(
            data, dtype="<f8", count=count, offset=offset
        ).reshape(shape)
        offset += nbytes
    if offset != len(data):
        raise FileFormatError(f"{len(data) - offset} trailing bytes after parameters")
    return ProjectionHead(d, p, kind, h, params)
