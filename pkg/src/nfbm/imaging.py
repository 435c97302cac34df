"""Building blocks for total-variation deblurring.

Images are ``(N, N)`` float arrays on the 0-255 scale.  Gradient fields
are ``(2, N, N)`` arrays: index 0 holds horizontal differences (along
columns), index 1 vertical differences (along rows).  With the Neumann
convention the last column of the horizontal part and the last row of
the vertical part are zero.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionError, ParameterError
from .linops import LinOp

__all__ = [
    "BlurKernel",
    "average_kernel",
    "project_box",
    "prox_l1",
    "project_linf",
    "grad",
    "grad_adjoint",
    "grad_op",
    "blur",
    "blur_adjoint",
    "blur_op",
    "psnr",
    "rel_error",
    "read_pgm",
    "write_pgm",
    "builtin_image",
]


def project_box(img, lo=0.0, hi=255.0):
    """Entrywise clamp to ``[lo, hi]``."""
    if not lo < hi:
        raise ParameterError(f"need lo < hi, got [{lo}, {hi}]")
    return np.clip(img, lo, hi)


def prox_l1(v, weight):
    """Soft thresholding: prox of ``weight * ||.||_1``."""
    if weight <= 0:
        raise ParameterError("weight must be positive")
    return np.sign(v) * np.maximum(np.abs(v) - weight, 0.0)


def project_linf(v, radius):
    """Projection onto the ``l_inf`` ball, i.e. the prox of the conjugate of ``radius * ||.||_1``."""
    if radius <= 0:
        raise ParameterError("radius must be positive")
    return np.clip(v, -radius, radius)


# --------------------------------------------------------------------------
# discrete gradient


def grad(img):
    img = np.asarray(img, dtype=np.float64)
    g = np.zeros((2,) + img.shape)
    g[0, :, :-1] = img[:, 1:] - img[:, :-1]
    g[1, :-1, :] = img[1:, :] - img[:-1, :]
    return g


def grad_adjoint(g):
    """Exact adjoint of :func:`grad` (negative divergence)."""
    g = np.asarray(g, dtype=np.float64)
    h, v = g[0], g[1]
    out = np.zeros(g.shape[1:])
    out[:, :-1] -= h[:, :-1]
    out[:, 1:] += h[:, :-1]
    out[:-1, :] -= v[:-1, :]
    out[1:, :] += v[:-1, :]
    return out


def grad_op(n) -> LinOp:
    return LinOp(grad, grad_adjoint, (n, n), (2, n, n), None, "grad")


# --------------------------------------------------------------------------
# blur with half-sample symmetric boundary


def _rank_one_factors(taps):
    """Column and row factors when the taps are an outer product, else None."""
    u, s, vt = np.linalg.svd(taps)
    if s[1:].sum() > 1e-14 * s[0]:
        return None
    return u[:, :1] * s[0], vt[:1, :]


@dataclass(frozen=True)
class BlurKernel:
    """Correlation taps (``k x k``, odd ``k``) summing to one."""

    taps: np.ndarray

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 2 or taps.shape[0] != taps.shape[1] or taps.shape[0] % 2 == 0:
            raise ParameterError(f"kernel must be square with odd side, got {taps.shape}")
        if np.any(taps < 0):
            raise ParameterError("kernel taps must be nonnegative")
        if abs(taps.sum() - 1.0) > 1e-12:
            raise ParameterError(f"kernel taps sum to {taps.sum()!r}, not 1")
        object.__setattr__(self, "taps", taps)
        object.__setattr__(self, "_factors", _rank_one_factors(taps))

    @property
    def size(self):
        return self.taps.shape[0]

    @property
    def radius(self):
        return self.taps.shape[0] // 2


def average_kernel(k: int) -> BlurKernel:
    if k < 1 or k % 2 == 0:
        raise ParameterError(f"kernel size must be a positive odd integer, got {k}")
    return BlurKernel(np.full((k, k), 1.0 / (k * k)))


def _fold(acc, n0, n1, r):
    """Transpose of half-sample symmetric padding by ``r`` on both axes."""
    rows = acc[r:r + n0].copy()
    if r:
        rows[:r] += acc[r - 1::-1]
        rows[n0 - r:] += acc[:n0 + r - 1:-1]
    out = rows[:, r:r + n1].copy()
    if r:
        out[:, :r] += rows[:, r - 1::-1]
        out[:, n1 - r:] += rows[:, :n1 + r - 1:-1]
    return out


def blur(img, k: BlurKernel):
    """Correlation of ``img`` with ``k`` after symmetric (edge-duplicating) padding."""
    img = np.asarray(img, dtype=np.float64)
    if k.radius > min(img.shape):
        raise ParameterError("kernel larger than image")
    # scipy's "reflect" mode is the half-sample reflection that duplicates the edge
    if k._factors is None:
        return ndimage.correlate(img, k.taps, mode="reflect")
    col, row = k._factors
    tmp = ndimage.correlate1d(img, col[:, 0], axis=0, mode="reflect")
    return ndimage.correlate1d(tmp, row[0], axis=1, mode="reflect")


def blur_adjoint(img, k: BlurKernel):
    """Transpose of :func:`blur`: scatter the taps, then fold the padding back."""
    img = np.asarray(img, dtype=np.float64)
    n0, n1 = img.shape
    r = k.radius
    if r > min(img.shape):
        raise ParameterError("kernel larger than image")
    zp = np.zeros((n0 + 2 * r, n1 + 2 * r))
    zp[r:r + n0, r:r + n1] = img
    # correlating the zero-padded image with the flipped taps scatters every tap
    if k._factors is None:
        acc = ndimage.correlate(zp, k.taps[::-1, ::-1], mode="constant")
    else:
        col, row = k._factors
        acc = ndimage.correlate1d(zp, col[::-1, 0], axis=0, mode="constant")
        acc = ndimage.correlate1d(acc, row[0, ::-1], axis=1, mode="constant")
    return _fold(acc, n0, n1, r)


def blur_op(n, k: BlurKernel) -> LinOp:
    return LinOp(lambda x: blur(x, k), lambda y: blur_adjoint(y, k), (n, n), (n, n), None, "blur")


# --------------------------------------------------------------------------
# metrics


def psnr(x, ref, peak=255.0):
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise DimensionError(x.shape, ref.shape, "images")
    err = float(np.sum((x - ref) ** 2))
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak ** 2 * x.size / err)


def rel_error(x_next, x_curr, floor=np.finfo(np.float64).eps):
    return float(np.linalg.norm(x_next - x_curr) / max(np.linalg.norm(x_curr), floor))


# --------------------------------------------------------------------------
# PGM I/O


def _pgm_tokens(data: bytes, count: int, start=0):
    """Read ``count`` whitespace separated header tokens, skipping comments."""
    tokens = []
    i = start
    while len(tokens) < count:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if i >= len(data):
            raise ValueError("truncated PGM header")
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        tokens.append(data[i:j])
        i = j
    return tokens, i


def read_pgm(path) -> np.ndarray:
    """Read a plain (P2) or binary (P5) 8-bit PGM as a float image on 0-255."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read image {os.fspath(path)!r}: {exc}") from exc
    (magic, w, h, maxval), pos = _pgm_tokens(data, 4)
    w, h, maxval = int(w), int(h), int(maxval)
    if not 0 < maxval <= 255:
        raise ValueError(f"{os.fspath(path)!r}: only 8-bit PGM supported (maxval {maxval})")
    if magic == b"P5":
        raw = np.frombuffer(data[pos + 1: pos + 1 + w * h], dtype=np.uint8)
        if raw.size != w * h:
            raise ValueError(f"{os.fspath(path)!r}: truncated pixel data")
        pix = raw.astype(np.float64)
    elif magic == b"P2":
        vals, _ = _pgm_tokens(data, w * h, pos)
        pix = np.array([int(v) for v in vals], dtype=np.float64)
    else:
        raise ValueError(f"{os.fspath(path)!r}: not a PGM file (magic {magic!r})")
    pix = pix.reshape(h, w)
    if maxval != 255:
        pix *= 255.0 / maxval
    return pix


def write_pgm(path, img, plain=False):
    """Write an image as 8-bit PGM, rounding to nearest and clamping to 0-255."""
    img = np.asarray(img, dtype=np.float64)
    pix = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    h, w = pix.shape
    try:
        with open(path, "wb") as fh:
            if plain:
                fh.write(f"P2\n{w} {h}\n255\n".encode())
                for row in pix:
                    fh.write((" ".join(str(int(v)) for v in row) + "\n").encode())
            else:
                fh.write(f"P5\n{w} {h}\n255\n".encode())
                fh.write(pix.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write image {os.fspath(path)!r}: {exc}") from exc


def builtin_image(n: int = 64) -> np.ndarray:
    """Deterministic piecewise-constant test pattern (rectangles and a disk)."""
    if n < 2:
        raise ParameterError("image side must be >= 2")
    t = (np.arange(n) + 0.5) / n
    yy, xx = np.meshgrid(t, t, indexing="ij")
    img = np.full((n, n), 40.0)
    img[(xx > 0.1) & (xx < 0.55) & (yy > 0.15) & (yy < 0.45)] = 200.0
    img[(xx > 0.6) & (xx < 0.9) & (yy > 0.55) & (yy < 0.9)] = 110.0
    img[(xx - 0.35) ** 2 + (yy - 0.7) ** 2 < 0.18 ** 2] = 160.0
    img[(xx > 0.7) & (xx < 0.8) & (yy > 0.1) & (yy < 0.3)] = 255.0
    return img
