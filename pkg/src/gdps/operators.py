"""Measurement maps with exact forward application and vector-Jacobian products.

Every operator acts on flat vectors of length ``input_dim`` and accepts any
leading batch shape, so ``apply`` maps ``(..., input_dim) -> (..., output_dim)``
and ``vjp`` maps ``(..., input_dim), (..., output_dim) -> (..., input_dim)``.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .core import Measurement


class ForwardOperator:
    kind = "operator"
    is_linear = False

    def __init__(self, shape: Sequence[int], output_dim: int):
        self.shape = tuple(int(s) for s in shape)
        self.input_dim = int(np.prod(self.shape))
        self.output_dim = int(output_dim)

    @property
    def name(self) -> str:
        return self.kind

    @property
    def norm_bound(self) -> float:
        """Upper bound on the operator norm of the Jacobian, used for step sizing."""
        raise NotImplementedError

    def _check_x(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.input_dim,):
            raise ValueError(f"{self.name}: expected input of length {self.input_dim}, got {x.shape}")
        return x

    def _check_u(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape[-1:] != (self.output_dim,):
            raise ValueError(f"{self.name}: expected cotangent of length {self.output_dim}, got {u.shape}")
        return u

    def apply(self, x) -> np.ndarray:
        raise NotImplementedError

    def vjp(self, x, u) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x):
        return self.apply(x)


class LinearOperator(ForwardOperator):
    """Linear map stored as a sparse (or dense) matrix of shape (output_dim, input_dim)."""

    kind = "matrix"
    is_linear = True

    def __init__(self, matrix, shape: Sequence[int] | None = None):
        if not sp.issparse(matrix):
            matrix = np.asarray(matrix, dtype=float)
            if matrix.ndim != 2:
                raise ValueError("matrix must be 2-D")
        m, d = matrix.shape
        super().__init__(shape if shape is not None else (d,), m)
        if self.input_dim != d:
            raise ValueError(f"shape {self.shape} does not match matrix with {d} columns")
        self.matrix = sp.csr_matrix(matrix) if sp.issparse(matrix) else matrix
        self._t = self.matrix.T.tocsr() if sp.issparse(matrix) else self.matrix.T

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if sp.issparse(self.matrix) else np.array(self.matrix)

    @property
    def norm_bound(self) -> float:
        A = abs(self.matrix) if sp.issparse(self.matrix) else np.abs(self.matrix)
        rows = np.asarray(A.sum(axis=1)).max(initial=0.0)
        cols = np.asarray(A.sum(axis=0)).max(initial=0.0)
        return float(math.sqrt(rows * cols))

    def _matmul(self, M, v):
        batch = v.shape[:-1]
        flat = v.reshape(-1, v.shape[-1])
        out = (M @ flat.T).T
        return np.asarray(out).reshape(batch + (M.shape[0],))

    def apply(self, x):
        return self._matmul(self.matrix, self._check_x(x))

    def vjp(self, x, u):
        return self._matmul(self._t, self._check_u(u))


class MaskOp(LinearOperator):
    kind = "mask"

    def __init__(self, keep, shape: Sequence[int]):
        d = int(np.prod(shape))
        keep = np.asarray(keep, dtype=int).reshape(-1)
        if keep.size and (keep.min() < 0 or keep.max() >= d):
            raise ValueError("mask indices out of range")
        if np.unique(keep).size != keep.size:
            raise ValueError("mask indices must be unique")
        self.keep = keep
        M = sp.csr_matrix((np.ones(keep.size), (np.arange(keep.size), keep)), shape=(keep.size, d))
        super().__init__(M, shape)

    @property
    def norm_bound(self):
        return 1.0

    @classmethod
    def random(cls, shape, drop_fraction: float, seed: int) -> "MaskOp":
        if not 0 <= drop_fraction <= 1:
            raise ValueError("mask fraction must lie in [0, 1]")
        d = int(np.prod(shape))
        n_drop = int(round(drop_fraction * d))
        dropped = np.random.default_rng(seed).choice(d, size=n_drop, replace=False)
        op = cls(np.setdiff1d(np.arange(d), dropped), shape)
        op.mask_seed = seed
        return op

    @classmethod
    def box(cls, shape, top: int, left: int, height: int, width: int) -> "MaskOp":
        if len(shape) != 2:
            raise ValueError("box inpainting needs a 2-D image shape")
        H, W = shape
        if not (0 <= top and 0 <= left and height >= 0 and width >= 0 and top + height <= H and left + width <= W):
            raise ValueError("box does not fit inside the image")
        hole = np.zeros(shape, dtype=bool)
        hole[top : top + height, left : left + width] = True
        return cls(np.flatnonzero(~hole), shape)

    @classmethod
    def centered_box(cls, shape, size: int) -> "MaskOp":
        H, W = shape
        return cls.box(shape, (H - size) // 2, (W - size) // 2, size, size)


class DownsampleOp(LinearOperator):
    """Block-average downsampling by an integer factor along every axis."""

    kind = "downsample"

    def __init__(self, factor: int, shape: Sequence[int]):
        factor = int(factor)
        if factor < 1 or any(s % factor for s in shape):
            raise ValueError(f"factor {factor} must divide every side of {tuple(shape)}")
        self.factor = factor
        d = int(np.prod(shape))
        idx = np.arange(d).reshape(shape)
        out_shape = tuple(s // factor for s in shape)
        block = np.zeros(shape, dtype=int)
        for ax, s in enumerate(shape):
            coord = (np.arange(s) // factor).reshape([-1 if a == ax else 1 for a in range(len(shape))])
            block = block * out_shape[ax] + coord
        m = int(np.prod(out_shape))
        w = 1.0 / factor ** len(shape)
        M = sp.csr_matrix((np.full(d, w), (block.reshape(-1), idx.reshape(-1))), shape=(m, d))
        super().__init__(M, shape)
        self.output_shape = out_shape


def _pad_index(shape, half):
    """Source index of every position of the half-sample symmetric padding."""
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    return np.pad(idx, [(h, h) for h in half], mode="symmetric")


class ConvBlurOp(LinearOperator):
    """Convolution with a small odd-sized kernel under symmetric boundary extension.

    The boundary rule mirrors the signal about its edge including the edge
    sample (``d c b a | a b c d | d c b a``).
    """

    kind = "blur"

    def __init__(self, kernel, shape: Sequence[int]):
        kernel = np.asarray(kernel, dtype=float)
        shape = tuple(int(s) for s in shape)
        if kernel.ndim != len(shape):
            raise ValueError(f"kernel rank {kernel.ndim} does not match signal rank {len(shape)}")
        if any(k % 2 == 0 for k in kernel.shape):
            raise ValueError("kernel sides must be odd")
        half = [k // 2 for k in kernel.shape]
        if any(h > s for h, s in zip(half, shape)):
            raise ValueError("kernel is larger than twice the signal")
        self.kernel = kernel
        src = _pad_index(shape, half)
        flipped = kernel[tuple(slice(None, None, -1) for _ in shape)]
        d = int(np.prod(shape))
        rows, cols, vals = [], [], []
        out_idx = np.arange(d)
        for offset in np.ndindex(*kernel.shape):
            w = flipped[offset]
            if w == 0:
                continue
            window = src[tuple(slice(o, o + s) for o, s in zip(offset, shape))]
            rows.append(out_idx)
            cols.append(window.reshape(-1))
            vals.append(np.full(d, w))
        M = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(d, d)
        ).tocsr()
        super().__init__(M, shape)


def gaussian_kernel(size: int, std: float, ndim: int = 2) -> np.ndarray:
    if size % 2 == 0 or size < 1:
        raise ValueError("kernel size must be odd and positive")
    if not std > 0:
        raise ValueError("kernel std must be positive")
    r = np.arange(size) - size // 2
    g = np.exp(-0.5 * (r / std) ** 2)
    k = g
    for _ in range(ndim - 1):
        k = np.multiply.outer(k, g)
    return k / k.sum()


class DftMagnitudeOp(ForwardOperator):
    """|F(pad(x))| with unnormalized DFT; padded side = round((1 + s) * side)."""

    kind = "dft_magnitude"

    def __init__(self, shape: Sequence[int], oversampling: float = 1.0):
        if oversampling < 0:
            raise ValueError("oversampling must be >= 0")
        shape = tuple(int(s) for s in shape)
        if len(shape) > 2:
            raise ValueError("DFT magnitude supports 1-D and 2-D signals")
        self.oversampling = float(oversampling)
        self.padded = tuple(int(round((1 + oversampling) * s)) for s in shape)
        super().__init__(shape, int(np.prod(self.padded)))
        self._axes = tuple(range(-len(shape), 0))

    @property
    def norm_bound(self):
        return float(math.sqrt(self.output_dim))

    def _spectrum(self, x):
        batch = x.shape[:-1]
        img = x.reshape(batch + self.shape)
        return np.fft.fftn(img, s=self.padded, axes=self._axes), batch

    def apply(self, x):
        F, batch = self._spectrum(self._check_x(x))
        return np.abs(F).reshape(batch + (self.output_dim,))

    def vjp(self, x, u):
        F, batch = self._spectrum(self._check_x(x))
        u = self._check_u(u).reshape(batch + self.padded)
        mag = np.abs(F)
        phase = np.divide(F, mag, out=np.zeros_like(F), where=mag > 0)
        # F^H v = prod(padded) * ifft(v); crop back to the unpadded support.
        back = np.fft.ifftn(u * phase, axes=self._axes) * self.output_dim
        crop = back[(...,) + tuple(slice(0, s) for s in self.shape)]
        return np.real(crop).reshape(batch + (self.input_dim,))


class HdrOp(ForwardOperator):
    """clip(alpha * x, 0, 1); subgradient is zero on and outside the clip boundary."""

    kind = "hdr"

    def __init__(self, shape: Sequence[int], alpha: float = 2.0):
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        super().__init__(shape, int(np.prod(shape)))
        self.alpha = float(alpha)

    @property
    def norm_bound(self):
        return self.alpha

    def apply(self, x):
        return np.clip(self.alpha * self._check_x(x), 0.0, 1.0)

    def vjp(self, x, u):
        z = self.alpha * self._check_x(x)
        inside = (z > 0) & (z < 1)
        return np.where(inside, self.alpha * self._check_u(u), 0.0)


class NonlinearBlurSurrogateOp(ForwardOperator):
    """tanh(gain * blur(x)) / tanh(gain), a smooth nonlinearity after a convolution."""

    kind = "nonlinear_blur"

    def __init__(self, kernel, shape: Sequence[int], gain: float = 1.0):
        if not gain > 0:
            raise ValueError("gain must be positive")
        self.blur = ConvBlurOp(kernel, shape)
        super().__init__(shape, self.blur.output_dim)
        self.gain = float(gain)
        self._scale = 1.0 / math.tanh(self.gain)

    @property
    def norm_bound(self):
        return self.gain * self._scale * self.blur.norm_bound

    def apply(self, x):
        return np.tanh(self.gain * self.blur.apply(x)) * self._scale

    def vjp(self, x, u):
        t = np.tanh(self.gain * self.blur.apply(x))
        return self.blur.vjp(x, self._check_u(u) * self.gain * self._scale * (1.0 - t**2))


class DecodedOperator(ForwardOperator):
    """``op`` composed with a linear decoder, acting on latent vectors."""

    def __init__(self, op: ForwardOperator, autoencoder):
        super().__init__((autoencoder.latent_dim,), op.output_dim)
        if op.input_dim != autoencoder.dim:
            raise ValueError("operator input does not match autoencoder output dimension")
        self.op = op
        self.autoencoder = autoencoder
        self.is_linear = op.is_linear

    @property
    def kind(self):
        return f"decoded_{self.op.kind}"

    @property
    def norm_bound(self):
        return self.op.norm_bound

    def apply(self, z):
        return self.op.apply(self.autoencoder.decode(self._check_x(z)))

    def vjp(self, z, u):
        x = self.autoencoder.decode(self._check_x(z))
        return self.autoencoder.encode(self.op.vjp(x, u))


def make_operator(kind: str, shape: Sequence[int], **params) -> ForwardOperator:
    """Build an operator by task name.

    Recognized kinds and parameters:
      identity; matrix(matrix); mask(keep); random_inpaint(drop_fraction, seed);
      box_inpaint(size | top,left,height,width); downsample(factor);
      gaussian_blur(size, std); blur / motion_blur(kernel);
      dft_magnitude(oversampling); hdr(alpha); nonlinear_blur(kernel | size,std; gain).
    """
    shape = tuple(int(s) for s in shape)
    kind = kind.lower()
    if kind == "identity":
        op = LinearOperator(sp.identity(int(np.prod(shape)), format="csr"), shape)
        op.kind = "identity"
        return op
    if kind == "matrix":
        return LinearOperator(params["matrix"], shape)
    if kind == "mask":
        return MaskOp(params["keep"], shape)
    if kind == "random_inpaint":
        return MaskOp.random(shape, params.get("drop_fraction", 0.7), params.get("seed", 0))
    if kind == "box_inpaint":
        if "size" in params:
            return MaskOp.centered_box(shape, int(params["size"]))
        return MaskOp.box(shape, *(int(params[k]) for k in ("top", "left", "height", "width")))
    if kind == "downsample":
        return DownsampleOp(params.get("factor", 2), shape)
    if kind == "gaussian_blur":
        kernel = gaussian_kernel(int(params.get("size", 5)), float(params.get("std", 1.0)), len(shape))
        return ConvBlurOp(kernel, shape)
    if kind in ("blur", "motion_blur"):
        return ConvBlurOp(params["kernel"], shape)
    if kind == "dft_magnitude":
        return DftMagnitudeOp(shape, params.get("oversampling", 1.0))
    if kind == "hdr":
        return HdrOp(shape, params.get("alpha", 2.0))
    if kind == "nonlinear_blur":
        kernel = params.get("kernel")
        if kernel is None:
            kernel = gaussian_kernel(int(params.get("size", 5)), float(params.get("std", 1.0)), len(shape))
        return NonlinearBlurSurrogateOp(kernel, shape, params.get("gain", 1.0))
    raise ValueError(f"unknown operator kind {kind!r}")


def load_vector_csv(path, dtype=float) -> np.ndarray:
    """Read one value per line (blank lines and '#' comments skipped)."""
    values = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            values.append(dtype(float(line)) if dtype is int else dtype(line))
        except ValueError as err:
            raise ValueError(f"{path}:{lineno}: cannot parse {line!r}") from err
    return np.asarray(values, dtype=dtype)


def data_consistency_grad(op: ForwardOperator, x, y) -> np.ndarray:
    """Gradient of ||y - A(x)||^2 with respect to x."""
    y = np.asarray(y, dtype=float)
    return 2.0 * op.vjp(x, op.apply(x) - y)


def measure(op: ForwardOperator, x_true, noise_sigma: float, rng: np.random.Generator) -> Measurement:
    """Synthesize y = A(x_true) + noise_sigma * eps."""
    clean = op.apply(x_true)
    values = clean + noise_sigma * rng.standard_normal(clean.shape)
    return Measurement(values, op.name, float(noise_sigma))
