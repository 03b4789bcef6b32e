"""Linear measurement operators and magnitude-measurement synthesis.

The forward model is ``b = |A x|`` with optional multiplicative intensity
noise: squared magnitudes are perturbed as ``b^2 = m^2 + alpha * m * z``
with ``z ~ N(0, 1)``, i.e. Gaussian noise on intensities whose variance is
``alpha^2`` times the squared magnitude (a shot-noise approximation).

Two operators are provided: a unitary oversampled Fourier transform (the
imaging case) and a dense random Gaussian matrix (the analysis case).  Both
expose ``apply`` and an ``adjoint`` consistent with the real inner product,
complex outputs being treated as pairs of reals.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .images import as_complex_grid, as_image, crop, embed
from .rng import RngStream


def phase(z) -> np.ndarray:
    """Elementwise z/|z|; zero entries map to 1+0j so outputs are always unit."""
    arr = np.asarray(z, dtype=np.complex128)
    mag = np.abs(arr)
    out = np.ones_like(arr)
    nz = mag > 0
    out[nz] = arr[nz] / mag[nz]
    return out


class LinearOperator:
    """Real-linear map from images to complex (or real) measurement grids.

    ``adjoint`` is the transpose under the real inner product
    ``<u, v> = sum(Re u * Re v + Im u * Im v)``; subclasses must satisfy
    ``<apply(x), y> == <x, adjoint(y)>`` to high accuracy.
    """

    in_shape: tuple[int, int]
    out_shape: tuple
    is_isometry: bool = False

    def apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def normal(self, x: np.ndarray) -> np.ndarray:
        """A^T A x, the normal-equation operator."""
        return self.adjoint(self.apply(x))


class FourierOperator(LinearOperator):
    """Unitary 2-D DFT of an image centered in a larger zero frame.

    With the unitary normalization the zero-padded DFT is an exact isometry,
    so the adjoint (crop of the real part of the inverse DFT) is also the
    pseudo-inverse: ``adjoint(apply(x)) == x``.
    """

    def __init__(self, support_shape: tuple[int, int], frame_shape: tuple[int, int] | None = None,
                 oversample: int = 2):
        h, w = support_shape
        if frame_shape is None:
            frame_shape = (oversample * h, oversample * w)
        fh, fw = frame_shape
        if fh < h or fw < w:
            raise ValueError(f"frame {frame_shape} smaller than support {support_shape}")
        self.in_shape = (h, w)
        self.frame_shape = (fh, fw)
        self.out_shape = (fh, fw)
        self.is_isometry = True

    def apply(self, x: np.ndarray) -> np.ndarray:
        img = as_image(x)
        if img.shape != self.in_shape:
            raise ValueError(f"expected image of shape {self.in_shape}, got {img.shape}")
        return np.fft.fft2(embed(img, *self.frame_shape), norm="ortho")

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        grid = as_complex_grid(y)
        if grid.shape != self.frame_shape:
            raise ValueError(f"expected grid of shape {self.frame_shape}, got {grid.shape}")
        return crop(np.fft.ifft2(grid, norm="ortho").real, self.in_shape)


class GaussianOperator(LinearOperator):
    """Dense real matrix with i.i.d. N(0, 1/m) entries, m rows by n pixels.

    ``orthonormal_rows=True`` replaces the matrix by the row-orthonormalized
    version (A A^T = I), which keeps the same row space but unit spectrum;
    useful wherever step sizes up to 1 must remain stable.
    """

    def __init__(self, m: int, support_shape: tuple[int, int], seed: int,
                 orthonormal_rows: bool = False):
        h, w = support_shape
        n = h * w
        rng = RngStream(seed, stream=0xA0)
        mat = rng.standard_normal((m, n)) / np.sqrt(m)
        if orthonormal_rows:
            # Gram-Schmidt via QR on A^T: keeps the row space, makes AA^T = I.
            q, _ = np.linalg.qr(mat.T)
            mat = q.T
        self.matrix = mat
        self.in_shape = (h, w)
        self.out_shape = (m,)
        self.seed = int(seed)
        self.orthonormal_rows = bool(orthonormal_rows)
        self.is_isometry = False

    def apply(self, x: np.ndarray) -> np.ndarray:
        img = as_image(x)
        if img.shape != self.in_shape:
            raise ValueError(f"expected image of shape {self.in_shape}, got {img.shape}")
        return self.matrix @ img.ravel()

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        vec = np.asarray(y)
        if vec.shape != self.out_shape:
            raise ValueError(f"expected vector of shape {self.out_shape}, got {vec.shape}")
        if np.iscomplexobj(vec):
            vec = vec.real
        return (self.matrix.T @ vec).reshape(self.in_shape)


@dataclass
class MeasurementProblem:
    """Magnitude measurements together with their geometry and noise metadata."""

    b: np.ndarray                      # nonnegative amplitudes, frame-shaped (Fourier) or 1-D (Gaussian)
    operator: LinearOperator
    alpha: float = 0.0
    seed: int = 0
    noise_mode: str = "intensity"      # "intensity" (default) or "amplitude"

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.b.shape != tuple(self.operator.out_shape):
            raise ValueError(f"amplitudes shape {self.b.shape} does not match operator output {self.operator.out_shape}")
        if not np.all(np.isfinite(self.b)) or np.any(self.b < 0):
            raise ValueError("amplitudes must be finite and nonnegative")

    @property
    def support_shape(self) -> tuple[int, int]:
        return self.operator.in_shape


SYNTH_STREAM = 1  # stream id convention for measurement noise


def synthesize(x_true, alpha: float, rng: RngStream, oversample: int = 2,
               noise_mode: str = "intensity") -> MeasurementProblem:
    """Build a Fourier measurement problem from a ground-truth image.

    ``intensity`` mode perturbs squared magnitudes, ``b_i^2 = m_i^2 +
    alpha * m_i * z_i`` (variance ``alpha^2 m_i^2``), clamping negative
    intensities to zero before the square root.  ``amplitude`` mode adds
    plain Gaussian noise on the amplitudes instead: ``b_i = max(m_i +
    alpha * z_i, 0)``.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    if noise_mode not in ("intensity", "amplitude"):
        raise ValueError(f"unknown noise mode {noise_mode!r}")
    img = as_image(x_true)
    op = FourierOperator(img.shape, oversample=oversample)
    m = np.abs(op.apply(img))
    if alpha == 0:
        b = m
    else:
        z = rng.standard_normal(m.shape)
        if noise_mode == "intensity":
            b = np.sqrt(np.maximum(m * m + alpha * m * z, 0.0))
        else:
            b = np.maximum(m + alpha * z, 0.0)
    return MeasurementProblem(b=b, operator=op, alpha=float(alpha), seed=rng.seed,
                              noise_mode=noise_mode)


def residual_norm(problem: MeasurementProblem, x) -> float:
    """Measurement misfit ||b - |A x|||_2."""
    return float(np.linalg.norm(problem.b - np.abs(problem.operator.apply(x))))


# ---------------------------------------------------------------------------
# Measurement file format (PRM1)
# ---------------------------------------------------------------------------

_PRM_MAGIC = b"PRM1"
_PRM_HEADER = struct.Struct("<4sIIIIIdQQ")  # magic, version, sh, sw, fh, fw, alpha, seed, M


class MeasurementFileError(ValueError):
    """Malformed PRM1 measurement file."""


def encode_measurements(problem: MeasurementProblem) -> bytes:
    """Serialize a Fourier measurement problem (PRM1, little-endian)."""
    op = problem.operator
    if not isinstance(op, FourierOperator):
        raise ValueError("only Fourier measurement problems serialize to PRM1")
    sh, sw = op.in_shape
    fh, fw = op.frame_shape
    amps = problem.b.astype("<f8").ravel()
    return _PRM_HEADER.pack(_PRM_MAGIC, 1, sh, sw, fh, fw,
                            problem.alpha, problem.seed, amps.size) + amps.tobytes()


def decode_measurements(buf: bytes) -> MeasurementProblem:
    """Parse PRM1 bytes written by :func:`encode_measurements`."""
    if len(buf) < _PRM_HEADER.size:
        raise MeasurementFileError("truncated PRM1 header")
    magic, version, sh, sw, fh, fw, alpha, seed, count = _PRM_HEADER.unpack_from(buf)
    if magic != _PRM_MAGIC:
        raise MeasurementFileError(f"bad magic {magic!r}")
    if version != 1:
        raise MeasurementFileError(f"unsupported PRM version {version}")
    if count != fh * fw:
        raise MeasurementFileError(f"amplitude count {count} does not match frame {fh}x{fw}")
    need = _PRM_HEADER.size + 8 * count
    if len(buf) < need:
        raise MeasurementFileError(f"truncated payload: expected {need} bytes, found {len(buf)}")
    amps = np.frombuffer(buf, dtype="<f8", count=count, offset=_PRM_HEADER.size)
    op = FourierOperator((sh, sw), frame_shape=(fh, fw))
    return MeasurementProblem(b=amps.reshape(fh, fw).copy(), operator=op,
                              alpha=alpha, seed=seed)


def save_measurements(path, problem: MeasurementProblem) -> None:
    with open(path, "wb") as f:
        f.write(encode_measurements(problem))


def load_measurements(path) -> MeasurementProblem:
    with open(path, "rb") as f:
        return decode_measurements(f.read())
