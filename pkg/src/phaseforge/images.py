"""Image containers, PGM file I/O, PSNR, and ambiguity-resolving registration.

Images are plain 2-D float64 numpy arrays in the nominal intensity range
[0, 255]; complex grids are 2-D complex128 arrays.  :func:`as_image` /
:func:`as_complex_grid` coerce and validate (finite entries, 2-D shape).
"""

from __future__ import annotations

import numpy as np

PSNR_CAP_DB = 300.0  # reported instead of +inf when MSE is exactly zero


class PgmError(ValueError):
    """Base class for PGM parse failures."""


class PgmFormatError(PgmError):
    """Malformed or unsupported PGM header."""


class PgmMaxvalError(PgmError):
    """Maxval other than 255 or 65535."""


class PgmTruncatedError(PgmError):
    """Pixel payload shorter than the header promises."""


def as_image(data) -> np.ndarray:
    """Coerce to a finite 2-D float64 array."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite entries")
    return arr


def as_complex_grid(data) -> np.ndarray:
    """Coerce to a finite 2-D complex128 array."""
    arr = np.asarray(data, dtype=np.complex128)
    if arr.ndim != 2:
        raise ValueError(f"complex grid must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("complex grid contains non-finite entries")
    return arr


# ---------------------------------------------------------------------------
# Binary PGM (P5)
# ---------------------------------------------------------------------------

def _read_header_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    """Next whitespace-delimited header token, skipping '#' comments."""
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise PgmFormatError("malformed PGM header: unexpected end of file")
    return buf[start:pos], pos


def decode_pgm(buf: bytes) -> np.ndarray:
    """Parse binary PGM (P5) bytes into a float64 image in [0, 255].

    Maxval must be 255 or 65535; 16-bit samples (big-endian, per the PGM
    convention) are rescaled by 255/65535.
    """
    if len(buf) < 2:
        raise PgmFormatError("malformed PGM header: file too short")
    magic = buf[:2]
    if magic != b"P5":
        if magic in (b"P1", b"P2", b"P3", b"P4", b"P6"):
            raise PgmFormatError(f"unsupported format {magic.decode('ascii')!r}: only binary PGM (P5) is accepted")
        raise PgmFormatError("malformed PGM header: missing P5 magic")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_header_token(buf, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise PgmFormatError(f"malformed PGM header: non-numeric field {tok!r}") from None
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise PgmFormatError(f"malformed PGM header: bad dimensions {width}x{height}")
    if maxval not in (255, 65535):
        raise PgmMaxvalError(f"unsupported maxval {maxval}: expected 255 or 65535")
    pos += 1  # single whitespace byte separates header from payload
    itemsize = 1 if maxval == 255 else 2
    need = width * height * itemsize
    payload = buf[pos:pos + need]
    if len(payload) < need:
        raise PgmTruncatedError(f"truncated payload: expected {need} bytes, found {len(payload)}")
    if maxval == 255:
        data = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)
    else:
        data = np.frombuffer(payload, dtype=">u2").astype(np.float64) * (255.0 / 65535.0)
    return data.reshape(height, width)


def encode_pgm(image) -> bytes:
    """Serialize an image as 8-bit binary PGM bytes.

    Values are clamped to [0, 255] and rounded half-to-even.  The exact byte
    layout is ``P5\\n<w> <h>\\n255\\n`` followed by the row-major payload.
    """
    img = as_image(image)
    h, w = img.shape
    pixels = np.rint(np.clip(img, 0.0, 255.0)).astype(np.uint8)
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def load_pgm(path) -> np.ndarray:
    """Read a binary PGM (P5) file; see :func:`decode_pgm`."""
    with open(path, "rb") as fh:
        return decode_pgm(fh.read())


def save_pgm(path, image) -> None:
    """Write an image as 8-bit binary PGM; see :func:`encode_pgm`."""
    with open(path, "wb") as fh:
        fh.write(encode_pgm(image))


# ---------------------------------------------------------------------------
# Metrics and registration
# ---------------------------------------------------------------------------

def psnr(estimate, reference, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio 10*log10(peak^2 / MSE), in dB.

    Returns :data:`PSNR_CAP_DB` when the MSE is exactly zero.
    """
    est = as_image(estimate)
    ref = as_image(reference)
    if est.shape != ref.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {ref.shape}")
    mse = float(np.mean((est - ref) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return 10.0 * np.log10(peak * peak / mse)


def _best_cyclic_shift(candidate: np.ndarray, reference: np.ndarray) -> tuple[int, int]:
    """Circular shift of ``candidate`` maximizing correlation with ``reference``.

    All integer shifts are scored at once through the FFT cross-correlation;
    maximizing correlation is equivalent to maximizing PSNR because circular
    shifts preserve the candidate's norm.
    """
    corr = np.fft.ifft2(np.fft.fft2(reference) * np.conj(np.fft.fft2(candidate))).real
    idx = np.unravel_index(int(np.argmax(corr)), corr.shape)
    return int(idx[0]), int(idx[1])


def register(candidate, reference) -> tuple[np.ndarray, float]:
    """Resolve trivial magnitude ambiguities, then report PSNR.

    Searches the group {identity, 180-degree rotation} x integer circular
    shifts and returns the transformed candidate with the highest PSNR
    against ``reference``, together with that PSNR.  The identity transform
    is in the group, so the result is never worse than the raw PSNR.
    """
    cand = as_image(candidate)
    ref = as_image(reference)
    if cand.shape != ref.shape:
        raise ValueError(f"shape mismatch: {cand.shape} vs {ref.shape}")
    best_img, best_db = cand, psnr(cand, ref)
    for variant in (cand, cand[::-1, ::-1]):
        dy, dx = _best_cyclic_shift(variant, ref)
        moved = np.roll(variant, (dy, dx), axis=(0, 1))
        db = psnr(moved, ref)
        if db > best_db:
            best_img, best_db = moved, db
    return best_img, best_db


# ---------------------------------------------------------------------------
# Support embedding
# ---------------------------------------------------------------------------

def embed(image, frame_height: int, frame_width: int) -> np.ndarray:
    """Center an image inside a zero frame of the given size."""
    img = as_image(image)
    h, w = img.shape
    if frame_height < h or frame_width < w:
        raise ValueError(f"frame {frame_height}x{frame_width} smaller than image {h}x{w}")
    frame = np.zeros((frame_height, frame_width), dtype=np.float64)
    top = (frame_height - h) // 2
    left = (frame_width - w) // 2
    frame[top:top + h, left:left + w] = img
    return frame


def crop(frame, support_shape: tuple[int, int]) -> np.ndarray:
    """Extract the centered support region; inverse of :func:`embed`."""
    frm = as_image(frame)
    fh, fw = frm.shape
    h, w = support_shape
    if fh < h or fw < w:
        raise ValueError(f"frame {fh}x{fw} smaller than support {h}x{w}")
    top = (fh - h) // 2
    left = (fw - w) // 2
    return frm[top:top + h, left:left + w].copy()
