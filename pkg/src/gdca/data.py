"""Image I/O (binary PPM), bicubic LR synthesis, patch sampling and augmentation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, LengthError, ShapeError, SizeError, UnsupportedError
from .tensor import Precision, Tensor


@dataclass
class Image:
    """``H x W x 3`` float pixels in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ShapeError(f"image pixels must be H x W x 3, got {px.shape}")
        if not (np.all(px >= 0.0) and np.all(px <= 1.0)):
            raise ValueError("pixel values must lie in [0, 1]")
        self.pixels = px

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def to_bytes8(self) -> np.ndarray:
        return quantize(self.pixels)

    @classmethod
    def from_bytes8(cls, b: np.ndarray) -> "Image":
        return cls(np.asarray(b, dtype=np.float64) / 255.0)

    def to_tensor(self, precision=None) -> Tensor:
        """``[3, H, W]`` tensor."""
        return Tensor(self.pixels.transpose(2, 0, 1), precision=Precision.of(precision))

    @classmethod
    def from_tensor(cls, t: Tensor | np.ndarray) -> "Image":
        arr = t.data if isinstance(t, Tensor) else np.asarray(t)
        return cls(np.clip(arr.astype(np.float64), 0.0, 1.0).transpose(1, 2, 0))

    def __eq__(self, other):
        return isinstance(other, Image) and np.array_equal(self.pixels, other.pixels)


def quantize(values: np.ndarray) -> np.ndarray:
    """``round(v * 255)`` with halves rounded up, clamped to [0, 255]."""
    return np.clip(np.floor(np.asarray(values, dtype=np.float64) * 255.0 + 0.5), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# PPM


def _header_tokens(buf: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens after the magic, skipping comments."""
    tokens = []
    i = 2
    n = len(buf)
    while len(tokens) < count:
        while i < n and buf[i:i + 1].isspace():
            i += 1
        if i < n and buf[i:i + 1] == b"#":
            while i < n and buf[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not buf[i:i + 1].isspace() and buf[i:i + 1] != b"#":
            i += 1
        if start == i:
            raise LengthError("PPM header truncated", offset=i)
        tokens.append(buf[start:i])
    if i >= n or not buf[i:i + 1].isspace():
        raise LengthError("PPM header truncated before pixel data", offset=i)
    return tokens, i + 1


def read_ppm(data: bytes) -> Image:
    if data[:2] != b"P6":
        raise FormatError(f"not a binary PPM: magic {data[:2]!r}")
    tokens, offset = _header_tokens(data, 3)
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise FormatError(f"malformed PPM header {tokens!r}") from exc
    if w < 1 or h < 1:
        raise FormatError(f"invalid PPM dimensions {w}x{h}")
    if maxval != 255:
        raise UnsupportedError(f"only maxval 255 is supported, got {maxval}")
    expected = w * h * 3
    payload = data[offset:offset + expected]
    if len(payload) < expected:
        raise LengthError(f"PPM pixel data truncated: expected {expected} bytes, got {len(payload)}",
                          offset=offset, expected=expected, actual=len(payload))
    b = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
    return Image.from_bytes8(b)


def write_ppm(img: Image) -> bytes:
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.to_bytes8().tobytes()


def load_ppm(path) -> Image:
    return read_ppm(Path(path).read_bytes())


def save_ppm(path, img: Image):
    Path(path).write_bytes(write_ppm(img))


def list_ppm(directory) -> list[Path]:
    """``.ppm`` files in lexicographic filename order."""
    d = Path(directory)
    return sorted((p for p in d.iterdir() if p.suffix == ".ppm" and p.is_file()), key=lambda p: p.name)


# ---------------------------------------------------------------------------
# bicubic resampling


def cubic_kernel(t, a: float = -0.5):
    t = np.abs(np.asarray(t, dtype=np.float64))
    t2, t3 = t * t, t * t * t
    near = (a + 2) * t3 - (a + 3) * t2 + 1
    far = a * t3 - 5 * a * t2 + 8 * a * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


def _resize_axis(arr: np.ndarray, out_len: int, axis: int) -> np.ndarray:
    in_len = arr.shape[axis]
    if in_len == out_len:
        return arr
    scale = in_len / out_len
    src = (np.arange(out_len) + 0.5) * scale - 0.5
    base = np.floor(src).astype(np.int64)
    frac = src - base
    offsets = np.array([-1, 0, 1, 2])
    idx = np.clip(base[:, None] + offsets, 0, in_len - 1)
    wts = cubic_kernel(frac[:, None] - offsets)
    a = np.moveaxis(arr, axis, 0)
    # anchored on the floor tap so that constant signals are reproduced exactly
    ref = a[idx[:, 1]]
    out = ref.copy()
    for k in (0, 2, 3):
        w = wts[:, k].reshape((-1,) + (1,) * (a.ndim - 1))
        out += w * (a[idx[:, k]] - ref)
    return np.moveaxis(out, 0, axis)


def bicubic_resize(img: Image, out_h: int, out_w: int) -> Image:
    """Separable Catmull-Rom resampling, center-aligned, clamped edges."""
    if out_h < 1 or out_w < 1:
        raise SizeError(f"output size must be positive, got {out_h}x{out_w}")
    px = _resize_axis(img.pixels, out_h, 0)
    px = _resize_axis(px, out_w, 1)
    return Image(np.clip(px, 0.0, 1.0))


# ---------------------------------------------------------------------------
# patches


@dataclass
class PatchPair:
    lr: Tensor  # [3, p, p]
    hr: Tensor  # [3, 4p, 4p]
    source_id: str
    offset: tuple


def sample_patch_pair(img: Image, patch: int, rng: np.random.Generator, source_id: str = "",
                      precision=None) -> PatchPair:
    """Random 4-aligned HR crop of size ``4 * patch`` and its bicubic LR version."""
    if patch < 8:
        raise SizeError(f"patch size must be at least 8, got {patch}")
    hp = 4 * patch
    if img.height < hp or img.width < hp:
        raise SizeError(f"image {img.height}x{img.width} smaller than HR patch {hp}x{hp}")
    row = 4 * int(rng.integers(0, (img.height - hp) // 4 + 1))
    col = 4 * int(rng.integers(0, (img.width - hp) // 4 + 1))
    hr = Image(img.pixels[row:row + hp, col:col + hp])
    lr = bicubic_resize(hr, patch, patch)
    return PatchPair(lr.to_tensor(precision), hr.to_tensor(precision), source_id, (row, col))


def dihedral(arr: np.ndarray, k: int) -> np.ndarray:
    """Apply transform ``k`` in 0..7 to the trailing two axes: ``k % 4`` quarter turns, flip if ``k >= 4``."""
    out = np.rot90(arr, k % 4, axes=(-2, -1))
    if k >= 4:
        out = out[..., ::-1]
    return np.ascontiguousarray(out)


def augment(pair: PatchPair, rng: np.random.Generator, k: int | None = None) -> PatchPair:
    if k is None:
        k = int(rng.integers(0, 8))
    return PatchPair(Tensor(dihedral(pair.lr.data, k)), Tensor(dihedral(pair.hr.data, k)),
                     pair.source_id, pair.offset)


def batch_rng(seed: int, step: int) -> np.random.Generator:
    """Independent stream per training step, so batches are a pure function of (seed, step)."""
    return np.random.default_rng([int(seed), int(step)])


def sample_batch(images: list[tuple[str, Image]], patch: int, batch_size: int, seed: int, step: int,
                 augment_pairs: bool = True, precision=None) -> tuple[Tensor, Tensor]:
    """Stacked ``[N, 3, p, p]`` LR and ``[N, 3, 4p, 4p]`` HR batches for one step."""
    rng = batch_rng(seed, step)
    lrs, hrs = [], []
    for _ in range(batch_size):
        name, img = images[int(rng.integers(0, len(images)))]
        pair = sample_patch_pair(img, patch, rng, name, precision)
        if augment_pairs:
            pair = augment(pair, rng)
        lrs.append(pair.lr.data)
        hrs.append(pair.hr.data)
    return Tensor(np.stack(lrs)), Tensor(np.stack(hrs))


def load_dataset(directory) -> list[tuple[str, Image]]:
    return [(p.name, load_ppm(p)) for p in list_ppm(directory)]


def synthetic_image(height: int, width: int, seed: int = 0) -> Image:
    """Deterministic smooth-plus-edges test picture, handy for demos and tests."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width] / max(height, width)
    px = np.empty((height, width, 3))
    for c in range(3):
        fx, fy = rng.uniform(1.0, 4.0, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        px[..., c] = 0.5 + 0.25 * np.sin(2 * np.pi * (fx * xx + fy * yy) + phase)
    cy, cx, r = rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.12, 0.25)
    disk = (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
    px[disk] = 0.6 * px[disk] + 0.4 * rng.uniform(0, 1, size=3)
    return Image(np.clip(px, 0.0, 1.0))
