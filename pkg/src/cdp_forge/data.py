"""Image ingestion, preprocessing, manifests, and synthetic test datasets.

Real images come in as 8-bit grayscale or RGB (PNG/PGM); RGB collapses to
grayscale with BT.601 luma weights. Two preprocessing paths mirror the
experimental setups: tiny images resized to 32x32, and portrait images
center-cropped to 178x178 then resized to 200x200. Resizing is
corner-aligned bilinear, implemented here so it is exactly reproducible.

Synthetic generators (Gaussian blobs, axis-aligned bars, low-pass noise)
keep the test suite and benchmark drivers download-free.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

LUMA_WEIGHTS = (0.299, 0.587, 0.114)  # ITU-R BT.601

SYNTH_KINDS = ("blobs", "bars", "random_smooth")


@dataclass
class ImageRecord:
    """A [0,1] grayscale plane plus where it came from."""

    plane: np.ndarray
    source: str = ""

    def __post_init__(self):
        self.plane = np.asarray(self.plane, dtype=np.float64)
        if self.plane.ndim != 2:
            raise ValueError(f"image plane must be 2D, got {self.plane.shape}")
        if not np.all(np.isfinite(self.plane)):
            raise ValueError("non-finite pixel values")
        if self.plane.min() < 0.0 or self.plane.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")


@dataclass
class DatasetManifest:
    """Which files feed a run, their train/test roles, and the recipe used."""

    name: str
    entries: list = field(default_factory=list)  # (path, role) pairs
    recipe: str = "tiny32"
    seed: int = 0

    def paths(self, role: str) -> list:
        return [p for p, r in self.entries if r == role]

    def save(self, path) -> None:
        doc = {
            "name": self.name,
            "entries": [[str(p), r] for p, r in self.entries],
            "recipe": self.recipe,
            "seed": self.seed,
        }
        Path(path).write_text(json.dumps(doc, indent=2))

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        doc = json.loads(Path(path).read_text())
        entries = [(p, r) for p, r in doc["entries"]]
        roles = {r for _, r in entries}
        if not roles <= {"train", "test"}:
            raise ValueError(f"manifest roles must be train/test, got {roles}")
        train = set(p for p, r in entries if r == "train")
        test = set(p for p, r in entries if r == "test")
        if train & test:
            raise ValueError("manifest train and test sets overlap")
        return cls(
            name=doc["name"], entries=entries, recipe=doc.get("recipe", "tiny32"),
            seed=int(doc.get("seed", 0)),
        )


def load_image(path) -> ImageRecord:
    """Read an 8-bit grayscale or RGB image into a [0,1] plane."""
    path = Path(path)
    with Image.open(path) as img:
        if img.mode == "L":
            arr = np.asarray(img, dtype=np.float64) / 255.0
        elif img.mode == "RGB":
            rgb = np.asarray(img, dtype=np.float64) / 255.0
            arr = (
                LUMA_WEIGHTS[0] * rgb[..., 0]
                + LUMA_WEIGHTS[1] * rgb[..., 1]
                + LUMA_WEIGHTS[2] * rgb[..., 2]
            )
        else:
            raise ValueError(
                f"unsupported image mode {img.mode!r} (need 8-bit L or RGB): {path}"
            )
    return ImageRecord(plane=np.clip(arr, 0.0, 1.0), source=str(path))


def resize_bilinear(plane: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resize of a 2D plane."""
    plane = np.asarray(plane, dtype=np.float64)
    in_h, in_w = plane.shape
    if (in_h, in_w) == (out_h, out_w):
        return plane.copy()
    rows = (
        np.linspace(0.0, in_h - 1.0, out_h) if out_h > 1 else np.zeros(1)
    )
    cols = (
        np.linspace(0.0, in_w - 1.0, out_w) if out_w > 1 else np.zeros(1)
    )
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    r1 = np.minimum(r0 + 1, in_h - 1)
    c1 = np.minimum(c0 + 1, in_w - 1)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    top = plane[np.ix_(r0, c0)] * (1 - fc) + plane[np.ix_(r0, c1)] * fc
    bot = plane[np.ix_(r1, c0)] * (1 - fc) + plane[np.ix_(r1, c1)] * fc
    return top * (1 - fr[:, :1]) + bot * fr[:, :1]


def center_crop(plane: np.ndarray, crop_h: int, crop_w: int) -> np.ndarray:
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    if h < crop_h or w < crop_w:
        raise ValueError(f"input {h}x{w} smaller than crop window {crop_h}x{crop_w}")
    top = (h - crop_h) // 2
    left = (w - crop_w) // 2
    return plane[top : top + crop_h, left : left + crop_w]


def preprocess_tiny(img: ImageRecord) -> ImageRecord:
    """Resize to 32x32 (no-op resize when already 32x32)."""
    out = np.clip(resize_bilinear(img.plane, 32, 32), 0.0, 1.0)
    return ImageRecord(plane=out, source=img.source)


def preprocess_celeba(img: ImageRecord) -> ImageRecord:
    """Center-crop 178x178, then resize to 200x200."""
    cropped = center_crop(img.plane, 178, 178)
    out = np.clip(resize_bilinear(cropped, 200, 200), 0.0, 1.0)
    return ImageRecord(plane=out, source=img.source)


PREPROCESSORS = {"tiny32": preprocess_tiny, "celeba200": preprocess_celeba}


def _normalize01(a: np.ndarray) -> np.ndarray:
    lo, hi = a.min(), a.max()
    if hi - lo < 1e-12:
        return np.zeros_like(a)
    return (a - lo) / (hi - lo)


def _blobs(rng, h, w) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    img = np.zeros((h, w))
    for _ in range(rng.integers(2, 6)):
        cy = rng.uniform(0, h - 1)
        cx = rng.uniform(0, w - 1)
        sig = rng.uniform(min(h, w) / 12.0, min(h, w) / 4.0)
        amp = rng.uniform(0.4, 1.0)
        img += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sig**2))
    return _normalize01(img)


def _bars(rng, h, w) -> np.ndarray:
    img = np.zeros((h, w))
    for _ in range(rng.integers(2, 5)):
        if rng.uniform() < 0.5:
            r = int(rng.integers(0, h))
            width = int(rng.integers(1, max(2, h // 8)))
            img[r : min(r + width, h), :] = rng.uniform(0.5, 1.0)
        else:
            c = int(rng.integers(0, w))
            width = int(rng.integers(1, max(2, w // 8)))
            img[:, c : min(c + width, w)] = rng.uniform(0.5, 1.0)
    return np.clip(img, 0.0, 1.0)


def _random_smooth(rng, h, w) -> np.ndarray:
    noise = rng.normal(size=(h, w))
    spec = np.fft.fft2(noise)
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    keep = (np.abs(fy) <= 0.15) & (np.abs(fx) <= 0.15)
    smooth = np.real(np.fft.ifft2(spec * keep))
    return _normalize01(smooth)


_GENERATORS = {"blobs": _blobs, "bars": _bars, "random_smooth": _random_smooth}


def synth_dataset(kind: str, count: int, h: int, w: int, seed: int) -> list:
    """Deterministic synthetic images in [0,1]; returns ImageRecords."""
    if kind not in SYNTH_KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    gen = _GENERATORS[kind]
    return [
        ImageRecord(plane=gen(rng, h, w), source=f"synth:{kind}:{seed}:{i}")
        for i in range(count)
    ]


def split(items, n_train: int, n_test: int, seed: int) -> tuple[list, list]:
    """Seeded disjoint train/test subsets in permutation order."""
    items = list(items)
    if n_train + n_test > len(items):
        raise ValueError(
            f"pool of {len(items)} cannot supply {n_train} train + {n_test} test"
        )
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(items))
    train = [items[i] for i in order[:n_train]]
    test = [items[i] for i in order[n_train : n_train + n_test]]
    return train, test


def planes(records) -> np.ndarray:
    """Stack ImageRecords (or raw planes) into an (N, H, W) array."""
    return np.stack(
        [r.plane if isinstance(r, ImageRecord) else np.asarray(r) for r in records]
    )
