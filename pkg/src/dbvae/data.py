"""Procedural face/non-face datasets with controllable group skew, plus a
grouped PNG directory loader.

Synthetic "faces" are filled ellipses with eye dots and a mouth bar on a
noisy background; the shade axis drives the head's base intensity (light vs
dark) and the second binary attribute toggles a hat bar across the crown.
The two axes stand in for demographic attributes so that group skew, latent
rarity, and per-group accuracy are all measurable at desk scale.  Non-faces
are rectangles, bars, and noise, never the ellipse template.

Every example is drawn from its own substream (seed = dataset seed XOR
example index), so generation is order-independent and reproducible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .rng import RngStream

SHADES = ("light", "dark")
ATTR2 = ("A", "B")
_SHUFFLE_SALT = 1 << 63


class DataError(ValueError):
    """Invalid dataset specification or unreadable image directory."""


@dataclass(frozen=True)
class GroupTag:
    shade: str
    attr2: str

    def __post_init__(self):
        if self.shade not in SHADES:
            raise DataError(f"unknown shade {self.shade!r}; expected one of {SHADES}")
        if self.attr2 not in ATTR2:
            raise DataError(f"unknown attr2 {self.attr2!r}; expected one of {ATTR2}")

    @property
    def label(self) -> str:
        return f"{self.shade}_{self.attr2}"

    @classmethod
    def from_label(cls, label: str) -> "GroupTag":
        shade, _, attr2 = label.partition("_")
        return cls(shade, attr2)


ALL_GROUPS = tuple(GroupTag(s, a) for s in SHADES for a in ATTR2)


@dataclass
class Example:
    image: np.ndarray          # (C, 64, 64) float64 in [0, 1]
    label: int                 # 1 = face, 0 = non-face
    group: GroupTag | None = None


@dataclass
class Dataset:
    examples: list[Example]
    seed: int = 0

    def __len__(self) -> int:
        return len(self.examples)

    def faces(self) -> list[Example]:
        return [ex for ex in self.examples if ex.label == 1]

    def nonfaces(self) -> list[Example]:
        return [ex for ex in self.examples if ex.label == 0]

    def images(self) -> np.ndarray:
        return np.stack([ex.image for ex in self.examples])

    def labels(self) -> np.ndarray:
        return np.array([ex.label for ex in self.examples], dtype=np.int64)

    def group_counts(self) -> dict[str, int]:
        counts = {g.label: 0 for g in ALL_GROUPS}
        counts["nonface"] = 0
        for ex in self.examples:
            counts[ex.group.label if ex.group else "nonface"] += 1
        return counts


@dataclass
class DatasetSpec:
    face_counts: dict[str, int]   # group label -> count, all four groups
    nonfaces: int
    channels: int = 1
    seed: int = 0

    def validate(self) -> None:
        expected = {g.label for g in ALL_GROUPS}
        if set(self.face_counts) != expected:
            raise DataError(
                f"face_counts keys {sorted(self.face_counts)} != {sorted(expected)}")
        if any(c < 0 for c in self.face_counts.values()):
            raise DataError("face counts must be >= 0")
        if sum(self.face_counts.values()) < 1:
            raise DataError("need at least one face")
        if self.nonfaces < 1:
            raise DataError("need at least one non-face")
        if self.channels not in (1, 3):
            raise DataError(f"channels must be 1 or 3, got {self.channels}")


# ---------------------------------------------------------------------------
# Procedural generators
# ---------------------------------------------------------------------------

_HEAD_INTENSITY = {"light": 0.80, "dark": 0.35}
_BACKGROUND_CEIL = 0.45


def _expand(gray: np.ndarray, channels: int, rng: RngStream) -> np.ndarray:
    if channels == 1:
        return gray[None]
    tint = rng.uniform((3, 1, 1), -0.03, 0.03)
    return np.clip(gray[None] + tint, 0.0, 1.0)


def generate_face(group: GroupTag, rng: RngStream, channels: int = 1) -> Example:
    """One 64x64 face: jittered ellipse head, eyes, mouth, optional hat."""
    img = rng.uniform((64, 64), 0.0, _BACKGROUND_CEIL)

    cx = 32.0 + rng.uniform((), -3.2, 3.2)
    cy = 34.0 + rng.uniform((), -3.4, 3.4)
    rx = 14.0 * (1.0 + rng.uniform((), -0.1, 0.1))
    ry = 18.0 * (1.0 + rng.uniform((), -0.1, 0.1))
    head = _HEAD_INTENSITY[group.shade] + rng.uniform((), -0.05, 0.05)

    yy, xx = np.ogrid[0:64, 0:64]
    ellipse = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
    img[ellipse] = head

    for side in (-1.0, 1.0):
        ex, ey = cx + side * 0.45 * rx, cy - 0.35 * ry
        eye = (xx - ex) ** 2 + (yy - ey) ** 2 <= 1.8 ** 2
        img[eye] = 0.08

    mouth_y = int(round(cy + 0.45 * ry))
    mouth_x0, mouth_x1 = int(round(cx - 0.5 * rx)), int(round(cx + 0.5 * rx))
    img[max(mouth_y - 1, 0):mouth_y + 1, max(mouth_x0, 0):mouth_x1] = 0.12

    if group.attr2 == "B":
        hat_y0 = int(round(cy - ry - 3))
        hat_y1 = int(round(cy - ry + 2))
        hat_x0, hat_x1 = int(round(cx - 1.15 * rx)), int(round(cx + 1.15 * rx))
        img[max(hat_y0, 0):max(hat_y1, 0), max(hat_x0, 0):hat_x1] = 0.05

    img = np.clip(img + rng.uniform((64, 64), -0.03, 0.03), 0.0, 1.0)
    return Example(image=_expand(img, channels, rng), label=1, group=group)


def generate_nonface(rng: RngStream, channels: int = 1) -> Example:
    """One 64x64 negative: noise plus random rectangles and bars."""
    img = rng.uniform((64, 64), 0.0, 0.6)

    n_rect = 2 + rng.integers(4)
    for _ in range(n_rect):
        y0, x0 = rng.integers(56), rng.integers(56)
        h, w = 4 + rng.integers(28), 4 + rng.integers(28)
        img[y0:min(y0 + h, 64), x0:min(x0 + w, 64)] = rng.uniform((), 0.0, 1.0)

    for _ in range(1 + rng.integers(2)):
        pos = rng.integers(62)
        thickness = 1 + rng.integers(3)
        value = rng.uniform((), 0.0, 1.0)
        if rng.integers(2) == 0:
            img[pos:pos + thickness, :] = value
        else:
            img[:, pos:pos + thickness] = value

    img = np.clip(img + rng.uniform((64, 64), -0.03, 0.03), 0.0, 1.0)
    return Example(image=_expand(img, channels, rng), label=0, group=None)


def build_dataset(spec: DatasetSpec) -> Dataset:
    """Generate per spec counts, then shuffle deterministically."""
    spec.validate()
    examples: list[Example] = []
    index = 0
    for group in ALL_GROUPS:
        for _ in range(spec.face_counts[group.label]):
            examples.append(generate_face(group, RngStream(spec.seed ^ index), spec.channels))
            index += 1
    for _ in range(spec.nonfaces):
        examples.append(generate_nonface(RngStream(spec.seed ^ index), spec.channels))
        index += 1
    order = RngStream(spec.seed ^ _SHUFFLE_SALT).permutation(len(examples))
    return Dataset(examples=[examples[i] for i in order], seed=spec.seed)


# ---------------------------------------------------------------------------
# Directory export / import
# ---------------------------------------------------------------------------

def _to_pil(image: np.ndarray) -> Image.Image:
    arr = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    if arr.shape[0] == 1:
        return Image.fromarray(arr[0], mode="L")
    return Image.fromarray(arr.transpose(1, 2, 0), mode="RGB")


def export_dataset(dataset: Dataset, root) -> Path:
    """Write PNGs under faces/<group>/ and nonfaces/, plus manifest.csv."""
    root = Path(root)
    for group in ALL_GROUPS:
        (root / "faces" / group.label).mkdir(parents=True, exist_ok=True)
    (root / "nonfaces").mkdir(parents=True, exist_ok=True)

    rows = []
    for i, ex in enumerate(dataset.examples):
        if ex.label == 1:
            rel = Path("faces") / ex.group.label / f"img_{i:05d}.png"
        else:
            rel = Path("nonfaces") / f"img_{i:05d}.png"
        _to_pil(ex.image).save(root / rel)
        rows.append((str(rel), ex.label, ex.group.label if ex.group else ""))

    manifest = root / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        fh.write(f"# seed={dataset.seed}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["filename", "label", "group"])
        writer.writerows(rows)
    return manifest


def _decode(path: Path, channels: int) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im = im.convert("L" if channels == 1 else "RGB")
            if im.size != (64, 64):
                im = im.resize((64, 64), Image.BILINEAR)
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    return arr[None] if channels == 1 else arr.transpose(2, 0, 1)


def load_image_dir(root, channels: int = 1) -> Dataset:
    """Load faces/<group>/*.png and nonfaces/*.png, resized to 64x64.

    Files are taken in lexicographic order, so loading is deterministic.
    """
    root = Path(root)
    faces_dir = root / "faces"
    nonfaces_dir = root / "nonfaces"
    if not root.is_dir():
        raise DataError(f"dataset directory {root} does not exist")
    if not faces_dir.is_dir() or not nonfaces_dir.is_dir():
        raise DataError(f"{root} must contain faces/ and nonfaces/ subdirectories")

    known = {g.label for g in ALL_GROUPS}
    examples: list[Example] = []
    face_count = 0
    for group_dir in sorted(faces_dir.iterdir()):
        if not group_dir.is_dir():
            continue
        if group_dir.name not in known:
            raise DataError(
                f"unknown group directory {group_dir.name!r}; expected one of {sorted(known)}")
        group = GroupTag.from_label(group_dir.name)
        for path in sorted(group_dir.glob("*.png")):
            examples.append(Example(image=_decode(path, channels), label=1, group=group))
            face_count += 1
    if face_count == 0:
        raise DataError(f"no face images found under {faces_dir}")

    for path in sorted(nonfaces_dir.glob("*.png")):
        examples.append(Example(image=_decode(path, channels), label=0, group=None))

    return Dataset(examples=examples, seed=0)
