"""Synthetic confounded image/metadata benchmark data.

Two groups of 64x64 images. Each image is four 32x32 quadrant tiles,
every tile the same centered Gaussian bump (std 5 px, unit peak), scaled
per sample: the two main-diagonal tiles by the class factor sigma_cls,
the bottom-left tile by the confounding factor sigma_c, the top-right
tile by zero. Both factors are drawn uniformly from the same per-group
interval but independently of each other, so within a group the
confounder carries no label information -- yet its distribution differs
between groups, which makes it exploitable by a classifier.

Because the per-group class-factor intervals overlap, a classifier that
uses only the legitimate signal has an analytically known accuracy
ceiling (`bayes_reference`). A model that beats that ceiling must be
reading the confounder.

Each sample also carries a 16-column metadata row:
[true label, sigma_c, fake binary label, 12 fake U(0,1) floats, 1.0].
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .serialization import Reader, Writer

DATASET_MAGIC = b"RGDS"
DATASET_VERSION = 1

EXPERIMENT_RANGES = {
    "I": ((1.0, 5.0), (4.0, 8.0)),
    "II": ((1.0, 7.0), (4.0, 10.0)),
}

METADATA_WIDTH = 16
QUADRANT_BUMP_STD = 5.0


@dataclass(frozen=True)
class SynthParams:
    """Generation settings.

    ``n_per_group`` is the number of TRAINING samples per group; a
    further 10% per group is generated for the test split (defaults:
    10,000 train / 1,000 test overall). Ranges default to the named
    experiment's intervals but can be overridden.
    """

    experiment: str = "I"
    group1_range: tuple[float, float] | None = None
    group2_range: tuple[float, float] | None = None
    image_side: int = 64
    n_per_group: int = 5000
    noise_std: float = 0.1
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENT_RANGES:
            raise ValueError(f"experiment must be one of {sorted(EXPERIMENT_RANGES)}")
        if self.image_side % 2 != 0:
            raise ValueError("image_side must be even")
        if self.n_per_group < 10:
            raise ValueError("n_per_group must be at least 10")
        r1, r2 = EXPERIMENT_RANGES[self.experiment]
        if self.group1_range is None:
            object.__setattr__(self, "group1_range", r1)
        if self.group2_range is None:
            object.__setattr__(self, "group2_range", r2)
        for r in (self.group1_range, self.group2_range):
            if not r[1] > r[0]:
                raise ValueError(f"empty range {r}")

    @property
    def test_per_group(self) -> int:
        return self.n_per_group // 10


@dataclass
class SynthSplit:
    """One dataset split. Images are (N, side, side); metadata (N, 16)."""

    images: np.ndarray
    metadata: np.ndarray
    labels: np.ndarray
    sigma_cls: np.ndarray
    sigma_c: np.ndarray

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def flat_images(self) -> np.ndarray:
        return self.images.reshape(len(self), -1)


def quadrant_bump(side: int, std: float = QUADRANT_BUMP_STD) -> np.ndarray:
    """Centered 2-D Gaussian bump with unit peak on a side/2 tile.

    The tile center falls between pixels on even sides, so the kernel is
    renormalized to make the brightest pixels exactly 1.
    """
    half = side // 2
    c = (half - 1) / 2.0
    idx = np.arange(half)
    d2 = (idx[:, None] - c) ** 2 + (idx[None, :] - c) ** 2
    bump = np.exp(-d2 / (2.0 * std**2))
    return bump / bump.max()


def bayes_reference(params: SynthParams) -> float:
    """Accuracy ceiling of the class factor alone, for equal group priors.

    The optimal error is half the integral of min(p1, p2) over the two
    uniform densities; for disjoint intervals the ceiling is 1.
    """
    (a1, b1), (a2, b2) = params.group1_range, params.group2_range
    lo, hi = max(a1, a2), min(b1, b2)
    if hi <= lo:
        return 1.0
    min_density = min(1.0 / (b1 - a1), 1.0 / (b2 - a2))
    return 1.0 - 0.5 * (hi - lo) * min_density


def generate(params: SynthParams) -> tuple[SynthSplit, SynthSplit]:
    """Build the (train, test) splits; identical params give byte-identical data.

    Draw order per group: sigma_cls, sigma_c, fake labels, fake floats;
    then the noise field over all images, then the stratified split
    permutations, then one shuffle of the assembled training split.
    """
    rng = np.random.default_rng(params.rng_seed)
    per_group = params.n_per_group + params.test_per_group
    side = params.image_side
    bump = quadrant_bump(side)
    half = side // 2

    images = np.zeros((2 * per_group, side, side))
    metadata = np.zeros((2 * per_group, METADATA_WIDTH))
    labels = np.zeros(2 * per_group, dtype=np.int64)
    s_cls = np.zeros(2 * per_group)
    s_c = np.zeros(2 * per_group)

    for group, rng_range in enumerate((params.group1_range, params.group2_range)):
        lo_i = group * per_group
        hi_i = lo_i + per_group
        sigma_cls = rng.uniform(*rng_range, size=per_group)
        sigma_c = rng.uniform(*rng_range, size=per_group)
        fake_label = rng.integers(0, 2, size=per_group).astype(np.float64)
        fakes = rng.uniform(0.0, 1.0, size=(per_group, 12))

        images[lo_i:hi_i, :half, :half] = sigma_cls[:, None, None] * bump
        images[lo_i:hi_i, half:, half:] = sigma_cls[:, None, None] * bump
        images[lo_i:hi_i, half:, :half] = sigma_c[:, None, None] * bump
        # top-right quadrant stays zero

        metadata[lo_i:hi_i, 0] = float(group)
        metadata[lo_i:hi_i, 1] = sigma_c
        metadata[lo_i:hi_i, 2] = fake_label
        metadata[lo_i:hi_i, 3:15] = fakes
        metadata[lo_i:hi_i, 15] = 1.0

        labels[lo_i:hi_i] = group
        s_cls[lo_i:hi_i] = sigma_cls
        s_c[lo_i:hi_i] = sigma_c

    if params.noise_std > 0:
        images += rng.normal(0.0, params.noise_std, size=images.shape)

    train_idx, test_idx = [], []
    for group in range(2):
        order = group * per_group + rng.permutation(per_group)
        test_idx.append(order[: params.test_per_group])
        train_idx.append(order[params.test_per_group :])
    train = np.concatenate(train_idx)
    test = np.concatenate(test_idx)
    train = train[rng.permutation(train.shape[0])]

    def take(idx: np.ndarray) -> SynthSplit:
        return SynthSplit(
            images=images[idx],
            metadata=metadata[idx],
            labels=labels[idx],
            sigma_cls=s_cls[idx],
            sigma_c=s_c[idx],
        )

    return take(train), take(test)


# -- on-disk format -------------------------------------------------------


def save_split(path: str | Path, split: SynthSplit) -> None:
    side = split.images.shape[1]
    w = Writer(DATASET_MAGIC, DATASET_VERSION)
    w.u32(len(split)).u32(side)
    w.f64_array(split.images.ravel())
    w.f64_array(split.metadata.ravel())
    w.f64_array(split.labels.astype(np.float64))
    w.f64_array(split.sigma_cls)
    w.f64_array(split.sigma_c)
    Path(path).write_bytes(w.getvalue())


def load_split(path: str | Path) -> SynthSplit:
    r = Reader(Path(path).read_bytes(), DATASET_MAGIC, DATASET_VERSION)
    n, side = r.u32(), r.u32()
    images = r.f64_array().reshape(n, side, side)
    metadata = r.f64_array().reshape(n, METADATA_WIDTH)
    labels = r.f64_array().astype(np.int64)
    sigma_cls = r.f64_array()
    sigma_c = r.f64_array()
    r.done()
    return SynthSplit(images, metadata, labels, sigma_cls, sigma_c)


def export_dataset(out_dir: str | Path, params: SynthParams) -> dict:
    """Write train/test splits plus a JSON manifest; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, test = generate(params)
    save_split(out / "train.bin", train)
    save_split(out / "test.bin", test)
    manifest = {
        "format_version": DATASET_VERSION,
        "experiment": params.experiment,
        "group1_range": list(params.group1_range),
        "group2_range": list(params.group2_range),
        "image_side": params.image_side,
        "n_per_group": params.n_per_group,
        "noise_std": params.noise_std,
        "rng_seed": params.rng_seed,
        "train_count": len(train),
        "test_count": len(test),
        "reference_accuracy": bayes_reference(params),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
