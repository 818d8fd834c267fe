"""Dataset construction for 2D density estimation.

Two sources: grey-scale images interpreted as densities over the unit square
(pixel intensity = unnormalized mass, with in-cell uniform jitter so samples
are absolutely continuous), and synthetic generators (checkerboard, two-moons,
rings, ground-truth Gaussian mixtures). Datasets carry a provenance record
sufficient to regenerate them bit-for-bit, and persist as CSV with a
train/val split column.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import RngHandle


class ImageFormatError(ValueError):
    """Unparseable or unsupported image file (bad magic, malformed header,
    truncated raster)."""


class ZeroMassError(ValueError):
    """Image with zero total intensity cannot define a density."""


class DatasetFormatError(ValueError):
    """Malformed dataset CSV."""


@dataclass(frozen=True)
class DensityDataset:
    """Point cloud with a train/validation index partition and provenance.

    ``train_idx`` and ``val_idx`` are disjoint and together cover all rows of
    ``points``. Freshly generated datasets put every index in train; use
    :func:`split` to carve out validation points.
    """

    points: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray
    provenance: dict = field(default_factory=dict)
    split_seed: int = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("points must be a nonempty (n, d) array")
        tr = np.asarray(self.train_idx, dtype=np.intp)
        va = np.asarray(self.val_idx, dtype=np.intp)
        merged = np.concatenate([tr, va])
        if merged.size != pts.shape[0] or not np.array_equal(np.sort(merged), np.arange(pts.shape[0])):
            raise ValueError("train/val indices must partition the point set")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "train_idx", tr)
        object.__setattr__(self, "val_idx", va)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def train_points(self) -> np.ndarray:
        return self.points[self.train_idx]

    @property
    def val_points(self) -> np.ndarray:
        return self.points[self.val_idx]

    def to_csv(self, path):
        """Write ``x0,...,x{d-1},split`` rows; floats keep full precision."""
        labels = np.empty(self.n, dtype=object)
        labels[self.train_idx] = "train"
        labels[self.val_idx] = "val"
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow([f"x{i}" for i in range(self.dim)] + ["split"])
            for row, lab in zip(self.points, labels):
                w.writerow([format(v, ".17g") for v in row] + [lab])


def from_csv(path) -> DensityDataset:
    """Read a dataset written by :meth:`DensityDataset.to_csv`."""
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file")
        if len(header) < 2 or header[-1] != "split" or header[:-1] != [f"x{i}" for i in range(len(header) - 1)]:
            raise DatasetFormatError(f"{path}: expected header x0,...,split, got {header!r}")
        d = len(header) - 1
        rows, train, val = [], [], []
        for i, row in enumerate(reader):
            if len(row) != d + 1:
                raise DatasetFormatError(f"{path}: row {i + 2} has {len(row)} fields, expected {d + 1}")
            try:
                rows.append([float(v) for v in row[:-1]])
            except ValueError:
                raise DatasetFormatError(f"{path}: row {i + 2} has a non-numeric coordinate")
            if row[-1] == "train":
                train.append(i)
            elif row[-1] == "val":
                val.append(i)
            else:
                raise DatasetFormatError(f"{path}: row {i + 2} split must be train or val, got {row[-1]!r}")
    if not rows:
        raise DatasetFormatError(f"{path}: no data rows")
    return DensityDataset(
        np.asarray(rows), np.asarray(train, dtype=np.intp), np.asarray(val, dtype=np.intp),
        provenance={"source": "csv", "path": str(path)},
    )


@dataclass(frozen=True)
class ImageDensity:
    """Grey-scale raster as an unnormalized density on the unit square.

    ``intensities`` is (height, width) with row 0 at the TOP of the image;
    the coordinate frame flips vertically so the picture reads upright in
    (x, y) ∈ [0,1]². The induced density is piecewise constant on pixel cells.
    """

    width: int
    height: int
    intensities: np.ndarray
    source: str = None

    def __post_init__(self):
        arr = np.asarray(self.intensities, dtype=np.float64)
        if arr.shape != (self.height, self.width):
            raise ValueError(f"intensities shape {arr.shape} != (height, width) = ({self.height}, {self.width})")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError("intensities must be finite and nonnegative")
        if arr.sum() <= 0:
            raise ZeroMassError("image has zero total intensity")
        object.__setattr__(self, "intensities", arr)

    @property
    def mass(self) -> float:
        return float(self.intensities.sum())

    def cell_probs(self) -> np.ndarray:
        """Flattened (row-major) pixel selection probabilities."""
        return (self.intensities / self.mass).ravel()

    def log_prob_batch(self, X) -> np.ndarray:
        """Log density of the piecewise-constant distribution; -inf outside
        the unit square or on zero-intensity cells."""
        X = np.asarray(X, dtype=np.float64)
        inside = np.all((X >= 0.0) & (X <= 1.0), axis=1)
        cols = np.minimum((X[:, 0] * self.width).astype(int), self.width - 1)
        rows = np.minimum(((1.0 - X[:, 1]) * self.height).astype(int), self.height - 1)
        out = np.full(X.shape[0], -np.inf)
        dens = self.intensities[rows[inside], cols[inside]] * (self.width * self.height) / self.mass
        with np.errstate(divide="ignore"):
            out[inside] = np.log(dens)
        return out


def _read_pgm_tokens(buf: bytes, count: int, pos: int):
    """Read `count` whitespace-separated ASCII tokens starting at pos,
    skipping # comments. Returns (tokens, new_pos)."""
    tokens = []
    n = len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos : pos + 1] == b"#":
            while pos < n and buf[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
            pos += 1
        if pos == start:
            raise ImageFormatError("truncated header")
        tokens.append(buf[start:pos])
    return tokens, pos


def load_image_density(path) -> ImageDensity:
    """Parse a portable graymap (P2 ASCII or P5 binary, maxval ≤ 65535)."""
    path = Path(path)
    buf = path.read_bytes()
    if len(buf) < 2:
        raise ImageFormatError(f"{path}: not a PGM file")
    magic = buf[:2]
    if magic not in (b"P2", b"P5"):
        raise ImageFormatError(f"{path}: unsupported magic number {magic!r} (want P2 or P5)")
    try:
        (w_tok, h_tok, max_tok), pos = _read_pgm_tokens(buf, 3, 2)
        width, height, maxval = int(w_tok), int(h_tok), int(max_tok)
    except (ValueError, ImageFormatError) as e:
        raise ImageFormatError(f"{path}: malformed header ({e})")
    if width < 1 or height < 1 or not (0 < maxval <= 65535):
        raise ImageFormatError(f"{path}: bad dimensions or maxval ({width}x{height}, maxval {maxval})")
    npix = width * height
    if magic == b"P2":
        try:
            toks, _ = _read_pgm_tokens(buf, npix, pos)
            vals = np.array([int(t) for t in toks], dtype=np.int64)
        except (ValueError, ImageFormatError):
            raise ImageFormatError(f"{path}: truncated or non-numeric raster")
    else:
        pos += 1  # single whitespace byte after maxval
        nbytes = npix * (2 if maxval > 255 else 1)
        raster = buf[pos : pos + nbytes]
        if len(raster) != nbytes:
            raise ImageFormatError(f"{path}: raster has {len(raster)} bytes, expected {nbytes}")
        dtype = ">u2" if maxval > 255 else np.uint8
        vals = np.frombuffer(raster, dtype=dtype).astype(np.int64)
    if np.any(vals > maxval):
        raise ImageFormatError(f"{path}: sample exceeds declared maxval {maxval}")
    return ImageDensity(width, height, vals.reshape(height, width).astype(np.float64), source=str(path))


def write_pgm(path, pixels, maxval=255, binary=True):
    """Write a (height, width) integer array as P5 (binary) or P2 (ASCII)."""
    arr = np.asarray(pixels)
    if arr.ndim != 2:
        raise ValueError("pixels must be 2-D")
    if np.any(arr < 0) or np.any(arr > maxval):
        raise ValueError("pixel values out of range")
    h, w = arr.shape
    header = f"{'P5' if binary else 'P2'}\n{w} {h}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        if binary:
            f.write(arr.astype(">u2" if maxval > 255 else np.uint8).tobytes())
        else:
            body = "\n".join(" ".join(str(int(v)) for v in row) for row in arr)
            f.write(body.encode("ascii") + b"\n")


def sample_from_image(img: ImageDensity, n: int, rng: RngHandle) -> DensityDataset:
    """Draw n points: pixel cell ∝ intensity, position uniform in the cell.

    Row 0 of the raster maps to the top band of the unit square, so the
    picture reads upright.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    cells = img.cell_probs()
    idx = np.atleast_1d(rng.categorical(cells, size=n))
    rows, cols = np.divmod(idx, img.width)
    u = rng.uniform((n, 2))
    x = (cols + u[:, 0]) / img.width
    y = (img.height - rows - u[:, 1]) / img.height
    prov = {
        "source": "image",
        "path": img.source,
        "n": n,
        "seed": rng.seed,
        "bounds": [[0.0, 1.0], [0.0, 1.0]],
    }
    pts = np.column_stack([x, y])
    return DensityDataset(pts, np.arange(n), np.empty(0, dtype=np.intp), provenance=prov)


SYNTHETIC_KINDS = ("checkerboard", "two-moons", "rings", "gmm-ground-truth")

# Default ground-truth mixture: three well-separated, anisotropic blobs.
_GMM_DEFAULTS = {
    "pis": [0.5, 0.3, 0.2],
    "means": [[0.0, 0.0], [3.0, 3.0], [-3.0, 2.0]],
    "sigmas": [[1.0, 0.5], [0.5, 1.0], [0.7, 0.7]],
}


def _checkerboard(n, params, rng):
    grid = int(params.get("grid", 4))
    if grid < 1:
        raise ValueError("checkerboard grid must be >= 1")
    cells = [(i, j) for i in range(grid) for j in range(grid) if (i + j) % 2 == 0]
    probs = np.full(len(cells), 1.0 / len(cells))
    which = np.atleast_1d(rng.categorical(probs, size=n))
    ij = np.asarray(cells, dtype=np.float64)[which]
    u = rng.uniform((n, 2))
    pts = (ij + u) / grid
    return pts, {"grid": grid}, [[0.0, 1.0], [0.0, 1.0]]


def _two_moons(n, params, rng):
    noise = float(params.get("noise", 0.05))
    t = rng.uniform(n) * np.pi
    arm = np.atleast_1d(rng.categorical(np.array([0.5, 0.5]), size=n))
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    pts = np.where(arm[:, None] == 0, upper, lower)
    if noise > 0:
        pts = pts + noise * rng.normal((n, 2))
    m = 8.0 * noise
    return pts, {"noise": noise}, [[-1.0 - m, 2.0 + m], [-1.0 - m, 1.0 + m]]


def _rings(n, params, rng):
    radii = np.asarray(params.get("radii", [0.5, 1.0]), dtype=np.float64)
    noise = float(params.get("noise", 0.025))
    probs = np.full(radii.size, 1.0 / radii.size)
    which = np.atleast_1d(rng.categorical(probs, size=n))
    theta = rng.uniform(n) * 2.0 * np.pi
    r = radii[which]
    if noise > 0:
        r = r + noise * rng.normal(n)
    pts = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    lim = float(radii.max()) + 8.0 * noise
    return pts, {"radii": radii.tolist(), "noise": noise}, [[-lim, lim], [-lim, lim]]


def _gmm_ground_truth(n, params, rng):
    pis = np.asarray(params.get("pis", _GMM_DEFAULTS["pis"]), dtype=np.float64)
    means = np.asarray(params.get("means", _GMM_DEFAULTS["means"]), dtype=np.float64)
    sigmas = np.asarray(params.get("sigmas", _GMM_DEFAULTS["sigmas"]), dtype=np.float64)
    if means.ndim != 2 or sigmas.shape != means.shape or pis.shape != (means.shape[0],):
        raise ValueError("gmm-ground-truth needs pis (K,), means (K,d), sigmas (K,d)")
    if np.any(sigmas <= 0):
        raise ValueError("gmm-ground-truth sigmas must be positive")
    labels = np.atleast_1d(rng.categorical(pis / pis.sum(), size=n))
    z = rng.normal((n, means.shape[1]))
    pts = means[labels] + sigmas[labels] * z
    lo = (means - 8.0 * sigmas).min(axis=0)
    hi = (means + 8.0 * sigmas).max(axis=0)
    spec = {"pis": pis.tolist(), "means": means.tolist(), "sigmas": sigmas.tolist()}
    return pts, spec, np.column_stack([lo, hi]).tolist()


_GENERATORS = {
    "checkerboard": _checkerboard,
    "two-moons": _two_moons,
    "rings": _rings,
    "gmm-ground-truth": _gmm_ground_truth,
}


def make_synthetic(kind: str, n: int, params: dict = None, rng: RngHandle = None) -> DensityDataset:
    """Generate one of the cataloged 2D datasets; deterministic given the
    rng seed, with everything needed for regeneration in provenance."""
    if kind not in _GENERATORS:
        raise ValueError(f"unknown synthetic kind {kind!r}; choose from {SYNTHETIC_KINDS}")
    if n < 1:
        raise ValueError("need n >= 1")
    rng = rng if rng is not None else RngHandle(0)
    pts, recorded, bounds = _GENERATORS[kind](n, params or {}, rng)
    prov = {"source": "synthetic", "kind": kind, "n": n, "seed": rng.seed, "params": recorded, "bounds": bounds}
    return DensityDataset(np.asarray(pts), np.arange(n), np.empty(0, dtype=np.intp), provenance=prov)


def split(data: DensityDataset, validation_fraction: float, seed: int) -> DensityDataset:
    """Deterministic shuffled train/val partition; val size = round(n·f)."""
    if not 0.0 < validation_fraction < 1.0:
        raise ValueError("validation fraction must lie in (0, 1)")
    n = data.n
    perm = RngHandle(seed).permutation(n)
    n_val = int(round(n * validation_fraction))
    n_val = min(max(n_val, 1), n - 1)
    prov = dict(data.provenance)
    prov["split"] = {"validation_fraction": validation_fraction, "seed": seed}
    return DensityDataset(
        data.points, np.sort(perm[n_val:]), np.sort(perm[:n_val]), provenance=prov, split_seed=seed
    )


def regenerate(provenance: dict) -> DensityDataset:
    """Rebuild a dataset from its provenance record (same source, same seeds
    → identical points and partition)."""
    src = provenance.get("source")
    if src == "synthetic":
        data = make_synthetic(
            provenance["kind"], provenance["n"], provenance.get("params"), RngHandle(provenance["seed"])
        )
    elif src == "image":
        if not provenance.get("path"):
            raise ValueError("image provenance lacks a source path")
        img = load_image_density(provenance["path"])
        data = sample_from_image(img, provenance["n"], RngHandle(provenance["seed"]))
    elif src == "csv":
        return from_csv(provenance["path"])
    else:
        raise ValueError(f"cannot regenerate from source {src!r}")
    if "split" in provenance:
        s = provenance["split"]
        data = split(data, s["validation_fraction"], s["seed"])
    return data


def load_dataset(path, n_image_samples=100_000, seed=0) -> DensityDataset:
    """Dispatch on file suffix: .csv → stored dataset, .pgm → sample points
    from the image density."""
    p = Path(path)
    if p.suffix.lower() == ".pgm":
        return sample_from_image(load_image_density(p), n_image_samples, RngHandle(seed))
    return from_csv(p)
