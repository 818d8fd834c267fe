"""Model persistence and density-grid export.

Models round-trip through a versioned JSON file with every float written at
17 significant digits, so saving and reloading reproduces log densities
bit-for-bit and re-saving a well-formed file is a byte-level fixed point.
Parse, version, and shape problems raise distinct error types.

``export_density_grid`` evaluates a fitted density on a square lattice of
cell centers and writes it both as a CSV matrix and as an 8-bit PGM rendering
(linear grayscale), returning the trapezoid-rule mass of the grid as a sanity
check on normalization.
"""

import json
from pathlib import Path

import numpy as np

from .classifier import MlpClassifier
from .components import DiagGaussianComponent
from .data import write_pgm
from .gmm import Gmm
from .model import CwmModel

FORMAT_VERSION = 1

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


class ModelIOError(ValueError):
    """Base class for model file problems."""


class ModelParseError(ModelIOError):
    """File is not well-formed JSON or lacks required fields."""


class ModelVersionError(ModelIOError):
    """File declares a format version this code does not understand."""


class ModelShapeError(ModelIOError):
    """Parameter arrays are inconsistent with the declared model shape."""


def _fmt_float(v: float) -> str:
    if not np.isfinite(v):
        raise ValueError("cannot serialize non-finite parameter value")
    return format(float(v), ".17g")


def _write_json(obj, out, indent=0):
    """Minimal JSON writer with deterministic key order (insertion order)
    and fixed float formatting."""
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(f"{pad}  {json.dumps(k)}: ")
            _write_json(v, out, indent + 1)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        items = []
        for v in obj:
            sub = []
            _write_json(v, sub, indent + 1)
            items.append("".join(sub))
        body = ", ".join(items)
        if len(body) <= 100 and "\n" not in body:
            out.append("[" + body + "]")
        else:
            out.append("[\n" + ",\n".join(f"{pad}  {it}" for it in items) + "\n" + pad + "]")
    elif isinstance(obj, bool) or obj is None:
        out.append(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, np.ndarray):
        _write_json(obj.tolist(), out, indent)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def _dumps(obj) -> str:
    out = []
    _write_json(obj, out)
    return "".join(out) + "\n"


def save_model(m, path, provenance: dict = None) -> None:
    """Write a CwmModel or Gmm as versioned JSON (see module docstring)."""
    if isinstance(m, CwmModel):
        mus, log_vars = m.mus, m.log_vars
        doc = {
            "format_version": FORMAT_VERSION,
            "kind": "cwm",
            "dim": m.dim,
            "n_components": m.n_components,
            "classifier": {
                "layer_sizes": list(m.classifier.layer_sizes),
                "weights": [w for w in m.classifier.weights],
                "biases": [b for b in m.classifier.biases],
            },
            "mus": mus,
            "log_vars": log_vars,
        }
    elif isinstance(m, Gmm):
        from .components import stack_components

        mus, log_vars = stack_components(m.components)
        doc = {
            "format_version": FORMAT_VERSION,
            "kind": "gmm",
            "dim": m.dim,
            "n_components": m.n_components,
            "pis": m.pis,
            "mus": mus,
            "log_vars": log_vars,
        }
    else:
        raise TypeError(f"cannot save a {type(m).__name__}")
    doc["provenance"] = provenance or {}
    Path(path).write_text(_dumps(doc))


def _require(doc, key, kind):
    if key not in doc:
        raise ModelParseError(f"missing field {key!r}")
    v = doc[key]
    if kind is int and (isinstance(v, bool) or not isinstance(v, int)):
        raise ModelParseError(f"field {key!r} must be an integer")
    if kind in (list, dict, str) and not isinstance(v, kind):
        raise ModelParseError(f"field {key!r} must be a {kind.__name__}")
    return v


def _matrix(doc, key, shape):
    rows = _require(doc, key, list)
    try:
        arr = np.asarray(rows, dtype=np.float64)
    except (TypeError, ValueError):
        raise ModelParseError(f"field {key!r} must be a numeric array")
    if arr.shape != shape:
        raise ModelShapeError(f"field {key!r} has shape {arr.shape}, expected {shape}")
    return arr


def load_model(path):
    """Read a model file; returns a CwmModel or a Gmm.

    Raises ModelParseError / ModelVersionError / ModelShapeError for the
    corresponding failure classes.
    """
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelParseError(f"{path}: not valid JSON ({e})")
    if not isinstance(doc, dict):
        raise ModelParseError(f"{path}: top level must be an object")
    version = _require(doc, "format_version", int)
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"{path}: format_version {version} not supported (want {FORMAT_VERSION})")
    kind = _require(doc, "kind", str)
    dim = _require(doc, "dim", int)
    K = _require(doc, "n_components", int)
    if dim < 1 or K < 1:
        raise ModelShapeError(f"{path}: dim and n_components must be positive")
    mus = _matrix(doc, "mus", (K, dim))
    log_vars = _matrix(doc, "log_vars", (K, dim))
    try:
        comps = [DiagGaussianComponent(mu, lv) for mu, lv in zip(mus, log_vars)]
        if kind == "gmm":
            pis = _matrix(doc, "pis", (K,))
            return Gmm(pis, comps)
        if kind == "cwm":
            cdoc = _require(doc, "classifier", dict)
            sizes = _require(cdoc, "layer_sizes", list)
            if not all(isinstance(s, int) and s > 0 for s in sizes) or len(sizes) < 2:
                raise ModelParseError(f"{path}: classifier layer_sizes must be positive integers")
            if sizes[0] != dim or sizes[-1] != K:
                raise ModelShapeError(f"{path}: classifier layer_sizes {sizes} do not match dim={dim}, K={K}")
            weights = _classifier_arrays(cdoc, sizes, path, which="weights")
            biases = _classifier_arrays(cdoc, sizes, path, which="biases")
            return CwmModel(comps, MlpClassifier(weights, biases))
    except ModelIOError:
        raise
    except ValueError as e:
        raise ModelShapeError(f"{path}: invalid parameters ({e})")
    raise ModelParseError(f"{path}: unknown model kind {kind!r}")


def _classifier_arrays(cdoc, sizes, path, which="weights"):
    arrs = _require(cdoc, which, list)
    if len(arrs) != len(sizes) - 1:
        raise ModelShapeError(f"{path}: classifier has {len(arrs)} {which} arrays, expected {len(sizes) - 1}")
    out = []
    for l, a in enumerate(arrs):
        want = (sizes[l], sizes[l + 1]) if which == "weights" else (sizes[l + 1],)
        try:
            arr = np.asarray(a, dtype=np.float64)
        except (TypeError, ValueError):
            raise ModelParseError(f"{path}: classifier {which}[{l}] must be numeric")
        if arr.shape != want:
            raise ModelShapeError(f"{path}: classifier {which}[{l}] has shape {arr.shape}, expected {want}")
        out.append(arr)
    return out


def _as_bounds(bounds):
    b = np.asarray(bounds, dtype=np.float64)
    if b.shape == (2,):
        b = np.stack([b, b])
    if b.shape != (2, 2) or np.any(b[:, 0] >= b[:, 1]) or not np.all(np.isfinite(b)):
        raise ValueError("bounds must be (lo, hi) or ((lo0, hi0), (lo1, hi1)) with lo < hi")
    return b


def export_density_grid(m, resolution: int, bounds, path, csv_path=None) -> float:
    """Evaluate exp(log_prob) of a 2D density on a resolution² lattice of
    cell centers over ``bounds`` and write it as PGM + CSV.

    ``m`` is anything with log_prob_batch over 2D rows (CwmModel, Gmm,
    ImageDensity). Row 0 of both outputs is the TOP of the frame (highest x1),
    matching image orientation. Returns the trapezoid-rule mass of the grid.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2 per axis")
    d = getattr(m, "dim", 2)
    if d != 2:
        raise ValueError(f"density grid export requires a 2D model, got dim={d}")
    b = _as_bounds(bounds)
    xs = b[0, 0] + (np.arange(resolution) + 0.5) * (b[0, 1] - b[0, 0]) / resolution
    ys = b[1, 0] + (np.arange(resolution) + 0.5) * (b[1, 1] - b[1, 0]) / resolution
    gx, gy = np.meshgrid(xs, ys)  # indexed [iy, ix], y ascending
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    dens = np.exp(m.log_prob_batch(pts)).reshape(resolution, resolution)
    mass = float(_trapezoid(_trapezoid(dens, xs, axis=1), ys))

    top_down = dens[::-1, :]
    peak = top_down.max()
    scale = 255.0 / peak if peak > 0 else 0.0
    write_pgm(path, np.rint(top_down * scale).astype(np.int64), maxval=255)
    if csv_path is None:
        csv_path = Path(path).with_suffix(".csv")
    lines = [",".join(format(v, ".17g") for v in row) for row in top_down]
    Path(csv_path).write_text("\n".join(lines) + "\n")
    return mass
