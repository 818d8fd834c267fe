"""Command-line interface for fitting, sampling, evaluating, and rendering
classifier-weighted mixtures.

Subcommands: fit-gmm, fit-cwm, sample, logprob, eval, render, grad-bench,
make-data. All randomness flows from --seed, and every data output of a run
with identical flags is byte-identical; errors exit nonzero with a one-line
diagnostic on stderr.
"""

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import data as datamod
from . import estimators
from .gmm import Gmm, em_fit, gmm_parameter_count
from .model import CwmModel
from .modelio import export_density_grid, load_model, save_model
from .rng import RngHandle
from .training import TrainConfig, count_parameters, fit_cwm


def _add_data_flags(p, with_split=True):
    p.add_argument("--data", required=True, help="dataset CSV, or PGM image to sample from")
    p.add_argument("--image-samples", type=int, default=100_000,
                   help="points to draw when --data is a PGM image")
    if with_split:
        p.add_argument("--val-fraction", type=float, default=0.2,
                       help="validation fraction when --data is a PGM image")


def _load_data(args, seed, with_split=True):
    path = Path(args.data)
    if not path.exists():
        raise FileNotFoundError(f"data file not found: {path}")
    if path.suffix.lower() == ".pgm":
        img = datamod.load_image_density(path)
        ds = datamod.sample_from_image(img, args.image_samples, RngHandle(seed))
        if with_split:
            ds = datamod.split(ds, args.val_fraction, seed)
        return ds
    return datamod.from_csv(path)


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _parse_hidden(text):
    if text.strip() == "":
        return ()
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise ValueError(f"--hidden expects comma-separated integers, got {text!r}")


def _parse_bounds(text):
    try:
        vals = [float(t) for t in text.split(",")]
    except ValueError:
        vals = []
    if len(vals) == 2:
        return (vals[0], vals[1])
    if len(vals) == 4:
        return ((vals[0], vals[1]), (vals[2], vals[3]))
    raise ValueError(f"--bounds expects lo,hi or lo0,hi0,lo1,hi1, got {text!r}")


def _cmd_fit_gmm(args):
    ds = _load_data(args, args.seed)
    g0 = Gmm.init_from_data(ds.train_points, args.k, RngHandle(args.seed))
    g, trace = em_fit(g0, ds, max_iters=args.em_iters, tol=args.em_tol)
    train_ll = float(np.mean(g.log_prob_batch(ds.train_points)))
    print(f"em_iters {len(trace)}")
    print(f"train_ll {train_ll:.17g}")
    if ds.val_idx.size:
        print(f"val_ll {float(np.mean(g.log_prob_batch(ds.val_points))):.17g}")
    prov = {
        "command": "fit-gmm",
        "seed": args.seed,
        "em": {"max_iters": args.em_iters, "tol": args.em_tol},
        "data": ds.provenance,
    }
    prov["config_hash"] = _config_hash(prov)
    save_model(g, args.out, provenance=prov)
    return 0


def _cmd_fit_cwm(args):
    ds = _load_data(args, args.seed)
    config = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        epochs=args.epochs,
        seed=args.seed,
        pretrain=not args.no_pretrain,
        hidden_sizes=_parse_hidden(args.hidden),
    )

    def progress(epoch, train_ll, val_ll):
        print(f"epoch {epoch} train_ll {train_ll:.17g} val_ll {val_ll:.17g}", flush=True)

    model, report = fit_cwm(ds, args.k, config, progress=progress)
    print(f"n_parameters {report.n_parameters}")
    prov = {
        "command": "fit-cwm",
        "config": config.to_dict(),
        "data": ds.provenance,
    }
    prov["config_hash"] = _config_hash(prov)
    save_model(model, args.out, provenance=prov)
    return 0


def _cmd_sample(args):
    m = load_model(args.model)
    Z, R, X = m.sample_arrays(RngHandle(args.seed), args.n)
    d = X.shape[1]
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"z{i}" for i in range(d)] + ["r"] + [f"x{i}" for i in range(d)])
        for z, r, x in zip(Z, R, X):
            w.writerow([format(v, ".17g") for v in z] + [int(r)] + [format(v, ".17g") for v in x])
    print(f"wrote {args.n} samples to {args.out}")
    return 0


def _cmd_logprob(args):
    m = load_model(args.model)
    ds = _load_data(args, args.seed, with_split=False)
    lps = m.log_prob_batch(ds.points)
    print(f"mean_log_prob {float(np.mean(lps)):.17g}")
    for v in lps:
        print(format(v, ".17g"))
    return 0


def _cmd_eval(args):
    m = load_model(args.model)
    ds = _load_data(args, args.seed)
    pts = ds.val_points if ds.val_idx.size else ds.points
    ll = float(np.mean(m.log_prob_batch(pts)))
    if isinstance(m, CwmModel):
        kind, n_params = "cwm", count_parameters(m)
    else:
        kind, n_params = "gmm", gmm_parameter_count(m)
    print("kind,K,n_parameters,mean_ll,n_points")
    print(f"{kind},{m.n_components},{n_params},{ll:.17g},{pts.shape[0]}")
    return 0


def _cmd_render(args):
    m = load_model(args.model)
    mass = export_density_grid(m, args.res, _parse_bounds(args.bounds), args.out)
    print(f"mass {mass:.17g}")
    return 0


def _cmd_grad_bench(args):
    m = load_model(args.model)
    if not isinstance(m, CwmModel):
        raise ValueError("grad-bench requires a cwm model (classifier gradients)")
    h = estimators.make_test_function(args.h)
    reports = estimators.variance_bench(m, h, args.m, args.reps, RngHandle(args.seed))
    print(estimators.bench_table(reports))
    return 0


def _cmd_make_data(args):
    params = json.loads(args.params) if args.params else {}
    ds = datamod.make_synthetic(args.kind, args.n, params, RngHandle(args.seed))
    if args.val_fraction > 0:
        ds = datamod.split(ds, args.val_fraction, args.seed)
    ds.to_csv(args.out)
    print(f"wrote {ds.n} points to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cwm", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-gmm", help="fit a constant-weight mixture with EM")
    _add_data_flags(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--em-iters", type=int, default=500)
    p.add_argument("--em-tol", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_fit_gmm)

    p = sub.add_parser("fit-cwm", help="EM warm start + gradient training of a classifier-weighted mixture")
    _add_data_flags(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--hidden", default="64,64")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=TrainConfig().epochs)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-pretrain", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_fit_cwm)

    p = sub.add_parser("sample", help="draw ancestral samples with latents")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_sample)

    p = sub.add_parser("logprob", help="mean and per-point log-likelihood")
    p.add_argument("--model", required=True)
    _add_data_flags(p, with_split=False)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_logprob)

    p = sub.add_parser("eval", help="held-out mean log-likelihood and parameter count")
    p.add_argument("--model", required=True)
    _add_data_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("render", help="export a density grid as PGM + CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--res", type=int, default=400)
    p.add_argument("--bounds", default="0,1")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_render)

    p = sub.add_parser("grad-bench", help="estimator variance benchmark")
    p.add_argument("--model", required=True)
    p.add_argument("--h", default="squared-norm", choices=estimators.CATALOG)
    p.add_argument("--m", type=int, default=1000)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_grad_bench)

    p = sub.add_parser("make-data", help="generate a synthetic 2D dataset")
    p.add_argument("--kind", required=True, choices=datamod.SYNTHETIC_KINDS)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params", default=None, help="generator parameters as a JSON object")
    p.add_argument("--val-fraction", type=float, default=0.2,
                   help="validation share recorded in the split column (0 disables)")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_make_data)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except BrokenPipeError:
        return 1
    except (ValueError, OSError, RuntimeError, KeyError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
