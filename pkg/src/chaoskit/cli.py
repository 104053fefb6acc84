"""Command-line entry point wiring all modules.

Subcommands: generate | lle | estimate | train | evaluate | sweep | probe.
Option precedence is defaults < config file (JSON, keyed by option name
with dashes or underscores) < explicit flags; unknown config keys are
rejected.  Every artifact embeds its fully resolved configuration and the
master seed.  Exit codes: 0 success, 1 runtime failure, 2 bad
configuration.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import classical, data, dynsys, evaluation, lyapunov, models, neural
from .errors import ChaoskitError, ConfigError

ENV_OUT = "CHAOSKIT_OUT"


def _parse_pair(text, name):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"{name} expects 'lo,hi', got {text!r}", key=name) from exc
    return [lo, hi]


def _parse_floats(text, name):
    try:
        return [float(v) for v in text.split(",") if v != ""]
    except ValueError as exc:
        raise ConfigError(f"{name} expects comma-separated floats, got {text!r}",
                          key=name) from exc


def _parse_grid(text, name):
    """A float or 'lo:hi:count' inclusive grid."""
    if text is None:
        return None
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"{name} expects 'lo:hi:count', got {text!r}", key=name)
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ConfigError(f"{name} grid count must be >= 1", key=name)
        return [float(v) for v in np.linspace(lo, hi, count)]
    try:
        return [float(text)]
    except ValueError as exc:
        raise ConfigError(f"{name} expects a float or 'lo:hi:count'", key=name) from exc


def _load_config(path, known_keys):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}", key="config") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object", key="config")
    config = {}
    for key, value in raw.items():
        norm = key.replace("-", "_")
        if norm not in known_keys:
            raise ConfigError(f"unknown config key {key!r}", key=key)
        config[norm] = value
    return config


def _resolve(args, defaults):
    """defaults < config file < flags; returns the resolved option dict."""
    known = set(defaults)
    config = _load_config(getattr(args, "config", None), known)
    resolved = dict(defaults)
    resolved.update(config)
    for key in defaults:
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
    return resolved


def _out_dir(resolved) -> Path:
    out = resolved.get("out") or os.environ.get(ENV_OUT) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _echo(tag, resolved):
    print(f"[{tag}] resolved config: "
          + json.dumps(resolved, sort_keys=True, default=str))


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

_GENERATE_DEFAULTS = {
    "kind": None, "out": None, "seed": 0, "scale": None, "n_items": None,
    "n_per_class": None, "length": None, "depth": None, "sigma": None,
    "item_kind": None, "alpha": None, "k_range": None, "tau0_range": None,
    "t_osc": None, "lle_bounds": None, "bins": None, "ergodicity_tol": None,
    "noise_levels": None, "n_transient": None, "label_n_iter": None,
    "label_restarts": None, "z": None, "r_range": None, "system": None,
}


def cmd_generate(args) -> int:
    resolved = _resolve(args, _GENERATE_DEFAULTS)
    kind = resolved["kind"]
    if kind is None:
        raise ConfigError("generate needs --kind", key="kind")
    overrides = {k: v for k, v in resolved.items()
                 if v is not None and k not in ("kind", "out", "seed")}
    recipe = data.resolve_recipe(kind, overrides)  # validates keys
    seed = int(resolved["seed"])
    out = _out_dir(resolved)
    _echo("generate", {**recipe, "kind": kind, "seed": seed})
    if kind == "test_suite":
        suites = data.build_noise_suite(overrides, seed=seed)
        for level, ds in sorted(suites.items()):
            path = out / f"{kind}_L{level:g}.ds"
            data.save_dataset(ds, path)
            print(f"wrote {path} ({len(ds.items)} items, noise {level:g})")
    else:
        ds = data.build_dataset(kind, overrides, seed=seed)
        path = out / f"{kind}.ds"
        data.save_dataset(ds, path)
        print(f"wrote {path} ({len(ds.items)} items)")
    return 0


# ---------------------------------------------------------------------------
# lle
# ---------------------------------------------------------------------------

_LLE_DEFAULTS = {
    "family": None, "r": None, "z": None, "alpha": -0.5, "k": None,
    "tau0": None, "t_osc": 24.0, "a": None, "sigma": 0.0, "n_iter": 10000,
    "n_transient": 500, "restarts": 1, "seed": 0, "out": None,
}


def _lle_specs(resolved):
    family = resolved["family"]
    sigma = float(resolved["sigma"])
    if family == "zmap":
        rs = _parse_grid(resolved["r"], "r") or [1.0]
        z = float(resolved["z"]) if resolved["z"] is not None else 2.0
        return [(dynsys.zmap(r, z, sigma), {"r": r, "z": z}) for r in rs]
    if family == "glm":
        rs = _parse_grid(resolved["r"], "r") or [3.0]
        z = int(float(resolved["z"])) if resolved["z"] is not None else 2
        return [(dynsys.glm(r, z, sigma), {"r": r, "z": z}) for r in rs]
    if family == "kcc":
        ks = _parse_grid(resolved["k"], "k") or [3.0]
        taus = _parse_grid(resolved["tau0"], "tau0") or [12.0]
        alpha = float(resolved["alpha"])
        t_osc = float(resolved["t_osc"])
        return [(dynsys.kcc(alpha, k, tau, t_osc, sigma),
                 {"alpha": alpha, "k": k, "tau0": tau})
                for k in ks for tau in taus]
    if family == "quadmap":
        if resolved["a"] is None:
            raise ConfigError("quadmap needs --a with 12 coefficients", key="a")
        coeffs = _parse_floats(resolved["a"], "a")
        return [(dynsys.quadmap(coeffs, sigma), {"a": coeffs})]
    raise ConfigError(f"unknown family {resolved['family']!r}", key="family")


def cmd_lle(args) -> int:
    resolved = _resolve(args, _LLE_DEFAULTS)
    if resolved["family"] is None:
        raise ConfigError("lle needs --family", key="family")
    specs = _lle_specs(resolved)
    seed = int(resolved["seed"])
    n_iter = int(resolved["n_iter"])
    n_transient = int(resolved["n_transient"])
    restarts = int(resolved["restarts"])
    _echo("lle", resolved)
    rows = []
    print(f"{'params':<44} {'lambda':>10} {'conv':>5} {'std':>8}")
    for idx, (spec, tag) in enumerate(specs):
        if restarts > 1:
            res = lyapunov.lle_tangent_restarts(
                spec, n_restarts=restarts, n_transient=n_transient,
                n_iter=n_iter, seed=dynsys.child_seed(seed, idx))
        else:
            res = lyapunov.lle_tangent(spec, n_transient=n_transient,
                                       n_iter=n_iter,
                                       seed=dynsys.child_seed(seed, idx))
        std = f"{res.std_across_restarts:8.4f}" if res.std_across_restarts \
            is not None else "       -"
        label = json.dumps(tag, sort_keys=True)
        print(f"{label:<44} {res.lam:>10.5f} {str(res.converged):>5} {std}")
        rows.append({**tag, "lambda": res.lam, "converged": res.converged,
                     "std": res.std_across_restarts, "sigma": resolved["sigma"]})
    if resolved["out"]:
        doc = {"format": "chaoskit-lle-table", "config": resolved, "rows": rows}
        with open(resolved["out"], "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True, default=str)
            fh.write("\n")
        print(f"wrote {resolved['out']}")
    return 0


# ---------------------------------------------------------------------------
# shared estimator options
# ---------------------------------------------------------------------------

_ESTIMATOR_DEFAULTS = {
    "method": None, "model": None, "embedding_m": 3, "embedding_lag": 1,
    "mean_period": None, "fit_range": None, "max_follow": 20,
    "n_c": 100, "c_range": None, "subsample_stride": None,
    "lam_threshold": 0.0, "k_threshold": 0.5, "seed": 0,
}


def load_model(path):
    params, meta = neural.load_weights(path)
    kind = meta.get("kind")
    if kind == "seq":
        return models.SeqRegressor.from_param_dict(params), meta
    if kind == "tree":
        return models.TreeRegressor.from_param_dict(params), meta
    raise ConfigError(f"{path}: checkpoint has unknown model kind {kind!r}",
                      key="model")


def _build_estimator(resolved):
    method = resolved["method"]
    if method is None:
        raise ConfigError("need --method", key="method")
    model = None
    if method == "nn":
        if not resolved["model"]:
            raise ConfigError("method 'nn' needs --model", key="model")
        model, _ = load_model(resolved["model"])
    fit_range = resolved["fit_range"]
    if isinstance(fit_range, str):
        fit_range = tuple(int(v) for v in _parse_pair(fit_range, "fit_range"))
    elif isinstance(fit_range, list):
        fit_range = tuple(int(v) for v in fit_range)
    c_range = resolved["c_range"]
    if isinstance(c_range, str):
        c_range = tuple(_parse_pair(c_range, "c_range"))
    elif isinstance(c_range, list):
        c_range = tuple(c_range)
    ros = classical.RosensteinParams(
        embedding=classical.EmbeddingParams(int(resolved["embedding_m"]),
                                            int(resolved["embedding_lag"])),
        mean_period=(int(resolved["mean_period"])
                     if resolved["mean_period"] is not None else None),
        fit_range=fit_range, max_follow=int(resolved["max_follow"]))
    zo = classical.ZeroOneParams(
        n_c=int(resolved["n_c"]),
        c_range=c_range or (math.pi / 5, 4 * math.pi / 5),
        subsample_stride=(int(resolved["subsample_stride"])
                          if resolved["subsample_stride"] is not None else None))
    return evaluation.make_estimator(
        method, model=model, rosenstein_params=ros, zero_one_params=zo,
        seed=int(resolved["seed"]), lam_threshold=float(resolved["lam_threshold"]),
        k_threshold=float(resolved["k_threshold"]))


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------

_ESTIMATE_DEFAULTS = {**_ESTIMATOR_DEFAULTS, "input": None, "out": None}


def cmd_estimate(args) -> int:
    resolved = _resolve(args, _ESTIMATE_DEFAULTS)
    if not resolved["input"]:
        raise ConfigError("estimate needs --input", key="input")
    est = _build_estimator(resolved)
    ds = data.load_dataset(resolved["input"])
    _echo("estimate", resolved)
    rows = []
    print(f"{'id':>6} {'score':>12} {'label':>8}")
    for i, item in enumerate(ds.items):
        try:
            score, chaotic = est.predict(item, seed=i)
        except ChaoskitError as exc:
            score, chaotic = math.nan, False
            rows.append({"id": i, "score": None, "label": "error",
                         "error": str(exc)})
            print(f"{i:>6} {'error':>12} {'-':>8}  ({exc})")
            continue
        label = "chaotic" if chaotic else "stable"
        rows.append({"id": i, "score": score, "label": label})
        print(f"{i:>6} {score:>12.5f} {label:>8}")
    if resolved["out"]:
        doc = {"format": "chaoskit-predictions", "config": resolved,
               "seed": int(resolved["seed"]), "rows": rows}
        with open(resolved["out"], "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True, default=str)
            fh.write("\n")
        print(f"wrote {resolved['out']}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

_TRAIN_DEFAULTS = {
    "model": None, "data": None, "out": None, "epochs": None, "lr": None,
    "batch_size": 32, "l2": 3e-4, "dropout": 0.3, "seed": 0,
    "val_fraction": 0.1, "no_shuffle": False,
}


def cmd_train(args) -> int:
    resolved = _resolve(args, _TRAIN_DEFAULTS)
    kind = resolved["model"]
    if kind not in ("seq", "tree"):
        raise ConfigError("train needs --model seq|tree", key="model")
    if not resolved["data"]:
        raise ConfigError("train needs --data", key="data")
    # appendix defaults differ between the two models
    lr = float(resolved["lr"]) if resolved["lr"] is not None \
        else (5e-4 if kind == "seq" else 1e-3)
    epochs = int(resolved["epochs"]) if resolved["epochs"] is not None \
        else (200 if kind == "seq" else 100)
    ds = data.load_dataset(resolved["data"])
    cfg = models.TrainConfig(
        batch_size=int(resolved["batch_size"]), lr=lr, epochs=epochs,
        l2=float(resolved["l2"]), recurrent_dropout_p=float(resolved["dropout"]),
        seed=int(resolved["seed"]), shuffle=not resolved["no_shuffle"],
        val_fraction=float(resolved["val_fraction"]))
    _echo("train", {**resolved, "lr": lr, "epochs": epochs})
    model, history = models.train_regressor(kind, ds.items, ds.labels, cfg)
    out = resolved["out"] or f"{kind}_model.ckpt"
    meta = {"kind": kind, "seed": cfg.seed, "epochs": cfg.epochs, "lr": cfg.lr,
            "batch_size": cfg.batch_size, "l2": cfg.l2,
            "dropout": cfg.recurrent_dropout_p, "best_epoch": history["best_epoch"],
            "data_kind": ds.kind, "data_seed": ds.seed}
    neural.save_weights(out, model.param_dict(), meta)
    with open(f"{out}.history.json", "w", encoding="utf-8") as fh:
        json.dump({"config": meta, "history": history}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    final = history["train_mse"][-1] if history["train_mse"] else math.nan
    print(f"wrote {out} (best epoch {history['best_epoch']}, "
          f"final train MSE {final:.5f})")
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

_EVAL_DEFAULTS = {**_ESTIMATOR_DEFAULTS, "suite": None, "out": None,
                  "threads": None, "lengths": None, "measurement_levels": None}


def cmd_evaluate(args) -> int:
    resolved = _resolve(args, _EVAL_DEFAULTS)
    if not resolved["suite"]:
        raise ConfigError("evaluate needs --suite file(s)", key="suite")
    est = _build_estimator(resolved)
    threads = int(resolved["threads"]) if resolved["threads"] else \
        (os.cpu_count() or 1)
    lengths = None
    if resolved["lengths"]:
        lengths = [int(v) for v in _parse_floats(str(resolved["lengths"]), "lengths")]
    paths = resolved["suite"] if isinstance(resolved["suite"], list) \
        else [resolved["suite"]]
    _echo("evaluate", {**resolved, "threads": threads})
    if resolved["measurement_levels"]:
        if len(paths) != 1:
            raise ConfigError("measurement mode takes one clean suite",
                              key="measurement_levels")
        levels = _parse_floats(str(resolved["measurement_levels"]),
                               "measurement_levels")
        ds = data.load_dataset(paths[0])
        report = evaluation.measurement_curve(est, ds, levels,
                                              seed=int(resolved["seed"]),
                                              lengths=lengths, threads=threads)
    else:
        suites = {}
        for path in paths:
            ds = data.load_dataset(path)
            suites[float(ds.recipe.get("noise_level", ds.recipe.get("sigma", 0.0)))] = ds
        report = evaluation.robustness_curve(est, suites, lengths=lengths,
                                             threads=threads)
    report.meta["config"] = {k: v for k, v in resolved.items()}
    report.meta["seed"] = int(resolved["seed"])
    print(report.to_text_table())
    if resolved["out"]:
        report.save(resolved["out"])
        print(f"wrote {resolved['out']}")
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

_SWEEP_DEFAULTS = {**_ESTIMATOR_DEFAULTS, "out": None, "k_range": None,
                   "tau0_range": None, "nk": 20, "ntau": 20, "sigma": 0.0,
                   "item_kind": "seq", "length": 250, "depth": 8,
                   "label_n_iter": 10000, "label_restarts": 5, "threads": None}


def cmd_sweep(args) -> int:
    resolved = _resolve(args, _SWEEP_DEFAULTS)
    est = _build_estimator(resolved)
    threads = int(resolved["threads"]) if resolved["threads"] else \
        (os.cpu_count() or 1)
    cfg = {"nk": int(resolved["nk"]), "ntau": int(resolved["ntau"]),
           "sigma": float(resolved["sigma"]), "item_kind": resolved["item_kind"],
           "length": int(resolved["length"]), "depth": int(resolved["depth"]),
           "label_n_iter": int(resolved["label_n_iter"]),
           "label_restarts": int(resolved["label_restarts"])}
    if resolved["k_range"]:
        cfg["k_range"] = _parse_pair(str(resolved["k_range"]), "k_range") \
            if isinstance(resolved["k_range"], str) else resolved["k_range"]
    if resolved["tau0_range"]:
        cfg["tau0_range"] = _parse_pair(str(resolved["tau0_range"]), "tau0_range") \
            if isinstance(resolved["tau0_range"], str) else resolved["tau0_range"]
    _echo("sweep", {**resolved, "threads": threads})
    grid = evaluation.sweep_map(est, cfg, seed=int(resolved["seed"]),
                                threads=threads)
    prefix = resolved["out"] or f"sweep_{est.name}"
    evaluation.save_grid(grid, prefix)
    print(f"wrote {prefix}.grid and {prefix}.tsv (sign MCC {grid.sign_mcc():.3f})")
    return 0


# ---------------------------------------------------------------------------
# probe
# ---------------------------------------------------------------------------

_PROBE_DEFAULTS = {
    "donor": None, "out": None, "seed": 0, "scale": 1, "n_per_class": 5000,
    "length": 200, "depth": 8, "item_kind": None, "noise_levels": "0.0",
    "epochs": 200, "lr": 1e-3, "batch_size": 32, "n_transient": 500,
}


def cmd_probe(args) -> int:
    resolved = _resolve(args, _PROBE_DEFAULTS)
    if not resolved["donor"]:
        raise ConfigError("probe needs --donor checkpoint", key="donor")
    donor, meta = load_model(resolved["donor"])
    item_kind = resolved["item_kind"] or \
        ("tree" if isinstance(donor, models.TreeRegressor) else "seq")
    levels = _parse_floats(str(resolved["noise_levels"]), "noise_levels")
    seed = int(resolved["seed"])
    _echo("probe", {**resolved, "item_kind": item_kind})
    base = {"n_per_class": int(resolved["n_per_class"]),
            "length": int(resolved["length"]), "depth": int(resolved["depth"]),
            "item_kind": item_kind, "scale": int(resolved["scale"]),
            "n_transient": int(resolved["n_transient"])}
    train_sets, test_sets = {}, {}
    for li, level in enumerate(levels):
        level = float(level)
        tr = data.build_dataset("probe_set", {**base, "system": "zmap",
                                              "sigma": level},
                                seed=dynsys.child_seed(seed, 2 * li))
        te = data.build_dataset("probe_set", {**base, "system": "glm",
                                              "sigma": level},
                                seed=dynsys.child_seed(seed, 2 * li + 1))
        train_sets[level] = (models.probe_extract_batch(donor, tr.items), tr.labels)
        test_sets[level] = (models.probe_extract_batch(donor, te.items), te.labels)
    cfg = models.TrainConfig(batch_size=int(resolved["batch_size"]),
                             lr=float(resolved["lr"]),
                             epochs=int(resolved["epochs"]), l2=0.0,
                             recurrent_dropout_p=0.0, seed=seed)
    acc = models.probe_train_eval(train_sets, test_sets, cfg)
    print(f"{'noise':>10} {'accuracy':>9}")
    for level in sorted(acc):
        print(f"{level:>10.2e} {acc[level]:>9.4f}")
    if resolved["out"]:
        doc = {"format": "chaoskit-probe-table", "config": resolved,
               "seed": seed, "accuracy": {str(k): v for k, v in acc.items()}}
        with open(resolved["out"], "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True, default=str)
            fh.write("\n")
        print(f"wrote {resolved['out']}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chaoskit",
        description="Generate noisy-map trajectories and lineage trees, "
                    "compute ground-truth Lyapunov exponents, and detect "
                    "chaos with classical and learned estimators.")
    sub = parser.add_subparsers(dest="command", required=True)

    def opt(p, *names, **kw):
        kw.setdefault("default", None)
        p.add_argument(*names, **kw)

    p = sub.add_parser("generate", help="build and save a dataset")
    opt(p, "--kind", choices=sorted(data.DEFAULT_RECIPES))
    opt(p, "--config", help="JSON config file")
    opt(p, "--out", help=f"output directory (default ${ENV_OUT} or .)")
    opt(p, "--seed", type=int)
    opt(p, "--scale", type=int, help="desk-scale divisor for item counts")
    opt(p, "--n-items", dest="n_items", type=int)
    opt(p, "--n-per-class", dest="n_per_class", type=int)
    opt(p, "--length", type=int)
    opt(p, "--depth", type=int)
    opt(p, "--sigma", type=float, help="dynamical noise std")
    opt(p, "--item-kind", dest="item_kind", choices=["seq", "tree"])
    opt(p, "--alpha", type=float)
    opt(p, "--k-range", dest="k_range", type=lambda s: _parse_pair(s, "k_range"))
    opt(p, "--tau0-range", dest="tau0_range",
        type=lambda s: _parse_pair(s, "tau0_range"))
    opt(p, "--t-osc", dest="t_osc", type=float)
    opt(p, "--lle-bounds", dest="lle_bounds",
        type=lambda s: _parse_pair(s, "lle_bounds"))
    opt(p, "--bins", type=int, help="label-flattening bins")
    opt(p, "--ergodicity-tol", dest="ergodicity_tol", type=float)
    opt(p, "--noise-levels", dest="noise_levels",
        type=lambda s: _parse_floats(s, "noise_levels"),
        help="noise ladder for test suites")
    opt(p, "--n-transient", dest="n_transient", type=int)
    opt(p, "--label-n-iter", dest="label_n_iter", type=int)
    opt(p, "--label-restarts", dest="label_restarts", type=int)
    opt(p, "--z", type=float)
    opt(p, "--r-range", dest="r_range", type=lambda s: _parse_pair(s, "r_range"))
    opt(p, "--system", choices=["zmap", "glm"])
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("lle", help="ground-truth exponents for a spec grid")
    opt(p, "--family", choices=["kcc", "zmap", "glm", "quadmap"])
    opt(p, "--config")
    opt(p, "--r", help="value or lo:hi:count")
    opt(p, "--z", type=float)
    opt(p, "--alpha", type=float)
    opt(p, "--k", help="value or lo:hi:count")
    opt(p, "--tau0", help="value or lo:hi:count")
    opt(p, "--t-osc", dest="t_osc", type=float)
    opt(p, "--a", help="12 comma-separated quadmap coefficients")
    opt(p, "--sigma", type=float)
    opt(p, "--n-iter", dest="n_iter", type=int)
    opt(p, "--n-transient", dest="n_transient", type=int)
    opt(p, "--restarts", type=int)
    opt(p, "--seed", type=int)
    opt(p, "--out", help="optional JSON table path")
    p.set_defaults(func=cmd_lle)

    def estimator_opts(p):
        opt(p, "--method", choices=["rosenstein", "zeroone", "nn", "tangent"])
        opt(p, "--model", help="checkpoint for method nn")
        opt(p, "--embedding-m", dest="embedding_m", type=int)
        opt(p, "--embedding-lag", dest="embedding_lag", type=int)
        opt(p, "--mean-period", dest="mean_period", type=int)
        opt(p, "--fit-range", dest="fit_range",
            help="k_min,k_max (default: auto linear region)")
        opt(p, "--max-follow", dest="max_follow", type=int)
        opt(p, "--n-c", dest="n_c", type=int)
        opt(p, "--c-range", dest="c_range", help="frequency interval lo,hi")
        opt(p, "--subsample-stride", dest="subsample_stride", type=int)
        opt(p, "--lam-threshold", dest="lam_threshold", type=float,
            help="exponent threshold for the chaotic label")
        opt(p, "--k-threshold", dest="k_threshold", type=float,
            help="zero-one K threshold for the chaotic label")
        opt(p, "--seed", type=int)
        opt(p, "--config")

    p = sub.add_parser("estimate", help="per-item predictions for a dataset")
    estimator_opts(p)
    opt(p, "--input", help="dataset file")
    opt(p, "--out", help="optional JSON table path")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("train", help="train a regressor on a dataset")
    opt(p, "--model", choices=["seq", "tree"])
    opt(p, "--config")
    opt(p, "--data", help="training dataset file")
    opt(p, "--out", help="checkpoint path")
    opt(p, "--epochs", type=int)
    opt(p, "--lr", type=float)
    opt(p, "--batch-size", dest="batch_size", type=int)
    opt(p, "--l2", type=float)
    opt(p, "--dropout", type=float, help="recurrent dropout probability")
    opt(p, "--seed", type=int)
    opt(p, "--val-fraction", dest="val_fraction", type=float)
    p.add_argument("--no-shuffle", dest="no_shuffle", action="store_true",
                   default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a method on test suites")
    estimator_opts(p)
    p.add_argument("--suite", nargs="+", default=None, help="dataset file(s)")
    opt(p, "--out", help="report JSON path")
    opt(p, "--threads", type=int, help="worker cap (default: cores)")
    opt(p, "--lengths", help="comma-separated truncation lengths")
    opt(p, "--measurement-levels", dest="measurement_levels",
        help="relative measurement-noise levels applied to one clean suite")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="2-D parameter map of truth vs prediction")
    estimator_opts(p)
    opt(p, "--out", help="output path prefix")
    opt(p, "--k-range", dest="k_range")
    opt(p, "--tau0-range", dest="tau0_range")
    opt(p, "--nk", type=int)
    opt(p, "--ntau", type=int)
    opt(p, "--sigma", type=float)
    opt(p, "--item-kind", dest="item_kind", choices=["seq", "tree"])
    opt(p, "--length", type=int)
    opt(p, "--depth", type=int)
    opt(p, "--label-n-iter", dest="label_n_iter", type=int)
    opt(p, "--label-restarts", dest="label_restarts", type=int)
    opt(p, "--threads", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("probe", help="universality-class probe on donor features")
    opt(p, "--donor", help="trained regressor checkpoint")
    opt(p, "--config")
    opt(p, "--out", help="optional JSON table path")
    opt(p, "--seed", type=int)
    opt(p, "--scale", type=int)
    opt(p, "--n-per-class", dest="n_per_class", type=int)
    opt(p, "--length", type=int)
    opt(p, "--depth", type=int)
    opt(p, "--item-kind", dest="item_kind", choices=["seq", "tree"])
    opt(p, "--noise-levels", dest="noise_levels")
    opt(p, "--epochs", type=int)
    opt(p, "--lr", type=float)
    opt(p, "--batch-size", dest="batch_size", type=int)
    opt(p, "--n-transient", dest="n_transient", type=int)
    p.set_defaults(func=cmd_probe)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        key = f" (key: {exc.key})" if exc.key else ""
        print(f"config error{key}: {exc}", file=sys.stderr)
        return 2
    except ChaoskitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
